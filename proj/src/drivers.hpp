#pragma once

#include <chrono>
#include <condition_variable>
#include <mutex>
#include <stop_token>

#include "crowdlens/connectors.hpp"

namespace crowdlens::detail {

DriverInfo make_http_json_driver();

/// Waits until `deadline`; false when stop was requested first.
inline bool sleep_until(std::stop_token stop, std::chrono::steady_clock::time_point deadline) {
  std::mutex m;
  std::condition_variable_any cv;
  std::unique_lock lock(m);
  cv.wait_until(lock, stop, deadline, [] { return false; });
  return !stop.stop_requested();
}

}  // namespace crowdlens::detail
