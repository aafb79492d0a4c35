#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crowdlens/model.hpp"

namespace crowdlens {

enum class CloseReason { None, Overflow, Revoked, Shutdown, Unsubscribed };

std::string_view to_string(CloseReason reason);

struct HubEvent {
  enum class Kind { Frame, Idle, Closed };
  Kind kind = Kind::Idle;
  std::optional<Frame> frame;
  CloseReason reason = CloseReason::None;
};

/// One subscriber's bounded queue. Once closed, queued frames are still
/// drained before the Closed event is reported.
class Subscription {
 public:
  Subscription(std::string metric_id, std::size_t capacity);

  const std::string& metric_id() const { return metric_id_; }

  /// Next frame, Idle after `timeout` with nothing queued, or Closed.
  HubEvent wait_next(std::chrono::milliseconds timeout);

  void close(CloseReason reason);
  bool closed() const;
  CloseReason reason() const;

 private:
  friend class FrameHub;
  /// False (and the subscription closed with Overflow) when the queue is full.
  bool offer(const Frame& frame);

  std::string metric_id_;
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Frame> queue_;
  CloseReason reason_ = CloseReason::None;
};

/// Fan-out of frames to subscribers, one channel per metric. Publication is
/// serialized per hub, so every subscriber of a metric sees the same
/// sequence. Frames older than the last one published for their metric are
/// dropped to keep each sequence time-ordered.
class FrameHub {
 public:
  explicit FrameHub(std::size_t subscriber_capacity = 256);

  std::shared_ptr<Subscription> subscribe(std::string_view metric_id);
  void unsubscribe(const std::shared_ptr<Subscription>& sub);

  /// Returns the number of subscribers the frame was delivered to.
  std::size_t publish(const Frame& frame);

  std::size_t subscriber_count(std::string_view metric_id) const;
  void close_all(CloseReason reason);

 private:
  void prune(std::vector<std::shared_ptr<Subscription>>& subs);

  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::map<std::string, std::vector<std::shared_ptr<Subscription>>, std::less<>> channels_;
  std::map<std::string, Timestamp, std::less<>> last_published_;
};

}  // namespace crowdlens
