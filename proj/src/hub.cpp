#include "crowdlens/hub.hpp"

#include <algorithm>

namespace crowdlens {

std::string_view to_string(CloseReason reason) {
  switch (reason) {
    case CloseReason::None: return "none";
    case CloseReason::Overflow: return "overflow";
    case CloseReason::Revoked: return "revoked";
    case CloseReason::Shutdown: return "shutdown";
    case CloseReason::Unsubscribed: return "unsubscribed";
  }
  return "none";
}

Subscription::Subscription(std::string metric_id, std::size_t capacity)
    : metric_id_(std::move(metric_id)), capacity_(std::max<std::size_t>(capacity, 1)) {}

HubEvent Subscription::wait_next(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || reason_ != CloseReason::None; });
  if (!queue_.empty()) {
    HubEvent ev{HubEvent::Kind::Frame, std::move(queue_.front()), CloseReason::None};
    queue_.pop_front();
    return ev;
  }
  if (reason_ != CloseReason::None) return {HubEvent::Kind::Closed, std::nullopt, reason_};
  return {};
}

void Subscription::close(CloseReason reason) {
  {
    std::lock_guard lock(mutex_);
    if (reason_ != CloseReason::None) return;
    reason_ = reason;
    // An overflowed subscriber must not see a gap followed by more frames.
    if (reason == CloseReason::Overflow) queue_.clear();
  }
  cv_.notify_all();
}

bool Subscription::closed() const {
  std::lock_guard lock(mutex_);
  return reason_ != CloseReason::None;
}

CloseReason Subscription::reason() const {
  std::lock_guard lock(mutex_);
  return reason_;
}

bool Subscription::offer(const Frame& frame) {
  {
    std::lock_guard lock(mutex_);
    if (reason_ != CloseReason::None) return false;
    if (queue_.size() < capacity_) {
      queue_.push_back(frame);
      cv_.notify_all();
      return true;
    }
  }
  close(CloseReason::Overflow);
  return false;
}

FrameHub::FrameHub(std::size_t subscriber_capacity) : capacity_(subscriber_capacity) {}

std::shared_ptr<Subscription> FrameHub::subscribe(std::string_view metric_id) {
  auto sub = std::make_shared<Subscription>(std::string(metric_id), capacity_);
  std::lock_guard lock(mutex_);
  auto it = channels_.find(metric_id);
  if (it == channels_.end()) it = channels_.emplace(std::string(metric_id), std::vector<std::shared_ptr<Subscription>>{}).first;
  it->second.push_back(sub);
  return sub;
}

void FrameHub::unsubscribe(const std::shared_ptr<Subscription>& sub) {
  if (!sub) return;
  sub->close(CloseReason::Unsubscribed);
  std::lock_guard lock(mutex_);
  auto it = channels_.find(sub->metric_id());
  if (it == channels_.end()) return;
  std::erase(it->second, sub);
}

void FrameHub::prune(std::vector<std::shared_ptr<Subscription>>& subs) {
  std::erase_if(subs, [](const auto& s) { return s->closed(); });
}

std::size_t FrameHub::publish(const Frame& frame) {
  std::lock_guard lock(mutex_);
  auto last = last_published_.find(frame.metric_id);
  if (last != last_published_.end() && frame.t < last->second) return 0;
  if (last == last_published_.end())
    last_published_.emplace(frame.metric_id, frame.t);
  else
    last->second = frame.t;

  auto it = channels_.find(frame.metric_id);
  if (it == channels_.end()) return 0;
  std::size_t delivered = 0;
  for (auto& sub : it->second)
    if (sub->offer(frame)) ++delivered;
  prune(it->second);
  return delivered;
}

std::size_t FrameHub::subscriber_count(std::string_view metric_id) const {
  std::lock_guard lock(mutex_);
  auto it = channels_.find(metric_id);
  if (it == channels_.end()) return 0;
  return static_cast<std::size_t>(
      std::count_if(it->second.begin(), it->second.end(), [](const auto& s) { return !s->closed(); }));
}

void FrameHub::close_all(CloseReason reason) {
  std::lock_guard lock(mutex_);
  for (auto& [metric, subs] : channels_) {
    for (auto& s : subs) s->close(reason);
    subs.clear();
  }
}

}  // namespace crowdlens
