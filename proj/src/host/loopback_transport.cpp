#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "fab/errors.hpp"
#include "fab/host.hpp"

namespace fab::host {

LoopbackTransport::LoopbackTransport(printer::EmulatorConfig config, AckDelay delay, double pacing)
    : emu_(std::move(config)), delay_(delay), pacing_(pacing), rng_(delay.seed) {
  if (delay_.kind == AckDelay::Kind::kRandomized && !(delay_.min >= 0 && delay_.max >= delay_.min)) {
    throw ArgumentError("ack delay range must satisfy 0 <= min <= max");
  }
  if (delay_.kind == AckDelay::Kind::kFixed && !(delay_.fixed >= 0)) {
    throw ArgumentError("ack delay must be >= 0");
  }
}

void LoopbackTransport::open() {
  if (lost_) throw TransportError("virtual printer: device not present");
  if (open_) return;
  open_ = true;
  emu_.boot();
  collect();
}

void LoopbackTransport::close() {
  open_ = false;
  deliveries_.clear();
}

void LoopbackTransport::collect() {
  for (auto& o : emu_.take_output()) {
    if (silent_) continue;
    double d = 0.0;
    if (delay_.kind == AckDelay::Kind::kFixed) {
      d = delay_.fixed;
    } else if (delay_.kind == AckDelay::Kind::kRandomized) {
      d = std::uniform_real_distribution<double>(delay_.min, delay_.max)(rng_);
    }
    const double t = std::max(o.time + d, last_delivery_);
    last_delivery_ = t;
    deliveries_.push_back({t, std::move(o.text)});
  }
}

void LoopbackTransport::advance(double t) {
  if (t <= now_) return;
  if (pacing_ > 0) {
    std::this_thread::sleep_for(std::chrono::duration<double>((t - now_) / pacing_));
  }
  now_ = t;
  emu_.advance_to(now_);
}

void LoopbackTransport::write_line(std::string_view line) {
  if (lost_) throw TransportError("virtual printer: device lost");
  if (!open_) throw TransportError("virtual printer: port closed");
  emu_.feed_line(line);
  collect();
}

std::optional<std::string> LoopbackTransport::read_line(double deadline) {
  if (lost_) throw TransportError("virtual printer: device lost");
  if (!open_) throw TransportError("virtual printer: port closed");
  if (!std::isfinite(deadline)) throw ArgumentError("read_line: deadline must be finite");
  for (;;) {
    collect();
    if (!deliveries_.empty() && deliveries_.front().time <= now_) {
      std::string text = std::move(deliveries_.front().text);
      deliveries_.pop_front();
      return text;
    }
    if (now_ >= deadline) return std::nullopt;
    double next = deadline;
    if (!deliveries_.empty()) next = std::min(next, deliveries_.front().time);
    if (auto w = emu_.next_wakeup()) next = std::min(next, *w);
    advance(std::max(next, now_));
  }
}

}  // namespace fab::host
