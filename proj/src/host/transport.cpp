#include "fab/host.hpp"

namespace fab::host {

std::string_view to_string(Direction d) { return d == Direction::kTx ? "tx" : "rx"; }

std::string_view to_string(LinkState s) {
  switch (s) {
    case LinkState::kDisconnected: return "disconnected";
    case LinkState::kIdle: return "idle";
    case LinkState::kStreaming: return "streaming";
    case LinkState::kPaused: return "paused";
    case LinkState::kError: return "error";
  }
  return "error";
}

std::string_view to_string(TicketStatus s) {
  switch (s) {
    case TicketStatus::kPending: return "pending";
    case TicketStatus::kAcked: return "acked";
    case TicketStatus::kFailed: return "failed";
    case TicketStatus::kCancelled: return "cancelled";
  }
  return "pending";
}

TicketStatus Ticket::status() const {
  if (!state_) return TicketStatus::kCancelled;
  std::lock_guard lock(state_->mu);
  return state_->status;
}

std::optional<std::string> Ticket::error() const {
  if (!state_) return std::nullopt;
  std::lock_guard lock(state_->mu);
  return state_->error;
}

std::optional<Position> Ticket::position() const {
  if (!state_) return std::nullopt;
  std::lock_guard lock(state_->mu);
  return state_->position;
}

void Ticket::resolve(TicketStatus s, std::optional<std::string> error,
                     std::optional<Position> position) const {
  if (!state_) return;
  std::lock_guard lock(state_->mu);
  if (state_->status != TicketStatus::kPending) return;
  state_->status = s;
  state_->error = std::move(error);
  state_->position = position;
}

}  // namespace fab::host
