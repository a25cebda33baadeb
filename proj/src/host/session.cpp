#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fab/errors.hpp"
#include "fab/host.hpp"

namespace fab::host {

namespace {

bool has_command(const std::string& line) {
  return !gcode::strip_line(line).empty();
}

void check_line(const std::string& line) {
  if (line.find_first_of("\r\n") != std::string::npos) {
    throw ArgumentError("line contains a line terminator");
  }
  if (!has_command(line)) throw ArgumentError("line has no command: '" + line + "'");
}

}  // namespace

bool is_allowed_transition(LinkState from, LinkState to) {
  using S = LinkState;
  if (from == to) return true;
  if (to == S::kDisconnected) return true;
  switch (from) {
    case S::kDisconnected: return to == S::kIdle;
    case S::kIdle: return to == S::kStreaming || to == S::kError;
    case S::kStreaming: return to == S::kIdle || to == S::kPaused || to == S::kError;
    case S::kPaused: return to == S::kStreaming || to == S::kIdle || to == S::kError;
    case S::kError: return to == S::kIdle;
  }
  return false;
}

Session::Session(Transport& transport, MachineProfile profile, SessionOptions options)
    : transport_(transport), profile_(std::move(profile)), options_(options) {
  validate(profile_);
  if (!(options_.command_timeout > 0) || !(options_.handshake_timeout > 0) ||
      !(options_.poll_interval > 0) || !(options_.banner_quiet >= 0)) {
    throw ArgumentError("session: timeouts and intervals must be > 0");
  }
}

void Session::fire(Notes& notes) {
  for (auto& n : notes) n();
  notes.clear();
}

void Session::record_locked(Direction d, std::string payload, Notes& notes) {
  log_.push_back({transport_.now(), d, std::move(payload)});
  if (!wire_observers_.empty()) {
    notes.push_back([obs = wire_observers_, rec = log_.back()] {
      for (const auto& f : obs) f(rec);
    });
  }
}

void Session::state_changed_locked(Notes& notes) {
  if (!state_observers_.empty()) {
    notes.push_back([obs = state_observers_, snap = state_] {
      for (const auto& f : obs) f(snap);
    });
  }
}

void Session::set_state_locked(LinkState s, Notes& notes) {
  if (state_.link == s) return;
  if (!is_allowed_transition(state_.link, s)) {
    throw std::logic_error("link state " + std::string(to_string(state_.link)) + " -> " +
                           std::string(to_string(s)));
  }
  state_.link = s;
  state_changed_locked(notes);
}

void Session::send_locked(const std::string& wire, Notes& notes) {
  transport_.write_line(wire);
  record_locked(Direction::kTx, wire, notes);
}

void Session::require_connected(const char* what) const {
  if (state_.link == LinkState::kDisconnected) {
    throw LinkError(std::string(what) + ": not connected");
  }
}

void Session::connect() {
  Notes notes;
  {
    std::lock_guard lock(mu_);
    if (state_.link != LinkState::kDisconnected) throw LinkError("already connected");
  }
  auto fail = [&](const std::string& msg) {
    {
      std::lock_guard lock(mu_);
      transport_.close();
      state_.last_error = msg;
      state_changed_locked(notes);
    }
    fire(notes);
  };
  try {
    transport_.open();
  } catch (const TransportError& e) {
    fail(std::string("connect failed: ") + e.what());
    throw;
  }

  try {
    const double hard = transport_.now() + options_.handshake_timeout;
    auto quiet = [&] { return std::min(transport_.now() + options_.banner_quiet, hard); };
    while (auto line = transport_.read_line(quiet())) {
      {
        std::lock_guard lock(mu_);
        record_locked(Direction::kRx, *line, notes);
      }
      fire(notes);
      if (transport_.now() >= hard) break;
    }
    {
      std::lock_guard lock(mu_);
      send_locked("M110 N0", notes);
    }
    fire(notes);
    bool acked = false;
    while (!acked) {
      auto line = transport_.read_line(hard);
      if (!line) break;
      {
        std::lock_guard lock(mu_);
        record_locked(Direction::kRx, *line, notes);
      }
      fire(notes);
      acked = gcode::is_acknowledgment(gcode::parse_response(*line));
    }
    if (!acked) {
      fail("connect failed: no response within handshake timeout");
      throw LinkError("connect failed: no response within handshake timeout");
    }
  } catch (const TransportError& e) {
    fail(std::string("connect failed: ") + e.what());
    throw;
  }

  {
    std::lock_guard lock(mu_);
    next_number_ = 1;
    swallow_ok_ = false;
    next_poll_ = transport_.now();
    state_.last_error.reset();
    set_state_locked(LinkState::kIdle, notes);
  }
  fire(notes);
}

void Session::cancel_all_locked() {
  auto cancel = [](std::deque<Item>& q) {
    for (auto& it : q) it.ticket.resolve(TicketStatus::kCancelled);
    q.clear();
  };
  cancel(injected_);
  cancel(polls_);
  if (group_) group_->ticket.resolve(TicketStatus::kCancelled);
  group_.reset();
  program_.clear();
}

void Session::device_lost_locked(const std::string& what, Notes& notes) {
  cancel_all_locked();
  if (in_flight_) in_flight_->ticket.resolve(TicketStatus::kFailed, what);
  in_flight_.reset();
  try {
    transport_.close();
  } catch (const Error&) {
  }
  state_.last_error = what;
  state_.link = LinkState::kDisconnected;
  state_changed_locked(notes);
}

void Session::disconnect() {
  Notes notes;
  {
    std::lock_guard lock(mu_);
    cancel_all_locked();
    if (in_flight_) in_flight_->ticket.resolve(TicketStatus::kCancelled);
    in_flight_.reset();
    transport_.close();
    set_state_locked(LinkState::kDisconnected, notes);
  }
  fire(notes);
}

void Session::start(const Toolpath& toolpath) {
  start(toolpath.profile(), toolpath.commands());
}

void Session::start(const MachineProfile& profile, std::span<const Command> commands) {
  std::vector<std::string> lines;
  for (auto& group : gcode::serialize_commands(profile, commands)) {
    for (auto& l : group) lines.push_back(std::move(l));
  }
  start_lines(std::move(lines));
}

void Session::start_lines(std::vector<std::string> lines) {
  Notes notes;
  {
    std::lock_guard lock(mu_);
    if (state_.link != LinkState::kIdle) {
      throw LinkError("cannot start: link is " + std::string(to_string(state_.link)));
    }
    program_.clear();
    std::size_t total = 0;
    for (auto& l : lines) {
      if (is_pause_directive(l)) {
        program_.push_back(std::move(l));
      } else if (has_command(l)) {
        if (l.find_first_of("\r\n") != std::string::npos) {
          throw ArgumentError("program line contains a line terminator");
        }
        program_.push_back(std::move(l));
        ++total;
      }
    }
    state_.progress = Progress{0, 0, 0, 0, total};
    state_.last_error.reset();
    stream_started_ = transport_.now();
    stream_elapsed_ = 0.0;
    next_poll_ = transport_.now();
    set_state_locked(LinkState::kStreaming, notes);
    check_complete_locked(notes);
  }
  fire(notes);
}

void Session::pause() {
  Notes notes;
  {
    std::lock_guard lock(mu_);
    require_connected("pause");
    if (state_.link == LinkState::kStreaming) set_state_locked(LinkState::kPaused, notes);
  }
  fire(notes);
}

void Session::resume() {
  Notes notes;
  {
    std::lock_guard lock(mu_);
    require_connected("resume");
    if (state_.link == LinkState::kError) throw LinkError("cannot resume from error; stop first");
    if (state_.link == LinkState::kPaused) {
      set_state_locked(LinkState::kStreaming, notes);
      check_complete_locked(notes);
    }
  }
  fire(notes);
}

void Session::stop() {
  Notes notes;
  {
    std::lock_guard lock(mu_);
    require_connected("stop");
    cancel_all_locked();
    if (options_.safety_tail) {
      Item tail;
      tail.lines = {"M104 S0", "M140 S0", "G91",
                    "G0 Z" + gcode::format_coord(options_.lift_mm) + " F" +
                        std::to_string(gcode::feedrate_mm_min(options_.lift_speed)),
                    "G90"};
      tail.ticket = Ticket(std::make_shared<Ticket::State>());
      injected_.push_back(std::move(tail));
    }
    if (state_.link == LinkState::kStreaming || state_.link == LinkState::kPaused) {
      stream_elapsed_ = transport_.now() - stream_started_;
    }
    set_state_locked(LinkState::kIdle, notes);
  }
  fire(notes);
}

Ticket Session::enqueue_locked(std::vector<std::string> lines, bool poll) {
  Item item;
  item.lines = std::move(lines);
  item.poll = poll;
  item.ticket = Ticket(std::make_shared<Ticket::State>());
  Ticket t = item.ticket;
  (poll ? polls_ : injected_).push_back(std::move(item));
  return t;
}

Ticket Session::inject(const Command& cmd) {
  validate(cmd);
  if (std::holds_alternative<MoveExtrude>(cmd) || std::holds_alternative<MoveRetract>(cmd)) {
    throw ArgumentError("inject: extruding moves need the program's extruder state; inject raw G-code");
  }
  gcode::Writer writer(profile_);
  auto lines = writer.write(cmd);
  if (lines.empty()) throw ArgumentError("inject: command produces no G-code");
  return inject_lines(std::move(lines));
}

Ticket Session::inject_lines(std::vector<std::string> lines) {
  if (lines.empty()) throw ArgumentError("inject: no lines");
  for (const auto& l : lines) check_line(l);
  Notes notes;
  Ticket t;
  {
    std::lock_guard lock(mu_);
    if (state_.link == LinkState::kDisconnected || state_.link == LinkState::kError) {
      throw LinkError("cannot inject: link is " + std::string(to_string(state_.link)));
    }
    t = enqueue_locked(std::move(lines), false);
  }
  return t;
}

Ticket Session::jog(double dx, double dy, double dz, double speed) {
  if (!std::isfinite(dx) || !std::isfinite(dy) || !std::isfinite(dz)) {
    throw ArgumentError("jog: offsets must be finite");
  }
  if (!(speed > 0) || !std::isfinite(speed)) throw ArgumentError("jog: speed must be > 0");
  return inject_lines({"G91",
                       "G0 X" + gcode::format_coord(dx) + " Y" + gcode::format_coord(dy) + " Z" +
                           gcode::format_coord(dz) + " F" +
                           std::to_string(gcode::feedrate_mm_min(speed)),
                       "G90"});
}

Ticket Session::request_poll() {
  std::lock_guard lock(mu_);
  if (state_.link == LinkState::kDisconnected || state_.link == LinkState::kError) {
    throw LinkError("cannot poll: link is " + std::string(to_string(state_.link)));
  }
  if (!poll_ticket_.done()) return poll_ticket_;
  enqueue_locked({"M114"}, true);
  poll_ticket_ = enqueue_locked({"M105"}, true);
  return poll_ticket_;
}

void Session::dispatch_locked(Notes& notes) {
  if (in_flight_ || state_.link == LinkState::kDisconnected || state_.link == LinkState::kError) {
    return;
  }
  if (!group_ || group_->lines.empty()) {
    group_.reset();
    if (!injected_.empty()) {
      group_ = std::move(injected_.front());
      injected_.pop_front();
    } else if (!polls_.empty()) {
      group_ = std::move(polls_.front());
      polls_.pop_front();
    } else if (state_.link == LinkState::kStreaming && !program_.empty()) {
      if (is_pause_directive(program_.front())) {
        program_.pop_front();
        set_state_locked(LinkState::kPaused, notes);
        return;
      }
      Item item;
      item.lines.push_back(std::move(program_.front()));
      item.program = true;
      program_.pop_front();
      group_ = std::move(item);
    } else {
      return;
    }
  }

  InFlight f;
  f.line = std::move(group_->lines.front());
  group_->lines.erase(group_->lines.begin());
  f.program = group_->program;
  f.poll = group_->poll;
  f.ticket = group_->ticket;
  f.last_of_group = group_->lines.empty();
  if (f.last_of_group) group_.reset();
  if (options_.checksum) {
    f.number = next_number_++;
    f.wire = gcode::frame_line(f.line, f.number);
  } else {
    f.wire = f.line;
  }
  f.deadline = transport_.now() + options_.command_timeout;
  if (f.program) {
    ++state_.progress.sent;
    state_changed_locked(notes);
  }
  const std::string wire = f.wire;
  in_flight_ = std::move(f);
  send_locked(wire, notes);
}

void Session::check_complete_locked(Notes& notes) {
  if (state_.link != LinkState::kStreaming || !program_.empty()) return;
  if (in_flight_ && in_flight_->program) return;
  if (group_ && group_->program) return;
  stream_elapsed_ = transport_.now() - stream_started_;
  set_state_locked(LinkState::kIdle, notes);
}

void Session::fail_locked(const std::string& message, bool timeout, Notes& notes) {
  state_.last_error = message;
  if (in_flight_) {
    InFlight f = std::move(*in_flight_);
    in_flight_.reset();
    if (f.program) ++(timeout ? state_.progress.timed_out : state_.progress.errored);
    f.ticket.resolve(TicketStatus::kFailed, message);
    if (!f.last_of_group && group_) {
      group_->ticket.resolve(TicketStatus::kFailed, message);
      group_.reset();
    }
  }
  const LinkState s = state_.link;
  if (timeout || s == LinkState::kStreaming || s == LinkState::kPaused) {
    set_state_locked(LinkState::kError, notes);
  }
  state_changed_locked(notes);
}

void Session::handle_line_locked(const std::string& line, Notes& notes) {
  record_locked(Direction::kRx, line, notes);
  const auto ev = gcode::parse_response(line);

  if (const auto* p = std::get_if<gcode::PositionReport>(&ev)) {
    state_.position = Position{p->x, p->y, p->z, p->e};
    state_changed_locked(notes);
    return;
  }
  if (const auto* t = std::get_if<gcode::TempReport>(&ev)) {
    state_.hotend = {t->hotend_actual, t->hotend_target};
    if (t->bed_actual) state_.bed = {t->bed_actual, t->bed_target};
    state_changed_locked(notes);
    if (!t->ok) {
      if (in_flight_) in_flight_->deadline = transport_.now() + options_.command_timeout;
      return;
    }
  }
  if (gcode::is_acknowledgment(ev)) {
    if (swallow_ok_) {
      swallow_ok_ = false;
      return;
    }
    if (!in_flight_ || in_flight_->awaiting_resend) return;
    InFlight f = std::move(*in_flight_);
    in_flight_.reset();
    if (f.program) {
      ++state_.progress.acked;
      state_changed_locked(notes);
    }
    if (f.last_of_group) f.ticket.resolve(TicketStatus::kAcked, std::nullopt, state_.position);
    check_complete_locked(notes);
    return;
  }
  if (std::holds_alternative<gcode::Busy>(ev)) {
    if (in_flight_) in_flight_->deadline = transport_.now() + options_.command_timeout;
    return;
  }
  if (const auto* e = std::get_if<gcode::ErrorReport>(&ev)) {
    const bool framing = e->message.find("checksum") != std::string::npos ||
                         e->message.find("Line Number") != std::string::npos;
    if (options_.checksum && framing && in_flight_) {
      in_flight_->awaiting_resend = true;
      in_flight_->deadline = transport_.now() + options_.command_timeout;
      state_.last_error = e->message;
      return;
    }
    if (!in_flight_) {
      state_.last_error = e->message;
      state_changed_locked(notes);
      return;
    }
    fail_locked(e->message, false, notes);
    return;
  }
  if (const auto* r = std::get_if<gcode::Resend>(&ev)) {
    if (options_.checksum && in_flight_ && r->line == in_flight_->number) {
      in_flight_->awaiting_resend = false;
      in_flight_->deadline = transport_.now() + options_.command_timeout;
      // Marlin follows a resend request with an "ok" that belongs to the bad line.
      swallow_ok_ = true;
      send_locked(in_flight_->wire, notes);
      return;
    }
    if (in_flight_) fail_locked("unexpected resend request for line " + std::to_string(r->line),
                                false, notes);
    return;
  }
}

void Session::pump(double max_wait) {
  const double end = transport_.now() + std::max(0.0, max_wait);
  Notes notes;
  for (;;) {
    double deadline = end;
    {
      std::lock_guard lock(mu_);
      if (state_.link == LinkState::kDisconnected) return;
      const bool polling =
          options_.polling && (state_.link == LinkState::kStreaming ||
                               (options_.poll_when_idle && state_.link == LinkState::kIdle));
      if (polling && transport_.now() >= next_poll_) {
        next_poll_ = transport_.now() + options_.poll_interval;
        if (poll_ticket_.done()) {
          enqueue_locked({"M114"}, true);
          poll_ticket_ = enqueue_locked({"M105"}, true);
        }
      }
      try {
        dispatch_locked(notes);
      } catch (const TransportError& e) {
        device_lost_locked(std::string("device lost: ") + e.what(), notes);
        fire(notes);
        throw LinkError(std::string("device lost: ") + e.what());
      }
      if (in_flight_) deadline = std::min(deadline, in_flight_->deadline);
      if (polling) deadline = std::min(deadline, std::max(next_poll_, transport_.now()));
    }
    fire(notes);

    std::optional<std::string> line;
    try {
      line = transport_.read_line(deadline);
    } catch (const TransportError& e) {
      {
        std::lock_guard lock(mu_);
        device_lost_locked(std::string("device lost: ") + e.what(), notes);
      }
      fire(notes);
      throw LinkError(std::string("device lost: ") + e.what());
    }
    {
      std::lock_guard lock(mu_);
      try {
        if (line) {
          handle_line_locked(*line, notes);
        } else if (in_flight_ && transport_.now() >= in_flight_->deadline) {
          fail_locked("timeout waiting for acknowledgment of '" + in_flight_->line + "'", true,
                      notes);
        }
        dispatch_locked(notes);
      } catch (const TransportError& e) {
        device_lost_locked(std::string("device lost: ") + e.what(), notes);
        fire(notes);
        throw LinkError(std::string("device lost: ") + e.what());
      }
    }
    fire(notes);
    if (!line && transport_.now() >= end) return;
  }
}

StreamReport Session::wait_stream(double max_time) {
  const double end = transport_.now() + max_time;
  while (state() == LinkState::kStreaming && transport_.now() < end) pump(0.25);
  std::lock_guard lock(mu_);
  StreamReport r;
  r.progress = state_.progress;
  r.final_state = state_.link;
  r.elapsed = state_.link == LinkState::kStreaming ? transport_.now() - stream_started_
                                                   : stream_elapsed_;
  r.error = state_.last_error;
  return r;
}

StreamReport Session::stream(const Toolpath& toolpath) {
  start(toolpath);
  return wait_stream();
}

bool Session::busy() const {
  std::lock_guard lock(mu_);
  return in_flight_ || group_ || !injected_.empty() || !polls_.empty() ||
         (state_.link == LinkState::kStreaming && !program_.empty());
}

bool Session::drain(double max_time) {
  const double end = transport_.now() + max_time;
  while (busy() && transport_.now() < end) {
    const auto s = state();
    if (s == LinkState::kDisconnected || s == LinkState::kError) return !busy();
    pump(0.05);
  }
  return !busy();
}

PrinterState Session::snapshot() const {
  std::lock_guard lock(mu_);
  return state_;
}

LinkState Session::state() const {
  std::lock_guard lock(mu_);
  return state_.link;
}

std::vector<WireRecord> Session::wire_log() const {
  std::lock_guard lock(mu_);
  return log_;
}

void Session::on_wire(WireObserver f) {
  std::lock_guard lock(mu_);
  wire_observers_.push_back(std::move(f));
}

void Session::on_state(StateObserver f) {
  std::lock_guard lock(mu_);
  state_observers_.push_back(std::move(f));
}

}  // namespace fab::host
