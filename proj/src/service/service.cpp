#include <algorithm>

#include "fab/errors.hpp"
#include "fab/gcode.hpp"
#include "fab/recipes.hpp"
#include "fab/service.hpp"
#include "fab/text.hpp"

namespace fab::service {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::vector<std::string> flatten(std::vector<std::vector<std::string>> groups) {
  std::vector<std::string> out;
  for (auto& g : groups) {
    for (auto& l : g) out.push_back(std::move(l));
  }
  return out;
}

std::size_t count_sendable(const std::vector<std::string>& lines) {
  return static_cast<std::size_t>(std::count_if(lines.begin(), lines.end(), [](const auto& l) {
    return !gcode::strip_line(l).empty();
  }));
}

std::string describe(const Violation& v) {
  std::string axes;
  if (v.axes[0]) axes += 'X';
  if (v.axes[1]) axes += 'Y';
  if (v.axes[2]) axes += 'Z';
  return "segment " + std::to_string(v.segment) + " leaves the envelope on " + axes + " at (" +
         text::format_fixed(v.point.x, 3) + ", " + text::format_fixed(v.point.y, 3) + ", " +
         text::format_fixed(v.point.z, 3) + ")";
}

}  // namespace

ServiceCore::ServiceCore(host::Session& session, MachineProfile profile, ServiceOptions options)
    : session_(session), profile_(std::move(profile)), options_(options) {
  session_.on_wire([this](const host::WireRecord& r) { broadcast(WireEvent{r}); });
  session_.on_state([this](const host::PrinterState&) {
    std::lock_guard lock(inbox_mu_);
    state_dirty_ = true;
  });
}

int ServiceCore::add_client(Sink sink) {
  int id;
  {
    std::lock_guard lock(clients_mu_);
    id = next_client_++;
    clients_.push_back({id, std::move(sink)});
  }
  // A fresh client gets the current state on the next tick.
  std::lock_guard lock(inbox_mu_);
  state_dirty_ = true;
  force_state_ = true;
  return id;
}

void ServiceCore::remove_client(int client) {
  std::lock_guard lock(clients_mu_);
  std::erase_if(clients_, [&](const Client& c) { return c.id == client; });
}

bool ServiceCore::is_writer(int client) const {
  std::lock_guard lock(clients_mu_);
  return !clients_.empty() && clients_.front().id == client;
}

void ServiceCore::submit(int client, ClientMessage msg) {
  std::lock_guard lock(inbox_mu_);
  inbox_.emplace_back(client, std::move(msg));
}

void ServiceCore::send(int client, const ServiceMessage& m) {
  Sink sink;
  {
    std::lock_guard lock(clients_mu_);
    for (const auto& c : clients_) {
      if (c.id == client) sink = c.sink;
    }
  }
  if (sink) sink(m);
}

void ServiceCore::broadcast(const ServiceMessage& m) {
  std::vector<Sink> sinks;
  {
    std::lock_guard lock(clients_mu_);
    for (const auto& c : clients_) sinks.push_back(c.sink);
  }
  for (const auto& s : sinks) s(m);
}

void ServiceCore::fault(int client, std::optional<std::int64_t> id, std::string message) {
  send(client, Fault{id, std::move(message)});
}

void ServiceCore::tick(double max_wait) {
  std::deque<std::pair<int, ClientMessage>> batch;
  {
    std::lock_guard lock(inbox_mu_);
    batch.swap(inbox_);
  }
  for (const auto& [client, msg] : batch) handle(client, msg);

  if (session_.state() != host::LinkState::kDisconnected) {
    try {
      session_.pump(max_wait);
    } catch (const LinkError& e) {
      if (!lost_reported_) {
        lost_reported_ = true;
        broadcast(Fault{std::nullopt, e.what()});
      }
    }
  }
  resolve_pending();
  publish_state(false);
}

void ServiceCore::publish_state(bool force) {
  bool dirty;
  {
    std::lock_guard lock(inbox_mu_);
    dirty = state_dirty_;
    force = force || force_state_;
    state_dirty_ = false;
    force_state_ = false;
  }
  const double now = session_.now();
  if (!force && !dirty && now - last_state_ < options_.state_interval) return;
  auto state = session_.snapshot();
  if (!force && dirty && sent_state_ == state && now - last_state_ < options_.state_interval) {
    return;
  }
  last_state_ = now;
  sent_state_ = state;
  broadcast(StateUpdate{std::move(state)});
}

void ServiceCore::resolve_pending() {
  std::vector<Pending> still;
  for (auto& p : pending_) {
    const auto status = p.ticket.status();
    const auto first = p.first ? p.first->status() : host::TicketStatus::kAcked;
    if (status == host::TicketStatus::kPending || first == host::TicketStatus::kPending) {
      still.push_back(std::move(p));
    } else if (first != host::TicketStatus::kAcked) {
      fault(p.client, p.id,
            p.request + " failed: " +
                p.first->error().value_or(std::string(host::to_string(first))));
    } else if (status != host::TicketStatus::kAcked) {
      fault(p.client, p.id,
            p.request + " failed: " +
                p.ticket.error().value_or(std::string(host::to_string(status))));
    } else if (!p.label.empty()) {
      const auto pos = p.ticket.position();
      if (!pos) {
        fault(p.client, p.id, "probe capture: printer did not report a position");
        continue;
      }
      probes_[p.label] = *pos;
      broadcast(ProbeStored{p.id, p.label, *pos});
    } else {
      send(p.client, Ack{p.id, p.request});
    }
  }
  pending_ = std::move(still);
}

void ServiceCore::handle(int client, const ClientMessage& msg) {
  const auto id = message_id(msg);
  const std::string type(message_type(msg));
  if (!is_writer(client)) {
    fault(client, id, type + ": this client is read-only");
    return;
  }
  try {
    std::visit(
        Overloaded{
            [&](const LoadProgram& m) { load(client, m); },
            [&](const StartStream&) {
              if (program_.empty()) throw ArgumentError("no program loaded");
              session_.start_lines(program_);
              send(client, Ack{id, type});
            },
            [&](const Pause&) {
              session_.pause();
              send(client, Ack{id, type});
            },
            [&](const Resume&) {
              session_.resume();
              send(client, Ack{id, type});
            },
            [&](const Stop&) {
              session_.stop();
              send(client, Ack{id, type});
            },
            [&](const Inject& m) {
              pending_.push_back({client, id, type, "", session_.inject_lines({m.command}), std::nullopt});
            },
            [&](const Jog& m) {
              // The position report queued behind the jog refreshes the state
              // before the Ack goes out.
              auto moved = session_.jog(m.dx, m.dy, m.dz, m.speed);
              pending_.push_back({client, id, type, "", session_.inject_lines({"M114"}), moved});
            },
            [&](const ProbeCapture& m) {
              if (m.label.empty()) throw ArgumentError("probe label must not be empty");
              pending_.push_back({client, id, type, m.label, session_.inject_lines({"M114"}), std::nullopt});
            },
            [&](const SetBoundsMode& m) {
              options_.bounds_mode = m.mode;
              send(client, Ack{id, type});
            },
        },
        msg);
  } catch (const Error& e) {
    fault(client, id, type + ": " + e.what());
  }
}

void ServiceCore::load(int client, const LoadProgram& m) {
  ProgramLoaded out;
  out.id = m.id;
  std::vector<std::string> lines;
  if (m.gcode) {
    auto parsed = gcode::parse_program(*m.gcode, profile_);
    const auto violations = bounds_check(profile_, parsed.segments);
    if (options_.bounds_mode == BoundsMode::kStrict && !violations.empty()) {
      fault(client, m.id,
            "LoadProgram: " + std::to_string(violations.size()) +
                " points outside the work envelope; first: " + describe(violations.front()));
      return;
    }
    lines = std::move(parsed.lines);
    out.segments = std::move(parsed.segments);
    out.diagnostics = std::move(parsed.diagnostics);
    out.violations = violations.size();
  } else {
    auto params = m.params;
    if (*m.recipe == "handle") {
      // Probes fill whichever endpoint coordinates were not given.
      for (const char* label : {"p1", "p2"}) {
        auto it = probes_.find(label);
        for (char axis : {'x', 'y', 'z'}) {
          const std::string key = std::string(label) + axis;
          if (params.count(key)) continue;
          if (it == probes_.end()) {
            throw ArgumentError(std::string("handle needs probe '") + label +
                                "'; capture it with ProbeCapture first");
          }
          const double v = axis == 'x' ? it->second.x : axis == 'y' ? it->second.y : it->second.z;
          params[key] = text::format_shortest(v);
        }
      }
    }
    const Toolpath tp = recipes::generate(*m.recipe, profile_, params);
    lines = flatten(gcode::serialize_commands(profile_, tp.commands()));
    out.segments = tp.segments();
    out.diagnostics = tp.diagnostics();
    out.violations = bounds_check(tp).size();
  }
  out.stats = compute_stats(out.segments);
  out.lines = count_sendable(lines);
  program_ = std::move(lines);
  broadcast(out);
}

}  // namespace fab::service
