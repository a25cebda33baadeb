// Acceptance checks. Prints one PASS or FAIL line per criterion and exits
// nonzero when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "client.hpp"
#include "fab/gcode.hpp"
#include "fab/host.hpp"
#include "fab/printer.hpp"
#include "fab/recipes.hpp"
#include "fab/service.hpp"
#include "fab/text.hpp"
#include "support.hpp"

using namespace fab;

namespace {

// An empty string means the criterion holds; otherwise it says why not.
using Check = std::function<std::string()>;

std::string num(double v) { return text::format_shortest(v); }

std::string unframed(const std::string& wire) {
  const auto framed = gcode::unframe_line(wire);
  return framed ? framed->text : wire;
}

bool is_poll(const std::string& wire) {
  const auto t = unframed(wire);
  return t == "M114" || t == "M105";
}

std::vector<std::string> tx_lines(const std::vector<host::WireRecord>& log) {
  std::vector<std::string> out;
  for (const auto& r : log) {
    if (r.direction != host::Direction::kTx || r.payload == "M110 N0" || is_poll(r.payload)) continue;
    out.push_back(unframed(r.payload));
  }
  return out;
}

std::vector<std::string> flatten(const MachineProfile& p, const std::vector<Command>& prog) {
  std::vector<std::string> out;
  for (auto& g : gcode::serialize_commands(p, prog)) {
    for (auto& l : g) out.push_back(l);
  }
  return out;
}

printer::EmulatorConfig emulator(const MachineProfile& p) {
  printer::EmulatorConfig c;
  c.profile = p;
  return c;
}

template <class T>
std::vector<T> of_type(const Toolpath& tp) {
  std::vector<T> out;
  for (const auto& c : tp.commands()) {
    if (const auto* m = std::get_if<T>(&c)) out.push_back(*m);
  }
  return out;
}

double gap(const Point3& a, const Point3& b) { return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z); }

std::string extrusion() {
  const auto p = ender3();
  const double e = default_extrusion(p, 10.0);
  if (std::abs(e - 0.522449) >= 1e-6) return "e(10) = " + num(e);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    MachineProfile q = p;
    q.nozzle_radius = testing::uniform(rng, 0.05, 0.6);
    q.filament_radius = testing::uniform(rng, 0.7, 1.5);
    const double len = testing::uniform(rng, 0, 300);
    const double oracle = testing::extrusion_by_volume(q.nozzle_radius, q.filament_radius, len);
    if (std::abs(default_extrusion(q, len) - oracle) > 1e-12 * std::max(1.0, oracle)) {
      return "case " + std::to_string(i) + " differs from the volume oracle";
    }
  }
  return {};
}

std::string codec() {
  const auto p = ender3();
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const auto prog = testing::random_program(rng, p);
    const auto first = gcode::serialize_program(p, prog);
    const auto parsed = gcode::parse_program(first, p);
    if (!parsed.diagnostics.empty()) return "program " + std::to_string(i) + " has diagnostics";
    if (gcode::serialize_program(p, parsed.commands) != first) {
      return "program " + std::to_string(i) + " is not byte-identical";
    }
  }
  for (int i = 0; i < 10000; ++i) {
    std::string s;
    const int n = testing::uniform_int(rng, 0, 80);
    for (int k = 0; k < n; ++k) s += static_cast<char>(rng() % 256);
    try {
      (void)gcode::parse_response(s);
    } catch (...) {
      return "parse_response threw on fuzz input " + std::to_string(i);
    }
  }
  return {};
}

std::string flow_control() {
  const auto p = ender3();
  std::mt19937_64 rng(3);
  const auto prog = testing::random_motion_program(rng, p, 1000);
  const auto lines = flatten(p, prog);
  host::LoopbackTransport t(emulator(p), host::AckDelay::randomized(3, 0.0, 0.2));
  host::Session s(t, p);
  s.connect();
  s.start(p, prog);
  const auto report = s.wait_stream();
  const auto& pr = report.progress;
  if (pr.sent != 1000 || pr.acked != 1000 || pr.total != 1000) {
    return "sent " + std::to_string(pr.sent) + " acked " + std::to_string(pr.acked);
  }
  const auto flow = host::check_flow_window(s.wire_log());
  if (flow.max_outstanding > 1) return "window reached " + std::to_string(flow.max_outstanding);
  if (tx_lines(s.wire_log()) != lines) return "wire order differs from the program";
  return {};
}

std::string injection() {
  const auto p = ender3();
  std::mt19937_64 rng(4);
  const auto prog = testing::random_motion_program(rng, p, 2000);
  host::LoopbackTransport t(emulator(p), host::AckDelay::randomized(4, 0.0, 0.05));
  host::Session s(t, p);
  s.connect();
  s.start(p, prog);
  for (int i = 0; i < 100; ++i) {
    s.pump(testing::uniform(rng, 0.0, 0.5));
    if (s.state() != host::LinkState::kStreaming) return "stream ended early";
    const std::size_t mark = s.wire_log().size();
    const std::string line = "M117 inject " + std::to_string(i);
    const auto ticket = s.inject_lines({line});
    while (!ticket.done()) s.pump(0.05);
    const auto log = s.wire_log();
    auto it = std::find_if(log.begin() + static_cast<long>(mark), log.end(),
                           [](const host::WireRecord& r) { return r.direction == host::Direction::kTx; });
    if (it == log.end() || it->payload != line) return "injection " + std::to_string(i) + " was not next";
  }
  s.stop();
  s.drain(60);
  return {};
}

std::string lissajous() {
  const auto p = ender3();
  const auto tp = recipes::lissajous(p);
  const auto ex = of_type<MoveExtrude>(tp);
  if (ex.size() != 201) return std::to_string(ex.size()) + " extrude commands";
  if (gap(ex.front().target, ex.back().target) > 1e-9) return "endpoints differ";
  for (std::size_t i = 0; i < ex.size(); ++i) {
    const double t = static_cast<double>(i) * (2 * std::numbers::pi / 200);
    const double x = 110 + 100 * std::sin(5 * t + std::numbers::pi / 2);
    const double y = 110 + 100 * std::sin(4 * t);
    if (std::abs(ex[i].target.x - x) > 1e-12 || std::abs(ex[i].target.y - y) > 1e-12) {
      return "sample " + std::to_string(i) + " is off the curve";
    }
  }
  if (!bounds_check(tp).empty()) return "leaves the envelope";
  return {};
}

std::string velocity_cube() {
  const auto p = ender3();
  const recipes::VelocityCubeParams vp;
  const auto tp = recipes::velocity_cube(p, vp);
  // Painted-face feedrates as the machine reads them off the wire.
  std::map<std::string, int> feeds;
  for (const auto& sg : gcode::parse_program(gcode::serialize_program(tp), p).segments) {
    if (sg.kind == SegmentKind::kExtrude && sg.start.y == 100 && sg.end.y == 100) {
      feeds[num(sg.feedrate * 60)]++;
    }
  }
  if (feeds.size() != 2 || !feeds.count("1800") || !feeds.count("1200")) {
    return "painted-face feedrates are not {1800, 1200}";
  }

  // First front-face piece and the perimeter of each layer.
  std::map<long, double> front;
  std::map<long, std::vector<const Segment*>> layer;
  for (const auto& s : tp.segments()) {
    if (s.kind != SegmentKind::kExtrude) continue;
    const long idx = std::lround(s.end.z / vp.layer_height);
    layer[idx].push_back(&s);
    if (s.start.y == 100 && s.end.y == 100 && !front.count(idx)) front[idx] = s.feedrate;
  }
  if (front.size() != 100) return std::to_string(front.size()) + " layers";
  std::vector<long> flips;
  for (long i = 2; i <= 100; ++i) {
    if (front[i] != front[i - 1]) flips.push_back(i);
  }
  if (flips != std::vector<long>{25, 50, 75, 100}) return "parity flips at the wrong layers";
  for (const auto& [i, segs] : layer) {
    if (gap(segs.back()->end.xyz(), segs.front()->start.xyz()) > 1e-9) {
      return "layer " + std::to_string(i) + " perimeter is open";
    }
  }
  return {};
}

std::string wave() {
  const auto p = ender3();
  std::vector<double> durations;
  for (double a : {100.0, 500.0, 2000.0}) {
    recipes::WaveParams wp;
    wp.ax = wp.ay = wp.az = a;
    const auto tp = recipes::wave(p, wp);
    const auto& c = tp.commands();
    if (c.size() < 2 || !std::holds_alternative<SetStartingAcceleration>(c[0]) ||
        !std::holds_alternative<SetMaxAcceleration>(c[1])) {
      return "accelerations are not set first";
    }
    const auto r = printer::run_program(emulator(p), gcode::serialize_program(tp));
    if (!r.errors.empty()) return "emulator error: " + r.errors.front();
    durations.push_back(r.total_duration);
  }
  if (!(durations[0] > durations[1] && durations[1] > durations[2])) {
    return "durations " + num(durations[0]) + ", " + num(durations[1]) + ", " + num(durations[2]);
  }
  return {};
}

std::string dot_bridge() {
  const auto p = ender3();
  const recipes::DotBridgeParams dp;
  const auto tp = recipes::dot_bridge(p, dp);
  std::vector<std::string> kinds;
  gcode::Interpreter in;
  for (const auto& l : testing::split_lines(gcode::serialize_program(tp))) {
    auto b = gcode::parse_block(l);
    if (!b.block) continue;
    const auto m = in.apply(*b.block);
    if (!m) continue;
    const double de = m->end.e - m->start.e;
    const bool moves = m->end.xyz() != m->start.xyz();
    const auto* f = b.block->find('F');
    if (!moves && de < 0) {
      kinds.push_back("retract");
    } else if (!moves && de > 0) {
      kinds.push_back("prime");
    } else if (de == 0) {
      kinds.push_back("travel");
    } else if (m->end.z > m->start.z) {
      kinds.push_back("dot");
      if (std::abs(de - dp.e_amount) > 1e-9) return "dot extrudes " + num(de);
    } else {
      kinds.push_back("bridge");
      if (!f || f->value != dp.fast_speed * 60) return "bridge feedrate is not fastSpeed*60";
    }
  }
  const std::vector<std::string> want{"travel", "dot", "retract", "travel", "prime", "dot", "bridge"};
  if (kinds != want) return "wire order " + testing::join(kinds);
  return {};
}

std::string conservation() {
  const auto p = ender3();
  for (const auto& info : recipes::recipe_catalog()) {
    recipes::ParamMap params;
    if (info.name == "handle") {
      params = {{"p1x", "60"}, {"p1y", "70"}, {"p1z", "12"}, {"p2x", "120"}, {"p2y", "90"}, {"p2z", "8"}};
    }
    const auto tp = recipes::generate(info.name, p, params);
    const auto text = gcode::serialize_program(tp);
    const auto r = printer::run_program(emulator(p), text);
    if (!r.errors.empty()) return info.name + ": " + r.errors.front();
    double e = 0, busy = 0, integrated = 0;
    for (const auto& rec : r.trace) {
      e += rec.delta_e;
      busy += printer::segment_duration(rec.length, rec.feedrate, rec.accel, rec.junction_speed);
      integrated += testing::integrate_move(rec.length, rec.feedrate, rec.accel, rec.junction_speed, 2000);
    }
    if (std::abs(r.final_position.e - e) > 1e-9 * std::max(1.0, std::abs(e))) {
      return info.name + ": final E " + num(r.final_position.e) + " vs sum " + num(e);
    }
    if (r.final_position != testing::commanded_after(testing::split_lines(text))) {
      return info.name + ": final position is not the last commanded";
    }
    if (std::abs(r.total_duration - busy) > 1e-6 * std::max(1.0, busy)) {
      return info.name + ": duration " + num(r.total_duration) + " vs segments " + num(busy);
    }
    if (std::abs(integrated - busy) > 0.005 * busy) {
      return info.name + ": integration " + num(integrated) + " vs " + num(busy);
    }
  }
  return {};
}

std::string overlay() {
  const auto p = ender3();
  host::LoopbackTransport t(emulator(p));
  host::Session s(t, p);
  s.connect();
  service::ServiceCore core(s, p);
  service::ServiceServer server(core, 0);
  const auto port = server.start();
  std::thread loop([&] { server.run(); });
  struct Joiner {
    service::ServiceServer& s;
    std::thread& t;
    ~Joiner() {
      s.stop();
      if (t.joinable()) t.join();
    }
  } joiner{server, loop};

  testing::LineClient c(port);
  auto fault = [&](const service::ServiceMessage& m) {
    if (const auto* f = std::get_if<service::Fault>(&m)) return "fault: " + f->message;
    return std::string();
  };
  std::vector<Position> probes;
  const std::vector<std::pair<service::Jog, std::string>> steps = {
      {{1, 60, 70, 12, 50}, "p1"}, {{3, 60, 20, -4, 50}, "p2"}};
  for (const auto& [jog, label] : steps) {
    c.send(jog);
    c.send(service::ProbeCapture{jog.id ? *jog.id + 1 : 0, label});
    std::string why;
    auto stored = c.wait_for(
        [&](const service::ServiceMessage& m) {
          why = fault(m);
          return !why.empty() || std::holds_alternative<service::ProbeStored>(m);
        },
        30);
    if (!stored) return "no ProbeStored for " + label;
    if (!why.empty()) return why;
    probes.push_back(std::get<service::ProbeStored>(*stored).position);
  }
  c.send(service::LoadProgram{5, std::nullopt, "handle", {}});
  std::string why;
  auto loaded = c.wait_for(
      [&](const service::ServiceMessage& m) {
        why = fault(m);
        return !why.empty() || std::holds_alternative<service::ProgramLoaded>(m);
      },
      30);
  if (!loaded) return "no ProgramLoaded";
  if (!why.empty()) return why;
  const auto& segs = std::get<service::ProgramLoaded>(*loaded).segments;
  const auto first = std::find_if(segs.begin(), segs.end(),
                                  [](const Segment& sg) { return sg.kind == SegmentKind::kExtrude; });
  if (first == segs.end()) return "handle has no extrusion";
  if (first->start.xyz() != probes[0].xyz() || first->end.xyz() != probes[1].xyz()) {
    return "handle endpoints differ from the probes";
  }
  const double floor = std::min(probes[0].z, probes[1].z);
  // The lead-in travel starts wherever the head was.
  for (auto it = segs.begin() + 1; it != segs.end(); ++it) {
    if (it->start.z < floor || it->end.z < floor) return "handle dips below the lower probe";
  }
  return {};
}

std::string safety_stop() {
  const auto p = ender3();
  std::mt19937_64 rng(11);
  const auto prog = testing::random_motion_program(rng, p, 500);
  host::LoopbackTransport t(emulator(p), host::AckDelay::randomized(11, 0.0, 0.05));
  host::Session s(t, p);
  s.connect();
  s.start(p, prog);
  s.pump(3.0);
  if (s.state() != host::LinkState::kStreaming) return "not streaming when stopped";
  s.stop();
  if (!s.drain(60)) return "queue did not drain";
  if (s.busy()) return "work remains queued";
  const auto tx = tx_lines(s.wire_log());
  const std::vector<std::string> tail{"M104 S0", "M140 S0", "G91", "G0 Z5.000 F600", "G90"};
  if (tx.size() < tail.size() || !std::equal(tail.begin(), tail.end(), tx.end() - 5)) {
    return "tail " + testing::join(std::vector<std::string>(tx.end() - std::min<long>(5, tx.size()), tx.end()));
  }
  if (s.snapshot().progress.sent >= prog.size()) return "program was not cut short";
  return {};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, Check>> checks = {
      {"extrusion amount matches the volume oracle", extrusion},
      {"codec round trip and response fuzz", codec},
      {"flow control keeps one line outstanding", flow_control},
      {"injected line is the next transmission", injection},
      {"lissajous recipe geometry", lissajous},
      {"velocity cube feedrates, bands and closure", velocity_cube},
      {"wave accelerations and durations", wave},
      {"dot bridge wire order", dot_bridge},
      {"simulator conservation for every recipe", conservation},
      {"probe overlay through the service", overlay},
      {"safety stop tail", safety_stop},
  };
  int failed = 0;
  for (const auto& [name, check] : checks) {
    const auto start = std::chrono::steady_clock::now();
    std::string why;
    try {
      why = check();
    } catch (const std::exception& e) {
      why = std::string("exception: ") + e.what();
    }
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (why.empty()) {
      std::printf("PASS %s (%.0f ms)\n", name.c_str(), ms);
    } else {
      ++failed;
      std::printf("FAIL %s: %s (%.0f ms)\n", name.c_str(), why.c_str(), ms);
    }
  }
  return failed == 0 ? 0 : 1;
}
