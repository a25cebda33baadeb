#include <doctest.h>

#include <algorithm>
#include <random>
#include <thread>

#include "client.hpp"
#include "fab/errors.hpp"
#include "fab/recipes.hpp"
#include "fab/service.hpp"
#include "support.hpp"

using namespace fab;
using namespace fab::service;

namespace {

std::optional<std::int64_t> random_id(std::mt19937_64& rng) {
  if (testing::uniform_int(rng, 0, 3) == 0) return std::nullopt;
  return std::uniform_int_distribution<std::int64_t>(-(1LL << 53), 1LL << 53)(rng);
}

std::string random_text(std::mt19937_64& rng) {
  static const std::string alphabet = "abcXYZ019 _-;:\"\\/\t{}[]\xc3\xa9";
  std::string s;
  const int n = testing::uniform_int(rng, 0, 20);
  for (int i = 0; i < n; ++i) {
    s += alphabet[static_cast<std::size_t>(
        testing::uniform_int(rng, 0, static_cast<int>(alphabet.size()) - 3))];
  }
  if (testing::uniform_int(rng, 0, 4) == 0) s += "\xc3\xa9";
  return s;
}

ClientMessage random_client(std::mt19937_64& rng) {
  const auto id = random_id(rng);
  switch (testing::uniform_int(rng, 0, 9)) {
    case 0: return LoadProgram{id, random_text(rng), std::nullopt, {}};
    case 1: {
      LoadProgram m{id, std::nullopt, random_text(rng), {}};
      for (int i = testing::uniform_int(rng, 0, 3); i > 0; --i) m.params[random_text(rng)] = random_text(rng);
      return m;
    }
    case 2: return StartStream{id};
    case 3: return Pause{id};
    case 4: return Resume{id};
    case 5: return Stop{id};
    case 6: return Inject{id, random_text(rng)};
    case 7:
      return Jog{id, testing::uniform(rng, -50, 50), testing::uniform(rng, -50, 50),
                 testing::uniform(rng, -50, 50), testing::uniform(rng, 0.1, 100)};
    case 8: return ProbeCapture{id, random_text(rng)};
    default:
      return SetBoundsMode{id, testing::uniform_int(rng, 0, 1) ? BoundsMode::kStrict
                                                              : BoundsMode::kPermissive};
  }
}

std::optional<double> maybe(std::mt19937_64& rng, double lo, double hi) {
  if (testing::uniform_int(rng, 0, 2) == 0) return std::nullopt;
  return testing::uniform(rng, lo, hi);
}

host::PrinterState random_state(std::mt19937_64& rng) {
  host::PrinterState s;
  if (testing::uniform_int(rng, 0, 1)) {
    s.position = Position{testing::uniform(rng, 0, 220), testing::uniform(rng, 0, 220),
                          testing::uniform(rng, 0, 250), testing::uniform(rng, -5, 500)};
  }
  s.hotend = {maybe(rng, 20, 260), maybe(rng, 0, 260)};
  s.bed = {maybe(rng, 20, 100), maybe(rng, 0, 100)};
  s.link = static_cast<host::LinkState>(testing::uniform_int(rng, 0, 4));
  s.progress = {static_cast<std::size_t>(testing::uniform_int(rng, 0, 9)),
                static_cast<std::size_t>(testing::uniform_int(rng, 0, 9)),
                static_cast<std::size_t>(testing::uniform_int(rng, 0, 9)),
                static_cast<std::size_t>(testing::uniform_int(rng, 0, 9)),
                static_cast<std::size_t>(testing::uniform_int(rng, 0, 9))};
  if (testing::uniform_int(rng, 0, 1)) s.last_error = random_text(rng);
  return s;
}

ServiceMessage random_service(std::mt19937_64& rng, const MachineProfile& p) {
  const auto id = random_id(rng);
  switch (testing::uniform_int(rng, 0, 5)) {
    case 0: {
      Toolpath tp(p, BoundsMode::kPermissive);
      for (const auto& c : testing::random_program(rng, p, 0, 10)) tp.append(c);
      ProgramLoaded m{id, tp.segments(), tp.stats(), tp.diagnostics(), 0, 0};
      m.diagnostics.push_back({7, random_text(rng)});
      m.violations = static_cast<std::size_t>(testing::uniform_int(rng, 0, 5));
      m.lines = static_cast<std::size_t>(testing::uniform_int(rng, 0, 500));
      return m;
    }
    case 1: return StateUpdate{random_state(rng)};
    case 2:
      return WireEvent{{testing::uniform(rng, 0, 1e5),
                        testing::uniform_int(rng, 0, 1) ? host::Direction::kTx : host::Direction::kRx,
                        random_text(rng)}};
    case 3:
      return ProbeStored{id, random_text(rng),
                         {testing::uniform(rng, 0, 220), testing::uniform(rng, 0, 220),
                          testing::uniform(rng, 0, 250), testing::uniform(rng, 0, 50)}};
    case 4: return Fault{id, random_text(rng)};
    default: return Ack{id, random_text(rng)};
  }
}

struct Inbox {
  std::vector<ServiceMessage> messages;

  template <class T>
  std::vector<T> all() const {
    std::vector<T> out;
    for (const auto& m : messages) {
      if (const auto* v = std::get_if<T>(&m)) out.push_back(*v);
    }
    return out;
  }
  template <class T>
  std::optional<T> last() const {
    auto v = all<T>();
    if (v.empty()) return std::nullopt;
    return v.back();
  }
};

// A connected session on the virtual printer with a core and two clients.
struct Rig {
  MachineProfile profile = ender3();
  host::LoopbackTransport transport;
  host::Session session;
  ServiceCore core;
  Inbox writer;
  Inbox observer;
  int writer_id = 0;
  int observer_id = 0;

  explicit Rig(bool with_clients = true)
      : transport([] {
          printer::EmulatorConfig c;
          c.profile = ender3();
          return c;
        }()),
        session(transport, ender3()),
        core(session, ender3()) {
    session.connect();
    if (!with_clients) return;
    writer_id = core.add_client([this](const ServiceMessage& m) { writer.messages.push_back(m); });
    observer_id =
        core.add_client([this](const ServiceMessage& m) { observer.messages.push_back(m); });
  }

  void run(int ticks, double step = 0.1) {
    for (int i = 0; i < ticks; ++i) core.tick(step);
  }
  // Ticks until `done` holds, up to a bound of link time.
  template <class F>
  bool run_until(F done, double limit = 600) {
    const double end = session.now() + limit;
    while (!done() && session.now() < end) core.tick(0.1);
    return done();
  }
};

}  // namespace

TEST_CASE("client messages round trip through JSON") {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 2000; ++i) {
    const auto m = random_client(rng);
    const auto line = encode(m);
    REQUIRE(line.find('\n') == std::string::npos);
    REQUIRE(decode_client(line) == m);
  }
}

TEST_CASE("service messages round trip through JSON") {
  std::mt19937_64 rng(42);
  const auto p = ender3();
  for (int i = 0; i < 1000; ++i) {
    const auto m = random_service(rng, p);
    const auto line = encode(m);
    REQUIRE(line.find('\n') == std::string::npos);
    REQUIRE(decode_service(line) == m);
  }
  CHECK(message_type(ServiceMessage{Ack{}}) == "Ack");
  CHECK(message_type(ClientMessage{Jog{}}) == "Jog");
  CHECK(message_id(ClientMessage{Stop{9}}) == 9);
}

TEST_CASE("schema violations are rejected") {
  const char* bad[] = {
      "",
      "not json",
      "[1,2]",
      "{}",
      R"({"type": 3})",
      R"({"type": "Launch"})",
      R"({"type": "Pause", "extra": 1})",
      R"({"type": "Pause", "id": 1.5})",
      R"({"type": "Pause", "id": "7"})",
      R"({"type": "Inject"})",
      R"({"type": "Inject", "command": 5})",
      R"({"type": "Jog", "dx": 1, "dy": 2, "dz": 3})",
      R"({"type": "Jog", "dx": "1", "dy": 2, "dz": 3, "speed": 4})",
      R"({"type": "LoadProgram"})",
      R"({"type": "LoadProgram", "gcode": "G28", "recipe": "wave"})",
      R"({"type": "LoadProgram", "gcode": "G28", "params": {"a": "1"}})",
      R"({"type": "LoadProgram", "recipe": "wave", "params": {"a": 1}})",
      R"({"type": "LoadProgram", "recipe": "wave", "params": [1]})",
      R"({"type": "SetBoundsMode", "mode": "loose"})",
      R"({"type": "ProbeCapture", "label": null})",
  };
  for (const char* line : bad) {
    INFO(line);
    CHECK_THROWS_AS(decode_client(line), ParseError);
  }
  CHECK_THROWS_AS(decode_service(R"({"type": "Ack"})"), ParseError);
  CHECK_THROWS_AS(decode_service(R"({"type": "WireEvent", "direction": "up", "line": "", "timestamp": 0})"),
                  ParseError);
  CHECK_THROWS_AS(decode_service(R"({"type": "ProbeStored", "label": "a", "position": [1, 2, 3]})"),
                  ParseError);
  CHECK(decode_client(R"({"type": "Pause", "id": 12})") == ClientMessage{Pause{12}});
  CHECK(decode_client(R"({"id": null, "type": "Stop"})") == ClientMessage{Stop{}});
}

TEST_CASE("a program streams and the wire is mirrored to every client") {
  Rig r;
  r.core.submit(r.writer_id, LoadProgram{1, "G28\nG1 X10 Y10 Z1 F3000\n; note\nG1 X20 E1\n", {}, {}});
  r.run(1);
  auto loaded = r.writer.last<ProgramLoaded>();
  REQUIRE(loaded);
  CHECK(loaded->id == 1);
  CHECK(loaded->lines == 3);
  CHECK(loaded->segments.size() == 2);
  CHECK(r.observer.last<ProgramLoaded>() == loaded);
  CHECK(r.core.program_lines() == std::vector<std::string>{"G28", "G1 X10 Y10 Z1 F3000", "G1 X20 E1"});

  r.core.submit(r.writer_id, StartStream{2});
  REQUIRE(r.run_until([&] {
    auto s = r.writer.last<StateUpdate>();
    return s && s->state.link == host::LinkState::kIdle && s->state.progress.acked == 3;
  }));
  CHECK(r.writer.last<Ack>() == Ack{2, "StartStream"});

  // Every wire record since the clients joined reached them in order; the
  // handshake before that is not replayed.
  const auto log = r.session.wire_log();
  std::vector<host::WireRecord> mirrored;
  for (const auto& w : r.observer.all<WireEvent>()) mirrored.push_back(w.record);
  REQUIRE(mirrored.size() <= log.size());
  CHECK(std::equal(mirrored.begin(), mirrored.end(), log.end() - static_cast<long>(mirrored.size())));
  const auto first_tx = std::find_if(mirrored.begin(), mirrored.end(), [](const host::WireRecord& w) {
    return w.direction == host::Direction::kTx && w.payload != "M114" && w.payload != "M105";
  });
  REQUIRE(first_tx != mirrored.end());
  CHECK(first_tx->payload == "G28");
  CHECK(host::parse_wire_log(host::format_wire_log(log)).size() == log.size());
  CHECK(r.transport.emulator().commanded().x == 20);

  // StateUpdates are not repeated while nothing changes within the interval.
  const auto before = r.writer.all<StateUpdate>().size();
  r.core.tick(0.0);
  r.core.tick(0.0);
  CHECK(r.writer.all<StateUpdate>().size() == before);
  r.core.tick(1.5);
  CHECK(r.writer.all<StateUpdate>().size() > before);
}

TEST_CASE("only the first client may control the printer") {
  Rig r;
  r.core.submit(r.observer_id, Inject{5, "M105"});
  r.core.submit(r.observer_id, StartStream{6});
  r.run(1);
  auto faults = r.observer.all<Fault>();
  REQUIRE(faults.size() == 2);
  CHECK(faults[0] == Fault{5, "Inject: this client is read-only"});
  CHECK(faults[1].message == "StartStream: this client is read-only");
  CHECK(r.writer.all<Fault>().empty());
  CHECK(r.core.is_writer(r.writer_id));
  CHECK_FALSE(r.core.is_writer(r.observer_id));

  r.core.remove_client(r.writer_id);
  CHECK(r.core.is_writer(r.observer_id));
  r.core.submit(r.observer_id, Inject{7, "M105"});
  REQUIRE(r.run_until([&] { return r.observer.last<Ack>().has_value(); }, 10));
  CHECK(r.observer.last<Ack>() == Ack{7, "Inject"});
}

TEST_CASE("requests that cannot run answer with a fault") {
  Rig r;
  r.core.submit(r.writer_id, StartStream{1});
  r.core.submit(r.writer_id, LoadProgram{2, "G1 X500 F600\n", {}, {}});
  r.core.submit(r.writer_id, LoadProgram{3, {}, "teapot", {}});
  r.core.submit(r.writer_id, LoadProgram{4, {}, "handle", {}});
  r.core.submit(r.writer_id, Inject{5, "G1 X1\nG1 X2"});
  r.core.submit(r.writer_id, ProbeCapture{6, ""});
  r.core.submit(r.writer_id, Jog{7, 0, 0, 1, -1});
  r.core.submit(r.writer_id, Resume{8});
  r.run(1);
  const auto f = r.writer.all<Fault>();
  REQUIRE(f.size() == 7);
  CHECK(f[0] == Fault{1, "StartStream: no program loaded"});
  CHECK(f[1].id == 2);
  CHECK(f[1].message.find("1 points outside the work envelope") != std::string::npos);
  CHECK(f[1].message.find("on X at (500.000, 0.000, 0.000)") != std::string::npos);
  CHECK(f[2].message == "LoadProgram: unknown recipe 'teapot'");
  CHECK(f[3].message.find("capture it with ProbeCapture first") != std::string::npos);
  CHECK(f[4].id == 5);
  CHECK(f[5].id == 6);
  CHECK(f[6].id == 7);
  CHECK(r.writer.last<Ack>() == Ack{8, "Resume"});

  // Permissive mode loads the same program and reports the violation.
  r.core.submit(r.writer_id, SetBoundsMode{9, BoundsMode::kPermissive});
  r.core.submit(r.writer_id, LoadProgram{10, "G1 X500 F600\n", {}, {}});
  r.run(1);
  CHECK(r.core.bounds_mode() == BoundsMode::kPermissive);
  auto loaded = r.writer.last<ProgramLoaded>();
  REQUIRE(loaded);
  CHECK(loaded->violations == 1);
}

TEST_CASE("probes feed the handle recipe") {
  Rig r;
  r.core.submit(r.writer_id, Jog{1, 60, 70, 12, 50});
  r.core.submit(r.writer_id, ProbeCapture{2, "p1"});
  r.core.submit(r.writer_id, Jog{3, 30, 5, -4, 50});
  r.core.submit(r.writer_id, ProbeCapture{4, "p2"});
  REQUIRE(r.run_until([&] { return r.writer.all<ProbeStored>().size() == 2; }, 30));
  const auto probes = r.writer.all<ProbeStored>();
  INFO(encode(ServiceMessage{probes[0]}), " ", encode(ServiceMessage{probes[1]}));
  CHECK(probes[0] == ProbeStored{2, "p1", {60, 70, 12, 0}});
  CHECK(probes[1] == ProbeStored{4, "p2", {90, 75, 8, 0}});
  CHECK(r.observer.all<ProbeStored>().size() == 2);
  CHECK(r.writer.all<Ack>().size() == 2);

  // The jog is relative and restores absolute mode.
  const auto log = r.session.wire_log();
  CHECK(std::any_of(log.begin(), log.end(), [](const host::WireRecord& w) {
    return w.payload == "G0 X30.000 Y5.000 Z-4.000 F3000";
  }));

  r.core.submit(r.writer_id, LoadProgram{5, {}, "handle", {{"layers", "3"}}});
  r.run(1);
  auto loaded = r.writer.last<ProgramLoaded>();
  REQUIRE(loaded);
  const auto first = std::find_if(loaded->segments.begin(), loaded->segments.end(),
                                  [](const Segment& s) { return s.kind == SegmentKind::kExtrude; });
  REQUIRE(first != loaded->segments.end());
  CHECK(first->start.xyz() == Point3{60, 70, 12});
  CHECK(first->end.xyz() == Point3{90, 75, 8});
  for (auto it = loaded->segments.begin() + 1; it != loaded->segments.end(); ++it) {
    CHECK(it->start.z >= 8);
    CHECK(it->end.z >= 8);
  }
  // Explicit coordinates win over probes.
  r.core.submit(r.writer_id, LoadProgram{6, {}, "handle", {{"p2x", "100"}}});
  r.run(1);
  loaded = r.writer.last<ProgramLoaded>();
  REQUIRE(loaded->id == 6);
  const auto f2 = std::find_if(loaded->segments.begin(), loaded->segments.end(),
                               [](const Segment& s) { return s.kind == SegmentKind::kExtrude; });
  CHECK(f2->end.x == 100);
}

TEST_CASE("a jog lowers z in the next state update") {
  Rig r;
  r.core.submit(r.writer_id, Jog{1, 50, 50, 5, 50});
  REQUIRE(r.run_until([&] { return r.writer.all<Ack>().size() == 1; }, 30));
  r.run(2);
  const auto before = r.writer.last<StateUpdate>();
  REQUIRE(before);
  REQUIRE(before->state.position);
  const double z0 = before->state.position->z;
  CHECK(z0 == doctest::Approx(5).epsilon(1e-12));

  r.writer.messages.clear();
  r.core.submit(r.writer_id, Jog{2, 0, 0, -0.1, 10});
  REQUIRE(r.run_until([&] { return r.writer.all<Ack>().size() == 1; }, 30));
  const auto log = r.session.wire_log();
  std::vector<std::string> tx;
  for (const auto& w : log) {
    if (w.direction == host::Direction::kTx && w.payload != "M105" && w.payload != "M114") {
      tx.push_back(w.payload);
    }
  }
  REQUIRE(tx.size() >= 3);
  CHECK(tx[tx.size() - 3] == "G91");
  CHECK(tx[tx.size() - 2] == "G0 X0.000 Y0.000 Z-0.100 F600");
  CHECK(tx[tx.size() - 1] == "G90");
  // The first state published once the jog completes already shows it.
  const auto ack_at = std::find_if(r.writer.messages.begin(), r.writer.messages.end(),
                                   [](const ServiceMessage& m) { return std::holds_alternative<Ack>(m); });
  r.run(3);
  const auto next = std::find_if(ack_at, r.writer.messages.end(), [](const ServiceMessage& m) {
    return std::holds_alternative<StateUpdate>(m);
  });
  REQUIRE(next != r.writer.messages.end());
  const auto& st = std::get<StateUpdate>(*next).state;
  REQUIRE(st.position);
  CHECK(st.position->z == doctest::Approx(z0 - 0.1).epsilon(1e-12));
  CHECK(st.position->x == doctest::Approx(50).epsilon(1e-12));
}

TEST_CASE("stop sends the safety tail through the core") {
  Rig r;
  std::mt19937_64 rng(43);
  const auto prog = testing::random_motion_program(rng, r.profile, 100);
  r.core.submit(r.writer_id, LoadProgram{1, gcode::serialize_program(r.profile, prog), {}, {}});
  r.core.submit(r.writer_id, StartStream{2});
  r.run(20);
  r.core.submit(r.writer_id, Stop{3});
  r.core.submit(r.writer_id, Pause{4});
  REQUIRE(r.run_until([&] { return !r.session.busy(); }, 60));
  CHECK(r.writer.all<Ack>().back() == Ack{4, "Pause"});
  const auto log = r.session.wire_log();
  std::vector<std::string> tx;
  for (const auto& w : log) {
    if (w.direction == host::Direction::kTx && w.payload != "M114" && w.payload != "M105") {
      tx.push_back(w.payload);
    }
  }
  REQUIRE(tx.size() >= 5);
  CHECK(std::vector<std::string>(tx.end() - 5, tx.end()) ==
        std::vector<std::string>{"M104 S0", "M140 S0", "G91", "G0 Z5.000 F600", "G90"});
  CHECK(r.session.state() == host::LinkState::kIdle);
}

TEST_CASE("device loss is reported once") {
  Rig r;
  r.core.submit(r.writer_id, LoadProgram{1, {}, "lissajous", {}});
  r.core.submit(r.writer_id, StartStream{2});
  r.run(10);
  r.transport.disconnect_device();
  r.run(5);
  const auto faults = r.observer.all<Fault>();
  REQUIRE(faults.size() == 1);
  CHECK(faults[0].message.find("device lost") == 0);
  CHECK(r.session.state() == host::LinkState::kDisconnected);
  r.core.submit(r.writer_id, Inject{3, "M105"});
  r.run(1);
  CHECK(r.writer.last<Fault>()->id == 3);
  const auto last = r.writer.last<StateUpdate>();
  REQUIRE(last);
  CHECK(last->state.link == host::LinkState::kDisconnected);
}

TEST_CASE("the socket server speaks JSON lines") {
  Rig r(false);
  ServiceServer server(r.core, 0);
  const auto port = server.start();
  REQUIRE(port != 0);
  std::thread loop([&] { server.run(); });
  struct Joiner {
    ServiceServer& s;
    std::thread& t;
    ~Joiner() {
      s.stop();
      if (t.joinable()) t.join();
    }
  } joiner{server, loop};

  {
    testing::LineClient a(port);
    // The first connection becomes the writer once it is registered.
    auto is_state = [](const ServiceMessage& m) { return std::holds_alternative<StateUpdate>(m); };
    REQUIRE(a.wait_for(is_state, 10));
    testing::LineClient b(port);
    REQUIRE(b.wait_for(is_state, 10));

    a.send_line("this is not json");
    auto f = a.wait_for([](const ServiceMessage& m) { return std::holds_alternative<Fault>(m); }, 10);
    REQUIRE(f);
    CHECK(std::get<Fault>(*f).message.find("message is not valid JSON") == 0);
    CHECK_FALSE(std::get<Fault>(*f).id.has_value());

    a.send(LoadProgram{1, "G1 X10 Y10 Z1 F3000\nG1 X20 E1\n", {}, {}});
    auto loaded = a.wait_for(
        [](const ServiceMessage& m) { return std::holds_alternative<ProgramLoaded>(m); }, 10);
    REQUIRE(loaded);
    CHECK(std::get<ProgramLoaded>(*loaded).lines == 2);

    b.send(StartStream{9});
    auto denied =
        b.wait_for([](const ServiceMessage& m) { return std::holds_alternative<Fault>(m); }, 10);
    REQUIRE(denied);
    CHECK(std::get<Fault>(*denied) == Fault{9, "StartStream: this client is read-only"});

    std::vector<std::string> wire;
    a.send(StartStream{2});
    auto done = a.wait_for(
        [](const ServiceMessage& m) {
          const auto* s = std::get_if<StateUpdate>(&m);
          return s && s->state.progress.acked == 2 && s->state.link == host::LinkState::kIdle;
        },
        30,
        [&](const ServiceMessage& m) {
          if (const auto* w = std::get_if<WireEvent>(&m)) {
            if (w->record.direction == host::Direction::kTx) wire.push_back(w->record.payload);
          }
        });
    REQUIRE(done);
    CHECK(std::find(wire.begin(), wire.end(), "G1 X20 E1") != wire.end());
  }
}
