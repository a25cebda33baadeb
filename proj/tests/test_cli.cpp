#include <doctest.h>

#include <sys/wait.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "client.hpp"
#include "fab/cli.hpp"
#include "fab/command_list.hpp"
#include "fab/errors.hpp"
#include "fab/gcode.hpp"
#include "fab/host.hpp"
#include "fab/recipes.hpp"
#include "support.hpp"

using namespace fab;
using namespace fab::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("fab-cli-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path write(const std::string& name, const std::string& text) const {
    const auto p = path / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }
};

EnvLookup env_of(std::map<std::string, std::string> vars) {
  return [vars = std::move(vars)](const char* name) -> const char* {
    auto it = vars.find(name);
    return it == vars.end() ? nullptr : it->second.c_str();
  };
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

std::string gcode_of(const Toolpath& tp) { return gcode::serialize_program(tp); }

struct Run {
  int code = -1;
  std::string out;
};

// Runs the fab executable through the shell with stderr folded into stdout.
Run run_fab(const std::string& args) {
  const std::string cmd = std::string("'") + FAB_CLI_PATH + "' " + args + " 2>&1";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  while (auto n = std::fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace

TEST_CASE("config file, environment and precedence") {
  const Config c = parse_config(
      "# printer\ndevice = /dev/ttyUSB0\nbaud=250000  # fast\nprofile = mini.cfg\n"
      "bounds_mode = permissive\nport = 9000\n\n");
  CHECK(c.device == "/dev/ttyUSB0");
  CHECK(c.baud == 250000);
  CHECK(c.profile == "mini.cfg");
  CHECK(c.bounds_mode == BoundsMode::kPermissive);
  CHECK(c.port == 9000);
  CHECK(parse_config("") == Config{});
  CHECK_THROWS_AS(parse_config("colour = red\n"), ParseError);
  CHECK_THROWS_AS(parse_config("baud = fast\n"), ParseError);
  CHECK_THROWS_AS(parse_config("baud = -1\n"), ParseError);
  CHECK_THROWS_AS(parse_config("port = 70000\n"), ParseError);
  CHECK_THROWS_AS(parse_config("bounds_mode = loose\n"), ParseError);
  CHECK_THROWS_AS(parse_config("device\n"), ParseError);

  const Config e = apply_env(c, env_of({{"FAB_DEVICE", "virtual"}, {"FAB_PORT", "0"}}));
  CHECK(e.device == "virtual");
  CHECK(e.port == 0);
  CHECK(e.baud == 250000);
  CHECK_THROWS_AS(apply_env(c, env_of({{"FAB_BAUD", "x"}})), ParseError);

  TempDir dir;
  const auto explicit_file = dir.write("a.conf", "baud = 9600\n");
  const auto env_file = dir.write("b.conf", "baud = 19200\nport = 1234\n");
  fs::create_directories(dir.path / ".config" / "fab");
  dir.write(".config/fab/config", "baud = 38400\ndevice = /dev/ttyACM0\n");
  const std::string home = dir.path.string();

  auto cfg = load_config(explicit_file, env_of({{"FAB_CONFIG", env_file.string()}, {"HOME", home}}));
  CHECK(cfg.baud == 9600);
  cfg = load_config(std::nullopt, env_of({{"FAB_CONFIG", env_file.string()}, {"HOME", home}}));
  CHECK(cfg.baud == 19200);
  CHECK(cfg.port == 1234);
  cfg = load_config(std::nullopt, env_of({{"HOME", home}}));
  CHECK(cfg.baud == 38400);
  CHECK(cfg.device == "/dev/ttyACM0");
  cfg = load_config(std::nullopt, env_of({{"HOME", home}, {"FAB_BAUD", "57600"}}));
  CHECK(cfg.baud == 57600);
  cfg = load_config(std::nullopt, env_of({{"HOME", (dir.path / "none").string()}}));
  CHECK(cfg == Config{});
  CHECK_THROWS_AS(load_config(dir.path / "missing.conf", env_of({})), Error);
}

TEST_CASE("program loading picks the format from the extension") {
  CHECK(format_for("part.cmds") == ProgramFormat::kCommandList);
  CHECK(format_for("part.gcode") == ProgramFormat::kGcode);
  CHECK(format_for("part") == ProgramFormat::kGcode);
  const auto p = ender3();
  const auto tp = recipes::dot_bridge(p);
  const auto from_cmds = load_program(to_command_list(tp.commands()), ProgramFormat::kCommandList, p);
  const auto from_gcode = load_program(gcode_of(tp), ProgramFormat::kGcode, p);
  CHECK(from_cmds.commands == tp.commands());
  CHECK(from_cmds.segments == tp.segments());
  CHECK(from_cmds.lines == from_gcode.lines);
  CHECK(from_gcode.segments.size() == tp.segments().size());
  CHECK_THROWS_AS(load_program("fly 1 2 3\n", ProgramFormat::kCommandList, p), ParseError);
  CHECK_THROWS_AS(load_program("move_extrude 1 2 3 speed -1\n", ProgramFormat::kCommandList, p),
                  Error);
  CHECK_THROWS_AS(read_file("/nonexistent/part.gcode"), ArgumentError);
}

TEST_CASE("svg preview") {
  const auto p = ender3();
  const auto tp = recipes::lissajous(p);
  RenderStats stats;
  stats.toolpath = tp.stats();
  const auto svg = render_svg(p, tp.segments(), {}, stats);
  CHECK(svg.find("<svg xmlns") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  // 200 extrusions in each of the two views.
  CHECK(count(svg, "class=\"extrude\"") == 400);
  CHECK(count(svg, "class=\"travel\"") == 2);
  CHECK(count(svg, "class=\"violation\"") == 0);
  CHECK(svg.find("id=\"top\"") != std::string::npos);
  CHECK(svg.find("id=\"side\"") != std::string::npos);

  const auto empty = render_svg(p, {}, {}, RenderStats{});
  CHECK(empty.find("<svg xmlns") != std::string::npos);
  CHECK(count(empty, "<line") == 0);
  CHECK(empty.find("segments: 0 ") != std::string::npos);

  Toolpath loose(p, BoundsMode::kPermissive);
  loose.move(10, 10, 1).move_extrude(250, 10, 1);
  const auto v = bounds_check(loose);
  RenderStats ws;
  ws.warnings = v.size();
  const auto warn = render_svg(p, loose.segments(), v, ws);
  CHECK(count(warn, "class=\"violation\"") == 2);
  CHECK(warn.find("warnings: 1") != std::string::npos);
}

TEST_CASE("render, simulate and recipe verbs") {
  TempDir dir;
  Config cfg;
  std::ostringstream out, err;
  const auto liss = dir.write("liss.gcode", gcode_of(recipes::lissajous(ender3())));

  CHECK(run_render({liss, dir.path / "liss.svg"}, cfg, out, err) == kExitOk);
  CHECK(out.str().find("201 segments, 0 warnings") != std::string::npos);
  CHECK(fs::file_size(dir.path / "liss.svg") > 1000);
  CHECK(run_render({dir.path / "missing.gcode", dir.path / "x.svg"}, cfg, out, err) == kExitUsage);
  CHECK(run_render({liss, dir.path / "no" / "dir" / "x.svg"}, cfg, out, err) == kExitUsage);
  const auto empty = dir.write("empty.gcode", "");
  CHECK(run_render({empty, dir.path / "empty.svg"}, cfg, out, err) == kExitOk);
  const auto bad_cmds = dir.write("bad.cmds", "teleport 1 2 3\n");
  CHECK(run_render({bad_cmds, dir.path / "bad.svg"}, cfg, out, err) == kExitInvalidProgram);

  out.str("");
  SimulateOptions so;
  so.input = liss;
  so.trace = dir.path / "trace.jsonl";
  CHECK(run_simulate(so, cfg, out, err) == kExitOk);
  CHECK(out.str().find("errors 0") != std::string::npos);
  CHECK(out.str().find("violations 0") != std::string::npos);
  CHECK(count(read_file(dir.path / "trace.jsonl"), "\n") == 201);

  // Travel only: nothing is extruded.
  out.str("");
  const auto tour = dir.write("tour.gcode", "G28\nG0 X10 Y10 Z5 F3000\nG0 X200 Y150\nG0 Z20\n");
  so = {};
  so.input = tour;
  CHECK(run_simulate(so, cfg, out, err) == kExitOk);
  CHECK(out.str().find("total E 0.00000") != std::string::npos);

  // Out of bounds: clamping finishes, fault mode reports errors.
  const auto oob = dir.write("oob.gcode", "G1 X10 Y10 Z1 F3000\nG1 X300 E5\nG1 X20\n");
  so.input = oob;
  so.envelope = printer::EnvelopeMode::kClamp;
  CHECK(run_simulate(so, cfg, out, err) == kExitOk);
  so.envelope = printer::EnvelopeMode::kFault;
  CHECK(run_simulate(so, cfg, out, err) == kExitStreamFault);

  out.str("");
  RecipeOptions ro;
  CHECK(run_recipe(ro, cfg, out, err) == kExitOk);
  for (const auto& r : recipes::recipe_catalog()) CHECK(out.str().find(r.name + ": ") != std::string::npos);
  out.str("");
  ro.name = "wave";
  add_param(ro.params, "a=2000");
  CHECK(run_recipe(ro, cfg, out, err) == kExitOk);
  CHECK(out.str().rfind("M204 P2000\nM201 X2000 Y2000 Z2000\n", 0) == 0);
  ro.format = ProgramFormat::kCommandList;
  ro.output = dir.path / "wave.cmds";
  CHECK(run_recipe(ro, cfg, out, err) == kExitOk);
  CHECK(read_file(dir.path / "wave.cmds").rfind("set_starting_acceleration 2000", 0) == 0);
  ro.params = {{"A", "500"}};
  CHECK(run_recipe(ro, cfg, out, err) == kExitInvalidProgram);
  ro.params = {{"bogus", "1"}};
  CHECK(run_recipe(ro, cfg, out, err) == kExitUsage);
  CHECK_THROWS_AS(add_param(ro.params, "novalue"), ArgumentError);
  CHECK_THROWS_AS(add_param(ro.params, "=3"), ArgumentError);

  Config bad_profile;
  bad_profile.profile = "/nonexistent/profile.cfg";
  CHECK(run_render({liss, dir.path / "y.svg"}, bad_profile, out, err) == kExitUsage);
}

TEST_CASE("stream verb exit codes") {
  TempDir dir;
  Config cfg;
  std::ostringstream out, err;
  std::mt19937_64 rng(51);
  const auto p = ender3();
  const auto prog = testing::random_motion_program(rng, p, 1000);
  const auto file = dir.write("big.gcode", gcode::serialize_program(p, prog));

  StreamOptions so;
  so.input = file;
  so.wire_log = dir.path / "wire.log";
  CHECK(run_stream(so, cfg, out, err) == kExitOk);
  CHECK(out.str().find("acked=1000 errored=0 timed_out=0 total=1000") != std::string::npos);
  const auto log = host::parse_wire_log(read_file(dir.path / "wire.log"));
  CHECK(host::check_flow_window(log).violations == 0);

  out.str("");
  so.checksum = true;
  CHECK(run_stream(so, cfg, out, err) == kExitOk);
  CHECK(out.str().find("acked=1000") != std::string::npos);

  // Interrupted before the first line completes: stop policy, then exit 3.
  std::atomic<bool> stop{true};
  so.checksum = false;
  so.interrupt = &stop;
  CHECK(run_stream(so, cfg, out, err) == kExitStreamFault);
  const auto tail = read_file(dir.path / "wire.log");
  CHECK(tail.find("\ttx\tM104 S0\n") != std::string::npos);
  CHECK(tail.find("\ttx\tM140 S0\n") != std::string::npos);
  CHECK(tail.find("\ttx\tG0 Z5.000 F600\n") != std::string::npos);
  so.interrupt = nullptr;

  Config serial = cfg;
  serial.device = "/nonexistent/ttyUSB9";
  err.str("");
  CHECK(run_stream(so, serial, out, err) == kExitConnect);
  CHECK(err.str().find("connect failed") == 0);

  const auto oob = dir.write("oob.gcode", "G1 X300 F600\n");
  so.input = oob;
  CHECK(run_stream(so, cfg, out, err) == kExitInvalidProgram);
  Config loose = cfg;
  loose.bounds_mode = BoundsMode::kPermissive;
  CHECK(run_stream(so, loose, out, err) == kExitOk);

  so.input = dir.path / "missing.gcode";
  CHECK(run_stream(so, cfg, out, err) == kExitUsage);

  // Pause directives wait for the operator callback.
  int pauses = 0;
  so.input = dir.write("pause.gcode", "G1 X5 F600\n;@pause swap\nG1 X10\n");
  so.on_pause = [&] { ++pauses; };
  CHECK(run_stream(so, cfg, out, err) == kExitOk);
  CHECK(pauses == 1);
}

TEST_CASE("stream over a serial device") {
  printer::EmulatorConfig ec;
  printer::PtyServer pty(ec);
  pty.start();
  TempDir dir;
  Config cfg;
  cfg.device = pty.device_path();
  std::ostringstream out, err;
  StreamOptions so;
  so.input = dir.write("short.gcode", "G28\nG1 X5 Y5 Z1 F6000\nG1 X10 E0.5\nM105\n");
  so.checksum = true;
  CHECK(run_stream(so, cfg, out, err) == kExitOk);
  CHECK(out.str().find("acked=4") != std::string::npos);
  pty.stop();

  // A printer that rejects a motion line ends the stream with a fault.
  ec.fault_on_motion_line = 2;
  printer::PtyServer faulty(ec);
  faulty.start();
  cfg.device = faulty.device_path();
  err.str("");
  CHECK(run_stream(so, cfg, out, err) == kExitStreamFault);
  CHECK(err.str().find("stream fault") != std::string::npos);
  faulty.stop();
}

TEST_CASE("console sends lines and prints replies") {
  Config cfg;
  std::istringstream in("M105\n\nG1 X5 F600\nG1 X=3\nM114\nquit\nM105\n");
  std::ostringstream out, err;
  CHECK(run_console(in, cfg, out, err) == kExitOk);
  CHECK(out.str().find("> M105\n< ok T:") != std::string::npos);
  CHECK(out.str().find("> M114\n< X:5.00") != std::string::npos);
  CHECK(err.str().find("error: ") == 0);
  CHECK(count(out.str(), "> M105") == 1);

  Config serial;
  serial.device = "/nonexistent/tty";
  std::istringstream none("");
  CHECK(run_console(none, serial, out, err) == kExitConnect);
}

TEST_CASE("serve verb answers on a socket") {
  Config cfg;
  cfg.port = 0;
  std::atomic<bool> stop{false};
  std::atomic<int> port{0};
  std::ostringstream out, err;
  int rc = -1;
  std::thread server([&] {
    ServeOptions so;
    so.interrupt = &stop;
    so.on_listening = [&](std::uint16_t p) { port = p; };
    rc = run_serve(so, cfg, out, err);
  });
  for (int i = 0; i < 500 && port == 0; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  REQUIRE(port != 0);
  {
    testing::LineClient c(static_cast<std::uint16_t>(port.load()));
    c.send(service::Inject{1, "M105"});
    auto ack = c.wait_for(
        [](const service::ServiceMessage& m) { return std::holds_alternative<service::Ack>(m); }, 10);
    REQUIRE(ack);
    CHECK(std::get<service::Ack>(*ack) == service::Ack{1, "Inject"});
  }
  stop = true;
  server.join();
  CHECK(rc == kExitOk);
  CHECK(out.str().find("listening on 127.0.0.1:") == 0);
}

TEST_CASE("the fab executable") {
  TempDir dir;
  auto r = run_fab("--help");
  CHECK(r.code == 0);
  CHECK(r.out.find("render") != std::string::npos);
  CHECK(run_fab("").code == kExitUsage);
  CHECK(run_fab("frobnicate").code == kExitUsage);
  CHECK(run_fab("render").code == kExitUsage);

  r = run_fab("recipe");
  CHECK(r.code == 0);
  CHECK(r.out.find("velocity-cube: ") != std::string::npos);

  const auto gcode = (dir.path / "cube.gcode").string();
  r = run_fab("recipe velocity-cube --param cubeLen=10 --param checkerLen=2.5 -o '" + gcode + "'");
  CHECK(r.code == 0);
  r = run_fab("render '" + gcode + "' -o '" + (dir.path / "cube.svg").string() + "'");
  CHECK(r.code == 0);
  CHECK(r.out.find("0 warnings") != std::string::npos);
  r = run_fab("simulate '" + gcode + "'");
  CHECK(r.code == 0);
  CHECK(r.out.find("errors 0") != std::string::npos);
  r = run_fab("stream --device virtual '" + gcode + "'");
  CHECK(r.code == 0);
  r = run_fab("stream --device /nonexistent/ttyUSB7 '" + gcode + "'");
  CHECK(r.code == kExitConnect);
  CHECK(r.out.find("connect failed") != std::string::npos);
  r = run_fab("--bounds-mode sideways recipe wave");
  CHECK(r.code == kExitUsage);
  r = run_fab("recipe wave --param A=400");
  CHECK(r.code == kExitInvalidProgram);

  const auto cfg = dir.write("fab.conf", "device = /nonexistent/ttyS9\n");
  r = run_fab("--config '" + cfg.string() + "' stream '" + gcode + "'");
  CHECK(r.code == kExitConnect);
  r = run_fab("--config '" + cfg.string() + "' stream --device virtual '" + gcode + "'");
  CHECK(r.code == 0);
  r = run_fab("--config '" + (dir.path / "missing.conf").string() + "' recipe");
  CHECK(r.code == kExitUsage);
}
