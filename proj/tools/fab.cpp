#include <csignal>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "fab/cli.hpp"
#include "fab/errors.hpp"

namespace {

std::atomic<bool> g_interrupt{false};

void on_signal(int) { g_interrupt = true; }

}  // namespace

int main(int argc, char** argv) {
  using namespace fab;
  CLI::App app{"Toolpath authoring, preview, simulation and printer streaming"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::optional<std::string> profile, device, bounds_mode;
  std::optional<int> baud;
  std::optional<int> port;
  app.add_option("--config", config_path, "config file (key = value)");
  app.add_option("--profile", profile, "built-in profile name or profile file");
  app.add_option("--bounds-mode", bounds_mode, "strict or permissive");

  auto add_device = [&](CLI::App* sub) {
    sub->add_option("--device", device, "serial device path or 'virtual'");
    sub->add_option("--baud", baud, "serial baud rate");
  };

  cli::RenderOptions render;
  std::string render_in, render_out;
  auto* r = app.add_subcommand("render", "write an SVG preview of a program");
  r->add_option("input", render_in, "G-code or .cmds program")->required();
  r->add_option("-o,--output", render_out, "SVG output path")->required();

  cli::StreamOptions stream;
  std::string stream_in;
  std::optional<std::string> wire_log;
  auto* s = app.add_subcommand("stream", "send a program to a printer");
  s->add_option("input", stream_in, "G-code or .cmds program")->required();
  add_device(s);
  s->add_flag("--checksum", stream.checksum, "frame lines with numbers and checksums");
  s->add_option("--timeout", stream.timeout, "acknowledgment timeout, s");
  s->add_option("--wire-log", wire_log, "write the session wire log here");
  bool no_wait = false;
  s->add_flag("--no-wait", no_wait, "resume after pause directives without asking");

  cli::SimulateOptions sim;
  std::string sim_in, sim_mode = "clamp";
  std::optional<std::string> sim_trace;
  auto* m = app.add_subcommand("simulate", "run a program on the virtual printer");
  m->add_option("input", sim_in, "G-code or .cmds program")->required();
  m->add_option("--mode", sim_mode, "envelope handling: clamp or fault");
  m->add_option("--trace", sim_trace, "write the deposition trace (JSON lines)");

  cli::RecipeOptions recipe;
  std::vector<std::string> params;
  std::string recipe_format = "gcode";
  std::optional<std::string> recipe_out;
  auto* g = app.add_subcommand("recipe", "generate a program from a recipe; no name lists them");
  g->add_option("name", recipe.name, "recipe name");
  g->add_option("-p,--param", params, "key=value, repeatable");
  g->add_option("--format", recipe_format, "gcode or commands");
  g->add_option("-o,--output", recipe_out, "output path (default stdout)");

  auto* v = app.add_subcommand("serve", "run the local control service");
  add_device(v);
  v->add_option("--port", port, "TCP port on 127.0.0.1 (0 picks one)");

  auto* c = app.add_subcommand("console", "interactive G-code console");
  add_device(c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? cli::kExitOk : cli::kExitUsage;
  }

  cli::Config config;
  try {
    config = cli::load_config(config_path ? std::optional<std::filesystem::path>(*config_path)
                                          : std::nullopt,
                              [](const char* k) { return std::getenv(k); });
    if (profile) config.profile = *profile;
    if (device) config.device = *device;
    if (baud) config.baud = *baud;
    if (port) config.port = static_cast<std::uint16_t>(*port);
    if (bounds_mode) {
      const auto bm = parse_bounds_mode(*bounds_mode);
      if (!bm) throw ArgumentError("--bounds-mode must be strict or permissive");
      config.bounds_mode = *bm;
    }
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return cli::kExitUsage;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  if (*r) {
    render.input = render_in;
    render.output = render_out;
    return cli::run_render(render, config, std::cout, std::cerr);
  }
  if (*s) {
    stream.input = stream_in;
    if (wire_log) stream.wire_log = *wire_log;
    stream.interrupt = &g_interrupt;
    if (!no_wait) {
      stream.on_pause = [] {
        std::cout << "press Enter to continue" << std::endl;
        std::string line;
        std::getline(std::cin, line);
      };
    }
    return cli::run_stream(stream, config, std::cout, std::cerr);
  }
  if (*m) {
    const auto mode = printer::parse_envelope_mode(sim_mode);
    if (!mode) {
      std::cerr << "--mode must be clamp or fault\n";
      return cli::kExitUsage;
    }
    sim.input = sim_in;
    sim.envelope = *mode;
    if (sim_trace) sim.trace = *sim_trace;
    return cli::run_simulate(sim, config, std::cout, std::cerr);
  }
  if (*g) {
    try {
      for (const auto& p : params) cli::add_param(recipe.params, p);
    } catch (const Error& e) {
      std::cerr << e.what() << "\n";
      return cli::kExitUsage;
    }
    if (recipe_format == "commands") {
      recipe.format = cli::ProgramFormat::kCommandList;
    } else if (recipe_format != "gcode") {
      std::cerr << "--format must be gcode or commands\n";
      return cli::kExitUsage;
    }
    if (recipe_out) recipe.output = *recipe_out;
    return cli::run_recipe(recipe, config, std::cout, std::cerr);
  }
  if (*v) {
    cli::ServeOptions serve;
    serve.interrupt = &g_interrupt;
    return cli::run_serve(serve, config, std::cout, std::cerr);
  }
  return cli::run_console(std::cin, config, std::cout, std::cerr);
}
