#include <fstream>
#include <iostream>
#include <memory>

#include "fab/cli.hpp"
#include "fab/command_list.hpp"
#include "fab/errors.hpp"
#include "fab/gcode.hpp"
#include "fab/host.hpp"
#include "fab/service.hpp"
#include "fab/text.hpp"

namespace fab::cli {

namespace {

std::vector<std::string> flatten(std::vector<std::vector<std::string>> groups) {
  std::vector<std::string> out;
  for (auto& g : groups) {
    for (auto& l : g) out.push_back(std::move(l));
  }
  return out;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + "\n";
  return s;
}

void write_file(const std::filesystem::path& path, std::string_view data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot write " + path.string());
  f << data;
  if (!f) throw ArgumentError("cannot write " + path.string());
}

std::optional<MachineProfile> profile_or_report(const Config& config, std::ostream& err) {
  try {
    return resolve_profile(config.profile);
  } catch (const Error& e) {
    err << "profile: " << e.what() << "\n";
    return std::nullopt;
  }
}

// Reads and parses a program; reports and returns nullopt on failure with
// the exit code in `code`.
std::optional<Program> program_or_report(const std::filesystem::path& input,
                                         const MachineProfile& profile, std::ostream& err,
                                         int& code) {
  std::string text;
  try {
    text = read_file(input);
  } catch (const Error& e) {
    err << e.what() << "\n";
    code = kExitUsage;
    return std::nullopt;
  }
  try {
    return load_program(text, format_for(input), profile);
  } catch (const Error& e) {
    err << input.string() << ": " << e.what() << "\n";
    code = kExitInvalidProgram;
    return std::nullopt;
  }
}

std::unique_ptr<host::Transport> make_transport(const Config& config,
                                                const MachineProfile& profile, double pacing) {
  if (config.device == "virtual") {
    printer::EmulatorConfig ec;
    ec.profile = profile;
    return std::make_unique<host::LoopbackTransport>(ec, host::AckDelay::none(), pacing);
  }
  return std::make_unique<host::SerialTransport>(config.device, config.baud);
}

void print_diagnostics(const std::vector<Diagnostic>& diags, std::ostream& err) {
  for (const auto& d : diags) err << "line " << d.index << ": " << d.message << "\n";
}

std::string format_position(const Position& p) {
  return "X" + text::format_fixed(p.x, 3) + " Y" + text::format_fixed(p.y, 3) + " Z" +
         text::format_fixed(p.z, 3) + " E" + text::format_fixed(p.e, 5);
}

}  // namespace

ProgramFormat format_for(const std::filesystem::path& path) {
  return path.extension() == ".cmds" ? ProgramFormat::kCommandList : ProgramFormat::kGcode;
}

Program load_program(std::string_view text, ProgramFormat format, const MachineProfile& profile) {
  Program p;
  if (format == ProgramFormat::kCommandList) {
    p.commands = parse_command_list(text);
    for (const auto& c : p.commands) validate(c);
    auto d = derive_segments(profile, p.commands);
    p.segments = std::move(d.segments);
    p.diagnostics = std::move(d.diagnostics);
    p.lines = flatten(gcode::serialize_commands(profile, p.commands));
  } else {
    auto parsed = gcode::parse_program(text, profile);
    p.commands = std::move(parsed.commands);
    p.segments = std::move(parsed.segments);
    p.diagnostics = std::move(parsed.diagnostics);
    p.lines = std::move(parsed.lines);
  }
  return p;
}

int run_render(const RenderOptions& opts, const Config& config, std::ostream& out,
               std::ostream& err) {
  const auto profile = profile_or_report(config, err);
  if (!profile) return kExitUsage;
  int code = kExitOk;
  const auto program = program_or_report(opts.input, *profile, err, code);
  if (!program) return code;
  print_diagnostics(program->diagnostics, err);

  const auto violations = bounds_check(*profile, program->segments);
  RenderStats stats;
  stats.toolpath = compute_stats(program->segments);
  stats.warnings = violations.size();
  printer::EmulatorConfig ec;
  ec.profile = *profile;
  stats.duration = printer::run_program(ec, join_lines(program->lines)).total_duration;
  try {
    write_file(opts.output, render_svg(*profile, program->segments, violations, stats));
  } catch (const Error& e) {
    err << e.what() << "\n";
    return kExitUsage;
  }
  out << "wrote " << opts.output.string() << ": " << program->segments.size() << " segments, "
      << stats.warnings << " warnings, duration " << text::format_fixed(stats.duration, 2)
      << " s\n";
  return kExitOk;
}

int run_stream(const StreamOptions& opts, const Config& config, std::ostream& out,
               std::ostream& err) {
  const auto profile = profile_or_report(config, err);
  if (!profile) return kExitUsage;
  int code = kExitOk;
  const auto program = program_or_report(opts.input, *profile, err, code);
  if (!program) return code;
  print_diagnostics(program->diagnostics, err);
  const auto violations = bounds_check(*profile, program->segments);
  if (!violations.empty()) {
    err << violations.size() << " points outside the work envelope\n";
    if (config.bounds_mode == BoundsMode::kStrict) return kExitInvalidProgram;
  }

  std::unique_ptr<host::Transport> transport;
  host::SessionOptions so;
  so.checksum = opts.checksum;
  so.command_timeout = opts.timeout;
  try {
    transport = make_transport(config, *profile, 0.0);
  } catch (const Error& e) {
    err << "connect failed: " << e.what() << "\n";
    return kExitConnect;
  }
  host::Session session(*transport, *profile, so);
  try {
    session.connect();
  } catch (const Error& e) {
    err << "connect failed: " << e.what() << "\n";
    return kExitConnect;
  }

  auto finish = [&](int rc) {
    if (opts.wire_log) {
      try {
        write_file(*opts.wire_log, host::format_wire_log(session.wire_log()));
      } catch (const Error& e) {
        err << e.what() << "\n";
      }
    }
    session.disconnect();
    return rc;
  };

  try {
    session.start_lines(program->lines);
    std::size_t reported = 0;
    bool stopped = false;
    for (;;) {
      const auto st = session.state();
      if (st != host::LinkState::kStreaming && st != host::LinkState::kPaused) break;
      if (opts.interrupt && *opts.interrupt) {
        session.stop();
        session.drain(60.0);
        stopped = true;
        break;
      }
      if (st == host::LinkState::kPaused) {
        out << "paused at an operator directive\n" << std::flush;
        if (opts.on_pause) opts.on_pause();
        session.resume();
      }
      session.pump(0.25);
      const auto p = session.snapshot().progress;
      if (p.total > 0 && (p.acked * 10 / p.total > reported || p.acked == p.total)) {
        reported = p.acked * 10 / p.total;
        out << "progress " << p.acked << "/" << p.total << "\n" << std::flush;
        if (p.acked == p.total) reported = 11;
      }
    }
    const auto snap = session.snapshot();
    const auto& p = snap.progress;
    out << "sent=" << p.sent << " acked=" << p.acked << " errored=" << p.errored
        << " timed_out=" << p.timed_out << " total=" << p.total << "\n";
    if (stopped) {
      err << "interrupted: heaters off and head lifted\n";
      return finish(kExitStreamFault);
    }
    if (snap.link == host::LinkState::kError || p.acked != p.total) {
      err << "stream fault: " << snap.last_error.value_or("incomplete") << "\n";
      return finish(kExitStreamFault);
    }
    session.drain(5.0);
  } catch (const Error& e) {
    err << "stream fault: " << e.what() << "\n";
    return finish(kExitStreamFault);
  }
  return finish(kExitOk);
}

int run_simulate(const SimulateOptions& opts, const Config& config, std::ostream& out,
                 std::ostream& err) {
  const auto profile = profile_or_report(config, err);
  if (!profile) return kExitUsage;
  int code = kExitOk;
  const auto program = program_or_report(opts.input, *profile, err, code);
  if (!program) return code;
  print_diagnostics(program->diagnostics, err);

  printer::EmulatorConfig ec;
  ec.profile = *profile;
  ec.envelope_mode = opts.envelope;
  const auto result = printer::run_program(ec, join_lines(program->lines));
  double total_e = 0.0;
  for (const auto& r : result.trace) total_e += r.delta_e;
  const auto violations = bounds_check(*profile, program->segments);

  out << "duration " << text::format_fixed(result.total_duration, 6) << " s\n";
  out << "final position " << format_position(result.final_position) << "\n";
  out << "total E " << text::format_fixed(total_e, 5) << "\n";
  out << "moves " << result.trace.size() << "\n";
  out << "violations " << violations.size() << "\n";
  out << "errors " << result.errors.size() << "\n";
  for (const auto& e : result.errors) err << e << "\n";
  if (opts.trace) {
    try {
      write_file(*opts.trace, printer::trace_to_jsonl(result.trace));
    } catch (const Error& e) {
      err << e.what() << "\n";
      return kExitUsage;
    }
  }
  return result.errors.empty() ? kExitOk : kExitStreamFault;
}

void add_param(recipes::ParamMap& params, std::string_view key_value) {
  const auto eq = key_value.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ArgumentError("parameter must be key=value, got '" + std::string(key_value) + "'");
  }
  params[std::string(key_value.substr(0, eq))] = std::string(key_value.substr(eq + 1));
}

int run_recipe(const RecipeOptions& opts, const Config& config, std::ostream& out,
               std::ostream& err) {
  if (opts.name.empty()) {
    for (const auto& r : recipes::recipe_catalog()) {
      out << r.name << ": " << r.summary << "\n";
      for (const auto& p : r.params) {
        out << "  " << p.name << " (default " << (p.default_value.empty() ? "required" : p.default_value)
            << "): " << p.doc << "\n";
      }
    }
    return kExitOk;
  }
  const auto profile = profile_or_report(config, err);
  if (!profile) return kExitUsage;
  std::optional<Toolpath> tp;
  try {
    tp = recipes::generate(opts.name, *profile, opts.params);
  } catch (const EnvelopeError& e) {
    err << opts.name << ": " << e.what() << "\n";
    return kExitInvalidProgram;
  } catch (const Error& e) {
    err << opts.name << ": " << e.what() << "\n";
    return kExitUsage;
  }
  const std::string text = opts.format == ProgramFormat::kCommandList
                               ? to_command_list(tp->commands())
                               : gcode::serialize_program(*tp);
  if (!opts.output) {
    out << text;
    return kExitOk;
  }
  try {
    write_file(*opts.output, text);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return kExitUsage;
  }
  out << "wrote " << opts.output->string() << ": " << tp->commands().size() << " commands, "
      << tp->segments().size() << " segments\n";
  return kExitOk;
}

int run_serve(const ServeOptions& opts, const Config& config, std::ostream& out,
              std::ostream& err) {
  const auto profile = profile_or_report(config, err);
  if (!profile) return kExitUsage;
  std::unique_ptr<host::Transport> transport;
  host::SessionOptions so;
  so.poll_when_idle = true;
  try {
    transport = make_transport(config, *profile, 1.0);
  } catch (const Error& e) {
    err << "connect failed: " << e.what() << "\n";
    return kExitConnect;
  }
  host::Session session(*transport, *profile, so);
  try {
    session.connect();
  } catch (const Error& e) {
    err << "connect failed: " << e.what() << "\n";
    return kExitConnect;
  }
  service::ServiceOptions svc;
  svc.bounds_mode = config.bounds_mode;
  svc.state_interval = so.poll_interval;
  service::ServiceCore core(session, *profile, svc);
  service::ServiceServer server(core, config.port);
  std::uint16_t port = 0;
  try {
    port = server.start();
  } catch (const Error& e) {
    err << e.what() << "\n";
    session.disconnect();
    return kExitConnect;
  }
  out << "listening on 127.0.0.1:" << port << "\n" << std::flush;
  if (opts.on_listening) opts.on_listening(port);
  server.run(opts.interrupt);
  server.stop();
  if (session.state() != host::LinkState::kDisconnected) session.disconnect();
  return kExitOk;
}

int run_console(std::istream& in, const Config& config, std::ostream& out, std::ostream& err) {
  const auto profile = profile_or_report(config, err);
  if (!profile) return kExitUsage;
  std::unique_ptr<host::Transport> transport;
  host::SessionOptions so;
  so.polling = false;
  try {
    transport = make_transport(config, *profile, 0.0);
  } catch (const Error& e) {
    err << "connect failed: " << e.what() << "\n";
    return kExitConnect;
  }
  host::Session session(*transport, *profile, so);
  try {
    session.connect();
  } catch (const Error& e) {
    err << "connect failed: " << e.what() << "\n";
    return kExitConnect;
  }
  session.on_wire([&](const host::WireRecord& r) {
    out << (r.direction == host::Direction::kTx ? "> " : "< ") << r.payload << "\n" << std::flush;
  });
  out << "connected; type G-code, 'quit' to leave\n" << std::flush;

  std::string line;
  int rc = kExitOk;
  while (std::getline(in, line)) {
    const std::string cmd(text::trim(line));
    if (cmd.empty()) continue;
    if (cmd == "quit" || cmd == "exit") break;
    try {
      const auto ticket = session.inject_lines({cmd});
      while (!ticket.done()) session.pump(0.1);
      if (ticket.status() == host::TicketStatus::kFailed) {
        err << "error: " << ticket.error().value_or("failed") << "\n";
      }
    } catch (const ArgumentError& e) {
      err << e.what() << "\n";
    } catch (const Error& e) {
      err << e.what() << "\n";
      rc = kExitStreamFault;
      break;
    }
    if (session.state() == host::LinkState::kError) {
      err << "link error: " << session.snapshot().last_error.value_or("unknown") << "\n";
      rc = kExitStreamFault;
      break;
    }
  }
  if (session.state() != host::LinkState::kDisconnected) session.disconnect();
  return rc;
}

}  // namespace fab::cli
