#pragma once

// Local control service: JSON-lines messages over a loopback TCP socket,
// bridged to one host-link session.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "fab/geometry.hpp"
#include "fab/host.hpp"
#include "fab/profile.hpp"
#include "fab/toolpath.hpp"

namespace fab::service {

// ---------------------------------------------------------------------------
// Client -> service. `id` is echoed in the reply.

struct LoadProgram {
  std::optional<std::int64_t> id;
  std::optional<std::string> gcode;
  std::optional<std::string> recipe;
  std::map<std::string, std::string> params;
  friend bool operator==(const LoadProgram&, const LoadProgram&) = default;
};
struct StartStream {
  std::optional<std::int64_t> id;
  friend bool operator==(const StartStream&, const StartStream&) = default;
};
struct Pause {
  std::optional<std::int64_t> id;
  friend bool operator==(const Pause&, const Pause&) = default;
};
struct Resume {
  std::optional<std::int64_t> id;
  friend bool operator==(const Resume&, const Resume&) = default;
};
struct Stop {
  std::optional<std::int64_t> id;
  friend bool operator==(const Stop&, const Stop&) = default;
};
struct Inject {
  std::optional<std::int64_t> id;
  std::string command;
  friend bool operator==(const Inject&, const Inject&) = default;
};
struct Jog {
  std::optional<std::int64_t> id;
  double dx = 0, dy = 0, dz = 0;
  double speed = 10;
  friend bool operator==(const Jog&, const Jog&) = default;
};
struct ProbeCapture {
  std::optional<std::int64_t> id;
  std::string label;
  friend bool operator==(const ProbeCapture&, const ProbeCapture&) = default;
};
struct SetBoundsMode {
  std::optional<std::int64_t> id;
  BoundsMode mode = BoundsMode::kStrict;
  friend bool operator==(const SetBoundsMode&, const SetBoundsMode&) = default;
};

using ClientMessage = std::variant<LoadProgram, StartStream, Pause, Resume, Stop, Inject, Jog,
                                   ProbeCapture, SetBoundsMode>;

// ---------------------------------------------------------------------------
// Service -> client

struct ProgramLoaded {
  std::optional<std::int64_t> id;
  std::vector<Segment> segments;
  ToolpathStats stats;
  std::vector<Diagnostic> diagnostics;
  std::size_t violations = 0;
  std::size_t lines = 0;  // G-code lines that StartStream will send
  friend bool operator==(const ProgramLoaded&, const ProgramLoaded&) = default;
};
struct StateUpdate {
  host::PrinterState state;
  friend bool operator==(const StateUpdate&, const StateUpdate&) = default;
};
struct WireEvent {
  host::WireRecord record;
  friend bool operator==(const WireEvent&, const WireEvent&) = default;
};
struct ProbeStored {
  std::optional<std::int64_t> id;
  std::string label;
  Position position;
  friend bool operator==(const ProbeStored&, const ProbeStored&) = default;
};
struct Fault {
  std::optional<std::int64_t> id;
  std::string message;
  friend bool operator==(const Fault&, const Fault&) = default;
};
// Terminal reply for requests that carry no result.
struct Ack {
  std::optional<std::int64_t> id;
  std::string request;
  friend bool operator==(const Ack&, const Ack&) = default;
};

using ServiceMessage =
    std::variant<ProgramLoaded, StateUpdate, WireEvent, ProbeStored, Fault, Ack>;

std::string_view message_type(const ClientMessage& m);
std::string_view message_type(const ServiceMessage& m);
std::optional<std::int64_t> message_id(const ClientMessage& m);

// One JSON object per message, no embedded newlines.
std::string encode(const ClientMessage& m);
std::string encode(const ServiceMessage& m);
// Throw ParseError on malformed input or schema violations.
ClientMessage decode_client(std::string_view line);
ServiceMessage decode_service(std::string_view line);

// ---------------------------------------------------------------------------
// Core

struct ServiceOptions {
  BoundsMode bounds_mode = BoundsMode::kStrict;
  double state_interval = 1.0;  // StateUpdate at least this often, s
};

// Bridges messages to a session. The first client is the writer; later
// clients only observe. `submit` is thread-safe; everything else runs on
// the thread calling `tick`.
class ServiceCore {
 public:
  using Sink = std::function<void(const ServiceMessage&)>;

  ServiceCore(host::Session& session, MachineProfile profile, ServiceOptions options = {});

  int add_client(Sink sink);
  void remove_client(int client);
  bool is_writer(int client) const;

  void submit(int client, ClientMessage msg);
  // Handles queued messages, pumps the link for up to `max_wait` seconds
  // of link time and resolves finished probe captures.
  void tick(double max_wait);

  const std::map<std::string, Position>& probes() const { return probes_; }
  BoundsMode bounds_mode() const { return options_.bounds_mode; }
  const std::vector<std::string>& program_lines() const { return program_; }

 private:
  struct Client {
    int id;
    Sink sink;
  };
  // A request answered once its ticket resolves. A non-empty label marks
  // a probe capture.
  struct Pending {
    int client;
    std::optional<std::int64_t> id;
    std::string request;
    std::string label;
    host::Ticket ticket;
    std::optional<host::Ticket> first;  // resolves before `ticket`
  };

  void handle(int client, const ClientMessage& msg);
  void load(int client, const LoadProgram& m);
  void send(int client, const ServiceMessage& m);
  void broadcast(const ServiceMessage& m);
  void fault(int client, std::optional<std::int64_t> id, std::string message);
  void resolve_pending();
  void publish_state(bool force);

  host::Session& session_;
  MachineProfile profile_;
  ServiceOptions options_;

  mutable std::mutex clients_mu_;
  std::vector<Client> clients_;
  int next_client_ = 1;

  std::mutex inbox_mu_;
  std::deque<std::pair<int, ClientMessage>> inbox_;

  std::vector<Pending> pending_;
  std::map<std::string, Position> probes_;
  std::vector<std::string> program_;
  double last_state_ = -1e300;
  bool state_dirty_ = true;  // guarded by inbox_mu_
  bool force_state_ = true;
  std::optional<host::PrinterState> sent_state_;
  bool lost_reported_ = false;
};

// Serves a ServiceCore on 127.0.0.1. StateUpdates to a slow client are
// dropped once its queue is long; other messages are always delivered.
class ServiceServer {
 public:
  ServiceServer(ServiceCore& core, std::uint16_t port = 0);
  ~ServiceServer();
  ServiceServer(const ServiceServer&) = delete;
  ServiceServer& operator=(const ServiceServer&) = delete;

  // Binds and starts accepting. Returns the bound port.
  std::uint16_t start();
  // Runs core.tick until stop() is called or `*interrupt` becomes true.
  void run(const std::atomic<bool>* interrupt = nullptr);
  void stop();
  std::uint16_t port() const { return port_; }

 private:
  struct Conn;
  void accept_loop();

  ServiceCore& core_;
  std::uint16_t port_;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::mutex conns_mu_;
  std::vector<std::shared_ptr<Conn>> conns_;
};

}  // namespace fab::service
