#pragma once

// Streaming a program to a printer: transports, the link session with its
// one-outstanding-line flow control, and the wire log.

#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fab/command.hpp"
#include "fab/gcode.hpp"
#include "fab/geometry.hpp"
#include "fab/printer.hpp"
#include "fab/profile.hpp"
#include "fab/toolpath.hpp"

namespace fab::host {

// ---------------------------------------------------------------------------
// Transports

// Line-oriented byte stream. Times are seconds on the transport's own clock.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void open() = 0;
  virtual void close() = 0;
  virtual bool is_open() const = 0;
  // Writes one line plus '\n'.
  virtual void write_line(std::string_view line) = 0;
  // Next complete line, or nullopt once `deadline` has passed.
  virtual std::optional<std::string> read_line(double deadline) = 0;
  virtual double now() const = 0;
};

class SerialTransport : public Transport {
 public:
  explicit SerialTransport(std::string path, int baud = 115200);
  ~SerialTransport() override;

  void open() override;
  void close() override;
  bool is_open() const override { return fd_ >= 0; }
  void write_line(std::string_view line) override;
  std::optional<std::string> read_line(double deadline) override;
  double now() const override;

 private:
  std::string path_;
  int baud_;
  int fd_ = -1;
  std::string partial_;
  std::deque<std::string> lines_;
};

// Delay between the printer emitting a line and the host receiving it.
struct AckDelay {
  enum class Kind { kNone, kFixed, kRandomized };
  Kind kind = Kind::kNone;
  double fixed = 0.0;  // s
  double min = 0.0;    // s
  double max = 0.0;    // s
  std::uint64_t seed = 0;

  static AckDelay none() { return {}; }
  static AckDelay fixed_delay(double seconds) { return {Kind::kFixed, seconds, 0, 0, 0}; }
  static AckDelay randomized(std::uint64_t seed, double min_s, double max_s) {
    return {Kind::kRandomized, 0, min_s, max_s, seed};
  }
};

// In-process virtual printer. The host and the emulator share a simulated
// clock that jumps to the next event, so waits cost no wall time. With
// `pacing` > 0 the clock instead follows wall time scaled by `pacing`.
class LoopbackTransport : public Transport {
 public:
  explicit LoopbackTransport(printer::EmulatorConfig config = {}, AckDelay delay = {},
                             double pacing = 0.0);

  void open() override;
  void close() override;
  bool is_open() const override { return open_; }
  void write_line(std::string_view line) override;
  std::optional<std::string> read_line(double deadline) override;
  double now() const override { return now_; }

  printer::Emulator& emulator() { return emu_; }
  const printer::Emulator& emulator() const { return emu_; }
  // Makes every later operation fail as if the device was unplugged.
  void disconnect_device() { lost_ = true; }
  // Stops answering entirely while keeping the port open.
  void set_silent(bool silent) { silent_ = silent; }

 private:
  void collect();
  void advance(double t);

  printer::Emulator emu_;
  AckDelay delay_;
  double pacing_;
  std::mt19937_64 rng_;
  bool open_ = false;
  bool lost_ = false;
  bool silent_ = false;
  double now_ = 0.0;
  double last_delivery_ = 0.0;
  struct Delivery {
    double time;
    std::string text;
  };
  std::deque<Delivery> deliveries_;
};

// ---------------------------------------------------------------------------
// Wire log

enum class Direction { kTx, kRx };

std::string_view to_string(Direction d);

struct WireRecord {
  double time = 0.0;
  Direction direction = Direction::kTx;
  std::string payload;
  friend bool operator==(const WireRecord&, const WireRecord&) = default;
};

// "<time with 6 decimals>\t<tx|rx>\t<payload>"
std::string format_wire_record(const WireRecord& r);
std::optional<WireRecord> parse_wire_record(std::string_view line);
std::string format_wire_log(const std::vector<WireRecord>& log);
std::vector<WireRecord> parse_wire_log(std::string_view text);

struct FlowCheck {
  std::size_t max_outstanding = 0;  // unacknowledged lines just after a tx
  std::size_t violations = 0;       // tx while another line was unacknowledged
};

// Replays a log: every tx opens a line, every "ok" or "Error:" closes one.
FlowCheck check_flow_window(const std::vector<WireRecord>& log);

// ---------------------------------------------------------------------------
// Session

enum class LinkState { kDisconnected, kIdle, kStreaming, kPaused, kError };

std::string_view to_string(LinkState s);

// Edges of the link state machine; everything else is a bug.
bool is_allowed_transition(LinkState from, LinkState to);

struct Temperature {
  std::optional<double> actual;
  std::optional<double> target;
  friend bool operator==(const Temperature&, const Temperature&) = default;
};

// Counts program lines only; polls, injections and the handshake are not
// included. At the end of a session acked + errored + timed_out == sent.
struct Progress {
  std::size_t sent = 0;
  std::size_t acked = 0;
  std::size_t errored = 0;
  std::size_t timed_out = 0;
  std::size_t total = 0;
  friend bool operator==(const Progress&, const Progress&) = default;
};

struct PrinterState {
  std::optional<Position> position;  // unknown until the first report
  Temperature hotend;
  Temperature bed;
  LinkState link = LinkState::kDisconnected;
  Progress progress;
  std::optional<std::string> last_error;
  friend bool operator==(const PrinterState&, const PrinterState&) = default;
};

enum class TicketStatus { kPending, kAcked, kFailed, kCancelled };

std::string_view to_string(TicketStatus s);

// Resolves when the last line of an injected group is acknowledged.
class Ticket {
 public:
  Ticket() = default;
  TicketStatus status() const;
  bool done() const { return status() != TicketStatus::kPending; }
  std::optional<std::string> error() const;
  // Last position the printer reported when the group was acknowledged.
  std::optional<Position> position() const;

 private:
  friend class Session;
  struct State {
    mutable std::mutex mu;
    TicketStatus status = TicketStatus::kPending;
    std::optional<std::string> error;
    std::optional<Position> position;
  };
  explicit Ticket(std::shared_ptr<State> s) : state_(std::move(s)) {}
  void resolve(TicketStatus s, std::optional<std::string> error = std::nullopt,
               std::optional<Position> position = std::nullopt) const;
  std::shared_ptr<State> state_;
};

struct SessionOptions {
  double command_timeout = 10.0;
  double handshake_timeout = 5.0;
  double banner_quiet = 0.5;
  bool checksum = false;
  bool polling = true;
  bool poll_when_idle = false;
  double poll_interval = 1.0;
  bool safety_tail = true;
  double lift_mm = 5.0;
  double lift_speed = 10.0;  // mm/s
};

struct StreamReport {
  Progress progress;
  LinkState final_state = LinkState::kIdle;
  double elapsed = 0.0;
  std::optional<std::string> error;
};

// Owns the link to one printer. Lines are sent one at a time and the next
// line leaves only after the previous one is acknowledged. Dispatch order:
// the rest of an atomic group already on the wire, injected groups (FIFO),
// polls, then program lines. All public methods are thread-safe; only the
// thread calling connect/pump/stream touches the transport.
class Session {
 public:
  Session(Transport& transport, MachineProfile profile, SessionOptions options = {});

  void connect();
  void disconnect();

  // Queues a program and enters streaming. Requires idle.
  void start(const Toolpath& toolpath);
  void start(const MachineProfile& profile, std::span<const Command> commands);
  void start_lines(std::vector<std::string> lines);
  void pause();
  void resume();
  // Drops queued work and sends the safety tail. Returns to idle.
  void stop();

  Ticket inject(const Command& cmd);
  // Sent back to back with nothing interleaved.
  Ticket inject_lines(std::vector<std::string> lines);
  Ticket jog(double dx, double dy, double dz, double speed);
  // Queues M114 and M105 unless a poll is already queued or in flight.
  Ticket request_poll();

  // Runs the link for `max_wait` seconds of transport time.
  void pump(double max_wait);
  // Pumps until the program completes, fails or the link leaves streaming.
  StreamReport stream(const Toolpath& toolpath);
  StreamReport wait_stream(double max_time = 1e9);
  // Pumps until every queued and in-flight line is resolved.
  bool drain(double max_time);

  PrinterState snapshot() const;
  LinkState state() const;
  std::vector<WireRecord> wire_log() const;
  double now() const { return transport_.now(); }
  const SessionOptions& options() const { return options_; }
  bool busy() const;

  using WireObserver = std::function<void(const WireRecord&)>;
  using StateObserver = std::function<void(const PrinterState&)>;
  void on_wire(WireObserver f);
  void on_state(StateObserver f);

 private:
  struct Item {
    std::vector<std::string> lines;
    Ticket ticket;
    bool program = false;
    bool poll = false;
  };
  struct InFlight {
    std::string line;      // unframed
    std::string wire;      // as sent
    long number = 0;       // frame number in checksum mode
    bool program = false;
    bool poll = false;
    bool last_of_group = false;
    Ticket ticket;
    double deadline = 0.0;
    bool awaiting_resend = false;
  };
  using Notes = std::vector<std::function<void()>>;

  void require_connected(const char* what) const;
  Ticket enqueue_locked(std::vector<std::string> lines, bool poll);
  void dispatch_locked(Notes& notes);
  void send_locked(const std::string& wire, Notes& notes);
  void handle_line_locked(const std::string& line, Notes& notes);
  void fail_locked(const std::string& message, bool timeout, Notes& notes);
  void set_state_locked(LinkState s, Notes& notes);
  void check_complete_locked(Notes& notes);
  void record_locked(Direction d, std::string payload, Notes& notes);
  void state_changed_locked(Notes& notes);
  void device_lost_locked(const std::string& what, Notes& notes);
  void cancel_all_locked();
  static void fire(Notes& notes);

  Transport& transport_;
  MachineProfile profile_;
  SessionOptions options_;

  mutable std::mutex mu_;
  PrinterState state_;
  std::deque<std::string> program_;
  std::deque<Item> injected_;
  std::deque<Item> polls_;
  std::optional<Item> group_;  // atomic group partially sent
  std::optional<InFlight> in_flight_;
  Ticket poll_ticket_;
  bool swallow_ok_ = false;
  long next_number_ = 1;
  double next_poll_ = 0.0;
  double stream_started_ = 0.0;
  double stream_elapsed_ = 0.0;
  std::vector<WireRecord> log_;
  std::vector<WireObserver> wire_observers_;
  std::vector<StateObserver> state_observers_;
};

}  // namespace fab::host
