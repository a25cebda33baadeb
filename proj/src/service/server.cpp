#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

#include "fab/errors.hpp"
#include "fab/service.hpp"

namespace fab::service {

namespace {

// StateUpdates beyond this backlog are dropped for a slow client.
constexpr std::size_t kStateBacklog = 64;

}  // namespace

struct ServiceServer::Conn {
  int fd = -1;
  int client = 0;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::string> out;
  bool closing = false;
  std::thread reader;
  std::thread writer;

  void push(std::string line, bool droppable) {
    {
      std::lock_guard lock(mu);
      if (closing) return;
      if (droppable && out.size() >= kStateBacklog) return;
      out.push_back(std::move(line));
    }
    cv.notify_one();
  }

  void close_out() {
    {
      std::lock_guard lock(mu);
      closing = true;
    }
    cv.notify_all();
  }

  void write_loop() {
    for (;;) {
      std::string line;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return closing || !out.empty(); });
        if (out.empty()) return;
        line = std::move(out.front());
        out.pop_front();
      }
      line += '\n';
      std::size_t off = 0;
      while (off < line.size()) {
        const ssize_t n = ::send(fd, line.data() + off, line.size() - off, MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) {
          close_out();
          return;
        }
        off += static_cast<std::size_t>(n);
      }
    }
  }
};

ServiceServer::ServiceServer(ServiceCore& core, std::uint16_t port) : core_(core), port_(port) {}

ServiceServer::~ServiceServer() { stop(); }

std::uint16_t ServiceServer::start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listen_fd_ < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port_);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 ||
      ::listen(listen_fd_, 8) < 0) {
    const std::string err = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw TransportError("cannot listen on 127.0.0.1:" + std::to_string(port_) + ": " + err);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
  return port_;
}

void ServiceServer::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 100) <= 0) continue;
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    auto conn = std::make_shared<Conn>();
    conn->fd = fd;
    Conn* raw = conn.get();
    conn->client = core_.add_client([raw](const ServiceMessage& m) {
      raw->push(encode(m), std::holds_alternative<StateUpdate>(m));
    });
    conn->writer = std::thread([raw] { raw->write_loop(); });
    conn->reader = std::thread([this, raw] {
      std::string buf;
      char chunk[4096];
      for (;;) {
        const ssize_t n = ::recv(raw->fd, chunk, sizeof chunk, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) break;
        buf.append(chunk, static_cast<std::size_t>(n));
        std::size_t nl;
        while ((nl = buf.find('\n')) != std::string::npos) {
          std::string line = buf.substr(0, nl);
          buf.erase(0, nl + 1);
          if (!line.empty() && line.back() == '\r') line.pop_back();
          if (line.empty()) continue;
          try {
            core_.submit(raw->client, decode_client(line));
          } catch (const ParseError& e) {
            raw->push(encode(ServiceMessage{Fault{std::nullopt, e.what()}}), false);
          }
        }
      }
      core_.remove_client(raw->client);
      raw->close_out();
    });
    std::lock_guard lock(conns_mu_);
    conns_.push_back(std::move(conn));
  }
}

void ServiceServer::run(const std::atomic<bool>* interrupt) {
  using clock = std::chrono::steady_clock;
  while (running_ && !(interrupt && *interrupt)) {
    const auto t0 = clock::now();
    core_.tick(0.05);
    // A link with nothing to wait on returns at once; avoid spinning.
    if (clock::now() - t0 < std::chrono::milliseconds(5)) {
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }
}

void ServiceServer::stop() {
  if (!running_.exchange(false) && listen_fd_ < 0) return;
  if (accept_thread_.joinable()) accept_thread_.join();
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  std::vector<std::shared_ptr<Conn>> conns;
  {
    std::lock_guard lock(conns_mu_);
    conns.swap(conns_);
  }
  for (auto& c : conns) {
    ::shutdown(c->fd, SHUT_RDWR);
    c->close_out();
  }
  for (auto& c : conns) {
    if (c->reader.joinable()) c->reader.join();
    if (c->writer.joinable()) c->writer.join();
    ::close(c->fd);
  }
}

}  // namespace fab::service
