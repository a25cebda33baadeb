#include <fcntl.h>
#include <poll.h>
#include <termios.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>

#include "fab/errors.hpp"
#include "fab/printer.hpp"

namespace fab::printer {

PtyServer::PtyServer(EmulatorConfig config) : config_(std::move(config)) { validate(config_); }

PtyServer::~PtyServer() { stop(); }

void PtyServer::start() {
  if (running_) return;
  master_ = posix_openpt(O_RDWR | O_NOCTTY);
  if (master_ < 0 || grantpt(master_) != 0 || unlockpt(master_) != 0) {
    throw TransportError(std::string("pty: ") + std::strerror(errno));
  }
  path_ = ptsname(master_);
  // Holding the slave open keeps the master readable across client reconnects.
  slave_ = ::open(path_.c_str(), O_RDWR | O_NOCTTY);
  if (slave_ < 0) throw TransportError("pty: cannot open " + path_);
  termios tio{};
  tcgetattr(slave_, &tio);
  cfmakeraw(&tio);
  tcsetattr(slave_, TCSANOW, &tio);
  running_ = true;
  thread_ = std::thread([this] { run(); });
}

void PtyServer::stop() {
  running_ = false;
  if (thread_.joinable()) thread_.join();
  if (slave_ >= 0) ::close(slave_);
  if (master_ >= 0) ::close(master_);
  slave_ = master_ = -1;
}

void PtyServer::run() {
  Emulator emu(config_);
  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  auto flush = [&] {
    for (const auto& o : emu.take_output()) {
      std::string s = o.text + "\n";
      const char* p = s.data();
      std::size_t left = s.size();
      while (left > 0) {
        const ssize_t n = ::write(master_, p, left);
        if (n <= 0) {
          if (errno == EINTR || errno == EAGAIN) continue;
          return;
        }
        p += n;
        left -= static_cast<std::size_t>(n);
      }
    }
  };
  emu.boot();
  flush();
  std::string partial;
  while (running_) {
    double wait_s = 0.05;
    if (auto w = emu.next_wakeup()) wait_s = std::clamp(*w - wall(), 0.0, 0.05);
    pollfd pfd{master_, POLLIN, 0};
    const int r = ::poll(&pfd, 1, static_cast<int>(wait_s * 1000));
    emu.advance_to(wall());
    if (r > 0 && (pfd.revents & POLLIN)) {
      char buf[512];
      const ssize_t n = ::read(master_, buf, sizeof buf);
      for (ssize_t i = 0; i < n; ++i) {
        if (buf[i] == '\n' || buf[i] == '\r') {
          if (!partial.empty()) emu.feed_line(partial);
          partial.clear();
        } else {
          partial.push_back(buf[i]);
        }
      }
    }
    flush();
  }
}

}  // namespace fab::printer
