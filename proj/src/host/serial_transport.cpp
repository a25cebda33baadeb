#include <fcntl.h>
#include <poll.h>
#include <termios.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

#include "fab/errors.hpp"
#include "fab/host.hpp"

namespace fab::host {

namespace {

speed_t baud_constant(int baud) {
  switch (baud) {
    case 9600: return B9600;
    case 19200: return B19200;
    case 38400: return B38400;
    case 57600: return B57600;
    case 115200: return B115200;
    case 230400: return B230400;
    case 460800: return B460800;
    case 500000: return B500000;
    case 921600: return B921600;
    case 1000000: return B1000000;
    default: throw ArgumentError("unsupported baud rate " + std::to_string(baud));
  }
}

}  // namespace

SerialTransport::SerialTransport(std::string path, int baud) : path_(std::move(path)), baud_(baud) {
  baud_constant(baud_);
}

SerialTransport::~SerialTransport() { close(); }

void SerialTransport::open() {
  if (fd_ >= 0) return;
  fd_ = ::open(path_.c_str(), O_RDWR | O_NOCTTY | O_NONBLOCK);
  if (fd_ < 0) throw TransportError("cannot open " + path_ + ": " + std::strerror(errno));
  termios tio{};
  if (tcgetattr(fd_, &tio) != 0) {
    const std::string err = std::strerror(errno);
    close();
    throw TransportError("not a serial device " + path_ + ": " + err);
  }
  cfmakeraw(&tio);
  tio.c_cflag |= CLOCAL | CREAD;
  tio.c_cflag &= ~CSTOPB;
  cfsetispeed(&tio, baud_constant(baud_));
  cfsetospeed(&tio, baud_constant(baud_));
  tcsetattr(fd_, TCSANOW, &tio);
  tcflush(fd_, TCIOFLUSH);
}

void SerialTransport::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
  partial_.clear();
  lines_.clear();
}

double SerialTransport::now() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void SerialTransport::write_line(std::string_view line) {
  if (fd_ < 0) throw TransportError("serial port closed");
  std::string s(line);
  s += '\n';
  std::size_t off = 0;
  while (off < s.size()) {
    const ssize_t n = ::write(fd_, s.data() + off, s.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN) {
        pollfd pfd{fd_, POLLOUT, 0};
        ::poll(&pfd, 1, 100);
        continue;
      }
      throw TransportError(std::string("serial write failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::optional<std::string> SerialTransport::read_line(double deadline) {
  if (fd_ < 0) throw TransportError("serial port closed");
  for (;;) {
    if (!lines_.empty()) {
      std::string l = std::move(lines_.front());
      lines_.pop_front();
      return l;
    }
    const double remaining = deadline - now();
    if (remaining <= 0) return std::nullopt;
    pollfd pfd{fd_, POLLIN, 0};
    const int r = ::poll(&pfd, 1, static_cast<int>(remaining * 1000) + 1);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("serial poll failed: ") + std::strerror(errno));
    }
    if (r == 0) continue;
    if (pfd.revents & (POLLERR | POLLHUP | POLLNVAL)) throw TransportError("serial device lost");
    char buf[512];
    const ssize_t n = ::read(fd_, buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw TransportError(std::string("serial read failed: ") + std::strerror(errno));
    }
    if (n == 0) throw TransportError("serial device lost");
    for (ssize_t i = 0; i < n; ++i) {
      const char c = buf[i];
      if (c == '\n') {
        lines_.push_back(std::move(partial_));
        partial_.clear();
      } else if (c != '\r') {
        partial_.push_back(c);
      }
    }
  }
}

}  // namespace fab::host
