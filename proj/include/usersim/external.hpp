#pragma once

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "usersim/common.hpp"

namespace usersim {

/// Line-oriented transport to an out-of-process generator. One request in flight at a time.
class LineTransport {
 public:
  virtual ~LineTransport() = default;
  /// Sends one line (newline appended) and waits for one reply line.
  virtual std::string round_trip(const std::string& line, std::chrono::milliseconds timeout) = 0;
  virtual std::string describe() const = 0;
};

namespace detail {

class FdLineIO {
 public:
  void reset() { buffer_.clear(); }

  static void write_all(int fd, const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
      ssize_t n = ::write(fd, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("write failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line(int fd, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw TimeoutError("no reply within " + std::to_string(timeout.count()) + " ms");
      pollfd p{fd, POLLIN, 0};
      int r = ::poll(&p, 1, static_cast<int>(left.count()));
      if (r < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("poll failed: ") + std::strerror(errno));
      }
      if (r == 0) continue;
      char buf[4096];
      ssize_t n = ::read(fd, buf, sizeof buf);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("read failed: ") + std::strerror(errno));
      }
      if (n == 0) throw ProtocolError("generator closed the connection");
      buffer_.append(buf, static_cast<std::size_t>(n));
    }
  }

 private:
  std::string buffer_;
};

}  // namespace detail

/// Child process speaking the protocol on stdin/stdout. Restarted lazily after a timeout or
/// an exit so that a stale reply can never be matched to a later request.
class StdioTransport : public LineTransport {
 public:
  explicit StdioTransport(std::vector<std::string> argv) : argv_(std::move(argv)) {
    if (argv_.empty()) throw ValidationError("external generator: empty command");
    ::signal(SIGPIPE, SIG_IGN);
  }
  ~StdioTransport() override { stop(); }
  StdioTransport(const StdioTransport&) = delete;
  StdioTransport& operator=(const StdioTransport&) = delete;

  std::string round_trip(const std::string& line, std::chrono::milliseconds timeout) override {
    if (pid_ <= 0) start();
    try {
      detail::FdLineIO::write_all(to_child_, line + "\n");
      return io_.read_line(from_child_, timeout);
    } catch (const ProtocolError&) {
      stop();
      throw;
    }
  }

  std::string describe() const override {
    std::string s = "stdio:";
    for (const auto& a : argv_) s += " " + a;
    return s;
  }

 private:
  void start() {
    int in[2], out[2];
    if (::pipe(in) != 0 || ::pipe(out) != 0) throw ProtocolError("pipe() failed");
    pid_t pid = ::fork();
    if (pid < 0) throw ProtocolError("fork() failed");
    if (pid == 0) {
      ::dup2(in[0], STDIN_FILENO);
      ::dup2(out[1], STDOUT_FILENO);
      ::close(in[0]);
      ::close(in[1]);
      ::close(out[0]);
      ::close(out[1]);
      std::vector<char*> args;
      for (auto& a : argv_) args.push_back(a.data());
      args.push_back(nullptr);
      ::execvp(args[0], args.data());
      ::_exit(127);
    }
    ::close(in[0]);
    ::close(out[1]);
    to_child_ = in[1];
    from_child_ = out[0];
    pid_ = pid;
    io_.reset();
  }

  void stop() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    to_child_ = from_child_ = -1;
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
    }
    pid_ = -1;
  }

  std::vector<std::string> argv_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  detail::FdLineIO io_;
};

/// TCP endpoint "host:port". Reconnects after errors.
class TcpTransport : public LineTransport {
 public:
  TcpTransport(std::string host, std::string port) : host_(std::move(host)), port_(std::move(port)) {
    ::signal(SIGPIPE, SIG_IGN);
  }
  ~TcpTransport() override { close_socket(); }
  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  std::string round_trip(const std::string& line, std::chrono::milliseconds timeout) override {
    if (fd_ < 0) connect_socket();
    try {
      detail::FdLineIO::write_all(fd_, line + "\n");
      return io_.read_line(fd_, timeout);
    } catch (const ProtocolError&) {
      close_socket();
      throw;
    }
  }

  std::string describe() const override { return "tcp:" + host_ + ":" + port_; }

 private:
  void connect_socket() {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (int rc = ::getaddrinfo(host_.c_str(), port_.c_str(), &hints, &res); rc != 0)
      throw ProtocolError("cannot resolve " + host_ + ": " + ::gai_strerror(rc));
    for (auto* p = res; p; p = p->ai_next) {
      int fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) {
        fd_ = fd;
        break;
      }
      ::close(fd);
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) throw ProtocolError("cannot connect to " + host_ + ":" + port_);
    io_.reset();
  }

  void close_socket() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  std::string host_, port_;
  int fd_ = -1;
  detail::FdLineIO io_;
};

/// "stdio:<command line>" or "tcp:<host>:<port>".
inline std::unique_ptr<LineTransport> make_transport(const std::string& endpoint) {
  if (endpoint.rfind("stdio:", 0) == 0) {
    std::vector<std::string> argv;
    std::string cur;
    for (char c : endpoint.substr(6)) {
      if (c == ' ') {
        if (!cur.empty()) argv.push_back(std::move(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) argv.push_back(std::move(cur));
    return std::make_unique<StdioTransport>(std::move(argv));
  }
  if (endpoint.rfind("tcp:", 0) == 0) {
    auto rest = endpoint.substr(4);
    auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw ValidationError("tcp endpoint needs host:port");
    return std::make_unique<TcpTransport>(rest.substr(0, colon), rest.substr(colon + 1));
  }
  throw ValidationError("unknown endpoint '" + endpoint + "' (expected stdio:... or tcp:host:port)");
}

}  // namespace usersim
