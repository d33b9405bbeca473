#include "groundguide/channel.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include "groundguide/error.hpp"

extern char** environ;

namespace groundguide {

namespace {

std::string errno_text(const char* what) {
  return std::string(what) + ": " + std::strerror(errno);
}

void ignore_sigpipe() {
  static const bool once = [] {
    std::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)once;
}

}  // namespace

FdChannel::FdChannel(int read_fd, int write_fd)
    : read_fd_(read_fd), write_fd_(write_fd) {
  ignore_sigpipe();
}

FdChannel::~FdChannel() {
  if (read_fd_ >= 0) ::close(read_fd_);
  if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
}

void FdChannel::close_write() {
  if (write_fd_ < 0) return;
  if (write_fd_ == read_fd_) {
    ::shutdown(write_fd_, SHUT_WR);
  } else {
    ::close(write_fd_);
  }
  write_fd_ = -1;
}

void FdChannel::send_line(std::string_view line) {
  if (line.find('\n') != std::string_view::npos) {
    throw Error(ErrorCode::InvalidArgument, "line contains a newline");
  }
  if (write_fd_ < 0) {
    throw Error(ErrorCode::BackendFailure, "channel closed for writing");
  }
  std::string framed(line);
  framed.push_back('\n');
  std::size_t off = 0;
  while (off < framed.size()) {
    const ssize_t n = ::write(write_fd_, framed.data() + off, framed.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::BackendFailure, errno_text("write failed"));
    }
    off += static_cast<std::size_t>(n);
  }
}

bool FdChannel::try_recv_line(std::string& line,
                              std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    if (const auto pos = buffer_.find('\n'); pos != std::string::npos) {
      line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      return true;
    }
    int wait_ms = -1;
    if (timeout.count() >= 0) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) {
        throw Error(ErrorCode::Timeout, "timed out waiting for a response");
      }
      wait_ms = static_cast<int>(left.count());
    }
    pollfd pfd{read_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, wait_ms);
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::BackendFailure, errno_text("poll failed"));
    }
    if (ready == 0) continue;  // re-check the deadline
    char chunk[65536];
    const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw Error(ErrorCode::BackendFailure, errno_text("read failed"));
    }
    if (n == 0) {
      if (!buffer_.empty()) {
        throw Error(ErrorCode::ProtocolViolation,
                    "stream ended inside an unterminated line");
      }
      return false;
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::string FdChannel::recv_line(std::chrono::milliseconds timeout) {
  std::string line;
  if (!try_recv_line(line, timeout)) {
    throw Error(ErrorCode::BackendFailure, "peer closed the connection");
  }
  return line;
}

std::pair<std::unique_ptr<FdChannel>, std::unique_ptr<FdChannel>>
make_channel_pair() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
    throw Error(ErrorCode::IoError, errno_text("socketpair failed"));
  }
  return {std::make_unique<FdChannel>(fds[0], fds[0]),
          std::make_unique<FdChannel>(fds[1], fds[1])};
}

ProcessChannel::ProcessChannel(const std::string& command) {
  int to_child[2];
  int from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) {
    throw Error(ErrorCode::BackendFailure, errno_text("pipe failed"));
  }
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw Error(ErrorCode::BackendFailure, errno_text("pipe failed"));
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);

  std::string shell = "/bin/sh";
  std::string flag = "-c";
  std::string cmd = command;
  char* argv[] = {shell.data(), flag.data(), cmd.data(), nullptr};
  const int rc = ::posix_spawn(&pid_, "/bin/sh", &actions, nullptr, argv, environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(to_child[0]);
  ::close(from_child[1]);
  if (rc != 0) {
    ::close(to_child[1]);
    ::close(from_child[0]);
    throw Error(ErrorCode::BackendFailure,
                "cannot spawn '" + command + "': " + std::strerror(rc));
  }
  io_ = std::make_unique<FdChannel>(from_child[0], to_child[1]);
}

ProcessChannel::~ProcessChannel() {
  if (io_) io_->close_write();
  if (pid_ <= 0) return;
  // Give the server a moment to exit on end of input, then terminate it.
  for (int i = 0; i < 50; ++i) {
    int status = 0;
    const pid_t r = ::waitpid(pid_, &status, WNOHANG);
    if (r == pid_ || r < 0) return;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ::kill(pid_, SIGTERM);
  int status = 0;
  ::waitpid(pid_, &status, 0);
}

std::unique_ptr<FdChannel> connect_tcp(const std::string& host,
                                       std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const auto service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res);
      rc != 0) {
    throw Error(ErrorCode::BackendFailure,
                "cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) {
    throw Error(ErrorCode::BackendFailure,
                "cannot connect to " + host + ":" + service);
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return std::make_unique<FdChannel>(fd, fd);
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) throw Error(ErrorCode::IoError, errno_text("socket failed"));
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw Error(ErrorCode::InvalidArgument, "bad IPv4 address '" + host + "'");
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(fd_, 4) != 0) {
    const auto msg = errno_text("bind/listen failed");
    ::close(fd_);
    throw Error(ErrorCode::IoError, msg);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<FdChannel> TcpListener::accept() {
  for (;;) {
    const int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd >= 0) {
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return std::make_unique<FdChannel>(fd, fd);
    }
    if (errno != EINTR) throw Error(ErrorCode::IoError, errno_text("accept failed"));
  }
}

void RecordingChannel::send_line(std::string_view line) {
  {
    std::lock_guard lock(mu_);
    lines_.push_back("> " + std::string(line));
  }
  inner_->send_line(line);
}

std::string RecordingChannel::recv_line(std::chrono::milliseconds timeout) {
  auto line = inner_->recv_line(timeout);
  std::lock_guard lock(mu_);
  lines_.push_back("< " + line);
  return line;
}

bool RecordingChannel::try_recv_line(std::string& line,
                                     std::chrono::milliseconds timeout) {
  if (!inner_->try_recv_line(line, timeout)) return false;
  std::lock_guard lock(mu_);
  lines_.push_back("< " + line);
  return true;
}

std::vector<std::string> RecordingChannel::transcript() const {
  std::lock_guard lock(mu_);
  return lines_;
}

}  // namespace groundguide
