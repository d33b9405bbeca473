#pragma once

// Newline-framed byte streams: pipes to a child process, TCP sockets and
// in-process socket pairs.

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <sys/types.h>
#include <utility>
#include <vector>

namespace groundguide {

class LineChannel {
 public:
  virtual ~LineChannel() = default;

  // `line` must not contain '\n'; the terminator is appended.
  virtual void send_line(std::string_view line) = 0;

  // Throws Timeout when nothing complete arrives in time and BackendFailure
  // when the peer closed the stream. A negative timeout waits forever.
  virtual std::string recv_line(std::chrono::milliseconds timeout) = 0;

  // Like recv_line but returns false on a clean end of stream.
  virtual bool try_recv_line(std::string& line,
                             std::chrono::milliseconds timeout) = 0;
};

class FdChannel : public LineChannel {
 public:
  // Takes ownership of both descriptors (they may be equal).
  FdChannel(int read_fd, int write_fd);
  ~FdChannel() override;

  FdChannel(const FdChannel&) = delete;
  FdChannel& operator=(const FdChannel&) = delete;

  void send_line(std::string_view line) override;
  std::string recv_line(std::chrono::milliseconds timeout) override;
  bool try_recv_line(std::string& line,
                     std::chrono::milliseconds timeout) override;

  // Closes the write side so the peer sees end of stream.
  void close_write();

 private:
  int read_fd_;
  int write_fd_;
  std::string buffer_;
};

// Two connected in-process endpoints.
std::pair<std::unique_ptr<FdChannel>, std::unique_ptr<FdChannel>>
make_channel_pair();

// Runs `/bin/sh -c command` with its stdin/stdout attached to the channel.
class ProcessChannel final : public LineChannel {
 public:
  explicit ProcessChannel(const std::string& command);
  ~ProcessChannel() override;

  void send_line(std::string_view line) override { io_->send_line(line); }
  std::string recv_line(std::chrono::milliseconds timeout) override {
    return io_->recv_line(timeout);
  }
  bool try_recv_line(std::string& line,
                     std::chrono::milliseconds timeout) override {
    return io_->try_recv_line(line, timeout);
  }

  pid_t pid() const { return pid_; }

 private:
  std::unique_ptr<FdChannel> io_;
  pid_t pid_ = -1;
};

std::unique_ptr<FdChannel> connect_tcp(const std::string& host,
                                       std::uint16_t port);

class TcpListener {
 public:
  // Port 0 picks an ephemeral port.
  TcpListener(const std::string& host, std::uint16_t port);
  ~TcpListener();

  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  std::unique_ptr<FdChannel> accept();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

// Wraps another channel and records every line: "> " for lines sent, "< "
// for lines received.
class RecordingChannel final : public LineChannel {
 public:
  explicit RecordingChannel(std::unique_ptr<LineChannel> inner)
      : inner_(std::move(inner)) {}

  void send_line(std::string_view line) override;
  std::string recv_line(std::chrono::milliseconds timeout) override;
  bool try_recv_line(std::string& line,
                     std::chrono::milliseconds timeout) override;

  std::vector<std::string> transcript() const;

 private:
  std::unique_ptr<LineChannel> inner_;
  mutable std::mutex mu_;
  std::vector<std::string> lines_;
};

}  // namespace groundguide
