#pragma once
// Line-oriented duplex channels used to talk to out-of-process scorers and
// translators. One JSON object per line in each direction.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qebias {

class LineChannel {
 public:
  virtual ~LineChannel() = default;

  // Sends one line (a trailing newline is appended). May block while the
  // peer is not draining; safe to call from a different thread than
  // read_line.
  virtual void write_line(std::string_view line) = 0;

  // Signals the end of a burst of writes. Buffered peers may use it to
  // release queued responses.
  virtual void flush() {}

  // Returns the next line, or nullopt when nothing arrived within
  // `timeout`. Throws EndpointError once the peer has closed its side.
  virtual std::optional<std::string> read_line(std::chrono::milliseconds timeout) = 0;

  // Makes blocked and future writes fail with EndpointError until reset.
  // Lets a reader that gave up unblock a writer thread stuck on a peer
  // that stopped draining.
  void cancel_writes(bool cancelled) { cancelled_.store(cancelled); }

 protected:
  bool writes_cancelled() const { return cancelled_.load(); }

 private:
  std::atomic<bool> cancelled_{false};
};

// Child process spawned through /bin/sh -c, speaking over stdin/stdout.
// Stderr is inherited.
class ProcessChannel final : public LineChannel {
 public:
  explicit ProcessChannel(const std::string& command);
  ~ProcessChannel() override;
  ProcessChannel(const ProcessChannel&) = delete;
  ProcessChannel& operator=(const ProcessChannel&) = delete;

  void write_line(std::string_view line) override;
  std::optional<std::string> read_line(std::chrono::milliseconds timeout) override;

 private:
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

// Connected AF_UNIX stream socket.
class SocketChannel final : public LineChannel {
 public:
  explicit SocketChannel(const std::string& socket_path);
  ~SocketChannel() override;
  SocketChannel(const SocketChannel&) = delete;
  SocketChannel& operator=(const SocketChannel&) = delete;

  void write_line(std::string_view line) override;
  std::optional<std::string> read_line(std::chrono::milliseconds timeout) override;

 private:
  int fd_ = -1;
  std::string buffer_;
};

// Server side of the line protocol, runnable in-process or over stdio.
class LineServer {
 public:
  virtual ~LineServer() = default;
  // Line emitted once when a client connects (may be empty for none).
  virtual std::optional<std::string> greeting() { return std::nullopt; }
  // Handles one request line, returning any lines ready to send now.
  virtual std::vector<std::string> handle(std::string_view line) = 0;
  // Releases anything the server was holding back.
  virtual std::vector<std::string> drain() { return {}; }
};

// Runs a LineServer inside the calling process. Responses are queued and
// handed out by read_line, which waits up to its timeout for writes or a
// flush to produce output.
class InProcessChannel final : public LineChannel {
 public:
  explicit InProcessChannel(std::shared_ptr<LineServer> server);

  void write_line(std::string_view line) override;
  void flush() override;
  std::optional<std::string> read_line(std::chrono::milliseconds timeout) override;

 private:
  std::shared_ptr<LineServer> server_;
  std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<std::string> pending_;
};

// Serves `server` over file descriptors until EOF on `in_fd`. When the
// input stays idle for `idle_flush`, held-back responses are drained.
void serve_lines(LineServer& server, int in_fd, int out_fd,
                 std::chrono::milliseconds idle_flush = std::chrono::milliseconds(20));

// Binds a unix socket and serves each accepted connection sequentially.
// Returns after `max_connections` connections when that is non-zero.
void serve_unix_socket(LineServer& server, const std::string& socket_path,
                       std::size_t max_connections = 0);

}  // namespace qebias
