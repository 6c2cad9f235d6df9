#include "qebias/channel.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <unistd.h>

#include "qebias/errors.hpp"

namespace qebias {

namespace {

std::string errno_text(const char* what) {
  return std::string(what) + ": " + std::strerror(errno);
}

template <typename CancelFn>
void write_all(int fd, std::string_view data, CancelFn&& cancelled) {
  while (!data.empty()) {
    if (cancelled()) throw EndpointError("write cancelled");
    pollfd pfd{fd, POLLOUT, 0};
    const int rc = ::poll(&pfd, 1, 50);
    if (rc < 0 && errno != EINTR) throw EndpointError(errno_text("poll on endpoint failed"));
    if (rc <= 0) continue;
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw EndpointError(errno_text("write to endpoint failed"));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

void write_all(int fd, std::string_view data) {
  write_all(fd, data, [] { return false; });
}

// Pops one line from `buffer` if complete.
std::optional<std::string> take_line(std::string& buffer) {
  const auto nl = buffer.find('\n');
  if (nl == std::string::npos) return std::nullopt;
  std::string line = buffer.substr(0, nl);
  buffer.erase(0, nl + 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

std::optional<std::string> read_line_fd(int fd, std::string& buffer,
                                        std::chrono::milliseconds timeout) {
  using clock = std::chrono::steady_clock;
  const auto deadline = clock::now() + timeout;
  while (true) {
    if (auto line = take_line(buffer)) return line;
    const auto left =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
    if (left.count() <= 0) return std::nullopt;
    pollfd pfd{fd, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw EndpointError(errno_text("poll on endpoint failed"));
    }
    if (rc == 0) return std::nullopt;
    char chunk[8192];
    const ssize_t n = ::read(fd, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw EndpointError(errno_text("read from endpoint failed"));
    }
    if (n == 0) {
      if (!buffer.empty()) {
        std::string rest;
        rest.swap(buffer);
        return rest;
      }
      throw EndpointError("endpoint closed the connection");
    }
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
}

}  // namespace

ProcessChannel::ProcessChannel(const std::string& command) {
  // Writing to a dead child must surface as an error, not kill us.
  std::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe(in_pipe) != 0) throw EndpointError(errno_text("pipe"));
  if (::pipe(out_pipe) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw EndpointError(errno_text("pipe"));
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw EndpointError(errno_text("fork"));
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::fcntl(in_pipe[1], F_SETFD, FD_CLOEXEC);
  ::fcntl(in_pipe[1], F_SETFL, ::fcntl(in_pipe[1], F_GETFL) | O_NONBLOCK);
  ::fcntl(out_pipe[0], F_SETFD, FD_CLOEXEC);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

ProcessChannel::~ProcessChannel() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    // Give the child a moment to exit on EOF before forcing it.
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
      ::usleep(2000);
    }
    ::kill(pid_, SIGTERM);
    ::waitpid(pid_, &status, 0);
  }
}

void ProcessChannel::write_line(std::string_view line) {
  std::string data(line);
  data += '\n';
  write_all(to_child_, data, [this] { return writes_cancelled(); });
}

std::optional<std::string> ProcessChannel::read_line(std::chrono::milliseconds timeout) {
  return read_line_fd(from_child_, buffer_, timeout);
}

SocketChannel::SocketChannel(const std::string& socket_path) {
  std::signal(SIGPIPE, SIG_IGN);
  sockaddr_un addr{};
  if (socket_path.size() >= sizeof addr.sun_path) {
    throw EndpointError("socket path too long: " + socket_path);
  }
  fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (fd_ < 0) throw EndpointError(errno_text("socket"));
  addr.sun_family = AF_UNIX;
  std::memcpy(addr.sun_path, socket_path.c_str(), socket_path.size() + 1);
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const auto msg = errno_text(("connect " + socket_path).c_str());
    ::close(fd_);
    fd_ = -1;
    throw EndpointError(msg);
  }
  ::fcntl(fd_, F_SETFL, ::fcntl(fd_, F_GETFL) | O_NONBLOCK);
}

SocketChannel::~SocketChannel() {
  if (fd_ >= 0) ::close(fd_);
}

void SocketChannel::write_line(std::string_view line) {
  std::string data(line);
  data += '\n';
  write_all(fd_, data, [this] { return writes_cancelled(); });
}

std::optional<std::string> SocketChannel::read_line(std::chrono::milliseconds timeout) {
  return read_line_fd(fd_, buffer_, timeout);
}

InProcessChannel::InProcessChannel(std::shared_ptr<LineServer> server)
    : server_(std::move(server)) {
  if (auto hello = server_->greeting()) pending_.push_back(*hello);
}

void InProcessChannel::write_line(std::string_view line) {
  if (writes_cancelled()) throw EndpointError("write cancelled");
  {
    std::lock_guard lock(mutex_);
    for (auto& out : server_->handle(line)) pending_.push_back(std::move(out));
  }
  ready_.notify_all();
}

void InProcessChannel::flush() {
  {
    std::lock_guard lock(mutex_);
    for (auto& out : server_->drain()) pending_.push_back(std::move(out));
  }
  ready_.notify_all();
}

std::optional<std::string> InProcessChannel::read_line(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  if (!ready_.wait_for(lock, timeout, [this] { return !pending_.empty(); })) {
    return std::nullopt;
  }
  std::string line = std::move(pending_.front());
  pending_.pop_front();
  return line;
}

namespace {

void emit_lines(int out_fd, const std::vector<std::string>& lines) {
  std::string data;
  for (const auto& l : lines) {
    data += l;
    data += '\n';
  }
  if (!data.empty()) write_all(out_fd, data);
}

void serve_connection(LineServer& server, int in_fd, int out_fd,
                      std::chrono::milliseconds idle_flush) {
  if (auto hello = server.greeting()) emit_lines(out_fd, {*hello});
  std::string buffer;
  while (true) {
    std::optional<std::string> line;
    try {
      line = read_line_fd(in_fd, buffer, idle_flush);
    } catch (const EndpointError&) {
      emit_lines(out_fd, server.drain());
      return;
    }
    if (!line) {
      emit_lines(out_fd, server.drain());
      continue;
    }
    emit_lines(out_fd, server.handle(*line));
  }
}

}  // namespace

void serve_lines(LineServer& server, int in_fd, int out_fd, std::chrono::milliseconds idle_flush) {
  std::signal(SIGPIPE, SIG_IGN);
  try {
    serve_connection(server, in_fd, out_fd, idle_flush);
  } catch (const EndpointError&) {
    // Client went away mid-write.
  }
}

void serve_unix_socket(LineServer& server, const std::string& socket_path,
                       std::size_t max_connections) {
  std::signal(SIGPIPE, SIG_IGN);
  sockaddr_un addr{};
  if (socket_path.size() >= sizeof addr.sun_path) {
    throw EndpointError("socket path too long: " + socket_path);
  }
  const int listener = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (listener < 0) throw EndpointError(errno_text("socket"));
  addr.sun_family = AF_UNIX;
  std::memcpy(addr.sun_path, socket_path.c_str(), socket_path.size() + 1);
  ::unlink(socket_path.c_str());
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(listener, 4) != 0) {
    const auto msg = errno_text(("bind " + socket_path).c_str());
    ::close(listener);
    throw EndpointError(msg);
  }
  std::size_t served = 0;
  while (max_connections == 0 || served < max_connections) {
    const int conn = ::accept(listener, nullptr, nullptr);
    if (conn < 0) {
      if (errno == EINTR) continue;
      break;
    }
    try {
      serve_connection(server, conn, conn, std::chrono::milliseconds(20));
    } catch (const EndpointError&) {
    }
    ::close(conn);
    ++served;
  }
  ::close(listener);
  ::unlink(socket_path.c_str());
}

}  // namespace qebias
