#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <csignal>
#include <cstring>
#include <mutex>

#include "evpr/providers.hpp"

namespace evpr {
namespace {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  ~Fd() { reset(); }

  int get() const noexcept { return fd_; }
  void reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

[[noreturn]] void fail(const std::string& what) {
  throw Error(ErrorCode::ProviderFailure, what + ": " + std::strerror(errno));
}

}  // namespace

std::vector<uint8_t> run_subprocess(const std::string& command, std::span<const uint8_t> input,
                                    std::chrono::milliseconds timeout) {
  static std::once_flag ignore_sigpipe;
  std::call_once(ignore_sigpipe, [] { std::signal(SIGPIPE, SIG_IGN); });

  int in_pipe[2], out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) fail("pipe");
  Fd child_stdin_r(in_pipe[0]), child_stdin_w(in_pipe[1]);
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) fail("pipe");
  Fd child_stdout_r(out_pipe[0]), child_stdout_w(out_pipe[1]);

  const pid_t pid = ::fork();
  if (pid < 0) fail("fork");
  if (pid == 0) {
    ::dup2(child_stdin_r.get(), STDIN_FILENO);
    ::dup2(child_stdout_w.get(), STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  child_stdin_r.reset();
  child_stdout_w.reset();
  ::fcntl(child_stdin_w.get(), F_SETFL, O_NONBLOCK);
  if (input.empty()) child_stdin_w.reset();

  std::vector<uint8_t> output;
  size_t written = 0;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  bool timed_out = false;

  while (child_stdout_r.get() >= 0) {
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) {
      timed_out = true;
      break;
    }
    pollfd fds[2];
    nfds_t nfds = 0;
    fds[nfds++] = {child_stdout_r.get(), POLLIN, 0};
    if (child_stdin_w.get() >= 0) fds[nfds++] = {child_stdin_w.get(), POLLOUT, 0};
    const int ready = ::poll(fds, nfds, static_cast<int>(remaining.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      fail("poll");
    }
    if (nfds == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
      const ssize_t n = ::write(child_stdin_w.get(), input.data() + written, input.size() - written);
      if (n > 0) written += static_cast<size_t>(n);
      if (n < 0 && errno != EAGAIN && errno != EINTR) written = input.size();  // child closed stdin
      if (written == input.size()) child_stdin_w.reset();
    }
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      uint8_t buf[65536];
      const ssize_t n = ::read(child_stdout_r.get(), buf, sizeof buf);
      if (n > 0) {
        output.insert(output.end(), buf, buf + n);
      } else if (n == 0 || (errno != EAGAIN && errno != EINTR)) {
        child_stdout_r.reset();
      }
    }
  }

  if (timed_out) ::kill(pid, SIGKILL);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (timed_out) throw Error(ErrorCode::ProviderFailure, "provider command timed out: " + command);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw Error(ErrorCode::ProviderFailure, "provider command failed with status " + std::to_string(status) + ": " + command);
  }
  return output;
}

SubprocessProvider::SubprocessProvider(std::string command, std::chrono::milliseconds timeout, std::string model)
    : command_(std::move(command)), timeout_(timeout), model_(std::move(model)) {}

std::vector<uint8_t> SubprocessProvider::call(const FloatTensor& input) const {
  return run_subprocess(command_, encode_tensor(input), timeout_);
}

GlobalFeatureMap SubprocessGlobalEmbedder::embed(uint64_t, const FloatTensor& histogram) const {
  const auto reply = runner_.call(histogram);
  try {
    return GlobalFeatureMap{decode_tensor<float>(reply)};
  } catch (const Error& e) {
    throw Error(ErrorCode::ProviderFailure, std::string("malformed provider reply: ") + e.what());
  }
}

KeypointSet SubprocessKeypointDetector::detect(uint64_t, const MctsTensor& mcts) const {
  const auto reply = runner_.call(mcts.to_float());
  try {
    io::ByteReader in(reply);
    auto kps = decode_keypoints(in);
    if (in.remaining() != 0) throw Error(ErrorCode::TruncatedRecord, "trailing bytes");
    return kps;
  } catch (const Error& e) {
    throw Error(ErrorCode::ProviderFailure, std::string("malformed provider reply: ") + e.what());
  }
}

DepthMap SubprocessDepthEstimator::estimate(uint64_t, const TencodeImage& tencode) const {
  const auto reply = runner_.call(tencode.pixels);
  try {
    return DepthMap{decode_tensor<float>(reply)};
  } catch (const Error& e) {
    throw Error(ErrorCode::ProviderFailure, std::string("malformed provider reply: ") + e.what());
  }
}

}  // namespace evpr
