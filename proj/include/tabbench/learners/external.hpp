#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabbench/core/error.hpp"
#include "tabbench/learners/types.hpp"

namespace tabbench {

inline constexpr int kAdapterProtocol = 1;

/// How to launch an external learner.
struct AdapterSpec {
  std::vector<std::string> argv;  // argv[0] is the executable
  std::chrono::milliseconds frame_timeout{600'000};
};

/// One adapter subprocess speaking newline-delimited JSON frames on
/// stdin/stdout. Stderr is captured to a file for diagnostics.
class AdapterProcess {
 public:
  explicit AdapterProcess(AdapterSpec spec, std::filesystem::path stderr_path = {})
      : spec_(std::move(spec)), stderr_path_(std::move(stderr_path)) {
    if (spec_.argv.empty()) throw AdapterError("adapter: empty command");
    ::signal(SIGPIPE, SIG_IGN);  // a dead adapter must surface as a write error
    if (stderr_path_.empty()) {
      stderr_path_ = std::filesystem::temp_directory_path() /
                     ("tabbench-adapter-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++) + ".err");
    }
    int in_pipe[2], out_pipe[2];
    if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0) throw AdapterError("adapter: pipe() failed");
    const int err_fd = ::open(stderr_path_.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    std::vector<char*> args;
    for (auto& a : spec_.argv) args.push_back(a.data());
    args.push_back(nullptr);
    pid_ = ::fork();
    if (pid_ < 0) throw AdapterError("adapter: fork() failed");
    if (pid_ == 0) {
      ::dup2(in_pipe[0], STDIN_FILENO);
      ::dup2(out_pipe[1], STDOUT_FILENO);
      if (err_fd >= 0) ::dup2(err_fd, STDERR_FILENO);
      ::close(in_pipe[0]);
      ::close(in_pipe[1]);
      ::close(out_pipe[0]);
      ::close(out_pipe[1]);
      ::execvp(args[0], args.data());
      ::_exit(127);
    }
    if (err_fd >= 0) ::close(err_fd);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
  }

  AdapterProcess(const AdapterProcess&) = delete;
  AdapterProcess& operator=(const AdapterProcess&) = delete;

  ~AdapterProcess() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    if (pid_ > 0 && !exited_) {
      ::kill(pid_, SIGKILL);
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
  }

  void send(const nlohmann::json& frame) {
    const std::string line = frame.dump() + "\n";
    std::size_t off = 0;
    while (off < line.size()) {
      const auto w = ::write(to_child_, line.data() + off, line.size() - off);
      if (w < 0) {
        if (errno == EINTR) continue;
        fail("write to adapter failed: " + std::string(std::strerror(errno)));
      }
      off += static_cast<std::size_t>(w);
    }
  }

  /// Next frame; an {"op":"error"} frame becomes an AdapterError.
  nlohmann::json receive() {
    const auto line = read_line();
    nlohmann::json frame;
    try {
      frame = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      fail("malformed frame: " + line.substr(0, 200));
    }
    if (!frame.is_object() || !frame.contains("op")) fail("frame without 'op': " + line.substr(0, 200));
    if (frame.at("op") == "error") fail("adapter error: " + frame.value("message", frame.dump()));
    return frame;
  }

  nlohmann::json expect(const std::string& op) {
    auto frame = receive();
    if (frame.at("op") != op) fail("expected '" + op + "' frame, got '" + frame.at("op").dump() + "'");
    return frame;
  }

  /// Waits for the process to exit; nonzero status is an error.
  void wait_exit() {
    ::close(to_child_);
    to_child_ = -1;
    const auto deadline = std::chrono::steady_clock::now() + spec_.frame_timeout;
    int status = 0;
    while (true) {
      const pid_t r = ::waitpid(pid_, &status, WNOHANG);
      if (r == pid_) break;
      if (std::chrono::steady_clock::now() > deadline) fail("adapter did not exit after shutdown");
      ::usleep(1000);
    }
    exited_ = true;
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      fail("adapter exited with status " + std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1));
    }
  }

  std::string diagnostics() const {
    std::ifstream in(stderr_path_);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (text.size() > 4000) text = text.substr(text.size() - 4000);
    return text;
  }

 private:
  static std::atomic<int>& counter() {
    static std::atomic<int> c{0};
    return c;
  }

  [[noreturn]] void fail(const std::string& what) const {
    const auto diag = diagnostics();
    throw AdapterError(what + (diag.empty() ? "" : "\nadapter stderr:\n" + diag));
  }

  std::string read_line() {
    while (true) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      pollfd p{from_child_, POLLIN, 0};
      const int ready = ::poll(&p, 1, static_cast<int>(spec_.frame_timeout.count()));
      if (ready == 0) fail("timed out after " + std::to_string(spec_.frame_timeout.count()) + " ms waiting for a frame");
      if (ready < 0) {
        if (errno == EINTR) continue;
        fail("poll failed");
      }
      char chunk[65536];
      const auto n = ::read(from_child_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) fail("adapter closed its output before a complete frame");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  AdapterSpec spec_;
  std::filesystem::path stderr_path_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  bool exited_ = false;
  std::string buffer_;
};

struct ExternalFitResult {
  std::string learner;
  double val_loss = 0.0;
  std::size_t best_iter = 0;
  std::vector<PredictionMatrix> predictions;  // one per predict path
};

/// Drives one full session: hello, fit, predict per path, shutdown.
/// Classification predictions must have `n_classes` columns (class codes in
/// sorted label order).
inline ExternalFitResult external_fit_predict(const AdapterSpec& spec, const std::filesystem::path& train,
                                              const std::filesystem::path& val,
                                              const std::vector<std::filesystem::path>& predict_paths,
                                              TaskKind task, const std::string& target, std::size_t n_classes,
                                              const nlohmann::json& config, std::uint64_t seed) {
  AdapterProcess proc(spec);
  proc.send({{"op", "hello"}, {"protocol", kAdapterProtocol}});
  const auto hello = proc.expect("hello");
  if (hello.value("protocol", -1) != kAdapterProtocol) {
    throw AdapterError("adapter protocol mismatch: expected " + std::to_string(kAdapterProtocol) + ", got " +
                       hello.value("protocol", nlohmann::json()).dump());
  }
  ExternalFitResult out;
  out.learner = hello.value("learner", std::string("external"));
  proc.send({{"op", "fit"},
             {"train", std::filesystem::absolute(train).string()},
             {"val", std::filesystem::absolute(val).string()},
             {"task", std::string(to_string(task))},
             {"target", target},
             {"config", config},
             {"seed", seed}});
  const auto fitted = proc.expect("fitted");
  out.val_loss = fitted.value("val_loss", std::nan(""));
  out.best_iter = fitted.value("best_iter", std::size_t{0});
  const std::size_t width = prediction_width(task, n_classes);
  for (const auto& path : predict_paths) {
    proc.send({{"op", "predict"}, {"data", std::filesystem::absolute(path).string()}});
    const auto frame = proc.expect("predictions");
    const auto& rows = frame.at("rows");
    PredictionMatrix pred(rows.size(), width);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& row = rows[r];
      if (row.size() != width) {
        throw ContractError("adapter reported " + std::to_string(row.size()) + " prediction columns, dataset has " +
                            std::to_string(width));
      }
      for (std::size_t c = 0; c < width; ++c) pred(r, c) = row[c].get<double>();
    }
    out.predictions.push_back(std::move(pred));
  }
  proc.send({{"op", "shutdown"}});
  proc.wait_exit();
  return out;
}

}  // namespace tabbench
