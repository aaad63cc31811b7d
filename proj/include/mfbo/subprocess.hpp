#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mfbo/objective.hpp"

namespace mfbo {

/// Objective evaluated by an external child process speaking a line-delimited
/// protocol on stdin/stdout (UTF-8, one JSON message per line):
///
///   parent -> child:  {"x": [<real>...], "z": <real>}
///   child -> parent:  {"y": <real>}  or  {"y": <real>, "cost": <real>}
///
/// The child must answer requests in order. A "cost" field in the response
/// overrides the configured cost model for that observation. One request is
/// in flight at a time; any child failure (exit, malformed reply, timeout)
/// surfaces as EvaluationError.
class SubprocessObjective final : public MultiFidelityObjective {
 public:
  SubprocessObjective(std::string command, BoxDomain domain, CostFunction cost_model, double sigma,
                      double timeout_seconds = 3600.0)
      : command_(std::move(command)),
        domain_(std::move(domain)),
        cost_(std::move(cost_model)),
        sigma_(sigma),
        timeout_seconds_(timeout_seconds) {
    spawn();
  }

  SubprocessObjective(const SubprocessObjective&) = delete;
  SubprocessObjective& operator=(const SubprocessObjective&) = delete;

  ~SubprocessObjective() override { shutdown(); }

  const BoxDomain& domain() const override { return domain_; }
  double cost(double z) const override { return cost_(z); }
  double sigma() const override { return sigma_; }

  /// No analytic mean is available for an external workload.
  std::optional<double> mean(std::span<const double>, double) const override { return std::nullopt; }

  Observation evaluate(std::span<const double> x, double z, Rng&) override {
    if (!domain_.contains(x)) throw std::domain_error("evaluate: point outside domain");
    if (z < 0.0 || z > 1.0) throw std::domain_error("evaluate: fidelity outside [0, 1]");
    std::lock_guard<std::mutex> lock(mutex_);
    if (child_pid_ < 0) throw EvaluationError("subprocess objective: child is not running");

    nlohmann::json request;
    request["x"] = std::vector<double>(x.begin(), x.end());
    request["z"] = z;
    write_line(request.dump());

    const std::string line = read_line();
    nlohmann::json response;
    try {
      response = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw EvaluationError(std::string("subprocess objective: malformed response: ") + e.what());
    }
    if (!response.contains("y") || !response["y"].is_number()) {
      throw EvaluationError("subprocess objective: response missing numeric \"y\": " + line);
    }
    const double y = response["y"].get<double>();
    double observed_cost = cost_(z);
    if (response.contains("cost")) {
      if (!response["cost"].is_number()) {
        throw EvaluationError("subprocess objective: non-numeric \"cost\": " + line);
      }
      observed_cost = response["cost"].get<double>();
    }
    return Observation{std::vector<double>(x.begin(), x.end()), z, y, observed_cost, next_seq()};
  }

 private:
  void spawn() {
    // A write to a child that already exited must surface as EPIPE, not kill
    // the process.
    static std::once_flag sigpipe_once;
    std::call_once(sigpipe_once, [] { signal(SIGPIPE, SIG_IGN); });

    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0) throw EvaluationError("subprocess objective: pipe() failed");
    if (pipe(from_child) != 0) {
      close(to_child[0]);
      close(to_child[1]);
      throw EvaluationError("subprocess objective: pipe() failed");
    }
    const pid_t pid = fork();
    if (pid < 0) {
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      throw EvaluationError("subprocess objective: fork() failed");
    }
    if (pid == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    child_pid_ = pid;
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
  }

  void shutdown() {
    if (write_fd_ >= 0) close(write_fd_);
    if (read_fd_ >= 0) close(read_fd_);
    write_fd_ = read_fd_ = -1;
    if (child_pid_ > 0) {
      int status = 0;
      if (waitpid(child_pid_, &status, WNOHANG) == 0) {
        kill(child_pid_, SIGTERM);
        waitpid(child_pid_, &status, 0);
      }
      child_pid_ = -1;
    }
  }

  void write_line(const std::string& payload) {
    std::string line = payload;
    line.push_back('\n');
    std::size_t off = 0;
    while (off < line.size()) {
      const ssize_t n = write(write_fd_, line.data() + off, line.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw EvaluationError("subprocess objective: write to child failed (child gone?)");
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line() {
    while (true) {
      const std::size_t pos = buffer_.find('\n');
      if (pos != std::string::npos) {
        std::string line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        return line;
      }
      pollfd pfd{read_fd_, POLLIN, 0};
      const int timeout_ms = timeout_seconds_ <= 0 ? -1 : static_cast<int>(timeout_seconds_ * 1000.0);
      const int ready = poll(&pfd, 1, timeout_ms);
      if (ready == 0) throw EvaluationError("subprocess objective: response timed out");
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw EvaluationError("subprocess objective: poll() failed");
      }
      char chunk[4096];
      const ssize_t n = read(read_fd_, chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR) continue;
        throw EvaluationError("subprocess objective: read from child failed");
      }
      if (n == 0) throw EvaluationError("subprocess objective: child closed the stream");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  std::string command_;
  BoxDomain domain_;
  CostFunction cost_;
  double sigma_;
  double timeout_seconds_;

  std::mutex mutex_;
  pid_t child_pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
  std::string buffer_;
};

}  // namespace mfbo
