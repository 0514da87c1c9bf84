#pragma once

// Host side of the program-execution protocol.
//
// The interpreter shim reads one JSON object on stdin
//   {"code": "...", "result_var": "ans"}
// and writes one JSON object on stdout
//   {"status": "ok", "value_repr": "13.6875", "value_is_numeric": true,
//    "stdout": "", "error_message": ""}
// with status one of ok / syntax_error / runtime_error / missing_var. The host
// adds TIMEOUT (it killed the process) and SANDBOX_FAILURE (the shim crashed or
// broke the protocol).

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "rmpot/core.hpp"

namespace rmpot {

inline constexpr std::size_t kStdoutLimit = 8 * 1024;

enum class ExecStatus { Ok, SyntaxError, RuntimeError, Timeout, MissingVar, SandboxFailure };

inline std::string to_string(ExecStatus s) {
  switch (s) {
    case ExecStatus::Ok: return "ok";
    case ExecStatus::SyntaxError: return "syntax_error";
    case ExecStatus::RuntimeError: return "runtime_error";
    case ExecStatus::Timeout: return "timeout";
    case ExecStatus::MissingVar: return "missing_var";
    case ExecStatus::SandboxFailure: return "sandbox_failure";
  }
  return "?";
}

struct SandboxRequest {
  std::string code;
  std::string result_var = "ans";
  double timeout_s = 10.0;
  int mem_limit_mb = 512;
};

struct ExecOutcome {
  ExecStatus status = ExecStatus::SandboxFailure;
  std::string value;  // populated iff status == Ok
  bool value_is_numeric = false;
  std::string stdout_text;
  std::string error_message;
  double duration_s = 0.0;

  static ExecOutcome failure(ExecStatus s, std::string message, double duration = 0.0) {
    ExecOutcome o;
    o.status = s;
    o.error_message = std::move(message);
    o.duration_s = duration;
    return o;
  }
};

class Sandbox {
 public:
  virtual ~Sandbox() = default;
  virtual ExecOutcome run(const SandboxRequest& req) = 0;
};

inline void validate(const SandboxRequest& req) {
  if (trim_view(req.code).empty()) throw PreconditionError("sandbox request has empty code");
  if (!is_identifier(req.result_var)) throw PreconditionError("result_var is not an identifier");
  if (!(req.timeout_s > 0)) throw PreconditionError("timeout must be positive");
}

inline std::string encode_request(const SandboxRequest& req) {
  nlohmann::json j = {{"code", req.code}, {"result_var", req.result_var}};
  return j.dump();
}

inline std::string truncate_stdout(std::string s) {
  if (s.size() > kStdoutLimit) s.resize(kStdoutLimit);
  return s;
}

// Maps the shim's reply bytes to an outcome; anything off-contract is a
// SANDBOX_FAILURE.
inline ExecOutcome decode_reply(std::string_view bytes, int exit_code = 0) {
  if (exit_code != 0)
    return ExecOutcome::failure(ExecStatus::SandboxFailure,
                                "shim exited with status " + std::to_string(exit_code));
  auto body = trim_view(bytes);
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("status") || !j["status"].is_string())
    return ExecOutcome::failure(ExecStatus::SandboxFailure, "malformed protocol reply");

  ExecOutcome o;
  auto status = j["status"].get<std::string>();
  if (status == "ok") {
    o.status = ExecStatus::Ok;
  } else if (status == "syntax_error") {
    o.status = ExecStatus::SyntaxError;
  } else if (status == "runtime_error") {
    o.status = ExecStatus::RuntimeError;
  } else if (status == "missing_var") {
    o.status = ExecStatus::MissingVar;
  } else {
    return ExecOutcome::failure(ExecStatus::SandboxFailure, "unknown status '" + status + "'");
  }
  auto str_field = [&](const char* key) -> std::string {
    auto it = j.find(key);
    return it != j.end() && it->is_string() ? it->get<std::string>() : std::string{};
  };
  o.stdout_text = truncate_stdout(str_field("stdout"));
  o.error_message = str_field("error_message");
  if (o.status == ExecStatus::Ok) {
    auto it = j.find("value_repr");
    if (it == j.end() || !it->is_string())
      return ExecOutcome::failure(ExecStatus::SandboxFailure, "ok reply without value_repr");
    o.value = it->get<std::string>();
    o.value_is_numeric = j.value("value_is_numeric", false);
  }
  return o;
}

// Runs `{interpreter} {shim}` once per request in its own process group,
// under an address-space limit, and kills it at the deadline.
class SubprocessSandbox final : public Sandbox {
 public:
  // Installs SIG_IGN for SIGPIPE process-wide: a shim that exits before
  // reading its request must surface as EPIPE, not kill the host.
  SubprocessSandbox(std::string interpreter, std::string shim_path)
      : interpreter_(std::move(interpreter)), shim_(std::move(shim_path)) {
    static std::once_flag once;
    std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
  }

  ExecOutcome run(const SandboxRequest& req) override {
    validate(req);
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    int in_pipe[2];
    int out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) return spawn_failure("pipe", elapsed());
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
      ::close(in_pipe[0]);
      ::close(in_pipe[1]);
      return spawn_failure("pipe", elapsed());
    }

    std::vector<char*> argv = {const_cast<char*>(interpreter_.c_str()),
                               const_cast<char*>(shim_.c_str()), nullptr};
    rlimit mem{};
    mem.rlim_cur = mem.rlim_max = static_cast<rlim_t>(req.mem_limit_mb) * 1024 * 1024;

    pid_t pid = ::fork();
    if (pid < 0) {
      for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
      return spawn_failure("fork", elapsed());
    }
    if (pid == 0) {
      // child: async-signal-safe calls only
      ::setpgid(0, 0);
      ::dup2(in_pipe[0], STDIN_FILENO);
      ::dup2(out_pipe[1], STDOUT_FILENO);
      int devnull = ::open("/dev/null", O_WRONLY);
      if (devnull >= 0) ::dup2(devnull, STDERR_FILENO);
      ::setrlimit(RLIMIT_AS, &mem);
      ::execvp(argv[0], argv.data());
      ::_exit(127);
    }
    ::setpgid(pid, pid);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);

    const std::string payload = encode_request(req);
    std::size_t written = 0;
    int to_child = in_pipe[1];
    int from_child = out_pipe[0];
    ::fcntl(to_child, F_SETFL, O_NONBLOCK);
    std::string reply;
    bool timed_out = false;
    bool overflow = false;

    while (from_child >= 0) {
      double remaining = req.timeout_s - elapsed();
      if (remaining <= 0) {
        timed_out = true;
        break;
      }
      pollfd fds[2];
      int nfds = 0;
      fds[nfds++] = {from_child, POLLIN, 0};
      if (to_child >= 0) fds[nfds++] = {to_child, POLLOUT, 0};
      int rc = ::poll(fds, static_cast<nfds_t>(nfds), static_cast<int>(remaining * 1000) + 1);
      if (rc < 0) {
        if (errno == EINTR) continue;
        break;
      }
      if (to_child >= 0 && nfds > 1 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
        ssize_t n = ::write(to_child, payload.data() + written, payload.size() - written);
        if (n > 0) written += static_cast<std::size_t>(n);
        if (n < 0 && errno != EAGAIN && errno != EINTR) written = payload.size();
        if (written >= payload.size()) {
          ::close(to_child);
          to_child = -1;
        }
      }
      if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
        char buf[8192];
        ssize_t n = ::read(from_child, buf, sizeof(buf));
        if (n > 0) {
          reply.append(buf, static_cast<std::size_t>(n));
          if (reply.size() > kReplyLimit) {
            overflow = true;
            break;
          }
        } else if (n == 0 || (errno != EAGAIN && errno != EINTR)) {
          ::close(from_child);
          from_child = -1;
        }
      }
    }
    if (to_child >= 0) ::close(to_child);
    if (from_child >= 0) ::close(from_child);

    int wstatus = 0;
    bool reaped = false;
    while (!timed_out && !overflow) {
      // stdout closed; the process still has to exit inside the budget
      pid_t r = ::waitpid(pid, &wstatus, WNOHANG);
      if (r == pid) {
        reaped = true;
        break;
      }
      if (r < 0 && errno != EINTR) break;
      if (elapsed() >= req.timeout_s) {
        timed_out = true;
        break;
      }
      ::usleep(2000);
    }
    if (!reaped) {
      ::kill(-pid, SIGKILL);
      while (::waitpid(pid, &wstatus, 0) < 0 && errno == EINTR) {
      }
    }
    // stray grandchildren die with the group
    ::kill(-pid, SIGKILL);

    const double took = elapsed();
    if (timed_out)
      return ExecOutcome::failure(ExecStatus::Timeout,
                                  "killed after " + std::to_string(req.timeout_s) + "s", took);
    if (overflow)
      return ExecOutcome::failure(ExecStatus::SandboxFailure, "protocol reply exceeds size limit", took);
    int exit_code = WIFEXITED(wstatus) ? WEXITSTATUS(wstatus) : 128 + WTERMSIG(wstatus);
    auto out = decode_reply(reply, exit_code);
    out.duration_s = took;
    return out;
  }

 private:
  static constexpr std::size_t kReplyLimit = 4 * 1024 * 1024;

  static ExecOutcome spawn_failure(const char* what, double took) {
    return ExecOutcome::failure(ExecStatus::SandboxFailure,
                                std::string(what) + " failed: " + std::strerror(errno), took);
  }

  std::string interpreter_;
  std::string shim_;
};

}  // namespace rmpot
