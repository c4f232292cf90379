#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "verbatim/error.hpp"
#include "verbatim/kernel.hpp"

extern char** environ;

namespace verbatim {

using nlohmann::json;

ProcessKernel::ProcessKernel(std::string session_id, std::vector<std::string> argv,
                             std::chrono::milliseconds grace)
    : session_id_(std::move(session_id)), argv_(std::move(argv)), grace_(grace) {
  if (argv_.empty()) throw Error(Errc::InvalidArgument, "kernel command is empty");
  // a dead child must surface as EPIPE, not terminate the host
  signal(SIGPIPE, SIG_IGN);
}

ProcessKernel::~ProcessKernel() { stop(); }

void ProcessKernel::start() {
  int in_pipe[2];
  int out_pipe[2];
  if (pipe2(in_pipe, O_CLOEXEC) != 0 || pipe2(out_pipe, O_CLOEXEC) != 0) {
    throw Error(Errc::Io, std::string("pipe: ") + std::strerror(errno));
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

  std::vector<char*> args;
  for (auto& a : argv_) args.push_back(a.data());
  args.push_back(nullptr);
  pid_t pid = -1;
  const int rc = posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  close(in_pipe[0]);
  close(out_pipe[1]);
  if (rc != 0) {
    close(in_pipe[1]);
    close(out_pipe[0]);
    throw Error(Errc::Io, "cannot start kernel '" + argv_[0] + "': " + std::strerror(rc));
  }
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  buffer_.clear();
}

void ProcessKernel::stop() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    if (waitpid(pid_, &status, WNOHANG) == 0) {
      kill(pid_, SIGKILL);
      waitpid(pid_, &status, 0);
    }
  }
  pid_ = -1;
}

KernelMessage ProcessKernel::roundtrip(const KernelMessage& request,
                                       std::chrono::milliseconds deadline) {
  if (pid_ <= 0) throw Error(Errc::UnknownSession, "kernel for " + session_id_ + " is not running");
  std::string line = request.to_line() + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(to_child_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      stop();
      throw Error(Errc::ProtocolError, "kernel closed its input");
    }
    written += static_cast<std::size_t>(n);
  }
  const auto until = std::chrono::steady_clock::now() + deadline;
  while (true) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      const std::string reply = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return KernelMessage::from_line(reply);
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        until - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      stop();
      throw Error(Errc::Timeout, "kernel did not answer within " +
                                     std::to_string(deadline.count()) + " ms");
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = poll(&pfd, 1, static_cast<int>(left.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready <= 0) continue;
    char chunk[4096];
    const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      stop();
      throw Error(Errc::ProtocolError, "kernel exited unexpectedly");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

void ProcessKernel::init(const KernelInit& init) {
  stop();
  start();
  timeout_ = init.timeout;
  KernelMessage m;
  m.kind = MessageKind::Init;
  m.session_id = session_id_;
  m.payload = init.to_json();
  expect_ready(roundtrip(m, grace_ + std::chrono::seconds(5)));
}

ExecutionResult ProcessKernel::execute(const std::string& cell_id, const std::string& code) {
  KernelMessage m{MessageKind::Execute, session_id_, cell_id, code, nullptr};
  KernelMessage reply;
  try {
    reply = roundtrip(m, timeout_ + grace_);
  } catch (const Error& e) {
    if (e.code() != Errc::Timeout) throw;
    // the child was killed; a fresh kernel needs init again
    ExecutionResult r;
    r.status = ExecStatus::Timeout;
    r.logs = "TimeoutError: kernel unresponsive, process terminated\n";
    return r;
  }
  if (reply.cell_id != cell_id) throw Error(Errc::ProtocolError, "cell id mismatch");
  if (reply.payload.contains("error")) expect_ready(reply);
  return ExecutionResult::from_json(reply.payload);
}

ExecutionResult ProcessKernel::dry_parse(const std::string& cell_id, const std::string& code) {
  KernelMessage m{MessageKind::Execute, session_id_, cell_id, code, json{{"parse_only", true}}};
  const auto reply = roundtrip(m, timeout_ + grace_);
  if (reply.cell_id != cell_id) throw Error(Errc::ProtocolError, "cell id mismatch");
  if (reply.payload.contains("error")) expect_ready(reply);
  return ExecutionResult::from_json(reply.payload);
}

void ProcessKernel::reset() {
  expect_ready(roundtrip({MessageKind::Reset, session_id_, std::nullopt, std::nullopt, nullptr},
                         grace_ + std::chrono::seconds(5)));
}

void ProcessKernel::shutdown() {
  if (pid_ <= 0) return;
  try {
    expect_ready(roundtrip(
        {MessageKind::Shutdown, session_id_, std::nullopt, std::nullopt, nullptr}, grace_));
  } catch (const Error&) {
    // killed below either way
  }
  stop();
}

}  // namespace verbatim
