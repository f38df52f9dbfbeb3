#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "scmoa/consensus.hpp"

namespace scmoa {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_command(const std::string& templ,
                                       const std::string& solution_file) {
  std::vector<std::string> argv;
  std::istringstream in(templ);
  std::string word;
  while (in >> word) {
    size_t pos;
    while ((pos = word.find("{solution_file}")) != std::string::npos) {
      word.replace(pos, std::strlen("{solution_file}"), solution_file);
    }
    argv.push_back(word);
  }
  return argv;
}

fs::path make_scratch_dir() {
  static std::atomic<uint64_t> counter{0};
  fs::path base = fs::temp_directory_path();
  fs::path dir = base / ("scmoa-exec-" + std::to_string(::getpid()) + "-" +
                         std::to_string(counter.fetch_add(1)));
  fs::create_directories(dir);
  return dir;
}

struct ChildResult {
  std::string out;
  std::string err;
  int exit_status = -1;
  bool timed_out = false;
  bool spawn_failed = false;
};

ChildResult run_child(const std::vector<std::string>& argv, const std::string& stdin_data,
                      const fs::path& workdir, const ExecLimits& limits) {
  // A child that exits without draining stdin must not kill the parent.
  static const bool sigpipe_ignored = [] {
    signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)sigpipe_ignored;

  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0 || pipe(err_pipe) != 0)
    throw Error(ErrorCode::kExecutorFailure, "pipe() failed");

  pid_t pid = fork();
  if (pid < 0) throw Error(ErrorCode::kExecutorFailure, "fork() failed");

  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    dup2(err_pipe[1], STDERR_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    close(err_pipe[0]);
    close(err_pipe[1]);
    if (chdir(workdir.c_str()) != 0) _exit(127);
    if (limits.mem_mb > 0) {
      rlimit rl;
      rl.rlim_cur = rl.rlim_max = static_cast<rlim_t>(limits.mem_mb) * 1024 * 1024;
      setrlimit(RLIMIT_AS, &rl);
    }
    // Own process group so a timeout kill reaps grandchildren too.
    setpgid(0, 0);
    std::vector<char*> cargv;
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);
    execvp(cargv[0], cargv.data());
    _exit(127);
  }

  close(in_pipe[0]);
  close(out_pipe[1]);
  close(err_pipe[1]);
  fcntl(in_pipe[1], F_SETFL, O_NONBLOCK);
  fcntl(out_pipe[0], F_SETFL, O_NONBLOCK);
  fcntl(err_pipe[0], F_SETFL, O_NONBLOCK);

  ChildResult result;
  size_t stdin_written = 0;
  bool stdin_open = true;
  bool out_open = true, err_open = true;
  auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(limits.wall_ms);

  while (out_open || err_open || stdin_open) {
    auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      result.timed_out = true;
      kill(-pid, SIGKILL);
      kill(pid, SIGKILL);
      break;
    }
    int remaining = static_cast<int>(
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count());

    pollfd fds[3];
    nfds_t nfds = 0;
    int idx_in = -1, idx_out = -1, idx_err = -1;
    if (stdin_open) {
      idx_in = nfds;
      fds[nfds++] = {in_pipe[1], POLLOUT, 0};
    }
    if (out_open) {
      idx_out = nfds;
      fds[nfds++] = {out_pipe[0], POLLIN, 0};
    }
    if (err_open) {
      idx_err = nfds;
      fds[nfds++] = {err_pipe[0], POLLIN, 0};
    }
    int rc = poll(fds, nfds, std::min(remaining, 50));
    if (rc < 0 && errno != EINTR)
      throw Error(ErrorCode::kExecutorFailure, "poll() failed");

    char buf[4096];
    if (idx_in >= 0 && (fds[idx_in].revents & (POLLOUT | POLLERR | POLLHUP))) {
      if (fds[idx_in].revents & (POLLERR | POLLHUP)) {
        close(in_pipe[1]);
        stdin_open = false;
      } else {
        ssize_t n = write(in_pipe[1], stdin_data.data() + stdin_written,
                          stdin_data.size() - stdin_written);
        if (n > 0) stdin_written += static_cast<size_t>(n);
        if (n < 0 && errno != EAGAIN && errno != EINTR) {
          close(in_pipe[1]);
          stdin_open = false;
        }
        if (stdin_written >= stdin_data.size() && stdin_open) {
          close(in_pipe[1]);
          stdin_open = false;
        }
      }
    }
    if (idx_out >= 0 && (fds[idx_out].revents & (POLLIN | POLLHUP))) {
      ssize_t n = read(out_pipe[0], buf, sizeof(buf));
      if (n > 0) {
        result.out.append(buf, static_cast<size_t>(n));
      } else if (n == 0 || (n < 0 && errno != EAGAIN && errno != EINTR)) {
        close(out_pipe[0]);
        out_open = false;
      }
    }
    if (idx_err >= 0 && (fds[idx_err].revents & (POLLIN | POLLHUP))) {
      ssize_t n = read(err_pipe[0], buf, sizeof(buf));
      if (n > 0) {
        result.err.append(buf, static_cast<size_t>(n));
      } else if (n == 0 || (n < 0 && errno != EAGAIN && errno != EINTR)) {
        close(err_pipe[0]);
        err_open = false;
      }
    }
  }
  if (stdin_open) close(in_pipe[1]);
  if (out_open) close(out_pipe[0]);
  if (err_open) close(err_pipe[0]);

  int status = 0;
  waitpid(pid, &status, 0);
  if (WIFEXITED(status)) {
    result.exit_status = WEXITSTATUS(status);
    if (result.exit_status == 127 && result.out.empty() && !result.timed_out)
      result.spawn_failed = true;
  } else {
    result.exit_status = -1;
  }
  return result;
}

}  // namespace

std::vector<TestResult> run_tests(const std::string& solution_source,
                                  const std::vector<TestCase>& tests,
                                  const ExecConfig& config) {
  std::vector<TestResult> results;
  results.reserve(tests.size());
  for (const auto& test : tests) {
    fs::path dir = make_scratch_dir();
    fs::path solution = dir / ("solution" + config.solution_suffix);
    {
      std::ofstream out(solution);
      if (!out) throw Error(ErrorCode::kExecutorFailure, "cannot write " + solution.string());
      out << solution_source;
    }
    std::vector<std::string> argv = split_command(config.command_template, solution.string());
    if (argv.empty())
      throw Error(ErrorCode::kExecutorFailure, "empty executor command template");

    ChildResult child = run_child(argv, test.stdin_data, dir, config.limits);
    std::error_code ec;
    fs::remove_all(dir, ec);

    if (child.spawn_failed && child.err.empty())
      throw Error(ErrorCode::kExecutorFailure,
                  "executor command could not be spawned: " + argv.front());

    TestResult r;
    r.name = test.name;
    r.stdout_text = child.out;
    r.stderr_text = child.err;
    r.timed_out = child.timed_out;
    r.passed = !child.timed_out && child.exit_status == 0 &&
               outputs_match(child.out, test.expected_stdout);
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace scmoa
