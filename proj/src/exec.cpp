#include "lpml/exec.hpp"

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

namespace lpml {

namespace {

constexpr int kKillGraceSeconds = 2;

void set_nonblocking(int fd) {
    int flags = fcntl(fd, F_GETFL, 0);
    fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

void close_fd(int& fd) {
    if (fd >= 0) {
        ::close(fd);
        fd = -1;
    }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

ExecutionResult execute(std::string_view code, const ExecutionLimits& limits) {
    if (limits.interpreter_command.empty()) {
        throw ExecError(ExecError::Kind::InterpreterNotFound, "interpreter command is empty");
    }
    // A child dying mid-write must surface as EPIPE, not kill the process.
    static std::once_flag sigpipe_once;
    std::call_once(sigpipe_once, [] { signal(SIGPIPE, SIG_IGN); });

    int in_pipe[2], out_pipe[2], err_pipe[2], exec_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0 || pipe(err_pipe) != 0 || pipe(exec_pipe) != 0) {
        throw ExecError(ExecError::Kind::SpawnFailure,
                        std::string("pipe: ") + std::strerror(errno));
    }
    // exec_pipe reports an exec failure (errno) back to the parent; it
    // closes silently on success.
    fcntl(exec_pipe[1], F_SETFD, FD_CLOEXEC);

    const auto start = std::chrono::steady_clock::now();
    pid_t pid = fork();
    if (pid < 0) {
        throw ExecError(ExecError::Kind::SpawnFailure,
                        std::string("fork: ") + std::strerror(errno));
    }

    if (pid == 0) {
        setpgid(0, 0); // own process group, so the timeout kill reaps children too
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(err_pipe[1], STDERR_FILENO);
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        ::close(err_pipe[0]);
        ::close(err_pipe[1]);
        ::close(exec_pipe[0]);

        std::vector<char*> argv;
        argv.reserve(limits.interpreter_command.size() + 1);
        for (const auto& arg : limits.interpreter_command) {
            argv.push_back(const_cast<char*>(arg.c_str()));
        }
        argv.push_back(nullptr);
        execvp(argv[0], argv.data());
        int err = errno;
        ssize_t ignored = write(exec_pipe[1], &err, sizeof(err));
        (void)ignored;
        _exit(127);
    }

    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    ::close(exec_pipe[1]);
    int stdin_fd = in_pipe[1];
    int stdout_fd = out_pipe[0];
    int stderr_fd = err_pipe[0];
    int exec_fd = exec_pipe[0];
    set_nonblocking(stdin_fd);
    set_nonblocking(stdout_fd);
    set_nonblocking(stderr_fd);

    ExecutionResult result;
    std::size_t written = 0;
    std::size_t budget = limits.max_output_bytes;
    bool killed = false;
    if (code.empty()) close_fd(stdin_fd);

    auto read_some = [&](int& fd, std::string& into) {
        char buf[4096];
        while (fd >= 0) {
            ssize_t n = read(fd, buf, sizeof(buf));
            if (n > 0) {
                // Respect the combined cap exactly; keep draining after it
                // so the child never blocks on a full pipe.
                std::size_t take = std::min(static_cast<std::size_t>(n), budget);
                if (take > 0) {
                    into.append(buf, take);
                    budget -= take;
                }
                if (take < static_cast<std::size_t>(n)) result.truncated = true;
                continue;
            }
            if (n == 0) {
                close_fd(fd);
                return;
            }
            if (errno == EAGAIN || errno == EWOULDBLOCK) return;
            if (errno == EINTR) continue;
            close_fd(fd);
            return;
        }
    };

    while (stdout_fd >= 0 || stderr_fd >= 0 || stdin_fd >= 0) {
        struct pollfd fds[3];
        int nfds = 0;
        int stdin_slot = -1, stdout_slot = -1, stderr_slot = -1;
        if (stdin_fd >= 0) {
            stdin_slot = nfds;
            fds[nfds++] = {stdin_fd, POLLOUT, 0};
        }
        if (stdout_fd >= 0) {
            stdout_slot = nfds;
            fds[nfds++] = {stdout_fd, POLLIN, 0};
        }
        if (stderr_fd >= 0) {
            stderr_slot = nfds;
            fds[nfds++] = {stderr_fd, POLLIN, 0};
        }

        double remaining = limits.wall_clock_timeout - seconds_since(start);
        if (remaining <= 0 && !killed) {
            result.timed_out = true;
            killed = true;
            kill(-pid, SIGKILL);
            close_fd(stdin_fd);
            remaining = kKillGraceSeconds;
        }
        int timeout_ms = killed ? 100 : static_cast<int>(remaining * 1000) + 1;
        int rc = poll(fds, static_cast<nfds_t>(nfds), std::max(timeout_ms, 1));
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }

        if (stdin_slot >= 0 && (fds[stdin_slot].revents & (POLLOUT | POLLERR | POLLHUP))) {
            if (fds[stdin_slot].revents & (POLLERR | POLLHUP)) {
                close_fd(stdin_fd); // child closed stdin (or died) before reading it all
            } else {
                ssize_t n = write(stdin_fd, code.data() + written, code.size() - written);
                if (n > 0) {
                    written += static_cast<std::size_t>(n);
                    if (written == code.size()) close_fd(stdin_fd);
                } else if (n < 0 && errno != EAGAIN && errno != EINTR) {
                    close_fd(stdin_fd);
                }
            }
        }
        if (stdout_slot >= 0 && (fds[stdout_slot].revents & (POLLIN | POLLHUP | POLLERR))) {
            read_some(stdout_fd, result.stdout_text);
        }
        if (stderr_slot >= 0 && (fds[stderr_slot].revents & (POLLIN | POLLHUP | POLLERR))) {
            read_some(stderr_fd, result.stderr_text);
        }
        if (killed && seconds_since(start) > limits.wall_clock_timeout + kKillGraceSeconds) {
            break; // give up draining; pipes are abandoned below
        }
    }
    close_fd(stdin_fd);
    close_fd(stdout_fd);
    close_fd(stderr_fd);

    // exec failure report, if any
    {
        int err = 0;
        ssize_t n = read(exec_fd, &err, sizeof(err));
        ::close(exec_fd);
        if (n == static_cast<ssize_t>(sizeof(err))) {
            int status = 0;
            waitpid(pid, &status, 0);
            if (err == ENOENT) {
                throw ExecError(ExecError::Kind::InterpreterNotFound,
                                "interpreter not found: " + limits.interpreter_command.front());
            }
            throw ExecError(ExecError::Kind::SpawnFailure,
                            std::string("exec: ") + std::strerror(err));
        }
    }

    int status = 0;
    waitpid(pid, &status, 0);
    if (WIFEXITED(status)) {
        result.status = {false, WEXITSTATUS(status)};
    } else if (WIFSIGNALED(status)) {
        result.status = {true, WTERMSIG(status)};
    }
    result.duration = seconds_since(start);
    if (result.timed_out && result.duration < limits.wall_clock_timeout) {
        result.duration = limits.wall_clock_timeout;
    }
    return result;
}

Document format_feedback(const std::vector<ExecutionResult>& results) {
    Document doc;
    for (const auto& result : results) {
        std::string content = "\n";
        content += result.stdout_text;
        if (!result.stderr_text.empty()) {
            if (!content.empty() && content.back() != '\n') content += '\n';
            content += result.stderr_text;
        }
        if (!content.empty() && content.back() != '\n') content += '\n';
        if (result.timed_out) content += "[execution timed out]\n";
        if (result.truncated) content += "[output truncated]\n";
        doc.nodes.push_back(Node::element("OUTPUT", {{"tool", "PYTHON"}},
                                          {Node::text_node(std::move(content))}));
    }
    return doc;
}

} // namespace lpml
