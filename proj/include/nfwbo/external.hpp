#pragma once

#include "nfwbo/objectives.hpp"

#include <json.hpp>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <memory>
#include <mutex>
#include <string>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace nfwbo {

/// A child process driven over line-delimited JSON. Requests are serialized; after any
/// failure the child is killed and a fresh one is started on the next request.
class ExternalEvaluator {
public:
    ExternalEvaluator(std::string command, double timeout_seconds)
        : command_(std::move(command)), timeout_(timeout_seconds) {
        if (command_.empty()) throw std::invalid_argument("external objective: empty command");
        if (!(timeout_ > 0.0)) throw std::invalid_argument("external objective: timeout must be positive");
    }
    ExternalEvaluator(const ExternalEvaluator&) = delete;
    ExternalEvaluator& operator=(const ExternalEvaluator&) = delete;
    ~ExternalEvaluator() { shutdown(); }

    /// Returns y and, when the child reports one, the cost.
    std::pair<double, std::optional<double>> request(const Vector& x, const FidelityVector& z, std::uint64_t seed) {
        std::lock_guard lock(mutex_);
        if (pid_ <= 0) start();
        const std::int64_t id = next_id_++;
        nlohmann::json req = {{"id", id},
                              {"x", std::vector<double>(x.data(), x.data() + x.size())},
                              {"z", {z[0], z[1]}},
                              {"seed", seed}};
        try {
            send_line(req.dump() + "\n");
            const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(timeout_));
            for (;;) {
                const std::string line = read_line(deadline);
                const auto first = line.find_first_not_of(" \t\r");
                if (first == std::string::npos || line[first] != '{') continue;
                return parse(line, id);
            }
        } catch (const EvaluationFailure&) {
            kill_child();
            throw;
        }
    }

    const std::string& stderr_tail() const { return stderr_; }

private:
    using Clock = std::chrono::steady_clock;

    std::pair<double, std::optional<double>> parse(const std::string& line, std::int64_t id) const {
        nlohmann::json msg;
        try {
            msg = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            throw EvaluationFailure("external objective: malformed response line: " + line);
        }
        if (!msg.is_object() || !msg.contains("id") || !msg["id"].is_number_integer())
            throw EvaluationFailure("external objective: response without integer id: " + line);
        if (msg["id"].get<std::int64_t>() != id)
            throw EvaluationFailure("external objective: expected id " + std::to_string(id) + ", got: " + line);
        if (!msg.contains("y") || !msg["y"].is_number())
            throw EvaluationFailure("external objective: response without numeric y: " + line);
        const double y = msg["y"].get<double>();
        if (!std::isfinite(y)) throw EvaluationFailure("external objective: non-finite y: " + line);
        std::optional<double> cost;
        if (msg.contains("cost") && !msg["cost"].is_null()) {
            if (!msg["cost"].is_number() || !(msg["cost"].get<double>() > 0.0))
                throw EvaluationFailure("external objective: cost must be a positive number: " + line);
            cost = msg["cost"].get<double>();
        }
        return {y, cost};
    }

    void start() {
        int in[2], out[2], err[2];
        if (socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, in) != 0) sys_fail("socketpair");
        if (pipe2(out, O_CLOEXEC) != 0 || pipe2(err, O_CLOEXEC) != 0) sys_fail("pipe");
        posix_spawn_file_actions_t fa;
        posix_spawn_file_actions_init(&fa);
        posix_spawn_file_actions_adddup2(&fa, in[1], STDIN_FILENO);
        posix_spawn_file_actions_adddup2(&fa, out[1], STDOUT_FILENO);
        posix_spawn_file_actions_adddup2(&fa, err[1], STDERR_FILENO);
        std::string sh = "/bin/sh", flag = "-c";
        char* argv[] = {sh.data(), flag.data(), command_.data(), nullptr};
        pid_t pid = 0;
        const int rc = posix_spawn(&pid, "/bin/sh", &fa, nullptr, argv, environ);
        posix_spawn_file_actions_destroy(&fa);
        ::close(in[1]);
        ::close(out[1]);
        ::close(err[1]);
        if (rc != 0) {
            ::close(in[0]);
            ::close(out[0]);
            ::close(err[0]);
            throw EvaluationFailure(std::string("external objective: spawn failed: ") + std::strerror(rc));
        }
        pid_ = pid;
        to_child_ = in[0];
        from_child_ = out[0];
        err_child_ = err[0];
        fcntl(from_child_, F_SETFL, O_NONBLOCK);
        fcntl(err_child_, F_SETFL, O_NONBLOCK);
        buffer_.clear();
        stderr_.clear();
    }

    [[noreturn]] static void sys_fail(const char* what) {
        throw EvaluationFailure(std::string("external objective: ") + what + ": " + std::strerror(errno));
    }

    void send_line(const std::string& s) {
        std::size_t done = 0;
        while (done < s.size()) {
            const ssize_t n = ::send(to_child_, s.data() + done, s.size() - done, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                fail_with_exit("write to child failed");
            }
            done += static_cast<std::size_t>(n);
        }
    }

    std::string read_line(Clock::time_point deadline) {
        for (;;) {
            const auto nl = buffer_.find('\n');
            if (nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                return line;
            }
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
            if (left <= 0)
                throw EvaluationFailure("external objective: timeout after " + std::to_string(timeout_) +
                                        " s; child terminated" + diagnostics());
            pollfd fds[2] = {{from_child_, POLLIN, 0}, {err_child_, POLLIN, 0}};
            const int pr = ::poll(fds, err_child_ >= 0 ? 2 : 1, static_cast<int>(std::min<long long>(left, 1 << 30)));
            if (pr < 0 && errno != EINTR) sys_fail("poll");
            if (err_child_ >= 0 && (fds[1].revents & (POLLIN | POLLHUP))) drain_stderr();
            if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
                char chunk[4096];
                const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
                if (n > 0) {
                    buffer_.append(chunk, static_cast<std::size_t>(n));
                } else if (n == 0) {
                    fail_with_exit("child closed its output");
                } else if (errno != EAGAIN && errno != EINTR) {
                    sys_fail("read");
                }
            }
        }
    }

    void drain_stderr() {
        char chunk[4096];
        for (;;) {
            const ssize_t n = ::read(err_child_, chunk, sizeof chunk);
            if (n > 0) {
                stderr_.append(chunk, static_cast<std::size_t>(n));
                if (stderr_.size() > 8192) stderr_.erase(0, stderr_.size() - 8192);
            } else {
                if (n == 0) {
                    ::close(err_child_);
                    err_child_ = -1;
                }
                return;
            }
        }
    }

    std::string diagnostics() {
        if (err_child_ >= 0) drain_stderr();
        return stderr_.empty() ? std::string() : "; stderr: " + stderr_;
    }

    [[noreturn]] void fail_with_exit(const std::string& what) {
        std::string msg = "external objective: " + what;
        int status = 0;
        const auto deadline = Clock::now() + std::chrono::milliseconds(500);
        pid_t r = 0;
        while ((r = ::waitpid(pid_, &status, WNOHANG)) == 0 && Clock::now() < deadline) ::usleep(1000);
        if (r == pid_) {
            pid_ = -1;
            if (WIFEXITED(status)) msg += "; exit status " + std::to_string(WEXITSTATUS(status));
            else if (WIFSIGNALED(status)) msg += "; killed by signal " + std::to_string(WTERMSIG(status));
        }
        throw EvaluationFailure(msg + diagnostics());
    }

    void close_fds() {
        for (int* fd : {&to_child_, &from_child_, &err_child_})
            if (*fd >= 0) {
                ::close(*fd);
                *fd = -1;
            }
    }

    void kill_child() {
        if (pid_ > 0) {
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, nullptr, 0);
            pid_ = -1;
        }
        close_fds();
    }

    void shutdown() {
        if (pid_ > 0) {
            ::close(to_child_);
            to_child_ = -1;
            const auto deadline = Clock::now() + std::chrono::milliseconds(200);
            while (::waitpid(pid_, nullptr, WNOHANG) == 0) {
                if (Clock::now() >= deadline) {
                    kill_child();
                    return;
                }
                ::usleep(1000);
            }
            pid_ = -1;
        }
        close_fds();
    }

    std::string command_;
    double timeout_;
    std::mutex mutex_;
    pid_t pid_ = -1;
    int to_child_ = -1, from_child_ = -1, err_child_ = -1;
    std::string buffer_, stderr_;
    std::int64_t next_id_ = 0;
};

/// Objective backed by an external process; cost falls back to `cm` when the child omits it.
inline ObjectiveSpec external_objective(const std::string& command, double timeout_seconds, Eigen::Index dim,
                                        const CostModel& cm = {}) {
    if (dim < 1) throw std::invalid_argument("external objective: dim must be >= 1");
    cm.validate();
    auto client = std::make_shared<ExternalEvaluator>(command, timeout_seconds);
    ObjectiveSpec spec;
    spec.name = "external";
    spec.design_box = Box::unit(dim);
    spec.evaluate = [client, cm](const Vector& x, const FidelityVector& z, std::uint64_t seed) {
        const auto [y, cost] = client->request(x, z, seed);
        return Observation{y, cost ? *cost : cm(z)};
    };
    return spec;
}

}  // namespace nfwbo
