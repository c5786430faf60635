#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "pipe/perturbation_layer.hpp"
#include "pipe/results_io.hpp"
#include "pipe/rewrite_engine.hpp"
#include "pipe/toy_envs.hpp"
#include "pipe/wire.hpp"

namespace pipeh::wire {

// ---------------------------------------------------------------------------
// Transport: line-delimited messages over local TCP. The proxy sits between
// an agent client and an environment backend; the backend only ever sees
// original names and never learns which condition is active.
// ---------------------------------------------------------------------------

class TransportError : public std::runtime_error {
public:
    explicit TransportError(const std::string& what) : std::runtime_error(what) {}
};

class LineSocket {
public:
    LineSocket() = default;
    explicit LineSocket(int fd) : fd_(fd) {}
    LineSocket(const LineSocket&) = delete;
    LineSocket& operator=(const LineSocket&) = delete;
    LineSocket(LineSocket&& other) noexcept { *this = std::move(other); }
    LineSocket& operator=(LineSocket&& other) noexcept {
        if (this != &other) {
            close();
            fd_ = other.fd_;
            buf_ = std::move(other.buf_);
            other.fd_ = -1;
        }
        return *this;
    }
    ~LineSocket() { close(); }

    bool valid() const { return fd_ >= 0; }
    int fd() const { return fd_; }

    static LineSocket connect_to(const std::string& host, uint16_t port) {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw TransportError("socket() failed");
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
            ::close(fd);
            throw TransportError("bad address: " + host);
        }
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            ::close(fd);
            throw TransportError("cannot connect to " + host + ":" + std::to_string(port));
        }
        return LineSocket(fd);
    }

    // Reads up to and including the next newline; returns false on EOF.
    bool read_line(std::string& out) {
        while (true) {
            size_t nl = buf_.find('\n');
            if (nl != std::string::npos) {
                out = buf_.substr(0, nl);
                buf_.erase(0, nl + 1);
                if (!out.empty() && out.back() == '\r') out.pop_back();
                return true;
            }
            char chunk[4096];
            ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
            if (n <= 0) return false;
            buf_.append(chunk, static_cast<size_t>(n));
        }
    }

    bool write_line(std::string_view line) {
        size_t sent = 0;
        while (sent < line.size()) {
            ssize_t n = ::send(fd_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
            if (n <= 0) return false;
            sent += static_cast<size_t>(n);
        }
        return true;
    }

    bool write_message(const WireMessage& m) { return write_line(encode(m)); }

    std::optional<WireMessage> read_message(std::string* error_out = nullptr) {
        std::string line;
        if (!read_line(line)) return std::nullopt;
        return decode(line, error_out);
    }

    void shutdown_both() {
        if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    }

    void close() {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_ = -1;
    std::string buf_;
};

class TcpListener {
public:
    TcpListener() = default;
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;
    ~TcpListener() { close(); }

    // Binds 127.0.0.1:port; port 0 picks an ephemeral port.
    void bind_local(uint16_t port) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) throw TransportError("socket() failed");
        int one = 1;
        ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
        if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            ::close(fd_);
            fd_ = -1;
            throw TransportError("cannot bind 127.0.0.1:" + std::to_string(port));
        }
        if (::listen(fd_, 16) != 0) {
            ::close(fd_);
            fd_ = -1;
            throw TransportError("listen() failed");
        }
        sockaddr_in bound{};
        socklen_t len = sizeof(bound);
        ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
        port_ = ntohs(bound.sin_port);
    }

    std::optional<LineSocket> accept_one() {
        int cfd = ::accept(fd_, nullptr, nullptr);
        if (cfd < 0) return std::nullopt;
        return LineSocket(cfd);
    }

    uint16_t port() const { return port_; }
    bool valid() const { return fd_ >= 0; }

    void close() {
        if (fd_ >= 0) {
            ::shutdown(fd_, SHUT_RDWR);
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_ = -1;
    uint16_t port_ = 0;
};

// --- Environment session host -------------------------------------------------

// Per-connection session table that speaks the env side of the protocol.
// Used both by the standalone env server and by the proxy's builtin backend.
// The action tap records every text delivered to the backend, which is what
// transparency and backend-purity checks inspect.
class EnvSessionHost {
public:
    EnvSessionHost(const testbed::Testbed* tb, std::vector<std::string>* tap,
                   std::mutex* tap_mu)
        : tb_(tb), tap_(tap), tap_mu_(tap_mu) {}

    std::vector<WireMessage> handle(const WireMessage& m) {
        switch (m.type) {
            case WireMessage::Type::Reset: {
                std::string task_id = m.payload.value("task_id", "");
                std::unique_ptr<testbed::ToyEnv> env;
                try {
                    env = tb_->make_env(task_id);
                } catch (const std::exception& e) {
                    return {WireMessage::error(m.session, e.what())};
                }
                Session s;
                s.env = std::move(env);
                std::string obs = s.env->reset();
                sessions_[m.session] = std::move(s);
                return {WireMessage::observation(m.session, obs, false)};
            }
            case WireMessage::Type::Action: {
                auto it = sessions_.find(m.session);
                if (it == sessions_.end())
                    return {WireMessage::error(m.session, "no such session")};
                if (it->second.done)
                    return {WireMessage::error(m.session, "session already finished")};
                std::string text = m.text();
                if (tap_) {
                    std::lock_guard<std::mutex> lock(*tap_mu_);
                    tap_->push_back(text);
                }
                testbed::StepResult sr = it->second.env->step(text);
                ++it->second.steps;
                std::vector<WireMessage> out;
                if (sr.done) {
                    it->second.done = true;
                    out.push_back(WireMessage::observation(m.session, sr.observation, true,
                                                           sr.reward));
                    out.push_back(
                        WireMessage::result(m.session, sr.reward, it->second.steps, 0));
                } else {
                    out.push_back(WireMessage::observation(m.session, sr.observation, false));
                }
                return out;
            }
            default:
                return {WireMessage::error(m.session, "unexpected message type")};
        }
    }

private:
    struct Session {
        std::unique_ptr<testbed::ToyEnv> env;
        int steps = 0;
        bool done = false;
    };
    const testbed::Testbed* tb_;
    std::vector<std::string>* tap_;
    std::mutex* tap_mu_;
    std::map<std::string, Session> sessions_;
};

namespace detail {

// Accept loop + per-connection handler threads, shared by server and proxy.
class ThreadedAcceptor {
public:
    using Handler = std::function<void(LineSocket)>;

    void start(uint16_t port, Handler handler) {
        handler_ = std::move(handler);
        listener_.bind_local(port);
        accept_thread_ = std::thread([this] {
            while (true) {
                auto sock = listener_.accept_one();
                if (!sock) break;
                std::lock_guard<std::mutex> lock(mu_);
                workers_.emplace_back(
                    [this](LineSocket s) { handler_(std::move(s)); }, std::move(*sock));
            }
        });
    }

    uint16_t port() const { return listener_.port(); }

    void stop() {
        listener_.close();
        if (accept_thread_.joinable()) accept_thread_.join();
        std::lock_guard<std::mutex> lock(mu_);
        for (auto& w : workers_)
            if (w.joinable()) w.join();
        workers_.clear();
    }

    ~ThreadedAcceptor() { stop(); }

private:
    TcpListener listener_;
    std::thread accept_thread_;
    std::vector<std::thread> workers_;
    std::mutex mu_;
    Handler handler_;
};

} // namespace detail

// Serves toy environments over the wire protocol (the backend role).
class EnvWireServer {
public:
    explicit EnvWireServer(testbed::Testbed tb) : tb_(std::move(tb)) {}

    void start(uint16_t port = 0) {
        acceptor_.start(port, [this](LineSocket sock) { serve(std::move(sock)); });
    }

    uint16_t port() const { return acceptor_.port(); }
    void stop() { acceptor_.stop(); }

    std::vector<std::string> delivered_actions() const {
        std::lock_guard<std::mutex> lock(tap_mu_);
        return tap_;
    }

private:
    void serve(LineSocket sock) {
        EnvSessionHost host(&tb_, &tap_, &tap_mu_);
        std::string line;
        while (sock.read_line(line)) {
            std::string err;
            auto msg = decode(line, &err);
            if (!msg) {
                sock.write_message(WireMessage::error("-", err));
                continue;
            }
            for (const auto& reply : host.handle(*msg))
                if (!sock.write_message(reply)) return;
        }
    }

    testbed::Testbed tb_;
    detail::ThreadedAcceptor acceptor_;
    std::vector<std::string> tap_;
    mutable std::mutex tap_mu_;
};

// --- Proxy --------------------------------------------------------------------

struct ProxyConfig {
    InterfaceSpec spec;
    PerturbationCondition condition = PerturbationCondition::origin();
    StrictPolicy strict;
    // Exactly one backend: a TCP endpoint, or a builtin toy testbed.
    std::optional<std::pair<std::string, uint16_t>> backend_tcp;
    std::shared_ptr<testbed::Testbed> backend_builtin;
    // When set, one trajectory log file per session is written here.
    std::string log_dir;
};

// Condition-applying relay. Display rewriting covers observation text flowing
// to the agent; translation covers action text flowing to the backend; strict
// legacy rejections are answered locally and never reach the backend.
class PipeProxy {
public:
    explicit PipeProxy(ProxyConfig cfg)
        : cfg_(std::move(cfg)), rules_(build_rule_set(cfg_.spec, cfg_.condition)) {
        if (!cfg_.backend_tcp && !cfg_.backend_builtin)
            throw TransportError("proxy needs a backend (tcp endpoint or builtin testbed)");
    }

    void start(uint16_t port = 0) {
        acceptor_.start(port, [this](LineSocket sock) { serve(std::move(sock)); });
    }

    uint16_t port() const { return acceptor_.port(); }
    void stop() { acceptor_.stop(); }

    long legacy_rejections() const { return legacy_rejections_.load(); }

private:
    // One backend conversation per client connection; session ids pass
    // through verbatim, so concurrent sessions stay isolated per connection.
    struct Backend {
        std::optional<LineSocket> tcp;
        std::optional<EnvSessionHost> builtin;

        std::vector<WireMessage> roundtrip(const WireMessage& m) {
            if (builtin) return builtin->handle(m);
            if (!tcp->write_message(m)) throw TransportError("backend write failed");
            std::string err;
            auto first = tcp->read_message(&err);
            if (!first) throw TransportError("backend read failed: " + err);
            std::vector<WireMessage> out{*first};
            if (first->type == WireMessage::Type::Observation && first->done()) {
                auto second = tcp->read_message(&err);
                if (second) out.push_back(*second);
            }
            return out;
        }
    };

    // Per-session bookkeeping for the trajectory log.
    struct SessionLog {
        std::string task_id;
        int actions = 0;
        long legacy = 0;
        double reward = 0;
        bool finished = false;
    };

    struct ConnState {
        Backend backend;
        std::map<std::string, SessionLog> logs;
    };

    void serve(LineSocket client) {
        ConnState conn;
        if (cfg_.backend_builtin) {
            conn.backend.builtin.emplace(cfg_.backend_builtin.get(), nullptr, nullptr);
        } else {
            try {
                conn.backend.tcp = LineSocket::connect_to(cfg_.backend_tcp->first,
                                                          cfg_.backend_tcp->second);
            } catch (const TransportError& e) {
                client.write_message(WireMessage::error("-", e.what()));
                return;
            }
        }

        std::string line;
        while (client.read_line(line)) {
            std::string err;
            auto msg = decode(line, &err);
            if (!msg) {
                if (!client.write_message(WireMessage::error("-", err))) break;
                continue;
            }
            try {
                if (!relay(client, conn, *msg)) break;
            } catch (const TransportError& e) {
                client.write_message(WireMessage::error(msg->session, e.what()));
                break;
            }
        }
        for (auto& [session, log] : conn.logs)
            if (!log.finished) flush_log(session, log, "connection closed before completion");
    }

    // Returns false when the client connection should be dropped.
    bool relay(LineSocket& client, ConnState& conn, const WireMessage& msg) {
        switch (msg.type) {
            case WireMessage::Type::Reset:
                conn.logs[msg.session] = SessionLog{msg.payload.value("task_id", ""), 0, 0,
                                                    0.0, false};
                return forward(client, conn, msg);
            case WireMessage::Type::Action: {
                SessionLog* log = nullptr;
                auto it = conn.logs.find(msg.session);
                if (it != conn.logs.end()) {
                    log = &it->second;
                    ++log->actions;
                }
                TranslationResult tr = translate_action(msg.text(), rules_, cfg_.strict);
                if (tr.outcome == TranslationResult::Outcome::LegacyViolation) {
                    ++legacy_rejections_;
                    if (log) ++log->legacy;
                    std::string feedback = format_strict_feedback(*tr.violation, cfg_.strict);
                    return client.write_message(
                        WireMessage::observation(msg.session, feedback, false));
                }
                WireMessage translated = WireMessage::action(msg.session, tr.action_text);
                return forward(client, conn, translated);
            }
            default:
                return client.write_message(
                    WireMessage::error(msg.session, "unexpected message type"));
        }
    }

    bool forward(LineSocket& client, ConnState& conn, const WireMessage& msg) {
        for (auto& reply : backend_roundtrip(conn, msg)) {
            if (reply.type == WireMessage::Type::Observation)
                reply.payload["text"] = display_rewrite(reply.text(), rules_);
            if (reply.type == WireMessage::Type::Result) {
                auto it = conn.logs.find(reply.session);
                if (it != conn.logs.end() && !it->second.finished) {
                    it->second.reward = reply.payload.value("reward", 0.0);
                    it->second.finished = true;
                    flush_log(reply.session, it->second, "");
                }
            }
            if (!client.write_message(reply)) return false;
        }
        return true;
    }

    std::vector<WireMessage> backend_roundtrip(ConnState& conn, const WireMessage& msg) {
        return conn.backend.roundtrip(msg);
    }

    void flush_log(const std::string& session, const SessionLog& log,
                   const std::string& abort_reason) {
        if (cfg_.log_dir.empty()) return;
        Trajectory t;
        t.env_id = cfg_.spec.env_id;
        t.task_id = log.task_id;
        t.agent = "wire-client";
        t.condition = cfg_.condition;
        t.strict = strict_label(cfg_.strict);
        t.reward = log.reward;
        t.length = log.actions;
        t.legacy_count = log.legacy;
        t.aborted = !abort_reason.empty();
        t.abort_reason = abort_reason;

        std::string name = "session-";
        for (char c : session)
            name += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
                        ? c
                        : '_';
        std::filesystem::create_directories(cfg_.log_dir);
        std::ofstream f(std::filesystem::path(cfg_.log_dir) / (name + ".jsonl"));
        f << to_record(t).dump() << "\n";
    }

    ProxyConfig cfg_;
    RewriteRuleSet rules_;
    detail::ThreadedAcceptor acceptor_;
    std::atomic<long> legacy_rejections_{0};
};

} // namespace pipeh::wire
