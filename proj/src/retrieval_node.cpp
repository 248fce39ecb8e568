#include "chartsum/retrieval_node.hpp"

#include <cerrno>
#include <cstring>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

namespace chartsum {

using SteadyClock = std::chrono::steady_clock;

std::string_view error_code_for(RetrievalError::Kind kind) {
    switch (kind) {
        case RetrievalError::Kind::UnknownPatient: return error_code::kUnknownPatient;
        case RetrievalError::Kind::BadRequest: return error_code::kBadRequest;
        case RetrievalError::Kind::EmbedFailure: return error_code::kEmbedFailure;
        default: return error_code::kInternal;
    }
}

// ---- service ----------------------------------------------------------------

RetrievalService::RetrievalService(std::shared_ptr<IndexStore> store, std::shared_ptr<EmbeddingClient> embedder,
                                   RetrievalServiceConfig cfg)
    : store_(std::move(store)), embedder_(std::move(embedder)), cfg_(cfg) {}

RetrievedContext RetrievalService::retrieve(const ChiefComplaint& complaint) {
    const auto start = SteadyClock::now();
    const auto index = store_->find(complaint.patient_id);
    if (!index) {
        throw RetrievalError(RetrievalError::Kind::UnknownPatient, "unknown patient '" + complaint.patient_id + "'");
    }
    if (cfg_.simulated_latency.count() > 0) std::this_thread::sleep_for(cfg_.simulated_latency);

    RetrievedContext ctx;
    ctx.complaint = complaint;
    if (index->size() > 0) {
        EmbeddingVector query;
        try {
            query = embed_text(complaint.complaint, *embedder_);
        } catch (const EmbedError& e) {
            throw RetrievalError(RetrievalError::Kind::EmbedFailure, e.what());
        }
        try {
            ctx.hits = index->search(query, complaint.requested_k).hits;
        } catch (const IndexError& e) {
            throw RetrievalError(RetrievalError::Kind::EmbedFailure,
                                 std::string("query embedding incompatible with index: ") + e.what());
        }
    }
    ctx.retrieval_wall_ms = std::chrono::duration<double, std::milli>(SteadyClock::now() - start).count();
    return ctx;
}

json context_body(const RetrievedContext& ctx) {
    return json{{"patient_id", ctx.complaint.patient_id},
                {"complaint", ctx.complaint.complaint},
                {"k", ctx.complaint.requested_k},
                {"hits", ctx.hits},
                {"retrieval_wall_ms", ctx.retrieval_wall_ms}};
}

RetrievedContext parse_context_body(const json& body, const ChiefComplaint& complaint) {
    RetrievedContext ctx;
    ctx.complaint = complaint;
    body.at("hits").get_to(ctx.hits);
    ctx.retrieval_wall_ms = body.value("retrieval_wall_ms", 0.0);
    return ctx;
}

Frame RetrievalService::handle(const Frame& request) {
    const auto start = SteadyClock::now();
    switch (request.kind()) {
        case FrameType::Ping:
            return Frame::make(FrameType::Pong, request.id, json{{"patients", store_->patient_ids()}});
        case FrameType::Query: {
            metrics_.queries.fetch_add(1, std::memory_order_relaxed);
            ChiefComplaint complaint;
            try {
                const auto& b = request.body;
                const auto k = b.value("k", cfg_.default_k);
                complaint = ChiefComplaint::make(b.at("patient_id").get<std::string>(),
                                                 b.at("complaint").get<std::string>(), k);
            } catch (const std::exception& e) {
                metrics_.errors.fetch_add(1, std::memory_order_relaxed);
                return make_error_frame(request.id, error_code::kBadRequest, std::string("invalid QUERY: ") + e.what());
            }
            try {
                auto ctx = retrieve(complaint);
                ctx.retrieval_wall_ms =
                    std::chrono::duration<double, std::milli>(SteadyClock::now() - start).count();
                return Frame::make(FrameType::Context, request.id, context_body(ctx));
            } catch (const RetrievalError& e) {
                metrics_.errors.fetch_add(1, std::memory_order_relaxed);
                return make_error_frame(request.id, error_code_for(e.kind()), e.what());
            } catch (const std::exception& e) {
                metrics_.errors.fetch_add(1, std::memory_order_relaxed);
                return make_error_frame(request.id, error_code::kInternal, e.what());
            }
        }
        default:
            metrics_.errors.fetch_add(1, std::memory_order_relaxed);
            return make_error_frame(request.id, error_code::kBadRequest,
                                    "unsupported frame type '" + request.type + "'");
    }
}

// ---- sockets ----------------------------------------------------------------

namespace {

void set_io_timeout(int fd, double seconds) {
    if (seconds <= 0) return;
    timeval tv{};
    tv.tv_sec = static_cast<time_t>(seconds);
    tv.tv_usec = static_cast<suseconds_t>((seconds - static_cast<double>(tv.tv_sec)) * 1e6);
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

}  // namespace

int connect_tcp(const std::string& host, std::uint16_t port, double timeout_s) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0) return -1;
    int fd = -1;
    for (auto* ai = res; ai != nullptr; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
        if (fd < 0) continue;
        const int flags = ::fcntl(fd, F_GETFL, 0);
        ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
        int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
        if (rc < 0 && errno == EINPROGRESS) {
            pollfd pfd{fd, POLLOUT, 0};
            rc = ::poll(&pfd, 1, static_cast<int>(timeout_s * 1000));
            if (rc == 1) {
                int err = 0;
                socklen_t len = sizeof err;
                ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
                rc = err == 0 ? 0 : -1;
            } else {
                rc = -1;
            }
        }
        if (rc == 0) {
            ::fcntl(fd, F_SETFL, flags);
            const int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            break;
        }
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    return fd;
}

// ---- server -----------------------------------------------------------------

RetrievalServer::RetrievalServer(std::shared_ptr<RetrievalService> service, std::string host, std::uint16_t port,
                                 std::size_t max_frame_bytes)
    : service_(std::move(service)), host_(std::move(host)), port_(port), max_frame_bytes_(max_frame_bytes) {}

RetrievalServer::~RetrievalServer() { stop(); }

void RetrievalServer::start() {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host_.c_str(), std::to_string(port_).c_str(), &hints, &res) != 0 || res == nullptr) {
        throw std::runtime_error("cannot resolve bind address " + host_);
    }
    listen_fd_ = ::socket(res->ai_family, res->ai_socktype | SOCK_CLOEXEC, res->ai_protocol);
    if (listen_fd_ < 0) {
        ::freeaddrinfo(res);
        throw std::runtime_error("socket() failed");
    }
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(listen_fd_, res->ai_addr, res->ai_addrlen) != 0 || ::listen(listen_fd_, 64) != 0) {
        const std::string err = std::strerror(errno);
        ::freeaddrinfo(res);
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw std::runtime_error("cannot listen on " + host_ + ":" + std::to_string(port_) + ": " + err);
    }
    ::freeaddrinfo(res);
    sockaddr_storage addr{};
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    if (addr.ss_family == AF_INET) {
        port_ = ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
    } else if (addr.ss_family == AF_INET6) {
        port_ = ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port);
    }
    stopping_ = false;
    acceptor_ = std::thread([this] { accept_loop(); });
}

void RetrievalServer::stop() {
    if (stopping_.exchange(true)) return;
    if (acceptor_.joinable()) acceptor_.join();
    if (listen_fd_ >= 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
    }
    {
        std::lock_guard lock(conn_mu_);
        for (auto& c : connections_) {
            if (!c.done) ::shutdown(c.fd, SHUT_RDWR);
        }
    }
    reap(true);
}

void RetrievalServer::reap(bool all) {
    std::list<Connection> finished;
    {
        std::lock_guard lock(conn_mu_);
        for (auto it = connections_.begin(); it != connections_.end();) {
            auto next = std::next(it);
            if (all || it->done) finished.splice(finished.end(), connections_, it);
            it = next;
        }
    }
    for (auto& c : finished) {
        if (c.thread.joinable()) c.thread.join();
    }
}

void RetrievalServer::accept_loop() {
    while (!stopping_) {
        pollfd pfd{listen_fd_, POLLIN, 0};
        const int rc = ::poll(&pfd, 1, 100);
        reap(false);
        if (rc <= 0) continue;
        const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
        if (fd < 0) continue;
        const int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        service_->metrics().connections.fetch_add(1, std::memory_order_relaxed);
        std::lock_guard lock(conn_mu_);
        auto& conn = connections_.emplace_back();
        conn.fd = fd;
        conn.thread = std::thread([this, &conn] { serve_connection(conn); });
    }
}

void RetrievalServer::serve_connection(Connection& conn) {
    const int fd = conn.fd;
    while (!stopping_) {
        auto in = read_frame(fd, max_frame_bytes_);
        if (in.status == ReadStatus::Framing) {
            // Malformed frame: report and drop the connection since the stream
            // position can no longer be trusted.
            write_frame(fd, make_error_frame(0, error_code::kBadRequest,
                                             std::string(to_string(in.error->kind)) + ": " + in.error->detail));
            break;
        }
        if (in.status != ReadStatus::Ok) break;
        Frame reply;
        try {
            reply = service_->handle(*in.frame);
        } catch (const std::exception& e) {
            reply = make_error_frame(in.frame->id, error_code::kInternal, e.what());
        }
        try {
            if (!write_frame(fd, reply, max_frame_bytes_)) break;
        } catch (const std::length_error&) {
            if (!write_frame(fd, make_error_frame(in.frame->id, error_code::kInternal, "reply exceeds frame limit"))) break;
        }
    }
    ::shutdown(fd, SHUT_RDWR);
    ::close(fd);
    conn.done = true;
}

// ---- client -----------------------------------------------------------------

RetrievalClient::RetrievalClient(RetrievalClientConfig cfg) : cfg_(std::move(cfg)) {}

RetrievalClient::~RetrievalClient() { disconnect(); }

void RetrievalClient::disconnect() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

void RetrievalClient::ensure_connected() {
    if (fd_ >= 0) return;
    fd_ = connect_tcp(cfg_.host, cfg_.port, cfg_.connect_timeout_s);
    if (fd_ < 0) {
        throw RetrievalError(RetrievalError::Kind::Unavailable,
                             "retrieval node " + cfg_.host + ":" + std::to_string(cfg_.port) + " unreachable");
    }
    set_io_timeout(fd_, cfg_.io_timeout_s);
}

Frame RetrievalClient::round_trip(const Frame& req) {
    for (int attempt = 0; attempt < 2; ++attempt) {
        const bool fresh = fd_ < 0;
        ensure_connected();
        if (!write_frame(fd_, req, cfg_.max_frame_bytes)) {
            disconnect();
            if (fresh) break;
            continue;
        }
        auto in = read_frame(fd_, cfg_.max_frame_bytes);
        if (in.status == ReadStatus::Ok) {
            if (in.frame->id != req.id && in.frame->kind() != FrameType::Error) {
                disconnect();
                throw RetrievalError(RetrievalError::Kind::Protocol, "reply correlation id mismatch");
            }
            return std::move(*in.frame);
        }
        disconnect();
        if (in.status == ReadStatus::Timeout) {
            throw RetrievalError(RetrievalError::Kind::Timeout, "retrieval node did not reply in time");
        }
        if (in.status == ReadStatus::Framing) {
            throw RetrievalError(RetrievalError::Kind::Protocol, "malformed reply: " + in.error->detail);
        }
        // Peer closed a stale connection; one reconnect attempt.
        if (fresh) break;
    }
    throw RetrievalError(RetrievalError::Kind::Unavailable,
                         "lost connection to retrieval node " + cfg_.host + ":" + std::to_string(cfg_.port));
}

Frame RetrievalClient::request(FrameType type, json body) {
    std::lock_guard lock(mu_);
    return round_trip(Frame::make(type, next_id_++, std::move(body)));
}

namespace {

RetrievalError::Kind kind_for_code(const std::string& code) {
    if (code == error_code::kUnknownPatient) return RetrievalError::Kind::UnknownPatient;
    if (code == error_code::kBadRequest) return RetrievalError::Kind::BadRequest;
    if (code == error_code::kEmbedFailure) return RetrievalError::Kind::EmbedFailure;
    return RetrievalError::Kind::Internal;
}

[[noreturn]] void throw_remote(const Frame& reply) {
    const auto code = reply.body.value("code", std::string(error_code::kInternal));
    throw RetrievalError(kind_for_code(code), code + ": " + reply.body.value("detail", std::string{}));
}

}  // namespace

FetchedContext RetrievalClient::fetch(const ChiefComplaint& complaint) {
    const auto start = SteadyClock::now();
    const auto reply = request(FrameType::Query, json{{"patient_id", complaint.patient_id},
                                                      {"complaint", complaint.complaint},
                                                      {"k", complaint.requested_k}});
    if (reply.kind() == FrameType::Error) throw_remote(reply);
    if (reply.kind() != FrameType::Context) {
        throw RetrievalError(RetrievalError::Kind::Protocol, "unexpected reply type " + reply.type);
    }
    FetchedContext out;
    try {
        out.context = parse_context_body(reply.body, complaint);
    } catch (const std::exception& e) {
        throw RetrievalError(RetrievalError::Kind::Protocol, std::string("malformed CONTEXT body: ") + e.what());
    }
    out.round_trip_s = std::chrono::duration<double>(SteadyClock::now() - start).count();
    return out;
}

std::vector<std::string> RetrievalClient::patients() {
    const auto reply = request(FrameType::Ping, json::object());
    if (reply.kind() != FrameType::Pong) {
        throw RetrievalError(RetrievalError::Kind::Protocol, "unexpected reply type " + reply.type);
    }
    return reply.body.value("patients", std::vector<std::string>{});
}

FetchedContext LocalContextSource::fetch(const ChiefComplaint& complaint) {
    const auto start = SteadyClock::now();
    FetchedContext out;
    out.context = service_->retrieve(complaint);
    out.round_trip_s = std::chrono::duration<double>(SteadyClock::now() - start).count();
    return out;
}

}  // namespace chartsum
