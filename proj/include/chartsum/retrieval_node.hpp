#pragma once

// Retrieval node: owns patient indices and answers QUERY frames with the
// top-k chart chunks for a chief complaint.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "chartsum/core.hpp"
#include "chartsum/embed_index.hpp"
#include "chartsum/protocol.hpp"

namespace chartsum {

class RetrievalError : public std::runtime_error {
public:
    enum class Kind { Unavailable, Timeout, UnknownPatient, BadRequest, EmbedFailure, Internal, Protocol };

    RetrievalError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

std::string_view error_code_for(RetrievalError::Kind kind);

struct FetchedContext {
    RetrievedContext context;
    double round_trip_s = 0.0;  // measured by the caller's clock
};

// Where the summarizer gets its context from: the remote node over TCP, or an
// in-process service in single-node mode.
class ContextSource {
public:
    virtual ~ContextSource() = default;
    virtual FetchedContext fetch(const ChiefComplaint& complaint) = 0;
    virtual std::vector<std::string> patients() = 0;
};

struct RetrievalServiceConfig {
    std::uint32_t default_k = kDefaultTopK;
    // Added to every query; used by mock benchmark profiles.
    std::chrono::duration<double> simulated_latency{0.0};
};

struct RetrievalMetrics {
    std::atomic<std::uint64_t> queries{0};
    std::atomic<std::uint64_t> errors{0};
    std::atomic<std::uint64_t> connections{0};
};

class RetrievalService {
public:
    RetrievalService(std::shared_ptr<IndexStore> store, std::shared_ptr<EmbeddingClient> embedder,
                     RetrievalServiceConfig cfg = {});

    // Throws RetrievalError (UnknownPatient, EmbedFailure, Internal).
    RetrievedContext retrieve(const ChiefComplaint& complaint);

    // Reply for one request frame. Unknown or client-only frame types get an
    // ERROR{BAD_REQUEST}; the connection stays usable.
    Frame handle(const Frame& request);

    IndexStore& store() { return *store_; }
    RetrievalMetrics& metrics() { return metrics_; }
    const RetrievalServiceConfig& config() const { return cfg_; }

private:
    std::shared_ptr<IndexStore> store_;
    std::shared_ptr<EmbeddingClient> embedder_;
    RetrievalServiceConfig cfg_;
    RetrievalMetrics metrics_;
};

// Encodes a retrieval result as a CONTEXT body and back.
json context_body(const RetrievedContext& ctx);
RetrievedContext parse_context_body(const json& body, const ChiefComplaint& complaint);

// Threaded TCP listener. One thread per connection; requests on a connection
// are answered in lockstep.
class RetrievalServer {
public:
    RetrievalServer(std::shared_ptr<RetrievalService> service, std::string host = "127.0.0.1",
                    std::uint16_t port = 7401, std::size_t max_frame_bytes = kMaxFrameBytes);
    ~RetrievalServer();

    RetrievalServer(const RetrievalServer&) = delete;
    RetrievalServer& operator=(const RetrievalServer&) = delete;

    // Binds and starts accepting. Port 0 picks an ephemeral port.
    void start();
    void stop();
    std::uint16_t port() const { return port_; }

private:
    struct Connection {
        int fd = -1;
        std::thread thread;
        std::atomic<bool> done{false};
    };

    void accept_loop();
    void serve_connection(Connection& conn);
    void reap(bool all);

    std::shared_ptr<RetrievalService> service_;
    std::string host_;
    std::uint16_t port_;
    std::size_t max_frame_bytes_;
    int listen_fd_ = -1;
    std::atomic<bool> stopping_{false};
    std::thread acceptor_;
    std::mutex conn_mu_;
    std::list<Connection> connections_;
};

struct RetrievalClientConfig {
    std::string host = "127.0.0.1";
    std::uint16_t port = 7401;
    double connect_timeout_s = 2.0;
    double io_timeout_s = 60.0;
    std::size_t max_frame_bytes = kMaxFrameBytes;
};

// Persistent lockstep client. Reconnects once if the connection dropped.
class RetrievalClient final : public ContextSource {
public:
    explicit RetrievalClient(RetrievalClientConfig cfg);
    ~RetrievalClient() override;

    FetchedContext fetch(const ChiefComplaint& complaint) override;
    std::vector<std::string> patients() override;

    // Raw request/reply; throws RetrievalError::Unavailable/Timeout/Protocol.
    Frame request(FrameType type, json body);

private:
    Frame round_trip(const Frame& req);
    void ensure_connected();
    void disconnect();

    RetrievalClientConfig cfg_;
    std::mutex mu_;
    int fd_ = -1;
    std::uint64_t next_id_ = 1;
};

// In-process retrieval for single-node mode.
class LocalContextSource final : public ContextSource {
public:
    explicit LocalContextSource(std::shared_ptr<RetrievalService> service) : service_(std::move(service)) {}

    FetchedContext fetch(const ChiefComplaint& complaint) override;
    std::vector<std::string> patients() override { return service_->store().patient_ids(); }

private:
    std::shared_ptr<RetrievalService> service_;
};

// Connects with a timeout; returns -1 on failure.
int connect_tcp(const std::string& host, std::uint16_t port, double timeout_s);

}  // namespace chartsum
