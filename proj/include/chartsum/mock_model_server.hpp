#pragma once

// Stand-in for the local inference server. Speaks the same generate/embed
// HTTP API with configurable latencies and counts what it was asked to do,
// so tests can check model persistence and generation serialization.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "chartsum/core.hpp"
#include "chartsum/embed_index.hpp"
#include "chartsum/model_client.hpp"

namespace httplib {
class Server;
}

namespace chartsum {

struct MockProfile {
    double model_load_s = 0.0;
    double generate_s = 0.0;            // fixed cost per generate call
    double per_token_generate_s = 0.0;  // times estimate_tokens(response)
    double retrieval_s = 0.0;           // applied by the retrieval node, not here
    double embed_s = 0.0;

    bool operator==(const MockProfile&) const = default;
};

void to_json(json& j, const MockProfile& p);
void from_json(const json& j, MockProfile& p);

// Maps a prompt to completion text.
class Responder {
public:
    virtual ~Responder() = default;
    virtual std::string respond(const std::string& prompt) = 0;
};

// Answers summary prompts from the rendered sections and judge prompts with
// crude word-overlap rules. Deterministic.
class HeuristicResponder final : public Responder {
public:
    std::string respond(const std::string& prompt) override;
};

// {"rules": [{"contains": ["a", "b"], "response": "..." | {...}}], "default": ...}
// The first rule whose strings all occur in the prompt wins. Object
// responses are sent as compact JSON. Without a match the default is used,
// or the heuristic responder when there is no default.
class ScriptedResponder final : public Responder {
public:
    explicit ScriptedResponder(const json& script);
    static std::shared_ptr<ScriptedResponder> load(const std::filesystem::path& path);

    std::string respond(const std::string& prompt) override;

private:
    struct Rule {
        std::vector<std::string> contains;
        std::string response;
    };
    std::vector<Rule> rules_;
    std::optional<std::string> default_;
    HeuristicResponder fallback_;
};

struct MockStats {
    std::uint64_t loads = 0;
    std::uint64_t unloads = 0;
    std::uint64_t generate_calls = 0;
    std::uint64_t max_concurrent_generate = 0;
    std::uint64_t embed_calls = 0;
};

void to_json(json& j, const MockStats& s);
void from_json(const json& j, MockStats& s);

// Routes:
//   POST /api/generate   {model, prompt, options, keep_alive} -> {response, load_duration, eval_duration}
//   POST /api/embed      {model, input: [...]} -> {embeddings: [...]}
//   GET  /api/tags       liveness
//   GET  /mock/stats     counters
class MockModelServer {
public:
    MockModelServer(MockProfile profile, std::shared_ptr<Responder> responder, std::string host = "127.0.0.1",
                    std::uint16_t port = 0);
    ~MockModelServer();

    MockModelServer(const MockModelServer&) = delete;
    MockModelServer& operator=(const MockModelServer&) = delete;

    void start();
    void stop();
    // Blocks until stop() is called from another thread.
    void wait();

    std::uint16_t port() const { return port_; }
    std::string url() const;
    MockStats stats() const;
    bool model_resident() const;

private:
    struct GenerateOutcome {
        std::string text;
        double load_s = 0.0;
        double eval_s = 0.0;
    };
    GenerateOutcome generate(const std::string& prompt, double keep_alive);

    MockProfile profile_;
    std::shared_ptr<Responder> responder_;
    std::string host_;
    std::uint16_t port_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    HashProjectionEmbedder embedder_;

    mutable std::mutex load_mu_;
    bool resident_ = false;
    std::atomic<std::uint64_t> loads_{0};
    std::atomic<std::uint64_t> unloads_{0};
    std::atomic<std::uint64_t> generate_calls_{0};
    std::atomic<std::uint64_t> in_flight_{0};
    std::atomic<std::uint64_t> max_in_flight_{0};
    std::atomic<std::uint64_t> embed_calls_{0};
};

// Runs a Responder in-process behind the TextGenerator interface. Used for
// judge runs without any server and by unit tests.
class InProcessGenerator final : public TextGenerator {
public:
    explicit InProcessGenerator(std::shared_ptr<Responder> responder, std::string name = "mock")
        : responder_(std::move(responder)), name_(std::move(name)) {}

    GenerationResult generate(const std::string& prompt) override;
    GenerationResult warm() override { return {}; }
    bool reachable() override { return true; }
    std::string model_name() const override { return name_; }

    std::uint64_t calls() const { return calls_; }
    std::vector<std::string> prompts() const;

private:
    std::shared_ptr<Responder> responder_;
    std::string name_;
    std::atomic<std::uint64_t> calls_{0};
    mutable std::mutex mu_;
    std::vector<std::string> prompts_;
};

}  // namespace chartsum
