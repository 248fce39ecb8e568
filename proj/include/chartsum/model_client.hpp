#pragma once

// Client for the local model server's text generation endpoint.

#include <optional>
#include <stdexcept>
#include <string>

#include "chartsum/endpoint.hpp"

namespace chartsum {

class GenerationError : public std::runtime_error {
public:
    enum class Kind { Unavailable, Timeout, BadResponse };

    GenerationError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

// How long the server keeps weights resident after a call.
struct KeepAlive {
    bool indefinite = true;
    double seconds = 0.0;  // used when !indefinite; 0 unloads right away

    static KeepAlive forever() { return {}; }
    static KeepAlive unload() { return {false, 0.0}; }
};

struct GenerationResult {
    std::string text;
    double load_s = 0.0;  // as reported by the server
    double eval_s = 0.0;
    double wall_s = 0.0;  // measured by this client
};

class TextGenerator {
public:
    virtual ~TextGenerator() = default;
    virtual GenerationResult generate(const std::string& prompt) = 0;
    // Empty-prompt call that only makes the model resident.
    virtual GenerationResult warm() = 0;
    virtual bool reachable() = 0;
    virtual std::string model_name() const = 0;
};

struct GenerationClientConfig {
    Endpoint endpoint = Endpoint{"http", "127.0.0.1", 11434, "/api/generate"};
    std::string model = "mistral";
    double temperature = 0.0;
    int max_output_tokens = 768;
    KeepAlive keep_alive;
    double timeout_s = 180.0;
    std::string health_path = "/api/tags";
    std::string api_key;  // sent as a bearer token when set
    // Reply field names, for servers that differ from the default shape.
    std::string response_field = "response";
    std::string load_duration_field = "load_duration";  // nanoseconds
    std::string eval_duration_field = "eval_duration";  // nanoseconds
};

// Sends {model, prompt, stream: false, options: {temperature, num_predict},
// keep_alive} and reads {response, load_duration, eval_duration}.
class GenerationClient final : public TextGenerator {
public:
    explicit GenerationClient(GenerationClientConfig cfg);

    GenerationResult generate(const std::string& prompt) override;
    GenerationResult warm() override;
    bool reachable() override;
    std::string model_name() const override { return cfg_.model; }

    const GenerationClientConfig& config() const { return cfg_; }

private:
    GenerationResult call(const std::string& prompt);

    GenerationClientConfig cfg_;
};

}  // namespace chartsum
