#pragma once

// Shared plumbing for the chartsum subcommands.

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "chartsum/cli_config.hpp"
#include "chartsum/embed_index.hpp"
#include "chartsum/exit_codes.hpp"
#include "chartsum/model_client.hpp"

namespace chartsum::cli {

struct Globals {
    std::string config_path;
    std::string log_level;
    bool json_lines = false;
    CliConfig cfg;
    // Set by the chosen subcommand; returns the process exit code.
    std::function<int()> run;
};

// Reported to the user as "error: ..." with the given exit code.
class CommandError : public std::runtime_error {
public:
    CommandError(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ExitCode code() const { return code_; }

private:
    ExitCode code_;
};

void add_ingest(CLI::App& app, Globals& g);
void add_serve_retriever(CLI::App& app, Globals& g);
void add_serve_summarizer(CLI::App& app, Globals& g);
void add_mock_model_server(CLI::App& app, Globals& g);
void add_summarize(CLI::App& app, Globals& g);
void add_judge(CLI::App& app, Globals& g);
void add_bench(CLI::App& app, Globals& g);
void add_report(CLI::App& app, Globals& g);

// Embedder for indexing and queries: the hash projection with --mock-embedder,
// the model server's embed endpoint otherwise.
std::shared_ptr<EmbeddingClient> make_embedder(const Globals& g, bool mock, const std::optional<std::string>& endpoint,
                                               const std::optional<std::string>& model);

GenerationClientConfig generation_config(const std::string& url, const std::string& model, double timeout_s);

// CLI11 validator accepting any strategy name or alias.
CLI::Validator strategy_validator();
PromptStrategy strategy_from(const std::optional<std::string>& flag, const CliConfig& cfg);

// Blocks SIGINT, SIGTERM and SIGHUP in the calling thread; threads created
// afterwards inherit the mask. Call before starting servers.
void block_signals();
// Waits for SIGINT/SIGTERM; on SIGHUP calls on_hup and keeps waiting.
void wait_for_shutdown(const std::function<void()>& on_hup = {});

// Printed once a server socket is bound; scripts read the port from it.
void announce_listening(const std::string& host, std::uint16_t port);

void emit_json_line(const json& j);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace chartsum::cli
