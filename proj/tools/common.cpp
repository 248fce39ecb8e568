#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <pthread.h>

#include "cli.hpp"

namespace chartsum::cli {

std::shared_ptr<EmbeddingClient> make_embedder(const Globals& g, bool mock, const std::optional<std::string>& endpoint,
                                               const std::optional<std::string>& model) {
    if (mock) return std::make_shared<HashProjectionEmbedder>();
    auto ep = parse_endpoint(endpoint.value_or(g.cfg.model_server), 11434);
    if (ep.path.empty()) ep.path = "/api/embed";
    return std::make_shared<HttpEmbeddingClient>(ep, model.value_or(g.cfg.embed_model));
}

GenerationClientConfig generation_config(const std::string& url, const std::string& model, double timeout_s) {
    GenerationClientConfig c;
    auto ep = parse_endpoint(url, 11434);
    if (ep.path.empty()) ep.path = "/api/generate";
    c.endpoint = ep;
    c.model = model;
    c.timeout_s = timeout_s;
    return c;
}

CLI::Validator strategy_validator() {
    return CLI::Validator(
        [](std::string& value) -> std::string {
            if (parse_strategy(value)) return {};
            return "unknown strategy '" + value + "'; expected one of: " + legal_strategy_names();
        },
        "STRATEGY", "strategy");
}

PromptStrategy strategy_from(const std::optional<std::string>& flag, const CliConfig& cfg) {
    return flag ? *parse_strategy(*flag) : cfg.strategy;
}

namespace {

sigset_t shutdown_signals() {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    sigaddset(&set, SIGHUP);
    return set;
}

}  // namespace

void block_signals() {
    const auto set = shutdown_signals();
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

void wait_for_shutdown(const std::function<void()>& on_hup) {
    const auto set = shutdown_signals();
    for (;;) {
        int sig = 0;
        if (sigwait(&set, &sig) != 0) return;
        if (sig == SIGHUP) {
            if (on_hup) on_hup();
            continue;
        }
        return;
    }
}

void announce_listening(const std::string& host, std::uint16_t port) {
    std::printf("listening on %s:%u\n", host.c_str(), static_cast<unsigned>(port));
    std::fflush(stdout);
}

void emit_json_line(const json& j) {
    std::cout << j.dump(-1, ' ', false, json::error_handler_t::replace) << '\n' << std::flush;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CommandError(ExitCode::InputError, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << content)) throw CommandError(ExitCode::Failure, "cannot write " + path);
}

}  // namespace chartsum::cli
