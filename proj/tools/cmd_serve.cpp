// Long-running server subcommands. Each prints "listening on host:port" once
// bound and runs until SIGINT or SIGTERM.

#include <spdlog/spdlog.h>

#include "chartsum/mock_model_server.hpp"
#include "chartsum/retrieval_node.hpp"
#include "chartsum/summarizer_api.hpp"
#include "cli.hpp"

namespace chartsum::cli {

namespace {

struct ServeRetrieverOpts {
    std::optional<std::string> index_dir;
    std::optional<std::string> listen;
    bool mock_embedder = false;
    std::optional<std::string> embed_endpoint;
    std::optional<std::string> embed_model;
    double simulated_latency_s = 0.0;
    std::optional<std::uint32_t> k;
};

int serve_retriever(Globals& g, const ServeRetrieverOpts& o) {
    const auto listen = parse_endpoint(o.listen.value_or(g.cfg.retrieval_node), 7401);
    auto store = std::make_shared<IndexStore>(o.index_dir.value_or(g.cfg.index_dir.string()));
    const auto n = store->reload();
    spdlog::info("loaded {} patient index(es)", n);

    RetrievalServiceConfig rcfg;
    rcfg.default_k = o.k.value_or(g.cfg.k);
    rcfg.simulated_latency = std::chrono::duration<double>(o.simulated_latency_s);
    auto service = std::make_shared<RetrievalService>(
        store, make_embedder(g, o.mock_embedder, o.embed_endpoint, o.embed_model), rcfg);

    block_signals();
    RetrievalServer server(service, listen.host, listen.port);
    server.start();
    announce_listening(listen.host, server.port());
    wait_for_shutdown([&] {
        try {
            spdlog::info("SIGHUP: reloaded {} patient index(es)", store->reload());
        } catch (const std::exception& e) {
            spdlog::error("SIGHUP reload failed, keeping the old indices: {}", e.what());
        }
    });
    spdlog::info("shutting down");
    server.stop();
    return 0;
}

struct ServeSummarizerOpts {
    std::optional<std::string> listen;
    std::optional<std::string> retriever;
    std::optional<std::string> model_server;
    std::optional<std::string> model;
    std::optional<std::string> static_dir;
    std::optional<double> timeout_s;
};

int serve_summarizer(Globals& g, const ServeSummarizerOpts& o) {
    const auto listen = parse_endpoint(o.listen.value_or(g.cfg.summarizer_api), 7402);
    const auto retr = parse_endpoint(o.retriever.value_or(g.cfg.retrieval_node), 7401);
    RetrievalClientConfig ccfg;
    ccfg.host = retr.host;
    ccfg.port = retr.port;
    auto source = std::make_shared<RetrievalClient>(ccfg);
    auto gcfg = generation_config(o.model_server.value_or(g.cfg.model_server), o.model.value_or(g.cfg.model),
                                  o.timeout_s.value_or(g.cfg.generation_timeout_s));
    gcfg.keep_alive = KeepAlive::forever();
    auto generator = std::make_shared<GenerationClient>(gcfg);

    SummarizerConfig scfg;
    scfg.context_budget_tokens = g.cfg.context_budget_tokens;
    const auto templates = g.cfg.template_dir ? PromptLibrary::from_dir(*g.cfg.template_dir) : PromptLibrary::builtin();

    block_signals();
    auto node = std::make_shared<SummarizerNode>(source, generator, templates, scfg);
    std::optional<std::filesystem::path> static_dir;
    if (o.static_dir) static_dir = *o.static_dir;
    SummarizerApi api(node, listen.host, listen.port, static_dir);
    api.start();
    announce_listening(listen.host, api.port());
    wait_for_shutdown();
    spdlog::info("shutting down");
    api.stop();
    node->shutdown();
    return 0;
}

struct MockServerOpts {
    std::string listen = "127.0.0.1:11434";
    std::optional<std::string> profile;
    std::optional<double> load_s, generate_s, per_token_s, embed_s;
    std::optional<std::string> script;
};

int mock_model_server(const MockServerOpts& o) {
    MockProfile profile;
    if (o.profile) {
        const json j = json::parse(read_file(*o.profile), nullptr, false);
        if (j.is_discarded()) throw CommandError(ExitCode::InputError, *o.profile + " is not valid JSON");
        profile = j.get<MockProfile>();
    }
    if (o.load_s) profile.model_load_s = *o.load_s;
    if (o.generate_s) profile.generate_s = *o.generate_s;
    if (o.per_token_s) profile.per_token_generate_s = *o.per_token_s;
    if (o.embed_s) profile.embed_s = *o.embed_s;
    std::shared_ptr<Responder> responder;
    if (o.script) {
        responder = ScriptedResponder::load(*o.script);
    } else {
        responder = std::make_shared<HeuristicResponder>();
    }
    const auto listen = parse_endpoint(o.listen, 11434);

    block_signals();
    MockModelServer server(profile, responder, listen.host, listen.port);
    server.start();
    announce_listening(listen.host, server.port());
    wait_for_shutdown();
    const auto s = server.stats();
    spdlog::info("mock model server: {} load(s), {} generate call(s), max concurrency {}", s.loads, s.generate_calls,
                 s.max_concurrent_generate);
    server.stop();
    return 0;
}

}  // namespace

void add_serve_retriever(CLI::App& app, Globals& g) {
    auto o = std::make_shared<ServeRetrieverOpts>();
    auto* sub = app.add_subcommand("serve-retriever", "Serve per-patient indices to summarizers over framed TCP.");
    sub->add_option("--index-dir", o->index_dir, "Directory of *.chix index files (default: config index_dir)");
    sub->add_option("--listen", o->listen, "host:port to bind; port 0 picks a free port (default: config retrieval_node)");
    sub->add_flag("--mock-embedder", o->mock_embedder, "Embed queries with the deterministic hash projection");
    sub->add_option("--embed-endpoint", o->embed_endpoint, "Model server URL for query embeddings");
    sub->add_option("--embed-model", o->embed_model, "Embedding model name");
    sub->add_option("--simulated-latency", o->simulated_latency_s, "Extra seconds added to every query")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--k", o->k, "Default top-k when a query does not give one")->check(CLI::PositiveNumber);
    sub->callback([&g, o] { g.run = [&g, o] { return serve_retriever(g, *o); }; });
}

void add_serve_summarizer(CLI::App& app, Globals& g) {
    auto o = std::make_shared<ServeSummarizerOpts>();
    auto* sub = app.add_subcommand("serve-summarizer", "Run the summarizer node and its HTTP API.");
    sub->add_option("--listen", o->listen, "host:port for the API; port 0 picks a free port (default: config summarizer_api)");
    sub->add_option("--retriever", o->retriever, "Retrieval node host:port (default: config retrieval_node)");
    sub->add_option("--model-server", o->model_server, "Model server URL (default: config model_server)");
    sub->add_option("--model", o->model, "Generation model name (default: config model)");
    sub->add_option("--static", o->static_dir, "Also serve this directory at / (console bundle)");
    sub->add_option("--timeout", o->timeout_s, "Generation timeout in seconds")->check(CLI::PositiveNumber);
    sub->callback([&g, o] { g.run = [&g, o] { return serve_summarizer(g, *o); }; });
}

void add_mock_model_server(CLI::App& app, Globals& g) {
    auto o = std::make_shared<MockServerOpts>();
    auto* sub = app.add_subcommand("mock-model-server", "Run the deterministic stand-in model server.");
    sub->add_option("--listen", o->listen, "host:port to bind; port 0 picks a free port")->capture_default_str();
    sub->add_option("--profile", o->profile, "JSON latency profile");
    sub->add_option("--load-s", o->load_s, "Model load seconds")->check(CLI::NonNegativeNumber);
    sub->add_option("--generate-s", o->generate_s, "Fixed seconds per generate call")->check(CLI::NonNegativeNumber);
    sub->add_option("--per-token-s", o->per_token_s, "Extra seconds per output token")->check(CLI::NonNegativeNumber);
    sub->add_option("--embed-s", o->embed_s, "Seconds per embed call")->check(CLI::NonNegativeNumber);
    sub->add_option("--script", o->script, "Scripted responses (JSON rules)");
    sub->callback([&g, o] { g.run = [o] { return mock_model_server(*o); }; });
}

}  // namespace chartsum::cli
