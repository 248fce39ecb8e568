// ingest, summarize and judge.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "chartsum/fa_judge.hpp"
#include "chartsum/ingest.hpp"
#include "chartsum/mock_model_server.hpp"
#include "chartsum/records.hpp"
#include "chartsum/retrieval_node.hpp"
#include "chartsum/summarizer_node.hpp"
#include "cli.hpp"

namespace chartsum::cli {

namespace {

// ingest ------------------------------------------------------------------

struct IngestOpts {
    std::string records;
    std::optional<std::string> out;
    bool mock_embedder = false;
    std::optional<std::string> embed_endpoint;
    std::optional<std::string> embed_model;
    std::optional<std::uint64_t> max_chunk_tokens;
    std::optional<std::string> headers;
};

int run_ingest(Globals& g, const IngestOpts& o) {
    auto cfg = ParserConfig::defaults();
    cfg.max_chunk_tokens = o.max_chunk_tokens.value_or(g.cfg.max_chunk_tokens);
    if (o.headers) {
        cfg.known_headers = load_header_lexicon(*o.headers);
    } else if (g.cfg.header_lexicon) {
        cfg.known_headers = load_header_lexicon(*g.cfg.header_lexicon);
    }
    const std::filesystem::path out = o.out.value_or(g.cfg.index_dir.string());
    auto embedder = make_embedder(g, o.mock_embedder, o.embed_endpoint, o.embed_model);
    IngestResult r;
    try {
        r = ingest(o.records, out, cfg, *embedder);
    } catch (const RecordError& e) {
        throw CommandError(ExitCode::InputError, o.records + ": " + e.what());
    } catch (const EmbedError& e) {
        throw CommandError(ExitCode::ModelUnavailable, std::string("embedding failed: ") + e.what());
    }
    if (g.json_lines) {
        for (const auto& p : r.patients) {
            emit_json_line(json{{"patient_id", p.patient_id},
                                {"notes", p.notes},
                                {"chunks", p.chunks},
                                {"index_file", p.index_file.string()}});
        }
        emit_json_line(json{{"total_chunks", r.total_chunks()},
                            {"histogram_lower", r.bucket_lower},
                            {"histogram_count", r.bucket_count}});
    } else {
        std::cout << format_ingest_stats(r);
    }
    return 0;
}

// summarize ---------------------------------------------------------------

struct SummarizeOpts {
    std::string patient;
    std::string complaint;
    std::optional<std::string> strategy;
    std::optional<std::uint32_t> k;
    bool single = false;
    bool dual = false;
    std::optional<std::string> api;
    std::optional<std::string> retriever;
    std::optional<std::string> model_server;
    std::optional<std::string> model;
    std::optional<std::string> index_dir;
    bool mock_embedder = false;
    std::optional<std::string> embed_model;
    std::optional<std::string> out;
    std::optional<double> timeout_s;
};

JobSnapshot via_api(const std::string& url, const ChiefComplaint& cc, PromptStrategy strategy, double timeout_s) {
    const auto ep = parse_endpoint(url, 7402);
    httplib::Client cli(ep.origin());
    cli.set_connection_timeout(5, 0);
    cli.set_read_timeout(30, 0);
    const json req{{"patient_id", cc.patient_id},
                   {"complaint", cc.complaint},
                   {"k", cc.requested_k},
                   {"strategy", to_string(strategy)}};
    auto res = cli.Post("/summarize", req.dump(), "application/json");
    if (!res) throw CommandError(ExitCode::RetrievalUnavailable, "summarizer API " + ep.origin() + " unreachable");
    const json body = json::parse(res->body, nullptr, false);
    const auto message = [&] {
        return body.is_object() && body.contains("error") ? body["error"].get<std::string>() : res->body;
    };
    if (res->status == 503) throw CommandError(ExitCode::ModelUnavailable, message());
    if (res->status == 400) throw CommandError(ExitCode::Usage, message());
    if (res->status != 202) throw CommandError(ExitCode::Failure, "summarizer API: HTTP " + std::to_string(res->status));
    const auto id = body.at("job_id").get<std::string>();

    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s + 60.0);
    for (;;) {
        auto poll = cli.Get("/jobs/" + id);
        if (!poll || poll->status != 200) throw CommandError(ExitCode::Failure, "lost job " + id);
        auto snap = json::parse(poll->body).get<JobSnapshot>();
        if (is_terminal(snap.state)) return snap;
        if (std::chrono::steady_clock::now() > deadline) {
            throw CommandError(ExitCode::GenerationTimeout, "job " + id + " still " + std::string(to_string(snap.state)));
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
}

JobSnapshot in_process(Globals& g, const SummarizeOpts& o, const ChiefComplaint& cc, PromptStrategy strategy) {
    auto gcfg = generation_config(o.model_server.value_or(g.cfg.model_server), o.model.value_or(g.cfg.model),
                                  o.timeout_s.value_or(g.cfg.generation_timeout_s));
    SummarizerConfig scfg;
    scfg.context_budget_tokens = g.cfg.context_budget_tokens;
    std::shared_ptr<ContextSource> source;
    if (o.single) {
        // Everything in this process; the model is unloaded after each call.
        auto store = std::make_shared<IndexStore>(o.index_dir.value_or(g.cfg.index_dir.string()));
        store->reload();
        auto service = std::make_shared<RetrievalService>(
            store, make_embedder(g, o.mock_embedder, o.model_server, o.embed_model));
        source = std::make_shared<LocalContextSource>(service);
        gcfg.keep_alive = KeepAlive::unload();
        scfg.mode = NodeMode::Single;
    } else {
        const auto retr = parse_endpoint(o.retriever.value_or(g.cfg.retrieval_node), 7401);
        RetrievalClientConfig ccfg;
        ccfg.host = retr.host;
        ccfg.port = retr.port;
        source = std::make_shared<RetrievalClient>(ccfg);
        gcfg.keep_alive = KeepAlive::forever();
        scfg.mode = NodeMode::Dual;
    }
    const auto templates = g.cfg.template_dir ? PromptLibrary::from_dir(*g.cfg.template_dir) : PromptLibrary::builtin();
    SummarizerNode node(source, std::make_shared<GenerationClient>(gcfg), templates, scfg);
    return node.wait(node.submit(cc, strategy));
}

std::string timing_line(const StageTimings& t) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "stage timings (%s): model load %.2f s, retrieval %.2f s, summarization %.2f s, total %.2f s\n",
                  std::string(to_string(t.mode)).c_str(), t.model_load_s, t.retrieval_s, t.summarization_s, t.total_s);
    return buf;
}

int run_summarize(Globals& g, const SummarizeOpts& o) {
    if (o.single && (o.api || o.retriever)) throw CommandError(ExitCode::Usage, "--single runs retrieval in-process");
    const auto cc = ChiefComplaint::make(o.patient, o.complaint, o.k.value_or(g.cfg.k));
    const auto strategy = strategy_from(o.strategy, g.cfg);
    const double timeout = o.timeout_s.value_or(g.cfg.generation_timeout_s);
    const auto snap = o.api ? via_api(*o.api, cc, strategy, timeout) : in_process(g, o, cc, strategy);

    if (o.out) write_file(*o.out, json(snap).dump(2) + "\n");
    if (g.json_lines) {
        emit_json_line(snap);
    } else if (snap.state == JobState::Done) {
        std::cout << serialize_as_instructed(*snap.bundle);
        for (const auto& l : snap.bundle->lint) std::cout << "note: " << l << '\n';
        std::cout << '\n' << timing_line(*snap.timings);
    }
    if (snap.state == JobState::Failed) {
        const auto& f = snap.failure.value();
        std::fprintf(stderr, "error: %s: %s\n", std::string(to_string(f.kind)).c_str(), f.message.c_str());
        return static_cast<int>(exit_code_for(f.kind));
    }
    return 0;
}

// judge -------------------------------------------------------------------

struct JudgeOpts {
    std::optional<std::string> summary;
    std::optional<std::string> job;
    std::optional<std::string> api;
    std::optional<std::string> patient;
    std::optional<std::string> complaint;
    std::optional<std::string> index_dir;
    bool mock_embedder = false;
    std::optional<std::string> embed_model;
    std::optional<std::string> judge_endpoint;
    std::optional<std::string> judge_model;
    std::optional<std::string> mock_judge;
    std::optional<std::uint32_t> k;
    std::optional<std::size_t> concurrency;
    std::optional<std::string> out;
};

std::string verdict_table(const JudgeReport& r) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-8s %-8s %-12s %s\n", "claim", "part", "verdict", "claim text / evidence");
    out += buf;
    for (const auto* part : {&r.critical, &r.context}) {
        for (std::size_t i = 0; i < part->claims.size(); ++i) {
            const auto& c = part->claims[i];
            const auto& v = part->fa.per_claim[i];
            std::snprintf(buf, sizeof buf, "%-8s %-8s %-12s ", c.claim_id.c_str(), std::string(to_string(c.part)).c_str(),
                          std::string(to_string(v.verdict)).c_str());
            out += buf + c.text + "\n";
            for (const auto& e : v.evidence) out += std::string(31, ' ') + "[" + e.chunk_id + "] \"" + e.snippet + "\"\n";
        }
    }
    return out;
}

std::string score_line(const char* label, const FAReport& fa, const std::optional<QualityScores>& q) {
    std::string line = std::string(label) + "FA " + format_fa_cell(fa.fa, fa.delta_s, fa.delta_c, fa.delta_u);
    if (q) line += "  CO " + std::to_string(q->completeness) + "  CL " + std::to_string(q->clarity);
    char buf[96];
    std::snprintf(buf, sizeof buf, "  (N=%llu, fa_raw %.4f)\n", static_cast<unsigned long long>(fa.N), fa.fa_raw);
    return line + buf;
}

int run_judge(Globals& g, const JudgeOpts& o) {
    if (!o.summary && !o.job) throw CommandError(ExitCode::Usage, "give --summary FILE or --job ID");
    json doc;
    if (o.summary) {
        doc = json::parse(read_file(*o.summary), nullptr, false);
        if (doc.is_discarded()) throw CommandError(ExitCode::InputError, *o.summary + " is not valid JSON");
    } else {
        const auto ep = parse_endpoint(o.api.value_or(g.cfg.summarizer_api), 7402);
        httplib::Client cli(ep.origin());
        auto res = cli.Get("/jobs/" + *o.job);
        if (!res) throw CommandError(ExitCode::Failure, "summarizer API " + ep.origin() + " unreachable");
        if (res->status != 200) throw CommandError(ExitCode::Usage, "no such job " + *o.job);
        doc = json::parse(res->body);
    }

    SummaryBundle bundle;
    std::optional<ChiefComplaint> from_doc;
    try {
        if (doc.contains("bundle")) {
            const auto snap = doc.get<JobSnapshot>();
            if (!snap.bundle) throw CommandError(ExitCode::InputError, "job " + snap.job_id + " has no summary");
            bundle = *snap.bundle;
            from_doc = snap.complaint;
        } else {
            bundle = doc.get<SummaryBundle>();
        }
    } catch (const json::exception& e) {
        throw CommandError(ExitCode::InputError, std::string("summary document: ") + e.what());
    }
    const auto patient = o.patient ? *o.patient : from_doc ? from_doc->patient_id : std::string{};
    const auto complaint = o.complaint ? *o.complaint : from_doc ? from_doc->complaint : std::string{};
    if (patient.empty() || complaint.empty()) {
        throw CommandError(ExitCode::Usage, "--patient and --complaint are required for a bare summary bundle");
    }
    const auto cc = ChiefComplaint::make(patient, complaint, o.k.value_or(g.cfg.k));

    const std::filesystem::path dir = o.index_dir.value_or(g.cfg.index_dir.string());
    const auto index_path = dir / index_file_name(patient);
    if (!std::filesystem::exists(index_path)) {
        throw CommandError(ExitCode::UnknownPatient, "no index for patient '" + patient + "' in " + dir.string());
    }
    const auto index = load_index(index_path);

    std::shared_ptr<TextGenerator> model;
    if (o.mock_judge) {
        model = std::make_shared<InProcessGenerator>(ScriptedResponder::load(*o.mock_judge), "mock-judge");
    } else {
        auto jc = generation_config(o.judge_endpoint.value_or(g.cfg.judge_endpoint),
                                    o.judge_model.value_or(g.cfg.judge_model), g.cfg.generation_timeout_s);
        jc.api_key = g.cfg.judge_api_key;
        model = std::make_shared<GenerationClient>(jc);
    }
    JudgeConfig jcfg;
    jcfg.k = o.k.value_or(g.cfg.k);
    jcfg.weights = g.cfg.weights;
    jcfg.concurrency = o.concurrency.value_or(g.cfg.judge_concurrency);
    Judge judge(model, make_embedder(g, o.mock_embedder, std::nullopt, o.embed_model), jcfg);
    const auto report = judge.evaluate(bundle, cc, index);

    if (o.out) write_file(*o.out, json(report).dump(2) + "\n");
    if (g.json_lines) {
        emit_json_line(report);
    } else {
        std::cout << verdict_table(report) << '\n';
        std::cout << score_line("critical  ", report.critical.fa, report.critical.quality);
        std::cout << score_line("context   ", report.context.fa, report.context.quality);
        std::cout << score_line("overall   ", report.overall, std::nullopt);
    }
    return 0;
}

}  // namespace

void add_ingest(CLI::App& app, Globals& g) {
    auto o = std::make_shared<IngestOpts>();
    auto* sub = app.add_subcommand("ingest", "Split, embed and index a patient record file, one index per patient.");
    sub->add_option("--records", o->records, "Line-delimited JSON record file")->required();
    sub->add_option("--out", o->out, "Output index directory (default: config index_dir)");
    sub->add_flag("--mock-embedder", o->mock_embedder, "Use the deterministic hash projection instead of a model");
    sub->add_option("--embed-endpoint", o->embed_endpoint, "Model server URL for embeddings (default: config model_server)");
    sub->add_option("--embed-model", o->embed_model, "Embedding model name (default: config embed_model)");
    sub->add_option("--max-chunk-tokens", o->max_chunk_tokens, "Chunk size cap in estimated tokens")
        ->check(CLI::Range(std::uint64_t{16}, std::uint64_t{1} << 20));
    sub->add_option("--headers", o->headers, "Section header lexicon file, one header per line");
    sub->callback([&g, o] { g.run = [&g, o] { return run_ingest(g, *o); }; });
}

void add_summarize(CLI::App& app, Globals& g) {
    auto o = std::make_shared<SummarizeOpts>();
    auto* sub = app.add_subcommand("summarize", "Summarize one patient's chart for a chief complaint.");
    sub->add_option("--patient", o->patient, "Patient id")->required();
    sub->add_option("--complaint", o->complaint, "Chief complaint, e.g. \"chest pain\"")->required();
    sub->add_option("--strategy", o->strategy, "Prompting strategy: " + legal_strategy_names() + " (aliases: cot, ps, ...)")
        ->check(strategy_validator());
    sub->add_option("--k", o->k, "Sections to retrieve")->check(CLI::PositiveNumber);
    auto* single = sub->add_flag("--single", o->single, "Single-node mode: local retrieval, model reloaded every run");
    auto* dual = sub->add_flag("--dual", o->dual, "Dual-node mode (default): remote retrieval node, model kept loaded");
    single->excludes(dual);
    sub->add_option("--api", o->api, "Submit through a running summarizer API instead of in-process");
    sub->add_option("--retriever", o->retriever, "Retrieval node host:port (default: config retrieval_node)");
    sub->add_option("--model-server", o->model_server, "Model server URL (default: config model_server)");
    sub->add_option("--model", o->model, "Generation model (default: config model)");
    sub->add_option("--index-dir", o->index_dir, "Index directory for --single (default: config index_dir)");
    sub->add_flag("--mock-embedder", o->mock_embedder, "Hash-projection query embeddings for --single");
    sub->add_option("--embed-model", o->embed_model, "Embedding model for --single");
    sub->add_option("--out", o->out, "Write the job (bundle, timings) as JSON here");
    sub->add_option("--timeout", o->timeout_s, "Generation timeout in seconds")->check(CLI::PositiveNumber);
    sub->callback([&g, o] { g.run = [&g, o] { return run_summarize(g, *o); }; });
}

void add_judge(CLI::App& app, Globals& g) {
    auto o = std::make_shared<JudgeOpts>();
    auto* sub = app.add_subcommand("judge", "Score a summary's factual accuracy, completeness and clarity.");
    sub->add_option("--summary", o->summary, "Job JSON from summarize --out, or a bare summary bundle");
    sub->add_option("--job", o->job, "Job id on a running summarizer API");
    sub->add_option("--api", o->api, "Summarizer API URL for --job (default: config summarizer_api)");
    sub->add_option("--patient", o->patient, "Patient id (taken from the job when omitted)");
    sub->add_option("--complaint", o->complaint, "Chief complaint (taken from the job when omitted)");
    sub->add_option("--index-dir", o->index_dir, "Index directory (default: config index_dir)");
    sub->add_flag("--mock-embedder", o->mock_embedder, "Hash-projection claim embeddings");
    sub->add_option("--embed-model", o->embed_model, "Embedding model for claims (default: config embed_model)");
    sub->add_option("--judge-endpoint", o->judge_endpoint, "Judge model server URL (default: config judge_endpoint)");
    sub->add_option("--judge-model", o->judge_model, "Judge model name (default: config judge_model)");
    sub->add_option("--mock-judge", o->mock_judge, "Answer judge prompts in-process from this script");
    sub->add_option("--k", o->k, "Evidence snippets per claim")->check(CLI::PositiveNumber);
    sub->add_option("--concurrency", o->concurrency, "Claims verified in parallel")->check(CLI::PositiveNumber);
    sub->add_option("--out", o->out, "Write the report JSON here");
    sub->callback([&g, o] { g.run = [&g, o] { return run_judge(g, *o); }; });
}

}  // namespace chartsum::cli
