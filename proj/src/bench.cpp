#include "chartsum/bench.hpp"

#include <fstream>

#include <spdlog/spdlog.h>

#include "chartsum/embed_index.hpp"
#include "chartsum/note_parser.hpp"
#include "chartsum/records.hpp"
#include "chartsum/retrieval_node.hpp"
#include "chartsum/summarizer_node.hpp"

namespace chartsum {

std::string_view to_string(BenchMode m) { return m == BenchMode::Single ? "single" : "dual"; }

void BenchScenario::validate() const {
    if (runs < 1) throw std::invalid_argument("bench: runs must be >= 1");
    if (modes.empty()) throw std::invalid_argument("bench: no modes selected");
    if (workload.empty()) throw std::invalid_argument("bench: workload is empty");
    if (!records && !index_dir) throw std::invalid_argument("bench: give 'records' or 'index_dir'");
    if (generation_timeout_s <= 0) throw std::invalid_argument("bench: generation_timeout_s must be > 0");
    for (const auto& w : workload) ChiefComplaint::make(w.patient_id, w.complaint);
}

BenchScenario parse_scenario(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw std::invalid_argument("bench scenario must be an object");
    const auto path_of = [&](const json& v) {
        std::filesystem::path p = v.get<std::string>();
        return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    BenchScenario s;
    for (const auto& [key, v] : j.items()) {
        if (key == "modes" || key == "mode") {
            s.modes.clear();
            const auto names = v.is_array() ? v.get<std::vector<std::string>>() : std::vector{v.get<std::string>()};
            for (const auto& n : names) {
                if (n == "single") s.modes.push_back(BenchMode::Single);
                else if (n == "dual") s.modes.push_back(BenchMode::Dual);
                else if (n == "both") s.modes = {BenchMode::Single, BenchMode::Dual};
                else throw std::invalid_argument("bench: unknown mode '" + n + "'");
            }
        } else if (key == "runs") {
            if (!v.is_number_unsigned()) throw std::invalid_argument("bench: runs must be a positive integer");
            s.runs = v.get<std::uint32_t>();
        } else if (key == "mock_profile") {
            s.mock_profile = v.get<MockProfile>();
        } else if (key == "mock_script") {
            s.mock_script = path_of(v);
        } else if (key == "records") {
            s.records = path_of(v);
        } else if (key == "index_dir") {
            s.index_dir = path_of(v);
        } else if (key == "model_endpoint") {
            s.model_endpoint = v.get<std::string>();
        } else if (key == "model") {
            s.model = v.get<std::string>();
        } else if (key == "embed_model") {
            s.embed_model = v.get<std::string>();
        } else if (key == "generation_timeout_s") {
            s.generation_timeout_s = v.get<double>();
        } else if (key == "workload") {
            for (const auto& w : v) {
                WorkItem item;
                item.patient_id = w.at("patient_id").get<std::string>();
                item.complaint = w.at("complaint").get<std::string>();
                if (const auto st = w.find("strategy"); st != w.end()) {
                    const auto parsed = parse_strategy(st->get<std::string>());
                    if (!parsed) throw std::invalid_argument("bench: unknown strategy; expected one of: " + legal_strategy_names());
                    item.strategy = *parsed;
                }
                s.workload.push_back(std::move(item));
            }
        } else {
            throw std::invalid_argument("bench: unknown scenario key '" + key + "'");
        }
    }
    s.validate();
    return s;
}

BenchScenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario " + path.string());
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw std::invalid_argument("scenario " + path.string() + " is not valid JSON");
    return parse_scenario(j, path.parent_path());
}

namespace {

std::shared_ptr<IndexStore> build_store(const BenchScenario& s) {
    if (s.index_dir) {
        auto store = std::make_shared<IndexStore>(*s.index_dir);
        store->reload();
        return store;
    }
    auto store = std::make_shared<IndexStore>();
    HashProjectionEmbedder embedder;
    const auto cfg = ParserConfig::defaults();
    for (const auto& rec : load_records(*s.records)) {
        store->put(std::make_shared<PatientIndex>(build_index(rec.patient_id, split_record(rec, cfg), embedder)));
    }
    return store;
}

std::vector<JobRequest> jobs_for(const BenchScenario& s) {
    std::vector<JobRequest> jobs;
    for (std::uint32_t i = 0; i < s.runs; ++i) {
        const auto& w = s.workload[i % s.workload.size()];
        jobs.push_back(JobRequest{ChiefComplaint::make(w.patient_id, w.complaint), w.strategy});
    }
    return jobs;
}

}  // namespace

BenchResult run_bench(const BenchScenario& scenario) {
    scenario.validate();
    BenchResult result;
    const auto store = build_store(scenario);
    std::shared_ptr<Responder> responder;
    if (scenario.mock_script) {
        responder = ScriptedResponder::load(*scenario.mock_script);
    } else {
        responder = std::make_shared<HeuristicResponder>();
    }

    for (const auto mode : scenario.modes) {
        // Fresh backends per mode so every mode starts with a cold model.
        std::unique_ptr<MockModelServer> mock;
        Endpoint model_ep;
        if (scenario.mock_profile) {
            mock = std::make_unique<MockModelServer>(*scenario.mock_profile, responder);
            mock->start();
            model_ep = parse_endpoint(mock->url(), 80);
        } else {
            model_ep = parse_endpoint(scenario.model_endpoint, 11434);
        }

        std::shared_ptr<EmbeddingClient> embedder;
        if (!scenario.embed_model.empty()) {
            embedder = std::make_shared<HttpEmbeddingClient>(Endpoint{model_ep.scheme, model_ep.host, model_ep.port, "/api/embed"},
                                                             scenario.embed_model);
        } else if (mock) {
            embedder = std::make_shared<HttpEmbeddingClient>(Endpoint{model_ep.scheme, model_ep.host, model_ep.port, "/api/embed"},
                                                             "hash-projection-256");
        } else {
            embedder = std::make_shared<HashProjectionEmbedder>();
        }

        RetrievalServiceConfig rcfg;
        if (scenario.mock_profile) rcfg.simulated_latency = std::chrono::duration<double>(scenario.mock_profile->retrieval_s);
        auto service = std::make_shared<RetrievalService>(store, embedder, rcfg);

        GenerationClientConfig gcfg;
        gcfg.endpoint = Endpoint{model_ep.scheme, model_ep.host, model_ep.port, "/api/generate"};
        gcfg.model = scenario.model;
        gcfg.timeout_s = scenario.generation_timeout_s;
        gcfg.keep_alive = mode == BenchMode::Single ? KeepAlive::unload() : KeepAlive::forever();
        auto generator = std::make_shared<GenerationClient>(gcfg);
        if (!generator->reachable()) throw std::runtime_error("bench: model server " + model_ep.origin() + " unreachable");

        std::unique_ptr<RetrievalServer> server;
        std::shared_ptr<ContextSource> source;
        SummarizerConfig scfg;
        if (mode == BenchMode::Single) {
            scfg.mode = NodeMode::Single;
            source = std::make_shared<LocalContextSource>(service);
        } else {
            scfg.mode = NodeMode::Dual;
            server = std::make_unique<RetrievalServer>(service, "127.0.0.1", 0);
            server->start();
            RetrievalClientConfig ccfg;
            ccfg.port = server->port();
            source = std::make_shared<RetrievalClient>(ccfg);
        }

        spdlog::info("bench: {} mode, {} run(s)", to_string(mode), scenario.runs);
        {
            SummarizerNode node(source, generator, PromptLibrary::builtin(), scfg);
            const auto snaps = node.pipeline_run(jobs_for(scenario));
            for (const auto& snap : snaps) {
                if (snap.state == JobState::Failed) {
                    result.warnings.push_back(snap.job_id + " failed: " + std::string(to_string(snap.failure->kind)) + ": " +
                                              snap.failure->message);
                }
                if (snap.timings) result.timings.push_back(*snap.timings);
            }
        }
        if (server) server->stop();
        if (mock) {
            result.mock_stats[std::string(to_string(mode))] = mock->stats();
            mock->stop();
        }
    }
    for (auto& w : clock_skew_warnings(result.timings)) result.warnings.push_back(std::move(w));
    for (const auto& w : result.warnings) spdlog::warn("bench: {}", w);
    return result;
}

std::vector<StageAverages> average_by_mode(const std::vector<StageTimings>& timings) {
    std::vector<StageAverages> out;
    for (const auto mode : {TimingMode::SingleNode, TimingMode::DualFirstRun, TimingMode::DualSubsequentRun}) {
        StageAverages avg{mode, 0, StageTimings{}};
        avg.mean.mode = mode;
        for (const auto& t : timings) {
            if (t.mode != mode) continue;
            ++avg.runs;
            avg.mean.model_load_s += t.model_load_s;
            avg.mean.retrieval_s += t.retrieval_s;
            avg.mean.summarization_s += t.summarization_s;
            avg.mean.total_s += t.total_s;
            avg.mean.retrieval_critical_s += t.retrieval_critical_s;
        }
        if (avg.runs == 0) continue;
        const auto n = static_cast<double>(avg.runs);
        avg.mean.model_load_s /= n;
        avg.mean.retrieval_s /= n;
        avg.mean.summarization_s /= n;
        avg.mean.total_s /= n;
        avg.mean.retrieval_critical_s /= n;
        out.push_back(avg);
    }
    return out;
}

std::optional<double> savings_ratio(const std::vector<StageTimings>& timings) {
    std::optional<double> single, subsequent;
    for (const auto& a : average_by_mode(timings)) {
        if (a.mode == TimingMode::SingleNode) single = a.mean.total_s;
        if (a.mode == TimingMode::DualSubsequentRun) subsequent = a.mean.total_s;
    }
    if (!single || !subsequent || *single <= 0) return std::nullopt;
    return 1.0 - *subsequent / *single;
}

std::vector<std::string> clock_skew_warnings(const std::vector<StageTimings>& timings) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < timings.size(); ++i) {
        const auto& t = timings[i];
        const double measured = t.model_load_s + t.summarization_s;
        if (t.total_s > 0 && measured > t.total_s * 1.05) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "clock skew in run %zu: load + summarization %.3f s exceed total %.3f s", i + 1,
                          measured, t.total_s);
            out.emplace_back(buf);
        }
    }
    return out;
}

namespace {

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string column_name(TimingMode m) {
    switch (m) {
        case TimingMode::SingleNode: return "Single";
        case TimingMode::DualFirstRun: return "Dual first";
        case TimingMode::DualSubsequentRun: return "Dual subsequent";
    }
    return "?";
}

}  // namespace

std::string emit_report(const std::vector<StageTimings>& timings, ReportFormat format) {
    if (timings.empty()) throw std::invalid_argument("emit_report needs at least one timing row");
    if (format == ReportFormat::Csv) {
        std::string out = "run,mode,model_load_s,retrieval_s,summarization_s,total_s,retrieval_critical_s\r\n";
        for (std::size_t i = 0; i < timings.size(); ++i) {
            const auto& t = timings[i];
            char buf[256];
            std::snprintf(buf, sizeof buf, "%zu,%s,%.6f,%.6f,%.6f,%.6f,%.6f\r\n", i + 1,
                          std::string(to_string(t.mode)).c_str(), t.model_load_s, t.retrieval_s, t.summarization_s,
                          t.total_s, t.retrieval_critical_s);
            out += buf;
        }
        return out;
    }

    const auto avgs = average_by_mode(timings);
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> head{"Stage (s)"};
    for (const auto& a : avgs) head.push_back(column_name(a.mode));
    cells.push_back(head);
    const std::pair<const char*, double StageTimings::*> stages[] = {
        {"Model load", &StageTimings::model_load_s},
        {"Retrieval gen.", &StageTimings::retrieval_s},
        {"Summarization gen.", &StageTimings::summarization_s},
        {"Total", &StageTimings::total_s},
    };
    for (const auto& [label, field] : stages) {
        std::vector<std::string> line{label};
        for (const auto& a : avgs) line.push_back(fmt2(a.mean.*field));
        cells.push_back(line);
    }
    std::vector<std::size_t> width(head.size(), 0);
    for (const auto& line : cells)
        for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
    std::string out;
    for (std::size_t r = 0; r < cells.size(); ++r) {
        for (std::size_t i = 0; i < cells[r].size(); ++i) {
            if (i == 0) {
                out += cells[r][i] + std::string(width[i] - cells[r][i].size(), ' ');
            } else {
                out += "  " + std::string(width[i] - cells[r][i].size(), ' ') + cells[r][i];
            }
        }
        out += '\n';
    }
    out += "\nRetrieval on the critical path:";
    for (const auto& a : avgs) out += " " + column_name(a.mode) + " " + fmt2(a.mean.retrieval_critical_s);
    out += '\n';
    out += "Runs per column:";
    for (const auto& a : avgs) out += " " + column_name(a.mode) + " " + std::to_string(a.runs);
    out += '\n';
    if (const auto r = savings_ratio(timings)) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "Dual subsequent saves %.1f%% of the single-node total\n", *r * 100.0);
        out += buf;
    }
    return out;
}

}  // namespace chartsum
