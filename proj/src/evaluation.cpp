#include "chartsum/evaluation.hpp"

#include <fstream>

#include <spdlog/spdlog.h>

#include "chartsum/mock_model_server.hpp"
#include "chartsum/note_parser.hpp"
#include "chartsum/records.hpp"
#include "chartsum/retrieval_node.hpp"
#include "chartsum/summarizer_node.hpp"

namespace chartsum {

EvalManifest parse_manifest(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw std::invalid_argument("manifest must be an object");
    const auto path_of = [&](const json& v) {
        std::filesystem::path p = v.get<std::string>();
        return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    EvalManifest m;
    for (const auto& [key, v] : j.items()) {
        if (key == "records" || key == "dataset") {
            m.records = path_of(v);
        } else if (key == "index_dir") {
            m.index_dir = path_of(v);
        } else if (key == "complaints") {
            for (const auto& c : v) m.complaints.push_back(WorkItem{c.at("patient_id").get<std::string>(),
                                                                    c.at("complaint").get<std::string>()});
        } else if (key == "models") {
            m.models = v.get<std::vector<std::string>>();
        } else if (key == "strategies") {
            for (const auto& s : v.get<std::vector<std::string>>()) {
                const auto parsed = parse_strategy(s);
                if (!parsed) throw std::invalid_argument("manifest: unknown strategy '" + s + "'; expected one of: " +
                                                         legal_strategy_names());
                m.strategies.push_back(*parsed);
            }
        } else if (key == "k") {
            m.k = v.get<std::uint32_t>();
        } else if (key == "weights") {
            m.weights = v.get<JudgeWeights>();
        } else if (key == "model_endpoint") {
            m.model_endpoint = v.get<std::string>();
        } else if (key == "embed_model") {
            m.embed_model = v.get<std::string>();
        } else if (key == "judge_endpoint") {
            m.judge_endpoint = v.get<std::string>();
        } else if (key == "judge_model") {
            m.judge_model = v.get<std::string>();
        } else if (key == "judge_api_key") {
            m.judge_api_key = v.get<std::string>();
        } else if (key == "mock_script") {
            m.mock_script = path_of(v);
        } else {
            throw std::invalid_argument("manifest: unknown key '" + key + "'");
        }
    }
    if (!m.records && !m.index_dir) throw std::invalid_argument("manifest: give 'records' or 'index_dir'");
    if (m.complaints.empty()) throw std::invalid_argument("manifest: no complaints");
    if (m.models.empty()) throw std::invalid_argument("manifest: no models");
    if (m.strategies.empty()) m.strategies.assign(all_strategies().begin(), all_strategies().end());
    if (m.k < 1) throw std::invalid_argument("manifest: k must be >= 1");
    validate_weights(m.weights);
    return m;
}

EvalManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw std::invalid_argument("manifest " + path.string() + " is not valid JSON");
    return parse_manifest(j, path.parent_path());
}

EvalOutput run_evaluation(const EvalManifest& m) {
    std::shared_ptr<EmbeddingClient> embedder;
    const auto model_ep = parse_endpoint(m.model_endpoint, 11434);
    if (m.embed_model.empty()) {
        embedder = std::make_shared<HashProjectionEmbedder>();
    } else {
        embedder = std::make_shared<HttpEmbeddingClient>(
            Endpoint{model_ep.scheme, model_ep.host, model_ep.port, "/api/embed"}, m.embed_model);
    }

    auto store = std::make_shared<IndexStore>(m.index_dir.value_or(std::filesystem::path{}));
    if (m.index_dir) {
        store->reload();
    } else {
        const auto cfg = ParserConfig::defaults();
        for (const auto& rec : load_records(*m.records)) {
            store->put(std::make_shared<PatientIndex>(build_index(rec.patient_id, split_record(rec, cfg), *embedder)));
        }
    }
    auto service = std::make_shared<RetrievalService>(store, embedder);
    auto source = std::make_shared<LocalContextSource>(service);

    std::shared_ptr<Responder> scripted;
    if (m.mock_script) scripted = ScriptedResponder::load(*m.mock_script);

    std::shared_ptr<TextGenerator> judge_model;
    if (scripted) {
        judge_model = std::make_shared<InProcessGenerator>(scripted, "mock-judge");
    } else {
        GenerationClientConfig jc;
        const auto ep = parse_endpoint(m.judge_endpoint, 11434);
        jc.endpoint = Endpoint{ep.scheme, ep.host, ep.port, ep.path.empty() ? "/api/generate" : ep.path};
        jc.model = m.judge_model;
        jc.api_key = m.judge_api_key;
        judge_model = std::make_shared<GenerationClient>(jc);
    }
    JudgeConfig jcfg;
    jcfg.k = m.k;
    jcfg.weights = m.weights;
    Judge judge(judge_model, embedder, jcfg);

    EvalOutput out;
    for (const auto& model : m.models) {
        std::shared_ptr<TextGenerator> gen;
        if (scripted) {
            gen = std::make_shared<InProcessGenerator>(scripted, model);
        } else {
            GenerationClientConfig gc;
            gc.endpoint = Endpoint{model_ep.scheme, model_ep.host, model_ep.port, "/api/generate"};
            gc.model = model;
            gen = std::make_shared<GenerationClient>(gc);
        }
        SummarizerNode node(source, gen, PromptLibrary::builtin());
        for (const auto strategy : m.strategies) {
            for (const auto& item : m.complaints) {
                const auto complaint = ChiefComplaint::make(item.patient_id, item.complaint, m.k);
                const auto label = model + "/" + std::string(to_string(strategy)) + "/" + item.patient_id;
                const auto snap = node.wait(node.submit(complaint, strategy));
                if (snap.state != JobState::Done) {
                    out.failures.push_back(label + ": " + std::string(to_string(snap.failure->kind)) + ": " +
                                           snap.failure->message);
                    continue;
                }
                try {
                    const auto index = store->find(item.patient_id);
                    out.reports.push_back(judge.evaluate(*snap.bundle, complaint, *index));
                } catch (const JudgeError& e) {
                    out.failures.push_back(label + ": judge: " + e.what());
                }
            }
        }
    }
    for (const auto& f : out.failures) spdlog::warn("evaluation: {}", f);
    std::vector<RunResult> runs;
    for (const auto& r : out.reports)
        for (auto& rr : run_results(r)) runs.push_back(std::move(rr));
    if (!runs.empty()) out.rows = aggregate(runs);
    return out;
}

}  // namespace chartsum
