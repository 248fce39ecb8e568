#include "chartsum/cli_config.hpp"

#include <fstream>
#include <functional>
#include <map>

namespace chartsum {

namespace {

template <typename T>
T typed(const json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw std::invalid_argument("config key '" + key + "' has the wrong type");
    }
}

}  // namespace

CliConfig parse_cli_config(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
    CliConfig c;
    const auto path = [&](const json& v, const std::string& key) {
        std::filesystem::path p = typed<std::string>(v, key);
        return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    using Setter = std::function<void(const json&, const std::string&)>;
    const std::map<std::string, Setter> setters{
        {"data_dir", [&](const json& v, const std::string& k) { c.data_dir = path(v, k); }},
        {"index_dir", [&](const json& v, const std::string& k) { c.index_dir = path(v, k); }},
        {"template_dir", [&](const json& v, const std::string& k) { c.template_dir = path(v, k); }},
        {"header_lexicon", [&](const json& v, const std::string& k) { c.header_lexicon = path(v, k); }},
        {"retrieval_node", [&](const json& v, const std::string& k) { c.retrieval_node = typed<std::string>(v, k); }},
        {"summarizer_api", [&](const json& v, const std::string& k) { c.summarizer_api = typed<std::string>(v, k); }},
        {"model_server", [&](const json& v, const std::string& k) { c.model_server = typed<std::string>(v, k); }},
        {"model", [&](const json& v, const std::string& k) { c.model = typed<std::string>(v, k); }},
        {"embed_model", [&](const json& v, const std::string& k) { c.embed_model = typed<std::string>(v, k); }},
        {"judge_endpoint", [&](const json& v, const std::string& k) { c.judge_endpoint = typed<std::string>(v, k); }},
        {"judge_model", [&](const json& v, const std::string& k) { c.judge_model = typed<std::string>(v, k); }},
        {"judge_api_key", [&](const json& v, const std::string& k) { c.judge_api_key = typed<std::string>(v, k); }},
        {"k",
         [&](const json& v, const std::string& k) {
             c.k = typed<std::uint32_t>(v, k);
             if (c.k < 1) throw std::invalid_argument("config key 'k' must be >= 1");
         }},
        {"strategy",
         [&](const json& v, const std::string& k) {
             const auto s = parse_strategy(typed<std::string>(v, k));
             if (!s) throw std::invalid_argument("config key 'strategy' must be one of: " + legal_strategy_names());
             c.strategy = *s;
         }},
        {"weights",
         [&](const json& v, const std::string& k) {
             if (!v.is_object()) throw std::invalid_argument("config key 'weights' must be an object");
             JudgeWeights w;
             for (const auto& [wk, wv] : v.items()) {
                 double* slot = wk == "w_s"       ? &w.w_s
                                : wk == "w_c"     ? &w.w_c
                                : wk == "w_u"     ? &w.w_u
                                : wk == "clip_lo" ? &w.clip_lo
                                : wk == "clip_hi" ? &w.clip_hi
                                                  : nullptr;
                 if (!slot) throw std::invalid_argument("unknown config key '" + k + "." + wk + "'");
                 *slot = typed<double>(wv, k + "." + wk);
             }
             c.weights = w;
         }},
        {"max_chunk_tokens",
         [&](const json& v, const std::string& k) { c.max_chunk_tokens = typed<std::uint64_t>(v, k); }},
        {"context_budget_tokens",
         [&](const json& v, const std::string& k) { c.context_budget_tokens = typed<std::uint64_t>(v, k); }},
        {"generation_timeout_s",
         [&](const json& v, const std::string& k) {
             c.generation_timeout_s = typed<double>(v, k);
             if (c.generation_timeout_s <= 0) throw std::invalid_argument("generation_timeout_s must be > 0");
         }},
        {"judge_concurrency",
         [&](const json& v, const std::string& k) { c.judge_concurrency = typed<std::size_t>(v, k); }},
        {"log_level", [&](const json& v, const std::string& k) { c.log_level = typed<std::string>(v, k); }},
    };
    for (const auto& [key, value] : j.items()) {
        const auto it = setters.find(key);
        if (it == setters.end()) throw std::invalid_argument("unknown config key '" + key + "'");
        it->second(value, key);
    }
    return c;
}

CliConfig load_cli_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config " + path.string());
    const json j = json::parse(in, nullptr, false, true);
    if (j.is_discarded()) throw std::invalid_argument("config " + path.string() + " is not valid JSON");
    return parse_cli_config(j, path.parent_path());
}

json describe_config(const CliConfig& c) {
    const auto opt = [](const std::optional<std::filesystem::path>& p) { return p ? json(p->string()) : json(nullptr); };
    return json{{"data_dir", c.data_dir.string()},
                {"index_dir", c.index_dir.string()},
                {"template_dir", opt(c.template_dir)},
                {"header_lexicon", opt(c.header_lexicon)},
                {"retrieval_node", c.retrieval_node},
                {"summarizer_api", c.summarizer_api},
                {"model_server", c.model_server},
                {"model", c.model},
                {"embed_model", c.embed_model},
                {"judge_endpoint", c.judge_endpoint},
                {"judge_model", c.judge_model},
                {"judge_api_key", c.judge_api_key.empty() ? "" : "<set>"},
                {"k", c.k},
                {"strategy", c.strategy},
                {"weights", c.weights},
                {"max_chunk_tokens", c.max_chunk_tokens},
                {"context_budget_tokens", c.context_budget_tokens},
                {"generation_timeout_s", c.generation_timeout_s},
                {"judge_concurrency", c.judge_concurrency},
                {"log_level", c.log_level}};
}

}  // namespace chartsum
