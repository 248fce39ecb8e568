#include "chartsum/mock_model_server.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "chartsum/prompt_kit.hpp"

namespace chartsum {

void to_json(json& j, const MockProfile& p) {
    j = json{{"model_load_s", p.model_load_s},
             {"generate_s", p.generate_s},
             {"per_token_generate_s", p.per_token_generate_s},
             {"retrieval_s", p.retrieval_s},
             {"embed_s", p.embed_s}};
}

void from_json(const json& j, MockProfile& p) {
    if (!j.is_object()) throw std::invalid_argument("mock profile must be an object");
    p = MockProfile{};
    for (const auto& [key, value] : j.items()) {
        double* slot = nullptr;
        if (key == "model_load_s") slot = &p.model_load_s;
        else if (key == "generate_s") slot = &p.generate_s;
        else if (key == "per_token_generate_s") slot = &p.per_token_generate_s;
        else if (key == "retrieval_s") slot = &p.retrieval_s;
        else if (key == "embed_s") slot = &p.embed_s;
        else throw std::invalid_argument("unknown mock profile key '" + key + "'");
        if (!value.is_number() || value.get<double>() < 0) {
            throw std::invalid_argument("mock profile '" + key + "' must be a number >= 0");
        }
        *slot = value.get<double>();
    }
}

void to_json(json& j, const MockStats& s) {
    j = json{{"loads", s.loads},
             {"unloads", s.unloads},
             {"generate_calls", s.generate_calls},
             {"max_concurrent_generate", s.max_concurrent_generate},
             {"embed_calls", s.embed_calls}};
}

void from_json(const json& j, MockStats& s) {
    s.loads = j.at("loads").get<std::uint64_t>();
    s.unloads = j.value("unloads", std::uint64_t{0});
    s.generate_calls = j.at("generate_calls").get<std::uint64_t>();
    s.max_concurrent_generate = j.at("max_concurrent_generate").get<std::uint64_t>();
    s.embed_calls = j.value("embed_calls", std::uint64_t{0});
}

namespace {

std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const auto nl = s.find('\n', pos);
        if (nl == std::string_view::npos) {
            lines.emplace_back(s.substr(pos));
            break;
        }
        lines.emplace_back(s.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return lines;
}

std::string first_sentence(std::string_view text) {
    const std::string flat = collapse_whitespace(text);
    for (std::size_t i = 0; i < flat.size(); ++i) {
        if ((flat[i] == '.' || flat[i] == '!' || flat[i] == '?') && (i + 1 == flat.size() || flat[i + 1] == ' ')) {
            return flat.substr(0, i + 1);
        }
    }
    return flat;
}

std::set<std::string> content_words(std::string_view text) {
    std::set<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (cur.size() >= 3) out.insert(cur);
        cur.clear();
    };
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

// Text between a line equal to open and a line equal to close.
std::string block_between(const std::vector<std::string>& lines, std::string_view open, std::string_view close) {
    std::string out;
    bool inside = false;
    for (const auto& line : lines) {
        if (!inside) {
            inside = trim(line) == open;
            continue;
        }
        if (trim(line) == close) break;
        if (!out.empty()) out += '\n';
        out += line;
    }
    return out;
}

std::string respond_summary(const std::string& prompt) {
    // Repair prompts repeat the original; only look at that part.
    std::string_view body = prompt;
    if (const auto cut = body.find("\nYOUR PREVIOUS RESPONSE:"); cut != std::string_view::npos) body = body.substr(0, cut);
    if (const auto ex = body.rfind("Ideal answer:"); ex != std::string_view::npos) body = body.substr(ex);

    static const std::regex section_re(R"(^SECTION [0-9]+( \[.*\])?:$)");
    std::vector<std::string> sections;
    std::string complaint;
    bool collecting = false;
    for (const auto& line : split_lines(body)) {
        if (std::regex_match(line, section_re)) {
            sections.emplace_back();
            collecting = true;
            continue;
        }
        if (line.rfind("Chief complaint:", 0) == 0) {
            complaint = std::string(trim(std::string_view(line).substr(16)));
            collecting = false;
            continue;
        }
        if (collecting && !sections.empty()) sections.back() += line + "\n";
    }

    SummaryBundle bundle;
    std::vector<std::string> sentences;
    for (const auto& s : sections) {
        auto sent = first_sentence(s);
        if (!sent.empty()) sentences.push_back(std::move(sent));
    }
    for (std::size_t i = 0; i < 3; ++i) {
        bundle.critical_bullets.push_back(i < sentences.size() ? sentences[i]
                                                               : "No further critical finding in the retrieved excerpts.");
    }
    std::string para = complaint.empty() ? std::string("Chart review.") : "Presenting with " + complaint + ".";
    for (const auto& s : sentences) para += " " + s;
    bundle.context_paragraph = para;
    return serialize_as_instructed(bundle);
}

std::vector<std::string> split_claims(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        auto t = collapse_whitespace(cur);
        if (!t.empty()) out.push_back(std::move(t));
        cur.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        const bool stop = c == ';' || c == '\n' ||
                          ((c == '.' || c == '!' || c == '?') && (i + 1 == text.size() || text[i + 1] == ' ' ||
                                                                  text[i + 1] == '\n'));
        if (stop) {
            flush();
        } else {
            cur.push_back(c);
        }
    }
    flush();
    return out;
}

std::string respond_extract(const std::string& prompt) {
    const auto lines = split_lines(prompt);
    const auto text = block_between(lines, "TEXT:", "END TEXT");
    return json{{"claims", split_claims(text)}}.dump();
}

std::string respond_verify(const std::string& prompt) {
    const auto lines = split_lines(prompt);
    std::string claim;
    std::vector<std::string> evidence;
    static const std::regex evidence_re(R"(^EVIDENCE [0-9]+.*:$)");
    bool in_evidence = false;
    for (const auto& line : lines) {
        if (line.rfind("CLAIM:", 0) == 0) {
            claim = std::string(trim(std::string_view(line).substr(6)));
            in_evidence = false;
        } else if (std::regex_match(line, evidence_re)) {
            evidence.emplace_back();
            in_evidence = true;
        } else if (line.rfind("END EVIDENCE", 0) == 0) {
            in_evidence = false;
        } else if (in_evidence && !evidence.empty()) {
            evidence.back() += line + "\n";
        }
    }
    const auto claim_words = content_words(claim);
    double best = 0.0;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < evidence.size(); ++i) {
        const auto words = content_words(evidence[i]);
        std::size_t hit = 0;
        for (const auto& w : claim_words) hit += words.count(w);
        const double frac = claim_words.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(claim_words.size());
        if (frac > best) {
            best = frac;
            best_i = i;
        }
    }
    if (best >= 0.5) {
        return json{{"verdict", "SUPPORTED"}, {"evidence_indices", {best_i + 1}}, {"rationale", "wording found in the evidence"}}
            .dump();
    }
    return json{{"verdict", "NOT_FOUND"}, {"evidence_indices", json::array()}, {"rationale", "no matching evidence"}}.dump();
}

std::string respond_quality() {
    return json{{"completeness", 4},
                {"clarity", 4},
                {"completeness_rationale", "covers the retrieved sections"},
                {"clarity_rationale", "readable"}}
        .dump();
}

}  // namespace

std::string HeuristicResponder::respond(const std::string& prompt) {
    if (prompt.find("TASK: EXTRACT_CLAIMS") != std::string::npos) return respond_extract(prompt);
    if (prompt.find("TASK: VERIFY_CLAIM") != std::string::npos) return respond_verify(prompt);
    if (prompt.find("TASK: RATE_QUALITY") != std::string::npos) return respond_quality();
    return respond_summary(prompt);
}

ScriptedResponder::ScriptedResponder(const json& script) {
    if (!script.is_object()) throw std::invalid_argument("mock script must be an object");
    const auto as_text = [](const json& r) { return r.is_string() ? r.get<std::string>() : r.dump(); };
    if (const auto it = script.find("rules"); it != script.end()) {
        if (!it->is_array()) throw std::invalid_argument("mock script 'rules' must be an array");
        for (const auto& r : *it) {
            Rule rule;
            const auto& c = r.at("contains");
            if (c.is_string()) {
                rule.contains.push_back(c.get<std::string>());
            } else {
                rule.contains = c.get<std::vector<std::string>>();
            }
            rule.response = as_text(r.at("response"));
            rules_.push_back(std::move(rule));
        }
    }
    if (const auto it = script.find("default"); it != script.end() && !it->is_null()) default_ = as_text(*it);
}

std::shared_ptr<ScriptedResponder> ScriptedResponder::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open mock script " + path.string());
    const json script = json::parse(in, nullptr, false);
    if (script.is_discarded()) throw std::runtime_error("mock script " + path.string() + " is not valid JSON");
    return std::make_shared<ScriptedResponder>(script);
}

std::string ScriptedResponder::respond(const std::string& prompt) {
    for (const auto& rule : rules_) {
        const bool all = std::all_of(rule.contains.begin(), rule.contains.end(),
                                     [&](const std::string& s) { return prompt.find(s) != std::string::npos; });
        if (all) return rule.response;
    }
    if (default_) return *default_;
    return fallback_.respond(prompt);
}

namespace {

void sleep_for_s(double s) {
    if (s > 0) std::this_thread::sleep_for(std::chrono::duration<double>(s));
}

// Ollama accepts numbers (seconds) or strings like "-1" and "0"; anything
// negative means forever. Positive finite durations are treated as forever
// here since the mock has no expiry timer.
double parse_keep_alive(const json& body) {
    const auto it = body.find("keep_alive");
    if (it == body.end()) return -1.0;
    if (it->is_number()) return it->get<double>();
    if (it->is_string()) {
        try {
            return std::stod(it->get<std::string>());
        } catch (const std::exception&) {
            return -1.0;
        }
    }
    return -1.0;
}

void reply_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
}

}  // namespace

MockModelServer::MockModelServer(MockProfile profile, std::shared_ptr<Responder> responder, std::string host,
                                 std::uint16_t port)
    : profile_(profile),
      responder_(responder ? std::move(responder) : std::make_shared<HeuristicResponder>()),
      host_(std::move(host)),
      port_(port),
      server_(std::make_unique<httplib::Server>()) {}

MockModelServer::~MockModelServer() { stop(); }

std::string MockModelServer::url() const { return "http://" + host_ + ":" + std::to_string(port_); }

MockStats MockModelServer::stats() const {
    return MockStats{loads_.load(), unloads_.load(), generate_calls_.load(), max_in_flight_.load(), embed_calls_.load()};
}

bool MockModelServer::model_resident() const {
    std::lock_guard lock(load_mu_);
    return resident_;
}

MockModelServer::GenerateOutcome MockModelServer::generate(const std::string& prompt, double keep_alive) {
    GenerateOutcome out;
    {
        std::lock_guard lock(load_mu_);
        if (!resident_) {
            const auto t0 = std::chrono::steady_clock::now();
            sleep_for_s(profile_.model_load_s);
            out.load_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            resident_ = true;
            ++loads_;
        }
    }
    if (!prompt.empty()) {
        ++generate_calls_;
        const auto now = ++in_flight_;
        auto seen = max_in_flight_.load();
        while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
        }
        const auto t0 = std::chrono::steady_clock::now();
        out.text = responder_->respond(prompt);
        sleep_for_s(profile_.generate_s + profile_.per_token_generate_s * static_cast<double>(estimate_tokens(out.text)));
        out.eval_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        --in_flight_;
    }
    if (keep_alive == 0.0) {
        std::lock_guard lock(load_mu_);
        if (resident_) {
            resident_ = false;
            ++unloads_;
        }
    }
    return out;
}

void MockModelServer::start() {
    auto& svr = *server_;
    svr.Post("/api/generate", [this](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) {
            reply_json(res, 400, json{{"error", "body must be a JSON object"}});
            return;
        }
        const auto prompt = body.value("prompt", std::string{});
        const auto outcome = generate(prompt, parse_keep_alive(body));
        reply_json(res, 200,
                   json{{"model", body.value("model", std::string{"mock"})},
                        {"response", outcome.text},
                        {"done", true},
                        {"load_duration", static_cast<std::int64_t>(outcome.load_s * 1e9)},
                        {"eval_duration", static_cast<std::int64_t>(outcome.eval_s * 1e9)}});
    });
    svr.Post("/api/embed", [this](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object() || !body.contains("input")) {
            reply_json(res, 400, json{{"error", "expected {model, input}"}});
            return;
        }
        ++embed_calls_;
        std::vector<std::string> inputs;
        if (body["input"].is_string()) {
            inputs.push_back(body["input"].get<std::string>());
        } else if (body["input"].is_array()) {
            for (const auto& v : body["input"]) {
                if (!v.is_string()) {
                    reply_json(res, 400, json{{"error", "input entries must be strings"}});
                    return;
                }
                inputs.push_back(v.get<std::string>());
            }
        }
        sleep_for_s(profile_.embed_s);
        reply_json(res, 200, json{{"embeddings", embedder_.embed_batch(inputs)}});
    });
    svr.Get("/api/tags", [](const httplib::Request&, httplib::Response& res) {
        reply_json(res, 200, json{{"models", json::array({json{{"name", "mock"}}})}});
    });
    svr.Get("/mock/stats", [this](const httplib::Request&, httplib::Response& res) { reply_json(res, 200, stats()); });

    if (port_ == 0) {
        const int p = svr.bind_to_any_port(host_);
        if (p <= 0) throw std::runtime_error("mock model server: cannot bind " + host_);
        port_ = static_cast<std::uint16_t>(p);
    } else if (!svr.bind_to_port(host_, port_)) {
        throw std::runtime_error("mock model server: cannot bind " + host_ + ":" + std::to_string(port_));
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    spdlog::debug("mock model server on {}", url());
}

void MockModelServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

void MockModelServer::wait() {
    if (thread_.joinable()) thread_.join();
}

GenerationResult InProcessGenerator::generate(const std::string& prompt) {
    ++calls_;
    {
        std::lock_guard lock(mu_);
        prompts_.push_back(prompt);
    }
    const auto t0 = std::chrono::steady_clock::now();
    GenerationResult r;
    r.text = responder_->respond(prompt);
    r.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.eval_s = r.wall_s;
    return r;
}

std::vector<std::string> InProcessGenerator::prompts() const {
    std::lock_guard lock(mu_);
    return prompts_;
}

}  // namespace chartsum
