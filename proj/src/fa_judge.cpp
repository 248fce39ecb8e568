#include "chartsum/fa_judge.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include <spdlog/spdlog.h>

#include "chartsum/prompt_kit.hpp"

namespace chartsum {

std::string_view to_string(SummaryPart p) { return p == SummaryPart::Critical ? "critical" : "context"; }

namespace {

SummaryPart parse_part(std::string_view s) {
    if (s == "critical") return SummaryPart::Critical;
    if (s == "context") return SummaryPart::Context;
    throw std::invalid_argument("unknown summary part '" + std::string(s) + "'");
}

}  // namespace

std::string part_text(const SummaryBundle& bundle, SummaryPart part) {
    if (part == SummaryPart::Context) return bundle.context_paragraph;
    std::string out;
    for (std::size_t i = 0; i < bundle.critical_bullets.size(); ++i) {
        if (i) out += '\n';
        out += bundle.critical_bullets[i];
    }
    return out;
}

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::Supported: return "SUPPORTED";
        case Verdict::Contradicted: return "CONTRADICTED";
        case Verdict::NotFound: return "NOT_FOUND";
    }
    return "NOT_FOUND";
}

std::optional<Verdict> parse_verdict(std::string_view s) {
    if (s == "SUPPORTED") return Verdict::Supported;
    if (s == "CONTRADICTED") return Verdict::Contradicted;
    if (s == "NOT_FOUND") return Verdict::NotFound;
    return std::nullopt;
}

FAReport compute_fa(std::uint64_t S, std::uint64_t C, std::uint64_t U, const JudgeWeights& w) {
    const std::uint64_t N = S + C + U;
    if (N == 0) throw JudgeError(JudgeError::Kind::ZeroClaims, "summary yielded zero atomic claims");
    FAReport r;
    r.S = S;
    r.C = C;
    r.U = U;
    r.N = N;
    const auto n = static_cast<double>(N);
    r.delta_s = static_cast<double>(S) / n;
    r.delta_c = static_cast<double>(C) / n;
    r.delta_u = static_cast<double>(U) / n;
    // Weighted counts first, one division: exact for the usual weights.
    r.fa_raw = (w.w_s * static_cast<double>(S) + w.w_c * static_cast<double>(C) + w.w_u * static_cast<double>(U)) / n;
    r.fa = std::clamp(r.fa_raw, w.clip_lo, w.clip_hi);
    r.weights = w;
    return r;
}

FAReport compute_fa(const std::vector<ClaimVerdict>& verdicts, const JudgeWeights& w) {
    std::uint64_t s = 0, c = 0, u = 0;
    for (const auto& v : verdicts) {
        switch (v.verdict) {
            case Verdict::Supported: ++s; break;
            case Verdict::Contradicted: ++c; break;
            case Verdict::NotFound: ++u; break;
        }
    }
    auto r = compute_fa(s, c, u, w);
    r.per_claim = verdicts;
    return r;
}

double max_attainable_fa(const JudgeWeights& w) { return std::max({w.w_s, w.w_c, w.w_u}); }

void validate_weights(const JudgeWeights& w) {
    if (!(w.clip_lo < w.clip_hi)) throw std::invalid_argument("judge weights: clip_lo must be below clip_hi");
    const double best = max_attainable_fa(w);
    if (best < w.clip_hi) {
        spdlog::warn("judge weights cap FA at {:.4g}, below clip_hi {:.4g}", best, w.clip_hi);
        throw std::invalid_argument("judge weights can never reach clip_hi: best attainable fa_raw is " +
                                    std::to_string(best));
    }
}

// JSON ------------------------------------------------------------------

namespace {

template <typename T>
T req(const json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end()) throw std::invalid_argument(std::string("missing key '") + key + "'");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw std::invalid_argument(std::string("key '") + key + "' has the wrong type");
    }
}

void require_object(const json& j, const char* what) {
    if (!j.is_object()) throw std::invalid_argument(std::string(what) + " must be an object");
}

}  // namespace

void to_json(json& j, const AtomicClaim& v) {
    j = json{{"claim_id", v.claim_id}, {"text", v.text}, {"part", to_string(v.part)}, {"span", {v.span.begin, v.span.end}}};
}

void from_json(const json& j, AtomicClaim& v) {
    require_object(j, "claim");
    v.claim_id = req<std::string>(j, "claim_id");
    v.text = req<std::string>(j, "text");
    if (v.text.empty()) throw std::invalid_argument("claim text is empty");
    v.part = parse_part(req<std::string>(j, "part"));
    const auto span = req<std::vector<std::uint64_t>>(j, "span");
    if (span.size() != 2 || span[0] > span[1]) throw std::invalid_argument("claim span must be [begin, end]");
    v.span = ByteSpan{span[0], span[1]};
}

void to_json(json& j, const ClaimVerdict& v) {
    json ev = json::array();
    for (const auto& e : v.evidence) ev.push_back(json{{"chunk_id", e.chunk_id}, {"snippet", e.snippet}});
    j = json{{"claim_id", v.claim_id}, {"verdict", to_string(v.verdict)}, {"evidence", ev}, {"rationale", v.rationale}};
}

void from_json(const json& j, ClaimVerdict& v) {
    require_object(j, "verdict");
    v.claim_id = req<std::string>(j, "claim_id");
    const auto verdict = parse_verdict(req<std::string>(j, "verdict"));
    if (!verdict) throw std::invalid_argument("verdict must be SUPPORTED, CONTRADICTED or NOT_FOUND");
    v.verdict = *verdict;
    v.evidence.clear();
    for (const auto& e : req<json>(j, "evidence")) {
        v.evidence.push_back(Evidence{req<std::string>(e, "chunk_id"), req<std::string>(e, "snippet")});
    }
    if ((v.verdict == Verdict::NotFound) != v.evidence.empty()) {
        throw std::invalid_argument("claim " + v.claim_id + ": evidence does not fit the verdict");
    }
    v.rationale = req<std::string>(j, "rationale");
}

void to_json(json& j, const FAReport& v) {
    j = json{{"S", v.S},
             {"C", v.C},
             {"U", v.U},
             {"N", v.N},
             {"delta_s", v.delta_s},
             {"delta_c", v.delta_c},
             {"delta_u", v.delta_u},
             {"fa_raw", v.fa_raw},
             {"fa", v.fa},
             {"weights", v.weights},
             {"per_claim", v.per_claim}};
}

void from_json(const json& j, FAReport& v) {
    require_object(j, "fa report");
    v.S = req<std::uint64_t>(j, "S");
    v.C = req<std::uint64_t>(j, "C");
    v.U = req<std::uint64_t>(j, "U");
    v.N = req<std::uint64_t>(j, "N");
    if (v.N == 0 || v.N != v.S + v.C + v.U) throw std::invalid_argument("fa report: N must equal S + C + U and be positive");
    v.delta_s = req<double>(j, "delta_s");
    v.delta_c = req<double>(j, "delta_c");
    v.delta_u = req<double>(j, "delta_u");
    v.fa_raw = req<double>(j, "fa_raw");
    v.fa = req<double>(j, "fa");
    v.weights = req<JudgeWeights>(j, "weights");
    if (v.fa < v.weights.clip_lo || v.fa > v.weights.clip_hi) throw std::invalid_argument("fa report: fa out of range");
    v.per_claim = req<std::vector<ClaimVerdict>>(j, "per_claim");
}

void to_json(json& j, const QualityScores& v) {
    j = json{{"completeness", v.completeness},
             {"clarity", v.clarity},
             {"completeness_rationale", v.completeness_rationale},
             {"clarity_rationale", v.clarity_rationale}};
}

void from_json(const json& j, QualityScores& v) {
    require_object(j, "quality");
    v.completeness = req<int>(j, "completeness");
    v.clarity = req<int>(j, "clarity");
    if (v.completeness < 1 || v.completeness > 5 || v.clarity < 1 || v.clarity > 5) {
        throw std::invalid_argument("quality scores must be in 1..5");
    }
    v.completeness_rationale = req<std::string>(j, "completeness_rationale");
    v.clarity_rationale = req<std::string>(j, "clarity_rationale");
}

void to_json(json& j, const PartReport& v) {
    j = json{{"part", to_string(v.part)}, {"claims", v.claims}, {"fa", v.fa}, {"quality", v.quality}};
}

void from_json(const json& j, PartReport& v) {
    require_object(j, "part report");
    v.part = parse_part(req<std::string>(j, "part"));
    v.claims = req<std::vector<AtomicClaim>>(j, "claims");
    v.fa = req<FAReport>(j, "fa");
    v.quality = req<QualityScores>(j, "quality");
    if (v.claims.size() != v.fa.per_claim.size()) throw std::invalid_argument("part report: one verdict per claim");
}

void to_json(json& j, const JudgeReport& v) {
    j = json{{"patient_id", v.patient_id},
             {"complaint", v.complaint},
             {"strategy", v.strategy},
             {"model_name", v.model_name},
             {"judge_model", v.judge_model},
             {"critical", v.critical},
             {"context", v.context},
             {"overall", v.overall}};
}

void from_json(const json& j, JudgeReport& v) {
    require_object(j, "judge report");
    v.patient_id = req<std::string>(j, "patient_id");
    v.complaint = req<std::string>(j, "complaint");
    const auto strategy = parse_strategy(req<std::string>(j, "strategy"));
    if (!strategy) throw std::invalid_argument("judge report: unknown strategy");
    v.strategy = *strategy;
    v.model_name = req<std::string>(j, "model_name");
    v.judge_model = req<std::string>(j, "judge_model");
    v.critical = req<PartReport>(j, "critical");
    v.context = req<PartReport>(j, "context");
    if (v.critical.part != SummaryPart::Critical || v.context.part != SummaryPart::Context) {
        throw std::invalid_argument("judge report: parts are swapped");
    }
    v.overall = req<FAReport>(j, "overall");
}

// Prompts ---------------------------------------------------------------

std::string extraction_prompt(SummaryPart part, std::string_view segment) {
    std::string p =
        "TASK: EXTRACT_CLAIMS\n"
        "Break the summary text below into atomic claims. Each claim states exactly one fact, can be read on its "
        "own without the surrounding text, and keeps any negation, timing, dose or number from the original. Split "
        "statements joined by 'and', 'with', commas or semicolons into separate claims. Do not add facts that are "
        "not in the text.\n"
        "PART: ";
    p += to_string(part);
    p += "\nTEXT:\n";
    p += segment;
    p += "\nEND TEXT\n"
         "Reply with JSON only, in this shape: {\"claims\": [\"...\", \"...\"]}\n";
    return p;
}

std::string verification_prompt(const AtomicClaim& claim, const std::vector<Evidence>& evidence) {
    std::string p =
        "TASK: VERIFY_CLAIM\n"
        "Decide whether the claim is backed by the numbered chart evidence. Use exactly one label:\n"
        "SUPPORTED - the evidence states the same fact, and its timing, negation and any numbers agree with the "
        "claim.\n"
        "CONTRADICTED - the evidence states something that cannot be true at the same time as the claim.\n"
        "NOT_FOUND - the evidence neither backs nor conflicts with the claim.\n"
        "CLAIM: ";
    p += collapse_whitespace(claim.text);
    p += '\n';
    for (std::size_t i = 0; i < evidence.size(); ++i) {
        p += "EVIDENCE " + std::to_string(i + 1) + " (" + evidence[i].chunk_id + "):\n";
        p += evidence[i].snippet;
        p += '\n';
    }
    p += "END EVIDENCE\n"
         "Reply with JSON only, in this shape: {\"verdict\": \"SUPPORTED\" | \"CONTRADICTED\" | \"NOT_FOUND\", "
         "\"evidence_indices\": [numbers of the evidence items used], \"rationale\": \"one short sentence\"}. "
         "SUPPORTED and CONTRADICTED must cite at least one evidence number.\n";
    return p;
}

std::string quality_prompt(SummaryPart part, std::string_view text, const std::vector<ChartChunk>& source) {
    std::string p =
        "TASK: RATE_QUALITY\n"
        "Rate the summary part below against the chart sources on two 1-5 integer scales.\n"
        "completeness: 5 when every fact a clinician needs from the sources is present, 1 when most are missing.\n"
        "clarity: 5 when it is short, well ordered and can be read at a glance at the bedside, 1 when it is "
        "confusing.\n"
        "PART: ";
    p += to_string(part);
    p += "\nSUMMARY:\n";
    p += text;
    p += "\nEND SUMMARY\n";
    for (std::size_t i = 0; i < source.size(); ++i) {
        p += "SOURCE " + std::to_string(i + 1) + " (" + source[i].chunk_id + "):\n";
        p += trim(source[i].text);
        p += '\n';
    }
    p += "END SOURCE\n"
         "Reply with JSON only, in this shape: {\"completeness\": 1-5, \"clarity\": 1-5, "
         "\"completeness_rationale\": \"...\", \"clarity_rationale\": \"...\"}\n";
    return p;
}

// Judge -----------------------------------------------------------------

Judge::Judge(std::shared_ptr<TextGenerator> model, std::shared_ptr<EmbeddingClient> embedder, JudgeConfig cfg)
    : model_(std::move(model)), embedder_(std::move(embedder)), cfg_(cfg) {
    if (!model_ || !embedder_) throw std::invalid_argument("judge needs a model and an embedder");
    if (cfg_.k == 0) throw std::invalid_argument("judge k must be >= 1");
    if (cfg_.concurrency == 0) cfg_.concurrency = 1;
    validate_weights(cfg_.weights);
}

std::string Judge::ask(const std::string& prompt) {
    try {
        return model_->generate(prompt).text;
    } catch (const GenerationError& e) {
        throw JudgeError(JudgeError::Kind::JudgeUnavailable, std::string("judge model: ") + e.what());
    }
}

namespace {

// Judges often wrap JSON in a code fence; accept that, nothing looser.
json parse_reply(std::string_view text) {
    auto t = trim(text);
    if (t.substr(0, 3) == "```") {
        const auto nl = t.find('\n');
        const auto close = t.rfind("```");
        if (nl != std::string_view::npos && close != std::string_view::npos && close > nl) {
            t = trim(t.substr(nl + 1, close - nl - 1));
        }
    }
    return json::parse(t, nullptr, false);
}

std::string check_keys(const json& j, std::initializer_list<const char*> keys) {
    if (!j.is_object()) return "reply is not a JSON object";
    for (const char* k : keys)
        if (!j.contains(k)) return std::string("missing key '") + k + "'";
    for (const auto& [k, _] : j.items()) {
        if (std::none_of(keys.begin(), keys.end(), [&](const char* want) { return k == want; })) {
            return "unexpected key '" + k + "'";
        }
    }
    return {};
}

}  // namespace

json Judge::ask_json(const std::string& prompt, const std::function<std::string(const json&)>& check) {
    std::string raw = ask(prompt);
    for (int attempt = 0;; ++attempt) {
        const json j = parse_reply(raw);
        const std::string problem = j.is_discarded() ? std::string("reply is not valid JSON") : check(j);
        if (problem.empty()) return j;
        if (attempt == 1) throw JudgeError(JudgeError::Kind::SchemaViolation, "judge reply out of schema: " + problem);
        raw = ask(prompt + "\nYOUR PREVIOUS RESPONSE:\n" + raw + "\nPROBLEM: " + problem +
                  "\nReply again with only the JSON object in the requested shape.\n");
    }
}

std::vector<AtomicClaim> Judge::extract_claims(const SummaryBundle& bundle) {
    if (bundle.critical_bullets.size() != 3 ||
        std::any_of(bundle.critical_bullets.begin(), bundle.critical_bullets.end(),
                    [](const std::string& b) { return trim(b).empty(); })) {
        throw JudgeError(JudgeError::Kind::Precondition, "summary must have three non-empty critical bullets");
    }
    if (trim(bundle.context_paragraph).empty()) {
        throw JudgeError(JudgeError::Kind::Precondition, "summary has an empty context paragraph");
    }

    const auto check = [](const json& j) -> std::string {
        if (auto p = check_keys(j, {"claims"}); !p.empty()) return p;
        if (!j["claims"].is_array()) return "'claims' must be an array";
        for (const auto& c : j["claims"])
            if (!c.is_string() || trim(c.get<std::string>()).empty()) return "claims must be non-empty strings";
        return {};
    };

    struct Segment {
        SummaryPart part;
        std::uint64_t begin;
        std::string text;
    };
    std::vector<Segment> segments;
    std::uint64_t offset = 0;
    for (const auto& b : bundle.critical_bullets) {
        segments.push_back({SummaryPart::Critical, offset, b});
        offset += b.size() + 1;
    }
    segments.push_back({SummaryPart::Context, 0, bundle.context_paragraph});

    std::vector<AtomicClaim> out;
    std::size_t n_crit = 0, n_ctx = 0;
    for (const auto& seg : segments) {
        const auto reply = ask_json(extraction_prompt(seg.part, seg.text), check);
        for (const auto& c : reply["claims"]) {
            AtomicClaim claim;
            claim.part = seg.part;
            claim.text = std::string(trim(c.get<std::string>()));
            claim.claim_id = seg.part == SummaryPart::Critical ? "crit-" + std::to_string(++n_crit)
                                                               : "ctx-" + std::to_string(++n_ctx);
            const auto at = seg.text.find(claim.text);
            if (at != std::string::npos) {
                claim.span = ByteSpan{seg.begin + at, seg.begin + at + claim.text.size()};
            } else {
                claim.span = ByteSpan{seg.begin, seg.begin + seg.text.size()};
            }
            out.push_back(std::move(claim));
        }
    }
    return out;
}

std::vector<Evidence> Judge::retrieve_evidence(const AtomicClaim& claim, const PatientIndex& source) const {
    if (source.size() == 0) return {};
    EmbeddingVector q;
    try {
        q = embed_text(claim.text, *embedder_);
    } catch (const EmbedError& e) {
        throw JudgeError(JudgeError::Kind::JudgeUnavailable, std::string("cannot embed claim: ") + e.what());
    }
    std::vector<Evidence> out;
    for (const auto& hit : source.search(q, cfg_.k).hits) {
        out.push_back(Evidence{hit.chunk.chunk_id,
                               collapse_whitespace(utf8_prefix(trim(hit.chunk.text), cfg_.snippet_bytes))});
    }
    return out;
}

ClaimVerdict Judge::verify_claim(const AtomicClaim& claim, const std::vector<Evidence>& evidence) {
    ClaimVerdict v;
    v.claim_id = claim.claim_id;
    if (evidence.empty()) {
        v.verdict = Verdict::NotFound;
        v.rationale = "no evidence retrieved";
        return v;
    }
    const std::size_t n = evidence.size();
    const auto check = [n](const json& j) -> std::string {
        if (auto p = check_keys(j, {"verdict", "evidence_indices", "rationale"}); !p.empty()) return p;
        if (!j["verdict"].is_string() || !parse_verdict(j["verdict"].get<std::string>())) {
            return "'verdict' must be SUPPORTED, CONTRADICTED or NOT_FOUND";
        }
        if (!j["rationale"].is_string()) return "'rationale' must be a string";
        if (!j["evidence_indices"].is_array()) return "'evidence_indices' must be an array";
        for (const auto& i : j["evidence_indices"]) {
            if (!i.is_number_integer() || i.get<std::int64_t>() < 1 || i.get<std::int64_t>() > static_cast<std::int64_t>(n)) {
                return "evidence index out of range 1.." + std::to_string(n);
            }
        }
        if (*parse_verdict(j["verdict"].get<std::string>()) != Verdict::NotFound && j["evidence_indices"].empty()) {
            return "SUPPORTED and CONTRADICTED must cite evidence";
        }
        return {};
    };
    const auto reply = ask_json(verification_prompt(claim, evidence), check);
    v.verdict = *parse_verdict(reply["verdict"].get<std::string>());
    v.rationale = reply["rationale"].get<std::string>();
    if (v.verdict != Verdict::NotFound) {
        std::set<std::int64_t> seen;
        for (const auto& i : reply["evidence_indices"]) {
            const auto idx = i.get<std::int64_t>();
            if (seen.insert(idx).second) v.evidence.push_back(evidence[static_cast<std::size_t>(idx - 1)]);
        }
    }
    return v;
}

QualityScores Judge::judge_quality(const SummaryBundle& bundle, SummaryPart part, const std::vector<ChartChunk>& source) {
    const auto check = [](const json& j) -> std::string {
        if (auto p = check_keys(j, {"completeness", "clarity", "completeness_rationale", "clarity_rationale"}); !p.empty()) {
            return p;
        }
        for (const char* k : {"completeness", "clarity"}) {
            if (!j[k].is_number_integer() || j[k].get<int>() < 1 || j[k].get<int>() > 5) {
                return std::string("'") + k + "' must be an integer in 1..5";
            }
        }
        if (!j["completeness_rationale"].is_string() || !j["clarity_rationale"].is_string()) {
            return "rationales must be strings";
        }
        return {};
    };
    const auto reply = ask_json(quality_prompt(part, part_text(bundle, part), source), check);
    return QualityScores{reply["completeness"].get<int>(), reply["clarity"].get<int>(),
                         reply["completeness_rationale"].get<std::string>(), reply["clarity_rationale"].get<std::string>()};
}

JudgeReport Judge::evaluate(const SummaryBundle& bundle, const ChiefComplaint& complaint, const PatientIndex& source) {
    JudgeReport report;
    report.patient_id = complaint.patient_id;
    report.complaint = complaint.complaint;
    report.strategy = bundle.strategy;
    report.model_name = bundle.model_name;
    report.judge_model = model_->model_name();

    const auto claims = extract_claims(bundle);
    if (claims.empty()) throw JudgeError(JudgeError::Kind::ZeroClaims, "summary yielded zero atomic claims");

    // Verdicts land in claim order whatever order the workers finish in.
    std::vector<ClaimVerdict> verdicts(claims.size());
    std::vector<std::exception_ptr> errors(claims.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i; (i = next++) < claims.size();) {
            try {
                verdicts[i] = verify_claim(claims[i], retrieve_evidence(claims[i], source));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::min(cfg_.concurrency, claims.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<ChartChunk> context;
    try {
        for (auto& hit : source.search(embed_text(complaint.complaint, *embedder_), complaint.requested_k).hits) {
            context.push_back(std::move(hit.chunk));
        }
    } catch (const EmbedError& e) {
        throw JudgeError(JudgeError::Kind::JudgeUnavailable, std::string("cannot embed complaint: ") + e.what());
    }

    for (auto* part : {&report.critical, &report.context}) {
        part->part = part == &report.critical ? SummaryPart::Critical : SummaryPart::Context;
        std::vector<ClaimVerdict> vs;
        for (std::size_t i = 0; i < claims.size(); ++i) {
            if (claims[i].part != part->part) continue;
            part->claims.push_back(claims[i]);
            vs.push_back(verdicts[i]);
        }
        if (vs.empty()) {
            throw JudgeError(JudgeError::Kind::ZeroClaims,
                             std::string("the ") + std::string(to_string(part->part)) + " part yielded zero claims");
        }
        part->fa = compute_fa(vs, cfg_.weights);
        part->quality = judge_quality(bundle, part->part, context);
    }
    report.overall = compute_fa(verdicts, cfg_.weights);
    return report;
}

// Aggregation -----------------------------------------------------------

std::vector<RunResult> run_results(const JudgeReport& report) {
    return {RunResult{report.model_name, report.strategy, SummaryPart::Critical, report.critical.fa, report.critical.quality},
            RunResult{report.model_name, report.strategy, SummaryPart::Context, report.context.fa, report.context.quality}};
}

std::vector<AggregateRow> aggregate(const std::vector<RunResult>& runs) {
    if (runs.empty()) throw std::invalid_argument("aggregate needs at least one run");
    using Key = std::tuple<std::string, int, int>;
    struct Acc {
        std::size_t n = 0;
        double fa = 0, co = 0, cl = 0;
        std::uint64_t s = 0, c = 0, u = 0, total = 0;
    };
    std::map<Key, Acc> groups;
    for (const auto& r : runs) {
        auto& a = groups[Key{r.model, static_cast<int>(r.strategy), static_cast<int>(r.part)}];
        ++a.n;
        a.fa += r.fa.fa;
        a.co += r.quality.completeness;
        a.cl += r.quality.clarity;
        a.s += r.fa.S;
        a.c += r.fa.C;
        a.u += r.fa.U;
        a.total += r.fa.N;
    }
    std::vector<AggregateRow> rows;
    for (const auto& [key, a] : groups) {
        AggregateRow row;
        row.model = std::get<0>(key);
        row.strategy = static_cast<PromptStrategy>(std::get<1>(key));
        row.part = static_cast<SummaryPart>(std::get<2>(key));
        row.summaries = a.n;
        const auto n = static_cast<double>(a.n);
        row.fa = a.fa / n;
        row.co = a.co / n;
        row.cl = a.cl / n;
        if (a.total == 0) throw std::invalid_argument("aggregate: group with zero claims");
        const auto t = static_cast<double>(a.total);
        row.csr = static_cast<double>(a.s) / t;
        row.cr = static_cast<double>(a.c) / t;
        row.ur = static_cast<double>(a.u) / t;
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

struct TableLine {
    std::string model;
    PromptStrategy strategy;
    const AggregateRow* crit = nullptr;
    const AggregateRow* ctx = nullptr;
};

std::vector<TableLine> pair_parts(const std::vector<AggregateRow>& rows) {
    std::vector<TableLine> lines;
    for (const auto& r : rows) {
        auto it = std::find_if(lines.begin(), lines.end(),
                               [&](const TableLine& l) { return l.model == r.model && l.strategy == r.strategy; });
        if (it == lines.end()) {
            lines.push_back(TableLine{r.model, r.strategy});
            it = std::prev(lines.end());
        }
        (r.part == SummaryPart::Critical ? it->crit : it->ctx) = &r;
    }
    return lines;
}

}  // namespace

std::string format_fa_cell(double fa, double csr, double cr, double ur) {
    return fixed2(fa) + " (" + fixed2(csr) + "|" + fixed2(cr) + "|" + fixed2(ur) + ")";
}

std::string emit_judge_table(const std::vector<AggregateRow>& rows) {
    std::vector<std::vector<std::string>> cells{{"Model", "Strategy", "Crit FA (CSR|CR|UR)", "Crit CO", "Crit CL",
                                                 "Ctx FA (CSR|CR|UR)", "Ctx CO", "Ctx CL", "Crit", "Ctx"}};
    for (const auto& l : pair_parts(rows)) {
        std::vector<std::string> line{l.model, std::string(to_string(l.strategy))};
        for (const auto* r : {l.crit, l.ctx}) {
            if (r) {
                line.push_back(format_fa_cell(r->fa, r->csr, r->cr, r->ur));
                line.push_back(fixed2(r->co));
                line.push_back(fixed2(r->cl));
            } else {
                line.insert(line.end(), {"-", "-", "-"});
            }
        }
        line.push_back(l.crit ? fixed2(l.crit->average()) : "-");
        line.push_back(l.ctx ? fixed2(l.ctx->average()) : "-");
        cells.push_back(std::move(line));
    }
    std::vector<std::size_t> width(cells.front().size(), 0);
    for (const auto& line : cells)
        for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
    std::string out;
    for (std::size_t r = 0; r < cells.size(); ++r) {
        for (std::size_t i = 0; i < cells[r].size(); ++i) {
            if (i) out += "  ";
            out += cells[r][i];
            if (i + 1 < cells[r].size()) out.append(width[i] - cells[r][i].size(), ' ');
        }
        out += '\n';
        if (r == 0) {
            std::size_t total = 0;
            for (auto w : width) total += w;
            out += std::string(total + 2 * (width.size() - 1), '-') + '\n';
        }
    }
    return out;
}

std::string emit_judge_csv(const std::vector<AggregateRow>& rows) {
    std::string out = "model,strategy,part,summaries,fa,csr,cr,ur,co,cl,average\r\n";
    for (const auto& r : rows) {
        out += csv_field(r.model) + "," + std::string(to_string(r.strategy)) + "," + std::string(to_string(r.part)) + "," +
               std::to_string(r.summaries) + "," + fixed2(r.fa) + "," + fixed2(r.csr) + "," + fixed2(r.cr) + "," +
               fixed2(r.ur) + "," + fixed2(r.co) + "," + fixed2(r.cl) + "," + fixed2(r.average()) + "\r\n";
    }
    return out;
}

}  // namespace chartsum
