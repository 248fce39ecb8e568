#pragma once

// Reference-free factuality scoring of a SummaryBundle against the chart.
//
// A summary is broken into atomic claims, each claim is checked against the
// top-k chart chunks by a judge model that must answer in a fixed JSON
// shape, and the verdict counts feed the risk-weighted FA score:
//
//   fa_raw = w_s * S/N + w_c * C/N + w_u * U/N,   fa = clamp(fa_raw, lo, hi)

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "chartsum/core.hpp"
#include "chartsum/embed_index.hpp"
#include "chartsum/model_client.hpp"

namespace chartsum {

class JudgeError : public std::runtime_error {
public:
    enum class Kind { JudgeUnavailable, SchemaViolation, ZeroClaims, Precondition };

    JudgeError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

enum class SummaryPart { Critical, Context };
std::string_view to_string(SummaryPart p);

// The text a claim span points into: bullets joined by '\n' for Critical,
// the paragraph for Context.
std::string part_text(const SummaryBundle& bundle, SummaryPart part);

struct AtomicClaim {
    std::string claim_id;
    std::string text;
    SummaryPart part = SummaryPart::Critical;
    ByteSpan span;  // into part_text(bundle, part)

    bool operator==(const AtomicClaim&) const = default;
};

enum class Verdict { Supported, Contradicted, NotFound };
std::string_view to_string(Verdict v);
std::optional<Verdict> parse_verdict(std::string_view s);

struct Evidence {
    std::string chunk_id;
    std::string snippet;

    bool operator==(const Evidence&) const = default;
};

struct ClaimVerdict {
    std::string claim_id;
    Verdict verdict = Verdict::NotFound;
    std::vector<Evidence> evidence;  // non-empty unless NOT_FOUND
    std::string rationale;

    bool operator==(const ClaimVerdict&) const = default;
};

struct FAReport {
    std::uint64_t S = 0, C = 0, U = 0, N = 0;
    double delta_s = 0, delta_c = 0, delta_u = 0;
    double fa_raw = 0;
    double fa = 0;
    JudgeWeights weights;
    std::vector<ClaimVerdict> per_claim;

    bool operator==(const FAReport&) const = default;
};

// Throws JudgeError::ZeroClaims when S + C + U == 0.
FAReport compute_fa(std::uint64_t S, std::uint64_t C, std::uint64_t U, const JudgeWeights& w = {});
FAReport compute_fa(const std::vector<ClaimVerdict>& verdicts, const JudgeWeights& w = {});

// Highest fa_raw any verdict mix can reach.
double max_attainable_fa(const JudgeWeights& w);
// Throws std::invalid_argument when clip_lo >= clip_hi or when a perfect
// summary could not reach clip_hi.
void validate_weights(const JudgeWeights& w);

struct QualityScores {
    int completeness = 1;
    int clarity = 1;
    std::string completeness_rationale;
    std::string clarity_rationale;

    bool operator==(const QualityScores&) const = default;
};

struct PartReport {
    SummaryPart part = SummaryPart::Critical;
    std::vector<AtomicClaim> claims;
    FAReport fa;
    QualityScores quality;

    bool operator==(const PartReport&) const = default;
};

struct JudgeReport {
    std::string patient_id;
    std::string complaint;
    PromptStrategy strategy = PromptStrategy::ZeroShot;
    std::string model_name;
    std::string judge_model;
    PartReport critical;
    PartReport context;
    FAReport overall;  // all claims of both parts

    bool operator==(const JudgeReport&) const = default;
};

void to_json(json& j, const AtomicClaim& v);
void from_json(const json& j, AtomicClaim& v);
void to_json(json& j, const ClaimVerdict& v);
void from_json(const json& j, ClaimVerdict& v);
void to_json(json& j, const FAReport& v);
void from_json(const json& j, FAReport& v);
void to_json(json& j, const QualityScores& v);
void from_json(const json& j, QualityScores& v);
void to_json(json& j, const PartReport& v);
void from_json(const json& j, PartReport& v);
void to_json(json& j, const JudgeReport& v);
// Strict: missing keys, wrong types and broken invariants (N != S+C+U,
// scores out of range) throw std::invalid_argument.
void from_json(const json& j, JudgeReport& v);

struct JudgeConfig {
    std::uint32_t k = kDefaultTopK;
    std::size_t concurrency = 4;
    std::size_t snippet_bytes = 240;
    JudgeWeights weights;
};

class Judge {
public:
    Judge(std::shared_ptr<TextGenerator> model, std::shared_ptr<EmbeddingClient> embedder, JudgeConfig cfg = {});

    std::vector<AtomicClaim> extract_claims(const SummaryBundle& bundle);
    std::vector<Evidence> retrieve_evidence(const AtomicClaim& claim, const PatientIndex& source) const;
    ClaimVerdict verify_claim(const AtomicClaim& claim, const std::vector<Evidence>& evidence);
    QualityScores judge_quality(const SummaryBundle& bundle, SummaryPart part, const std::vector<ChartChunk>& source);

    // Full pipeline for one summary. Quality is judged against the chunks
    // retrieved for the complaint.
    JudgeReport evaluate(const SummaryBundle& bundle, const ChiefComplaint& complaint, const PatientIndex& source);

    const JudgeConfig& config() const { return cfg_; }

private:
    std::string ask(const std::string& prompt);
    json ask_json(const std::string& prompt, const std::function<std::string(const json&)>& check);

    std::shared_ptr<TextGenerator> model_;
    std::shared_ptr<EmbeddingClient> embedder_;
    JudgeConfig cfg_;
};

// Prompt builders; exposed so scripted mock judges can be written against
// their exact text.
std::string extraction_prompt(SummaryPart part, std::string_view segment);
std::string verification_prompt(const AtomicClaim& claim, const std::vector<Evidence>& evidence);
std::string quality_prompt(SummaryPart part, std::string_view text, const std::vector<ChartChunk>& source);

// Aggregation over many judged summaries.
struct RunResult {
    std::string model;
    PromptStrategy strategy = PromptStrategy::ZeroShot;
    SummaryPart part = SummaryPart::Critical;
    FAReport fa;
    QualityScores quality;
};

// Splits a JudgeReport into its two per-part results.
std::vector<RunResult> run_results(const JudgeReport& report);

struct AggregateRow {
    std::string model;
    PromptStrategy strategy = PromptStrategy::ZeroShot;
    SummaryPart part = SummaryPart::Critical;
    std::size_t summaries = 0;
    double fa = 0;   // macro: mean of per-summary fa
    double csr = 0;  // micro: sum S / sum N
    double cr = 0;
    double ur = 0;
    double co = 0;
    double cl = 0;

    double average() const { return (fa + co + cl) / 3.0; }
};

// Groups by model x strategy x part, ordered by model, strategy, part.
// Throws std::invalid_argument on empty input.
std::vector<AggregateRow> aggregate(const std::vector<RunResult>& runs);

// "5.00 (1.00|0.00|0.00)"
std::string format_fa_cell(double fa, double csr, double cr, double ur);

// Model | Strategy | FA (CSR|CR|UR) | CO | CL per part | Crit | Ctx
std::string emit_judge_table(const std::vector<AggregateRow>& rows);
std::string emit_judge_csv(const std::vector<AggregateRow>& rows);

}  // namespace chartsum
