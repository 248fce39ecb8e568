#pragma once

// Shared domain types for the chart summarization pipeline.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace chartsum {

using json = nlohmann::json;

// Milliseconds since the Unix epoch, always UTC.
struct Timestamp {
    std::int64_t epoch_ms = 0;
    auto operator<=>(const Timestamp&) const = default;
};

// Accepts RFC 3339 ("2024-03-01T08:15:00Z", fractional seconds, numeric
// offsets). A missing zone designator is read as UTC. Throws
// std::invalid_argument on malformed input.
Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts);

struct ClinicalNote {
    std::string note_id;
    std::string patient_id;
    std::string note_type;
    Timestamp charted_at;
    std::string text;

    bool operator==(const ClinicalNote&) const = default;
};

// Notes sort by (charted_at, note_id).
bool note_order(const ClinicalNote& a, const ClinicalNote& b);

struct PatientRecord {
    std::string patient_id;
    std::vector<ClinicalNote> notes;
    std::map<std::string, std::string> demographics;

    bool operator==(const PatientRecord&) const = default;
};

// Half-open byte range into the parent note text.
struct ByteSpan {
    std::uint64_t begin = 0;
    std::uint64_t end = 0;

    std::uint64_t size() const { return end - begin; }
    bool operator==(const ByteSpan&) const = default;
};

struct ChartChunk {
    std::string chunk_id;
    std::string note_id;
    std::uint32_t ordinal = 0;
    std::optional<std::string> header;
    std::string text;
    std::uint64_t token_estimate = 0;
    ByteSpan span;

    bool operator==(const ChartChunk&) const = default;
};

std::string make_chunk_id(std::string_view note_id, std::uint32_t ordinal);

inline constexpr std::uint32_t kDefaultTopK = 5;

struct ChiefComplaint {
    std::string patient_id;
    std::string complaint;
    std::uint32_t requested_k = kDefaultTopK;

    // Validating constructor: complaint must be non-empty after trimming and
    // requested_k >= 1.
    static ChiefComplaint make(std::string patient_id, std::string complaint,
                               std::uint32_t requested_k = kDefaultTopK);

    bool operator==(const ChiefComplaint&) const = default;
};

struct ScoredChunk {
    ChartChunk chunk;
    double score = 0.0;

    bool operator==(const ScoredChunk&) const = default;
};

struct RetrievedContext {
    ChiefComplaint complaint;
    std::vector<ScoredChunk> hits;  // score descending, chunk_id ascending on ties
    double retrieval_wall_ms = 0.0;

    bool operator==(const RetrievedContext&) const = default;
};

enum class PromptStrategy { ZeroShot, FewShot, ChainOfThought, SelfAsk, PlanAndSolve };

std::span<const PromptStrategy> all_strategies();
std::string_view to_string(PromptStrategy s);
// Accepts canonical names plus common aliases ("cot", "few-shot", ...).
std::optional<PromptStrategy> parse_strategy(std::string_view name);
// "zero_shot, few_shot, chain_of_thought, self_ask, plan_and_solve"
std::string legal_strategy_names();

struct SummaryBundle {
    std::vector<std::string> critical_bullets;
    std::string context_paragraph;
    PromptStrategy strategy = PromptStrategy::ZeroShot;
    std::string model_name;
    std::string raw_llm_text;
    double generation_wall_ms = 0.0;
    std::vector<std::string> lint;

    bool operator==(const SummaryBundle&) const = default;
};

struct JudgeWeights {
    double w_s = 5.0;
    double w_c = -3.75;
    double w_u = 1.25;
    double clip_lo = 0.0;
    double clip_hi = 5.0;

    bool operator==(const JudgeWeights&) const = default;
};

enum class TimingMode { SingleNode, DualFirstRun, DualSubsequentRun };

std::string_view to_string(TimingMode m);
std::optional<TimingMode> parse_timing_mode(std::string_view name);

struct StageTimings {
    double model_load_s = 0.0;
    double retrieval_s = 0.0;           // client-observed round trip
    double summarization_s = 0.0;
    double total_s = 0.0;
    double retrieval_critical_s = 0.0;  // share of retrieval on the critical path
    TimingMode mode = TimingMode::SingleNode;

    double stage_sum() const { return model_load_s + retrieval_s + summarization_s; }
    bool operator==(const StageTimings&) const = default;
};

// ceil(byte_len / 4).
std::uint64_t estimate_tokens(std::string_view text);

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);

// RFC 4180 field: quoted when it holds a comma, quote or line break.
std::string csv_field(std::string_view s);
// Longest prefix of at most max_bytes that ends on a UTF-8 code point boundary.
std::string_view utf8_prefix(std::string_view s, std::size_t max_bytes);

// JSON encodings. Every type round-trips: decode(encode(x)) == x.
void to_json(json& j, const Timestamp& v);
void from_json(const json& j, Timestamp& v);
void to_json(json& j, const ClinicalNote& v);
void from_json(const json& j, ClinicalNote& v);
void to_json(json& j, const PatientRecord& v);
void from_json(const json& j, PatientRecord& v);
void to_json(json& j, const ChartChunk& v);
void from_json(const json& j, ChartChunk& v);
void to_json(json& j, const ChiefComplaint& v);
void from_json(const json& j, ChiefComplaint& v);
void to_json(json& j, const ScoredChunk& v);
void from_json(const json& j, ScoredChunk& v);
void to_json(json& j, const RetrievedContext& v);
void from_json(const json& j, RetrievedContext& v);
void to_json(json& j, const PromptStrategy& v);
void from_json(const json& j, PromptStrategy& v);
void to_json(json& j, const SummaryBundle& v);
void from_json(const json& j, SummaryBundle& v);
void to_json(json& j, const JudgeWeights& v);
void from_json(const json& j, JudgeWeights& v);
void to_json(json& j, const TimingMode& v);
void from_json(const json& j, TimingMode& v);
void to_json(json& j, const StageTimings& v);
void from_json(const json& j, StageTimings& v);

}  // namespace chartsum
