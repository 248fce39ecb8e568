#include "chartsum/core.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>

namespace chartsum {

namespace {

// Howard Hinnant's days_from_civil.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y += m <= 2;
}

bool is_leap(std::int64_t y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

unsigned days_in_month(std::int64_t y, unsigned m) {
    static constexpr std::array<unsigned, 12> kDays{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return m == 2 && is_leap(y) ? 29 : kDays[m - 1];
}

class Cursor {
public:
    explicit Cursor(std::string_view s) : s_(s) {}

    int digits(std::size_t n) {
        if (pos_ + n > s_.size()) fail();
        int v = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const char c = s_[pos_ + i];
            if (c < '0' || c > '9') fail();
            v = v * 10 + (c - '0');
        }
        pos_ += n;
        return v;
    }

    void expect(char c) {
        if (pos_ >= s_.size() || s_[pos_] != c) fail();
        ++pos_;
    }

    bool accept(char c) {
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    std::optional<char> peek() const {
        return pos_ < s_.size() ? std::optional<char>(s_[pos_]) : std::nullopt;
    }

    bool done() const { return pos_ == s_.size(); }

    [[noreturn]] void fail() const {
        throw std::invalid_argument("invalid RFC 3339 timestamp: '" + std::string(s_) + "'");
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
};

}  // namespace

Timestamp parse_timestamp(std::string_view text) {
    Cursor c(trim(text));
    const int year = c.digits(4);
    c.expect('-');
    const int month = c.digits(2);
    c.expect('-');
    const int day = c.digits(2);
    if (month < 1 || month > 12 || day < 1 ||
        static_cast<unsigned>(day) > days_in_month(year, static_cast<unsigned>(month))) {
        c.fail();
    }
    int hour = 0, minute = 0, second = 0, millis = 0;
    if (!c.done()) {
        if (!c.accept('T') && !c.accept('t') && !c.accept(' ')) c.fail();
        hour = c.digits(2);
        c.expect(':');
        minute = c.digits(2);
        c.expect(':');
        second = c.digits(2);
        if (hour > 23 || minute > 59 || second > 60) c.fail();
        if (c.accept('.')) {
            int scale = 100;
            bool any = false;
            while (auto ch = c.peek()) {
                if (*ch < '0' || *ch > '9') break;
                millis += (c.digits(1)) * scale;
                scale /= 10;
                any = true;
            }
            if (!any) c.fail();
        }
    }
    std::int64_t offset_min = 0;
    if (!c.done()) {
        if (c.accept('Z') || c.accept('z')) {
        } else {
            const bool neg = c.accept('-');
            if (!neg) c.expect('+');
            const int oh = c.digits(2);
            c.expect(':');
            const int om = c.digits(2);
            if (oh > 23 || om > 59) c.fail();
            offset_min = (neg ? -1 : 1) * (oh * 60 + om);
        }
    }
    if (!c.done()) c.fail();

    const std::int64_t days =
        days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
    const std::int64_t secs = days * 86400 + hour * 3600 + minute * 60 + second - offset_min * 60;
    return Timestamp{secs * 1000 + millis};
}

std::string format_timestamp(Timestamp ts) {
    std::int64_t ms = ts.epoch_ms;
    std::int64_t days = ms >= 0 ? ms / 86'400'000 : -((-ms + 86'399'999) / 86'400'000);
    std::int64_t rem = ms - days * 86'400'000;
    std::int64_t y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    const auto h = static_cast<int>(rem / 3'600'000);
    rem %= 3'600'000;
    const auto mi = static_cast<int>(rem / 60'000);
    rem %= 60'000;
    const auto s = static_cast<int>(rem / 1000);
    const auto frac = static_cast<int>(rem % 1000);
    char buf[40];
    if (frac == 0) {
        std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02d:%02d:%02dZ",
                      static_cast<long long>(y), m, d, h, mi, s);
    } else {
        std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02d:%02d:%02d.%03dZ",
                      static_cast<long long>(y), m, d, h, mi, s, frac);
    }
    return buf;
}

bool note_order(const ClinicalNote& a, const ClinicalNote& b) {
    if (a.charted_at != b.charted_at) return a.charted_at < b.charted_at;
    return a.note_id < b.note_id;
}

std::string make_chunk_id(std::string_view note_id, std::uint32_t ordinal) {
    std::string id(note_id);
    id += '#';
    id += std::to_string(ordinal);
    return id;
}

ChiefComplaint ChiefComplaint::make(std::string patient_id, std::string complaint,
                                    std::uint32_t requested_k) {
    if (trim(complaint).empty()) throw std::invalid_argument("complaint is empty");
    if (requested_k < 1) throw std::invalid_argument("requested_k must be >= 1");
    return ChiefComplaint{std::move(patient_id), std::string(trim(complaint)), requested_k};
}

namespace {

constexpr std::array kStrategies{PromptStrategy::ZeroShot, PromptStrategy::FewShot,
                                 PromptStrategy::ChainOfThought, PromptStrategy::SelfAsk,
                                 PromptStrategy::PlanAndSolve};

std::string normalize_name(std::string_view name) {
    std::string out;
    for (char c : trim(name)) {
        if (c == '-' || c == ' ') c = '_';
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

}  // namespace

std::span<const PromptStrategy> all_strategies() { return kStrategies; }

std::string_view to_string(PromptStrategy s) {
    switch (s) {
        case PromptStrategy::ZeroShot: return "zero_shot";
        case PromptStrategy::FewShot: return "few_shot";
        case PromptStrategy::ChainOfThought: return "chain_of_thought";
        case PromptStrategy::SelfAsk: return "self_ask";
        case PromptStrategy::PlanAndSolve: return "plan_and_solve";
    }
    return "unknown";
}

std::optional<PromptStrategy> parse_strategy(std::string_view name) {
    static const std::map<std::string, PromptStrategy, std::less<>> kAliases{
        {"zero_shot", PromptStrategy::ZeroShot},
        {"zeroshot", PromptStrategy::ZeroShot},
        {"few_shot", PromptStrategy::FewShot},
        {"fewshot", PromptStrategy::FewShot},
        {"chain_of_thought", PromptStrategy::ChainOfThought},
        {"chainofthought", PromptStrategy::ChainOfThought},
        {"cot", PromptStrategy::ChainOfThought},
        {"self_ask", PromptStrategy::SelfAsk},
        {"selfask", PromptStrategy::SelfAsk},
        {"plan_and_solve", PromptStrategy::PlanAndSolve},
        {"planandsolve", PromptStrategy::PlanAndSolve},
        {"ps", PromptStrategy::PlanAndSolve},
    };
    const auto it = kAliases.find(normalize_name(name));
    if (it == kAliases.end()) return std::nullopt;
    return it->second;
}

std::string legal_strategy_names() {
    std::string out;
    for (auto s : kStrategies) {
        if (!out.empty()) out += ", ";
        out += to_string(s);
    }
    return out;
}

std::string_view to_string(TimingMode m) {
    switch (m) {
        case TimingMode::SingleNode: return "single";
        case TimingMode::DualFirstRun: return "dual_first";
        case TimingMode::DualSubsequentRun: return "dual_subsequent";
    }
    return "unknown";
}

std::optional<TimingMode> parse_timing_mode(std::string_view name) {
    const auto n = normalize_name(name);
    if (n == "single") return TimingMode::SingleNode;
    if (n == "dual_first") return TimingMode::DualFirstRun;
    if (n == "dual_subsequent") return TimingMode::DualSubsequentRun;
    return std::nullopt;
}

std::uint64_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

std::string_view trim(std::string_view s) {
    constexpr std::string_view kWs = " \t\r\n\f\v";
    const auto b = s.find_first_not_of(kWs);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(kWs);
    return s.substr(b, e - b + 1);
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string_view utf8_prefix(std::string_view s, std::size_t max_bytes) {
    if (s.size() <= max_bytes) return s;
    std::size_t n = max_bytes;
    while (n > 0 && (static_cast<unsigned char>(s[n]) & 0xC0) == 0x80) --n;
    return s.substr(0, n);
}

// ---- JSON -----------------------------------------------------------------

void to_json(json& j, const Timestamp& v) { j = format_timestamp(v); }
void from_json(const json& j, Timestamp& v) { v = parse_timestamp(j.get<std::string>()); }

void to_json(json& j, const ClinicalNote& v) {
    j = json{{"note_id", v.note_id},       {"patient_id", v.patient_id},
             {"note_type", v.note_type},   {"charted_at", v.charted_at},
             {"text", v.text}};
}

void from_json(const json& j, ClinicalNote& v) {
    j.at("note_id").get_to(v.note_id);
    j.at("patient_id").get_to(v.patient_id);
    v.note_type = j.value("note_type", std::string{});
    j.at("charted_at").get_to(v.charted_at);
    j.at("text").get_to(v.text);
}

void to_json(json& j, const PatientRecord& v) {
    j = json{{"patient_id", v.patient_id}, {"notes", v.notes}, {"demographics", v.demographics}};
}

void from_json(const json& j, PatientRecord& v) {
    j.at("patient_id").get_to(v.patient_id);
    j.at("notes").get_to(v.notes);
    v.demographics = j.value("demographics", std::map<std::string, std::string>{});
}

void to_json(json& j, const ChartChunk& v) {
    j = json{{"chunk_id", v.chunk_id},
             {"note_id", v.note_id},
             {"ordinal", v.ordinal},
             {"header", v.header ? json(*v.header) : json(nullptr)},
             {"text", v.text},
             {"token_estimate", v.token_estimate},
             {"char_span", json::array({v.span.begin, v.span.end})}};
}

void from_json(const json& j, ChartChunk& v) {
    j.at("chunk_id").get_to(v.chunk_id);
    j.at("note_id").get_to(v.note_id);
    j.at("ordinal").get_to(v.ordinal);
    const auto& h = j.at("header");
    v.header = h.is_null() ? std::nullopt : std::optional<std::string>(h.get<std::string>());
    j.at("text").get_to(v.text);
    j.at("token_estimate").get_to(v.token_estimate);
    const auto& span = j.at("char_span");
    if (!span.is_array() || span.size() != 2) throw std::invalid_argument("char_span must be [begin, end]");
    v.span = ByteSpan{span[0].get<std::uint64_t>(), span[1].get<std::uint64_t>()};
}

void to_json(json& j, const ChiefComplaint& v) {
    j = json{{"patient_id", v.patient_id}, {"complaint", v.complaint}, {"k", v.requested_k}};
}

void from_json(const json& j, ChiefComplaint& v) {
    v = ChiefComplaint::make(j.at("patient_id").get<std::string>(),
                             j.at("complaint").get<std::string>(),
                             j.value("k", kDefaultTopK));
}

void to_json(json& j, const ScoredChunk& v) {
    to_json(j, v.chunk);
    j["score"] = v.score;
}

void from_json(const json& j, ScoredChunk& v) {
    from_json(j, v.chunk);
    j.at("score").get_to(v.score);
}

void to_json(json& j, const RetrievedContext& v) {
    j = json{{"complaint", v.complaint}, {"hits", v.hits}, {"retrieval_wall_ms", v.retrieval_wall_ms}};
}

void from_json(const json& j, RetrievedContext& v) {
    j.at("complaint").get_to(v.complaint);
    j.at("hits").get_to(v.hits);
    j.at("retrieval_wall_ms").get_to(v.retrieval_wall_ms);
}

void to_json(json& j, const PromptStrategy& v) { j = std::string(to_string(v)); }

void from_json(const json& j, PromptStrategy& v) {
    const auto s = parse_strategy(j.get<std::string>());
    if (!s) throw std::invalid_argument("unknown strategy; expected one of " + legal_strategy_names());
    v = *s;
}

void to_json(json& j, const SummaryBundle& v) {
    j = json{{"critical_bullets", v.critical_bullets},
             {"context_paragraph", v.context_paragraph},
             {"strategy", v.strategy},
             {"model_name", v.model_name},
             {"raw_llm_text", v.raw_llm_text},
             {"generation_wall_ms", v.generation_wall_ms},
             {"lint", v.lint}};
}

void from_json(const json& j, SummaryBundle& v) {
    j.at("critical_bullets").get_to(v.critical_bullets);
    j.at("context_paragraph").get_to(v.context_paragraph);
    j.at("strategy").get_to(v.strategy);
    v.model_name = j.value("model_name", std::string{});
    v.raw_llm_text = j.value("raw_llm_text", std::string{});
    v.generation_wall_ms = j.value("generation_wall_ms", 0.0);
    v.lint = j.value("lint", std::vector<std::string>{});
}

void to_json(json& j, const JudgeWeights& v) {
    j = json{{"w_s", v.w_s}, {"w_c", v.w_c}, {"w_u", v.w_u}, {"clip_lo", v.clip_lo}, {"clip_hi", v.clip_hi}};
}

void from_json(const json& j, JudgeWeights& v) {
    const JudgeWeights d;
    v.w_s = j.value("w_s", d.w_s);
    v.w_c = j.value("w_c", d.w_c);
    v.w_u = j.value("w_u", d.w_u);
    v.clip_lo = j.value("clip_lo", d.clip_lo);
    v.clip_hi = j.value("clip_hi", d.clip_hi);
    if (!(v.clip_lo < v.clip_hi)) throw std::invalid_argument("clip_lo must be < clip_hi");
}

void to_json(json& j, const TimingMode& v) { j = std::string(to_string(v)); }

void from_json(const json& j, TimingMode& v) {
    const auto m = parse_timing_mode(j.get<std::string>());
    if (!m) throw std::invalid_argument("unknown timing mode");
    v = *m;
}

void to_json(json& j, const StageTimings& v) {
    j = json{{"model_load_s", v.model_load_s},
             {"retrieval_s", v.retrieval_s},
             {"summarization_s", v.summarization_s},
             {"total_s", v.total_s},
             {"retrieval_critical_s", v.retrieval_critical_s},
             {"mode", v.mode}};
}

void from_json(const json& j, StageTimings& v) {
    j.at("model_load_s").get_to(v.model_load_s);
    j.at("retrieval_s").get_to(v.retrieval_s);
    j.at("summarization_s").get_to(v.summarization_s);
    j.at("total_s").get_to(v.total_s);
    v.retrieval_critical_s = j.value("retrieval_critical_s", 0.0);
    j.at("mode").get_to(v.mode);
}

}  // namespace chartsum
