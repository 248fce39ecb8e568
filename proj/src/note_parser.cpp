#include "chartsum/note_parser.hpp"

#include <cctype>
#include <fstream>
#include <optional>
#include <stdexcept>

namespace chartsum {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

bool is_utf8_continuation(char c) { return (static_cast<unsigned char>(c) & 0xC0) == 0x80; }

bool iequals_prefix(std::string_view text, std::size_t pos, std::string_view lowered) {
    if (text.size() - pos < lowered.size()) return false;
    for (std::size_t i = 0; i < lowered.size(); ++i) {
        const auto c = static_cast<unsigned char>(text[pos + i]);
        if (static_cast<char>(std::tolower(c)) != lowered[i]) return false;
    }
    return true;
}

struct Piece {
    std::size_t begin;
    std::size_t end;
};

// Splits [begin, end) after each blank-line run. The run of newlines and
// whitespace-only lines stays with the preceding piece.
std::vector<Piece> paragraph_pieces(std::string_view text, std::size_t begin, std::size_t end) {
    std::vector<Piece> out;
    std::size_t start = begin;
    std::size_t i = begin;
    while (i < end) {
        if (text[i] != '\n') {
            ++i;
            continue;
        }
        // Count the newline run, skipping horizontal whitespace between them.
        std::size_t j = i + 1;
        std::size_t last_nl = i;
        int newlines = 1;
        while (j < end) {
            std::size_t k = j;
            while (k < end && (text[k] == ' ' || text[k] == '\t' || text[k] == '\r')) ++k;
            if (k < end && text[k] == '\n') {
                ++newlines;
                last_nl = k;
                j = k + 1;
            } else {
                break;
            }
        }
        if (newlines >= 2 && last_nl + 1 < end) {
            out.push_back({start, last_nl + 1});
            start = last_nl + 1;
        }
        i = last_nl + 1;
    }
    if (start < end) out.push_back({start, end});
    return out;
}

void hard_split(std::string_view text, Piece piece, std::uint64_t max_tokens,
                std::vector<Piece>& out) {
    const std::size_t max_bytes = static_cast<std::size_t>(max_tokens) * 4;
    std::size_t s = piece.begin;
    while (piece.end - s > max_bytes) {
        const std::size_t limit = s + max_bytes;
        std::size_t cut = 0;
        for (std::size_t w = limit; w > s; --w) {
            if (is_space(text[w - 1])) {
                cut = w;
                break;
            }
        }
        if (cut == 0) {
            cut = limit;
            while (cut > s && is_utf8_continuation(text[cut])) --cut;
            if (cut == s) cut = limit;
        }
        out.push_back({s, cut});
        s = cut;
    }
    if (s < piece.end) out.push_back({s, piece.end});
}

}  // namespace

const std::vector<std::string>& default_header_lexicon() {
    static const std::vector<std::string> kHeaders{
        "CHIEF COMPLAINT:",
        "HISTORY OF PRESENT ILLNESS:",
        "HPI:",
        "PAST MEDICAL HISTORY:",
        "PAST SURGICAL HISTORY:",
        "SURGICAL HISTORY:",
        "MEDICATIONS:",
        "MEDICATIONS ON ADMISSION:",
        "DISCHARGE MEDICATIONS:",
        "ALLERGIES:",
        "SOCIAL HISTORY:",
        "FAMILY HISTORY:",
        "REVIEW OF SYSTEMS:",
        "PHYSICAL EXAM:",
        "PHYSICAL EXAMINATION:",
        "PERTINENT RESULTS:",
        "LABS:",
        "IMAGING:",
        "HOSPITAL COURSE:",
        "BRIEF HOSPITAL COURSE:",
        "ASSESSMENT AND PLAN:",
        "ASSESSMENT:",
        "PLAN:",
        "DISCHARGE DIAGNOSIS:",
        "DISCHARGE INSTRUCTIONS:",
    };
    return kHeaders;
}

ParserConfig ParserConfig::defaults() {
    ParserConfig cfg;
    cfg.known_headers = default_header_lexicon();
    return cfg;
}

void ParserConfig::validate() const {
    if (max_chunk_tokens < 16) throw std::invalid_argument("max_chunk_tokens must be >= 16");
    if (known_headers.empty()) throw std::invalid_argument("header lexicon is empty");
    for (const auto& h : known_headers) {
        if (h.empty()) throw std::invalid_argument("header lexicon contains an empty entry");
    }
}

std::vector<std::string> load_header_lexicon(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open header lexicon " + path.string());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        out.emplace_back(t);
    }
    return out;
}

std::vector<HeaderMatch> detect_headers(std::string_view text, const ParserConfig& cfg) {
    std::vector<std::string> lowered;
    lowered.reserve(cfg.known_headers.size());
    for (const auto& h : cfg.known_headers) lowered.push_back(to_lower(h));

    std::vector<HeaderMatch> out;
    std::size_t line_start = 0;
    while (line_start < text.size()) {
        std::size_t best = 0;
        for (const auto& h : lowered) {
            if (!h.empty() && h.size() > best && iequals_prefix(text, line_start, h)) best = h.size();
        }
        if (best > 0) out.push_back({line_start, std::string(text.substr(line_start, best))});
        const auto nl = text.find('\n', line_start);
        if (nl == std::string_view::npos) break;
        line_start = nl + 1;
    }
    return out;
}

std::vector<ChartChunk> split_note(const ClinicalNote& note, const ParserConfig& cfg) {
    cfg.validate();
    const std::string_view text = note.text;
    if (text.empty()) throw std::invalid_argument("note " + note.note_id + " has empty text");

    const auto headers = detect_headers(text, cfg);

    struct Section {
        std::size_t begin;
        std::size_t end;
        std::optional<std::string> header;
    };
    std::vector<Section> sections;
    if (headers.empty() || headers.front().offset > 0) {
        sections.push_back({0, headers.empty() ? text.size() : headers.front().offset, std::nullopt});
    }
    for (std::size_t i = 0; i < headers.size(); ++i) {
        const std::size_t end = i + 1 < headers.size() ? headers[i + 1].offset : text.size();
        sections.push_back({headers[i].offset, end, headers[i].header});
    }

    std::vector<ChartChunk> chunks;
    for (const auto& sec : sections) {
        auto pieces = paragraph_pieces(text, sec.begin, sec.end);
        // A header standing alone on its own paragraph joins the next one.
        if (sec.header && pieces.size() >= 2) {
            const auto first = text.substr(pieces[0].begin, pieces[0].end - pieces[0].begin);
            if (trim(first).size() == trim(*sec.header).size() &&
                estimate_tokens(text.substr(pieces[0].begin, pieces[1].end - pieces[0].begin)) <=
                    cfg.max_chunk_tokens) {
                pieces[1].begin = pieces[0].begin;
                pieces.erase(pieces.begin());
            }
        }
        std::vector<Piece> bounded;
        for (const auto& p : pieces) {
            if (estimate_tokens(text.substr(p.begin, p.end - p.begin)) <= cfg.max_chunk_tokens) {
                bounded.push_back(p);
            } else {
                hard_split(text, p, cfg.max_chunk_tokens, bounded);
            }
        }
        for (const auto& p : bounded) {
            ChartChunk c;
            c.ordinal = static_cast<std::uint32_t>(chunks.size());
            c.chunk_id = make_chunk_id(note.note_id, c.ordinal);
            c.note_id = note.note_id;
            c.header = sec.header;
            c.text = std::string(text.substr(p.begin, p.end - p.begin));
            c.token_estimate = estimate_tokens(c.text);
            c.span = ByteSpan{p.begin, p.end};
            chunks.push_back(std::move(c));
        }
    }
    return chunks;
}

std::vector<ChartChunk> split_record(const PatientRecord& record, const ParserConfig& cfg) {
    std::vector<ChartChunk> out;
    for (const auto& note : record.notes) {
        auto chunks = split_note(note, cfg);
        out.insert(out.end(), std::make_move_iterator(chunks.begin()),
                   std::make_move_iterator(chunks.end()));
    }
    return out;
}

}  // namespace chartsum
