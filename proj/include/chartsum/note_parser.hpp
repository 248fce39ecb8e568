#pragma once

// Splits clinical notes into retrieval chunks.
//
// Boundaries are placed in priority order:
//   1. starts of lines that begin with a known section header,
//   2. blank-line paragraph breaks inside each section,
//   3. hard breaks for paragraphs over the token cap, at the last whitespace
//      before the cap, or exactly at the cap (rounded down to a UTF-8 code
//      point boundary) when the span has no whitespace.
//
// Chunk spans tile the note: chunk i ends where chunk i+1 begins, and the
// first/last chunks touch the note's ends. Separators stay attached to the
// end of the preceding chunk, so chunk.text is always the exact span slice.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "chartsum/core.hpp"

namespace chartsum {

struct ParserConfig {
    std::vector<std::string> known_headers;  // case-insensitive, line-anchored literals
    std::uint64_t max_chunk_tokens = 256;

    // Built-in clinical section lexicon with the default cap.
    static ParserConfig defaults();

    // Throws std::invalid_argument unless max_chunk_tokens >= 16 and the
    // header list is non-empty.
    void validate() const;
};

const std::vector<std::string>& default_header_lexicon();

// One header literal per line; '#' starts a comment line; blank lines skipped.
std::vector<std::string> load_header_lexicon(const std::filesystem::path& path);

struct HeaderMatch {
    std::uint64_t offset = 0;
    std::string header;  // note bytes that matched

    bool operator==(const HeaderMatch&) const = default;
};

// Offsets are strictly increasing and each is a line start. When several
// lexicon entries match the same line the longest one wins.
std::vector<HeaderMatch> detect_headers(std::string_view text, const ParserConfig& cfg);

// Requires non-empty note text; throws std::invalid_argument otherwise.
std::vector<ChartChunk> split_note(const ClinicalNote& note, const ParserConfig& cfg);

std::vector<ChartChunk> split_record(const PatientRecord& record, const ParserConfig& cfg);

}  // namespace chartsum
