#include <doctest.h>

#include <random>

#include "../support/oracles.hpp"
#include "chartsum/note_parser.hpp"

using namespace chartsum;

namespace {

ClinicalNote note(std::string text) { return {"n1", "P1", "progress", {0}, std::move(text)}; }

std::vector<std::pair<std::uint64_t, std::uint64_t>> spans(const std::vector<ChartChunk>& cs) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
    for (const auto& c : cs) out.emplace_back(c.span.begin, c.span.end);
    return out;
}

}  // namespace

TEST_CASE("headers split sections and stay with their body") {
    const std::string text =
        "Admitted overnight.\nMEDICATIONS: warfarin 5 mg\nmetoprolol\nALLERGIES: penicillin\n";
    const auto chunks = split_note(note(text), ParserConfig::defaults());
    REQUIRE(chunks.size() == 3);
    CHECK_FALSE(chunks[0].header.has_value());
    CHECK(chunks[1].header == "MEDICATIONS:");
    CHECK(chunks[1].text == "MEDICATIONS: warfarin 5 mg\nmetoprolol\n");
    CHECK(chunks[2].header == "ALLERGIES:");
    CHECK(oracle::tiles(spans(chunks), text.size()));
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        CHECK(chunks[i].ordinal == i);
        CHECK(chunks[i].chunk_id == make_chunk_id("n1", static_cast<std::uint32_t>(i)));
        CHECK(chunks[i].text == text.substr(chunks[i].span.begin, chunks[i].span.size()));
    }
}

TEST_CASE("header match is case-insensitive, line-anchored and longest-wins") {
    ParserConfig cfg;
    cfg.known_headers = {"HISTORY:", "PAST MEDICAL HISTORY:"};
    const std::string text = "past medical history: HTN\nSee HISTORY: inline\nHISTORY: none\n";
    const auto hs = detect_headers(text, cfg);
    REQUIRE(hs.size() == 2);
    CHECK(hs[0].offset == 0);
    CHECK(hs[0].header == "past medical history:");
    CHECK(hs[1].header == "HISTORY:");
}

TEST_CASE("blank lines split paragraphs inside a section") {
    const std::string text = "HOSPITAL COURSE: day one\n\nday two\n";
    const auto chunks = split_note(note(text), ParserConfig::defaults());
    REQUIRE(chunks.size() == 2);
    CHECK(chunks[0].text == "HOSPITAL COURSE: day one\n\n");
    CHECK(chunks[1].text == "day two\n");
}

TEST_CASE("oversized unbroken runs are cut at the cap on a code point boundary") {
    ParserConfig cfg = ParserConfig::defaults();
    cfg.max_chunk_tokens = 16;  // 64 bytes
    std::string text;
    for (int i = 0; i < 100; ++i) text += "\xe2\x82\xac";  // 3-byte euro signs, 300 bytes
    const auto chunks = split_note(note(text), cfg);
    CHECK(chunks.size() >= 5);
    CHECK(oracle::tiles(spans(chunks), text.size()));
    for (const auto& c : chunks) {
        CHECK(oracle::tokens(c.text) <= 16);
        CHECK(c.span.begin % 3 == 0);
    }
}

TEST_CASE("long paragraphs break at whitespace before the cap") {
    ParserConfig cfg = ParserConfig::defaults();
    cfg.max_chunk_tokens = 16;
    std::string text;
    for (int i = 0; i < 40; ++i) text += "word" + std::to_string(i) + " ";
    const auto chunks = split_note(note(text), cfg);
    for (std::size_t i = 0; i + 1 < chunks.size(); ++i) CHECK(chunks[i].text.back() == ' ');
    CHECK(oracle::tiles(spans(chunks), text.size()));
}

TEST_CASE("config validation and empty notes") {
    ParserConfig cfg = ParserConfig::defaults();
    cfg.max_chunk_tokens = 8;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    ParserConfig none;
    none.known_headers.clear();
    CHECK_THROWS_AS(none.validate(), std::invalid_argument);
    CHECK_THROWS_AS(split_note(note(""), ParserConfig::defaults()), std::invalid_argument);
}

TEST_CASE("random notes always tile and respect the cap") {
    std::mt19937_64 rng(1234);
    const auto& headers = default_header_lexicon();
    for (int i = 0; i < 300; ++i) {
        ParserConfig cfg = ParserConfig::defaults();
        cfg.max_chunk_tokens = 16 + rng() % 200;
        const std::string text = oracle::synthetic_note(rng, headers);
        const auto chunks = split_note(note(text), cfg);
        REQUIRE(oracle::tiles(spans(chunks), text.size()));
        for (const auto& c : chunks) {
            CHECK(oracle::tokens(c.text) <= cfg.max_chunk_tokens);
            CHECK(c.token_estimate == oracle::tokens(c.text));
        }
    }
}

TEST_CASE("split_record numbers chunks per note") {
    PatientRecord r{"P1", {note("A\n\nB\n"), {"n2", "P1", "x", {5}, "C"}}, {}};
    const auto chunks = split_record(r, ParserConfig::defaults());
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[2].note_id == "n2");
    CHECK(chunks[2].ordinal == 0);
}
