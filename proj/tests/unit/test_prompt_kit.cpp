#include <doctest.h>

#include <random>

#include "chartsum/prompt_kit.hpp"

using namespace chartsum;

namespace {

RetrievedContext context(std::size_t n) {
    RetrievedContext ctx;
    ctx.complaint = ChiefComplaint::make("P1", "chest pain");
    for (std::size_t i = 0; i < n; ++i) {
        ChartChunk c;
        c.chunk_id = "n1#" + std::to_string(i);
        c.note_id = "n1";
        c.header = i % 2 ? std::optional<std::string>("MEDICATIONS:") : std::nullopt;
        c.text = "chunk body number " + std::to_string(i) + " " + std::string(100, 'x') + "\n";
        ctx.hits.push_back({c, 1.0 - 0.1 * static_cast<double>(i)});
    }
    return ctx;
}

}  // namespace

TEST_CASE("every builtin template renders with the complaint and context") {
    const auto lib = PromptLibrary::builtin();
    const auto ctx = context(3);
    for (auto s : all_strategies()) {
        const auto& tpl = lib.get(s);
        CHECK(tpl.strategy == s);
        const auto r = render(tpl, ctx, ctx.complaint);
        CHECK(r.text.find("Chief complaint: chest pain") != std::string::npos);
        CHECK(r.text.find("SECTION 2 [MEDICATIONS]:") != std::string::npos);
        CHECK(r.text.find("{{") == std::string::npos);
        CHECK(r.token_estimate == estimate_tokens(r.text));
        CHECK(r.text.find(std::string(kCriticalDelimiter)) != std::string::npos);
        // deterministic
        CHECK(render(tpl, ctx, ctx.complaint).text == r.text);
    }
    CHECK_FALSE(lib.get(PromptStrategy::FewShot).exemplars.empty());
}

TEST_CASE("placeholder-looking text inside values is not expanded") {
    auto ctx = context(1);
    ctx.hits[0].chunk.text = "note says {{complaint}} literally";
    const auto r = render(PromptLibrary::builtin().get(PromptStrategy::ZeroShot), ctx, ctx.complaint);
    CHECK(r.text.find("note says {{complaint}} literally") != std::string::npos);
}

TEST_CASE("template parsing rejects broken layouts") {
    const std::string ok =
        "@strategy zero_shot\n@version 2\n@template\nA {{context}} B {{complaint}} C {{format_instructions}}\n";
    const auto t = parse_template(ok);
    CHECK(t.version == 2);
    CHECK(t.preamble() == "A");

    CHECK_THROWS_AS(parse_template("@strategy zero_shot\n@template\n{{context}} {{complaint}} {{bogus}} "
                                   "{{format_instructions}}\n"),
                    TemplateError);
    CHECK_THROWS_AS(parse_template("@strategy zero_shot\n@template\n{{complaint}} {{context}} {{format_instructions}}\n"),
                    TemplateError);
    CHECK_THROWS_AS(parse_template("@strategy zero_shot\n@template\n{{context}} {{complaint}}\n"), TemplateError);
    CHECK_THROWS_AS(parse_template("@strategy nine_shot\n@template\n{{context}} {{complaint}} {{format_instructions}}\n"),
                    TemplateError);
}

TEST_CASE("budget overflow throws; the caller policy drops lowest scored hits") {
    const auto lib = PromptLibrary::builtin();
    const auto& tpl = lib.get(PromptStrategy::ZeroShot);
    const auto ctx = context(6);
    const auto full = render(tpl, ctx, ctx.complaint);
    CHECK_THROWS_AS(render(tpl, ctx, ctx.complaint, full.token_estimate - 1), ContextOverflow);

    std::vector<std::string> dropped;
    const auto fitted = render_within_budget(tpl, ctx, ctx.complaint, full.token_estimate - 1, &dropped);
    CHECK(fitted.token_estimate <= full.token_estimate - 1);
    REQUIRE(dropped.size() == 1);
    CHECK(dropped[0] == "n1#5");

    CHECK_THROWS_AS(render_within_budget(tpl, ctx, ctx.complaint, 10, nullptr), ContextOverflow);
}

TEST_CASE("parser accepts preamble text, other bullet styles and wrapped bullets") {
    const std::string raw =
        "Thinking about CRITICAL FINDINGS: first...\n\n"
        "critical findings:\n"
        "1. Allergic to penicillin\n"
        "* On warfarin\n  5 mg daily\n"
        "- Prior MI\n"
        "- extra bullet\n"
        "CONTEXT SUMMARY:\n"
        "Presents with chest pain.\n  Has diabetes.\n";
    const auto b = parse_summary(raw);
    CHECK(b.critical_bullets == std::vector<std::string>{"Allergic to penicillin", "On warfarin 5 mg daily", "Prior MI"});
    CHECK(b.context_paragraph == "Presents with chest pain. Has diabetes.");
    CHECK(b.lint.size() == 1);
    CHECK(b.raw_llm_text == raw);
}

TEST_CASE("parse failures are classified") {
    try {
        parse_summary("no delimiters at all");
        FAIL("expected ParseFailure");
    } catch (const ParseFailure& f) {
        CHECK(f.kind() == ParseFailure::Kind::MissingDelimiter);
    }
    try {
        parse_summary("CRITICAL FINDINGS:\n- one\n- two\nCONTEXT SUMMARY:\ntext");
        FAIL("expected ParseFailure");
    } catch (const ParseFailure& f) {
        CHECK(f.kind() == ParseFailure::Kind::TooFewBullets);
        CHECK(f.bullets() == 2);
    }
    try {
        parse_summary("CRITICAL FINDINGS:\n- a\n- b\n- c\nCONTEXT SUMMARY:\n   \n");
        FAIL("expected ParseFailure");
    } catch (const ParseFailure& f) {
        CHECK(f.kind() == ParseFailure::Kind::EmptyContext);
    }
}

TEST_CASE("serialize then parse is the identity on normalized bundles") {
    std::mt19937_64 rng(21);
    const std::vector<std::string> words{"warfarin", "INR", "2.6", "allergy", "stent", "2019", "chest", "pain"};
    for (int i = 0; i < 500; ++i) {
        SummaryBundle b;
        auto sentence = [&] {
            std::string s;
            const auto n = 1 + rng() % 8;
            for (std::size_t w = 0; w < n; ++w) s += (w ? " " : "") + words[rng() % words.size()];
            return s;
        };
        for (int k = 0; k < 3; ++k) b.critical_bullets.push_back(sentence());
        b.context_paragraph = sentence() + ". " + sentence() + ".";
        const auto back = parse_summary(serialize_as_instructed(b));
        CHECK(back.critical_bullets == b.critical_bullets);
        CHECK(back.context_paragraph == b.context_paragraph);
    }
}

TEST_CASE("repair prompt carries the original, the reply and the problem") {
    const ParseFailure f(ParseFailure::Kind::TooFewBullets, 2, "expected 3 critical bullets, found 2");
    const auto p = repair_prompt("ORIGINAL", "REPLY", f);
    CHECK(p.find("ORIGINAL") != std::string::npos);
    CHECK(p.find("REPLY") != std::string::npos);
    CHECK(p.find("found 2") != std::string::npos);
}
