#include <doctest.h>

#include <random>

#include "../support/oracles.hpp"
#include "chartsum/fa_judge.hpp"
#include "chartsum/mock_model_server.hpp"
#include "chartsum/prompt_kit.hpp"

using namespace chartsum;

namespace {

SummaryBundle fixture_bundle() {
    SummaryBundle b;
    b.critical_bullets = {"Allergic to penicillin; on warfarin 5 mg daily", "Prior MI in 2019 with stent to the LAD",
                          "Troponin peaked at 2.1 ng/mL during the January admission"};
    b.context_paragraph =
        "Presents with recurrent chest tightness at rest over the past week. Reports no known drug allergies. A "
        "colonoscopy in 2020 was unremarkable.";
    b.model_name = "mistral";
    return b;
}

PatientIndex chart_index(EmbeddingClient& e) {
    std::vector<ChartChunk> chunks;
    const std::vector<std::string> texts{"ALLERGIES: penicillin (hives)", "MEDICATIONS: warfarin 5 mg daily",
                                         "PAST MEDICAL HISTORY: prior MI 2019 with stent to the LAD",
                                         "Troponin 2.1 ng/mL", "chest tightness at rest over the past week"};
    for (std::size_t i = 0; i < texts.size(); ++i) {
        chunks.push_back({"n1#" + std::to_string(i), "n1", static_cast<std::uint32_t>(i), std::nullopt, texts[i],
                          estimate_tokens(texts[i]), {0, texts[i].size()}});
    }
    return build_index("P001", chunks, e);
}

std::shared_ptr<InProcessGenerator> scripted() {
    return std::make_shared<InProcessGenerator>(
        ScriptedResponder::load(std::filesystem::path(CHARTSUM_FIXTURES) / "mock_script.json"), "scripted-judge");
}

}  // namespace

TEST_CASE("compute_fa matches the exact-fraction oracle") {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 3000; ++i) {
        const std::uint64_t s = rng() % 30, c = rng() % 30, u = rng() % 30;
        if (s + c + u == 0) continue;
        const auto r = compute_fa(s, c, u);
        CHECK(r.N == s + c + u);
        CHECK(r.fa_raw == doctest::Approx(oracle::fa_raw_default(s, c, u).value()).epsilon(1e-12));
        CHECK(r.fa == doctest::Approx(oracle::fa_clipped_default(s, c, u)).epsilon(1e-12));
        CHECK(r.delta_s + r.delta_c + r.delta_u == doctest::Approx(1.0));
    }
}

TEST_CASE("compute_fa edge cases") {
    CHECK_THROWS_AS(compute_fa(0, 0, 0), JudgeError);
    CHECK(compute_fa(3, 0, 0).fa == 5.0);
    CHECK(compute_fa(0, 3, 0).fa == 0.0);
    CHECK(compute_fa(0, 3, 0).fa_raw == -3.75);
    CHECK(compute_fa(0, 0, 3).fa == 1.25);

    std::vector<ClaimVerdict> vs{{"a", Verdict::Supported, {}, ""},
                                 {"b", Verdict::Contradicted, {}, ""},
                                 {"c", Verdict::NotFound, {}, ""}};
    const auto r = compute_fa(vs);
    CHECK(r.S == 1);
    CHECK(r.C == 1);
    CHECK(r.U == 1);
    CHECK(r.per_claim == vs);
}

TEST_CASE("weights validation") {
    CHECK_NOTHROW(validate_weights(JudgeWeights{}));
    CHECK(max_attainable_fa(JudgeWeights{}) == 5.0);
    CHECK_THROWS_AS(validate_weights(JudgeWeights{4, -3.75, 1.25, 0, 5}), std::invalid_argument);
    CHECK_THROWS_AS(validate_weights(JudgeWeights{5, -3.75, 1.25, 5, 5}), std::invalid_argument);
}

TEST_CASE("verdict names") {
    for (auto v : {Verdict::Supported, Verdict::Contradicted, Verdict::NotFound}) CHECK(parse_verdict(to_string(v)) == v);
    CHECK_FALSE(parse_verdict("MAYBE").has_value());
}

TEST_CASE("scripted judge produces the expected report") {
    auto e = std::make_shared<HashProjectionEmbedder>(128);
    const auto idx = chart_index(*e);
    Judge judge(scripted(), e);
    const auto report = judge.evaluate(fixture_bundle(), ChiefComplaint::make("P001", "chest pain"), idx);

    CHECK(report.critical.claims.size() == 4);
    CHECK(report.context.claims.size() == 3);
    CHECK(report.critical.fa.fa == 5.0);
    CHECK(report.context.fa.S == 1);
    CHECK(report.context.fa.C == 1);
    CHECK(report.context.fa.U == 1);
    CHECK(report.context.fa.fa == doctest::Approx(oracle::fa_clipped_default(1, 1, 1)));
    CHECK(report.overall.fa == doctest::Approx(oracle::fa_clipped_default(5, 1, 1)));
    CHECK(report.critical.quality.completeness == 4);
    CHECK(report.critical.quality.clarity == 5);
    CHECK(report.judge_model == "scripted-judge");

    // claim ids and spans
    CHECK(report.critical.claims[0].claim_id == "crit-1");
    CHECK(report.context.claims[2].claim_id == "ctx-3");
    const auto crit = part_text(fixture_bundle(), SummaryPart::Critical);
    const auto& c0 = report.critical.claims[0];
    CHECK(crit.substr(c0.span.begin, c0.span.size()) == "Allergic to penicillin");

    // verdict evidence resolves 1-based indices
    for (const auto& v : report.critical.fa.per_claim) CHECK(v.evidence.size() == 1);
    CHECK(report.context.fa.per_claim[2].evidence.empty());

    // strict JSON round-trip
    CHECK(json(report).get<JudgeReport>() == report);
}

TEST_CASE("strict report parsing rejects broken invariants") {
    auto e = std::make_shared<HashProjectionEmbedder>(64);
    const auto idx = chart_index(*e);
    Judge judge(scripted(), e);
    json j = judge.evaluate(fixture_bundle(), ChiefComplaint::make("P001", "chest pain"), idx);

    json bad = j;
    bad["overall"]["N"] = 99;
    CHECK_THROWS_AS(bad.get<JudgeReport>(), std::invalid_argument);
    bad = j;
    bad["critical"]["quality"]["clarity"] = 7;
    CHECK_THROWS_AS(bad.get<JudgeReport>(), std::invalid_argument);
    bad = j;
    bad.erase("judge_model");
    CHECK_THROWS_AS(bad.get<JudgeReport>(), std::invalid_argument);
}

TEST_CASE("extraction preconditions") {
    auto e = std::make_shared<HashProjectionEmbedder>(64);
    Judge judge(scripted(), e);
    auto b = fixture_bundle();
    b.critical_bullets.pop_back();
    CHECK_THROWS_AS(judge.extract_claims(b), JudgeError);
    b = fixture_bundle();
    b.context_paragraph = "  ";
    CHECK_THROWS_AS(judge.extract_claims(b), JudgeError);
}

TEST_CASE("empty evidence is NOT_FOUND without a model call") {
    auto gen = scripted();
    Judge judge(gen, std::make_shared<HashProjectionEmbedder>(64));
    const auto v = judge.verify_claim(AtomicClaim{"crit-1", "anything", SummaryPart::Critical, {}}, {});
    CHECK(v.verdict == Verdict::NotFound);
    CHECK(gen->calls() == 0);
}

TEST_CASE("schema violations get one repair round") {
    const AtomicClaim claim{"crit-1", "Allergic to penicillin", SummaryPart::Critical, {}};
    const std::vector<Evidence> ev{{"n1#0", "ALLERGIES: penicillin"}};

    // First reply has an extra key; the repair prompt gets a clean answer.
    auto repaired = std::make_shared<InProcessGenerator>(std::make_shared<ScriptedResponder>(json{
        {"rules",
         json::array({
             {{"contains", "YOUR PREVIOUS RESPONSE"},
              {"response", {{"verdict", "SUPPORTED"}, {"evidence_indices", {1}}, {"rationale", "listed"}}}},
             {{"contains", "TASK: VERIFY_CLAIM"},
              {"response",
               {{"verdict", "SUPPORTED"}, {"evidence_indices", {1}}, {"rationale", "listed"}, {"confidence", 0.9}}}},
         })}}));
    Judge ok(repaired, std::make_shared<HashProjectionEmbedder>(64));
    CHECK(ok.verify_claim(claim, ev).verdict == Verdict::Supported);
    CHECK(repaired->calls() == 2);

    // Out-of-range index twice in a row fails.
    auto broken = std::make_shared<InProcessGenerator>(std::make_shared<ScriptedResponder>(
        json{{"rules", json::array()},
             {"default", {{"verdict", "SUPPORTED"}, {"evidence_indices", {3}}, {"rationale", "x"}}}}));
    Judge bad(broken, std::make_shared<HashProjectionEmbedder>(64));
    try {
        bad.verify_claim(claim, ev);
        FAIL("expected JudgeError");
    } catch (const JudgeError& e) {
        CHECK(e.kind() == JudgeError::Kind::SchemaViolation);
    }
    CHECK(broken->calls() == 2);

    // Code fences are tolerated.
    auto fenced = std::make_shared<InProcessGenerator>(std::make_shared<ScriptedResponder>(
        json{{"rules", json::array()},
             {"default", "```json\n{\"verdict\": \"NOT_FOUND\", \"evidence_indices\": [], \"rationale\": \"\"}\n```"}}));
    Judge f(fenced, std::make_shared<HashProjectionEmbedder>(64));
    CHECK(f.verify_claim(claim, ev).verdict == Verdict::NotFound);
}

TEST_CASE("prompt builders carry the markers the mock keys on") {
    const auto p = extraction_prompt(SummaryPart::Context, "some text");
    CHECK(p.find("TASK: EXTRACT_CLAIMS") != std::string::npos);
    CHECK(p.find("PART: context") != std::string::npos);
    CHECK(p.find("TEXT:\nsome text\nEND TEXT") != std::string::npos);
    const auto v = verification_prompt({"c", "claim  text", SummaryPart::Critical, {}}, {{"n1#0", "snip"}});
    CHECK(v.find("CLAIM: claim text\n") != std::string::npos);
    CHECK(v.find("EVIDENCE 1 (n1#0):\nsnip") != std::string::npos);
}

TEST_CASE("aggregation: macro FA, micro rates, mean row score") {
    RunResult a{"mistral", PromptStrategy::ZeroShot, SummaryPart::Critical, compute_fa(4, 0, 0), {4, 4, "", ""}};
    RunResult b{"mistral", PromptStrategy::ZeroShot, SummaryPart::Critical, compute_fa(1, 1, 0), {4, 4, "", ""}};
    const auto rows = aggregate({a, b});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].summaries == 2);
    CHECK(rows[0].fa == doctest::Approx((5.0 + 0.625) / 2));
    CHECK(rows[0].csr == doctest::Approx(5.0 / 6));
    CHECK(rows[0].cr == doctest::Approx(1.0 / 6));
    CHECK(rows[0].ur == 0.0);
    CHECK_THROWS_AS(aggregate({}), std::invalid_argument);

    CHECK(format_fa_cell(5, 1, 0, 0) == "5.00 (1.00|0.00|0.00)");
    const auto table = emit_judge_table(rows);
    CHECK(table.find("mistral") != std::string::npos);
    const auto csv = emit_judge_csv(rows);
    CHECK(csv.find("zero_shot") != std::string::npos);
}
