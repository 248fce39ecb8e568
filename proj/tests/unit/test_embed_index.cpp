#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "../support/oracles.hpp"
#include "chartsum/embed_index.hpp"

using namespace chartsum;

namespace {

ChartChunk chunk(const std::string& id) { return {id, "n", 0, std::nullopt, "t " + id, 1, {0, 1}}; }

PatientIndex random_index(std::mt19937_64& rng, std::size_t n, std::size_t dims,
                          std::vector<std::vector<float>>* rows = nullptr, std::vector<std::string>* ids = nullptr) {
    PatientIndex idx("P1", "test", static_cast<std::uint32_t>(dims));
    for (std::size_t i = 0; i < n; ++i) {
        auto v = oracle::random_unit(rng, dims);
        const std::string id = "c" + std::to_string(i);
        idx.add(chunk(id), EmbeddingVector{v});
        if (rows) rows->push_back(v);
        if (ids) ids->push_back(id);
    }
    idx.freeze();
    return idx;
}

}  // namespace

TEST_CASE("normalize produces unit vectors and rejects degenerate input") {
    const std::vector<float> v{3, 4};
    const auto n = normalize(v);
    CHECK(n.values[0] == doctest::Approx(0.6));
    CHECK(n.values[1] == doctest::Approx(0.8));
    const std::vector<float> zero{0, 0, 0};
    CHECK_THROWS_AS(normalize(zero), EmbedError);
    const std::vector<float> bad{1, NAN};
    CHECK_THROWS_AS(normalize(bad), EmbedError);
}

TEST_CASE("hash projection embedder is deterministic and vocabulary-sensitive") {
    HashProjectionEmbedder e(128);
    const auto a = normalize(e.embed_one("chest pain radiating to arm"));
    const auto b = normalize(e.embed_one("chest pain radiating to arm"));
    const auto c = normalize(e.embed_one("chest pain at rest"));
    const auto d = normalize(e.embed_one("knee replacement 2015"));
    CHECK(a == b);
    double ac = 0, ad = 0;
    for (std::size_t i = 0; i < 128; ++i) {
        ac += a.values[i] * c.values[i];
        ad += a.values[i] * d.values[i];
    }
    CHECK(ac > ad);
}

TEST_CASE("embed_texts rejects empty strings before calling the client") {
    HashProjectionEmbedder e(32);
    const std::vector<std::string> texts{"ok", ""};
    CHECK_THROWS_AS(embed_texts(texts, e), EmbedError);
}

TEST_CASE("index rejects duplicates, wrong dims and writes after freeze") {
    PatientIndex idx("P1", "m", 2);
    idx.add(chunk("a"), EmbeddingVector{{1, 0}});
    CHECK_THROWS_AS(idx.add(chunk("a"), EmbeddingVector{{0, 1}}), IndexError);
    CHECK_THROWS_AS(idx.add(chunk("b"), EmbeddingVector{{1, 0, 0}}), IndexError);
    idx.freeze();
    CHECK_THROWS_AS(idx.add(chunk("c"), EmbeddingVector{{0, 1}}), IndexError);
}

TEST_CASE("search ties break by chunk id and k clamps to size") {
    PatientIndex idx("P1", "m", 2);
    idx.add(chunk("b"), EmbeddingVector{{1, 0}});
    idx.add(chunk("a"), EmbeddingVector{{1, 0}});
    idx.add(chunk("c"), EmbeddingVector{{0, 1}});
    idx.freeze();
    const auto r = idx.search(EmbeddingVector{{1, 0}}, 10);
    REQUIRE(r.hits.size() == 3);
    CHECK(r.hits[0].chunk.chunk_id == "a");
    CHECK(r.hits[1].chunk.chunk_id == "b");
    CHECK(r.hits[2].chunk.chunk_id == "c");

    PatientIndex empty("P2", "m", 2);
    empty.freeze();
    CHECK(empty.search(EmbeddingVector{{1, 0}}, 5).empty_index);
}

TEST_CASE("flat search agrees with brute force") {
    std::mt19937_64 rng(99);
    std::vector<std::vector<float>> rows;
    std::vector<std::string> ids;
    const auto idx = random_index(rng, 300, 32, &rows, &ids);
    for (int q = 0; q < 30; ++q) {
        const auto query = oracle::random_unit(rng, 32);
        const auto got = idx.search(EmbeddingVector{query}, 7).hits;
        const auto want = oracle::brute_topk(rows, ids, query, 7);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].chunk.chunk_id == want[i].id);
            CHECK(std::abs(got[i].score - want[i].score) < 1e-6);
        }
    }
}

TEST_CASE("serialization round-trips and detects corruption") {
    std::mt19937_64 rng(5);
    PatientIndex idx("P1", "nomic", 8);
    for (int i = 0; i < 20; ++i) {
        ChartChunk c = chunk("c" + std::to_string(i));
        if (i % 3 == 0) c.header = "MEDICATIONS:";
        idx.add(c, EmbeddingVector{oracle::random_unit(rng, 8)});
    }
    idx.freeze();
    const std::string bytes = serialize_index(idx);
    CHECK(deserialize_index(bytes) == idx);

    std::string flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x10;
    CHECK_THROWS_AS(deserialize_index(flipped), IndexError);
    CHECK_THROWS_AS(deserialize_index(bytes.substr(0, bytes.size() - 3)), IndexError);

    std::string version = bytes;
    version[4] = 9;
    try {
        deserialize_index(version);
        FAIL("expected IndexError");
    } catch (const IndexError& e) {
        CHECK((e.kind() == IndexError::Kind::VersionUnsupported || e.kind() == IndexError::Kind::CorruptIndex));
    }
}

TEST_CASE("index store loads a directory and reloads") {
    const auto dir = std::filesystem::temp_directory_path() / "chartsum_store_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(3);
    auto a = random_index(rng, 4, 8);
    save_index(a, dir / index_file_name("P1"));

    IndexStore store(dir);
    CHECK(store.reload() == 1);
    CHECK(store.find("P1") != nullptr);
    CHECK(store.find("P9") == nullptr);

    PatientIndex b("P2", "test", 8);
    b.add(chunk("x"), EmbeddingVector{oracle::random_unit(rng, 8)});
    b.freeze();
    save_index(b, dir / index_file_name("P2"));
    CHECK(store.reload() == 2);
    CHECK(store.patient_ids() == std::vector<std::string>{"P1", "P2"});
    std::filesystem::remove_all(dir);
}

TEST_CASE("build_index embeds every chunk") {
    HashProjectionEmbedder e(64);
    std::vector<ChartChunk> chunks{chunk("a"), chunk("b")};
    const auto idx = build_index("P1", chunks, e);
    CHECK(idx.frozen());
    CHECK(idx.size() == 2);
    CHECK(idx.dims() == 64);
    CHECK(idx.model_name() == e.model_name());
}
