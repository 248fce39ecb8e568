#pragma once

// Chunk embeddings and the per-patient exact flat index.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "chartsum/core.hpp"
#include "chartsum/endpoint.hpp"

namespace chartsum {

class EmbedError : public std::runtime_error {
public:
    enum class Kind { ServerUnreachable, DimensionMismatch, EmptyText, BadResponse, NonFinite, ZeroVector };

    EmbedError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct EmbeddingVector {
    std::vector<float> values;

    std::size_t dims() const { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

// Returns values / ||values||. Throws EmbedError on non-finite input or a
// zero vector.
EmbeddingVector normalize(std::span<const float> values);

// Source of raw (not necessarily normalized) embedding vectors.
class EmbeddingClient {
public:
    virtual ~EmbeddingClient() = default;
    virtual std::vector<std::vector<float>> embed_batch(std::span<const std::string> texts) = 0;
    virtual std::string model_name() const = 0;
};

// Deterministic feature-hashing embedder used when no model server is
// available. Lower-cased alphanumeric tokens each add signed weight to a few
// hashed coordinates, so texts sharing vocabulary get high cosine similarity.
class HashProjectionEmbedder final : public EmbeddingClient {
public:
    explicit HashProjectionEmbedder(std::size_t dims = 256);

    std::vector<std::vector<float>> embed_batch(std::span<const std::string> texts) override;
    std::string model_name() const override { return "hash-projection-" + std::to_string(dims_); }

    std::vector<float> embed_one(std::string_view text) const;

private:
    std::size_t dims_;
};

// Local model server client: POST {model, input: [...]} to the endpoint.
// Accepts {"embeddings": [[...]]} or {"data": [{"embedding": [...]}]}.
class HttpEmbeddingClient final : public EmbeddingClient {
public:
    HttpEmbeddingClient(Endpoint endpoint, std::string model, std::size_t batch_size = 32,
                        double timeout_s = 60.0);

    std::vector<std::vector<float>> embed_batch(std::span<const std::string> texts) override;
    std::string model_name() const override { return model_; }

private:
    Endpoint endpoint_;
    std::string model_;
    std::size_t batch_size_;
    double timeout_s_;
};

// One L2-normalized vector per text, in input order. Rejects empty strings
// before contacting the client and checks every returned vector has the same
// dimensionality.
std::vector<EmbeddingVector> embed_texts(std::span<const std::string> texts, EmbeddingClient& client);
EmbeddingVector embed_text(const std::string& text, EmbeddingClient& client);

class IndexError : public std::runtime_error {
public:
    enum class Kind { CorruptIndex, VersionUnsupported, DimensionMismatch, DuplicateChunk, Frozen, Io };

    IndexError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct SearchResult {
    std::vector<ScoredChunk> hits;
    bool empty_index = false;
};

// Append-only until freeze(); immutable and safe to search concurrently after.
class PatientIndex {
public:
    PatientIndex() = default;
    PatientIndex(std::string patient_id, std::string model_name, std::uint32_t dims);

    // Vector must already be normalized.
    void add(ChartChunk chunk, const EmbeddingVector& vec);
    void freeze() { frozen_ = true; }

    const std::string& patient_id() const { return patient_id_; }
    const std::string& model_name() const { return model_name_; }
    std::uint32_t dims() const { return dims_; }
    std::size_t size() const { return chunks_.size(); }
    bool frozen() const { return frozen_; }
    const std::vector<ChartChunk>& chunks() const { return chunks_; }
    std::span<const float> vector(std::size_t i) const {
        return std::span<const float>(matrix_).subspan(i * dims_, dims_);
    }

    // Exact top-min(k, size) by dot product (== cosine for unit vectors),
    // score descending then chunk_id ascending.
    SearchResult search(const EmbeddingVector& query, std::uint32_t k) const;

    bool operator==(const PatientIndex&) const = default;

private:
    std::string patient_id_;
    std::string model_name_;
    std::uint32_t dims_ = 0;
    std::vector<ChartChunk> chunks_;
    std::vector<float> matrix_;  // row-major, size() x dims_
    std::unordered_set<std::string> ids_;
    bool frozen_ = false;
};

// Binary layout (all integers little-endian):
//   "CHIX" u16 version
//   str patient_id, str model_name, u32 dims, u32 count     (str = u32 len + bytes)
//   f32[count * dims]
//   per chunk: str chunk_id, str note_id, u32 ordinal, u8 has_header, str header,
//              str text, u64 token_estimate, u64 span_begin, u64 span_end
//   u32 CRC-32 of every preceding byte
inline constexpr std::uint16_t kIndexVersion = 1;

std::string serialize_index(const PatientIndex& index);
PatientIndex deserialize_index(std::string_view bytes);
void save_index(const PatientIndex& index, const std::filesystem::path& path);
PatientIndex load_index(const std::filesystem::path& path);

// File name used for a patient inside an index directory.
std::string index_file_name(std::string_view patient_id);

// Thread-safe map of frozen indices loaded from a directory of *.chix files.
class IndexStore {
public:
    IndexStore() = default;
    explicit IndexStore(std::filesystem::path dir);

    // Replaces the whole store atomically; returns the number of indices.
    std::size_t reload();
    void put(std::shared_ptr<const PatientIndex> index);

    std::shared_ptr<const PatientIndex> find(const std::string& patient_id) const;
    std::vector<std::string> patient_ids() const;

private:
    std::filesystem::path dir_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<const PatientIndex>> indices_;
};

// Builds a frozen index for one patient record.
PatientIndex build_index(const std::string& patient_id, const std::vector<ChartChunk>& chunks,
                         EmbeddingClient& client);

}  // namespace chartsum
