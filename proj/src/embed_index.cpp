#include "chartsum/embed_index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <httplib.h>
#include <zlib.h>

namespace chartsum {

EmbeddingVector normalize(std::span<const float> values) {
    double sq = 0.0;
    for (float v : values) {
        if (!std::isfinite(v)) throw EmbedError(EmbedError::Kind::NonFinite, "embedding has non-finite values");
        sq += static_cast<double>(v) * v;
    }
    if (sq == 0.0) throw EmbedError(EmbedError::Kind::ZeroVector, "cannot normalize a zero vector");
    const double norm = std::sqrt(sq);
    EmbeddingVector out;
    out.values.reserve(values.size());
    for (float v : values) out.values.push_back(static_cast<float>(v / norm));
    return out;
}

// ---- hash projection --------------------------------------------------------

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

bool is_token_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

HashProjectionEmbedder::HashProjectionEmbedder(std::size_t dims) : dims_(dims) {
    if (dims_ == 0) throw std::invalid_argument("embedding dims must be positive");
}

std::vector<float> HashProjectionEmbedder::embed_one(std::string_view text) const {
    constexpr int kProbes = 4;
    std::vector<float> v(dims_, 0.0f);
    std::string token;
    bool any = false;
    auto flush = [&] {
        if (token.empty()) return;
        const std::uint64_t h = fnv1a(token);
        for (int r = 0; r < kProbes; ++r) {
            const std::uint64_t x = splitmix64(h + static_cast<std::uint64_t>(r));
            v[x % dims_] += (x >> 63) ? -1.0f : 1.0f;
        }
        any = true;
        token.clear();
    };
    for (unsigned char c : text) {
        if (is_token_byte(c)) {
            token += static_cast<char>(std::tolower(c));
        } else {
            flush();
        }
    }
    flush();
    if (!any || std::all_of(v.begin(), v.end(), [](float f) { return f == 0.0f; })) v[0] = 1.0f;
    return v;
}

std::vector<std::vector<float>> HashProjectionEmbedder::embed_batch(std::span<const std::string> texts) {
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
}

// ---- HTTP client ------------------------------------------------------------

HttpEmbeddingClient::HttpEmbeddingClient(Endpoint endpoint, std::string model, std::size_t batch_size,
                                         double timeout_s)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), batch_size_(std::max<std::size_t>(1, batch_size)),
      timeout_s_(timeout_s) {
    if (endpoint_.path.empty()) endpoint_.path = "/api/embed";
}

std::vector<std::vector<float>> HttpEmbeddingClient::embed_batch(std::span<const std::string> texts) {
    httplib::Client cli(endpoint_.origin());
    const auto secs = static_cast<time_t>(timeout_s_);
    const auto usecs = static_cast<time_t>((timeout_s_ - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(5, 0);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);

    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (std::size_t start = 0; start < texts.size(); start += batch_size_) {
        const auto batch = texts.subspan(start, std::min(batch_size_, texts.size() - start));
        const json body{{"model", model_}, {"input", std::vector<std::string>(batch.begin(), batch.end())}};
        auto res = cli.Post(endpoint_.path, body.dump(), "application/json");
        if (!res) {
            throw EmbedError(EmbedError::Kind::ServerUnreachable,
                             "embedding server " + endpoint_.to_string() + " unreachable: " +
                                 httplib::to_string(res.error()));
        }
        if (res->status != 200) {
            throw EmbedError(EmbedError::Kind::BadResponse,
                             "embedding server returned HTTP " + std::to_string(res->status));
        }
        const json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.is_object()) {
            throw EmbedError(EmbedError::Kind::BadResponse, "embedding server returned invalid JSON");
        }
        try {
            std::vector<std::vector<float>> vecs;
            if (reply.contains("embeddings")) {
                reply.at("embeddings").get_to(vecs);
            } else if (reply.contains("data")) {
                for (const auto& item : reply.at("data")) vecs.push_back(item.at("embedding").get<std::vector<float>>());
            } else {
                throw std::invalid_argument("no embeddings field");
            }
            if (vecs.size() != batch.size()) throw std::invalid_argument("wrong number of vectors");
            for (auto& v : vecs) out.push_back(std::move(v));
        } catch (const EmbedError&) {
            throw;
        } catch (const std::exception& e) {
            throw EmbedError(EmbedError::Kind::BadResponse, std::string("malformed embedding reply: ") + e.what());
        }
    }
    return out;
}

std::vector<EmbeddingVector> embed_texts(std::span<const std::string> texts, EmbeddingClient& client) {
    if (texts.empty()) throw std::invalid_argument("embed_texts requires at least one text");
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (texts[i].empty()) {
            throw EmbedError(EmbedError::Kind::EmptyText, "text " + std::to_string(i) + " is empty");
        }
    }
    const auto raw = client.embed_batch(texts);
    if (raw.size() != texts.size()) {
        throw EmbedError(EmbedError::Kind::BadResponse, "embedding client returned " + std::to_string(raw.size()) +
                                                             " vectors for " + std::to_string(texts.size()) +
                                                             " texts");
    }
    std::vector<EmbeddingVector> out;
    out.reserve(raw.size());
    for (const auto& v : raw) {
        if (v.empty() || v.size() != raw.front().size()) {
            throw EmbedError(EmbedError::Kind::DimensionMismatch,
                             "inconsistent embedding dims: " + std::to_string(raw.front().size()) + " vs " +
                                 std::to_string(v.size()));
        }
        out.push_back(normalize(v));
    }
    return out;
}

EmbeddingVector embed_text(const std::string& text, EmbeddingClient& client) {
    return embed_texts(std::span<const std::string>(&text, 1), client).front();
}

// ---- index ------------------------------------------------------------------

PatientIndex::PatientIndex(std::string patient_id, std::string model_name, std::uint32_t dims)
    : patient_id_(std::move(patient_id)), model_name_(std::move(model_name)), dims_(dims) {
    if (dims_ == 0) throw IndexError(IndexError::Kind::DimensionMismatch, "index dims must be positive");
}

void PatientIndex::add(ChartChunk chunk, const EmbeddingVector& vec) {
    if (frozen_) throw IndexError(IndexError::Kind::Frozen, "index is frozen");
    if (vec.dims() != dims_) {
        throw IndexError(IndexError::Kind::DimensionMismatch,
                         "vector dims " + std::to_string(vec.dims()) + " != index dims " + std::to_string(dims_));
    }
    if (!ids_.insert(chunk.chunk_id).second) {
        throw IndexError(IndexError::Kind::DuplicateChunk, "duplicate chunk id " + chunk.chunk_id);
    }
    chunks_.push_back(std::move(chunk));
    matrix_.insert(matrix_.end(), vec.values.begin(), vec.values.end());
}

SearchResult PatientIndex::search(const EmbeddingVector& query, std::uint32_t k) const {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    SearchResult result;
    if (chunks_.empty()) {
        result.empty_index = true;
        return result;
    }
    if (query.dims() != dims_) {
        throw IndexError(IndexError::Kind::DimensionMismatch,
                         "query dims " + std::to_string(query.dims()) + " != index dims " + std::to_string(dims_));
    }
    std::vector<double> scores(chunks_.size());
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        const float* row = matrix_.data() + i * dims_;
        double s = 0.0;
        for (std::uint32_t d = 0; d < dims_; ++d) s += static_cast<double>(row[d]) * query.values[d];
        scores[i] = s;
    }
    std::vector<std::size_t> order(chunks_.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t n = std::min<std::size_t>(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return chunks_[a].chunk_id < chunks_[b].chunk_id;
                      });
    result.hits.reserve(n);
    for (std::size_t i = 0; i < n; ++i) result.hits.push_back({chunks_[order[i]], scores[order[i]]});
    return result;
}

namespace {

class Writer {
public:
    void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    template <typename T>
    void le(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
    }
    void str(std::string_view s) {
        le<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void f32(float f) { le<std::uint32_t>(std::bit_cast<std::uint32_t>(f)); }
    std::string& buffer() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    template <typename T>
    T le() {
        need(sizeof(T));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }
    std::string str() {
        const auto n = le<std::uint32_t>();
        need(n);
        std::string s(data_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw IndexError(IndexError::Kind::CorruptIndex, "index file truncated");
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::string_view data) {
    return static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

}  // namespace

std::string serialize_index(const PatientIndex& index) {
    Writer w;
    w.bytes("CHIX", 4);
    w.le<std::uint16_t>(kIndexVersion);
    w.str(index.patient_id());
    w.str(index.model_name());
    w.le<std::uint32_t>(index.dims());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(index.size()));
    for (std::size_t i = 0; i < index.size(); ++i) {
        for (float f : index.vector(i)) w.f32(f);
    }
    for (const auto& c : index.chunks()) {
        w.str(c.chunk_id);
        w.str(c.note_id);
        w.le<std::uint32_t>(c.ordinal);
        w.le<std::uint8_t>(c.header ? 1 : 0);
        w.str(c.header.value_or(""));
        w.str(c.text);
        w.le<std::uint64_t>(c.token_estimate);
        w.le<std::uint64_t>(c.span.begin);
        w.le<std::uint64_t>(c.span.end);
    }
    w.le<std::uint32_t>(crc_of(w.buffer()));
    return std::move(w.buffer());
}

PatientIndex deserialize_index(std::string_view bytes) {
    using K = IndexError::Kind;
    if (bytes.size() < 4 + 2 + 4 || bytes.substr(0, 4) != "CHIX") throw IndexError(K::CorruptIndex, "bad index magic");
    Reader head(bytes.substr(4, 2));
    const auto version = head.le<std::uint16_t>();
    if (version != kIndexVersion) {
        throw IndexError(K::VersionUnsupported, "unsupported index version " + std::to_string(version));
    }
    const auto body = bytes.substr(0, bytes.size() - 4);
    Reader tail(bytes.substr(bytes.size() - 4));
    if (tail.le<std::uint32_t>() != crc_of(body)) throw IndexError(K::CorruptIndex, "index checksum mismatch");

    Reader r(body.substr(6));
    auto patient_id = r.str();
    auto model = r.str();
    const auto dims = r.le<std::uint32_t>();
    const auto count = r.le<std::uint32_t>();
    if (dims == 0) throw IndexError(K::CorruptIndex, "index dims is zero");
    if (static_cast<std::uint64_t>(count) * dims * 4 > r.remaining()) throw IndexError(K::CorruptIndex, "index file truncated");
    std::vector<EmbeddingVector> vecs(count);
    for (auto& v : vecs) {
        v.values.resize(dims);
        for (auto& f : v.values) f = r.f32();
    }
    PatientIndex index(std::move(patient_id), std::move(model), dims);
    for (std::uint32_t i = 0; i < count; ++i) {
        ChartChunk c;
        c.chunk_id = r.str();
        c.note_id = r.str();
        c.ordinal = r.le<std::uint32_t>();
        const auto has_header = r.le<std::uint8_t>();
        auto header = r.str();
        if (has_header > 1) throw IndexError(K::CorruptIndex, "bad header flag");
        if (has_header) c.header = std::move(header);
        c.text = r.str();
        c.token_estimate = r.le<std::uint64_t>();
        c.span.begin = r.le<std::uint64_t>();
        c.span.end = r.le<std::uint64_t>();
        try {
            index.add(std::move(c), vecs[i]);
        } catch (const IndexError& e) {
            throw IndexError(K::CorruptIndex, e.what());
        }
    }
    if (r.remaining() != 0) throw IndexError(K::CorruptIndex, "trailing bytes in index file");
    index.freeze();
    return index;
}

void save_index(const PatientIndex& index, const std::filesystem::path& path) {
    const auto bytes = serialize_index(index);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IndexError(IndexError::Kind::Io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IndexError(IndexError::Kind::Io, "write failed for " + path.string());
}

PatientIndex load_index(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IndexError(IndexError::Kind::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_index(ss.str());
}

std::string index_file_name(std::string_view patient_id) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : patient_id) {
        if (std::isalnum(c) || c == '-' || c == '_') {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += kHex[c >> 4];
            out += kHex[c & 0xF];
        }
    }
    return out + ".chix";
}

IndexStore::IndexStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::size_t IndexStore::reload() {
    std::map<std::string, std::shared_ptr<const PatientIndex>> fresh;
    if (!dir_.empty()) {
        for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".chix") continue;
            auto idx = std::make_shared<PatientIndex>(load_index(entry.path()));
            const auto id = idx->patient_id();
            fresh[id] = std::move(idx);
        }
    }
    std::lock_guard lock(mu_);
    indices_ = std::move(fresh);
    return indices_.size();
}

void IndexStore::put(std::shared_ptr<const PatientIndex> index) {
    std::lock_guard lock(mu_);
    indices_[index->patient_id()] = std::move(index);
}

std::shared_ptr<const PatientIndex> IndexStore::find(const std::string& patient_id) const {
    std::lock_guard lock(mu_);
    const auto it = indices_.find(patient_id);
    return it == indices_.end() ? nullptr : it->second;
}

std::vector<std::string> IndexStore::patient_ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, _] : indices_) out.push_back(id);
    return out;
}

PatientIndex build_index(const std::string& patient_id, const std::vector<ChartChunk>& chunks,
                         EmbeddingClient& client) {
    if (chunks.empty()) {
        PatientIndex empty(patient_id, client.model_name(), 1);
        empty.freeze();
        return empty;
    }
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks) texts.push_back(c.text);
    const auto vecs = embed_texts(texts, client);
    PatientIndex index(patient_id, client.model_name(), static_cast<std::uint32_t>(vecs.front().dims()));
    for (std::size_t i = 0; i < chunks.size(); ++i) index.add(chunks[i], vecs[i]);
    index.freeze();
    return index;
}

}  // namespace chartsum
