#include "chartsum/ingest.hpp"

#include <algorithm>

#include "chartsum/records.hpp"

namespace chartsum {

std::size_t IngestResult::total_chunks() const {
    std::size_t n = 0;
    for (const auto& p : patients) n += p.chunks;
    return n;
}

namespace {

struct TempFiles {
    std::vector<std::pair<std::filesystem::path, std::filesystem::path>> pending;  // temp, final
    bool committed = false;

    ~TempFiles() {
        if (committed) return;
        std::error_code ec;
        for (const auto& [tmp, _] : pending) std::filesystem::remove(tmp, ec);
    }
};

}  // namespace

IngestResult ingest(const std::filesystem::path& records, const std::filesystem::path& out_dir, const ParserConfig& cfg,
                    EmbeddingClient& embedder) {
    cfg.validate();
    const auto recs = load_records(records);
    std::filesystem::create_directories(out_dir);

    IngestResult result;
    result.bucket_lower = {0, 16, 32, 64, 128, 256, 512};
    result.bucket_count.assign(result.bucket_lower.size(), 0);

    TempFiles temps;
    for (const auto& rec : recs) {
        const auto chunks = split_record(rec, cfg);
        for (const auto& c : chunks) {
            const auto it = std::upper_bound(result.bucket_lower.begin(), result.bucket_lower.end(), c.token_estimate);
            ++result.bucket_count[static_cast<std::size_t>(it - result.bucket_lower.begin()) - 1];
        }
        const auto index = build_index(rec.patient_id, chunks, embedder);
        const auto final_path = out_dir / index_file_name(rec.patient_id);
        auto tmp = final_path;
        tmp += ".tmp";
        temps.pending.emplace_back(tmp, final_path);
        save_index(index, tmp);
        result.patients.push_back(PatientIngestStats{rec.patient_id, rec.notes.size(), chunks.size(), final_path});
    }
    for (const auto& [tmp, final_path] : temps.pending) std::filesystem::rename(tmp, final_path);
    temps.committed = true;
    return result;
}

std::string format_ingest_stats(const IngestResult& r) {
    std::string out;
    for (const auto& p : r.patients) {
        out += p.patient_id + ": " + std::to_string(p.notes) + " note(s), " + std::to_string(p.chunks) + " chunk(s) -> " +
               p.index_file.string() + "\n";
    }
    out += "total chunks: " + std::to_string(r.total_chunks()) + "\n";
    out += "token estimate histogram:\n";
    std::uint64_t peak = 1;
    for (auto c : r.bucket_count) peak = std::max(peak, c);
    for (std::size_t i = 0; i < r.bucket_lower.size(); ++i) {
        char label[48];
        if (i + 1 < r.bucket_lower.size()) {
            std::snprintf(label, sizeof label, "  %4llu-%-4llu", static_cast<unsigned long long>(r.bucket_lower[i]),
                          static_cast<unsigned long long>(r.bucket_lower[i + 1] - 1));
        } else {
            std::snprintf(label, sizeof label, "  %4llu+    ", static_cast<unsigned long long>(r.bucket_lower[i]));
        }
        const auto bar = static_cast<std::size_t>(40 * r.bucket_count[i] / peak);
        out += std::string(label) + " " + std::to_string(r.bucket_count[i]) + " " + std::string(bar, '#') + "\n";
    }
    return out;
}

}  // namespace chartsum
