#pragma once

// Record file -> one index file per patient.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "chartsum/embed_index.hpp"
#include "chartsum/note_parser.hpp"

namespace chartsum {

struct PatientIngestStats {
    std::string patient_id;
    std::size_t notes = 0;
    std::size_t chunks = 0;
    std::filesystem::path index_file;
};

struct IngestResult {
    std::vector<PatientIngestStats> patients;
    // Chunk counts by token estimate: [0,16), [16,32), [32,64), ... doubling;
    // the last bucket is open-ended.
    std::vector<std::uint64_t> bucket_lower;
    std::vector<std::uint64_t> bucket_count;

    std::size_t total_chunks() const;
};

// Writes every index to a temporary name first and renames them into place
// only once all patients succeeded; on any error the temporaries are removed
// and the exception propagates (RecordError for malformed input lines).
IngestResult ingest(const std::filesystem::path& records, const std::filesystem::path& out_dir,
                    const ParserConfig& cfg, EmbeddingClient& embedder);

std::string format_ingest_stats(const IngestResult& r);

}  // namespace chartsum
