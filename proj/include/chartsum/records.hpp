#pragma once

#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

#include "chartsum/core.hpp"

namespace chartsum {

// A malformed line in a patient record file. line is 1-based.
class RecordError : public std::runtime_error {
public:
    RecordError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Reads one JSON object per line (keys patient_id, note_id, note_type,
// charted_at, text; unknown keys ignored; blank lines skipped). Records are
// returned ordered by patient_id, notes ordered by (charted_at, note_id).
std::vector<PatientRecord> read_records(std::istream& in);
std::vector<PatientRecord> load_records(const std::filesystem::path& path);

void write_records(std::ostream& out, const std::vector<PatientRecord>& records);

}  // namespace chartsum
