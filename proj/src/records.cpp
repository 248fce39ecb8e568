#include "chartsum/records.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

namespace chartsum {

std::vector<PatientRecord> read_records(std::istream& in) {
    std::map<std::string, PatientRecord> by_patient;
    std::map<std::string, std::set<std::string>> seen_ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw RecordError(lineno, "not a JSON object");
        ClinicalNote note;
        try {
            from_json(j, note);
        } catch (const std::exception& e) {
            throw RecordError(lineno, e.what());
        }
        if (note.patient_id.empty()) throw RecordError(lineno, "empty patient_id");
        if (note.note_id.empty()) throw RecordError(lineno, "empty note_id");
        if (note.text.empty()) throw RecordError(lineno, "empty note text");
        if (!seen_ids[note.patient_id].insert(note.note_id).second) {
            throw RecordError(lineno, "duplicate note_id '" + note.note_id + "' for patient '" +
                                          note.patient_id + "'");
        }
        auto& rec = by_patient[note.patient_id];
        rec.patient_id = note.patient_id;
        rec.notes.push_back(std::move(note));
    }
    std::vector<PatientRecord> out;
    out.reserve(by_patient.size());
    for (auto& [id, rec] : by_patient) {
        std::sort(rec.notes.begin(), rec.notes.end(), note_order);
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<PatientRecord> load_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open record file " + path.string());
    return read_records(in);
}

void write_records(std::ostream& out, const std::vector<PatientRecord>& records) {
    for (const auto& rec : records) {
        for (const auto& note : rec.notes) out << json(note).dump() << '\n';
    }
}

}  // namespace chartsum
