#pragma once

// Single-node vs dual-node latency runs with a stage breakdown.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chartsum/core.hpp"
#include "chartsum/mock_model_server.hpp"

namespace chartsum {

enum class BenchMode { Single, Dual };

std::string_view to_string(BenchMode m);

struct WorkItem {
    std::string patient_id;
    std::string complaint;
    PromptStrategy strategy = PromptStrategy::ZeroShot;
};

// Scenario file (JSON):
//   {"modes": ["single", "dual"], "runs": 3,
//    "records": "patients.jsonl",            // or "index_dir"
//    "mock_profile": {...}, "mock_script": "script.json",
//    "model_endpoint": "http://127.0.0.1:11434", "model": "mistral",
//    "embed_model": "",                        // empty: hash projection
//    "workload": [{"patient_id": ..., "complaint": ..., "strategy": ...}]}
// Relative paths resolve against the scenario file's directory.
struct BenchScenario {
    std::vector<BenchMode> modes{BenchMode::Single, BenchMode::Dual};
    std::uint32_t runs = 3;
    std::optional<MockProfile> mock_profile;
    std::optional<std::filesystem::path> mock_script;
    std::optional<std::filesystem::path> records;
    std::optional<std::filesystem::path> index_dir;
    std::string model_endpoint = "http://127.0.0.1:11434";
    std::string model = "mistral";
    std::string embed_model;
    double generation_timeout_s = 180.0;
    std::vector<WorkItem> workload;

    // Throws std::invalid_argument on broken invariants.
    void validate() const;
};

BenchScenario parse_scenario(const json& j, const std::filesystem::path& base_dir = {});
BenchScenario load_scenario(const std::filesystem::path& path);

struct BenchResult {
    std::vector<StageTimings> timings;           // in run order, single first
    std::map<std::string, MockStats> mock_stats;  // by mode name, mock runs only
    std::vector<std::string> warnings;
};

// Throws BackendUnavailable (std::runtime_error) when a backend cannot be
// reached.
BenchResult run_bench(const BenchScenario& scenario);

struct StageAverages {
    TimingMode mode;
    std::size_t runs = 0;
    StageTimings mean;
};

// Mean timings per mode, in Single, DualFirst, DualSubsequent order.
std::vector<StageAverages> average_by_mode(const std::vector<StageTimings>& timings);

// 1 - dual_subsequent_total / single_total, when both are present.
std::optional<double> savings_ratio(const std::vector<StageTimings>& timings);

// Warnings for runs whose load + summarization exceed the wall total by more
// than 5%, which points at clocks that disagree.
std::vector<std::string> clock_skew_warnings(const std::vector<StageTimings>& timings);

enum class ReportFormat { Table, Csv };

// Table: Model load, Retrieval gen., Summarization gen., Total, one column
// per mode. Csv: one row per run. Throws std::invalid_argument when empty.
std::string emit_report(const std::vector<StageTimings>& timings, ReportFormat format);

}  // namespace chartsum
