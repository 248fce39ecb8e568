#pragma once

// Batch evaluation: summarize every complaint with every model and strategy,
// judge each summary, and aggregate the results into Table-1 style rows.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "chartsum/bench.hpp"
#include "chartsum/fa_judge.hpp"

namespace chartsum {

// Manifest file (JSON):
//   {"records": "patients.jsonl", "index_dir": "...",
//    "complaints": [{"patient_id": "P001", "complaint": "chest pain"}],
//    "models": ["mistral"], "strategies": ["zero_shot", "cot"], "k": 5,
//    "weights": {...}, "model_endpoint": "http://...", "embed_model": "",
//    "judge_endpoint": "http://...", "judge_model": "...",
//    "mock_script": "script.json"}
// With mock_script set, both the summarizer and the judge are answered
// in-process by the scripted responder.
struct EvalManifest {
    std::optional<std::filesystem::path> records;
    std::optional<std::filesystem::path> index_dir;
    std::vector<WorkItem> complaints;
    std::vector<std::string> models;
    std::vector<PromptStrategy> strategies;
    std::uint32_t k = kDefaultTopK;
    JudgeWeights weights;
    std::string model_endpoint = "http://127.0.0.1:11434";
    std::string embed_model;
    std::string judge_endpoint = "http://127.0.0.1:11434";
    std::string judge_model = "judge";
    std::string judge_api_key;
    std::optional<std::filesystem::path> mock_script;
};

EvalManifest parse_manifest(const json& j, const std::filesystem::path& base_dir = {});
EvalManifest load_manifest(const std::filesystem::path& path);

struct EvalOutput {
    std::vector<JudgeReport> reports;
    std::vector<std::string> failures;
    std::vector<AggregateRow> rows;
};

EvalOutput run_evaluation(const EvalManifest& manifest);

}  // namespace chartsum
