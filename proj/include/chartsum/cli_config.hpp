#pragma once

// Settings shared by every chartsum subcommand. Loaded from a JSON file;
// command-line flags override individual values afterwards.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "chartsum/core.hpp"

namespace chartsum {

struct CliConfig {
    std::filesystem::path data_dir = "data";
    std::filesystem::path index_dir = "data/index";
    std::optional<std::filesystem::path> template_dir;
    std::optional<std::filesystem::path> header_lexicon;

    std::string retrieval_node = "127.0.0.1:7401";
    std::string summarizer_api = "http://127.0.0.1:7402";
    std::string model_server = "http://127.0.0.1:11434";
    std::string model = "mistral";
    std::string embed_model = "nomic-embed-text";
    std::string judge_endpoint = "http://127.0.0.1:11434";
    std::string judge_model = "judge";
    std::string judge_api_key;  // secret

    std::uint32_t k = kDefaultTopK;
    PromptStrategy strategy = PromptStrategy::ZeroShot;
    JudgeWeights weights;
    std::uint64_t max_chunk_tokens = 256;
    std::uint64_t context_budget_tokens = 3072;
    double generation_timeout_s = 180.0;
    std::size_t judge_concurrency = 4;
    std::string log_level = "info";
};

// Unknown keys and wrongly typed values throw std::invalid_argument naming
// the key. Relative paths resolve against base_dir.
CliConfig parse_cli_config(const json& j, const std::filesystem::path& base_dir = {});
CliConfig load_cli_config(const std::filesystem::path& path);

// Every key with its resolved value; secrets show as "<set>" or "".
json describe_config(const CliConfig& cfg);

}  // namespace chartsum
