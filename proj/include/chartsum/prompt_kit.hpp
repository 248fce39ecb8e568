#pragma once

// Prompt templates for the five prompting strategies, and the parser that
// turns model output back into a SummaryBundle.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "chartsum/core.hpp"

namespace chartsum {

inline constexpr std::string_view kCriticalDelimiter = "CRITICAL FINDINGS:";
inline constexpr std::string_view kContextDelimiter = "CONTEXT SUMMARY:";
inline constexpr std::uint64_t kDefaultContextBudgetTokens = 3072;

class TemplateError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Exemplar {
    std::string input;
    std::string output;

    bool operator==(const Exemplar&) const = default;
};

// A template file looks like:
//
//   # comment
//   @strategy few_shot
//   @version 1
//   @exemplar
//   <input sketch>
//   @output
//   <ideal output>
//   @end
//   @template
//   <layout text up to end of file>
//
// The layout may use {{exemplars}}, {{context}}, {{complaint}} and
// {{format_instructions}}; anything else in double braces is rejected. The
// placeholders must appear in that order, the last three exactly once.
struct PromptTemplate {
    PromptStrategy strategy = PromptStrategy::ZeroShot;
    int version = 1;
    std::string layout;
    std::vector<Exemplar> exemplars;
    std::string format_instructions;

    // Layout text before the first placeholder.
    std::string preamble() const;
    // Layout text between {{complaint}} and {{format_instructions}}.
    std::string scaffold() const;
};

std::string default_format_instructions();

PromptTemplate parse_template(std::string_view text, std::string_view source = "<memory>");
PromptTemplate load_template(const std::filesystem::path& path);

class PromptLibrary {
public:
    // Templates compiled into the binary from templates/*.tmpl.
    static PromptLibrary builtin();
    // Loads <dir>/<strategy>.tmpl where present, built-ins otherwise.
    static PromptLibrary from_dir(const std::filesystem::path& dir);

    const PromptTemplate& get(PromptStrategy s) const;

private:
    std::map<PromptStrategy, PromptTemplate> templates_;
};

class ContextOverflow : public std::runtime_error {
public:
    ContextOverflow(std::uint64_t estimated, std::uint64_t budget)
        : std::runtime_error("prompt needs ~" + std::to_string(estimated) + " tokens, budget is " +
                             std::to_string(budget)),
          estimated_(estimated), budget_(budget) {}

    std::uint64_t estimated() const { return estimated_; }
    std::uint64_t budget() const { return budget_; }

private:
    std::uint64_t estimated_;
    std::uint64_t budget_;
};

struct RenderedPrompt {
    std::string text;
    std::uint64_t token_estimate = 0;
};

// Deterministic. Throws ContextOverflow instead of truncating.
RenderedPrompt render(const PromptTemplate& tpl, const RetrievedContext& ctx, const ChiefComplaint& complaint,
                      std::uint64_t budget_tokens = kDefaultContextBudgetTokens);

// Caller-side overflow policy: drops the lowest-scored hit and re-renders
// until the prompt fits. dropped receives the chunk ids removed. Throws
// ContextOverflow if even the empty-context prompt does not fit.
RenderedPrompt render_within_budget(const PromptTemplate& tpl, RetrievedContext ctx,
                                    const ChiefComplaint& complaint, std::uint64_t budget_tokens,
                                    std::vector<std::string>* dropped = nullptr);

class ParseFailure : public std::runtime_error {
public:
    enum class Kind { MissingDelimiter, TooFewBullets, EmptyContext };

    ParseFailure(Kind kind, std::size_t bullets, const std::string& what)
        : std::runtime_error(what), kind_(kind), bullets_(bullets) {}

    Kind kind() const { return kind_; }
    std::size_t bullets() const { return bullets_; }

private:
    Kind kind_;
    std::size_t bullets_;
};

// Finds the delimiters case-insensitively (the last CONTEXT SUMMARY and the
// last CRITICAL FINDINGS before it, so reasoning text may precede the
// answer). Bullets are lines starting with "- ", "* " or "N. "; the first
// three are kept. Only raw_llm_text, bullets, context and lint are filled.
SummaryBundle parse_summary(std::string_view raw);

// The exact two-part layout the format instructions request.
std::string serialize_as_instructed(const SummaryBundle& bundle);

// Follow-up prompt used for the single repair round after a ParseFailure.
std::string repair_prompt(std::string_view original_prompt, std::string_view raw_output, const ParseFailure& failure);

std::string collapse_whitespace(std::string_view s);

}  // namespace chartsum
