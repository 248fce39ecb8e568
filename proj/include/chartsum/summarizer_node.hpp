#pragma once

// Summarizer node: pulls context from a ContextSource, renders the prompt,
// calls the generator and parses the two-part answer.
//
// Jobs flow through a retrieval worker and a single generation worker. In
// dual mode the retrieval worker prefetches the next job's context while the
// current one is generating, and the first job triggers an empty-prompt warm
// probe so the model load overlaps the first retrieval. In single mode one
// worker runs retrieval and generation back to back.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "chartsum/core.hpp"
#include "chartsum/model_client.hpp"
#include "chartsum/prompt_kit.hpp"
#include "chartsum/retrieval_node.hpp"

namespace chartsum {

enum class JobState { Queued, Retrieving, Generating, Done, Failed };

std::string_view to_string(JobState s);
std::optional<JobState> parse_job_state(std::string_view name);
inline bool is_terminal(JobState s) { return s == JobState::Done || s == JobState::Failed; }

enum class FailureKind {
    RetrievalUnavailable,
    UnknownPatient,
    BadRequest,
    EmbedFailure,
    ModelUnavailable,
    GenerationTimeout,
    OutputUnparseable,
    ContextOverflow,
    Internal,
};

// "RETRIEVAL_UNAVAILABLE", "UNKNOWN_PATIENT", ...
std::string_view to_string(FailureKind k);
std::optional<FailureKind> parse_failure_kind(std::string_view name);

struct JobFailure {
    FailureKind kind = FailureKind::Internal;
    std::string message;

    bool operator==(const JobFailure&) const = default;
};

// Immutable view of a job handed to observers.
struct JobSnapshot {
    std::string job_id;
    ChiefComplaint complaint;
    PromptStrategy strategy = PromptStrategy::ZeroShot;
    JobState state = JobState::Queued;
    std::optional<SummaryBundle> bundle;
    std::optional<StageTimings> timings;  // set in terminal states
    std::optional<JobFailure> failure;
    std::vector<std::string> dropped_chunks;  // removed to fit the context budget

    bool operator==(const JobSnapshot&) const = default;
};

void to_json(json& j, const JobSnapshot& s);
void from_json(const json& j, JobSnapshot& s);

enum class NodeMode { Single, Dual };

struct SummarizerConfig {
    NodeMode mode = NodeMode::Dual;
    std::uint64_t context_budget_tokens = kDefaultContextBudgetTokens;
    bool warm_probe = true;  // dual mode only
    // Retrieved contexts allowed to wait for the generation worker.
    std::size_t prefetch_depth = 1;
};

// Thrown by summarize() for failed jobs.
class SummarizeError : public std::runtime_error {
public:
    explicit SummarizeError(JobFailure f) : std::runtime_error(f.message), failure_(std::move(f)) {}
    const JobFailure& failure() const { return failure_; }

private:
    JobFailure failure_;
};

struct JobRequest {
    ChiefComplaint complaint;
    PromptStrategy strategy = PromptStrategy::ZeroShot;
};

class SummarizerNode {
public:
    SummarizerNode(std::shared_ptr<ContextSource> source, std::shared_ptr<TextGenerator> generator,
                   PromptLibrary templates, SummarizerConfig cfg = {});
    ~SummarizerNode();

    SummarizerNode(const SummarizerNode&) = delete;
    SummarizerNode& operator=(const SummarizerNode&) = delete;

    std::string submit(ChiefComplaint complaint, PromptStrategy strategy);
    std::optional<JobSnapshot> snapshot(const std::string& job_id) const;
    // Blocks until the job is terminal.
    JobSnapshot wait(const std::string& job_id) const;

    // submit + wait; throws SummarizeError when the job fails.
    JobSnapshot summarize(const ChiefComplaint& complaint, PromptStrategy strategy);

    // Submits every job up front and returns terminal snapshots in submission
    // order. A failed job never stops the ones after it.
    std::vector<JobSnapshot> pipeline_run(const std::vector<JobRequest>& jobs);

    // Fails queued jobs and joins the workers. Idempotent.
    void shutdown();

    ContextSource& source() { return *source_; }
    TextGenerator& generator() { return *generator_; }
    const SummarizerConfig& config() const { return cfg_; }

private:
    using Clock = std::chrono::steady_clock;

    struct Work {
        std::string job_id;
        ChiefComplaint complaint;
        PromptStrategy strategy;
        Clock::time_point submitted;
        std::optional<FetchedContext> context;
        std::optional<JobFailure> failure;
    };

    void retrieval_loop();
    void generation_loop();
    void fetch(Work& w);
    void generate(Work& w, Clock::time_point slot_start);
    void set_state(const std::string& id, JobState s);
    void finish(const std::string& id, JobState s, std::optional<SummaryBundle> bundle, StageTimings t,
                std::optional<JobFailure> f, std::vector<std::string> dropped = {});

    std::shared_ptr<ContextSource> source_;
    std::shared_ptr<TextGenerator> generator_;
    PromptLibrary templates_;
    SummarizerConfig cfg_;

    mutable std::mutex mu_;
    mutable std::condition_variable cv_;
    std::map<std::string, JobSnapshot> jobs_;
    std::deque<Work> pending_;
    std::deque<Work> ready_;
    std::uint64_t next_job_ = 1;
    bool stopping_ = false;
    bool submitted_any_ = false;
    bool probed_ = false;
    std::optional<Clock::time_point> probe_end_;
    double probe_load_s_ = 0.0;  // attributed to the next job that generates
    std::optional<Clock::time_point> prev_done_;
    bool first_generation_done_ = false;

    std::thread retrieval_worker_;
    std::thread generation_worker_;
};

struct NodeHealth {
    bool retrieval_ok = false;
    bool model_ok = false;
    std::string retrieval_detail;
    std::string model_detail;

    bool ok() const { return retrieval_ok && model_ok; }
};

NodeHealth check_health(ContextSource& source, TextGenerator& generator);

}  // namespace chartsum
