#include "chartsum/summarizer_node.hpp"

#include <algorithm>
#include <cstdio>

#include <spdlog/spdlog.h>

namespace chartsum {

namespace {

constexpr std::pair<JobState, std::string_view> kStateNames[] = {
    {JobState::Queued, "queued"},   {JobState::Retrieving, "retrieving"}, {JobState::Generating, "generating"},
    {JobState::Done, "done"},       {JobState::Failed, "failed"},
};

constexpr std::pair<FailureKind, std::string_view> kFailureNames[] = {
    {FailureKind::RetrievalUnavailable, "RETRIEVAL_UNAVAILABLE"},
    {FailureKind::UnknownPatient, "UNKNOWN_PATIENT"},
    {FailureKind::BadRequest, "BAD_REQUEST"},
    {FailureKind::EmbedFailure, "EMBED_FAILURE"},
    {FailureKind::ModelUnavailable, "MODEL_UNAVAILABLE"},
    {FailureKind::GenerationTimeout, "GENERATION_TIMEOUT"},
    {FailureKind::OutputUnparseable, "OUTPUT_UNPARSEABLE"},
    {FailureKind::ContextOverflow, "CONTEXT_OVERFLOW"},
    {FailureKind::Internal, "INTERNAL"},
};

double seconds(std::chrono::steady_clock::duration d) { return std::chrono::duration<double>(d).count(); }

JobFailure failure_from(const RetrievalError& e) {
    switch (e.kind()) {
        case RetrievalError::Kind::Unavailable:
        case RetrievalError::Kind::Timeout: return {FailureKind::RetrievalUnavailable, e.what()};
        case RetrievalError::Kind::UnknownPatient: return {FailureKind::UnknownPatient, e.what()};
        case RetrievalError::Kind::BadRequest: return {FailureKind::BadRequest, e.what()};
        case RetrievalError::Kind::EmbedFailure: return {FailureKind::EmbedFailure, e.what()};
        case RetrievalError::Kind::Internal:
        case RetrievalError::Kind::Protocol: return {FailureKind::Internal, e.what()};
    }
    return {FailureKind::Internal, e.what()};
}

JobFailure failure_from(const GenerationError& e) {
    if (e.kind() == GenerationError::Kind::Timeout) return {FailureKind::GenerationTimeout, e.what()};
    return {FailureKind::ModelUnavailable, e.what()};
}

}  // namespace

std::string_view to_string(JobState s) {
    for (const auto& [v, n] : kStateNames)
        if (v == s) return n;
    return "?";
}

std::optional<JobState> parse_job_state(std::string_view name) {
    for (const auto& [v, n] : kStateNames)
        if (n == name) return v;
    return std::nullopt;
}

std::string_view to_string(FailureKind k) {
    for (const auto& [v, n] : kFailureNames)
        if (v == k) return n;
    return "INTERNAL";
}

std::optional<FailureKind> parse_failure_kind(std::string_view name) {
    for (const auto& [v, n] : kFailureNames)
        if (n == name) return v;
    return std::nullopt;
}

void to_json(json& j, const JobSnapshot& s) {
    j = json{{"job_id", s.job_id},
             {"state", to_string(s.state)},
             {"complaint", s.complaint},
             {"strategy", s.strategy},
             {"bundle", nullptr},
             {"timings", nullptr},
             {"error", nullptr},
             {"dropped_chunks", s.dropped_chunks}};
    if (s.bundle) j["bundle"] = *s.bundle;
    if (s.timings) j["timings"] = *s.timings;
    if (s.failure) j["error"] = json{{"code", to_string(s.failure->kind)}, {"message", s.failure->message}};
}

void from_json(const json& j, JobSnapshot& s) {
    s = JobSnapshot{};
    s.job_id = j.at("job_id").get<std::string>();
    const auto state = parse_job_state(j.at("state").get<std::string>());
    if (!state) throw std::invalid_argument("unknown job state");
    s.state = *state;
    s.complaint = j.at("complaint").get<ChiefComplaint>();
    s.strategy = j.at("strategy").get<PromptStrategy>();
    if (const auto& b = j.at("bundle"); !b.is_null()) s.bundle = b.get<SummaryBundle>();
    if (const auto& t = j.at("timings"); !t.is_null()) s.timings = t.get<StageTimings>();
    if (const auto& e = j.at("error"); !e.is_null()) {
        const auto kind = parse_failure_kind(e.at("code").get<std::string>());
        s.failure = JobFailure{kind.value_or(FailureKind::Internal), e.at("message").get<std::string>()};
    }
    s.dropped_chunks = j.value("dropped_chunks", std::vector<std::string>{});
}

SummarizerNode::SummarizerNode(std::shared_ptr<ContextSource> source, std::shared_ptr<TextGenerator> generator,
                               PromptLibrary templates, SummarizerConfig cfg)
    : source_(std::move(source)), generator_(std::move(generator)), templates_(std::move(templates)), cfg_(cfg) {
    if (!source_ || !generator_) throw std::invalid_argument("summarizer needs a context source and a generator");
    if (cfg_.prefetch_depth == 0) cfg_.prefetch_depth = 1;
    if (cfg_.mode == NodeMode::Dual) retrieval_worker_ = std::thread([this] { retrieval_loop(); });
    generation_worker_ = std::thread([this] { generation_loop(); });
}

SummarizerNode::~SummarizerNode() { shutdown(); }

void SummarizerNode::shutdown() {
    std::vector<std::string> abandoned;
    {
        std::lock_guard lock(mu_);
        if (stopping_) return;
        stopping_ = true;
    }
    cv_.notify_all();
    if (retrieval_worker_.joinable()) retrieval_worker_.join();
    if (generation_worker_.joinable()) generation_worker_.join();
    std::lock_guard lock(mu_);
    for (auto& [id, job] : jobs_) {
        if (!is_terminal(job.state)) {
            job.state = JobState::Failed;
            job.failure = JobFailure{FailureKind::Internal, "summarizer shut down before the job ran"};
            job.timings = StageTimings{};
        }
    }
    pending_.clear();
    ready_.clear();
    cv_.notify_all();
}

std::string SummarizerNode::submit(ChiefComplaint complaint, PromptStrategy strategy) {
    std::string id;
    {
        std::lock_guard lock(mu_);
        if (stopping_) throw std::runtime_error("summarizer is shutting down");
        char buf[32];
        std::snprintf(buf, sizeof buf, "job-%06llu", static_cast<unsigned long long>(next_job_++));
        id = buf;
        JobSnapshot snap;
        snap.job_id = id;
        snap.complaint = complaint;
        snap.strategy = strategy;
        jobs_.emplace(id, std::move(snap));
        pending_.push_back(Work{id, std::move(complaint), strategy, Clock::now(), std::nullopt, std::nullopt});
        submitted_any_ = true;
    }
    cv_.notify_all();
    return id;
}

std::optional<JobSnapshot> SummarizerNode::snapshot(const std::string& job_id) const {
    std::lock_guard lock(mu_);
    const auto it = jobs_.find(job_id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
}

JobSnapshot SummarizerNode::wait(const std::string& job_id) const {
    std::unique_lock lock(mu_);
    const auto it = jobs_.find(job_id);
    if (it == jobs_.end()) throw std::invalid_argument("unknown job " + job_id);
    cv_.wait(lock, [&] { return is_terminal(it->second.state); });
    return it->second;
}

JobSnapshot SummarizerNode::summarize(const ChiefComplaint& complaint, PromptStrategy strategy) {
    auto snap = wait(submit(complaint, strategy));
    if (snap.state == JobState::Failed) throw SummarizeError(snap.failure.value_or(JobFailure{}));
    return snap;
}

std::vector<JobSnapshot> SummarizerNode::pipeline_run(const std::vector<JobRequest>& jobs) {
    if (jobs.empty()) throw std::invalid_argument("pipeline_run needs at least one job");
    std::vector<std::string> ids;
    ids.reserve(jobs.size());
    for (const auto& j : jobs) ids.push_back(submit(j.complaint, j.strategy));
    std::vector<JobSnapshot> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(wait(id));
    return out;
}

void SummarizerNode::set_state(const std::string& id, JobState s) {
    {
        std::lock_guard lock(mu_);
        auto& job = jobs_.at(id);
        // Transitions only move forward.
        if (static_cast<int>(s) < static_cast<int>(job.state)) {
            throw std::logic_error("job state moved backwards");
        }
        job.state = s;
    }
    cv_.notify_all();
}

void SummarizerNode::finish(const std::string& id, JobState s, std::optional<SummaryBundle> bundle, StageTimings t,
                            std::optional<JobFailure> f, std::vector<std::string> dropped) {
    {
        std::lock_guard lock(mu_);
        auto& job = jobs_.at(id);
        job.state = s;
        job.bundle = std::move(bundle);
        job.timings = t;
        job.failure = std::move(f);
        job.dropped_chunks = std::move(dropped);
    }
    cv_.notify_all();
}

void SummarizerNode::fetch(Work& w) {
    set_state(w.job_id, JobState::Retrieving);
    try {
        w.context = source_->fetch(w.complaint);
    } catch (const RetrievalError& e) {
        w.failure = failure_from(e);
    } catch (const std::exception& e) {
        w.failure = JobFailure{FailureKind::Internal, e.what()};
    }
}

void SummarizerNode::retrieval_loop() {
    for (;;) {
        Work w;
        {
            std::unique_lock lock(mu_);
            cv_.wait(lock, [&] { return stopping_ || (!pending_.empty() && ready_.size() < cfg_.prefetch_depth); });
            if (stopping_) return;
            w = std::move(pending_.front());
            pending_.pop_front();
        }
        fetch(w);
        {
            std::lock_guard lock(mu_);
            ready_.push_back(std::move(w));
        }
        cv_.notify_all();
    }
}

void SummarizerNode::generation_loop() {
    const bool dual = cfg_.mode == NodeMode::Dual;
    for (;;) {
        Work w;
        bool probe = false;
        {
            std::unique_lock lock(mu_);
            auto& queue = dual ? ready_ : pending_;
            cv_.wait(lock, [&] {
                return stopping_ || !queue.empty() || (dual && cfg_.warm_probe && !probed_ && submitted_any_);
            });
            if (stopping_) return;
            if (dual && cfg_.warm_probe && !probed_ && submitted_any_) {
                probed_ = true;
                probe = true;
            } else {
                w = std::move(queue.front());
                queue.pop_front();
            }
        }
        cv_.notify_all();

        if (probe) {
            // Load the model while the first retrieval is in flight.
            double load = 0.0;
            const auto t0 = Clock::now();
            try {
                const auto r = generator_->warm();
                load = r.load_s > 0 ? r.load_s : 0.0;
            } catch (const std::exception& e) {
                spdlog::warn("warm probe failed: {}", e.what());
            }
            std::lock_guard lock(mu_);
            probe_end_ = Clock::now();
            probe_load_s_ = load;
            spdlog::debug("warm probe took {:.3f} s (server load {:.3f} s)", seconds(*probe_end_ - t0), load);
            continue;
        }

        Clock::time_point slot_start;
        {
            std::lock_guard lock(mu_);
            slot_start = prev_done_ ? std::max(w.submitted, *prev_done_) : w.submitted;
        }
        if (!dual) {
            slot_start = Clock::now();
            fetch(w);
        }
        generate(w, slot_start);
    }
}

void SummarizerNode::generate(Work& w, Clock::time_point slot_start) {
    const bool dual = cfg_.mode == NodeMode::Dual;
    StageTimings t;
    double probe_load = 0.0;
    std::optional<Clock::time_point> probe_end;
    {
        std::lock_guard lock(mu_);
        t.mode = !dual ? TimingMode::SingleNode
                       : (first_generation_done_ ? TimingMode::DualSubsequentRun : TimingMode::DualFirstRun);
        probe_load = probe_load_s_;
        probe_load_s_ = 0.0;
        probe_end = probe_end_;
    }
    if (w.context) t.retrieval_s = w.context->round_trip_s;

    const auto close = [&](JobState s, std::optional<SummaryBundle> bundle, std::optional<JobFailure> f,
                           double gen_wall, double server_load, Clock::time_point gen_start,
                           std::vector<std::string> dropped) {
        const auto done = Clock::now();
        t.model_load_s = probe_load + server_load;
        t.total_s = seconds(done - slot_start);
        if (dual) {
            t.summarization_s = std::max(0.0, gen_wall - server_load);
            const auto ready_at = probe_end ? std::max(slot_start, *probe_end) : slot_start;
            t.retrieval_critical_s = std::max(0.0, seconds(gen_start - ready_at));
        } else {
            // Everything after retrieval and load counts as summarization, so
            // the three stages add up to the total exactly.
            t.summarization_s = std::max(0.0, t.total_s - t.retrieval_s - t.model_load_s);
            t.retrieval_critical_s = t.retrieval_s;
        }
        {
            std::lock_guard lock(mu_);
            prev_done_ = done;
            first_generation_done_ = true;
        }
        finish(w.job_id, s, std::move(bundle), t, std::move(f), std::move(dropped));
    };

    const auto gen_start = Clock::now();
    if (w.failure || !w.context) {
        close(JobState::Failed, std::nullopt, w.failure.value_or(JobFailure{FailureKind::Internal, "no context"}), 0.0,
              0.0, gen_start, {});
        return;
    }
    set_state(w.job_id, JobState::Generating);

    double gen_wall = 0.0;
    double server_load = 0.0;
    std::vector<std::string> dropped;
    try {
        const auto& tpl = templates_.get(w.strategy);
        const auto prompt =
            render_within_budget(tpl, w.context->context, w.complaint, cfg_.context_budget_tokens, &dropped);
        if (!dropped.empty()) spdlog::warn("{}: dropped {} chunk(s) to fit the context budget", w.job_id, dropped.size());

        auto r = generator_->generate(prompt.text);
        gen_wall += r.wall_s;
        server_load += r.load_s;
        SummaryBundle bundle;
        try {
            bundle = parse_summary(r.text);
        } catch (const ParseFailure& pf) {
            spdlog::info("{}: output did not parse ({}), asking for a reformat", w.job_id, pf.what());
            auto r2 = generator_->generate(repair_prompt(prompt.text, r.text, pf));
            gen_wall += r2.wall_s;
            server_load += r2.load_s;
            try {
                bundle = parse_summary(r2.text);
            } catch (const ParseFailure& pf2) {
                close(JobState::Failed, std::nullopt,
                      JobFailure{FailureKind::OutputUnparseable, std::string("output unparseable after repair: ") + pf2.what()},
                      gen_wall, server_load, gen_start, std::move(dropped));
                return;
            }
        }
        bundle.strategy = w.strategy;
        bundle.model_name = generator_->model_name();
        bundle.generation_wall_ms = gen_wall * 1000.0;
        close(JobState::Done, std::move(bundle), std::nullopt, gen_wall, server_load, gen_start, std::move(dropped));
    } catch (const GenerationError& e) {
        close(JobState::Failed, std::nullopt, failure_from(e), gen_wall, server_load, gen_start, std::move(dropped));
    } catch (const ContextOverflow& e) {
        close(JobState::Failed, std::nullopt, JobFailure{FailureKind::ContextOverflow, e.what()}, gen_wall, server_load,
              gen_start, std::move(dropped));
    } catch (const std::exception& e) {
        close(JobState::Failed, std::nullopt, JobFailure{FailureKind::Internal, e.what()}, gen_wall, server_load,
              gen_start, std::move(dropped));
    }
}

NodeHealth check_health(ContextSource& source, TextGenerator& generator) {
    NodeHealth h;
    try {
        const auto ids = source.patients();
        h.retrieval_ok = true;
        h.retrieval_detail = std::to_string(ids.size()) + " patient index(es)";
    } catch (const std::exception& e) {
        h.retrieval_detail = e.what();
    }
    h.model_ok = generator.reachable();
    h.model_detail = h.model_ok ? "reachable" : "unreachable";
    return h;
}

}  // namespace chartsum
