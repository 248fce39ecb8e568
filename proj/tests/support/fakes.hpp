#pragma once

// Test doubles with wall-clock latencies.

#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>

#include "chartsum/model_client.hpp"
#include "chartsum/retrieval_node.hpp"

namespace fakes {

using namespace chartsum;

inline void sleep_s(double s) {
    if (s > 0) std::this_thread::sleep_for(std::chrono::duration<double>(s));
}

// Serves a fixed context for any patient except "P404", after a delay.
class SlowSource final : public ContextSource {
public:
    explicit SlowSource(double latency_s = 0.0, std::size_t hits = 3) : latency_s_(latency_s), hits_(hits) {}

    FetchedContext fetch(const ChiefComplaint& complaint) override {
        const auto t0 = std::chrono::steady_clock::now();
        ++calls;
        sleep_s(latency_s_);
        if (complaint.patient_id == "P404") {
            throw RetrievalError(RetrievalError::Kind::UnknownPatient, "no index for P404");
        }
        if (complaint.patient_id == "DOWN") throw RetrievalError(RetrievalError::Kind::Unavailable, "node down");
        RetrievedContext ctx;
        ctx.complaint = complaint;
        for (std::size_t i = 0; i < hits_; ++i) {
            ChartChunk c;
            c.chunk_id = "n1#" + std::to_string(i);
            c.note_id = "n1";
            c.ordinal = static_cast<std::uint32_t>(i);
            c.text = "Chart fact number " + std::to_string(i) + " about " + complaint.complaint + ".";
            ctx.hits.push_back({c, 1.0 - 0.01 * static_cast<double>(i)});
        }
        const auto wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return {ctx, wall};
    }

    std::vector<std::string> patients() override { return {"P001"}; }

    std::atomic<int> calls{0};

private:
    double latency_s_;
    std::size_t hits_;
};

inline const char* kGoodAnswer =
    "CRITICAL FINDINGS:\n- First fact\n- Second fact\n- Third fact\n\nCONTEXT SUMMARY:\nShort paragraph.\n";

// Sleeps generate_s per call and reports load_s on the first call (or the
// warm probe) like a server with a cold model.
class SlowGenerator final : public TextGenerator {
public:
    SlowGenerator(double load_s, double generate_s, std::string answer = kGoodAnswer)
        : load_s_(load_s), generate_s_(generate_s), answer_(std::move(answer)) {}

    GenerationResult generate(const std::string& prompt) override {
        const auto t0 = std::chrono::steady_clock::now();
        const int now = ++in_flight;
        int prev = max_in_flight.load();
        while (now > prev && !max_in_flight.compare_exchange_weak(prev, now)) {
        }
        GenerationResult r;
        r.load_s = load_once();
        sleep_s(generate_s_);
        ++calls;
        {
            std::lock_guard lock(mu_);
            last_prompt = prompt;
        }
        r.text = prompt.find("YOUR PREVIOUS RESPONSE") != std::string::npos && !repair_answer.empty() ? repair_answer
                                                                                                      : answer_;
        r.eval_s = generate_s_;
        --in_flight;
        r.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return r;
    }

    GenerationResult warm() override {
        const auto t0 = std::chrono::steady_clock::now();
        ++warms;
        GenerationResult r;
        r.load_s = load_once();
        r.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return r;
    }

    bool reachable() override { return up; }
    std::string model_name() const override { return "slow"; }

    std::atomic<int> calls{0};
    std::atomic<int> warms{0};
    std::atomic<int> in_flight{0};
    std::atomic<int> max_in_flight{0};
    std::atomic<bool> up{true};
    std::string repair_answer;
    std::string last_prompt;

private:
    double load_once() {
        std::lock_guard lock(mu_);
        if (loaded_) return 0.0;
        sleep_s(load_s_);
        loaded_ = true;
        return load_s_;
    }

    double load_s_;
    double generate_s_;
    std::string answer_;
    std::mutex mu_;
    bool loaded_ = false;
};

}  // namespace fakes
