// bench and report.

#include <iostream>

#include <spdlog/spdlog.h>

#include "chartsum/bench.hpp"
#include "chartsum/evaluation.hpp"
#include "cli.hpp"

namespace chartsum::cli {

namespace {

struct BenchOpts {
    std::string scenario;
    std::optional<std::uint32_t> runs;
    std::optional<std::string> mode;
    std::string format = "table";
    std::optional<std::string> out;
};

int run_bench_cmd(Globals& g, const BenchOpts& o) {
    auto s = load_scenario(o.scenario);
    if (o.runs) s.runs = *o.runs;
    if (o.mode) {
        if (*o.mode == "single") s.modes = {BenchMode::Single};
        else if (*o.mode == "dual") s.modes = {BenchMode::Dual};
        else s.modes = {BenchMode::Single, BenchMode::Dual};
    }
    BenchResult r;
    try {
        r = run_bench(s);
    } catch (const std::runtime_error& e) {
        throw CommandError(ExitCode::ModelUnavailable, std::string("backend unavailable: ") + e.what());
    }
    if (r.timings.empty()) throw CommandError(ExitCode::Failure, "no run completed");
    const auto doc = emit_report(r.timings, o.format == "csv" ? ReportFormat::Csv : ReportFormat::Table);
    if (o.out) write_file(*o.out, doc);
    if (g.json_lines) {
        for (const auto& t : r.timings) emit_json_line(t);
        json summary{{"mock_stats", r.mock_stats}, {"warnings", r.warnings}};
        if (const auto ratio = savings_ratio(r.timings)) summary["savings_ratio"] = *ratio;
        emit_json_line(summary);
    } else {
        std::cout << doc;
        for (const auto& [mode, st] : r.mock_stats) {
            std::cout << "mock model server (" << mode << "): " << st.loads << " load(s), " << st.generate_calls
                      << " generate call(s), max concurrent " << st.max_concurrent_generate << '\n';
        }
    }
    return 0;
}

struct ReportOpts {
    std::vector<std::string> files;
    std::optional<std::string> manifest;
    std::string format = "table";
    std::optional<std::string> out;
};

int run_report(Globals& g, const ReportOpts& o) {
    if (o.files.empty() == !o.manifest) throw CommandError(ExitCode::Usage, "give judge report files or --manifest");
    std::vector<AggregateRow> rows;
    if (o.manifest) {
        const auto m = load_manifest(*o.manifest);
        const auto result = run_evaluation(m);
        if (o.out) {
            std::string lines;
            for (const auto& r : result.reports) lines += json(r).dump() + "\n";
            write_file(*o.out, lines);
        }
        if (result.rows.empty()) throw CommandError(ExitCode::JudgeFailure, "no summary could be judged");
        rows = result.rows;
    } else {
        std::vector<RunResult> runs;
        for (const auto& f : o.files) {
            JudgeReport report;
            try {
                report = json::parse(read_file(f)).get<JudgeReport>();
            } catch (const std::exception& e) {
                throw CommandError(ExitCode::InputError, f + ": " + e.what());
            }
            for (auto& r : run_results(report)) runs.push_back(std::move(r));
        }
        rows = aggregate(runs);
    }
    if (g.json_lines) {
        for (const auto& r : rows) {
            emit_json_line(json{{"model", r.model},
                                {"strategy", r.strategy},
                                {"part", to_string(r.part)},
                                {"summaries", r.summaries},
                                {"fa", r.fa},
                                {"csr", r.csr},
                                {"cr", r.cr},
                                {"ur", r.ur},
                                {"co", r.co},
                                {"cl", r.cl},
                                {"average", r.average()}});
        }
    } else {
        std::cout << (o.format == "csv" ? emit_judge_csv(rows) : emit_judge_table(rows));
    }
    return 0;
}

}  // namespace

void add_bench(CLI::App& app, Globals& g) {
    auto o = std::make_shared<BenchOpts>();
    auto* sub = app.add_subcommand("bench", "Single vs dual node latency breakdown.");
    sub->add_option("--scenario", o->scenario, "Scenario JSON file")->required();
    sub->add_option("--runs", o->runs, "Runs per mode (overrides the scenario)")->check(CLI::PositiveNumber);
    sub->add_option("--mode", o->mode, "single, dual or both (overrides the scenario)")
        ->check(CLI::IsMember({"single", "dual", "both"}));
    sub->add_option("--format", o->format, "table or csv")->check(CLI::IsMember({"table", "csv"}))->capture_default_str();
    sub->add_option("--out", o->out, "Also write the report here");
    sub->callback([&g, o] { g.run = [&g, o] { return run_bench_cmd(g, *o); }; });
}

void add_report(CLI::App& app, Globals& g) {
    auto o = std::make_shared<ReportOpts>();
    auto* sub = app.add_subcommand("report", "Aggregate judge reports into FA (CSR|CR|UR), CO, CL rows.");
    sub->add_option("files", o->files, "Judge report JSON files");
    sub->add_option("--manifest", o->manifest, "Run a full evaluation manifest instead");
    sub->add_option("--format", o->format, "table or csv")->check(CLI::IsMember({"table", "csv"}))->capture_default_str();
    sub->add_option("--out", o->out, "With --manifest: write every judge report here as JSON lines");
    sub->callback([&g, o] { g.run = [&g, o] { return run_report(g, *o); }; });
}

}  // namespace chartsum::cli
