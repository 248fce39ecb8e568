// chartsum: offline chart summarization, evaluation and benchmarking.

#include <cstdio>
#include <cstdlib>
#include <iostream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "chartsum/records.hpp"
#include "cli.hpp"

namespace {

using namespace chartsum;
using namespace chartsum::cli;

void setup_logging(const std::string& level) {
    const bool no_color = std::getenv("NO_COLOR") != nullptr;
    std::shared_ptr<spdlog::logger> logger;
    if (no_color) {
        logger = std::make_shared<spdlog::logger>("chartsum", std::make_shared<spdlog::sinks::stderr_sink_mt>());
    } else {
        logger = std::make_shared<spdlog::logger>("chartsum", std::make_shared<spdlog::sinks::stderr_color_sink_mt>());
    }
    logger->set_pattern("%H:%M:%S.%e %^%l%$ %v");
    const auto lvl = spdlog::level::from_str(level);
    if (lvl == spdlog::level::off && level != "off") throw CommandError(ExitCode::Usage, "unknown log level '" + level + "'");
    logger->set_level(lvl);
    spdlog::set_default_logger(logger);
}

std::string escape_cell(std::string s) {
    std::string out;
    for (char c : s) {
        if (c == '|') out += "\\|";
        else if (c == '\n') out += ' ';
        else out += c;
    }
    return out;
}

void dump_options(std::string& out, const CLI::App& app) {
    out += "| Flag | Description | Default |\n|---|---|---|\n";
    for (const auto* opt : app.get_options()) {
        if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
        std::string name = opt->get_name(false, true);
        out += "| `" + escape_cell(name) + "` | " + escape_cell(opt->get_description()) + " | " +
               escape_cell(opt->get_default_str()) + " |\n";
    }
}

std::string reference(const CLI::App& app) {
    std::string out = "# chartsum command reference\n\nGenerated by `chartsum --dump-reference`; do not edit by hand.\n\n";
    out += "## Global options\n\n";
    dump_options(out, app);
    for (const auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
        out += "\n## " + sub->get_name() + "\n\n" + sub->get_description() + "\n\n";
        dump_options(out, *sub);
    }
    out += "\n## Config file keys\n\nPassed with `--config FILE` (JSON). Unknown keys are rejected.\n\n"
           "| Key | Default |\n|---|---|\n";
    const json defaults = describe_config(CliConfig{});
    for (const auto& [k, v] : defaults.items()) out += "| `" + k + "` | `" + v.dump() + "` |\n";
    out += "\n## Exit codes\n\n| Code | Meaning |\n|---|---|\n"
           "| 0 | success |\n| 1 | other failure |\n| 2 | usage error or bad request |\n"
           "| 3 | unknown patient |\n| 4 | retrieval node unavailable |\n| 5 | model server unavailable |\n"
           "| 6 | generation timed out |\n| 7 | model output unparseable after the repair round |\n"
           "| 8 | malformed input file |\n| 9 | judge failure (unavailable or schema violation) |\n"
           "| 10 | summary yielded zero claims |\n| 11 | index file missing fields, corrupt or wrong version |\n";
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Offline patient-chart summarization: ingest, serve, summarize, judge, bench."};
    app.name("chartsum");
    Globals g;
    bool dump_reference = false;
    app.add_option("--config", g.config_path, "JSON config file");
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off (default: config, then info)");
    app.add_flag("--json-lines", g.json_lines, "Machine-readable output: one JSON object per line on stdout");
    app.add_flag("--dump-reference", dump_reference, "Print this reference as Markdown and exit");
    app.require_subcommand(0, 1);

    add_ingest(app, g);
    add_serve_retriever(app, g);
    add_serve_summarizer(app, g);
    add_summarize(app, g);
    add_judge(app, g);
    add_bench(app, g);
    add_report(app, g);
    add_mock_model_server(app, g);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ExitCode::Usage);
    }
    if (dump_reference) {
        std::cout << reference(app);
        return 0;
    }
    if (!g.run) {
        std::cerr << app.help();
        return static_cast<int>(ExitCode::Usage);
    }

    try {
        if (!g.config_path.empty()) g.cfg = load_cli_config(g.config_path);
        setup_logging(g.log_level.empty() ? g.cfg.log_level : g.log_level);
        auto shown = describe_config(g.cfg);
        if (!g.config_path.empty()) shown["config_file"] = g.config_path;
        spdlog::info("config {}", shown.dump());
        return g.run();
    } catch (const CommandError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return static_cast<int>(e.code());
    } catch (const RecordError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return static_cast<int>(ExitCode::InputError);
    } catch (const IndexError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return static_cast<int>(ExitCode::IndexError);
    } catch (const JudgeError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return static_cast<int>(exit_code_for(e.kind()));
    } catch (const SummarizeError& e) {
        std::fprintf(stderr, "error: %s: %s\n", std::string(to_string(e.failure().kind)).c_str(), e.what());
        return static_cast<int>(exit_code_for(e.failure().kind));
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return static_cast<int>(ExitCode::Usage);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return static_cast<int>(ExitCode::Failure);
    }
}
