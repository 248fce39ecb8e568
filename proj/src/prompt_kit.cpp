#include "chartsum/prompt_kit.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <sstream>
#include <utility>

namespace chartsum {

namespace {

constexpr std::array<std::pair<std::string_view, std::string_view>, 5> kBuiltinTemplates{{
#include "builtin_templates.inc"
}};

constexpr std::array<std::string_view, 4> kPlaceholders{"exemplars", "context", "complaint", "format_instructions"};

struct Placeholder {
    std::string name;
    std::size_t begin;
    std::size_t end;
};

std::vector<Placeholder> scan_placeholders(std::string_view text) {
    std::vector<Placeholder> out;
    std::size_t pos = 0;
    while ((pos = text.find("{{", pos)) != std::string_view::npos) {
        const auto close = text.find("}}", pos + 2);
        if (close == std::string_view::npos) break;
        out.push_back({std::string(text.substr(pos + 2, close - pos - 2)), pos, close + 2});
        pos = close + 2;
    }
    return out;
}

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
    return n;
}

std::string strip_trailing_newlines(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

void validate_template(const PromptTemplate& tpl, std::string_view source) {
    const auto fail = [&](const std::string& why) {
        throw TemplateError(std::string(source) + ": " + why);
    };
    std::map<std::string, std::vector<std::size_t>> seen;
    for (const auto& p : scan_placeholders(tpl.layout)) {
        if (std::find(kPlaceholders.begin(), kPlaceholders.end(), p.name) == kPlaceholders.end()) {
            fail("unknown placeholder {{" + p.name + "}}");
        }
        seen[p.name].push_back(p.begin);
    }
    for (std::string_view required : {"context", "complaint", "format_instructions"}) {
        const auto it = seen.find(std::string(required));
        if (it == seen.end() || it->second.size() != 1) {
            fail("placeholder {{" + std::string(required) + "}} must appear exactly once");
        }
    }
    const auto at = [&](const char* n) { return seen.at(n).front(); };
    if (!(at("context") < at("complaint") && at("complaint") < at("format_instructions"))) {
        fail("placeholders must be ordered context, complaint, format_instructions");
    }
    if (const auto it = seen.find("exemplars"); it != seen.end()) {
        if (it->second.size() != 1 || it->second.front() > at("context")) {
            fail("{{exemplars}} must appear once, before {{context}}");
        }
    }
    const bool few_shot = tpl.strategy == PromptStrategy::FewShot;
    if (few_shot && (tpl.exemplars.empty() || tpl.exemplars.size() > 3)) fail("few_shot needs 1 to 3 exemplars");
    if (few_shot && !seen.contains("exemplars")) fail("few_shot layout needs {{exemplars}}");
    if (!few_shot && !tpl.exemplars.empty()) fail("only few_shot templates may carry exemplars");
    if (count_occurrences(tpl.format_instructions, kCriticalDelimiter) != 1 ||
        count_occurrences(tpl.format_instructions, kContextDelimiter) != 1) {
        fail("format instructions must contain each output delimiter exactly once");
    }
}

std::string header_label(const std::optional<std::string>& header) {
    if (!header) return {};
    std::string h(trim(*header));
    while (!h.empty() && h.back() == ':') h.pop_back();
    return std::string(trim(h));
}

std::string render_context(const RetrievedContext& ctx) {
    if (ctx.hits.empty()) return "(no relevant sections found in the chart)";
    std::string out;
    for (std::size_t i = 0; i < ctx.hits.size(); ++i) {
        const auto& chunk = ctx.hits[i].chunk;
        if (i > 0) out += "\n\n";
        out += "SECTION " + std::to_string(i + 1);
        if (const auto label = header_label(chunk.header); !label.empty()) out += " [" + label + "]";
        out += ":\n";
        out += trim(chunk.text);
    }
    return out;
}

std::string render_exemplars(const std::vector<Exemplar>& exemplars) {
    std::string out;
    for (std::size_t i = 0; i < exemplars.size(); ++i) {
        if (i > 0) out += "\n\n";
        out += "EXAMPLE " + std::to_string(i + 1) + "\nChart excerpts:\n" + exemplars[i].input +
               "\nIdeal answer:\n" + exemplars[i].output;
    }
    return out;
}

bool is_bullet_line(std::string_view line, std::string_view& rest) {
    const auto t = trim(line);
    if (t.size() >= 2 && (t[0] == '-' || t[0] == '*') && (t[1] == ' ' || t[1] == '\t')) {
        rest = trim(t.substr(2));
        return true;
    }
    if (t.starts_with("\xE2\x80\xA2")) {  // U+2022 bullet
        rest = trim(t.substr(3));
        return true;
    }
    std::size_t i = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
    if (i > 0 && i + 1 < t.size() && (t[i] == '.' || t[i] == ')') && (t[i + 1] == ' ' || t[i + 1] == '\t')) {
        rest = trim(t.substr(i + 2));
        return true;
    }
    return false;
}

std::vector<std::string_view> split_lines(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto nl = s.find('\n', start);
        if (nl == std::string_view::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, nl - start));
        start = nl + 1;
    }
    return out;
}

}  // namespace

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    bool pending = false;
    for (char c : trim(s)) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending = true;
            continue;
        }
        if (pending && !out.empty()) out += ' ';
        pending = false;
        out += c;
    }
    return out;
}

std::string default_format_instructions() {
    return "Answer in exactly this layout and add nothing after it:\n"
           "\n"
           "CRITICAL FINDINGS:\n"
           "- <first finding>\n"
           "- <second finding>\n"
           "- <third finding>\n"
           "\n"
           "CONTEXT SUMMARY:\n"
           "<one paragraph>\n"
           "\n"
           "The findings list has exactly three bullet lines naming the ongoing or recurring problems the "
           "physician must know about regardless of the complaint. The paragraph is tailored to the chief "
           "complaint and covers age and sex, current medications and allergies, active conditions, recent "
           "encounters, prior surgeries, and anything uncertain or missing from the chart. Do not use bullets "
           "in the paragraph.";
}

std::string PromptTemplate::preamble() const {
    const auto ph = scan_placeholders(layout);
    return std::string(trim(std::string_view(layout).substr(0, ph.empty() ? layout.size() : ph.front().begin)));
}

std::string PromptTemplate::scaffold() const {
    std::size_t after_complaint = std::string::npos;
    std::size_t before_format = std::string::npos;
    for (const auto& p : scan_placeholders(layout)) {
        if (p.name == "complaint") after_complaint = p.end;
        if (p.name == "format_instructions") before_format = p.begin;
    }
    if (after_complaint == std::string::npos || before_format == std::string::npos || before_format < after_complaint) {
        return {};
    }
    return std::string(trim(std::string_view(layout).substr(after_complaint, before_format - after_complaint)));
}

PromptTemplate parse_template(std::string_view text, std::string_view source) {
    PromptTemplate tpl;
    tpl.format_instructions = default_format_instructions();
    bool have_strategy = false;

    enum class Mode { Header, ExemplarInput, ExemplarOutput, Layout };
    Mode mode = Mode::Header;
    std::string input, output, layout;
    std::size_t lineno = 0;
    const auto fail = [&](const std::string& why) {
        throw TemplateError(std::string(source) + ":" + std::to_string(lineno) + ": " + why);
    };

    for (auto line : split_lines(text)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (mode == Mode::Layout) {
            layout.append(line);
            layout += '\n';
            continue;
        }
        if (mode == Mode::Header && (trim(line).empty() || line.front() == '#')) continue;
        if (!line.empty() && line.front() == '@') {
            const auto sp = line.find(' ');
            const auto directive = line.substr(1, sp == std::string_view::npos ? std::string_view::npos : sp - 1);
            const auto arg = sp == std::string_view::npos ? std::string_view{} : trim(line.substr(sp + 1));
            if (directive == "strategy" && mode == Mode::Header) {
                const auto s = parse_strategy(arg);
                if (!s) fail("unknown strategy '" + std::string(arg) + "'; expected one of " + legal_strategy_names());
                tpl.strategy = *s;
                have_strategy = true;
            } else if (directive == "version" && mode == Mode::Header) {
                try {
                    tpl.version = std::stoi(std::string(arg));
                } catch (const std::exception&) {
                    fail("bad version");
                }
            } else if (directive == "exemplar" && mode == Mode::Header) {
                mode = Mode::ExemplarInput;
                input.clear();
                output.clear();
            } else if (directive == "output" && mode == Mode::ExemplarInput) {
                mode = Mode::ExemplarOutput;
            } else if (directive == "end" && mode == Mode::ExemplarOutput) {
                tpl.exemplars.push_back({strip_trailing_newlines(input), strip_trailing_newlines(output)});
                mode = Mode::Header;
            } else if (directive == "template" && mode == Mode::Header) {
                mode = Mode::Layout;
            } else {
                fail("unexpected directive @" + std::string(directive));
            }
            continue;
        }
        if (mode == Mode::ExemplarInput) {
            input.append(line);
            input += '\n';
        } else if (mode == Mode::ExemplarOutput) {
            output.append(line);
            output += '\n';
        } else {
            fail("text outside a section");
        }
    }
    if (mode != Mode::Layout) fail("missing @template section");
    if (!have_strategy) fail("missing @strategy");
    tpl.layout = strip_trailing_newlines(layout);
    validate_template(tpl, source);
    return tpl;
}

PromptTemplate load_template(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw TemplateError("cannot open template " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_template(ss.str(), path.string());
}

PromptLibrary PromptLibrary::builtin() {
    PromptLibrary lib;
    for (const auto& [name, text] : kBuiltinTemplates) {
        auto tpl = parse_template(text, name);
        if (to_string(tpl.strategy) != name) {
            throw TemplateError("built-in template " + std::string(name) + " declares strategy " +
                                std::string(to_string(tpl.strategy)));
        }
        lib.templates_[tpl.strategy] = std::move(tpl);
    }
    for (auto s : all_strategies()) {
        if (!lib.templates_.contains(s)) throw TemplateError("missing built-in template " + std::string(to_string(s)));
    }
    return lib;
}

PromptLibrary PromptLibrary::from_dir(const std::filesystem::path& dir) {
    auto lib = builtin();
    for (auto s : all_strategies()) {
        const auto path = dir / (std::string(to_string(s)) + ".tmpl");
        if (!std::filesystem::exists(path)) continue;
        auto tpl = load_template(path);
        if (tpl.strategy != s) throw TemplateError(path.string() + " declares the wrong strategy");
        lib.templates_[s] = std::move(tpl);
    }
    return lib;
}

const PromptTemplate& PromptLibrary::get(PromptStrategy s) const { return templates_.at(s); }

RenderedPrompt render(const PromptTemplate& tpl, const RetrievedContext& ctx, const ChiefComplaint& complaint,
                      std::uint64_t budget_tokens) {
    const std::map<std::string, std::string, std::less<>> values{
        {"exemplars", render_exemplars(tpl.exemplars)},
        {"context", render_context(ctx)},
        {"complaint", std::string(trim(complaint.complaint))},
        {"format_instructions", tpl.format_instructions},
    };
    // Single pass so placeholder-like text inside values is left alone.
    RenderedPrompt out;
    std::size_t pos = 0;
    for (const auto& p : scan_placeholders(tpl.layout)) {
        out.text.append(tpl.layout, pos, p.begin - pos);
        out.text += values.at(p.name);
        pos = p.end;
    }
    out.text.append(tpl.layout, pos, std::string::npos);
    out.text += '\n';
    out.token_estimate = estimate_tokens(out.text);
    if (out.token_estimate > budget_tokens) throw ContextOverflow(out.token_estimate, budget_tokens);
    return out;
}

RenderedPrompt render_within_budget(const PromptTemplate& tpl, RetrievedContext ctx, const ChiefComplaint& complaint,
                                    std::uint64_t budget_tokens, std::vector<std::string>* dropped) {
    while (true) {
        try {
            return render(tpl, ctx, complaint, budget_tokens);
        } catch (const ContextOverflow&) {
            if (ctx.hits.empty()) throw;
            // hits are sorted by score, so the last one is the lowest scored.
            if (dropped) dropped->push_back(ctx.hits.back().chunk.chunk_id);
            ctx.hits.pop_back();
        }
    }
}

SummaryBundle parse_summary(std::string_view raw) {
    const std::string lowered = to_lower(raw);
    const auto ctx_pos = lowered.rfind(to_lower(kContextDelimiter));
    if (ctx_pos == std::string::npos) {
        throw ParseFailure(ParseFailure::Kind::MissingDelimiter, 0, "missing CONTEXT SUMMARY: delimiter");
    }
    const auto crit_pos = std::string_view(lowered).substr(0, ctx_pos).rfind(to_lower(kCriticalDelimiter));
    if (crit_pos == std::string::npos) {
        throw ParseFailure(ParseFailure::Kind::MissingDelimiter, 0, "missing CRITICAL FINDINGS: delimiter");
    }

    SummaryBundle bundle;
    bundle.raw_llm_text = std::string(raw);

    const auto critical = raw.substr(crit_pos + kCriticalDelimiter.size(), ctx_pos - crit_pos - kCriticalDelimiter.size());
    std::vector<std::string> bullets;
    bool in_bullet = false;
    for (const auto line : split_lines(critical)) {
        std::string_view rest;
        if (is_bullet_line(line, rest)) {
            bullets.emplace_back(rest);
            in_bullet = true;
        } else if (trim(line).empty()) {
            in_bullet = false;
        } else if (in_bullet) {
            bullets.back() += ' ';
            bullets.back() += trim(line);
        }
    }
    std::erase_if(bullets, [](std::string& b) {
        b = collapse_whitespace(b);
        return b.empty();
    });
    if (bullets.size() < 3) {
        throw ParseFailure(ParseFailure::Kind::TooFewBullets, bullets.size(),
                           "expected 3 critical bullets, found " + std::to_string(bullets.size()));
    }
    if (bullets.size() > 3) {
        bundle.lint.push_back("model produced " + std::to_string(bullets.size()) + " critical bullets; kept the first 3");
        bullets.resize(3);
    }
    bundle.critical_bullets = std::move(bullets);

    std::string paragraph;
    for (const auto line : split_lines(raw.substr(ctx_pos + kContextDelimiter.size()))) {
        std::string_view rest = line;
        std::string_view stripped;
        // Symbol bullets only: "2019. Admitted..." is prose, not a list item.
        const auto t = trim(line);
        const bool numbered = !t.empty() && std::isdigit(static_cast<unsigned char>(t.front()));
        if (!numbered && is_bullet_line(line, stripped)) rest = stripped;
        paragraph += rest;
        paragraph += ' ';
    }
    bundle.context_paragraph = collapse_whitespace(paragraph);
    if (bundle.context_paragraph.empty()) {
        throw ParseFailure(ParseFailure::Kind::EmptyContext, bundle.critical_bullets.size(), "context summary is empty");
    }
    return bundle;
}

std::string serialize_as_instructed(const SummaryBundle& bundle) {
    std::string out(kCriticalDelimiter);
    out += '\n';
    for (const auto& b : bundle.critical_bullets) out += "- " + b + "\n";
    out += '\n';
    out += kContextDelimiter;
    out += '\n';
    out += bundle.context_paragraph;
    out += '\n';
    return out;
}

std::string repair_prompt(std::string_view original_prompt, std::string_view raw_output, const ParseFailure& failure) {
    std::string out(original_prompt);
    out += "\nYOUR PREVIOUS RESPONSE:\n";
    out += raw_output;
    out += "\n\nThe previous response could not be used (";
    out += failure.what();
    out += "). Reformat exactly as instructed: the line CRITICAL FINDINGS followed by exactly three bullet lines, "
           "then the line CONTEXT SUMMARY followed by one paragraph. Keep the same facts.\n";
    return out;
}

}  // namespace chartsum
