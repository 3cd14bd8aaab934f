#include "lfqa/feedback.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "lfqa/error.hpp"
#include "lfqa/segment.hpp"

namespace lfqa {

using nlohmann::json;

namespace {

constexpr std::string_view kInstruction =
    "### Instruction:\n"
    "When given a question and answer statements, evaluate whether each given statement provides sufficient "
    "information for answering the question. \n"
    "Use the '[Incomplete]' tag to indicate answer incompleteness, and '[Complete]' tag to indicate completeness, "
    "with reasons.\n"
    "Please note that the answer can have single, multiple or no incomplete statements.\n";

std::string flatten(std::string_view s)
{
    std::string out(s);
    std::replace(out.begin(), out.end(), '\n', ' ');
    std::replace(out.begin(), out.end(), '\r', ' ');
    return out;
}

std::string_view trim(std::string_view s)
{
    auto const first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    auto const last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

// Fraction num/den; den > 0.
struct Ratio {
    std::size_t num = 0;
    std::size_t den = 1;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    friend bool operator<(Ratio a, Ratio b) { return a.num * b.den < b.num * a.den; }
    friend bool operator==(Ratio a, Ratio b) { return a.num * b.den == b.num * a.den; }
};

std::vector<std::size_t> match_counts(std::vector<FeedbackSample> const& samples)
{
    if (samples.empty()) throw Error("tag consistency needs at least one sample");
    auto const len = samples.front().tags.size();
    for (auto const& s : samples) {
        if (!s.parse_ok) throw Error("tag consistency over an unparseable sample");
        if (s.tags.size() != len) throw Error("tag consistency over tag sequences of unequal length");
    }
    std::vector<std::size_t> counts(samples.size(), 0);
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (std::size_t s = 0; s < samples.size(); ++s)
            if (samples[i].tags == samples[s].tags) ++counts[i];
    return counts;
}

std::vector<Ratio> reason_ratios(std::vector<FeedbackSample> const& survivors)
{
    auto const n = survivors.size();
    if (n == 0) throw Error("reason consistency needs at least one sample");
    if (n == 1) return {Ratio{1, 1}};

    std::vector<std::vector<std::string>> tokens;
    std::vector<std::set<std::string>> vocab;
    for (auto const& s : survivors) {
        tokens.push_back(reason_tokens(s));
        vocab.emplace_back(tokens.back().begin(), tokens.back().end());
    }
    bool const none_have_tokens = std::all_of(tokens.begin(), tokens.end(), [](auto const& t) { return t.empty(); });

    std::vector<Ratio> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (tokens[i].empty()) {
            out.push_back(none_have_tokens ? Ratio{1, 1} : Ratio{0, 1});
            continue;
        }
        std::size_t hits = 0;
        for (auto const& w : tokens[i])
            for (std::size_t s = 0; s < n; ++s)
                if (s != i && vocab[s].contains(w)) ++hits;
        out.push_back({hits, tokens[i].size() * (n - 1)});
    }
    return out;
}

} // namespace

std::string_view to_string(CompletenessTag t) noexcept
{
    return t == CompletenessTag::complete ? "Complete" : "Incomplete";
}

std::vector<std::size_t> FeedbackSample::incomplete_indices() const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < tags.size(); ++i)
        if (tags[i] == CompletenessTag::incomplete) out.push_back(i);
    return out;
}

std::vector<std::string> FeedbackSample::ordered_reasons() const
{
    std::vector<std::string> out;
    for (auto const& [_, text] : reasons) out.push_back(text);
    return out;
}

bool FeedbackSample::all_complete() const noexcept
{
    return std::all_of(tags.begin(), tags.end(), [](auto t) { return t == CompletenessTag::complete; });
}

std::string build_feedback_prompt(std::string_view question, std::vector<std::string> const& sentences)
{
    if (sentences.empty()) throw Error("build_feedback_prompt: the answer has no sentences");
    std::string prompt(kInstruction);
    prompt += "\n### Input:\nQuestion: ";
    prompt += flatten(question);
    prompt += "\nAnswer: ";
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        if (i > 0) prompt += '\n';
        prompt += std::to_string(i + 1) + ". " + flatten(sentences[i]);
    }
    prompt += "\n\n### Response:";
    return prompt;
}

FeedbackSample parse_feedback_output(std::string_view text, std::size_t expected_n)
{
    static std::regex const tag_line(R"(^\s*(\d+)\.\s*\[([^\]]*)\](.*)$)");
    static std::regex const reasons_re(R"(^\s*Reasons:(.*)$)");

    FeedbackSample sample;
    sample.raw = std::string(text);
    auto diag = [&](std::string msg) { sample.diagnostics.push_back(std::move(msg)); };

    struct Entry {
        std::size_t number;
        std::string tag;
        bool has_reasons_marker = false;
        std::string reason;
    };
    std::vector<Entry> entries;

    std::size_t pos = 0;
    std::size_t lineno = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string line(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();

        std::smatch m;
        if (std::regex_match(line, m, tag_line)) {
            Entry e;
            try {
                e.number = std::stoul(m[1].str());
            } catch (std::exception const&) {
                e.number = 0;
            }
            e.tag = m[2].str();
            std::string const rest = m[3].str();
            std::smatch rm;
            if (std::regex_match(rest, rm, reasons_re)) {
                e.has_reasons_marker = true;
                e.reason = std::string(trim(rm[1].str()));
            }
            entries.push_back(std::move(e));
        } else if (!entries.empty()) {
            auto& e = entries.back();
            if (e.has_reasons_marker) e.reason += (e.reason.empty() ? "" : "\n") + line;
        } else if (!trim(line).empty()) {
            diag("line " + std::to_string(lineno) + ": unexpected text before the first tag");
        }
        if (nl == text.size()) break;
    }

    if (expected_n == 0) diag("expected_n must be at least 1");
    if (entries.size() != expected_n)
        diag("expected " + std::to_string(expected_n) + " tags, found " + std::to_string(entries.size()));

    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto& e = entries[i];
        if (e.number != i + 1)
            diag("non-contiguous numbering: entry " + std::to_string(i + 1) + " is numbered " + std::to_string(e.number));
        if (e.tag == "Complete") {
            sample.tags.push_back(CompletenessTag::complete);
        } else if (e.tag == "Incomplete") {
            sample.tags.push_back(CompletenessTag::incomplete);
            auto const reason = std::string(trim(e.reason));
            if (!e.has_reasons_marker) diag("sentence " + std::to_string(i + 1) + ": [Incomplete] without 'Reasons:'");
            else if (reason.empty()) diag("sentence " + std::to_string(i + 1) + ": empty reason");
            else sample.reasons[i] = reason;
        } else {
            diag("sentence " + std::to_string(i + 1) + ": unknown tag '" + e.tag + "'");
        }
    }
    sample.parse_ok = sample.diagnostics.empty();
    return sample;
}

std::string format_feedback_output(FeedbackSample const& sample)
{
    std::string out;
    for (std::size_t i = 0; i < sample.tags.size(); ++i) {
        if (i > 0) out += '\n';
        out += std::to_string(i + 1) + ". [" + std::string(to_string(sample.tags[i])) + "]";
        if (sample.tags[i] == CompletenessTag::incomplete) {
            auto it = sample.reasons.find(i);
            out += " Reasons: ";
            if (it != sample.reasons.end()) out += it->second;
        }
    }
    return out;
}

std::vector<double> tag_consistency(std::vector<FeedbackSample> const& samples)
{
    auto const counts = match_counts(samples);
    std::vector<double> out;
    for (auto c : counts) out.push_back(static_cast<double>(c) / static_cast<double>(samples.size()));
    return out;
}

std::vector<double> tag_consistency_excluding_self(std::vector<FeedbackSample> const& samples)
{
    auto const counts = match_counts(samples);
    std::vector<double> out;
    for (auto c : counts)
        out.push_back(samples.size() == 1 ? 0.0 : static_cast<double>(c - 1) / static_cast<double>(samples.size() - 1));
    return out;
}

std::vector<std::string> reason_tokens(FeedbackSample const& sample)
{
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) tokens.push_back(std::move(current));
        current.clear();
    };
    bool first = true;
    for (auto const& [_, text] : sample.reasons) {
        if (!first) flush();
        first = false;
        for (unsigned char c : text) {
            if (std::isalnum(c) || c >= 0x80) current.push_back(static_cast<char>(std::tolower(c)));
            else flush();
        }
    }
    flush();
    return tokens;
}

std::vector<double> reason_consistency(std::vector<FeedbackSample> const& survivors)
{
    std::vector<double> out;
    for (auto const& r : reason_ratios(survivors)) out.push_back(r.value());
    return out;
}

std::vector<double> reason_consistency_self_inclusive(std::vector<FeedbackSample> const& survivors)
{
    auto const n = static_cast<double>(survivors.size());
    std::vector<double> out;
    for (double v : reason_consistency(survivors)) out.push_back(1.0 + (n - 1.0) * v);
    return out;
}

FeedbackResult select_feedback(std::vector<FeedbackSample> samples, double low_confidence_threshold)
{
    FeedbackResult result;
    result.n_sampled = samples.size();

    std::vector<std::size_t> parseable;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].parse_ok) parseable.push_back(i);
    result.n_parseable = parseable.size();
    if (parseable.empty()) throw Error("select_feedback: none of the " + std::to_string(samples.size()) +
                                       " samples could be parsed");

    std::vector<FeedbackSample> pool;
    for (auto i : parseable) pool.push_back(samples[i]);
    auto const counts = match_counts(pool);
    auto const best = *std::max_element(counts.begin(), counts.end());

    std::vector<FeedbackSample> survivors;
    for (std::size_t k = 0; k < pool.size(); ++k) {
        if (counts[k] != best) continue;
        result.stage1_survivors.push_back(parseable[k]);
        survivors.push_back(pool[k]);
    }

    auto const ratios = reason_ratios(survivors);
    std::size_t pick = 0;
    for (std::size_t k = 1; k < ratios.size(); ++k)
        if (ratios[pick] < ratios[k]) pick = k;

    result.selected_index = result.stage1_survivors[pick];
    result.selected = survivors[pick];
    result.s_tc = static_cast<double>(best) / static_cast<double>(pool.size());
    result.s_rc = ratios[pick].value();
    result.low_confidence = result.s_rc < low_confidence_threshold;
    result.samples = std::move(samples);
    return result;
}

FeedbackResult run_feedback(std::string_view question, std::string_view answer, TextGenerator& generator,
                            FeedbackOptions const& options, std::string const& metadata)
{
    if (!options.temperature) throw ConfigError("feedback sampling temperature must be configured explicitly");
    auto const sentences = sentence_texts(answer, segment_sentences(answer));
    if (sentences.empty()) throw Error("run_feedback: the answer has no sentences");

    GenerationRequest request;
    request.prompt = build_feedback_prompt(question, sentences);
    request.n_samples = options.n_samples;
    request.temperature = *options.temperature;
    request.max_tokens = options.max_tokens;
    request.metadata = metadata;
    auto const generated = generator.generate(request);

    std::vector<FeedbackSample> samples;
    samples.reserve(generated.texts.size());
    for (auto const& text : generated.texts) samples.push_back(parse_feedback_output(text, sentences.size()));
    return select_feedback(std::move(samples), options.low_confidence_threshold);
}

// ---------------------------------------------------------------------------

json to_json(FeedbackSample const& sample)
{
    json tags = json::array();
    for (auto t : sample.tags) tags.push_back(to_string(t));
    json reasons = json::array();
    for (auto const& [index, text] : sample.reasons) reasons.push_back({{"index", index}, {"text", text}});
    return json{{"tags", std::move(tags)},
                {"reasons", std::move(reasons)},
                {"raw", sample.raw},
                {"parse_ok", sample.parse_ok},
                {"diagnostics", sample.diagnostics}};
}

json to_json(FeedbackResult const& result)
{
    json tags = json::array();
    for (auto t : result.selected.tags) tags.push_back(to_string(t));
    json reasons = json::array();
    for (auto const& [index, text] : result.selected.reasons) reasons.push_back({{"index", index}, {"text", text}});
    json samples = json::array();
    for (auto const& s : result.samples)
        samples.push_back({{"raw", s.raw}, {"parse_ok", s.parse_ok}, {"diagnostics", s.diagnostics}});
    return json{{"tags", std::move(tags)},
                {"reasons", std::move(reasons)},
                {"selected_index", result.selected_index},
                {"s_tc", result.s_tc},
                {"s_rc", result.s_rc},
                {"low_confidence", result.low_confidence},
                {"n_sampled", result.n_sampled},
                {"n_parseable", result.n_parseable},
                {"stage1_survivors", result.stage1_survivors},
                {"samples", std::move(samples)}};
}

FeedbackSample feedback_sample_from_json(json const& j)
{
    if (!j.is_object() || !j.contains("tags") || !j["tags"].is_array()) throw Error("feedback record lacks a 'tags' array");
    FeedbackSample s;
    for (auto const& t : j["tags"]) {
        if (t == "Complete") s.tags.push_back(CompletenessTag::complete);
        else if (t == "Incomplete") s.tags.push_back(CompletenessTag::incomplete);
        else throw Error("unknown tag " + t.dump());
    }
    if (j.contains("reasons")) {
        for (auto const& r : j["reasons"]) {
            if (!r.is_object() || !r.contains("index") || !r["index"].is_number_unsigned() || !r.contains("text") ||
                !r["text"].is_string())
                throw Error("reason entries must be {\"index\": n, \"text\": \"...\"}");
            auto const index = r["index"].get<std::size_t>();
            if (index >= s.tags.size() || s.tags[index] != CompletenessTag::incomplete)
                throw Error("reason index " + std::to_string(index) + " does not point at an [Incomplete] tag");
            s.reasons[index] = r["text"].get<std::string>();
        }
    }
    if (j.contains("raw") && j["raw"].is_string()) s.raw = j["raw"].get<std::string>();
    s.parse_ok = true;
    return s;
}

} // namespace lfqa
