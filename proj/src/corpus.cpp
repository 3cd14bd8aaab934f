#include "lfqa/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include "lfqa/error.hpp"
#include "lfqa/utf8.hpp"

namespace lfqa {

using nlohmann::json;

namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(std::string_view s, std::pair<E, std::string_view> const (&table)[N])
{
    for (auto const& [value, name] : table)
        if (name == s) return value;
    return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(E v, std::pair<E, std::string_view> const (&table)[N])
{
    for (auto const& [value, name] : table)
        if (value == v) return name;
    return "?";
}

constexpr std::pair<Domain, std::string_view> kDomainNames[] = {
    {Domain::physics, "physics"},   {Domain::chemistry, "chemistry"}, {Domain::biology, "biology"},
    {Domain::technology, "technology"}, {Domain::economics, "economics"}, {Domain::history, "history"},
    {Domain::law, "law"},           {Domain::other, "other"},
};

constexpr std::pair<Aspect, std::string_view> kAspectNames[] = {
    {Aspect::question_misconception, "question_misconception"},
    {Aspect::factuality, "factuality"},
    {Aspect::relevance, "relevance"},
    {Aspect::completeness, "completeness"},
    {Aspect::references, "references"},
};

constexpr std::pair<AnswerSource, std::string_view> kSourceNames[] = {
    {AnswerSource::human, "human"},
    {AnswerSource::model, "model"},
};

// ---------------------------------------------------------------------------
// JSON field access with path-qualified errors

[[noreturn]] void schema_error(std::string const& field, std::string const& what)
{
    throw CorpusError("field '" + field + "': " + what);
}

json const& require(json const& obj, std::string const& key, std::string const& path)
{
    auto it = obj.find(key);
    if (it == obj.end()) schema_error(path + key, "missing");
    return *it;
}

std::string get_string(json const& obj, std::string const& key, std::string const& path, bool required = true)
{
    auto it = obj.find(key);
    if (it == obj.end()) {
        if (required) schema_error(path + key, "missing");
        return {};
    }
    if (!it->is_string()) schema_error(path + key, "expected a string");
    return it->get<std::string>();
}

std::size_t get_index(json const& v, std::string const& field)
{
    if (!v.is_number_integer()) schema_error(field, "expected a non-negative integer");
    if (v.is_number_unsigned()) return v.get<std::size_t>();
    auto const i = v.get<std::int64_t>();
    if (i < 0) schema_error(field, "expected a non-negative integer");
    return static_cast<std::size_t>(i);
}

json const& require_array(json const& obj, std::string const& key, std::string const& path)
{
    auto const& v = require(obj, key, path);
    if (!v.is_array()) schema_error(path + key, "expected an array");
    return v;
}

ErrorSpan span_from_json(json const& holder, std::string const& path)
{
    if (holder.contains("whole_answer")) {
        auto const& w = holder["whole_answer"];
        if (!w.is_boolean() || !w.get<bool>()) schema_error(path + "whole_answer", "expected true");
        return WholeAnswer{};
    }
    if (!holder.contains("start") || !holder.contains("end"))
        schema_error(path.empty() ? "span" : path.substr(0, path.size() - 1), "expected {start, end} or {whole_answer: true}");
    return CharRange{get_index(holder["start"], path + "start"), get_index(holder["end"], path + "end")};
}

bool is_slack(char32_t c)
{
    if (utf8::is_space(c)) return true;
    if (c < 0x80) return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
                         (c >= 0x7B && c <= 0x7E);
    return (c >= 0x2010 && c <= 0x205E) || c == 0xAB || c == 0xBB || c == 0xA1 || c == 0xBF;
}

std::size_t snap(std::size_t x, std::u32string_view text, std::vector<SentenceSpan> const& sentences)
{
    std::size_t best = x;
    std::size_t best_dist = 3;
    auto consider = [&](std::size_t b) {
        std::size_t lo = std::min(x, b), hi = std::max(x, b);
        std::size_t d = hi - lo;
        if (d == 0 || d > 2 || d >= best_dist || hi > text.size()) return;
        for (std::size_t k = lo; k < hi; ++k)
            if (!is_slack(text[k])) return;
        best = b;
        best_dist = d;
    };
    for (auto const& s : sentences) {
        if (s.start == x || s.end == x) return x;
        consider(s.start);
        consider(s.end);
    }
    return best;
}

} // namespace

std::string_view to_string(Domain d) noexcept { return name_of(d, kDomainNames); }
std::string_view to_string(Aspect a) noexcept { return name_of(a, kAspectNames); }
std::string_view to_string(AnswerSource s) noexcept { return name_of(s, kSourceNames); }
std::optional<Domain> parse_domain(std::string_view s) noexcept { return lookup(s, kDomainNames); }
std::optional<Aspect> parse_aspect(std::string_view s) noexcept { return lookup(s, kAspectNames); }
std::optional<AnswerSource> parse_answer_source(std::string_view s) noexcept { return lookup(s, kSourceNames); }

std::string_view to_string(SpanGranularity g) noexcept
{
    switch (g) {
    case SpanGranularity::phrase: return "phrase";
    case SpanGranularity::sentence: return "sentence";
    case SpanGranularity::multi_sentence: return "multi_sentence";
    }
    return "?";
}

// ---------------------------------------------------------------------------

std::string const& QARecord::target_text(AnnotationTarget const& t) const
{
    if (t.is_question()) return question;
    if (*t.answer_index >= answers.size())
        throw CorpusError("record '" + id + "': answer index " + std::to_string(*t.answer_index) + " out of range");
    return answers[*t.answer_index].text;
}

std::vector<ErrorAnnotation> QARecord::annotations_for(AnnotationTarget const& t, Aspect aspect) const
{
    std::vector<ErrorAnnotation> out;
    for (auto const& a : annotations)
        if (a.aspect == aspect && a.target == t) out.push_back(a);
    return out;
}

std::size_t SentenceLabeling::error_count() const noexcept
{
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), SentenceLabel::error));
}

std::vector<std::size_t> SentenceLabeling::error_indices() const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == SentenceLabel::error) out.push_back(i);
    return out;
}

// ---------------------------------------------------------------------------

Corpus::Corpus(std::vector<QARecord> records)
{
    records_.reserve(records.size());
    for (auto& r : records) add(std::move(r));
}

void Corpus::add(QARecord record)
{
    if (by_id_.contains(record.id)) throw CorpusError("duplicate id '" + record.id + "'");
    by_id_.emplace(record.id, records_.size());
    records_.push_back(std::move(record));
}

QARecord const* Corpus::find(std::string_view id) const
{
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &records_[it->second];
}

// ---------------------------------------------------------------------------

json to_json(QARecord const& r)
{
    json answers = json::array();
    for (auto const& a : r.answers) answers.push_back({{"source", to_string(a.source)}, {"text", a.text}});

    json annotations = json::array();
    for (auto const& a : r.annotations) {
        json target = a.target.is_question() ? json("question") : json{{"answer", *a.target.answer_index}};
        json span = std::holds_alternative<WholeAnswer>(a.span)
                        ? json{{"whole_answer", true}}
                        : json{{"start", std::get<CharRange>(a.span).start}, {"end", std::get<CharRange>(a.span).end}};
        annotations.push_back({{"aspect", to_string(a.aspect)},
                               {"target", std::move(target)},
                               {"span", std::move(span)},
                               {"justification", a.justification},
                               {"annotator", a.annotator}});
    }

    json preferences = json::array();
    for (auto const& p : r.preferences)
        preferences.push_back({{"annotator", p.annotator}, {"choice", p.choice}, {"justification", p.justification}});

    return json{{"id", r.id},
                {"domain", to_string(r.domain)},
                {"question", r.question},
                {"answers", std::move(answers)},
                {"annotations", std::move(annotations)},
                {"preferences", std::move(preferences)}};
}

QARecord record_from_json(json const& j)
{
    if (!j.is_object()) throw CorpusError("record is not a JSON object");
    QARecord r;
    r.id = get_string(j, "id", "");
    auto const domain = get_string(j, "domain", "");
    auto d = parse_domain(domain);
    if (!d) schema_error("domain", "unknown domain '" + domain + "'");
    r.domain = *d;
    r.question = get_string(j, "question", "");

    auto const& answers = require_array(j, "answers", "");
    for (std::size_t i = 0; i < answers.size(); ++i) {
        auto const path = "answers[" + std::to_string(i) + "].";
        if (!answers[i].is_object()) schema_error(path.substr(0, path.size() - 1), "expected an object");
        auto const source = get_string(answers[i], "source", path);
        auto s = parse_answer_source(source);
        if (!s) schema_error(path + "source", "unknown source '" + source + "'");
        r.answers.push_back({*s, get_string(answers[i], "text", path)});
    }

    if (j.contains("annotations")) {
        auto const& anns = require_array(j, "annotations", "");
        for (std::size_t i = 0; i < anns.size(); ++i) {
            auto const path = "annotations[" + std::to_string(i) + "].";
            auto const& a = anns[i];
            if (!a.is_object()) schema_error(path.substr(0, path.size() - 1), "expected an object");
            ErrorAnnotation ann;
            auto const aspect = get_string(a, "aspect", path);
            auto asp = parse_aspect(aspect);
            if (!asp) schema_error(path + "aspect", "unknown aspect '" + aspect + "'");
            ann.aspect = *asp;

            auto const& target = require(a, "target", path);
            if (target.is_string() && target.get<std::string>() == "question") {
                ann.target = AnnotationTarget::question();
            } else if (target.is_object() && target.contains("answer")) {
                ann.target = AnnotationTarget::answer(get_index(target["answer"], path + "target.answer"));
            } else {
                schema_error(path + "target", "expected \"question\" or {\"answer\": index}");
            }

            if (a.contains("span")) {
                if (!a["span"].is_object()) schema_error(path + "span", "expected an object");
                ann.span = span_from_json(a["span"], path + "span.");
            } else {
                ann.span = span_from_json(a, path);
            }
            ann.justification = get_string(a, "justification", path, false);
            ann.annotator = get_string(a, "annotator", path, false);
            r.annotations.push_back(std::move(ann));
        }
    }

    if (j.contains("preferences")) {
        auto const& prefs = require_array(j, "preferences", "");
        for (std::size_t i = 0; i < prefs.size(); ++i) {
            auto const path = "preferences[" + std::to_string(i) + "].";
            auto const& p = prefs[i];
            if (!p.is_object()) schema_error(path.substr(0, path.size() - 1), "expected an object");
            PreferenceJudgment pj;
            pj.annotator = get_string(p, "annotator", path, false);
            pj.choice = get_index(require(p, "choice", path), path + "choice");
            pj.justification = get_string(p, "justification", path, false);
            r.preferences.push_back(std::move(pj));
        }
    }
    return r;
}

ValidationReport validate_record(QARecord const& r)
{
    ValidationReport report;
    auto violation = [&](std::string field, std::string message) {
        report.violations.push_back({std::move(field), std::move(message)});
    };

    if (r.id.empty()) violation("id", "must be non-empty");
    if (r.answers.empty()) violation("answers", "at least one answer is required");
    for (std::size_t i = 0; i < r.answers.size(); ++i)
        if (r.answers[i].text.empty()) violation("answers[" + std::to_string(i) + "].text", "must be non-empty");

    for (std::size_t i = 0; i < r.annotations.size(); ++i) {
        auto const& a = r.annotations[i];
        auto const field = "annotations[" + std::to_string(i) + "]";
        bool const wants_question = a.aspect == Aspect::question_misconception;
        if (wants_question && !a.target.is_question()) {
            violation(field + ".target", "question_misconception must target the question");
        } else if (!wants_question && a.target.is_question()) {
            violation(field + ".target", std::string(to_string(a.aspect)) + " must target an answer");
        }
        if (!a.target.is_question() && *a.target.answer_index >= r.answers.size()) {
            violation(field + ".target", "answer index " + std::to_string(*a.target.answer_index) +
                                             " out of range (" + std::to_string(r.answers.size()) + " answers)");
            continue;
        }
        if (auto const* range = std::get_if<CharRange>(&a.span)) {
            auto const len = utf8::length(r.target_text(a.target));
            if (range->start >= range->end)
                violation(field + ".span", "start " + std::to_string(range->start) + " must be below end " +
                                               std::to_string(range->end));
            else if (range->end > len)
                violation(field + ".span", "end " + std::to_string(range->end) + " beyond target length " +
                                               std::to_string(len));
        }
    }

    for (std::size_t i = 0; i < r.preferences.size(); ++i) {
        auto const& p = r.preferences[i];
        if (p.choice >= r.answers.size())
            violation("preferences[" + std::to_string(i) + "].choice",
                      "choice " + std::to_string(p.choice) + " out of range (" + std::to_string(r.answers.size()) +
                          " answers)");
    }
    return report;
}

// ---------------------------------------------------------------------------

CorpusScan scan_corpus(std::istream& in)
{
    CorpusScan scan;
    std::unordered_map<std::string, std::size_t> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (json::parse_error const& e) {
            scan.issues.push_back({lineno, {}, std::string("malformed JSON: ") + e.what()});
            continue;
        }
        QARecord r;
        try {
            r = record_from_json(j);
        } catch (CorpusError const& e) {
            std::string id = j.is_object() && j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : "";
            scan.issues.push_back({lineno, id, e.what()});
            continue;
        }
        auto report = validate_record(r);
        if (!report.ok()) {
            for (auto const& v : report.violations)
                scan.issues.push_back({lineno, r.id, "field '" + v.field + "': " + v.message});
            continue;
        }
        if (auto it = seen.find(r.id); it != seen.end()) {
            scan.issues.push_back({lineno, r.id, "duplicate id '" + r.id + "' (first seen on line " +
                                                     std::to_string(it->second) + ")"});
            continue;
        }
        seen.emplace(r.id, lineno);
        scan.records.push_back(std::move(r));
    }
    return scan;
}

Corpus parse_corpus(std::istream& in)
{
    auto scan = scan_corpus(in);
    if (!scan.issues.empty()) {
        auto const& first = scan.issues.front();
        throw CorpusError(first.message, first.line);
    }
    return Corpus(std::move(scan.records));
}

Corpus load_corpus(std::filesystem::path const& path)
{
    std::ifstream in(path);
    if (!in) throw CorpusError("cannot open corpus file " + path.string());
    return parse_corpus(in);
}

void write_corpus(std::ostream& out, Corpus const& corpus)
{
    for (auto const& r : corpus) out << to_json(r).dump() << '\n';
}

// ---------------------------------------------------------------------------

SentenceLabeling project_spans(std::string_view text, std::vector<SentenceSpan> const& sentences,
                               std::vector<ErrorAnnotation> const& annotations, Aspect aspect)
{
    SentenceLabeling out;
    out.aspect = aspect;
    out.labels.assign(sentences.size(), SentenceLabel::clean);
    out.justifications.assign(sentences.size(), {});

    auto const len = utf8::length(text);
    for (auto const& a : annotations) {
        if (a.aspect != aspect)
            throw Error("project_spans: annotation aspect '" + std::string(to_string(a.aspect)) +
                        "' does not match '" + std::string(to_string(aspect)) + "'");
        auto const* range = std::get_if<CharRange>(&a.span);
        if (range && (range->start >= range->end || range->end > len))
            throw CorpusError("span [" + std::to_string(range->start) + ", " + std::to_string(range->end) +
                              ") out of bounds for text of length " + std::to_string(len));
        for (std::size_t i = 0; i < sentences.size(); ++i) {
            auto const& s = sentences[i];
            bool hit = !range || (std::max(range->start, s.start) < std::min(range->end, s.end));
            if (!hit) continue;
            out.labels[i] = SentenceLabel::error;
            out.justifications[i].push_back(a.justification);
        }
    }
    return out;
}

SentenceLabeling labeling_for(QARecord const& record, AnnotationTarget const& target, Aspect aspect)
{
    auto const& text = record.target_text(target);
    return project_spans(text, segment_sentences(text), record.annotations_for(target, aspect), aspect);
}

SpanGranularity classify_granularity(std::string_view text, CharRange span, std::vector<SentenceSpan> const& sentences)
{
    auto const cps = utf8::decode(text);
    std::size_t s = snap(span.start, cps, sentences);
    std::size_t e = snap(span.end, cps, sentences);
    if (s >= e) {
        s = span.start;
        e = span.end;
    }

    std::size_t hits = 0;
    SentenceSpan const* only = nullptr;
    for (auto const& sent : sentences) {
        if (std::max(s, sent.start) < std::min(e, sent.end)) {
            ++hits;
            only = &sent;
        }
    }
    if (hits >= 2) return SpanGranularity::multi_sentence;
    if (hits == 1 && s <= only->start && e >= only->end) return SpanGranularity::sentence;
    return SpanGranularity::phrase;
}

} // namespace lfqa
