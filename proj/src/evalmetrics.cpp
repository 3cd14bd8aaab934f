#include "lfqa/evalmetrics.hpp"

#include <fstream>
#include <regex>

#include <nlohmann/json.hpp>

#include "lfqa/error.hpp"

namespace lfqa {

using nlohmann::json;

DetectionCounts& DetectionCounts::operator+=(DetectionCounts const& o) noexcept
{
    exact += o.exact;
    adjacent += o.adjacent;
    different += o.different;
    total += o.total;
    return *this;
}

DetectionCounts classify_detections(std::set<std::size_t> const& predicted, std::set<std::size_t> const& gold,
                                    std::size_t n_sentences)
{
    for (auto const* side : {&predicted, &gold})
        if (!side->empty() && *side->rbegin() >= n_sentences)
            throw Error("sentence index " + std::to_string(*side->rbegin()) + " out of range for " +
                        std::to_string(n_sentences) + " sentences");

    DetectionCounts c;
    for (auto p : predicted) {
        ++c.total;
        if (gold.contains(p)) ++c.exact;
        else if ((p > 0 && gold.contains(p - 1)) || gold.contains(p + 1)) ++c.adjacent;
        else ++c.different;
    }
    return c;
}

std::optional<double> weighted_accuracy(DetectionCounts const& c, DetectionWeights const& w)
{
    if (c.total == 0) return std::nullopt;
    return (w.exact * static_cast<double>(c.exact) + w.adjacent * static_cast<double>(c.adjacent) +
            w.different * static_cast<double>(c.different)) /
           static_cast<double>(c.total);
}

CorrectionReport correction_prf(std::map<std::string, bool> const& baseline, std::map<std::string, bool> const& refined)
{
    if (baseline.size() != refined.size())
        throw Error("correction_prf: baseline has " + std::to_string(baseline.size()) + " records, refined has " +
                    std::to_string(refined.size()));
    CorrectionReport r;
    for (auto const& [id, before] : baseline) {
        auto it = refined.find(id);
        if (it == refined.end()) throw Error("correction_prf: record '" + id + "' missing from refined scores");
        bool const after = it->second;
        if (before && !after) ++r.counts.tp;
        else if (before && after) ++r.counts.fn;
        else if (!before && after) ++r.counts.fp;
    }
    auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
    r.precision = ratio(r.counts.tp, r.counts.tp + r.counts.fp);
    r.recall = ratio(r.counts.tp, r.counts.tp + r.counts.fn);
    r.f1 = r.precision + r.recall == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
    if (r.counts.tp + r.counts.fn == 0) r.warnings.push_back("no baseline record is flagged; recall is degenerate");
    if (r.counts.tp + r.counts.fp == 0) r.warnings.push_back("no correction and no new error; precision is degenerate");
    return r;
}

ErrorSummary error_report(std::vector<ErrorScoreRecord> const& scores)
{
    if (scores.empty()) throw Error("error_report: no scores");
    ErrorSummary s;
    s.records = scores.size();
    std::size_t flagged = 0;
    double sum = 0.0;
    for (auto const& r : scores) {
        if (r.error_score < 0.0) throw Error("error_report: negative error score for '" + r.record_id + "'");
        if (r.flagged()) ++flagged;
        sum += r.error_score;
    }
    s.pct_error_samples = 100.0 * static_cast<double>(flagged) / static_cast<double>(scores.size());
    s.mean_error_score = sum / static_cast<double>(scores.size());
    return s;
}

std::vector<ErrorScoreRecord> load_error_scores(std::filesystem::path const& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open score file " + path.string());
    std::vector<ErrorScoreRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto const where = path.string() + ":" + std::to_string(lineno);
        json j;
        try {
            j = json::parse(line);
        } catch (json::parse_error const& e) {
            throw Error(where + ": malformed JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("record_id") || !j["record_id"].is_string() || !j.contains("error_score") ||
            !j["error_score"].is_number())
            throw Error(where + ": expected {\"record_id\": string, \"error_score\": number}");
        out.push_back({j["record_id"].get<std::string>(), j["error_score"].get<double>()});
    }
    return out;
}

FileErrorScorer::FileErrorScorer(std::filesystem::path const& path)
{
    for (auto& r : load_error_scores(path)) scores_[r.record_id] = r.error_score;
}

ErrorScoreRecord FileErrorScorer::score(std::string const& record_id, std::string_view, std::string_view)
{
    auto it = scores_.find(record_id);
    if (it == scores_.end()) throw Error("no error score for record '" + record_id + "'");
    return {record_id, it->second};
}

GenerationErrorScorer::GenerationErrorScorer(TextGenerator& generator, double temperature, std::size_t max_tokens)
    : generator_(generator), temperature_(temperature), max_tokens_(max_tokens)
{ }

std::string GenerationErrorScorer::grading_prompt(std::string_view question, std::string_view answer)
{
    std::string p = "You are grading a long-form answer. List every error in the answer (missing information, "
                    "factual mistakes, irrelevant content, unhelpful references) with a severity between 0.5 "
                    "(minor) and 5 (major). Finish with a final line of the form \"Error score: <sum of "
                    "severities>\", using 0 when the answer has no errors.\n\nQuestion: ";
    p += question;
    p += "\nAnswer: ";
    p += answer;
    p += "\n";
    return p;
}

double GenerationErrorScorer::parse_grade(std::string_view completion)
{
    static std::regex const re(R"(Error score:\s*(-?[0-9]+(?:\.[0-9]+)?))", std::regex::icase);
    std::string const text(completion);
    double value = -1.0;
    bool found = false;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
        value = std::stod((*it)[1].str());
        found = true;
    }
    if (!found || value < 0.0)
        throw GenerationError(GenerationError::Kind::schema, "grader output has no non-negative 'Error score:' line");
    return value;
}

ErrorScoreRecord GenerationErrorScorer::score(std::string const& record_id, std::string_view question,
                                              std::string_view answer)
{
    GenerationRequest request;
    request.prompt = grading_prompt(question, answer);
    request.temperature = temperature_;
    request.max_tokens = max_tokens_;
    request.metadata = record_id;
    auto const result = generator_.generate(request);
    return {record_id, parse_grade(result.texts.front())};
}

std::optional<Verdict> parse_verdict(std::string_view s) noexcept
{
    std::string lower;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c)))
            lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    while (!lower.empty() && (lower.back() == '.' || lower.back() == ':')) lower.pop_back();
    if (lower == "yes") return Verdict::yes;
    if (lower == "no") return Verdict::no;
    if (lower == "n/a" || lower == "na" || lower == "not_applicable") return Verdict::not_applicable;
    return std::nullopt;
}

double VerdictMapping::operator()(Verdict v) const noexcept
{
    switch (v) {
    case Verdict::yes: return yes;
    case Verdict::no: return no;
    case Verdict::not_applicable: return not_applicable;
    }
    return not_applicable;
}

SelfCheckResult selfcheck_aggregate(std::vector<SupportJudgment> const& judgments, VerdictMapping const& mapping)
{
    if (judgments.empty()) throw Error("selfcheck_aggregate: no sentences");
    SelfCheckResult r;
    double total = 0.0;
    for (auto const& j : judgments) {
        if (j.verdicts.empty()) throw Error("selfcheck_aggregate: sentence " + std::to_string(j.sentence) + " has no verdicts");
        double sum = 0.0;
        for (auto v : j.verdicts) sum += mapping(v);
        double const support = sum / static_cast<double>(j.verdicts.size());
        r.sentence_support.push_back(support);
        r.sentence_inconsistency.push_back(1.0 - support);
        total += support;
    }
    r.answer_support = total / static_cast<double>(judgments.size());
    r.answer_inconsistency = 1.0 - r.answer_support;
    return r;
}

DetectionEvaluation detection_eval(Corpus const& corpus, std::map<PredictionKey, FeedbackSample> const& predictions,
                                   DetectionWeights const& weights, DetectionDirection direction)
{
    DetectionEvaluation ev;
    for (auto const& [key, sample] : predictions) {
        auto const* record = corpus.find(key.record_id);
        if (!record) throw Error("prediction for unknown record '" + key.record_id + "'");
        if (key.answer_index >= record->answers.size())
            throw Error("prediction for '" + key.record_id + "' names answer " + std::to_string(key.answer_index) +
                        " but the record has " + std::to_string(record->answers.size()));
        auto const labeling = labeling_for(*record, AnnotationTarget::answer(key.answer_index), Aspect::completeness);
        if (sample.tags.size() != labeling.sentence_count())
            throw Error("prediction for '" + key.record_id + "' answer " + std::to_string(key.answer_index) + " has " +
                        std::to_string(sample.tags.size()) + " tags but the answer has " +
                        std::to_string(labeling.sentence_count()) + " sentences");

        auto const gold_v = labeling.error_indices();
        auto const pred_v = sample.incomplete_indices();
        std::set<std::size_t> const gold(gold_v.begin(), gold_v.end());
        std::set<std::size_t> const predicted(pred_v.begin(), pred_v.end());
        ++ev.evaluated;
        if (predicted.empty()) {
            if (gold.empty()) ++ev.correct_rejections;
            else ++ev.misses;
        }
        auto const n = labeling.sentence_count();
        ev.counts += direction == DetectionDirection::predicted_vs_gold ? classify_detections(predicted, gold, n)
                                                                        : classify_detections(gold, predicted, n);
    }
    for (auto const& r : corpus)
        for (std::size_t i = 0; i < r.answers.size(); ++i)
            if (!predictions.contains({r.id, i})) ++ev.unpredicted;
    ev.weighted_accuracy = weighted_accuracy(ev.counts, weights);
    return ev;
}

} // namespace lfqa
