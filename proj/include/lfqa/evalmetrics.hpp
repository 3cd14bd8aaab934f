#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "lfqa/corpus.hpp"
#include "lfqa/feedback.hpp"
#include "lfqa/genclient.hpp"

namespace lfqa {

struct DetectionWeights {
    double exact = 1.0;
    double adjacent = 0.5;
    double different = 0.1;
};

struct DetectionCounts {
    std::size_t exact = 0;
    std::size_t adjacent = 0;
    std::size_t different = 0;
    std::size_t total = 0; // exact + adjacent + different

    DetectionCounts& operator+=(DetectionCounts const& o) noexcept;
    bool operator==(DetectionCounts const&) const = default;
};

/// Which side is classified. The default classifies each predicted error sentence against gold
/// (denominator: predicted errors); the alternative classifies gold sentences against predictions.
enum class DetectionDirection { predicted_vs_gold, gold_vs_predicted };

/// Each predicted index is exact if it is in gold, else adjacent if a gold index is next to it,
/// else different. Throws lfqa::Error for an index >= n_sentences.
DetectionCounts classify_detections(std::set<std::size_t> const& predicted, std::set<std::size_t> const& gold,
                                    std::size_t n_sentences);

/// (w_e * exact + w_a * adjacent + w_d * different) / total; nullopt when nothing was predicted.
std::optional<double> weighted_accuracy(DetectionCounts const& counts, DetectionWeights const& weights = {});

struct CorrectionCounts {
    std::size_t tp = 0; // flagged before, clean after
    std::size_t fp = 0; // clean before, flagged after
    std::size_t fn = 0; // flagged before and after
};

struct CorrectionReport {
    CorrectionCounts counts;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::vector<std::string> warnings;
};

/// Definition line shipped in report headers.
inline constexpr std::string_view kCorrectionDefinition =
    "TP = flagged in baseline and clean after refinement; FN = flagged in both; FP = clean in baseline but flagged "
    "after refinement; 0/0 is reported as 0";

/// Throws lfqa::Error when the two maps do not cover the same record ids.
CorrectionReport correction_prf(std::map<std::string, bool> const& baseline, std::map<std::string, bool> const& refined);

struct ErrorScoreRecord {
    std::string record_id;
    double error_score = 0.0;

    bool flagged() const noexcept { return error_score > 0.0; }
};

struct ErrorSummary {
    std::size_t records = 0;
    double pct_error_samples = 0.0;
    double mean_error_score = 0.0;
};

/// Throws lfqa::Error on empty input or a negative score.
ErrorSummary error_report(std::vector<ErrorScoreRecord> const& scores);

/// Reads {"record_id": ..., "error_score": ...} lines.
std::vector<ErrorScoreRecord> load_error_scores(std::filesystem::path const& path);

/// Source of per-record error scores.
class ErrorScorer {
public:
    virtual ~ErrorScorer() = default;
    virtual ErrorScoreRecord score(std::string const& record_id, std::string_view question, std::string_view answer) = 0;
};

/// Scores precomputed by an external scorer, keyed by record id.
class FileErrorScorer final : public ErrorScorer {
public:
    explicit FileErrorScorer(std::filesystem::path const& path);
    ErrorScoreRecord score(std::string const& record_id, std::string_view question, std::string_view answer) override;

private:
    std::map<std::string, double> scores_;
};

/// Asks a generator to grade the answer and reads the number after "Error score:".
class GenerationErrorScorer final : public ErrorScorer {
public:
    GenerationErrorScorer(TextGenerator& generator, double temperature = 0.0, std::size_t max_tokens = 256);
    ErrorScoreRecord score(std::string const& record_id, std::string_view question, std::string_view answer) override;

    static std::string grading_prompt(std::string_view question, std::string_view answer);
    /// Throws GenerationError(schema) when no score can be found.
    static double parse_grade(std::string_view completion);

private:
    TextGenerator& generator_;
    double temperature_;
    std::size_t max_tokens_;
};

enum class Verdict { yes, no, not_applicable };

std::optional<Verdict> parse_verdict(std::string_view s) noexcept;

struct VerdictMapping {
    double yes = 1.0;
    double no = 0.0;
    double not_applicable = 0.5;

    double operator()(Verdict v) const noexcept;
};

/// Verdicts on whether sentence `sentence` is supported by each of N sampled answers.
struct SupportJudgment {
    std::size_t sentence = 0;
    std::vector<Verdict> verdicts;
};

struct SelfCheckResult {
    std::vector<double> sentence_support;       // mean mapped verdict per sentence
    std::vector<double> sentence_inconsistency; // 1 - support
    double answer_support = 0.0;
    double answer_inconsistency = 0.0;
};

/// Throws lfqa::Error when there are no judgments or a judgment has no verdicts.
SelfCheckResult selfcheck_aggregate(std::vector<SupportJudgment> const& judgments, VerdictMapping const& mapping = {});

struct PredictionKey {
    std::string record_id;
    std::size_t answer_index = 0;

    auto operator<=>(PredictionKey const&) const = default;
};

struct DetectionEvaluation {
    DetectionCounts counts;
    std::optional<double> weighted_accuracy;
    std::size_t evaluated = 0;          // answers with a prediction
    std::size_t misses = 0;             // gold errors but nothing predicted
    std::size_t correct_rejections = 0; // no gold errors and nothing predicted
    std::size_t unpredicted = 0;        // corpus answers without a prediction
};

/// Gold = completeness error sentences of each predicted answer; predicted = its [Incomplete]
/// indices. Throws lfqa::Error on an unknown record, bad answer index, or a tag count that differs
/// from the answer's sentence count.
DetectionEvaluation detection_eval(Corpus const& corpus, std::map<PredictionKey, FeedbackSample> const& predictions,
                                   DetectionWeights const& weights = {},
                                   DetectionDirection direction = DetectionDirection::predicted_vs_gold);

} // namespace lfqa
