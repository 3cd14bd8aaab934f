#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lfqa/agreement.hpp"
#include "lfqa/corpus.hpp"

namespace lfqa {

/// Fine-grained scores of one answer. Index `scores` with aspect_index().
struct AspectScorecard {
    std::array<std::optional<double>, 5> scores{};
    double preference_score = 0.0;
    std::optional<double> overall;

    std::optional<double> get(Aspect a) const noexcept;
    void set(Aspect a, std::optional<double> v) noexcept;
};

constexpr std::size_t aspect_index(Aspect a) noexcept { return static_cast<std::size_t>(a); }

/// 1 - errors / sentences. Throws UndefinedScoreError for an empty labeling.
double sentence_error_score(SentenceLabeling const& labeling);

/// 1 - error_refs / total_refs; nullopt when there are no references. Throws lfqa::Error when
/// error_refs exceeds total_refs.
std::optional<double> reference_score(std::size_t total_refs, std::size_t error_refs);

/// 1.0 iff the question carries no misconception annotation.
double misconception_score(std::vector<ErrorAnnotation> const& question_annotations);

/// Mean of the defined factuality/relevance/completeness/references scores plus the preference
/// bit. The misconception slot is ignored. Throws UndefinedScoreError if none of the four is defined.
double overall_score(AspectScorecard const& scorecard, bool preferred);

struct ReferenceCensus {
    std::size_t total = 0;
    std::size_t errors = 0;
};

/// Reference units of an answer: each group of overlapping references-aspect annotations counts
/// as one erroneous reference; URLs not covered by any annotation count as clean references.
/// A whole-answer references annotation marks every detected reference (at least one) as an error.
ReferenceCensus count_references(std::string_view text, std::vector<ErrorAnnotation> const& reference_annotations);

/// Majority-vote share per answer: the winner gets 1.0, exact ties split 1.0 evenly among the tied
/// answers. Empty when the record has no preference judgments.
std::vector<double> preference_shares(QARecord const& record);

/// Scorecard of answer `answer_index`; preferred iff it wins the majority outright.
AspectScorecard score_answer(QARecord const& record, std::size_t answer_index);

struct SourceMeans {
    std::array<std::optional<double>, 5> aspects{};
    std::optional<double> overall;
    std::size_t answers = 0;
};

struct DomainRow {
    Domain domain = Domain::other;
    std::size_t samples = 0;
    std::size_t with_preferences = 0;
    double human_pct = 0.0;
    double model_pct = 0.0;
    std::optional<double> misconception_mean;
    SourceMeans human;
    SourceMeans model;
    std::optional<double> alpha;
    std::size_t alpha_items = 0;
};

struct DomainReport {
    std::vector<DomainRow> rows;
    std::size_t total_samples = 0;
    /// Unweighted means over domain rows.
    double average_human_pct = 0.0;
    double average_model_pct = 0.0;
    std::optional<double> average_alpha;
};

/// Reliability matrix of preference labels ("human"/"model" of the chosen answer), one row per
/// record and one column per annotator id.
AgreementInput preference_agreement_input(std::vector<QARecord const*> const& records);

/// Throws lfqa::Error for an empty corpus.
DomainReport domain_report(Corpus const& corpus);

std::string format_domain_table(DomainReport const& report);

} // namespace lfqa
