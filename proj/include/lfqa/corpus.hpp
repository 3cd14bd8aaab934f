#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfqa/segment.hpp"

namespace lfqa {

enum class Domain { physics, chemistry, biology, technology, economics, history, law, other };
enum class Aspect { question_misconception, factuality, relevance, completeness, references };
enum class AnswerSource { human, model };

inline constexpr Domain kAllDomains[] = {Domain::physics,   Domain::chemistry, Domain::biology,
                                         Domain::technology, Domain::economics, Domain::history,
                                         Domain::law,        Domain::other};
inline constexpr Aspect kAllAspects[] = {Aspect::question_misconception, Aspect::factuality,
                                         Aspect::relevance, Aspect::completeness, Aspect::references};

std::string_view to_string(Domain d) noexcept;
std::string_view to_string(Aspect a) noexcept;
std::string_view to_string(AnswerSource s) noexcept;
std::optional<Domain> parse_domain(std::string_view s) noexcept;
std::optional<Aspect> parse_aspect(std::string_view s) noexcept;
std::optional<AnswerSource> parse_answer_source(std::string_view s) noexcept;

struct Answer {
    AnswerSource source = AnswerSource::human;
    std::string text;

    bool operator==(Answer const&) const = default;
};

/// Half-open range of code points.
struct CharRange {
    std::size_t start = 0;
    std::size_t end = 0;

    bool operator==(CharRange const&) const = default;
};

/// Marks an annotation that applies to the whole target text.
struct WholeAnswer {
    bool operator==(WholeAnswer const&) const = default;
};

using ErrorSpan = std::variant<CharRange, WholeAnswer>;

struct AnnotationTarget {
    std::optional<std::size_t> answer_index; // empty: the question

    static AnnotationTarget question() { return {}; }
    static AnnotationTarget answer(std::size_t i) { return {i}; }
    bool is_question() const noexcept { return !answer_index.has_value(); }

    bool operator==(AnnotationTarget const&) const = default;
};

struct ErrorAnnotation {
    Aspect aspect = Aspect::factuality;
    AnnotationTarget target;
    ErrorSpan span = WholeAnswer{};
    std::string justification;
    std::string annotator;

    bool operator==(ErrorAnnotation const&) const = default;
};

struct PreferenceJudgment {
    std::string annotator;
    std::size_t choice = 0;
    std::string justification;

    bool operator==(PreferenceJudgment const&) const = default;
};

struct QARecord {
    std::string id;
    Domain domain = Domain::other;
    std::string question;
    std::vector<Answer> answers;
    std::vector<ErrorAnnotation> annotations;
    std::vector<PreferenceJudgment> preferences;

    bool operator==(QARecord const&) const = default;

    /// Text an annotation target points at.
    std::string const& target_text(AnnotationTarget const& t) const;
    std::vector<ErrorAnnotation> annotations_for(AnnotationTarget const& t, Aspect aspect) const;
};

enum class SentenceLabel { clean, error };

struct SentenceLabeling {
    Aspect aspect = Aspect::completeness;
    std::vector<SentenceLabel> labels;
    std::vector<std::vector<std::string>> justifications;

    std::size_t sentence_count() const noexcept { return labels.size(); }
    std::size_t error_count() const noexcept;
    std::vector<std::size_t> error_indices() const;
};

enum class SpanGranularity { phrase, sentence, multi_sentence };

std::string_view to_string(SpanGranularity g) noexcept;

struct Violation {
    std::string field;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const noexcept { return violations.empty(); }
};

/// Immutable once built; lookups by id are O(1).
class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::vector<QARecord> records);

    /// Throws CorpusError on a duplicate id.
    void add(QARecord record);

    QARecord const* find(std::string_view id) const;
    std::vector<QARecord> const& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    auto begin() const noexcept { return records_.begin(); }
    auto end() const noexcept { return records_.end(); }

private:
    std::vector<QARecord> records_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

struct CorpusIssue {
    std::size_t line = 0;
    std::string record_id;
    std::string message;
};

struct CorpusScan {
    std::vector<QARecord> records;
    std::vector<CorpusIssue> issues;
};

/// Reads every line and collects all problems instead of stopping at the first.
CorpusScan scan_corpus(std::istream& in);

/// Strict loading: the first malformed line, schema violation or duplicate id throws CorpusError.
Corpus parse_corpus(std::istream& in);
Corpus load_corpus(std::filesystem::path const& path);

void write_corpus(std::ostream& out, Corpus const& corpus);

nlohmann::json to_json(QARecord const& record);

/// Throws CorpusError naming the offending field on schema violations.
QARecord record_from_json(nlohmann::json const& j);

ValidationReport validate_record(QARecord const& record);

/// Sentence labels for one aspect. Annotations must carry `aspect`; ranges are code-point offsets
/// into `text`. A sentence is an error iff an annotation intersects it or is a WholeAnswer.
SentenceLabeling project_spans(std::string_view text, std::vector<SentenceSpan> const& sentences,
                               std::vector<ErrorAnnotation> const& annotations, Aspect aspect);

/// Convenience: segments the target and projects the record's annotations for `aspect`.
SentenceLabeling labeling_for(QARecord const& record, AnnotationTarget const& target, Aspect aspect);

/// Boundaries within 2 code points of a sentence boundary, separated from it only by whitespace
/// or punctuation, are snapped before classification.
SpanGranularity classify_granularity(std::string_view text, CharRange span,
                                     std::vector<SentenceSpan> const& sentences);

} // namespace lfqa
