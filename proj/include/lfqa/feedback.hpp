#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfqa/genclient.hpp"

namespace lfqa {

enum class CompletenessTag { complete, incomplete };

std::string_view to_string(CompletenessTag t) noexcept;

/// One parsed feedback-model output.
struct FeedbackSample {
    std::vector<CompletenessTag> tags;
    std::map<std::size_t, std::string> reasons; // 0-based sentence index -> justification
    std::string raw;
    bool parse_ok = false;
    std::vector<std::string> diagnostics;

    std::vector<std::size_t> incomplete_indices() const;
    /// Reasons in ascending sentence order.
    std::vector<std::string> ordered_reasons() const;
    bool all_complete() const noexcept;

    bool operator==(FeedbackSample const&) const = default;
};

inline constexpr double kLowConfidenceThreshold = 0.80;

struct FeedbackResult {
    FeedbackSample selected;
    std::size_t selected_index = 0; // position among all sampled outputs
    double s_tc = 0.0;
    double s_rc = 0.0;
    std::size_t n_sampled = 0;
    std::size_t n_parseable = 0;
    bool low_confidence = false;
    std::vector<FeedbackSample> samples;
    std::vector<std::size_t> stage1_survivors; // positions among all sampled outputs
};

/// Instruction / "### Input:" / "### Response:" prompt with the sentences numbered from 1.
/// Line breaks inside a sentence are flattened to spaces so each sentence stays on one line.
std::string build_feedback_prompt(std::string_view question, std::vector<std::string> const& sentences);

/// Parses "<k>. [Complete]" / "<k>. [Incomplete] Reasons: <text>" lines. A reason runs until the
/// next line that starts with "<int>. [". Never throws: problems set parse_ok = false and add
/// diagnostics (tag count mismatch, non-contiguous numbering, unknown tag, missing or empty reason,
/// stray text before the first tag).
FeedbackSample parse_feedback_output(std::string_view text, std::size_t expected_n);

/// Inverse of parse_feedback_output for well-formed samples.
std::string format_feedback_output(FeedbackSample const& sample);

/// Self-inclusive tag consistency: score_i = |{s : t_s = t_i}| / n.
std::vector<double> tag_consistency(std::vector<FeedbackSample> const& samples);
/// Self-exclusive variant: (|{s : t_s = t_i}| - 1) / (n - 1); 0 when n = 1.
std::vector<double> tag_consistency_excluding_self(std::vector<FeedbackSample> const& samples);

/// Lowercased alphanumeric tokens of a sample's concatenated reasons (in sentence order).
std::vector<std::string> reason_tokens(FeedbackSample const& sample);

/// Normalized reason consistency in [0, 1]:
/// score_i = (1 / (m_i (n - 1))) * sum_k sum_{s != i} [w_i^k in tokens(j_s)].
/// A sample without tokens scores 1.0 if no survivor has tokens, else 0.0; a lone survivor scores 1.0.
std::vector<double> reason_consistency(std::vector<FeedbackSample> const& survivors);
/// Self-inclusive per-token average (1 / m_i) * sum_k sum_s [w_i^k in tokens(j_s)], which equals
/// 1 + (n - 1) * normalized score; token-less samples follow that identity.
std::vector<double> reason_consistency_self_inclusive(std::vector<FeedbackSample> const& survivors);

/// Two-stage selection: drop unparseable samples, keep every sample with maximal tag consistency,
/// then take the maximal reason consistency (lowest position wins ties). Throws lfqa::Error when
/// nothing parses.
FeedbackResult select_feedback(std::vector<FeedbackSample> samples, double low_confidence_threshold = kLowConfidenceThreshold);

struct FeedbackOptions {
    std::size_t n_samples = 20;
    std::optional<double> temperature; // required, no default
    std::size_t max_tokens = 512;
    double low_confidence_threshold = kLowConfidenceThreshold;
};

/// Segments the answer, prompts the generator for n samples and selects one.
FeedbackResult run_feedback(std::string_view question, std::string_view answer, TextGenerator& generator,
                            FeedbackOptions const& options, std::string const& metadata = {});

nlohmann::json to_json(FeedbackSample const& sample);
nlohmann::json to_json(FeedbackResult const& result);

/// Reads the "tags"/"reasons" fields written by to_json(); the sample is marked parse_ok.
FeedbackSample feedback_sample_from_json(nlohmann::json const& j);

} // namespace lfqa
