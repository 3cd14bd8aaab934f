#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfqa/feedback.hpp"
#include "lfqa/genclient.hpp"

namespace lfqa {

enum class RefineMode { improve, generic, error_informed };

std::string_view to_string(RefineMode m) noexcept;
/// Accepts "improve", "generic", "error_informed" and the short form "eir".
std::optional<RefineMode> parse_refine_mode(std::string_view s) noexcept;

struct RefinementRecord {
    std::string record_id;
    std::size_t answer_index = 0;
    std::string question;
    std::string original_answer;
    RefineMode mode = RefineMode::improve;
    std::optional<FeedbackResult> feedback;
    std::string refined_answer;
    bool passthrough = false;
    std::string prompt; // empty on pass-through
};

/// Refinement prompt for `mode`. error_informed renders `reasons` as "1. <reason>\n2. <reason>..."
/// and throws lfqa::Error when they are empty.
std::string build_refine_prompt(RefineMode mode, std::string_view question, std::string_view answer,
                                std::vector<std::string> const& reasons = {});

struct RefineOptions {
    double temperature = 0.1;
    /// Defaults to ceil(1.5 * word count of the original answer).
    std::optional<std::size_t> max_tokens;
};

std::size_t default_refine_max_tokens(std::string_view answer);

/// Zero-shot answer-generation prompt; `target_words` is the reference answer's word count.
std::string build_answer_prompt(std::string_view question, std::size_t target_words);

/// Zero-shot answer-generation prompt; `target_words` is the reference answer's word count.
std::string build_answer_prompt(std::string_view question, std::size_t target_words);

/// One generation with the built prompt; the completion, trimmed, becomes the refined answer.
/// Throws GenerationError(empty_output) when the completion is blank.
RefinementRecord refine_answer(std::string_view question, std::string_view answer, RefineMode mode,
                               std::vector<std::string> const& reasons, TextGenerator& generator,
                               RefineOptions const& options = {}, std::string const& metadata = {});

/// Feedback first; all-[Complete] feedback passes the answer through untouched, otherwise the
/// [Incomplete] reasons (ascending sentence order) drive one error-informed refinement.
RefinementRecord run_eir(std::string_view question, std::string_view answer, TextGenerator& feedback_generator,
                         TextGenerator& refine_generator, FeedbackOptions const& feedback_options,
                         RefineOptions const& refine_options = {}, std::string const& metadata = {});

/// `audit` keeps the prompt and the raw feedback samples.
nlohmann::json to_json(RefinementRecord const& record, bool audit = false);

} // namespace lfqa
