#include "lfqa/refine.hpp"

#include <cmath>

#include "lfqa/error.hpp"

namespace lfqa {

using nlohmann::json;

std::string_view to_string(RefineMode m) noexcept
{
    switch (m) {
    case RefineMode::improve: return "improve";
    case RefineMode::generic: return "generic";
    case RefineMode::error_informed: return "error_informed";
    }
    return "?";
}

std::optional<RefineMode> parse_refine_mode(std::string_view s) noexcept
{
    if (s == "improve") return RefineMode::improve;
    if (s == "generic") return RefineMode::generic;
    if (s == "error_informed" || s == "eir") return RefineMode::error_informed;
    return std::nullopt;
}

std::string build_refine_prompt(RefineMode mode, std::string_view question, std::string_view answer,
                                std::vector<std::string> const& reasons)
{
    std::string prompt = "\nAnswer the following question: \"";
    prompt += question;
    prompt += "\"\nYour answer is: \"";
    prompt += answer;
    prompt += "\".\n";
    switch (mode) {
    case RefineMode::improve:
        break;
    case RefineMode::generic:
        prompt += "The answer is not complete.\n";
        break;
    case RefineMode::error_informed: {
        if (reasons.empty()) throw Error("error-informed refinement needs at least one reason");
        prompt += "The answer is not complete because: \n\"";
        for (std::size_t i = 0; i < reasons.size(); ++i) {
            if (i > 0) prompt += '\n';
            prompt += std::to_string(i + 1) + ". " + reasons[i];
        }
        prompt += "\".\n";
        break;
    }
    }
    prompt += "Please improve your answer.\nYour improved answer:\n\n";
    return prompt;
}

std::size_t default_refine_max_tokens(std::string_view answer)
{
    std::size_t words = 0;
    bool in_word = false;
    for (unsigned char c : answer) {
        bool const space = std::isspace(c);
        if (!space && !in_word) ++words;
        in_word = !space;
    }
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(1.5 * static_cast<double>(words))));
}

std::string build_answer_prompt(std::string_view question, std::size_t target_words)
{
    auto const words = std::to_string(target_words);
    std::string prompt = "Your task is to answer a question by providing a clear and concise explanation of a complex concept in a way that is accessible for laypeople. The question was posted on the Reddit forum Explain Like I'm Five (r/explainlikeimfive). Please keep in mind that the question is not literally meant for 5-year-olds, so you should not answer the question in a way that you are talking to a child. Your answer should be around ";
    prompt += words;
    prompt += " words and should break down the concept into understandable parts, providing relevant examples or analogies where appropriate. You should also aim to make your explanation easy to follow, using clear and concise language throughout. Your answer should maintain accuracy and clarity. When appropriate, you can start with one sentence summarizing the main idea of the answer.\n\nQuestion: ";
    prompt += question;
    prompt += "   \n\nAnswer (around ";
    prompt += words;
    prompt += " words):\n";
    return prompt;
}

RefinementRecord refine_answer(std::string_view question, std::string_view answer, RefineMode mode,
                               std::vector<std::string> const& reasons, TextGenerator& generator,
                               RefineOptions const& options, std::string const& metadata)
{
    RefinementRecord record;
    record.question = std::string(question);
    record.original_answer = std::string(answer);
    record.mode = mode;
    record.prompt = build_refine_prompt(mode, question, answer, reasons);

    GenerationRequest request;
    request.prompt = record.prompt;
    request.temperature = options.temperature;
    request.max_tokens = options.max_tokens.value_or(default_refine_max_tokens(answer));
    request.n_samples = 1;
    request.metadata = metadata;
    auto const result = generator.generate(request);

    auto const& text = result.texts.front();
    auto const first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) throw GenerationError(GenerationError::Kind::empty_output, "empty refinement");
    auto const last = text.find_last_not_of(" \t\r\n");
    record.refined_answer = text.substr(first, last - first + 1);
    return record;
}

RefinementRecord run_eir(std::string_view question, std::string_view answer, TextGenerator& feedback_generator,
                         TextGenerator& refine_generator, FeedbackOptions const& feedback_options,
                         RefineOptions const& refine_options, std::string const& metadata)
{
    auto feedback = run_feedback(question, answer, feedback_generator, feedback_options, metadata);
    RefinementRecord record;
    if (feedback.selected.all_complete()) {
        record.question = std::string(question);
        record.original_answer = std::string(answer);
        record.mode = RefineMode::error_informed;
        record.refined_answer = record.original_answer;
        record.passthrough = true;
    } else {
        record = refine_answer(question, answer, RefineMode::error_informed, feedback.selected.ordered_reasons(),
                               refine_generator, refine_options, metadata);
    }
    record.feedback = std::move(feedback);
    return record;
}

json to_json(RefinementRecord const& record, bool audit)
{
    json j{{"record_id", record.record_id},
           {"answer_index", record.answer_index},
           {"mode", to_string(record.mode)},
           {"question", record.question},
           {"original_answer", record.original_answer},
           {"refined_answer", record.refined_answer},
           {"passthrough", record.passthrough}};
    if (record.feedback) {
        auto fb = to_json(*record.feedback);
        if (!audit) fb.erase("samples");
        j["feedback"] = std::move(fb);
    } else {
        j["feedback"] = nullptr;
    }
    if (audit) j["audit"] = {{"prompt", record.prompt}};
    return j;
}

} // namespace lfqa
