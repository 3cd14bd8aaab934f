#include <sstream>

#include <nlohmann/json.hpp>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lfqa/agreement.hpp"
#include "lfqa/cli.hpp"
#include "lfqa/corpus.hpp"
#include "lfqa/error.hpp"
#include "lfqa/evalmetrics.hpp"
#include "lfqa/feedback.hpp"
#include "lfqa/refine.hpp"
#include "lfqa/scoring.hpp"
#include "lfqa/segment.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

// Structured values cross the boundary as JSON text through Python's json module.
py::object to_py(json const& j)
{
    return py::module_::import("json").attr("loads")(j.dump());
}

json from_py(py::handle obj)
{
    return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

lfqa::FeedbackSample sample_from_py(py::handle obj)
{
    return lfqa::feedback_sample_from_json(from_py(obj));
}

std::vector<lfqa::FeedbackSample> samples_from_py(py::list const& items)
{
    std::vector<lfqa::FeedbackSample> out;
    for (auto item : items) out.push_back(sample_from_py(item));
    return out;
}

lfqa::RefineMode mode_from(std::string const& name)
{
    auto m = lfqa::parse_refine_mode(name);
    if (!m) throw lfqa::ConfigError("unknown refine mode '" + name + "'");
    return *m;
}

} // namespace

PYBIND11_MODULE(_lfqa, m)
{
    m.doc() = "Bindings for the lfqa core library";

    py::register_exception<lfqa::Error>(m, "LfqaError", PyExc_ValueError);

    m.def(
        "segment_sentences",
        [](std::string const& text) {
            std::vector<std::pair<std::size_t, std::size_t>> out;
            for (auto const& s : lfqa::segment_sentences(std::string_view(text))) out.emplace_back(s.start, s.end);
            return out;
        },
        py::arg("text"), "Sentence spans as (start, end) code-point offsets.");
    m.def(
        "sentence_texts",
        [](std::string const& text) { return lfqa::sentence_texts(text, lfqa::segment_sentences(std::string_view(text))); },
        py::arg("text"));

    m.def(
        "krippendorff_alpha",
        [](std::vector<std::vector<std::optional<std::string>>> const& rows) { return lfqa::krippendorff_alpha({rows}); },
        py::arg("rows"), "Nominal alpha; rows are items, columns annotators, None marks a missing label.");

    m.def(
        "parse_feedback_output",
        [](std::string const& text, std::size_t n) { return to_py(lfqa::to_json(lfqa::parse_feedback_output(text, n))); },
        py::arg("text"), py::arg("n_sentences"));
    m.def(
        "format_feedback_output", [](py::dict const& sample) { return lfqa::format_feedback_output(sample_from_py(sample)); },
        py::arg("sample"));
    m.def(
        "tag_consistency", [](py::list const& samples) { return lfqa::tag_consistency(samples_from_py(samples)); },
        py::arg("samples"));
    m.def(
        "reason_consistency", [](py::list const& samples) { return lfqa::reason_consistency(samples_from_py(samples)); },
        py::arg("survivors"));
    m.def(
        "select_feedback",
        [](std::vector<std::string> const& outputs, std::size_t n, double threshold) {
            std::vector<lfqa::FeedbackSample> samples;
            for (auto const& o : outputs) samples.push_back(lfqa::parse_feedback_output(o, n));
            return to_py(lfqa::to_json(lfqa::select_feedback(std::move(samples), threshold)));
        },
        py::arg("outputs"), py::arg("n_sentences"), py::arg("low_confidence_threshold") = lfqa::kLowConfidenceThreshold,
        "Parses raw outputs and runs the two-stage selection.");

    m.def("build_feedback_prompt", &lfqa::build_feedback_prompt, py::arg("question"), py::arg("sentences"));
    m.def(
        "build_refine_prompt",
        [](std::string const& mode, std::string const& q, std::string const& a, std::vector<std::string> const& reasons) {
            return lfqa::build_refine_prompt(mode_from(mode), q, a, reasons);
        },
        py::arg("mode"), py::arg("question"), py::arg("answer"), py::arg("reasons") = std::vector<std::string>{});
    m.def("build_answer_prompt", &lfqa::build_answer_prompt, py::arg("question"), py::arg("target_words"));

    m.def(
        "classify_detections",
        [](std::set<std::size_t> const& predicted, std::set<std::size_t> const& gold, std::size_t n) {
            auto c = lfqa::classify_detections(predicted, gold, n);
            return py::dict(py::arg("exact") = c.exact, py::arg("adjacent") = c.adjacent,
                            py::arg("different") = c.different, py::arg("total") = c.total);
        },
        py::arg("predicted"), py::arg("gold"), py::arg("n_sentences"));
    m.def(
        "weighted_accuracy",
        [](std::size_t exact, std::size_t adjacent, std::size_t different, double w_e, double w_a, double w_d) {
            lfqa::DetectionCounts c{exact, adjacent, different, exact + adjacent + different};
            return lfqa::weighted_accuracy(c, {w_e, w_a, w_d});
        },
        py::arg("exact"), py::arg("adjacent"), py::arg("different"), py::arg("w_exact") = 1.0,
        py::arg("w_adjacent") = 0.5, py::arg("w_different") = 0.1);
    m.def(
        "correction_prf",
        [](std::map<std::string, bool> const& baseline, std::map<std::string, bool> const& refined) {
            auto r = lfqa::correction_prf(baseline, refined);
            return py::dict(py::arg("tp") = r.counts.tp, py::arg("fp") = r.counts.fp, py::arg("fn") = r.counts.fn,
                            py::arg("precision") = r.precision, py::arg("recall") = r.recall, py::arg("f1") = r.f1,
                            py::arg("warnings") = r.warnings);
        },
        py::arg("baseline"), py::arg("refined"));

    m.def(
        "load_corpus",
        [](std::string const& path) {
            json records = json::array();
            for (auto const& r : lfqa::load_corpus(path)) records.push_back(lfqa::to_json(r));
            return to_py(records);
        },
        py::arg("path"));
    m.def(
        "score_answer",
        [](py::dict const& record, std::size_t answer_index) {
            auto const card = lfqa::score_answer(lfqa::record_from_json(from_py(record)), answer_index);
            py::dict scores;
            for (auto a : lfqa::kAllAspects) scores[py::str(std::string(lfqa::to_string(a)))] = py::cast(card.get(a));
            return py::dict(py::arg("scores") = scores, py::arg("preference_score") = card.preference_score,
                            py::arg("overall") = card.overall);
        },
        py::arg("record"), py::arg("answer_index"));

    m.def(
        "dispatch",
        [](std::vector<std::string> const& args) {
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = lfqa::dispatch(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a CLI subcommand; returns (exit_code, stdout, stderr).");
}
