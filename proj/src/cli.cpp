#include "lfqa/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "lfqa/agreement.hpp"
#include "lfqa/config.hpp"
#include "lfqa/corpus.hpp"
#include "lfqa/error.hpp"
#include "lfqa/evalmetrics.hpp"
#include "lfqa/feedback.hpp"
#include "lfqa/refine.hpp"
#include "lfqa/scoring.hpp"
#include "lfqa/segment.hpp"

namespace lfqa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> sets;
    std::string backend;
    std::size_t workers = 0; // 0: take from config
};

CliConfig resolve_config(CommonOptions const& o)
{
    ConfigOverrides overrides;
    if (!o.backend.empty()) {
        constexpr std::string_view prefix = "scripted:";
        if (o.backend.rfind(prefix, 0) != 0 || o.backend.size() == prefix.size())
            throw ConfigError("--backend expects scripted:<fixture dir>, got '" + o.backend + "'");
        auto const dir = o.backend.substr(prefix.size());
        for (auto role : {"feedback_model", "refine_model", "scorer_model"}) {
            overrides.emplace_back(std::string(role) + ".kind", "scripted");
            overrides.emplace_back(std::string(role) + ".fixture_dir", dir);
        }
    }
    for (auto const& s : o.sets) overrides.push_back(parse_override(s));
    if (o.workers > 0) overrides.emplace_back("workers", std::to_string(o.workers));
    return load_config(o.config_path.empty() ? std::nullopt : std::optional<fs::path>(o.config_path), overrides);
}

std::vector<json> read_jsonl(fs::path const& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(json::parse(line));
        } catch (json::parse_error const& e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": malformed JSON: " + e.what());
        }
    }
    return out;
}

void write_text(fs::path const& path, std::string const& text)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + path.string());
    f << text;
    if (!f) throw Error("failed writing " + path.string());
}

fs::path summary_path(fs::path out)
{
    return out.replace_extension(".summary.txt");
}

std::string pct(std::size_t part, std::size_t whole)
{
    return whole == 0 ? std::string("n/a") : fmt::format("{:.2f}%", 100.0 * static_cast<double>(part) / static_cast<double>(whole));
}

std::string opt_num(std::optional<double> v, int digits = 3)
{
    return v ? fmt::format("{:.{}f}", *v, digits) : std::string("-");
}

json opt_json(std::optional<double> v)
{
    return v ? json(*v) : json(nullptr);
}

// -- batch plumbing ---------------------------------------------------------

struct WorkItem {
    QARecord const* record = nullptr;
    std::size_t answer_index = 0;

    PredictionKey key() const { return {record->id, answer_index}; }
    std::string label() const { return record->id + "#" + std::to_string(answer_index); }
};

std::vector<WorkItem> select_answers(Corpus const& corpus, std::string const& which)
{
    std::optional<AnswerSource> only;
    if (which == "human") only = AnswerSource::human;
    else if (which == "model") only = AnswerSource::model;
    std::vector<WorkItem> items;
    for (auto const& r : corpus)
        for (std::size_t i = 0; i < r.answers.size(); ++i)
            if (!only || r.answers[i].source == *only) items.push_back({&r, i});
    return items;
}

struct BatchResult {
    std::vector<std::optional<json>> rows; // input order; nullopt for failed items
    std::size_t failures = 0;
    std::size_t resumed = 0;
};

std::map<PredictionKey, json> existing_rows(fs::path const& out)
{
    std::map<PredictionKey, json> rows;
    if (!fs::exists(out)) return rows;
    for (auto& j : read_jsonl(out)) {
        if (!j.contains("record_id") || !j.contains("answer_index")) continue;
        // Key first: json's by-value operator= would move j before the key is read.
        PredictionKey key{j["record_id"].get<std::string>(), j["answer_index"].get<std::size_t>()};
        rows[std::move(key)] = std::move(j);
    }
    return rows;
}

template <class Fn>
BatchResult run_batch(std::vector<WorkItem> const& items, std::size_t workers, bool resume, fs::path const& out,
                      std::ostream& err, Fn&& work)
{
    BatchResult result;
    result.rows.resize(items.size());
    if (resume) {
        auto previous = existing_rows(out);
        for (std::size_t i = 0; i < items.size(); ++i)
            if (auto it = previous.find(items[i].key()); it != previous.end()) {
                result.rows[i] = std::move(it->second);
                ++result.resumed;
            }
    }

    std::vector<std::string> errors(items.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < items.size(); i = next++) {
            if (result.rows[i]) continue;
            try {
                result.rows[i] = work(items[i]);
            } catch (std::exception const& e) {
                errors[i] = e.what();
            }
        }
    };
    std::size_t const n_threads = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, items.size()));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < items.size(); ++i)
        if (!result.rows[i]) {
            ++result.failures;
            err << "error: " << items[i].label() << ": " << errors[i] << "\n";
        }
    return result;
}

void write_rows(fs::path const& out, BatchResult const& batch)
{
    std::string text;
    for (auto const& row : batch.rows)
        if (row) text += row->dump() + "\n";
    write_text(out, text);
}

std::shared_ptr<TextGenerator> generator_for(ModelSettings const& m, char const* role)
{
    try {
        return make_generator(m.backend);
    } catch (ConfigError const& e) {
        throw ConfigError(std::string(role) + ": " + e.what());
    }
}

// -- subcommands ------------------------------------------------------------

int cmd_validate(fs::path const& corpus_path, std::ostream& out)
{
    std::ifstream in(corpus_path);
    if (!in) throw Error("cannot open " + corpus_path.string());
    auto const scan = scan_corpus(in);
    if (scan.issues.empty()) {
        out << scan.records.size() << " records OK\n";
        return exit_ok;
    }
    for (auto const& issue : scan.issues) {
        out << "line " << issue.line << ": ";
        if (!issue.record_id.empty()) out << "[" << issue.record_id << "] ";
        out << issue.message << "\n";
    }
    out << scan.issues.size() << " issue(s); " << scan.records.size() << " valid record(s)\n";
    return exit_data_error;
}

std::size_t word_count(std::string_view text)
{
    std::size_t words = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        bool const space = std::isspace(c);
        if (!space && !in_word) ++words;
        in_word = !space;
    }
    return words;
}

int cmd_stats(fs::path const& corpus_path, std::string const& out_path, std::ostream& out)
{
    auto const corpus = load_corpus(corpus_path);
    constexpr std::size_t kBin = 50;

    std::map<Aspect, std::array<std::size_t, 3>> spans;
    std::map<Domain, std::size_t> per_domain;
    std::map<std::size_t, std::size_t> human_hist, model_hist;
    for (auto const& r : corpus) {
        ++per_domain[r.domain];
        for (auto const& a : r.answers) {
            auto& hist = a.source == AnswerSource::human ? human_hist : model_hist;
            ++hist[word_count(a.text) / kBin];
        }
        for (auto const& ann : r.annotations) {
            auto const& text = r.target_text(ann.target);
            auto const sentences = segment_sentences(text);
            SpanGranularity g;
            if (auto const* range = std::get_if<CharRange>(&ann.span))
                g = classify_granularity(text, *range, sentences);
            else
                g = sentences.size() >= 2 ? SpanGranularity::multi_sentence : SpanGranularity::sentence;
            ++spans[ann.aspect][static_cast<std::size_t>(g)];
        }
    }

    json report{{"records", corpus.size()}};
    std::string table = fmt::format("{:<24}{:>8}{:>12}{:>12}{:>16}\n", "Error type", "spans", "phrase", "sentence",
                                    "multi-sentence");
    std::array<double, 3> sums{};
    std::size_t aspects_with_spans = 0;
    json by_aspect = json::object();
    for (auto aspect : kAllAspects) {
        auto const it = spans.find(aspect);
        if (it == spans.end()) continue;
        auto const& c = it->second;
        std::size_t const total = c[0] + c[1] + c[2];
        std::array<double, 3> share{};
        for (std::size_t k = 0; k < 3; ++k) share[k] = 100.0 * static_cast<double>(c[k]) / static_cast<double>(total);
        for (std::size_t k = 0; k < 3; ++k) sums[k] += share[k];
        ++aspects_with_spans;
        table += fmt::format("{:<24}{:>8}{:>11.2f}%{:>11.2f}%{:>15.2f}%\n", to_string(aspect), total, share[0], share[1],
                             share[2]);
        by_aspect[std::string(to_string(aspect))] = {{"spans", total},
                                                     {"phrase", c[0]},
                                                     {"sentence", c[1]},
                                                     {"multi_sentence", c[2]},
                                                     {"phrase_pct", share[0]},
                                                     {"sentence_pct", share[1]},
                                                     {"multi_sentence_pct", share[2]}};
    }
    report["span_levels"] = by_aspect;
    if (aspects_with_spans > 0) {
        std::array<double, 3> avg{};
        for (std::size_t k = 0; k < 3; ++k) avg[k] = sums[k] / static_cast<double>(aspects_with_spans);
        table += fmt::format("{:<24}{:>8}{:>11.2f}%{:>11.2f}%{:>15.2f}%\n", "Average", "", avg[0], avg[1], avg[2]);
        report["average"] = {{"phrase_pct", avg[0]}, {"sentence_pct", avg[1]}, {"multi_sentence_pct", avg[2]}};
    } else {
        table += "no annotated spans\n";
        report["average"] = nullptr;
    }

    table += "\nRecords per domain\n";
    json domains = json::object();
    for (auto const& [d, n] : per_domain) {
        table += fmt::format("  {:<12}{:>6}\n", to_string(d), n);
        domains[std::string(to_string(d))] = n;
    }
    report["domains"] = domains;

    table += fmt::format("\nAnswer length (words, {}-word bins)\n{:<12}{:>8}{:>8}\n", kBin, "bin", "human", "model");
    std::size_t max_bin = 0;
    for (auto const* h : {&human_hist, &model_hist})
        if (!h->empty()) max_bin = std::max(max_bin, h->rbegin()->first);
    json hist = json::array();
    if (!human_hist.empty() || !model_hist.empty()) {
        for (std::size_t b = 0; b <= max_bin; ++b) {
            auto get = [b](auto const& h) { auto it = h.find(b); return it == h.end() ? std::size_t{0} : it->second; };
            auto const label = fmt::format("{}-{}", b * kBin, (b + 1) * kBin - 1);
            table += fmt::format("{:<12}{:>8}{:>8}\n", label, get(human_hist), get(model_hist));
            hist.push_back({{"bin", label}, {"human", get(human_hist)}, {"model", get(model_hist)}});
        }
    }
    report["length_histogram"] = hist;

    out << table;
    if (!out_path.empty()) {
        write_text(out_path, report.dump(2) + "\n");
        write_text(summary_path(out_path), table);
    }
    return exit_ok;
}

int cmd_score(fs::path const& corpus_path, std::string const& out_path, std::ostream& out)
{
    auto const corpus = load_corpus(corpus_path);
    std::string rows;
    for (auto const& r : corpus) {
        for (std::size_t i = 0; i < r.answers.size(); ++i) {
            auto const card = score_answer(r, i);
            json scores = json::object();
            for (auto a : kAllAspects) scores[std::string(to_string(a))] = opt_json(card.get(a));
            json row{{"record_id", r.id},
                     {"domain", to_string(r.domain)},
                     {"answer_index", i},
                     {"source", to_string(r.answers[i].source)},
                     {"scores", scores},
                     {"preference_score", card.preference_score},
                     {"overall", opt_json(card.overall)}};
            rows += row.dump() + "\n";
        }
    }
    auto const table = format_domain_table(domain_report(corpus));
    out << table;
    if (!out_path.empty()) {
        write_text(out_path, rows);
        write_text(summary_path(out_path), table);
    }
    return exit_ok;
}

int cmd_agreement(fs::path const& corpus_path, std::string const& out_path, std::ostream& out)
{
    auto const corpus = load_corpus(corpus_path);
    auto const report = domain_report(corpus);
    std::string table = fmt::format("{:<12}{:>8}{:>8}{:>10}\n", "Domain", "samples", "items", "alpha");
    json lines = json::array();
    for (auto const& row : report.rows) {
        table += fmt::format("{:<12}{:>8}{:>8}{:>10}\n", to_string(row.domain), row.samples, row.alpha_items,
                             opt_num(row.alpha, 2));
        lines.push_back({{"domain", to_string(row.domain)},
                         {"samples", row.samples},
                         {"items", row.alpha_items},
                         {"alpha", opt_json(row.alpha)}});
    }
    table += fmt::format("{:<12}{:>8}{:>8}{:>10}\n", "Average", report.total_samples, "", opt_num(report.average_alpha, 2));
    out << table;
    if (!out_path.empty()) {
        std::string text;
        for (auto const& l : lines) text += l.dump() + "\n";
        text += json{{"domain", "average"}, {"alpha", opt_json(report.average_alpha)}}.dump() + "\n";
        write_text(out_path, text);
        write_text(summary_path(out_path), table);
    }
    return exit_ok;
}

struct BatchOptions {
    std::string corpus;
    std::string out;
    std::string answers = "all";
    bool resume = false;
    bool audit = false;
};

FeedbackOptions feedback_options(CliConfig const& c)
{
    FeedbackOptions o;
    o.n_samples = c.n_samples;
    o.temperature = c.feedback_model.temperature;
    o.max_tokens = c.feedback_model.max_tokens.value_or(o.max_tokens);
    o.low_confidence_threshold = c.consistency_threshold;
    return o;
}

int cmd_feedback(BatchOptions const& b, CliConfig const& config, std::ostream& out, std::ostream& err)
{
    auto const corpus = load_corpus(b.corpus);
    auto const options = feedback_options(config);
    if (!options.temperature) throw ConfigError("feedback_model.temperature must be set");
    auto const generator = generator_for(config.feedback_model, "feedback_model");
    auto const items = select_answers(corpus, b.answers);

    auto batch = run_batch(items, config.workers, b.resume, b.out, err, [&](WorkItem const& w) {
        auto const& r = *w.record;
        auto const result = run_feedback(r.question, r.answers[w.answer_index].text, *generator, options, r.id);
        json row = to_json(result);
        if (!b.audit) row.erase("samples");
        row["record_id"] = r.id;
        row["answer_index"] = w.answer_index;
        row["source"] = to_string(r.answers[w.answer_index].source);
        return row;
    });
    write_rows(b.out, batch);

    std::size_t done = 0, low = 0, clean = 0;
    double s_tc = 0.0, s_rc = 0.0;
    for (auto const& row : batch.rows) {
        if (!row) continue;
        ++done;
        if ((*row)["low_confidence"].get<bool>()) ++low;
        auto const& tags = (*row)["tags"];
        if (std::all_of(tags.begin(), tags.end(), [](json const& t) { return t == "Complete"; })) ++clean;
        s_tc += (*row)["s_tc"].get<double>();
        s_rc += (*row)["s_rc"].get<double>();
    }
    std::string summary = fmt::format("answers        {}\nwritten        {}\nresumed        {}\nfailed         {}\n",
                                      items.size(), done, batch.resumed, batch.failures);
    summary += fmt::format("all complete   {}\nlow confidence {} (S_RC < {:.2f})\n", clean, low, config.consistency_threshold);
    if (done > 0)
        summary += fmt::format("mean S_TC      {:.4f}\nmean S_RC      {:.4f}\n", s_tc / static_cast<double>(done),
                               s_rc / static_cast<double>(done));
    write_text(summary_path(b.out), summary);
    out << summary;
    return batch.failures > 0 ? exit_partial : exit_ok;
}

int cmd_refine(BatchOptions const& b, std::string const& mode_name, CliConfig const& config, std::ostream& out,
               std::ostream& err)
{
    auto const mode = parse_refine_mode(mode_name);
    if (!mode) throw ConfigError("unknown refine mode '" + mode_name + "'");
    auto const corpus = load_corpus(b.corpus);
    RefineOptions refine_opts;
    if (config.refine_model.temperature) refine_opts.temperature = *config.refine_model.temperature;
    refine_opts.max_tokens = config.refine_model.max_tokens;
    auto const refiner = generator_for(config.refine_model, "refine_model");
    std::shared_ptr<TextGenerator> feedback_gen;
    FeedbackOptions fb_opts;
    if (*mode == RefineMode::error_informed) {
        fb_opts = feedback_options(config);
        if (!fb_opts.temperature) throw ConfigError("feedback_model.temperature must be set");
        feedback_gen = generator_for(config.feedback_model, "feedback_model");
    }
    auto const items = select_answers(corpus, b.answers);

    auto batch = run_batch(items, config.workers, b.resume, b.out, err, [&](WorkItem const& w) {
        auto const& r = *w.record;
        auto const& answer = r.answers[w.answer_index].text;
        auto record = *mode == RefineMode::error_informed
                          ? run_eir(r.question, answer, *feedback_gen, *refiner, fb_opts, refine_opts, r.id)
                          : refine_answer(r.question, answer, *mode, {}, *refiner, refine_opts, r.id);
        record.record_id = r.id;
        record.answer_index = w.answer_index;
        return to_json(record, b.audit);
    });
    write_rows(b.out, batch);

    std::size_t done = 0, passthrough = 0, low = 0;
    for (auto const& row : batch.rows) {
        if (!row) continue;
        ++done;
        if ((*row)["passthrough"].get<bool>()) ++passthrough;
        auto const& fb = (*row)["feedback"];
        if (fb.is_object() && fb["low_confidence"].get<bool>()) ++low;
    }
    std::string summary = fmt::format("mode           {}\nanswers        {}\nwritten        {}\nresumed        {}\n"
                                      "failed         {}\npass-through   {}\n",
                                      to_string(*mode), items.size(), done, batch.resumed, batch.failures, passthrough);
    if (*mode == RefineMode::error_informed) summary += fmt::format("low confidence {}\n", low);
    write_text(summary_path(b.out), summary);
    out << summary;
    return batch.failures > 0 ? exit_partial : exit_ok;
}

int cmd_eval_detect(fs::path const& corpus_path, fs::path const& predictions_path, std::string const& direction,
                    std::string const& out_path, CliConfig const& config, std::ostream& out)
{
    auto const corpus = load_corpus(corpus_path);
    std::map<PredictionKey, FeedbackSample> predictions;
    std::size_t lineno = 0;
    for (auto const& j : read_jsonl(predictions_path)) {
        ++lineno;
        auto const where = predictions_path.string() + " entry " + std::to_string(lineno) + ": ";
        if (!j.contains("record_id") || !j["record_id"].is_string() || !j.contains("answer_index") ||
            !j["answer_index"].is_number_unsigned())
            throw Error(where + "needs record_id and answer_index");
        PredictionKey key{j["record_id"].get<std::string>(), j["answer_index"].get<std::size_t>()};
        try {
            predictions[key] = feedback_sample_from_json(j);
        } catch (Error const& e) {
            throw Error(where + e.what());
        }
    }
    auto const dir = direction == "gold" ? DetectionDirection::gold_vs_predicted : DetectionDirection::predicted_vs_gold;
    auto const ev = detection_eval(corpus, predictions, config.weights, dir);

    auto const& c = ev.counts;
    std::string text = fmt::format("direction           {}\n",
                                   dir == DetectionDirection::predicted_vs_gold ? "predicted against gold"
                                                                                : "gold against predicted");
    text += fmt::format("weights             exact {} / adjacent {} / different {}\n", config.weights.exact,
                        config.weights.adjacent, config.weights.different);
    text += fmt::format("{:<20}{:>8}{:>10}\n", "category", "count", "share");
    text += fmt::format("{:<20}{:>8}{:>10}\n", "exact", c.exact, pct(c.exact, c.total));
    text += fmt::format("{:<20}{:>8}{:>10}\n", "adjacent", c.adjacent, pct(c.adjacent, c.total));
    text += fmt::format("{:<20}{:>8}{:>10}\n", "different", c.different, pct(c.different, c.total));
    text += fmt::format("{:<20}{:>8}\n", "total", c.total);
    text += fmt::format("weighted accuracy   {}\n", ev.weighted_accuracy ? fmt::format("{:.4f}", *ev.weighted_accuracy)
                                                                         : std::string("no predictions"));
    text += fmt::format("answers evaluated   {}\nmisses              {}\ncorrect rejections  {}\nunpredicted answers {}\n",
                        ev.evaluated, ev.misses, ev.correct_rejections, ev.unpredicted);
    out << text;
    if (!out_path.empty()) {
        json j{{"exact", c.exact},
               {"adjacent", c.adjacent},
               {"different", c.different},
               {"total", c.total},
               {"weighted_accuracy", opt_json(ev.weighted_accuracy)},
               {"evaluated", ev.evaluated},
               {"misses", ev.misses},
               {"correct_rejections", ev.correct_rejections},
               {"unpredicted", ev.unpredicted},
               {"direction", dir == DetectionDirection::predicted_vs_gold ? "predicted" : "gold"}};
        write_text(out_path, j.dump() + "\n");
        write_text(summary_path(out_path), text);
    }
    return exit_ok;
}

std::map<std::string, double> score_map(std::vector<ErrorScoreRecord> const& scores, fs::path const& path)
{
    std::map<std::string, double> m;
    for (auto const& s : scores)
        if (!m.emplace(s.record_id, s.error_score).second)
            throw Error(path.string() + ": duplicate record_id '" + s.record_id + "'");
    return m;
}

int cmd_eval_correct(fs::path const& baseline_path, fs::path const& refined_path, std::string const& out_path,
                     std::ostream& out)
{
    auto const baseline = load_error_scores(baseline_path);
    auto const refined = load_error_scores(refined_path);
    auto const base_rep = error_report(baseline);
    auto const ref_rep = error_report(refined);
    std::map<std::string, bool> base_flags, ref_flags;
    for (auto const& [id, s] : score_map(baseline, baseline_path)) base_flags[id] = s > 0.0;
    for (auto const& [id, s] : score_map(refined, refined_path)) ref_flags[id] = s > 0.0;
    auto const prf = correction_prf(base_flags, ref_flags);

    std::string text = fmt::format("# {}\n", kCorrectionDefinition);
    text += fmt::format("{:<10}{:>8}{:>18}{:>14}\n", "run", "records", "% error samples", "error score");
    text += fmt::format("{:<10}{:>8}{:>17.2f}%{:>14.4f}\n", "baseline", base_rep.records, base_rep.pct_error_samples,
                        base_rep.mean_error_score);
    text += fmt::format("{:<10}{:>8}{:>17.2f}%{:>14.4f}\n", "refined", ref_rep.records, ref_rep.pct_error_samples,
                        ref_rep.mean_error_score);
    text += fmt::format("TP {}  FP {}  FN {}\nprecision {:.4f}  recall {:.4f}  F1 {:.4f}\n", prf.counts.tp,
                        prf.counts.fp, prf.counts.fn, prf.precision, prf.recall, prf.f1);
    for (auto const& w : prf.warnings) text += "warning: " + w + "\n";
    out << text;
    if (!out_path.empty()) {
        json j{{"baseline", {{"pct_error_samples", base_rep.pct_error_samples}, {"error_score", base_rep.mean_error_score}}},
               {"refined", {{"pct_error_samples", ref_rep.pct_error_samples}, {"error_score", ref_rep.mean_error_score}}},
               {"tp", prf.counts.tp},
               {"fp", prf.counts.fp},
               {"fn", prf.counts.fn},
               {"precision", prf.precision},
               {"recall", prf.recall},
               {"f1", prf.f1},
               {"warnings", prf.warnings},
               {"definition", kCorrectionDefinition}};
        write_text(out_path, j.dump() + "\n");
        write_text(summary_path(out_path), text);
    }
    return exit_ok;
}

std::vector<SupportJudgment> judgments_from_json(json const& j)
{
    if (!j.contains("verdicts") || !j["verdicts"].is_array())
        throw Error("expected \"verdicts\": [[\"yes\"|\"no\"|\"n/a\", ...] per sentence]");
    std::vector<SupportJudgment> out;
    for (std::size_t i = 0; i < j["verdicts"].size(); ++i) {
        auto const& row = j["verdicts"][i];
        if (!row.is_array()) throw Error("verdicts for sentence " + std::to_string(i) + " must be an array");
        SupportJudgment sj{i, {}};
        for (auto const& v : row) {
            auto const parsed = v.is_string() ? parse_verdict(v.get<std::string>()) : std::nullopt;
            if (!parsed) throw Error("unknown verdict " + v.dump() + " for sentence " + std::to_string(i));
            sj.verdicts.push_back(*parsed);
        }
        out.push_back(std::move(sj));
    }
    return out;
}

int cmd_selfcheck(fs::path const& judgments_path, std::string const& out_path, std::ostream& out, std::ostream& err)
{
    auto const entries = read_jsonl(judgments_path);
    std::string rows;
    std::size_t ok = 0, failed = 0;
    double support_sum = 0.0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto const& j = entries[i];
        std::string const id = j.contains("record_id") && j["record_id"].is_string() ? j["record_id"].get<std::string>()
                                                                                      : "entry " + std::to_string(i + 1);
        try {
            auto const r = selfcheck_aggregate(judgments_from_json(j));
            json row{{"record_id", id},
                     {"sentence_support", r.sentence_support},
                     {"sentence_inconsistency", r.sentence_inconsistency},
                     {"answer_support", r.answer_support},
                     {"answer_inconsistency", r.answer_inconsistency}};
            if (j.contains("answer_index")) row["answer_index"] = j["answer_index"];
            rows += row.dump() + "\n";
            support_sum += r.answer_support;
            ++ok;
        } catch (Error const& e) {
            err << "error: " << id << ": " << e.what() << "\n";
            ++failed;
        }
    }
    std::string summary = fmt::format("answers {}\nfailed {}\n", ok, failed);
    if (ok > 0) {
        double const mean = support_sum / static_cast<double>(ok);
        summary += fmt::format("mean support {:.4f}\nmean inconsistency {:.4f}\n", mean, 1.0 - mean);
    }
    out << summary;
    if (!out_path.empty()) {
        write_text(out_path, rows);
        write_text(summary_path(out_path), summary);
    } else {
        out << rows;
    }
    return failed > 0 ? exit_partial : exit_ok;
}

// Routes library log output to the caller's error stream for the duration of a dispatch.
class LogRedirect {
public:
    LogRedirect(std::ostream& err, bool verbose) : previous_(spdlog::default_logger())
    {
        auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
        sink->set_pattern("%l: %v");
        auto logger = std::make_shared<spdlog::logger>("lfqa", sink);
        logger->set_level(verbose ? spdlog::level::debug : spdlog::level::warn);
        spdlog::set_default_logger(logger);
    }
    ~LogRedirect() { spdlog::set_default_logger(previous_); }
    LogRedirect(LogRedirect const&) = delete;
    LogRedirect& operator=(LogRedirect const&) = delete;

private:
    std::shared_ptr<spdlog::logger> previous_;
};

} // namespace

int dispatch(std::vector<std::string> const& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Long-form QA error annotation, scoring, feedback and refinement toolkit", "lfqa"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging on stderr");

    CommonOptions common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "key = value configuration file")->check(CLI::ExistingFile);
        sub->add_option("--set", common.sets, "Override a configuration key (key=value); repeatable");
        sub->add_option("--backend", common.backend, "Shortcut: scripted:<fixture dir> for every model role");
        sub->add_option("--workers", common.workers, "Concurrent records");
    };

    std::string corpus, out_path, second, mode = "eir", direction = "predicted";
    BatchOptions batch;

    auto* validate = app.add_subcommand("validate", "Schema-check a corpus");
    validate->add_option("corpus", corpus)->required();

    auto* stats = app.add_subcommand("stats", "Span-level distribution and answer-length histogram");
    stats->add_option("corpus", corpus)->required();
    stats->add_option("-o,--output", out_path, "JSON report path");

    auto* score = app.add_subcommand("score", "Per-answer scorecards and the domain report");
    score->add_option("corpus", corpus)->required();
    score->add_option("-o,--output", out_path, "Per-answer JSONL path");

    auto* agreement = app.add_subcommand("agreement", "Preference agreement (Krippendorff's alpha) per domain");
    agreement->add_option("corpus", corpus)->required();
    agreement->add_option("-o,--output", out_path, "JSONL path");

    auto add_batch = [&](CLI::App* sub) {
        sub->add_option("corpus", batch.corpus)->required();
        sub->add_option("-o,--output", batch.out, "JSONL output path")->required();
        sub->add_option("--answers", batch.answers, "Which answers to process")
            ->check(CLI::IsMember({"all", "human", "model"}));
        sub->add_flag("--resume", batch.resume, "Keep rows already present in the output file");
        sub->add_flag("--audit", batch.audit, "Keep prompts and raw samples");
        add_common(sub);
    };
    auto* feedback = app.add_subcommand("feedback", "Sample and select completeness feedback per answer");
    add_batch(feedback);
    auto* refine = app.add_subcommand("refine", "Refine answers");
    add_batch(refine);
    refine->add_option("--mode", mode, "improve, generic or eir")->check(CLI::IsMember({"improve", "generic", "eir"}));

    auto* eval_detect = app.add_subcommand("eval-detect", "Weighted detection accuracy of feedback predictions");
    eval_detect->add_option("corpus", corpus)->required();
    eval_detect->add_option("predictions", second, "Feedback JSONL")->required();
    eval_detect->add_option("--direction", direction, "Classify predicted sentences (default) or gold sentences")
        ->check(CLI::IsMember({"predicted", "gold"}));
    eval_detect->add_option("-o,--output", out_path, "JSON report path");
    add_common(eval_detect);

    std::string baseline, refined;
    auto* eval_correct = app.add_subcommand("eval-correct", "Error rates and correction P/R/F1 from score files");
    eval_correct->add_option("--baseline", baseline, "Scores of the original answers")->required();
    eval_correct->add_option("--refined", refined, "Scores of the refined answers")->required();
    eval_correct->add_option("-o,--output", out_path, "JSON report path");

    auto* selfcheck = app.add_subcommand("selfcheck", "Aggregate sampled support verdicts per sentence");
    selfcheck->add_option("judgments", second, "JSONL of {record_id, verdicts: [[...] per sentence]}")->required();
    selfcheck->add_option("-o,--output", out_path, "JSONL output path");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (CLI::ParseError const& e) {
        int const code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    LogRedirect logs(err, verbose);
    try {
        if (validate->parsed()) return cmd_validate(corpus, out);
        if (stats->parsed()) return cmd_stats(corpus, out_path, out);
        if (score->parsed()) return cmd_score(corpus, out_path, out);
        if (agreement->parsed()) return cmd_agreement(corpus, out_path, out);
        if (eval_correct->parsed()) return cmd_eval_correct(baseline, refined, out_path, out);
        if (selfcheck->parsed()) return cmd_selfcheck(second, out_path, out, err);
        auto const config = resolve_config(common);
        if (feedback->parsed()) return cmd_feedback(batch, config, out, err);
        if (refine->parsed()) return cmd_refine(batch, mode, config, out, err);
        if (eval_detect->parsed()) return cmd_eval_detect(corpus, second, direction, out_path, config, out);
    } catch (std::exception const& e) {
        err << "error: " << e.what() << "\n";
        return exit_data_error;
    }
    err << "error: no subcommand\n";
    return exit_usage;
}

} // namespace lfqa
