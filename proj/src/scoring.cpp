#include "lfqa/scoring.hpp"

#include <algorithm>
#include <map>

#include <fmt/format.h>

#include "lfqa/error.hpp"
#include "lfqa/utf8.hpp"

namespace lfqa {

namespace {

constexpr Aspect kAnswerAspects[] = {Aspect::factuality, Aspect::relevance, Aspect::completeness, Aspect::references};

struct MeanAccumulator {
    double sum = 0.0;
    std::size_t count = 0;

    void add(std::optional<double> v)
    {
        if (!v) return;
        sum += *v;
        ++count;
    }
    std::optional<double> mean() const
    {
        if (count == 0) return std::nullopt;
        return sum / static_cast<double>(count);
    }
};

struct SourceAccumulator {
    std::array<MeanAccumulator, 5> aspects;
    MeanAccumulator overall;
    std::size_t answers = 0;

    SourceMeans finish() const
    {
        SourceMeans m;
        for (std::size_t i = 0; i < aspects.size(); ++i) m.aspects[i] = aspects[i].mean();
        m.overall = overall.mean();
        m.answers = answers;
        return m;
    }
};

std::string pct(double v) { return fmt::format("{:.2f}%", v); }

std::string opt(std::optional<double> v, int precision = 2)
{
    return v ? fmt::format("{:.{}f}", *v, precision) : std::string("-");
}

} // namespace

std::optional<double> AspectScorecard::get(Aspect a) const noexcept { return scores[aspect_index(a)]; }
void AspectScorecard::set(Aspect a, std::optional<double> v) noexcept { scores[aspect_index(a)] = v; }

double sentence_error_score(SentenceLabeling const& labeling)
{
    if (labeling.sentence_count() == 0) throw UndefinedScoreError("sentence score undefined for zero sentences");
    return 1.0 - static_cast<double>(labeling.error_count()) / static_cast<double>(labeling.sentence_count());
}

std::optional<double> reference_score(std::size_t total_refs, std::size_t error_refs)
{
    if (error_refs > total_refs)
        throw Error("reference_score: " + std::to_string(error_refs) + " erroneous references exceed total " +
                    std::to_string(total_refs));
    if (total_refs == 0) return std::nullopt;
    return 1.0 - static_cast<double>(error_refs) / static_cast<double>(total_refs);
}

double misconception_score(std::vector<ErrorAnnotation> const& question_annotations)
{
    return question_annotations.empty() ? 1.0 : 0.0;
}

double overall_score(AspectScorecard const& scorecard, bool preferred)
{
    double sum = preferred ? 1.0 : 0.0;
    std::size_t count = 1;
    bool any = false;
    for (auto a : kAnswerAspects) {
        if (auto v = scorecard.get(a)) {
            sum += *v;
            ++count;
            any = true;
        }
    }
    if (!any) throw UndefinedScoreError("overall score needs at least one defined answer aspect");
    return sum / static_cast<double>(count);
}

ReferenceCensus count_references(std::string_view text, std::vector<ErrorAnnotation> const& reference_annotations)
{
    auto const cps = utf8::decode(text);
    auto const urls = find_urls(cps);

    bool whole = false;
    std::vector<CharRange> ranges;
    for (auto const& a : reference_annotations) {
        if (auto const* r = std::get_if<CharRange>(&a.span)) ranges.push_back(*r);
        else whole = true;
    }
    if (whole) {
        std::size_t const n = std::max<std::size_t>(1, urls.size());
        return {n, n};
    }

    // Merge overlapping annotations into reference units.
    std::sort(ranges.begin(), ranges.end(), [](auto const& a, auto const& b) {
        return a.start != b.start ? a.start < b.start : a.end < b.end;
    });
    std::vector<CharRange> units;
    for (auto const& r : ranges) {
        if (!units.empty() && r.start < units.back().end) units.back().end = std::max(units.back().end, r.end);
        else units.push_back(r);
    }

    ReferenceCensus census{units.size(), units.size()};
    for (auto [start, end] : urls) {
        bool covered = std::any_of(units.begin(), units.end(),
                                   [&](CharRange const& u) { return std::max(u.start, start) < std::min(u.end, end); });
        if (!covered) ++census.total;
    }
    return census;
}

std::vector<double> preference_shares(QARecord const& record)
{
    if (record.preferences.empty()) return {};
    std::vector<std::size_t> votes(record.answers.size(), 0);
    for (auto const& p : record.preferences)
        if (p.choice < votes.size()) ++votes[p.choice];
    auto const best = *std::max_element(votes.begin(), votes.end());
    auto const tied = static_cast<double>(std::count(votes.begin(), votes.end(), best));
    std::vector<double> shares(votes.size(), 0.0);
    for (std::size_t i = 0; i < votes.size(); ++i)
        if (votes[i] == best) shares[i] = 1.0 / tied;
    return shares;
}

AspectScorecard score_answer(QARecord const& record, std::size_t answer_index)
{
    if (answer_index >= record.answers.size())
        throw Error("score_answer: answer index " + std::to_string(answer_index) + " out of range");
    auto const target = AnnotationTarget::answer(answer_index);
    auto const& text = record.answers[answer_index].text;
    auto const sentences = segment_sentences(text);

    AspectScorecard card;
    card.set(Aspect::question_misconception,
             misconception_score(record.annotations_for(AnnotationTarget::question(), Aspect::question_misconception)));
    for (auto a : {Aspect::factuality, Aspect::relevance, Aspect::completeness}) {
        if (sentences.empty()) continue;
        card.set(a, sentence_error_score(project_spans(text, sentences, record.annotations_for(target, a), a)));
    }
    auto const census = count_references(text, record.annotations_for(target, Aspect::references));
    card.set(Aspect::references, reference_score(census.total, census.errors));

    auto const shares = preference_shares(record);
    bool const preferred = !shares.empty() && shares[answer_index] == 1.0;
    card.preference_score = preferred ? 1.0 : 0.0;
    bool const any = std::any_of(std::begin(kAnswerAspects), std::end(kAnswerAspects),
                                 [&](Aspect a) { return card.get(a).has_value(); });
    if (any) card.overall = overall_score(card, preferred);
    return card;
}

AgreementInput preference_agreement_input(std::vector<QARecord const*> const& records)
{
    std::map<std::string, std::size_t> columns;
    for (auto const* r : records)
        for (auto const& p : r->preferences) columns.emplace(p.annotator, 0);
    std::size_t col = 0;
    for (auto& [_, index] : columns) index = col++;

    AgreementInput input;
    for (auto const* r : records) {
        std::vector<std::optional<std::string>> row(columns.size());
        for (auto const& p : r->preferences) {
            if (p.choice >= r->answers.size()) continue;
            row[columns[p.annotator]] = std::string(to_string(r->answers[p.choice].source));
        }
        input.cells.push_back(std::move(row));
    }
    return input;
}

DomainReport domain_report(Corpus const& corpus)
{
    if (corpus.empty()) throw Error("domain_report: empty corpus");

    std::map<Domain, std::vector<QARecord const*>> by_domain;
    for (auto const& r : corpus) by_domain[r.domain].push_back(&r);

    DomainReport report;
    MeanAccumulator alpha_mean;
    for (auto d : kAllDomains) {
        auto it = by_domain.find(d);
        if (it == by_domain.end()) continue;
        auto const& records = it->second;

        DomainRow row;
        row.domain = d;
        row.samples = records.size();
        double human_share = 0.0, model_share = 0.0;
        MeanAccumulator misconception;
        SourceAccumulator human, model;
        for (auto const* r : records) {
            auto const shares = preference_shares(*r);
            if (!shares.empty()) {
                ++row.with_preferences;
                for (std::size_t i = 0; i < shares.size(); ++i)
                    (r->answers[i].source == AnswerSource::human ? human_share : model_share) += shares[i];
            }
            misconception.add(misconception_score(
                r->annotations_for(AnnotationTarget::question(), Aspect::question_misconception)));
            for (std::size_t i = 0; i < r->answers.size(); ++i) {
                auto const card = score_answer(*r, i);
                auto& acc = r->answers[i].source == AnswerSource::human ? human : model;
                ++acc.answers;
                for (auto a : kAnswerAspects) acc.aspects[aspect_index(a)].add(card.get(a));
                acc.overall.add(card.overall);
            }
        }
        if (row.with_preferences > 0) {
            auto const n = static_cast<double>(row.with_preferences);
            row.human_pct = 100.0 * human_share / n;
            row.model_pct = 100.0 * model_share / n;
        }
        row.misconception_mean = misconception.mean();
        row.human = human.finish();
        row.model = model.finish();

        auto const input = preference_agreement_input(records);
        row.alpha_items = static_cast<std::size_t>(std::count_if(input.cells.begin(), input.cells.end(), [](auto const& c) {
            return std::count_if(c.begin(), c.end(), [](auto const& x) { return x.has_value(); }) >= 2;
        }));
        if (row.alpha_items > 0 && !input.cells.empty() && input.cells.front().size() >= 2)
            row.alpha = krippendorff_alpha(input);
        alpha_mean.add(row.alpha);

        report.total_samples += row.samples;
        report.rows.push_back(std::move(row));
    }

    auto const rows = static_cast<double>(report.rows.size());
    for (auto const& row : report.rows) {
        report.average_human_pct += row.human_pct / rows;
        report.average_model_pct += row.model_pct / rows;
    }
    report.average_alpha = alpha_mean.mean();
    return report;
}

std::string format_domain_table(DomainReport const& report)
{
    std::string out;
    out += fmt::format("{:<24}{:>10}{:>10}{:>8}\n", "Category (# samples)", "Human", "Model", "alpha");
    for (auto const& row : report.rows) {
        auto label = fmt::format("{} ({})", to_string(row.domain), row.samples);
        label[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(label[0])));
        out += fmt::format("{:<24}{:>10}{:>10}{:>8}\n", label, pct(row.human_pct), pct(row.model_pct), opt(row.alpha));
    }
    out += fmt::format("{:<24}{:>10}{:>10}{:>8}\n", fmt::format("Average ({})", report.total_samples),
                       pct(report.average_human_pct), pct(report.average_model_pct), opt(report.average_alpha));

    out += "\nMean aspect scores (human / model)\n";
    out += fmt::format("{:<14}{:>9}{:>15}{:>15}{:>15}{:>15}{:>15}\n", "Domain", "Misconc.", "Factuality", "Relevance",
                       "Completeness", "References", "Overall");
    auto pair = [](std::optional<double> h, std::optional<double> m) { return opt(h) + " / " + opt(m); };
    for (auto const& row : report.rows) {
        out += fmt::format("{:<14}{:>9}", to_string(row.domain), opt(row.misconception_mean));
        for (auto a : kAnswerAspects)
            out += fmt::format("{:>15}", pair(row.human.aspects[aspect_index(a)], row.model.aspects[aspect_index(a)]));
        out += fmt::format("{:>15}\n", pair(row.human.overall, row.model.overall));
    }
    return out;
}

} // namespace lfqa
