#include "lfqa/agreement.hpp"

#include <map>

#include "lfqa/error.hpp"

namespace lfqa {

double krippendorff_alpha(AgreementInput const& input)
{
    if (input.cells.empty()) throw Error("krippendorff_alpha: no items");
    auto const annotators = input.cells.front().size();
    if (annotators < 2) throw Error("krippendorff_alpha: at least two annotators are required");

    std::map<std::string, std::size_t> category;
    std::vector<std::vector<std::size_t>> units;
    for (auto const& row : input.cells) {
        if (row.size() != annotators) throw Error("krippendorff_alpha: ragged reliability matrix");
        std::vector<std::size_t> labels;
        for (auto const& cell : row) {
            if (!cell) continue;
            auto [it, _] = category.emplace(*cell, category.size());
            labels.push_back(it->second);
        }
        if (labels.size() >= 2) units.push_back(std::move(labels));
    }
    if (units.empty()) throw Error("krippendorff_alpha: no item has two or more labels");

    auto const k = category.size();
    std::vector<double> coincidence(k * k, 0.0);
    for (auto const& labels : units) {
        double const weight = 1.0 / static_cast<double>(labels.size() - 1);
        for (std::size_t a = 0; a < labels.size(); ++a)
            for (std::size_t b = 0; b < labels.size(); ++b)
                if (a != b) coincidence[labels[a] * k + labels[b]] += weight;
    }

    std::vector<double> marginal(k, 0.0);
    double n = 0.0;
    double disagreement = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t d = 0; d < k; ++d) {
            marginal[c] += coincidence[c * k + d];
            if (c != d) disagreement += coincidence[c * k + d];
        }
        n += marginal[c];
    }

    double expected = n * n;
    for (double nc : marginal) expected -= nc * nc;
    if (expected <= 0.0) return 1.0;
    return 1.0 - (n - 1.0) * disagreement / expected;
}

} // namespace lfqa
