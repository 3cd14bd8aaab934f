#pragma once

#include <optional>
#include <string>
#include <vector>

namespace lfqa {

/// Reliability data: rows are items, columns are annotators, empty cells are missing labels.
struct AgreementInput {
    std::vector<std::vector<std::optional<std::string>>> cells;
};

/// Krippendorff's alpha for nominal data.
///
/// Builds the coincidence matrix o_ck = sum_u (number of c-k pairs in unit u) / (m_u - 1) over
/// units with m_u >= 2 labels, then alpha = 1 - (n - 1) * sum_{c!=k} o_ck / sum_{c!=k} n_c n_k.
/// Data with a single category overall yields 1.0. Throws lfqa::Error when there are fewer than
/// two annotator columns, ragged rows, or no pairable unit.
double krippendorff_alpha(AgreementInput const& input);

} // namespace lfqa
