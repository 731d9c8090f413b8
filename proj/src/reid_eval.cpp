#include "ffprid/reid_eval.hpp"

#include <algorithm>

#include "ffprid/error.hpp"

namespace ffprid {

RankedQueryResult make_ranked_query(std::string query_identity, std::vector<RankedGalleryEntry> entries) {
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.similarity > b.similarity; });
    return {std::move(query_identity), std::move(entries)};
}

std::optional<std::size_t> first_match_rank(const RankedQueryResult& result) {
    const auto& g = result.ranked_gallery;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g[i].identity && *g[i].identity == result.query_identity) return i + 1;
    }
    return std::nullopt;
}

CmcReport cmc(std::span<const RankedQueryResult> results, std::size_t max_rank) {
    if (max_rank == 0) throw ValidationError("cmc: max_rank must be positive");
    CmcReport report;
    if (results.empty()) return report;

    std::vector<std::size_t> hits_at(max_rank + 1, 0);
    for (std::size_t q = 0; q < results.size(); ++q) {
        const auto& r = results[q];
        if (r.ranked_gallery.empty()) {
            throw ValidationError("cmc: query '" + r.query_identity + "' has an empty gallery");
        }
        if (r.ranked_gallery.size() < max_rank) {
            throw ValidationError("cmc: max_rank " + std::to_string(max_rank) + " exceeds gallery size " +
                                  std::to_string(r.ranked_gallery.size()) + " of query '" +
                                  r.query_identity + "'");
        }
        const bool sorted = std::is_sorted(r.ranked_gallery.begin(), r.ranked_gallery.end(),
                                           [](const auto& a, const auto& b) { return a.similarity > b.similarity; });
        if (!sorted) {
            throw ValidationError("cmc: gallery of query '" + r.query_identity + "' is not ranked");
        }
        const auto rank = first_match_rank(r);
        if (!rank) {
            report.unmatched_queries.push_back(q);
        } else if (*rank <= max_rank) {
            ++hits_at[*rank];
        }
    }

    CmcCurve curve;
    curve.values.reserve(max_rank);
    std::size_t cumulative = 0;
    const double n = static_cast<double>(results.size());
    for (std::size_t k = 1; k <= max_rank; ++k) {
        cumulative += hits_at[k];
        curve.values.push_back(static_cast<double>(cumulative) / n);
    }
    report.curve = std::move(curve);
    return report;
}

}  // namespace ffprid
