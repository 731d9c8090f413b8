#pragma once

// Cumulative Matching Characteristics over ranked galleries.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ffprid {

struct RankedGalleryEntry {
    std::optional<std::string> identity;
    double similarity = 0.0;
};

struct RankedQueryResult {
    std::string query_identity;
    std::vector<RankedGalleryEntry> ranked_gallery;
};

/// Sorts entries by similarity descending; ties keep input order.
RankedQueryResult make_ranked_query(std::string query_identity, std::vector<RankedGalleryEntry> entries);

struct CmcCurve {
    std::vector<double> values;  // values[k - 1] = CMC(k)
};

struct CmcReport {
    std::optional<CmcCurve> curve;  // nullopt for an empty query set
    // Positions (in the input list) of queries whose gallery holds no
    // correct identity. They count as never matched.
    std::vector<std::size_t> unmatched_queries;
};

/// 1-based rank of the first entry carrying the query identity.
std::optional<std::size_t> first_match_rank(const RankedQueryResult& result);

/// Throws ValidationError for max_rank == 0, an empty or unsorted gallery,
/// or a gallery shorter than max_rank.
CmcReport cmc(std::span<const RankedQueryResult> results, std::size_t max_rank);

}  // namespace ffprid
