#pragma once

// Domain types of the hybrid human/machine re-identification loop and the
// two application-level metrics computed from per-segment outcomes.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ffprid/geometry.hpp"

namespace ffprid {

/// Framework parameters: segment length, alert threshold and number of
/// candidates shown to the operator.
struct EvalParams {
    int tau = 1;
    double beta = 0.5;
    int eta = 1;
};

/// Throws ValidationError unless tau >= 1, 0 <= beta <= 1 and eta >= 1.
void validate(const EvalParams& params);

enum class LabelStatus : std::uint8_t {
    Matched,      // IoU-matched to a ground-truth identity
    Unknown,      // no ground-truth box above the labeling threshold
    Unlabelable,  // a compact-form track had no box for this frame
};

/// One detected crop inside a segment gallery, scored against a query.
struct ScoredGalleryItem {
    std::string item_id;  // "f{frame}_d{det_index}"
    int frame = 0;
    int det_index = 0;
    BoundingBox bbox;
    double similarity = 0.0;
    std::optional<std::string> true_identity;
    LabelStatus label = LabelStatus::Unknown;
    std::optional<std::string> crop_ref;
};

std::string make_item_id(int frame, int det_index);

enum class Outcome : std::uint8_t {
    TrueCall,
    TrueMissedCall,
    FalseSilence,
    FalseCall,
    TrueSilence,
};

/// Short code used in files and on the wire: TC, TMC, FS, FC, TS.
std::string_view outcome_code(Outcome outcome);
Outcome parse_outcome_code(std::string_view code);

inline bool is_alert(Outcome o) {
    return o == Outcome::TrueCall || o == Outcome::TrueMissedCall || o == Outcome::FalseCall;
}

struct OutcomeCounts {
    std::int64_t tc = 0;
    std::int64_t tmc = 0;
    std::int64_t fs = 0;
    std::int64_t fc = 0;
    std::int64_t ts = 0;

    std::int64_t total() const { return tc + tmc + fs + fc + ts; }
    std::int64_t alerts() const { return tc + tmc + fc; }
    std::int64_t present() const { return tc + tmc + fs; }

    void add(Outcome outcome);
    OutcomeCounts& operator+=(const OutcomeCounts& other);
    friend bool operator==(const OutcomeCounts&, const OutcomeCounts&) = default;
};

/// A ratio that may be undefined because its denominator is zero.
class MetricValue {
public:
    MetricValue() = default;
    explicit MetricValue(double value);

    static MetricValue ratio(std::int64_t numerator, std::int64_t denominator);

    bool defined() const { return value_.has_value(); }
    const std::optional<double>& value() const { return value_; }
    double value_or(double fallback) const { return value_.value_or(fallback); }

    friend bool operator==(const MetricValue&, const MetricValue&) = default;

private:
    std::optional<double> value_;
};

/// Orders items by similarity descending, then frame ascending, then
/// detection index ascending.
bool ranks_before(const ScoredGalleryItem& a, const ScoredGalleryItem& b);

/// Returns a ranked copy of the gallery. Throws ValidationError naming the
/// first item whose similarity is outside [0, 1].
std::vector<ScoredGalleryItem> rank_gallery(std::span<const ScoredGalleryItem> gallery);

/// What the outcome decision needs to know about a ranked gallery.
struct GallerySummary {
    std::optional<double> max_similarity;
    // 1-based rank of the first item carrying the query identity.
    std::optional<std::size_t> first_match_rank;
};

GallerySummary summarize_ranked(std::span<const ScoredGalleryItem> ranked,
                                std::string_view query_identity);

/// Outcome from a gallery summary. Alerts fire when the best score is at
/// least beta; an alert is a true call when the query sits in the top eta.
Outcome decide_outcome(bool query_present, const GallerySummary& summary, const EvalParams& params);

Outcome classify_outcome(bool query_present,
                         std::span<const ScoredGalleryItem> gallery,
                         std::string_view query_identity,
                         const EvalParams& params);

/// TC / (TC + TMC + FS)
MetricValue finding_rate(const OutcomeCounts& counts);

/// TC / (TC + TMC + FC)
MetricValue true_validation_rate(const OutcomeCounts& counts);

OutcomeCounts aggregate(std::span<const Outcome> outcomes);

}  // namespace ffprid
