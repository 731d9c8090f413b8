#include "ffprid/core_model.hpp"

#include <algorithm>
#include <cmath>

#include "ffprid/error.hpp"

namespace ffprid {

void validate(const EvalParams& params) {
    if (params.tau < 1) {
        throw ValidationError("tau must be >= 1, got " + std::to_string(params.tau));
    }
    if (!(params.beta >= 0.0 && params.beta <= 1.0)) {
        throw ValidationError("beta must lie in [0, 1], got " + std::to_string(params.beta));
    }
    if (params.eta < 1) {
        throw ValidationError("eta must be >= 1, got " + std::to_string(params.eta));
    }
}

std::string make_item_id(int frame, int det_index) {
    return "f" + std::to_string(frame) + "_d" + std::to_string(det_index);
}

std::string_view outcome_code(Outcome outcome) {
    switch (outcome) {
        case Outcome::TrueCall: return "TC";
        case Outcome::TrueMissedCall: return "TMC";
        case Outcome::FalseSilence: return "FS";
        case Outcome::FalseCall: return "FC";
        case Outcome::TrueSilence: return "TS";
    }
    return "?";
}

Outcome parse_outcome_code(std::string_view code) {
    if (code == "TC") return Outcome::TrueCall;
    if (code == "TMC") return Outcome::TrueMissedCall;
    if (code == "FS") return Outcome::FalseSilence;
    if (code == "FC") return Outcome::FalseCall;
    if (code == "TS") return Outcome::TrueSilence;
    throw ValidationError("unknown outcome code '" + std::string(code) + "'");
}

void OutcomeCounts::add(Outcome outcome) {
    switch (outcome) {
        case Outcome::TrueCall: ++tc; break;
        case Outcome::TrueMissedCall: ++tmc; break;
        case Outcome::FalseSilence: ++fs; break;
        case Outcome::FalseCall: ++fc; break;
        case Outcome::TrueSilence: ++ts; break;
    }
}

OutcomeCounts& OutcomeCounts::operator+=(const OutcomeCounts& other) {
    tc += other.tc;
    tmc += other.tmc;
    fs += other.fs;
    fc += other.fc;
    ts += other.ts;
    return *this;
}

MetricValue::MetricValue(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 1.0)) {
        throw ValidationError("metric value outside [0, 1]: " + std::to_string(value));
    }
}

MetricValue MetricValue::ratio(std::int64_t numerator, std::int64_t denominator) {
    if (denominator == 0) return MetricValue{};
    return MetricValue(static_cast<double>(numerator) / static_cast<double>(denominator));
}

bool ranks_before(const ScoredGalleryItem& a, const ScoredGalleryItem& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    if (a.frame != b.frame) return a.frame < b.frame;
    return a.det_index < b.det_index;
}

std::vector<ScoredGalleryItem> rank_gallery(std::span<const ScoredGalleryItem> gallery) {
    for (const auto& item : gallery) {
        if (!(item.similarity >= 0.0 && item.similarity <= 1.0)) {
            throw ValidationError("gallery item " + item.item_id + " has similarity " +
                                  std::to_string(item.similarity) + " outside [0, 1]");
        }
    }
    std::vector<ScoredGalleryItem> ranked(gallery.begin(), gallery.end());
    std::sort(ranked.begin(), ranked.end(), ranks_before);
    return ranked;
}

GallerySummary summarize_ranked(std::span<const ScoredGalleryItem> ranked,
                                std::string_view query_identity) {
    GallerySummary summary;
    if (ranked.empty()) return summary;
    summary.max_similarity = ranked.front().similarity;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (ranked[i].true_identity && *ranked[i].true_identity == query_identity) {
            summary.first_match_rank = i + 1;
            break;
        }
    }
    return summary;
}

Outcome decide_outcome(bool query_present, const GallerySummary& summary, const EvalParams& params) {
    const bool alert = summary.max_similarity && *summary.max_similarity >= params.beta;
    if (!alert) return query_present ? Outcome::FalseSilence : Outcome::TrueSilence;
    if (!query_present) return Outcome::FalseCall;
    const bool in_top = summary.first_match_rank &&
                        *summary.first_match_rank <= static_cast<std::size_t>(params.eta);
    return in_top ? Outcome::TrueCall : Outcome::TrueMissedCall;
}

Outcome classify_outcome(bool query_present,
                         std::span<const ScoredGalleryItem> gallery,
                         std::string_view query_identity,
                         const EvalParams& params) {
    validate(params);
    const auto ranked = rank_gallery(gallery);
    return decide_outcome(query_present, summarize_ranked(ranked, query_identity), params);
}

MetricValue finding_rate(const OutcomeCounts& counts) {
    return MetricValue::ratio(counts.tc, counts.tc + counts.tmc + counts.fs);
}

MetricValue true_validation_rate(const OutcomeCounts& counts) {
    return MetricValue::ratio(counts.tc, counts.tc + counts.tmc + counts.fc);
}

OutcomeCounts aggregate(std::span<const Outcome> outcomes) {
    OutcomeCounts counts;
    for (Outcome o : outcomes) counts.add(o);
    return counts;
}

}  // namespace ffprid
