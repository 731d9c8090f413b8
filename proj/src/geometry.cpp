#include "ffprid/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ffprid/error.hpp"

namespace ffprid {

bool BoundingBox::valid() const {
    return std::isfinite(ulx) && std::isfinite(uly) && std::isfinite(brx) && std::isfinite(bry) &&
           ulx < brx && uly < bry;
}

BoundingBox BoundingBox::make(double ulx, double uly, double brx, double bry) {
    BoundingBox box{ulx, uly, brx, bry};
    validate(box);
    return box;
}

void validate(const BoundingBox& box) {
    if (!box.valid()) {
        throw ValidationError("invalid bounding box (" + std::to_string(box.ulx) + ", " +
                              std::to_string(box.uly) + ", " + std::to_string(box.brx) + ", " +
                              std::to_string(box.bry) + "): extent must be positive");
    }
}

double iou(const BoundingBox& a, const BoundingBox& b) {
    validate(a);
    validate(b);
    const double iw = std::min(a.brx, b.brx) - std::max(a.ulx, b.ulx);
    const double ih = std::min(a.bry, b.bry) - std::max(a.uly, b.uly);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

FrameMatching match_detections(std::span<const DetectionRecord> dets,
                               std::span<const GroundTruthBox> gts,
                               double iou_threshold,
                               std::optional<int> frame) {
    FrameMatching result;
    if (!dets.empty()) {
        const int f = dets.front().frame;
        for (const auto& d : dets) {
            if (d.frame != f) {
                throw ValidationError("match_detections: mixed frame indices " + std::to_string(f) +
                                      " and " + std::to_string(d.frame));
            }
        }
        if (frame && *frame != f) {
            throw ValidationError("match_detections: detections belong to frame " + std::to_string(f) +
                                  ", expected " + std::to_string(*frame));
        }
        result.frame = f;
    } else {
        result.frame = frame.value_or(0);
    }

    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dets[a].confidence > dets[b].confidence;
    });

    std::vector<bool> gt_taken(gts.size(), false);
    std::vector<bool> det_taken(dets.size(), false);
    for (std::size_t di : order) {
        std::optional<std::size_t> best;
        double best_iou = -1.0;
        for (std::size_t gi = 0; gi < gts.size(); ++gi) {
            if (gt_taken[gi]) continue;
            const double v = iou(dets[di].bbox, gts[gi].bbox);
            if (v >= iou_threshold && v > best_iou) {
                best_iou = v;
                best = gi;
            }
        }
        if (best) {
            gt_taken[*best] = true;
            det_taken[di] = true;
            result.pairs.push_back({di, *best, best_iou});
        }
    }
    for (std::size_t di = 0; di < dets.size(); ++di) {
        if (!det_taken[di]) result.unmatched_dets.push_back(di);
    }
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
        if (!gt_taken[gi]) result.unmatched_gts.push_back(gi);
    }
    result.det_confidence.reserve(dets.size());
    for (const auto& d : dets) result.det_confidence.push_back(d.confidence);
    return result;
}

double f1_score(double precision, double recall) {
    const double sum = precision + recall;
    if (sum <= 0.0) return 0.0;
    return 2.0 * precision * recall / sum;
}

DetectionEvalReport precision_recall_f1(std::span<const FrameMatching> frames, double score_threshold) {
    DetectionEvalReport report;
    std::size_t total_gt = 0;
    for (const auto& fm : frames) {
        total_gt += fm.pairs.size() + fm.unmatched_gts.size();
        for (const auto& p : fm.pairs) {
            if (fm.det_confidence[p.det] >= score_threshold) ++report.tp;
        }
        for (std::size_t di : fm.unmatched_dets) {
            if (fm.det_confidence[di] >= score_threshold) ++report.fp;
        }
    }
    report.fn = total_gt - report.tp;
    report.precision_degenerate = report.tp + report.fp == 0;
    report.recall_degenerate = report.tp + report.fn == 0;
    report.precision = report.precision_degenerate
                           ? 0.0
                           : static_cast<double>(report.tp) / static_cast<double>(report.tp + report.fp);
    report.recall = report.recall_degenerate
                        ? 0.0
                        : static_cast<double>(report.tp) / static_cast<double>(report.tp + report.fn);
    report.f1 = f1_score(report.precision, report.recall);
    report.frames.assign(frames.begin(), frames.end());
    return report;
}

std::optional<double> average_precision(const std::vector<bool>& ranked_is_tp, std::size_t total_gt) {
    if (total_gt == 0) return std::nullopt;
    const std::size_t n = ranked_is_tp.size();
    std::vector<double> precision(n);
    std::vector<double> recall(n);
    std::size_t tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (ranked_is_tp[i]) ++tp;
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        recall[i] = static_cast<double>(tp) / static_cast<double>(total_gt);
    }
    // Precision envelope: running maximum from the tail.
    for (std::size_t i = n; i-- > 1;) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (recall[i] > prev_recall) {
            ap += (recall[i] - prev_recall) * precision[i];
            prev_recall = recall[i];
        }
    }
    return std::clamp(ap, 0.0, 1.0);
}

DetectionEvalReport evaluate_detections(std::span<const DetectionRecord> dets,
                                        const GroundTruthByFrame& gts,
                                        double iou_threshold,
                                        double score_threshold) {
    std::map<int, std::vector<DetectionRecord>> by_frame;
    for (const auto& d : dets) by_frame[d.frame].push_back(d);

    std::vector<int> frames;
    for (const auto& [f, _] : by_frame) frames.push_back(f);
    for (const auto& [f, _] : gts) frames.push_back(f);
    std::sort(frames.begin(), frames.end());
    frames.erase(std::unique(frames.begin(), frames.end()), frames.end());

    static const std::vector<DetectionRecord> no_dets;
    static const std::vector<GroundTruthBox> no_gts;

    struct Ranked {
        double confidence;
        int frame;
        int det_index;
        bool tp;
    };
    std::vector<Ranked> ranked;
    std::vector<FrameMatching> matchings;
    matchings.reserve(frames.size());
    std::size_t total_gt = 0;
    for (int f : frames) {
        const auto dit = by_frame.find(f);
        const auto git = gts.find(f);
        const auto& fd = dit == by_frame.end() ? no_dets : dit->second;
        const auto& fg = git == gts.end() ? no_gts : git->second;
        auto fm = match_detections(fd, fg, iou_threshold, f);
        total_gt += fg.size();
        std::vector<bool> is_tp(fd.size(), false);
        for (const auto& p : fm.pairs) is_tp[p.det] = true;
        for (std::size_t i = 0; i < fd.size(); ++i) {
            ranked.push_back({fd[i].confidence, fd[i].frame, fd[i].det_index, is_tp[i]});
        }
        matchings.push_back(std::move(fm));
    }

    auto report = precision_recall_f1(matchings, score_threshold);

    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        if (a.frame != b.frame) return a.frame < b.frame;
        return a.det_index < b.det_index;
    });
    std::vector<bool> is_tp;
    is_tp.reserve(ranked.size());
    for (const auto& r : ranked) is_tp.push_back(r.tp);
    report.ap = average_precision(is_tp, total_gt);
    return report;
}

}  // namespace ffprid
