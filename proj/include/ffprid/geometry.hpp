#pragma once

// Axis-aligned boxes and single-class (person) detection evaluation.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ffprid {

/// Half-open real rectangle in pixels, upper-left to bottom-right.
struct BoundingBox {
    double ulx = 0.0;
    double uly = 0.0;
    double brx = 1.0;
    double bry = 1.0;

    double width() const { return brx - ulx; }
    double height() const { return bry - uly; }
    double area() const { return width() * height(); }
    bool valid() const;

    /// Builds a box and throws ValidationError on non-positive extent.
    static BoundingBox make(double ulx, double uly, double brx, double bry);

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

void validate(const BoundingBox& box);

double iou(const BoundingBox& a, const BoundingBox& b);

struct DetectionRecord {
    int frame = 0;
    int det_index = 0;
    BoundingBox bbox;
    double confidence = 1.0;
    std::optional<std::string> crop_ref;
};

struct GroundTruthBox {
    std::string identity;
    BoundingBox bbox;
};

struct MatchPair {
    std::size_t det = 0;  // index into the frame's detection list
    std::size_t gt = 0;   // index into the frame's ground-truth list
    double iou = 0.0;
};

struct FrameMatching {
    int frame = 0;
    std::vector<MatchPair> pairs;
    std::vector<std::size_t> unmatched_dets;
    std::vector<std::size_t> unmatched_gts;
    std::vector<double> det_confidence;  // parallel to the input detections
};

/// Greedy one-to-one matching for one frame. Detections are visited by
/// confidence descending (input order on ties) and take the unmatched
/// ground-truth box of highest IoU, provided it reaches iou_threshold.
/// Throws ValidationError if detections span more than one frame.
FrameMatching match_detections(std::span<const DetectionRecord> dets,
                               std::span<const GroundTruthBox> gts,
                               double iou_threshold,
                               std::optional<int> frame = std::nullopt);

struct DetectionEvalReport {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::optional<double> ap;
    bool precision_degenerate = false;  // TP + FP == 0
    bool recall_degenerate = false;     // TP + FN == 0
    std::vector<FrameMatching> frames;
};

/// Harmonic mean; 0 when both inputs are 0.
double f1_score(double precision, double recall);

/// Precision, recall and F1 over all frames. Only detections with
/// confidence >= score_threshold count toward TP and FP.
DetectionEvalReport precision_recall_f1(std::span<const FrameMatching> frames,
                                        double score_threshold = 0.0);

/// All-point interpolated AP for detections already sorted by confidence
/// descending. Returns nullopt when total_gt is 0.
std::optional<double> average_precision(const std::vector<bool>& ranked_is_tp, std::size_t total_gt);

/// Full evaluation: per-frame matching, P/R/F1 at the score threshold and AP
/// over the complete confidence ranking.
using GroundTruthByFrame = std::map<int, std::vector<GroundTruthBox>>;

DetectionEvalReport evaluate_detections(std::span<const DetectionRecord> dets,
                                        const GroundTruthByFrame& gts,
                                        double iou_threshold,
                                        double score_threshold = 0.0);

}  // namespace ffprid
