#pragma once

// Brute-force reference evaluator. It reads the raw ground-truth, detection
// and score files with its own parsing, and re-derives presence, identity
// labels, ranking and thresholding by direct enumeration. It shares only
// plain data types with the main library so it can serve as a test oracle
// for the pipeline engine.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ffprid/core_model.hpp"

namespace ffprid {

struct OracleReport {
    OutcomeCounts counts;
    std::optional<double> fr;
    std::optional<double> tvr;
};

class BruteForceOracle {
public:
    BruteForceOracle(const std::filesystem::path& ground_truth,
                     const std::filesystem::path& detections,
                     const std::filesystem::path& scores,
                     double iou_threshold = 0.5);

    /// Counts over every segment of [0, total_frames) for one query. Beta is
    /// used as given, so a value above 1 simply never alerts.
    OracleReport metrics(const std::string& query_id, const EvalParams& params, int total_frames) const;

    int last_frame() const { return last_frame_; }

private:
    struct Det {
        int frame;
        int index;
        std::string item_id;
        double box[4];
        std::optional<std::string> label;
    };

    std::map<std::string, std::vector<std::pair<int, int>>> presence_;  // id -> [first, end) spans
    std::vector<Det> dets_;  // sorted by frame, then index
    std::map<std::pair<std::string, std::string>, double> scores_;  // (query, item) -> similarity
    int last_frame_ = -1;
};

OracleReport brute_force_metrics(const std::filesystem::path& ground_truth,
                                 const std::filesystem::path& detections,
                                 const std::filesystem::path& scores,
                                 const std::string& query_id,
                                 const EvalParams& params,
                                 int total_frames,
                                 double iou_threshold = 0.5);

}  // namespace ffprid
