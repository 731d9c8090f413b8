#pragma once

// End-to-end evaluation: per-segment galleries, outcome classification,
// (tau, beta, eta) sweeps and CSV reports.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ffprid/core_model.hpp"
#include "ffprid/dataset_io.hpp"

namespace ffprid {

struct EvaluationInputs {
    std::vector<GroundTruthTrack> tracks;
    std::vector<DetectionRecord> detections;
    std::vector<SimilarityRecord> scores;
    std::vector<std::string> queries;
    int total_frames = 0;  // 0: infer from tracks and detections
    double iou_threshold = kDefaultIouThreshold;
};

/// Loads the three input files. total_frames 0 means infer.
EvaluationInputs load_inputs(const std::filesystem::path& gt,
                             const std::filesystem::path& detections,
                             const std::filesystem::path& scores,
                             std::vector<std::string> queries,
                             int total_frames = 0,
                             double iou_threshold = kDefaultIouThreshold);

/// Inputs after identity labeling and score indexing. Independent of
/// (tau, beta, eta), so one instance serves a whole sweep.
class PreparedWorld {
public:
    /// Throws ValidationError for an empty query list, duplicate queries, or
    /// score records naming detections that do not exist.
    static PreparedWorld prepare(const EvaluationInputs& inputs);

    int total_frames() const { return total_frames_; }
    const std::vector<std::string>& queries() const { return queries_; }
    const std::vector<GroundTruthTrack>& tracks() const { return tracks_; }
    const std::vector<ScoredGalleryItem>& items() const { return items_; }
    const LabelingResult& labeling() const { return labeling_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    /// Scored gallery of one query over the frames of a segment. Items
    /// without a similarity record for the query are left out.
    std::vector<ScoredGalleryItem> gallery(std::size_t query_index, const Segment& segment) const;
    bool present(std::size_t query_index, const Segment& segment) const;

private:
    int total_frames_ = 0;
    std::vector<std::string> queries_;
    std::vector<GroundTruthTrack> tracks_;
    LabelingResult labeling_;
    std::vector<ScoredGalleryItem> items_;                     // sorted by (frame, det_index)
    std::vector<std::vector<std::optional<double>>> scores_;  // [query][item]
    std::vector<std::string> warnings_;
};

struct SegmentResult {
    Segment segment;
    std::string query_id;
    bool query_present = false;
    Outcome outcome = Outcome::TrueSilence;
    std::optional<double> max_similarity;
    std::vector<ScoredGalleryItem> top_eta;
};

struct PipelineRun {
    EvalParams params;
    int total_frames = 0;
    std::vector<std::string> queries;
    std::vector<SegmentResult> segments;  // query-major, then segment order
    OutcomeCounts counts;
    MetricValue fr;
    MetricValue tvr;
    std::vector<std::string> warnings;
};

PipelineRun run_pipeline(const PreparedWorld& world, const EvalParams& params);

struct SweepGrid {
    std::vector<int> taus;
    std::vector<int> etas;
    std::vector<double> betas;
};

/// Inclusive linear spacing; steps == 1 yields {start}.
std::vector<double> beta_grid(double start, double end, int steps);

struct SweepResult {
    int tau = 1;
    double beta = 0.0;
    int eta = 1;
    OutcomeCounts counts;
    MetricValue fr;
    MetricValue tvr;
};

/// One result per (tau, beta, eta) cell, sorted lexicographically. Output is
/// identical for every worker count (0 picks the hardware concurrency).
std::vector<SweepResult> sweep(const PreparedWorld& world, const SweepGrid& grid, unsigned workers = 0);

inline constexpr std::string_view kSweepCsvHeader = "tau,beta,eta,tc,tmc,fs,fc,ts,fr,tvr";

/// Six significant digits; integral values keep a trailing ".0".
std::string format_real(double value);
std::string format_metric(const MetricValue& value);

std::string format_sweep_csv(const std::vector<SweepResult>& results);
std::vector<SweepResult> parse_sweep_csv(std::string_view text);

/// Writes the sweep CSV and, when requested, one beta curve per (tau, eta)
/// named "<stem>_tau<T>_eta<E>.csv" beside it. Returns every written path.
std::vector<std::filesystem::path> export_results(const std::vector<SweepResult>& results,
                                                  const std::filesystem::path& destination,
                                                  bool write_curves = false);

/// CSV "index,start_frame,end_frame" plus one 0/1 presence column per query.
std::string format_segment_table(const std::vector<Segment>& segments,
                                 const std::vector<std::string>& queries,
                                 const std::vector<GroundTruthTrack>& tracks);

}  // namespace ffprid
