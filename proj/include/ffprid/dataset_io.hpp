#pragma once

// Ground truth, detection and similarity-score files; timeline segmentation;
// IoU-based identity labeling of detections.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ffprid/core_model.hpp"
#include "ffprid/geometry.hpp"

namespace ffprid {

inline constexpr std::string_view kCompactGroundTruthHeader = "id,fr,s,ulx,uly,brx,bry";
inline constexpr double kDefaultIouThreshold = 0.5;

enum class BoxForm {
    Compact,   // only the initial box at the first frame
    PerFrame,  // one box for every frame in [first_frame, end_frame())
};

struct GroundTruthTrack {
    std::string id;
    int first_frame = 0;
    int frame_count = 1;
    BoxForm form = BoxForm::Compact;
    std::vector<BoundingBox> boxes;  // size 1 for Compact, frame_count for PerFrame

    int end_frame() const { return first_frame + frame_count; }
    bool covers(int frame) const { return frame >= first_frame && frame < end_frame(); }
    /// Box at a frame, when this track knows it.
    std::optional<BoundingBox> box_at(int frame) const;

    friend bool operator==(const GroundTruthTrack&, const GroundTruthTrack&) = default;
};

struct GroundTruthCapabilities {
    bool presence = true;
    bool detection_eval = false;
    bool gallery_labeling = false;
};

GroundTruthCapabilities capabilities(std::span<const GroundTruthTrack> tracks);

/// Parses either the compact CSV form or the per-frame JSON Lines form,
/// chosen by the first non-blank character. Errors carry line numbers.
std::vector<GroundTruthTrack> parse_ground_truth_text(std::string_view text);
std::vector<GroundTruthTrack> parse_ground_truth(const std::filesystem::path& path);

/// Tracks must all be Compact (compact) or all PerFrame (full).
void write_ground_truth_compact(std::span<const GroundTruthTrack> tracks, std::ostream& out);
void write_ground_truth_full(std::span<const GroundTruthTrack> tracks, std::ostream& out);

/// Per-frame boxes for detection evaluation. Throws ValidationError unless
/// every track carries per-frame boxes.
GroundTruthByFrame ground_truth_by_frame(std::span<const GroundTruthTrack> tracks);

std::vector<DetectionRecord> parse_detections_text(std::string_view text);
std::vector<DetectionRecord> parse_detections(const std::filesystem::path& path);
void write_detections(std::span<const DetectionRecord> dets, std::ostream& out);

struct SimilarityRecord {
    std::string query_id;
    std::string item_id;
    double similarity = 0.0;
};

std::vector<SimilarityRecord> parse_scores_text(std::string_view text);
std::vector<SimilarityRecord> parse_scores(const std::filesystem::path& path);
void write_scores(std::span<const SimilarityRecord> scores, std::ostream& out);

struct Segment {
    int index = 0;
    int start = 0;  // inclusive
    int end = 0;    // exclusive

    int length() const { return end - start; }
    bool contains(int frame) const { return frame >= start && frame < end; }
    friend bool operator==(const Segment&, const Segment&) = default;
};

/// ceil(total_frames / tau) segments; every one but the last spans tau frames.
std::vector<Segment> segment_timeline(int total_frames, int tau);

struct QueryPresence {
    bool present = false;
    bool identity_known = false;  // false means no track carries this id
};

QueryPresence query_presence(std::span<const GroundTruthTrack> tracks,
                             std::string_view query_id,
                             const Segment& segment);

inline constexpr std::string_view kUnknownLabel = "unknown";
inline constexpr std::string_view kUnlabelableLabel = "unlabelable";

struct LabelingResult {
    std::vector<ScoredGalleryItem> items;  // similarity still 0
    std::size_t matched = 0;
    std::size_t unknown = 0;
    std::size_t unlabelable = 0;
};

/// Labels each detection with the identity of the highest-IoU ground-truth
/// box in its frame (ties go to the smaller identity string) when that IoU is
/// at least iou_threshold. A detection falls back to "unlabelable" when a
/// compact-form track covers its frame without a box for it.
LabelingResult label_gallery(std::span<const DetectionRecord> detections,
                             std::span<const GroundTruthTrack> tracks,
                             double iou_threshold = kDefaultIouThreshold);

/// 1 + the last frame referenced by any track or detection.
int infer_total_frames(std::span<const GroundTruthTrack> tracks, std::span<const DetectionRecord> detections);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace ffprid
