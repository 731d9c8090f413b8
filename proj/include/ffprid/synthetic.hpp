#pragma once

// Seeded synthetic surveillance worlds: linear pedestrian tracks, a noisy
// detector and a two-distribution similarity model. Used as a desk-scale
// substitute for real annotated video.
//
// Random numbers come from std::mt19937_64 (MT19937-64, fully specified by
// the C++ standard) seeded with the config seed. Uniform reals are built as
// (next() >> 11) * 2^-53, so no implementation-defined distribution is
// involved. Draw order:
//   1. per identity, in id order: track length, start frame, box width,
//      aspect ratio, start centre x/y, end centre x/y;
//   2. per frame, per visible identity in id order: miss draw, then (if
//      detected) four jitter draws and a confidence draw; then the number of
//      spurious boxes (Knuth Poisson sampling with mean false_positive_rate)
//      and, per spurious box, width, aspect, centre x/y, confidence;
//   3. per detection in (frame, det_index) order, per query in config order:
//      one similarity draw.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ffprid/dataset_io.hpp"

namespace ffprid {

struct ScoreInterval {
    double lo = 0.0;
    double hi = 1.0;
};

struct SyntheticWorldConfig {
    std::uint64_t seed = 1;
    int total_frames = 1000;
    int num_identities = 10;
    std::vector<std::string> queries;  // empty means the first min(4, n) identities
    double miss_rate = 0.0;
    double false_positive_rate = 0.0;  // mean spurious boxes per frame
    double jitter = 0.0;               // max per-coordinate offset in pixels
    ScoreInterval match_similarity{0.7, 1.0};
    ScoreInterval nonmatch_similarity{0.0, 0.6};
    int frame_width = 1280;
    int frame_height = 720;
    int min_track_frames = 100;
    int max_track_frames = 600;
};

inline constexpr double kMinBoxWidth = 40.0;
inline constexpr double kMaxBoxWidth = 80.0;
// Box height is width times an aspect drawn from this range.
inline constexpr double kMinBoxAspect = 2.0;
inline constexpr double kMaxBoxAspect = 2.6;

void validate(const SyntheticWorldConfig& config);

/// Strict JSON reader: unknown keys and wrong types are ValidationErrors.
SyntheticWorldConfig parse_synthetic_config(std::string_view json_text);
std::string synthetic_config_to_json(const SyntheticWorldConfig& config);

std::string identity_name(int index);

struct SyntheticWorld {
    SyntheticWorldConfig config;
    int total_frames = 0;
    std::vector<std::string> queries;
    std::vector<GroundTruthTrack> tracks;  // per-frame form
    std::vector<DetectionRecord> detections;
    std::vector<std::optional<std::string>> detection_truth;  // generator identity per detection
    std::vector<SimilarityRecord> scores;
};

SyntheticWorld generate_synthetic_world(const SyntheticWorldConfig& config);

struct WorldFiles {
    std::filesystem::path ground_truth;          // per-frame JSON Lines
    std::filesystem::path ground_truth_compact;  // compact CSV
    std::filesystem::path detections;
    std::filesystem::path scores;
    std::filesystem::path manifest;

    static WorldFiles in(const std::filesystem::path& dir);
};

/// Writes all world files into dir (created if missing).
WorldFiles write_world(const SyntheticWorld& world, const std::filesystem::path& dir);

struct WorldManifest {
    int total_frames = 0;
    std::vector<std::string> queries;
    std::uint64_t seed = 0;
};

WorldManifest read_world_manifest(const std::filesystem::path& path);

}  // namespace ffprid
