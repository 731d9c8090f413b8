#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "ffprid/pipeline.hpp"
#include "ffprid/synthetic.hpp"

namespace ffprid::testing {

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("ffprid_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline PreparedWorld prepare_world(const SyntheticWorld& w, double iou_threshold = kDefaultIouThreshold) {
    EvaluationInputs in;
    in.tracks = w.tracks;
    in.detections = w.detections;
    in.scores = w.scores;
    in.queries = w.queries;
    in.total_frames = w.total_frames;
    in.iou_threshold = iou_threshold;
    return PreparedWorld::prepare(in);
}

// A noisy world whose rates and score overlap vary with the seed.
inline SyntheticWorldConfig varied_config(std::uint64_t seed) {
    std::mt19937_64 rng(seed * 7919 + 3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    SyntheticWorldConfig c;
    c.seed = seed;
    c.total_frames = 200 + static_cast<int>(rng() % 400);
    c.num_identities = 3 + static_cast<int>(rng() % 8);
    c.min_track_frames = 10;
    c.max_track_frames = 250;
    c.miss_rate = 0.4 * unit(rng);
    c.false_positive_rate = unit(rng);
    c.jitter = 15.0 * unit(rng);
    const double match_lo = 0.2 + 0.5 * unit(rng);
    const double nonmatch_hi = 0.4 + 0.5 * unit(rng);
    c.match_similarity = {match_lo, 1.0};
    c.nonmatch_similarity = {0.0, nonmatch_hi};
    return c;
}

inline SweepGrid property_grid() {
    return {{1, 7, 50, 1000}, {1, 2, 5, 20}, beta_grid(0.0, 1.0, 21)};
}

}  // namespace ffprid::testing

#ifdef DOCTEST_LIBRARY_INCLUDED
namespace doctest {
template <>
struct StringMaker<ffprid::OutcomeCounts> {
    static String convert(const ffprid::OutcomeCounts& c) {
        return ("{tc " + std::to_string(c.tc) + ", tmc " + std::to_string(c.tmc) + ", fs " + std::to_string(c.fs) +
                ", fc " + std::to_string(c.fc) + ", ts " + std::to_string(c.ts) + "}")
            .c_str();
    }
};
}  // namespace doctest
#endif
