#include "ffprid/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ffprid/error.hpp"

namespace ffprid {

using nlohmann::json;

namespace {

class WorldRng {
public:
    explicit WorldRng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi) {
        const double span = static_cast<double>(hi) - lo + 1.0;
        return std::min(hi, lo + static_cast<int>(std::floor(uniform() * span)));
    }

    int poisson(double mean) {
        if (mean <= 0.0) return 0;
        const double limit = std::exp(-mean);
        int k = 0;
        double p = uniform();
        while (p > limit) {
            ++k;
            p *= uniform();
        }
        return k;
    }

private:
    std::mt19937_64 engine_;
};

void check_rate(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(std::string(name) + " must lie in [0, 1]");
}

void check_interval(const ScoreInterval& s, const char* name) {
    if (!(s.lo >= 0.0 && s.hi <= 1.0 && s.lo <= s.hi)) {
        throw ValidationError(std::string(name) + " must be an interval [lo, hi] within [0, 1]");
    }
}

ScoreInterval interval_from_json(const json& j, const char* name) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
        throw ValidationError(std::string(name) + " must be a two-element array [lo, hi]");
    }
    return {j[0].get<double>(), j[1].get<double>()};
}

struct Trajectory {
    int start = 0;
    int length = 1;
    double w = 0, h = 0;
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    BoundingBox box_at(int frame) const {
        const double t = length > 1 ? static_cast<double>(frame - start) / (length - 1) : 0.0;
        const double cx = x0 + (x1 - x0) * t;
        const double cy = y0 + (y1 - y0) * t;
        return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
    }
};

}  // namespace

void validate(const SyntheticWorldConfig& c) {
    if (c.total_frames < 1) throw ValidationError("total_frames must be >= 1");
    if (c.num_identities < 1) throw ValidationError("num_identities must be >= 1");
    check_rate(c.miss_rate, "miss_rate");
    check_rate(c.false_positive_rate, "false_positive_rate");
    if (!(c.jitter >= 0.0 && c.jitter < kMinBoxWidth / 2)) {
        throw ValidationError("jitter must lie in [0, " + std::to_string(kMinBoxWidth / 2) + ")");
    }
    check_interval(c.match_similarity, "match_similarity");
    check_interval(c.nonmatch_similarity, "nonmatch_similarity");
    if (c.frame_width < kMaxBoxWidth || c.frame_height < kMaxBoxWidth * kMaxBoxAspect) {
        throw ValidationError("frame is too small for the generated boxes");
    }
    if (c.min_track_frames < 1 || c.max_track_frames < c.min_track_frames) {
        throw ValidationError("track length bounds must satisfy 1 <= min_track_frames <= max_track_frames");
    }
    std::set<std::string> seen;
    for (const auto& q : c.queries) {
        bool known = false;
        for (int i = 0; i < c.num_identities && !known; ++i) known = identity_name(i) == q;
        if (!known) throw ValidationError("query '" + q + "' is not a generated identity");
        if (!seen.insert(q).second) throw ValidationError("query '" + q + "' listed twice");
    }
}

SyntheticWorldConfig parse_synthetic_config(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("malformed synthetic config: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("synthetic config must be a JSON object");

    SyntheticWorldConfig c;
    for (const auto& [key, v] : j.items()) {
        auto num = [&]() {
            if (!v.is_number()) throw ValidationError("config key '" + key + "' must be a number");
            return v.get<double>();
        };
        auto integer = [&]() {
            if (!v.is_number_integer()) throw ValidationError("config key '" + key + "' must be an integer");
            return v.get<std::int64_t>();
        };
        if (key == "seed") {
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
                throw ValidationError("config key 'seed' must be a non-negative integer");
            }
            c.seed = v.get<std::uint64_t>();
        } else if (key == "total_frames") {
            c.total_frames = static_cast<int>(integer());
        } else if (key == "num_identities") {
            c.num_identities = static_cast<int>(integer());
        } else if (key == "queries") {
            if (!v.is_array()) throw ValidationError("config key 'queries' must be an array of strings");
            c.queries.clear();
            for (const auto& q : v) {
                if (!q.is_string()) throw ValidationError("config key 'queries' must be an array of strings");
                c.queries.push_back(q.get<std::string>());
            }
        } else if (key == "miss_rate") {
            c.miss_rate = num();
        } else if (key == "false_positive_rate") {
            c.false_positive_rate = num();
        } else if (key == "jitter") {
            c.jitter = num();
        } else if (key == "match_similarity") {
            c.match_similarity = interval_from_json(v, "match_similarity");
        } else if (key == "nonmatch_similarity") {
            c.nonmatch_similarity = interval_from_json(v, "nonmatch_similarity");
        } else if (key == "frame_width") {
            c.frame_width = static_cast<int>(integer());
        } else if (key == "frame_height") {
            c.frame_height = static_cast<int>(integer());
        } else if (key == "min_track_frames") {
            c.min_track_frames = static_cast<int>(integer());
        } else if (key == "max_track_frames") {
            c.max_track_frames = static_cast<int>(integer());
        } else {
            throw ValidationError("unknown synthetic config key '" + key + "'");
        }
    }
    validate(c);
    return c;
}

std::string synthetic_config_to_json(const SyntheticWorldConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["total_frames"] = c.total_frames;
    j["num_identities"] = c.num_identities;
    j["queries"] = c.queries;
    j["miss_rate"] = c.miss_rate;
    j["false_positive_rate"] = c.false_positive_rate;
    j["jitter"] = c.jitter;
    j["match_similarity"] = json::array({c.match_similarity.lo, c.match_similarity.hi});
    j["nonmatch_similarity"] = json::array({c.nonmatch_similarity.lo, c.nonmatch_similarity.hi});
    j["frame_width"] = c.frame_width;
    j["frame_height"] = c.frame_height;
    j["min_track_frames"] = c.min_track_frames;
    j["max_track_frames"] = c.max_track_frames;
    return j.dump(2);
}

std::string identity_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "p%03d", index);
    return buf;
}

SyntheticWorld generate_synthetic_world(const SyntheticWorldConfig& config) {
    validate(config);
    WorldRng rng(config.seed);

    SyntheticWorld world;
    world.config = config;
    world.total_frames = config.total_frames;
    world.queries = config.queries;
    if (world.queries.empty()) {
        for (int i = 0; i < std::min(4, config.num_identities); ++i) world.queries.push_back(identity_name(i));
    }

    const double fw = config.frame_width;
    const double fh = config.frame_height;
    std::vector<Trajectory> paths;
    for (int i = 0; i < config.num_identities; ++i) {
        Trajectory p;
        const int max_len = std::min(config.max_track_frames, config.total_frames);
        const int min_len = std::min(config.min_track_frames, max_len);
        p.length = rng.uniform_int(min_len, max_len);
        p.start = rng.uniform_int(0, config.total_frames - p.length);
        p.w = rng.uniform(kMinBoxWidth, kMaxBoxWidth);
        p.h = p.w * rng.uniform(kMinBoxAspect, kMaxBoxAspect);
        p.x0 = rng.uniform(p.w / 2, fw - p.w / 2);
        p.y0 = rng.uniform(p.h / 2, fh - p.h / 2);
        p.x1 = rng.uniform(p.w / 2, fw - p.w / 2);
        p.y1 = rng.uniform(p.h / 2, fh - p.h / 2);
        paths.push_back(p);

        GroundTruthTrack t;
        t.id = identity_name(i);
        t.first_frame = p.start;
        t.frame_count = p.length;
        t.form = BoxForm::PerFrame;
        t.boxes.reserve(static_cast<std::size_t>(p.length));
        for (int f = p.start; f < p.start + p.length; ++f) t.boxes.push_back(p.box_at(f));
        world.tracks.push_back(std::move(t));
    }

    const double j = config.jitter;
    for (int f = 0; f < config.total_frames; ++f) {
        int det_index = 0;
        for (int i = 0; i < config.num_identities; ++i) {
            const auto& p = paths[static_cast<std::size_t>(i)];
            if (f < p.start || f >= p.start + p.length) continue;
            if (rng.uniform() < config.miss_rate) continue;
            BoundingBox b = p.box_at(f);
            b.ulx += rng.uniform(-j, j);
            b.uly += rng.uniform(-j, j);
            b.brx += rng.uniform(-j, j);
            b.bry += rng.uniform(-j, j);
            const double conf = rng.uniform(0.5, 1.0);
            world.detections.push_back({f, det_index++, b, conf, std::nullopt});
            world.detection_truth.push_back(identity_name(i));
        }
        const int spurious = rng.poisson(config.false_positive_rate);
        for (int s = 0; s < spurious; ++s) {
            const double w = rng.uniform(kMinBoxWidth, kMaxBoxWidth);
            const double h = w * rng.uniform(kMinBoxAspect, kMaxBoxAspect);
            const double cx = rng.uniform(w / 2, fw - w / 2);
            const double cy = rng.uniform(h / 2, fh - h / 2);
            const double conf = rng.uniform();
            world.detections.push_back({f, det_index++, {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}, conf, std::nullopt});
            world.detection_truth.push_back(std::nullopt);
        }
    }

    world.scores.reserve(world.detections.size() * world.queries.size());
    for (std::size_t d = 0; d < world.detections.size(); ++d) {
        const auto& det = world.detections[d];
        const auto item_id = make_item_id(det.frame, det.det_index);
        for (const auto& q : world.queries) {
            const bool match = world.detection_truth[d] && *world.detection_truth[d] == q;
            const auto& dist = match ? config.match_similarity : config.nonmatch_similarity;
            world.scores.push_back({q, item_id, rng.uniform(dist.lo, dist.hi)});
        }
    }
    return world;
}

WorldFiles WorldFiles::in(const std::filesystem::path& dir) {
    return {dir / "ground_truth.jsonl", dir / "ground_truth_compact.csv", dir / "detections.jsonl",
            dir / "scores.jsonl", dir / "world.json"};
}

WorldFiles write_world(const SyntheticWorld& world, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
    const auto files = WorldFiles::in(dir);

    std::ostringstream gt;
    write_ground_truth_full(world.tracks, gt);
    write_text_file(files.ground_truth, gt.str());

    std::vector<GroundTruthTrack> compact;
    for (const auto& t : world.tracks) {
        compact.push_back({t.id, t.first_frame, t.frame_count, BoxForm::Compact, {t.boxes.front()}});
    }
    std::ostringstream gtc;
    write_ground_truth_compact(compact, gtc);
    write_text_file(files.ground_truth_compact, gtc.str());

    std::ostringstream det;
    write_detections(world.detections, det);
    write_text_file(files.detections, det.str());

    std::ostringstream sc;
    write_scores(world.scores, sc);
    write_text_file(files.scores, sc.str());

    json m;
    m["total_frames"] = world.total_frames;
    m["queries"] = world.queries;
    m["seed"] = world.config.seed;
    m["config"] = json::parse(synthetic_config_to_json(world.config));
    write_text_file(files.manifest, m.dump(2) + "\n");
    return files;
}

WorldManifest read_world_manifest(const std::filesystem::path& path) {
    const auto text = read_text_file(path);
    try {
        const auto j = json::parse(text);
        WorldManifest m;
        m.total_frames = j.at("total_frames").get<int>();
        m.queries = j.at("queries").get<std::vector<std::string>>();
        m.seed = j.value("seed", std::uint64_t{0});
        return m;
    } catch (const json::exception& e) {
        throw ValidationError("malformed world manifest '" + path.string() + "': " + e.what());
    }
}

}  // namespace ffprid
