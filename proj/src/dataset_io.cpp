#include "ffprid/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ffprid/error.hpp"

namespace ffprid {

using nlohmann::json;

namespace {

std::string line_prefix(std::size_t line_no) {
    return "line " + std::to_string(line_no) + ": ";
}

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

// Calls fn(line_no, line) for every non-blank line.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        ++line_no;
        const auto line = trim(text.substr(pos, nl - pos));
        if (!line.empty()) fn(line_no, line);
        pos = nl + 1;
    }
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const auto c = line.find(',', pos);
        out.push_back(trim(line.substr(pos, c == std::string_view::npos ? std::string_view::npos : c - pos)));
        if (c == std::string_view::npos) break;
        pos = c + 1;
    }
    return out;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no, const char* what) {
    T value{};
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, value);
    if (ec != std::errc{} || ptr != end || field.empty()) {
        throw ValidationError(line_prefix(line_no) + "cannot parse " + what + " from '" + std::string(field) + "'");
    }
    return value;
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

json parse_json_line(std::string_view line, std::size_t line_no) {
    try {
        auto j = json::parse(line);
        if (!j.is_object()) throw ValidationError(line_prefix(line_no) + "expected a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw ValidationError(line_prefix(line_no) + "malformed JSON: " + e.what());
    }
}

template <typename T>
T require_field(const json& j, const char* key, std::size_t line_no) {
    const auto it = j.find(key);
    if (it == j.end()) throw ValidationError(line_prefix(line_no) + "missing field '" + key + "'");
    try {
        if constexpr (std::is_same_v<T, int>) {
            if (!it->is_number_integer()) throw ValidationError("");
        } else if constexpr (std::is_same_v<T, double>) {
            if (!it->is_number()) throw ValidationError("");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!it->is_string()) throw ValidationError("");
        }
        return it->get<T>();
    } catch (const std::exception&) {
        throw ValidationError(line_prefix(line_no) + "field '" + key + "' has the wrong type");
    }
}

BoundingBox bbox_field(const json& j, std::size_t line_no) {
    const auto it = j.find("bbox");
    if (it == j.end() || !it->is_array() || it->size() != 4) {
        throw ValidationError(line_prefix(line_no) + "field 'bbox' must be [ulx, uly, brx, bry]");
    }
    double v[4];
    for (int i = 0; i < 4; ++i) {
        if (!(*it)[i].is_number()) {
            throw ValidationError(line_prefix(line_no) + "field 'bbox' must hold numbers");
        }
        v[i] = (*it)[i].get<double>();
    }
    BoundingBox box{v[0], v[1], v[2], v[3]};
    if (!box.valid()) throw ValidationError(line_prefix(line_no) + "bounding box has non-positive extent");
    return box;
}

json bbox_json(const BoundingBox& b) {
    return json::array({b.ulx, b.uly, b.brx, b.bry});
}

bool track_less(const GroundTruthTrack& a, const GroundTruthTrack& b) {
    if (a.id != b.id) return a.id < b.id;
    return a.first_frame < b.first_frame;
}

std::vector<GroundTruthTrack> parse_compact(std::string_view text) {
    std::vector<GroundTruthTrack> tracks;
    std::vector<std::size_t> lines;
    bool first = true;
    for_each_line(text, [&](std::size_t line_no, std::string_view line) {
        if (first) {
            first = false;
            if (line == kCompactGroundTruthHeader) return;
        }
        const auto f = split_csv(line);
        if (f.size() != 7) {
            throw ValidationError(line_prefix(line_no) + "expected 7 fields (id,fr,s,ulx,uly,brx,bry), got " +
                                  std::to_string(f.size()));
        }
        if (f[0].empty()) throw ValidationError(line_prefix(line_no) + "empty identity");
        GroundTruthTrack t;
        t.id = std::string(f[0]);
        t.first_frame = parse_number<int>(f[1], line_no, "fr");
        t.frame_count = parse_number<int>(f[2], line_no, "s");
        if (t.first_frame < 0) throw ValidationError(line_prefix(line_no) + "fr must be non-negative");
        if (t.frame_count < 1) throw ValidationError(line_prefix(line_no) + "s must be >= 1");
        const BoundingBox box{parse_number<double>(f[3], line_no, "ulx"), parse_number<double>(f[4], line_no, "uly"),
                              parse_number<double>(f[5], line_no, "brx"), parse_number<double>(f[6], line_no, "bry")};
        if (!box.valid()) throw ValidationError(line_prefix(line_no) + "bounding box has non-positive extent");
        t.form = BoxForm::Compact;
        t.boxes = {box};
        tracks.push_back(std::move(t));
        lines.push_back(line_no);
    });

    std::vector<std::size_t> order(tracks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return track_less(tracks[a], tracks[b]); });
    for (std::size_t k = 1; k < order.size(); ++k) {
        const auto& prev = tracks[order[k - 1]];
        const auto& cur = tracks[order[k]];
        if (prev.id == cur.id && cur.first_frame < prev.end_frame()) {
            throw ValidationError(line_prefix(std::max(lines[order[k - 1]], lines[order[k]])) + "identity '" +
                                  cur.id + "' has overlapping frame ranges");
        }
    }
    std::vector<GroundTruthTrack> sorted;
    sorted.reserve(tracks.size());
    for (std::size_t i : order) sorted.push_back(std::move(tracks[i]));
    return sorted;
}

std::vector<GroundTruthTrack> parse_full(std::string_view text) {
    std::map<std::string, std::map<int, BoundingBox>> per_id;
    for_each_line(text, [&](std::size_t line_no, std::string_view line) {
        const auto j = parse_json_line(line, line_no);
        const int frame = require_field<int>(j, "frame", line_no);
        auto id = require_field<std::string>(j, "id", line_no);
        if (frame < 0) throw ValidationError(line_prefix(line_no) + "frame must be non-negative");
        if (id.empty()) throw ValidationError(line_prefix(line_no) + "empty identity");
        const auto box = bbox_field(j, line_no);
        auto [it, inserted] = per_id[id].emplace(frame, box);
        if (!inserted) {
            throw ValidationError(line_prefix(line_no) + "duplicate record for identity '" + id + "' at frame " +
                                  std::to_string(frame));
        }
    });

    // Each contiguous run of frames becomes one track.
    std::vector<GroundTruthTrack> tracks;
    for (auto& [id, frames] : per_id) {
        GroundTruthTrack cur;
        for (const auto& [frame, box] : frames) {
            if (!cur.boxes.empty() && frame == cur.end_frame()) {
                cur.boxes.push_back(box);
                ++cur.frame_count;
                continue;
            }
            if (!cur.boxes.empty()) tracks.push_back(std::move(cur));
            cur = GroundTruthTrack{id, frame, 1, BoxForm::PerFrame, {box}};
        }
        if (!cur.boxes.empty()) tracks.push_back(std::move(cur));
    }
    return tracks;
}

}  // namespace

std::optional<BoundingBox> GroundTruthTrack::box_at(int frame) const {
    if (!covers(frame)) return std::nullopt;
    if (form == BoxForm::Compact) {
        if (frame == first_frame && !boxes.empty()) return boxes.front();
        return std::nullopt;
    }
    return boxes[static_cast<std::size_t>(frame - first_frame)];
}

GroundTruthCapabilities capabilities(std::span<const GroundTruthTrack> tracks) {
    GroundTruthCapabilities caps;
    const bool all_per_frame = std::all_of(tracks.begin(), tracks.end(), [](const auto& t) {
        return t.form == BoxForm::PerFrame || t.frame_count == 1;
    });
    caps.detection_eval = all_per_frame;
    caps.gallery_labeling = all_per_frame;
    return caps;
}

std::vector<GroundTruthTrack> parse_ground_truth_text(std::string_view text) {
    const auto b = text.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    if (text[b] == '{') return parse_full(text);
    return parse_compact(text);
}

std::vector<GroundTruthTrack> parse_ground_truth(const std::filesystem::path& path) {
    return parse_ground_truth_text(read_text_file(path));
}

void write_ground_truth_compact(std::span<const GroundTruthTrack> tracks, std::ostream& out) {
    out << kCompactGroundTruthHeader << '\n';
    for (const auto& t : tracks) {
        if (t.form != BoxForm::Compact) throw ValidationError("compact writer given a per-frame track");
        const auto& b = t.boxes.front();
        out << t.id << ',' << t.first_frame << ',' << t.frame_count << ',' << format_double(b.ulx) << ','
            << format_double(b.uly) << ',' << format_double(b.brx) << ',' << format_double(b.bry) << '\n';
    }
}

void write_ground_truth_full(std::span<const GroundTruthTrack> tracks, std::ostream& out) {
    struct Row {
        int frame;
        const std::string* id;
        const BoundingBox* box;
    };
    std::vector<Row> rows;
    for (const auto& t : tracks) {
        if (t.form != BoxForm::PerFrame) throw ValidationError("full writer given a compact track");
        for (int k = 0; k < t.frame_count; ++k) rows.push_back({t.first_frame + k, &t.id, &t.boxes[k]});
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.frame != b.frame) return a.frame < b.frame;
        return *a.id < *b.id;
    });
    for (const auto& r : rows) {
        json j;
        j["frame"] = r.frame;
        j["id"] = *r.id;
        j["bbox"] = bbox_json(*r.box);
        out << j.dump() << '\n';
    }
}

GroundTruthByFrame ground_truth_by_frame(std::span<const GroundTruthTrack> tracks) {
    GroundTruthByFrame out;
    for (const auto& t : tracks) {
        if (t.form == BoxForm::Compact && t.frame_count > 1) {
            throw ValidationError("ground truth track '" + t.id +
                                  "' only has an initial box; per-frame boxes are needed for detection evaluation");
        }
        for (int f = t.first_frame; f < t.end_frame(); ++f) out[f].push_back({t.id, *t.box_at(f)});
    }
    for (auto& [f, boxes] : out) {
        std::sort(boxes.begin(), boxes.end(), [](const auto& a, const auto& b) { return a.identity < b.identity; });
    }
    return out;
}

std::vector<DetectionRecord> parse_detections_text(std::string_view text) {
    std::vector<DetectionRecord> dets;
    std::map<std::pair<int, int>, std::size_t> seen;
    for_each_line(text, [&](std::size_t line_no, std::string_view line) {
        const auto j = parse_json_line(line, line_no);
        DetectionRecord d;
        d.frame = require_field<int>(j, "frame", line_no);
        d.det_index = require_field<int>(j, "det_index", line_no);
        d.bbox = bbox_field(j, line_no);
        d.confidence = require_field<double>(j, "confidence", line_no);
        if (d.frame < 0 || d.det_index < 0) {
            throw ValidationError(line_prefix(line_no) + "frame and det_index must be non-negative");
        }
        if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) {
            throw ValidationError(line_prefix(line_no) + "confidence must lie in [0, 1]");
        }
        if (const auto it = j.find("crop"); it != j.end() && !it->is_null()) {
            if (!it->is_string()) throw ValidationError(line_prefix(line_no) + "field 'crop' must be a string");
            d.crop_ref = it->get<std::string>();
        }
        const auto [it, inserted] = seen.emplace(std::pair{d.frame, d.det_index}, line_no);
        if (!inserted) {
            throw ValidationError(line_prefix(line_no) + "duplicate detection " + make_item_id(d.frame, d.det_index) +
                                  " (first seen on line " + std::to_string(it->second) + ")");
        }
        dets.push_back(std::move(d));
    });
    std::sort(dets.begin(), dets.end(), [](const auto& a, const auto& b) {
        if (a.frame != b.frame) return a.frame < b.frame;
        return a.det_index < b.det_index;
    });
    return dets;
}

std::vector<DetectionRecord> parse_detections(const std::filesystem::path& path) {
    return parse_detections_text(read_text_file(path));
}

void write_detections(std::span<const DetectionRecord> dets, std::ostream& out) {
    for (const auto& d : dets) {
        json j;
        j["frame"] = d.frame;
        j["det_index"] = d.det_index;
        j["bbox"] = bbox_json(d.bbox);
        j["confidence"] = d.confidence;
        if (d.crop_ref) j["crop"] = *d.crop_ref;
        out << j.dump() << '\n';
    }
}

std::vector<SimilarityRecord> parse_scores_text(std::string_view text) {
    std::vector<SimilarityRecord> scores;
    std::set<std::pair<std::string, std::string>> seen;
    for_each_line(text, [&](std::size_t line_no, std::string_view line) {
        const auto j = parse_json_line(line, line_no);
        SimilarityRecord r;
        r.query_id = require_field<std::string>(j, "query_id", line_no);
        r.item_id = require_field<std::string>(j, "item_id", line_no);
        r.similarity = require_field<double>(j, "similarity", line_no);
        if (!(r.similarity >= 0.0 && r.similarity <= 1.0)) {
            throw ValidationError(line_prefix(line_no) + "similarity must lie in [0, 1]");
        }
        if (!seen.emplace(r.query_id, r.item_id).second) {
            throw ValidationError(line_prefix(line_no) + "duplicate score for query '" + r.query_id + "' and item '" +
                                  r.item_id + "'");
        }
        scores.push_back(std::move(r));
    });
    return scores;
}

std::vector<SimilarityRecord> parse_scores(const std::filesystem::path& path) {
    return parse_scores_text(read_text_file(path));
}

void write_scores(std::span<const SimilarityRecord> scores, std::ostream& out) {
    for (const auto& r : scores) {
        json j;
        j["query_id"] = r.query_id;
        j["item_id"] = r.item_id;
        j["similarity"] = r.similarity;
        out << j.dump() << '\n';
    }
}

std::vector<Segment> segment_timeline(int total_frames, int tau) {
    if (total_frames < 1) throw ValidationError("total_frames must be >= 1");
    if (tau < 1) throw ValidationError("tau must be >= 1");
    std::vector<Segment> segments;
    segments.reserve(static_cast<std::size_t>((total_frames + tau - 1) / tau));
    for (int start = 0, index = 0; start < total_frames; start += tau, ++index) {
        segments.push_back({index, start, std::min(start + tau, total_frames)});
    }
    return segments;
}

QueryPresence query_presence(std::span<const GroundTruthTrack> tracks,
                             std::string_view query_id,
                             const Segment& segment) {
    QueryPresence p;
    for (const auto& t : tracks) {
        if (t.id != query_id) continue;
        p.identity_known = true;
        if (t.first_frame < segment.end && segment.start < t.end_frame()) {
            p.present = true;
            break;
        }
    }
    return p;
}

LabelingResult label_gallery(std::span<const DetectionRecord> detections,
                             std::span<const GroundTruthTrack> tracks,
                             double iou_threshold) {
    std::map<int, std::vector<const GroundTruthTrack*>> by_frame;
    std::vector<const GroundTruthTrack*> compact_spans;
    for (const auto& t : tracks) {
        if (t.form == BoxForm::PerFrame) {
            for (int f = t.first_frame; f < t.end_frame(); ++f) by_frame[f].push_back(&t);
        } else {
            by_frame[t.first_frame].push_back(&t);
            if (t.frame_count > 1) compact_spans.push_back(&t);
        }
    }

    LabelingResult result;
    result.items.reserve(detections.size());
    for (const auto& d : detections) {
        ScoredGalleryItem item;
        item.item_id = make_item_id(d.frame, d.det_index);
        item.frame = d.frame;
        item.det_index = d.det_index;
        item.bbox = d.bbox;
        item.crop_ref = d.crop_ref;

        const GroundTruthTrack* best = nullptr;
        double best_iou = -1.0;
        if (const auto it = by_frame.find(d.frame); it != by_frame.end()) {
            for (const auto* t : it->second) {
                const double v = iou(d.bbox, *t->box_at(d.frame));
                if (v < iou_threshold) continue;
                if (v > best_iou || (v == best_iou && t->id < best->id)) {
                    best_iou = v;
                    best = t;
                }
            }
        }
        if (best) {
            item.true_identity = best->id;
            item.label = LabelStatus::Matched;
            ++result.matched;
        } else {
            const bool blind = std::any_of(compact_spans.begin(), compact_spans.end(), [&](const auto* t) {
                return t->covers(d.frame) && d.frame != t->first_frame;
            });
            item.label = blind ? LabelStatus::Unlabelable : LabelStatus::Unknown;
            ++(blind ? result.unlabelable : result.unknown);
        }
        result.items.push_back(std::move(item));
    }
    return result;
}

int infer_total_frames(std::span<const GroundTruthTrack> tracks, std::span<const DetectionRecord> detections) {
    int last = -1;
    for (const auto& t : tracks) last = std::max(last, t.end_frame() - 1);
    for (const auto& d : detections) last = std::max(last, d.frame);
    return last + 1;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace ffprid
