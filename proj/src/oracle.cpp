#include "ffprid/oracle.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ffprid/error.hpp"

namespace ffprid {

using nlohmann::json;

namespace {

std::vector<std::string> lines_of(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("oracle: cannot open '" + path.string() + "'");
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

bool blank(const std::string& s) {
    return s.find_first_not_of(" \t\r") == std::string::npos;
}

json object_on_line(const std::string& s, std::size_t n) {
    json j = json::parse(s, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw ValidationError("oracle: line " + std::to_string(n) + " is not a JSON object");
    }
    return j;
}

double overlap_ratio(const double* a, const double* b) {
    const double x0 = std::max(a[0], b[0]);
    const double y0 = std::max(a[1], b[1]);
    const double x1 = std::min(a[2], b[2]);
    const double y1 = std::min(a[3], b[3]);
    if (x1 <= x0 || y1 <= y0) return 0.0;
    const double inter = (x1 - x0) * (y1 - y0);
    const double area_a = (a[2] - a[0]) * (a[3] - a[1]);
    const double area_b = (b[2] - b[0]) * (b[3] - b[1]);
    return std::clamp(inter / (area_a + area_b - inter), 0.0, 1.0);
}

void read_box(const json& arr, double* out, std::size_t n) {
    if (!arr.is_array() || arr.size() != 4) throw ValidationError("oracle: line " + std::to_string(n) + " bad bbox");
    for (int i = 0; i < 4; ++i) out[i] = arr.at(static_cast<std::size_t>(i)).get<double>();
    if (!(out[0] < out[2] && out[1] < out[3])) {
        throw ValidationError("oracle: line " + std::to_string(n) + " degenerate bbox");
    }
}

}  // namespace

BruteForceOracle::BruteForceOracle(const std::filesystem::path& ground_truth,
                                   const std::filesystem::path& detections,
                                   const std::filesystem::path& scores,
                                   double iou_threshold) try {
    struct GtBox {
        std::string id;
        double box[4];
    };
    std::map<int, std::vector<GtBox>> gt_at;
    std::map<std::string, std::set<int>> frames_of;

    const auto gt_lines = lines_of(ground_truth);
    std::size_t first = 0;
    while (first < gt_lines.size() && blank(gt_lines[first])) ++first;
    const bool jsonl = first < gt_lines.size() && gt_lines[first].find('{') != std::string::npos;
    for (std::size_t n = 0; n < gt_lines.size(); ++n) {
        const auto& s = gt_lines[n];
        if (blank(s)) continue;
        if (jsonl) {
            const auto j = object_on_line(s, n + 1);
            GtBox g;
            g.id = j.at("id").get<std::string>();
            read_box(j.at("bbox"), g.box, n + 1);
            const int f = j.at("frame").get<int>();
            if (!frames_of[g.id].insert(f).second) {
                throw ValidationError("oracle: line " + std::to_string(n + 1) + " duplicate identity frame");
            }
            gt_at[f].push_back(g);
            last_frame_ = std::max(last_frame_, f);
        } else {
            if (s.rfind("id,", 0) == 0) continue;
            std::stringstream ss(s);
            std::string field;
            std::vector<std::string> f;
            while (std::getline(ss, field, ',')) f.push_back(field);
            if (f.size() != 7) throw ValidationError("oracle: line " + std::to_string(n + 1) + " needs 7 fields");
            GtBox g;
            g.id = f[0];
            const int fr = std::stoi(f[1]);
            const int len = std::stoi(f[2]);
            if (len < 1) throw ValidationError("oracle: line " + std::to_string(n + 1) + " has s < 1");
            for (int i = 0; i < 4; ++i) g.box[i] = std::stod(f[3 + static_cast<std::size_t>(i)]);
            presence_[g.id].push_back({fr, fr + len});
            gt_at[fr].push_back(g);
            last_frame_ = std::max(last_frame_, fr + len - 1);
        }
    }
    // Per-frame records: collapse frame sets into spans.
    for (const auto& [id, frames] : frames_of) {
        for (int f : frames) {
            auto& spans = presence_[id];
            if (!spans.empty() && spans.back().second == f) {
                spans.back().second = f + 1;
            } else {
                spans.push_back({f, f + 1});
            }
        }
    }

    const auto det_lines = lines_of(detections);
    std::set<std::string> item_ids;
    for (std::size_t n = 0; n < det_lines.size(); ++n) {
        if (blank(det_lines[n])) continue;
        const auto j = object_on_line(det_lines[n], n + 1);
        Det d;
        d.frame = j.at("frame").get<int>();
        d.index = j.at("det_index").get<int>();
        read_box(j.at("bbox"), d.box, n + 1);
        d.item_id = "f" + std::to_string(d.frame) + "_d" + std::to_string(d.index);
        if (!item_ids.insert(d.item_id).second) throw ValidationError("oracle: duplicate detection " + d.item_id);

        // Label: best IoU at or above the threshold, smaller id on ties.
        double best = -1.0;
        if (auto it = gt_at.find(d.frame); it != gt_at.end()) {
            for (const auto& g : it->second) {
                const double v = overlap_ratio(d.box, g.box);
                if (v < iou_threshold) continue;
                if (v > best || (v == best && g.id < *d.label)) {
                    best = v;
                    d.label = g.id;
                }
            }
        }
        last_frame_ = std::max(last_frame_, d.frame);
        dets_.push_back(std::move(d));
    }
    std::sort(dets_.begin(), dets_.end(), [](const Det& a, const Det& b) {
        return a.frame != b.frame ? a.frame < b.frame : a.index < b.index;
    });

    const auto score_lines = lines_of(scores);
    for (std::size_t n = 0; n < score_lines.size(); ++n) {
        if (blank(score_lines[n])) continue;
        const auto j = object_on_line(score_lines[n], n + 1);
        const auto q = j.at("query_id").get<std::string>();
        const auto item = j.at("item_id").get<std::string>();
        const double sim = j.at("similarity").get<double>();
        if (sim < 0.0 || sim > 1.0) throw ValidationError("oracle: similarity out of range on line " + std::to_string(n + 1));
        if (!item_ids.count(item)) throw ValidationError("oracle: score references unknown detection " + item);
        if (!scores_.emplace(std::pair{q, item}, sim).second) {
            throw ValidationError("oracle: duplicate score on line " + std::to_string(n + 1));
        }
    }
} catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("oracle: malformed record: ") + e.what());
} catch (const std::logic_error& e) {
    throw ValidationError(std::string("oracle: malformed number: ") + e.what());
}

OracleReport BruteForceOracle::metrics(const std::string& query_id, const EvalParams& params, int total_frames) const {
    if (params.tau < 1 || params.eta < 1) throw ValidationError("oracle: tau and eta must be >= 1");
    OracleReport report;
    const auto spans_it = presence_.find(query_id);

    std::size_t cursor = 0;
    for (int start = 0; start < total_frames; start += params.tau) {
        const int end = std::min(start + params.tau, total_frames);

        bool present = false;
        if (spans_it != presence_.end()) {
            for (const auto& [a, b] : spans_it->second) {
                if (a < end && start < b) present = true;
            }
        }

        struct Entry {
            double sim;
            int frame;
            int index;
            bool is_query;
        };
        std::vector<Entry> gallery;
        while (cursor < dets_.size() && dets_[cursor].frame < start) ++cursor;
        for (std::size_t i = cursor; i < dets_.size() && dets_[i].frame < end; ++i) {
            const auto& d = dets_[i];
            const auto key = std::pair{query_id, d.item_id};
            const auto s = scores_.find(key);
            if (s == scores_.end()) continue;
            gallery.push_back({s->second, d.frame, d.index, d.label && *d.label == query_id});
        }

        bool alert = false;
        for (const auto& e : gallery) alert = alert || e.sim >= params.beta;

        bool shown = false;
        for (const auto& q : gallery) {
            if (!q.is_query) continue;
            std::size_t ahead = 0;
            for (const auto& o : gallery) {
                const bool before = o.sim > q.sim ||
                                    (o.sim == q.sim && (o.frame < q.frame || (o.frame == q.frame && o.index < q.index)));
                if (before) ++ahead;
            }
            if (ahead < static_cast<std::size_t>(params.eta)) shown = true;
        }

        if (present && alert && shown) {
            ++report.counts.tc;
        } else if (present && alert) {
            ++report.counts.tmc;
        } else if (present) {
            ++report.counts.fs;
        } else if (alert) {
            ++report.counts.fc;
        } else {
            ++report.counts.ts;
        }
    }

    const auto& c = report.counts;
    if (c.tc + c.tmc + c.fs > 0) report.fr = static_cast<double>(c.tc) / static_cast<double>(c.tc + c.tmc + c.fs);
    if (c.tc + c.tmc + c.fc > 0) report.tvr = static_cast<double>(c.tc) / static_cast<double>(c.tc + c.tmc + c.fc);
    return report;
}

OracleReport brute_force_metrics(const std::filesystem::path& ground_truth,
                                 const std::filesystem::path& detections,
                                 const std::filesystem::path& scores,
                                 const std::string& query_id,
                                 const EvalParams& params,
                                 int total_frames,
                                 double iou_threshold) {
    return BruteForceOracle(ground_truth, detections, scores, iou_threshold).metrics(query_id, params, total_frames);
}

}  // namespace ffprid
