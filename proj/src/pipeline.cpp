#include "ffprid/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "ffprid/error.hpp"

namespace ffprid {

EvaluationInputs load_inputs(const std::filesystem::path& gt,
                             const std::filesystem::path& detections,
                             const std::filesystem::path& scores,
                             std::vector<std::string> queries,
                             int total_frames,
                             double iou_threshold) {
    EvaluationInputs in;
    in.tracks = parse_ground_truth(gt);
    in.detections = parse_detections(detections);
    in.scores = parse_scores(scores);
    in.queries = std::move(queries);
    in.total_frames = total_frames;
    in.iou_threshold = iou_threshold;
    return in;
}

PreparedWorld PreparedWorld::prepare(const EvaluationInputs& inputs) {
    if (inputs.queries.empty()) throw ValidationError("at least one query is required");
    if (!(inputs.iou_threshold >= 0.0 && inputs.iou_threshold <= 1.0)) {
        throw ValidationError("iou threshold must lie in [0, 1]");
    }
    PreparedWorld w;
    w.queries_ = inputs.queries;
    {
        std::set<std::string> uniq(w.queries_.begin(), w.queries_.end());
        if (uniq.size() != w.queries_.size()) throw ValidationError("query list contains duplicates");
    }
    w.tracks_ = inputs.tracks;
    w.total_frames_ = inputs.total_frames > 0 ? inputs.total_frames
                                              : infer_total_frames(inputs.tracks, inputs.detections);
    if (w.total_frames_ < 1) throw ValidationError("cannot evaluate an empty timeline");

    std::vector<DetectionRecord> dets = inputs.detections;
    std::sort(dets.begin(), dets.end(), [](const auto& a, const auto& b) {
        if (a.frame != b.frame) return a.frame < b.frame;
        return a.det_index < b.det_index;
    });
    for (const auto& d : dets) {
        if (d.frame >= w.total_frames_) {
            throw ValidationError("detection " + make_item_id(d.frame, d.det_index) + " lies beyond the last frame " +
                                  std::to_string(w.total_frames_ - 1));
        }
    }
    w.labeling_ = label_gallery(dets, w.tracks_, inputs.iou_threshold);
    w.items_ = w.labeling_.items;
    if (w.labeling_.unlabelable > 0) {
        w.warnings_.push_back(std::to_string(w.labeling_.unlabelable) +
                              " detections could not be labeled: compact ground truth has no box for their frame");
    }

    std::unordered_map<std::string, std::size_t> item_index;
    item_index.reserve(w.items_.size());
    for (std::size_t i = 0; i < w.items_.size(); ++i) item_index.emplace(w.items_[i].item_id, i);
    std::unordered_map<std::string, std::size_t> query_index;
    for (std::size_t q = 0; q < w.queries_.size(); ++q) query_index.emplace(w.queries_[q], q);

    w.scores_.assign(w.queries_.size(), std::vector<std::optional<double>>(w.items_.size()));
    std::vector<std::string> dangling;
    std::size_t dangling_count = 0;
    for (const auto& r : inputs.scores) {
        const auto qit = query_index.find(r.query_id);
        const auto iit = item_index.find(r.item_id);
        if (iit == item_index.end()) {
            if (dangling.size() < 20) dangling.push_back(r.item_id);
            ++dangling_count;
            continue;
        }
        if (qit == query_index.end()) continue;  // scores for queries not under evaluation
        w.scores_[qit->second][iit->second] = r.similarity;
    }
    if (dangling_count > 0) {
        std::string msg = std::to_string(dangling_count) + " similarity records reference unknown detections:";
        for (const auto& id : dangling) msg += " " + id;
        if (dangling_count > dangling.size()) msg += " ...";
        throw ValidationError(msg);
    }

    for (std::size_t q = 0; q < w.queries_.size(); ++q) {
        const auto missing = static_cast<std::size_t>(
            std::count(w.scores_[q].begin(), w.scores_[q].end(), std::nullopt));
        if (!w.items_.empty() && missing == w.items_.size()) {
            w.warnings_.push_back("query '" + w.queries_[q] + "' has no similarity records; every gallery is empty");
        } else if (missing > 0) {
            w.warnings_.push_back("query '" + w.queries_[q] + "': " + std::to_string(missing) + " of " +
                                  std::to_string(w.items_.size()) +
                                  " detections have no similarity record and are excluded");
        }
        const auto p = query_presence(w.tracks_, w.queries_[q], Segment{0, 0, w.total_frames_});
        if (!p.identity_known) {
            w.warnings_.push_back("query '" + w.queries_[q] + "' does not appear in the ground truth");
        }
    }
    return w;
}

std::vector<ScoredGalleryItem> PreparedWorld::gallery(std::size_t query_index, const Segment& segment) const {
    const auto by_frame = [](const ScoredGalleryItem& item, int frame) { return item.frame < frame; };
    const auto first = std::lower_bound(items_.begin(), items_.end(), segment.start, by_frame);
    const auto last = std::lower_bound(first, items_.end(), segment.end, by_frame);
    const auto& sims = scores_[query_index];
    std::vector<ScoredGalleryItem> out;
    for (auto it = first; it != last; ++it) {
        const auto& s = sims[static_cast<std::size_t>(it - items_.begin())];
        if (!s) continue;
        out.push_back(*it);
        out.back().similarity = *s;
    }
    return out;
}

bool PreparedWorld::present(std::size_t query_index, const Segment& segment) const {
    return query_presence(tracks_, queries_[query_index], segment).present;
}

PipelineRun run_pipeline(const PreparedWorld& world, const EvalParams& params) {
    validate(params);
    PipelineRun run;
    run.params = params;
    run.total_frames = world.total_frames();
    run.queries = world.queries();
    run.warnings = world.warnings();

    const auto segments = segment_timeline(world.total_frames(), params.tau);
    run.segments.reserve(segments.size() * world.queries().size());
    for (std::size_t q = 0; q < world.queries().size(); ++q) {
        for (const auto& seg : segments) {
            SegmentResult r;
            r.segment = seg;
            r.query_id = world.queries()[q];
            r.query_present = world.present(q, seg);
            const auto gallery = world.gallery(q, seg);
            r.outcome = classify_outcome(r.query_present, gallery, r.query_id, params);
            auto ranked = rank_gallery(gallery);
            if (!ranked.empty()) r.max_similarity = ranked.front().similarity;
            if (ranked.size() > static_cast<std::size_t>(params.eta)) ranked.resize(static_cast<std::size_t>(params.eta));
            r.top_eta = std::move(ranked);
            run.counts.add(r.outcome);
            run.segments.push_back(std::move(r));
        }
    }
    run.fr = finding_rate(run.counts);
    run.tvr = true_validation_rate(run.counts);
    return run;
}

std::vector<double> beta_grid(double start, double end, int steps) {
    if (steps < 1) throw ValidationError("beta grid needs at least one step");
    if (!(start >= 0.0 && end <= 1.0 && start <= end)) {
        throw ValidationError("beta grid must satisfy 0 <= start <= end <= 1");
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(steps));
    if (steps == 1) {
        out.push_back(start);
        return out;
    }
    for (int i = 0; i < steps; ++i) {
        out.push_back(i == steps - 1 ? end : start + (end - start) * i / (steps - 1));
    }
    return out;
}

namespace {

struct SegmentSummary {
    bool present = false;
    GallerySummary gallery;
};

template <typename T>
std::vector<T> sorted_unique(std::vector<T> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

}  // namespace

std::vector<SweepResult> sweep(const PreparedWorld& world, const SweepGrid& grid, unsigned workers) {
    if (grid.taus.empty() || grid.etas.empty() || grid.betas.empty()) {
        throw ValidationError("sweep grids must be non-empty");
    }
    const auto taus = sorted_unique(grid.taus);
    const auto etas = sorted_unique(grid.etas);
    const auto betas = sorted_unique(grid.betas);
    for (int t : taus) {
        if (t < 1) throw ValidationError("tau values must be >= 1");
    }
    for (int e : etas) {
        if (e < 1) throw ValidationError("eta values must be >= 1");
    }
    for (double b : betas) {
        if (!(b >= 0.0 && b <= 1.0)) throw ValidationError("beta values must lie in [0, 1]");
    }

    const std::size_t nq = world.queries().size();
    std::vector<std::vector<Segment>> segments;
    for (int t : taus) segments.push_back(segment_timeline(world.total_frames(), t));

    // Ranking does not depend on beta or eta: summarize each (tau, query,
    // segment) gallery once.
    const std::size_t tasks = taus.size() * nq;
    std::vector<std::vector<SegmentSummary>> summaries(tasks);
    auto run_task = [&](std::size_t task) {
        const std::size_t ti = task / nq;
        const std::size_t q = task % nq;
        auto& out = summaries[task];
        out.reserve(segments[ti].size());
        for (const auto& seg : segments[ti]) {
            const auto ranked = rank_gallery(world.gallery(q, seg));
            out.push_back({world.present(q, seg), summarize_ranked(ranked, world.queries()[q])});
        }
    };

    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, tasks));
    if (workers <= 1) {
        for (std::size_t t = 0; t < tasks; ++t) run_task(t);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t t; (t = next.fetch_add(1)) < tasks;) run_task(t);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    std::vector<SweepResult> results;
    results.reserve(taus.size() * betas.size() * etas.size());
    for (std::size_t ti = 0; ti < taus.size(); ++ti) {
        for (double beta : betas) {
            for (int eta : etas) {
                const EvalParams params{taus[ti], beta, eta};
                SweepResult r{taus[ti], beta, eta, {}, {}, {}};
                for (std::size_t q = 0; q < nq; ++q) {
                    for (const auto& s : summaries[ti * nq + q]) r.counts.add(decide_outcome(s.present, s.gallery, params));
                }
                r.fr = finding_rate(r.counts);
                r.tvr = true_validation_rate(r.counts);
                results.push_back(r);
            }
        }
    }
    return results;
}

std::string format_real(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", value);
    std::string s(buf);
    if (s.find_first_of(".eEni") == std::string::npos) s += ".0";
    return s;
}

std::string format_metric(const MetricValue& value) {
    return value.defined() ? format_real(*value.value()) : std::string{};
}

std::string format_sweep_csv(const std::vector<SweepResult>& results) {
    std::string out(kSweepCsvHeader);
    out += '\n';
    for (const auto& r : results) {
        out += std::to_string(r.tau) + ',' + format_real(r.beta) + ',' + std::to_string(r.eta) + ',' +
               std::to_string(r.counts.tc) + ',' + std::to_string(r.counts.tmc) + ',' + std::to_string(r.counts.fs) +
               ',' + std::to_string(r.counts.fc) + ',' + std::to_string(r.counts.ts) + ',' + format_metric(r.fr) +
               ',' + format_metric(r.tvr) + '\n';
    }
    return out;
}

namespace {

template <typename T>
T csv_number(std::string_view field, std::size_t line_no) {
    T v{};
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size()) {
        throw ValidationError("sweep csv line " + std::to_string(line_no) + ": bad number '" + std::string(field) + "'");
    }
    return v;
}

}  // namespace

std::vector<SweepResult> parse_sweep_csv(std::string_view text) {
    std::vector<SweepResult> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (line_no == 1) {
            if (line != kSweepCsvHeader) throw ValidationError("sweep csv: unexpected header '" + std::string(line) + "'");
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string_view> f;
        std::size_t p = 0;
        while (true) {
            const auto c = line.find(',', p);
            f.push_back(line.substr(p, c == std::string_view::npos ? std::string_view::npos : c - p));
            if (c == std::string_view::npos) break;
            p = c + 1;
        }
        if (f.size() != 10) {
            throw ValidationError("sweep csv line " + std::to_string(line_no) + ": expected 10 fields");
        }
        SweepResult r;
        r.tau = csv_number<int>(f[0], line_no);
        r.beta = csv_number<double>(f[1], line_no);
        r.eta = csv_number<int>(f[2], line_no);
        r.counts = {csv_number<std::int64_t>(f[3], line_no), csv_number<std::int64_t>(f[4], line_no),
                    csv_number<std::int64_t>(f[5], line_no), csv_number<std::int64_t>(f[6], line_no),
                    csv_number<std::int64_t>(f[7], line_no)};
        for (auto c : {r.counts.tc, r.counts.tmc, r.counts.fs, r.counts.fc, r.counts.ts}) {
            if (c < 0) throw ValidationError("sweep csv line " + std::to_string(line_no) + ": negative count");
        }
        // Metrics are re-derived from the counts; the stored text must agree.
        r.fr = finding_rate(r.counts);
        r.tvr = true_validation_rate(r.counts);
        if (f[8] != format_metric(r.fr) || f[9] != format_metric(r.tvr)) {
            throw ValidationError("sweep csv line " + std::to_string(line_no) + ": fr/tvr disagree with the counts");
        }
        out.push_back(r);
    }
    if (line_no == 0) throw ValidationError("sweep csv: missing header");
    return out;
}

std::vector<std::filesystem::path> export_results(const std::vector<SweepResult>& results,
                                                  const std::filesystem::path& destination,
                                                  bool write_curves) {
    if (results.empty()) throw ValidationError("no sweep results to export");
    std::vector<std::filesystem::path> written;
    write_text_file(destination, format_sweep_csv(results));
    written.push_back(destination);
    if (!write_curves) return written;

    std::map<std::pair<int, int>, std::vector<const SweepResult*>> curves;
    for (const auto& r : results) curves[{r.tau, r.eta}].push_back(&r);
    const auto stem = destination.stem().string();
    for (auto& [key, rows] : curves) {
        std::stable_sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) { return a->beta < b->beta; });
        std::string body = "beta,fr,tvr\n";
        for (const auto* r : rows) body += format_real(r->beta) + ',' + format_metric(r->fr) + ',' + format_metric(r->tvr) + '\n';
        auto path = destination.parent_path() /
                    (stem + "_tau" + std::to_string(key.first) + "_eta" + std::to_string(key.second) + ".csv");
        write_text_file(path, body);
        written.push_back(std::move(path));
    }
    return written;
}

std::string format_segment_table(const std::vector<Segment>& segments,
                                 const std::vector<std::string>& queries,
                                 const std::vector<GroundTruthTrack>& tracks) {
    std::ostringstream out;
    out << "index,start_frame,end_frame";
    for (const auto& q : queries) out << ',' << q;
    out << '\n';
    for (const auto& s : segments) {
        out << s.index << ',' << s.start << ',' << s.end;
        for (const auto& q : queries) out << ',' << (query_presence(tracks, q, s).present ? 1 : 0);
        out << '\n';
    }
    return out.str();
}

}  // namespace ffprid
