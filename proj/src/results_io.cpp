#include "ffprid/results_io.hpp"

#include <json.hpp>

#include "ffprid/error.hpp"

namespace ffprid {

using nlohmann::json;

namespace {

json counts_json(const OutcomeCounts& c) {
    return {{"tc", c.tc}, {"tmc", c.tmc}, {"fs", c.fs}, {"fc", c.fc}, {"ts", c.ts}};
}

json metric_json(const MetricValue& m) {
    return m.defined() ? json(*m.value()) : json(nullptr);
}

json item_json(const ScoredGalleryItem& it) {
    json j{{"item_id", it.item_id},
           {"frame", it.frame},
           {"det_index", it.det_index},
           {"bbox", json::array({it.bbox.ulx, it.bbox.uly, it.bbox.brx, it.bbox.bry})},
           {"similarity", it.similarity}};
    j["identity"] = it.true_identity ? json(*it.true_identity) : json(nullptr);
    j["crop"] = it.crop_ref ? json(*it.crop_ref) : json(nullptr);
    return j;
}

ScoredGalleryItem item_from_json(const json& j) {
    ScoredGalleryItem it;
    it.item_id = j.at("item_id").get<std::string>();
    it.frame = j.at("frame").get<int>();
    it.det_index = j.at("det_index").get<int>();
    const auto& b = j.at("bbox");
    it.bbox = BoundingBox::make(b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                                b.at(3).get<double>());
    it.similarity = j.at("similarity").get<double>();
    if (!j.at("identity").is_null()) {
        it.true_identity = j.at("identity").get<std::string>();
        it.label = LabelStatus::Matched;
    }
    if (const auto c = j.find("crop"); c != j.end() && !c->is_null()) it.crop_ref = c->get<std::string>();
    return it;
}

}  // namespace

std::string run_to_json(const PipelineRun& run) {
    json j;
    j["params"] = {{"tau", run.params.tau}, {"beta", run.params.beta}, {"eta", run.params.eta}};
    j["total_frames"] = run.total_frames;
    j["queries"] = run.queries;
    j["counts"] = counts_json(run.counts);
    j["fr"] = metric_json(run.fr);
    j["tvr"] = metric_json(run.tvr);
    j["warnings"] = run.warnings;
    json segs = json::array();
    for (const auto& s : run.segments) {
        json top = json::array();
        for (const auto& it : s.top_eta) top.push_back(item_json(it));
        segs.push_back({{"query_id", s.query_id},
                        {"index", s.segment.index},
                        {"start_frame", s.segment.start},
                        {"end_frame", s.segment.end},
                        {"query_present", s.query_present},
                        {"outcome", std::string(outcome_code(s.outcome))},
                        {"max_similarity", s.max_similarity ? json(*s.max_similarity) : json(nullptr)},
                        {"top_eta", std::move(top)}});
    }
    j["segments"] = std::move(segs);
    return j.dump(1) + "\n";
}

PipelineRun run_from_json(std::string_view text) {
    try {
        const auto j = json::parse(text);
        PipelineRun run;
        const auto& p = j.at("params");
        run.params = {p.at("tau").get<int>(), p.at("beta").get<double>(), p.at("eta").get<int>()};
        validate(run.params);
        run.total_frames = j.at("total_frames").get<int>();
        run.queries = j.at("queries").get<std::vector<std::string>>();
        run.warnings = j.value("warnings", std::vector<std::string>{});
        for (const auto& s : j.at("segments")) {
            SegmentResult r;
            r.query_id = s.at("query_id").get<std::string>();
            r.segment = {s.at("index").get<int>(), s.at("start_frame").get<int>(), s.at("end_frame").get<int>()};
            r.query_present = s.at("query_present").get<bool>();
            r.outcome = parse_outcome_code(s.at("outcome").get<std::string>());
            if (!s.at("max_similarity").is_null()) r.max_similarity = s.at("max_similarity").get<double>();
            for (const auto& it : s.at("top_eta")) r.top_eta.push_back(item_from_json(it));
            if (r.top_eta.size() > static_cast<std::size_t>(run.params.eta)) {
                throw ValidationError("segment " + std::to_string(r.segment.index) + " lists more than eta candidates");
            }
            run.counts.add(r.outcome);
            run.segments.push_back(std::move(r));
        }
        const auto& c = j.at("counts");
        const OutcomeCounts stated{c.at("tc").get<std::int64_t>(), c.at("tmc").get<std::int64_t>(),
                                   c.at("fs").get<std::int64_t>(), c.at("fc").get<std::int64_t>(),
                                   c.at("ts").get<std::int64_t>()};
        if (!(stated == run.counts)) throw ValidationError("results file counts disagree with its segment outcomes");
        run.fr = finding_rate(run.counts);
        run.tvr = true_validation_rate(run.counts);
        return run;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed results file: ") + e.what());
    }
}

void save_run(const PipelineRun& run, const std::filesystem::path& path) {
    write_text_file(path, run_to_json(run));
}

PipelineRun load_run(const std::filesystem::path& path) {
    return run_from_json(read_text_file(path));
}

}  // namespace ffprid
