// ffprid: evaluation and replay tool for full-frame person re-identification.
//
// Exit codes: 0 success, 1 validation error, 2 I/O error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ffprid/alert_board.hpp"
#include "ffprid/alert_http.hpp"
#include "ffprid/core_model.hpp"
#include "ffprid/dataset_io.hpp"
#include "ffprid/error.hpp"
#include "ffprid/oracle.hpp"
#include "ffprid/pipeline.hpp"
#include "ffprid/reid_eval.hpp"
#include "ffprid/results_io.hpp"
#include "ffprid/synthetic.hpp"

namespace fs = std::filesystem;
using namespace ffprid;

namespace {

struct Options {
    std::string gt;
    std::string detections;
    std::string scores;
    std::vector<std::string> queries;
    std::vector<int> taus;
    std::vector<int> etas;
    std::optional<double> beta;
    double beta_start = 0.5;
    double beta_end = 0.98;
    int beta_steps = 25;
    double iou_threshold = kDefaultIouThreshold;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string config;
    int frames = 0;
    unsigned workers = 0;
    bool curves = false;
    std::size_t max_rank = 20;
    double score_threshold = 0.5;
    int port = kDefaultServicePort;
    std::string replay_speed = "inf";
    std::string results;
    std::string audit_log;
    std::string crop_root;
    std::string host = "0.0.0.0";
};

void emit(const Options& o, const std::string& text) {
    if (o.out.empty()) {
        std::cout << text;
    } else {
        write_text_file(o.out, text);
    }
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw ValidationError(std::string("missing required flag ") + flag);
}

// Fills queries and frame count from the world manifest that `synth` writes
// next to the score file, when the flags were not given.
void apply_manifest_defaults(Options& o) {
    if (o.scores.empty() || (!o.queries.empty() && o.frames > 0)) return;
    const auto manifest = fs::path(o.scores).parent_path() / "world.json";
    std::error_code ec;
    if (!fs::is_regular_file(manifest, ec)) return;
    const auto m = read_world_manifest(manifest);
    if (o.queries.empty()) o.queries = m.queries;
    if (o.frames <= 0) o.frames = m.total_frames;
}

PreparedWorld prepare(Options& o) {
    require(o.gt, "--gt");
    require(o.detections, "--detections");
    require(o.scores, "--scores");
    apply_manifest_defaults(o);
    if (o.queries.empty()) throw ValidationError("missing required flag --queries");
    auto world = PreparedWorld::prepare(
        load_inputs(o.gt, o.detections, o.scores, o.queries, o.frames, o.iou_threshold));
    for (const auto& w : world.warnings()) std::cerr << "warning: " << w << '\n';
    return world;
}

SweepGrid grid_from(const Options& o) {
    SweepGrid g;
    g.taus = o.taus.empty() ? std::vector<int>{10, 100, 1000} : o.taus;
    g.etas = o.etas.empty() ? std::vector<int>{1, 10, 20} : o.etas;
    g.betas = o.beta ? std::vector<double>{*o.beta} : beta_grid(o.beta_start, o.beta_end, o.beta_steps);
    return g;
}

double parse_speed(const std::string& s) {
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::logic_error&) {
        throw ValidationError("--replay-speed must be a positive number or 'inf'");
    }
}

int cmd_segment(Options& o) {
    std::vector<GroundTruthTrack> tracks;
    if (!o.gt.empty()) tracks = parse_ground_truth(o.gt);
    int total = o.frames > 0 ? o.frames : infer_total_frames(tracks, {});
    if (total < 1) throw ValidationError("segment needs --frames or a non-empty --gt");
    if (o.taus.size() != 1) throw ValidationError("segment takes exactly one --tau value");
    if (!o.queries.empty() && tracks.empty()) throw ValidationError("--queries needs --gt to report presence");
    emit(o, format_segment_table(segment_timeline(total, o.taus.front()), o.queries, tracks));
    return 0;
}

int cmd_eval_detect(Options& o) {
    require(o.gt, "--gt");
    require(o.detections, "--detections");
    const auto tracks = parse_ground_truth(o.gt);
    const auto caps = capabilities(tracks);
    if (!caps.detection_eval) {
        throw ValidationError("ground truth holds only initial boxes (compact form); detection evaluation needs the "
                              "per-frame JSON Lines form");
    }
    const auto dets = parse_detections(o.detections);
    const auto report = evaluate_detections(dets, ground_truth_by_frame(tracks), o.iou_threshold, o.score_threshold);
    if (report.precision_degenerate) std::cerr << "warning: no detections above the score threshold; precision set to 0\n";
    if (report.recall_degenerate) std::cerr << "warning: no ground-truth boxes; recall set to 0\n";
    std::ostringstream s;
    s << "precision,recall,f1,ap,tp,fp,fn\n"
      << format_real(report.precision) << ',' << format_real(report.recall) << ',' << format_real(report.f1) << ','
      << (report.ap ? format_real(*report.ap) : std::string{}) << ',' << report.tp << ',' << report.fp << ','
      << report.fn << '\n';
    emit(o, s.str());
    return 0;
}

int cmd_eval_cmc(Options& o) {
    auto world = prepare(o);
    std::vector<RankedQueryResult> results;
    for (std::size_t q = 0; q < world.queries().size(); ++q) {
        const auto ranked = rank_gallery(world.gallery(q, Segment{0, 0, world.total_frames()}));
        RankedQueryResult r{world.queries()[q], {}};
        for (const auto& it : ranked) r.ranked_gallery.push_back({it.true_identity, it.similarity});
        results.push_back(std::move(r));
    }
    const auto report = cmc(results, o.max_rank);
    if (!report.curve) throw ValidationError("no queries to evaluate");
    for (std::size_t q : report.unmatched_queries) {
        std::cerr << "warning: query '" << results[q].query_identity << "' has no correct item in its gallery\n";
    }
    std::ostringstream s;
    s << "k,cmc_k\n";
    for (std::size_t k = 0; k < report.curve->values.size(); ++k) {
        s << k + 1 << ',' << format_real(report.curve->values[k]) << '\n';
    }
    emit(o, s.str());
    return 0;
}

int cmd_run(Options& o) {
    auto world = prepare(o);
    if (o.taus.size() != 1 || o.etas.size() != 1) throw ValidationError("run takes exactly one --tau and one --eta");
    const EvalParams params{o.taus.front(), o.beta.value_or(o.beta_start), o.etas.front()};
    const auto run = run_pipeline(world, params);
    if (!o.out.empty()) save_run(run, o.out);
    const auto& c = run.counts;
    std::cout << "tau=" << params.tau << " beta=" << format_real(params.beta) << " eta=" << params.eta << '\n'
              << "tc=" << c.tc << " tmc=" << c.tmc << " fs=" << c.fs << " fc=" << c.fc << " ts=" << c.ts << '\n'
              << "fr=" << (run.fr.defined() ? format_metric(run.fr) : "undefined")
              << " tvr=" << (run.tvr.defined() ? format_metric(run.tvr) : "undefined") << '\n';
    return 0;
}

int cmd_sweep(Options& o) {
    auto world = prepare(o);
    const auto results = sweep(world, grid_from(o), o.workers);
    if (o.out.empty()) {
        if (o.curves) throw ValidationError("--curves needs --out");
        std::cout << format_sweep_csv(results);
    } else {
        export_results(results, o.out, o.curves);
    }
    return 0;
}

int cmd_synth(Options& o) {
    require(o.out, "--out");
    SyntheticWorldConfig config;
    if (!o.config.empty()) config = parse_synthetic_config(read_text_file(o.config));
    if (o.seed) config.seed = *o.seed;
    const auto world = generate_synthetic_world(config);
    write_world(world, o.out);
    std::cout << "wrote " << world.tracks.size() << " tracks, " << world.detections.size() << " detections, "
              << world.scores.size() << " scores to " << fs::path(o.out).string() << '\n';
    return 0;
}

int cmd_oracle(Options& o) {
    auto world = prepare(o);
    const auto grid = grid_from(o);
    const auto engine = sweep(world, grid, o.workers);
    const BruteForceOracle oracle(o.gt, o.detections, o.scores, o.iou_threshold);
    std::size_t mismatches = 0;
    for (const auto& cell : engine) {
        OutcomeCounts expected;
        for (const auto& q : world.queries()) {
            expected += oracle.metrics(q, {cell.tau, cell.beta, cell.eta}, world.total_frames()).counts;
        }
        if (!(expected == cell.counts)) {
            ++mismatches;
            std::cout << "MISMATCH tau=" << cell.tau << " beta=" << format_real(cell.beta) << " eta=" << cell.eta
                      << " engine=" << cell.counts.tc << '/' << cell.counts.tmc << '/' << cell.counts.fs << '/'
                      << cell.counts.fc << '/' << cell.counts.ts << " oracle=" << expected.tc << '/' << expected.tmc
                      << '/' << expected.fs << '/' << expected.fc << '/' << expected.ts << '\n';
        }
    }
    std::cout << "oracle: " << engine.size() - mismatches << " of " << engine.size() << " cells agree\n";
    return mismatches == 0 ? 0 : 1;
}

int cmd_serve(Options& o) {
    require(o.results, "--results");
    AlertBoard board(load_run(o.results), parse_speed(o.replay_speed));
    if (!o.audit_log.empty()) board.set_audit_file(o.audit_log);
    const fs::path crop_root = o.crop_root.empty() ? fs::path(o.results).parent_path() : fs::path(o.crop_root);
    AlertHttpServer server(board, crop_root);
    const int port = server.bind(o.host, o.port);
    if (port < 0) throw IoError("cannot bind " + o.host + ":" + std::to_string(o.port));
    std::cout << "serving " << board.metrics_snapshot().workload << " alerts on http://" << o.host << ':' << port
              << std::endl;
    return server.listen_after_bind() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Full-frame person re-identification evaluation harness"};
    app.require_subcommand(1);
    Options o;

    auto add_inputs = [&](CLI::App* c) {
        c->add_option("--gt", o.gt, "Ground-truth file (compact CSV or per-frame JSON Lines)");
        c->add_option("--detections", o.detections, "Detections JSON Lines");
        c->add_option("--scores", o.scores, "Similarity scores JSON Lines");
        c->add_option("--queries", o.queries, "Query identities")->delimiter(',');
        c->add_option("--frames", o.frames, "Total frames in the video (default: inferred)");
        c->add_option("--iou-threshold", o.iou_threshold, "IoU threshold for matching and labeling")
            ->capture_default_str();
    };
    auto add_grid = [&](CLI::App* c) {
        c->add_option("--tau", o.taus, "Frames per segment")->delimiter(',');
        c->add_option("--eta", o.etas, "Candidates shown per alert")->delimiter(',');
        c->add_option("--beta-start", o.beta_start)->capture_default_str();
        c->add_option("--beta-end", o.beta_end)->capture_default_str();
        c->add_option("--beta-steps", o.beta_steps)->capture_default_str();
        c->add_option("--beta", o.beta, "Single alert threshold (overrides the beta grid)");
        c->add_option("--workers", o.workers, "Worker threads (0 = hardware concurrency)");
    };

    auto* segment = app.add_subcommand("segment", "Print the segment table");
    segment->add_option("--gt", o.gt);
    segment->add_option("--frames", o.frames);
    segment->add_option("--tau", o.taus)->delimiter(',')->required();
    segment->add_option("--queries", o.queries)->delimiter(',');
    segment->add_option("--out", o.out);

    auto* eval_detect = app.add_subcommand("eval-detect", "Detection precision / recall / F1 / AP");
    eval_detect->add_option("--gt", o.gt);
    eval_detect->add_option("--detections", o.detections);
    eval_detect->add_option("--iou-threshold", o.iou_threshold)->capture_default_str();
    eval_detect->add_option("--score-threshold", o.score_threshold, "Confidence needed to keep a box")
        ->capture_default_str();
    eval_detect->add_option("--out", o.out);

    auto* eval_cmc = app.add_subcommand("eval-cmc", "CMC curve of the score file");
    add_inputs(eval_cmc);
    eval_cmc->add_option("--max-rank", o.max_rank)->capture_default_str();
    eval_cmc->add_option("--out", o.out);

    auto* run = app.add_subcommand("run", "Evaluate one (tau, beta, eta) setting");
    add_inputs(run);
    add_grid(run);
    run->add_option("--out", o.out, "Results JSON (input of `serve`)");

    auto* sweep_cmd = app.add_subcommand("sweep", "Sweep tau, beta and eta");
    add_inputs(sweep_cmd);
    add_grid(sweep_cmd);
    sweep_cmd->add_option("--out", o.out, "Sweep CSV");
    sweep_cmd->add_flag("--curves", o.curves, "Also write one beta curve per (tau, eta)");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic world");
    synth->add_option("--config", o.config, "Synthetic world config JSON");
    synth->add_option("--seed", o.seed, "Override the config seed");
    synth->add_option("--out", o.out, "Output directory");

    auto* oracle = app.add_subcommand("oracle", "Check the engine against brute-force enumeration");
    add_inputs(oracle);
    add_grid(oracle);

    auto* serve = app.add_subcommand("serve", "Serve a run as an operator alert queue");
    serve->add_option("--results", o.results, "Results JSON written by `run --out`");
    serve->add_option("--port", o.port)->capture_default_str();
    serve->add_option("--replay-speed", o.replay_speed, "Replay speed factor, or inf")->capture_default_str();
    serve->add_option("--audit-log", o.audit_log, "Append decisions to this JSON Lines file");
    serve->add_option("--crop-root", o.crop_root, "Directory for relative crop paths");
    serve->add_option("--host", o.host)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*segment) return cmd_segment(o);
        if (*eval_detect) return cmd_eval_detect(o);
        if (*eval_cmc) return cmd_eval_cmc(o);
        if (*run) return cmd_run(o);
        if (*sweep_cmd) return cmd_sweep(o);
        if (*synth) return cmd_synth(o);
        if (*oracle) return cmd_oracle(o);
        if (*serve) return cmd_serve(o);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
