#include "ffprid/alert_board.hpp"
#include "ffprid/alert_http.hpp"
#include "ffprid/error.hpp"
#include "ffprid/results_io.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <thread>

#include "support.hpp"

using namespace ffprid;
using nlohmann::json;

namespace {

constexpr double kInstant = std::numeric_limits<double>::infinity();

ScoredGalleryItem candidate(int frame, std::optional<std::string> id, double sim) {
    ScoredGalleryItem it;
    it.item_id = make_item_id(frame, 0);
    it.frame = frame;
    it.similarity = sim;
    it.true_identity = std::move(id);
    it.label = it.true_identity ? LabelStatus::Matched : LabelStatus::Unknown;
    return it;
}

// Outcomes [TC, FS, FC] over three 100-frame segments for query "q".
PipelineRun three_segment_run() {
    PipelineRun run;
    run.params = {100, 0.5, 2};
    run.total_frames = 300;
    run.queries = {"q"};
    run.segments = {
        {{0, 0, 100}, "q", true, Outcome::TrueCall, 0.9, {candidate(10, "q", 0.9), candidate(20, "z", 0.7)}},
        {{1, 100, 200}, "q", true, Outcome::FalseSilence, 0.2, {}},
        {{2, 200, 300}, "q", false, Outcome::FalseCall, 0.8, {candidate(250, std::nullopt, 0.8)}},
    };
    for (const auto& s : run.segments) run.counts.add(s.outcome);
    run.fr = finding_rate(run.counts);
    run.tvr = true_validation_rate(run.counts);
    return run;
}

PipelineRun synthetic_run(std::uint64_t seed, int tau, double beta, int eta) {
    const auto w = generate_synthetic_world(ffprid::testing::varied_config(seed));
    return run_pipeline(ffprid::testing::prepare_world(w), {tau, beta, eta});
}

struct ManualClock {
    double t = 0.0;
    AlertBoard::Clock fn() {
        return [this] { return t; };
    }
};

// Runs the HTTP front end on a free port for the lifetime of the object.
class LiveServer {
public:
    explicit LiveServer(AlertBoard& board, std::filesystem::path crops = {}) : server_(board, std::move(crops)) {
        port_ = server_.bind("127.0.0.1", 0);
        REQUIRE(port_ > 0);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LiveServer() {
        server_.stop();
        thread_.join();
    }
    httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

private:
    AlertHttpServer server_;
    int port_ = -1;
    std::thread thread_;
};

}  // namespace

TEST_CASE("replay emits one alert per alerting segment, in order") {
    const auto alerts = replay(three_segment_run(), kInstant);
    REQUIRE(alerts.size() == 2);
    CHECK(alerts[0].machine_outcome == Outcome::TrueCall);
    CHECK(alerts[1].machine_outcome == Outcome::FalseCall);
    CHECK(alerts[0].segment.index == 0);
    CHECK(alerts[1].segment.index == 2);
    CHECK(alerts[0].alert_id != alerts[1].alert_id);
    CHECK(alerts[0].created_at == 0.0);
    CHECK(alerts[0].status == AlertStatus::Pending);
    CHECK_THROWS_AS(replay(three_segment_run(), 0.0), ValidationError);
    CHECK_THROWS_AS(replay(three_segment_run(), -2.0), ValidationError);
    CHECK_THROWS_AS(replay(three_segment_run(), std::nan("")), ValidationError);
}

TEST_CASE("all-silence run has zero workload") {
    auto run = three_segment_run();
    for (auto& s : run.segments) s.outcome = s.query_present ? Outcome::FalseSilence : Outcome::TrueSilence;
    run.counts = {0, 0, 2, 0, 1};
    AlertBoard board(run, kInstant);
    CHECK(board.alerts().empty());
    CHECK(board.metrics_snapshot().workload == 0);
}

TEST_CASE("replay is ordered by segment, then query") {
    const auto run = synthetic_run(3, 50, 0.5, 6);
    const auto alerts = replay(run, kInstant);
    CHECK(static_cast<std::int64_t>(alerts.size()) == run.counts.alerts());
    std::map<std::string, std::size_t> qpos;
    for (std::size_t i = 0; i < run.queries.size(); ++i) qpos[run.queries[i]] = i;
    for (std::size_t i = 1; i < alerts.size(); ++i) {
        const auto& a = alerts[i - 1];
        const auto& b = alerts[i];
        CHECK((a.segment.index < b.segment.index ||
               (a.segment.index == b.segment.index && qpos[a.query_id] < qpos[b.query_id])));
    }
    for (const auto& a : alerts) CHECK(a.candidates.size() <= 6);
}

TEST_CASE("replay speed releases alerts over time") {
    ManualClock clock;
    // Segment ends at 100 and 300 frames: 4 s and 12 s at 25 fps, halved at 2x.
    AlertBoard board(three_segment_run(), 2.0, clock.fn());
    CHECK(board.alerts().empty());
    clock.t = 2.0;
    REQUIRE(board.alerts().size() == 1);
    CHECK(board.alerts()[0].created_at == 2.0);
    const auto late = replay(three_segment_run(), 2.0)[1];
    CHECK_THROWS_AS(board.record_decision(late.alert_id, Decision::Reject), NotFoundError);
    clock.t = 6.0;
    CHECK(board.alerts().size() == 2);
}

TEST_CASE("decisions") {
    AlertBoard board(three_segment_run(), kInstant);
    const auto alerts = board.alerts();
    const auto& tc = alerts[0];
    const auto& fc = alerts[1];

    SUBCASE("confirming a true call with the query item") {
        const auto before = board.metrics_snapshot();
        CHECK(before.validated_tc == 0);
        CHECK(before.machine == board.run().counts);
        const auto updated = board.record_decision(tc.alert_id, Decision::Confirm, "f10_d0");
        CHECK(updated.status == AlertStatus::Confirmed);
        CHECK(updated.decided_item == "f10_d0");
        CHECK(board.metrics_snapshot().validated_tc == 1);
        CHECK(board.metrics_snapshot().pending == 1);
    }
    SUBCASE("confirming the wrong person does not validate") {
        board.record_decision(tc.alert_id, Decision::Confirm, "f20_d0");
        CHECK(board.metrics_snapshot().validated_tc == 0);
        CHECK(board.metrics_snapshot().confirmations == 1);
    }
    SUBCASE("rejecting a false call") {
        const auto before = board.metrics_snapshot();
        board.record_decision(fc.alert_id, Decision::Reject);
        const auto after = board.metrics_snapshot();
        CHECK(after.validated_tc == before.validated_tc);
        CHECK(after.validated_fr == before.validated_fr);
        CHECK(after.workload == 2);
        CHECK(after.rejections == 1);
    }
    SUBCASE("a second decision conflicts and changes nothing") {
        board.record_decision(tc.alert_id, Decision::Confirm, "f10_d0");
        const auto snap = board.metrics_snapshot();
        CHECK_THROWS_AS(board.record_decision(tc.alert_id, Decision::Reject), ConflictError);
        CHECK_THROWS_AS(board.record_decision(tc.alert_id, Decision::Confirm, "f10_d0"), ConflictError);
        CHECK(board.find(tc.alert_id)->status == AlertStatus::Confirmed);
        CHECK(board.metrics_snapshot().validated_tc == snap.validated_tc);
        CHECK(board.audit_log().size() == 1);
    }
    SUBCASE("bad requests") {
        CHECK_THROWS_AS(board.record_decision("alert-9999", Decision::Reject), NotFoundError);
        CHECK_THROWS_AS(board.record_decision(tc.alert_id, Decision::Confirm, "f999_d0"), ValidationError);
        CHECK(board.find(tc.alert_id)->status == AlertStatus::Pending);
        CHECK(board.audit_log().empty());
    }
}

TEST_CASE("a perfect operator reproduces the machine finding rate") {
    const auto run = synthetic_run(9, 20, 0.55, 3);
    AlertBoard board(run, kInstant);
    for (const auto& a : board.alerts()) {
        if (a.machine_outcome == Outcome::TrueCall) {
            board.record_decision(a.alert_id, Decision::Confirm);
        } else {
            board.record_decision(a.alert_id, Decision::Reject);
        }
    }
    const auto m = board.metrics_snapshot();
    CHECK(m.validated_tc == run.counts.tc);
    CHECK(m.validated_fr == m.machine_fr);
    CHECK(m.validated_tvr == m.machine_tvr);
    CHECK(m.pending == 0);
}

TEST_CASE("property: random operators respect the bounds and the log replays") {
    std::mt19937_64 rng(123);
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        const auto run = synthetic_run(seed, 25, 0.4, 4);
        AlertBoard board(run, kInstant);
        std::int64_t last_tc = 0;
        for (const auto& a : board.alerts()) {
            if (rng() % 4 == 0) continue;  // leave some pending
            std::optional<std::string> pick;
            if (!a.candidates.empty() && rng() % 2 == 0) pick = a.candidates[rng() % a.candidates.size()].item_id;
            board.record_decision(a.alert_id, rng() % 2 == 0 ? Decision::Confirm : Decision::Reject, pick);
            const auto m = board.metrics_snapshot();
            CHECK(m.validated_tc >= last_tc);
            CHECK(m.validated_tc <= m.machine.tc);
            CHECK(m.validated_tc <= m.workload);
            last_tc = m.validated_tc;
        }
        const auto m = board.metrics_snapshot();
        CHECK(m.workload == run.counts.alerts());
        CHECK(m.confirmations + m.rejections + m.pending == m.workload);
        const auto log = board.audit_log();
        CHECK(static_cast<std::int64_t>(log.size()) == m.confirmations + m.rejections);
        const auto again = reconstruct_metrics(run, log);
        CHECK(again.validated_tc == m.validated_tc);
        CHECK(again.validated_fr == m.validated_fr);
        CHECK(again.validated_tvr == m.validated_tvr);
        CHECK(again.confirmations == m.confirmations);
        CHECK(again.pending == m.pending);
        for (std::size_t i = 1; i < log.size(); ++i) CHECK(log[i].sequence == log[i - 1].sequence + 1);
    }
}

TEST_CASE("concurrent decisions are recorded exactly once") {
    const auto run = synthetic_run(4, 10, 0.3, 2);
    AlertBoard board(run, kInstant);
    const auto alerts = board.alerts();
    REQUIRE(alerts.size() > 10);
    std::atomic<int> ok{0};
    std::atomic<int> conflicts{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&] {
            for (const auto& a : alerts) {
                try {
                    board.record_decision(a.alert_id, Decision::Reject);
                    ++ok;
                } catch (const ConflictError&) {
                    ++conflicts;
                }
                (void)board.metrics_snapshot();
            }
        });
    }
    for (auto& th : threads) th.join();
    CHECK(ok == static_cast<int>(alerts.size()));
    CHECK(conflicts == 3 * static_cast<int>(alerts.size()));
    CHECK(board.audit_log().size() == alerts.size());
}

TEST_CASE("audit file holds one line per decision") {
    ffprid::testing::TempDir dir("audit");
    AlertBoard board(three_segment_run(), kInstant);
    board.set_audit_file(dir / "audit.jsonl");
    const auto alerts = board.alerts();
    board.record_decision(alerts[0].alert_id, Decision::Confirm, "f10_d0");
    board.record_decision(alerts[1].alert_id, Decision::Reject);
    const auto text = read_text_file(dir / "audit.jsonl");
    const auto nl = text.find('\n');
    REQUIRE(nl != std::string::npos);
    const auto first = json::parse(text.substr(0, nl));
    CHECK(first["alert_id"] == alerts[0].alert_id);
    CHECK(first["decision"] == "confirm");
    CHECK(first["matched_item_id"] == "f10_d0");
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
}

TEST_CASE("HTTP: alert listing") {
    AlertBoard board(synthetic_run(6, 50, 0.5, 6), kInstant);
    LiveServer server(board);
    auto cli = server.client();

    auto res = cli.Get("/api/alerts?status=pending");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Content-Type").find("application/json") == 0);
    const auto body = json::parse(res->body);
    REQUIRE(body["alerts"].size() == board.alerts().size());
    REQUIRE_FALSE(body["alerts"].empty());
    const auto& a = body["alerts"][0];
    for (const char* key : {"alert_id", "query_id", "segment", "query_image_url", "candidates", "created_at"}) {
        CHECK(a.contains(key));
    }
    for (const char* key : {"index", "start_frame", "end_frame"}) CHECK(a["segment"].contains(key));
    CHECK(a["candidates"].size() <= 6);
    for (const auto& c : a["candidates"]) {
        CHECK(c.contains("item_id"));
        CHECK(c["similarity"].is_number());
        CHECK(c["image_url"].get<std::string>().rfind("/api/images/", 0) == 0);
    }

    CHECK(cli.Get("/api/alerts")->body == res->body);
    CHECK(json::parse(cli.Get("/api/alerts?status=confirmed")->body)["alerts"].empty());
    CHECK(cli.Get("/api/alerts?status=bogus")->status == 400);
}

TEST_CASE("HTTP: decision round-trip") {
    AlertBoard board(three_segment_run(), kInstant);
    LiveServer server(board);
    auto cli = server.client();
    const auto id = board.alerts()[0].alert_id;
    const std::string path = "/api/alerts/" + id + "/decision";

    auto m0 = json::parse(cli.Get("/api/metrics")->body);
    CHECK(m0["validated"]["tc"] == 0);
    CHECK(m0["workload"] == 2);
    CHECK(m0["machine"]["tc"] == 1);
    CHECK(m0["machine"]["fs"] == 1);

    auto ok = cli.Post(path, R"({"decision": "confirm", "matched_item_id": "f10_d0"})", "application/json");
    REQUIRE(ok);
    CHECK(ok->status == 200);
    const auto rec = json::parse(ok->body);
    CHECK(rec["status"] == "confirmed");
    CHECK(rec["decided_item_id"] == "f10_d0");

    auto m1 = json::parse(cli.Get("/api/metrics")->body);
    CHECK(m1["validated"]["tc"] == 1);
    CHECK(m1["validated"]["fr"] == 0.5);

    auto dup = cli.Post(path, R"({"decision": "reject"})", "application/json");
    CHECK(dup->status == 409);
    CHECK(json::parse(dup->body)["alert"]["status"] == "confirmed");
    CHECK(json::parse(cli.Get("/api/metrics")->body) == m1);

    CHECK(cli.Post("/api/alerts/alert-9999/decision", R"({"decision": "reject"})", "application/json")->status ==
          404);
    const auto other = "/api/alerts/" + board.alerts()[1].alert_id + "/decision";
    CHECK(cli.Post(other, "not json", "application/json")->status == 400);
    CHECK(cli.Post(other, R"({"decision": "maybe"})", "application/json")->status == 400);
    CHECK(cli.Post(other, R"({"decision": "confirm", "matched_item_id": "f1_d9"})", "application/json")->status ==
          400);
    CHECK(cli.Post(other, R"({"decision": "reject"})", "application/json")->status == 200);
    CHECK(json::parse(cli.Get("/api/alerts")->body)["alerts"].empty());
    CHECK(json::parse(cli.Get("/api/alerts?status=all")->body)["alerts"].size() == 2);
}

TEST_CASE("HTTP: undefined metrics are null") {
    auto run = three_segment_run();
    for (auto& s : run.segments) s.outcome = s.query_present ? Outcome::FalseSilence : Outcome::TrueSilence;
    run.counts = {0, 0, 2, 0, 1};
    run.fr = finding_rate(run.counts);
    run.tvr = true_validation_rate(run.counts);
    AlertBoard board(run, kInstant);
    LiveServer server(board);
    const auto m = json::parse(server.client().Get("/api/metrics")->body);
    CHECK(m["fr"] == 0.0);
    CHECK(m["tvr"].is_null());
    CHECK(m["workload"] == 0);
}

TEST_CASE("HTTP: images") {
    ffprid::testing::TempDir dir("crops");
    write_text_file(dir / "crop.png", "\x89PNG-fake");
    auto run = three_segment_run();
    run.segments[0].top_eta[0].crop_ref = "crop.png";
    AlertBoard board(run, kInstant);
    LiveServer server(board, dir.path());
    auto cli = server.client();
    const auto alert = json::parse(cli.Get("/api/alerts")->body)["alerts"][0];

    auto crop = cli.Get(alert["candidates"][0]["image_url"].get<std::string>());
    REQUIRE(crop);
    CHECK(crop->status == 200);
    CHECK(crop->body == "\x89PNG-fake");
    CHECK(crop->get_header_value("Content-Type") == "image/png");

    auto placeholder = cli.Get(alert["candidates"][1]["image_url"].get<std::string>());
    CHECK(placeholder->status == 200);
    CHECK(placeholder->get_header_value("Content-Type") == "image/svg+xml");
    CHECK(placeholder->body.find("f20_d0") != std::string::npos);

    auto query = cli.Get(alert["query_image_url"].get<std::string>());
    CHECK(query->status == 200);
    CHECK(query->body.find("<svg") == 0);

    CHECK(cli.Get("/api/images/nonsense")->status == 404);
    CHECK(cli.Get("/api/images/alert-0001~f77_d0")->status == 404);
}

TEST_CASE("service reads results written by the pipeline") {
    ffprid::testing::TempDir dir("results");
    const auto run = synthetic_run(2, 100, 0.5, 6);
    save_run(run, dir / "run.json");
    AlertBoard board(load_run(dir / "run.json"), kInstant);
    CHECK(board.metrics_snapshot().machine == run.counts);
    CHECK(static_cast<std::int64_t>(board.alerts().size()) == run.counts.alerts());
}
