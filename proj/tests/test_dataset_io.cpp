#include "ffprid/dataset_io.hpp"
#include "ffprid/error.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>

using namespace ffprid;

namespace {

GroundTruthTrack compact(std::string id, int fr, int s, BoundingBox b = {10, 20, 40, 90}) {
    return {std::move(id), fr, s, BoxForm::Compact, {b}};
}

GroundTruthTrack per_frame(std::string id, int fr, std::vector<BoundingBox> boxes) {
    const int n = static_cast<int>(boxes.size());
    return {std::move(id), fr, n, BoxForm::PerFrame, std::move(boxes)};
}

DetectionRecord det(int frame, int index, BoundingBox b) {
    return {frame, index, b, 0.9, std::nullopt};
}

}  // namespace

TEST_CASE("compact ground truth") {
    const auto tracks = parse_ground_truth_text("p007,120,50,10,20,40,90\n");
    REQUIRE(tracks.size() == 1);
    CHECK(tracks[0].id == "p007");
    CHECK(tracks[0].first_frame == 120);
    CHECK(tracks[0].end_frame() == 170);
    CHECK(tracks[0].form == BoxForm::Compact);
    CHECK(tracks[0].boxes.front() == BoundingBox{10, 20, 40, 90});
    CHECK(tracks[0].box_at(120).has_value());
    CHECK_FALSE(tracks[0].box_at(121).has_value());

    CHECK(parse_ground_truth_text("").empty());
    CHECK(parse_ground_truth_text("id,fr,s,ulx,uly,brx,bry\n\n").empty());
}

TEST_CASE("compact ground truth errors carry line numbers") {
    CHECK_THROWS_WITH_AS(parse_ground_truth_text("id,fr,s,ulx,uly,brx,bry\np1,0,0,1,1,2,2\n"),
                         doctest::Contains("line 2"), ValidationError);
    CHECK_THROWS_AS(parse_ground_truth_text("p1,0,5,1,1,2\n"), ValidationError);
    CHECK_THROWS_AS(parse_ground_truth_text("p1,x,5,1,1,2,2\n"), ValidationError);
    CHECK_THROWS_AS(parse_ground_truth_text("p1,0,5,3,1,2,2\n"), ValidationError);
    CHECK_THROWS_AS(parse_ground_truth_text("p1,0,10,1,1,2,2\np1,5,10,1,1,2,2\n"), ValidationError);
    // Disjoint ranges of the same identity are fine.
    CHECK(parse_ground_truth_text("p1,0,10,1,1,2,2\np1,10,10,1,1,2,2\n").size() == 2);
}

TEST_CASE("full ground truth") {
    const auto tracks = parse_ground_truth_text(
        "{\"frame\": 3, \"id\": \"a\", \"bbox\": [0, 0, 10, 20]}\n"
        "{\"frame\": 4, \"id\": \"a\", \"bbox\": [1, 0, 11, 20]}\n"
        "{\"frame\": 9, \"id\": \"a\", \"bbox\": [5, 0, 15, 20]}\n"
        "{\"frame\": 4, \"id\": \"b\", \"bbox\": [50, 0, 60, 20]}\n");
    REQUIRE(tracks.size() == 3);
    CHECK(tracks[0].id == "a");
    CHECK(tracks[0].first_frame == 3);
    CHECK(tracks[0].frame_count == 2);
    CHECK(tracks[1].first_frame == 9);
    CHECK(tracks[2].id == "b");
    CHECK(*tracks[0].box_at(4) == BoundingBox{1, 0, 11, 20});
    const auto caps = capabilities(tracks);
    CHECK(caps.detection_eval);
    CHECK(caps.gallery_labeling);

    CHECK_THROWS_WITH_AS(parse_ground_truth_text("{\"frame\": 1, \"id\": \"a\", \"bbox\": [0,0,1,1]}\n"
                                                 "{\"frame\": 1, \"id\": \"a\", \"bbox\": [0,0,1,1]}\n"),
                         doctest::Contains("line 2"), ValidationError);
    CHECK_THROWS_AS(parse_ground_truth_text("{\"frame\": 1, \"id\": \"a\"}\n"), ValidationError);
    CHECK_THROWS_AS(parse_ground_truth_text("{\"frame\": 1, \"id\": \"a\", \"bbox\": [0,0,1]}\n"), ValidationError);
    CHECK_THROWS_AS(parse_ground_truth_text("{\"frame\": 1.5, \"id\": \"a\", \"bbox\": [0,0,1,1]}\n"), ValidationError);
    CHECK_THROWS_AS(parse_ground_truth_text("{broken\n"), ValidationError);
}

TEST_CASE("compact capabilities") {
    std::vector<GroundTruthTrack> t{compact("a", 0, 20)};
    const auto caps = capabilities(t);
    CHECK(caps.presence);
    CHECK_FALSE(caps.detection_eval);
    CHECK_FALSE(caps.gallery_labeling);
    CHECK_THROWS_AS(ground_truth_by_frame(t), ValidationError);
}

TEST_CASE("property: ground truth round-trips through both forms") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> coord(0.0, 500.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<GroundTruthTrack> c;
        std::vector<GroundTruthTrack> f;
        const int n = 1 + static_cast<int>(rng() % 6);
        for (int i = 0; i < n; ++i) {
            const double x = coord(rng);
            const double y = coord(rng);
            const int start = static_cast<int>(rng() % 100);
            const int len = 1 + static_cast<int>(rng() % 30);
            const auto id = "id" + std::to_string(i);
            c.push_back(compact(id, start, len, {x, y, x + 13.7, y + 40.1}));
            std::vector<BoundingBox> boxes;
            for (int k = 0; k < len; ++k) boxes.push_back({x + k * 0.1, y, x + 20 + k * 0.1, y + 50.3});
            f.push_back(per_frame(id, start, boxes));
        }
        std::ostringstream cs;
        write_ground_truth_compact(c, cs);
        const auto c2 = parse_ground_truth_text(cs.str());
        CHECK(c2 == c);
        std::ostringstream cs2;
        write_ground_truth_compact(c2, cs2);
        CHECK(cs2.str() == cs.str());

        std::ostringstream fs;
        write_ground_truth_full(f, fs);
        CHECK(parse_ground_truth_text(fs.str()) == f);
    }
}

TEST_CASE("detections") {
    const auto d = parse_detections_text(
        "{\"frame\": 2, \"det_index\": 1, \"bbox\": [0,0,5,5], \"confidence\": 0.4}\n"
        "{\"frame\": 2, \"det_index\": 0, \"bbox\": [0,0,5,5], \"confidence\": 0.9, \"crop\": \"c/2_0.png\"}\n"
        "{\"frame\": 1, \"det_index\": 0, \"bbox\": [0,0,5,5], \"confidence\": 1}\n");
    REQUIRE(d.size() == 3);
    CHECK(d[0].frame == 1);
    CHECK(d[1].det_index == 0);
    CHECK(d[1].crop_ref == "c/2_0.png");
    CHECK_FALSE(d[2].crop_ref);

    std::ostringstream out;
    write_detections(d, out);
    const auto again = parse_detections_text(out.str());
    REQUIRE(again.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(again[i].bbox == d[i].bbox);
        CHECK(again[i].confidence == d[i].confidence);
        CHECK(again[i].crop_ref == d[i].crop_ref);
    }

    CHECK_THROWS_AS(parse_detections_text("{\"frame\": 0, \"det_index\": 0, \"bbox\": [0,0,5,5], \"confidence\": 1.5}"),
                    ValidationError);
    CHECK_THROWS_AS(parse_detections_text("{\"frame\": 0, \"det_index\": 0, \"bbox\": [0,0,5,5], \"confidence\": 1}\n"
                                          "{\"frame\": 0, \"det_index\": 0, \"bbox\": [0,0,5,5], \"confidence\": 1}"),
                    ValidationError);
}

TEST_CASE("similarity scores") {
    const auto s = parse_scores_text("{\"query_id\": \"q\", \"item_id\": \"f0_d0\", \"similarity\": 0.25}\n");
    REQUIRE(s.size() == 1);
    CHECK(s[0].similarity == 0.25);
    CHECK_THROWS_AS(parse_scores_text("{\"query_id\": \"q\", \"item_id\": \"f0_d0\", \"similarity\": -0.1}"),
                    ValidationError);
    CHECK_THROWS_AS(parse_scores_text("{\"query_id\": \"q\", \"item_id\": \"f0_d0\", \"similarity\": 0.1}\n"
                                      "{\"query_id\": \"q\", \"item_id\": \"f0_d0\", \"similarity\": 0.2}"),
                    ValidationError);
}

TEST_CASE("segment_timeline") {
    CHECK(segment_timeline(200, 100) == std::vector<Segment>{{0, 0, 100}, {1, 100, 200}});
    const auto s = segment_timeline(250, 100);
    REQUIRE(s.size() == 3);
    CHECK(s.back() == Segment{2, 200, 250});
    CHECK(segment_timeline(7, 1).size() == 7);
    CHECK(segment_timeline(5, 1000) == std::vector<Segment>{{0, 0, 5}});
    CHECK_THROWS_AS(segment_timeline(0, 10), ValidationError);
    CHECK_THROWS_AS(segment_timeline(10, 0), ValidationError);
}

TEST_CASE("property: segments cover every frame once") {
    for (int total = 1; total < 120; total += 7) {
        for (int tau : {1, 2, 3, 10, 33, 100, 1000}) {
            const auto segs = segment_timeline(total, tau);
            CHECK(segs.size() == static_cast<std::size_t>((total + tau - 1) / tau));
            int expect = 0;
            int sum = 0;
            for (std::size_t i = 0; i < segs.size(); ++i) {
                CHECK(segs[i].index == static_cast<int>(i));
                CHECK(segs[i].start == expect);
                CHECK(segs[i].length() >= 1);
                if (i + 1 < segs.size()) CHECK(segs[i].length() == tau);
                expect = segs[i].end;
                sum += segs[i].length();
            }
            CHECK(sum == total);
        }
    }
}

TEST_CASE("query_presence") {
    std::vector<GroundTruthTrack> t{compact("q", 120, 50)};
    CHECK(query_presence(t, "q", {1, 100, 200}).present);
    CHECK_FALSE(query_presence(t, "q", {2, 200, 300}).present);
    std::vector<GroundTruthTrack> edge{compact("q", 199, 11)};
    CHECK(query_presence(edge, "q", {1, 100, 200}).present);
    CHECK_FALSE(query_presence(edge, "q", {0, 0, 199}).present);
    const auto missing = query_presence(t, "nobody", {0, 0, 1000});
    CHECK_FALSE(missing.present);
    CHECK_FALSE(missing.identity_known);
}

TEST_CASE("property: presence somewhere iff track intersects the video") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 300; ++trial) {
        const int total = 1 + static_cast<int>(rng() % 300);
        const int tau = 1 + static_cast<int>(rng() % 50);
        const int fr = static_cast<int>(rng() % 400);
        const int s = 1 + static_cast<int>(rng() % 60);
        std::vector<GroundTruthTrack> t{compact("q", fr, s)};
        bool any = false;
        for (const auto& seg : segment_timeline(total, tau)) any = any || query_presence(t, "q", seg).present;
        CHECK(any == (fr < total));
    }
}

TEST_CASE("label_gallery") {
    std::vector<GroundTruthTrack> t{per_frame("q", 0, {{0, 0, 10, 10}}), per_frame("a", 0, {{100, 0, 110, 10}})};

    SUBCASE("exact box") {
        std::vector<DetectionRecord> d{det(0, 0, {0, 0, 10, 10})};
        const auto r = label_gallery(d, t);
        CHECK(r.items[0].true_identity == "q");
        CHECK(r.items[0].label == LabelStatus::Matched);
        CHECK(r.items[0].item_id == "f0_d0");
    }
    SUBCASE("weak overlap") {
        std::vector<DetectionRecord> d{det(0, 0, {7, 0, 17, 10})};  // IoU 3/17
        const auto r = label_gallery(d, t, 0.5);
        CHECK_FALSE(r.items[0].true_identity);
        CHECK(r.items[0].label == LabelStatus::Unknown);
        CHECK(r.unknown == 1);
    }
    SUBCASE("argmax and tie rule") {
        std::vector<GroundTruthTrack> two{per_frame("zz", 0, {{0, 0, 10, 10}}), per_frame("mm", 0, {{2, 0, 12, 10}})};
        std::vector<DetectionRecord> d{det(0, 0, {1, 0, 11, 10}), det(0, 1, {0, 0, 10, 10})};
        const auto r = label_gallery(d, two);
        CHECK(r.items[0].true_identity == "mm");  // equal IoU: smaller id
        CHECK(r.items[1].true_identity == "zz");  // 1.0 beats 0.667
    }
    SUBCASE("compact track without a box for the frame") {
        std::vector<GroundTruthTrack> c{compact("q", 0, 50, {0, 0, 10, 10})};
        std::vector<DetectionRecord> d{det(0, 0, {0, 0, 10, 10}), det(5, 0, {0, 0, 10, 10}), det(60, 0, {0, 0, 10, 10})};
        const auto r = label_gallery(d, c);
        CHECK(r.items[0].label == LabelStatus::Matched);
        CHECK(r.items[1].label == LabelStatus::Unlabelable);
        CHECK(r.items[2].label == LabelStatus::Unknown);
        CHECK(r.unlabelable == 1);
    }
}

TEST_CASE("file errors are I/O errors") {
    CHECK_THROWS_AS(parse_ground_truth("/nonexistent/dir/gt.csv"), IoError);
    CHECK_THROWS_AS(write_text_file("/nonexistent/dir/out.csv", "x"), IoError);
    const auto tmp = std::filesystem::temp_directory_path() / "ffprid_dataset_io_test.csv";
    write_text_file(tmp, "p1,0,5,1,1,2,2\n");
    CHECK(parse_ground_truth(tmp).size() == 1);
    std::filesystem::remove(tmp);
}
