#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

#include "labeldb/error.hpp"
#include "labeldb/evaluate.hpp"

#include <map>

using namespace labeldb;
using evaluate::Detection;
using evaluate::GroundTruth;
using oracles::oracle_ap;
using oracles::oracle_iou;
using support::TempDir;

namespace {

struct Pair {
    TempDir dir;
    Session pred = Session::in_memory();
    fs::path gt_path = dir / "gt.db";
    Session gt = Session::open(std::nullopt, dir / "gt.db");
};

media::PixelBuffer mask(int w, int h, std::vector<uint8_t> values)
{
    media::PixelBuffer m(w, h, 1);
    m.data = std::move(values);
    return m;
}

}  // namespace

TEST_CASE("average_precision on simple rankings")
{
    CHECK(evaluate::average_precision({true, true}, 2) == 1.0);
    CHECK(evaluate::average_precision({}, 3) == 0.0);
    CHECK(evaluate::average_precision({false, false}, 1) == 0.0);
    CHECK(evaluate::average_precision({true, false}, 1) == 1.0);
    CHECK(evaluate::average_precision({false, true}, 1) == 0.5);
    CHECK(evaluate::average_precision({true, false, true}, 2) == doctest::Approx(0.5 + 0.5 * 2.0 / 3.0));
    CHECK(evaluate::average_precision({true}, 2) == 0.5);
    CHECK(evaluate::average_precision({true}, 0) == 0.0);
}

TEST_CASE("detection evaluation worked example")
{
    std::vector<GroundTruth> gts = {{"a", "car", {0, 0, 10, 10}}};
    // IoU of (0,0,10,10) with (0,0,10,6) is 0.6.
    std::vector<Detection> preds = {{"a", "car", {0, 0, 10, 6}, 0.9, 1}, {"a", "car", {50, 50, 5, 5}, 0.8, 2}};
    CHECK(oracle_iou(preds[0].box, gts[0].box) == doctest::Approx(0.6));
    auto result = evaluate::evaluate_detections(preds, gts, 0.5);
    CHECK(result.ap.at("car") == 1.0);
    CHECK(result.mean_ap == 1.0);
    CHECK(result.counts.at("car").tp == 1);
    CHECK(result.counts.at("car").fp == 1);
    CHECK(result.counts.at("car").fn == 0);
}

TEST_CASE("perfect and empty detectors")
{
    std::vector<GroundTruth> gts = {{"a", "car", {0, 0, 10, 10}}, {"a", "bus", {20, 20, 5, 5}}, {"b", "car", {1, 1, 3, 3}}};
    std::vector<Detection> perfect;
    int64_t id = 1;
    for (const auto& g : gts) {
        perfect.push_back({g.imagefile, g.name, g.box, 0.5 + 0.1 * double(id), id});
        ++id;
    }
    auto r = evaluate::evaluate_detections(perfect, gts, 0.5);
    CHECK(r.ap.at("car") == 1.0);
    CHECK(r.ap.at("bus") == 1.0);
    CHECK(r.mean_ap == 1.0);

    auto none = evaluate::evaluate_detections({}, gts, 0.5);
    CHECK(none.ap.at("car") == 0.0);
    CHECK(none.mean_ap == 0.0);
    CHECK(none.counts.at("car").fn == 2);
}

TEST_CASE("mean AP averages over ground-truth classes only")
{
    std::vector<GroundTruth> gts = {{"a", "car", {0, 0, 10, 10}}, {"a", "bus", {20, 20, 5, 5}}};
    std::vector<Detection> preds = {{"a", "car", {0, 0, 10, 10}, 1, 1}, {"a", "tram", {0, 0, 1, 1}, 1, 2}};
    auto r = evaluate::evaluate_detections(preds, gts, 0.5);
    CHECK(r.ap.size() == 2);
    CHECK(r.ap.count("tram") == 0);
    CHECK(r.counts.at("tram").fp == 1);
    CHECK(r.mean_ap == doctest::Approx(0.5));
}

TEST_CASE("a prediction never matches ground truth in another image or class")
{
    std::vector<GroundTruth> gts = {{"a", "car", {0, 0, 10, 10}}};
    CHECK(evaluate::evaluate_detections({{"b", "car", {0, 0, 10, 10}, 1, 1}}, gts, 0.5).ap.at("car") == 0);
    CHECK(evaluate::evaluate_detections({{"a", "bus", {0, 0, 10, 10}, 1, 1}}, gts, 0.5).ap.at("car") == 0);
}

TEST_CASE("greedy AP agrees with the independent evaluator on small random cases")
{
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> coord(0, 12);
    std::uniform_int_distribution<int> extent(2, 8);
    std::uniform_int_distribution<int> npred(0, 5);
    std::uniform_int_distribution<int> ngt(1, 4);
    // Coarse scores force ties.
    std::uniform_int_distribution<int> score(1, 3);
    std::uniform_int_distribution<int> img(0, 1);
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<GroundTruth> gts;
        std::vector<Detection> preds;
        int g = ngt(rng);
        for (int i = 0; i < g; ++i) {
            gts.push_back({img(rng) ? "a" : "b", "car",
                           {double(coord(rng)), double(coord(rng)), double(extent(rng)), double(extent(rng))}});
        }
        int p = npred(rng);
        for (int i = 0; i < p; ++i) {
            preds.push_back({img(rng) ? "a" : "b", "car",
                             {double(coord(rng)), double(coord(rng)), double(extent(rng)), double(extent(rng))},
                             score(rng) / 4.0, int64_t(p - i)});
        }
        for (double thresh : {0.1, 0.3, 0.5}) {
            auto r = evaluate::evaluate_detections(preds, gts, thresh);
            CHECK(r.ap.at("car") == doctest::Approx(oracle_ap(preds, gts, thresh)).epsilon(1e-9));
        }
    }
}

TEST_CASE("AP depends only on score order")
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> coord(0, 30);
    std::uniform_real_distribution<double> extent(3, 12);
    std::uniform_real_distribution<double> score(0, 1);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<GroundTruth> gts;
        std::vector<Detection> preds;
        for (int i = 0; i < 6; ++i) {
            gts.push_back({"a", i % 2 ? "car" : "bus", {coord(rng), coord(rng), extent(rng), extent(rng)}});
        }
        for (int i = 0; i < 10; ++i) {
            preds.push_back({"a", i % 2 ? "car" : "bus", {coord(rng), coord(rng), extent(rng), extent(rng)}, score(rng), i});
        }
        auto base = evaluate::evaluate_detections(preds, gts, 0.3);
        for (double k : {0.001, 3.5, 1000.0}) {
            auto scaled = preds;
            for (auto& d : scaled) {
                d.score *= k;
            }
            auto r = evaluate::evaluate_detections(scaled, gts, 0.3);
            CHECK(r.mean_ap == doctest::Approx(base.mean_ap).epsilon(1e-12));
            for (const auto& [cls, ap] : base.ap) {
                CHECK(r.ap.at(cls) == doctest::Approx(ap).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("AP does not increase with the IoU threshold")
{
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> coord(0, 20);
    std::uniform_real_distribution<double> extent(3, 12);
    std::uniform_real_distribution<double> score(0, 1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<GroundTruth> gts;
        std::vector<Detection> preds;
        for (int i = 0; i < 4; ++i) {
            gts.push_back({"a", "car", {coord(rng), coord(rng), extent(rng), extent(rng)}});
        }
        for (int i = 0; i < 6; ++i) {
            preds.push_back({"a", "car", {coord(rng), coord(rng), extent(rng), extent(rng)}, score(rng), i});
        }
        double previous = 2;
        for (double t = 0.05; t < 1; t += 0.05) {
            double ap = evaluate::evaluate_detections(preds, gts, t).ap.at("car");
            CHECK(ap <= previous + 1e-12);
            previous = ap;
        }
    }
}

TEST_CASE("evaluateDetection over two databases")
{
    Pair p;
    for (const char* f : {"a.png", "b.png"}) {
        p.pred.add_image(support::image(f));
        p.gt.add_image(support::image(f));
    }
    p.pred.add_image(support::image("only_pred.png"));
    p.gt.add_object(support::object("a.png", {0, 0, 10, 10}));
    p.gt.add_object(support::object("b.png", {5, 5, 10, 10}, "bus"));
    auto o = support::object("a.png", {0, 0, 10, 10});
    o.score = 0.9;
    p.pred.add_object(o);
    p.pred.add_object(support::object("only_pred.png", {0, 0, 10, 10}));
    ObjectRecord boxless;
    boxless.imagefile = "a.png";
    boxless.name = "car";
    p.pred.add_object(boxless);
    p.gt.commit();

    auto before = support::dump(p.pred);
    auto gt_bytes = support::read_file(p.gt_path);
    auto r = evaluate::evaluate_detection(p.pred, p.gt_path);
    CHECK(r.ap.at("car") == 1.0);
    CHECK(r.ap.at("bus") == 0.0);
    CHECK(r.mean_ap == 0.5);
    CHECK(r.counts.at("car").fp == 0);

    auto filtered = evaluate::evaluate_detection(p.pred, p.gt_path, 0.5, "name = 'car'");
    CHECK(filtered.ap.size() == 1);
    CHECK(filtered.mean_ap == 1.0);
    CHECK_THROWS_AS(evaluate::evaluate_detection(p.pred, p.gt_path, 0.5, "nonsense ="), QueryError);

    CHECK(support::dump(p.pred) == before);
    CHECK(support::read_file(p.gt_path) == gt_bytes);

    auto text = evaluate::to_text(r);
    CHECK(text.find("AP car: 1.000000\n") != std::string::npos);
    CHECK(text.find("mean AP: 0.500000\n") != std::string::npos);
    CHECK(evaluate::to_csv(r) == "class,ap,tp,fp,fn\r\nbus,0,0,0,1\r\ncar,1,1,0,0\r\n");
}

TEST_CASE("evaluation needs shared images")
{
    Pair p;
    p.pred.add_image(support::image("a.png"));
    p.gt.add_image(support::image("b.png"));
    p.gt.commit();
    CHECK_THROWS_AS(evaluate::evaluate_detection(p.pred, p.gt_path), Error);
    CHECK_THROWS_AS(evaluate::evaluate_segmentation(p.pred, p.gt_path), Error);
    CHECK_THROWS_AS(evaluate::evaluate_detection(p.pred, p.dir / "missing.db"), Error);
}

TEST_CASE("segmentation 2x2 example")
{
    std::map<int, evaluate::PixelCounts> pixels;
    evaluate::accumulate_masks(mask(2, 2, {1, 0, 1, 0}), mask(2, 2, {1, 1, 0, 0}), std::nullopt, pixels);
    CHECK(pixels.at(1).intersection == 1);
    CHECK(pixels.at(1).union_ == 3);
    evaluate::SegmentationResult r;
    r.pixels = pixels;
    evaluate::finalize(r);
    CHECK(r.iou.at(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(r.iou.at(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    std::map<int, evaluate::PixelCounts> only1;
    evaluate::accumulate_masks(mask(2, 2, {1, 0, 1, 0}), mask(2, 2, {1, 1, 0, 0}), std::vector<int>{1}, only1);
    CHECK(only1.size() == 1);
    evaluate::SegmentationResult r1;
    r1.pixels = only1;
    evaluate::finalize(r1);
    CHECK(std::abs(r1.mean_iou - 1.0 / 3.0) <= 1e-12);
}

TEST_CASE("segmentation identical and disjoint masks")
{
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> label(0, 4);
    std::vector<uint8_t> values(64);
    for (auto& v : values) {
        v = uint8_t(label(rng));
    }
    evaluate::SegmentationResult same;
    evaluate::accumulate_masks(mask(8, 8, values), mask(8, 8, values), std::nullopt, same.pixels);
    evaluate::finalize(same);
    CHECK(same.mean_iou == 1.0);
    for (const auto& [cls, v] : same.iou) {
        CHECK(v == 1.0);
    }

    evaluate::SegmentationResult disjoint;
    evaluate::accumulate_masks(mask(2, 1, {1, 0}), mask(2, 1, {0, 1}), std::vector<int>{1}, disjoint.pixels);
    evaluate::finalize(disjoint);
    CHECK(disjoint.iou.at(1) == 0.0);
}

TEST_CASE("segmentation counts agree with a per-class scan")
{
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<int> label(0, 5);
    evaluate::SegmentationResult r;
    std::map<int, std::pair<int64_t, int64_t>> expected;
    for (int image = 0; image < 5; ++image) {
        std::vector<uint8_t> a(30), b(30);
        for (size_t i = 0; i < a.size(); ++i) {
            a[i] = uint8_t(label(rng));
            b[i] = uint8_t(label(rng));
        }
        evaluate::accumulate_masks(mask(6, 5, a), mask(6, 5, b), std::nullopt, r.pixels);
        for (int c = 0; c <= 5; ++c) {
            for (size_t i = 0; i < a.size(); ++i) {
                expected[c].first += a[i] == c && b[i] == c;
                expected[c].second += a[i] == c || b[i] == c;
            }
        }
    }
    evaluate::finalize(r);
    double sum = 0;
    int n = 0;
    for (const auto& [c, counts] : expected) {
        if (counts.second == 0) {
            continue;
        }
        CHECK(r.pixels.at(c).intersection == counts.first);
        CHECK(r.pixels.at(c).union_ == counts.second);
        sum += double(counts.first) / double(counts.second);
        ++n;
    }
    CHECK(r.mean_iou == doctest::Approx(sum / n).epsilon(1e-12));
}

TEST_CASE("segmentation mask size mismatch")
{
    std::map<int, evaluate::PixelCounts> pixels;
    CHECK_THROWS_AS(evaluate::accumulate_masks(mask(2, 2, {0, 0, 0, 0}), mask(1, 4, {0, 0, 0, 0}), std::nullopt, pixels),
                    Error);
}

TEST_CASE("evaluateSegmentation over two databases")
{
    Pair p;
    p.pred.set_rootdir(p.dir.path());
    fs::create_directories(p.dir / "pred");
    fs::create_directories(p.dir / "gt");
    media::write_png(p.dir / "pred" / "a.png", mask(2, 2, {1, 0, 1, 0}));
    media::write_png(p.dir / "gt" / "a.png", mask(2, 2, {1, 1, 0, 0}));
    media::write_png(p.dir / "pred" / "big.png", mask(3, 2, {0, 0, 0, 0, 0, 0}));
    auto with_mask = [](std::string file, std::string m) {
        auto img = support::image(std::move(file), 2, 2);
        img.maskfile = std::move(m);
        return img;
    };
    p.pred.add_image(with_mask("a.jpg", "pred/a.png"));
    p.gt.add_image(with_mask("a.jpg", "gt/a.png"));
    p.pred.add_image(support::image("nomask.jpg"));
    p.gt.add_image(with_mask("nomask.jpg", "gt/a.png"));
    p.gt.commit();

    auto r = evaluate::evaluate_segmentation(p.pred, p.gt_path, std::vector<int>{1});
    CHECK(r.iou.at(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    REQUIRE(r.skipped.size() == 1);
    CHECK(r.skipped[0].path == "nomask.jpg");
    CHECK(evaluate::to_text(r).find("IoU 1: 0.333333 (intersection=1 union=3)") != std::string::npos);
    CHECK(evaluate::to_csv(r) == "class,iou,intersection,union\r\n1,0.3333333333333333,1,3\r\n");

    auto pred_img = *p.pred.image("a.jpg");
    pred_img.maskfile = "pred/big.png";
    p.pred.update_image(pred_img);
    try {
        evaluate::evaluate_segmentation(p.pred, p.gt_path);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("a.jpg") != std::string::npos);
    }
}
