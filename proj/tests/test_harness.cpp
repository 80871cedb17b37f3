#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "crossdino/clap.hpp"
#include "crossdino/harness/coco.hpp"
#include "crossdino/harness/fixed_size_mlp.hpp"
#include "crossdino/harness/score_stats.hpp"
#include "crossdino/harness/synth.hpp"
#include "crossdino/harness/train.hpp"

using namespace crossdino;
using namespace crossdino::harness;
using Catch::Approx;

namespace {

std::array<std::size_t, 5> bucket_counts(const std::vector<SynthSample>& data) {
    std::array<std::size_t, 5> c{};
    for (const auto& s : data) ++c[static_cast<std::size_t>(s.bucket)];
    return c;
}

std::string metrics_csv(const TrainMetrics& m, const RunConfig& cfg) {
    std::ostringstream os;
    write_metrics_csv(os, m, cfg);
    return os.str();
}

} // namespace

TEST_CASE("synth_dataset", "[harness][synth]") {
    SECTION("deterministic per seed") {
        const auto a = synth_dataset(7, 300), b = synth_dataset(7, 300), c = synth_dataset(8, 300);
        REQUIRE(a.size() == 300);
        bool differs = false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].features == b[i].features);
            CHECK(a[i].h == b[i].h);
            CHECK(a[i].w == b[i].w);
            CHECK(a[i].y == b[i].y);
            differs = differs || a[i].h != c[i].h;
        }
        CHECK(differs);
    }
    SECTION("golden bucket counts for seed 42") {
        const auto data = synth_dataset(42, 100000);
        const auto counts = bucket_counts(data);
        CHECK(counts == std::array<std::size_t, 5>{12368, 15626, 21977, 31834, 18195});
        std::size_t positives = 0;
        for (const auto& s : data) positives += s.y;
        CHECK(positives > 49000);
        CHECK(positives < 51000);
    }
    SECTION("single sample within ranges") {
        const auto data = synth_dataset(3, 1);
        REQUIRE(data.size() == 1);
        const auto& s = data[0];
        CHECK(s.h >= 2.0);
        CHECK(s.h <= 512.0);
        CHECK(s.w >= 2.0);
        CHECK(s.w <= 512.0);
        CHECK((s.y == 0 || s.y == 1));
        CHECK(s.bucket == bucket_of(s.h, s.w));
        CHECK(s.features.shape() == Shape{kFeatureDim});
        for (double v : s.features.data()) CHECK(std::isfinite(v));
    }
    SECTION("bucket edges") {
        CHECK(bucket_of(2, 2) == SizeBucket::very_tiny);
        CHECK(bucket_of(7.99, 8) == SizeBucket::very_tiny);
        CHECK(bucket_of(8, 8) == SizeBucket::tiny);
        CHECK(bucket_of(4, 63) == SizeBucket::tiny);
        CHECK(bucket_of(4, 64) == SizeBucket::small);
        CHECK(bucket_of(16, 16) == SizeBucket::small);
        CHECK(bucket_of(32, 32) == SizeBucket::medium);
        CHECK(bucket_of(96, 96) == SizeBucket::large);
    }
    CHECK_THROWS_AS(synth_dataset(1, 0), DomainError);
}

TEST_CASE("train_toy", "[harness][train]") {
    SECTION("zero epochs reproduce the initial model") {
        const auto data = synth_dataset(5, 400);
        RunConfig cfg;
        cfg.epochs = 0;
        const auto a = train_toy(data, cfg), b = train_toy(data, cfg);
        CHECK(a.epochs == 0);
        CHECK(metrics_csv(a, cfg) == metrics_csv(b, cfg));
        cfg.seed = 43;
        CHECK(metrics_csv(train_toy(data, cfg), cfg) != metrics_csv(a, cfg));
    }
    SECTION("training lowers both losses") {
        const auto data = synth_dataset(6, 600);
        for (auto kind : {LossKind::boost, LossKind::focal}) {
            RunConfig cfg;
            cfg.loss = kind;
            cfg.epochs = 0;
            const auto before = train_toy(data, cfg);
            cfg.epochs = 60;
            const auto after = train_toy(data, cfg);
            CHECK(after.final_loss < before.final_loss);
            CHECK(after.box_loss < before.box_loss);
        }
    }
    SECTION("buckets partition the data") {
        const auto data = synth_dataset(9, 700);
        RunConfig cfg;
        cfg.epochs = 5;
        const auto m = train_toy(data, cfg);
        std::size_t total = 0;
        for (const auto& b : m.buckets) {
            total += b.samples;
            CHECK(b.positives <= b.samples);
            if (b.positives) {
                CHECK(b.recall >= 0.0);
                CHECK(b.recall <= 1.0);
            }
        }
        CHECK(total == data.size());
    }
    SECTION("divergence is reported with its epoch") {
        const auto data = synth_dataset(10, 200);
        RunConfig cfg;
        cfg.lr = 1e300;
        try {
            train_toy(data, cfg);
            FAIL("expected TrainingError");
        } catch (const TrainingError& e) {
            CHECK(e.epoch() >= 0);
            CHECK(std::string(e.what()).find("epoch") != std::string::npos);
        }
    }
    SECTION("config validation") {
        const auto data = synth_dataset(1, 10);
        RunConfig cfg;
        cfg.lr = 0;
        CHECK_THROWS_AS(train_toy(data, cfg), DomainError);
        cfg = {};
        cfg.beta = 0;
        CHECK_THROWS_AS(train_toy(data, cfg), DomainError);
        cfg = {};
        cfg.epochs = -1;
        CHECK_THROWS_AS(train_toy(data, cfg), DomainError);
        CHECK_THROWS_AS(train_toy({}, RunConfig{}), DomainError);
    }
}

TEST_CASE("seed 42 boost and focal runs", "[harness][train][slow]") {
    const auto data = synth_dataset(42, 5000);
    RunConfig boost_cfg;
    boost_cfg.beta = 0.05;
    const auto boost_run = train_toy(data, boost_cfg);
    RunConfig focal_cfg;
    focal_cfg.loss = LossKind::focal;
    const auto focal_run = train_toy(data, focal_cfg);

    CHECK(boost_run.epochs == 200);
    CHECK(std::isfinite(boost_run.final_loss));
    CHECK(std::isfinite(focal_run.final_loss));
    // With beta = 0.05 the (1 - cs_hat^beta)^gamma factor dominates cs^beta.
    const auto& b = boost_run.buckets;
    for (std::size_t k = 0; k + 1 < b.size(); ++k) CHECK(b[k].mean_positive_weight >= b[k + 1].mean_positive_weight);
    CHECK(boost_run.bucket(SizeBucket::very_tiny).mean_positive_weight >
          boost_run.bucket(SizeBucket::large).mean_positive_weight);

    const auto csv = metrics_csv(focal_run, focal_cfg);
    CHECK(csv.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}

TEST_CASE("coco results", "[harness][coco]") {
    CHECK(parse_coco_results("[]").empty());

    const auto dets = parse_coco_results(
        R"([{"image_id": 42, "category_id": 3, "bbox": [1.5, 2.25, 10, 20.125], "score": 0.875}])");
    REQUIRE(dets.size() == 1);
    CHECK(dets[0] == Detection{42, 3, 1.5, 2.25, 10, 20.125, 0.875});

    auto error_of = [](const std::string& text) {
        try {
            parse_coco_results(text);
        } catch (const ParseError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(error_of(R"([{"image_id": 1, "category_id": 1, "bbox": [0, 0, 5], "score": 0.5}])")
              .find("entry 0") != std::string::npos);
    const auto missing = error_of(R"([{"image_id": 1, "category_id": 1, "bbox": [0, 0, 5, 5], "score": 0.5},
                                      {"image_id": 1, "bbox": [0, 0, 5, 5], "score": 0.5}])");
    CHECK(missing.find("entry 1") != std::string::npos);
    CHECK(missing.find("category_id") != std::string::npos);
    CHECK(error_of(R"([{"image_id": 1, "category_id": 1, "bbox": [0, 0, 5, 5], "score": 1.5}])").find("entry 0") !=
          std::string::npos);
    CHECK(error_of(R"([{"image_id": 1, "category_id": 1, "bbox": [0, 0, -5, 5], "score": 0.5}])").find("entry 0") !=
          std::string::npos);
    CHECK(error_of(R"([{"image_id": 1.5, "category_id": 1, "bbox": [0, 0, 5, 5], "score": 0.5}])").find("entry 0") !=
          std::string::npos);
    CHECK_FALSE(error_of(R"({"image_id": 1})").empty());
    CHECK_FALSE(error_of("[{").empty());
    CHECK_THROWS_AS(ingest_coco_results("/nonexistent/results.json"), ParseError);
}

TEST_CASE("score_stats", "[harness][score_stats]") {
    auto det = [](double w, double h, double score) { return Detection{1, 1, 0, 0, w, h, score}; };

    SECTION("two detections in two buckets") {
        const std::vector<Detection> dets{det(4, 4, 0.5), det(100, 100, 0.9)};
        const std::vector<double> edges{0, 32};
        const auto s = score_stats(dets, 0.4, edges);
        REQUIRE(s.size() == 2);
        CHECK(s[0].count == 1);
        CHECK(s[0].mean_score == 0.5);
        CHECK(s[1].count == 1);
        CHECK(s[1].mean_score == 0.9);
        CHECK(std::isinf(s[1].hi));
    }
    SECTION("nothing passes the threshold") {
        const std::vector<Detection> dets{det(4, 4, 0.1), det(50, 50, 0.3)};
        for (const auto& b : score_stats(dets, 0.4, kDefaultScoreEdges)) {
            CHECK(b.count == 0);
            CHECK(std::isnan(b.mean_score));
        }
    }
    SECTION("single bucket at threshold zero is the global mean") {
        Rng rng(3);
        std::vector<Detection> dets;
        double total = 0;
        for (int i = 0; i < 50; ++i) {
            dets.push_back(det(rng.uniform(0, 300), rng.uniform(0, 300), rng.uniform()));
            total += dets.back().score;
        }
        const std::vector<double> edges{0};
        const auto s = score_stats(dets, 0.0, edges);
        REQUIRE(s.size() == 1);
        CHECK(s[0].count == 50);
        CHECK(s[0].mean_score == Approx(total / 50).epsilon(1e-14));
    }
    SECTION("counts add up to the passing detections") {
        Rng rng(4);
        std::vector<Detection> dets;
        for (int i = 0; i < 500; ++i) dets.push_back(det(rng.uniform(0, 400), rng.uniform(0, 400), rng.uniform()));
        for (double threshold : {0.0, 0.4, 0.9}) {
            std::size_t passing = 0, counted = 0;
            for (const auto& d : dets) passing += d.score >= threshold;
            for (const auto& b : score_stats(dets, threshold, kDefaultScoreEdges)) counted += b.count;
            CHECK(counted == passing);
        }
    }
    SECTION("invalid arguments") {
        const std::vector<Detection> dets{det(4, 4, 0.5)};
        const std::vector<double> unsorted{0, 32, 16}, none{};
        CHECK_THROWS_AS(score_stats(dets, 1.5, kDefaultScoreEdges), DomainError);
        CHECK_THROWS_AS(score_stats(dets, 0.4, unsorted), DomainError);
        CHECK_THROWS_AS(score_stats(dets, 0.4, none), DomainError);
    }
    SECTION("csv rows") {
        const std::vector<Detection> dets{det(4, 4, 0.5)};
        const std::vector<double> edges{0, 32};
        std::ostringstream os;
        write_score_stats_csv(os, score_stats(dets, 0.4, edges));
        CHECK(os.str() == "bucket_lo,bucket_hi,count,mean_score\n"
                          "0.000000,32.000000,1,0.500000\n"
                          "32.000000,inf,0,NA\n");
    }
}

TEST_CASE("fixed-size MLP", "[harness][mlp]") {
    Rng rng(11);
    SECTION("identity") {
        Tensor x({2, 3, 4});
        for (auto& v : x.data()) v = rng.normal();
        CHECK(FixedSizeMlp::identity(3, 4)(x) == x);
    }
    SECTION("rejects other sizes") {
        const auto op = FixedSizeMlp::identity(3, 4);
        CHECK_THROWS_AS(op(Tensor({1, 4, 3})), DimensionError);
        CHECK_THROWS_AS(op(Tensor({3, 4})), DimensionError);
    }
    SECTION("two by two against hand arithmetic") {
        const FixedSizeMlp op(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::vector({0.5, -1}),
                              Tensor::matrix({{0, 1}, {2, -1}}), Tensor::vector({1, 0}));
        const Tensor x({1, 2, 2}, {1, 2, 3, 4});
        // rows: [1,2] -> [1+4+0.5, 3+8-1] = [5.5, 10]; [3,4] -> [3+8+0.5, 9+16-1] = [11.5, 24]
        // columns: out(0,q) = r(1,q) + 1, out(1,q) = 2 r(0,q) - r(1,q)
        CHECK(op(x) == Tensor({1, 2, 2}, {12.5, 25, -0.5, -4}));
    }
}

TEST_CASE("CLAP lifts the fixed-size constraint", "[harness][clap]") {
    Rng rng(12);
    const auto op = FixedSizeMlp::random(56, 56, rng);
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{37, 91}, {224, 224}, {130, 300}, {56, 56}}) {
        Tensor x({2, h, w});
        for (auto& v : x.data()) v = rng.normal();
        const auto y = clap::clap_apply(x, op, 56, 56);
        CHECK(y.shape() == x.shape());
        if (h != 56 || w != 56) CHECK_THROWS_AS(op(x), DimensionError);
        else CHECK(y == op(x));
    }
}
