#include "facetag/io.hpp"
#include "facetag/metrics.hpp"
#include "facetag/models.hpp"
#include "facetag/rng.hpp"
#include "facetag/synth.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <json.hpp>

using namespace facetag;

namespace {

std::vector<Eigen::Index> starts(const std::vector<FrameRange>& segs) {
    std::vector<Eigen::Index> out;
    for (const auto& s : segs) out.push_back(s.begin);
    return out;
}

// Every segment's features equal its recording's 4-d target.
SegmentDataset exact_dataset(std::size_t recordings, Eigen::Index segments_each) {
    Rng rng(77);
    SegmentDataset d;
    d.targets.resize(static_cast<Eigen::Index>(recordings), 4);
    d.features.resize(static_cast<Eigen::Index>(recordings) * segments_each, 4);
    d.blocks = {{0, 4}};
    for (Eigen::Index r = 0; r < d.targets.rows(); ++r) {
        for (Eigen::Index s = 0; s < 4; ++s) d.targets(r, s) = rng.uniform(1, 5);
        d.offsets.push_back(r * segments_each);
        for (Eigen::Index k = 0; k < segments_each; ++k) d.features.row(r * segments_each + k) = d.targets.row(r);
    }
    d.offsets.push_back(d.features.rows());
    return d;
}

}  // namespace

TEST_CASE("grid and hyperparameters") {
    const auto grid = default_grid();
    CHECK(grid.size() == 36);
    CHECK(grid.front() == HyperParams{1.5, 0.0, 5, PcaScope::per_group});
    for (const auto& h : grid) CHECK_NOTHROW(validate_hyper(h));
    CHECK_THROWS_AS(validate_hyper({7.0, 0.0, 5, PcaScope::combined}), InvalidArgument);
    CHECK_THROWS_AS(validate_hyper({2.0, 1.0, 5, PcaScope::combined}), InvalidArgument);
    CHECK_THROWS_AS(validate_hyper({2.0, 0.5, 0, PcaScope::combined}), InvalidArgument);
    CHECK(describe({2.0, 0.5, 10, PcaScope::combined}) == "seg=2s overlap=0.5 pca=10 scope=combined");
    CHECK(pca_scope_from_name("per-group") == PcaScope::per_group);
    CHECK(target_kind_from_name("subjective") == TargetKind::subjective);
}

TEST_CASE("segment_window") {
    CHECK(starts(segment_window(FrameRange{0, 180}, Segmentation{60, 30})) == std::vector<Eigen::Index>{0, 30, 60, 90, 120});
    CHECK(starts(segment_window(FrameRange{0, 180}, Segmentation{60, 60})) == std::vector<Eigen::Index>{0, 60, 120});
    const auto shifted = segment_window(FrameRange{0, 170}, Segmentation{60, 30});
    CHECK(starts(shifted) == std::vector<Eigen::Index>{0, 30, 60, 90, 110});
    CHECK(shifted.back().end == 170);
    CHECK(segment_window(FrameRange{10, 70}, Segmentation{60, 30}).size() == 1);
    CHECK_THROWS_AS(segment_window(FrameRange{0, 50}, Segmentation{60, 30}), InvalidArgument);

    const HyperParams h{2.0, 0.5, 5, PcaScope::combined};
    CHECK(segmentation_for(h, 30.0) == Segmentation{60, 30});
    CHECK(segment_window(HighlightWindow{300, 180}, h, 30.0).front().begin == 300);
}

TEST_CASE("feature masks") {
    const FeatureLayout layout{51};
    const FeatureMask all;
    CHECK(all.describe() == "moments+discrete+dynamic+misc");
    CHECK(FeatureMask::parse("misc+moments") == FeatureMask{{true, false, false, true}});
    CHECK_THROWS_AS(FeatureMask::parse("moments+joy"), InvalidArgument);
    const auto blocks = mask_blocks(layout, FeatureMask::only(FeatureGroup::dynamic));
    REQUIRE(blocks.size() == 1);
    CHECK(blocks[0] == std::pair<Eigen::Index, Eigen::Index>{0, 153});
    const Eigen::MatrixXd rows = Eigen::MatrixXd::Random(2, 513);
    const Eigen::MatrixXd misc = select_features(rows, layout, FeatureMask::only(FeatureGroup::misc));
    CHECK(misc == rows.rightCols(2));
    CHECK_THROWS_AS(select_features(rows, layout, FeatureMask{{false, false, false, false}}), InvalidArgument);
}

TEST_CASE("segment datasets") {
    const Corpus c = generate_synthetic_corpus(testing::small_spec(2, 17, 4));
    const FeatureStore store(c);
    const auto recs = store.recordings_of_viewer("v01");
    REQUIRE(recs.size() == 17);
    const HyperParams h{2.0, 0.5, 5, PcaScope::combined};
    const SegmentDataset d = build_segment_dataset(store, recs, h, TargetKind::clip_tags, {});
    CHECK(d.features.rows() == 85);
    CHECK(d.features.cols() == 513);
    CHECK(d.recordings() == 17);
    CHECK(d.offsets.size() == 18);
    CHECK(d.targets.row(0) == c.tag(c.recordings()[recs[0]].clip_id).to_eigen().transpose());
    CHECK(d.blocks.size() == 4);

    const SegmentDataset sub = build_segment_dataset(store, recs, h, TargetKind::subjective, FeatureMask::only(FeatureGroup::misc));
    CHECK(sub.features.cols() == 2);
    CHECK(sub.targets.row(3) == c.report("v01", c.recordings()[recs[3]].clip_id).to_eigen().transpose());

    const SegmentDataset disjoint = build_segment_dataset(store, recs, {2.0, 0.0, 5, PcaScope::combined}, TargetKind::clip_tags, {});
    CHECK(disjoint.features.rows() == 17 * 3);
}

TEST_CASE("two-step fit") {
    SUBCASE("exact-fit data is reproduced") {
        const SegmentDataset d = exact_dataset(10, 3);
        const ModelBundle b = fit_two_step(d, {2.0, 0.5, 4, PcaScope::combined});
        for (Eigen::Index r = 0; r < 10; ++r) {
            const AffectVector p = predict_segments(b, d.features.middleRows(d.offsets[r], 3));
            CHECK((p.to_eigen() - d.targets.row(r).transpose()).cwiseAbs().maxCoeff() < 1e-4);
        }
    }
    SUBCASE("one segment per recording leaves the std indicators at zero") {
        const SegmentDataset d = exact_dataset(10, 1);
        const ModelBundle b = fit_two_step(d, {6.0, 0.0, 4, PcaScope::combined});
        CHECK(b.f2.weights.allFinite());
        CHECK(indicator_vector(d.features.topRows(1)).tail(4).isZero(0.0));
        const Eigen::Vector4d p = predict_segments(b, d.features.topRows(1)).to_eigen();
        CHECK((p - d.targets.row(0).transpose()).cwiseAbs().maxCoeff() < 1e-4);
    }
    SUBCASE("zero second stage gives its intercept") {
        ModelBundle b = fit_two_step(exact_dataset(10, 2), {2.0, 0.5, 4, PcaScope::combined});
        b.f2.weights.setZero();
        b.f2.intercept = Eigen::Vector4d(1, 2, 3, 4);
        CHECK(predict_segments(b, Eigen::MatrixXd::Zero(2, 4)) == AffectVector{1, 2, 3, 4});
    }
    SUBCASE("indicators") {
        Eigen::MatrixXd p(2, 4);
        p << 1, 2, 3, 4, 3, 2, 1, 0;
        Eigen::VectorXd want(8);
        want << 2, 2, 2, 2, 1, 0, 1, 2;
        CHECK(indicator_vector(p) == want);
    }
}

TEST_CASE("stored and direct prediction agree and stay finite") {
    const Corpus c = generate_synthetic_corpus(testing::small_spec(2, 6, 10));
    const FeatureStore store(c);
    const auto recs = store.recordings_of_viewer("v02");
    for (const HyperParams& h : testing::tiny_grid()) {
        const ModelBundle b = fit_two_step(store, recs, h, TargetKind::clip_tags);
        for (std::size_t i = 0; i < store.size(); ++i) {
            const AffectVector p = predict_stored(b, store, i);
            CHECK(p.finite());
            CHECK(p == predict_two_step(b, c.recordings()[i], c.gestures()));
        }
    }
}

TEST_CASE("training fit beats held-out fit on planted data") {
    const Corpus c = generate_synthetic_corpus(testing::small_spec(1 + 1, 10, 21));
    const FeatureStore store(c);
    const auto recs = store.recordings_of_viewer("v01");
    const HyperParams h{3.0, 0.0, 5, PcaScope::combined};
    const ModelBundle full = fit_two_step(store, recs, h, TargetKind::clip_tags);
    Eigen::MatrixXd actual(10, 4), train(10, 4), held(10, 4);
    for (std::size_t k = 0; k < recs.size(); ++k) {
        std::vector<std::size_t> rest = recs;
        rest.erase(rest.begin() + static_cast<long>(k));
        const ModelBundle b = fit_two_step(store, rest, h, TargetKind::clip_tags);
        actual.row(static_cast<Eigen::Index>(k)) = c.tag(c.recordings()[recs[k]].clip_id).to_eigen();
        train.row(static_cast<Eigen::Index>(k)) = predict_stored(full, store, recs[k]).to_eigen();
        held.row(static_cast<Eigen::Index>(k)) = predict_stored(b, store, recs[k]).to_eigen();
    }
    for (Eigen::Index s = 0; s < 4; ++s) {
        CHECK(pearson_r(actual.col(s), train.col(s)) >= pearson_r(actual.col(s), held.col(s)));
    }
}

TEST_CASE("calibration") {
    const Corpus c = generate_synthetic_corpus(testing::small_spec(2, 7, 5));
    const FeatureStore store(c);
    const auto recs = store.recordings_of_viewer("v01");
    const auto grid = testing::tiny_grid();

    const CalibrationResult single = calibrate(store, recs, {grid[1]}, TargetKind::clip_tags);
    CHECK(single.best == 0);
    CHECK(single.hyper == grid[1]);

    const CalibrationResult a = calibrate(store, recs, grid, TargetKind::clip_tags);
    CHECK(a == calibrate(store, recs, grid, TargetKind::clip_tags));
    CHECK(a.scores.size() == 2);
    CHECK(a.scores[a.best] == *std::max_element(a.scores.begin(), a.scores.end()));

    const CalibrationResult tie = calibrate(store, recs, {grid[0], grid[0]}, TargetKind::clip_tags);
    CHECK(tie.best == 0);

    const auto cached = calibrate_each_held_out(store, recs, grid, TargetKind::clip_tags);
    REQUIRE(cached.size() == recs.size());
    for (std::size_t k = 0; k < recs.size(); ++k) {
        std::vector<std::size_t> rest = recs;
        rest.erase(rest.begin() + static_cast<long>(k));
        CHECK(cached[k] == calibrate(store, rest, grid, TargetKind::clip_tags));
    }

    const std::vector<int> bad_folds = {0, 0};
    CHECK_THROWS_AS(calibrate(store, recs, grid, TargetKind::clip_tags, {}, bad_folds), InvalidArgument);
    CHECK_THROWS_AS(calibrate(store, recs, {}, TargetKind::clip_tags), InvalidArgument);
}

TEST_CASE("calibration objective") {
    Eigen::MatrixXd a(4, 4), p(4, 4);
    a << 1, 2, 3, 4, 2, 3, 4, 1, 3, 4, 1, 2, 4, 1, 2, 3;
    p = a;
    CHECK(calibration_objective(a, p) == doctest::Approx(1.0));
    p.col(3).setConstant(2.0);  // undefined R counts 0
    CHECK(calibration_objective(a, p) == doctest::Approx(0.75));
}

TEST_CASE("removing held-out data leaves every bundle bit-identical") {
    const Corpus c = generate_synthetic_corpus(testing::small_spec(4, 5, 6));
    const FeatureStore store(c);
    const auto grid = testing::tiny_grid();

    const Corpus no_clip = c.without_clip("c03");
    const FeatureStore store_no_clip(no_clip);
    CHECK(train_imt1(store, "v02", "c03", grid) == train_imt1(store_no_clip, "v02", "c03", grid));
    CHECK(train_ap1(store, "v02", "c03", grid) == train_ap1(store_no_clip, "v02", "c03", grid));

    const Corpus no_other = c.without_viewer("v04");
    const FeatureStore store_no_other(no_other);
    CHECK(train_imt1(store, "v02", "c03", grid) == train_imt1(store_no_other, "v02", "c03", grid));

    const Corpus no_viewer = c.without_viewer("v01");
    const FeatureStore store_no_viewer(no_viewer);
    CHECK(train_ap_star(store, "v01", grid, {}, 3) == train_ap_star(store_no_viewer, "v01", grid, {}, 3));
}

TEST_CASE("IMT-2 pools IMT-1 predictions") {
    const Corpus c = generate_synthetic_corpus(testing::small_spec(2, 5, 8));
    const FeatureStore store(c);
    const auto grid = testing::tiny_grid();
    const AffectVector p = predict_stored(train_imt1(store, "v01", "c02", grid), store, *store.index_of("v01", "c02"));
    const AffectVector q = predict_stored(train_imt1(store, "v02", "c02", grid), store, *store.index_of("v02", "c02"));
    CHECK(predict_imt2(store, {"v01"}, "c02", grid) == p);
    const Eigen::Vector4d mean = predict_imt2(store, {"v01", "v02"}, "c02", grid).to_eigen();
    CHECK((mean - (p.to_eigen() + q.to_eigen()) / 2.0).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(predict_imt2(store, {}, "c02", grid), InvalidArgument);
}

TEST_CASE("baselines") {
    const Corpus noiseless = generate_synthetic_corpus(testing::small_spec(3, 5, 2, 0.0));
    const ReportTagBaseline b = baseline_report_tags(noiseless);
    for (Eigen::Index s = 0; s < 4; ++s) CHECK(b.mean_r(s) == doctest::Approx(1.0));

    const Corpus two = generate_synthetic_corpus(testing::small_spec(2, 4, 2));
    const auto ovo = baseline_one_viewer_out(two, "v01");
    for (const auto& [clip, pred] : ovo) CHECK(pred == two.report("v02", clip));

    // Identical reports across viewers are predicted exactly.
    const auto same = baseline_one_viewer_out(noiseless, "v03");
    for (const auto& [clip, pred] : same) {
        CHECK((pred.to_eigen() - noiseless.report("v03", clip).to_eigen()).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("bundle json round-trip") {
    const Corpus c = generate_synthetic_corpus(testing::small_spec(2, 5, 3));
    const FeatureStore store(c);
    const auto recs = store.recordings_of_viewer("v01");
    for (const HyperParams& h : testing::tiny_grid()) {
        const ModelBundle b = fit_two_step(store, recs, h, TargetKind::subjective, FeatureMask::parse("moments+misc"));
        const std::string text = bundle_to_json(b);
        CHECK(bundle_from_json(text) == b);
        CHECK(bundle_to_json(bundle_from_json(text)) == text);
    }
    const std::string good = bundle_to_json(fit_two_step(store, recs, testing::tiny_grid()[0], TargetKind::clip_tags));
    CHECK_THROWS_AS(bundle_from_json("{"), SchemaError);
    auto j = nlohmann::json::parse(good);
    j["version"] = 99;
    CHECK_THROWS_AS(bundle_from_json(j.dump()), SchemaError);
    j = nlohmann::json::parse(good);
    j.erase("f2");
    CHECK_THROWS_AS(bundle_from_json(j.dump()), SchemaError);
}
