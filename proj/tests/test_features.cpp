#include "facetag/features.hpp"
#include "facetag/rng.hpp"
#include "facetag/synth.hpp"

#include "helpers.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace facetag;

namespace {

// A 19-frame labeling with counts (6, 3, 5, 5) and six changes, four slow.
const std::vector<int> kLabels19 = {0, 0, 0, 1, 1, 3, 3, 3, 3, 3, 2, 2, 2, 2, 2, 0, 1, 0, 0};

std::vector<double> bumps(std::size_t n, const std::vector<std::pair<std::size_t, double>>& at, std::size_t width) {
    std::vector<double> x(n, 0.0);
    for (auto [start, amp] : at) {
        for (std::size_t i = 0; i <= width; ++i) {
            x[start + i] += amp * testing::bump(static_cast<double>(i) / static_cast<double>(width));
        }
    }
    return x;
}

}  // namespace

TEST_CASE("kmeans_1d") {
    SUBCASE("separated clusters") {
        const std::vector<double> v = {0, 0, 10, 10};
        const auto r = kmeans_1d(v, 2);
        CHECK(r.centroids == std::vector<double>{0, 10});
        CHECK(r.labels == std::vector<int>{0, 0, 1, 1});
    }
    SUBCASE("constant input collapses to one label") {
        const std::vector<double> v(9, 3.5);
        const auto r = kmeans_1d(v);
        CHECK(std::all_of(r.labels.begin(), r.labels.end(), [](int l) { return l == 0; }));
        CHECK(r.centroids.front() == 3.5);
    }
    SUBCASE("matches the exact optimum on random inputs") {
        Rng rng(17);
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t n = 4 + rng.below(21);
            std::vector<double> v(n);
            for (auto& x : v) x = rng.normal();
            const auto r = kmeans_1d(v, 4);
            const double got = kmeans_objective(v, r.labels, r.centroids);
            CHECK(got == doctest::Approx(oracle::kmeans_optimum(v, 4)).epsilon(1e-12));
            CHECK(std::is_sorted(r.centroids.begin(), r.centroids.end()));
            for (std::size_t i = 1; i < r.objective.size(); ++i) CHECK(r.objective[i] <= r.objective[i - 1] + 1e-12);
        }
    }
}

TEST_CASE("quantize_series") {
    AuSeries s;
    s.channels = {"square", "ramp", "flat"};
    s.values.resize(40, 3);
    for (Eigen::Index i = 0; i < 40; ++i) {
        s.values(i, 0) = (i / 5) % 2 ? 1.0 : 0.0;
        s.values(i, 1) = static_cast<double>(i);
        s.values(i, 2) = 2.0;
    }
    const QuantizedSeries q = quantize_series(s, {0, 40});
    REQUIRE(q.labels.size() == 3);
    CHECK(q.frames == 40);
    for (Eigen::Index i = 0; i < 40; ++i) CHECK(q.labels[0][i] == ((i / 5) % 2 ? 1 : 0));
    CHECK(std::is_sorted(q.labels[1].begin(), q.labels[1].end()));
    CHECK(q.labels[1].back() == 3);
    CHECK(std::all_of(q.labels[2].begin(), q.labels[2].end(), [](int l) { return l == 0; }));
}

TEST_CASE("moments") {
    const std::vector<double> flat(7, 2.0);
    const Moments m = moments(flat);
    CHECK(m.mean == 2.0);
    CHECK(m.variance == 0.0);
    CHECK(m.skewness == 0.0);
    CHECK(m.kurtosis == 0.0);
    const std::vector<double> two = {0.0, 1.0};
    CHECK(moments(two).mean == 0.5);
    CHECK(moments(two).variance == 0.25);

    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(50);
        for (auto& v : x) v = rng.normal(1.0, 2.0) + rng.uniform();
        const Moments got = moments(x);
        const oracle::Moments want = oracle::moments(x);
        CHECK(std::abs(got.mean - want.mean) < 1e-9);
        CHECK(std::abs(got.variance - want.variance) < 1e-9);
        CHECK(std::abs(got.skewness - want.skewness) < 1e-9);
        CHECK(std::abs(got.kurtosis - want.kurtosis) < 1e-9);
    }
}

TEST_CASE("activation statistics") {
    SUBCASE("labels with counts 6, 3, 5, 5 over 19 frames") {
        const ChannelActivation a = channel_activation(kLabels19);
        CHECK(a.ratio == 13.0 / 19.0);
        CHECK(a.level == 28.0 / 19.0);
        CHECK(a.level == doctest::Approx(1.473).epsilon(1e-3));
        // Active runs of 12 and 1 frames.
        CHECK(a.length == 6.5 / 19.0);
        CHECK(a.length == oracle::activation(kLabels19).length);
    }
    SUBCASE("0,1,1,0") {
        const std::vector<int> l = {0, 1, 1, 0};
        const ChannelActivation a = channel_activation(l);
        CHECK(a.ratio == 0.5);
        CHECK(a.length == 0.5);
        CHECK(a.level == 0.5);
    }
    SUBCASE("average volume is the mean level") {
        QuantizedSeries q;
        q.frames = 4;
        q.labels = {{0, 1, 1, 0}, {3, 3, 3, 3}};
        q.centroids = {{0, 1, 2, 3}, {0, 1, 2, 3}};
        const DiscreteStateFeatures d = discrete_state_features(q);
        CHECK(d.channels.size() == 2);
        CHECK(d.activation_average_volume == (0.5 + 3.0) / 2.0);
    }
}

TEST_CASE("transition matrices and dynamic features") {
    const std::vector<int> steady = {0, 0, 0};
    const TransitionMatrix m0 = transition_matrix(steady);
    CHECK(m0.at(0, 0) == 2);
    CHECK(m0.total_transitions == 2);
    const DynamicFeatures d0 = dynamic_features(m0);
    CHECK(d0.change_ratio == 0.0);
    CHECK(d0.slow_change_ratio == 0.0);
    CHECK(d0.fast_change_ratio == 0.0);

    const std::vector<int> jumps = {0, 1, 3};
    const TransitionMatrix m1 = transition_matrix(jumps);
    CHECK(m1.at(0, 1) == 1);
    CHECK(m1.at(1, 3) == 1);
    CHECK(m1.total_transitions == 2);

    const DynamicFeatures d19 = dynamic_features(transition_matrix(kLabels19));
    CHECK(d19.change_ratio == 6.0 / 18.0);
    CHECK(d19.slow_change_ratio == 4.0 / 18.0);
    CHECK(d19.fast_change_ratio == 2.0 / 18.0);

    const std::vector<int> alt = {0, 2, 0, 2};
    const DynamicFeatures da = dynamic_features(transition_matrix(alt));
    CHECK(da.change_ratio == 1.0);
    CHECK(da.slow_change_ratio == 0.0);
    CHECK(da.fast_change_ratio == 1.0);

    Rng rng(23);
    std::vector<int> random(19);
    for (auto& l : random) l = static_cast<int>(rng.below(4));
    const TransitionMatrix mr = transition_matrix(random);
    for (int a = 0; a < 4; ++a) {
        long row = 0;
        for (int b = 0; b < 4; ++b) row += mr.at(a, b);
        CHECK(row == std::count(random.begin(), random.end() - 1, a));
    }

    const std::vector<int> single = {2};
    CHECK_THROWS_AS(dynamic_features(transition_matrix(single)), InvalidArgument);
}

TEST_CASE("peak counting") {
    const std::vector<double> zero(50, 0.0);
    CHECK(count_peaks(zero, kSmileProminence) == 0);
    CHECK(count_peaks(bumps(60, {{10, 1.0}}, 20), kSmileProminence) == 1);
    const auto three = bumps(120, {{5, 1.0}, {40, 0.5}, {80, 0.9}}, 20);
    CHECK(count_peaks(three, kSmileProminence) == 2);
    CHECK(count_peaks(three, kSmileProminence) == oracle::count_peaks(three, kSmileProminence));

    const std::vector<double> plateau = {0, 1, 1, 1, 0, 2, 0};
    const auto peaks = find_peaks(plateau);
    REQUIRE(peaks.size() == 2);
    CHECK(peaks[0].index == 1);
    CHECK(peaks[0].prominence == 1.0);
    CHECK(peaks[1].prominence == 2.0);

    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(5 + rng.below(40));
        for (auto& v : x) v = std::round(rng.uniform(0, 4));  // forces plateaus
        const double prom = rng.uniform(0, 3);
        CHECK(count_peaks(x, prom) == oracle::count_peaks(x, prom));
    }
}

TEST_CASE("smile and blink counts") {
    const GestureChannels g = synthetic_gestures();
    Recording r = testing::flat_recording(900);
    const FrameRange all{0, 900};
    MiscFeatures m = misc_features(r.series, all, g);
    CHECK(m.smile_count == 0);
    CHECK(m.blink_count == 0);

    const auto left = bumps(900, {{100, 1.0}, {300, 1.0}}, 30);
    const auto right = bumps(900, {{100, 1.0}, {300, 1.0}, {500, 1.0}}, 30);
    const auto blink = bumps(900, {{50, 0.5}, {150, 0.5}, {250, 0.5}, {350, 0.5}}, 6);
    for (Eigen::Index i = 0; i < 900; ++i) {
        r.series.values(i, testing::channel_index(r, g.smile_left)) = left[i];
        r.series.values(i, testing::channel_index(r, g.smile_right)) = right[i];
        r.series.values(i, testing::channel_index(r, g.blink)) = blink[i];
    }
    m = misc_features(r.series, all, g);
    CHECK(m.smile_count == 3);
    CHECK(m.blink_count == 4);
}

TEST_CASE("feature vector layout") {
    const FeatureLayout layout{51};
    CHECK(layout.total() == 513);
    CHECK(layout.size(FeatureGroup::discrete) == 154);
    CHECK(layout.offset(FeatureGroup::misc) == 511);
    const auto names = layout.names(synthetic_channels());
    CHECK(names.size() == 513);
    CHECK(names.back() == "misc:blink_count");

    const Recording zero = testing::flat_recording(1200);
    const HighlightWindow w{400, 180};
    const FeatureVector fv = assemble_feature_vector(zero, w, synthetic_gestures());
    CHECK(fv.size() == 513);
    CHECK(std::all_of(fv.moments.begin(), fv.moments.end(), [](double v) { return v == 0.0; }));
    CHECK(std::all_of(fv.discrete.begin(), fv.discrete.end(), [](double v) { return v == 0.0; }));
    CHECK(std::all_of(fv.dynamic.begin(), fv.dynamic.end(), [](double v) { return v == 0.0; }));
    CHECK(fv.misc == std::vector<double>{0.0, 0.0});
    CHECK(fv.concatenated().size() == 513);
}

TEST_CASE("permuting channel order permutes the vector") {
    const SynthCorpus sc = generate_synthetic(testing::small_spec(2, 2, 6));
    const Recording& r = sc.corpus.recordings()[0];
    const GestureChannels g = sc.corpus.gestures();
    const HighlightWindow w{r.clip_span.begin + 30, 180};
    const FeatureVector base = assemble_feature_vector(r, w, g);

    // Reverse the channel order; gesture roles are looked up by id.
    const Eigen::Index n = r.series.channel_count();
    Recording p = r;
    std::reverse(p.series.channels.begin(), p.series.channels.end());
    p.series.values = r.series.values.rowwise().reverse();
    const FeatureVector perm = assemble_feature_vector(p, w, g);
    for (Eigen::Index c = 0; c < n; ++c) {
        const auto pc = static_cast<std::size_t>(n - 1 - c);
        const auto cc = static_cast<std::size_t>(c);
        for (std::size_t k = 0; k < 4; ++k) CHECK(perm.moments[pc * 4 + k] == base.moments[cc * 4 + k]);
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(perm.discrete[pc * 3 + k] == base.discrete[cc * 3 + k]);
            CHECK(perm.dynamic[pc * 3 + k] == base.dynamic[cc * 3 + k]);
        }
    }
    CHECK(perm.discrete.back() == doctest::Approx(base.discrete.back()).epsilon(1e-12));
    CHECK(perm.misc == base.misc);
    CHECK(assemble_feature_vector(r, w, g) == base);
}
