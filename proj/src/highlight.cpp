#include "facetag/highlight.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace facetag {

Eigen::Index highlight_length(double frame_rate) {
    return static_cast<Eigen::Index>(std::lround(kHighlightSeconds * frame_rate));
}

FrameRange highlight_search_span(const Recording& recording) {
    const auto margin =
        static_cast<Eigen::Index>(std::lround(kSearchMarginSeconds * recording.series.frame_rate));
    return {std::max<Eigen::Index>(0, recording.clip_span.begin - margin),
            std::min<Eigen::Index>(recording.series.frames(), recording.clip_span.end + margin)};
}

namespace {

// z-scores of one channel over the span; all zeros for a constant channel.
bool standardized(std::span<const double> x, Eigen::VectorXd& out) {
    const auto n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) return false;
    out.resize(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) out(static_cast<Eigen::Index>(i)) = (x[i] - mean) / sd;
    return true;
}

void standardize_in_place(std::vector<double>& v) {
    const auto n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / n);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
        std::fill(v.begin(), v.end(), 0.0);
        return;
    }
    for (double& x : v) x = (x - mean) / sd;
}

}  // namespace

GestureSignal gesture_aggregate(const Recording& recording, const GestureChannels& gestures) {
    const auto idx = resolve_gestures(gestures, recording.series);
    const FrameRange span = highlight_search_span(recording);

    const std::array<std::vector<Eigen::Index>, 5> groups = {{
        {idx.smile_left, idx.smile_right},
        {idx.blink},
        {idx.dimple},
        {idx.lip_stretch},
        {idx.frown},
    }};

    GestureSignal out{span, Eigen::VectorXd::Zero(span.size())};
    Eigen::VectorXd z;
    for (const auto& group : groups) {
        Eigen::VectorXd group_sum = Eigen::VectorXd::Zero(span.size());
        int active = 0;
        for (Eigen::Index c : group) {
            if (standardized(recording.series.channel(c, span.begin, span.end), z)) {
                group_sum += z;
                ++active;
            }
        }
        if (active > 0) out.values += group_sum / active;
    }
    out.values /= static_cast<double>(groups.size());
    return out;
}

HighlightWindow localize_highlight(const Recording& recording, const GestureChannels& gestures) {
    const Eigen::Index length = highlight_length(recording.series.frame_rate);
    const GestureSignal agg = gesture_aggregate(recording, gestures);
    const Eigen::Index n = agg.span.size();
    if (length < 1 || n < length) {
        throw InvalidArgument("highlight search span of " + std::to_string(n) +
                              " frames is shorter than the " + std::to_string(length) +
                              "-frame window (viewer=" + recording.viewer_id +
                              " clip=" + recording.clip_id + ")");
    }

    std::vector<double> prefix(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> prefix_sq(static_cast<std::size_t>(n) + 1, 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double v = agg.values(i);
        prefix[i + 1] = prefix[i] + v;
        prefix_sq[i + 1] = prefix_sq[i] + v * v;
    }

    const auto candidates = static_cast<std::size_t>(n - length + 1);
    std::vector<double> means(candidates), variances(candidates);
    const auto len = static_cast<double>(length);
    for (std::size_t s = 0; s < candidates; ++s) {
        const double sum = prefix[s + length] - prefix[s];
        const double sq = prefix_sq[s + length] - prefix_sq[s];
        const double mean = sum / len;
        means[s] = mean;
        variances[s] = std::max(0.0, sq / len - mean * mean);
    }
    standardize_in_place(means);
    standardize_in_place(variances);

    std::size_t best = 0;
    double best_score = means[0] + variances[0];
    for (std::size_t s = 1; s < candidates; ++s) {
        const double score = means[s] + variances[s];
        if (score > best_score) {
            best_score = score;
            best = s;
        }
    }
    return {agg.span.begin + static_cast<Eigen::Index>(best), length};
}

double start_relative_to_clip_end(const Recording& recording, const HighlightWindow& window) {
    return static_cast<double>(window.start_frame - recording.clip_span.end) /
           recording.series.frame_rate;
}

}  // namespace facetag
