#include "facetag/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace facetag {

// ---------------------------------------------------------------------------
// 1-D k-means
// ---------------------------------------------------------------------------

namespace {

// Optimal partition of sorted values into `k` contiguous groups, via the
// divide-and-conquer speedup of the classic O(k n^2) recurrence (the optimal
// cut index is monotone in the prefix length for squared-error costs).
class ContiguousPartitioner {
public:
    explicit ContiguousPartitioner(const std::vector<double>& sorted) : n_(sorted.size()) {
        double shift = 0.0;
        for (double v : sorted) shift += v;
        shift /= static_cast<double>(n_);
        p1_.assign(n_ + 1, 0.0);
        p2_.assign(n_ + 1, 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            const double v = sorted[i] - shift;
            p1_[i + 1] = p1_[i] + v;
            p2_[i + 1] = p2_[i] + v * v;
        }
    }

    /// Start index of each group (first is always 0).
    std::vector<std::size_t> solve(std::size_t k) {
        const std::size_t inf_rows = k + 1;
        cost_.assign(inf_rows, std::vector<double>(n_ + 1, kInf));
        cut_.assign(inf_rows, std::vector<std::size_t>(n_ + 1, 0));
        for (std::size_t i = 1; i <= n_; ++i) cost_[1][i] = cost(0, i);
        for (std::size_t m = 2; m <= k; ++m) fill(m, m, n_, m - 1, n_ - 1);

        std::vector<std::size_t> starts(k, 0);
        std::size_t end = n_;
        for (std::size_t m = k; m >= 2; --m) {
            starts[m - 1] = cut_[m][end];
            end = starts[m - 1];
        }
        return starts;
    }

private:
    static constexpr double kInf = std::numeric_limits<double>::infinity();

    double cost(std::size_t j, std::size_t i) const {
        const double len = static_cast<double>(i - j);
        const double sum = p1_[i] - p1_[j];
        return std::max(0.0, (p2_[i] - p2_[j]) - sum * sum / len);
    }

    void fill(std::size_t m, std::size_t lo, std::size_t hi, std::size_t opt_lo, std::size_t opt_hi) {
        if (lo > hi) return;
        const std::size_t mid = lo + (hi - lo) / 2;
        const std::size_t j_lo = std::max(opt_lo, m - 1);
        const std::size_t j_hi = std::min(opt_hi, mid - 1);
        double best = kInf;
        std::size_t best_j = j_lo;
        for (std::size_t j = j_lo; j <= j_hi; ++j) {
            const double c = cost_[m - 1][j] + cost(j, mid);
            if (c < best) {
                best = c;
                best_j = j;
            }
        }
        cost_[m][mid] = best;
        cut_[m][mid] = best_j;
        if (mid > lo) fill(m, lo, mid - 1, opt_lo, best_j);
        fill(m, mid + 1, hi, best_j, opt_hi);
    }

    std::size_t n_;
    std::vector<double> p1_, p2_;
    std::vector<std::vector<double>> cost_;
    std::vector<std::vector<std::size_t>> cut_;
};

double machine_step(double v) {
    return 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(v));
}

// Nearest centroid, lower index on ties. Returns true if any label changed.
bool assign(std::span<const double> values, const std::vector<double>& centroids,
            std::vector<int>& labels) {
    bool changed = false;
    for (std::size_t i = 0; i < values.size(); ++i) {
        int best = 0;
        double best_d = std::abs(values[i] - centroids[0]);
        for (std::size_t c = 1; c < centroids.size(); ++c) {
            const double d = std::abs(values[i] - centroids[c]);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        if (labels[i] != best) {
            labels[i] = best;
            changed = true;
        }
    }
    return changed;
}

}  // namespace

double kmeans_objective(std::span<const double> values, std::span<const int> labels,
                        std::span<const double> centroids) {
    double total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double d = values[i] - centroids[static_cast<std::size_t>(labels[i])];
        total += d * d;
    }
    return total;
}

KMeansResult kmeans_1d(std::span<const double> values, int k) {
    if (values.empty()) throw InvalidArgument("kmeans_1d: empty input");
    if (k < 1) throw InvalidArgument("kmeans_1d: k must be positive");
    for (double v : values) {
        if (!std::isfinite(v)) throw InvalidArgument("kmeans_1d: non-finite input");
    }

    const std::size_t n = values.size();
    const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), n);

    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const auto starts = ContiguousPartitioner(sorted).solve(kk);

    std::vector<double> centroids(static_cast<std::size_t>(k));
    for (std::size_t g = 0; g < kk; ++g) {
        const std::size_t b = starts[g];
        const std::size_t e = g + 1 < kk ? starts[g + 1] : n;
        double sum = 0.0;
        for (std::size_t i = b; i < e; ++i) sum += sorted[i];
        centroids[g] = sum / static_cast<double>(e - b);
    }
    for (std::size_t g = kk; g < centroids.size(); ++g) centroids[g] = centroids[g - 1];
    // Collapsed seeds are split apart so every centroid is strictly above the previous one.
    for (std::size_t g = 1; g < centroids.size(); ++g) {
        if (centroids[g] <= centroids[g - 1]) centroids[g] = centroids[g - 1] + machine_step(centroids[g - 1]);
    }

    KMeansResult result;
    std::vector<int> labels(n, -1);
    std::vector<double> sums(centroids.size());
    std::vector<std::size_t> counts(centroids.size());
    for (int it = 0; it < kKMeansMaxIterations; ++it) {
        const bool changed = assign(values, centroids, labels);
        ++result.iterations;
        result.objective.push_back(kmeans_objective(values, labels, centroids));
        if (!changed) break;
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            sums[static_cast<std::size_t>(labels[i])] += values[i];
            ++counts[static_cast<std::size_t>(labels[i])];
        }
        for (std::size_t c = 0; c < centroids.size(); ++c) {
            if (counts[c] > 0) centroids[c] = sums[c] / static_cast<double>(counts[c]);
        }
    }

    // Dense-rank the used clusters by centroid; equal centroids share a label.
    std::vector<std::size_t> used;
    std::vector<bool> seen(centroids.size(), false);
    for (int l : labels) seen[static_cast<std::size_t>(l)] = true;
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        if (seen[c]) used.push_back(c);
    }
    std::stable_sort(used.begin(), used.end(),
                     [&](std::size_t a, std::size_t b) { return centroids[a] < centroids[b]; });
    std::vector<int> rank(centroids.size(), 0);
    std::vector<double> ordered;
    for (std::size_t u = 0; u < used.size(); ++u) {
        if (u == 0 || centroids[used[u]] != centroids[used[u - 1]]) ordered.push_back(centroids[used[u]]);
        rank[used[u]] = static_cast<int>(ordered.size()) - 1;
    }
    while (ordered.size() < static_cast<std::size_t>(k)) {
        ordered.push_back(ordered.back() + machine_step(ordered.back()));
    }
    for (int& l : labels) l = rank[static_cast<std::size_t>(l)];

    result.centroids = std::move(ordered);
    result.labels = std::move(labels);
    return result;
}

// ---------------------------------------------------------------------------
// Quantization, discrete states and transitions
// ---------------------------------------------------------------------------

QuantizedSeries quantize_series(const AuSeries& series, FrameRange window) {
    if (window.size() < 2) throw InvalidArgument("quantize_series: window needs at least 2 frames");
    QuantizedSeries q;
    q.k = kQuantumCount;
    q.frames = window.size();
    q.labels.reserve(static_cast<std::size_t>(series.channel_count()));
    q.centroids.reserve(static_cast<std::size_t>(series.channel_count()));
    for (Eigen::Index c = 0; c < series.channel_count(); ++c) {
        auto km = kmeans_1d(series.channel(c, window.begin, window.end), q.k);
        q.labels.push_back(std::move(km.labels));
        q.centroids.push_back(std::move(km.centroids));
    }
    return q;
}

ChannelActivation channel_activation(std::span<const int> labels) {
    ChannelActivation a;
    if (labels.empty()) return a;
    const auto n = static_cast<double>(labels.size());
    std::size_t active = 0, runs = 0;
    long label_sum = 0;
    bool in_run = false;
    for (int l : labels) {
        label_sum += l;
        if (l > 0) {
            ++active;
            if (!in_run) ++runs;
            in_run = true;
        } else {
            in_run = false;
        }
    }
    a.ratio = static_cast<double>(active) / n;
    a.length = runs == 0 ? 0.0 : (static_cast<double>(active) / static_cast<double>(runs)) / n;
    a.level = static_cast<double>(label_sum) / n;
    return a;
}

DiscreteStateFeatures discrete_state_features(const QuantizedSeries& q) {
    DiscreteStateFeatures f;
    f.channels.reserve(q.labels.size());
    double level_sum = 0.0;
    for (const auto& labels : q.labels) {
        f.channels.push_back(channel_activation(labels));
        level_sum += f.channels.back().level;
    }
    f.activation_average_volume = q.labels.empty() ? 0.0 : level_sum / static_cast<double>(q.labels.size());
    return f;
}

TransitionMatrix transition_matrix(std::span<const int> labels, int k) {
    TransitionMatrix m;
    m.k = k;
    m.counts.assign(static_cast<std::size_t>(k * k), 0);
    for (std::size_t i = 1; i < labels.size(); ++i) {
        const int a = labels[i - 1], b = labels[i];
        if (a < 0 || a >= k || b < 0 || b >= k) throw InvalidArgument("transition_matrix: label out of range");
        ++m.counts[static_cast<std::size_t>(a * k + b)];
        ++m.total_transitions;
    }
    return m;
}

TransitionMatrix transition_matrix(const QuantizedSeries& q, std::size_t channel) {
    if (channel >= q.labels.size()) throw InvalidArgument("transition_matrix: channel out of range");
    return transition_matrix(q.labels[channel], q.k);
}

DynamicFeatures dynamic_features(const TransitionMatrix& m) {
    if (m.total_transitions <= 0) throw InvalidArgument("dynamic_features: no transitions");
    long slow = 0, fast = 0;
    for (int a = 0; a < m.k; ++a) {
        for (int b = 0; b < m.k; ++b) {
            const int delta = std::abs(a - b);
            if (delta == 1) slow += m.at(a, b);
            else if (delta >= 2) fast += m.at(a, b);
        }
    }
    const auto total = static_cast<double>(m.total_transitions);
    return {static_cast<double>(slow + fast) / total, static_cast<double>(slow) / total,
            static_cast<double>(fast) / total};
}

// ---------------------------------------------------------------------------
// Moments and peaks
// ---------------------------------------------------------------------------

Moments moments(std::span<const double> x) {
    if (x.empty()) throw InvalidArgument("moments: empty signal");
    const auto n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double d = v - mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    Moments out;
    out.mean = mean;
    if (m2 <= 1e-28 * std::max(1.0, mean * mean)) return out;
    out.variance = m2;
    out.skewness = m3 / std::pow(m2, 1.5);
    out.kurtosis = m4 / (m2 * m2) - 3.0;
    return out;
}

std::vector<Peak> find_peaks(std::span<const double> x) {
    std::vector<Peak> peaks;
    const std::size_t n = x.size();
    if (n < 3) return peaks;
    std::size_t i = 1;
    while (i + 1 < n) {
        if (!(x[i - 1] < x[i])) {
            ++i;
            continue;
        }
        std::size_t top_end = i;
        while (top_end + 1 < n && x[top_end + 1] == x[i]) ++top_end;
        if (top_end + 1 >= n || !(x[top_end + 1] < x[i])) {
            i = top_end + 1;
            continue;
        }
        const double h = x[i];
        double left_min = h;
        for (std::size_t j = i; j-- > 0;) {
            if (x[j] > h) break;
            left_min = std::min(left_min, x[j]);
        }
        double right_min = h;
        for (std::size_t j = top_end + 1; j < n; ++j) {
            if (x[j] > h) break;
            right_min = std::min(right_min, x[j]);
        }
        peaks.push_back({i, h - std::max(left_min, right_min)});
        i = top_end + 1;
    }
    return peaks;
}

std::size_t count_peaks(std::span<const double> signal, double prominence) {
    std::size_t count = 0;
    for (const auto& p : find_peaks(signal)) {
        if (p.prominence >= prominence) ++count;
    }
    return count;
}

MiscFeatures misc_features(const AuSeries& series, FrameRange window, const GestureChannels& gestures) {
    const auto idx = resolve_gestures(gestures, series);
    const auto left = count_peaks(series.channel(idx.smile_left, window.begin, window.end), kSmileProminence);
    const auto right = count_peaks(series.channel(idx.smile_right, window.begin, window.end), kSmileProminence);
    return {std::max(left, right),
            count_peaks(series.channel(idx.blink, window.begin, window.end), kBlinkProminence)};
}

// ---------------------------------------------------------------------------
// Feature vectors
// ---------------------------------------------------------------------------

const char* feature_group_name(FeatureGroup g) {
    switch (g) {
        case FeatureGroup::moments: return "moments";
        case FeatureGroup::discrete: return "discrete";
        case FeatureGroup::dynamic: return "dynamic";
        case FeatureGroup::misc: return "misc";
    }
    return "unknown";
}

std::optional<FeatureGroup> feature_group_from_name(const std::string& name) {
    for (FeatureGroup g : kFeatureGroups) {
        if (name == feature_group_name(g)) return g;
    }
    return std::nullopt;
}

std::size_t FeatureLayout::size(FeatureGroup g) const {
    switch (g) {
        case FeatureGroup::moments: return 4 * channels;
        case FeatureGroup::discrete: return 3 * channels + 1;
        case FeatureGroup::dynamic: return 3 * channels;
        case FeatureGroup::misc: return 2;
    }
    return 0;
}

std::size_t FeatureLayout::offset(FeatureGroup g) const {
    std::size_t off = 0;
    for (FeatureGroup h : kFeatureGroups) {
        if (h == g) return off;
        off += size(h);
    }
    return off;
}

std::size_t FeatureLayout::total() const {
    return offset(FeatureGroup::misc) + size(FeatureGroup::misc);
}

std::vector<std::string> FeatureLayout::names(const std::vector<std::string>& ids) const {
    std::vector<std::string> out;
    out.reserve(total());
    for (const auto& ch : ids) {
        for (const char* m : {"mean", "variance", "skewness", "kurtosis"}) out.push_back("moments:" + ch + ":" + m);
    }
    for (const auto& ch : ids) {
        for (const char* m : {"activation_ratio", "activation_length", "activation_level"}) {
            out.push_back("discrete:" + ch + ":" + m);
        }
    }
    out.push_back("discrete:activation_average_volume");
    for (const auto& ch : ids) {
        for (const char* m : {"change_ratio", "slow_change_ratio", "fast_change_ratio"}) {
            out.push_back("dynamic:" + ch + ":" + m);
        }
    }
    out.push_back("misc:smile_count");
    out.push_back("misc:blink_count");
    return out;
}

const std::vector<double>& FeatureVector::group(FeatureGroup g) const {
    switch (g) {
        case FeatureGroup::moments: return moments;
        case FeatureGroup::discrete: return discrete;
        case FeatureGroup::dynamic: return dynamic;
        case FeatureGroup::misc: return misc;
    }
    throw InvalidArgument("unknown feature group");
}

Eigen::VectorXd FeatureVector::concatenated() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
    Eigen::Index i = 0;
    for (FeatureGroup g : kFeatureGroups) {
        for (double v : group(g)) out(i++) = v;
    }
    return out;
}

FeatureVector window_features(const AuSeries& series, FrameRange moments_range, FrameRange window,
                              const GestureChannels& gestures) {
    if (moments_range.begin < 0 || moments_range.end > series.frames() || moments_range.size() < 2) {
        throw InvalidArgument("window_features: moments range outside series or shorter than 2 frames");
    }
    if (window.begin < 0 || window.end > series.frames() || window.size() < 2) {
        throw InvalidArgument("window_features: window outside series or shorter than 2 frames");
    }
    const auto channels = static_cast<std::size_t>(series.channel_count());
    FeatureVector f;
    f.moments.reserve(4 * channels);
    for (Eigen::Index c = 0; c < series.channel_count(); ++c) {
        const auto m = moments(series.channel(c, moments_range.begin, moments_range.end));
        f.moments.insert(f.moments.end(), {m.mean, m.variance, m.skewness, m.kurtosis});
    }

    const auto q = quantize_series(series, window);
    const auto states = discrete_state_features(q);
    f.discrete.reserve(3 * channels + 1);
    for (const auto& a : states.channels) f.discrete.insert(f.discrete.end(), {a.ratio, a.length, a.level});
    f.discrete.push_back(states.activation_average_volume);

    f.dynamic.reserve(3 * channels);
    for (std::size_t c = 0; c < channels; ++c) {
        const auto d = dynamic_features(transition_matrix(q, c));
        f.dynamic.insert(f.dynamic.end(), {d.change_ratio, d.slow_change_ratio, d.fast_change_ratio});
    }

    const auto misc = misc_features(series, window, gestures);
    f.misc = {static_cast<double>(misc.smile_count), static_cast<double>(misc.blink_count)};
    return f;
}

FeatureVector assemble_feature_vector(const Recording& recording, const HighlightWindow& window,
                                      const GestureChannels& gestures) {
    const FrameRange w = window.range();
    if (w.begin < 0 || w.end > recording.series.frames()) {
        throw InvalidArgument("assemble_feature_vector: highlight window outside recording (viewer=" +
                              recording.viewer_id + " clip=" + recording.clip_id + ")");
    }
    return window_features(recording.series, recording.clip_span, w, gestures);
}

}  // namespace facetag
