#pragma once

#include "facetag/core.hpp"
#include "facetag/highlight.hpp"

#include <Eigen/Core>

#include <array>
#include <span>
#include <string>
#include <vector>

namespace facetag {

inline constexpr int kQuantumCount = 4;
inline constexpr double kSmileProminence = 0.75;
inline constexpr double kBlinkProminence = 0.2;
inline constexpr int kKMeansMaxIterations = 100;

// ---------------------------------------------------------------------------
// 1-D k-means
// ---------------------------------------------------------------------------

struct KMeansResult {
    std::vector<double> centroids;  // k values, strictly ascending
    std::vector<int> labels;        // one per input value, label l <-> centroids[l]
    int iterations = 0;             // Lloyd assignment steps performed
    std::vector<double> objective;  // sum of squared distances after each assignment step
};

/// Lloyd's algorithm seeded with the exact optimal contiguous partition of
/// the sorted values, iterated to an assignment fixpoint (at most 100 steps).
/// Labels are dense ranks of the distinct final centroids, so when fewer than
/// k distinct values exist the top labels never occur.
KMeansResult kmeans_1d(std::span<const double> values, int k = kQuantumCount);

double kmeans_objective(std::span<const double> values, std::span<const int> labels,
                        std::span<const double> centroids);

// ---------------------------------------------------------------------------
// Quantization, discrete states and transitions
// ---------------------------------------------------------------------------

struct QuantizedSeries {
    int k = kQuantumCount;
    Eigen::Index frames = 0;
    std::vector<std::vector<int>> labels;        // per channel, per frame
    std::vector<std::vector<double>> centroids;  // per channel, ascending
};

QuantizedSeries quantize_series(const AuSeries& series, FrameRange window);

struct ChannelActivation {
    double ratio = 0.0;   // active frames / frames
    double length = 0.0;  // mean maximal active-run length / frames
    double level = 0.0;   // mean label over all frames
};

/// Activation statistics of one label sequence (active means label > 0).
ChannelActivation channel_activation(std::span<const int> labels);

struct DiscreteStateFeatures {
    std::vector<ChannelActivation> channels;
    double activation_average_volume = 0.0;  // mean of per-channel levels
};

DiscreteStateFeatures discrete_state_features(const QuantizedSeries& q);

struct TransitionMatrix {
    int k = kQuantumCount;
    std::vector<long> counts;  // row-major k x k, counts[a*k + b] = #(a -> b)
    long total_transitions = 0;

    long at(int from, int to) const { return counts[static_cast<std::size_t>(from * k + to)]; }
};

TransitionMatrix transition_matrix(std::span<const int> labels, int k = kQuantumCount);
TransitionMatrix transition_matrix(const QuantizedSeries& q, std::size_t channel);

struct DynamicFeatures {
    double change_ratio = 0.0;
    double slow_change_ratio = 0.0;  // |delta| == 1
    double fast_change_ratio = 0.0;  // |delta| >= 2
};

/// Throws InvalidArgument for a matrix with no transitions.
DynamicFeatures dynamic_features(const TransitionMatrix& m);

// ---------------------------------------------------------------------------
// Moments, peaks, smiles and blinks
// ---------------------------------------------------------------------------

/// Population moments; kurtosis is excess kurtosis. A zero-variance signal
/// reports variance, skewness and kurtosis as 0.
struct Moments {
    double mean = 0.0;
    double variance = 0.0;
    double skewness = 0.0;
    double kurtosis = 0.0;
};

Moments moments(std::span<const double> x);

struct Peak {
    std::size_t index;  // first sample of the (possibly flat) top
    double prominence;
};

/// Local maxima (flat tops count once) with their topographic prominence:
/// height above the higher of the two minima reached before the signal rises
/// above the peak on either side, or hits the border.
std::vector<Peak> find_peaks(std::span<const double> signal);

std::size_t count_peaks(std::span<const double> signal, double prominence);

struct MiscFeatures {
    std::size_t smile_count = 0;
    std::size_t blink_count = 0;
};

MiscFeatures misc_features(const AuSeries& series, FrameRange window, const GestureChannels& gestures);

// ---------------------------------------------------------------------------
// Feature vectors
// ---------------------------------------------------------------------------

enum class FeatureGroup : std::size_t { moments = 0, discrete = 1, dynamic = 2, misc = 3 };

inline constexpr std::array<FeatureGroup, 4> kFeatureGroups = {
    FeatureGroup::moments, FeatureGroup::discrete, FeatureGroup::dynamic, FeatureGroup::misc};

const char* feature_group_name(FeatureGroup g);
std::optional<FeatureGroup> feature_group_from_name(const std::string& name);

/// Column layout of the concatenated vector: moments | discrete | dynamic | misc.
///   moments:  per channel (mean, variance, skewness, kurtosis)
///   discrete: per channel (ratio, length, level), then average volume
///   dynamic:  per channel (change, slow change, fast change)
///   misc:     smile count, blink count
struct FeatureLayout {
    std::size_t channels = 0;

    std::size_t size(FeatureGroup g) const;
    std::size_t offset(FeatureGroup g) const;
    std::size_t total() const;

    /// Column names, e.g. "moments:MouthSmile_L:mean".
    std::vector<std::string> names(const std::vector<std::string>& channel_ids) const;
};

struct FeatureVector {
    std::vector<double> moments;
    std::vector<double> discrete;
    std::vector<double> dynamic;
    std::vector<double> misc;

    const std::vector<double>& group(FeatureGroup g) const;
    std::size_t size() const { return moments.size() + discrete.size() + dynamic.size() + misc.size(); }
    Eigen::VectorXd concatenated() const;

    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Moments over `moments_range`, every other group over `window`.
FeatureVector window_features(const AuSeries& series, FrameRange moments_range, FrameRange window,
                              const GestureChannels& gestures);

/// Recording-level vector: moments over the clip span, the rest over the
/// highlight window.
FeatureVector assemble_feature_vector(const Recording& recording, const HighlightWindow& window,
                                      const GestureChannels& gestures);

}  // namespace facetag
