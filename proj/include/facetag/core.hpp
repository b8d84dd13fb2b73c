#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace facetag {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad argument or precondition violated by the caller.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A corpus or series breaks one of its type invariants.
class InvariantError : public Error {
public:
    using Error::Error;
};

/// Correlation requested on a vector with zero variance.
class UndefinedCorrelation : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Affect scales
// ---------------------------------------------------------------------------

enum class Scale : std::size_t { valence = 0, arousal = 1, likability = 2, rewatch = 3 };

inline constexpr std::size_t kScaleCount = 4;
inline constexpr std::array<Scale, kScaleCount> kScales = {Scale::valence, Scale::arousal,
                                                            Scale::likability, Scale::rewatch};

const char* scale_name(Scale s);
std::optional<Scale> scale_from_name(const std::string& name);

struct ScaleRange {
    double lo;
    double hi;
};

/// Rating ranges of the discrete self-report scales (V/A on 1..5, L/R on 1..3).
ScaleRange scale_range(Scale s);

struct AffectVector {
    double valence = 0.0;
    double arousal = 0.0;
    double likability = 0.0;
    double rewatch = 0.0;

    double& operator[](std::size_t i);
    double operator[](std::size_t i) const;
    double& operator[](Scale s) { return (*this)[static_cast<std::size_t>(s)]; }
    double operator[](Scale s) const { return (*this)[static_cast<std::size_t>(s)]; }

    bool finite() const;
    Eigen::Vector4d to_eigen() const;
    static AffectVector from_eigen(const Eigen::Ref<const Eigen::Vector4d>& v);

    friend bool operator==(const AffectVector&, const AffectVector&) = default;
};

// ---------------------------------------------------------------------------
// Recordings
// ---------------------------------------------------------------------------

/// AU intensities of one viewing, frames x channels.
struct AuSeries {
    double frame_rate = 30.0;
    std::vector<std::string> channels;
    Eigen::MatrixXd values;

    Eigen::Index frames() const { return values.rows(); }
    Eigen::Index channel_count() const { return values.cols(); }

    /// Contiguous view of one channel over frames [begin, end).
    std::span<const double> channel(Eigen::Index c, Eigen::Index begin, Eigen::Index end) const;
    std::span<const double> channel(Eigen::Index c) const { return channel(c, 0, frames()); }

    std::optional<Eigen::Index> find_channel(const std::string& id) const;

    friend bool operator==(const AuSeries& a, const AuSeries& b);
};

/// Half-open frame interval [begin, end).
struct FrameRange {
    Eigen::Index begin = 0;
    Eigen::Index end = 0;

    Eigen::Index size() const { return end - begin; }
    friend bool operator==(const FrameRange&, const FrameRange&) = default;
};

struct Recording {
    std::string viewer_id;
    std::string clip_id;
    AuSeries series;
    FrameRange clip_span;

    friend bool operator==(const Recording&, const Recording&) = default;
};

/// Which channel carries each of the gesture roles used by the highlight
/// locator and the smile/blink counters.
struct GestureChannels {
    std::string smile_left;
    std::string smile_right;
    std::string blink;
    std::string dimple;
    std::string lip_stretch;
    std::string frown;

    friend bool operator==(const GestureChannels&, const GestureChannels&) = default;
};

/// Gesture roles resolved to column indices of a particular series.
struct GestureIndices {
    Eigen::Index smile_left;
    Eigen::Index smile_right;
    Eigen::Index blink;
    Eigen::Index dimple;
    Eigen::Index lip_stretch;
    Eigen::Index frown;
};

/// Throws InvalidArgument naming the first unmapped role.
GestureIndices resolve_gestures(const GestureChannels& g, const AuSeries& s);

using RecordingKey = std::pair<std::string, std::string>;  // (viewer_id, clip_id)

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

class Corpus {
public:
    Corpus() = default;
    Corpus(std::vector<std::string> channels, GestureChannels gestures,
           std::vector<Recording> recordings, std::map<std::string, AffectVector> clip_tags,
           std::map<RecordingKey, AffectVector> reports, bool discrete_reports);

    const std::vector<std::string>& channels() const { return channels_; }
    const GestureChannels& gestures() const { return gestures_; }
    /// Sorted by (viewer_id, clip_id).
    const std::vector<Recording>& recordings() const { return recordings_; }
    const std::map<std::string, AffectVector>& clip_tags() const { return clip_tags_; }
    const std::map<RecordingKey, AffectVector>& reports() const { return reports_; }
    bool discrete_reports() const { return discrete_reports_; }

    /// Lexicographically sorted ids appearing in recordings, tags or reports.
    std::vector<std::string> viewers() const;
    std::vector<std::string> clips() const;

    const Recording* find(const std::string& viewer, const std::string& clip) const;
    const AffectVector& tag(const std::string& clip) const;
    const AffectVector& report(const std::string& viewer, const std::string& clip) const;

    /// Recordings of one viewer, in clip order.
    std::vector<const Recording*> recordings_of_viewer(const std::string& viewer) const;

    /// Copies with every trace of a clip (or viewer) removed.
    Corpus without_clip(const std::string& clip) const;
    Corpus without_viewer(const std::string& viewer) const;

    friend bool operator==(const Corpus&, const Corpus&) = default;

private:
    std::vector<std::string> channels_;
    GestureChannels gestures_;
    std::vector<Recording> recordings_;
    std::map<std::string, AffectVector> clip_tags_;
    std::map<RecordingKey, AffectVector> reports_;
    bool discrete_reports_ = false;
};

struct Violation {
    std::string entity;  // e.g. "recording viewer=v01 clip=c03"
    std::string rule;

    std::string to_string() const { return entity + ": " + rule; }
};

/// Checks every type invariant; an empty result means the corpus is valid.
std::vector<Violation> validate_corpus(const Corpus& corpus);

template <typename Id>
struct Fold {
    std::vector<Id> train;
    Id held_out;
};

using ClipFold = Fold<std::string>;
using ViewerFold = Fold<std::string>;

std::vector<ClipFold> split_loo_clips(const Corpus& corpus);
std::vector<ViewerFold> split_loo_viewers(const Corpus& corpus);

/// Leave-one-out folds over an arbitrary sorted id list; needs >= 2 ids.
std::vector<Fold<std::string>> split_loo(const std::vector<std::string>& ids, const char* what);

}  // namespace facetag
