#pragma once

#include "facetag/core.hpp"
#include "facetag/features.hpp"
#include "facetag/highlight.hpp"
#include "facetag/numerics.hpp"

#include <Eigen/Core>

#include <array>
#include <compare>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace facetag {

enum class PcaScope { per_group, combined };
const char* pca_scope_name(PcaScope s);  // "per-group", "combined"
std::optional<PcaScope> pca_scope_from_name(const std::string& name);

enum class TargetKind { clip_tags, subjective };
const char* target_kind_name(TargetKind k);  // "clip-tags", "subjective"
std::optional<TargetKind> target_kind_from_name(const std::string& name);

struct HyperParams {
    double segment_seconds = 2.0;
    double overlap_fraction = 0.5;
    Eigen::Index pca_dim = 10;
    PcaScope pca_scope = PcaScope::combined;

    friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

/// e.g. "seg=2s overlap=0.5 pca=10 scope=combined"
std::string describe(const HyperParams& h);
/// Throws InvalidArgument unless 0 < segment_seconds <= 6, 0 <= overlap < 1, pca_dim >= 1.
void validate_hyper(const HyperParams& h);
/// segment_seconds {1.5, 2, 3} x overlap {0, 0.5} x pca_dim {5, 10, 15} x both scopes.
std::vector<HyperParams> default_grid();

struct Segmentation {
    Eigen::Index length = 0;
    Eigen::Index stride = 0;

    friend auto operator<=>(const Segmentation&, const Segmentation&) = default;
};

/// length = round(segment_seconds * fps), stride = max(1, round(length * (1 - overlap))).
Segmentation segmentation_for(const HyperParams& h, double frame_rate);

/// Starts at window.begin, advances by stride while the segment fits; if the
/// last segment stops short of the window end, one more segment ending exactly
/// at the end is appended. Throws InvalidArgument if a segment is longer
/// than the window.
std::vector<FrameRange> segment_window(FrameRange window, Segmentation seg);
std::vector<FrameRange> segment_window(const HighlightWindow& window, const HyperParams& h, double frame_rate);

/// Which feature groups a model may see (ablation restricts to one).
struct FeatureMask {
    std::array<bool, 4> enabled{true, true, true, true};

    static FeatureMask only(FeatureGroup g);
    bool has(FeatureGroup g) const { return enabled[static_cast<std::size_t>(g)]; }
    bool any() const;
    /// e.g. "moments+discrete+dynamic+misc"
    std::string describe() const;
    static FeatureMask parse(const std::string& text);

    friend bool operator==(const FeatureMask&, const FeatureMask&) = default;
};

/// Column block [first, second) of each enabled group inside a masked row.
using ColumnBlocks = std::vector<std::pair<Eigen::Index, Eigen::Index>>;

ColumnBlocks mask_blocks(const FeatureLayout& layout, const FeatureMask& mask);
/// Keeps the enabled groups' columns of full-layout rows, in group order.
Eigen::MatrixXd select_features(const Eigen::MatrixXd& full_rows, const FeatureLayout& layout,
                                const FeatureMask& mask);

/// Features of every segment of one recording over the given highlight
/// window. Moments are taken over each segment; everything else as in
/// window_features. Rows are full-layout feature vectors.
Eigen::MatrixXd segment_feature_rows(const Recording& recording, const HighlightWindow& window,
                                     Segmentation seg, const GestureChannels& gestures);

/// Highlight windows and segment features of a corpus, each computed once.
/// The corpus must outlive the store. Lookups are thread-safe.
class FeatureStore {
public:
    explicit FeatureStore(const Corpus& corpus, std::size_t jobs = 1);

    const Corpus& corpus() const { return *corpus_; }
    const FeatureLayout& layout() const { return layout_; }
    std::size_t size() const { return highlights_.size(); }

    const HighlightWindow& highlight(std::size_t rec) const { return highlights_.at(rec); }
    /// Full-layout rows, one per segment.
    const Eigen::MatrixXd& segment_features(std::size_t rec, const HyperParams& h) const;
    /// Computes the segment features every grid entry will need.
    void prepare(const std::vector<HyperParams>& grid, std::size_t jobs) const;

    std::optional<std::size_t> index_of(const std::string& viewer, const std::string& clip) const;
    /// Indices of one viewer's recordings in clip order.
    std::vector<std::size_t> recordings_of_viewer(const std::string& viewer) const;

private:
    const Corpus* corpus_;
    FeatureLayout layout_;
    std::vector<HighlightWindow> highlights_;
    mutable std::mutex mutex_;
    mutable std::map<std::pair<std::size_t, Segmentation>, std::unique_ptr<Eigen::MatrixXd>> cache_;
};

AffectVector recording_target(const Corpus& corpus, const Recording& recording, TargetKind kind);

struct SegmentDataset {
    Eigen::MatrixXd features;          // segments x masked columns
    ColumnBlocks blocks;               // group blocks, used by per-group PCA
    Eigen::MatrixXd targets;           // recordings x 4
    std::vector<Eigen::Index> offsets; // recording r owns rows [offsets[r], offsets[r+1])

    Eigen::Index recordings() const { return targets.rows(); }
};

/// Rows of `recs` in the given order; every segment inherits its
/// recording's target.
SegmentDataset build_segment_dataset(const FeatureStore& store, std::span<const std::size_t> recs,
                                     const HyperParams& h, TargetKind kind, const FeatureMask& mask);

struct ModelBundle {
    HyperParams hyper;
    TargetKind target_kind = TargetKind::clip_tags;
    FeatureMask mask;
    std::vector<std::string> channels;  // feature layout the bundle expects
    std::vector<PcaBasis> bases;        // one (combined scope) or one per block
    ColumnBlocks blocks;
    LinearModel f1;  // projected segment -> 4 scales
    LinearModel f2;  // 8 indicators -> 4 scales

    friend bool operator==(const ModelBundle&, const ModelBundle&) = default;
};

inline constexpr Eigen::Index kIndicatorCount = 8;

/// Mean then population std of each scale over the segment predictions
/// (segments x 4) -> [mean V, A, L, R, std V, A, L, R].
Eigen::VectorXd indicator_vector(const Eigen::MatrixXd& segment_predictions);

/// Projects masked segment rows through the bundle's PCA basis or bases.
Eigen::MatrixXd project_segments(const ModelBundle& bundle, const Eigen::MatrixXd& masked_rows);

/// Two-step fit: PCA on segment features, f1 on projected segments, f2 on
/// per-recording indicator vectors of f1's training predictions.
ModelBundle fit_two_step(const SegmentDataset& data, const HyperParams& h);
ModelBundle fit_two_step(const FeatureStore& store, std::span<const std::size_t> recs, const HyperParams& h,
                         TargetKind kind, const FeatureMask& mask = {});

/// Prediction from already-masked segment rows of one recording.
AffectVector predict_segments(const ModelBundle& bundle, const Eigen::MatrixXd& masked_rows);
/// Localize, segment, extract, project, f1, aggregate, f2.
AffectVector predict_two_step(const ModelBundle& bundle, const Recording& recording, const GestureChannels& gestures);
AffectVector predict_stored(const ModelBundle& bundle, const FeatureStore& store, std::size_t rec);

/// Mean Pearson R over the 4 scales; a scale whose R is undefined counts 0.
double calibration_objective(const Eigen::MatrixXd& actual, const Eigen::MatrixXd& predicted);

struct CalibrationResult {
    std::size_t best = 0;
    HyperParams hyper;
    std::vector<double> scores;  // one per grid entry

    friend bool operator==(const CalibrationResult&, const CalibrationResult&) = default;
};

/// Inner cross-validation over `recs`: `fold_of[i]` names the fold of recs[i]
/// (empty = leave-one-recording-out). Held-out predictions of all folds are
/// pooled and scored with calibration_objective; ties go to the first grid
/// entry.
CalibrationResult calibrate(const FeatureStore& store, std::span<const std::size_t> recs,
                            const std::vector<HyperParams>& grid, TargetKind kind, const FeatureMask& mask = {},
                            std::span<const int> fold_of = {});

/// Entry i equals calibrate(recs without recs[i]) in leave-one-out mode.
/// Each pair {i, j} is fitted once and serves both outer folds.
std::vector<CalibrationResult> calibrate_each_held_out(const FeatureStore& store, std::span<const std::size_t> recs,
                                                       const std::vector<HyperParams>& grid, TargetKind kind,
                                                       const FeatureMask& mask = {});

/// Viewer m's own model trained on clip tags, never seeing clip k.
ModelBundle train_imt1(const FeatureStore& store, const std::string& viewer, const std::string& held_out_clip,
                       const std::vector<HyperParams>& grid, const FeatureMask& mask = {});
/// As train_imt1 but supervised by viewer m's own reports.
ModelBundle train_ap1(const FeatureStore& store, const std::string& viewer, const std::string& held_out_clip,
                      const std::vector<HyperParams>& grid, const FeatureMask& mask = {});

inline constexpr std::size_t kDefaultApStarInnerFolds = 5;

/// One model for every clip, trained on all other viewers' reports. Inner
/// calibration folds group whole viewers (viewer i of the sorted training
/// viewers in fold i mod inner_folds).
ModelBundle train_ap_star(const FeatureStore& store, const std::string& held_out_viewer,
                          const std::vector<HyperParams>& grid, const FeatureMask& mask = {},
                          std::size_t inner_folds = kDefaultApStarInnerFolds);

/// Unweighted mean of the IMT-1 predictions of each viewer in `viewers` for clip k.
AffectVector predict_imt2(const FeatureStore& store, const std::vector<std::string>& viewers,
                          const std::string& clip, const std::vector<HyperParams>& grid,
                          const FeatureMask& mask = {});

struct ReportTagBaseline {
    Eigen::Vector4d mean_r = Eigen::Vector4d::Zero();
    Eigen::Vector4d std_r = Eigen::Vector4d::Zero();
    std::array<std::size_t, 4> undefined{};  // viewers whose R was undefined, per scale
};

/// Per viewer, Pearson R between their reports and the clip tags; averaged over viewers.
ReportTagBaseline baseline_report_tags(const Corpus& corpus);
/// For each clip viewer m reported, the mean of every other viewer's report.
std::map<std::string, AffectVector> baseline_one_viewer_out(const Corpus& corpus, const std::string& viewer);

inline constexpr int kBundleFormatVersion = 1;

std::string bundle_to_json(const ModelBundle& bundle);
ModelBundle bundle_from_json(const std::string& text);

}  // namespace facetag
