#pragma once

#include "facetag/metrics.hpp"
#include "facetag/models.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace facetag {

enum class Variant { imt1, imt2, ap1, ap_star };

const char* variant_name(Variant v);  // "IMT-1", "IMT-2", "AP-1", "AP*"
/// Accepts the display names and lower-case aliases (imt1, imt2, ap1, apstar).
std::optional<Variant> variant_from_name(const std::string& name);
TargetKind variant_target(Variant v);

struct EvalOptions {
    std::vector<HyperParams> grid = default_grid();
    FeatureMask mask;
    EliminationMode elimination = EliminationMode::quantile;
    double elimination_param = 0.15;
    std::uint64_t seed = 0;  // bootstrap resampling
    std::size_t bootstrap_resamples = 1000;
    std::size_t ap_star_inner_folds = kDefaultApStarInnerFolds;
    std::size_t jobs = 1;
    std::string corpus_id;
};

/// Mean and sample std of a per-scale statistic over folds or viewers.
/// `count` values were defined; `undefined` were skipped (zero-variance R).
struct ScaleStats {
    Eigen::Vector4d mean = Eigen::Vector4d::Zero();
    Eigen::Vector4d std = Eigen::Vector4d::Zero();
    std::array<std::size_t, 4> count{};
    std::array<std::size_t, 4> undefined{};
};

ScaleStats summarize(const std::array<std::vector<double>, 4>& values, const std::array<std::size_t, 4>& undefined = {});

struct PredictionRow {
    std::string viewer_id;  // empty for pooled IMT-2 rows
    std::string clip_id;
    AffectVector actual;     // the variant's target
    AffectVector predicted;
    HyperParams hyper;       // chosen by calibration (IMT-2: not applicable)
};

/// Metrics of one prediction set against one target set.
struct MetricBlock {
    ScaleStats pearson;
    ScaleStats accuracy;
    Eigen::Vector4d kept_fraction = Eigen::Vector4d::Zero();
    ScaleStats mean_error;  // in units of each scale's range width
};

struct EvalReport {
    Variant variant = Variant::imt1;
    std::string corpus_id;
    std::uint64_t seed = 0;
    std::size_t grid_size = 0;
    std::string feature_groups;
    EliminationMode elimination = EliminationMode::quantile;
    double elimination_param = 0.15;

    MetricBlock metrics;
    std::vector<PredictionRow> predictions;
    ReportTagBaseline report_tags;                // reports vs clip tags, per viewer
    std::optional<MetricBlock> one_viewer_out;    // AP* only
    std::optional<std::vector<PredictionRow>> one_viewer_out_predictions;
};

/// Pearson/accuracy/ME per viewer across their clips, then mean/std over viewers.
/// ME compares against each viewer's own reports.
MetricBlock score_per_viewer(const Corpus& corpus, const std::vector<PredictionRow>& rows, EliminationMode mode,
                             double param);

/// IMT-1, AP-1 or IMT-2 under leave-one-clip-out. IMT-2 pools the IMT-1
/// predictions of every viewer per clip and correlates the pooled vector with
/// the clip tags; its std comes from a seeded bootstrap over clips.
EvalReport run_loo_clips(const FeatureStore& store, Variant variant, const EvalOptions& options);

/// AP* under leave-one-viewer-out, with the one-viewer-out baseline.
EvalReport run_loo_viewers(const FeatureStore& store, const EvalOptions& options);

EvalReport run_variant(const FeatureStore& store, Variant variant, const EvalOptions& options);

/// IMT-1 and IMT-2 from one pass of per-viewer LOO (IMT-2 reuses the IMT-1 bundles).
std::pair<EvalReport, EvalReport> run_imt1_and_imt2(const FeatureStore& store, const EvalOptions& options);

struct AblationResult {
    Variant variant = Variant::imt1;
    std::array<Eigen::Vector4d, 4> r{};           // [group] per-scale mean R
    std::array<Eigen::Vector4d, 4> importance{};  // [group] per-scale share of positive R
};

/// max(R, 0) normalized over the groups per scale; all-zero when no group is positive.
std::array<Eigen::Vector4d, 4> relative_importance(const std::array<Eigen::Vector4d, 4>& r);

AblationResult ablate_feature_groups(const FeatureStore& store, Variant variant, const EvalOptions& options);

struct HpOffset {
    std::string viewer_id;
    std::string clip_id;
    double seconds = 0.0;  // window start relative to clip end
};

struct HpAgreement {
    std::vector<HpOffset> offsets;
    double mean = 0.0;
    double std = 0.0;
    std::optional<double> icc;  // viewers x clips; absent if the matrix is incomplete or degenerate
    std::vector<std::pair<int, std::size_t>> histogram;  // (floor(seconds), count), contiguous bins
};

HpAgreement hp_agreement(const FeatureStore& store);

/// 4x4 Pearson matrix of the scales across the given rows (e.g. per-clip means).
Eigen::Matrix4d scale_correlations(const std::vector<AffectVector>& ratings);

// Report files. Everything written is a deterministic function of its input.
std::string report_to_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& dir);
void write_ablation(const AblationResult& result, const std::filesystem::path& dir, bool svg);
void write_hp_report(const HpAgreement& hp, const std::filesystem::path& dir, bool svg);

std::string ablation_svg(const AblationResult& result);
std::string histogram_svg(const HpAgreement& hp);

}  // namespace facetag
