#pragma once

#include "facetag/core.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace facetag {

/// Sample Pearson correlation. Needs equal lengths >= 3; throws
/// UndefinedCorrelation when either vector has zero variance.
double pearson_r(std::span<const double> x, std::span<const double> y);
double pearson_r(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y);

/// ICC(3,k): two-way mixed, consistency, average measures, over a
/// raters x targets matrix: (MS_targets - MS_error) / MS_targets.
double icc_two_way_mixed(const Eigen::MatrixXd& ratings);

/// Cronbach's alpha treating raters as items (rows) and targets as cases.
double cronbach_alpha(const Eigen::MatrixXd& ratings);

enum class EliminationMode { band, quantile };

const char* elimination_mode_name(EliminationMode m);
std::optional<EliminationMode> elimination_mode_from_name(const std::string& name);

struct BinaryScore {
    double accuracy = 0.0;
    double kept_fraction = 0.0;
    std::size_t kept = 0;
};

/// Thresholds each vector at its own mean and scores agreement of the
/// high/low labels over the items whose actual score is not ambiguous.
///   band:     drop items with |a - mean| < param * sd (population sd)
///   quantile: drop the round(param * n) items closest to the mean
/// Throws InvalidArgument if nothing survives.
BinaryScore binarize_and_score(std::span<const double> actual, std::span<const double> predicted,
                               EliminationMode mode, double param);

/// Mean absolute difference per scale.
Eigen::Vector4d mean_error(std::span<const AffectVector> actual, std::span<const AffectVector> predicted);

}  // namespace facetag
