#pragma once

#include "facetag/core.hpp"

#include <Eigen/Core>

namespace facetag {

inline constexpr double kDefaultRidge = 1e-6;

/// Standardizing PCA basis. Rows of `components` are orthonormal and sorted
/// by non-increasing explained variance.
struct PcaBasis {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;       // per-feature population std, 1 for constant features
    Eigen::MatrixXd components;  // q x d
    Eigen::VectorXd explained_variance;

    Eigen::Index input_dim() const { return mean.size(); }
    Eigen::Index output_dim() const { return components.rows(); }

    friend bool operator==(const PcaBasis& a, const PcaBasis& b);
};

/// Fits on the rows of X (samples x d). Features are centred and divided by
/// their population std, then the top-q eigenvectors of the standardized
/// covariance (1/n normalization) are kept. The d x d covariance or the
/// n x n Gram matrix is decomposed, whichever is smaller; q shrinks to the
/// numerical rank of the data.
PcaBasis pca_fit(const Eigen::MatrixXd& X, Eigen::Index q);

/// The leading min(q, output_dim) components of a basis. Equal bit for bit
/// to fitting with that q directly, so one fit can serve several q values.
PcaBasis pca_truncate(const PcaBasis& basis, Eigen::Index q);

Eigen::VectorXd pca_project(const PcaBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& x);
/// Row-wise projection of a samples x d matrix.
Eigen::MatrixXd pca_project_rows(const PcaBasis& basis, const Eigen::Ref<const Eigen::MatrixXd>& X);
/// Inverse map of a q-vector back to feature space.
Eigen::VectorXd pca_reconstruct(const PcaBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& z);

struct LinearModel {
    Eigen::MatrixXd weights;    // inputs x outputs
    Eigen::VectorXd intercept;  // outputs
    double ridge_lambda = kDefaultRidge;

    Eigen::Index input_dim() const { return weights.rows(); }
    Eigen::Index output_dim() const { return weights.cols(); }

    friend bool operator==(const LinearModel& a, const LinearModel& b);
};

/// Least squares with an unpenalized intercept, solved through the ridge
/// normal equations (Xc'Xc + lambda I) W = Xc'Yc on centred data.
LinearModel ols_fit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, double ridge_lambda = kDefaultRidge);

Eigen::VectorXd ols_predict(const LinearModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);
Eigen::MatrixXd ols_predict_rows(const LinearModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X);

}  // namespace facetag
