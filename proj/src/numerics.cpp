#include "facetag/numerics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace facetag {

namespace {

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

// Two passes of modified Gram-Schmidt over the rows.
void orthonormalize_rows(Eigen::MatrixXd& rows) {
    for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            for (Eigen::Index j = 0; j < i; ++j) {
                rows.row(i) -= rows.row(i).dot(rows.row(j)) * rows.row(j);
            }
            rows.row(i).normalize();
        }
    }
}

}  // namespace

bool operator==(const PcaBasis& a, const PcaBasis& b) {
    auto same = [](const auto& x, const auto& y) {
        return x.rows() == y.rows() && x.cols() == y.cols() && (x.array() == y.array()).all();
    };
    return same(a.mean, b.mean) && same(a.scale, b.scale) && same(a.components, b.components) &&
           same(a.explained_variance, b.explained_variance);
}

bool operator==(const LinearModel& a, const LinearModel& b) {
    auto same = [](const auto& x, const auto& y) {
        return x.rows() == y.rows() && x.cols() == y.cols() && (x.array() == y.array()).all();
    };
    return a.ridge_lambda == b.ridge_lambda && same(a.weights, b.weights) && same(a.intercept, b.intercept);
}

PcaBasis pca_fit(const Eigen::MatrixXd& X, Eigen::Index q) {
    if (q < 1) throw InvalidArgument("pca_fit: target dimension must be >= 1");
    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols();
    if (n < 2) throw InvalidArgument("pca_fit: need at least 2 samples");
    if (d < 1) throw InvalidArgument("pca_fit: need at least 1 feature");
    if (!all_finite(X)) throw InvalidArgument("pca_fit: non-finite input");

    PcaBasis basis;
    basis.mean = X.colwise().mean().transpose();
    Eigen::MatrixXd Z = X.rowwise() - basis.mean.transpose();
    basis.scale = (Z.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt().transpose();
    for (Eigen::Index j = 0; j < d; ++j) {
        if (!(basis.scale(j) > 1e-12 * std::max(1.0, std::abs(basis.mean(j))))) {
            basis.scale(j) = 1.0;
            Z.col(j).setZero();
        } else {
            Z.col(j) /= basis.scale(j);
        }
    }

    const bool gram_route = n < d;
    const Eigen::Index m = gram_route ? n : d;
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(m, m);
    if (gram_route) {
        S.selfadjointView<Eigen::Lower>().rankUpdate(Z, 1.0 / static_cast<double>(n));
    } else {
        S.selfadjointView<Eigen::Lower>().rankUpdate(Z.transpose(), 1.0 / static_cast<double>(n));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S.selfadjointView<Eigen::Lower>());
    if (eig.info() != Eigen::Success) throw Error("pca_fit: eigendecomposition failed");

    const Eigen::VectorXd& values = eig.eigenvalues();  // ascending
    const double top = std::max(values(m - 1), 0.0);
    const double tol = 1e-10 * top * static_cast<double>(std::max(n, d));
    Eigen::Index rank = 0;
    while (rank < m && values(m - 1 - rank) > tol && values(m - 1 - rank) > 0.0) ++rank;
    const Eigen::Index keep = std::min<Eigen::Index>({q, rank, n - 1, d});

    basis.components.resize(keep, d);
    basis.explained_variance.resize(keep);
    for (Eigen::Index i = 0; i < keep; ++i) {
        const Eigen::Index col = m - 1 - i;
        const double lambda = values(col);
        basis.explained_variance(i) = lambda;
        if (gram_route) {
            basis.components.row(i) =
                (Z.transpose() * eig.eigenvectors().col(col)).transpose() /
                std::sqrt(lambda * static_cast<double>(n));
        } else {
            basis.components.row(i) = eig.eigenvectors().col(col).transpose();
        }
    }
    if (gram_route) orthonormalize_rows(basis.components);

    // Sign convention: the largest-magnitude loading of each component is positive.
    for (Eigen::Index i = 0; i < keep; ++i) {
        Eigen::Index arg = 0;
        basis.components.row(i).cwiseAbs().maxCoeff(&arg);
        if (basis.components(i, arg) < 0.0) basis.components.row(i) *= -1.0;
    }
    return basis;
}

PcaBasis pca_truncate(const PcaBasis& basis, Eigen::Index q) {
    if (q < 1) throw InvalidArgument("pca_truncate: target dimension must be >= 1");
    const Eigen::Index keep = std::min(q, basis.output_dim());
    PcaBasis out;
    out.mean = basis.mean;
    out.scale = basis.scale;
    out.components = basis.components.topRows(keep);
    out.explained_variance = basis.explained_variance.head(keep);
    return out;
}

Eigen::VectorXd pca_project(const PcaBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (x.size() != basis.input_dim()) {
        throw InvalidArgument("pca_project: expected " + std::to_string(basis.input_dim()) +
                              " features, got " + std::to_string(x.size()));
    }
    return basis.components * ((x - basis.mean).cwiseQuotient(basis.scale));
}

Eigen::MatrixXd pca_project_rows(const PcaBasis& basis, const Eigen::Ref<const Eigen::MatrixXd>& X) {
    if (X.cols() != basis.input_dim()) {
        throw InvalidArgument("pca_project_rows: expected " + std::to_string(basis.input_dim()) +
                              " features, got " + std::to_string(X.cols()));
    }
    const Eigen::MatrixXd Z =
        (X.rowwise() - basis.mean.transpose()).array().rowwise() / basis.scale.transpose().array();
    return Z * basis.components.transpose();
}

Eigen::VectorXd pca_reconstruct(const PcaBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& z) {
    if (z.size() != basis.output_dim()) throw InvalidArgument("pca_reconstruct: dimension mismatch");
    return (basis.components.transpose() * z).cwiseProduct(basis.scale) + basis.mean;
}

LinearModel ols_fit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, double ridge_lambda) {
    if (X.rows() < 1) throw InvalidArgument("ols_fit: need at least 1 sample");
    if (X.rows() != Y.rows()) throw InvalidArgument("ols_fit: X and Y row counts differ");
    if (!(ridge_lambda >= 0.0) || !std::isfinite(ridge_lambda)) {
        throw InvalidArgument("ols_fit: ridge lambda must be a finite non-negative value");
    }
    if (!all_finite(X) || !all_finite(Y)) throw InvalidArgument("ols_fit: non-finite input");

    const Eigen::VectorXd x_mean = X.colwise().mean().transpose();
    const Eigen::VectorXd y_mean = Y.colwise().mean().transpose();
    const Eigen::MatrixXd Xc = X.rowwise() - x_mean.transpose();
    const Eigen::MatrixXd Yc = Y.rowwise() - y_mean.transpose();

    LinearModel model;
    model.ridge_lambda = ridge_lambda;
    const Eigen::Index p = X.cols();
    if (p == 0) {
        model.weights = Eigen::MatrixXd::Zero(0, Y.cols());
    } else {
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
        gram.selfadjointView<Eigen::Lower>().rankUpdate(Xc.transpose());
        gram = gram.selfadjointView<Eigen::Lower>();
        gram.diagonal().array() += ridge_lambda;
        model.weights = gram.ldlt().solve(Xc.transpose() * Yc);
    }
    model.intercept = y_mean - model.weights.transpose() * x_mean;
    if (!model.weights.allFinite() || !model.intercept.allFinite()) {
        throw Error("ols_fit: solution is not finite (singular system with lambda = 0?)");
    }
    return model;
}

Eigen::VectorXd ols_predict(const LinearModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (x.size() != model.input_dim()) {
        throw InvalidArgument("ols_predict: expected " + std::to_string(model.input_dim()) +
                              " inputs, got " + std::to_string(x.size()));
    }
    return model.weights.transpose() * x + model.intercept;
}

Eigen::MatrixXd ols_predict_rows(const LinearModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X) {
    if (X.cols() != model.input_dim()) {
        throw InvalidArgument("ols_predict_rows: expected " + std::to_string(model.input_dim()) +
                              " inputs, got " + std::to_string(X.cols()));
    }
    return (X * model.weights).rowwise() + model.intercept.transpose();
}

}  // namespace facetag
