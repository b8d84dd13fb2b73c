#include "facetag/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace facetag {

double pearson_r(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw InvalidArgument("pearson_r: length mismatch");
    if (x.size() < 3) throw UndefinedCorrelation("pearson_r: need at least 3 points");
    const auto n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) throw UndefinedCorrelation("pearson_r: zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double pearson_r(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y) {
    return pearson_r(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                     std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
}

namespace {

void check_ratings(const Eigen::MatrixXd& r, const char* what) {
    if (r.rows() < 2 || r.cols() < 2) {
        throw InvalidArgument(std::string(what) + ": need at least 2 raters and 2 targets");
    }
    if (!r.allFinite()) throw InvalidArgument(std::string(what) + ": non-finite rating");
}

}  // namespace

double icc_two_way_mixed(const Eigen::MatrixXd& ratings) {
    check_ratings(ratings, "icc_two_way_mixed");
    const auto k = static_cast<double>(ratings.rows());  // raters
    const auto n = static_cast<double>(ratings.cols());  // targets
    const double grand = ratings.mean();
    const Eigen::RowVectorXd target_means = ratings.colwise().mean();
    const Eigen::VectorXd rater_means = ratings.rowwise().mean();
    const double ss_total = (ratings.array() - grand).square().sum();
    const double ss_targets = k * (target_means.array() - grand).square().sum();
    const double ss_raters = n * (rater_means.array() - grand).square().sum();
    const double ss_error = std::max(0.0, ss_total - ss_targets - ss_raters);
    const double ms_targets = ss_targets / (n - 1.0);
    const double ms_error = ss_error / ((n - 1.0) * (k - 1.0));
    if (!(ms_targets > 0.0)) throw UndefinedCorrelation("icc_two_way_mixed: no between-target variance");
    return (ms_targets - ms_error) / ms_targets;
}

double cronbach_alpha(const Eigen::MatrixXd& ratings) {
    check_ratings(ratings, "cronbach_alpha");
    const auto k = static_cast<double>(ratings.rows());
    const auto n = static_cast<double>(ratings.cols());
    auto sample_var = [n](const Eigen::RowVectorXd& v) {
        return (v.array() - v.mean()).square().sum() / (n - 1.0);
    };
    double item_var = 0.0;
    for (Eigen::Index i = 0; i < ratings.rows(); ++i) item_var += sample_var(ratings.row(i));
    const double total_var = sample_var(ratings.colwise().sum());
    if (!(total_var > 0.0)) throw UndefinedCorrelation("cronbach_alpha: zero total variance");
    return k / (k - 1.0) * (1.0 - item_var / total_var);
}

const char* elimination_mode_name(EliminationMode m) {
    return m == EliminationMode::band ? "band" : "quantile";
}

std::optional<EliminationMode> elimination_mode_from_name(const std::string& name) {
    if (name == "band") return EliminationMode::band;
    if (name == "quantile") return EliminationMode::quantile;
    return std::nullopt;
}

BinaryScore binarize_and_score(std::span<const double> actual, std::span<const double> predicted,
                               EliminationMode mode, double param) {
    if (actual.size() != predicted.size()) throw InvalidArgument("binarize_and_score: length mismatch");
    if (actual.empty()) throw InvalidArgument("binarize_and_score: no items");
    if (!(param >= 0.0) || !std::isfinite(param)) throw InvalidArgument("binarize_and_score: bad parameter");
    if (mode == EliminationMode::quantile && param >= 1.0) {
        throw InvalidArgument("binarize_and_score: quantile fraction must be < 1");
    }
    const std::size_t n = actual.size();
    const double mu_a = std::accumulate(actual.begin(), actual.end(), 0.0) / static_cast<double>(n);
    const double mu_p = std::accumulate(predicted.begin(), predicted.end(), 0.0) / static_cast<double>(n);

    std::vector<bool> keep(n, true);
    if (mode == EliminationMode::band) {
        double var = 0.0;
        for (double a : actual) var += (a - mu_a) * (a - mu_a);
        const double radius = param * std::sqrt(var / static_cast<double>(n));
        for (std::size_t i = 0; i < n; ++i) keep[i] = !(std::abs(actual[i] - mu_a) < radius);
    } else {
        const auto drop = static_cast<std::size_t>(std::lround(param * static_cast<double>(n)));
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(actual[a] - mu_a) < std::abs(actual[b] - mu_a);
        });
        for (std::size_t i = 0; i < drop && i < n; ++i) keep[order[i]] = false;
    }

    BinaryScore out;
    std::size_t agree = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!keep[i]) continue;
        ++out.kept;
        if ((actual[i] > mu_a) == (predicted[i] > mu_p)) ++agree;
    }
    if (out.kept == 0) throw InvalidArgument("binarize_and_score: every item was eliminated");
    out.accuracy = static_cast<double>(agree) / static_cast<double>(out.kept);
    out.kept_fraction = static_cast<double>(out.kept) / static_cast<double>(n);
    return out;
}

Eigen::Vector4d mean_error(std::span<const AffectVector> actual, std::span<const AffectVector> predicted) {
    if (actual.size() != predicted.size()) throw InvalidArgument("mean_error: length mismatch");
    if (actual.empty()) throw InvalidArgument("mean_error: no items");
    Eigen::Vector4d sum = Eigen::Vector4d::Zero();
    for (std::size_t i = 0; i < actual.size(); ++i) {
        sum += (actual[i].to_eigen() - predicted[i].to_eigen()).cwiseAbs();
    }
    return sum / static_cast<double>(actual.size());
}

}  // namespace facetag
