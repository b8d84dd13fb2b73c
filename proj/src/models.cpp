#include "facetag/models.hpp"

#include "facetag/io.hpp"
#include "facetag/metrics.hpp"
#include "facetag/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

namespace facetag {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Names, hyperparameters, segmentation
// ---------------------------------------------------------------------------

const char* pca_scope_name(PcaScope s) { return s == PcaScope::per_group ? "per-group" : "combined"; }

std::optional<PcaScope> pca_scope_from_name(const std::string& name) {
    if (name == "per-group") return PcaScope::per_group;
    if (name == "combined") return PcaScope::combined;
    return std::nullopt;
}

const char* target_kind_name(TargetKind k) { return k == TargetKind::clip_tags ? "clip-tags" : "subjective"; }

std::optional<TargetKind> target_kind_from_name(const std::string& name) {
    if (name == "clip-tags") return TargetKind::clip_tags;
    if (name == "subjective") return TargetKind::subjective;
    return std::nullopt;
}

std::string describe(const HyperParams& h) {
    std::ostringstream out;
    out << "seg=" << h.segment_seconds << "s overlap=" << h.overlap_fraction << " pca=" << h.pca_dim
        << " scope=" << pca_scope_name(h.pca_scope);
    return out.str();
}

void validate_hyper(const HyperParams& h) {
    if (!(h.segment_seconds > 0.0 && h.segment_seconds <= kHighlightSeconds)) {
        throw InvalidArgument("hyperparameters: segment_seconds must be in (0, 6], got " +
                              std::to_string(h.segment_seconds));
    }
    if (!(h.overlap_fraction >= 0.0 && h.overlap_fraction < 1.0)) {
        throw InvalidArgument("hyperparameters: overlap_fraction must be in [0, 1)");
    }
    if (h.pca_dim < 1) throw InvalidArgument("hyperparameters: pca_dim must be >= 1");
}

std::vector<HyperParams> default_grid() {
    std::vector<HyperParams> grid;
    for (double seg : {1.5, 2.0, 3.0}) {
        for (double overlap : {0.0, 0.5}) {
            for (Eigen::Index q : {5, 10, 15}) {
                for (PcaScope scope : {PcaScope::per_group, PcaScope::combined}) {
                    grid.push_back({seg, overlap, q, scope});
                }
            }
        }
    }
    return grid;
}

Segmentation segmentation_for(const HyperParams& h, double frame_rate) {
    validate_hyper(h);
    Segmentation s;
    s.length = static_cast<Eigen::Index>(std::lround(h.segment_seconds * frame_rate));
    s.stride = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::lround(static_cast<double>(s.length) * (1.0 - h.overlap_fraction))));
    return s;
}

std::vector<FrameRange> segment_window(FrameRange window, Segmentation seg) {
    if (seg.length < 1 || seg.stride < 1) throw InvalidArgument("segment_window: length and stride must be >= 1");
    if (seg.length > window.size()) {
        throw InvalidArgument("segment_window: segment of " + std::to_string(seg.length) +
                              " frames is longer than the " + std::to_string(window.size()) + "-frame window");
    }
    std::vector<FrameRange> out;
    for (Eigen::Index s = window.begin; s + seg.length <= window.end; s += seg.stride) {
        out.push_back({s, s + seg.length});
    }
    if (out.back().end < window.end) out.push_back({window.end - seg.length, window.end});
    return out;
}

std::vector<FrameRange> segment_window(const HighlightWindow& window, const HyperParams& h, double frame_rate) {
    return segment_window(window.range(), segmentation_for(h, frame_rate));
}

// ---------------------------------------------------------------------------
// Feature masks
// ---------------------------------------------------------------------------

FeatureMask FeatureMask::only(FeatureGroup g) {
    FeatureMask m;
    m.enabled.fill(false);
    m.enabled[static_cast<std::size_t>(g)] = true;
    return m;
}

bool FeatureMask::any() const { return std::find(enabled.begin(), enabled.end(), true) != enabled.end(); }

std::string FeatureMask::describe() const {
    std::string out;
    for (FeatureGroup g : kFeatureGroups) {
        if (!has(g)) continue;
        if (!out.empty()) out += '+';
        out += feature_group_name(g);
    }
    return out.empty() ? "none" : out;
}

FeatureMask FeatureMask::parse(const std::string& text) {
    FeatureMask m;
    m.enabled.fill(false);
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t plus = text.find('+', pos);
        const std::string name = text.substr(pos, plus == std::string::npos ? std::string::npos : plus - pos);
        const auto g = feature_group_from_name(name);
        if (!g) throw InvalidArgument("unknown feature group '" + name + "'");
        m.enabled[static_cast<std::size_t>(*g)] = true;
        if (plus == std::string::npos) break;
        pos = plus + 1;
    }
    return m;
}

ColumnBlocks mask_blocks(const FeatureLayout& layout, const FeatureMask& mask) {
    ColumnBlocks blocks;
    Eigen::Index at = 0;
    for (FeatureGroup g : kFeatureGroups) {
        if (!mask.has(g)) continue;
        const auto width = static_cast<Eigen::Index>(layout.size(g));
        blocks.emplace_back(at, at + width);
        at += width;
    }
    return blocks;
}

Eigen::MatrixXd select_features(const Eigen::MatrixXd& full_rows, const FeatureLayout& layout,
                                const FeatureMask& mask) {
    if (full_rows.cols() != static_cast<Eigen::Index>(layout.total())) {
        throw InvalidArgument("select_features: rows have " + std::to_string(full_rows.cols()) +
                              " columns, layout expects " + std::to_string(layout.total()));
    }
    if (!mask.any()) throw InvalidArgument("select_features: feature mask enables no group");
    Eigen::Index width = 0;
    for (FeatureGroup g : kFeatureGroups) {
        if (mask.has(g)) width += static_cast<Eigen::Index>(layout.size(g));
    }
    Eigen::MatrixXd out(full_rows.rows(), width);
    Eigen::Index at = 0;
    for (FeatureGroup g : kFeatureGroups) {
        if (!mask.has(g)) continue;
        const auto w = static_cast<Eigen::Index>(layout.size(g));
        out.middleCols(at, w) = full_rows.middleCols(static_cast<Eigen::Index>(layout.offset(g)), w);
        at += w;
    }
    return out;
}

Eigen::MatrixXd segment_feature_rows(const Recording& recording, const HighlightWindow& window,
                                     Segmentation seg, const GestureChannels& gestures) {
    const auto segments = segment_window(window.range(), seg);
    const FeatureLayout layout{static_cast<std::size_t>(recording.series.channel_count())};
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(segments.size()), static_cast<Eigen::Index>(layout.total()));
    for (std::size_t s = 0; s < segments.size(); ++s) {
        rows.row(static_cast<Eigen::Index>(s)) =
            window_features(recording.series, segments[s], segments[s], gestures).concatenated().transpose();
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Feature store
// ---------------------------------------------------------------------------

FeatureStore::FeatureStore(const Corpus& corpus, std::size_t jobs)
    : corpus_(&corpus), layout_{corpus.channels().size()} {
    const auto& recs = corpus.recordings();
    highlights_.resize(recs.size());
    parallel_for(recs.size(), jobs, [&](std::size_t i) {
        highlights_[i] = localize_highlight(recs[i], corpus.gestures());
    });
}

const Eigen::MatrixXd& FeatureStore::segment_features(std::size_t rec, const HyperParams& h) const {
    const Recording& r = corpus_->recordings().at(rec);
    const auto key = std::make_pair(rec, segmentation_for(h, r.series.frame_rate));
    std::lock_guard lock(mutex_);
    auto it = cache_.find(key);
    if (it == cache_.end()) {
        auto rows = std::make_unique<Eigen::MatrixXd>(
            segment_feature_rows(r, highlights_[rec], key.second, corpus_->gestures()));
        it = cache_.emplace(key, std::move(rows)).first;
    }
    return *it->second;
}

void FeatureStore::prepare(const std::vector<HyperParams>& grid, std::size_t jobs) const {
    std::vector<std::pair<std::size_t, Segmentation>> missing;
    {
        std::set<std::pair<std::size_t, Segmentation>> wanted;
        for (std::size_t rec = 0; rec < size(); ++rec) {
            const double fps = corpus_->recordings()[rec].series.frame_rate;
            for (const auto& h : grid) wanted.emplace(rec, segmentation_for(h, fps));
        }
        std::lock_guard lock(mutex_);
        for (const auto& key : wanted) {
            if (!cache_.count(key)) missing.push_back(key);
        }
    }
    std::vector<std::unique_ptr<Eigen::MatrixXd>> computed(missing.size());
    parallel_for(missing.size(), jobs, [&](std::size_t i) {
        const auto& [rec, seg] = missing[i];
        computed[i] = std::make_unique<Eigen::MatrixXd>(
            segment_feature_rows(corpus_->recordings()[rec], highlights_[rec], seg, corpus_->gestures()));
    });
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < missing.size(); ++i) cache_.emplace(missing[i], std::move(computed[i]));
}

std::optional<std::size_t> FeatureStore::index_of(const std::string& viewer, const std::string& clip) const {
    const auto& recs = corpus_->recordings();
    for (std::size_t i = 0; i < recs.size(); ++i) {
        if (recs[i].viewer_id == viewer && recs[i].clip_id == clip) return i;
    }
    return std::nullopt;
}

std::vector<std::size_t> FeatureStore::recordings_of_viewer(const std::string& viewer) const {
    std::vector<std::size_t> out;
    const auto& recs = corpus_->recordings();
    for (std::size_t i = 0; i < recs.size(); ++i) {
        if (recs[i].viewer_id == viewer) out.push_back(i);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Datasets and the two-step model
// ---------------------------------------------------------------------------

AffectVector recording_target(const Corpus& corpus, const Recording& recording, TargetKind kind) {
    return kind == TargetKind::clip_tags ? corpus.tag(recording.clip_id)
                                         : corpus.report(recording.viewer_id, recording.clip_id);
}

SegmentDataset build_segment_dataset(const FeatureStore& store, std::span<const std::size_t> recs,
                                     const HyperParams& h, TargetKind kind, const FeatureMask& mask) {
    SegmentDataset data;
    data.blocks = mask_blocks(store.layout(), mask);
    data.targets.resize(static_cast<Eigen::Index>(recs.size()), 4);
    data.offsets.assign(1, 0);
    std::vector<const Eigen::MatrixXd*> parts;
    parts.reserve(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const Eigen::MatrixXd& rows = store.segment_features(recs[i], h);
        parts.push_back(&rows);
        data.offsets.push_back(data.offsets.back() + rows.rows());
        data.targets.row(static_cast<Eigen::Index>(i)) =
            recording_target(store.corpus(), store.corpus().recordings()[recs[i]], kind).to_eigen().transpose();
    }
    const Eigen::Index width = data.blocks.empty() ? 0 : data.blocks.back().second;
    data.features.resize(data.offsets.back(), width);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        data.features.middleRows(data.offsets[i], parts[i]->rows()) = select_features(*parts[i], store.layout(), mask);
    }
    return data;
}

Eigen::VectorXd indicator_vector(const Eigen::MatrixXd& segment_predictions) {
    const Eigen::Index n = segment_predictions.rows();
    const Eigen::Index m = segment_predictions.cols();
    if (n < 1) throw InvalidArgument("indicator_vector: no segments");
    Eigen::VectorXd out(2 * m);
    for (Eigen::Index c = 0; c < m; ++c) {
        const auto col = segment_predictions.col(c);
        const double mean = col.mean();
        out(c) = mean;
        out(m + c) = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(n));
    }
    return out;
}

Eigen::MatrixXd project_segments(const ModelBundle& bundle, const Eigen::MatrixXd& masked_rows) {
    if (bundle.hyper.pca_scope == PcaScope::combined) {
        if (bundle.bases.size() != 1) throw InvalidArgument("combined-scope bundle must hold one PCA basis");
        return pca_project_rows(bundle.bases[0], masked_rows);
    }
    if (bundle.bases.size() != bundle.blocks.size()) {
        throw InvalidArgument("per-group bundle needs one PCA basis per column block");
    }
    Eigen::Index width = 0;
    for (const auto& b : bundle.bases) width += b.output_dim();
    Eigen::MatrixXd out(masked_rows.rows(), width);
    Eigen::Index at = 0;
    for (std::size_t g = 0; g < bundle.bases.size(); ++g) {
        const auto [first, last] = bundle.blocks[g];
        if (last > masked_rows.cols()) throw InvalidArgument("project_segments: column block out of range");
        const Eigen::Index w = bundle.bases[g].output_dim();
        out.middleCols(at, w) = pca_project_rows(bundle.bases[g], masked_rows.middleCols(first, last - first));
        at += w;
    }
    return out;
}

namespace {

std::vector<PcaBasis> fit_bases(const SegmentDataset& data, PcaScope scope, Eigen::Index q) {
    std::vector<PcaBasis> bases;
    if (scope == PcaScope::combined) {
        bases.push_back(pca_fit(data.features, q));
    } else {
        for (const auto& [first, last] : data.blocks) {
            bases.push_back(pca_fit(data.features.middleCols(first, last - first), q));
        }
    }
    return bases;
}

// Everything after the PCA fit, shared by direct fits and grid families.
ModelBundle finish_fit(const SegmentDataset& data, const HyperParams& h, std::vector<PcaBasis> bases) {
    ModelBundle bundle;
    bundle.hyper = h;
    bundle.blocks = data.blocks;
    bundle.bases = std::move(bases);

    const Eigen::MatrixXd projected = project_segments(bundle, data.features);
    Eigen::MatrixXd segment_targets(data.features.rows(), 4);
    for (Eigen::Index r = 0; r < data.recordings(); ++r) {
        for (Eigen::Index s = data.offsets[r]; s < data.offsets[r + 1]; ++s) {
            segment_targets.row(s) = data.targets.row(r);
        }
    }
    bundle.f1 = ols_fit(projected, segment_targets);
    const Eigen::MatrixXd segment_pred = ols_predict_rows(bundle.f1, projected);
    Eigen::MatrixXd indicators(data.recordings(), kIndicatorCount);
    for (Eigen::Index r = 0; r < data.recordings(); ++r) {
        const Eigen::Index first = data.offsets[r];
        indicators.row(r) = indicator_vector(segment_pred.middleRows(first, data.offsets[r + 1] - first)).transpose();
    }
    bundle.f2 = ols_fit(indicators, data.targets);
    return bundle;
}

void check_trainable(const SegmentDataset& data) {
    if (data.recordings() < 2) throw InvalidArgument("fit_two_step: need at least 2 training recordings");
    if (data.features.cols() < 1) throw InvalidArgument("fit_two_step: no feature columns");
}

}  // namespace

ModelBundle fit_two_step(const SegmentDataset& data, const HyperParams& h) {
    validate_hyper(h);
    check_trainable(data);
    return finish_fit(data, h, fit_bases(data, h.pca_scope, h.pca_dim));
}

ModelBundle fit_two_step(const FeatureStore& store, std::span<const std::size_t> recs, const HyperParams& h,
                         TargetKind kind, const FeatureMask& mask) {
    ModelBundle bundle = fit_two_step(build_segment_dataset(store, recs, h, kind, mask), h);
    bundle.target_kind = kind;
    bundle.mask = mask;
    bundle.channels = store.corpus().channels();
    return bundle;
}

AffectVector predict_segments(const ModelBundle& bundle, const Eigen::MatrixXd& masked_rows) {
    const Eigen::MatrixXd segment_pred = ols_predict_rows(bundle.f1, project_segments(bundle, masked_rows));
    return AffectVector::from_eigen(ols_predict(bundle.f2, indicator_vector(segment_pred)));
}

AffectVector predict_two_step(const ModelBundle& bundle, const Recording& recording, const GestureChannels& gestures) {
    if (recording.series.channels != bundle.channels) {
        throw InvalidArgument("predict_two_step: recording channels differ from the bundle's feature layout");
    }
    const HighlightWindow window = localize_highlight(recording, gestures);
    const Segmentation seg = segmentation_for(bundle.hyper, recording.series.frame_rate);
    const FeatureLayout layout{bundle.channels.size()};
    return predict_segments(bundle,
                            select_features(segment_feature_rows(recording, window, seg, gestures), layout, bundle.mask));
}

AffectVector predict_stored(const ModelBundle& bundle, const FeatureStore& store, std::size_t rec) {
    return predict_segments(bundle, select_features(store.segment_features(rec, bundle.hyper), store.layout(), bundle.mask));
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

double calibration_objective(const Eigen::MatrixXd& actual, const Eigen::MatrixXd& predicted) {
    double sum = 0.0;
    for (Eigen::Index c = 0; c < 4; ++c) {
        try {
            sum += pearson_r(Eigen::VectorXd(actual.col(c)), Eigen::VectorXd(predicted.col(c)));
        } catch (const UndefinedCorrelation&) {
            // undefined R contributes 0
        }
    }
    return sum / 4.0;
}

namespace {

// Grid entries sharing segmentation and PCA scope; one PCA fit at the
// largest dimension serves every member through pca_truncate.
struct Family {
    std::size_t dataset;               // index into Plan::datasets
    PcaScope scope;
    std::vector<std::size_t> members;  // grid indices, in grid order
};

struct Plan {
    std::vector<HyperParams> datasets;  // one representative per (segment_seconds, overlap)
    std::vector<Family> families;
};

Plan plan_grid(const std::vector<HyperParams>& grid) {
    if (grid.empty()) throw InvalidArgument("calibrate: empty hyperparameter grid");
    Plan plan;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const HyperParams& h = grid[i];
        validate_hyper(h);
        std::size_t d = 0;
        while (d < plan.datasets.size() && !(plan.datasets[d].segment_seconds == h.segment_seconds &&
                                             plan.datasets[d].overlap_fraction == h.overlap_fraction)) {
            ++d;
        }
        if (d == plan.datasets.size()) plan.datasets.push_back(h);
        std::size_t f = 0;
        while (f < plan.families.size() && !(plan.families[f].dataset == d && plan.families[f].scope == h.pca_scope)) {
            ++f;
        }
        if (f == plan.families.size()) plan.families.push_back({d, h.pca_scope, {}});
        plan.families[f].members.push_back(i);
    }
    return plan;
}

// Fits every grid entry on `train` and returns predictions[grid index][test item].
std::vector<std::vector<AffectVector>> fit_and_predict(const FeatureStore& store, const Plan& plan,
                                                       const std::vector<HyperParams>& grid,
                                                       std::span<const std::size_t> train,
                                                       std::span<const std::size_t> test, TargetKind kind,
                                                       const FeatureMask& mask) {
    std::vector<std::vector<AffectVector>> out(grid.size(), std::vector<AffectVector>(test.size()));
    for (std::size_t d = 0; d < plan.datasets.size(); ++d) {
        const SegmentDataset data = build_segment_dataset(store, train, plan.datasets[d], kind, mask);
        check_trainable(data);
        for (const Family& family : plan.families) {
            if (family.dataset != d) continue;
            Eigen::Index q_max = 0;
            for (std::size_t i : family.members) q_max = std::max(q_max, grid[i].pca_dim);
            const std::vector<PcaBasis> full = fit_bases(data, family.scope, q_max);
            for (std::size_t i : family.members) {
                std::vector<PcaBasis> bases;
                for (const auto& b : full) bases.push_back(pca_truncate(b, grid[i].pca_dim));
                ModelBundle bundle = finish_fit(data, grid[i], std::move(bases));
                bundle.mask = mask;
                for (std::size_t t = 0; t < test.size(); ++t) out[i][t] = predict_stored(bundle, store, test[t]);
            }
        }
    }
    return out;
}

CalibrationResult pick_best(const std::vector<HyperParams>& grid, std::vector<double> scores) {
    CalibrationResult result;
    result.scores = std::move(scores);
    for (std::size_t i = 1; i < result.scores.size(); ++i) {
        if (result.scores[i] > result.scores[result.best]) result.best = i;
    }
    result.hyper = grid[result.best];
    return result;
}

Eigen::MatrixXd targets_of(const FeatureStore& store, std::span<const std::size_t> recs, TargetKind kind) {
    Eigen::MatrixXd y(static_cast<Eigen::Index>(recs.size()), 4);
    for (std::size_t i = 0; i < recs.size(); ++i) {
        y.row(static_cast<Eigen::Index>(i)) =
            recording_target(store.corpus(), store.corpus().recordings()[recs[i]], kind).to_eigen().transpose();
    }
    return y;
}

}  // namespace

CalibrationResult calibrate(const FeatureStore& store, std::span<const std::size_t> recs,
                            const std::vector<HyperParams>& grid, TargetKind kind, const FeatureMask& mask,
                            std::span<const int> fold_of) {
    const Plan plan = plan_grid(grid);
    if (!fold_of.empty() && fold_of.size() != recs.size()) {
        throw InvalidArgument("calibrate: fold assignment length differs from the recording list");
    }
    std::vector<int> folds(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) folds[i] = fold_of.empty() ? static_cast<int>(i) : fold_of[i];
    const std::set<int> distinct(folds.begin(), folds.end());
    if (distinct.size() < 2) throw InvalidArgument("calibrate: need at least 2 folds");

    std::vector<Eigen::MatrixXd> predicted(grid.size(), Eigen::MatrixXd(static_cast<Eigen::Index>(recs.size()), 4));
    for (int f : distinct) {
        std::vector<std::size_t> train, test, test_pos;
        for (std::size_t i = 0; i < recs.size(); ++i) {
            if (folds[i] == f) {
                test.push_back(recs[i]);
                test_pos.push_back(i);
            } else {
                train.push_back(recs[i]);
            }
        }
        const auto pred = fit_and_predict(store, plan, grid, train, test, kind, mask);
        for (std::size_t c = 0; c < grid.size(); ++c) {
            for (std::size_t t = 0; t < test.size(); ++t) {
                predicted[c].row(static_cast<Eigen::Index>(test_pos[t])) = pred[c][t].to_eigen().transpose();
            }
        }
    }
    const Eigen::MatrixXd actual = targets_of(store, recs, kind);
    std::vector<double> scores(grid.size());
    for (std::size_t c = 0; c < grid.size(); ++c) scores[c] = calibration_objective(actual, predicted[c]);
    return pick_best(grid, std::move(scores));
}

std::vector<CalibrationResult> calibrate_each_held_out(const FeatureStore& store, std::span<const std::size_t> recs,
                                                       const std::vector<HyperParams>& grid, TargetKind kind,
                                                       const FeatureMask& mask) {
    const Plan plan = plan_grid(grid);
    const std::size_t n = recs.size();
    if (n < 4) throw InvalidArgument("calibrate_each_held_out: need at least 4 recordings");

    // pair_pred[c][a * n + b]: prediction for recs[a] by a model trained without recs[a] and recs[b].
    std::vector<std::vector<AffectVector>> pair_pred(grid.size(), std::vector<AffectVector>(n * n));
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            std::vector<std::size_t> train;
            train.reserve(n - 2);
            for (std::size_t i = 0; i < n; ++i) {
                if (i != a && i != b) train.push_back(recs[i]);
            }
            const std::array<std::size_t, 2> test{recs[a], recs[b]};
            const auto pred = fit_and_predict(store, plan, grid, train, test, kind, mask);
            for (std::size_t c = 0; c < grid.size(); ++c) {
                pair_pred[c][a * n + b] = pred[c][0];
                pair_pred[c][b * n + a] = pred[c][1];
            }
        }
    }

    std::vector<CalibrationResult> results;
    results.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::vector<std::size_t> inner;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != k) inner.push_back(j);
        }
        std::vector<std::size_t> inner_recs;
        for (std::size_t j : inner) inner_recs.push_back(recs[j]);
        const Eigen::MatrixXd actual = targets_of(store, inner_recs, kind);
        std::vector<double> scores(grid.size());
        for (std::size_t c = 0; c < grid.size(); ++c) {
            Eigen::MatrixXd predicted(static_cast<Eigen::Index>(inner.size()), 4);
            for (std::size_t r = 0; r < inner.size(); ++r) {
                predicted.row(static_cast<Eigen::Index>(r)) = pair_pred[c][inner[r] * n + k].to_eigen().transpose();
            }
            scores[c] = calibration_objective(actual, predicted);
        }
        results.push_back(pick_best(grid, std::move(scores)));
    }
    return results;
}

// ---------------------------------------------------------------------------
// Model variants and baselines
// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> viewer_training_set(const FeatureStore& store, const std::string& viewer,
                                             const std::string& held_out_clip) {
    std::vector<std::size_t> recs;
    for (std::size_t i : store.recordings_of_viewer(viewer)) {
        if (store.corpus().recordings()[i].clip_id != held_out_clip) recs.push_back(i);
    }
    if (recs.size() < 3) {
        throw InvalidArgument("viewer " + viewer + " has " + std::to_string(recs.size()) +
                              " training recordings; at least 3 are needed for calibration");
    }
    return recs;
}

ModelBundle train_viewer_model(const FeatureStore& store, const std::string& viewer, const std::string& clip,
                               const std::vector<HyperParams>& grid, const FeatureMask& mask, TargetKind kind) {
    const auto recs = viewer_training_set(store, viewer, clip);
    const CalibrationResult calib = calibrate(store, recs, grid, kind, mask);
    return fit_two_step(store, recs, calib.hyper, kind, mask);
}

}  // namespace

ModelBundle train_imt1(const FeatureStore& store, const std::string& viewer, const std::string& held_out_clip,
                       const std::vector<HyperParams>& grid, const FeatureMask& mask) {
    return train_viewer_model(store, viewer, held_out_clip, grid, mask, TargetKind::clip_tags);
}

ModelBundle train_ap1(const FeatureStore& store, const std::string& viewer, const std::string& held_out_clip,
                      const std::vector<HyperParams>& grid, const FeatureMask& mask) {
    return train_viewer_model(store, viewer, held_out_clip, grid, mask, TargetKind::subjective);
}

ModelBundle train_ap_star(const FeatureStore& store, const std::string& held_out_viewer,
                          const std::vector<HyperParams>& grid, const FeatureMask& mask, std::size_t inner_folds) {
    if (inner_folds < 2) throw InvalidArgument("train_ap_star: need at least 2 inner folds");
    std::vector<std::string> viewers;
    for (const auto& v : store.corpus().viewers()) {
        if (v != held_out_viewer) viewers.push_back(v);
    }
    if (viewers.size() < 2) throw InvalidArgument("train_ap_star: need at least 2 training viewers");
    std::vector<std::size_t> recs;
    std::vector<int> folds;
    for (std::size_t v = 0; v < viewers.size(); ++v) {
        for (std::size_t i : store.recordings_of_viewer(viewers[v])) {
            recs.push_back(i);
            folds.push_back(static_cast<int>(v % inner_folds));
        }
    }
    const CalibrationResult calib = calibrate(store, recs, grid, TargetKind::subjective, mask, folds);
    return fit_two_step(store, recs, calib.hyper, TargetKind::subjective, mask);
}

AffectVector predict_imt2(const FeatureStore& store, const std::vector<std::string>& viewers,
                          const std::string& clip, const std::vector<HyperParams>& grid, const FeatureMask& mask) {
    if (viewers.empty()) throw InvalidArgument("predict_imt2: empty viewer set");
    Eigen::Vector4d sum = Eigen::Vector4d::Zero();
    for (const auto& v : viewers) {
        const auto rec = store.index_of(v, clip);
        if (!rec) throw InvalidArgument("predict_imt2: viewer " + v + " has no recording of clip " + clip);
        sum += predict_stored(train_imt1(store, v, clip, grid, mask), store, *rec).to_eigen();
    }
    return AffectVector::from_eigen(sum / static_cast<double>(viewers.size()));
}

ReportTagBaseline baseline_report_tags(const Corpus& corpus) {
    ReportTagBaseline out;
    std::array<std::vector<double>, 4> per_scale;
    for (const auto& viewer : corpus.viewers()) {
        std::vector<AffectVector> reports, tags;
        for (const auto& [key, report] : corpus.reports()) {
            if (key.first != viewer) continue;
            reports.push_back(report);
            tags.push_back(corpus.tag(key.second));
        }
        for (std::size_t s = 0; s < 4; ++s) {
            std::vector<double> x, y;
            for (std::size_t i = 0; i < reports.size(); ++i) {
                x.push_back(reports[i][s]);
                y.push_back(tags[i][s]);
            }
            try {
                per_scale[s].push_back(pearson_r(x, y));
            } catch (const UndefinedCorrelation&) {
                ++out.undefined[s];
            }
        }
    }
    for (std::size_t s = 0; s < 4; ++s) {
        const auto& v = per_scale[s];
        if (v.empty()) continue;
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double ss = 0.0;
        for (double r : v) ss += (r - mean) * (r - mean);
        out.mean_r(static_cast<Eigen::Index>(s)) = mean;
        out.std_r(static_cast<Eigen::Index>(s)) = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    }
    return out;
}

std::map<std::string, AffectVector> baseline_one_viewer_out(const Corpus& corpus, const std::string& viewer) {
    std::map<std::string, AffectVector> out;
    for (const auto& [key, report] : corpus.reports()) {
        if (key.first != viewer) continue;
        Eigen::Vector4d sum = Eigen::Vector4d::Zero();
        std::size_t count = 0;
        for (const auto& [other_key, other] : corpus.reports()) {
            if (other_key.second == key.second && other_key.first != viewer) {
                sum += other.to_eigen();
                ++count;
            }
        }
        if (count == 0) {
            throw InvalidArgument("baseline_one_viewer_out: no other viewer reported clip " + key.second);
        }
        out[key.second] = AffectVector::from_eigen(sum / static_cast<double>(count));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bundle serialization
// ---------------------------------------------------------------------------

namespace {

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json matrix_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const Eigen::RowVectorXd row = m.row(r);
        rows.push_back(std::vector<double>(row.data(), row.data() + row.size()));
    }
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

const json& field(const json& j, const char* name) {
    if (!j.is_object() || !j.contains(name)) throw SchemaError(std::string("model bundle: missing field '") + name + "'");
    return j.at(name);
}

double finite_number(const json& j, const char* what) {
    if (!j.is_number()) throw SchemaError(std::string("model bundle: ") + what + " is not a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw NonFiniteValueError(std::string("model bundle: ") + what + " is not finite");
    return v;
}

Eigen::VectorXd vector_from(const json& j, const char* what) {
    if (!j.is_array()) throw SchemaError(std::string("model bundle: ") + what + " is not an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = finite_number(j[i], what);
    return v;
}

Eigen::MatrixXd matrix_from(const json& j, const char* what) {
    const auto rows = field(j, "rows").get<Eigen::Index>();
    const auto cols = field(j, "cols").get<Eigen::Index>();
    const json& data = field(j, "data");
    if (rows < 0 || cols < 0 || !data.is_array() || static_cast<Eigen::Index>(data.size()) != rows) {
        throw SchemaError(std::string("model bundle: bad shape for ") + what);
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Eigen::VectorXd row = vector_from(data[static_cast<std::size_t>(r)], what);
        if (row.size() != cols) throw SchemaError(std::string("model bundle: ragged rows in ") + what);
        m.row(r) = row.transpose();
    }
    return m;
}

json linear_json(const LinearModel& m) {
    return {{"weights", matrix_json(m.weights)}, {"intercept", vector_json(m.intercept)}, {"ridge_lambda", m.ridge_lambda}};
}

LinearModel linear_from(const json& j, const char* what) {
    LinearModel m;
    m.weights = matrix_from(field(j, "weights"), what);
    m.intercept = vector_from(field(j, "intercept"), what);
    m.ridge_lambda = finite_number(field(j, "ridge_lambda"), what);
    if (m.intercept.size() != m.weights.cols()) throw SchemaError(std::string("model bundle: inconsistent ") + what);
    return m;
}

}  // namespace

std::string bundle_to_json(const ModelBundle& bundle) {
    json j;
    j["format"] = "facetag-model-bundle";
    j["version"] = kBundleFormatVersion;
    j["hyper"] = {{"segment_seconds", bundle.hyper.segment_seconds},
                  {"overlap_fraction", bundle.hyper.overlap_fraction},
                  {"pca_dim", bundle.hyper.pca_dim},
                  {"pca_scope", pca_scope_name(bundle.hyper.pca_scope)}};
    j["target_kind"] = target_kind_name(bundle.target_kind);
    j["feature_groups"] = bundle.mask.describe();
    j["channels"] = bundle.channels;
    json blocks = json::array();
    for (const auto& [first, last] : bundle.blocks) blocks.push_back({first, last});
    j["blocks"] = blocks;
    json bases = json::array();
    for (const auto& b : bundle.bases) {
        bases.push_back({{"mean", vector_json(b.mean)},
                         {"scale", vector_json(b.scale)},
                         {"components", matrix_json(b.components)},
                         {"explained_variance", vector_json(b.explained_variance)}});
    }
    j["bases"] = bases;
    j["f1"] = linear_json(bundle.f1);
    j["f2"] = linear_json(bundle.f2);
    return j.dump(2) + "\n";
}

ModelBundle bundle_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("model bundle: invalid JSON: ") + e.what());
    }
    try {
        if (field(j, "format") != "facetag-model-bundle") throw SchemaError("model bundle: unexpected format tag");
        if (field(j, "version").get<int>() != kBundleFormatVersion) {
            throw SchemaError("model bundle: unsupported version " + field(j, "version").dump());
        }
        ModelBundle b;
        const json& h = field(j, "hyper");
        b.hyper.segment_seconds = finite_number(field(h, "segment_seconds"), "segment_seconds");
        b.hyper.overlap_fraction = finite_number(field(h, "overlap_fraction"), "overlap_fraction");
        b.hyper.pca_dim = field(h, "pca_dim").get<Eigen::Index>();
        const auto scope = pca_scope_from_name(field(h, "pca_scope").get<std::string>());
        if (!scope) throw SchemaError("model bundle: unknown pca_scope");
        b.hyper.pca_scope = *scope;
        validate_hyper(b.hyper);
        const auto kind = target_kind_from_name(field(j, "target_kind").get<std::string>());
        if (!kind) throw SchemaError("model bundle: unknown target_kind");
        b.target_kind = *kind;
        b.mask = FeatureMask::parse(field(j, "feature_groups").get<std::string>());
        b.channels = field(j, "channels").get<std::vector<std::string>>();
        for (const auto& blk : field(j, "blocks")) b.blocks.emplace_back(blk.at(0).get<Eigen::Index>(), blk.at(1).get<Eigen::Index>());
        for (const auto& bj : field(j, "bases")) {
            PcaBasis p;
            p.mean = vector_from(field(bj, "mean"), "basis mean");
            p.scale = vector_from(field(bj, "scale"), "basis scale");
            p.components = matrix_from(field(bj, "components"), "basis components");
            p.explained_variance = vector_from(field(bj, "explained_variance"), "explained variance");
            if (p.scale.size() != p.mean.size() || p.components.cols() != p.mean.size() ||
                p.explained_variance.size() != p.components.rows()) {
                throw SchemaError("model bundle: inconsistent PCA basis dimensions");
            }
            b.bases.push_back(std::move(p));
        }
        b.f1 = linear_from(field(j, "f1"), "f1");
        b.f2 = linear_from(field(j, "f2"), "f2");
        if (b.f2.input_dim() != kIndicatorCount || b.f2.output_dim() != 4 || b.f1.output_dim() != 4) {
            throw SchemaError("model bundle: f1 must map to 4 scales and f2 must map 8 indicators to 4 scales");
        }
        Eigen::Index projected = 0;
        for (const auto& p : b.bases) projected += p.output_dim();
        if (b.f1.input_dim() != projected) throw SchemaError("model bundle: f1 input dimension differs from PCA output");
        return b;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("model bundle: ") + e.what());
    }
}

}  // namespace facetag
