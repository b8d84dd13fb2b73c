#include "facetag/eval.hpp"

#include "facetag/io.hpp"
#include "facetag/parallel.hpp"
#include "facetag/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace facetag {

using json = nlohmann::json;

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::imt1: return "IMT-1";
        case Variant::imt2: return "IMT-2";
        case Variant::ap1: return "AP-1";
        case Variant::ap_star: return "AP*";
    }
    return "?";
}

std::optional<Variant> variant_from_name(const std::string& name) {
    std::string key;
    for (char c : name) {
        if (c != '-' && c != '_') key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (key == "imt1") return Variant::imt1;
    if (key == "imt2") return Variant::imt2;
    if (key == "ap1") return Variant::ap1;
    if (key == "ap*" || key == "apstar") return Variant::ap_star;
    return std::nullopt;
}

TargetKind variant_target(Variant v) {
    return v == Variant::imt1 || v == Variant::imt2 ? TargetKind::clip_tags : TargetKind::subjective;
}

namespace {

std::string variant_slug(Variant v) {
    switch (v) {
        case Variant::imt1: return "imt1";
        case Variant::imt2: return "imt2";
        case Variant::ap1: return "ap1";
        case Variant::ap_star: return "apstar";
    }
    return "unknown";
}

double sample_std(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double range_width(Scale s) {
    const auto r = scale_range(s);
    return r.hi - r.lo;
}

}  // namespace

ScaleStats summarize(const std::array<std::vector<double>, 4>& values, const std::array<std::size_t, 4>& undefined) {
    ScaleStats out;
    out.undefined = undefined;
    for (std::size_t s = 0; s < 4; ++s) {
        const auto& v = values[s];
        out.count[s] = v.size();
        if (v.empty()) continue;
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        out.mean(static_cast<Eigen::Index>(s)) = mean;
        out.std(static_cast<Eigen::Index>(s)) = sample_std(v, mean);
    }
    return out;
}

MetricBlock score_per_viewer(const Corpus& corpus, const std::vector<PredictionRow>& rows, EliminationMode mode,
                             double param) {
    std::map<std::string, std::vector<const PredictionRow*>> by_viewer;
    for (const auto& row : rows) by_viewer[row.viewer_id].push_back(&row);

    std::array<std::vector<double>, 4> r, acc, me;
    std::array<std::size_t, 4> undefined{};
    Eigen::Vector4d kept = Eigen::Vector4d::Zero();
    std::size_t viewers = 0;
    for (const auto& [viewer, list] : by_viewer) {
        ++viewers;
        for (Scale s : kScales) {
            const auto si = static_cast<std::size_t>(s);
            std::vector<double> actual, predicted;
            double abs_err = 0.0;
            for (const PredictionRow* row : list) {
                actual.push_back(row->actual[s]);
                predicted.push_back(row->predicted[s]);
                abs_err += std::abs(corpus.report(viewer, row->clip_id)[s] - row->predicted[s]);
            }
            try {
                r[si].push_back(pearson_r(actual, predicted));
            } catch (const UndefinedCorrelation&) {
                ++undefined[si];
            }
            const BinaryScore b = binarize_and_score(actual, predicted, mode, param);
            acc[si].push_back(b.accuracy);
            kept(static_cast<Eigen::Index>(si)) += b.kept_fraction;
            me[si].push_back(abs_err / static_cast<double>(list.size()) / range_width(s));
        }
    }
    MetricBlock out;
    out.pearson = summarize(r, undefined);
    out.accuracy = summarize(acc);
    out.kept_fraction = viewers > 0 ? Eigen::Vector4d(kept / static_cast<double>(viewers)) : kept;
    out.mean_error = summarize(me);
    return out;
}

namespace {

struct ViewerLoo {
    std::vector<PredictionRow> rows;
};

// Leave-one-clip-out for one viewer, sharing inner fits across outer folds.
ViewerLoo viewer_loo(const FeatureStore& store, const std::string& viewer, TargetKind kind,
                     const EvalOptions& options) {
    const auto recs = store.recordings_of_viewer(viewer);
    const auto calib = calibrate_each_held_out(store, recs, options.grid, kind, options.mask);
    ViewerLoo out;
    for (std::size_t k = 0; k < recs.size(); ++k) {
        std::vector<std::size_t> train;
        for (std::size_t j = 0; j < recs.size(); ++j) {
            if (j != k) train.push_back(recs[j]);
        }
        const ModelBundle bundle = fit_two_step(store, train, calib[k].hyper, kind, options.mask);
        const Recording& rec = store.corpus().recordings()[recs[k]];
        out.rows.push_back({viewer, rec.clip_id, recording_target(store.corpus(), rec, kind),
                            predict_stored(bundle, store, recs[k]), calib[k].hyper});
    }
    return out;
}

std::vector<PredictionRow> per_viewer_loo(const FeatureStore& store, TargetKind kind, const EvalOptions& options) {
    store.prepare(options.grid, options.jobs);
    const auto viewers = store.corpus().viewers();
    std::vector<ViewerLoo> results(viewers.size());
    parallel_for(viewers.size(), options.jobs,
                 [&](std::size_t v) { results[v] = viewer_loo(store, viewers[v], kind, options); });
    std::vector<PredictionRow> rows;
    for (auto& r : results) {
        for (auto& row : r.rows) rows.push_back(std::move(row));
    }
    return rows;
}

EvalReport report_skeleton(const FeatureStore& store, Variant variant, const EvalOptions& options) {
    EvalReport report;
    report.variant = variant;
    report.corpus_id = options.corpus_id;
    report.seed = options.seed;
    report.grid_size = options.grid.size();
    report.feature_groups = options.mask.describe();
    report.elimination = options.elimination;
    report.elimination_param = options.elimination_param;
    report.report_tags = baseline_report_tags(store.corpus());
    return report;
}

MetricBlock score_pooled(const std::vector<PredictionRow>& rows, const EvalOptions& options) {
    MetricBlock out;
    const std::size_t n = rows.size();
    Rng rng(options.seed);
    std::array<std::vector<double>, 4> point, acc, me;
    std::array<std::size_t, 4> undefined{};
    for (Scale s : kScales) {
        const auto si = static_cast<std::size_t>(s);
        std::vector<double> actual(n), predicted(n);
        double abs_err = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            actual[i] = rows[i].actual[s];
            predicted[i] = rows[i].predicted[s];
            abs_err += std::abs(actual[i] - predicted[i]);
        }
        try {
            point[si].push_back(pearson_r(actual, predicted));
        } catch (const UndefinedCorrelation&) {
            ++undefined[si];
        }
        const BinaryScore b = binarize_and_score(actual, predicted, options.elimination, options.elimination_param);
        acc[si].push_back(b.accuracy);
        out.kept_fraction(static_cast<Eigen::Index>(si)) = b.kept_fraction;
        me[si].push_back(abs_err / static_cast<double>(n) / range_width(s));
    }
    out.pearson = summarize(point, undefined);
    out.accuracy = summarize(acc);
    out.mean_error = summarize(me);

    // Bootstrap std of the pooled R: resample clips with replacement.
    std::array<std::vector<double>, 4> boot;
    std::vector<std::size_t> pick(n);
    for (std::size_t b = 0; b < options.bootstrap_resamples; ++b) {
        for (auto& p : pick) p = static_cast<std::size_t>(rng.below(n));
        for (Scale s : kScales) {
            std::vector<double> x(n), y(n);
            for (std::size_t i = 0; i < n; ++i) {
                x[i] = rows[pick[i]].actual[s];
                y[i] = rows[pick[i]].predicted[s];
            }
            try {
                boot[static_cast<std::size_t>(s)].push_back(pearson_r(x, y));
            } catch (const UndefinedCorrelation&) {
                // degenerate resample, skipped
            }
        }
    }
    for (std::size_t s = 0; s < 4; ++s) {
        const auto& v = boot[s];
        if (v.empty()) continue;
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        out.pearson.std(static_cast<Eigen::Index>(s)) = sample_std(v, mean);
    }
    return out;
}

std::vector<PredictionRow> pool_by_clip(const Corpus& corpus, const std::vector<PredictionRow>& imt1_rows) {
    std::map<std::string, std::pair<Eigen::Vector4d, std::size_t>> sums;
    for (const auto& row : imt1_rows) {
        auto& [sum, count] = sums.try_emplace(row.clip_id, Eigen::Vector4d::Zero(), 0).first->second;
        sum += row.predicted.to_eigen();
        ++count;
    }
    std::vector<PredictionRow> pooled;
    for (const auto& [clip, entry] : sums) {
        PredictionRow row;
        row.clip_id = clip;
        row.actual = corpus.tag(clip);
        row.predicted = AffectVector::from_eigen(entry.first / static_cast<double>(entry.second));
        pooled.push_back(row);
    }
    return pooled;
}

}  // namespace

std::pair<EvalReport, EvalReport> run_imt1_and_imt2(const FeatureStore& store, const EvalOptions& options) {
    EvalReport imt1 = report_skeleton(store, Variant::imt1, options);
    imt1.predictions = per_viewer_loo(store, TargetKind::clip_tags, options);
    imt1.metrics = score_per_viewer(store.corpus(), imt1.predictions, options.elimination, options.elimination_param);

    EvalReport imt2 = report_skeleton(store, Variant::imt2, options);
    imt2.predictions = pool_by_clip(store.corpus(), imt1.predictions);
    imt2.metrics = score_pooled(imt2.predictions, options);
    return {std::move(imt1), std::move(imt2)};
}

EvalReport run_loo_clips(const FeatureStore& store, Variant variant, const EvalOptions& options) {
    switch (variant) {
        case Variant::imt1: return run_imt1_and_imt2(store, options).first;
        case Variant::imt2: return run_imt1_and_imt2(store, options).second;
        case Variant::ap1: {
            EvalReport report = report_skeleton(store, Variant::ap1, options);
            report.predictions = per_viewer_loo(store, TargetKind::subjective, options);
            report.metrics =
                score_per_viewer(store.corpus(), report.predictions, options.elimination, options.elimination_param);
            return report;
        }
        case Variant::ap_star: break;
    }
    throw InvalidArgument("run_loo_clips: AP* is evaluated by leaving viewers out");
}

EvalReport run_loo_viewers(const FeatureStore& store, const EvalOptions& options) {
    store.prepare(options.grid, options.jobs);
    const Corpus& corpus = store.corpus();
    const auto viewers = corpus.viewers();
    if (viewers.size() < 3) throw InvalidArgument("run_loo_viewers: need at least 3 viewers");

    std::vector<std::vector<PredictionRow>> per_viewer(viewers.size());
    parallel_for(viewers.size(), options.jobs, [&](std::size_t v) {
        const ModelBundle bundle =
            train_ap_star(store, viewers[v], options.grid, options.mask, options.ap_star_inner_folds);
        for (std::size_t rec : store.recordings_of_viewer(viewers[v])) {
            const Recording& r = corpus.recordings()[rec];
            per_viewer[v].push_back({viewers[v], r.clip_id, corpus.report(r.viewer_id, r.clip_id),
                                     predict_stored(bundle, store, rec), bundle.hyper});
        }
    });

    EvalReport report = report_skeleton(store, Variant::ap_star, options);
    for (auto& rows : per_viewer) {
        for (auto& row : rows) report.predictions.push_back(std::move(row));
    }
    report.metrics = score_per_viewer(corpus, report.predictions, options.elimination, options.elimination_param);

    std::vector<PredictionRow> baseline;
    for (const auto& viewer : viewers) {
        for (const auto& [clip, pred] : baseline_one_viewer_out(corpus, viewer)) {
            baseline.push_back({viewer, clip, corpus.report(viewer, clip), pred, {}});
        }
    }
    report.one_viewer_out = score_per_viewer(corpus, baseline, options.elimination, options.elimination_param);
    report.one_viewer_out_predictions = std::move(baseline);
    return report;
}

EvalReport run_variant(const FeatureStore& store, Variant variant, const EvalOptions& options) {
    return variant == Variant::ap_star ? run_loo_viewers(store, options) : run_loo_clips(store, variant, options);
}

std::array<Eigen::Vector4d, 4> relative_importance(const std::array<Eigen::Vector4d, 4>& r) {
    std::array<Eigen::Vector4d, 4> out{};
    for (Eigen::Index s = 0; s < 4; ++s) {
        double total = 0.0;
        for (const auto& g : r) total += std::max(g(s), 0.0);
        for (std::size_t g = 0; g < 4; ++g) out[g](s) = total > 0.0 ? std::max(r[g](s), 0.0) / total : 0.0;
    }
    return out;
}

AblationResult ablate_feature_groups(const FeatureStore& store, Variant variant, const EvalOptions& options) {
    AblationResult out;
    out.variant = variant;
    for (FeatureGroup g : kFeatureGroups) {
        EvalOptions restricted = options;
        restricted.mask = FeatureMask::only(g);
        const EvalReport report = run_variant(store, variant, restricted);
        out.r[static_cast<std::size_t>(g)] = report.metrics.pearson.mean;
    }
    out.importance = relative_importance(out.r);
    return out;
}

HpAgreement hp_agreement(const FeatureStore& store) {
    const Corpus& corpus = store.corpus();
    HpAgreement out;
    std::vector<double> values;
    for (std::size_t i = 0; i < store.size(); ++i) {
        const Recording& rec = corpus.recordings()[i];
        const double s = start_relative_to_clip_end(rec, store.highlight(i));
        out.offsets.push_back({rec.viewer_id, rec.clip_id, s});
        values.push_back(s);
    }
    if (values.empty()) throw InvalidArgument("hp_agreement: corpus has no recordings");
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    out.std = sample_std(values, out.mean);

    const auto viewers = corpus.viewers();
    const auto clips = corpus.clips();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(viewers.size()), static_cast<Eigen::Index>(clips.size()));
    bool complete = true;
    for (std::size_t v = 0; v < viewers.size() && complete; ++v) {
        for (std::size_t c = 0; c < clips.size(); ++c) {
            const auto idx = store.index_of(viewers[v], clips[c]);
            if (!idx) {
                complete = false;
                break;
            }
            m(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(c)) =
                start_relative_to_clip_end(corpus.recordings()[*idx], store.highlight(*idx));
        }
    }
    if (complete && viewers.size() >= 2 && clips.size() >= 2) {
        try {
            out.icc = icc_two_way_mixed(m);
        } catch (const UndefinedCorrelation&) {
            out.icc.reset();
        }
    }

    const auto lo = static_cast<int>(std::floor(*std::min_element(values.begin(), values.end())));
    const auto hi = static_cast<int>(std::floor(*std::max_element(values.begin(), values.end())));
    std::vector<std::size_t> counts(static_cast<std::size_t>(hi - lo + 1), 0);
    for (double v : values) ++counts[static_cast<std::size_t>(static_cast<int>(std::floor(v)) - lo)];
    for (int b = lo; b <= hi; ++b) out.histogram.emplace_back(b, counts[static_cast<std::size_t>(b - lo)]);
    return out;
}

Eigen::Matrix4d scale_correlations(const std::vector<AffectVector>& ratings) {
    Eigen::Matrix4d out;
    std::array<std::vector<double>, 4> cols;
    for (const auto& r : ratings) {
        for (std::size_t s = 0; s < 4; ++s) cols[s].push_back(r[s]);
    }
    for (std::size_t a = 0; a < 4; ++a) {
        for (std::size_t b = a; b < 4; ++b) {
            const double v = pearson_r(cols[a], cols[b]);
            out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
            out(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = v;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

namespace {

json vec4(const Eigen::Vector4d& v) { return std::vector<double>{v(0), v(1), v(2), v(3)}; }

json stats_json(const ScaleStats& s) {
    return {{"mean", vec4(s.mean)},
            {"std", vec4(s.std)},
            {"count", std::vector<std::size_t>(s.count.begin(), s.count.end())},
            {"undefined", std::vector<std::size_t>(s.undefined.begin(), s.undefined.end())}};
}

json block_json(const MetricBlock& b) {
    return {{"pearson_r", stats_json(b.pearson)},
            {"accuracy", stats_json(b.accuracy)},
            {"kept_fraction", vec4(b.kept_fraction)},
            {"mean_error", stats_json(b.mean_error)}};
}

std::string num(double v) { return format_double(v); }

void summary_rows(std::ostringstream& out, const std::string& method, const MetricBlock& b) {
    for (Scale s : kScales) {
        const auto i = static_cast<Eigen::Index>(s);
        const auto u = static_cast<std::size_t>(s);
        out << method << ',' << scale_name(s) << ',' << num(b.pearson.mean(i)) << ',' << num(b.pearson.std(i)) << ','
            << b.pearson.count[u] << ',' << b.pearson.undefined[u] << ',' << num(b.accuracy.mean(i)) << ','
            << num(b.accuracy.std(i)) << ',' << num(b.kept_fraction(i)) << ',' << num(b.mean_error.mean(i)) << ','
            << num(b.mean_error.std(i)) << '\n';
    }
}

std::string predictions_csv(const std::vector<PredictionRow>& rows, bool with_hyper) {
    std::ostringstream out;
    out << "viewer_id,clip_id";
    for (Scale s : kScales) out << ",actual_" << scale_name(s);
    for (Scale s : kScales) out << ",predicted_" << scale_name(s);
    if (with_hyper) out << ",segment_seconds,overlap_fraction,pca_dim,pca_scope";
    out << '\n';
    for (const auto& r : rows) {
        out << r.viewer_id << ',' << r.clip_id;
        for (Scale s : kScales) out << ',' << num(r.actual[s]);
        for (Scale s : kScales) out << ',' << num(r.predicted[s]);
        if (with_hyper) {
            out << ',' << num(r.hyper.segment_seconds) << ',' << num(r.hyper.overlap_fraction) << ','
                << r.hyper.pca_dim << ',' << pca_scope_name(r.hyper.pca_scope);
        }
        out << '\n';
    }
    return out.str();
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string fixed(double v, int digits) {
    std::ostringstream o;
    o.setf(std::ios::fixed);
    o.precision(digits);
    o << v;
    return o.str();
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
    json j;
    j["format"] = "facetag-eval-report";
    j["version"] = 1;
    j["variant"] = variant_name(report.variant);
    j["corpus_id"] = report.corpus_id;
    j["seed"] = report.seed;
    j["grid_size"] = report.grid_size;
    j["feature_groups"] = report.feature_groups;
    j["elimination"] = {{"mode", elimination_mode_name(report.elimination)}, {"param", report.elimination_param}};
    j["scales"] = {"valence", "arousal", "likability", "rewatch"};
    j["metrics"] = block_json(report.metrics);
    j["report_vs_tags"] = {{"pearson_r_mean", vec4(report.report_tags.mean_r)},
                           {"pearson_r_std", vec4(report.report_tags.std_r)},
                           {"undefined", std::vector<std::size_t>(report.report_tags.undefined.begin(),
                                                                  report.report_tags.undefined.end())}};
    if (report.one_viewer_out) j["one_viewer_out"] = block_json(*report.one_viewer_out);
    j["prediction_count"] = report.predictions.size();
    return j.dump(2) + "\n";
}

void write_report(const EvalReport& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create report directory " + dir.string() + ": " + ec.message());
    const std::string slug = variant_slug(report.variant);
    write_text_file(dir / (slug + "_report.json"), report_to_json(report));

    std::ostringstream summary;
    summary << "method,scale,r_mean,r_std,r_count,r_undefined,accuracy_mean,accuracy_std,kept_fraction,me_mean,me_std\n";
    summary_rows(summary, variant_name(report.variant), report.metrics);
    if (report.one_viewer_out) summary_rows(summary, "One-Viewer-Out", *report.one_viewer_out);
    for (Scale s : kScales) {
        const auto i = static_cast<Eigen::Index>(s);
        const auto u = static_cast<std::size_t>(s);
        summary << "Report/Tags," << scale_name(s) << ',' << num(report.report_tags.mean_r(i)) << ','
                << num(report.report_tags.std_r(i)) << ",," << report.report_tags.undefined[u] << ",,,,,\n";
    }
    write_text_file(dir / (slug + "_summary.csv"), summary.str());
    write_text_file(dir / (slug + "_predictions.csv"),
                    predictions_csv(report.predictions, report.variant != Variant::imt2));
    if (report.one_viewer_out_predictions) {
        write_text_file(dir / (slug + "_one_viewer_out_predictions.csv"),
                        predictions_csv(*report.one_viewer_out_predictions, false));
    }
}

std::string ablation_svg(const AblationResult& result) {
    const int bar = 14, gap = 6, group_gap = 30, top = 40, height = 200;
    const int width = 60 + 4 * (4 * (bar + gap) + group_gap);
    static const char* colors[4] = {"#4477aa", "#66ccee", "#228833", "#ccbb44"};
    std::ostringstream o;
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << top + height + 60
      << "\">\n"
      << "  <text x=\"10\" y=\"20\" font-size=\"14\">" << xml_escape(std::string("Relative importance of feature groups (") +
                                                                      variant_name(result.variant) + ")")
      << "</text>\n";
    int x = 50;
    for (Scale s : kScales) {
        const auto si = static_cast<Eigen::Index>(s);
        for (std::size_t g = 0; g < 4; ++g) {
            const double v = result.importance[g](si);
            const int h = static_cast<int>(std::lround(v * height));
            o << "  <rect x=\"" << x << "\" y=\"" << top + height - h << "\" width=\"" << bar << "\" height=\"" << h
              << "\" fill=\"" << colors[g] << "\"><title>"
              << xml_escape(std::string(feature_group_name(kFeatureGroups[g])) + " " + scale_name(s) + " " + fixed(v, 3))
              << "</title></rect>\n";
            x += bar + gap;
        }
        o << "  <text x=\"" << x - 2 * (bar + gap) - 20 << "\" y=\"" << top + height + 20 << "\" font-size=\"12\">"
          << scale_name(s) << "</text>\n";
        x += group_gap;
    }
    for (std::size_t g = 0; g < 4; ++g) {
        o << "  <rect x=\"" << 50 + static_cast<int>(g) * 110 << "\" y=\"" << top + height + 35
          << "\" width=\"10\" height=\"10\" fill=\"" << colors[g] << "\"/>\n"
          << "  <text x=\"" << 64 + static_cast<int>(g) * 110 << "\" y=\"" << top + height + 45
          << "\" font-size=\"11\">" << feature_group_name(kFeatureGroups[g]) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string histogram_svg(const HpAgreement& hp) {
    const int bar = 16, top = 40, height = 200;
    const int width = 60 + static_cast<int>(hp.histogram.size()) * bar + 20;
    std::size_t peak = 1;
    for (const auto& [bin, count] : hp.histogram) peak = std::max(peak, count);
    std::ostringstream o;
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << top + height + 40
      << "\">\n"
      << "  <text x=\"10\" y=\"20\" font-size=\"14\">Highlight start relative to clip end (s)</text>\n";
    int x = 50;
    for (const auto& [bin, count] : hp.histogram) {
        const int h = static_cast<int>(std::lround(static_cast<double>(count) / static_cast<double>(peak) * height));
        o << "  <rect x=\"" << x << "\" y=\"" << top + height - h << "\" width=\"" << bar - 2 << "\" height=\"" << h
          << "\" fill=\"#4477aa\"><title>[" << bin << ", " << bin + 1 << "): " << count << "</title></rect>\n";
        if (bin % 5 == 0) {
            o << "  <text x=\"" << x << "\" y=\"" << top + height + 16 << "\" font-size=\"10\">" << bin << "</text>\n";
        }
        x += bar;
    }
    o << "</svg>\n";
    return o.str();
}

void write_ablation(const AblationResult& result, const std::filesystem::path& dir, bool svg) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    std::ostringstream csv;
    csv << "variant,group,scale,r,importance\n";
    for (FeatureGroup g : kFeatureGroups) {
        const auto gi = static_cast<std::size_t>(g);
        for (Scale s : kScales) {
            const auto si = static_cast<Eigen::Index>(s);
            csv << variant_name(result.variant) << ',' << feature_group_name(g) << ',' << scale_name(s) << ','
                << num(result.r[gi](si)) << ',' << num(result.importance[gi](si)) << '\n';
        }
    }
    write_text_file(dir / "ablation.csv", csv.str());
    if (svg) write_text_file(dir / "ablation.svg", ablation_svg(result));
}

void write_hp_report(const HpAgreement& hp, const std::filesystem::path& dir, bool svg) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    std::ostringstream offsets;
    offsets << "viewer_id,clip_id,start_seconds_relative_to_clip_end\n";
    for (const auto& o : hp.offsets) offsets << o.viewer_id << ',' << o.clip_id << ',' << num(o.seconds) << '\n';
    write_text_file(dir / "hp_offsets.csv", offsets.str());

    std::ostringstream hist;
    hist << "bin,count\n";
    for (const auto& [bin, count] : hp.histogram) hist << bin << ',' << count << '\n';
    write_text_file(dir / "hp_histogram.csv", hist.str());

    json j;
    j["recordings"] = hp.offsets.size();
    j["offset_mean_seconds"] = hp.mean;
    j["offset_std_seconds"] = hp.std;
    j["icc"] = hp.icc ? json(*hp.icc) : json(nullptr);
    write_text_file(dir / "hp_summary.json", j.dump(2) + "\n");
    if (svg) write_text_file(dir / "hp_histogram.svg", histogram_svg(hp));
}

}  // namespace facetag
