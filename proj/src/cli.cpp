#include "facetag/cli.hpp"

#include "facetag/eval.hpp"
#include "facetag/io.hpp"
#include "facetag/parallel.hpp"
#include "facetag/synth.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

namespace facetag::cli {

namespace fs = std::filesystem;

namespace {

struct KeyInfo {
    std::string fallback;
    std::set<std::string> commands;  // empty = every command
};

const std::map<std::string, KeyInfo>& key_table() {
    static const std::set<std::string> model_cmds = {"train", "eval", "ablate"};
    static const std::set<std::string> eval_cmds = {"eval", "ablate"};
    static const std::map<std::string, KeyInfo> table = {
        {"corpus", {"", {"extract", "train", "eval", "ablate", "hp-report"}}},
        {"out", {"", {}}},
        {"seed", {"", {"synth", "eval", "ablate"}}},
        {"jobs", {"0", {}}},
        {"svg", {"false", {"ablate", "hp-report"}}},
        {"variant", {"IMT-1", model_cmds}},
        {"viewer", {"", {"train"}}},
        {"held_out_clip", {"", {"train"}}},
        {"feature_groups", {"moments+discrete+dynamic+misc", {"train", "eval"}}},
        {"grid_segment_seconds", {"1.5,2,3", model_cmds}},
        {"grid_overlap", {"0,0.5", model_cmds}},
        {"grid_pca_dim", {"5,10,15", model_cmds}},
        {"grid_pca_scope", {"per-group,combined", model_cmds}},
        {"ap_star_inner_folds", {"5", model_cmds}},
        {"elimination", {"quantile", eval_cmds}},
        {"elimination_param", {"0.15", eval_cmds}},
        {"bootstrap_resamples", {"1000", eval_cmds}},
        {"n_viewers", {"26", {"synth"}}},
        {"n_clips", {"18", {"synth"}}},
        {"clip_seconds", {"20", {"synth"}}},
        {"frame_rate", {"30", {"synth"}}},
        {"noise_level", {"0.5", {"synth"}}},
        {"effect_valence", {"1", {"synth"}}},
        {"effect_arousal", {"1", {"synth"}}},
        {"effect_likability", {"1", {"synth"}}},
        {"effect_rewatch", {"1", {"synth"}}},
        {"discrete_reports", {"false", {"synth"}}},
        {"burst_offset_mean", {"-7.22", {"synth"}}},
        {"burst_offset_sd", {"4.14", {"synth"}}},
    };
    return table;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string env_name(const std::string& key) {
    std::string name = kEnvPrefix;
    for (char c : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return name;
}

void check_known(const std::string& key, const std::string& where) {
    if (!key_table().contains(key)) throw UsageError(where + ": unknown configuration key '" + key + "'");
}

}  // namespace

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name.c_str())) return std::string(v);
        return std::nullopt;
    };
}

const std::map<std::string, std::string>& config_defaults() {
    static const std::map<std::string, std::string> defaults = [] {
        std::map<std::string, std::string> d;
        for (const auto& [k, info] : key_table()) d[k] = info.fallback;
        return d;
    }();
    return defaults;
}

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

const std::string& RunConfig::get(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw UsageError("unknown configuration key '" + key + "'");
    return it->second.value;
}

const std::string& RunConfig::source(const std::string& key) const {
    get(key);
    return entries_.at(key).source;
}

std::string RunConfig::require(const std::string& key) const {
    const std::string& v = get(key);
    if (v.empty()) {
        throw UsageError("missing required setting '" + key + "' (use --" + key + ", " + env_name(key) +
                         " or the config file)");
    }
    return v;
}

double RunConfig::get_double(const std::string& key) const {
    const std::string v = require(key);
    try {
        return parse_double(v, key);
    } catch (const Error& e) {
        throw UsageError(std::string("setting '") + key + "': " + e.what());
    }
}

long long RunConfig::get_int(const std::string& key) const {
    const std::string v = require(key);
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw UsageError("setting '" + key + "': expected an integer, got '" + v + "'");
    }
    return out;
}

std::size_t RunConfig::get_count(const std::string& key) const {
    const long long v = get_int(key);
    if (v < 0) throw UsageError("setting '" + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
}

bool RunConfig::get_bool(const std::string& key) const {
    std::string v = require(key);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw UsageError("setting '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(require(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw UsageError("setting '" + key + "' has an empty list item");
        out.push_back(item);
    }
    return out;
}

void RunConfig::set(const std::string& key, std::string value, std::string source) {
    entries_[key] = {std::move(value), std::move(source)};
}

std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& where) {
    std::map<std::string, std::string> out;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        const std::string at = where + ":" + std::to_string(line_no);
        if (eq == std::string::npos) throw UsageError(at + ": expected 'key = value'");
        const std::string key = trim(t.substr(0, eq));
        check_known(key, at);
        out[key] = trim(t.substr(eq + 1));
    }
    return out;
}

RunConfig resolve_config(const std::map<std::string, std::string>& cli_values,
                         const std::optional<fs::path>& config_file, const EnvLookup& env) {
    RunConfig config;
    for (const auto& [k, v] : config_defaults()) config.set(k, v, "default");
    if (config_file) {
        std::string text;
        try {
            text = read_text_file(*config_file);
        } catch (const Error& e) {
            throw UsageError(std::string("cannot read config file: ") + e.what());
        }
        for (const auto& [k, v] : parse_config_text(text, config_file->string())) config.set(k, v, "file");
    }
    for (const auto& [k, info] : key_table()) {
        if (auto v = env(env_name(k))) config.set(k, *v, "env");
    }
    for (const auto& [k, v] : cli_values) {
        check_known(k, "command line");
        config.set(k, v, "cli");
    }
    return config;
}

void print_config(const RunConfig& config, const std::string& command, std::ostream& out) {
    out << "# facetag " << command << " effective configuration\n";
    for (const auto& [k, s] : config.entries()) {
        const auto& cmds = key_table().at(k).commands;
        if (!cmds.empty() && !cmds.contains(command)) continue;
        out << "#   " << k << " = " << (s.value.empty() ? "<unset>" : s.value) << "  (" << s.source << ")\n";
    }
}

// ---------------------------------------------------------------------------
// Command helpers
// ---------------------------------------------------------------------------

namespace {

std::size_t jobs_of(const RunConfig& config) {
    const std::size_t j = config.get_count("jobs");
    if (j > 0) return j;
    return std::max(1u, std::thread::hardware_concurrency());
}

std::uint64_t seed_of(const RunConfig& config) {
    const std::string v = config.require("seed");
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw UsageError("setting 'seed': expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

Variant variant_of(const RunConfig& config) {
    const std::string name = config.require("variant");
    const auto v = variant_from_name(name);
    if (!v) throw UsageError("unknown variant '" + name + "' (expected IMT-1, IMT-2, AP-1 or AP*)");
    return *v;
}

FeatureMask mask_of(const RunConfig& config) {
    try {
        return FeatureMask::parse(config.require("feature_groups"));
    } catch (const InvalidArgument& e) {
        throw UsageError(std::string("setting 'feature_groups': ") + e.what());
    }
}

std::vector<HyperParams> grid_of(const RunConfig& config) {
    std::vector<double> segs, overlaps;
    std::vector<Eigen::Index> dims;
    std::vector<PcaScope> scopes;
    auto number = [](const std::string& text, const char* key) {
        try {
            return parse_double(text, key);
        } catch (const Error& e) {
            throw UsageError(std::string("setting '") + key + "': " + e.what());
        }
    };
    for (const auto& s : config.get_list("grid_segment_seconds")) segs.push_back(number(s, "grid_segment_seconds"));
    for (const auto& s : config.get_list("grid_overlap")) overlaps.push_back(number(s, "grid_overlap"));
    for (const auto& s : config.get_list("grid_pca_dim")) {
        long long q = 0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), q);
        if (ec != std::errc() || ptr != s.data() + s.size()) {
            throw UsageError("setting 'grid_pca_dim': expected integers, got '" + s + "'");
        }
        dims.push_back(static_cast<Eigen::Index>(q));
    }
    for (const auto& s : config.get_list("grid_pca_scope")) {
        const auto scope = pca_scope_from_name(s);
        if (!scope) throw UsageError("setting 'grid_pca_scope': unknown scope '" + s + "'");
        scopes.push_back(*scope);
    }
    std::vector<HyperParams> grid;
    for (double seg : segs) {
        for (double ov : overlaps) {
            for (Eigen::Index q : dims) {
                for (PcaScope scope : scopes) {
                    HyperParams h{seg, ov, q, scope};
                    validate_hyper(h);
                    grid.push_back(h);
                }
            }
        }
    }
    return grid;
}

EvalOptions eval_options(const RunConfig& config, std::uint64_t seed, const fs::path& corpus_dir) {
    EvalOptions o;
    o.grid = grid_of(config);
    o.mask = mask_of(config);
    const std::string mode = config.require("elimination");
    const auto m = elimination_mode_from_name(mode);
    if (!m) throw UsageError("unknown elimination mode '" + mode + "' (expected quantile or band)");
    o.elimination = *m;
    o.elimination_param = config.get_double("elimination_param");
    o.seed = seed;
    o.bootstrap_resamples = config.get_count("bootstrap_resamples");
    o.ap_star_inner_folds = config.get_count("ap_star_inner_folds");
    o.jobs = jobs_of(config);
    o.corpus_id = corpus_dir.filename().string();
    if (o.corpus_id.empty()) o.corpus_id = corpus_dir.parent_path().filename().string();
    return o;
}

Corpus load_input(const RunConfig& config, std::ostream& out) {
    const fs::path dir = config.require("corpus");
    Corpus corpus = load_corpus(dir);
    out << "loaded " << dir.string() << ": " << corpus.viewers().size() << " viewers, " << corpus.clips().size()
        << " clips, " << corpus.recordings().size() << " recordings\n";
    return corpus;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void print_metrics(const EvalReport& r, std::ostream& out) {
    out << variant_name(r.variant) << " (" << r.predictions.size() << " predictions, mode "
        << elimination_mode_name(r.elimination) << " " << format_double(r.elimination_param) << ")\n";
    out << "scale        R mean   R std    acc     kept    ME\n";
    auto line = [&](const char* label, const MetricBlock& b) {
        out << label << '\n';
        for (Scale s : kScales) {
            const auto i = static_cast<Eigen::Index>(s);
            char buf[128];
            std::snprintf(buf, sizeof buf, "  %-10s %7.3f %7.3f %7.3f %7.3f %7.3f\n", scale_name(s),
                          b.pearson.mean(i), b.pearson.std(i), b.accuracy.mean(i), b.kept_fraction(i),
                          b.mean_error.mean(i));
            out << buf;
        }
    };
    line("model", r.metrics);
    if (r.one_viewer_out) line("one-viewer-out baseline", *r.one_viewer_out);
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& config, std::ostream& out) {
    SynthSpec spec;
    spec.seed = seed_of(config);
    spec.n_viewers = config.get_count("n_viewers");
    spec.n_clips = config.get_count("n_clips");
    spec.clip_seconds = config.get_double("clip_seconds");
    spec.frame_rate = config.get_double("frame_rate");
    spec.noise_level = config.get_double("noise_level");
    for (Scale s : kScales) {
        spec.effect_strengths[scale_name(s)] = config.get_double(std::string("effect_") + scale_name(s));
    }
    spec.discrete_reports = config.get_bool("discrete_reports");
    spec.burst_offset_mean = config.get_double("burst_offset_mean");
    spec.burst_offset_sd = config.get_double("burst_offset_sd");
    const fs::path dir = config.require("out");

    const Corpus corpus = generate_synthetic_corpus(spec);
    save_corpus(corpus, dir);
    Eigen::Index min_frames = std::numeric_limits<Eigen::Index>::max(), max_frames = 0;
    for (const auto& r : corpus.recordings()) {
        min_frames = std::min(min_frames, r.series.frames());
        max_frames = std::max(max_frames, r.series.frames());
    }
    out << "wrote " << dir.string() << ": " << corpus.viewers().size() << " viewers, " << corpus.clips().size()
        << " clips, " << corpus.recordings().size() << " recordings, " << corpus.channels().size()
        << " channels, " << min_frames;
    if (max_frames != min_frames) out << ".." << max_frames;
    out << " frames per recording\n";
    return kExitOk;
}

int cmd_extract(const RunConfig& config, std::ostream& out) {
    const fs::path dir = config.require("out");
    const Corpus corpus = load_input(config, out);
    const std::size_t jobs = jobs_of(config);
    const FeatureStore store(corpus, jobs);

    std::vector<FeatureVector> features(store.size());
    parallel_for(store.size(), jobs, [&](std::size_t i) {
        features[i] = assemble_feature_vector(corpus.recordings()[i], store.highlight(i), corpus.gestures());
    });

    std::ostringstream fcsv, hcsv;
    fcsv << "viewer_id,clip_id";
    for (const auto& name : store.layout().names(corpus.channels())) fcsv << ',' << name;
    fcsv << '\n';
    hcsv << "viewer_id,clip_id,start_frame,end_frame,start_seconds_relative_to_clip_end\n";
    for (std::size_t i = 0; i < store.size(); ++i) {
        const Recording& r = corpus.recordings()[i];
        fcsv << r.viewer_id << ',' << r.clip_id;
        const Eigen::VectorXd v = features[i].concatenated();
        for (Eigen::Index c = 0; c < v.size(); ++c) fcsv << ',' << format_double(v(c));
        fcsv << '\n';
        const HighlightWindow& h = store.highlight(i);
        hcsv << r.viewer_id << ',' << r.clip_id << ',' << h.start_frame << ',' << h.range().end << ','
             << format_double(start_relative_to_clip_end(r, h)) << '\n';
    }
    ensure_dir(dir);
    write_text_file(dir / "features.csv", fcsv.str());
    write_text_file(dir / "highlights.csv", hcsv.str());
    out << "wrote " << store.size() << " feature rows (" << store.layout().total() << " columns) and highlight windows to "
        << dir.string() << '\n';
    return kExitOk;
}

int cmd_train(const RunConfig& config, std::ostream& out) {
    const Variant variant = variant_of(config);
    const fs::path dir = config.require("out");
    const auto grid = grid_of(config);
    const FeatureMask mask = mask_of(config);
    const std::size_t folds = config.get_count("ap_star_inner_folds");
    const std::string viewer = config.get("viewer");
    const std::string held_out = config.get("held_out_clip");
    if (variant == Variant::imt2) {
        throw UsageError("IMT-2 has no bundle of its own; it averages the IMT-1 bundles of every viewer");
    }
    if (variant != Variant::ap_star && viewer.empty()) {
        throw UsageError(std::string("variant ") + variant_name(variant) + " needs 'viewer'");
    }
    const Corpus corpus = load_input(config, out);
    const FeatureStore store(corpus, jobs_of(config));
    store.prepare(grid, jobs_of(config));
    ModelBundle bundle;
    switch (variant) {
        case Variant::imt1: bundle = train_imt1(store, viewer, held_out, grid, mask); break;
        case Variant::ap1: bundle = train_ap1(store, viewer, held_out, grid, mask); break;
        default: bundle = train_ap_star(store, viewer, grid, mask, folds); break;
    }
    ensure_dir(dir);
    write_text_file(dir / "model_bundle.json", bundle_to_json(bundle));
    out << "trained " << variant_name(variant) << " (" << describe(bundle.hyper) << ") -> "
        << (dir / "model_bundle.json").string() << '\n';
    return kExitOk;
}

int cmd_eval(const RunConfig& config, std::ostream& out) {
    const Variant variant = variant_of(config);
    const std::uint64_t seed = seed_of(config);
    const fs::path dir = config.require("out");
    const fs::path corpus_dir = config.require("corpus");
    EvalOptions options = eval_options(config, seed, corpus_dir);
    const Corpus corpus = load_input(config, out);
    const FeatureStore store(corpus, options.jobs);
    if (variant == Variant::imt1 || variant == Variant::imt2) {
        // IMT-2 needs the IMT-1 pass, so both reports are written.
        const auto [imt1, imt2] = run_imt1_and_imt2(store, options);
        write_report(imt1, dir);
        write_report(imt2, dir);
        print_metrics(imt1, out);
        print_metrics(imt2, out);
    } else {
        const EvalReport report = run_variant(store, variant, options);
        write_report(report, dir);
        print_metrics(report, out);
    }
    out << "reports written to " << dir.string() << '\n';
    return kExitOk;
}

int cmd_ablate(const RunConfig& config, std::ostream& out) {
    const Variant variant = variant_of(config);
    const std::uint64_t seed = seed_of(config);
    const fs::path dir = config.require("out");
    const bool svg = config.get_bool("svg");
    EvalOptions options = eval_options(config, seed, config.require("corpus"));
    const Corpus corpus = load_input(config, out);
    const FeatureStore store(corpus, options.jobs);
    const AblationResult result = ablate_feature_groups(store, variant, options);
    write_ablation(result, dir, svg);
    out << "relative importance (" << variant_name(variant) << ")\n";
    for (FeatureGroup g : kFeatureGroups) {
        out << "  " << feature_group_name(g);
        for (Scale s : kScales) {
            out << "  " << scale_name(s) << '='
                << format_double(std::round(result.importance[static_cast<std::size_t>(g)](static_cast<Eigen::Index>(s)) *
                                            1000.0) /
                                 1000.0);
        }
        out << '\n';
    }
    return kExitOk;
}

int cmd_hp_report(const RunConfig& config, std::ostream& out) {
    const fs::path dir = config.require("out");
    const bool svg = config.get_bool("svg");
    const Corpus corpus = load_input(config, out);
    const FeatureStore store(corpus, jobs_of(config));
    const HpAgreement hp = hp_agreement(store);
    write_hp_report(hp, dir, svg);
    out << "highlight start relative to clip end: mean " << format_double(hp.mean) << " s, std "
        << format_double(hp.std) << " s, ICC " << (hp.icc ? format_double(*hp.icc) : std::string("n/a")) << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
    CLI::App app{"facetag: affect prediction from facial action-unit time series", "facetag"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every command");

    struct Flags {
        std::string config, corpus, out, variant, seed, jobs;
        bool svg = false;
        std::vector<std::string> sets;
    } flags;

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"synth", "Generate a seeded synthetic corpus"},
        {"extract", "Write per-recording features and highlight windows"},
        {"train", "Train one model bundle"},
        {"eval", "Run a variant's leave-one-out evaluation"},
        {"ablate", "Per-feature-group ablation"},
        {"hp-report", "Highlight offsets, histogram and viewer agreement"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", flags.config, "Flat key=value config file");
        sub->add_option("--corpus", flags.corpus, "Corpus directory");
        sub->add_option("--out", flags.out, "Output directory");
        sub->add_option("--variant", flags.variant, "IMT-1, IMT-2, AP-1 or AP*");
        sub->add_option("--seed", flags.seed, "Seed (required by synth, eval, ablate)");
        sub->add_option("--jobs", flags.jobs, "Worker threads (0 = all cores)");
        sub->add_flag("--svg", flags.svg, "Also write SVG charts");
        sub->add_option("--set", flags.sets, "Override any config key: --set key=value");
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        std::map<std::string, std::string> cli_values;
        for (const auto& s : flags.sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
            cli_values[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
        }
        auto flag = [&](const std::string& key, const std::string& value) {
            if (!value.empty()) cli_values[key] = value;
        };
        flag("corpus", flags.corpus);
        flag("out", flags.out);
        flag("variant", flags.variant);
        flag("seed", flags.seed);
        flag("jobs", flags.jobs);
        if (flags.svg) cli_values["svg"] = "true";

        std::optional<fs::path> config_file;
        if (!flags.config.empty()) {
            config_file = flags.config;
        } else if (auto v = env(std::string(kEnvPrefix) + "CONFIG")) {
            config_file = *v;
        }
        const RunConfig config = resolve_config(cli_values, config_file, env);
        print_config(config, command, out);

        if (command == "synth") return cmd_synth(config, out);
        if (command == "extract") return cmd_extract(config, out);
        if (command == "train") return cmd_train(config, out);
        if (command == "eval") return cmd_eval(config, out);
        if (command == "ablate") return cmd_ablate(config, out);
        return cmd_hp_report(config, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace facetag::cli
