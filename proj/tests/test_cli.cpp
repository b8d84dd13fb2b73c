#include "facetag/cli.hpp"
#include "facetag/io.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <json.hpp>

#include <sstream>

using namespace facetag;
using namespace facetag::cli;
namespace fs = std::filesystem;

namespace {

EnvLookup fake_env(std::map<std::string, std::string> vars) {
    return [vars = std::move(vars)](const std::string& key) -> std::optional<std::string> {
        const auto it = vars.find(key);
        if (it == vars.end()) return std::nullopt;
        return it->second;
    };
}

struct Result {
    int code;
    std::string out, err;
};

Result invoke(const std::vector<std::string>& args, const EnvLookup& env = fake_env({})) {
    std::ostringstream out, err;
    const int code = run(args, out, err, env);
    return {code, out.str(), err.str()};
}

std::map<std::string, std::string> directory_bytes(const fs::path& dir) {
    std::map<std::string, std::string> m;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) m[fs::relative(e.path(), dir).string()] = read_text_file(e.path());
    }
    return m;
}

const std::vector<std::string> kSmallCorpus = {"--set", "n_viewers=3", "--set", "n_clips=4",
                                                "--set", "clip_seconds=10"};
const std::vector<std::string> kTinyGrid = {"--set", "grid_segment_seconds=2", "--set", "grid_overlap=0.5",
                                             "--set", "grid_pca_dim=5", "--set", "grid_pca_scope=combined",
                                             "--set", "bootstrap_resamples=20"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

fs::path small_corpus(const std::string& name) {
    const auto dir = testing::scratch_dir(name);
    const Result r = invoke(concat({"synth", "--seed", "5", "--out", (dir / "corpus").string()}, kSmallCorpus));
    REQUIRE(r.code == kExitOk);
    return dir / "corpus";
}

}  // namespace

TEST_CASE("config precedence: command line over environment over file over default") {
    const auto dir = testing::scratch_dir("cli_config");
    write_text_file(dir / "run.conf", "# comment\nnoise_level = 0.1\nn_clips = 7\nn_viewers = 9\n\n");
    const RunConfig c = resolve_config({{"n_viewers", "3"}}, dir / "run.conf",
                                       fake_env({{"FACETAG_N_CLIPS", "5"}, {"FACETAG_N_VIEWERS", "4"}}));
    CHECK(c.get("n_viewers") == "3");
    CHECK(c.source("n_viewers") == "cli");
    CHECK(c.get("n_clips") == "5");
    CHECK(c.source("n_clips") == "env");
    CHECK(c.get_double("noise_level") == 0.1);
    CHECK(c.source("noise_level") == "file");
    CHECK(c.get_count("frame_rate") == 30);
    CHECK(c.source("frame_rate") == "default");
    CHECK(c.get_list("grid_pca_dim") == std::vector<std::string>{"5", "10", "15"});
    CHECK_FALSE(c.has_value("seed"));
    CHECK_THROWS_AS(c.require("seed"), UsageError);

    CHECK_THROWS_AS(resolve_config({{"bogus", "1"}}, std::nullopt, fake_env({})), UsageError);
    write_text_file(dir / "bad.conf", "no equals sign\n");
    CHECK_THROWS_AS(resolve_config({}, dir / "bad.conf", fake_env({})), UsageError);
    CHECK(parse_config_text("seed = 1\n# x\nout=two words\n", "t") ==
          std::map<std::string, std::string>{{"seed", "1"}, {"out", "two words"}});
    CHECK_THROWS_AS(parse_config_text("a = 1\n", "t"), UsageError);
}

TEST_CASE("effective configuration is printed") {
    RunConfig c = resolve_config({{"seed", "4"}}, std::nullopt, fake_env({}));
    std::ostringstream out;
    print_config(c, "synth", out);
    CHECK(out.str().find("seed = 4  (cli)") != std::string::npos);
    CHECK(out.str().find("elimination") == std::string::npos);
}

TEST_CASE("exit codes") {
    CHECK(invoke({}).code == kExitUsage);
    CHECK(invoke({"frobnicate"}).code == kExitUsage);
    CHECK(invoke({"synth", "--help"}).code == kExitOk);
    CHECK(invoke({"synth", "--out", testing::scratch_dir("cli_noseed").string()}).code == kExitUsage);
    CHECK(invoke({"synth", "--seed", "1", "--set", "nonsense=1"}).code == kExitUsage);
    CHECK(invoke({"extract", "--corpus", (testing::scratch_dir("cli_missing") / "nope").string(), "--out",
                  testing::scratch_dir("cli_missing_out").string()})
              .code == kExitFailure);
}

TEST_CASE("synth is deterministic and honours the environment") {
    const auto dir = testing::scratch_dir("cli_synth");
    const auto a = concat({"synth", "--seed", "11", "--out", (dir / "a").string()}, kSmallCorpus);
    const auto b = concat({"synth", "--seed", "11", "--out", (dir / "b").string()}, kSmallCorpus);
    REQUIRE(invoke(a).code == kExitOk);
    REQUIRE(invoke(b).code == kExitOk);
    CHECK(directory_bytes(dir / "a") == directory_bytes(dir / "b"));
    CHECK(load_corpus(dir / "a").recordings().size() == 12);

    const Result env_run = invoke({"synth", "--out", (dir / "c").string(), "--set", "n_clips=3", "--set",
                                   "clip_seconds=10"},
                                  fake_env({{"FACETAG_SEED", "2"}, {"FACETAG_N_VIEWERS", "2"}}));
    REQUIRE(env_run.code == kExitOk);
    CHECK(load_corpus(dir / "c").recordings().size() == 6);
}

TEST_CASE("extract writes one row per recording, reproducibly") {
    const auto corpus = small_corpus("cli_extract");
    const auto out = corpus.parent_path() / "features";
    REQUIRE(invoke({"extract", "--corpus", corpus.string(), "--out", out.string()}).code == kExitOk);
    const std::string features = read_text_file(out / "features.csv");
    CHECK(std::count(features.begin(), features.end(), '\n') == 13);
    const std::string highlights = read_text_file(out / "highlights.csv");
    CHECK(std::count(highlights.begin(), highlights.end(), '\n') == 13);
    REQUIRE(invoke({"extract", "--corpus", corpus.string(), "--out", out.string()}).code == kExitOk);
    CHECK(read_text_file(out / "features.csv") == features);
}

TEST_CASE("a corrupt corpus fails with a nonzero exit") {
    const auto corpus = small_corpus("cli_corrupt");
    write_text_file(corpus / "tags.csv", "clip_id,valence,arousal,likability,rewatch\nc01,1,2,3,1\n");
    const Result r = invoke({"extract", "--corpus", corpus.string(), "--out", (corpus.parent_path() / "o").string()});
    CHECK(r.code == kExitFailure);
    CHECK(r.err.find("c02") != std::string::npos);
}

TEST_CASE("eval, train, ablate and hp-report") {
    const auto corpus = small_corpus("cli_eval");
    const auto base = corpus.parent_path();

    CHECK(invoke(concat({"eval", "--corpus", corpus.string(), "--seed", "1", "--out", (base / "x").string(),
                         "--variant", "IMT-9"},
                        kTinyGrid))
              .code == kExitUsage);

    const auto e1 = concat({"eval", "--corpus", corpus.string(), "--seed", "1", "--out", (base / "e1").string()}, kTinyGrid);
    const auto e2 = concat({"eval", "--corpus", corpus.string(), "--seed", "1", "--out", (base / "e2").string(), "--jobs", "2"},
                           kTinyGrid);
    REQUIRE(invoke(e1).code == kExitOk);
    REQUIRE(invoke(e2).code == kExitOk);
    CHECK(directory_bytes(base / "e1") == directory_bytes(base / "e2"));
    CHECK(fs::exists(base / "e1" / "imt1_report.json"));
    CHECK(fs::exists(base / "e1" / "imt2_report.json"));
    const auto report = nlohmann::json::parse(read_text_file(base / "e1" / "imt1_report.json"));
    CHECK(report["metrics"]["pearson_r"]["mean"].size() == 4);

    const Result ap = invoke(concat({"eval", "--corpus", corpus.string(), "--seed", "1", "--out",
                                     (base / "ap").string(), "--variant", "AP*", "--set", "ap_star_inner_folds=2"},
                                    kTinyGrid));
    REQUIRE(ap.code == kExitOk);
    const std::string summary = read_text_file(base / "ap" / "apstar_summary.csv");
    CHECK(summary.find("One-Viewer-Out") != std::string::npos);

    REQUIRE(invoke(concat({"train", "--corpus", corpus.string(), "--out", (base / "t").string(), "--set", "viewer=v02",
                           "--set", "held_out_clip=c03"},
                          kTinyGrid))
                .code == kExitOk);
    CHECK(bundle_from_json(read_text_file(base / "t" / "model_bundle.json")).target_kind == TargetKind::clip_tags);
    CHECK(invoke(concat({"train", "--corpus", corpus.string(), "--out", (base / "t2").string(), "--variant", "IMT-2",
                         "--set", "viewer=v02"},
                        kTinyGrid))
              .code == kExitUsage);

    REQUIRE(invoke(concat({"ablate", "--corpus", corpus.string(), "--seed", "1", "--svg", "--out", (base / "ab").string()},
                          kTinyGrid))
                .code == kExitOk);
    const std::string ablation = read_text_file(base / "ab" / "ablation.csv");
    CHECK(std::count(ablation.begin(), ablation.end(), '\n') == 17);

    REQUIRE(invoke({"hp-report", "--corpus", corpus.string(), "--svg", "--out", (base / "hp").string()}).code == kExitOk);
    std::istringstream svg(read_text_file(base / "hp" / "hp_histogram.svg"));
    boost::property_tree::ptree tree;
    CHECK_NOTHROW(boost::property_tree::read_xml(svg, tree));

    // Histogram bins cover every offset.
    const auto hp = nlohmann::json::parse(read_text_file(base / "hp" / "hp_summary.json"));
    std::istringstream offsets(read_text_file(base / "hp" / "hp_offsets.csv"));
    std::string line;
    std::getline(offsets, line);
    std::istringstream bins(read_text_file(base / "hp" / "hp_histogram.csv"));
    std::getline(bins, line);
    std::vector<int> bin_ids;
    std::size_t counted = 0;
    while (std::getline(bins, line)) {
        const auto f = split_csv_line(line);
        bin_ids.push_back(std::stoi(f[0]));
        counted += std::stoul(f[1]);
    }
    CHECK(counted == 12);
    while (std::getline(offsets, line)) {
        const double s = std::stod(split_csv_line(line).back());
        CHECK(std::floor(s) >= bin_ids.front());
        CHECK(std::floor(s) <= bin_ids.back());
    }
    CHECK(hp.contains("icc"));
}
