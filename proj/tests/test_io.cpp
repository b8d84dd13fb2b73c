#include "facetag/io.hpp"
#include "facetag/synth.hpp"

#include "helpers.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>

using namespace facetag;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> directory_bytes(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_text_file(e.path());
    }
    return out;
}

}  // namespace

TEST_CASE("save then load reproduces the corpus exactly") {
    const Corpus c = generate_synthetic_corpus(testing::small_spec(3, 4, 5));
    const auto dir = testing::scratch_dir("io_roundtrip");
    save_corpus(c, dir);
    const Corpus back = load_corpus(dir);
    CHECK(back == c);
}

TEST_CASE("two saves of one corpus are byte-identical") {
    const Corpus c = generate_synthetic_corpus(testing::small_spec(2, 3, 9));
    const auto a = testing::scratch_dir("io_bytes_a");
    const auto b = testing::scratch_dir("io_bytes_b");
    save_corpus(c, a);
    save_corpus(c, b);
    const auto bytes_a = directory_bytes(a);
    CHECK(bytes_a.size() == 3 + 6);
    CHECK(bytes_a == directory_bytes(b));
}

TEST_CASE("a tag table missing a clip is a schema error naming it") {
    const Corpus c = generate_synthetic_corpus(testing::small_spec(2, 3, 1));
    const auto dir = testing::scratch_dir("io_missing_tag");
    save_corpus(c, dir);
    const std::string tags = read_text_file(dir / "tags.csv");
    std::string pruned;
    std::istringstream in(tags);
    for (std::string line; std::getline(in, line);) {
        if (line.rfind("c02,", 0) != 0) pruned += line + "\n";
    }
    write_text_file(dir / "tags.csv", pruned);
    try {
        load_corpus(dir);
        FAIL("expected a schema error");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("c02") != std::string::npos);
    }
}

TEST_CASE("a one-frame series breaks the invariants") {
    const Corpus c = generate_synthetic_corpus(testing::small_spec(2, 2, 1));
    const auto dir = testing::scratch_dir("io_short");
    save_corpus(c, dir);
    auto manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
    auto& entry = manifest["recordings"][0];
    const fs::path series = dir / entry["file"].get<std::string>();
    std::istringstream in(read_text_file(series));
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    write_text_file(series, header + "\n" + first + "\n");
    entry["clip_start_frame"] = 0;
    entry["clip_end_frame"] = 1;
    write_text_file(dir / "manifest.json", manifest.dump(2));
    CHECK_THROWS_AS(load_corpus(dir), InvariantError);
}

TEST_CASE("malformed inputs") {
    const Corpus c = generate_synthetic_corpus(testing::small_spec(2, 2, 1));
    SUBCASE("missing directory") { CHECK_THROWS_AS(load_corpus(testing::scratch_dir("io_empty")), MissingFileError); }
    SUBCASE("non-finite value in a series") {
        const auto dir = testing::scratch_dir("io_nan");
        save_corpus(c, dir);
        const auto manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
        const fs::path series = dir / manifest["recordings"][0]["file"].get<std::string>();
        std::string text = read_text_file(series);
        const auto row = text.find('\n') + 1;
        text.replace(row, text.find(',', row) - row, "nan");
        write_text_file(series, text);
        CHECK_THROWS_AS(load_corpus(dir), NonFiniteValueError);
    }
    SUBCASE("broken manifest json") {
        const auto dir = testing::scratch_dir("io_json");
        save_corpus(c, dir);
        write_text_file(dir / "manifest.json", "{\"version\": 1,");
        CHECK_THROWS_AS(load_corpus(dir), SchemaError);
    }
}

TEST_CASE("saving below a regular file is an I/O error") {
    const auto dir = testing::scratch_dir("io_readonly");
    write_text_file(dir / "blocker", "x");
    const Corpus c = generate_synthetic_corpus(testing::small_spec(2, 2, 1));
    CHECK_THROWS_AS(save_corpus(c, dir / "blocker" / "corpus"), IoError);
}

TEST_CASE("number formatting round-trips") {
    for (double v : {0.1, 1.0 / 3.0, -7.22, 1e-300, 123456789.125, 0.0}) {
        CHECK(parse_double(format_double(v), "test") == v);
    }
    CHECK(format_double(0.5) == "0.5");
    CHECK_THROWS_AS(parse_double("1.5x", "test"), SchemaError);
    CHECK(split_csv_line("a,b,,c") == std::vector<std::string>{"a", "b", "", "c"});
    CHECK_THROWS_AS(check_identifier("a,b", "clip id"), SchemaError);
}
