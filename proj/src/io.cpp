#include "facetag/io.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace facetag {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* const kScaleHeader = "valence,arousal,likability,rewatch";

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
};

CsvTable read_csv(const fs::path& path) {
    std::istringstream in(read_text_file(path));
    CsvTable t;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(t.header.size()) + " fields, got " +
                              std::to_string(fields.size()));
        }
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(line_no);
    }
    if (t.header.empty()) throw SchemaError(path.string() + ": empty table (no header)");
    return t;
}

double finite_field(const std::string& text, const std::string& where) {
    const double v = parse_double(text, where);
    if (!std::isfinite(v)) throw NonFiniteValueError(where + ": non-finite value '" + text + "'");
    return v;
}

AffectVector parse_affect(const std::vector<std::string>& row, std::size_t first, const std::string& where) {
    AffectVector v;
    for (std::size_t i = 0; i < kScaleCount; ++i) v[i] = finite_field(row[first + i], where);
    return v;
}

std::string affect_fields(const AffectVector& v) {
    std::string s;
    for (std::size_t i = 0; i < kScaleCount; ++i) {
        s += ',';
        s += format_double(v[i]);
    }
    return s;
}

void expect_header(const CsvTable& t, const std::string& expected, const fs::path& path) {
    std::string got;
    for (std::size_t i = 0; i < t.header.size(); ++i) got += (i ? "," : "") + t.header[i];
    if (got != expected) {
        throw SchemaError(path.string() + ": header '" + got + "' does not match '" + expected + "'");
    }
}

template <typename T>
T get_field(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) throw SchemaError(where + ": missing field '" + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw SchemaError(where + ": field '" + key + "' has the wrong type (" + e.what() + ")");
    }
}

json gestures_to_json(const GestureChannels& g) {
    return json{{"smile_left", g.smile_left}, {"smile_right", g.smile_right}, {"blink", g.blink},
                {"dimple", g.dimple},         {"lip_stretch", g.lip_stretch}, {"frown", g.frown}};
}

GestureChannels gestures_from_json(const json& j, const std::string& where) {
    GestureChannels g;
    g.smile_left = get_field<std::string>(j, "smile_left", where);
    g.smile_right = get_field<std::string>(j, "smile_right", where);
    g.blink = get_field<std::string>(j, "blink", where);
    g.dimple = get_field<std::string>(j, "dimple", where);
    g.lip_stretch = get_field<std::string>(j, "lip_stretch", where);
    g.frown = get_field<std::string>(j, "frown", where);
    return g;
}

AuSeries read_series(const fs::path& path, const std::vector<std::string>& channels, double frame_rate) {
    if (!fs::exists(path)) throw MissingFileError("missing series file " + path.string());
    const CsvTable t = read_csv(path);
    if (t.header != channels) {
        throw SchemaError(path.string() + ": header does not match the manifest channel order");
    }
    AuSeries s;
    s.frame_rate = frame_rate;
    s.channels = channels;
    s.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(channels.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        for (std::size_t c = 0; c < channels.size(); ++c) {
            const std::string& text = t.rows[r][c];
            double v = 0.0;
            const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
            if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
                // Slow path only for the error message.
                finite_field(text, path.string() + ":" + std::to_string(t.line_numbers[r]) + " column " + channels[c]);
            }
            s.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
        }
    }
    return s;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return {buf, res.ptr};
}

double parse_double(const std::string& text, const std::string& where) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) {
        throw SchemaError(where + ": cannot parse number '" + text + "'");
    }
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

void check_identifier(const std::string& id, const std::string& what) {
    if (id.empty() || id.find_first_of(",\"\r\n") != std::string::npos) {
        throw SchemaError(what + " '" + id + "' is empty or contains a comma, quote or newline");
    }
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        if (!fs::exists(path)) throw MissingFileError("missing file " + path.string());
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Corpus load_corpus(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) throw MissingFileError("missing manifest " + manifest_path.string());

    json manifest;
    try {
        manifest = json::parse(read_text_file(manifest_path));
    } catch (const json::parse_error& e) {
        throw SchemaError(manifest_path.string() + ": malformed JSON (" + e.what() + ")");
    }
    const std::string where = manifest_path.string();
    const int version = get_field<int>(manifest, "version", where);
    if (version != kCorpusFormatVersion) {
        throw SchemaError(where + ": unsupported version " + std::to_string(version));
    }
    const double frame_rate = get_field<double>(manifest, "frame_rate", where);
    const auto channels = get_field<std::vector<std::string>>(manifest, "channels", where);
    if (!manifest.contains("gestures")) throw SchemaError(where + ": missing field 'gestures'");
    const GestureChannels gestures = gestures_from_json(manifest.at("gestures"), where + " gestures");
    const bool discrete = manifest.value("discrete_reports", false);
    if (!manifest.contains("recordings") || !manifest.at("recordings").is_array()) {
        throw SchemaError(where + ": 'recordings' must be an array");
    }

    std::vector<Recording> recordings;
    for (const auto& entry : manifest.at("recordings")) {
        const std::string ew = where + " recording #" + std::to_string(recordings.size());
        Recording r;
        r.viewer_id = get_field<std::string>(entry, "viewer_id", ew);
        r.clip_id = get_field<std::string>(entry, "clip_id", ew);
        const auto file = get_field<std::string>(entry, "file", ew);
        r.clip_span.begin = get_field<Eigen::Index>(entry, "clip_start_frame", ew);
        r.clip_span.end = get_field<Eigen::Index>(entry, "clip_end_frame", ew);
        const double fps = entry.contains("frame_rate") ? get_field<double>(entry, "frame_rate", ew) : frame_rate;
        r.series = read_series(dir / file, channels, fps);
        recordings.push_back(std::move(r));
    }

    std::set<std::string> clip_ids;
    for (const auto& r : recordings) clip_ids.insert(r.clip_id);

    const fs::path tags_path = dir / "tags.csv";
    if (!fs::exists(tags_path)) throw MissingFileError("missing tags table " + tags_path.string());
    const CsvTable tags_table = read_csv(tags_path);
    expect_header(tags_table, std::string("clip_id,") + kScaleHeader, tags_path);
    std::map<std::string, AffectVector> tags;
    for (std::size_t i = 0; i < tags_table.rows.size(); ++i) {
        const auto& row = tags_table.rows[i];
        const std::string rw = tags_path.string() + ":" + std::to_string(tags_table.line_numbers[i]);
        if (!tags.emplace(row[0], parse_affect(row, 1, rw)).second) {
            throw SchemaError(rw + ": duplicate tag for clip '" + row[0] + "'");
        }
    }
    for (const auto& clip : clip_ids) {
        if (!tags.contains(clip)) throw SchemaError(tags_path.string() + ": no tag row for clip '" + clip + "'");
    }

    const fs::path reports_path = dir / "reports.csv";
    if (!fs::exists(reports_path)) throw MissingFileError("missing reports table " + reports_path.string());
    const CsvTable reports_table = read_csv(reports_path);
    expect_header(reports_table, std::string("viewer_id,clip_id,") + kScaleHeader, reports_path);
    std::map<RecordingKey, AffectVector> reports;
    for (std::size_t i = 0; i < reports_table.rows.size(); ++i) {
        const auto& row = reports_table.rows[i];
        const std::string rw = reports_path.string() + ":" + std::to_string(reports_table.line_numbers[i]);
        if (!reports.emplace(RecordingKey{row[0], row[1]}, parse_affect(row, 2, rw)).second) {
            throw SchemaError(rw + ": duplicate report for viewer '" + row[0] + "' clip '" + row[1] + "'");
        }
    }
    for (const auto& r : recordings) {
        if (!reports.contains({r.viewer_id, r.clip_id})) {
            throw SchemaError(reports_path.string() + ": no report row for viewer '" + r.viewer_id +
                              "' clip '" + r.clip_id + "'");
        }
    }

    Corpus corpus(channels, gestures, std::move(recordings), std::move(tags), std::move(reports), discrete);
    const auto violations = validate_corpus(corpus);
    if (!violations.empty()) {
        std::string msg = dir.string() + ": corpus violates " + std::to_string(violations.size()) + " invariant(s)";
        for (const auto& v : violations) msg += "\n  " + v.to_string();
        throw InvariantError(msg);
    }
    return corpus;
}

void save_corpus(const Corpus& corpus, const fs::path& dir) {
    for (const auto& ch : corpus.channels()) check_identifier(ch, "channel id");
    std::error_code ec;
    fs::create_directories(dir / "series", ec);
    if (ec) throw IoError("cannot create " + (dir / "series").string() + ": " + ec.message());

    double frame_rate = 30.0;
    if (!corpus.recordings().empty()) frame_rate = corpus.recordings().front().series.frame_rate;

    json recs = json::array();
    std::size_t index = 0;
    for (const auto& r : corpus.recordings()) {
        check_identifier(r.viewer_id, "viewer id");
        check_identifier(r.clip_id, "clip id");
        char name[32];
        std::snprintf(name, sizeof(name), "series/rec_%05zu.csv", index++);
        json entry = {{"viewer_id", r.viewer_id},
                      {"clip_id", r.clip_id},
                      {"file", name},
                      {"clip_start_frame", r.clip_span.begin},
                      {"clip_end_frame", r.clip_span.end}};
        if (r.series.frame_rate != frame_rate) entry["frame_rate"] = r.series.frame_rate;
        recs.push_back(std::move(entry));

        std::string text;
        for (std::size_t c = 0; c < r.series.channels.size(); ++c) text += (c ? "," : "") + r.series.channels[c];
        text += '\n';
        for (Eigen::Index f = 0; f < r.series.frames(); ++f) {
            for (Eigen::Index c = 0; c < r.series.channel_count(); ++c) {
                if (c) text += ',';
                text += format_double(r.series.values(f, c));
            }
            text += '\n';
        }
        write_text_file(dir / name, text);
    }

    const json manifest = {{"version", kCorpusFormatVersion},
                           {"frame_rate", frame_rate},
                           {"channels", corpus.channels()},
                           {"gestures", gestures_to_json(corpus.gestures())},
                           {"discrete_reports", corpus.discrete_reports()},
                           {"recordings", recs}};
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");

    std::string tags = std::string("clip_id,") + kScaleHeader + "\n";
    for (const auto& [clip, v] : corpus.clip_tags()) {
        check_identifier(clip, "clip id");
        tags += clip + affect_fields(v) + "\n";
    }
    write_text_file(dir / "tags.csv", tags);

    std::string reports = std::string("viewer_id,clip_id,") + kScaleHeader + "\n";
    for (const auto& [key, v] : corpus.reports()) {
        check_identifier(key.first, "viewer id");
        check_identifier(key.second, "clip id");
        reports += key.first + "," + key.second + affect_fields(v) + "\n";
    }
    write_text_file(dir / "reports.csv", reports);
}

}  // namespace facetag
