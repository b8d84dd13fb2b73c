#pragma once

#include "facetag/core.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace facetag {

/// A file the corpus layout requires is absent.
class MissingFileError : public Error {
public:
    using Error::Error;
};

/// A file exists but does not match its schema.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// A numeric field parsed to NaN or infinity.
class NonFiniteValueError : public Error {
public:
    using Error::Error;
};

/// Reading or writing failed at the OS level.
class IoError : public Error {
public:
    using Error::Error;
};

inline constexpr int kCorpusFormatVersion = 1;

/// Corpus directory layout:
///
///   manifest.json   {"version", "frame_rate", "channels": [...],
///                    "gestures": {role: channel}, "discrete_reports",
///                    "recordings": [{"viewer_id", "clip_id", "file",
///                                    "clip_start_frame", "clip_end_frame"}]}
///   tags.csv        clip_id,valence,arousal,likability,rewatch
///   reports.csv     viewer_id,clip_id,valence,arousal,likability,rewatch
///   series/*.csv    header = channel ids, one row per frame
///
/// clip_end_frame is exclusive. A recording entry may carry its own
/// "frame_rate" overriding the corpus one. Numbers are written in shortest
/// round-trip form, so save -> load is bit-exact.
Corpus load_corpus(const std::filesystem::path& dir);
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
/// Whole-field parse; throws SchemaError naming `where` on malformed text.
double parse_double(const std::string& text, const std::string& where);

std::vector<std::string> split_csv_line(const std::string& line);
/// Throws SchemaError if an identifier cannot appear verbatim in a CSV field.
void check_identifier(const std::string& id, const std::string& what);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace facetag
