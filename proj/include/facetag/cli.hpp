#pragma once

#include "facetag/core.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace facetag::cli {

/// Malformed invocation: unknown key, bad value syntax, missing required
/// setting. Maps to exit code 2.
class UsageError : public Error {
public:
    using Error::Error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline constexpr const char* kEnvPrefix = "FACETAG_";

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

struct Setting {
    std::string value;
    std::string source;  // "default", "file", "env" or "cli"
};

/// Effective flat key=value configuration of one command.
class RunConfig {
public:
    const std::string& get(const std::string& key) const;
    const std::string& source(const std::string& key) const;
    bool has_value(const std::string& key) const { return !get(key).empty(); }
    std::string require(const std::string& key) const;  // UsageError if empty

    double get_double(const std::string& key) const;
    long long get_int(const std::string& key) const;
    std::size_t get_count(const std::string& key) const;  // >= 0
    bool get_bool(const std::string& key) const;
    std::vector<std::string> get_list(const std::string& key) const;  // comma separated

    void set(const std::string& key, std::string value, std::string source);
    const std::map<std::string, Setting>& entries() const { return entries_; }

private:
    std::map<std::string, Setting> entries_;
};

/// Known keys and their defaults.
const std::map<std::string, std::string>& config_defaults();

/// Parses a flat config file: `key = value` lines, `#` comments, blank lines.
std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& where);

/// Precedence: command line > environment (FACETAG_<KEY>) > config file > defaults.
/// Throws UsageError on unknown keys.
RunConfig resolve_config(const std::map<std::string, std::string>& cli_values,
                         const std::optional<std::filesystem::path>& config_file, const EnvLookup& env);

void print_config(const RunConfig& config, const std::string& command, std::ostream& out);

int cmd_synth(const RunConfig& config, std::ostream& out);
int cmd_extract(const RunConfig& config, std::ostream& out);
int cmd_train(const RunConfig& config, std::ostream& out);
int cmd_eval(const RunConfig& config, std::ostream& out);
int cmd_ablate(const RunConfig& config, std::ostream& out);
int cmd_hp_report(const RunConfig& config, std::ostream& out);

/// Full entry point; args excludes the program name. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const EnvLookup& env = process_env());

}  // namespace facetag::cli
