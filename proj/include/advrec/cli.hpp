#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace advrec {

/// Exit codes of the command-line tool.
enum ExitCode : int { exit_ok = 0, exit_internal = 1, exit_config = 2, exit_numerical = 3, exit_io = 4 };

/// Flat "section.key" settings with declared defaults. Values from an INI
/// file are applied first, then --set overrides, then dedicated flags.
class Settings {
public:
    void declare(const std::string& key, const std::string& default_value);
    /// Any key under "section." is accepted (e.g. named attack files).
    void declare_open_section(const std::string& section);

    void load_ini(const std::string& path);
    /// "section.key=value".
    void apply_assignment(const std::string& assignment);
    void set(const std::string& key, const std::string& value);

    const std::string& str(const std::string& key) const;
    double real(const std::string& key) const;
    std::size_t count(const std::string& key) const;
    std::uint64_t u64(const std::string& key) const;
    bool flag(const std::string& key) const;
    /// Comma-separated list; empty string gives an empty list.
    std::vector<std::string> list(const std::string& key) const;
    /// Keys of an open section, in sorted order, without the section prefix.
    std::vector<std::pair<std::string, std::string>> section(const std::string& name) const;

    /// All resolved values, sorted by key.
    nlohmann::ordered_json echo() const;

private:
    bool known(const std::string& key) const;

    std::map<std::string, std::string> values_;
    std::vector<std::string> open_sections_;
};

/// Runs the tool on argv-style arguments (without the program name) and
/// returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace advrec
