#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ctlc::cli {

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Key-value configuration with [section] groups. Precedence, lowest to
/// highest: built-in defaults, config file, CTLC_SECTION_KEY environment
/// variables, --set section.key=value command-line overrides.
class RunConfig {
  public:
    RunConfig() = default;

    void load_file(const std::filesystem::path& path);
    void apply_env();                                 // CTLC_ prefixed variables
    void apply_override(const std::string& setting);  // "section.key=value"

    void set_default(const std::string& key, const std::string& value);

    bool has(const std::string& key) const;  // key = "section.key"
    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // validating getters: throw config_error naming the offending field
    int64_t require_int(const std::string& key) const;
    double require_double(const std::string& key) const;

    std::map<std::string, std::string> entries() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

// exit-code taxonomy shared by every subcommand
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;   // invalid configuration
constexpr int kExitMissing = 3;  // missing input (dataset, checkpoint, ...)
constexpr int kExitNumeric = 4;  // NaN/Inf detected at runtime

int cmd_simulate(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg);
int cmd_plot(const RunConfig& cfg);

}  // namespace ctlc::cli
