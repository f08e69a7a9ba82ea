#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "labeldb/store.hpp"

namespace labeldb::cli {

namespace fs = std::filesystem;

enum class ArgKind { flag, text, integer, real, text_list, integer_list, real_list };

struct ArgSpec {
    std::string name;  // without leading dashes
    ArgKind kind = ArgKind::text;
    std::string help;
    bool required = false;
    bool positional = false;
    std::optional<std::string> default_value;
    std::vector<std::string> choices;
};

/// Argument values of one invocation, stored as text and converted on access.
class ParsedArgs {
public:
    ParsedArgs() = default;
    explicit ParsedArgs(std::ostream& out) : out_(&out) {}

    void set(const std::string& name, std::vector<std::string> values) { values_[name] = std::move(values); }
    [[nodiscard]] bool has(std::string_view name) const;

    [[nodiscard]] std::string text(std::string_view name) const;
    [[nodiscard]] std::optional<std::string> opt_text(std::string_view name) const;
    [[nodiscard]] int64_t integer(std::string_view name) const;
    [[nodiscard]] std::optional<int64_t> opt_integer(std::string_view name) const;
    [[nodiscard]] double real(std::string_view name) const;
    [[nodiscard]] bool flag(std::string_view name) const;
    [[nodiscard]] std::vector<std::string> texts(std::string_view name) const;
    [[nodiscard]] std::vector<int64_t> integers(std::string_view name) const;
    [[nodiscard]] std::vector<double> reals(std::string_view name) const;

    /// Where the op writes its data output.
    [[nodiscard]] std::ostream& out() const;
    void set_out(std::ostream& out) { out_ = &out; }

private:
    [[nodiscard]] const std::vector<std::string>* find(std::string_view name) const;

    std::map<std::string, std::vector<std::string>, std::less<>> values_;
    std::ostream* out_ = nullptr;
};

using Handler = std::function<void(Session&, const ParsedArgs&)>;

struct OpSpec {
    std::string name;
    std::string description;
    std::vector<ArgSpec> args;
    Handler handler;
};

class Registry {
public:
    /// Throws Error when the name is already taken.
    void add(OpSpec spec);
    [[nodiscard]] const OpSpec* find(std::string_view name) const;
    /// Sorted names.
    [[nodiscard]] std::vector<std::string> names() const;

private:
    std::map<std::string, OpSpec, std::less<>> ops_;
};

/// Registers every built-in sub-command.
void register_builtin_ops(Registry& registry);

/// Registry with the built-in sub-commands.
Registry& default_registry();

struct GlobalArgs {
    std::optional<fs::path> in_db_file;
    std::optional<fs::path> out_db_file;
    std::optional<fs::path> relpath;
    int logging = 20;
};

struct OpInvocation {
    std::string name;
    ParsedArgs args;
};

struct Pipeline {
    GlobalArgs globals;
    std::vector<OpInvocation> invocations;
    /// Set when -h was requested; the pipeline is not run.
    std::optional<std::string> help;
};

/// Splits tokens into segments at the exact token "|".
std::vector<std::vector<std::string>> split_segments(const std::vector<std::string>& tokens);

/// Parses the arguments after the program name. Throws UsageError.
Pipeline parse_command_line(const Registry& registry, const std::vector<std::string>& argv);

std::string top_level_help(const Registry& registry);
std::string op_help(const OpSpec& spec);

/// Runs every invocation against one session, then commits when an output path is set.
/// Returns 0 on success and 1 when an op fails.
int run_pipeline(const Registry& registry, Pipeline& pipeline, std::ostream& out, std::ostream& err);

/// Parse and run; returns the process exit code (0 ok, 1 op error, 2 usage error).
int main(const Registry& registry, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

/// Maps the numeric logging scheme (10, 20, 30, 40) to spdlog levels on a stderr logger.
void configure_logging(int level);

}  // namespace labeldb::cli
