#include "labeldb/cli.hpp"

#include "labeldb/error.hpp"

#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"

#include <algorithm>
#include <charconv>
#include <iostream>

namespace labeldb::cli {

namespace {

constexpr const char* kProgram = "labeldb";

std::string_view kind_metavar(ArgKind kind)
{
    switch (kind) {
    case ArgKind::flag:
        return "";
    case ArgKind::text:
        return "TEXT";
    case ArgKind::integer:
        return "INT";
    case ArgKind::real:
        return "REAL";
    case ArgKind::text_list:
        return "TEXT ...";
    case ArgKind::integer_list:
        return "INT ...";
    case ArgKind::real_list:
        return "REAL ...";
    }
    return "";
}

bool is_list(ArgKind kind)
{
    return kind == ArgKind::text_list || kind == ArgKind::integer_list || kind == ArgKind::real_list;
}

std::optional<double> to_real(const std::string& text)
{
    try {
        size_t used = 0;
        double value = std::stod(text, &used);
        if (used == text.size()) {
            return value;
        }
    } catch (const std::exception&) {
    }
    return std::nullopt;
}

std::optional<int64_t> to_integer(const std::string& text)
{
    int64_t value = 0;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end || text.empty()) {
        return std::nullopt;
    }
    return value;
}

std::string arg_synopsis(const ArgSpec& arg)
{
    std::string body;
    if (arg.positional) {
        body = arg.name;
    } else if (arg.kind == ArgKind::flag) {
        body = "--" + arg.name;
    } else {
        body = fmt::format("--{} {}", arg.name, kind_metavar(arg.kind));
    }
    return arg.required ? body : "[" + body + "]";
}

// "-i=x" is accepted as "-i x" since single-dash options otherwise take the rest of the token.
std::vector<std::string> normalize_globals(const std::vector<std::string>& argv)
{
    std::vector<std::string> out;
    for (size_t i = 0; i < argv.size(); ++i) {
        const auto& token = argv[i];
        if (token.size() > 3 && (token.rfind("-i=", 0) == 0 || token.rfind("-o=", 0) == 0)) {
            out.push_back(token.substr(0, 2));
            out.push_back(token.substr(3));
        } else {
            out.push_back(token);
        }
    }
    return out;
}

void parse_app(CLI::App& app, std::vector<std::string> tokens)
{
    std::reverse(tokens.begin(), tokens.end());
    app.parse(tokens);
}

ParsedArgs parse_segment(const OpSpec& spec, const std::vector<std::string>& tokens)
{
    CLI::App app(spec.description, spec.name);
    app.set_help_flag("-h,--help");
    std::map<std::string, std::vector<std::string>> values;
    std::map<std::string, bool> flags;

    for (const auto& arg : spec.args) {
        if (arg.kind == ArgKind::flag) {
            app.add_flag("--" + arg.name, flags[arg.name]);
            continue;
        }
        auto* option = app.add_option(arg.positional ? arg.name : "--" + arg.name, values[arg.name]);
        if (is_list(arg.kind)) {
            option->expected(1, CLI::detail::expected_max_vector_size)->delimiter(',');
        } else {
            option->expected(1)->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        }
        if (arg.required) {
            option->required();
        }
        if (!arg.choices.empty()) {
            option->check(CLI::IsMember(arg.choices));
        }
    }

    try {
        parse_app(app, tokens);
    } catch (const CLI::CallForHelp&) {
        throw;
    } catch (const CLI::ParseError& e) {
        throw UsageError(fmt::format("{}: {}\n\n{}", spec.name, e.what(), op_help(spec)));
    }

    ParsedArgs parsed;
    for (const auto& arg : spec.args) {
        if (arg.kind == ArgKind::flag) {
            if (flags[arg.name]) {
                parsed.set(arg.name, {"1"});
            }
            continue;
        }
        auto given = values[arg.name];
        if (given.empty()) {
            if (arg.default_value) {
                parsed.set(arg.name, {*arg.default_value});
            }
            continue;
        }
        for (const auto& value : given) {
            const bool numeric_ok = (arg.kind == ArgKind::real || arg.kind == ArgKind::real_list)
                                        ? to_real(value).has_value()
                                    : (arg.kind == ArgKind::integer || arg.kind == ArgKind::integer_list)
                                        ? to_integer(value).has_value()
                                        : true;
            if (!numeric_ok) {
                throw UsageError(fmt::format("{}: --{} expects {}, got '{}'\n\n{}", spec.name, arg.name,
                                             kind_metavar(arg.kind), value, op_help(spec)));
            }
        }
        parsed.set(arg.name, std::move(given));
    }
    return parsed;
}

}  // namespace

bool ParsedArgs::has(std::string_view name) const
{
    return find(name) != nullptr;
}

const std::vector<std::string>* ParsedArgs::find(std::string_view name) const
{
    auto it = values_.find(name);
    return it == values_.end() || it->second.empty() ? nullptr : &it->second;
}

std::string ParsedArgs::text(std::string_view name) const
{
    auto value = opt_text(name);
    if (!value) {
        throw UsageError(fmt::format("missing argument --{}", name));
    }
    return *value;
}

std::optional<std::string> ParsedArgs::opt_text(std::string_view name) const
{
    const auto* values = find(name);
    if (values == nullptr) {
        return std::nullopt;
    }
    return values->back();
}

int64_t ParsedArgs::integer(std::string_view name) const
{
    auto value = opt_integer(name);
    if (!value) {
        throw UsageError(fmt::format("missing argument --{}", name));
    }
    return *value;
}

std::optional<int64_t> ParsedArgs::opt_integer(std::string_view name) const
{
    auto value = opt_text(name);
    if (!value) {
        return std::nullopt;
    }
    auto parsed = to_integer(*value);
    if (!parsed) {
        throw UsageError(fmt::format("--{} expects an integer, got '{}'", name, *value));
    }
    return parsed;
}

double ParsedArgs::real(std::string_view name) const
{
    auto value = text(name);
    auto parsed = to_real(value);
    if (!parsed) {
        throw UsageError(fmt::format("--{} expects a number, got '{}'", name, value));
    }
    return *parsed;
}

bool ParsedArgs::flag(std::string_view name) const
{
    return has(name);
}

std::vector<std::string> ParsedArgs::texts(std::string_view name) const
{
    const auto* values = find(name);
    return values == nullptr ? std::vector<std::string>{} : *values;
}

std::vector<int64_t> ParsedArgs::integers(std::string_view name) const
{
    std::vector<int64_t> out;
    for (const auto& value : texts(name)) {
        auto parsed = to_integer(value);
        if (!parsed) {
            throw UsageError(fmt::format("--{} expects integers, got '{}'", name, value));
        }
        out.push_back(*parsed);
    }
    return out;
}

std::vector<double> ParsedArgs::reals(std::string_view name) const
{
    std::vector<double> out;
    for (const auto& value : texts(name)) {
        auto parsed = to_real(value);
        if (!parsed) {
            throw UsageError(fmt::format("--{} expects numbers, got '{}'", name, value));
        }
        out.push_back(*parsed);
    }
    return out;
}

std::ostream& ParsedArgs::out() const
{
    return out_ != nullptr ? *out_ : std::cout;
}

void Registry::add(OpSpec spec)
{
    if (spec.name.empty() || !spec.handler) {
        throw Error("a sub-command needs a name and a handler");
    }
    if (ops_.count(spec.name)) {
        throw Error(fmt::format("sub-command '{}' is already registered", spec.name));
    }
    auto name = spec.name;
    ops_.emplace(std::move(name), std::move(spec));
}

const OpSpec* Registry::find(std::string_view name) const
{
    auto it = ops_.find(name);
    return it == ops_.end() ? nullptr : &it->second;
}

std::vector<std::string> Registry::names() const
{
    std::vector<std::string> out;
    for (const auto& [name, spec] : ops_) {
        out.push_back(name);
    }
    return out;
}

Registry& default_registry()
{
    static Registry registry = [] {
        Registry r;
        register_builtin_ops(r);
        return r;
    }();
    return registry;
}

std::vector<std::vector<std::string>> split_segments(const std::vector<std::string>& tokens)
{
    std::vector<std::vector<std::string>> segments(1);
    for (const auto& token : tokens) {
        if (token == "|") {
            segments.emplace_back();
        } else {
            segments.back().push_back(token);
        }
    }
    return segments;
}

std::string top_level_help(const Registry& registry)
{
    std::string out = fmt::format(
        "usage: {} [-i IN_DB_FILE] [-o OUT_DB_FILE] [--relpath RELPATH] [--logging {{10,20,30,40}}] [-h]\n"
        "       sub-command [args] [\"|\" sub-command [args] ...]\n"
        "\n"
        "Manage an image annotation database. Sub-commands run in order against one session;\n"
        "separate them with a standalone \"|\" token.\n"
        "\n"
        "global arguments:\n"
        "  -i IN_DB_FILE           database to open (omit to start empty)\n"
        "  -o OUT_DB_FILE          database to commit to (omit to discard changes)\n"
        "  --relpath RELPATH       directory that imagefile and maskfile values are relative to\n"
        "  --logging {{10,20,30,40}} verbosity: 10 debug, 20 info, 30 warning, 40 error\n"
        "  -h, --help              show this help and exit\n"
        "\n"
        "sub-commands:\n",
        kProgram);
    size_t width = 0;
    for (const auto& name : registry.names()) {
        width = std::max(width, name.size());
    }
    for (const auto& name : registry.names()) {
        out += fmt::format("  {:<{}}  {}\n", name, width, registry.find(name)->description);
    }
    out += fmt::format("\nRun \"{} <sub-command> -h\" for the arguments of a sub-command.\n", kProgram);
    return out;
}

std::string op_help(const OpSpec& spec)
{
    std::string usage = fmt::format("usage: {} {} [-h]", kProgram, spec.name);
    for (const auto& arg : spec.args) {
        usage += " " + arg_synopsis(arg);
    }
    std::string out = usage + "\n\n" + spec.description + "\n\narguments:\n";
    out += "  -h, --help\n      show this help and exit\n";
    for (const auto& arg : spec.args) {
        std::string head = arg.positional ? arg.name : "--" + arg.name;
        if (arg.kind != ArgKind::flag) {
            head += fmt::format(" {}", kind_metavar(arg.kind));
        }
        std::vector<std::string> notes;
        if (arg.required) {
            notes.push_back("required");
        }
        if (arg.default_value) {
            notes.push_back("default: " + *arg.default_value);
        }
        if (!arg.choices.empty()) {
            notes.push_back(fmt::format("choices: {}", fmt::join(arg.choices, ", ")));
        }
        std::string help = arg.help;
        if (!notes.empty()) {
            help += fmt::format(" ({})", fmt::join(notes, "; "));
        }
        out += fmt::format("  {}\n      {}\n", head, help);
    }
    return out;
}

Pipeline parse_command_line(const Registry& registry, const std::vector<std::string>& argv)
{
    Pipeline pipeline;
    CLI::App app("", kProgram);
    app.prefix_command();
    app.set_help_flag();
    bool help = false;
    std::string in_db;
    std::string out_db;
    std::string relpath;
    app.add_flag("-h,--help", help);
    app.add_option("-i,--in_db_file", in_db);
    app.add_option("-o,--out_db_file", out_db);
    app.add_option("--relpath,--rootdir", relpath);
    app.add_option("--logging", pipeline.globals.logging)->check(CLI::IsMember({10, 20, 30, 40}));

    try {
        parse_app(app, normalize_globals(argv));
    } catch (const CLI::ParseError& e) {
        throw UsageError(fmt::format("{}\n\n{}", e.what(), top_level_help(registry)));
    }
    if (!in_db.empty()) {
        pipeline.globals.in_db_file = in_db;
    }
    if (!out_db.empty()) {
        pipeline.globals.out_db_file = out_db;
    }
    if (!relpath.empty()) {
        pipeline.globals.relpath = relpath;
    }

    auto rest = app.remaining();
    if (help) {
        pipeline.help = top_level_help(registry);
        return pipeline;
    }
    if (rest.empty()) {
        throw UsageError(fmt::format("no sub-command given\n\n{}", top_level_help(registry)));
    }

    for (auto& segment : split_segments(rest)) {
        if (segment.empty()) {
            throw UsageError("empty sub-command between \"|\" separators");
        }
        const OpSpec* spec = registry.find(segment.front());
        if (spec == nullptr) {
            throw UsageError(fmt::format("unknown sub-command '{}'; available: {}", segment.front(),
                                         fmt::join(registry.names(), ", ")));
        }
        std::vector<std::string> tokens(segment.begin() + 1, segment.end());
        try {
            pipeline.invocations.push_back({spec->name, parse_segment(*spec, tokens)});
        } catch (const CLI::CallForHelp&) {
            pipeline.help = op_help(*spec);
            pipeline.invocations.clear();
            return pipeline;
        }
    }
    return pipeline;
}

void configure_logging(int level)
{
    static auto logger = [] {
        auto l = std::make_shared<spdlog::logger>("labeldb", std::make_shared<spdlog::sinks::stderr_sink_mt>());
        l->set_pattern("%L %v");
        spdlog::set_default_logger(l);
        return l;
    }();
    spdlog::level::level_enum mapped = spdlog::level::info;
    switch (level) {
    case 10:
        mapped = spdlog::level::debug;
        break;
    case 30:
        mapped = spdlog::level::warn;
        break;
    case 40:
        mapped = spdlog::level::err;
        break;
    default:
        break;
    }
    logger->set_level(mapped);
}

int run_pipeline(const Registry& registry, Pipeline& pipeline, std::ostream& out, std::ostream& err)
{
    configure_logging(pipeline.globals.logging);
    std::optional<Session> session;
    try {
        session.emplace(Session::open(pipeline.globals.in_db_file, pipeline.globals.out_db_file));
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    if (pipeline.globals.relpath) {
        session->set_rootdir(*pipeline.globals.relpath);
    }
    for (auto& invocation : pipeline.invocations) {
        const OpSpec* spec = registry.find(invocation.name);
        invocation.args.set_out(out);
        spdlog::debug("running {}", invocation.name);
        try {
            spec->handler(*session, invocation.args);
        } catch (const std::exception& e) {
            err << "error in " << invocation.name << ": " << e.what() << "\n";
            return 1;
        }
    }
    out.flush();
    if (pipeline.globals.out_db_file) {
        try {
            session->commit();
        } catch (const std::exception& e) {
            err << "error: commit failed: " << e.what() << "\n";
            return 1;
        }
    }
    return 0;
}

int main(const Registry& registry, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err)
{
    Pipeline pipeline;
    try {
        pipeline = parse_command_line(registry, argv);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    if (pipeline.help) {
        out << *pipeline.help;
        return 0;
    }
    return run_pipeline(registry, pipeline, out, err);
}

}  // namespace labeldb::cli
