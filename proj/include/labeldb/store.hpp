#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "labeldb/geometry.hpp"
#include "labeldb/sqlite.hpp"

namespace labeldb {

namespace fs = std::filesystem;

/// Schema DDL for a fresh database. Third-party SQLite tools can read the
/// resulting file directly.
extern const char* const kSchemaSql;

struct ImageRecord {
    std::string imagefile;
    std::optional<int64_t> width;
    std::optional<int64_t> height;
    std::optional<std::string> maskfile;
    std::optional<std::string> name;
    std::optional<double> score;

    friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct ObjectRecord {
    int64_t objectid = 0;
    std::string imagefile;
    std::optional<Box> box;
    std::optional<std::string> name;
    std::optional<double> score;

    friend bool operator==(const ObjectRecord&, const ObjectRecord&) = default;
};

struct PropertyRecord {
    int64_t id = 0;
    int64_t objectid = 0;
    std::string key;
    std::string value;
};

struct PolygonPoint {
    int64_t id = 0;
    int64_t objectid = 0;
    double x = 0;
    double y = 0;
    std::optional<std::string> name;
};

struct MatchRecord {
    int64_t id = 0;
    int64_t objectid = 0;
    int64_t match = 0;
};

/// One object joined with its image and all rows attached to it.
struct ObjectEntry {
    ObjectRecord object;
    ImageRecord image;
    std::vector<PropertyRecord> properties;
    std::vector<PolygonPoint> polygon;  // ascending id
    std::vector<int64_t> matches;

    [[nodiscard]] std::optional<std::string> property(std::string_view key) const;
};

struct Violation {
    enum class Kind {
        orphan_object,
        orphan_property,
        orphan_polygon,
        orphan_match,
        negative_box,
        partial_box,
        empty_imagefile,
        bad_image_size,
    };
    Kind kind;
    std::string table;
    std::string row;  // primary key of the offending row, as text
    std::string message;
};

enum class SessionMode { ephemeral, read_only, create, copy_on_write };

std::string_view to_string(SessionMode mode);

/// Mode implied by which of the input and output paths are present.
SessionMode session_mode_for(bool has_input, bool has_output);

/// One open annotation database.
///
/// Reads go straight to the input file when there is one. The first mutation
/// copies the contents into memory, so the input file is never written. A
/// commit serializes the current contents to the write path.
class Session {
public:
    static Session open(const std::optional<fs::path>& in_path, const std::optional<fs::path>& out_path);

    /// Shorthand for a fresh ephemeral session.
    static Session in_memory() { return open(std::nullopt, std::nullopt); }

    Session(Session&&) = default;
    Session& operator=(Session&&) = default;

    [[nodiscard]] SessionMode mode() const { return mode_; }
    [[nodiscard]] const std::optional<fs::path>& read_path() const { return read_path_; }
    [[nodiscard]] const std::optional<fs::path>& write_path() const { return write_path_; }
    [[nodiscard]] bool dirty() const;
    [[nodiscard]] bool is_read_only() const { return mode_ == SessionMode::read_only; }

    /// Root directory that imagefile and maskfile values are relative to.
    [[nodiscard]] const fs::path& rootdir() const { return rootdir_; }
    void set_rootdir(fs::path dir) { rootdir_ = std::move(dir); }
    [[nodiscard]] fs::path resolve(std::string_view relative) const { return rootdir_ / fs::path(relative); }
    /// imagefile value for a path on disk: relative to rootdir when possible.
    [[nodiscard]] std::string relative_to_root(const fs::path& path) const;

    void commit();

    /// Connection for read-only access.
    sqlite::Connection& reader() { return conn_; }
    /// Connection for mutation; materializes file-backed contents in memory first.
    sqlite::Connection& writer();

    // ---- queries ----

    [[nodiscard]] std::vector<ImageRecord> images(std::optional<std::string_view> where = std::nullopt);
    [[nodiscard]] std::vector<ObjectEntry> objects(std::optional<std::string_view> where = std::nullopt);
    [[nodiscard]] std::optional<ImageRecord> image(std::string_view imagefile);
    [[nodiscard]] std::optional<ObjectEntry> object(int64_t objectid);
    [[nodiscard]] std::vector<int64_t> match_members(int64_t match);

    [[nodiscard]] int64_t count_images();
    [[nodiscard]] int64_t count_objects();

    [[nodiscard]] std::vector<Violation> validate_integrity();

    // ---- mutation (ids are allocated as max existing + 1) ----

    void add_image(const ImageRecord& image);
    void update_image(const ImageRecord& image);
    int64_t add_object(const ObjectRecord& object);
    void update_object(const ObjectRecord& object);
    int64_t add_property(int64_t objectid, std::string_view key, std::string_view value);
    int64_t add_polygon_point(int64_t objectid, double x, double y, const std::optional<std::string>& name);
    int64_t add_match(int64_t objectid, int64_t match);
    [[nodiscard]] int64_t next_match_value();

    /// Deletes objects satisfying the predicate with their properties, polygons and matches.
    int64_t delete_objects_where(std::string_view where);
    int64_t delete_object(int64_t objectid);
    /// Deletes images satisfying the predicate along with everything attached.
    int64_t delete_images_where(std::string_view where);
    int64_t delete_match(int64_t match);

private:
    Session() = default;

    void materialize();
    sqlite::Statement& cached(const std::string& sql);
    int64_t next_id(const char* table, const char* column);

    SessionMode mode_ = SessionMode::ephemeral;
    std::optional<fs::path> read_path_;
    std::optional<fs::path> write_path_;
    fs::path rootdir_ = ".";
    sqlite::Connection conn_;
    bool materialized_ = true;
    int64_t committed_changes_ = 0;
    bool backed_up_ = false;
    // Declared after conn_ so statements finalize before the connection closes.
    std::map<std::string, sqlite::Statement> statements_;
};

/// Creates the five tables in an empty connection.
void create_schema(sqlite::Connection& conn);

/// Throws when the connection lacks any table or column of the schema.
void check_schema(sqlite::Connection& conn);

/// Every row of every table in a canonical order, for equality checks between databases.
std::vector<std::vector<std::string>> dump_tables(sqlite::Connection& conn);

}  // namespace labeldb
