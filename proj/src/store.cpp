#include "labeldb/store.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <map>
#include <system_error>
#include <unistd.h>

namespace labeldb {

const char* const kSchemaSql = R"sql(CREATE TABLE images (
  imagefile TEXT PRIMARY KEY,
  width INTEGER,
  height INTEGER,
  maskfile TEXT,
  name TEXT,
  score REAL
);
CREATE TABLE objects (
  objectid INTEGER PRIMARY KEY,
  imagefile TEXT REFERENCES images(imagefile),
  x REAL,
  y REAL,
  width REAL,
  height REAL,
  name TEXT,
  score REAL
);
CREATE TABLE properties (
  id INTEGER PRIMARY KEY,
  objectid INTEGER REFERENCES objects(objectid),
  key TEXT,
  value TEXT
);
CREATE TABLE polygons (
  id INTEGER PRIMARY KEY,
  objectid INTEGER REFERENCES objects(objectid),
  x REAL,
  y REAL,
  name TEXT
);
CREATE TABLE matches (
  id INTEGER PRIMARY KEY,
  objectid INTEGER REFERENCES objects(objectid),
  match INTEGER
);
CREATE INDEX objects_imagefile ON objects(imagefile);
CREATE INDEX properties_objectid ON properties(objectid);
CREATE INDEX properties_key ON properties(key);
CREATE INDEX polygons_objectid ON polygons(objectid);
CREATE INDEX matches_objectid ON matches(objectid);
CREATE INDEX matches_match ON matches(match);
)sql";

namespace {

struct TableColumns {
    const char* table;
    std::vector<const char*> columns;
};

const std::array<TableColumns, 5> kRequiredColumns = {{
    {"images", {"imagefile", "width", "height", "maskfile", "name", "score"}},
    {"objects", {"objectid", "imagefile", "x", "y", "width", "height", "name", "score"}},
    {"properties", {"id", "objectid", "key", "value"}},
    {"polygons", {"id", "objectid", "x", "y", "name"}},
    {"matches", {"id", "objectid", "match"}},
}};

std::string where_clause(std::optional<std::string_view> where)
{
    if (!where || where->empty()) {
        return {};
    }
    return fmt::format(" WHERE ({})", *where);
}

ImageRecord read_image_row(const sqlite::Statement& stmt, int col = 0)
{
    ImageRecord image;
    image.imagefile = stmt.column_text(col);
    image.width = stmt.column_opt_int(col + 1);
    image.height = stmt.column_opt_int(col + 2);
    image.maskfile = stmt.column_opt_text(col + 3);
    image.name = stmt.column_opt_text(col + 4);
    image.score = stmt.column_opt_double(col + 5);
    return image;
}

constexpr const char* kImageColumns = "imagefile, width, height, maskfile, name, score";
constexpr const char* kObjectColumns = "objectid, imagefile, x, y, width, height, name, score";

ObjectRecord read_object_row(const sqlite::Statement& stmt)
{
    ObjectRecord object;
    object.objectid = stmt.column_int(0);
    object.imagefile = stmt.column_text(1);
    if (!stmt.is_null(2) && !stmt.is_null(3) && !stmt.is_null(4) && !stmt.is_null(5)) {
        object.box = Box{stmt.column_double(2), stmt.column_double(3), stmt.column_double(4), stmt.column_double(5)};
    }
    object.name = stmt.column_opt_text(6);
    object.score = stmt.column_opt_double(7);
    return object;
}

void bind_object(sqlite::Statement& stmt, const ObjectRecord& object)
{
    stmt.bind(1, object.objectid).bind(2, object.imagefile);
    if (object.box) {
        stmt.bind(3, object.box->x).bind(4, object.box->y).bind(5, object.box->width).bind(6, object.box->height);
    } else {
        stmt.bind_null(3).bind_null(4).bind_null(5).bind_null(6);
    }
    stmt.bind(7, object.name).bind(8, object.score);
}

// Attaches properties, polygons and matches of the objects selected by `subquery`.
void attach_children(sqlite::Connection& conn, std::vector<ObjectEntry>& entries, const std::string& subquery)
{
    std::map<int64_t, size_t> index;
    for (size_t i = 0; i < entries.size(); ++i) {
        index.emplace(entries[i].object.objectid, i);
    }
    {
        auto stmt = conn.prepare(fmt::format(
            "SELECT id, objectid, key, value FROM properties WHERE objectid IN ({}) ORDER BY id", subquery));
        while (stmt.step()) {
            auto it = index.find(stmt.column_int(1));
            if (it != index.end()) {
                entries[it->second].properties.push_back(
                    {stmt.column_int(0), stmt.column_int(1), stmt.column_text(2), stmt.column_text(3)});
            }
        }
    }
    {
        auto stmt = conn.prepare(fmt::format(
            "SELECT id, objectid, x, y, name FROM polygons WHERE objectid IN ({}) ORDER BY id", subquery));
        while (stmt.step()) {
            auto it = index.find(stmt.column_int(1));
            if (it != index.end()) {
                entries[it->second].polygon.push_back({stmt.column_int(0), stmt.column_int(1), stmt.column_double(2),
                                                       stmt.column_double(3), stmt.column_opt_text(4)});
            }
        }
    }
    {
        auto stmt = conn.prepare(
            fmt::format("SELECT objectid, match FROM matches WHERE objectid IN ({}) ORDER BY id", subquery));
        while (stmt.step()) {
            auto it = index.find(stmt.column_int(0));
            if (it != index.end()) {
                entries[it->second].matches.push_back(stmt.column_int(1));
            }
        }
    }
    std::map<std::string, ImageRecord> images;
    {
        auto stmt = conn.prepare(fmt::format(
            "SELECT {} FROM images WHERE imagefile IN (SELECT imagefile FROM objects WHERE objectid IN ({}))",
            kImageColumns, subquery));
        while (stmt.step()) {
            auto image = read_image_row(stmt);
            images.emplace(image.imagefile, std::move(image));
        }
    }
    for (auto& entry : entries) {
        auto it = images.find(entry.object.imagefile);
        if (it != images.end()) {
            entry.image = it->second;
        } else {
            entry.image.imagefile = entry.object.imagefile;
        }
    }
}

}  // namespace

std::optional<std::string> ObjectEntry::property(std::string_view key) const
{
    for (const auto& p : properties) {
        if (p.key == key) {
            return p.value;
        }
    }
    return std::nullopt;
}

std::string_view to_string(SessionMode mode)
{
    switch (mode) {
    case SessionMode::ephemeral:
        return "ephemeral";
    case SessionMode::read_only:
        return "read-only";
    case SessionMode::create:
        return "create";
    case SessionMode::copy_on_write:
        return "copy-on-write";
    }
    return "unknown";
}

SessionMode session_mode_for(bool has_input, bool has_output)
{
    if (has_input) {
        return has_output ? SessionMode::copy_on_write : SessionMode::read_only;
    }
    return has_output ? SessionMode::create : SessionMode::ephemeral;
}

void create_schema(sqlite::Connection& conn)
{
    conn.exec(kSchemaSql);
}

void check_schema(sqlite::Connection& conn)
{
    for (const auto& [table, columns] : kRequiredColumns) {
        auto stmt = conn.prepare(fmt::format("PRAGMA table_info({})", table));
        std::vector<std::string> present;
        while (stmt.step()) {
            present.push_back(stmt.column_text(1));
        }
        if (present.empty()) {
            throw Error(fmt::format("not an annotation database: table '{}' is missing", table));
        }
        for (const char* column : columns) {
            if (std::find(present.begin(), present.end(), column) == present.end()) {
                throw Error(fmt::format("not an annotation database: column '{}.{}' is missing", table, column));
            }
        }
    }
}

std::vector<std::vector<std::string>> dump_tables(sqlite::Connection& conn)
{
    std::vector<std::vector<std::string>> rows;
    for (const auto& [table, columns] : kRequiredColumns) {
        std::string select = fmt::format("SELECT quote({})", fmt::join(columns, "), quote("));
        auto stmt = conn.prepare(fmt::format("{} FROM {} ORDER BY {}", select, table, columns.front()));
        while (stmt.step()) {
            std::vector<std::string> row{table};
            for (int i = 0; i < stmt.column_count(); ++i) {
                row.push_back(stmt.column_text(i));
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

Session Session::open(const std::optional<fs::path>& in_path, const std::optional<fs::path>& out_path)
{
    Session session;
    session.mode_ = session_mode_for(in_path.has_value(), out_path.has_value());
    session.read_path_ = in_path;
    session.write_path_ = out_path;

    if (in_path) {
        std::error_code ec;
        if (!fs::is_regular_file(*in_path, ec)) {
            throw NotFoundError(fmt::format("input database '{}' does not exist", in_path->string()));
        }
        session.conn_ = sqlite::Connection(in_path->string(), sqlite::Connection::OpenMode::read_only);
        check_schema(session.conn_);
        session.materialized_ = false;
        if (out_path) {
            spdlog::info("will copy database from {} to {}.", in_path->string(), out_path->string());
        } else {
            spdlog::info("will load from {}, will not commit.", in_path->string());
        }
    } else {
        session.conn_ = sqlite::Connection::in_memory();
        create_schema(session.conn_);
        if (out_path) {
            spdlog::info("will create database at {}", out_path->string());
        } else {
            spdlog::info("will create a temporary database in memory.");
        }
    }

    if (out_path) {
        fs::path dir = out_path->parent_path().empty() ? fs::path(".") : out_path->parent_path();
        if (::access(dir.c_str(), W_OK) != 0) {
            throw Error(fmt::format("output directory '{}' is not writable", dir.string()));
        }
    }
    session.committed_changes_ = session.conn_.total_changes();
    return session;
}

bool Session::dirty() const
{
    return materialized_ && conn_.total_changes() != committed_changes_;
}

std::string Session::relative_to_root(const fs::path& path) const
{
    std::error_code ec;
    fs::path abs_path = fs::absolute(path, ec);
    fs::path abs_root = fs::absolute(rootdir_, ec);
    fs::path rel = abs_path.lexically_normal().lexically_proximate(abs_root.lexically_normal());
    return rel.generic_string();
}

sqlite::Connection& Session::writer()
{
    if (!materialized_) {
        materialize();
    }
    return conn_;
}

sqlite::Statement& Session::cached(const std::string& sql)
{
    auto it = statements_.find(sql);
    if (it == statements_.end()) {
        it = statements_.emplace(sql, conn_.prepare(sql)).first;
    }
    return it->second;
}

int64_t Session::next_id(const char* table, const char* column)
{
    auto& stmt = cached(fmt::format("SELECT MAX({}) FROM {}", column, table));
    std::optional<int64_t> max;
    if (stmt.step()) {
        max = stmt.column_opt_int(0);
    }
    stmt.reset();
    return max.value_or(0) + 1;
}

void Session::materialize()
{
    statements_.clear();
    auto memory = sqlite::Connection::in_memory();
    conn_.backup_to(memory);
    conn_ = std::move(memory);
    materialized_ = true;
    committed_changes_ = conn_.total_changes();
}

void Session::commit()
{
    switch (mode_) {
    case SessionMode::read_only:
        throw ReadOnlyError("cannot commit a read-only session");
    case SessionMode::ephemeral:
        committed_changes_ = conn_.total_changes();
        return;
    case SessionMode::create:
    case SessionMode::copy_on_write:
        break;
    }
    fs::path tmp = *write_path_;
    tmp += ".tmp";
    {
        std::error_code ec;
        fs::remove(tmp, ec);
        sqlite::Connection dest(tmp.string(), sqlite::Connection::OpenMode::read_write_create);
        conn_.backup_to(dest);
    }
    // The previous output survives as a backup until it is replaced.
    std::error_code ec;
    if (!backed_up_ && fs::exists(*write_path_, ec)) {
        fs::path backup = *write_path_;
        backup += ".backup";
        fs::copy_file(*write_path_, backup, fs::copy_options::overwrite_existing);
        spdlog::info("backed up existing {} to {}", write_path_->string(), backup.string());
    }
    backed_up_ = true;
    fs::rename(tmp, *write_path_);
    committed_changes_ = conn_.total_changes();
    spdlog::info("Committed.");
}

std::vector<ImageRecord> Session::images(std::optional<std::string_view> where)
{
    auto stmt =
        conn_.prepare(fmt::format("SELECT {} FROM images{} ORDER BY imagefile", kImageColumns, where_clause(where)));
    std::vector<ImageRecord> result;
    while (stmt.step()) {
        result.push_back(read_image_row(stmt));
    }
    return result;
}

std::vector<ObjectEntry> Session::objects(std::optional<std::string_view> where)
{
    std::string clause = where_clause(where);
    std::vector<ObjectEntry> entries;
    {
        auto stmt = conn_.prepare(fmt::format("SELECT {} FROM objects{} ORDER BY objectid", kObjectColumns, clause));
        while (stmt.step()) {
            entries.push_back(ObjectEntry{read_object_row(stmt), {}, {}, {}, {}});
        }
    }
    if (!entries.empty()) {
        attach_children(conn_, entries, fmt::format("SELECT objectid FROM objects{}", clause));
    }
    return entries;
}

std::optional<ImageRecord> Session::image(std::string_view imagefile)
{
    auto stmt = conn_.prepare(fmt::format("SELECT {} FROM images WHERE imagefile = ?", kImageColumns));
    stmt.bind(1, imagefile);
    if (!stmt.step()) {
        return std::nullopt;
    }
    return read_image_row(stmt);
}

std::optional<ObjectEntry> Session::object(int64_t objectid)
{
    auto entries = objects(fmt::format("objectid = {}", objectid));
    if (entries.empty()) {
        return std::nullopt;
    }
    return std::move(entries.front());
}

std::vector<int64_t> Session::match_members(int64_t match)
{
    auto stmt = conn_.prepare("SELECT objectid FROM matches WHERE match = ? ORDER BY id");
    stmt.bind(1, match);
    std::vector<int64_t> result;
    while (stmt.step()) {
        result.push_back(stmt.column_int(0));
    }
    return result;
}

int64_t Session::count_images()
{
    return conn_.query_int("SELECT COUNT(*) FROM images").value_or(0);
}

int64_t Session::count_objects()
{
    return conn_.query_int("SELECT COUNT(*) FROM objects").value_or(0);
}

std::vector<Violation> Session::validate_integrity()
{
    using Kind = Violation::Kind;
    struct Check {
        Kind kind;
        const char* table;
        const char* sql;
        const char* message;
    };
    static const Check checks[] = {
        {Kind::empty_imagefile, "images", "SELECT quote(imagefile) FROM images WHERE imagefile IS NULL OR imagefile = ''",
         "empty imagefile"},
        {Kind::bad_image_size, "images",
         "SELECT imagefile FROM images WHERE (width IS NOT NULL AND width <= 0) OR (height IS NOT NULL AND height <= 0)",
         "non-positive image dimensions"},
        {Kind::orphan_object, "objects",
         "SELECT objectid FROM objects WHERE imagefile IS NULL OR imagefile NOT IN (SELECT imagefile FROM images)",
         "object refers to a missing image"},
        {Kind::negative_box, "objects", "SELECT objectid FROM objects WHERE width < 0 OR height < 0",
         "negative box dimensions"},
        {Kind::partial_box, "objects",
         "SELECT objectid FROM objects WHERE (x IS NULL) + (y IS NULL) + (width IS NULL) + (height IS NULL) NOT IN (0, 4)",
         "box fields partially present"},
        {Kind::orphan_property, "properties",
         "SELECT id FROM properties WHERE objectid IS NULL OR objectid NOT IN (SELECT objectid FROM objects)",
         "property refers to a missing object"},
        {Kind::orphan_polygon, "polygons",
         "SELECT id FROM polygons WHERE objectid IS NULL OR objectid NOT IN (SELECT objectid FROM objects)",
         "polygon point refers to a missing object"},
        {Kind::orphan_match, "matches",
         "SELECT id FROM matches WHERE objectid IS NULL OR objectid NOT IN (SELECT objectid FROM objects)",
         "match refers to a missing object"},
    };
    std::vector<Violation> violations;
    for (const auto& check : checks) {
        auto stmt = conn_.prepare(check.sql);
        while (stmt.step()) {
            violations.push_back({check.kind, check.table, stmt.column_text(0), check.message});
        }
    }
    return violations;
}

void Session::add_image(const ImageRecord& image)
{
    if (image.imagefile.empty()) {
        throw Error("imagefile must not be empty");
    }
    writer();
    auto& stmt = cached("INSERT INTO images (imagefile, width, height, maskfile, name, score) VALUES (?, ?, ?, ?, ?, ?)");
    stmt.bind(1, image.imagefile)
        .bind(2, image.width)
        .bind(3, image.height)
        .bind(4, image.maskfile)
        .bind(5, image.name)
        .bind(6, image.score);
    stmt.run();
}

void Session::update_image(const ImageRecord& image)
{
    auto stmt = writer().prepare(
        "UPDATE images SET width = ?, height = ?, maskfile = ?, name = ?, score = ? WHERE imagefile = ?");
    stmt.bind(1, image.width)
        .bind(2, image.height)
        .bind(3, image.maskfile)
        .bind(4, image.name)
        .bind(5, image.score)
        .bind(6, image.imagefile);
    stmt.run();
}

int64_t Session::add_object(const ObjectRecord& object)
{
    writer();
    ObjectRecord row = object;
    row.objectid = next_id("objects", "objectid");
    auto& stmt = cached(
        "INSERT INTO objects (objectid, imagefile, x, y, width, height, name, score) VALUES (?, ?, ?, ?, ?, ?, ?, ?)");
    bind_object(stmt, row);
    stmt.run();
    return row.objectid;
}

void Session::update_object(const ObjectRecord& object)
{
    auto stmt = writer().prepare(
        "UPDATE objects SET objectid = ?1, imagefile = ?2, x = ?3, y = ?4, width = ?5, height = ?6, name = ?7, "
        "score = ?8 WHERE objectid = ?1");
    bind_object(stmt, object);
    stmt.run();
}

int64_t Session::add_property(int64_t objectid, std::string_view key, std::string_view value)
{
    writer();
    int64_t id = next_id("properties", "id");
    auto& stmt = cached("INSERT INTO properties (id, objectid, key, value) VALUES (?, ?, ?, ?)");
    stmt.bind(1, id).bind(2, objectid).bind(3, key).bind(4, value);
    stmt.run();
    return id;
}

int64_t Session::add_polygon_point(int64_t objectid, double x, double y, const std::optional<std::string>& name)
{
    writer();
    int64_t id = next_id("polygons", "id");
    auto& stmt = cached("INSERT INTO polygons (id, objectid, x, y, name) VALUES (?, ?, ?, ?, ?)");
    stmt.bind(1, id).bind(2, objectid).bind(3, x).bind(4, y).bind(5, name);
    stmt.run();
    return id;
}

int64_t Session::add_match(int64_t objectid, int64_t match)
{
    writer();
    int64_t id = next_id("matches", "id");
    auto& stmt = cached("INSERT INTO matches (id, objectid, match) VALUES (?, ?, ?)");
    stmt.bind(1, id).bind(2, objectid).bind(3, match);
    stmt.run();
    return id;
}

int64_t Session::next_match_value()
{
    return next_id("matches", "match");
}

int64_t Session::delete_objects_where(std::string_view where)
{
    auto& conn = writer();
    // Compile the predicate before touching anything.
    std::string selected = fmt::format("SELECT objectid FROM objects{}", where_clause(where));
    conn.prepare(selected);

    sqlite::Savepoint savepoint(conn);
    conn.exec("CREATE TEMP TABLE IF NOT EXISTS doomed_objects (objectid INTEGER PRIMARY KEY)");
    conn.exec("DELETE FROM temp.doomed_objects");
    conn.exec(fmt::format("INSERT INTO temp.doomed_objects {}", selected));
    for (const char* table : {"properties", "polygons", "matches"}) {
        conn.exec(fmt::format("DELETE FROM {} WHERE objectid IN (SELECT objectid FROM temp.doomed_objects)", table));
    }
    conn.exec("DELETE FROM objects WHERE objectid IN (SELECT objectid FROM temp.doomed_objects)");
    int64_t deleted = conn.changes();
    conn.exec("DELETE FROM temp.doomed_objects");
    savepoint.release();
    return deleted;
}

int64_t Session::delete_object(int64_t objectid)
{
    return delete_objects_where(fmt::format("objectid = {}", objectid));
}

int64_t Session::delete_images_where(std::string_view where)
{
    auto& conn = writer();
    std::string selected = fmt::format("SELECT imagefile FROM images{}", where_clause(where));
    conn.prepare(selected);

    sqlite::Savepoint savepoint(conn);
    conn.exec("CREATE TEMP TABLE IF NOT EXISTS doomed_images (imagefile TEXT PRIMARY KEY)");
    conn.exec("DELETE FROM temp.doomed_images");
    conn.exec(fmt::format("INSERT INTO temp.doomed_images {}", selected));
    delete_objects_where("imagefile IN (SELECT imagefile FROM temp.doomed_images)");
    conn.exec("DELETE FROM images WHERE imagefile IN (SELECT imagefile FROM temp.doomed_images)");
    int64_t deleted = conn.changes();
    conn.exec("DELETE FROM temp.doomed_images");
    savepoint.release();
    return deleted;
}

int64_t Session::delete_match(int64_t match)
{
    auto stmt = writer().prepare("DELETE FROM matches WHERE match = ?");
    stmt.bind(1, match);
    stmt.run();
    return conn_.changes();
}

}  // namespace labeldb
