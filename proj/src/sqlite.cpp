#include "labeldb/sqlite.hpp"

#include <sqlite3.h>

#include <fmt/format.h>

#include <cctype>

#include <utility>

namespace labeldb::sqlite {

namespace {

[[noreturn]] void fail(sqlite3* db, std::string_view what)
{
    throw Error(fmt::format("{}: {}", what, db ? sqlite3_errmsg(db) : "out of memory"));
}

}  // namespace

Connection::Connection(const std::string& uri, OpenMode mode)
{
    int flags = SQLITE_OPEN_URI;
    flags |= mode == OpenMode::read_only ? SQLITE_OPEN_READONLY
                                         : (SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE);
    if (sqlite3_open_v2(uri.c_str(), &handle_, flags, nullptr) != SQLITE_OK) {
        std::string msg = handle_ ? sqlite3_errmsg(handle_) : "out of memory";
        sqlite3_close(handle_);
        handle_ = nullptr;
        throw Error(fmt::format("cannot open database '{}': {}", uri, msg));
    }
    sqlite3_extended_result_codes(handle_, 1);
}

Connection::~Connection()
{
    if (handle_) {
        sqlite3_close_v2(handle_);
    }
}

Connection::Connection(Connection&& other) noexcept : handle_(std::exchange(other.handle_, nullptr)) {}

Connection& Connection::operator=(Connection&& other) noexcept
{
    if (this != &other) {
        if (handle_) {
            sqlite3_close_v2(handle_);
        }
        handle_ = std::exchange(other.handle_, nullptr);
    }
    return *this;
}

Connection Connection::in_memory()
{
    return Connection(":memory:", OpenMode::read_write_create);
}

void Connection::exec(std::string_view sql)
{
    char* err = nullptr;
    std::string text(sql);
    if (sqlite3_exec(handle_, text.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown error";
        sqlite3_free(err);
        throw QueryError(msg);
    }
}

Statement Connection::prepare(std::string_view sql)
{
    sqlite3_stmt* stmt = nullptr;
    const char* tail = nullptr;
    if (sqlite3_prepare_v2(handle_, sql.data(), static_cast<int>(sql.size()), &stmt, &tail) != SQLITE_OK) {
        throw QueryError(sqlite3_errmsg(handle_));
    }
    if (stmt == nullptr) {
        throw QueryError("empty SQL statement");
    }
    Statement result(handle_, stmt);
    for (; tail && *tail; ++tail) {
        if (!std::isspace(static_cast<unsigned char>(*tail)) && *tail != ';') {
            throw QueryError("only a single SQL statement is allowed");
        }
    }
    return result;
}

int64_t Connection::changes() const { return sqlite3_changes64(handle_); }

int64_t Connection::total_changes() const { return sqlite3_total_changes64(handle_); }

int64_t Connection::last_insert_rowid() const { return sqlite3_last_insert_rowid(handle_); }

std::string Connection::last_error() const { return sqlite3_errmsg(handle_); }

std::optional<int64_t> Connection::query_int(std::string_view sql)
{
    auto stmt = prepare(sql);
    if (!stmt.step()) {
        return std::nullopt;
    }
    return stmt.column_opt_int(0);
}

void Connection::backup_to(Connection& dest)
{
    sqlite3_backup* backup = sqlite3_backup_init(dest.handle_, "main", handle_, "main");
    if (backup == nullptr) {
        fail(dest.handle_, "backup failed");
    }
    int rc = sqlite3_backup_step(backup, -1);
    sqlite3_backup_finish(backup);
    if (rc != SQLITE_DONE) {
        fail(dest.handle_, "backup failed");
    }
}

Statement::~Statement()
{
    if (stmt_) {
        sqlite3_finalize(stmt_);
    }
}

Statement::Statement(Statement&& other) noexcept
    : db_(other.db_), stmt_(std::exchange(other.stmt_, nullptr))
{
}

Statement& Statement::operator=(Statement&& other) noexcept
{
    if (this != &other) {
        if (stmt_) {
            sqlite3_finalize(stmt_);
        }
        db_ = other.db_;
        stmt_ = std::exchange(other.stmt_, nullptr);
    }
    return *this;
}

Statement& Statement::bind(int index, int64_t value)
{
    if (sqlite3_bind_int64(stmt_, index, value) != SQLITE_OK) {
        fail(db_, "bind failed");
    }
    return *this;
}

Statement& Statement::bind(int index, double value)
{
    if (sqlite3_bind_double(stmt_, index, value) != SQLITE_OK) {
        fail(db_, "bind failed");
    }
    return *this;
}

Statement& Statement::bind(int index, std::string_view value)
{
    if (sqlite3_bind_text(stmt_, index, value.data(), static_cast<int>(value.size()), SQLITE_TRANSIENT) !=
        SQLITE_OK) {
        fail(db_, "bind failed");
    }
    return *this;
}

Statement& Statement::bind_null(int index)
{
    if (sqlite3_bind_null(stmt_, index) != SQLITE_OK) {
        fail(db_, "bind failed");
    }
    return *this;
}

bool Statement::step()
{
    int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) {
        return true;
    }
    if (rc == SQLITE_DONE) {
        return false;
    }
    throw QueryError(sqlite3_errmsg(db_));
}

void Statement::run()
{
    while (step()) {
    }
    reset();
}

void Statement::reset()
{
    sqlite3_reset(stmt_);
    sqlite3_clear_bindings(stmt_);
}

int Statement::column_count() const { return sqlite3_column_count(stmt_); }

std::string Statement::column_name(int col) const { return sqlite3_column_name(stmt_, col); }

bool Statement::is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }

int64_t Statement::column_int(int col) const { return sqlite3_column_int64(stmt_, col); }

double Statement::column_double(int col) const { return sqlite3_column_double(stmt_, col); }

std::string Statement::column_text(int col) const
{
    const auto* text = sqlite3_column_text(stmt_, col);
    if (text == nullptr) {
        return {};
    }
    return {reinterpret_cast<const char*>(text), static_cast<size_t>(sqlite3_column_bytes(stmt_, col))};
}

std::optional<int64_t> Statement::column_opt_int(int col) const
{
    if (is_null(col)) {
        return std::nullopt;
    }
    return column_int(col);
}

std::optional<double> Statement::column_opt_double(int col) const
{
    if (is_null(col)) {
        return std::nullopt;
    }
    return column_double(col);
}

std::optional<std::string> Statement::column_opt_text(int col) const
{
    if (is_null(col)) {
        return std::nullopt;
    }
    return column_text(col);
}

Savepoint::Savepoint(Connection& conn) : conn_(conn)
{
    conn_.exec("SAVEPOINT labeldb_op");
}

Savepoint::~Savepoint()
{
    if (active_) {
        try {
            conn_.exec("ROLLBACK TO labeldb_op");
            conn_.exec("RELEASE labeldb_op");
        } catch (...) {
        }
    }
}

void Savepoint::release()
{
    conn_.exec("RELEASE labeldb_op");
    active_ = false;
}

}  // namespace labeldb::sqlite
