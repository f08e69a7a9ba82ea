#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "labeldb/error.hpp"

struct sqlite3;
struct sqlite3_stmt;

namespace labeldb::sqlite {

class Statement;

/// Owning handle to one SQLite connection.
class Connection {
public:
    enum class OpenMode { read_only, read_write_create };

    Connection() = default;
    Connection(const std::string& uri, OpenMode mode);
    ~Connection();

    Connection(Connection&& other) noexcept;
    Connection& operator=(Connection&& other) noexcept;
    Connection(const Connection&) = delete;
    Connection& operator=(const Connection&) = delete;

    static Connection in_memory();

    [[nodiscard]] bool is_open() const { return handle_ != nullptr; }
    [[nodiscard]] sqlite3* handle() const { return handle_; }

    void exec(std::string_view sql);
    Statement prepare(std::string_view sql);

    [[nodiscard]] int64_t changes() const;
    [[nodiscard]] int64_t total_changes() const;
    [[nodiscard]] int64_t last_insert_rowid() const;
    [[nodiscard]] std::string last_error() const;

    /// Single integer result of a query, or nullopt when the result is NULL or empty.
    std::optional<int64_t> query_int(std::string_view sql);

    /// Copies the full contents of this connection's main database into `dest`.
    void backup_to(Connection& dest);

private:
    sqlite3* handle_ = nullptr;
};

class Statement {
public:
    Statement(sqlite3* db, sqlite3_stmt* stmt) : db_(db), stmt_(stmt) {}
    ~Statement();
    Statement(Statement&& other) noexcept;
    Statement& operator=(Statement&& other) noexcept;
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;

    Statement& bind(int index, int64_t value);
    Statement& bind(int index, int value) { return bind(index, static_cast<int64_t>(value)); }
    Statement& bind(int index, double value);
    Statement& bind(int index, std::string_view value);
    Statement& bind(int index, const char* value) { return bind(index, std::string_view(value)); }
    Statement& bind(int index, const std::string& value) { return bind(index, std::string_view(value)); }
    Statement& bind_null(int index);

    template <typename T>
    Statement& bind(int index, const std::optional<T>& value)
    {
        if (value) {
            return bind(index, *value);
        }
        return bind_null(index);
    }

    /// Advances to the next row; false when done.
    bool step();
    /// Steps a statement that produces no rows, then resets it for reuse.
    void run();
    void reset();

    [[nodiscard]] int column_count() const;
    [[nodiscard]] std::string column_name(int col) const;
    [[nodiscard]] bool is_null(int col) const;
    [[nodiscard]] int64_t column_int(int col) const;
    [[nodiscard]] double column_double(int col) const;
    [[nodiscard]] std::string column_text(int col) const;
    [[nodiscard]] std::optional<int64_t> column_opt_int(int col) const;
    [[nodiscard]] std::optional<double> column_opt_double(int col) const;
    [[nodiscard]] std::optional<std::string> column_opt_text(int col) const;

private:
    sqlite3* db_ = nullptr;
    sqlite3_stmt* stmt_ = nullptr;
};

/// RAII savepoint: rolled back unless release() is called.
class Savepoint {
public:
    explicit Savepoint(Connection& conn);
    ~Savepoint();
    Savepoint(const Savepoint&) = delete;
    Savepoint& operator=(const Savepoint&) = delete;

    void release();

private:
    Connection& conn_;
    bool active_ = true;
};

}  // namespace labeldb::sqlite
