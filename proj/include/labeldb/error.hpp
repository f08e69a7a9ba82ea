#pragma once

#include <stdexcept>
#include <string>

namespace labeldb {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A user-supplied SQL predicate or query failed to compile or run.
class QueryError : public Error {
public:
    using Error::Error;
};

class ReadOnlyError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

/// Bad command-line usage; maps to exit code 2.
class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace labeldb
