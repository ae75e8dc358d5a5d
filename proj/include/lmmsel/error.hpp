#pragma once

#include <stdexcept>
#include <string>

namespace lmmsel {

// Base for every error raised by the library. The CLI maps subclasses to
// exit codes: UsageError -> 1, everything else -> 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, long row)
        : Error(what), row_(row) {}
    long row() const noexcept { return row_; }

private:
    long row_;
};

class DegenerateColumnError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class FactorizationError : public Error {
public:
    using Error::Error;
};

class TuningError : public Error {
public:
    using Error::Error;
};

} // namespace lmmsel
