#pragma once

#include <stdexcept>
#include <string>

namespace ivkit {

/// Process exit status associated with each error family.
enum class ExitCode : int {
    Success = 0,
    Config = 2,
    Numeric = 3,
    Identification = 4,
};

/// Base of every toolkit error. Carries a stable machine-readable code.
class Error : public std::runtime_error {
public:
    Error(std::string code, ExitCode exit, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)), exit_(exit) {}

    const std::string& code() const noexcept { return code_; }
    ExitCode exit_code() const noexcept { return exit_; }

private:
    std::string code_;
    ExitCode exit_;
};

class CycleError : public Error {
public:
    CycleError(std::string block, const std::string& what)
        : Error("CYCLE", ExitCode::Config, what), block_(std::move(block)) {}
    const std::string& block() const noexcept { return block_; }

private:
    std::string block_;
};

class GraphError : public Error {
public:
    explicit GraphError(const std::string& what) : Error("GRAPH", ExitCode::Config, what) {}
};

class DatasetError : public Error {
public:
    explicit DatasetError(const std::string& what) : Error("DATASET", ExitCode::Config, what) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error("SHAPE", ExitCode::Config, what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("CONFIG", ExitCode::Config, what) {}
};

class ParseError : public Error {
public:
    ParseError(long row, long column, const std::string& what)
        : Error("PARSE", ExitCode::Config, what), row_(row), column_(column) {}
    long row() const noexcept { return row_; }
    long column() const noexcept { return column_; }

private:
    long row_;
    long column_;
};

class RoleError : public Error {
public:
    explicit RoleError(const std::string& what) : Error("ROLE", ExitCode::Config, what) {}
};

class RankDeficient : public Error {
public:
    RankDeficient(long rank, double threshold, const std::string& what)
        : Error("RANK_DEFICIENT", ExitCode::Numeric, what), rank_(rank), threshold_(threshold) {}
    long rank() const noexcept { return rank_; }
    double threshold() const noexcept { return threshold_; }

private:
    long rank_;
    double threshold_;
};

class WeakInstrument : public Error {
public:
    WeakInstrument(long rank, double threshold, const std::string& what)
        : Error("WEAK_INSTRUMENT", ExitCode::Numeric, what), rank_(rank), threshold_(threshold) {}
    long rank() const noexcept { return rank_; }
    double threshold() const noexcept { return threshold_; }

private:
    long rank_;
    double threshold_;
};

class SingularMoment : public Error {
public:
    explicit SingularMoment(const std::string& what)
        : Error("SINGULAR_MOMENT", ExitCode::Numeric, what) {}
};

class TooManyFailures : public Error {
public:
    TooManyFailures(long failed, long total, const std::string& what)
        : Error("TOO_MANY_FAILURES", ExitCode::Numeric, what), failed_(failed), total_(total) {}
    long failed() const noexcept { return failed_; }
    long total() const noexcept { return total_; }

private:
    long failed_;
    long total_;
};

class Underidentified : public Error {
public:
    explicit Underidentified(const std::string& what)
        : Error("UNDERIDENTIFIED", ExitCode::Identification, what) {}
};

class NoValidSpace : public Error {
public:
    explicit NoValidSpace(const std::string& what)
        : Error("NO_VALID_SPACE", ExitCode::Identification, what) {}
};

class InsufficientCount : public Error {
public:
    InsufficientCount(long available, long requested, const std::string& what)
        : Error("INSUFFICIENT_COUNT", ExitCode::Identification, what),
          available_(available), requested_(requested) {}
    long available() const noexcept { return available_; }
    long requested() const noexcept { return requested_; }

private:
    long available_;
    long requested_;
};

}  // namespace ivkit
