#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace formation_lab {

/// Broad failure class; the CLI maps each one onto its exit code.
enum class ErrorKind { config, data, numerical };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string name, const std::string& what)
        : std::runtime_error(what), kind_(kind), name_(std::move(name)) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// Stable machine-readable identifier, e.g. "MissingCell".
    const std::string& name() const noexcept { return name_; }

private:
    ErrorKind kind_;
    std::string name_;
};

#define FORMATION_LAB_ERROR(Name, Kind)                                       \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& what)                               \
            : Error(ErrorKind::Kind, #Name, what) {}                         \
    };

// ingest
FORMATION_LAB_ERROR(MissingCell, data)
FORMATION_LAB_ERROR(ValidationError, data)
FORMATION_LAB_ERROR(StepNotFound, data)
FORMATION_LAB_ERROR(NonMonotoneAbscissa, data)
FORMATION_LAB_ERROR(DegenerateScale, numerical)
FORMATION_LAB_ERROR(ConfigError, config)
// fused lasso / models
FORMATION_LAB_ERROR(ShapeError, data)
FORMATION_LAB_ERROR(MapeUndefined, data)
// lambda selection
FORMATION_LAB_ERROR(EmptyInput, data)
FORMATION_LAB_ERROR(DegenerateDenominator, numerical)
FORMATION_LAB_ERROR(NoFeasibleLambda, numerical)
// physics
FORMATION_LAB_ERROR(DomainError, numerical)
FORMATION_LAB_ERROR(RankDeficient, numerical)
FORMATION_LAB_ERROR(RootNotBracketed, numerical)
FORMATION_LAB_ERROR(StepSizeError, numerical)
FORMATION_LAB_ERROR(WindowError, data)
// diagnostics
FORMATION_LAB_ERROR(DegenerateColumn, data)
FORMATION_LAB_ERROR(TestUndefined, numerical)

#undef FORMATION_LAB_ERROR

/// Malformed CSV/JSON input. Carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(ErrorKind::data, "ParseError",
                line ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace formation_lab
