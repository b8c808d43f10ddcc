#pragma once

#include <stdexcept>
#include <string>

namespace qhedge {

/// Failure categories. The CLI maps each one to a distinct exit code.
enum class ErrorKind {
    Domain,       ///< argument outside the mathematical domain
    Range,        ///< root or bracket not found
    Config,       ///< malformed or inconsistent configuration
    Validation,   ///< assumption check failed
    Cfl,          ///< time step too large for the scheme
    Degenerate,   ///< numerical degeneracy (G <= 0, a <= 0, too many clamps)
    Stencil,      ///< integration point construction failed
    Unsupported,  ///< operation not available for this measure or model
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& w) : Error(ErrorKind::Domain, w) {}
};

class RangeError : public Error {
public:
    explicit RangeError(const std::string& w) : Error(ErrorKind::Range, w) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, w) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& w) : Error(ErrorKind::Validation, w) {}
};

class UnsupportedError : public Error {
public:
    explicit UnsupportedError(const std::string& w) : Error(ErrorKind::Unsupported, w) {}
};

class StencilError : public Error {
public:
    StencilError(const std::string& w, double t, double z, int i)
        : Error(ErrorKind::Stencil, w), t(t), z(z), i(i) {}
    double t, z;
    int i;
};

/// Raised when a transition probability would be negative.
class CflViolation : public Error {
public:
    CflViolation(const std::string& w, int level, int node, double suggested_dt)
        : Error(ErrorKind::Cfl, w), level(level), node(node), suggested_dt(suggested_dt) {}
    int level, node;
    double suggested_dt;
};

class DegenerateNode : public Error {
public:
    DegenerateNode(const std::string& w, int level, int node)
        : Error(ErrorKind::Degenerate, w), level(level), node(node) {}
    int level, node;
};

}  // namespace qhedge
