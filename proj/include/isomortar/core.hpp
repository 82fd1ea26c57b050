#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace isomortar {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Category of a failure; the CLI maps these onto exit codes and message prefixes.
enum class ErrorKind {
    Structural,   // malformed input data (knot vectors, weights, references)
    Parse,        // text format violation, carries a line number
    Geometry,     // degenerate geometry at evaluation time
    Inversion,    // det F <= 0 inside a bulk element
    Projection,   // too many unconverged closest-point projections
    Partition,    // boundary quadrature could not resolve the sign pattern
    Singular,     // factorization failure
    Config,       // invalid run configuration
    Solver,       // Newton / step-cut exhaustion
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::Structural: return "structural";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Geometry: return "geometry";
        case ErrorKind::Inversion: return "inversion";
        case ErrorKind::Projection: return "projection";
        case ErrorKind::Partition: return "partition";
        case ErrorKind::Singular: return "singular";
        case ErrorKind::Config: return "config";
        case ErrorKind::Solver: return "solver";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}
    ErrorKind kind() const noexcept { return kind_; }
    /// Message without the kind prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

/// Element inversion carries the offending element so the solver can cut the step.
class InversionError : public Error {
public:
    InversionError(int body, int element, double detF)
        : Error(ErrorKind::Inversion, "det F = " + std::to_string(detF) + " in body " +
                                          std::to_string(body) + " element " + std::to_string(element)),
          body_(body), element_(element) {}
    int body() const noexcept { return body_; }
    int element() const noexcept { return element_; }

private:
    int body_;
    int element_;
};

/// Rotation by -90 degrees: (a_x, a_y) -> (a_y, -a_x).
inline Vec2 rotate_cw(const Vec2& a) { return {a.y(), -a.x()}; }

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace isomortar
