#ifndef BILAG_EXPR_HPP
#define BILAG_EXPR_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace bilag {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Evaluation hit a point outside an expression's domain (division by
/// zero, log of a non-positive number). Carries the offending
/// subexpression in printed form.
class DomainError : public Error {
public:
    DomainError(const std::string& what, std::string subexpr)
        : Error(what + " in subexpression: " + subexpr), subexpr_(std::move(subexpr)) {}
    const std::string& subexpression() const { return subexpr_; }

private:
    std::string subexpr_;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t pos)
        : Error(what + " (at offset " + std::to_string(pos) + ")"), pos_(pos) {}
    std::size_t position() const { return pos_; }

private:
    std::size_t pos_ = 0;
};

/// A randomized identity check could not be decided because too many
/// sample points fell outside the domain of the expressions.
class InconclusiveError : public Error {
public:
    using Error::Error;
};

/// Coordinate values for evaluation, keyed by coordinate name.
using Point = std::map<std::string, double>;

namespace detail {
struct Node;
}

/// Immutable symbolic scalar expression over named coordinates.
///
/// Supported operations: rational/float constants, variables, +, -, *, /,
/// integer powers, neg, sin, cos, exp, log. Construction applies constant
/// folding and 0/1 absorption; nothing more (no canonicalization).
/// Expressions are values: cheap to copy, safe to share across threads.
class ScalarExpr {
public:
    ScalarExpr();  // the constant 0

    // -- constructors -------------------------------------------------
    static ScalarExpr constant(double v);
    static ScalarExpr rational(std::int64_t num, std::int64_t den = 1);
    static ScalarExpr variable(const std::string& name);

    friend ScalarExpr operator+(const ScalarExpr& a, const ScalarExpr& b);
    friend ScalarExpr operator-(const ScalarExpr& a, const ScalarExpr& b);
    friend ScalarExpr operator*(const ScalarExpr& a, const ScalarExpr& b);
    friend ScalarExpr operator/(const ScalarExpr& a, const ScalarExpr& b);
    friend ScalarExpr operator-(const ScalarExpr& a);
    static ScalarExpr sin(const ScalarExpr& a);
    static ScalarExpr cos(const ScalarExpr& a);
    static ScalarExpr exp(const ScalarExpr& a);
    static ScalarExpr log(const ScalarExpr& a);
    static ScalarExpr pow(const ScalarExpr& base, int exponent);

    // -- queries -------------------------------------------------------
    /// Exact partial derivative with respect to `var`.
    ScalarExpr diff(const std::string& var) const;

    /// Evaluate at a point supplying all free variables.
    /// Throws DomainError on division by zero or log of a non-positive
    /// value, and Error if a free variable is missing from the point.
    double eval(const Point& point) const;

    /// Replace variables by expressions (simultaneous substitution).
    ScalarExpr substitute(const std::map<std::string, ScalarExpr>& repl) const;

    /// Free variables, sorted.
    std::set<std::string> variables() const;

    /// True if the expression is the literal constant `v`.
    bool is_constant(double v) const;

    /// Infix rendering, parseable by parse_expr.
    std::string to_string() const;

    bool same_node(const ScalarExpr& other) const { return node_ == other.node_; }

    const detail::Node& node() const { return *node_; }

private:
    explicit ScalarExpr(std::shared_ptr<const detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<const detail::Node> node_;
    friend struct detail::Node;
    friend class CompiledExpr;
};

ScalarExpr operator+(const ScalarExpr& a, const ScalarExpr& b);
ScalarExpr operator-(const ScalarExpr& a, const ScalarExpr& b);
ScalarExpr operator*(const ScalarExpr& a, const ScalarExpr& b);
ScalarExpr operator/(const ScalarExpr& a, const ScalarExpr& b);
ScalarExpr operator-(const ScalarExpr& a);

/// Parse the infix grammar: `+ - * / ^` (integer exponents only),
/// function calls sin/cos/exp/log, decimal and rational literals,
/// identifiers for coordinates. Throws ParseError.
ScalarExpr parse_expr(const std::string& text);

/// Per-variable sampling region. Periodic variables live on [0,1).
class Domain {
public:
    struct Interval {
        double lo = -1.0;
        double hi = 1.0;
        bool periodic = false;
    };

    Domain() = default;

    /// Declare a variable with finite bounds. Periodic variables must be
    /// declared on [0,1).
    void add(const std::string& var, double lo, double hi, bool periodic = false);

    bool contains(const std::string& var) const { return vars_.count(var) != 0; }
    const Interval& interval(const std::string& var) const;
    const std::map<std::string, Interval>& intervals() const { return vars_; }

    /// Reduce periodic coordinates of `p` mod 1 into [0,1).
    Point reduce(Point p) const;

    /// Draw a point uniformly inside the box (deterministic given rng state).
    Point sample(std::uint64_t& rng_state) const;

private:
    std::map<std::string, Interval> vars_;
};

/// Outcome of a randomized pointwise identity check.
struct ApproxResult {
    bool equal = false;
    std::optional<Point> witness;  // a point where the check failed
    double max_deviation = 0.0;    // relative scale, over compared samples
    int compared = 0;              // samples where both sides evaluated
    int skipped = 0;               // samples hitting domain errors

    explicit operator bool() const { return equal; }
};

/// Randomized identity oracle: true iff |e1-e2| <= tol*(1+max(|e1|,|e2|))
/// at every drawn sample. Samples are drawn with a deterministic seed.
/// Samples where either side hits a domain error are skipped; if more
/// than half of the samples are skipped the check throws
/// InconclusiveError.
ApproxResult approx_equal(const ScalarExpr& e1, const ScalarExpr& e2,
                          const Domain& dom, int samples = 100,
                          double tol = 1e-9, std::uint64_t seed = 0x9e3779b97f4a7c15ull);

/// Flat bytecode form of a ScalarExpr for fast repeated evaluation with a
/// fixed variable ordering. Domain errors evaluate to NaN rather than
/// throwing; callers on hot paths check std::isfinite.
class CompiledExpr {
public:
    CompiledExpr() = default;
    CompiledExpr(const ScalarExpr& e, const std::vector<std::string>& var_order);

    double eval(const double* vars) const;
    double eval(const std::vector<double>& vars) const { return eval(vars.data()); }
    std::size_t arity() const { return nvars_; }

private:
    struct Op {
        enum Kind : std::uint8_t { PushConst, LoadVar, Add, Sub, Mul, Div, Neg, Sin, Cos, Exp, Log, PowI } kind;
        double value = 0.0;
        int slot = 0;
    };
    std::vector<Op> ops_;
    std::size_t nvars_ = 0;
    mutable std::vector<double> stack_;
};

/// Split-mix style generator used everywhere a deterministic uniform
/// stream is needed. Returns a double in [0,1).
double next_uniform(std::uint64_t& state);

}  // namespace bilag

#endif  // BILAG_EXPR_HPP
