#ifndef BILAG_GEOMETRY_HPP
#define BILAG_GEOMETRY_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bilag/expr.hpp"

namespace bilag {

inline constexpr std::uint64_t kDefaultSeed = 0x9e3779b97f4a7c15ull;

/// Residual threshold for span/rank/involutivity/connection checks.
inline constexpr double kResidualTol = 1e-8;

class Chart;
using ChartPtr = std::shared_ptr<const Chart>;

/// A named coordinate chart: ordered coordinate names plus a sampling
/// domain. Single-chart manifolds with periodic identifications cover
/// everything in this toolkit (R^2n, T^2, T*U, TU).
class Chart {
public:
    Chart(std::string name, std::vector<std::string> coordinates, Domain domain);

    static ChartPtr make(std::string name, std::vector<std::string> coordinates, Domain domain);

    const std::string& name() const { return name_; }
    const std::vector<std::string>& coordinates() const { return coords_; }
    int dimension() const { return int(coords_.size()); }
    const Domain& domain() const { return domain_; }

    /// Index of a coordinate, or -1.
    int index_of(const std::string& coord) const;

    /// Partial derivative with a declared-coordinate check.
    ScalarExpr diff(const ScalarExpr& e, const std::string& coord) const;

    /// Reduce periodic coordinates mod 1, then evaluate.
    double eval(const ScalarExpr& e, const Point& p) const;

    Point sample(std::uint64_t& rng_state) const { return domain_.sample(rng_state); }

    bool same(const Chart& other) const;

private:
    std::string name_;
    std::vector<std::string> coords_;
    Domain domain_;
};

/// Vector field X = X^i d/dx^i on a chart; one component per coordinate.
struct VectorField {
    ChartPtr chart;
    std::vector<ScalarExpr> components;

    VectorField() = default;
    VectorField(ChartPtr c, std::vector<ScalarExpr> comps);

    static VectorField zero(ChartPtr c);
    static VectorField coordinate(ChartPtr c, int i);  // d/dx^i

    /// Directional derivative X(f) = X^i df/dx^i.
    ScalarExpr apply(const ScalarExpr& f) const;

    std::vector<double> eval(const Point& p) const;

    VectorField operator+(const VectorField& o) const;
    VectorField operator-(const VectorField& o) const;
    VectorField scaled(const ScalarExpr& f) const;
};

/// Alternating k-form stored as coefficients over strictly increasing
/// index tuples. Degree 0 is a scalar (single empty-tuple entry).
class DifferentialForm {
public:
    DifferentialForm(ChartPtr chart, int degree);

    static DifferentialForm d_coordinate(ChartPtr c, int i);          // dx^i
    static DifferentialForm from_scalar(ChartPtr c, ScalarExpr f);    // degree 0

    const ChartPtr& chart() const { return chart_; }
    int degree() const { return degree_; }

    /// Accumulate coeff * dx^{idx[0]} ^ ... ^ dx^{idx[k-1]}; the tuple is
    /// sorted into increasing order with the corresponding sign.
    void add_term(std::vector<int> idx, const ScalarExpr& coeff);

    /// Coefficient for a strictly increasing tuple (zero if absent).
    ScalarExpr coefficient(const std::vector<int>& increasing_idx) const;

    const std::map<std::vector<int>, ScalarExpr>& terms() const { return terms_; }

    /// Contraction with k vector fields (symbolic).
    ScalarExpr apply(const std::vector<VectorField>& fields) const;

    DifferentialForm operator+(const DifferentialForm& o) const;
    DifferentialForm operator-(const DifferentialForm& o) const;
    DifferentialForm scaled(const ScalarExpr& f) const;

private:
    ChartPtr chart_;
    int degree_;
    std::map<std::vector<int>, ScalarExpr> terms_;
};

/// Wedge product of two forms on the same chart.
DifferentialForm wedge(const DifferentialForm& a, const DifferentialForm& b);

/// Interior product i_X w (contraction in the first slot).
DifferentialForm interior_product(const DifferentialForm& w, const VectorField& x);

/// Local frame spanning an involutive distribution: the section space of
/// a foliation over the chart.
struct FoliationFrame {
    ChartPtr chart;
    std::vector<VectorField> fields;

    int rank() const { return int(fields.size()); }
};

/// A diffeomorphism between charts, given by component expressions.
/// The inverse may be expression-valued or absent; when absent,
/// apply_inverse falls back to a damped Newton iteration (adequate for
/// the mild maps used here) and the symbolic operations that need an
/// expression inverse throw.
struct DiffeoSpec {
    ChartPtr source;
    ChartPtr target;
    std::vector<ScalarExpr> forward;  // expressions in source coordinates
    std::vector<ScalarExpr> inverse;  // expressions in target coordinates; may be empty

    static DiffeoSpec identity(ChartPtr c);

    bool has_expression_inverse() const { return !inverse.empty(); }

    /// Swap direction; requires an expression inverse.
    DiffeoSpec inverted() const;

    Point apply(const Point& p) const;
    Point apply_inverse(const Point& p) const;

    /// Jacobian d(forward^i)/d(source_j) as expressions in source coords.
    std::vector<std::vector<ScalarExpr>> jacobian() const;

    /// Check psi∘psi^{-1} ≈ id on sampled points (throws on failure).
    void validate(int samples = 50, double tol = 1e-8, std::uint64_t seed = kDefaultSeed) const;
};

/// Symplectic form with two transversal Lagrangian foliations.
struct BiLagrangianStructure {
    ChartPtr chart;
    DifferentialForm omega;
    FoliationFrame f1;
    FoliationFrame f2;
};

// -- operations --------------------------------------------------------

/// [X,Y]^j = X^i dY^j/dx^i - Y^i dX^j/dx^i.
VectorField lie_bracket(const VectorField& x, const VectorField& y);

/// Exterior derivative; degree k -> k+1. Top-degree input yields the zero
/// form of degree k+1 when k+1 <= dim and throws otherwise.
DifferentialForm exterior_derivative(const DifferentialForm& w);

/// (psi_* X)^j = (dpsi^j/dx^i X^i) ∘ psi^{-1}. Needs an expression inverse.
VectorField pushforward_field(const DiffeoSpec& psi, const VectorField& x);

/// Pullback of a form living on psi's target chart back to the source.
DifferentialForm pullback_form(const DiffeoSpec& psi, const DifferentialForm& w);

/// Push a whole structure forward: ((psi^{-1})* omega, psi_* F1, psi_* F2).
BiLagrangianStructure pushforward_structure(const DiffeoSpec& psi, const BiLagrangianStructure& b);

struct FrobeniusReport {
    bool involutive = false;
    double max_residual = 0.0;
    std::optional<Point> failure;  // sample where the bracket left the span

    explicit operator bool() const { return involutive; }
};

/// Involutivity: every pairwise bracket stays in the frame span at each
/// sample (least-squares residual <= tol). Throws on rank deficiency,
/// reporting the offending sample.
FrobeniusReport frobenius_check(const FoliationFrame& f, int samples = 50,
                                std::uint64_t seed = kDefaultSeed, double tol = kResidualTol);

struct SymplecticCheck {
    bool symplectic = false;
    std::string reason;
    double min_abs_det = 0.0;

    explicit operator bool() const { return symplectic; }
};

/// Closedness (d w ≈ 0 coefficient-wise) plus pointwise nondegeneracy
/// (|det| > 1e-10 at every sample).
SymplecticCheck is_symplectic(const DifferentialForm& w, int samples = 50,
                              std::uint64_t seed = kDefaultSeed);

struct LagrangianCheck {
    bool lagrangian = false;
    std::string reason;
    int measured_rank = 0;
    double max_pairing = 0.0;

    explicit operator bool() const { return lagrangian; }
};

/// rank(F) = n and w(E_i,E_j) ≈ 0 for all frame pairs at samples.
LagrangianCheck is_lagrangian(const FoliationFrame& f, const DifferentialForm& w,
                              int samples = 50, std::uint64_t seed = kDefaultSeed);

struct ValidationReport {
    bool symplectic = false;
    bool f1_involutive = false;
    bool f2_involutive = false;
    bool f1_lagrangian = false;
    bool f2_lagrangian = false;
    bool transversal = false;
    bool pass = false;
    double min_transversal_sv = 0.0;  // smallest singular value of the combined frame
    std::string detail;

    explicit operator bool() const { return pass; }
};

/// Full bi-Lagrangian validation; failures are carried in the report.
ValidationReport validate_bilagrangian(const BiLagrangianStructure& b, int samples = 50,
                                       std::uint64_t seed = kDefaultSeed);

/// True iff the chart is adapted: span F1 = span{d/dp^i}, span F2 =
/// span{d/dq^i} and w = sum dq^i ^ dp^i, with coordinates ordered
/// (p^1..p^n, q^1..q^n).
bool adapted_chart_check(const BiLagrangianStructure& b, int samples = 50,
                         std::uint64_t seed = kDefaultSeed);

/// sum_i dq^i ^ dp^i on a chart with coordinates (p^1..p^n, q^1..q^n).
DifferentialForm canonical_symplectic(ChartPtr chart);

// -- small symbolic linear algebra helpers ------------------------------

/// Determinant by cofactor expansion; intended for small matrices.
ScalarExpr symbolic_determinant(const std::vector<std::vector<ScalarExpr>>& m);

/// Solve M x = rhs by Cramer's rule (expressions stay exact; evaluation
/// fails where det vanishes).
std::vector<ScalarExpr> cramer_solve(const std::vector<std::vector<ScalarExpr>>& m,
                                     const std::vector<ScalarExpr>& rhs);

/// Expand a field in a frame: coefficients c with X = sum c_a E_a.
std::vector<ScalarExpr> expand_in_frame(const std::vector<VectorField>& frame,
                                        const VectorField& x);

}  // namespace bilag

#endif  // BILAG_GEOMETRY_HPP
