#ifndef BILAG_HESS_HPP
#define BILAG_HESS_HPP

#include <map>

#include "bilag/geometry.hpp"

namespace bilag {

/// Christoffel symbols Gamma^k_{ij} in a declared frame:
/// nabla_{E_i} E_j = Gamma^k_{ij} E_k. For Hess connections the frame is
/// the concatenation F1 ∪ F2, so foliation preservation is the zero
/// pattern Gamma^k_{ij} = 0 whenever j and k fall in different halves.
class ConnectionTable {
public:
    ConnectionTable(ChartPtr chart, std::vector<VectorField> frame);

    const ChartPtr& chart() const { return chart_; }
    const std::vector<VectorField>& frame() const { return frame_; }
    int size() const { return int(frame_.size()); }

    const ScalarExpr& coeff(int i, int j, int k) const { return gamma_[index(i, j, k)]; }
    void set_coeff(int i, int j, int k, ScalarExpr v) { gamma_[index(i, j, k)] = std::move(v); }

    /// nabla_{E_i} E_j expressed in chart components.
    VectorField derivative_field(int i, int j) const;

    /// nabla_{E_i} (sum_l c_l E_l) as frame coefficients (Leibniz).
    std::vector<ScalarExpr> derivative_of_combination(int i, const std::vector<ScalarExpr>& c) const;

    /// Same table with the frame permuted: entry a of `perm` names the
    /// old index of the new a-th frame field.
    ConnectionTable reordered(const std::vector<int>& perm) const;

private:
    std::size_t index(int i, int j, int k) const;
    ChartPtr chart_;
    std::vector<VectorField> frame_;
    std::vector<ScalarExpr> gamma_;
};

/// The Hess connection of a validated bi-Lagrangian structure, built in
/// the frame F1 ∪ F2: mixed parts are projected brackets
/// (nabla_{X1} Y2 = pr2 [X1, Y2], nabla_{Y2} X1 = pr1 [Y2, X1]) and
/// tangential parts are solved from nabla omega = 0 through the
/// nondegenerate pairing omega: F1 x F2 -> R.
/// Throws when the pairing matrix is numerically singular on the domain.
ConnectionTable hess_connection(const BiLagrangianStructure& b);

/// Leibniz extension to arbitrary fields: expands x, y in the frame.
/// Throws if the frame expansion fails to reproduce the fields to 1e-8
/// at sampled points.
VectorField covariant_derivative(const ConnectionTable& c, const VectorField& x,
                                 const VectorField& y, int check_samples = 10,
                                 std::uint64_t seed = kDefaultSeed);

/// T(E_i,E_j) for i < j (antisymmetric by construction).
class TorsionTable {
public:
    explicit TorsionTable(int n) : n_(n) {}
    const VectorField& at(int i, int j) const;
    void set(int i, int j, VectorField v);
    int size() const { return n_; }

private:
    int n_;
    std::map<std::pair<int, int>, VectorField> entries_;
};

TorsionTable torsion(const ConnectionTable& c);

/// R(E_i,E_j)E_k for i < j, all k.
class CurvatureTable {
public:
    explicit CurvatureTable(int n) : n_(n) {}
    const VectorField& at(int i, int j, int k) const;
    void set(int i, int j, int k, VectorField v);
    int size() const { return n_; }

private:
    int n_;
    std::map<std::tuple<int, int, int>, VectorField> entries_;
};

CurvatureTable curvature(const ConnectionTable& c);

/// R(E_i,E_j)E_k for arbitrary index order (used for antisymmetry checks).
VectorField curvature_field(const ConnectionTable& c, int i, int j, int k);

/// All curvature components vanish at sampled points (tol 1e-8). Per the
/// flatness theorem this means adapted charts exist around the samples.
bool is_flat(const ConnectionTable& c, int samples = 50, std::uint64_t seed = kDefaultSeed);

/// nabla^psi: (X,Y) -> psi_* nabla_{psi_*^{-1} X} psi_*^{-1} Y, realized
/// as the same coefficients composed with psi^{-1} in the pushed frame.
ConnectionTable pushforward_connection(const DiffeoSpec& psi, const ConnectionTable& c);

struct HessReport {
    double torsion_residual = 0.0;
    double parallel_residual = 0.0;      // nabla omega
    double preservation_residual = 0.0;  // span residual of nabla_X Y against Gamma(F_i)
    double tolerance = kResidualTol;
    bool pass = false;

    explicit operator bool() const { return pass; }
};

/// Check the three defining properties of the Hess connection against a
/// structure: zero torsion, nabla omega = 0, and preservation of both
/// foliations. Residuals are maxima over sampled points.
HessReport hess_verify(const ConnectionTable& c, const BiLagrangianStructure& b,
                       int samples = 50, double tol = kResidualTol,
                       std::uint64_t seed = kDefaultSeed);

}  // namespace bilag

#endif  // BILAG_HESS_HPP
