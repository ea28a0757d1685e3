#include "bilag/hess.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace bilag {

namespace {

double span_residual(const std::vector<VectorField>& span, const VectorField& v, const Point& p) {
    const int m = v.chart->dimension();
    Eigen::MatrixXd mat(m, int(span.size()));
    for (int c = 0; c < int(span.size()); ++c) {
        auto vals = span[c].eval(p);
        for (int r = 0; r < m; ++r) mat(r, c) = vals[r];
    }
    auto bv = v.eval(p);
    Eigen::VectorXd b = Eigen::Map<Eigen::VectorXd>(bv.data(), long(bv.size()));
    Eigen::VectorXd c = mat.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);
    return (mat * c - b).norm();
}

}  // namespace

// ---------------------------------------------------------------------------
// ConnectionTable

ConnectionTable::ConnectionTable(ChartPtr chart, std::vector<VectorField> frame)
    : chart_(std::move(chart)), frame_(std::move(frame)) {
    for (const auto& f : frame_)
        if (!f.chart->same(*chart_)) throw Error("ConnectionTable: frame field on a different chart");
    gamma_.assign(std::size_t(size()) * size() * size(), ScalarExpr());
}

std::size_t ConnectionTable::index(int i, int j, int k) const {
    const int d = size();
    if (i < 0 || j < 0 || k < 0 || i >= d || j >= d || k >= d)
        throw Error("ConnectionTable: index out of range");
    return (std::size_t(i) * d + j) * d + k;
}

VectorField ConnectionTable::derivative_field(int i, int j) const {
    VectorField out = VectorField::zero(chart_);
    for (int k = 0; k < size(); ++k) {
        const auto& g = coeff(i, j, k);
        if (g.is_constant(0.0)) continue;
        out = out + frame_[k].scaled(g);
    }
    return out;
}

std::vector<ScalarExpr> ConnectionTable::derivative_of_combination(
    int i, const std::vector<ScalarExpr>& c) const {
    if (int(c.size()) != size()) throw Error("derivative_of_combination: coefficient count");
    std::vector<ScalarExpr> out(size());
    for (int l = 0; l < size(); ++l) {
        ScalarExpr acc = frame_[i].apply(c[l]);
        for (int m = 0; m < size(); ++m) acc = acc + c[m] * coeff(i, m, l);
        out[l] = acc;
    }
    return out;
}

ConnectionTable ConnectionTable::reordered(const std::vector<int>& perm) const {
    if (int(perm.size()) != size()) throw Error("reordered: permutation size mismatch");
    std::vector<VectorField> newframe;
    newframe.reserve(frame_.size());
    for (int a : perm) newframe.push_back(frame_.at(a));
    ConnectionTable out(chart_, std::move(newframe));
    for (int i = 0; i < size(); ++i)
        for (int j = 0; j < size(); ++j)
            for (int k = 0; k < size(); ++k) out.set_coeff(i, j, k, coeff(perm[i], perm[j], perm[k]));
    return out;
}

// ---------------------------------------------------------------------------
// hess_connection

ConnectionTable hess_connection(const BiLagrangianStructure& b) {
    const int m = b.chart->dimension();
    if (m % 2 != 0) throw Error("hess_connection: odd-dimensional chart");
    const int n = m / 2;
    if (b.f1.rank() != n || b.f2.rank() != n)
        throw Error("hess_connection: foliation ranks must both equal n");

    std::vector<VectorField> frame = b.f1.fields;
    frame.insert(frame.end(), b.f2.fields.begin(), b.f2.fields.end());
    ConnectionTable table(b.chart, frame);

    // Pairing P[l][k] = omega(E_l, E_{n+k}), l,k in [0,n); must be
    // nondegenerate for the tangential solves.
    std::vector<std::vector<ScalarExpr>> pairing(n, std::vector<ScalarExpr>(n));
    for (int l = 0; l < n; ++l)
        for (int k = 0; k < n; ++k) pairing[l][k] = b.omega.apply({frame[l], frame[n + k]});
    {
        ScalarExpr det = symbolic_determinant(pairing);
        std::uint64_t state = kDefaultSeed;
        for (int s = 0; s < 25; ++s) {
            Point p = b.chart->sample(state);
            double v = std::abs(b.chart->eval(det, p));
            if (!(v > 1e-10))
                throw Error("hess_connection: pairing matrix omega(F1,F2) numerically singular "
                            "(|det| = " + std::to_string(v) + ") - nondegeneracy violated");
        }
    }

    // Mixed parts: nabla_{E_i} E_j = pr2 [E_i, E_j] for i in F1, j in F2,
    // and nabla_{E_j} E_i = pr1 [E_j, E_i].
    for (int i = 0; i < n; ++i)
        for (int j = n; j < m; ++j) {
            VectorField br = lie_bracket(frame[i], frame[j]);
            std::vector<ScalarExpr> coeffs = expand_in_frame(frame, br);
            for (int k = n; k < m; ++k) table.set_coeff(i, j, k, coeffs[k]);
            for (int k = 0; k < n; ++k) table.set_coeff(j, i, k, -coeffs[k]);
        }

    // Tangential F1 part: solve omega(nabla_{E_i}E_j, E_{n+k}) =
    // E_i omega(E_j, E_{n+k}) - omega(E_j, pr2[E_i, E_{n+k}]).
    std::vector<std::vector<ScalarExpr>> pairing_t(n, std::vector<ScalarExpr>(n));
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) pairing_t[r][c] = pairing[c][r];
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            std::vector<ScalarExpr> rhs(n);
            for (int k = 0; k < n; ++k) {
                VectorField pr2_bracket = table.derivative_field(i, n + k);
                rhs[k] = frame[i].apply(pairing[j][k]) - b.omega.apply({frame[j], pr2_bracket});
            }
            std::vector<ScalarExpr> g = cramer_solve(pairing_t, rhs);
            for (int l = 0; l < n; ++l) table.set_coeff(i, j, l, g[l]);
        }

    // Tangential F2 part: omega(E_l, nabla_{E_i}E_j) =
    // E_i omega(E_l, E_j) - omega(pr1[E_i, E_l], E_j).
    for (int i = n; i < m; ++i)
        for (int j = n; j < m; ++j) {
            std::vector<ScalarExpr> rhs(n);
            for (int l = 0; l < n; ++l) {
                VectorField pr1_bracket = table.derivative_field(i, l);
                rhs[l] = frame[i].apply(pairing[l][j - n]) - b.omega.apply({pr1_bracket, frame[j]});
            }
            std::vector<ScalarExpr> g = cramer_solve(pairing, rhs);
            for (int k = 0; k < n; ++k) table.set_coeff(i, j, n + k, g[k]);
        }

    return table;
}

// ---------------------------------------------------------------------------
// covariant_derivative

VectorField covariant_derivative(const ConnectionTable& c, const VectorField& x,
                                 const VectorField& y, int check_samples, std::uint64_t seed) {
    if (!x.chart->same(*c.chart()) || !y.chart->same(*c.chart()))
        throw Error("covariant_derivative: chart mismatch");
    std::vector<ScalarExpr> a = expand_in_frame(c.frame(), x);
    std::vector<ScalarExpr> bc = expand_in_frame(c.frame(), y);

    // The expansions must reproduce the inputs on the sampling domain.
    std::uint64_t state = seed;
    for (int s = 0; s < check_samples; ++s) {
        Point p = c.chart()->sample(state);
        auto check = [&](const std::vector<ScalarExpr>& coeffs, const VectorField& field) {
            std::vector<double> recon(c.chart()->dimension(), 0.0);
            for (int l = 0; l < c.size(); ++l) {
                double cl = c.chart()->eval(coeffs[l], p);
                auto fv = c.frame()[l].eval(p);
                for (int r = 0; r < c.chart()->dimension(); ++r) recon[r] += cl * fv[r];
            }
            auto xv = field.eval(p);
            for (int r = 0; r < c.chart()->dimension(); ++r)
                if (!(std::abs(recon[r] - xv[r]) <= kResidualTol * (1 + std::abs(xv[r]))))
                    throw Error("covariant_derivative: frame expansion residual exceeds tolerance");
        };
        check(a, x);
        check(bc, y);
    }

    // nabla_X Y = sum_j a_i [ E_i(b_j) + sum_m b_m Gamma^j_{im} ] E_j.
    VectorField out = VectorField::zero(c.chart());
    for (int j = 0; j < c.size(); ++j) {
        ScalarExpr coeff;
        for (int i = 0; i < c.size(); ++i) {
            if (a[i].is_constant(0.0)) continue;
            ScalarExpr term = c.frame()[i].apply(bc[j]);
            for (int m = 0; m < c.size(); ++m) term = term + bc[m] * c.coeff(i, m, j);
            coeff = coeff + a[i] * term;
        }
        if (!coeff.is_constant(0.0)) out = out + c.frame()[j].scaled(coeff);
    }
    return out;
}

// ---------------------------------------------------------------------------
// torsion / curvature

const VectorField& TorsionTable::at(int i, int j) const {
    auto it = entries_.find({std::min(i, j), std::max(i, j)});
    if (it == entries_.end()) throw Error("TorsionTable: index out of range");
    return it->second;
}

void TorsionTable::set(int i, int j, VectorField v) { entries_[{i, j}] = std::move(v); }

TorsionTable torsion(const ConnectionTable& c) {
    TorsionTable t(c.size());
    for (int i = 0; i < c.size(); ++i)
        for (int j = i + 1; j < c.size(); ++j) {
            VectorField field = VectorField::zero(c.chart());
            for (int k = 0; k < c.size(); ++k) {
                ScalarExpr g = c.coeff(i, j, k) - c.coeff(j, i, k);
                if (!g.is_constant(0.0)) field = field + c.frame()[k].scaled(g);
            }
            t.set(i, j, field - lie_bracket(c.frame()[i], c.frame()[j]));
        }
    return t;
}

const VectorField& CurvatureTable::at(int i, int j, int k) const {
    auto it = entries_.find({i, j, k});
    if (it == entries_.end()) throw Error("CurvatureTable: index out of range");
    return it->second;
}

void CurvatureTable::set(int i, int j, int k, VectorField v) {
    entries_[{i, j, k}] = std::move(v);
}

VectorField curvature_field(const ConnectionTable& c, int i, int j, int k) {
    // R(E_i,E_j)E_k = nabla_i nabla_j E_k - nabla_j nabla_i E_k - nabla_{[E_i,E_j]} E_k
    std::vector<ScalarExpr> gamma_jk(c.size()), gamma_ik(c.size());
    for (int l = 0; l < c.size(); ++l) {
        gamma_jk[l] = c.coeff(j, k, l);
        gamma_ik[l] = c.coeff(i, k, l);
    }
    std::vector<ScalarExpr> first = c.derivative_of_combination(i, gamma_jk);
    std::vector<ScalarExpr> second = c.derivative_of_combination(j, gamma_ik);

    VectorField bracket = lie_bracket(c.frame()[i], c.frame()[j]);
    std::vector<ScalarExpr> mu = expand_in_frame(c.frame(), bracket);

    VectorField out = VectorField::zero(c.chart());
    for (int l = 0; l < c.size(); ++l) {
        ScalarExpr r = first[l] - second[l];
        for (int a = 0; a < c.size(); ++a) r = r - mu[a] * c.coeff(a, k, l);
        if (!r.is_constant(0.0)) out = out + c.frame()[l].scaled(r);
    }
    return out;
}

CurvatureTable curvature(const ConnectionTable& c) {
    CurvatureTable table(c.size());
    for (int i = 0; i < c.size(); ++i)
        for (int j = i + 1; j < c.size(); ++j)
            for (int k = 0; k < c.size(); ++k) table.set(i, j, k, curvature_field(c, i, j, k));
    return table;
}

bool is_flat(const ConnectionTable& c, int samples, std::uint64_t seed) {
    CurvatureTable r = curvature(c);
    std::uint64_t state = seed;
    std::vector<Point> pts;
    for (int s = 0; s < samples; ++s) pts.push_back(c.chart()->sample(state));
    for (int i = 0; i < c.size(); ++i)
        for (int j = i + 1; j < c.size(); ++j)
            for (int k = 0; k < c.size(); ++k) {
                const VectorField& f = r.at(i, j, k);
                for (const auto& p : pts) {
                    auto v = f.eval(p);
                    for (double comp : v)
                        if (!(std::abs(comp) <= kResidualTol)) return false;
                }
            }
    return true;
}

ConnectionTable pushforward_connection(const DiffeoSpec& psi, const ConnectionTable& c) {
    if (!psi.source->same(*c.chart())) throw Error("pushforward_connection: chart mismatch");
    if (!psi.has_expression_inverse())
        throw Error("pushforward_connection: diffeomorphism is missing an expression inverse");
    std::vector<VectorField> pushed;
    pushed.reserve(c.frame().size());
    for (const auto& f : c.frame()) pushed.push_back(pushforward_field(psi, f));
    ConnectionTable out(psi.target, std::move(pushed));
    std::map<std::string, ScalarExpr> back;
    for (int i = 0; i < psi.source->dimension(); ++i)
        back[psi.source->coordinates()[i]] = psi.inverse[i];
    for (int i = 0; i < c.size(); ++i)
        for (int j = 0; j < c.size(); ++j)
            for (int k = 0; k < c.size(); ++k) {
                const auto& g = c.coeff(i, j, k);
                if (!g.is_constant(0.0)) out.set_coeff(i, j, k, g.substitute(back));
            }
    return out;
}

// ---------------------------------------------------------------------------
// hess_verify

HessReport hess_verify(const ConnectionTable& c, const BiLagrangianStructure& b, int samples,
                       double tol, std::uint64_t seed) {
    if (!c.chart()->same(*b.chart)) throw Error("hess_verify: chart mismatch");
    HessReport rep;
    rep.tolerance = tol;
    const int d = c.size();

    std::uint64_t state = seed;
    std::vector<Point> pts;
    for (int s = 0; s < samples; ++s) pts.push_back(b.chart->sample(state));

    // (i) torsion components
    TorsionTable t = torsion(c);
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            const VectorField& f = t.at(i, j);
            for (const auto& p : pts)
                for (double v : f.eval(p))
                    rep.torsion_residual = std::max(rep.torsion_residual, std::abs(v));
        }

    // (ii) nabla omega: X omega(Y,Z) - omega(nabla_X Y, Z) - omega(Y, nabla_X Z)
    for (int i = 0; i < d; ++i) {
        std::vector<VectorField> deriv;
        deriv.reserve(d);
        for (int j = 0; j < d; ++j) deriv.push_back(c.derivative_field(i, j));
        for (int j = 0; j < d; ++j)
            for (int k = j + 1; k < d; ++k) {
                ScalarExpr pairing = b.omega.apply({c.frame()[j], c.frame()[k]});
                ScalarExpr resid = c.frame()[i].apply(pairing) -
                                   b.omega.apply({deriv[j], c.frame()[k]}) -
                                   b.omega.apply({c.frame()[j], deriv[k]});
                for (const auto& p : pts)
                    rep.parallel_residual =
                        std::max(rep.parallel_residual, std::abs(b.chart->eval(resid, p)));
            }
    }

    // (iii) preservation: nabla_X Y stays in the foliation of Y
    const int n1 = b.f1.rank();
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            const auto& target = (j < n1) ? b.f1.fields : b.f2.fields;
            VectorField v = c.derivative_field(i, j);
            for (const auto& p : pts)
                rep.preservation_residual =
                    std::max(rep.preservation_residual, span_residual(target, v, p));
        }

    rep.pass = rep.torsion_residual <= tol && rep.parallel_residual <= tol &&
               rep.preservation_residual <= tol;
    return rep;
}

}  // namespace bilag
