#include "bilag/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace bilag {

namespace {

constexpr double kDetTol = 1e-10;

std::string point_to_string(const Point& p) {
    std::ostringstream os;
    os << "{";
    bool first = true;
    for (const auto& [k, v] : p) {
        if (!first) os << ", ";
        os << k << "=" << v;
        first = false;
    }
    os << "}";
    return os.str();
}

void require_same_chart(const ChartPtr& a, const ChartPtr& b, const char* where) {
    if (!a || !b || !a->same(*b))
        throw Error(std::string(where) + ": chart mismatch (" + (a ? a->name() : "<null>") +
                    " vs " + (b ? b->name() : "<null>") + ")");
}

// Frame component matrix at a point: rows = coordinates, cols = fields.
Eigen::MatrixXd frame_matrix(const std::vector<VectorField>& fields, const Point& p) {
    if (fields.empty()) return Eigen::MatrixXd(0, 0);
    const int m = fields[0].chart->dimension();
    Eigen::MatrixXd mat(m, int(fields.size()));
    for (int c = 0; c < int(fields.size()); ++c) {
        auto vals = fields[c].eval(p);
        for (int r = 0; r < m; ++r) mat(r, c) = vals[r];
    }
    return mat;
}

double least_squares_residual(const Eigen::MatrixXd& m, const Eigen::VectorXd& b) {
    if (m.cols() == 0) return b.norm();
    Eigen::VectorXd c = m.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);
    return (m * c - b).norm();
}

}  // namespace

// ---------------------------------------------------------------------------
// Chart

Chart::Chart(std::string name, std::vector<std::string> coordinates, Domain domain)
    : name_(std::move(name)), coords_(std::move(coordinates)), domain_(std::move(domain)) {
    if (coords_.empty()) throw Error("chart '" + name_ + "': dimension must be >= 1");
    std::set<std::string> seen;
    for (const auto& c : coords_) {
        if (!seen.insert(c).second)
            throw Error("chart '" + name_ + "': duplicate coordinate '" + c + "'");
        if (!domain_.contains(c)) domain_.add(c, -1.0, 1.0);
    }
}

ChartPtr Chart::make(std::string name, std::vector<std::string> coordinates, Domain domain) {
    return std::make_shared<Chart>(std::move(name), std::move(coordinates), std::move(domain));
}

int Chart::index_of(const std::string& coord) const {
    for (std::size_t i = 0; i < coords_.size(); ++i)
        if (coords_[i] == coord) return int(i);
    return -1;
}

ScalarExpr Chart::diff(const ScalarExpr& e, const std::string& coord) const {
    if (index_of(coord) < 0)
        throw Error("diff: '" + coord + "' is not a coordinate of chart '" + name_ + "'");
    return e.diff(coord);
}

double Chart::eval(const ScalarExpr& e, const Point& p) const {
    return e.eval(domain_.reduce(p));
}

bool Chart::same(const Chart& other) const {
    return name_ == other.name_ && coords_ == other.coords_;
}

// ---------------------------------------------------------------------------
// VectorField

VectorField::VectorField(ChartPtr c, std::vector<ScalarExpr> comps)
    : chart(std::move(c)), components(std::move(comps)) {
    if (int(components.size()) != chart->dimension())
        throw Error("vector field on '" + chart->name() + "': expected " +
                    std::to_string(chart->dimension()) + " components, got " +
                    std::to_string(components.size()));
}

VectorField VectorField::zero(ChartPtr c) {
    std::vector<ScalarExpr> comps(c->dimension());
    return VectorField(std::move(c), std::move(comps));
}

VectorField VectorField::coordinate(ChartPtr c, int i) {
    if (i < 0 || i >= c->dimension()) throw Error("coordinate field index out of range");
    std::vector<ScalarExpr> comps(c->dimension());
    comps[i] = ScalarExpr::rational(1);
    return VectorField(std::move(c), std::move(comps));
}

ScalarExpr VectorField::apply(const ScalarExpr& f) const {
    ScalarExpr out;
    for (int i = 0; i < chart->dimension(); ++i)
        out = out + components[i] * f.diff(chart->coordinates()[i]);
    return out;
}

std::vector<double> VectorField::eval(const Point& p) const {
    std::vector<double> out(components.size());
    for (std::size_t i = 0; i < components.size(); ++i) out[i] = chart->eval(components[i], p);
    return out;
}

VectorField VectorField::operator+(const VectorField& o) const {
    require_same_chart(chart, o.chart, "VectorField::operator+");
    std::vector<ScalarExpr> comps(components.size());
    for (std::size_t i = 0; i < components.size(); ++i) comps[i] = components[i] + o.components[i];
    return VectorField(chart, std::move(comps));
}

VectorField VectorField::operator-(const VectorField& o) const {
    require_same_chart(chart, o.chart, "VectorField::operator-");
    std::vector<ScalarExpr> comps(components.size());
    for (std::size_t i = 0; i < components.size(); ++i) comps[i] = components[i] - o.components[i];
    return VectorField(chart, std::move(comps));
}

VectorField VectorField::scaled(const ScalarExpr& f) const {
    std::vector<ScalarExpr> comps(components.size());
    for (std::size_t i = 0; i < components.size(); ++i) comps[i] = f * components[i];
    return VectorField(chart, std::move(comps));
}

// ---------------------------------------------------------------------------
// DifferentialForm

DifferentialForm::DifferentialForm(ChartPtr chart, int degree)
    : chart_(std::move(chart)), degree_(degree) {
    if (degree_ < 0 || degree_ > chart_->dimension())
        throw Error("form degree " + std::to_string(degree_) + " out of range on chart '" +
                    chart_->name() + "'");
}

DifferentialForm DifferentialForm::d_coordinate(ChartPtr c, int i) {
    DifferentialForm f(std::move(c), 1);
    f.add_term({i}, ScalarExpr::rational(1));
    return f;
}

DifferentialForm DifferentialForm::from_scalar(ChartPtr c, ScalarExpr s) {
    DifferentialForm f(std::move(c), 0);
    f.add_term({}, s);
    return f;
}

void DifferentialForm::add_term(std::vector<int> idx, const ScalarExpr& coeff) {
    if (int(idx.size()) != degree_)
        throw Error("form term arity mismatch: degree " + std::to_string(degree_) + ", got " +
                    std::to_string(idx.size()) + " indices");
    for (int i : idx)
        if (i < 0 || i >= chart_->dimension()) throw Error("form term index out of range");
    // Sort into increasing order, tracking the permutation sign.
    int sign = 1;
    for (std::size_t i = 1; i < idx.size(); ++i)
        for (std::size_t j = i; j > 0 && idx[j] < idx[j - 1]; --j) {
            std::swap(idx[j], idx[j - 1]);
            sign = -sign;
        }
    for (std::size_t i = 1; i < idx.size(); ++i)
        if (idx[i] == idx[i - 1]) return;  // repeated index: the term vanishes
    ScalarExpr c = sign == 1 ? coeff : -coeff;
    auto it = terms_.find(idx);
    if (it == terms_.end()) {
        if (!c.is_constant(0.0)) terms_.emplace(std::move(idx), std::move(c));
    } else {
        it->second = it->second + c;
        if (it->second.is_constant(0.0)) terms_.erase(it);
    }
}

ScalarExpr DifferentialForm::coefficient(const std::vector<int>& idx) const {
    auto it = terms_.find(idx);
    return it == terms_.end() ? ScalarExpr() : it->second;
}

ScalarExpr DifferentialForm::apply(const std::vector<VectorField>& fields) const {
    if (int(fields.size()) != degree_)
        throw Error("form of degree " + std::to_string(degree_) + " applied to " +
                    std::to_string(fields.size()) + " fields");
    for (const auto& f : fields) require_same_chart(chart_, f.chart, "DifferentialForm::apply");
    ScalarExpr out;
    for (const auto& [idx, coeff] : terms_) {
        // det of the k x k matrix M[a][b] = fields[b]^{idx[a]}
        std::vector<std::vector<ScalarExpr>> m(idx.size(), std::vector<ScalarExpr>(idx.size()));
        for (std::size_t a = 0; a < idx.size(); ++a)
            for (std::size_t b = 0; b < idx.size(); ++b)
                m[a][b] = fields[b].components[idx[a]];
        out = out + coeff * symbolic_determinant(m);
    }
    return out;
}

DifferentialForm DifferentialForm::operator+(const DifferentialForm& o) const {
    require_same_chart(chart_, o.chart_, "DifferentialForm::operator+");
    if (degree_ != o.degree_) throw Error("form degree mismatch in +");
    DifferentialForm out = *this;
    for (const auto& [idx, coeff] : o.terms_) out.add_term(idx, coeff);
    return out;
}

DifferentialForm DifferentialForm::operator-(const DifferentialForm& o) const {
    require_same_chart(chart_, o.chart_, "DifferentialForm::operator-");
    if (degree_ != o.degree_) throw Error("form degree mismatch in -");
    DifferentialForm out = *this;
    for (const auto& [idx, coeff] : o.terms_) out.add_term(idx, -coeff);
    return out;
}

DifferentialForm DifferentialForm::scaled(const ScalarExpr& f) const {
    DifferentialForm out(chart_, degree_);
    for (const auto& [idx, coeff] : terms_) out.add_term(idx, f * coeff);
    return out;
}

DifferentialForm wedge(const DifferentialForm& a, const DifferentialForm& b) {
    require_same_chart(a.chart(), b.chart(), "wedge");
    DifferentialForm out(a.chart(), a.degree() + b.degree());
    for (const auto& [ia, ca] : a.terms())
        for (const auto& [ib, cb] : b.terms()) {
            std::vector<int> idx = ia;
            idx.insert(idx.end(), ib.begin(), ib.end());
            out.add_term(std::move(idx), ca * cb);
        }
    return out;
}

DifferentialForm interior_product(const DifferentialForm& w, const VectorField& x) {
    require_same_chart(w.chart(), x.chart, "interior_product");
    if (w.degree() == 0) throw Error("interior product of a 0-form");
    DifferentialForm out(w.chart(), w.degree() - 1);
    for (const auto& [idx, coeff] : w.terms())
        for (std::size_t s = 0; s < idx.size(); ++s) {
            std::vector<int> rest;
            rest.reserve(idx.size() - 1);
            for (std::size_t t = 0; t < idx.size(); ++t)
                if (t != s) rest.push_back(idx[t]);
            ScalarExpr c = coeff * x.components[idx[s]];
            out.add_term(std::move(rest), (s % 2 == 0) ? c : -c);
        }
    return out;
}

// ---------------------------------------------------------------------------
// DiffeoSpec

DiffeoSpec DiffeoSpec::identity(ChartPtr c) {
    DiffeoSpec psi;
    psi.source = c;
    psi.target = c;
    for (const auto& name : c->coordinates()) {
        psi.forward.push_back(ScalarExpr::variable(name));
        psi.inverse.push_back(ScalarExpr::variable(name));
    }
    return psi;
}

DiffeoSpec DiffeoSpec::inverted() const {
    if (!has_expression_inverse())
        throw Error("DiffeoSpec::inverted: no expression inverse available");
    DiffeoSpec psi;
    psi.source = target;
    psi.target = source;
    psi.forward = inverse;
    psi.inverse = forward;
    return psi;
}

Point DiffeoSpec::apply(const Point& p) const {
    Point out;
    Point reduced = source->domain().reduce(p);
    for (int j = 0; j < target->dimension(); ++j)
        out[target->coordinates()[j]] = forward[j].eval(reduced);
    return target->domain().reduce(out);
}

Point DiffeoSpec::apply_inverse(const Point& p) const {
    Point reduced = target->domain().reduce(p);
    if (has_expression_inverse()) {
        Point out;
        for (int i = 0; i < source->dimension(); ++i)
            out[source->coordinates()[i]] = inverse[i].eval(reduced);
        return source->domain().reduce(out);
    }
    // Damped Newton on forward(x) = p, seeded at p itself (the maps used
    // without expression inverses are mild perturbations of the identity).
    const int m = source->dimension();
    auto jac = jacobian();
    Eigen::VectorXd x(m), rhs(m);
    for (int i = 0; i < m; ++i) {
        // Seed: same coordinate values when charts share names, else zero.
        auto it = reduced.find(source->coordinates()[i]);
        x(i) = it != reduced.end() ? it->second : 0.0;
    }
    for (int j = 0; j < target->dimension(); ++j) rhs(j) = reduced.at(target->coordinates()[j]);
    for (int iter = 0; iter < 100; ++iter) {
        Point xp;
        for (int i = 0; i < m; ++i) xp[source->coordinates()[i]] = x(i);
        xp = source->domain().reduce(xp);
        Eigen::VectorXd fx(m);
        for (int j = 0; j < m; ++j) fx(j) = forward[j].eval(xp);
        // Periodic targets: compare residuals modulo 1.
        Eigen::VectorXd r = fx - rhs;
        for (int j = 0; j < m; ++j) {
            const auto& name = target->coordinates()[j];
            if (target->domain().interval(name).periodic) r(j) -= std::round(r(j));
        }
        if (r.norm() < 1e-13) break;
        Eigen::MatrixXd J(m, m);
        for (int j = 0; j < m; ++j)
            for (int i = 0; i < m; ++i) J(j, i) = jac[j][i].eval(xp);
        Eigen::VectorXd step = J.fullPivLu().solve(r);
        double damp = 1.0;
        if (step.norm() > 0.25) damp = 0.25 / step.norm();
        x -= damp * step;
        if (iter == 99) throw Error("DiffeoSpec::apply_inverse: Newton did not converge");
    }
    Point out;
    for (int i = 0; i < m; ++i) out[source->coordinates()[i]] = x(i);
    return source->domain().reduce(out);
}

std::vector<std::vector<ScalarExpr>> DiffeoSpec::jacobian() const {
    std::vector<std::vector<ScalarExpr>> j(target->dimension(),
                                           std::vector<ScalarExpr>(source->dimension()));
    for (int r = 0; r < target->dimension(); ++r)
        for (int c = 0; c < source->dimension(); ++c)
            j[r][c] = forward[r].diff(source->coordinates()[c]);
    return j;
}

void DiffeoSpec::validate(int samples, double tol, std::uint64_t seed) const {
    if (int(forward.size()) != target->dimension())
        throw Error("DiffeoSpec: forward component count != target dimension");
    if (has_expression_inverse() && int(inverse.size()) != source->dimension())
        throw Error("DiffeoSpec: inverse component count != source dimension");
    std::uint64_t state = seed;
    for (int s = 0; s < samples; ++s) {
        Point p = source->sample(state);
        Point back = apply_inverse(apply(p));
        for (const auto& [name, v] : p) {
            double d = std::abs(back.at(name) - v);
            if (source->domain().interval(name).periodic) d = std::min(d, 1.0 - d);
            if (d > tol)
                throw Error("DiffeoSpec: psi^{-1}(psi(p)) deviates by " + std::to_string(d) +
                            " at " + point_to_string(p));
        }
    }
}

// ---------------------------------------------------------------------------
// Operations

VectorField lie_bracket(const VectorField& x, const VectorField& y) {
    require_same_chart(x.chart, y.chart, "lie_bracket");
    const auto& chart = x.chart;
    std::vector<ScalarExpr> comps(chart->dimension());
    for (int j = 0; j < chart->dimension(); ++j) {
        comps[j] = x.apply(y.components[j]) - y.apply(x.components[j]);
    }
    return VectorField(chart, std::move(comps));
}

DifferentialForm exterior_derivative(const DifferentialForm& w) {
    const auto& chart = w.chart();
    if (w.degree() + 1 > chart->dimension())
        throw Error("exterior_derivative: degree " + std::to_string(w.degree()) +
                    " form on a " + std::to_string(chart->dimension()) + "-dimensional chart");
    DifferentialForm out(chart, w.degree() + 1);
    for (const auto& [idx, coeff] : w.terms())
        for (int j = 0; j < chart->dimension(); ++j) {
            ScalarExpr dc = coeff.diff(chart->coordinates()[j]);
            if (dc.is_constant(0.0)) continue;
            std::vector<int> ext;
            ext.reserve(idx.size() + 1);
            ext.push_back(j);
            ext.insert(ext.end(), idx.begin(), idx.end());
            out.add_term(std::move(ext), dc);
        }
    return out;
}

VectorField pushforward_field(const DiffeoSpec& psi, const VectorField& x) {
    require_same_chart(psi.source, x.chart, "pushforward_field");
    if (!psi.has_expression_inverse())
        throw Error("pushforward_field: diffeomorphism is missing an expression inverse");
    auto jac = psi.jacobian();
    std::map<std::string, ScalarExpr> back;
    for (int i = 0; i < psi.source->dimension(); ++i)
        back[psi.source->coordinates()[i]] = psi.inverse[i];
    std::vector<ScalarExpr> comps(psi.target->dimension());
    for (int j = 0; j < psi.target->dimension(); ++j) {
        ScalarExpr t;
        for (int i = 0; i < psi.source->dimension(); ++i)
            t = t + jac[j][i] * x.components[i];
        comps[j] = t.substitute(back);
    }
    return VectorField(psi.target, std::move(comps));
}

DifferentialForm pullback_form(const DiffeoSpec& psi, const DifferentialForm& w) {
    require_same_chart(psi.target, w.chart(), "pullback_form");
    std::map<std::string, ScalarExpr> fwd;
    for (int j = 0; j < psi.target->dimension(); ++j)
        fwd[psi.target->coordinates()[j]] = psi.forward[j];
    if (w.degree() == 0)
        return DifferentialForm::from_scalar(psi.source, w.coefficient({}).substitute(fwd));
    // d(psi^i) as 1-forms on the source chart.
    std::vector<DifferentialForm> dpsi;
    dpsi.reserve(psi.target->dimension());
    for (int i = 0; i < psi.target->dimension(); ++i) {
        DifferentialForm df(psi.source, 1);
        for (int j = 0; j < psi.source->dimension(); ++j)
            df.add_term({j}, psi.forward[i].diff(psi.source->coordinates()[j]));
        dpsi.push_back(std::move(df));
    }
    DifferentialForm out(psi.source, w.degree());
    for (const auto& [idx, coeff] : w.terms()) {
        DifferentialForm term = dpsi[idx[0]];
        for (std::size_t a = 1; a < idx.size(); ++a) term = wedge(term, dpsi[idx[a]]);
        out = out + term.scaled(coeff.substitute(fwd));
    }
    return out;
}

BiLagrangianStructure pushforward_structure(const DiffeoSpec& psi, const BiLagrangianStructure& b) {
    require_same_chart(psi.source, b.chart, "pushforward_structure");
    BiLagrangianStructure out{psi.target, pullback_form(psi.inverted(), b.omega),
                              FoliationFrame{psi.target, {}}, FoliationFrame{psi.target, {}}};
    for (const auto& f : b.f1.fields) out.f1.fields.push_back(pushforward_field(psi, f));
    for (const auto& f : b.f2.fields) out.f2.fields.push_back(pushforward_field(psi, f));
    return out;
}

FrobeniusReport frobenius_check(const FoliationFrame& f, int samples, std::uint64_t seed,
                                double tol) {
    FrobeniusReport rep;
    rep.involutive = true;
    if (f.fields.empty()) return rep;  // the empty distribution is involutive
    const int k = f.rank();

    std::vector<Point> pts;
    std::uint64_t state = seed;
    for (int s = 0; s < samples; ++s) pts.push_back(f.chart->sample(state));

    for (const auto& p : pts) {
        Eigen::MatrixXd m = frame_matrix(f.fields, p);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
        if (svd.singularValues().minCoeff() < tol)
            throw Error("frobenius_check: frame rank-deficient (sigma_min = " +
                        std::to_string(svd.singularValues().minCoeff()) + ") at " +
                        point_to_string(p));
    }

    for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j) {
            VectorField br = lie_bracket(f.fields[i], f.fields[j]);
            for (const auto& p : pts) {
                Eigen::MatrixXd m = frame_matrix(f.fields, p);
                auto bv = br.eval(p);
                Eigen::VectorXd b = Eigen::Map<Eigen::VectorXd>(bv.data(), long(bv.size()));
                double r = least_squares_residual(m, b);
                if (r > rep.max_residual) rep.max_residual = r;
                if (r > tol && rep.involutive) {
                    rep.involutive = false;
                    rep.failure = p;
                }
            }
        }
    return rep;
}

SymplecticCheck is_symplectic(const DifferentialForm& w, int samples, std::uint64_t seed) {
    SymplecticCheck check;
    if (w.degree() != 2) throw Error("is_symplectic: expected a 2-form");
    const auto& chart = w.chart();
    const int m = chart->dimension();
    if (m % 2 != 0) {
        check.reason = "chart dimension is odd";
        return check;
    }
    if (w.degree() < m) {  // top-degree forms are closed automatically
        DifferentialForm dw = exterior_derivative(w);
        for (const auto& [idx, coeff] : dw.terms()) {
            auto r = approx_equal(coeff, ScalarExpr(), chart->domain(), samples, 1e-9, seed);
            if (!r) {
                check.reason = "dw has a nonzero coefficient (witness " +
                               point_to_string(*r.witness) + ")";
                return check;
            }
        }
    }
    std::uint64_t state = seed;
    check.min_abs_det = std::numeric_limits<double>::infinity();
    for (int s = 0; s < samples; ++s) {
        Point p = chart->sample(state);
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
        for (const auto& [idx, coeff] : w.terms()) {
            double v = chart->eval(coeff, p);
            a(idx[0], idx[1]) = v;
            a(idx[1], idx[0]) = -v;
        }
        double d = std::abs(a.determinant());
        check.min_abs_det = std::min(check.min_abs_det, d);
        if (d <= kDetTol) {
            check.reason = "degenerate at sample " + point_to_string(p) +
                           " (|det| = " + std::to_string(d) + ")";
            return check;
        }
    }
    check.symplectic = true;
    return check;
}

LagrangianCheck is_lagrangian(const FoliationFrame& f, const DifferentialForm& w, int samples,
                              std::uint64_t seed) {
    LagrangianCheck check;
    require_same_chart(f.chart, w.chart(), "is_lagrangian");
    const int m = f.chart->dimension();
    if (m % 2 != 0) {
        check.reason = "chart dimension is odd";
        return check;
    }
    const int n = m / 2;
    std::uint64_t state = seed;
    std::vector<Point> pts;
    for (int s = 0; s < samples; ++s) pts.push_back(f.chart->sample(state));

    int rank = f.rank();
    for (const auto& p : pts) {
        Eigen::MatrixXd mat = frame_matrix(f.fields, p);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(mat);
        int r = 0;
        for (int i = 0; i < svd.singularValues().size(); ++i)
            if (svd.singularValues()(i) > kResidualTol) ++r;
        rank = std::min(rank, r);
    }
    check.measured_rank = rank;
    if (rank != n) {
        check.reason = "frame rank " + std::to_string(rank) + " != n = " + std::to_string(n);
        return check;
    }
    for (int i = 0; i < f.rank(); ++i)
        for (int j = i + 1; j < f.rank(); ++j) {
            ScalarExpr pairing = w.apply({f.fields[i], f.fields[j]});
            for (const auto& p : pts) {
                double v = std::abs(f.chart->eval(pairing, p));
                check.max_pairing = std::max(check.max_pairing, v);
            }
        }
    if (check.max_pairing > kResidualTol) {
        check.reason = "omega does not vanish on the frame (max " +
                       std::to_string(check.max_pairing) + ")";
        return check;
    }
    check.lagrangian = true;
    return check;
}

ValidationReport validate_bilagrangian(const BiLagrangianStructure& b, int samples,
                                       std::uint64_t seed) {
    ValidationReport rep;
    std::ostringstream detail;

    auto sym = is_symplectic(b.omega, samples, seed);
    rep.symplectic = sym.symplectic;
    if (!sym) detail << "omega: " << sym.reason << "; ";

    try {
        auto fr1 = frobenius_check(b.f1, samples, seed);
        rep.f1_involutive = fr1.involutive;
        if (!fr1) detail << "F1 not involutive (residual " << fr1.max_residual << "); ";
    } catch (const Error& e) {
        detail << "F1: " << e.what() << "; ";
    }
    try {
        auto fr2 = frobenius_check(b.f2, samples, seed);
        rep.f2_involutive = fr2.involutive;
        if (!fr2) detail << "F2 not involutive (residual " << fr2.max_residual << "); ";
    } catch (const Error& e) {
        detail << "F2: " << e.what() << "; ";
    }

    auto l1 = is_lagrangian(b.f1, b.omega, samples, seed);
    rep.f1_lagrangian = l1.lagrangian;
    if (!l1) detail << "F1: " << l1.reason << "; ";
    auto l2 = is_lagrangian(b.f2, b.omega, samples, seed);
    rep.f2_lagrangian = l2.lagrangian;
    if (!l2) detail << "F2: " << l2.reason << "; ";

    // Transversality: the combined frame must have full rank 2n with a
    // definite singular-value margin at every sample.
    std::vector<VectorField> all = b.f1.fields;
    all.insert(all.end(), b.f2.fields.begin(), b.f2.fields.end());
    rep.min_transversal_sv = std::numeric_limits<double>::infinity();
    if (int(all.size()) == b.chart->dimension() && !all.empty()) {
        std::uint64_t state = seed;
        rep.transversal = true;
        for (int s = 0; s < samples; ++s) {
            Point p = b.chart->sample(state);
            Eigen::MatrixXd m = frame_matrix(all, p);
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
            double sv = svd.singularValues().minCoeff();
            rep.min_transversal_sv = std::min(rep.min_transversal_sv, sv);
            if (sv <= kResidualTol) {
                rep.transversal = false;
                detail << "frames not transverse at " << point_to_string(p) << " (sigma_min "
                       << sv << "); ";
                break;
            }
        }
    } else {
        rep.transversal = false;
        rep.min_transversal_sv = 0.0;
        detail << "combined frame rank " << all.size() << " != dimension "
               << b.chart->dimension() << "; ";
    }

    rep.pass = rep.symplectic && rep.f1_involutive && rep.f2_involutive && rep.f1_lagrangian &&
               rep.f2_lagrangian && rep.transversal;
    rep.detail = detail.str();
    return rep;
}

namespace {

// Pointwise span equality of two frames, by mutual least-squares membership.
bool spans_equal(const std::vector<VectorField>& a, const std::vector<VectorField>& b,
                 const ChartPtr& chart, int samples, std::uint64_t seed) {
    if (a.empty() || b.empty()) return a.empty() && b.empty();
    std::uint64_t state = seed;
    for (int s = 0; s < samples; ++s) {
        Point p = chart->sample(state);
        Eigen::MatrixXd ma = frame_matrix(a, p), mb = frame_matrix(b, p);
        for (int c = 0; c < ma.cols(); ++c)
            if (least_squares_residual(mb, ma.col(c)) > kResidualTol) return false;
        for (int c = 0; c < mb.cols(); ++c)
            if (least_squares_residual(ma, mb.col(c)) > kResidualTol) return false;
    }
    return true;
}

}  // namespace

bool adapted_chart_check(const BiLagrangianStructure& b, int samples, std::uint64_t seed) {
    const int m = b.chart->dimension();
    if (m % 2 != 0) return false;
    const int n = m / 2;
    std::vector<VectorField> pfields, qfields;
    for (int i = 0; i < n; ++i) pfields.push_back(VectorField::coordinate(b.chart, i));
    for (int i = 0; i < n; ++i) qfields.push_back(VectorField::coordinate(b.chart, n + i));
    if (!spans_equal(b.f1.fields, pfields, b.chart, samples, seed)) return false;
    if (!spans_equal(b.f2.fields, qfields, b.chart, samples, seed)) return false;

    DifferentialForm canon = canonical_symplectic(b.chart);
    DifferentialForm diffw = b.omega - canon;
    for (const auto& [idx, coeff] : diffw.terms()) {
        try {
            if (!approx_equal(coeff, ScalarExpr(), b.chart->domain(), samples, 1e-9, seed))
                return false;
        } catch (const InconclusiveError&) {
            return false;
        }
    }
    return true;
}

DifferentialForm canonical_symplectic(ChartPtr chart) {
    const int m = chart->dimension();
    if (m % 2 != 0) throw Error("canonical_symplectic: chart dimension must be even");
    const int n = m / 2;
    DifferentialForm w(chart, 2);
    for (int i = 0; i < n; ++i)
        w.add_term({i, n + i}, ScalarExpr::rational(-1));  // dq^i ^ dp^i = -dp^i ^ dq^i
    return w;
}

// ---------------------------------------------------------------------------
// Symbolic linear algebra

ScalarExpr symbolic_determinant(const std::vector<std::vector<ScalarExpr>>& m) {
    const std::size_t n = m.size();
    if (n == 0) return ScalarExpr::rational(1);
    for (const auto& row : m)
        if (row.size() != n) throw Error("symbolic_determinant: matrix is not square");
    if (n == 1) return m[0][0];
    if (n == 2) return m[0][0] * m[1][1] - m[0][1] * m[1][0];
    ScalarExpr det;
    for (std::size_t c = 0; c < n; ++c) {
        if (m[0][c].is_constant(0.0)) continue;
        std::vector<std::vector<ScalarExpr>> minor;
        minor.reserve(n - 1);
        for (std::size_t r = 1; r < n; ++r) {
            std::vector<ScalarExpr> row;
            row.reserve(n - 1);
            for (std::size_t cc = 0; cc < n; ++cc)
                if (cc != c) row.push_back(m[r][cc]);
            minor.push_back(std::move(row));
        }
        ScalarExpr term = m[0][c] * symbolic_determinant(minor);
        det = (c % 2 == 0) ? det + term : det - term;
    }
    return det;
}

std::vector<ScalarExpr> cramer_solve(const std::vector<std::vector<ScalarExpr>>& m,
                                     const std::vector<ScalarExpr>& rhs) {
    const std::size_t n = m.size();
    if (rhs.size() != n) throw Error("cramer_solve: size mismatch");
    ScalarExpr det = symbolic_determinant(m);
    std::vector<ScalarExpr> x(n);
    for (std::size_t c = 0; c < n; ++c) {
        std::vector<std::vector<ScalarExpr>> mc = m;
        for (std::size_t r = 0; r < n; ++r) mc[r][c] = rhs[r];
        x[c] = symbolic_determinant(mc) / det;
    }
    return x;
}

std::vector<ScalarExpr> expand_in_frame(const std::vector<VectorField>& frame,
                                        const VectorField& x) {
    if (frame.empty()) throw Error("expand_in_frame: empty frame");
    const int m = x.chart->dimension();
    if (int(frame.size()) != m)
        throw Error("expand_in_frame: frame size " + std::to_string(frame.size()) +
                    " != chart dimension " + std::to_string(m));
    std::vector<std::vector<ScalarExpr>> mat(m, std::vector<ScalarExpr>(m));
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) mat[r][c] = frame[c].components[r];
    return cramer_solve(mat, x.components);
}

}  // namespace bilag
