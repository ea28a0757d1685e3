#include "bilag/expr.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace bilag {
namespace detail {

enum class Kind { Const, Var, Add, Sub, Mul, Div, Pow, Neg, Sin, Cos, Exp, Log };

struct Node {
    Kind kind;
    // Const payload: exact rational when `exact`, IEEE double otherwise.
    bool exact = false;
    std::int64_t num = 0, den = 1;
    double value = 0.0;
    // Var payload.
    std::string name;
    // Children.
    std::shared_ptr<const Node> a, b;
    int exponent = 0;

    double const_value() const { return exact ? double(num) / double(den) : value; }
};

namespace {

using NodePtr = std::shared_ptr<const Node>;

NodePtr make_rational(std::int64_t num, std::int64_t den) {
    if (den < 0) { num = -num; den = -den; }
    if (den != 0) {
        std::int64_t g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) { num /= g; den /= g; }
    }
    auto n = std::make_shared<Node>();
    n->kind = Kind::Const;
    n->exact = true;
    n->num = num;
    n->den = den;
    return n;
}

NodePtr make_double(double v) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Const;
    n->exact = false;
    n->value = v;
    return n;
}

bool is_const(const NodePtr& n) { return n->kind == Kind::Const; }

bool const_equals(const NodePtr& n, std::int64_t num, std::int64_t den = 1) {
    if (n->kind != Kind::Const) return false;
    if (n->exact) return n->num * den == num * n->den;
    return n->value == double(num) / double(den);
}

bool fits_i64(__int128 v) {
    return v <= __int128(INT64_MAX) && v >= __int128(INT64_MIN);
}

// Exact rational fold; returns nullptr when the result would overflow.
NodePtr fold_rational(Kind k, const Node& x, const Node& y) {
    __int128 n = 0, d = 1;
    switch (k) {
        case Kind::Add:
            n = __int128(x.num) * y.den + __int128(y.num) * x.den;
            d = __int128(x.den) * y.den;
            break;
        case Kind::Sub:
            n = __int128(x.num) * y.den - __int128(y.num) * x.den;
            d = __int128(x.den) * y.den;
            break;
        case Kind::Mul:
            n = __int128(x.num) * y.num;
            d = __int128(x.den) * y.den;
            break;
        case Kind::Div:
            n = __int128(x.num) * y.den;
            d = __int128(x.den) * y.num;
            break;
        default:
            return nullptr;
    }
    if (d == 0) return nullptr;
    if (d < 0) { n = -n; d = -d; }
    // Reduce in 128 bits before the range check.
    __int128 a = n < 0 ? -n : n, b = d;
    while (b) { __int128 t = a % b; a = b; b = t; }
    if (a > 1) { n /= a; d /= a; }
    if (!fits_i64(n) || !fits_i64(d)) return nullptr;
    return make_rational(std::int64_t(n), std::int64_t(d));
}

NodePtr unary(Kind k, NodePtr a);
NodePtr binary(Kind k, NodePtr a, NodePtr b);

NodePtr neg(NodePtr a) {
    if (a->kind == Kind::Neg) return a->a;
    if (is_const(a)) {
        if (a->exact) return make_rational(-a->num, a->den);
        return make_double(-a->value);
    }
    return unary(Kind::Neg, std::move(a));
}

NodePtr binary(Kind k, NodePtr a, NodePtr b) {
    // 0/1 absorption.
    switch (k) {
        case Kind::Add:
            if (const_equals(a, 0)) return b;
            if (const_equals(b, 0)) return a;
            break;
        case Kind::Sub:
            if (const_equals(b, 0)) return a;
            if (const_equals(a, 0)) return neg(std::move(b));
            break;
        case Kind::Mul:
            if (const_equals(a, 0) || const_equals(b, 1)) return a;
            if (const_equals(b, 0) || const_equals(a, 1)) return b;
            if (const_equals(a, -1)) return neg(std::move(b));
            if (const_equals(b, -1)) return neg(std::move(a));
            break;
        case Kind::Div:
            if (const_equals(b, 1)) return a;
            if (const_equals(a, 0) && !const_equals(b, 0)) return a;
            if (const_equals(b, -1)) return neg(std::move(a));
            break;
        default:
            break;
    }
    // Constant folding.
    if (is_const(a) && is_const(b)) {
        if (a->exact && b->exact) {
            if (!(k == Kind::Div && b->num == 0)) {
                if (NodePtr f = fold_rational(k, *a, *b)) return f;
            }
        }
        if (!(k == Kind::Div && b->const_value() == 0.0)) {
            double x = a->const_value(), y = b->const_value(), r = 0;
            switch (k) {
                case Kind::Add: r = x + y; break;
                case Kind::Sub: r = x - y; break;
                case Kind::Mul: r = x * y; break;
                case Kind::Div: r = x / y; break;
                default: r = std::nan("");
            }
            if (std::isfinite(r)) return make_double(r);
        }
        // Fall through: keep the node so evaluation reports the error.
    }
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

NodePtr unary(Kind k, NodePtr a) {
    if (k != Kind::Neg && is_const(a)) {
        // Exact special values, then numeric folding where safe.
        if (const_equals(a, 0)) {
            if (k == Kind::Sin) return make_rational(0, 1);
            if (k == Kind::Cos || k == Kind::Exp) return make_rational(1, 1);
        }
        if (const_equals(a, 1) && k == Kind::Log) return make_rational(0, 1);
        double x = a->const_value(), r = 0;
        bool ok = true;
        switch (k) {
            case Kind::Sin: r = std::sin(x); break;
            case Kind::Cos: r = std::cos(x); break;
            case Kind::Exp: r = std::exp(x); break;
            case Kind::Log:
                if (x > 0) r = std::log(x); else ok = false;
                break;
            default: ok = false;
        }
        if (ok && std::isfinite(r)) return make_double(r);
    }
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->a = std::move(a);
    return n;
}

NodePtr powi(NodePtr base, int e) {
    if (e == 0) return make_rational(1, 1);
    if (e == 1) return base;
    if (is_const(base)) {
        if (base->exact && e > 0 && e <= 62) {
            __int128 n = 1, d = 1;
            bool ok = true;
            for (int i = 0; i < e; ++i) {
                n *= base->num;
                d *= base->den;
                if (!fits_i64(n) || !fits_i64(d)) { ok = false; break; }
            }
            if (ok) return make_rational(std::int64_t(n), std::int64_t(d));
        }
        double v = std::pow(base->const_value(), double(e));
        if (std::isfinite(v) && !(e < 0 && base->const_value() == 0.0)) return make_double(v);
    }
    if (const_equals(base, 0) && e > 0) return base;
    if (const_equals(base, 1)) return base;
    auto n = std::make_shared<Node>();
    n->kind = Kind::Pow;
    n->a = std::move(base);
    n->exponent = e;
    return n;
}

int precedence(const Node& n) {
    switch (n.kind) {
        case Kind::Add:
        case Kind::Sub: return 1;
        case Kind::Mul:
        case Kind::Div: return 2;
        case Kind::Neg: return 3;
        case Kind::Pow: return 4;
        case Kind::Const:
            if (n.exact && n.den != 1) return 2;   // prints as num/den
            if (n.const_value() < 0) return 3;     // leading minus
            return 5;
        default: return 5;  // Var, function calls
    }
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void print(const Node& n, std::string& out);

void print_child(const Node& child, int min_prec, std::string& out) {
    if (precedence(child) < min_prec) {
        out += '(';
        print(child, out);
        out += ')';
    } else {
        print(child, out);
    }
}

void print(const Node& n, std::string& out) {
    switch (n.kind) {
        case Kind::Const:
            if (n.exact) {
                out += std::to_string(n.num);
                if (n.den != 1) { out += '/'; out += std::to_string(n.den); }
            } else {
                out += fmt_double(n.value);
            }
            break;
        case Kind::Var: out += n.name; break;
        case Kind::Add:
            print_child(*n.a, 1, out); out += " + "; print_child(*n.b, 2, out);
            break;
        case Kind::Sub:
            print_child(*n.a, 1, out); out += " - "; print_child(*n.b, 2, out);
            break;
        case Kind::Mul:
            print_child(*n.a, 2, out); out += '*'; print_child(*n.b, 3, out);
            break;
        case Kind::Div:
            print_child(*n.a, 2, out); out += '/'; print_child(*n.b, 5, out);
            break;
        case Kind::Neg:
            out += '-'; print_child(*n.a, 3, out);
            break;
        case Kind::Pow:
            print_child(*n.a, 5, out);
            out += '^';
            if (n.exponent < 0) { out += '('; out += std::to_string(n.exponent); out += ')'; }
            else out += std::to_string(n.exponent);
            break;
        case Kind::Sin: out += "sin("; print(*n.a, out); out += ')'; break;
        case Kind::Cos: out += "cos("; print(*n.a, out); out += ')'; break;
        case Kind::Exp: out += "exp("; print(*n.a, out); out += ')'; break;
        case Kind::Log: out += "log("; print(*n.a, out); out += ')'; break;
    }
}

double eval_node(const Node& n, const Point& p) {
    switch (n.kind) {
        case Kind::Const: return n.const_value();
        case Kind::Var: {
            auto it = p.find(n.name);
            if (it == p.end()) throw Error("eval: variable '" + n.name + "' not supplied");
            return it->second;
        }
        case Kind::Add: return eval_node(*n.a, p) + eval_node(*n.b, p);
        case Kind::Sub: return eval_node(*n.a, p) - eval_node(*n.b, p);
        case Kind::Mul: return eval_node(*n.a, p) * eval_node(*n.b, p);
        case Kind::Div: {
            double num = eval_node(*n.a, p), den = eval_node(*n.b, p);
            if (den == 0.0) {
                std::string s;
                print(n, s);
                throw DomainError("division by zero", s);
            }
            return num / den;
        }
        case Kind::Pow: {
            double b = eval_node(*n.a, p);
            if (b == 0.0 && n.exponent < 0) {
                std::string s;
                print(n, s);
                throw DomainError("zero raised to a negative power", s);
            }
            return std::pow(b, double(n.exponent));
        }
        case Kind::Neg: return -eval_node(*n.a, p);
        case Kind::Sin: return std::sin(eval_node(*n.a, p));
        case Kind::Cos: return std::cos(eval_node(*n.a, p));
        case Kind::Exp: return std::exp(eval_node(*n.a, p));
        case Kind::Log: {
            double x = eval_node(*n.a, p);
            if (x <= 0.0) {
                std::string s;
                print(n, s);
                throw DomainError("log of a non-positive value", s);
            }
            return std::log(x);
        }
    }
    throw Error("eval: corrupt expression node");
}

NodePtr diff_node(const NodePtr& n, const std::string& var) {
    switch (n->kind) {
        case Kind::Const: return make_rational(0, 1);
        case Kind::Var: return make_rational(n->name == var ? 1 : 0, 1);
        case Kind::Add: return binary(Kind::Add, diff_node(n->a, var), diff_node(n->b, var));
        case Kind::Sub: return binary(Kind::Sub, diff_node(n->a, var), diff_node(n->b, var));
        case Kind::Mul:
            return binary(Kind::Add, binary(Kind::Mul, diff_node(n->a, var), n->b),
                          binary(Kind::Mul, n->a, diff_node(n->b, var)));
        case Kind::Div:
            // (u'v - uv') / v^2
            return binary(Kind::Div,
                          binary(Kind::Sub, binary(Kind::Mul, diff_node(n->a, var), n->b),
                                 binary(Kind::Mul, n->a, diff_node(n->b, var))),
                          powi(n->b, 2));
        case Kind::Pow:
            // n * u^(n-1) * u'
            return binary(Kind::Mul,
                          binary(Kind::Mul, make_rational(n->exponent, 1), powi(n->a, n->exponent - 1)),
                          diff_node(n->a, var));
        case Kind::Neg: return neg(diff_node(n->a, var));
        case Kind::Sin: return binary(Kind::Mul, unary(Kind::Cos, n->a), diff_node(n->a, var));
        case Kind::Cos: return neg(binary(Kind::Mul, unary(Kind::Sin, n->a), diff_node(n->a, var)));
        case Kind::Exp: return binary(Kind::Mul, unary(Kind::Exp, n->a), diff_node(n->a, var));
        case Kind::Log: return binary(Kind::Div, diff_node(n->a, var), n->a);
    }
    throw Error("diff: corrupt expression node");
}

void collect_vars(const Node& n, std::set<std::string>& out) {
    switch (n.kind) {
        case Kind::Var: out.insert(n.name); break;
        case Kind::Const: break;
        default:
            if (n.a) collect_vars(*n.a, out);
            if (n.b) collect_vars(*n.b, out);
    }
}

}  // namespace
}  // namespace detail

using detail::Kind;
using detail::Node;

ScalarExpr::ScalarExpr() : node_(detail::make_rational(0, 1)) {}

ScalarExpr ScalarExpr::constant(double v) {
    // Integral doubles of modest size stay exact.
    if (v == std::floor(v) && std::abs(v) < 1e15)
        return ScalarExpr(detail::make_rational(std::int64_t(v), 1));
    return ScalarExpr(detail::make_double(v));
}

ScalarExpr ScalarExpr::rational(std::int64_t num, std::int64_t den) {
    if (den == 0) throw Error("rational constant with zero denominator");
    return ScalarExpr(detail::make_rational(num, den));
}

ScalarExpr ScalarExpr::variable(const std::string& name) {
    if (name.empty()) throw Error("variable name must be non-empty");
    auto n = std::make_shared<Node>();
    n->kind = Kind::Var;
    n->name = name;
    return ScalarExpr(std::move(n));
}

ScalarExpr operator+(const ScalarExpr& a, const ScalarExpr& b) {
    return ScalarExpr(detail::binary(Kind::Add, a.node_, b.node_));
}
ScalarExpr operator-(const ScalarExpr& a, const ScalarExpr& b) {
    return ScalarExpr(detail::binary(Kind::Sub, a.node_, b.node_));
}
ScalarExpr operator*(const ScalarExpr& a, const ScalarExpr& b) {
    return ScalarExpr(detail::binary(Kind::Mul, a.node_, b.node_));
}
ScalarExpr operator/(const ScalarExpr& a, const ScalarExpr& b) {
    return ScalarExpr(detail::binary(Kind::Div, a.node_, b.node_));
}
ScalarExpr operator-(const ScalarExpr& a) { return ScalarExpr(detail::neg(a.node_)); }

ScalarExpr ScalarExpr::sin(const ScalarExpr& a) { return ScalarExpr(detail::unary(Kind::Sin, a.node_)); }
ScalarExpr ScalarExpr::cos(const ScalarExpr& a) { return ScalarExpr(detail::unary(Kind::Cos, a.node_)); }
ScalarExpr ScalarExpr::exp(const ScalarExpr& a) { return ScalarExpr(detail::unary(Kind::Exp, a.node_)); }
ScalarExpr ScalarExpr::log(const ScalarExpr& a) { return ScalarExpr(detail::unary(Kind::Log, a.node_)); }
ScalarExpr ScalarExpr::pow(const ScalarExpr& base, int exponent) {
    return ScalarExpr(detail::powi(base.node_, exponent));
}

ScalarExpr ScalarExpr::diff(const std::string& var) const {
    return ScalarExpr(detail::diff_node(node_, var));
}

double ScalarExpr::eval(const Point& point) const { return detail::eval_node(*node_, point); }

ScalarExpr ScalarExpr::substitute(const std::map<std::string, ScalarExpr>& repl) const {
    // Rebuild bottom-up through the folding constructors.
    struct Rec {
        const std::map<std::string, ScalarExpr>& repl;
        ScalarExpr run(const std::shared_ptr<const Node>& n) {
            switch (n->kind) {
                case Kind::Const: return ScalarExpr(n);
                case Kind::Var: {
                    auto it = repl.find(n->name);
                    if (it != repl.end()) return it->second;
                    return ScalarExpr(n);
                }
                case Kind::Add: return run(n->a) + run(n->b);
                case Kind::Sub: return run(n->a) - run(n->b);
                case Kind::Mul: return run(n->a) * run(n->b);
                case Kind::Div: return run(n->a) / run(n->b);
                case Kind::Pow: return ScalarExpr::pow(run(n->a), n->exponent);
                case Kind::Neg: return -run(n->a);
                case Kind::Sin: return ScalarExpr::sin(run(n->a));
                case Kind::Cos: return ScalarExpr::cos(run(n->a));
                case Kind::Exp: return ScalarExpr::exp(run(n->a));
                case Kind::Log: return ScalarExpr::log(run(n->a));
            }
            throw Error("substitute: corrupt expression node");
        }
    };
    return Rec{repl}.run(node_);
}

std::set<std::string> ScalarExpr::variables() const {
    std::set<std::string> out;
    detail::collect_vars(*node_, out);
    return out;
}

bool ScalarExpr::is_constant(double v) const {
    return node_->kind == Kind::Const && node_->const_value() == v;
}

std::string ScalarExpr::to_string() const {
    std::string out;
    detail::print(*node_, out);
    return out;
}

// ---------------------------------------------------------------------------
// Domain

void Domain::add(const std::string& var, double lo, double hi, bool periodic) {
    if (!(std::isfinite(lo) && std::isfinite(hi)) || !(lo < hi))
        throw Error("domain bounds for '" + var + "' must be finite with lo < hi");
    if (periodic && (lo != 0.0 || hi != 1.0))
        throw Error("periodic variable '" + var + "' must have bounds [0,1)");
    vars_[var] = Interval{lo, hi, periodic};
}

const Domain::Interval& Domain::interval(const std::string& var) const {
    auto it = vars_.find(var);
    if (it == vars_.end()) throw Error("domain: unknown variable '" + var + "'");
    return it->second;
}

Point Domain::reduce(Point p) const {
    for (auto& [name, value] : p) {
        auto it = vars_.find(name);
        if (it != vars_.end() && it->second.periodic) {
            value -= std::floor(value);
            if (value >= 1.0) value = 0.0;  // guard against rounding at the seam
        }
    }
    return p;
}

Point Domain::sample(std::uint64_t& rng_state) const {
    Point p;
    for (const auto& [name, iv] : vars_)
        p[name] = iv.lo + (iv.hi - iv.lo) * next_uniform(rng_state);
    return p;
}

double next_uniform(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    return double(z >> 11) * 0x1.0p-53;
}

// ---------------------------------------------------------------------------
// approx_equal

ApproxResult approx_equal(const ScalarExpr& e1, const ScalarExpr& e2, const Domain& dom,
                          int samples, double tol, std::uint64_t seed) {
    if (samples < 1) throw Error("approx_equal: samples must be >= 1");
    if (!(tol > 0)) throw Error("approx_equal: tol must be > 0");
    for (const auto& v : e1.variables())
        if (!dom.contains(v)) throw Error("approx_equal: variable '" + v + "' missing from domain");
    for (const auto& v : e2.variables())
        if (!dom.contains(v)) throw Error("approx_equal: variable '" + v + "' missing from domain");

    ApproxResult res;
    res.equal = true;
    std::uint64_t state = seed;
    for (int i = 0; i < samples; ++i) {
        Point p = dom.reduce(dom.sample(state));
        double a, b;
        try {
            a = e1.eval(p);
            b = e2.eval(p);
        } catch (const DomainError&) {
            ++res.skipped;
            continue;
        }
        ++res.compared;
        double scale = 1.0 + std::max(std::abs(a), std::abs(b));
        double dev = std::abs(a - b) / scale;
        if (dev > res.max_deviation) res.max_deviation = dev;
        if (std::abs(a - b) > tol * scale) {
            res.equal = false;
            if (!res.witness) res.witness = p;
        }
    }
    if (res.skipped * 2 > samples)
        throw InconclusiveError("approx_equal: more than half of the samples hit domain errors (" +
                                std::to_string(res.skipped) + "/" + std::to_string(samples) + ")");
    return res;
}

// ---------------------------------------------------------------------------
// CompiledExpr

CompiledExpr::CompiledExpr(const ScalarExpr& e, const std::vector<std::string>& var_order) {
    nvars_ = var_order.size();
    std::map<std::string, int> slot;
    for (std::size_t i = 0; i < var_order.size(); ++i) slot[var_order[i]] = int(i);

    struct Rec {
        std::vector<Op>& ops;
        const std::map<std::string, int>& slot;
        void run(const Node& n) {
            switch (n.kind) {
                case Kind::Const: ops.push_back({Op::PushConst, n.const_value(), 0}); return;
                case Kind::Var: {
                    auto it = slot.find(n.name);
                    if (it == slot.end()) throw Error("compile: variable '" + n.name + "' not in ordering");
                    ops.push_back({Op::LoadVar, 0.0, it->second});
                    return;
                }
                case Kind::Add: run(*n.a); run(*n.b); ops.push_back({Op::Add, 0, 0}); return;
                case Kind::Sub: run(*n.a); run(*n.b); ops.push_back({Op::Sub, 0, 0}); return;
                case Kind::Mul: run(*n.a); run(*n.b); ops.push_back({Op::Mul, 0, 0}); return;
                case Kind::Div: run(*n.a); run(*n.b); ops.push_back({Op::Div, 0, 0}); return;
                case Kind::Pow: run(*n.a); ops.push_back({Op::PowI, 0, n.exponent}); return;
                case Kind::Neg: run(*n.a); ops.push_back({Op::Neg, 0, 0}); return;
                case Kind::Sin: run(*n.a); ops.push_back({Op::Sin, 0, 0}); return;
                case Kind::Cos: run(*n.a); ops.push_back({Op::Cos, 0, 0}); return;
                case Kind::Exp: run(*n.a); ops.push_back({Op::Exp, 0, 0}); return;
                case Kind::Log: run(*n.a); ops.push_back({Op::Log, 0, 0}); return;
            }
            throw Error("compile: corrupt expression node");
        }
    };
    Rec{ops_, slot}.run(e.node());
}

double CompiledExpr::eval(const double* vars) const {
    double local[64];
    double* sp = local;
    std::vector<double> heap;
    if (ops_.size() > 64) {  // depth is bounded by op count
        heap.resize(ops_.size());
        sp = heap.data();
    }
    std::size_t top = 0;
    for (const auto& op : ops_) {
        switch (op.kind) {
            case Op::PushConst: sp[top++] = op.value; break;
            case Op::LoadVar: sp[top++] = vars[op.slot]; break;
            case Op::Add: --top; sp[top - 1] += sp[top]; break;
            case Op::Sub: --top; sp[top - 1] -= sp[top]; break;
            case Op::Mul: --top; sp[top - 1] *= sp[top]; break;
            case Op::Div: --top; sp[top - 1] /= sp[top]; break;
            case Op::Neg: sp[top - 1] = -sp[top - 1]; break;
            case Op::Sin: sp[top - 1] = std::sin(sp[top - 1]); break;
            case Op::Cos: sp[top - 1] = std::cos(sp[top - 1]); break;
            case Op::Exp: sp[top - 1] = std::exp(sp[top - 1]); break;
            case Op::Log: sp[top - 1] = sp[top - 1] > 0 ? std::log(sp[top - 1]) : std::nan(""); break;
            case Op::PowI: sp[top - 1] = std::pow(sp[top - 1], double(op.slot)); break;
        }
    }
    return top == 1 ? sp[0] : std::nan("");
}

}  // namespace bilag
