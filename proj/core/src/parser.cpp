#include <cctype>
#include <cstdlib>

#include "bilag/expr.hpp"

namespace bilag {
namespace {

// Recursive-descent parser for the expression grammar:
//   expr   := term (('+'|'-') term)*
//   term   := unary (('*'|'/') unary)*
//   unary  := '-' unary | power
//   power  := primary ('^' int)?          (right side must be an integer)
//   primary:= number | ident | ident '(' expr ')' | '(' expr ')'
struct Parser {
    const std::string& s;
    std::size_t pos = 0;

    void skip_ws() {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }

    bool eat(char c) {
        skip_ws();
        if (pos < s.size() && s[pos] == c) { ++pos; return true; }
        return false;
    }

    char peek() {
        skip_ws();
        return pos < s.size() ? s[pos] : '\0';
    }

    [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, pos); }

    ScalarExpr parse() {
        ScalarExpr e = expr();
        skip_ws();
        if (pos != s.size()) fail("unexpected trailing input");
        return e;
    }

    ScalarExpr expr() {
        ScalarExpr e = term();
        for (;;) {
            if (eat('+')) e = e + term();
            else if (eat('-')) e = e - term();
            else return e;
        }
    }

    ScalarExpr term() {
        ScalarExpr e = unary();
        for (;;) {
            if (eat('*')) e = e * unary();
            else if (eat('/')) e = e / unary();
            else return e;
        }
    }

    ScalarExpr unary() {
        if (eat('-')) return -unary();
        return power();
    }

    ScalarExpr power() {
        ScalarExpr base = primary();
        if (eat('^')) return ScalarExpr::pow(base, exponent());
        return base;
    }

    int exponent() {
        skip_ws();
        bool paren = eat('(');
        bool negative = eat('-');
        skip_ws();
        if (pos >= s.size() || !std::isdigit(static_cast<unsigned char>(s[pos])))
            fail("exponent must be an integer literal");
        long v = 0;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
            v = v * 10 + (s[pos] - '0');
            if (v > 1 << 20) fail("exponent too large");
            ++pos;
        }
        if (paren && !eat(')')) fail("expected ')' after exponent");
        return int(negative ? -v : v);
    }

    ScalarExpr primary() {
        skip_ws();
        if (pos >= s.size()) fail("unexpected end of input");
        char c = s[pos];
        if (c == '(') {
            ++pos;
            ScalarExpr e = expr();
            if (!eat(')')) fail("expected ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        fail(std::string("unexpected character '") + c + "'");
    }

    ScalarExpr number() {
        std::size_t start = pos;
        bool floating = false;
        while (pos < s.size()) {
            char c = s[pos];
            if (std::isdigit(static_cast<unsigned char>(c))) { ++pos; continue; }
            if (c == '.') { floating = true; ++pos; continue; }
            if ((c == 'e' || c == 'E') && pos + 1 < s.size() &&
                (std::isdigit(static_cast<unsigned char>(s[pos + 1])) || s[pos + 1] == '+' ||
                 s[pos + 1] == '-')) {
                floating = true;
                pos += 2;
                while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
                break;
            }
            break;
        }
        std::string text = s.substr(start, pos - start);
        if (!floating) {
            errno = 0;
            char* end = nullptr;
            long long v = std::strtoll(text.c_str(), &end, 10);
            if (errno == 0 && end && *end == '\0') return ScalarExpr::rational(v, 1);
        }
        char* end = nullptr;
        double v = std::strtod(text.c_str(), &end);
        if (!end || *end != '\0') fail("malformed number literal '" + text + "'");
        return ScalarExpr::constant(v);
    }

    ScalarExpr identifier() {
        std::size_t start = pos;
        while (pos < s.size() &&
               (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
            ++pos;
        std::string name = s.substr(start, pos - start);
        if (name == "sin" || name == "cos" || name == "exp" || name == "log") {
            if (!eat('(')) fail("expected '(' after function '" + name + "'");
            ScalarExpr arg = expr();
            if (!eat(')')) fail("expected ')' after function argument");
            if (name == "sin") return ScalarExpr::sin(arg);
            if (name == "cos") return ScalarExpr::cos(arg);
            if (name == "exp") return ScalarExpr::exp(arg);
            return ScalarExpr::log(arg);
        }
        return ScalarExpr::variable(name);
    }
};

}  // namespace

ScalarExpr parse_expr(const std::string& text) {
    Parser p{text};
    return p.parse();
}

}  // namespace bilag
