#include <cctype>
#include <charconv>
#include <cmath>

#include "spildl/concept.hpp"

namespace spildl {

namespace {

std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::string quote(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void render_into(const Concept& c, const SymbolTable& st, std::string& out) {
    auto role = [&] {
        if (c.role().inverse) out += "inverse ";
        out += st.roles.name(c.role().role);
    };
    switch (c.tag()) {
        case Tag::Top: out += "Thing"; return;
        case Tag::Atomic: out += st.classes.name(c.id()); return;
        case Tag::NotAtomic: out += "(not " + st.classes.name(c.id()) + ")"; return;
        case Tag::Exists:
        case Tag::Forall:
            out += '(';
            role();
            out += c.tag() == Tag::Exists ? " some " : " only ";
            render_into(c.filler(), st, out);
            out += ')';
            return;
        case Tag::MinCard:
        case Tag::MaxCard:
            out += '(';
            role();
            out += c.tag() == Tag::MinCard ? " min " : " max ";
            out += std::to_string(c.cardinality()) + " ";
            render_into(c.filler(), st, out);
            out += ')';
            return;
        case Tag::BoolEq:
            out += "(" + st.boolean_roles.name(c.id()) + " = " + (c.bool_value() ? "true" : "false") + ")";
            return;
        case Tag::NumGeq:
        case Tag::NumLeq:
            out += "(" + st.numeric_roles.name(c.id()) + (c.tag() == Tag::NumGeq ? " >= " : " <= ") +
                   format_double(c.numeric_value()) + ")";
            return;
        case Tag::StrEq:
            out += "(" + st.string_roles.name(c.id()) + " = " +
                   quote(st.string_values.at(c.id()).name(c.string_value())) + ")";
            return;
        case Tag::And:
        case Tag::Or: {
            out += '(';
            bool first = true;
            for (const auto& ch : c.children()) {
                if (!first) out += c.tag() == Tag::And ? " and " : " or ";
                first = false;
                render_into(ch, st, out);
            }
            out += ')';
            return;
        }
    }
}

enum class Tok { Word, String, LParen, RParen, Op, End };

struct Token {
    Tok kind;
    std::string text;
    std::size_t column;
};

std::vector<Token> lex(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    auto word_char = [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' || c == ':' ||
               c == '+' || c == '/' || c == '#';
    };
    while (i < s.size()) {
        const char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (c == '(' || c == ')') {
            out.push_back({c == '(' ? Tok::LParen : Tok::RParen, std::string(1, c), i});
            ++i;
        } else if (c == '=') {
            out.push_back({Tok::Op, "=", i});
            ++i;
        } else if ((c == '>' || c == '<') && i + 1 < s.size() && s[i + 1] == '=') {
            out.push_back({Tok::Op, std::string(s.substr(i, 2)), i});
            i += 2;
        } else if (c == '"') {
            const auto start = i++;
            std::string text;
            bool closed = false;
            while (i < s.size()) {
                if (s[i] == '\\' && i + 1 < s.size()) {
                    text.push_back(s[i + 1]);
                    i += 2;
                } else if (s[i] == '"') {
                    ++i;
                    closed = true;
                    break;
                } else {
                    text.push_back(s[i++]);
                }
            }
            if (!closed) throw ConceptParseError(start, "unterminated string literal");
            out.push_back({Tok::String, std::move(text), start});
        } else if (word_char(c)) {
            const auto start = i;
            while (i < s.size() && word_char(s[i])) ++i;
            out.push_back({Tok::Word, std::string(s.substr(start, i - start)), start});
        } else {
            throw ConceptParseError(i, std::string("unexpected character '") + c + "'");
        }
    }
    out.push_back({Tok::End, "", s.size()});
    return out;
}

bool is_keyword(const std::string& w) {
    return w == "and" || w == "or" || w == "not" || w == "some" || w == "only" || w == "min" || w == "max" ||
           w == "inverse";
}

class ConceptParser {
public:
    ConceptParser(std::string_view text, const SymbolTable& st) : toks_(lex(text)), st_(st) {}

    Concept parse() {
        auto c = expr();
        if (peek().kind != Tok::End) fail(peek(), "unexpected '" + peek().text + "'");
        return c;
    }

private:
    const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(pos_ + ahead, toks_.size() - 1)]; }
    const Token& next() { return toks_[std::min(pos_++, toks_.size() - 1)]; }

    [[noreturn]] void fail(const Token& t, const std::string& msg) const {
        throw ConceptParseError(t.column, msg + " at column " + std::to_string(t.column));
    }

    void expect(Tok kind, const char* what) {
        if (peek().kind != kind) fail(peek(), std::string("expected ") + what);
        ++pos_;
    }

    bool at_word(const char* w, std::size_t ahead = 0) const {
        return peek(ahead).kind == Tok::Word && peek(ahead).text == w;
    }

    Concept expr() {
        std::vector<Concept> ops{primary()};
        std::string conn;
        while (at_word("and") || at_word("or")) {
            const auto& t = next();
            if (!conn.empty() && conn != t.text) fail(t, "mixed 'and'/'or' without parentheses");
            conn = t.text;
            ops.push_back(primary());
        }
        if (ops.size() == 1) return std::move(ops.front());
        return conn == "and" ? Concept::conj(std::move(ops)) : Concept::disj(std::move(ops));
    }

    Concept primary() {
        const auto& t = peek();
        if (t.kind == Tok::LParen) {
            ++pos_;
            auto c = body();
            expect(Tok::RParen, "')'");
            return c;
        }
        if (t.kind != Tok::Word || is_keyword(t.text)) fail(t, "expected concept");
        ++pos_;
        if (t.text == "Thing") return Concept::top();
        return Concept::atomic(lookup(st_.classes, t, "class"));
    }

    Concept body() {
        if (at_word("not")) {
            ++pos_;
            const auto& t = next();
            if (t.kind != Tok::Word || is_keyword(t.text)) fail(t, "expected class name after 'not'");
            return Concept::not_atomic(lookup(st_.classes, t, "class"));
        }
        const bool inverse = at_word("inverse");
        const std::size_t name_at = inverse ? 1 : 0;
        const auto& after = peek(name_at + 1);
        if (peek(name_at).kind == Tok::Word && after.kind == Tok::Word &&
            (after.text == "some" || after.text == "only" || after.text == "min" || after.text == "max"))
            return role_restriction(inverse);
        if (inverse) fail(peek(1), "expected role restriction after 'inverse'");
        if (peek().kind == Tok::Word && peek(1).kind == Tok::Op) return data_restriction();
        return expr();
    }

    Concept role_restriction(bool inverse) {
        if (inverse) ++pos_;
        const auto& name = next();
        const RoleExpr role{lookup(st_.roles, name, "role"), inverse};
        const auto quant = next().text;
        if (quant == "some") return Concept::exists(role, primary());
        if (quant == "only") return Concept::forall(role, primary());
        const auto& num = next();
        std::uint32_t n = 0;
        auto [p, ec] = std::from_chars(num.text.data(), num.text.data() + num.text.size(), n);
        if (num.kind != Tok::Word || ec != std::errc{} || p != num.text.data() + num.text.size() || n > 0xFFFF)
            fail(num, "expected cardinality");
        if (quant == "min") {
            if (n == 0) fail(num, "min cardinality must be positive");
            return Concept::min_card(n, role, primary());
        }
        return Concept::max_card(n, role, primary());
    }

    Concept data_restriction() {
        const auto& name = next();
        const auto& op = next();
        const auto& lit = next();
        if (op.text == "=") {
            if (lit.kind == Tok::String) {
                const auto r = lookup(st_.string_roles, name, "string role");
                const auto v = st_.string_values.at(r).find(lit.text);
                if (!v) fail(lit, "unknown value \"" + lit.text + "\" for string role '" + name.text + "'");
                return Concept::str_eq(r, *v);
            }
            if (lit.kind == Tok::Word && (lit.text == "true" || lit.text == "false"))
                return Concept::bool_eq(lookup(st_.boolean_roles, name, "boolean role"), lit.text == "true");
            fail(lit, "expected true, false or a quoted string");
        }
        const auto r = lookup(st_.numeric_roles, name, "numeric role");
        double v = 0;
        auto [p, ec] = std::from_chars(lit.text.data(), lit.text.data() + lit.text.size(), v);
        if (lit.kind != Tok::Word || ec != std::errc{} || p != lit.text.data() + lit.text.size() || std::isnan(v))
            fail(lit, "expected number");
        return op.text == ">=" ? Concept::num_geq(r, v) : Concept::num_leq(r, v);
    }

    std::uint32_t lookup(const NameTable& table, const Token& t, const char* what) const {
        if (t.kind != Tok::Word) fail(t, std::string("expected ") + what + " name");
        if (auto id = table.find(t.text)) return *id;
        fail(t, std::string("unknown ") + what + " '" + t.text + "'");
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    const SymbolTable& st_;
};

}  // namespace

std::string render(const Concept& c, const SymbolTable& symbols) {
    std::string out;
    render_into(c, symbols, out);
    return out;
}

Concept parse_concept(std::string_view text, const SymbolTable& symbols) {
    return ConceptParser(text, symbols).parse();
}

}  // namespace spildl
