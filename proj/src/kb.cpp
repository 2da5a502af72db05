#include "spildl/kb.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace spildl {

std::uint32_t NameTable::intern(std::string_view name) {
    if (auto it = ids_.find(std::string(name)); it != ids_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(names_.size());
    names_.emplace_back(name);
    ids_.emplace(names_.back(), id);
    return id;
}

std::optional<std::uint32_t> NameTable::find(std::string_view name) const {
    if (auto it = ids_.find(std::string(name)); it != ids_.end()) return it->second;
    return std::nullopt;
}

std::string_view to_string(SymbolKind kind) {
    switch (kind) {
        case SymbolKind::Class: return "class";
        case SymbolKind::Role: return "role";
        case SymbolKind::NumericRole: return "numeric role";
        case SymbolKind::BooleanRole: return "boolean role";
        case SymbolKind::StringRole: return "string role";
        case SymbolKind::Individual: return "individual";
    }
    return "?";
}

NameTable& SymbolTable::table(SymbolKind kind) {
    return const_cast<NameTable&>(std::as_const(*this).table(kind));
}

const NameTable& SymbolTable::table(SymbolKind kind) const {
    switch (kind) {
        case SymbolKind::Class: return classes;
        case SymbolKind::Role: return roles;
        case SymbolKind::NumericRole: return numeric_roles;
        case SymbolKind::BooleanRole: return boolean_roles;
        case SymbolKind::StringRole: return string_roles;
        case SymbolKind::Individual: return individuals;
    }
    throw std::logic_error("bad symbol kind");
}

std::optional<SymbolKind> SymbolTable::kind_of(std::string_view name) const {
    for (auto k : {SymbolKind::Class, SymbolKind::Role, SymbolKind::NumericRole, SymbolKind::BooleanRole,
                   SymbolKind::StringRole, SymbolKind::Individual})
        if (table(k).find(name)) return k;
    return std::nullopt;
}

bool NumericAssertion::operator==(const NumericAssertion& o) const {
    return sub == o.sub && std::bit_cast<std::uint64_t>(val) == std::bit_cast<std::uint64_t>(o.val);
}

namespace {

bool numeric_less(const NumericAssertion& a, const NumericAssertion& b) {
    if (a.sub != b.sub) return a.sub < b.sub;
    return ordered_bits(a.val) < ordered_bits(b.val);
}

template <class T, class Less = std::less<>>
void sort_unique(std::vector<T>& v, Less less = {}) {
    std::sort(v.begin(), v.end(), less);
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

// Splits a line into whitespace-separated tokens; a token starting with a
// double quote runs to the matching closing quote (\" and \\ escapes).
// Returns the tokens and whether each one was quoted.
struct Token {
    std::string text;
    bool quoted = false;
};

std::vector<Token> tokenize(std::string_view line, std::size_t line_no) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < line.size()) {
        const char c = line[i];
        if (c == ' ' || c == '\t' || c == '\r') {
            ++i;
        } else if (c == '#') {
            break;
        } else if (c == '"') {
            Token t{{}, true};
            ++i;
            bool closed = false;
            while (i < line.size()) {
                if (line[i] == '\\' && i + 1 < line.size()) {
                    t.text.push_back(line[i + 1]);
                    i += 2;
                } else if (line[i] == '"') {
                    ++i;
                    closed = true;
                    break;
                } else {
                    t.text.push_back(line[i++]);
                }
            }
            if (!closed) throw ParseError(line_no, "unterminated string literal");
            out.push_back(std::move(t));
        } else {
            const auto start = i;
            while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r' && line[i] != '#') ++i;
            out.push_back({std::string(line.substr(start, i - start)), false});
        }
    }
    return out;
}

class KbParser {
public:
    ParsedKb run(std::istream& in) {
        std::string line;
        while (std::getline(in, line)) {
            ++line_no_;
            auto tokens = tokenize(line, line_no_);
            if (!tokens.empty()) statement(tokens);
        }
        return finish();
    }

private:
    void statement(const std::vector<Token>& t) {
        const auto& kw = t[0].text;
        if (t[0].quoted) syntax("unexpected string literal", t[0].text);
        if (kw == "class") {
            arity(t, 2);
            declare(SymbolKind::Class, t[1]);
        } else if (kw == "role") {
            arity(t, 2);
            declare(SymbolKind::Role, t[1]);
        } else if (kw == "numrole") {
            arity(t, 2);
            declare(SymbolKind::NumericRole, t[1]);
        } else if (kw == "boolrole") {
            arity(t, 2);
            declare(SymbolKind::BooleanRole, t[1]);
        } else if (kw == "strrole") {
            arity(t, 2);
            declare(SymbolKind::StringRole, t[1]);
        } else if (kw == "individual") {
            arity(t, 2);
            declare(SymbolKind::Individual, t[1]);
        } else if (kw == "subclass") {
            arity(t, 3);
            subclass_.emplace_back(ref(SymbolKind::Class, t[1]), ref(SymbolKind::Class, t[2]));
        } else if (kw == "subrole") {
            arity(t, 3);
            subrole_.emplace_back(ref(SymbolKind::Role, t[1]), ref(SymbolKind::Role, t[2]));
        } else if (kw == "instance") {
            arity(t, 3);
            instances_.emplace_back(ref(SymbolKind::Class, t[1]), ref(SymbolKind::Individual, t[2]));
        } else if (kw == "fact") {
            arity(t, 4);
            const auto r = ref(SymbolKind::Role, t[1]);
            facts_[r].push_back({ref(SymbolKind::Individual, t[2]), ref(SymbolKind::Individual, t[3])});
        } else if (kw == "numfact") {
            arity(t, 4);
            const auto r = ref(SymbolKind::NumericRole, t[1]);
            const auto s = ref(SymbolKind::Individual, t[2]);
            numfacts_[r].push_back({s, number(t[3])});
        } else if (kw == "boolfact") {
            arity(t, 4);
            const auto r = ref(SymbolKind::BooleanRole, t[1]);
            const auto s = ref(SymbolKind::Individual, t[2]);
            if (t[3].quoted || (t[3].text != "true" && t[3].text != "false"))
                syntax("expected true|false", t[3].text);
            boolfacts_[r].push_back({s, t[3].text == "true"});
        } else if (kw == "strfact") {
            arity(t, 4);
            const auto r = ref(SymbolKind::StringRole, t[1]);
            const auto s = ref(SymbolKind::Individual, t[2]);
            if (!t[3].quoted) syntax("expected quoted string value", t[3].text);
            const auto v = out_.symbols.string_values[r].intern(t[3].text);
            strfacts_[r].push_back({s, v});
        } else {
            syntax("unknown statement", kw);
        }
    }

    [[noreturn]] void syntax(const std::string& msg, const std::string& token) const {
        throw ParseError(line_no_, "syntax error: " + msg + " near '" + token + "'");
    }

    void arity(const std::vector<Token>& t, std::size_t n) const {
        if (t.size() != n)
            syntax("'" + t[0].text + "' expects " + std::to_string(n - 1) + " argument(s)",
                   t.size() > n ? t[n].text : t.back().text);
        for (std::size_t i = 1; i < n; ++i)
            if (t[i].quoted && !(t[0].text == "strfact" && i == 3)) syntax("unexpected string literal", t[i].text);
    }

    void declare(SymbolKind kind, const Token& tok) {
        if (auto existing = out_.symbols.kind_of(tok.text); existing && *existing != kind)
            throw ParseError(line_no_, "type clash: '" + tok.text + "' already declared as " +
                                           std::string(to_string(*existing)) + ", redeclared as " +
                                           std::string(to_string(kind)));
        const auto before = out_.symbols.table(kind).size();
        out_.symbols.table(kind).intern(tok.text);
        if (kind == SymbolKind::StringRole && out_.symbols.string_roles.size() > before)
            out_.symbols.string_values.emplace_back();
    }

    std::uint32_t ref(SymbolKind kind, const Token& tok) const {
        if (auto id = out_.symbols.table(kind).find(tok.text)) return *id;
        if (auto other = out_.symbols.kind_of(tok.text))
            throw ParseError(line_no_, "type clash: '" + tok.text + "' is a " + std::string(to_string(*other)) +
                                           ", expected " + std::string(to_string(kind)));
        throw ParseError(line_no_, "undeclared " + std::string(to_string(kind)) + " '" + tok.text + "'");
    }

    double number(const Token& tok) const {
        double v = 0;
        const auto* b = tok.text.data();
        const auto* e = b + tok.text.size();
        auto [p, ec] = std::from_chars(b, e, v);
        if (tok.quoted || ec != std::errc{} || p != e || !std::isfinite(v)) syntax("expected finite number", tok.text);
        return v;
    }

    ParsedKb finish() {
        auto& kb = out_.kb;
        auto& st = out_.symbols;
        kb.num_individuals = st.individuals.size();
        kb.class_members.assign(st.classes.size(), Bitset(kb.num_individuals));
        for (auto [c, i] : instances_) kb.class_members[c].set(i);
        sort_unique(subclass_);
        sort_unique(subrole_);
        kb.subclass_edges = std::move(subclass_);
        kb.subrole_edges = std::move(subrole_);
        kb.role_assertions.resize(st.roles.size());
        kb.numeric_assertions.resize(st.numeric_roles.size());
        kb.boolean_assertions.resize(st.boolean_roles.size());
        kb.string_assertions.resize(st.string_roles.size());
        for (auto& [r, v] : facts_) {
            sort_unique(v);
            kb.role_assertions[r] = std::move(v);
        }
        for (auto& [r, v] : numfacts_) {
            sort_unique(v, numeric_less);
            kb.numeric_assertions[r] = std::move(v);
        }
        for (auto& [r, v] : boolfacts_) {
            sort_unique(v);
            kb.boolean_assertions[r] = std::move(v);
        }
        for (auto& [r, v] : strfacts_) {
            sort_unique(v);
            kb.string_assertions[r] = std::move(v);
        }
        return std::move(out_);
    }

    ParsedKb out_;
    std::size_t line_no_ = 0;
    std::vector<std::pair<ClassId, IndividualId>> instances_;
    std::vector<HierarchyEdge> subclass_, subrole_;
    std::map<RoleId, std::vector<RoleAssertion>> facts_;
    std::map<RoleId, std::vector<NumericAssertion>> numfacts_;
    std::map<RoleId, std::vector<BooleanAssertion>> boolfacts_;
    std::map<RoleId, std::vector<StringAssertion>> strfacts_;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(0, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

ParsedKb parse_kb(std::istream& in) { return KbParser{}.run(in); }

ParsedKb parse_kb(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_kb(in);
}

ParsedKb load_kb_file(const std::string& path) { return parse_kb(read_file(path)); }

ExampleSet parse_examples(std::istream& in, const SymbolTable& symbols, std::size_t num_individuals) {
    ExampleSet ex{Bitset(num_individuals), Bitset(num_individuals)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto tokens = tokenize(line, line_no);
        if (tokens.empty()) continue;
        if (tokens.size() != 2 || (tokens[0].text != "+" && tokens[0].text != "-"))
            throw ParseError(line_no, "syntax error: expected '+ <individual>' or '- <individual>'");
        const auto id = symbols.individuals.find(tokens[1].text);
        if (!id) throw ParseError(line_no, "unknown individual '" + tokens[1].text + "'");
        const bool positive = tokens[0].text == "+";
        auto& mine = positive ? ex.positives : ex.negatives;
        const auto& other = positive ? ex.negatives : ex.positives;
        if (other.test(*id)) throw ParseError(line_no, "conflicting example '" + tokens[1].text + "'");
        mine.set(*id);
    }
    if (ex.positives.none()) throw ParseError(0, "no positive examples");
    if (ex.negatives.none()) throw ParseError(0, "no negative examples");
    return ex;
}

ExampleSet parse_examples(std::string_view text, const SymbolTable& symbols, std::size_t num_individuals) {
    std::istringstream in{std::string(text)};
    return parse_examples(in, symbols, num_individuals);
}

ExampleSet load_examples_file(const std::string& path, const SymbolTable& symbols, std::size_t num_individuals) {
    return parse_examples(read_file(path), symbols, num_individuals);
}

std::vector<std::vector<std::uint32_t>> hierarchy_ancestors(std::size_t n, const std::vector<HierarchyEdge>& edges,
                                                            std::string_view what, const NameTable* names) {
    std::vector<std::vector<std::uint32_t>> supers(n);
    for (auto [sub, super] : edges) {
        if (sub >= n || super >= n) throw KbError(std::string(what) + " edge references unknown id");
        supers[sub].push_back(super);
    }

    enum class Mark : std::uint8_t { White, Grey, Black };
    std::vector<Mark> mark(n, Mark::White);
    std::vector<std::vector<std::uint32_t>> anc(n);
    std::vector<std::uint32_t> path;

    auto label = [&](std::uint32_t id) { return names ? names->name(id) : std::to_string(id); };

    // Iterative DFS so deep hierarchies cannot blow the stack.
    for (std::uint32_t root = 0; root < n; ++root) {
        if (mark[root] != Mark::White) continue;
        std::vector<std::pair<std::uint32_t, std::size_t>> stack{{root, 0}};
        mark[root] = Mark::Grey;
        path = {root};
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < supers[node].size()) {
                const auto s = supers[node][next++];
                if (mark[s] == Mark::Grey) {
                    auto from = std::find(path.begin(), path.end(), s);
                    std::string cycle;
                    for (auto it = from; it != path.end(); ++it) cycle += label(*it) + " -> ";
                    cycle += label(s);
                    throw KbError("cycle in " + std::string(what) + " hierarchy: " + cycle);
                }
                if (mark[s] == Mark::White) {
                    mark[s] = Mark::Grey;
                    path.push_back(s);
                    stack.emplace_back(s, 0);
                }
            } else {
                const auto done = node;
                auto& a = anc[done];
                for (auto s : supers[done]) {
                    a.push_back(s);
                    a.insert(a.end(), anc[s].begin(), anc[s].end());
                }
                sort_unique(a);
                mark[done] = Mark::Black;
                path.pop_back();
                stack.pop_back();
            }
        }
    }
    return anc;
}

KnowledgeBase materialize(KnowledgeBase kb, const SymbolTable* symbols) {
    if (kb.materialized) return kb;

    const auto class_anc = hierarchy_ancestors(kb.num_classes(), kb.subclass_edges, "subclass", symbols ? &symbols->classes : nullptr);
    const auto original = kb.class_members;
    for (std::size_t c = 0; c < class_anc.size(); ++c)
        for (auto super : class_anc[c]) kb.class_members[super] |= original[c];

    const auto role_anc = hierarchy_ancestors(kb.num_roles(), kb.subrole_edges, "subrole", symbols ? &symbols->roles : nullptr);
    const auto role_original = kb.role_assertions;
    for (std::size_t r = 0; r < role_anc.size(); ++r)
        for (auto super : role_anc[r]) {
            auto& dst = kb.role_assertions[super];
            dst.insert(dst.end(), role_original[r].begin(), role_original[r].end());
        }
    for (auto& v : kb.role_assertions) sort_unique(v);

    kb.materialized = true;
    return kb;
}

KbStatistics compute_statistics(const KnowledgeBase& kb) {
    KbStatistics s;
    const auto nroles = kb.num_roles();
    s.max_fillers.assign(nroles, 0);
    s.max_inverse_fillers.assign(nroles, 0);
    std::vector<std::uint32_t> out_deg(kb.num_individuals), in_deg(kb.num_individuals);
    for (std::size_t r = 0; r < nroles; ++r) {
        std::fill(out_deg.begin(), out_deg.end(), 0);
        std::fill(in_deg.begin(), in_deg.end(), 0);
        for (const auto& a : kb.role_assertions[r]) {
            s.max_fillers[r] = std::max(s.max_fillers[r], ++out_deg[a.sub]);
            s.max_inverse_fillers[r] = std::max(s.max_inverse_fillers[r], ++in_deg[a.obj]);
        }
    }

    for (const auto& list : kb.numeric_assertions) {
        std::vector<double> vals;
        for (const auto& a : list) vals.push_back(a.val);
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        s.numeric_boundaries.push_back(std::move(vals));
    }
    for (const auto& list : kb.string_assertions) {
        std::vector<ValueIndex> vals;
        for (const auto& a : list) vals.push_back(a.val);
        sort_unique(vals);
        s.string_domains.push_back(std::move(vals));
    }

    auto reduce = [](std::size_t n, const std::vector<HierarchyEdge>& edges, std::string_view what,
                     std::vector<std::vector<std::uint32_t>>& down, std::vector<std::vector<std::uint32_t>>* up) {
        const auto anc = hierarchy_ancestors(n, edges, what, nullptr);
        down.assign(n, {});
        if (up) up->assign(n, {});
        for (std::uint32_t sub = 0; sub < n; ++sub) {
            for (auto super : anc[sub]) {
                // super is a direct parent unless some other ancestor of sub sits below it.
                bool direct = true;
                for (auto mid : anc[sub])
                    if (mid != super && std::binary_search(anc[mid].begin(), anc[mid].end(), super)) {
                        direct = false;
                        break;
                    }
                if (direct) {
                    down[super].push_back(sub);
                    if (up) (*up)[sub].push_back(super);
                }
            }
        }
        for (auto& v : down) std::sort(v.begin(), v.end());
    };
    reduce(kb.num_classes(), kb.subclass_edges, "subclass", s.direct_subclasses, &s.direct_superclasses);
    reduce(kb.num_roles(), kb.subrole_edges, "subrole", s.direct_subroles, nullptr);

    for (ClassId c = 0; c < kb.num_classes(); ++c) {
        if (s.direct_superclasses[c].empty()) s.top_level_classes.push_back(c);
        if (s.direct_subclasses[c].empty()) s.leaf_classes.push_back(c);
    }
    return s;
}

}  // namespace spildl
