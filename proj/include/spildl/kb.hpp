#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "spildl/bitset.hpp"
#include "spildl/byte_io.hpp"

namespace spildl {

using ClassId = std::uint32_t;
using RoleId = std::uint32_t;
using IndividualId = std::uint32_t;
using ValueIndex = std::uint32_t;

/// Input error with a 1-based source line (0 when not tied to a line).
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Structural KB error (hierarchy cycles, invalid ids).
class KbError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense name <-> id interning for one namespace. Ids are assigned in
/// insertion order starting at 0.
class NameTable {
public:
    std::uint32_t intern(std::string_view name);
    std::optional<std::uint32_t> find(std::string_view name) const;
    const std::string& name(std::uint32_t id) const { return names_.at(id); }
    std::size_t size() const noexcept { return names_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }

    bool operator==(const NameTable& o) const { return names_ == o.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::uint32_t> ids_;
};

enum class SymbolKind : std::uint8_t { Class, Role, NumericRole, BooleanRole, StringRole, Individual };

std::string_view to_string(SymbolKind kind);

struct SymbolTable {
    NameTable classes;
    NameTable roles;
    NameTable numeric_roles;
    NameTable boolean_roles;
    NameTable string_roles;
    NameTable individuals;
    /// One value table per string role; valIndex is the id inside it.
    std::vector<NameTable> string_values;

    NameTable& table(SymbolKind kind);
    const NameTable& table(SymbolKind kind) const;

    /// Kind a name was declared as, if any. Names are unique across kinds.
    std::optional<SymbolKind> kind_of(std::string_view name) const;

    bool operator==(const SymbolTable&) const = default;
};

struct RoleAssertion {
    IndividualId sub;
    IndividualId obj;
    auto operator<=>(const RoleAssertion&) const = default;
};

struct NumericAssertion {
    IndividualId sub;
    double val;
    bool operator==(const NumericAssertion& o) const;
};

struct BooleanAssertion {
    IndividualId sub;
    bool val;
    auto operator<=>(const BooleanAssertion&) const = default;
};

struct StringAssertion {
    IndividualId sub;
    ValueIndex val;
    auto operator<=>(const StringAssertion&) const = default;
};

using HierarchyEdge = std::pair<std::uint32_t, std::uint32_t>;  // (sub, super)

/// Columnar ABox/TBox store. Assertion lists are kept sorted and
/// duplicate-free so the structure is canonical for a given id assignment.
struct KnowledgeBase {
    std::size_t num_individuals = 0;
    std::vector<Bitset> class_members;
    std::vector<HierarchyEdge> subclass_edges;
    std::vector<std::vector<RoleAssertion>> role_assertions;
    std::vector<HierarchyEdge> subrole_edges;
    std::vector<std::vector<NumericAssertion>> numeric_assertions;
    std::vector<std::vector<BooleanAssertion>> boolean_assertions;
    std::vector<std::vector<StringAssertion>> string_assertions;
    bool materialized = false;

    std::size_t num_classes() const noexcept { return class_members.size(); }
    std::size_t num_roles() const noexcept { return role_assertions.size(); }

    bool operator==(const KnowledgeBase&) const = default;
};

struct ExampleSet {
    Bitset positives;
    Bitset negatives;

    std::size_t num_positive() const { return positives.count(); }
    std::size_t num_negative() const { return negatives.count(); }
};

struct KbStatistics {
    std::vector<std::uint32_t> max_fillers;          // per role, subject side
    std::vector<std::uint32_t> max_inverse_fillers;  // per role, object side
    std::vector<std::vector<double>> numeric_boundaries;
    std::vector<std::vector<ValueIndex>> string_domains;
    std::vector<ClassId> top_level_classes;
    std::vector<ClassId> leaf_classes;
    /// Transitive reductions of the declared hierarchies.
    std::vector<std::vector<ClassId>> direct_subclasses;
    std::vector<std::vector<ClassId>> direct_superclasses;
    std::vector<std::vector<RoleId>> direct_subroles;
};

struct ParsedKb {
    SymbolTable symbols;
    KnowledgeBase kb;
};

ParsedKb parse_kb(std::istream& in);
ParsedKb parse_kb(std::string_view text);
ParsedKb load_kb_file(const std::string& path);

ExampleSet parse_examples(std::istream& in, const SymbolTable& symbols, std::size_t num_individuals);
ExampleSet parse_examples(std::string_view text, const SymbolTable& symbols, std::size_t num_individuals);
ExampleSet load_examples_file(const std::string& path, const SymbolTable& symbols,
                              std::size_t num_individuals);

/// Propagates class membership and role assertions along the reflexive
/// transitive closure of the subclass / subrole graphs. Throws KbError on
/// a cycle, naming its members when `symbols` is given. No-op on an
/// already materialized KB.
KnowledgeBase materialize(KnowledgeBase kb, const SymbolTable* symbols = nullptr);

KbStatistics compute_statistics(const KnowledgeBase& kb);

/// Ancestors (excluding self) per node of a hierarchy with `n` nodes.
/// Throws KbError naming the cycle if the graph is cyclic.
std::vector<std::vector<std::uint32_t>> hierarchy_ancestors(std::size_t n, const std::vector<HierarchyEdge>& edges,
                                                            std::string_view what, const NameTable* names);

Bytes serialize_kb(const KnowledgeBase& kb, const SymbolTable& symbols);
ParsedKb deserialize_kb(std::span<const std::uint8_t> bytes);

}  // namespace spildl
