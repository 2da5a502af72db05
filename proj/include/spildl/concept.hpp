#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spildl/byte_io.hpp"
#include "spildl/kb.hpp"

namespace spildl {

/// Constructor tags. Numeric values are the binary encoding tags.
enum class Tag : std::uint8_t {
    Top = 0x00,
    Atomic = 0x01,
    NotAtomic = 0x02,
    Exists = 0x03,
    Forall = 0x04,
    MinCard = 0x05,
    MaxCard = 0x06,
    And = 0x07,
    Or = 0x08,
    BoolEq = 0x09,
    NumGeq = 0x0A,
    NumLeq = 0x0B,
    StrEq = 0x0C,
};

/// Position of a tag in the canonical total order.
int tag_rank(Tag t) noexcept;

struct RoleExpr {
    RoleId role = 0;
    bool inverse = false;
    auto operator<=>(const RoleExpr&) const = default;
};

/// An ALCQI(D) class expression in negation normal form (negation only on
/// atomic classes). Immutable value type; build with the named factories.
class Concept {
public:
    static Concept top();
    static Concept atomic(ClassId c);
    static Concept not_atomic(ClassId c);
    static Concept exists(RoleExpr r, Concept filler);
    static Concept forall(RoleExpr r, Concept filler);
    static Concept min_card(std::uint32_t n, RoleExpr r, Concept filler);
    static Concept max_card(std::uint32_t n, RoleExpr r, Concept filler);
    static Concept bool_eq(RoleId r, bool value);
    static Concept num_geq(RoleId r, double value);
    static Concept num_leq(RoleId r, double value);
    static Concept str_eq(RoleId r, ValueIndex value);
    /// Raw n-ary constructors; canonicalize() flattens and sorts. Throws
    /// std::invalid_argument on zero operands.
    static Concept conj(std::vector<Concept> operands);
    static Concept disj(std::vector<Concept> operands);

    Tag tag() const noexcept { return tag_; }
    /// Class id (Atomic/NotAtomic) or role id of any restriction.
    std::uint32_t id() const noexcept { return id_; }
    RoleExpr role() const noexcept { return {id_, inverse_}; }
    /// Cardinality bound (MinCard/MaxCard).
    std::uint32_t cardinality() const noexcept { return number_; }
    bool bool_value() const noexcept { return number_ != 0; }
    ValueIndex string_value() const noexcept { return number_; }
    double numeric_value() const noexcept { return value_; }
    /// Filler for role restrictions, operands for And/Or.
    const std::vector<Concept>& children() const noexcept { return children_; }
    const Concept& filler() const { return children_.at(0); }

    bool is_role_restriction() const noexcept;
    bool is_concrete_restriction() const noexcept;

    /// Copy with a different filler (role restrictions only).
    Concept with_filler(Concept filler) const;
    /// Copy with a different cardinality bound (MinCard/MaxCard only).
    Concept with_cardinality(std::uint32_t n) const;
    /// Copy with a different role id, keeping direction.
    Concept with_role(RoleId r) const;

    friend bool operator==(const Concept& a, const Concept& b);

private:
    Concept() = default;

    Tag tag_ = Tag::Top;
    bool inverse_ = false;
    std::uint32_t id_ = 0;
    std::uint32_t number_ = 0;
    double value_ = 0.0;
    std::vector<Concept> children_;
};

/// Total order: tag rank, then ids/numbers, then children lexicographically.
std::strong_ordering compare_canonical(const Concept& a, const Concept& b);

struct CanonicalLess {
    bool operator()(const Concept& a, const Concept& b) const { return compare_canonical(a, b) < 0; }
};

/// Flattens nested And/Or, removes duplicate operands, sorts operands by
/// compare_canonical and collapses single-operand And/Or. Idempotent.
Concept canonicalize(const Concept& c);

/// True iff c is already in canonical form (recursively).
bool is_canonical(const Concept& c);

/// Canonical big-endian binary encoding.
void encode(const Concept& c, ByteWriter& out);
Bytes encode(const Concept& c);

/// Decodes one concept from the reader; rejects unknown tags, truncation
/// and non-canonical operand order.
Concept decode(ByteReader& in);
/// Decodes exactly one concept occupying all of `bytes`.
Concept decode(std::span<const std::uint8_t> bytes);

using CanonicalHash = std::uint64_t;

/// FNV-1a 64 over encode(c).
CanonicalHash hash_concept(const Concept& c);

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

constexpr std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h = kFnvOffset) noexcept {
    for (auto b : bytes) h = (h ^ b) * kFnvPrime;
    return h;
}

/// Syntactic length: each constructor and symbol counts one.
std::uint32_t concept_length(const Concept& c);

/// Depth of the expression tree (leaves have depth 1).
std::uint32_t concept_depth(const Concept& c);

/// Manchester-like rendering, fully parenthesized.
std::string render(const Concept& c, const SymbolTable& symbols);

/// Parse error in the concept grammar, carrying a 0-based column.
class ConceptParseError : public std::runtime_error {
public:
    ConceptParseError(std::size_t column, const std::string& what)
        : std::runtime_error(what), column_(column) {}
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t column_;
};

/// Parses the render() grammar back to a (non-canonicalized) concept.
Concept parse_concept(std::string_view text, const SymbolTable& symbols);

}  // namespace spildl
