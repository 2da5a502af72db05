#include "spildl/concept.hpp"

#include <algorithm>
#include <cmath>

namespace spildl {

int tag_rank(Tag t) noexcept {
    switch (t) {
        case Tag::Top: return 0;
        case Tag::Atomic: return 1;
        case Tag::NotAtomic: return 2;
        case Tag::Exists: return 3;
        case Tag::Forall: return 4;
        case Tag::MinCard: return 5;
        case Tag::MaxCard: return 6;
        case Tag::BoolEq: return 7;
        case Tag::NumGeq: return 8;
        case Tag::NumLeq: return 9;
        case Tag::StrEq: return 10;
        case Tag::And: return 11;
        case Tag::Or: return 12;
    }
    return 13;
}

namespace {

constexpr std::uint32_t kMaxU16 = 0xFFFF;

void check_cardinality(std::uint32_t n) {
    if (n > kMaxU16) throw std::invalid_argument("cardinality bound exceeds 65535");
}

}  // namespace

Concept Concept::top() { return Concept{}; }

Concept Concept::atomic(ClassId c) {
    Concept x;
    x.tag_ = Tag::Atomic;
    x.id_ = c;
    return x;
}

Concept Concept::not_atomic(ClassId c) {
    Concept x = atomic(c);
    x.tag_ = Tag::NotAtomic;
    return x;
}

Concept Concept::exists(RoleExpr r, Concept filler) {
    Concept x;
    x.tag_ = Tag::Exists;
    x.id_ = r.role;
    x.inverse_ = r.inverse;
    x.children_.push_back(std::move(filler));
    return x;
}

Concept Concept::forall(RoleExpr r, Concept filler) {
    Concept x = exists(r, std::move(filler));
    x.tag_ = Tag::Forall;
    return x;
}

Concept Concept::min_card(std::uint32_t n, RoleExpr r, Concept filler) {
    if (n == 0) throw std::invalid_argument("min cardinality must be positive");
    check_cardinality(n);
    Concept x = exists(r, std::move(filler));
    x.tag_ = Tag::MinCard;
    x.number_ = n;
    return x;
}

Concept Concept::max_card(std::uint32_t n, RoleExpr r, Concept filler) {
    check_cardinality(n);
    Concept x = exists(r, std::move(filler));
    x.tag_ = Tag::MaxCard;
    x.number_ = n;
    return x;
}

Concept Concept::bool_eq(RoleId r, bool value) {
    Concept x;
    x.tag_ = Tag::BoolEq;
    x.id_ = r;
    x.number_ = value ? 1 : 0;
    return x;
}

Concept Concept::num_geq(RoleId r, double value) {
    if (std::isnan(value)) throw std::invalid_argument("NaN in numeric restriction");
    Concept x;
    x.tag_ = Tag::NumGeq;
    x.id_ = r;
    x.value_ = value;
    return x;
}

Concept Concept::num_leq(RoleId r, double value) {
    Concept x = num_geq(r, value);
    x.tag_ = Tag::NumLeq;
    return x;
}

Concept Concept::str_eq(RoleId r, ValueIndex value) {
    Concept x;
    x.tag_ = Tag::StrEq;
    x.id_ = r;
    x.number_ = value;
    return x;
}

Concept Concept::conj(std::vector<Concept> operands) {
    if (operands.empty()) throw std::invalid_argument("conjunction needs at least one operand");
    Concept x;
    x.tag_ = Tag::And;
    x.children_ = std::move(operands);
    return x;
}

Concept Concept::disj(std::vector<Concept> operands) {
    Concept x = conj(std::move(operands));
    x.tag_ = Tag::Or;
    return x;
}

bool Concept::is_role_restriction() const noexcept {
    return tag_ == Tag::Exists || tag_ == Tag::Forall || tag_ == Tag::MinCard || tag_ == Tag::MaxCard;
}

bool Concept::is_concrete_restriction() const noexcept {
    return tag_ == Tag::BoolEq || tag_ == Tag::NumGeq || tag_ == Tag::NumLeq || tag_ == Tag::StrEq;
}

Concept Concept::with_filler(Concept filler) const {
    if (!is_role_restriction()) throw std::logic_error("with_filler on non role restriction");
    Concept x = *this;
    x.children_[0] = std::move(filler);
    return x;
}

Concept Concept::with_cardinality(std::uint32_t n) const {
    if (tag_ != Tag::MinCard && tag_ != Tag::MaxCard) throw std::logic_error("with_cardinality on non cardinality");
    if (tag_ == Tag::MinCard && n == 0) throw std::invalid_argument("min cardinality must be positive");
    check_cardinality(n);
    Concept x = *this;
    x.number_ = n;
    return x;
}

Concept Concept::with_role(RoleId r) const {
    Concept x = *this;
    x.id_ = r;
    return x;
}

std::strong_ordering compare_canonical(const Concept& a, const Concept& b) {
    if (auto c = tag_rank(a.tag()) <=> tag_rank(b.tag()); c != 0) return c;
    switch (a.tag()) {
        case Tag::Top: return std::strong_ordering::equal;
        case Tag::Atomic:
        case Tag::NotAtomic: return a.id() <=> b.id();
        case Tag::MinCard:
        case Tag::MaxCard:
            if (auto c = a.cardinality() <=> b.cardinality(); c != 0) return c;
            [[fallthrough]];
        case Tag::Exists:
        case Tag::Forall:
            if (auto c = a.role() <=> b.role(); c != 0) return c;
            return compare_canonical(a.filler(), b.filler());
        case Tag::BoolEq:
        case Tag::StrEq:
            if (auto c = a.id() <=> b.id(); c != 0) return c;
            return a.string_value() <=> b.string_value();
        case Tag::NumGeq:
        case Tag::NumLeq:
            if (auto c = a.id() <=> b.id(); c != 0) return c;
            return ordered_bits(a.numeric_value()) <=> ordered_bits(b.numeric_value());
        case Tag::And:
        case Tag::Or: {
            const auto& x = a.children();
            const auto& y = b.children();
            return std::lexicographical_compare_three_way(x.begin(), x.end(), y.begin(), y.end(),
                                                          compare_canonical);
        }
    }
    return std::strong_ordering::equal;
}

bool operator==(const Concept& a, const Concept& b) { return compare_canonical(a, b) == 0; }

Concept canonicalize(const Concept& c) {
    switch (c.tag()) {
        case Tag::Exists:
        case Tag::Forall:
        case Tag::MinCard:
        case Tag::MaxCard: return c.with_filler(canonicalize(c.filler()));
        case Tag::And:
        case Tag::Or: {
            std::vector<Concept> ops;
            for (const auto& child : c.children()) {
                auto cc = canonicalize(child);
                if (cc.tag() == c.tag())
                    ops.insert(ops.end(), cc.children().begin(), cc.children().end());
                else
                    ops.push_back(std::move(cc));
            }
            std::sort(ops.begin(), ops.end(), CanonicalLess{});
            ops.erase(std::unique(ops.begin(), ops.end()), ops.end());
            if (ops.size() == 1) return std::move(ops.front());
            return c.tag() == Tag::And ? Concept::conj(std::move(ops)) : Concept::disj(std::move(ops));
        }
        default: return c;
    }
}

bool is_canonical(const Concept& c) {
    if (c.is_role_restriction()) return is_canonical(c.filler());
    if (c.tag() != Tag::And && c.tag() != Tag::Or) return true;
    const auto& ops = c.children();
    if (ops.size() < 2) return false;
    for (std::size_t i = 0; i < ops.size(); ++i) {
        if (ops[i].tag() == c.tag() || !is_canonical(ops[i])) return false;
        if (i > 0 && compare_canonical(ops[i - 1], ops[i]) >= 0) return false;
    }
    return true;
}

void encode(const Concept& c, ByteWriter& out) {
    out.u8(static_cast<std::uint8_t>(c.tag()));
    auto role = [&] {
        out.u8(c.role().inverse ? 1 : 0);
        out.u32(c.role().role);
    };
    switch (c.tag()) {
        case Tag::Top: break;
        case Tag::Atomic:
        case Tag::NotAtomic: out.u32(c.id()); break;
        case Tag::Exists:
        case Tag::Forall:
            role();
            encode(c.filler(), out);
            break;
        case Tag::MinCard:
        case Tag::MaxCard:
            out.u16(static_cast<std::uint16_t>(c.cardinality()));
            role();
            encode(c.filler(), out);
            break;
        case Tag::And:
        case Tag::Or:
            if (c.children().size() > kMaxU16) throw std::length_error("too many operands to encode");
            out.u16(static_cast<std::uint16_t>(c.children().size()));
            for (const auto& ch : c.children()) encode(ch, out);
            break;
        case Tag::BoolEq:
            out.u32(c.id());
            out.u8(c.bool_value() ? 1 : 0);
            break;
        case Tag::NumGeq:
        case Tag::NumLeq:
            out.u32(c.id());
            out.f64(c.numeric_value());
            break;
        case Tag::StrEq:
            out.u32(c.id());
            out.u32(c.string_value());
            break;
    }
}

Bytes encode(const Concept& c) {
    ByteWriter w;
    encode(c, w);
    return w.take();
}

namespace {

RoleExpr decode_role(ByteReader& in) {
    const auto flag = in.u8();
    if (flag > 1) throw DecodeError("bad inverse flag");
    return {in.u32(), flag == 1};
}

Concept decode_at(ByteReader& in, int depth) {
    if (depth > 4096) throw DecodeError("concept nesting too deep");
    const auto at = in.position();
    const auto raw = in.u8();
    switch (static_cast<Tag>(raw)) {
        case Tag::Top: return Concept::top();
        case Tag::Atomic: return Concept::atomic(in.u32());
        case Tag::NotAtomic: return Concept::not_atomic(in.u32());
        case Tag::Exists: {
            auto r = decode_role(in);
            return Concept::exists(r, decode_at(in, depth + 1));
        }
        case Tag::Forall: {
            auto r = decode_role(in);
            return Concept::forall(r, decode_at(in, depth + 1));
        }
        case Tag::MinCard:
        case Tag::MaxCard: {
            const auto n = in.u16();
            auto r = decode_role(in);
            auto f = decode_at(in, depth + 1);
            if (static_cast<Tag>(raw) == Tag::MinCard) {
                if (n == 0) throw DecodeError("min cardinality 0");
                return Concept::min_card(n, r, std::move(f));
            }
            return Concept::max_card(n, r, std::move(f));
        }
        case Tag::And:
        case Tag::Or: {
            const auto tag = static_cast<Tag>(raw);
            const auto k = in.u16();
            if (k < 2) throw DecodeError("n-ary operator with fewer than 2 operands at byte " + std::to_string(at));
            std::vector<Concept> ops;
            ops.reserve(k);
            for (std::uint16_t i = 0; i < k; ++i) {
                auto op = decode_at(in, depth + 1);
                if (op.tag() == tag) throw DecodeError("non-canonical nested operator at byte " + std::to_string(at));
                if (!ops.empty() && compare_canonical(ops.back(), op) >= 0)
                    throw DecodeError("non-canonical operand order at byte " + std::to_string(at));
                ops.push_back(std::move(op));
            }
            return tag == Tag::And ? Concept::conj(std::move(ops)) : Concept::disj(std::move(ops));
        }
        case Tag::BoolEq: {
            const auto r = in.u32();
            const auto v = in.u8();
            if (v > 1) throw DecodeError("bad boolean value");
            return Concept::bool_eq(r, v == 1);
        }
        case Tag::NumGeq:
        case Tag::NumLeq: {
            const auto r = in.u32();
            const auto v = in.f64();
            if (std::isnan(v)) throw DecodeError("NaN in numeric restriction");
            return static_cast<Tag>(raw) == Tag::NumGeq ? Concept::num_geq(r, v) : Concept::num_leq(r, v);
        }
        case Tag::StrEq: {
            const auto r = in.u32();
            return Concept::str_eq(r, in.u32());
        }
    }
    throw DecodeError("unknown concept tag " + std::to_string(raw) + " at byte " + std::to_string(at));
}

}  // namespace

Concept decode(ByteReader& in) { return decode_at(in, 0); }

Concept decode(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    auto c = decode(in);
    if (!in.at_end()) throw DecodeError("trailing bytes after concept");
    return c;
}

CanonicalHash hash_concept(const Concept& c) {
    ByteWriter w;
    encode(c, w);
    return fnv1a64(w.buf());
}

std::uint32_t concept_length(const Concept& c) {
    const std::uint32_t inv = c.role().inverse ? 1 : 0;
    switch (c.tag()) {
        case Tag::Top:
        case Tag::Atomic: return 1;
        case Tag::NotAtomic: return 2;
        case Tag::Exists:
        case Tag::Forall: return 2 + inv + concept_length(c.filler());
        case Tag::MinCard:
        case Tag::MaxCard: return 3 + inv + concept_length(c.filler());
        case Tag::And:
        case Tag::Or: {
            std::uint32_t n = static_cast<std::uint32_t>(c.children().size()) - 1;
            for (const auto& ch : c.children()) n += concept_length(ch);
            return n;
        }
        default: return 1;
    }
}

std::uint32_t concept_depth(const Concept& c) {
    std::uint32_t d = 0;
    for (const auto& ch : c.children()) d = std::max(d, concept_depth(ch));
    return d + 1;
}

}  // namespace spildl
