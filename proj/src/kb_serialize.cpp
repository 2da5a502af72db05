#include <zlib.h>

#include <array>

#include "spildl/kb.hpp"

namespace spildl {

std::uint32_t crc32(std::span<const std::uint8_t> data) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in bounded pieces.
    constexpr std::size_t kPiece = 1u << 30;
    for (std::size_t off = 0; off < data.size(); off += kPiece) {
        const auto n = std::min(kPiece, data.size() - off);
        crc = ::crc32(crc, data.data() + off, static_cast<uInt>(n));
    }
    return static_cast<std::uint32_t>(crc);
}

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'S', 'P', 'K', 'B'};
constexpr std::uint16_t kVersion = 1;

constexpr std::array kNamespaces{SymbolKind::Class,       SymbolKind::Role,       SymbolKind::NumericRole,
                                 SymbolKind::BooleanRole, SymbolKind::StringRole, SymbolKind::Individual};

std::uint32_t count32(std::size_t n) {
    if (n > 0xFFFFFFFFu) throw std::length_error("table too large for KB binary form");
    return static_cast<std::uint32_t>(n);
}

void write_names(ByteWriter& w, const NameTable& t) {
    w.u32(count32(t.size()));
    for (const auto& n : t.names()) w.str(n);
}

void read_names(ByteReader& r, NameTable& t) {
    const auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        if (t.intern(r.str()) != i) throw DecodeError("duplicate name in symbol table");
    }
}

std::uint32_t checked_id(std::uint32_t id, std::size_t bound, const char* what) {
    if (id >= bound) throw DecodeError(std::string("out-of-range ") + what + " id");
    return id;
}

}  // namespace

Bytes serialize_kb(const KnowledgeBase& kb, const SymbolTable& symbols) {
    ByteWriter w;
    w.bytes(kMagic);
    w.u16(kVersion);
    const auto payload_start = w.buf().size();

    for (auto k : kNamespaces) write_names(w, symbols.table(k));
    for (const auto& values : symbols.string_values) write_names(w, values);

    w.u32(count32(kb.num_individuals));
    for (const auto& members : kb.class_members) {
        w.u32(count32(members.count()));
        members.for_each_set([&](std::size_t i) { w.u32(static_cast<std::uint32_t>(i)); });
    }
    auto edges = [&](const std::vector<HierarchyEdge>& e) {
        w.u32(count32(e.size()));
        for (auto [a, b] : e) {
            w.u32(a);
            w.u32(b);
        }
    };
    edges(kb.subclass_edges);
    for (const auto& list : kb.role_assertions) {
        w.u32(count32(list.size()));
        for (const auto& a : list) {
            w.u32(a.sub);
            w.u32(a.obj);
        }
    }
    edges(kb.subrole_edges);
    for (const auto& list : kb.numeric_assertions) {
        w.u32(count32(list.size()));
        for (const auto& a : list) {
            w.u32(a.sub);
            w.f64(a.val);
        }
    }
    for (const auto& list : kb.boolean_assertions) {
        w.u32(count32(list.size()));
        for (const auto& a : list) {
            w.u32(a.sub);
            w.u8(a.val ? 1 : 0);
        }
    }
    for (const auto& list : kb.string_assertions) {
        w.u32(count32(list.size()));
        for (const auto& a : list) {
            w.u32(a.sub);
            w.u32(a.val);
        }
    }
    w.u8(kb.materialized ? 1 : 0);

    const auto crc = crc32(std::span(w.buf()).subspan(payload_start));
    w.u32(crc);
    return w.take();
}

ParsedKb deserialize_kb(std::span<const std::uint8_t> bytes) {
    constexpr std::size_t kHeader = kMagic.size() + 2;
    if (bytes.size() < kHeader + 4) throw DecodeError("truncated KB stream");
    if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) throw DecodeError("bad KB magic");
    ByteReader header(bytes.subspan(kMagic.size(), 2));
    if (const auto v = header.u16(); v != kVersion)
        throw DecodeError("KB version mismatch: got " + std::to_string(v) + ", expected 1");

    const auto payload = bytes.subspan(kHeader, bytes.size() - kHeader - 4);
    ByteReader trailer(bytes.subspan(bytes.size() - 4));
    if (trailer.u32() != crc32(payload)) throw DecodeError("KB checksum failure");

    ParsedKb out;
    auto& st = out.symbols;
    auto& kb = out.kb;
    ByteReader r(payload);
    for (auto k : kNamespaces) read_names(r, st.table(k));
    st.string_values.resize(st.string_roles.size());
    for (auto& values : st.string_values) read_names(r, values);

    kb.num_individuals = r.u32();
    if (kb.num_individuals != st.individuals.size()) throw DecodeError("individual count mismatch");
    const auto ni = kb.num_individuals;

    kb.class_members.assign(st.classes.size(), Bitset(ni));
    for (auto& members : kb.class_members) {
        const auto n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) members.set(checked_id(r.u32(), ni, "individual"));
    }
    auto edges = [&](std::vector<HierarchyEdge>& e, std::size_t bound) {
        const auto n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            const auto a = checked_id(r.u32(), bound, "hierarchy");
            const auto b = checked_id(r.u32(), bound, "hierarchy");
            e.emplace_back(a, b);
        }
    };
    edges(kb.subclass_edges, st.classes.size());
    kb.role_assertions.resize(st.roles.size());
    for (auto& list : kb.role_assertions) {
        const auto n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            const auto s = checked_id(r.u32(), ni, "individual");
            const auto o = checked_id(r.u32(), ni, "individual");
            list.push_back({s, o});
        }
    }
    edges(kb.subrole_edges, st.roles.size());
    kb.numeric_assertions.resize(st.numeric_roles.size());
    for (auto& list : kb.numeric_assertions) {
        const auto n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            const auto s = checked_id(r.u32(), ni, "individual");
            list.push_back({s, r.f64()});
        }
    }
    kb.boolean_assertions.resize(st.boolean_roles.size());
    for (auto& list : kb.boolean_assertions) {
        const auto n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            const auto s = checked_id(r.u32(), ni, "individual");
            const auto v = r.u8();
            if (v > 1) throw DecodeError("bad boolean value");
            list.push_back({s, v == 1});
        }
    }
    kb.string_assertions.resize(st.string_roles.size());
    for (std::size_t role = 0; role < kb.string_assertions.size(); ++role) {
        const auto n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            const auto s = checked_id(r.u32(), ni, "individual");
            const auto v = checked_id(r.u32(), st.string_values[role].size(), "string value");
            kb.string_assertions[role].push_back({s, v});
        }
    }
    const auto m = r.u8();
    if (m > 1) throw DecodeError("bad materialized flag");
    kb.materialized = m == 1;
    if (!r.at_end()) throw DecodeError("trailing bytes in KB stream");
    return out;
}

}  // namespace spildl
