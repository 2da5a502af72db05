#include "spildl/wire.hpp"

#include <algorithm>
#include <bit>

#include "spildl/parallel.hpp"

namespace spildl {

std::string_view to_string(MsgType t) {
    switch (t) {
        case MsgType::Hello: return "HELLO";
        case MsgType::HelloAck: return "HELLO_ACK";
        case MsgType::KbTransfer: return "KB_TRANSFER";
        case MsgType::KbAck: return "KB_ACK";
        case MsgType::Probe: return "PROBE";
        case MsgType::ProbeResult: return "PROBE_RESULT";
        case MsgType::ExpandTask: return "EXPAND_TASK";
        case MsgType::ExpandResult: return "EXPAND_RESULT";
        case MsgType::Terminate: return "TERMINATE";
        case MsgType::BestHypotheses: return "BEST_HYPOTHESES";
        case MsgType::Error: return "ERROR";
    }
    return "UNKNOWN";
}

bool is_known_type(std::uint8_t t) noexcept { return (t >= 0x01 && t <= 0x0A) || t == 0x0F; }

namespace {

std::uint32_t frame_crc(std::uint8_t type, std::span<const std::uint8_t> payload) {
    Bytes tmp;
    tmp.reserve(payload.size() + 1);
    tmp.push_back(type);
    tmp.insert(tmp.end(), payload.begin(), payload.end());
    return crc32(tmp);
}

void expect_end(const ByteReader& r, std::string_view what) {
    if (!r.at_end()) throw ProtocolError("trailing bytes in " + std::string(what) + " payload");
}

template <class F>
auto decode_payload(std::string_view what, F&& f) {
    try {
        return f();
    } catch (const DecodeError& e) {
        throw ProtocolError(std::string(what) + ": " + e.what());
    }
}

}  // namespace

Bytes encode_frame(const WireMessage& m) {
    if (m.payload.size() > kMaxPayload) throw ProtocolError("payload too large");
    ByteWriter w;
    w.bytes(kFrameMagic);
    w.u16(kWireVersion);
    w.u8(static_cast<std::uint8_t>(m.type));
    w.u32(static_cast<std::uint32_t>(m.payload.size()));
    w.bytes(m.payload);
    w.u32(frame_crc(static_cast<std::uint8_t>(m.type), m.payload));
    return w.take();
}

std::uint32_t frame_payload_length(std::span<const std::uint8_t, kFrameHeaderSize> header) {
    if (!std::equal(kFrameMagic.begin(), kFrameMagic.end(), header.begin())) throw ProtocolError("bad frame magic");
    ByteReader r(std::span<const std::uint8_t>(header).subspan(4));
    if (r.u16() != kWireVersion) throw ProtocolError("unsupported protocol version");
    r.u8();
    const auto len = r.u32();
    if (len > kMaxPayload) throw ProtocolError("frame payload too large");
    return len;
}

WireMessage decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kFrameHeaderSize + kFrameTrailerSize) throw ProtocolError("truncated frame");
    const auto len = frame_payload_length(bytes.first<kFrameHeaderSize>());
    if (bytes.size() != kFrameHeaderSize + len + kFrameTrailerSize)
        throw ProtocolError(bytes.size() < kFrameHeaderSize + len + kFrameTrailerSize ? "truncated frame"
                                                                                       : "frame length mismatch");
    const auto type = bytes[6];
    const auto payload = bytes.subspan(kFrameHeaderSize, len);
    ByteReader tail(bytes.subspan(kFrameHeaderSize + len));
    if (tail.u32() != frame_crc(type, payload)) throw ProtocolError("frame checksum failure");
    if (!is_known_type(type)) throw ProtocolError("unknown message type " + std::to_string(type));
    return {static_cast<MsgType>(type), Bytes(payload.begin(), payload.end())};
}

bool BlockNode::operator==(const BlockNode& o) const {
    return expr == o.expr && he == o.he && pos_covered == o.pos_covered && neg_covered == o.neg_covered &&
           std::bit_cast<std::uint64_t>(score) == std::bit_cast<std::uint64_t>(o.score);
}

BlockNode to_block_node(const SearchNode& n) {
    if (n.he > 0xFFFF) throw std::invalid_argument("horizontal expansion does not fit the wire format");
    return {n.expr, static_cast<std::uint16_t>(n.he), n.coverage.pos_covered, n.coverage.neg_covered, n.score.value};
}

void serialize_block(std::span<const BlockNode> nodes, std::size_t threads, ByteWriter& out) {
    if (nodes.size() > 0xFFFFFFFFu) throw std::invalid_argument("block too large");
    out.u32(static_cast<std::uint32_t>(nodes.size()));
    std::vector<Bytes> chunks(std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(nodes.size(), 1)));
    parallel_chunks(nodes.size(), threads, [&](std::size_t b, std::size_t e, std::size_t chunk) {
        ByteWriter w(chunks[chunk]);
        Bytes enc;
        for (std::size_t i = b; i < e; ++i) {
            enc.clear();
            ByteWriter ew(enc);
            encode(nodes[i].expr, ew);
            w.u32(static_cast<std::uint32_t>(enc.size()));
            w.bytes(enc);
            w.u16(nodes[i].he);
            w.u32(nodes[i].pos_covered);
            w.u32(nodes[i].neg_covered);
            w.f64(nodes[i].score);
        }
    });
    for (const auto& c : chunks) out.bytes(c);
}

Bytes serialize_block(std::span<const BlockNode> nodes, std::size_t threads) {
    ByteWriter w;
    serialize_block(nodes, threads, w);
    return w.take();
}

std::vector<BlockNode> deserialize_block(ByteReader& in, std::size_t threads) {
    const auto count = in.u32();
    // Sequential scan for record boundaries, then parallel decode.
    std::vector<std::span<const std::uint8_t>> records;
    records.reserve(std::min<std::size_t>(count, in.remaining() / 22));
    for (std::uint32_t i = 0; i < count; ++i) {
        try {
            const auto len = in.u32();
            records.push_back(in.bytes(std::size_t{len} + 18));
        } catch (const DecodeError& e) {
            throw DecodeError("block node " + std::to_string(i) + ": " + e.what());
        }
    }
    std::vector<BlockNode> out(count);
    parallel_chunks(count, threads, [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t i = b; i < e; ++i) {
            try {
                const auto rec = records[i];
                ByteReader r(rec.first(rec.size() - 18));
                out[i].expr = decode(r);
                if (!r.at_end()) throw DecodeError("concept length mismatch");
                ByteReader t(rec.last(18));
                out[i].he = t.u16();
                out[i].pos_covered = t.u32();
                out[i].neg_covered = t.u32();
                out[i].score = t.f64();
            } catch (const DecodeError& ex) {
                throw DecodeError("block node " + std::to_string(i) + ": " + ex.what());
            }
        }
    });
    return out;
}

std::vector<BlockNode> deserialize_block(std::span<const std::uint8_t> bytes, std::size_t threads) {
    ByteReader r(bytes);
    auto out = deserialize_block(r, threads);
    if (!r.at_end()) throw DecodeError("trailing bytes after block");
    return out;
}

Bytes encode_hello_ack(const HelloAck& m) {
    ByteWriter w;
    w.u32(m.cores);
    return w.take();
}

HelloAck decode_hello_ack(std::span<const std::uint8_t> p) {
    return decode_payload("HELLO_ACK", [&] {
        ByteReader r(p);
        HelloAck m{r.u32()};
        expect_end(r, "HELLO_ACK");
        return m;
    });
}

bool SessionConfig::operator==(const SessionConfig& o) const {
    const auto& a = refinement;
    const auto& b = o.refinement;
    return std::bit_cast<std::uint64_t>(noise) == std::bit_cast<std::uint64_t>(o.noise) &&
           max_length == o.max_length && a.use_inverse_roles == b.use_inverse_roles &&
           a.use_cardinality == b.use_cardinality && a.use_disjunction == b.use_disjunction &&
           a.use_negation == b.use_negation && a.max_length == b.max_length &&
           std::bit_cast<std::uint64_t>(scoring.gain_bonus) == std::bit_cast<std::uint64_t>(o.scoring.gain_bonus) &&
           std::bit_cast<std::uint64_t>(scoring.expansion_penalty) ==
               std::bit_cast<std::uint64_t>(o.scoring.expansion_penalty) &&
           limit == o.limit;
}

namespace {

void put_ids(ByteWriter& w, const std::vector<IndividualId>& ids) {
    w.u32(static_cast<std::uint32_t>(ids.size()));
    for (auto id : ids) w.u32(id);
}

std::vector<IndividualId> get_ids(ByteReader& r) {
    const auto n = r.u32();
    if (n > r.remaining() / 4) throw DecodeError("id list longer than payload");
    std::vector<IndividualId> ids(n);
    for (auto& id : ids) id = r.u32();
    return ids;
}

}  // namespace

Bytes encode_kb_transfer(const KbTransfer& m) {
    ByteWriter w;
    w.buf().reserve(m.kb.size() + 4 * (m.positives.size() + m.negatives.size()) + 64);
    w.u32(static_cast<std::uint32_t>(m.kb.size()));
    w.bytes(m.kb);
    put_ids(w, m.positives);
    put_ids(w, m.negatives);
    const auto& c = m.config;
    w.f64(c.noise);
    w.u32(c.max_length);
    w.u8(static_cast<std::uint8_t>((c.refinement.use_inverse_roles ? 1 : 0) | (c.refinement.use_cardinality ? 2 : 0) |
                                   (c.refinement.use_disjunction ? 4 : 0) | (c.refinement.use_negation ? 8 : 0)));
    w.u32(c.refinement.max_length);
    w.f64(c.scoring.gain_bonus);
    w.f64(c.scoring.expansion_penalty);
    w.u32(c.limit);
    return w.take();
}

KbTransfer decode_kb_transfer(std::span<const std::uint8_t> p) {
    return decode_payload("KB_TRANSFER", [&] {
        ByteReader r(p);
        KbTransfer m;
        const auto kb_len = r.u32();
        const auto kb = r.bytes(kb_len);
        m.kb.assign(kb.begin(), kb.end());
        m.positives = get_ids(r);
        m.negatives = get_ids(r);
        auto& c = m.config;
        c.noise = r.f64();
        c.max_length = r.u32();
        const auto flags = r.u8();
        if (flags & ~0x0F) throw ProtocolError("KB_TRANSFER: unknown refinement flags");
        c.refinement.use_inverse_roles = flags & 1;
        c.refinement.use_cardinality = flags & 2;
        c.refinement.use_disjunction = flags & 4;
        c.refinement.use_negation = flags & 8;
        c.refinement.max_length = r.u32();
        c.scoring.gain_bonus = r.f64();
        c.scoring.expansion_penalty = r.f64();
        c.limit = r.u32();
        expect_end(r, "KB_TRANSFER");
        return m;
    });
}

Bytes encode_probe_result(const ProbeResult& m) {
    ByteWriter w;
    w.u32(m.cores);
    w.u64(m.elapsed_millis);
    w.u32(m.refinements);
    return w.take();
}

ProbeResult decode_probe_result(std::span<const std::uint8_t> p) {
    return decode_payload("PROBE_RESULT", [&] {
        ByteReader r(p);
        ProbeResult m;
        m.cores = r.u32();
        m.elapsed_millis = r.u64();
        m.refinements = r.u32();
        expect_end(r, "PROBE_RESULT");
        return m;
    });
}

Bytes encode_expand_result(const ExpandResult& m, std::size_t threads) {
    if (m.parents.size() != m.good.size()) throw std::invalid_argument("one parent index per refinement required");
    ByteWriter w;
    serialize_block(m.good, threads, w);
    for (auto p : m.parents) w.u32(p);
    w.u32(static_cast<std::uint32_t>(m.weak.size()));
    for (auto h : m.weak) w.u64(h);
    w.u64(m.generated);
    w.u64(m.redundant);
    return w.take();
}

ExpandResult decode_expand_result(std::span<const std::uint8_t> p, std::size_t threads) {
    return decode_payload("EXPAND_RESULT", [&] {
        ByteReader r(p);
        ExpandResult m;
        m.good = deserialize_block(r, threads);
        m.parents.resize(m.good.size());
        for (auto& x : m.parents) x = r.u32();
        const auto weak = r.u32();
        if (weak > r.remaining() / 8) throw DecodeError("weak hash list longer than payload");
        m.weak.resize(weak);
        for (auto& h : m.weak) h = r.u64();
        m.generated = r.u64();
        m.redundant = r.u64();
        expect_end(r, "EXPAND_RESULT");
        return m;
    });
}

Bytes encode_error(std::string_view message) {
    ByteWriter w;
    w.str(message);
    return w.take();
}

std::string decode_error(std::span<const std::uint8_t> p) {
    return decode_payload("ERROR", [&] {
        ByteReader r(p);
        auto s = r.str();
        expect_end(r, "ERROR");
        return s;
    });
}

}  // namespace spildl
