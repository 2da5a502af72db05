#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spildl/byte_io.hpp"
#include "spildl/concept.hpp"
#include "spildl/eval.hpp"
#include "spildl/kb.hpp"
#include "spildl/refine.hpp"
#include "spildl/search.hpp"

namespace spildl {

enum class MsgType : std::uint8_t {
    Hello = 0x01,
    HelloAck = 0x02,
    KbTransfer = 0x03,
    KbAck = 0x04,
    Probe = 0x05,
    ProbeResult = 0x06,
    ExpandTask = 0x07,
    ExpandResult = 0x08,
    Terminate = 0x09,
    BestHypotheses = 0x0A,
    Error = 0x0F,
};

std::string_view to_string(MsgType t);
bool is_known_type(std::uint8_t t) noexcept;

/// Malformed or unexpected protocol traffic.
class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct WireMessage {
    MsgType type = MsgType::Error;
    Bytes payload;
    bool operator==(const WireMessage&) const = default;
};

inline constexpr std::array<std::uint8_t, 4> kFrameMagic{'S', 'P', 'D', 'L'};
inline constexpr std::uint16_t kWireVersion = 1;
/// magic + version + type + payload length.
inline constexpr std::size_t kFrameHeaderSize = 11;
inline constexpr std::size_t kFrameTrailerSize = 4;
inline constexpr std::uint32_t kMaxPayload = 1u << 30;

/// magic, u16 version, u8 type, u32 length, payload, u32 crc32(type + payload).
Bytes encode_frame(const WireMessage& m);

/// Decodes exactly one frame occupying all of `bytes`. Throws ProtocolError.
WireMessage decode_frame(std::span<const std::uint8_t> bytes);

/// Parses a frame header and returns the payload length it announces.
std::uint32_t frame_payload_length(std::span<const std::uint8_t, kFrameHeaderSize> header);

/// One node of a serialized hypothesis block.
struct BlockNode {
    Concept expr = Concept::top();
    std::uint16_t he = 0;
    std::uint32_t pos_covered = 0;
    std::uint32_t neg_covered = 0;
    double score = 0.0;
    bool operator==(const BlockNode& o) const;
};

BlockNode to_block_node(const SearchNode& n);

/// u32 count, then per node: u32 byteLength + encode(concept) + u16 he +
/// u32 pos + u32 neg + f64 score. Chunks are encoded in parallel and
/// concatenated in node order, so the bytes do not depend on `threads`.
Bytes serialize_block(std::span<const BlockNode> nodes, std::size_t threads = 1);
void serialize_block(std::span<const BlockNode> nodes, std::size_t threads, ByteWriter& out);

/// Inverse of serialize_block. Errors name the failing node index.
std::vector<BlockNode> deserialize_block(std::span<const std::uint8_t> bytes, std::size_t threads = 1);
std::vector<BlockNode> deserialize_block(ByteReader& in, std::size_t threads);

struct HelloAck {
    std::uint32_t cores = 0;
    bool operator==(const HelloAck&) const = default;
};

/// Everything a worker needs to reproduce the master's expansion and
/// evaluation.
struct SessionConfig {
    double noise = 0.0;
    std::uint32_t max_length = 10;
    RefinementConfig refinement;
    ScoreConfig scoring;
    std::uint32_t limit = 1;
    bool operator==(const SessionConfig& o) const;
};

struct KbTransfer {
    Bytes kb;
    std::vector<IndividualId> positives;
    std::vector<IndividualId> negatives;
    SessionConfig config;
    bool operator==(const KbTransfer&) const = default;
};

struct ProbeResult {
    std::uint32_t cores = 0;
    std::uint64_t elapsed_millis = 0;
    std::uint32_t refinements = 0;
    bool operator==(const ProbeResult&) const = default;
};

struct ExpandResult {
    /// Evaluated, non-weak, locally deduplicated refinements in node order.
    std::vector<BlockNode> good;
    /// Per good refinement: index of its parent inside the task block.
    std::vector<std::uint32_t> parents;
    /// Hashes of the locally surviving refinements dropped as weak.
    std::vector<CanonicalHash> weak;
    std::uint64_t generated = 0;
    std::uint64_t redundant = 0;
    bool operator==(const ExpandResult&) const = default;
};

Bytes encode_hello_ack(const HelloAck& m);
HelloAck decode_hello_ack(std::span<const std::uint8_t> p);
Bytes encode_kb_transfer(const KbTransfer& m);
KbTransfer decode_kb_transfer(std::span<const std::uint8_t> p);
Bytes encode_probe_result(const ProbeResult& m);
ProbeResult decode_probe_result(std::span<const std::uint8_t> p);
Bytes encode_expand_result(const ExpandResult& m, std::size_t threads = 1);
ExpandResult decode_expand_result(std::span<const std::uint8_t> p, std::size_t threads = 1);
Bytes encode_error(std::string_view message);
std::string decode_error(std::span<const std::uint8_t> p);

}  // namespace spildl
