#include <algorithm>
#include <chrono>
#include <cstring>
#include <ostream>

#include "spildl/cluster.hpp"
#include "spildl/parallel.hpp"

namespace spildl {

namespace {

constexpr std::array<std::uint8_t, 5> kDiscoverRequest{'S', 'P', 'D', 'L', '?'};
constexpr std::array<std::uint8_t, 5> kDiscoverReply{'S', 'P', 'D', 'L', '!'};

Bytes tagged_port(std::span<const std::uint8_t, 5> tag, std::uint16_t port) {
    ByteWriter w;
    w.bytes(tag);
    w.u16(port);
    return w.take();
}

std::optional<std::uint16_t> untag_port(std::span<const std::uint8_t, 5> tag, std::span<const std::uint8_t> d) {
    if (d.size() != 7 || !std::equal(tag.begin(), tag.end(), d.begin())) return std::nullopt;
    return static_cast<std::uint16_t>((d[5] << 8) | d[6]);
}

Bitset id_bitset(const std::vector<IndividualId>& ids, std::size_t n) {
    Bitset b(n);
    for (auto id : ids) {
        if (id >= n) throw ProtocolError("example id " + std::to_string(id) + " out of range");
        b.set(id);
    }
    return b;
}

}  // namespace

Bytes encode_discovery_request(std::uint16_t reply_port) { return tagged_port(kDiscoverRequest, reply_port); }
std::optional<std::uint16_t> decode_discovery_request(std::span<const std::uint8_t> d) {
    return untag_port(kDiscoverRequest, d);
}
Bytes encode_discovery_reply(std::uint16_t tcp_port) { return tagged_port(kDiscoverReply, tcp_port); }
std::optional<std::uint16_t> decode_discovery_reply(std::span<const std::uint8_t> d) {
    return untag_port(kDiscoverReply, d);
}

std::unique_ptr<WorkerContext> make_worker_context(const KbTransfer& transfer) {
    auto ctx = std::make_unique<WorkerContext>();
    try {
        ctx->parsed = deserialize_kb(transfer.kb);
    } catch (const DecodeError& e) {
        throw ProtocolError(std::string("KB_TRANSFER: ") + e.what());
    }
    auto& kb = ctx->parsed.kb;
    kb = materialize(std::move(kb));
    ctx->examples.positives = id_bitset(transfer.positives, kb.num_individuals);
    ctx->examples.negatives = id_bitset(transfer.negatives, kb.num_individuals);
    if (ctx->examples.positives.intersects(ctx->examples.negatives))
        throw ProtocolError("KB_TRANSFER: conflicting example");
    ctx->config = transfer.config;
    if (ctx->config.max_length == 0) throw ProtocolError("KB_TRANSFER: max length must be at least 1");
    ctx->stats = compute_statistics(kb);
    ctx->mb = build_mb(kb, ctx->stats);
    ctx->refiner = std::make_unique<Refiner>(kb, ctx->stats, ctx->mb, ctx->config.refinement);
    return ctx;
}

ExpandResult process_expand_task(std::span<const BlockNode> block, const WorkerContext& ctx, std::size_t threads) {
    const auto& kb = ctx.parsed.kb;
    const auto num_pos = ctx.examples.num_positive();
    const auto num_neg = ctx.examples.num_negative();

    std::vector<Expansion> expansions(block.size());
    parallel_for(block.size(), threads, [&](std::size_t i) {
        SearchNode node;
        node.expr = block[i].expr;
        node.he = block[i].he;
        expansions[i] = expand_single_node(node, *ctx.refiner, ctx.config.max_length);
    });
    ExpandResult out;
    for (const auto& e : expansions) out.generated += e.refinements.size();

    auto survivors = reduce_redundant(expansions, ClosedList{}, threads);
    out.redundant = out.generated - survivors.size();

    std::vector<Concept> concepts;
    concepts.reserve(survivors.size());
    for (const auto& s : survivors) concepts.push_back(s.expr);
    const auto coverage = evaluate_batch(concepts, kb, ctx.examples, threads);

    for (std::size_t i = 0; i < survivors.size(); ++i) {
        if (is_weak(coverage[i], num_pos, ctx.config.noise)) {
            out.weak.push_back(survivors[i].hash);
            continue;
        }
        const auto& parent = block[survivors[i].source];
        const CoverageResult parent_cov{parent.pos_covered, parent.neg_covered, std::nullopt};
        const auto len = concept_length(concepts[i]);
        const auto s = score(coverage[i], num_pos, num_neg, accuracy(parent_cov, num_pos, num_neg), len,
                             ctx.config.scoring);
        out.good.push_back({std::move(concepts[i]), static_cast<std::uint16_t>(len), coverage[i].pos_covered,
                            coverage[i].neg_covered, s.value});
        out.parents.push_back(static_cast<std::uint32_t>(survivors[i].source));
    }
    return out;
}

ProbeResult run_probe(const WorkerContext& ctx, std::size_t threads) {
    const auto start = std::chrono::steady_clock::now();
    const auto refinements = ctx.refiner->refine(Concept::top(), std::min<std::uint32_t>(5, ctx.config.max_length));
    evaluate_batch(refinements, ctx.parsed.kb, ctx.examples, threads);
    ProbeResult r;
    r.cores = static_cast<std::uint32_t>(threads);
    r.elapsed_millis = static_cast<std::uint64_t>(
        std::chrono::duration_cast<Millis>(std::chrono::steady_clock::now() - start).count());
    r.refinements = static_cast<std::uint32_t>(refinements.size());
    return r;
}

Worker::Worker(WorkerOptions opts) : opts_(std::move(opts)) {
    cores_ = opts_.cores ? opts_.cores : std::max(1u, std::thread::hardware_concurrency());
    tcp_ = tcp_listen(opts_.port, tcp_port_);
    if (opts_.discovery) {
        std::uint16_t bound = 0;
        udp_ = udp_bind(opts_.broadcast_port, bound);
    }
}

void Worker::log(const std::string& line) const {
    if (opts_.log) *opts_.log << "worker: " << line << '\n' << std::flush;
}

void Worker::serve(std::stop_token st) {
    constexpr Millis kSlice{50};
    while (!st.stop_requested()) {
        if (udp_.valid()) {
            Endpoint from;
            if (auto d = udp_recv(udp_, Millis{0}, &from)) {
                if (auto reply_port = decode_discovery_request(*d)) {
                    log("discovery request from " + from.host + ", replying to port " + std::to_string(*reply_port));
                    try {
                        udp_send(udp_, {from.host, *reply_port}, encode_discovery_reply(tcp_port_), false);
                    } catch (const NetError& e) {
                        log(std::string("discovery reply failed: ") + e.what());
                    }
                }
                continue;
            }
        }
        Endpoint peer;
        if (auto conn = tcp_accept(tcp_, kSlice, &peer)) {
            log("session from " + peer.str());
            session(std::move(*conn), st);
            ++sessions_;
            if (opts_.single_session) return;
        }
    }
}

void Worker::session(Socket conn, std::stop_token st) {
    std::unique_ptr<WorkerContext> ctx;
    std::vector<SearchNode> best;
    auto reply = [&](MsgType t, Bytes payload = {}) { send_message(conn, {t, std::move(payload)}); };
    try {
        while (!st.stop_requested()) {
            if (!wait_readable(conn, Millis{100})) continue;
            const auto msg = recv_message(conn, opts_.io_timeout);
            switch (msg.type) {
                case MsgType::Hello: reply(MsgType::HelloAck, encode_hello_ack({cores_})); break;
                case MsgType::KbTransfer:
                    ctx = make_worker_context(decode_kb_transfer(msg.payload));
                    log("KB received: " + std::to_string(ctx->parsed.kb.num_individuals) + " individuals");
                    reply(MsgType::KbAck);
                    break;
                case MsgType::Probe: {
                    if (!ctx) throw ProtocolError("PROBE before KB_TRANSFER");
                    reply(MsgType::ProbeResult, encode_probe_result(run_probe(*ctx, cores_)));
                    break;
                }
                case MsgType::ExpandTask: {
                    if (!ctx) throw ProtocolError("EXPAND_TASK before KB_TRANSFER");
                    std::vector<BlockNode> block;
                    try {
                        block = deserialize_block(msg.payload, cores_);
                    } catch (const DecodeError& e) {
                        throw ProtocolError(std::string("EXPAND_TASK: ") + e.what());
                    }
                    auto result = process_expand_task(block, *ctx, cores_);
                    const auto num_pos = ctx->examples.num_positive();
                    const auto num_neg = ctx->examples.num_negative();
                    for (const auto& g : result.good) {
                        SearchNode n;
                        n.expr = g.expr;
                        n.hash = hash_concept(g.expr);
                        n.he = g.he;
                        n.coverage = {g.pos_covered, g.neg_covered, std::nullopt};
                        n.score = {accuracy(n.coverage, num_pos, num_neg), g.score};
                        best.push_back(std::move(n));
                    }
                    std::sort(best.begin(), best.end(), hypothesis_before);
                    const std::size_t keep = std::max<std::uint32_t>(ctx->config.limit, 1);
                    if (best.size() > keep) best.resize(keep);
                    reply(MsgType::ExpandResult, encode_expand_result(result, cores_));
                    break;
                }
                case MsgType::Terminate: {
                    std::vector<BlockNode> nodes;
                    for (const auto& n : best) nodes.push_back(to_block_node(n));
                    reply(MsgType::BestHypotheses, serialize_block(nodes, cores_));
                    log("terminated");
                    return;
                }
                default: throw ProtocolError("unexpected " + std::string(to_string(msg.type)) + " frame");
            }
        }
    } catch (const ProtocolError& e) {
        log(std::string("protocol error: ") + e.what());
        try {
            reply(MsgType::Error, encode_error(e.what()));
        } catch (const NetError&) {
        }
    } catch (const NetError& e) {
        log(std::string("connection lost: ") + e.what());
    } catch (const std::exception& e) {
        log(std::string("session failed: ") + e.what());
        try {
            reply(MsgType::Error, encode_error(e.what()));
        } catch (const NetError&) {
        }
    }
}

}  // namespace spildl
