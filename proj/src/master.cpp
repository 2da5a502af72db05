#include <algorithm>
#include <map>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "spildl/cluster.hpp"
#include "spildl/parallel.hpp"

namespace spildl {

std::string_view to_string(Phase p) {
    switch (p) {
        case Phase::Discovery: return "discovery";
        case Phase::Probing: return "probing";
        case Phase::Learning: return "learning";
        case Phase::Terminating: return "terminating";
        case Phase::Done: return "done";
    }
    return "?";
}

void PhaseMachine::advance(Phase next) {
    if (static_cast<int>(next) != static_cast<int>(current()) + 1)
        throw std::logic_error("illegal phase transition " + std::string(to_string(current())) + " -> " +
                               std::string(to_string(next)));
    history_.push_back(next);
}

void assign_shares(std::vector<WorkerInfo>& workers) {
    for (auto& w : workers) w.wn = w.alive ? w.cores : 0;
}

std::vector<std::size_t> assignment_order(const std::vector<WorkerInfo>& workers) {
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < workers.size(); ++i)
        if (workers[i].alive && workers[i].wn > 0) order.push_back(i);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = workers[a];
        const auto& y = workers[b];
        if (x.probe_millis != y.probe_millis) return x.probe_millis < y.probe_millis;
        return x.connection_id < y.connection_id;
    });
    return order;
}

HandlerThread::HandlerThread() : thread_([this](std::stop_token st) { loop(st); }) {}

HandlerThread::~HandlerThread() {
    thread_.request_stop();
    cv_.notify_all();
}

std::future<void> HandlerThread::submit(std::function<void()> job) {
    std::packaged_task<void()> task(std::move(job));
    auto fut = task.get_future();
    {
        std::lock_guard lock(mutex_);
        queue_.push_back(std::move(task));
    }
    cv_.notify_one();
    return fut;
}

void HandlerThread::loop(std::stop_token st) {
    while (true) {
        std::packaged_task<void()> task;
        {
            std::unique_lock lock(mutex_);
            if (!cv_.wait(lock, st, [&] { return !queue_.empty(); })) return;
            task = std::move(queue_.front());
            queue_.pop_front();
        }
        task();
    }
}

std::vector<Endpoint> discover_workers(const MasterOptions& opts) {
    using Clock = std::chrono::steady_clock;
    std::uint16_t reply_port = 0;
    auto sock = udp_bind(0, reply_port);
    const auto request = encode_discovery_request(reply_port);
    const Endpoint target{opts.broadcast_address, opts.broadcast_port};
    const auto wanted = opts.expect_workers > opts.direct_workers.size()
                            ? opts.expect_workers - opts.direct_workers.size()
                            : std::size_t{0};
    const auto deadline = Clock::now() + opts.discovery_timeout;
    std::vector<Endpoint> found;
    auto next_send = Clock::now();
    while (Clock::now() < deadline) {
        if (Clock::now() >= next_send) {
            udp_send(sock, target, request, true);
            next_send = Clock::now() + Millis{250};
        }
        const auto wait = std::min(std::chrono::duration_cast<Millis>(deadline - Clock::now()),
                                   std::chrono::duration_cast<Millis>(next_send - Clock::now()));
        Endpoint from;
        auto d = udp_recv(sock, std::max(wait, Millis{1}), &from);
        if (!d) continue;
        if (auto port = decode_discovery_reply(*d)) {
            Endpoint ep{from.host, *port};
            if (std::find(found.begin(), found.end(), ep) == found.end()) found.push_back(ep);
            if (wanted > 0 && found.size() >= wanted) break;
        }
    }
    std::sort(found.begin(), found.end());
    return found;
}

namespace {

struct Connection {
    WorkerInfo info;
    Socket socket;
    std::unique_ptr<HandlerThread> handler;
};

WireMessage expect(const Socket& s, MsgType type, Millis timeout) {
    auto m = recv_message(s, timeout);
    if (m.type == MsgType::Error) throw ProtocolError("worker error: " + decode_error(m.payload));
    if (m.type != type)
        throw ProtocolError("expected " + std::string(to_string(type)) + ", got " + std::string(to_string(m.type)));
    return m;
}

class ClusterBackend final : public ExpansionBackend {
public:
    ClusterBackend(std::vector<Connection>& conns, const SearchConfig& cfg, std::size_t num_pos, double noise,
                   Millis io_timeout, std::ostream* log)
        : conns_(conns), cfg_(cfg), num_pos_(num_pos), noise_(noise), io_timeout_(io_timeout), log_(log) {}

    BackendOutput process(std::span<const SearchNode> beam, const ClosedList& rht) override;

private:
    void warn(const std::string& line) const {
        if (log_) *log_ << "master: " << line << '\n' << std::flush;
    }

    std::vector<Connection>& conns_;
    const SearchConfig& cfg_;
    std::size_t num_pos_;
    double noise_;
    Millis io_timeout_;
    std::ostream* log_;
};

BackendOutput ClusterBackend::process(std::span<const SearchNode> beam, const ClosedList& rht) {
    std::vector<WorkerInfo> infos;
    for (const auto& c : conns_) infos.push_back(c.info);
    const auto order = assignment_order(infos);

    struct Block {
        std::size_t conn;
        std::size_t offset;
        std::size_t size;
        std::optional<ExpandResult> result;
    };
    std::vector<Block> blocks;
    std::size_t offset = 0;
    for (auto ci : order) {
        if (offset >= beam.size()) break;
        const auto n = std::min<std::size_t>(conns_[ci].info.wn, beam.size() - offset);
        blocks.push_back({ci, offset, n, std::nullopt});
        offset += n;
    }

    std::vector<std::future<void>> pending;
    for (auto& b : blocks) {
        pending.push_back(conns_[b.conn].handler->submit([this, &b, beam] {
            auto& conn = conns_[b.conn];
            try {
                std::vector<BlockNode> nodes;
                for (std::size_t i = 0; i < b.size; ++i) nodes.push_back(to_block_node(beam[b.offset + i]));
                send_message(conn.socket, {MsgType::ExpandTask, serialize_block(nodes, cfg_.threads)});
                auto reply = expect(conn.socket, MsgType::ExpandResult, io_timeout_);
                auto result = decode_expand_result(reply.payload, cfg_.threads);
                for (auto p : result.parents)
                    if (p >= b.size) throw ProtocolError("EXPAND_RESULT parent index out of range");
                b.result = std::move(result);
            } catch (const std::exception& e) {
                conn.info.alive = false;
                conn.socket.shutdown();
                warn("worker " + conn.info.address.str() + " lost: " + e.what());
            }
        }));
    }
    for (auto& f : pending) f.get();

    BackendOutput out;
    out.expanded.assign(beam.size(), false);
    std::vector<Expansion> units;
    std::vector<const Block*> unit_blocks;
    for (const auto& b : blocks) {
        if (!b.result) continue;
        for (std::size_t i = 0; i < b.size; ++i) out.expanded[b.offset + i] = true;
        out.generated += b.result->generated;
        Expansion e;
        e.refinements.reserve(b.result->good.size());
        for (const auto& g : b.result->good) e.refinements.push_back(g.expr);
        e.hashes.resize(e.refinements.size());
        units.push_back(std::move(e));
        unit_blocks.push_back(&b);
    }
    parallel_for(units.size(), cfg_.threads, [&](std::size_t u) {
        auto& e = units[u];
        for (std::size_t i = 0; i < e.refinements.size(); ++i) e.hashes[i] = hash_concept(e.refinements[i]);
    });

    const auto survivors = reduce_redundant(units, rht, cfg_.threads, cfg_.verify_hashes);
    std::vector<std::unordered_map<CanonicalHash, std::size_t>> position(units.size());
    for (std::size_t u = 0; u < units.size(); ++u)
        for (std::size_t i = 0; i < units[u].hashes.size(); ++i) position[u].emplace(units[u].hashes[i], i);

    std::unordered_set<CanonicalHash> new_weak;
    for (const auto* b : unit_blocks)
        for (auto h : b->result->weak)
            if (!rht.contains(h)) new_weak.insert(h);

    for (const auto& s : survivors) {
        const auto* b = unit_blocks[s.source];
        const auto i = position[s.source].at(s.hash);
        const auto& g = b->result->good[i];
        CoverageResult cov{g.pos_covered, g.neg_covered, std::nullopt};
        // Worker-side weakness uses the same noise; recheck defensively.
        if (is_weak(cov, num_pos_, noise_)) {
            new_weak.insert(s.hash);
            continue;
        }
        out.closed.push_back(s.hash);
        out.good.push_back({s.expr, s.hash, cov, b->offset + b->result->parents[i]});
    }
    std::vector<CanonicalHash> weak_sorted(new_weak.begin(), new_weak.end());
    std::sort(weak_sorted.begin(), weak_sorted.end());
    out.closed.insert(out.closed.end(), weak_sorted.begin(), weak_sorted.end());
    out.weak = new_weak.size();
    out.evaluated = out.good.size() + out.weak;
    out.redundant = out.generated - std::min(out.generated, out.evaluated);
    out.abort = std::none_of(conns_.begin(), conns_.end(), [](const Connection& c) { return c.info.alive; });
    for (auto& c : conns_)
        if (!c.info.alive) c.info.wn = 0;
    return out;
}

}  // namespace

ClusterResult run_master(const ParsedKb& parsed, const ExampleSet& examples, const SearchConfig& cfg,
                         const RefinementConfig& refinement, const MasterOptions& opts, SearchObserver observer) {
    auto log = [&](const std::string& line) {
        if (opts.log) *opts.log << "master: " << line << '\n' << std::flush;
    };
    ClusterResult result;
    PhaseMachine phases;

    // Discovery.
    std::vector<Endpoint> endpoints = opts.direct_workers;
    if (opts.broadcast) {
        for (auto& ep : discover_workers(opts))
            if (std::find(endpoints.begin(), endpoints.end(), ep) == endpoints.end()) endpoints.push_back(ep);
    }
    if (endpoints.empty()) throw ClusterError("discovery timed out: no workers responded");
    if (opts.expect_workers > 0 && endpoints.size() < opts.expect_workers)
        throw ClusterError("discovery timed out: expected " + std::to_string(opts.expect_workers) + " workers, found " +
                           std::to_string(endpoints.size()));

    std::vector<Connection> conns;
    for (const auto& ep : endpoints) {
        Connection c;
        c.info.address = ep;
        c.info.connection_id = static_cast<std::uint32_t>(conns.size());
        try {
            c.socket = tcp_connect(ep, opts.io_timeout);
            send_message(c.socket, {MsgType::Hello, {}});
            c.info.cores = decode_hello_ack(expect(c.socket, MsgType::HelloAck, opts.io_timeout).payload).cores;
            if (c.info.cores == 0) throw ProtocolError("worker reported zero cores");
        } catch (const std::exception& e) {
            log("cannot reach worker " + ep.str() + ": " + e.what());
            continue;
        }
        c.handler = std::make_unique<HandlerThread>();
        log("connected to worker " + ep.str() + " (" + std::to_string(c.info.cores) + " cores)");
        conns.push_back(std::move(c));
    }
    if (conns.empty()) throw ClusterError("no worker accepted a connection");

    // Probing.
    phases.advance(Phase::Probing);
    KbTransfer transfer;
    transfer.kb = serialize_kb(parsed.kb, parsed.symbols);
    examples.positives.for_each_set([&](std::size_t i) { transfer.positives.push_back(static_cast<IndividualId>(i)); });
    examples.negatives.for_each_set([&](std::size_t i) { transfer.negatives.push_back(static_cast<IndividualId>(i)); });
    transfer.config.noise = cfg.noise;
    transfer.config.max_length = cfg.max_length;
    transfer.config.refinement = refinement;
    transfer.config.scoring = cfg.scoring;
    transfer.config.limit = static_cast<std::uint32_t>(cfg.limit);
    const WireMessage kb_frame{MsgType::KbTransfer, encode_kb_transfer(transfer)};
    {
        std::vector<std::future<void>> pending;
        for (auto& c : conns) {
            pending.push_back(c.handler->submit([&] {
                try {
                    send_message(c.socket, kb_frame);
                    expect(c.socket, MsgType::KbAck, opts.io_timeout);
                    send_message(c.socket, {MsgType::Probe, {}});
                    const auto r = decode_probe_result(expect(c.socket, MsgType::ProbeResult, opts.probe_timeout).payload);
                    c.info.probe_millis = r.elapsed_millis;
                    if (r.cores != c.info.cores) c.info.cores = r.cores;
                } catch (const std::exception& e) {
                    c.info.alive = false;
                    c.socket.shutdown();
                    log("worker " + c.info.address.str() + " dropped during probing: " + e.what());
                }
            }));
        }
        for (auto& f : pending) f.get();
    }
    std::vector<WorkerInfo> infos;
    for (auto& c : conns) infos.push_back(c.info);
    assign_shares(infos);
    for (std::size_t i = 0; i < conns.size(); ++i) conns[i].info = infos[i];
    if (std::none_of(conns.begin(), conns.end(), [](const Connection& c) { return c.info.alive; }))
        throw ClusterError("all workers dropped during probing");

    // Learning.
    phases.advance(Phase::Learning);
    SearchConfig learn_cfg = cfg;
    learn_cfg.beam_width = 0;
    for (const auto& c : conns) learn_cfg.beam_width += c.info.wn;
    log("learning with beam width " + std::to_string(learn_cfg.beam_width));
    SearchEngine engine(parsed.kb, examples, learn_cfg, std::move(observer));
    ClusterBackend backend(conns, engine.config(), examples.num_positive(), cfg.noise, opts.io_timeout, opts.log);
    result.search = engine.run(backend);

    // Termination.
    phases.advance(Phase::Terminating);
    std::vector<std::vector<BlockNode>> worker_best(conns.size());
    {
        std::vector<std::future<void>> pending;
        for (std::size_t i = 0; i < conns.size(); ++i) {
            auto& c = conns[i];
            if (!c.info.alive) continue;
            ++result.terminates_sent;
            pending.push_back(c.handler->submit([&, i] {
                try {
                    send_message(c.socket, {MsgType::Terminate, {}});
                    worker_best[i] = deserialize_block(expect(c.socket, MsgType::BestHypotheses, opts.io_timeout).payload,
                                                       cfg.threads);
                } catch (const std::exception& e) {
                    log("no final hypotheses from " + c.info.address.str() + ": " + e.what());
                }
            }));
        }
        for (auto& f : pending) f.get();
    }

    std::vector<SearchNode> merged = engine.open_list();
    std::unordered_set<CanonicalHash> seen;
    for (const auto& n : merged) seen.insert(n.hash);
    for (const auto& list : worker_best)
        for (const auto& b : list) {
            const auto h = hash_concept(b.expr);
            if (!seen.insert(h).second) continue;
            auto n = engine.make_node(b.expr, h, {b.pos_covered, b.neg_covered, std::nullopt}, std::nullopt,
                                      std::nullopt);
            n.he = b.he;
            n.score.value = b.score;
            merged.push_back(std::move(n));
        }
    const auto k = std::min(cfg.limit, merged.size());
    std::partial_sort(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(k), merged.end(),
                      hypothesis_before);
    merged.resize(k);
    result.search.best = std::move(merged);
    result.closed = engine.closed_list().hashes();

    for (auto& c : conns) {
        c.socket.shutdown();
        result.workers.push_back(c.info);
    }
    conns.clear();
    phases.advance(Phase::Done);
    result.phases = phases.history();
    return result;
}

}  // namespace spildl
