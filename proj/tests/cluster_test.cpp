#include <gtest/gtest.h>

#include <atomic>
#include <numeric>
#include <random>
#include <set>
#include <thread>
#include <unordered_set>

#include <unistd.h>

#include "spildl/cluster.hpp"
#include "spildl/search.hpp"
#include "test_util.hpp"

using namespace spildl;
using namespace std::chrono_literals;

namespace {

// Each test uses its own discovery port so parallel ctest runs do not mix.
std::uint16_t fresh_port() {
    static std::atomic<std::uint16_t> next{static_cast<std::uint16_t>(42000 + (::getpid() % 500) * 20)};
    return next++;
}

struct RunningWorker {
    std::unique_ptr<Worker> worker;
    std::jthread thread;

    RunningWorker(std::uint16_t broadcast_port, std::uint32_t cores, bool discovery = true) {
        WorkerOptions o;
        o.broadcast_port = broadcast_port;
        o.port = 0;
        o.cores = cores;
        o.discovery = discovery;
        o.io_timeout = Millis{20000};
        worker = std::make_unique<Worker>(o);
        thread = std::jthread([w = worker.get()](std::stop_token st) { w->serve(st); });
    }
    ~RunningWorker() {
        thread.request_stop();
        if (thread.joinable()) thread.join();
    }
    Endpoint endpoint() const { return {"127.0.0.1", worker->tcp_port()}; }
};

MasterOptions loopback_master(std::uint16_t broadcast_port, std::size_t expect) {
    MasterOptions m;
    m.broadcast_port = broadcast_port;
    m.broadcast_address = "127.255.255.255";
    m.discovery_timeout = Millis{3000};
    m.expect_workers = expect;
    m.io_timeout = Millis{20000};
    return m;
}

KbTransfer transfer_for(const testutil::Fixture& f, const SessionConfig& cfg) {
    KbTransfer t;
    t.kb = serialize_kb(f.kb(), f.symbols());
    f.examples.positives.for_each_set([&](std::size_t i) { t.positives.push_back(static_cast<IndividualId>(i)); });
    f.examples.negatives.for_each_set([&](std::size_t i) { t.negatives.push_back(static_cast<IndividualId>(i)); });
    t.config = cfg;
    return t;
}

SearchConfig trains_search() {
    SearchConfig cfg;
    cfg.max_length = 7;
    cfg.threads = 2;
    return cfg;
}

}  // namespace

TEST(PhaseMachine, ForwardOnly) {
    PhaseMachine pm;
    EXPECT_EQ(pm.current(), Phase::Discovery);
    EXPECT_THROW(pm.advance(Phase::Learning), std::logic_error);
    pm.advance(Phase::Probing);
    EXPECT_THROW(pm.advance(Phase::Discovery), std::logic_error);
    EXPECT_THROW(pm.advance(Phase::Probing), std::logic_error);
    pm.advance(Phase::Learning);
    pm.advance(Phase::Terminating);
    pm.advance(Phase::Done);
    EXPECT_THROW(pm.advance(Phase::Done), std::logic_error);
    EXPECT_EQ(pm.history(), (std::vector<Phase>{Phase::Discovery, Phase::Probing, Phase::Learning, Phase::Terminating,
                                                Phase::Done}));
}

TEST(Shares, SumOfSharesIsBeamWidth) {
    std::mt19937_64 rng(51);
    for (int round = 0; round < 100; ++round) {
        std::vector<WorkerInfo> ws(1 + rng() % 6);
        std::uint32_t alive_cores = 0;
        for (std::uint32_t i = 0; i < ws.size(); ++i) {
            ws[i].cores = 1 + rng() % 16;
            ws[i].alive = rng() % 4 != 0;
            ws[i].connection_id = i;
            if (ws[i].alive) alive_cores += ws[i].cores;
        }
        assign_shares(ws);
        std::uint32_t sum = 0;
        for (const auto& w : ws) {
            EXPECT_EQ(w.wn, w.alive ? w.cores : 0u);
            sum += w.wn;
        }
        EXPECT_EQ(sum, alive_cores);
    }
}

TEST(Shares, FastestWorkerFirst) {
    std::vector<WorkerInfo> ws(4);
    const std::uint64_t probe[] = {30, 10, 30, 5};
    for (std::uint32_t i = 0; i < 4; ++i) {
        ws[i].cores = 2;
        ws[i].probe_millis = probe[i];
        ws[i].connection_id = i;
    }
    ws[3].alive = false;
    assign_shares(ws);
    EXPECT_EQ(assignment_order(ws), (std::vector<std::size_t>{1, 0, 2}));
}

TEST(HandlerThread, RunsJobsInOrderAndPropagatesErrors) {
    HandlerThread h;
    std::vector<int> seen;
    std::vector<std::future<void>> fs;
    for (int i = 0; i < 20; ++i) fs.push_back(h.submit([&seen, i] { seen.push_back(i); }));
    auto bad = h.submit([] { throw std::runtime_error("boom"); });
    for (auto& f : fs) f.get();
    EXPECT_THROW(bad.get(), std::runtime_error);
    std::vector<int> want(20);
    std::iota(want.begin(), want.end(), 0);
    EXPECT_EQ(seen, want);
}

TEST(WorkerTask, MatchesLocalExpansion) {
    const auto f = testutil::trains();
    SessionConfig sc;
    sc.max_length = 7;
    sc.refinement.max_length = 7;
    const auto ctx = make_worker_context(transfer_for(f, sc));
    const Refiner refiner(f.kb(), f.stats, f.mb, sc.refinement);

    std::vector<BlockNode> block;
    for (const char* text : {"Thing", "Train", "(hasCar some Thing)", "Car"}) {
        BlockNode b;
        b.expr = canonicalize(parse_concept(text, f.symbols()));
        b.he = static_cast<std::uint16_t>(concept_length(b.expr) + 1);
        const auto cov = evaluate(b.expr, f.kb(), f.examples);
        b.pos_covered = cov.pos_covered;
        b.neg_covered = cov.neg_covered;
        block.push_back(b);
    }
    const auto result = process_expand_task(block, *ctx, 2);

    // Local oracle: expand, dedupe across nodes, evaluate, drop weak.
    std::vector<Expansion> units;
    std::size_t generated = 0;
    for (const auto& b : block) {
        SearchNode n;
        n.expr = b.expr;
        n.he = b.he;
        units.push_back(expand_single_node(n, refiner, 7));
        generated += units.back().refinements.size();
    }
    const auto survivors = reduce_redundant(units, {}, 1);
    struct Good {
        CanonicalHash hash;
        std::uint32_t counts;
        std::size_t parent;
    };
    std::vector<Good> good;
    std::unordered_set<CanonicalHash> weak;
    for (const auto& s : survivors) {
        const auto cov = evaluate(s.expr, f.kb(), f.examples);
        if (is_weak(cov, 5, 0.0))
            weak.insert(s.hash);
        else
            good.push_back({s.hash, cov.pos_covered * 1000 + cov.neg_covered, s.source});
    }

    EXPECT_EQ(result.generated, generated);
    EXPECT_EQ(result.redundant, generated - survivors.size());
    ASSERT_EQ(result.good.size(), good.size());
    ASSERT_EQ(result.parents.size(), good.size());
    for (std::size_t i = 0; i < good.size(); ++i) {
        EXPECT_EQ(hash_concept(result.good[i].expr), good[i].hash);
        EXPECT_EQ(result.good[i].pos_covered * 1000 + result.good[i].neg_covered, good[i].counts);
        EXPECT_EQ(result.parents[i], good[i].parent);
    }
    EXPECT_EQ(std::unordered_set<CanonicalHash>(result.weak.begin(), result.weak.end()), weak);
}

TEST(WorkerTask, EmptyBlock) {
    const auto f = testutil::trains();
    const auto ctx = make_worker_context(transfer_for(f, {}));
    const auto r = process_expand_task({}, *ctx, 2);
    EXPECT_TRUE(r.good.empty());
    EXPECT_TRUE(r.weak.empty());
    EXPECT_EQ(r.generated, 0u);
    EXPECT_EQ(serialize_block({}, 1), (Bytes{0, 0, 0, 0}));
}

TEST(WorkerTask, ProbeDoesWork) {
    const auto f = testutil::trains();
    const auto ctx = make_worker_context(transfer_for(f, {}));
    const auto p = run_probe(*ctx, 3);
    EXPECT_EQ(p.cores, 3u);
    EXPECT_GT(p.refinements, 10u);
}

TEST(Discovery, FindsOneWorker) {
    const auto port = fresh_port();
    RunningWorker w(port, 1);
    const auto found = discover_workers(loopback_master(port, 1));
    ASSERT_EQ(found.size(), 1u);
    EXPECT_EQ(found[0].port, w.worker->tcp_port());
}

TEST(Discovery, FindsThreeWorkers) {
    const auto port = fresh_port();
    RunningWorker a(port, 1), b(port, 1), c(port, 1);
    const auto found = discover_workers(loopback_master(port, 3));
    ASSERT_EQ(found.size(), 3u);
    std::set<std::uint16_t> ports;
    for (const auto& e : found) ports.insert(e.port);
    EXPECT_EQ(ports, (std::set<std::uint16_t>{a.worker->tcp_port(), b.worker->tcp_port(), c.worker->tcp_port()}));
    EXPECT_TRUE(std::is_sorted(found.begin(), found.end()));
}

TEST(Discovery, NoWorkersIsAClusterError) {
    const auto f = testutil::trains();
    auto opts = loopback_master(fresh_port(), 0);
    opts.discovery_timeout = Millis{400};
    EXPECT_TRUE(discover_workers(opts).empty());
    EXPECT_THROW(run_master(f.parsed, f.examples, trains_search(), {.max_length = 7}, opts), ClusterError);
}

TEST(Discovery, FewerThanExpectedIsAClusterError) {
    const auto f = testutil::trains();
    const auto port = fresh_port();
    RunningWorker w(port, 1);
    auto opts = loopback_master(port, 2);
    opts.discovery_timeout = Millis{600};
    EXPECT_THROW(run_master(f.parsed, f.examples, trains_search(), {.max_length = 7}, opts), ClusterError);
}

TEST(Master, ThreeWorkersGetThreeConnections) {
    const auto f = testutil::trains();
    const auto port = fresh_port();
    RunningWorker a(port, 1), b(port, 2), c(port, 1);
    const auto r = run_master(f.parsed, f.examples, trains_search(), {.max_length = 7}, loopback_master(port, 3));
    ASSERT_EQ(r.workers.size(), 3u);
    std::set<std::uint32_t> ids;
    std::uint32_t wn = 0;
    for (const auto& w : r.workers) {
        ids.insert(w.connection_id);
        wn += w.wn;
        EXPECT_EQ(w.wn, w.cores);
    }
    EXPECT_EQ(ids.size(), 3u);
    EXPECT_EQ(wn, 4u);
    EXPECT_EQ(r.terminates_sent, 3u);
    EXPECT_EQ(r.phases, (std::vector<Phase>{Phase::Discovery, Phase::Probing, Phase::Learning, Phase::Terminating,
                                            Phase::Done}));
}

TEST(Master, DirectWorkerWithoutBroadcast) {
    const auto f = testutil::trains();
    RunningWorker w(fresh_port(), 2, false);
    MasterOptions opts;
    opts.broadcast = false;
    opts.direct_workers = {w.endpoint()};
    const auto r = run_master(f.parsed, f.examples, trains_search(), {.max_length = 7}, opts);
    EXPECT_EQ(r.search.status, SearchStatus::Solved);
    EXPECT_EQ(r.workers.size(), 1u);
}

TEST(Master, UnreachableDirectWorkerIsAClusterError) {
    const auto f = testutil::trains();
    std::uint16_t bound = 0;
    Endpoint dead;
    {
        auto s = tcp_listen(0, bound);
        dead = {"127.0.0.1", bound};
    }
    MasterOptions opts;
    opts.broadcast = false;
    opts.direct_workers = {dead};
    opts.io_timeout = Millis{1000};
    EXPECT_THROW(run_master(f.parsed, f.examples, trains_search(), {.max_length = 7}, opts), ClusterError);
}

TEST(Master, MatchesLocalSearchWithSameBeamWidth) {
    const auto f = testutil::trains();
    const auto port = fresh_port();
    RunningWorker a(port, 2), b(port, 2);
    const RefinementConfig rc{.max_length = 7};
    auto cfg = trains_search();
    cfg.limit = 3;
    const auto cluster = run_master(f.parsed, f.examples, cfg, rc, loopback_master(port, 2));

    auto local_cfg = cfg;
    local_cfg.beam_width = 4;
    const Refiner refiner(f.kb(), f.stats, f.mb, rc);
    SearchEngine engine(f.kb(), f.examples, local_cfg);
    LocalBackend backend(f.kb(), f.examples, refiner, engine.config());
    const auto local = engine.run(backend);

    ASSERT_FALSE(cluster.search.best.empty());
    EXPECT_EQ(cluster.search.status, local.status);
    EXPECT_EQ(cluster.search.best.front().expr, local.best.front().expr);
    EXPECT_EQ(cluster.search.best.front().score, local.best.front().score);
    EXPECT_EQ(cluster.closed, engine.closed_list().hashes());
    EXPECT_EQ(cluster.search.evaluated, local.evaluated);
    EXPECT_EQ(cluster.search.iterations.size(), local.iterations.size());

    std::unordered_set<CanonicalHash> seen;
    for (const auto& n : cluster.search.best) EXPECT_TRUE(seen.insert(n.hash).second);
}

TEST(Master, ExhaustiveRunMatchesLocal) {
    const auto f = testutil::trains();
    const auto port = fresh_port();
    RunningWorker a(port, 1), b(port, 2);
    const RefinementConfig rc{.max_length = 5};
    auto cfg = trains_search();
    cfg.max_length = 5;
    cfg.target_accuracy = 2.0;
    cfg.limit = 10;
    const auto cluster = run_master(f.parsed, f.examples, cfg, rc, loopback_master(port, 2));

    auto local_cfg = cfg;
    local_cfg.beam_width = 3;
    const Refiner refiner(f.kb(), f.stats, f.mb, rc);
    SearchEngine engine(f.kb(), f.examples, local_cfg);
    LocalBackend backend(f.kb(), f.examples, refiner, engine.config());
    const auto local = engine.run(backend);

    EXPECT_EQ(cluster.search.status, SearchStatus::Exhausted);
    EXPECT_EQ(cluster.closed, engine.closed_list().hashes());
    ASSERT_EQ(cluster.search.best.size(), local.best.size());
    for (std::size_t i = 0; i < local.best.size(); ++i) {
        EXPECT_EQ(cluster.search.best[i].expr, local.best[i].expr);
        EXPECT_EQ(cluster.search.best[i].score, local.best[i].score);
    }
}

TEST(Master, LostWorkerIsDroppedAndSearchContinues) {
    const auto f = testutil::trains();
    RunningWorker real(fresh_port(), 2, false);

    // Completes the handshake with a zero probe time, so it receives the
    // first block, then hangs up on its first task.
    std::uint16_t fake_port = 0;
    auto listener = tcp_listen(0, fake_port);
    std::jthread fake([&listener](std::stop_token) {
        auto conn = tcp_accept(listener, Millis{10000}, nullptr);
        if (!conn) return;
        try {
            while (true) {
                const auto m = recv_message(*conn, Millis{10000});
                if (m.type == MsgType::Hello) send_message(*conn, {MsgType::HelloAck, encode_hello_ack({1})});
                if (m.type == MsgType::KbTransfer) send_message(*conn, {MsgType::KbAck, {}});
                if (m.type == MsgType::Probe)
                    send_message(*conn, {MsgType::ProbeResult, encode_probe_result({1, 0, 1})});
                if (m.type == MsgType::ExpandTask) return;
            }
        } catch (const std::exception&) {
        }
    });

    MasterOptions opts;
    opts.broadcast = false;
    opts.direct_workers = {{"127.0.0.1", fake_port}, real.endpoint()};
    opts.io_timeout = Millis{10000};
    const auto r = run_master(f.parsed, f.examples, trains_search(), {.max_length = 7}, opts);
    ASSERT_EQ(r.workers.size(), 2u);
    EXPECT_FALSE(r.workers[0].alive);
    EXPECT_TRUE(r.workers[1].alive);
    EXPECT_EQ(r.terminates_sent, 1u);
    EXPECT_EQ(r.search.status, SearchStatus::Solved);
    ASSERT_FALSE(r.search.best.empty());
    EXPECT_DOUBLE_EQ(r.search.best.front().score.accuracy, 1.0);
}
