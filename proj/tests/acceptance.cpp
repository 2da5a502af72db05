// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any hard criterion fails. The scaling check only warns.

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_set>

#include <unistd.h>

#include "oracle/oracle.hpp"
#include "spildl/cluster.hpp"
#include "spildl/search.hpp"
#include "spildl/wire.hpp"
#include "test_util.hpp"

using namespace spildl;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
    bool warn_only = false;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Instance {
    ParsedKb parsed;
    ExampleSet examples;
};

Instance random_instance(std::mt19937_64& rng, const oracle::KbShape& shape = {}) {
    Instance r;
    do r.parsed = parse_kb(oracle::random_kb_text(rng, shape));
    while (r.parsed.kb.num_individuals < 2);
    r.parsed.kb = materialize(std::move(r.parsed.kb));
    r.examples = parse_examples(oracle::random_examples_text(rng, r.parsed.kb.num_individuals), r.parsed.symbols,
                                r.parsed.kb.num_individuals);
    return r;
}

std::vector<bool> to_bools(const Bitset& b) {
    std::vector<bool> out(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) out[i] = b.test(i);
    return out;
}

std::vector<IndividualId> ids(const Bitset& b) {
    std::vector<IndividualId> out;
    b.for_each_set([&](std::size_t i) { out.push_back(static_cast<IndividualId>(i)); });
    return out;
}

Outcome oracle_equivalence() {
    std::mt19937_64 rng(1001);
    const oracle::KbShape shape{30, 6, 4, 3, true};
    std::size_t kbs = 0, concepts = 0, mismatches = 0;
    for (; kbs < 1000; ++kbs) {
        const auto inst = random_instance(rng, shape);
        for (int j = 0; j < 20; ++j) {
            const auto c = canonicalize(oracle::random_concept(rng, inst.parsed.symbols, 4));
            ++concepts;
            const auto cov = evaluate(c, inst.parsed.kb, inst.examples, true);
            const auto [p, n] = oracle::coverage(c, inst.parsed.kb, ids(inst.examples.positives),
                                                 ids(inst.examples.negatives));
            if (to_bools(*cov.covered) != oracle::extension(c, inst.parsed.kb) || cov.pos_covered != p ||
                cov.neg_covered != n)
                ++mismatches;
        }
    }
    std::ostringstream d;
    d << kbs << " KBs, " << concepts << " concepts, " << mismatches << " mismatches";
    return {mismatches == 0, d.str()};
}

Outcome weak_equality() {
    std::mt19937_64 rng(1002);
    std::size_t concepts = 0, variants = 0, failures = 0;
    auto inst = random_instance(rng);
    for (; concepts < 10000; ++concepts) {
        if (concepts % 100 == 0) inst = random_instance(rng);
        const auto c = oracle::random_concept(rng, inst.parsed.symbols, 4);
        const auto canon = canonicalize(c);
        const auto h = hash_concept(canon);
        for (const auto& v : oracle::operand_permutations(c)) {
            ++variants;
            const auto cv = canonicalize(v);
            if (!(cv == canon) || hash_concept(cv) != h || encode(cv) != encode(canon)) ++failures;
        }
    }
    std::ostringstream d;
    d << concepts << " concepts, " << variants << " operand permutations, " << failures << " differences";
    return {failures == 0, d.str()};
}

Outcome thread_invariance() {
    std::mt19937_64 rng(1003);
    std::size_t batches = 0, failures = 0;
    for (; batches < 20; ++batches) {
        const auto inst = random_instance(rng);
        std::vector<Concept> batch;
        for (int i = 0; i < 500; ++i) batch.push_back(canonicalize(oracle::random_concept(rng, inst.parsed.symbols, 4)));
        const auto base = evaluate_batch(batch, inst.parsed.kb, inst.examples, 1, true);
        for (std::size_t i = 0; i < batch.size(); ++i)
            if (!(base[i] == evaluate(batch[i], inst.parsed.kb, inst.examples, true))) ++failures;

        // Eight units drawing overlapping subsets of the batch.
        std::vector<Expansion> units(8);
        for (auto& u : units)
            for (const auto& c : batch) {
                if (rng() % 4 != 0) continue;
                const auto h = hash_concept(c);
                if (!u.local_closed.insert(h).second) continue;
                u.hashes.push_back(h);
                u.refinements.push_back(c);
            }
        ClosedList rht;
        for (std::size_t i = 0; i < batch.size(); i += 9) rht.insert(hash_concept(batch[i]));
        std::vector<std::pair<CanonicalHash, std::size_t>> expected;
        std::unordered_set<CanonicalHash> seen(rht.hashes().begin(), rht.hashes().end());
        for (std::size_t u = 0; u < units.size(); ++u)
            for (auto h : units[u].hashes)
                if (seen.insert(h).second) expected.push_back({h, u});
        const auto reduced_base = reduce_redundant(units, rht, 1, true);

        for (std::size_t t : {1u, 2u, 4u, 8u}) {
            if (evaluate_batch(batch, inst.parsed.kb, inst.examples, t, true) != base) ++failures;
            const auto reduced = reduce_redundant(units, rht, t, true);
            if (reduced.size() != expected.size()) {
                ++failures;
                continue;
            }
            for (std::size_t i = 0; i < reduced.size(); ++i)
                if (reduced[i].hash != expected[i].first || reduced[i].source != expected[i].second ||
                    !(reduced[i].expr == reduced_base[i].expr))
                    ++failures;
        }
    }
    std::ostringstream d;
    d << batches << " batches of 500 x threads {1,2,4,8}, " << failures << " differences";
    return {failures == 0, d.str()};
}

struct TrainsRun {
    SearchResult result;
    std::map<CanonicalHash, double> inserted;
    std::vector<CanonicalHash> evaluated;
    std::unordered_set<CanonicalHash> rht;
};

TrainsRun trains_run(const testutil::Fixture& f, SearchConfig cfg) {
    TrainsRun run;
    const Refiner refiner(f.kb(), f.stats, f.mb, {.max_length = cfg.max_length});
    SearchObserver obs;
    obs.on_insert = [&](const SearchNode& n) { run.inserted.emplace(n.hash, n.score.value); };
    obs.on_evaluate = [&](std::span<const Concept> cs) {
        for (const auto& c : cs) run.evaluated.push_back(hash_concept(c));
    };
    SearchEngine engine(f.kb(), f.examples, cfg, obs);
    LocalBackend backend(f.kb(), f.examples, refiner, engine.config(), &engine.observer());
    run.result = engine.run(backend);
    run.rht = engine.closed_list().hashes();
    return run;
}

SearchConfig trains_config(std::size_t threads) {
    SearchConfig cfg;
    cfg.beam_width = 4;
    cfg.max_length = 7;
    cfg.threads = threads;
    return cfg;
}

Outcome search_equivalence() {
    const auto f = testutil::trains();
    const auto one = trains_run(f, trains_config(1));
    const auto four = trains_run(f, trains_config(4));
    if (one.result.best.empty() || four.result.best.empty()) return {false, "no hypothesis returned"};
    const auto& best = one.result.best.front();
    const auto [p, n] = oracle::coverage(best.expr, f.kb(), ids(f.examples.positives), ids(f.examples.negatives));
    const bool same_sets = one.inserted == four.inserted;
    const bool same_best = best.score == four.result.best.front().score;
    const bool exact = best.score.accuracy == 1.0 && p == 5 && n == 0;
    std::ostringstream d;
    d << one.inserted.size() << " inserted nodes, sets " << (same_sets ? "equal" : "differ") << ", best score "
      << (same_best ? "equal" : "differs") << ", best " << render(best.expr, f.symbols()) << " covers " << p << "+/"
      << n << "-";
    return {same_sets && same_best && exact, d.str()};
}

Outcome redundancy_soundness() {
    const auto f = testutil::trains();
    std::size_t runs = 0, evaluated = 0, duplicates = 0;
    auto count = [&](SearchConfig cfg) {
        cfg.verify_hashes = true;
        const auto run = trains_run(f, cfg);
        std::unordered_set<CanonicalHash> seen;
        for (auto h : run.evaluated)
            if (!seen.insert(h).second) ++duplicates;
        evaluated += run.evaluated.size();
        ++runs;
    };
    count(trains_config(4));
    // Full exploration up to length 5.
    auto full = trains_config(4);
    full.max_length = 5;
    full.target_accuracy = 2.0;
    count(full);
    std::ostringstream d;
    d << runs << " runs, " << evaluated << " evaluations, " << duplicates << " repeated hashes";
    return {duplicates == 0, d.str()};
}

Outcome codec_fidelity() {
    std::mt19937_64 rng(1006);
    std::size_t concepts = 0, kbs = 0, frames = 0, flips = 0, failures = 0, accepted_flips = 0;
    auto inst = random_instance(rng);
    for (int i = 0; i < 10000; ++i) {
        if (i % 50 == 0) inst = random_instance(rng);
        const auto c = canonicalize(oracle::random_concept(rng, inst.parsed.symbols, 4));
        const auto bytes = encode(c);
        if (!(decode(bytes) == c) || encode(decode(bytes)) != bytes) ++failures;
        ++concepts;
    }
    for (int i = 0; i < 10000; ++i) {
        auto p = parse_kb(oracle::random_kb_text(rng));
        if (rng() % 2) p.kb = materialize(std::move(p.kb));
        const auto bytes = serialize_kb(p.kb, p.symbols);
        const auto back = deserialize_kb(bytes);
        if (!(back.kb == p.kb) || !(back.symbols == p.symbols) || serialize_kb(back.kb, back.symbols) != bytes)
            ++failures;
        ++kbs;
        auto flipped = bytes;
        flipped[rng() % flipped.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
        ++flips;
        try {
            deserialize_kb(flipped);
            ++accepted_flips;
        } catch (const DecodeError&) {
        }
    }
    for (int i = 0; i < 10000; ++i) {
        if (i % 50 == 0) inst = random_instance(rng);
        WireMessage m;
        switch (rng() % 6) {
            case 0: m = {MsgType::HelloAck, encode_hello_ack({static_cast<std::uint32_t>(rng())})}; break;
            case 1: {
                KbTransfer t;
                t.kb = serialize_kb(inst.parsed.kb, inst.parsed.symbols);
                t.positives = ids(inst.examples.positives);
                t.negatives = ids(inst.examples.negatives);
                t.config.noise = (rng() % 100) / 100.0;
                t.config.max_length = 1 + rng() % 12;
                m = {MsgType::KbTransfer, encode_kb_transfer(t)};
                if (!(decode_kb_transfer(m.payload) == t)) ++failures;
                break;
            }
            case 2:
                m = {MsgType::ProbeResult,
                     encode_probe_result({static_cast<std::uint32_t>(rng()), rng(), static_cast<std::uint32_t>(rng())})};
                break;
            case 3:
            case 4: {
                std::vector<BlockNode> nodes;
                for (std::size_t k = rng() % 6; k > 0; --k) {
                    BlockNode b;
                    b.expr = canonicalize(oracle::random_concept(rng, inst.parsed.symbols, 4));
                    b.he = static_cast<std::uint16_t>(rng());
                    b.pos_covered = static_cast<std::uint32_t>(rng());
                    b.neg_covered = static_cast<std::uint32_t>(rng());
                    b.score = std::uniform_real_distribution<double>(-1, 2)(rng);
                    nodes.push_back(b);
                }
                if (rng() % 2) {
                    m = {MsgType::ExpandTask, serialize_block(nodes, 1 + rng() % 4)};
                    if (deserialize_block(m.payload) != nodes) ++failures;
                } else {
                    ExpandResult er;
                    er.good = nodes;
                    for (std::size_t k = 0; k < nodes.size(); ++k) er.parents.push_back(rng() % 8);
                    for (std::size_t k = rng() % 4; k > 0; --k) er.weak.push_back(rng());
                    er.generated = rng();
                    er.redundant = rng();
                    m = {MsgType::ExpandResult, encode_expand_result(er, 1 + rng() % 4)};
                    if (!(decode_expand_result(m.payload) == er)) ++failures;
                }
                break;
            }
            default: m = {MsgType::Error, encode_error("error " + std::to_string(rng()))}; break;
        }
        const auto frame = encode_frame(m);
        if (!(decode_frame(frame) == m) || encode_frame(decode_frame(frame)) != frame) ++failures;
        ++frames;
        auto flipped = frame;
        flipped[rng() % flipped.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
        ++flips;
        try {
            decode_frame(flipped);
            ++accepted_flips;
        } catch (const ProtocolError&) {
        }
    }
    std::ostringstream d;
    d << concepts << " concepts, " << kbs << " KBs, " << frames << " frames round-tripped with " << failures
      << " failures; " << accepted_flips << " of " << flips << " bit flips accepted";
    return {failures == 0 && accepted_flips == 0, d.str()};
}

Outcome cluster_equals_local() {
    const auto f = testutil::trains();
    const std::uint16_t port = static_cast<std::uint16_t>(44000 + ::getpid() % 1000);
    std::vector<std::unique_ptr<Worker>> workers;
    std::vector<std::jthread> threads;
    for (int i = 0; i < 2; ++i) {
        WorkerOptions o;
        o.broadcast_port = port;
        o.port = 0;
        o.cores = 2;
        o.io_timeout = Millis{30000};
        workers.push_back(std::make_unique<Worker>(o));
        threads.emplace_back([w = workers.back().get()](std::stop_token st) { w->serve(st); });
    }
    MasterOptions mo;
    mo.broadcast_port = port;
    mo.broadcast_address = "127.255.255.255";
    mo.expect_workers = 2;
    mo.discovery_timeout = Millis{5000};
    mo.io_timeout = Millis{30000};

    SearchConfig cfg;
    cfg.max_length = 7;
    cfg.threads = 2;
    const RefinementConfig rc{.max_length = 7};
    ClusterResult cluster;
    try {
        cluster = run_master(f.parsed, f.examples, cfg, rc, mo);
    } catch (const std::exception& e) {
        return {false, std::string("cluster run failed: ") + e.what()};
    }
    for (auto& t : threads) t.request_stop();

    std::uint32_t beam = 0;
    for (const auto& w : cluster.workers) beam += w.wn;
    auto local_cfg = cfg;
    local_cfg.beam_width = beam;
    const Refiner refiner(f.kb(), f.stats, f.mb, rc);
    SearchEngine engine(f.kb(), f.examples, local_cfg);
    LocalBackend backend(f.kb(), f.examples, refiner, engine.config());
    const auto local = engine.run(backend);

    if (cluster.search.best.empty() || local.best.empty()) return {false, "no hypothesis returned"};
    const auto& cb = cluster.search.best.front();
    const auto& lb = local.best.front();
    const bool same_best = cb.score == lb.score && cb.expr == lb.expr;
    const bool same_rht = cluster.closed == engine.closed_list().hashes();
    std::ostringstream d;
    d << cluster.workers.size() << " workers, beam " << beam << ", best " << render(cb.expr, f.symbols())
      << (same_best ? " equal" : " differs") << ", RHT " << cluster.closed.size() << " vs "
      << engine.closed_list().size() << (same_rht ? " equal" : " differ");
    return {same_best && same_rht && beam == 4, d.str()};
}

ParsedKb synthetic_kb(std::size_t individuals, std::mt19937_64& rng) {
    std::ostringstream s;
    for (int c = 0; c < 8; ++c) s << "class C" << c << '\n';
    for (int r = 0; r < 3; ++r) s << "role r" << r << '\n';
    s << "numrole d0\n";
    for (std::size_t i = 0; i < individuals; ++i) s << "individual i" << i << '\n';
    for (std::size_t i = 0; i < individuals; ++i) {
        for (int c = 0; c < 8; ++c)
            if (rng() % 4 == 0) s << "instance C" << c << " i" << i << '\n';
        for (int r = 0; r < 3; ++r)
            for (int k = rng() % 3; k > 0; --k) s << "fact r" << r << " i" << i << " i" << rng() % individuals << '\n';
        s << "numfact d0 i" << i << ' ' << rng() % 100 << '\n';
    }
    auto p = parse_kb(s.str());
    p.kb = materialize(std::move(p.kb));
    return p;
}

Outcome scaling_smoke() {
    std::mt19937_64 rng(1008);
    const std::size_t n = 100000;
    const auto p = synthetic_kb(n, rng);
    ExampleSet ex{Bitset(n), Bitset(n)};
    for (std::size_t i = 0; i < n; ++i) (i % 2 ? ex.positives : ex.negatives).set(i);
    std::vector<Concept> batch;
    for (int i = 0; i < 64; ++i) batch.push_back(canonicalize(oracle::random_concept(rng, p.symbols, 3)));
    auto time_batch = [&](std::size_t threads) {
        double best = 1e9;
        for (int rep = 0; rep < 3; ++rep) {
            const auto t0 = Clock::now();
            evaluate_batch(batch, p.kb, ex, threads);
            best = std::min(best, seconds_since(t0));
        }
        return best;
    };
    const double t1 = time_batch(1);
    const double t8 = time_batch(8);
    const double speedup = t1 / t8;
    std::ostringstream d;
    d.precision(3);
    d << n << " individuals, 64 hypotheses: 1 thread " << t1 << " s, 8 threads " << t8 << " s, speedup " << speedup
      << "x on " << std::thread::hardware_concurrency() << " hardware threads";
    return {speedup >= 2.0, d.str(), true};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
        {"oracle equivalence", oracle_equivalence},
        {"weak-equality elimination", weak_equality},
        {"thread invariance", thread_invariance},
        {"search equivalence", search_equivalence},
        {"redundancy soundness", redundancy_soundness},
        {"codec fidelity", codec_fidelity},
        {"cluster equals local", cluster_equals_local},
        {"scaling smoke", scaling_smoke},
    };
    int hard_failures = 0;
    for (const auto& [name, check] : checks) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const char* verdict = o.pass ? "PASS" : (o.warn_only ? "WARN" : "FAIL");
        if (!o.pass && !o.warn_only) ++hard_failures;
        std::printf("%s %s: %s (%.1f s)\n", verdict, name.c_str(), o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    return hard_failures == 0 ? 0 : 1;
}
