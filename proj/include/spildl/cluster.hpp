#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <thread>
#include <unordered_set>
#include <vector>

#include "spildl/net.hpp"
#include "spildl/search.hpp"
#include "spildl/wire.hpp"

namespace spildl {

inline constexpr std::uint16_t kDefaultBroadcastPort = 47901;
inline constexpr std::uint16_t kDefaultDataPort = 47902;

/// Discovery-level or whole-cluster failure (no workers, all workers lost).
class ClusterError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Phase : std::uint8_t { Discovery, Probing, Learning, Terminating, Done };

std::string_view to_string(Phase p);

/// Forward-only phase sequence. advance() throws std::logic_error on any
/// transition other than to the immediate successor.
class PhaseMachine {
public:
    Phase current() const noexcept { return history_.back(); }
    void advance(Phase next);
    const std::vector<Phase>& history() const noexcept { return history_; }

private:
    std::vector<Phase> history_{Phase::Discovery};
};

struct WorkerInfo {
    Endpoint address;
    std::uint32_t cores = 0;
    std::uint64_t probe_millis = 0;
    /// Assigned beam share.
    std::uint32_t wn = 0;
    std::uint32_t connection_id = 0;
    bool alive = true;
};

/// Discovery datagrams: "SPDL?" + u16 reply port, answered by "SPDL!" +
/// u16 TCP listen port.
Bytes encode_discovery_request(std::uint16_t reply_port);
std::optional<std::uint16_t> decode_discovery_request(std::span<const std::uint8_t> d);
Bytes encode_discovery_reply(std::uint16_t tcp_port);
std::optional<std::uint16_t> decode_discovery_reply(std::span<const std::uint8_t> d);

/// Fixed share per worker (wn = cores) and block assignment order
/// (fastest probe first, then connection id).
void assign_shares(std::vector<WorkerInfo>& workers);
std::vector<std::size_t> assignment_order(const std::vector<WorkerInfo>& workers);

/// Runs queued jobs on one dedicated thread, in submission order.
class HandlerThread {
public:
    HandlerThread();
    ~HandlerThread();
    HandlerThread(const HandlerThread&) = delete;
    HandlerThread& operator=(const HandlerThread&) = delete;

    std::future<void> submit(std::function<void()> job);

private:
    void loop(std::stop_token st);

    std::mutex mutex_;
    std::condition_variable_any cv_;
    std::deque<std::packaged_task<void()>> queue_;
    std::jthread thread_;
};

/// Worker-side learning state built from a KB_TRANSFER.
struct WorkerContext {
    ParsedKb parsed;
    ExampleSet examples;
    KbStatistics stats;
    MBSet mb;
    SessionConfig config;
    std::unique_ptr<Refiner> refiner;
};

std::unique_ptr<WorkerContext> make_worker_context(const KbTransfer& transfer);

/// One EXPAND_TASK: expands every node, reduces duplicates across nodes
/// (lowest node index survives), evaluates and drops weak refinements.
ExpandResult process_expand_task(std::span<const BlockNode> block, const WorkerContext& ctx, std::size_t threads);

/// The PROBE workload: refinements of Thing up to length 5, evaluated.
ProbeResult run_probe(const WorkerContext& ctx, std::size_t threads);

struct WorkerOptions {
    std::uint16_t broadcast_port = kDefaultBroadcastPort;
    /// TCP listen port; 0 picks a free one.
    std::uint16_t port = kDefaultDataPort;
    /// Reported cores and local pool size; 0 means hardware concurrency.
    std::uint32_t cores = 0;
    /// Answer UDP discovery requests.
    bool discovery = true;
    /// Return after the first master session ends.
    bool single_session = false;
    Millis io_timeout{120000};
    std::ostream* log = nullptr;
};

class Worker {
public:
    /// Binds the TCP (and UDP, if discovery is enabled) sockets.
    explicit Worker(WorkerOptions opts);

    std::uint16_t tcp_port() const noexcept { return tcp_port_; }
    std::uint32_t cores() const noexcept { return cores_; }

    /// Serves master sessions one at a time until the stop token fires
    /// (or after one session with single_session).
    void serve(std::stop_token st);

    std::size_t sessions_served() const noexcept { return sessions_; }

private:
    void session(Socket conn, std::stop_token st);
    void log(const std::string& line) const;

    WorkerOptions opts_;
    std::uint32_t cores_;
    Socket tcp_;
    Socket udp_;
    std::uint16_t tcp_port_ = 0;
    std::atomic<std::size_t> sessions_{0};
};

struct MasterOptions {
    std::uint16_t broadcast_port = kDefaultBroadcastPort;
    std::string broadcast_address = "255.255.255.255";
    /// Skip UDP discovery entirely and use only direct_workers.
    bool broadcast = true;
    Millis discovery_timeout{2000};
    /// Stop discovery early once this many workers are known; with a
    /// non-zero value fewer workers is a ClusterError.
    std::size_t expect_workers = 0;
    /// Workers contacted directly, in addition to discovered ones.
    std::vector<Endpoint> direct_workers;
    Millis io_timeout{120000};
    Millis probe_timeout{60000};
    std::ostream* log = nullptr;
};

/// UDP discovery: broadcasts until the timeout (or until `expect` replies)
/// and returns the distinct worker endpoints, sorted.
std::vector<Endpoint> discover_workers(const MasterOptions& opts);

struct ClusterResult {
    SearchResult search;
    std::vector<WorkerInfo> workers;
    std::vector<Phase> phases;
    std::unordered_set<CanonicalHash> closed;
    /// TERMINATE frames sent, one per live worker.
    std::size_t terminates_sent = 0;
};

/// Full master run: discovery, KB transfer and probing, learning with the
/// beam width set to the sum of worker shares, termination.
/// cfg.beam_width is ignored; cfg.threads sizes master-side reduction.
ClusterResult run_master(const ParsedKb& parsed, const ExampleSet& examples, const SearchConfig& cfg,
                         const RefinementConfig& refinement, const MasterOptions& opts,
                         SearchObserver observer = {});

}  // namespace spildl
