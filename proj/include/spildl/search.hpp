#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "spildl/concept.hpp"
#include "spildl/eval.hpp"
#include "spildl/kb.hpp"
#include "spildl/refine.hpp"

namespace spildl {

struct SearchNode {
    Concept expr = Concept::top();
    CanonicalHash hash = 0;
    /// Horizontal expansion: the length bound of the node's last expansion,
    /// or its own length before the first one.
    std::uint32_t he = 1;
    CoverageResult coverage;
    Score score;
    std::optional<CanonicalHash> parent;
    std::optional<double> parent_accuracy;
    bool expandable = true;
};

/// Open-list order: score value descending, ties by canonical order.
bool node_before(const SearchNode& a, const SearchNode& b);

/// Final-answer order: accuracy descending, then node_before.
bool hypothesis_before(const SearchNode& a, const SearchNode& b);

void sort_open_list(std::vector<SearchNode>& st, std::size_t threads);

/// Indices of the k best expandable nodes of a sorted open list. Nodes
/// are not removed.
std::vector<std::size_t> extract_best_nodes(std::span<const SearchNode> st, std::size_t k);

/// Redundancy hash table: hashes of every concept generated so far.
class ClosedList {
public:
    /// False if the hash was already present.
    bool insert(CanonicalHash h) { return hashes_.insert(h).second; }
    bool contains(CanonicalHash h) const { return hashes_.contains(h); }
    std::size_t size() const noexcept { return hashes_.size(); }
    const std::unordered_set<CanonicalHash>& hashes() const noexcept { return hashes_; }

private:
    std::unordered_set<CanonicalHash> hashes_;
};

struct Expansion {
    std::vector<Concept> refinements;
    std::vector<CanonicalHash> hashes;
    std::unordered_set<CanonicalHash> local_closed;
};

/// Applies one expansion step's bookkeeping: he grows by one (bounded by
/// max_length) and the node becomes non-expandable at max_length.
void advance_expansion(SearchNode& node, std::uint32_t max_length);

/// Refines node.expr up to length he + 1, keeping only refinements not
/// emitted by the node's earlier expansions, then advances the node.
Expansion expand_single_node(SearchNode& node, const Refiner& refiner, std::uint32_t max_length);

struct Refinement {
    Concept expr;
    CanonicalHash hash = 0;
    /// Index of the expansion unit (thread / beam slot) that produced it.
    std::size_t source = 0;
};

class HashCollisionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Multi-stage pairwise reduction of per-unit refinement lists. Drops
/// hashes already in `rht` and cross-unit duplicates (the lowest unit index
/// keeps its copy). Output is ordered by unit, then by each unit's order.
/// With `verify`, equal hashes on structurally different concepts raise
/// HashCollisionError.
std::vector<Refinement> reduce_redundant(std::span<const Expansion> units, const ClosedList& rht,
                                         std::size_t threads, bool verify = false);

struct SearchConfig {
    std::size_t beam_width = 1;
    std::size_t limit = 1;
    double noise = 0.0;
    std::optional<std::int64_t> max_execution_millis;
    std::uint32_t max_length = 10;
    double target_accuracy = 1.0;
    std::size_t threads = 1;
    ScoreConfig scoring;
    bool verify_hashes = false;
};

enum class SearchStatus { Solved, Budget, Exhausted };

std::string_view to_string(SearchStatus s);

struct IterationStats {
    std::size_t expanded = 0;
    std::size_t generated = 0;
    std::size_t redundant_dropped = 0;
    std::size_t weak_dropped = 0;
    std::size_t open_list_size = 0;
    std::int64_t elapsed_millis = 0;
};

struct SearchResult {
    std::vector<SearchNode> best;
    SearchStatus status = SearchStatus::Exhausted;
    std::vector<IterationStats> iterations;
    std::size_t evaluated = 0;
};

/// Test and reporting hooks.
struct SearchObserver {
    std::function<void(std::span<const Concept>)> on_evaluate;
    std::function<void(const SearchNode&)> on_insert;
    std::function<void(const IterationStats&)> on_iteration;
};

struct EvaluatedRefinement {
    Concept expr;
    CanonicalHash hash = 0;
    CoverageResult coverage;
    /// Index into the beam passed to the backend.
    std::size_t parent = 0;
};

struct BackendOutput {
    /// Non-weak, non-redundant refinements in unit order.
    std::vector<EvaluatedRefinement> good;
    /// Every newly generated hash to add to the closed list (good and weak).
    std::vector<CanonicalHash> closed;
    /// Per beam slot: whether the node was actually expanded.
    std::vector<bool> expanded;
    std::size_t generated = 0;
    std::size_t redundant = 0;
    std::size_t weak = 0;
    std::size_t evaluated = 0;
    /// Set when no further progress is possible (e.g. no workers left).
    bool abort = false;
};

/// Expands and evaluates one beam. The shared-memory implementation is
/// LocalBackend; the cluster master provides a distributed one.
class ExpansionBackend {
public:
    virtual ~ExpansionBackend() = default;
    virtual BackendOutput process(std::span<const SearchNode> beam, const ClosedList& rht) = 0;
};

class LocalBackend final : public ExpansionBackend {
public:
    LocalBackend(const KnowledgeBase& kb, const ExampleSet& examples, const Refiner& refiner, const SearchConfig& cfg,
                 const SearchObserver* observer = nullptr);
    BackendOutput process(std::span<const SearchNode> beam, const ClosedList& rht) override;

private:
    const KnowledgeBase& kb_;
    const ExampleSet& examples_;
    const Refiner& refiner_;
    const SearchConfig& cfg_;
    const SearchObserver* observer_;
    std::size_t num_pos_;
};

/// Owns the open list (ST) and closed list (RHT) and runs the
/// extract / expand / reduce / evaluate / insert / sort iteration.
class SearchEngine {
public:
    SearchEngine(const KnowledgeBase& kb, const ExampleSet& examples, SearchConfig cfg, SearchObserver observer = {});

    /// Runs to termination with the given backend.
    SearchResult run(ExpansionBackend& backend);

    const std::vector<SearchNode>& open_list() const noexcept { return st_; }
    const ClosedList& closed_list() const noexcept { return rht_; }
    const SearchConfig& config() const noexcept { return cfg_; }
    const SearchObserver& observer() const noexcept { return observer_; }

    /// Best `limit` nodes by hypothesis_before.
    std::vector<SearchNode> best_hypotheses(std::size_t limit) const;

    SearchNode make_node(Concept expr, CanonicalHash hash, CoverageResult coverage,
                         std::optional<CanonicalHash> parent, std::optional<double> parent_accuracy) const;

private:
    const KnowledgeBase& kb_;
    const ExampleSet& examples_;
    SearchConfig cfg_;
    SearchObserver observer_;
    std::size_t num_pos_;
    std::size_t num_neg_;
    std::vector<SearchNode> st_;
    ClosedList rht_;
};

/// Shared-memory learning entry point.
SearchResult run_search(const KnowledgeBase& kb, const ExampleSet& examples, const Refiner& refiner,
                        const SearchConfig& cfg, SearchObserver observer = {});

}  // namespace spildl
