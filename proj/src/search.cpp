#include "spildl/search.hpp"

#include <algorithm>
#include <unordered_map>

#include "spildl/parallel.hpp"

namespace spildl {

bool node_before(const SearchNode& a, const SearchNode& b) {
    if (a.score.value != b.score.value) return a.score.value > b.score.value;
    return compare_canonical(a.expr, b.expr) < 0;
}

bool hypothesis_before(const SearchNode& a, const SearchNode& b) {
    if (a.score.accuracy != b.score.accuracy) return a.score.accuracy > b.score.accuracy;
    return node_before(a, b);
}

void sort_open_list(std::vector<SearchNode>& st, std::size_t threads) {
    parallel_sort(st.begin(), st.end(), threads, node_before);
}

std::vector<std::size_t> extract_best_nodes(std::span<const SearchNode> st, std::size_t k) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < st.size() && out.size() < k; ++i)
        if (st[i].expandable) out.push_back(i);
    return out;
}

std::string_view to_string(SearchStatus s) {
    switch (s) {
        case SearchStatus::Solved: return "solved";
        case SearchStatus::Budget: return "budget";
        case SearchStatus::Exhausted: return "exhausted";
    }
    return "?";
}

void advance_expansion(SearchNode& node, std::uint32_t max_length) {
    if (node.he < max_length) ++node.he;
    node.expandable = node.he < max_length;
}

Expansion expand_single_node(SearchNode& node, const Refiner& refiner, std::uint32_t max_length) {
    Expansion out;
    if (node.he >= max_length) {
        node.expandable = false;
        return out;
    }
    // A node whose he exceeds its length was already expanded up to he.
    const auto already = node.he > concept_length(node.expr) ? node.he : 0;
    for (auto& r : refiner.refine(node.expr, node.he + 1)) {
        if (concept_length(r) <= already) continue;
        const auto h = hash_concept(r);
        if (!out.local_closed.insert(h).second) continue;
        out.hashes.push_back(h);
        out.refinements.push_back(std::move(r));
    }
    advance_expansion(node, max_length);
    return out;
}

namespace {

struct ReductionGroup {
    std::vector<Refinement> items;
    std::unordered_map<CanonicalHash, std::size_t> index;
};

void absorb(ReductionGroup& left, ReductionGroup& right, bool verify) {
    for (auto& item : right.items) {
        if (auto it = left.index.find(item.hash); it != left.index.end()) {
            if (verify && !(left.items[it->second].expr == item.expr))
                throw HashCollisionError("hash collision between distinct refinements (units " +
                                         std::to_string(left.items[it->second].source) + " and " +
                                         std::to_string(item.source) + ")");
            continue;
        }
        left.index.emplace(item.hash, left.items.size());
        left.items.push_back(std::move(item));
    }
    right = {};
}

}  // namespace

std::vector<Refinement> reduce_redundant(std::span<const Expansion> units, const ClosedList& rht,
                                         std::size_t threads, bool verify) {
    const auto n = units.size();
    if (n == 0) return {};
    std::vector<ReductionGroup> groups(n);
    parallel_for(n, threads, [&](std::size_t u) {
        const auto& ex = units[u];
        auto& g = groups[u];
        for (std::size_t i = 0; i < ex.refinements.size(); ++i) {
            const auto h = ex.hashes[i];
            if (rht.contains(h)) continue;
            if (auto it = g.index.find(h); it != g.index.end()) {
                if (verify && !(g.items[it->second].expr == ex.refinements[i]))
                    throw HashCollisionError("hash collision inside unit " + std::to_string(u));
                continue;
            }
            g.index.emplace(h, g.items.size());
            g.items.push_back({ex.refinements[i], h, u});
        }
    });
    // Stage s merges group i + 2^s into group i for every i divisible by 2^(s+1).
    for (std::size_t width = 1; width < n; width *= 2) {
        std::vector<std::size_t> lefts;
        for (std::size_t i = 0; i + width < n; i += 2 * width) lefts.push_back(i);
        parallel_for(lefts.size(), threads,
                     [&](std::size_t k) { absorb(groups[lefts[k]], groups[lefts[k] + width], verify); });
    }
    return std::move(groups[0].items);
}

LocalBackend::LocalBackend(const KnowledgeBase& kb, const ExampleSet& examples, const Refiner& refiner,
                           const SearchConfig& cfg, const SearchObserver* observer)
    : kb_(kb),
      examples_(examples),
      refiner_(refiner),
      cfg_(cfg),
      observer_(observer),
      num_pos_(examples.num_positive()) {}

BackendOutput LocalBackend::process(std::span<const SearchNode> beam, const ClosedList& rht) {
    BackendOutput out;
    std::vector<Expansion> expansions(beam.size());
    parallel_for(beam.size(), cfg_.threads, [&](std::size_t i) {
        SearchNode node = beam[i];
        expansions[i] = expand_single_node(node, refiner_, cfg_.max_length);
    });
    out.expanded.assign(beam.size(), true);
    for (const auto& e : expansions) out.generated += e.refinements.size();

    auto survivors = reduce_redundant(expansions, rht, cfg_.threads, cfg_.verify_hashes);
    out.redundant = out.generated - survivors.size();

    std::vector<Concept> concepts;
    concepts.reserve(survivors.size());
    for (const auto& s : survivors) concepts.push_back(s.expr);
    if (observer_ && observer_->on_evaluate) observer_->on_evaluate(concepts);
    auto coverage = evaluate_batch(concepts, kb_, examples_, cfg_.threads);
    out.evaluated = concepts.size();

    for (std::size_t i = 0; i < survivors.size(); ++i) {
        out.closed.push_back(survivors[i].hash);
        if (is_weak(coverage[i], num_pos_, cfg_.noise)) {
            ++out.weak;
            continue;
        }
        out.good.push_back({std::move(survivors[i].expr), survivors[i].hash, std::move(coverage[i]),
                            survivors[i].source});
    }
    return out;
}

SearchEngine::SearchEngine(const KnowledgeBase& kb, const ExampleSet& examples, SearchConfig cfg,
                           SearchObserver observer)
    : kb_(kb),
      examples_(examples),
      cfg_(std::move(cfg)),
      observer_(std::move(observer)),
      num_pos_(examples.num_positive()),
      num_neg_(examples.num_negative()) {
    if (cfg_.beam_width == 0) throw std::invalid_argument("beam width must be at least 1");
    if (cfg_.limit == 0) throw std::invalid_argument("limit must be at least 1");
    if (cfg_.threads == 0) throw std::invalid_argument("thread count must be at least 1");
    if (cfg_.max_length == 0) throw std::invalid_argument("max length must be at least 1");
    if (!(cfg_.noise >= 0.0 && cfg_.noise < 1.0)) throw std::invalid_argument("noise must be in [0, 1)");
}

SearchNode SearchEngine::make_node(Concept expr, CanonicalHash hash, CoverageResult coverage,
                                   std::optional<CanonicalHash> parent, std::optional<double> parent_accuracy) const {
    SearchNode n;
    n.he = concept_length(expr);
    n.expr = std::move(expr);
    n.hash = hash;
    n.coverage = std::move(coverage);
    n.parent = parent;
    n.parent_accuracy = parent_accuracy;
    n.score = score(n.coverage, num_pos_, num_neg_, parent_accuracy, n.he, cfg_.scoring);
    n.expandable = n.he < cfg_.max_length;
    return n;
}

std::vector<SearchNode> SearchEngine::best_hypotheses(std::size_t limit) const {
    std::vector<SearchNode> all = st_;
    const auto k = std::min(limit, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), hypothesis_before);
    all.resize(k);
    return all;
}

SearchResult SearchEngine::run(ExpansionBackend& backend) {
    using Clock = std::chrono::steady_clock;
    const auto start = Clock::now();
    auto elapsed = [&] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
    };

    SearchResult result;
    double best_accuracy = 0.0;

    if (st_.empty()) {
        auto root = Concept::top();
        const auto h = hash_concept(root);
        if (observer_.on_evaluate) observer_.on_evaluate(std::span(&root, 1));
        auto cov = evaluate(root, kb_, examples_);
        ++result.evaluated;
        rht_.insert(h);
        st_.push_back(make_node(std::move(root), h, std::move(cov), std::nullopt, std::nullopt));
        if (observer_.on_insert) observer_.on_insert(st_.back());
    }
    for (const auto& n : st_) best_accuracy = std::max(best_accuracy, n.score.accuracy);

    result.status = SearchStatus::Exhausted;
    while (true) {
        if (best_accuracy >= cfg_.target_accuracy) {
            result.status = SearchStatus::Solved;
            break;
        }
        if (cfg_.max_execution_millis && elapsed() >= *cfg_.max_execution_millis) {
            result.status = SearchStatus::Budget;
            break;
        }
        const auto picked = extract_best_nodes(st_, cfg_.beam_width);
        if (picked.empty()) break;

        std::vector<SearchNode> beam;
        beam.reserve(picked.size());
        for (auto i : picked) beam.push_back(st_[i]);

        auto out = backend.process(beam, rht_);
        result.evaluated += out.evaluated;

        IterationStats stats;
        for (std::size_t b = 0; b < picked.size(); ++b) {
            if (b >= out.expanded.size() || !out.expanded[b]) continue;
            auto& node = st_[picked[b]];
            advance_expansion(node, cfg_.max_length);
            node.score = score(node.coverage, num_pos_, num_neg_, node.parent_accuracy, node.he, cfg_.scoring);
            ++stats.expanded;
        }
        for (auto h : out.closed) rht_.insert(h);

        st_.reserve(st_.size() + out.good.size());
        for (auto& g : out.good) {
            const auto& parent = beam.at(g.parent);
            st_.push_back(make_node(std::move(g.expr), g.hash, std::move(g.coverage), parent.hash,
                                    parent.score.accuracy));
            best_accuracy = std::max(best_accuracy, st_.back().score.accuracy);
            if (observer_.on_insert) observer_.on_insert(st_.back());
        }
        sort_open_list(st_, cfg_.threads);

        stats.generated = out.generated;
        stats.redundant_dropped = out.redundant;
        stats.weak_dropped = out.weak;
        stats.open_list_size = st_.size();
        stats.elapsed_millis = elapsed();
        result.iterations.push_back(stats);
        if (observer_.on_iteration) observer_.on_iteration(stats);

        if (out.abort) {
            result.status = best_accuracy >= cfg_.target_accuracy ? SearchStatus::Solved : SearchStatus::Budget;
            break;
        }
    }
    result.best = best_hypotheses(cfg_.limit);
    return result;
}

SearchResult run_search(const KnowledgeBase& kb, const ExampleSet& examples, const Refiner& refiner,
                        const SearchConfig& cfg, SearchObserver observer) {
    SearchEngine engine(kb, examples, cfg, std::move(observer));
    LocalBackend backend(kb, examples, refiner, engine.config(), &engine.observer());
    return engine.run(backend);
}

}  // namespace spildl
