#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "spildl/bitset.hpp"
#include "spildl/concept.hpp"
#include "spildl/kb.hpp"

namespace spildl {

/// Covered example counts of one hypothesis, optionally with the full
/// covered-individual set.
struct CoverageResult {
    std::uint32_t pos_covered = 0;
    std::uint32_t neg_covered = 0;
    std::optional<Bitset> covered;

    bool operator==(const CoverageResult&) const = default;
};

struct Score {
    double accuracy = 0.0;
    /// Search heuristic used to order the open list.
    double value = 0.0;

    bool operator==(const Score&) const = default;
};

struct ScoreConfig {
    double gain_bonus = 0.5;
    double expansion_penalty = 0.02;
};

/// Closed-world extension of `c` over all individuals of `kb`.
Bitset covered_set(const Concept& c, const KnowledgeBase& kb);

CoverageResult evaluate(const Concept& c, const KnowledgeBase& kb, const ExampleSet& examples,
                        bool keep_covered = false);

/// evaluate() over a batch, hypotheses statically partitioned over
/// `threads` workers. Result i always equals evaluate(concepts[i]).
std::vector<CoverageResult> evaluate_batch(std::span<const Concept> concepts, const KnowledgeBase& kb,
                                           const ExampleSet& examples, std::size_t threads,
                                           bool keep_covered = false);

/// Predictive accuracy over positives and negatives.
double accuracy(const CoverageResult& cov, std::size_t num_pos, std::size_t num_neg);

Score score(const CoverageResult& cov, std::size_t num_pos, std::size_t num_neg,
            std::optional<double> parent_accuracy, std::uint32_t horizontal_expansion,
            const ScoreConfig& cfg = {});

/// True iff the hypothesis covers fewer than ceil((1 - noise) * |E+|)
/// positives.
bool is_weak(const CoverageResult& cov, std::size_t num_pos, double noise);

}  // namespace spildl
