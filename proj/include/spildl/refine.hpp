#pragma once

#include <cstdint>
#include <vector>

#include "spildl/concept.hpp"
#include "spildl/kb.hpp"

namespace spildl {

/// Concrete-role restrictions available to the refinement operator: every
/// boolean value, every asserted string value and both bound directions at
/// every numeric boundary.
struct MBSet {
    std::vector<Concept> restrictions;
};

MBSet build_mb(const KnowledgeBase& kb, const KbStatistics& stats);

struct RefinementConfig {
    bool use_inverse_roles = true;
    bool use_cardinality = true;
    bool use_disjunction = true;
    bool use_negation = true;
    std::uint32_t max_length = 10;
};

/// Downward refinement operator over canonical concepts.
///
/// Rules, for a concept c and length bound L:
///  - Thing: top-level classes, negated leaf classes, (inverse) some/only
///    Thing per role, the MB restrictions, min 2 per role whose filler
///    count allows it, and binary unions of those (refine_top_levels).
///  - A: direct subclasses of A, and A and X for X in refine(Thing).
///  - not A: not A'' for each direct superclass A''.
///  - r some C: refined filler, direct subroles of r, r min 2 C.
///  - r only C: refined filler.
///  - r min n C: n+1 up to the role's max filler count, refined filler.
///  - r max n C: n-1 down to 0, refined filler.
///  - d >= v / d <= v: next numeric boundary above / below v.
///  - and: one operand refined, or a conjunct from refine(Thing) appended.
///  - or: one operand refined.
/// Results are canonical, no longer than L, distinct from c, and sorted
/// by compare_canonical.
class Refiner {
public:
    Refiner(const KnowledgeBase& kb, const KbStatistics& stats, const MBSet& mb, RefinementConfig cfg);

    std::vector<Concept> refine(const Concept& c, std::uint32_t length_bound) const;

    /// Binary unions of distinct top-level refinements of Thing. Empty
    /// when disjunction is disabled.
    std::vector<Concept> refine_top_levels(std::uint32_t length_bound) const;

    const RefinementConfig& config() const noexcept { return cfg_; }

private:
    struct Sized {
        Concept expr;
        std::uint32_t length;
    };

    void refine_into(const Concept& c, int bound, std::vector<Concept>& out) const;
    std::vector<Concept> refine_canonical(const Concept& c, int bound) const;
    void top_into(int bound, std::vector<Concept>& out) const;
    std::uint32_t filler_cap(RoleExpr r) const;

    const KnowledgeBase& kb_;
    const KbStatistics& stats_;
    RefinementConfig cfg_;
    std::vector<Sized> top_simple_;  // rule-1 refinements of Thing
    std::vector<Sized> top_unions_;  // binary unions of top_simple_
};

/// Free-function form of Refiner::refine.
std::vector<Concept> refine(const Concept& c, std::uint32_t length_bound, const KnowledgeBase& kb,
                            const KbStatistics& stats, const MBSet& mb, const RefinementConfig& cfg);

}  // namespace spildl
