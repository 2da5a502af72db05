#include "spildl/eval.hpp"

#include <algorithm>
#include <cmath>

#include "spildl/parallel.hpp"

namespace spildl {

namespace {

// Filler counts per subject (or per object for inverse roles), restricted
// to fillers inside `filler`.
std::vector<std::uint32_t> filler_counts(const std::vector<RoleAssertion>& assertions, bool inverse,
                                         const Bitset& filler, std::size_t n) {
    std::vector<std::uint32_t> counts(n, 0);
    for (const auto& a : assertions) {
        const auto subject = inverse ? a.obj : a.sub;
        const auto object = inverse ? a.sub : a.obj;
        if (filler.test(object)) ++counts[subject];
    }
    return counts;
}

}  // namespace

Bitset covered_set(const Concept& c, const KnowledgeBase& kb) {
    const auto n = kb.num_individuals;
    switch (c.tag()) {
        case Tag::Top: return Bitset::all(n);
        case Tag::Atomic: return kb.class_members.at(c.id());
        case Tag::NotAtomic: return ~kb.class_members.at(c.id());
        case Tag::Exists: {
            const auto filler = covered_set(c.filler(), kb);
            const bool inv = c.role().inverse;
            Bitset out(n);
            for (const auto& a : kb.role_assertions.at(c.id())) {
                if (inv ? filler.test(a.sub) : filler.test(a.obj)) out.set(inv ? a.obj : a.sub);
            }
            return out;
        }
        case Tag::Forall: {
            const auto filler = covered_set(c.filler(), kb);
            const bool inv = c.role().inverse;
            auto out = Bitset::all(n);
            for (const auto& a : kb.role_assertions.at(c.id())) {
                if (!(inv ? filler.test(a.sub) : filler.test(a.obj))) out.reset(inv ? a.obj : a.sub);
            }
            return out;
        }
        case Tag::MinCard:
        case Tag::MaxCard: {
            const auto filler = covered_set(c.filler(), kb);
            const auto counts = filler_counts(kb.role_assertions.at(c.id()), c.role().inverse, filler, n);
            Bitset out(n);
            const bool at_least = c.tag() == Tag::MinCard;
            for (std::size_t i = 0; i < n; ++i)
                if (at_least ? counts[i] >= c.cardinality() : counts[i] <= c.cardinality()) out.set(i);
            return out;
        }
        case Tag::BoolEq: {
            Bitset out(n);
            for (const auto& a : kb.boolean_assertions.at(c.id()))
                if (a.val == c.bool_value()) out.set(a.sub);
            return out;
        }
        case Tag::NumGeq:
        case Tag::NumLeq: {
            Bitset out(n);
            const bool geq = c.tag() == Tag::NumGeq;
            const double v = c.numeric_value();
            for (const auto& a : kb.numeric_assertions.at(c.id()))
                if (geq ? a.val >= v : a.val <= v) out.set(a.sub);
            return out;
        }
        case Tag::StrEq: {
            Bitset out(n);
            for (const auto& a : kb.string_assertions.at(c.id()))
                if (a.val == c.string_value()) out.set(a.sub);
            return out;
        }
        case Tag::And: {
            auto out = covered_set(c.children().front(), kb);
            for (std::size_t i = 1; i < c.children().size() && out.any(); ++i) out &= covered_set(c.children()[i], kb);
            return out;
        }
        case Tag::Or: {
            auto out = covered_set(c.children().front(), kb);
            for (std::size_t i = 1; i < c.children().size(); ++i) out |= covered_set(c.children()[i], kb);
            return out;
        }
    }
    return Bitset(n);
}

CoverageResult evaluate(const Concept& c, const KnowledgeBase& kb, const ExampleSet& examples, bool keep_covered) {
    auto set = covered_set(c, kb);
    CoverageResult r;
    r.pos_covered = static_cast<std::uint32_t>(set.and_count(examples.positives));
    r.neg_covered = static_cast<std::uint32_t>(set.and_count(examples.negatives));
    if (keep_covered) r.covered = std::move(set);
    return r;
}

std::vector<CoverageResult> evaluate_batch(std::span<const Concept> concepts, const KnowledgeBase& kb,
                                           const ExampleSet& examples, std::size_t threads, bool keep_covered) {
    std::vector<CoverageResult> out(concepts.size());
    parallel_for(concepts.size(), threads,
                 [&](std::size_t i) { out[i] = evaluate(concepts[i], kb, examples, keep_covered); });
    return out;
}

double accuracy(const CoverageResult& cov, std::size_t num_pos, std::size_t num_neg) {
    const auto total = num_pos + num_neg;
    if (total == 0) return 0.0;
    const double correct = static_cast<double>(cov.pos_covered) + static_cast<double>(num_neg - cov.neg_covered);
    return correct / static_cast<double>(total);
}

Score score(const CoverageResult& cov, std::size_t num_pos, std::size_t num_neg,
            std::optional<double> parent_accuracy, std::uint32_t horizontal_expansion, const ScoreConfig& cfg) {
    Score s;
    s.accuracy = accuracy(cov, num_pos, num_neg);
    const double gain = parent_accuracy ? std::max(0.0, s.accuracy - *parent_accuracy) : 0.0;
    s.value = s.accuracy + cfg.gain_bonus * gain - cfg.expansion_penalty * horizontal_expansion;
    return s;
}

bool is_weak(const CoverageResult& cov, std::size_t num_pos, double noise) {
    // The epsilon absorbs representation error in (1 - noise) * |E+|.
    const double threshold = std::ceil((1.0 - noise) * static_cast<double>(num_pos) - 1e-9);
    return static_cast<double>(cov.pos_covered) < threshold;
}

}  // namespace spildl
