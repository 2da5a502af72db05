#include "spildl/refine.hpp"

#include <algorithm>

namespace spildl {

MBSet build_mb(const KnowledgeBase& kb, const KbStatistics& stats) {
    MBSet mb;
    for (RoleId b = 0; b < kb.boolean_assertions.size(); ++b) {
        mb.restrictions.push_back(Concept::bool_eq(b, false));
        mb.restrictions.push_back(Concept::bool_eq(b, true));
    }
    for (RoleId d = 0; d < stats.numeric_boundaries.size(); ++d)
        for (double v : stats.numeric_boundaries[d]) {
            mb.restrictions.push_back(Concept::num_geq(d, v));
            mb.restrictions.push_back(Concept::num_leq(d, v));
        }
    for (RoleId s = 0; s < stats.string_domains.size(); ++s)
        for (auto v : stats.string_domains[s]) mb.restrictions.push_back(Concept::str_eq(s, v));
    std::sort(mb.restrictions.begin(), mb.restrictions.end(), CanonicalLess{});
    return mb;
}

Refiner::Refiner(const KnowledgeBase& kb, const KbStatistics& stats, const MBSet& mb, RefinementConfig cfg)
    : kb_(kb), stats_(stats), cfg_(cfg) {
    std::vector<Concept> simple;
    for (auto c : stats.top_level_classes) simple.push_back(Concept::atomic(c));
    if (cfg_.use_negation)
        for (auto c : stats.leaf_classes) simple.push_back(Concept::not_atomic(c));
    for (RoleId r = 0; r < kb.num_roles(); ++r) {
        for (bool inv : {false, true}) {
            if (inv && !cfg_.use_inverse_roles) continue;
            const RoleExpr re{r, inv};
            simple.push_back(Concept::exists(re, Concept::top()));
            simple.push_back(Concept::forall(re, Concept::top()));
            if (cfg_.use_cardinality && filler_cap(re) >= 2)
                simple.push_back(Concept::min_card(2, re, Concept::top()));
        }
    }
    simple.insert(simple.end(), mb.restrictions.begin(), mb.restrictions.end());
    std::sort(simple.begin(), simple.end(), CanonicalLess{});
    simple.erase(std::unique(simple.begin(), simple.end()), simple.end());
    for (auto& c : simple) top_simple_.push_back({c, concept_length(c)});

    if (cfg_.use_disjunction) {
        for (std::size_t i = 0; i < top_simple_.size(); ++i)
            for (std::size_t j = i + 1; j < top_simple_.size(); ++j) {
                auto u = Concept::disj({top_simple_[i].expr, top_simple_[j].expr});
                top_unions_.push_back({u, top_simple_[i].length + top_simple_[j].length + 1});
            }
        std::sort(top_unions_.begin(), top_unions_.end(),
                  [](const Sized& a, const Sized& b) { return compare_canonical(a.expr, b.expr) < 0; });
    }
}

std::uint32_t Refiner::filler_cap(RoleExpr r) const {
    const auto& caps = r.inverse ? stats_.max_inverse_fillers : stats_.max_fillers;
    return r.role < caps.size() ? caps[r.role] : 0;
}

void Refiner::top_into(int bound, std::vector<Concept>& out) const {
    for (const auto& s : top_simple_)
        if (static_cast<int>(s.length) <= bound) out.push_back(s.expr);
    for (const auto& s : top_unions_)
        if (static_cast<int>(s.length) <= bound) out.push_back(s.expr);
}

std::vector<Concept> Refiner::refine_canonical(const Concept& c, int bound) const {
    std::vector<Concept> raw;
    refine_into(c, bound, raw);
    std::vector<Concept> out;
    out.reserve(raw.size());
    for (auto& r : raw) {
        auto cr = canonicalize(r);
        if (static_cast<int>(concept_length(cr)) <= bound && !(cr == c)) out.push_back(std::move(cr));
    }
    std::sort(out.begin(), out.end(), CanonicalLess{});
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

void Refiner::refine_into(const Concept& c, int bound, std::vector<Concept>& out) const {
    const int len = static_cast<int>(concept_length(c));
    if (bound < len) return;
    switch (c.tag()) {
        case Tag::Top: top_into(bound, out); return;
        case Tag::Atomic: {
            for (auto sub : stats_.direct_subclasses.at(c.id())) out.push_back(Concept::atomic(sub));
            std::vector<Concept> conjuncts;
            top_into(bound - len - 1, conjuncts);
            for (auto& x : conjuncts)
                if (!(x == c)) out.push_back(Concept::conj({c, std::move(x)}));
            return;
        }
        case Tag::NotAtomic:
            for (auto super : stats_.direct_superclasses.at(c.id())) out.push_back(Concept::not_atomic(super));
            return;
        case Tag::Exists:
        case Tag::Forall:
        case Tag::MinCard:
        case Tag::MaxCard: {
            const int filler_bound = bound - (len - static_cast<int>(concept_length(c.filler())));
            for (auto& f : refine_canonical(c.filler(), filler_bound)) out.push_back(c.with_filler(std::move(f)));
            const auto re = c.role();
            if (c.tag() == Tag::Exists) {
                for (auto sub : stats_.direct_subroles.at(re.role)) out.push_back(c.with_role(sub));
                if (cfg_.use_cardinality && filler_cap(re) >= 2 && len + 1 <= bound)
                    out.push_back(Concept::min_card(2, re, c.filler()));
            } else if (c.tag() == Tag::MinCard) {
                if (c.cardinality() + 1 <= filler_cap(re)) out.push_back(c.with_cardinality(c.cardinality() + 1));
            } else if (c.tag() == Tag::MaxCard) {
                if (c.cardinality() >= 1) out.push_back(c.with_cardinality(c.cardinality() - 1));
            }
            return;
        }
        case Tag::NumGeq: {
            const auto& b = stats_.numeric_boundaries.at(c.id());
            auto it = std::upper_bound(b.begin(), b.end(), c.numeric_value());
            if (it != b.end()) out.push_back(Concept::num_geq(c.id(), *it));
            return;
        }
        case Tag::NumLeq: {
            const auto& b = stats_.numeric_boundaries.at(c.id());
            auto it = std::lower_bound(b.begin(), b.end(), c.numeric_value());
            if (it != b.begin()) out.push_back(Concept::num_leq(c.id(), *std::prev(it)));
            return;
        }
        case Tag::BoolEq:
        case Tag::StrEq: return;
        case Tag::And:
        case Tag::Or: {
            const auto& ops = c.children();
            for (std::size_t i = 0; i < ops.size(); ++i) {
                const int op_bound = bound - (len - static_cast<int>(concept_length(ops[i])));
                for (auto& r : refine_canonical(ops[i], op_bound)) {
                    auto copy = ops;
                    copy[i] = std::move(r);
                    out.push_back(c.tag() == Tag::And ? Concept::conj(std::move(copy)) : Concept::disj(std::move(copy)));
                }
            }
            if (c.tag() == Tag::And) {
                std::vector<Concept> conjuncts;
                top_into(bound - len - 1, conjuncts);
                for (auto& x : conjuncts) {
                    auto copy = ops;
                    copy.push_back(std::move(x));
                    out.push_back(Concept::conj(std::move(copy)));
                }
            }
            return;
        }
    }
}

std::vector<Concept> Refiner::refine(const Concept& c, std::uint32_t length_bound) const {
    return refine_canonical(c, static_cast<int>(length_bound));
}

std::vector<Concept> Refiner::refine_top_levels(std::uint32_t length_bound) const {
    std::vector<Concept> out;
    for (const auto& s : top_unions_)
        if (s.length <= length_bound) out.push_back(s.expr);
    return out;
}

std::vector<Concept> refine(const Concept& c, std::uint32_t length_bound, const KnowledgeBase& kb,
                            const KbStatistics& stats, const MBSet& mb, const RefinementConfig& cfg) {
    return Refiner(kb, stats, mb, cfg).refine(c, length_bound);
}

}  // namespace spildl
