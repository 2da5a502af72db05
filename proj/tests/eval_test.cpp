#include <gtest/gtest.h>

#include <random>

#include "oracle/oracle.hpp"
#include "spildl/concept.hpp"
#include "spildl/eval.hpp"
#include "test_util.hpp"

using namespace spildl;

namespace {

struct Family {
    ParsedKb parsed;
    ExampleSet examples;
};

// Person(a), Person(b), hasChild(a, b)
Family family() {
    Family f;
    f.parsed = parse_kb(
        "class Person\nrole hasChild\nindividual a\nindividual b\n"
        "instance Person a\ninstance Person b\nfact hasChild a b\n");
    f.parsed.kb = materialize(std::move(f.parsed.kb));
    f.examples = parse_examples("+ a\n- b\n", f.parsed.symbols, f.parsed.kb.num_individuals);
    return f;
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

struct RandomInstance {
    ParsedKb parsed;
    ExampleSet examples;
};

RandomInstance random_instance(std::mt19937_64& rng) {
    RandomInstance r;
    do r.parsed = parse_kb(oracle::random_kb_text(rng));
    while (r.parsed.kb.num_individuals < 2);
    r.parsed.kb = materialize(std::move(r.parsed.kb));
    r.examples = parse_examples(oracle::random_examples_text(rng, r.parsed.kb.num_individuals), r.parsed.symbols,
                                r.parsed.kb.num_individuals);
    return r;
}

}  // namespace

TEST(CoveredSet, ExistsOnFamily) {
    const auto f = family();
    const auto c = Concept::exists({0, false}, Concept::atomic(0));
    EXPECT_EQ(to_bools(covered_set(c, f.parsed.kb)), (std::vector<bool>{true, false}));
}

TEST(CoveredSet, ForallIsVacuousWithoutFillers) {
    const auto f = family();
    const auto c = Concept::forall({0, false}, Concept::atomic(0));
    EXPECT_EQ(to_bools(covered_set(c, f.parsed.kb)), (std::vector<bool>{true, true}));
}

TEST(CoveredSet, InverseRoleSwapsDirection) {
    const auto f = family();
    const auto c = Concept::exists({0, true}, Concept::top());
    EXPECT_EQ(to_bools(covered_set(c, f.parsed.kb)), (std::vector<bool>{false, true}));
}

TEST(CoveredSet, MatchesNaiveInterpreterOnRandomKbs) {
    std::mt19937_64 rng(11);
    std::size_t mismatches = 0, checked = 0;
    for (int k = 0; k < 200; ++k) {
        const auto inst = random_instance(rng);
        for (int j = 0; j < 20; ++j) {
            const auto c = canonicalize(oracle::random_concept(rng, inst.parsed.symbols, 4));
            ++checked;
            if (to_bools(covered_set(c, inst.parsed.kb)) != oracle::extension(c, inst.parsed.kb)) ++mismatches;
        }
    }
    EXPECT_EQ(checked, 4000u);
    EXPECT_EQ(mismatches, 0u);
}

TEST(CoveredSet, SetAlgebraLaws) {
    std::mt19937_64 rng(12);
    for (int k = 0; k < 100; ++k) {
        const auto inst = random_instance(rng);
        const auto& kb = inst.parsed.kb;
        const auto& st = inst.parsed.symbols;
        const auto a = canonicalize(oracle::random_concept(rng, st, 3));
        const auto b = canonicalize(oracle::random_concept(rng, st, 3));
        EXPECT_EQ(covered_set(canonicalize(Concept::conj({a, b})), kb), covered_set(a, kb) & covered_set(b, kb));
        EXPECT_EQ(covered_set(canonicalize(Concept::disj({a, b})), kb), covered_set(a, kb) | covered_set(b, kb));
        for (ClassId c = 0; c < kb.num_classes(); ++c)
            EXPECT_EQ(covered_set(Concept::not_atomic(c), kb), ~covered_set(Concept::atomic(c), kb));
    }
}

TEST(CoveredSet, MinOneEqualsExists) {
    std::mt19937_64 rng(13);
    int tried = 0;
    while (tried < 200) {
        const auto inst = random_instance(rng);
        const auto& st = inst.parsed.symbols;
        if (st.roles.size() == 0) continue;
        ++tried;
        const RoleExpr r{static_cast<RoleId>(rng() % st.roles.size()), rng() % 2 == 1};
        const auto filler = canonicalize(oracle::random_concept(rng, st, 3));
        EXPECT_EQ(covered_set(Concept::min_card(1, r, filler), inst.parsed.kb),
                  covered_set(Concept::exists(r, filler), inst.parsed.kb));
    }
}

TEST(Evaluate, TopCoversAllExamples) {
    const auto f = testutil::trains();
    const auto cov = evaluate(Concept::top(), f.kb(), f.examples);
    EXPECT_EQ(cov.pos_covered, 5u);
    EXPECT_EQ(cov.neg_covered, 5u);
}

TEST(Evaluate, EmptyExtensionCoversNothing) {
    const auto f = testutil::trains();
    const auto train = *f.symbols().classes.find("Train");
    const auto car = *f.symbols().classes.find("Car");
    const auto cov = evaluate(canonicalize(Concept::conj({Concept::atomic(train), Concept::atomic(car)})), f.kb(),
                              f.examples);
    EXPECT_EQ(cov.pos_covered, 0u);
    EXPECT_EQ(cov.neg_covered, 0u);
}

TEST(Evaluate, TrainsTargetConceptSeparates) {
    const auto f = testutil::trains();
    const auto c = parse_concept("(hasCar some (ClosedCar and ShortCar))", f.symbols());
    const auto cov = evaluate(c, f.kb(), f.examples);
    const auto [p, n] = oracle::coverage(c, f.kb(), ids(f.examples.positives), ids(f.examples.negatives));
    EXPECT_EQ(p, 5u);
    EXPECT_EQ(n, 0u);
    EXPECT_EQ(cov.pos_covered, p);
    EXPECT_EQ(cov.neg_covered, n);
}

TEST(Evaluate, KeepCoveredReturnsExtension) {
    const auto f = testutil::trains();
    const auto c = parse_concept("Train", f.symbols());
    const auto cov = evaluate(c, f.kb(), f.examples, true);
    ASSERT_TRUE(cov.covered.has_value());
    EXPECT_EQ(*cov.covered, covered_set(c, f.kb()));
    EXPECT_FALSE(evaluate(c, f.kb(), f.examples).covered.has_value());
}

TEST(EvaluateBatch, ThreadCountInvariant) {
    std::mt19937_64 rng(14);
    const auto inst = random_instance(rng);
    std::vector<Concept> batch;
    for (int i = 0; i < 500; ++i) batch.push_back(canonicalize(oracle::random_concept(rng, inst.parsed.symbols, 4)));
    const auto base = evaluate_batch(batch, inst.parsed.kb, inst.examples, 1);
    ASSERT_EQ(base.size(), batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) EXPECT_EQ(base[i], evaluate(batch[i], inst.parsed.kb, inst.examples));
    for (std::size_t t : {2u, 4u, 8u}) EXPECT_EQ(evaluate_batch(batch, inst.parsed.kb, inst.examples, t), base);
}

TEST(EvaluateBatch, EmptyBatch) {
    const auto f = testutil::trains();
    EXPECT_TRUE(evaluate_batch({}, f.kb(), f.examples, 4).empty());
}

TEST(EvaluateBatch, DuplicatedConceptGivesEqualResults) {
    const auto f = testutil::trains();
    const auto c = parse_concept("(hasCar some LongCar)", f.symbols());
    const std::vector<Concept> batch{c, Concept::top(), c};
    const auto r = evaluate_batch(batch, f.kb(), f.examples, 3);
    EXPECT_EQ(r[0], r[2]);
}

TEST(Score, PerfectCoverageNoParent) {
    const auto s = score({5, 0, std::nullopt}, 5, 5, std::nullopt, 0);
    EXPECT_DOUBLE_EQ(s.accuracy, 1.0);
    EXPECT_DOUBLE_EQ(s.value, 1.0);
}

TEST(Score, HalfAccuracy) { EXPECT_DOUBLE_EQ(score({5, 5, std::nullopt}, 5, 5, std::nullopt, 0).accuracy, 0.5); }

TEST(Score, GainBonusAgainstParent) {
    // (4 + 3) / 10 = 0.7, gain 0.2 over the parent, he 3.
    const auto s = score({4, 2, std::nullopt}, 5, 5, 0.5, 3);
    EXPECT_DOUBLE_EQ(s.accuracy, 0.7);
    EXPECT_NEAR(s.value, 0.7 + 0.5 * 0.2 - 0.02 * 3, 1e-12);
    // No negative gain.
    EXPECT_NEAR(score({4, 2, std::nullopt}, 5, 5, 0.9, 3).value, 0.7 - 0.06, 1e-12);
}

TEST(Score, EachExpansionCostsTwoHundredths) {
    std::mt19937_64 rng(15);
    for (int i = 0; i < 1000; ++i) {
        const std::uint32_t np = 1 + rng() % 20, nn = 1 + rng() % 20;
        const CoverageResult cov{static_cast<std::uint32_t>(rng() % (np + 1)), static_cast<std::uint32_t>(rng() % (nn + 1)),
                                 std::nullopt};
        const std::optional<double> parent = rng() % 2 ? std::optional<double>(0.5) : std::nullopt;
        const std::uint32_t he = rng() % 15;
        const auto a = score(cov, np, nn, parent, he);
        const auto b = score(cov, np, nn, parent, he + 1);
        EXPECT_NEAR(a.value - b.value, 0.02, 1e-12);
        EXPECT_EQ(a.accuracy, b.accuracy);
    }
}

TEST(Score, CustomCoefficients) {
    const auto s = score({3, 1, std::nullopt}, 4, 4, 0.25, 2, {.gain_bonus = 1.0, .expansion_penalty = 0.1});
    EXPECT_NEAR(s.value, 0.75 + 0.5 - 0.2, 1e-12);
}

TEST(IsWeak, Thresholds) {
    EXPECT_FALSE(is_weak({5, 0, std::nullopt}, 5, 0.0));
    EXPECT_TRUE(is_weak({4, 0, std::nullopt}, 5, 0.0));
    EXPECT_FALSE(is_weak({8, 0, std::nullopt}, 10, 0.2));
    EXPECT_TRUE(is_weak({7, 0, std::nullopt}, 10, 0.2));
    // ceil(0.75 * 10) = 8
    EXPECT_TRUE(is_weak({7, 0, std::nullopt}, 10, 0.25));
    EXPECT_FALSE(is_weak({8, 0, std::nullopt}, 10, 0.25));
}

TEST(IsWeak, MatchesIntegerThresholdOracle) {
    // Noise as k/100 so the threshold is an exact integer ceiling.
    for (std::uint32_t np = 1; np <= 40; ++np)
        for (std::uint32_t k = 0; k < 100; k += 7) {
            const std::uint32_t need = (np * (100 - k) + 99) / 100;
            for (std::uint32_t p = 0; p <= np; ++p)
                EXPECT_EQ(is_weak({p, 0, std::nullopt}, np, k / 100.0), p < need) << np << ' ' << k << ' ' << p;
        }
}
