#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "m2m/core.hpp"
#include "m2m/functionals.hpp"
#include "m2m/rng.hpp"
#include "m2m/types.hpp"

using namespace m2m;

namespace {

AtomicMeasure am(std::vector<std::pair<std::size_t, double>> e) {
    return AtomicMeasure(std::move(e));
}

FiniteMetricSpace line_space(std::vector<double> coords) {
    const std::size_t n = coords.size();
    std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) d[i][j] = std::abs(coords[i] - coords[j]);
    return FiniteMetricSpace::validated(std::move(d));
}

} // namespace

TEST_CASE("validate_space accepts the smallest metric and rejects axiom breaks") {
    CHECK(FiniteMetricSpace::validated({{0, 1}, {1, 0}}).size() == 2);

    CHECK_THROWS_AS(FiniteMetricSpace::validated({{0, 3, 1}, {3, 0, 1}, {1, 1, 0}}),
                    ValidationError);
    CHECK_THROWS_AS(FiniteMetricSpace::validated({{0, 1}, {2, 0}}), ValidationError);
    CHECK_THROWS_AS(FiniteMetricSpace::validated({{1, 1}, {1, 0}}), ValidationError);
    CHECK_THROWS_AS(FiniteMetricSpace::validated({{0, -1}, {-1, 0}}), ValidationError);
    CHECK_THROWS_AS(FiniteMetricSpace::validated({{0, 1}}), ValidationError);

    SUBCASE("error kinds are the named ones") {
        try {
            FiniteMetricSpace::validated({{0, 3, 1}, {3, 0, 1}, {1, 1, 0}});
            FAIL("expected TriangleViolation");
        } catch (const ValidationError& e) {
            CHECK(e.kind() == ErrorKind::TriangleViolation);
            CHECK(std::string(e.what()).find("d(") != std::string::npos);
        }
        try {
            FiniteMetricSpace::validated({{0, 1}, {2, 0}});
            FAIL("expected Asymmetric");
        } catch (const ValidationError& e) {
            CHECK(e.kind() == ErrorKind::Asymmetric);
        }
    }
}

TEST_CASE("mass of atomic and two-level measures") {
    CHECK(AtomicMeasure().mass() == 0.0);
    CHECK(am({{0, 1.0}, {1, 2.0}}).mass() == 3.0);
    const TwoLevelMeasure nu({{0.5, am({{0, 1.0}})}, {0.5, am({{1, 1.0}})}});
    CHECK(nu.mass() == 1.0);
    CHECK(TwoLevelMeasure().mass() == 0.0);
}

TEST_CASE("normalize maps the null measure to itself") {
    CHECK(normalize(am({{0, 2.0}})) == am({{0, 1.0}}));
    CHECK(normalize(AtomicMeasure()).is_null());
    const AtomicMeasure half = normalize(am({{0, 4.0}, {1, 4.0}}));
    CHECK(half.weight(0) == 0.5);
    CHECK(half.weight(1) == 0.5);
    CHECK(normalize(TwoLevelMeasure()).is_null());
}

TEST_CASE("canonical forms merge duplicates and drop zeros") {
    CHECK(am({{2, 0.0}, {1, 1.0}, {1, 0.5}}) == am({{1, 1.5}}));
    const TwoLevelMeasure nu({{0.3, am({{0, 1.0}})}, {0.7, am({{0, 1.0}})}});
    REQUIRE(nu.atoms().size() == 1);
    CHECK(nu.atoms()[0].weight == doctest::Approx(1.0));
    CHECK_THROWS_AS(TwoLevelMeasure({{0.0, am({{0, 1.0}})}}), ValidationError);
    CHECK_THROWS_AS(am({{0, -0.5}}), ValidationError);
}

TEST_CASE("moment measure specializes to the weighted atom sum") {
    const AtomicMeasure mu = am({{0, 1.0}, {2, 0.5}});
    CHECK(moment_measure(TwoLevelMeasure({{1.0, mu}})) == mu);

    const AtomicMeasure doubled = moment_measure(TwoLevelMeasure({{2.0, mu}}));
    CHECK(doubled.weight(0) == 2.0);
    CHECK(doubled.weight(2) == 1.0);

    const TwoLevelMeasure nu({{0.5, am({{0, 1.0}})}, {0.5, am({{0, 1.0}, {1, 1.0}})}});
    const AtomicMeasure mm = moment_measure(nu);
    CHECK(mm.weight(0) == doctest::Approx(1.0));
    CHECK(mm.weight(1) == doctest::Approx(0.5));
}

TEST_CASE("effective support") {
    CHECK(effective_support(TwoLevelMeasure({{1.0, am({{3, 1.0}})}})) ==
          std::vector<std::size_t>{3});
    CHECK(effective_support(TwoLevelMeasure()).empty());
    CHECK(effective_support(TwoLevelMeasure({{0.5, am({{0, 1.0}})}, {0.5, am({{2, 1.0}})}})) ==
          std::vector<std::size_t>{0, 2});
}

TEST_CASE("restrict_to_support drops unused points and keeps null-atom mass") {
    const FiniteMetricSpace s = line_space({0.0, 1.0, 5.0});
    const M2MSpace x = M2MSpace::checked(
        s, TwoLevelMeasure({{1.0, am({{0, 1.0}})}, {2.0, am({{2, 0.5}})}}));
    const M2MSpace r = restrict_to_support(x);
    CHECK(r.space.size() == 2);
    CHECK(r.space.distance(0, 1) == 5.0);
    CHECK(r.nu.mass() == 3.0);

    const M2MSpace rr = restrict_to_support(r);
    CHECK(rr.space.size() == r.space.size());
    CHECK(rr.nu == r.nu);

    // c * delta_o on a nonempty space restricts to the empty space carrying c
    const M2MSpace null_case =
        M2MSpace::checked(s, TwoLevelMeasure({{2.5, AtomicMeasure()}}));
    const M2MSpace nr = restrict_to_support(null_case);
    CHECK(nr.space.size() == 0);
    CHECK(nr.nu.mass() == 2.5);
    REQUIRE(nr.nu.atoms().size() == 1);
    CHECK(nr.nu.atoms()[0].inner.is_null());
}

TEST_CASE("pushforward sums weights over preimages") {
    const AtomicMeasure mu = am({{0, 1.0}, {1, 1.0}});
    PointMap identity{{0, 0}, {1, 1}};
    CHECK(pushforward(identity, mu) == mu);

    PointMap collapse{{0, 2}, {1, 2}};
    CHECK(pushforward(collapse, mu) == am({{2, 2.0}}));

    PointMap partial{{0, 2}};
    CHECK_THROWS_AS(pushforward(partial, mu), ValidationError);

    // two inner atoms collide after the map and merge canonically
    const TwoLevelMeasure nu({{0.25, am({{0, 1.0}})}, {0.75, am({{1, 1.0}})}});
    const TwoLevelMeasure pushed = two_level_pushforward(collapse, nu);
    REQUIRE(pushed.atoms().size() == 1);
    CHECK(pushed.atoms()[0].weight == doctest::Approx(1.0));
    CHECK(pushed.atoms()[0].inner == am({{2, 1.0}}));
}

TEST_CASE("are_equivalent recognizes relabelings and distinguishes scale") {
    const M2MSpace x = random_m2m(4, 3, 3, 1.0, 99);

    SUBCASE("identity") { CHECK(are_equivalent(x, x, 1e-9).equivalent); }

    SUBCASE("permuted labels give a witness") {
        const std::size_t n = x.space.size();
        PointMap perm;
        for (std::size_t i = 0; i < n; ++i) perm[i] = (i + 1) % n;
        std::vector<std::vector<double>> d(n, std::vector<double>(n));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) d[perm[i]][perm[j]] = x.space.distance(i, j);
        const M2MSpace y = M2MSpace::checked(FiniteMetricSpace::unchecked(std::move(d)),
                                             two_level_pushforward(perm, x.nu));
        const EquivalenceResult r = are_equivalent(x, y, 1e-9);
        REQUIRE(r.equivalent);
        for (const auto& [a, b] : r.witness)
            for (const auto& [c, e] : r.witness)
                CHECK(x.space.distance(a, c) ==
                      doctest::Approx(y.space.distance(b, e)).epsilon(1e-9));
        CHECK(are_equivalent(y, x, 1e-9).equivalent);
    }

    SUBCASE("empty-support spaces are compared by outer mass") {
        const FiniteMetricSpace pt = line_space({0.0});
        const M2MSpace a = M2MSpace::checked(pt, TwoLevelMeasure({{2.0, AtomicMeasure()}}));
        const M2MSpace b = M2MSpace::checked(pt, TwoLevelMeasure({{3.0, AtomicMeasure()}}));
        CHECK_FALSE(are_equivalent(a, b, 1e-9).equivalent);
        CHECK(are_equivalent(a, a, 1e-9).equivalent);
    }

    SUBCASE("same nu shape over different metrics is not equivalent") {
        const FiniteMetricSpace s1 = line_space({0.0, 1.0});
        const FiniteMetricSpace s2 = line_space({0.0, 2.0});
        const TwoLevelMeasure nu({{1.0, am({{0, 1.0}, {1, 1.0}})}});
        CHECK_FALSE(
            are_equivalent(M2MSpace::checked(s1, nu), M2MSpace::checked(s2, nu), 1e-9)
                .equivalent);
    }
}

TEST_CASE("equivalence is reflexive and symmetric on random instances") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const M2MSpace x = random_m2m(3 + seed % 4, 3, 3, 1.0, seed);
        const M2MSpace y = random_m2m(3 + (seed + 1) % 4, 3, 3, 1.0, seed + 1000);
        CHECK(are_equivalent(x, x, 1e-9).equivalent);
        CHECK(are_equivalent(x, y, 1e-9).equivalent ==
              are_equivalent(y, x, 1e-9).equivalent);
    }
}

TEST_CASE("restrict_to_support preserves equivalence") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const M2MSpace x = random_m2m(5, 2, 2, 1.0, seed);
        CHECK(are_equivalent(x, restrict_to_support(x), 1e-9).equivalent);
    }
}

TEST_CASE("random_m2m is deterministic and always valid") {
    const M2MSpace a = random_m2m(4, 3, 3, 1.0, 7);
    const M2MSpace b = random_m2m(4, 3, 3, 1.0, 7);
    CHECK(a.nu == b.nu);
    CHECK(a.space.matrix() == b.space.matrix());

    const M2MSpace single = random_m2m(1, 3, 3, 1.0, 11);
    CHECK(single.space.size() == 1);
    for (const auto& atom : single.nu.atoms())
        for (const auto& [idx, w] : atom.inner.entries()) CHECK(idx == 0);

    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const M2MSpace x = random_m2m(1 + seed % 6, 4, 4, 1.0, seed);
        CHECK_NOTHROW(FiniteMetricSpace::validated(x.space.matrix()));
        CHECK_NOTHROW(M2MSpace::checked(x.space, x.nu));
        for (const auto& atom : x.nu.atoms()) CHECK(atom.weight > 0.0);
    }
}

TEST_CASE("moment measure mass identity and atomic support corollary") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const M2MSpace x = random_m2m(2 + seed % 5, 4, 3, 2.0, seed);
        double expect = 0.0;
        for (const auto& atom : x.nu.atoms()) expect += atom.weight * atom.inner.mass();
        const AtomicMeasure mm = moment_measure(x.nu);
        CHECK(mm.mass() == doctest::Approx(expect).epsilon(1e-12));

        const auto supp = effective_support(x.nu);
        for (const auto& atom : x.nu.atoms())
            for (std::size_t p : atom.inner.support())
                CHECK(std::find(supp.begin(), supp.end(), p) != supp.end());
    }
}

TEST_CASE("moment measure is a supporting measure at atomic scale") {
    Rng rng(424242);
    for (int trial = 0; trial < 100; ++trial) {
        const M2MSpace x = random_m2m(4, 3, 3, 1.0, 5000 + trial);
        std::vector<double> f(x.space.size());
        for (double& v : f) v = rng.below(2) == 0 ? 0.0 : rng.uniform(0.1, 2.0);

        const AtomicMeasure mm = moment_measure(x.nu);
        double lhs = 0.0;
        for (const auto& [idx, w] : mm.entries()) lhs += f[idx] * w;
        bool all_zero = true;
        for (const auto& atom : x.nu.atoms()) {
            double v = 0.0;
            for (const auto& [idx, w] : atom.inner.entries()) v += f[idx] * w;
            all_zero = all_zero && v == 0.0;
        }
        CHECK((lhs == 0.0) == all_zero);
    }
}
