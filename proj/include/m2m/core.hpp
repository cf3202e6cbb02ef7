#ifndef M2M_CORE_HPP
#define M2M_CORE_HPP

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "m2m/types.hpp"

namespace m2m {

inline double mass(const AtomicMeasure& mu) { return mu.mass(); }
inline double mass(const TwoLevelMeasure& nu) { return nu.mass(); }

/// m / mass(m); the null measure maps to itself.
AtomicMeasure normalize(const AtomicMeasure& mu);
TwoLevelMeasure normalize(const TwoLevelMeasure& nu);

/// First moment (intensity) measure: mm nu = sum_k a_k * mu_k.
AtomicMeasure moment_measure(const TwoLevelMeasure& nu);

/// Support of the moment measure; contains the support of every inner atom.
std::vector<std::size_t> effective_support(const TwoLevelMeasure& nu);

/// Restricts the space to the effective support and reindexes nu onto it.
/// Equivalent to the input and idempotent; weight on the null measure is kept.
M2MSpace restrict_to_support(const M2MSpace& x);

/// Point map for push-forwards, defined at least on the measure's support.
using PointMap = std::unordered_map<std::size_t, std::size_t>;

/// g_* mu = mu o g^{-1}: weights summed over preimages.
AtomicMeasure pushforward(const PointMap& f, const AtomicMeasure& mu);

/// g_** nu: applies g_* to every inner atom, keeping outer weights; atoms that
/// collide are merged in canonical form.
TwoLevelMeasure two_level_pushforward(const PointMap& f, const TwoLevelMeasure& nu);

struct EquivalenceResult {
    bool equivalent = false;
    /// Witness bijection between the effective supports, as pairs of original
    /// point indices (x index in X, image index in Y). Empty when not equivalent
    /// or when both supports are empty.
    std::vector<std::pair<std::size_t, std::size_t>> witness;
};

/// Decides equivalence of two m2m spaces by searching for a bijection between
/// effective supports that is isometric within tol and carries nu onto lambda
/// (moment measures and atom multisets within tol). Backtracking candidates are
/// ordered by moment-measure weight then distance profile; the first witness
/// found is returned.
EquivalenceResult are_equivalent(const M2MSpace& x, const M2MSpace& y, double tol);

/// Random m2m space generator over the dense class of finite atomic
/// instances: metric from shortest-path closure of random positive edge
/// weights, rational-style weights, deterministic for a given seed.
M2MSpace random_m2m(int n_points, int max_atoms, int max_inner, double mass_scale,
                    std::uint64_t seed);

} // namespace m2m

#endif
