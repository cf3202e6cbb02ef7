#ifndef M2M_METRICS_HPP
#define M2M_METRICS_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "m2m/functionals.hpp"
#include "m2m/types.hpp"

namespace m2m {

/// Exact decision of the two Prokhorov enlargement inequalities at a given
/// eps, by subset enumeration over the smaller support (open balls). Throws
/// BudgetError("SupportTooLarge...") when min(|supp mu|, |supp eta|) > 22.
bool prokhorov_feasible(const FiniteMetricSpace& space, const AtomicMeasure& mu,
                        const AtomicMeasure& eta, double eps);

/// Prokhorov distance by binary search over prokhorov_feasible on the bracket
/// [0, max(mass mu, mass eta) + tol]. Returns the upper end of the final
/// bracket, within tol of the true infimum and never below it.
double prokhorov(const FiniteMetricSpace& space, const AtomicMeasure& mu,
                 const AtomicMeasure& eta, double tol);

/// Prokhorov distance between finite atomic measures on the real line.
double prokhorov(const RealDistribution& a, const RealDistribution& b, double tol);

/// Two-level Prokhorov distance d_P^{M_f(M_f(X))}(nu, lambda) for measures on
/// one space: outer Prokhorov over the finite set of distinct atoms with the
/// inner Prokhorov (tolerance tol/10) as metric; atoms within tol/10 of each
/// other are merged by weight-summing.
double two_level_prokhorov(const FiniteMetricSpace& space, const TwoLevelMeasure& nu,
                           const TwoLevelMeasure& lambda, double tol);

/// Candidate cross-distances C(x, y) completing the metrics r on X and d on Y
/// to a pseudometric on the disjoint union X u Y.
struct CrossDistanceBlock {
    std::vector<std::vector<double>> c; // |X| x |Y|
};

/// Checks both mixed-triangle invariant families within `slack`; returns a
/// description of the first violated quadruple, or nothing when valid.
std::optional<std::string> validate_cross_block(const CrossDistanceBlock& block,
                                                const FiniteMetricSpace& X,
                                                const FiniteMetricSpace& Y,
                                                double slack = 1e-9);

struct D2gpOptions {
    int multistarts = 4;
    int grid_points = 5;
    int max_sweeps = 3;
    double tol = 1e-7;
    std::uint64_t seed = 0xC0A1E5CEULL;
};

struct DistanceBound {
    double lower = 0.0;
    double upper = 0.0;
    std::optional<CrossDistanceBlock> witness; // block attaining `upper`
    int starts_used = 0;
};

/// Certified interval for the two-level Gromov-Prokhorov distance.
/// Upper bound: minimum over candidate cross-distance blocks (constant block,
/// equivalence-witness block, greedy atom alignments, coordinate-descent
/// refinement) of the two-level Prokhorov distance over the disjoint union.
/// Lower bound: mass difference and the real-line Prokhorov distance between
/// the mass distributions, both 1-Lipschitz images of the two-level distance.
DistanceBound d2gp_bounds(const M2MSpace& x, const M2MSpace& y,
                          const D2gpOptions& opts = {});

} // namespace m2m

#endif
