#ifndef M2M_FUNCTIONALS_HPP
#define M2M_FUNCTIONALS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "m2m/types.hpp"

namespace m2m {

/// chi family: chi(x) = min(x, C). Bounded with chi(0) = 0.
struct ChiSpec {
    double C = 1.0;
};

/// psi family: psi(a) = C^{1-m} * prod_i min(a_i, C). Vanishes whenever a
/// component is 0 and is bounded by C.
struct PsiSpec {
    double C = 1.0;
};

/// phi families over the sampled distance matrix R (|n| x |n|):
///   ClipEntry:    min(R[i][j], C)
///   ClipSum:      min(sum_{i<j} R[i][j], C)
///   ExpSum:       exp(-lambda * sum_{i<j} R[i][j])
///   MinEntryClip: min(min_{i<j} R[i][j], C), 0 when |n| < 2
struct PhiSpec {
    enum class Family { ClipEntry, ClipSum, ExpSum, MinEntryClip };
    Family family = Family::ClipEntry;
    std::size_t i = 0;
    std::size_t j = 1;
    double C = 1.0;
    double lambda = 1.0;

    double operator()(const std::vector<std::vector<double>>& R) const;
};

struct TestFunctionalSpec {
    enum class Kind { TF1, TF2, TF3, TF4 };
    Kind kind = Kind::TF1;
    int m = 1;
    std::vector<int> n; // length m, for TF3/TF4
    ChiSpec chi;
    PsiSpec psi;
    PhiSpec phi;

    /// Throws ValidationError(InvalidSpec) on structural violations.
    void validate() const;
    std::size_t total_points() const; // |n|
};

/// Finite Borel measure on the reals, stored by atoms (value -> weight),
/// sorted by value with equal values merged.
struct RealDistribution {
    std::vector<std::pair<double, double>> atoms;

    explicit RealDistribution(std::vector<std::pair<double, double>> a = {});
    double total_weight() const;
    double max_value() const; // 0 for the empty distribution
    double mean() const;      // weighted mean of atom values, 0 if empty
};

/// R(x)_{ij} = r(x_i, x_j) for the chosen points (repeats allowed).
std::vector<std::vector<double>> distance_matrix(const FiniteMetricSpace& space,
                                                 const std::vector<std::size_t>& pts);

struct EvalResult {
    double value = 0.0;
    double stderr_ = 0.0;       // 0 in exact mode
    std::uint64_t samples = 0;  // 0 in exact mode
};

/// Exact evaluation: every integral is replaced by the finite weighted sum
/// over ordered atom/point tuples with replacement. Tuple budget 1e7; throws
/// BudgetError beyond it.
EvalResult eval_tf_exact(const TestFunctionalSpec& spec, const M2MSpace& x);

/// Unbiased Monte-Carlo estimate with reported standard error.
EvalResult eval_tf_monte_carlo(const TestFunctionalSpec& spec, const M2MSpace& x,
                               std::uint64_t samples, std::uint64_t seed);

/// mass_* nu: atom at each inner-measure mass, outer weights summed.
RealDistribution mass_distribution(const TwoLevelMeasure& nu);

/// DD(mu) = r_* mu^{x2}: atom at r(x,y) with weight w_x * w_y.
RealDistribution distance_distribution(const FiniteMetricSpace& space,
                                       const AtomicMeasure& mu);

/// V_delta(mu) = inf{eps > 0 | mu({x | mu(B(x,eps)) <= delta}) <= eps} with
/// open balls, computed exactly by scanning the breakpoint intervals of the
/// piecewise-constant thin-point mass.
double modulus_mass_distribution(const FiniteMetricSpace& space, const AtomicMeasure& mu,
                                 double delta);

/// mu-mass of the delta-thin points at radius eps (the function g scanned by
/// modulus_mass_distribution, exposed for property checks).
double thin_point_mass(const FiniteMetricSpace& space, const AtomicMeasure& mu,
                       double eps, double delta);

/// Covering witness for V_delta(mu) < eps: a point set A with
/// mu(complement of B(A, eps)) < eps and |A| <= max(1, mass/delta).
std::vector<std::size_t> thin_point_cover(const FiniteMetricSpace& space,
                                          const AtomicMeasure& mu, double eps,
                                          double delta);

/// f_K cutoff: outer weight a_k becomes a_k * g_K(mass(mu_k)) with the
/// piecewise-linear g_K (1 on [0,K/2], 2 - 2x/K on (K/2,K], 0 beyond);
/// zero-weight atoms are dropped.
TwoLevelMeasure apply_fK(const TwoLevelMeasure& nu, double K);
double g_K(double x, double K);

struct TwoLevelSample {
    std::vector<double> masses;                   // m rows
    std::vector<std::vector<std::size_t>> points; // m x n point indices
};

/// Samples the two-level measure: row i draws an atom mu_i ~ nu (a probability
/// measure without an atom at the null measure), records mass(mu_i) and draws
/// n i.i.d. points from the normalized mu_i.
TwoLevelSample sample_two_level(const TwoLevelMeasure& nu, int m, int n,
                                std::uint64_t seed);

/// Empirical reconstruction: mu_i := masses[i] * (1/n) sum_j delta_{points[i][j]},
/// nu_hat = (1/m) sum_i delta_{mu_i} in canonical form.
TwoLevelMeasure reconstruct_two_level(const TwoLevelSample& sample);

struct DistributionSummary {
    double total = 0.0;
    double mean = 0.0;
    double max = 0.0;
};

struct CompactnessRow {
    double K = 0.0;
    double delta = 0.0;
    double V_delta = 0.0;            // V_delta(mm f_K nu)
    DistributionSummary dd;          // DD(mm f_K nu)
    DistributionSummary mass_dist;   // mass_*(f_K nu)
};

/// Diagnostic table of the compactness-criterion quantities on a K x delta grid.
std::vector<CompactnessRow> compactness_profile(const M2MSpace& x,
                                                const std::vector<double>& K_grid,
                                                const std::vector<double>& delta_grid);

/// Membership in the compact class A_N: effective support of at most N points
/// with diameter <= N, mass(nu) <= N and every inner mass <= N.
bool is_in_A_N(const M2MSpace& x, int N);

/// A fixed 12-spec library spanning TF1-TF4 and the built-in phi families,
/// used by the relabeling-invariance and separation checks.
std::vector<TestFunctionalSpec> standard_spec_library();

} // namespace m2m

#endif
