#ifndef M2M_COALESCENT_HPP
#define M2M_COALESCENT_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "m2m/functionals.hpp"
#include "m2m/types.hpp"

namespace m2m {

struct CoalescentParams {
    double gamma_s = 1.0; // species merge rate per block pair
    double gamma_g = 1.0; // gene merge rate per eligible block pair
    int M = 1;            // species
    int N = 1;            // individuals per species
    void validate() const;
};

struct GeneMergeEvent {
    double time;
    int left, right; // merged forest nodes
    int parent;      // new node
};

struct SpeciesMergeEvent {
    double time;
    int block_a, block_b; // representative species ids (0-based)
};

/// Ultrametric merge forest of the gene coalescent, with the species merge
/// log alongside. Leaves are the individuals (i, j), 0-based, id = i*N + j;
/// internal nodes are appended in merge order. Merge times are strictly
/// increasing (exact ties abort the simulation).
struct GeneDendrogram {
    int M = 0, N = 0;
    std::vector<GeneMergeEvent> gene_merges;
    std::vector<SpeciesMergeEvent> species_merges;
    std::vector<int> parent;       // -1 at the final root
    std::vector<double> node_time; // 0 at leaves

    int leaf_count() const { return M * N; }
    int leaf_id(int species, int individual) const;

    /// Coalescence time of two leaves: the time of their lowest common merge.
    double pairwise_distance(int leaf_a, int leaf_b) const;

    /// Root path of a leaf as (node, merge time) pairs, for repeated queries
    /// anchored at one individual.
    std::vector<std::pair<int, double>> root_path(int leaf) const;
};

/// Gillespie simulation of the finite nested Kingman coalescent on
/// {1..M} x {1..N}: a single exponential clock at the total rate
/// gamma_s*C(s,2) + gamma_g*sum_b C(k_b,2), then a categorical event choice,
/// run until one gene block remains. Deterministic for a given seed.
GeneDendrogram simulate(const CoalescentParams& params, std::uint64_t seed);

/// The random m2m space (Z, r_g, nu_{M,N}): all leaves with the coalescent
/// ultrametric, nu = (1/M) sum_i delta_{(1/N) sum_j delta_{(i,j)}}.
/// Materializes the full distance matrix; throws BudgetError when M*N > 4096.
M2MSpace build_m2m(const GeneDendrogram& d);

struct MonteCarloEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    long replicates = 0;
};

/// Mean and standard error of the test functional over independent replicate
/// coalescent trees (the Q_{M,N} statistic). Replicate seeds are derived from
/// `seed`; eval_samples = 0 evaluates each replicate exactly (tuple budget
/// applies), otherwise by Monte-Carlo with that many samples per replicate.
MonteCarloEstimate estimate_Q(const TestFunctionalSpec& spec, const CoalescentParams& params,
                              int replicates, std::uint64_t seed,
                              std::uint64_t eval_samples = 0);

/// Monte-Carlo value of the N -> infinity, M -> infinity limit statistic for a
/// TF3/TF4-shaped spec: the coalescent restricted to m distinct species with
/// n_i distinct individuals each, phi evaluated on the sampled distance
/// matrix (no resampling). Requires m * max(n) <= 12.
MonteCarloEstimate estimate_limit_statistic(const TestFunctionalSpec& spec, double gamma_s,
                                            double gamma_g, long replicates,
                                            std::uint64_t seed);

/// Empirical relative block frequency: (1/N) #{n <= N : r_g((i,1),(l,n)) <= t}.
double relative_frequency(const GeneDendrogram& d, int species_i, int species_l, double t);

struct BlockCountRow {
    double t;
    int gene_blocks;
    int species_blocks;
};

/// Blocks alive at each grid time, replayed from the merge logs.
std::vector<BlockCountRow> block_counts(const GeneDendrogram& d,
                                        const std::vector<double>& t_grid);

/// CDF of Exp(gamma_g) * Exp(gamma_s) (independent sum) for distinct rates;
/// throws DegenerateParams when |gamma_s - gamma_g| < 1e-12.
double hypoexp_cdf(double gamma_g, double gamma_s, double t);

/// CDF of the Erlang(2, gamma) distribution (equal-rate branch).
double erlang2_cdf(double gamma, double t);

/// Distribution of the cross-species coalescence time, choosing the
/// appropriate branch for the rate pair.
double cross_species_cdf(double gamma_g, double gamma_s, double t);

struct DistanceLawResult {
    double ks_same_species = 0.0;
    double ks_cross_species = 0.0;
    double mean_same = 0.0;
    double mean_cross = 0.0;
    double stderr_same = 0.0;
    double stderr_cross = 0.0;
    std::vector<double> samples_same;
    std::vector<double> samples_cross;
};

/// Simulates independent same-species and cross-species pair distances and
/// returns Kolmogorov-Smirnov statistics against Exp(gamma_g) and against the
/// convolution law.
DistanceLawResult distance_law_check(double gamma_s, double gamma_g, int pairs,
                                     std::uint64_t seed);

/// Two-sided KS statistic of samples against a CDF.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

} // namespace m2m

#endif
