#include "m2m/coalescent.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <tuple>
#include <unordered_map>

#include "m2m/core.hpp"
#include "m2m/rng.hpp"

namespace m2m {

void CoalescentParams::validate() const {
    if (!(gamma_s > 0.0) || !(gamma_g > 0.0))
        throw ValidationError(ErrorKind::PreconditionViolated, "rates must be positive");
    if (M < 1 || N < 1)
        throw ValidationError(ErrorKind::PreconditionViolated, "M, N must be >= 1");
}

int GeneDendrogram::leaf_id(int species, int individual) const {
    if (species < 0 || species >= M)
        throw ValidationError(ErrorKind::UnknownSpecies,
                              "species " + std::to_string(species) + " outside 0.." +
                                  std::to_string(M - 1));
    if (individual < 0 || individual >= N)
        throw ValidationError(ErrorKind::UnknownLeaf,
                              "individual " + std::to_string(individual) + " outside 0.." +
                                  std::to_string(N - 1));
    return species * N + individual;
}

double GeneDendrogram::pairwise_distance(int leaf_a, int leaf_b) const {
    if (leaf_a < 0 || leaf_a >= leaf_count() || leaf_b < 0 || leaf_b >= leaf_count())
        throw ValidationError(ErrorKind::UnknownLeaf, "leaf id out of range");
    if (leaf_a == leaf_b) return 0.0;
    int u = leaf_a, v = leaf_b;
    // Climb whichever side sits at the earlier time; node times are strictly
    // increasing toward the root, so the walk meets exactly at the LCA.
    while (u != v) {
        if (node_time[u] <= node_time[v])
            u = parent[u];
        else
            v = parent[v];
    }
    return node_time[u];
}

std::vector<std::pair<int, double>> GeneDendrogram::root_path(int leaf) const {
    if (leaf < 0 || leaf >= leaf_count())
        throw ValidationError(ErrorKind::UnknownLeaf, "leaf id out of range");
    std::vector<std::pair<int, double>> path;
    for (int u = leaf; u != -1; u = parent[u]) path.emplace_back(u, node_time[u]);
    return path;
}

GeneDendrogram simulate(const CoalescentParams& params, std::uint64_t seed) {
    params.validate();
    Rng rng(seed);
    const int MN = params.M * params.N;

    GeneDendrogram d;
    d.M = params.M;
    d.N = params.N;
    d.parent.assign(static_cast<std::size_t>(2 * MN - 1), -1);
    d.node_time.assign(static_cast<std::size_t>(2 * MN - 1), 0.0);

    // Species blocks carry their member gene blocks (current forest roots).
    struct SBlock {
        int rep; // smallest species id, for the event log
        std::vector<int> genes;
    };
    std::vector<SBlock> blocks(params.M);
    for (int i = 0; i < params.M; ++i) {
        blocks[i].rep = i;
        blocks[i].genes.resize(params.N);
        for (int j = 0; j < params.N; ++j) blocks[i].genes[j] = i * params.N + j;
    }
    auto pairs_in = [](std::size_t k) {
        return static_cast<std::uint64_t>(k) * (k - 1) / 2;
    };
    std::uint64_t gene_pairs = 0;
    for (const auto& b : blocks) gene_pairs += pairs_in(b.genes.size());

    int gene_blocks = MN;
    int next_node = MN;
    double t = 0.0;
    double last_event = 0.0;
    while (gene_blocks > 1) {
        const std::size_t s = blocks.size();
        const double rate_s = params.gamma_s * static_cast<double>(pairs_in(s));
        const double rate_g = params.gamma_g * static_cast<double>(gene_pairs);
        t += rng.exponential(rate_s + rate_g);
        if (t <= last_event)
            throw ValidationError(ErrorKind::SimulationError,
                                  "tied event times at t = " + std::to_string(t));
        last_event = t;

        if (rng.uniform() * (rate_s + rate_g) < rate_s) {
            // species merge: uniform unordered block pair
            std::uint64_t idx = rng.below(pairs_in(s));
            std::size_t a = 0;
            while (idx >= s - 1 - a) {
                idx -= s - 1 - a;
                ++a;
            }
            const std::size_t b = a + 1 + idx;
            const std::size_t ka = blocks[a].genes.size(), kb = blocks[b].genes.size();
            gene_pairs += pairs_in(ka + kb) - pairs_in(ka) - pairs_in(kb);
            d.species_merges.push_back({t, std::min(blocks[a].rep, blocks[b].rep),
                                        std::max(blocks[a].rep, blocks[b].rep)});
            blocks[a].rep = std::min(blocks[a].rep, blocks[b].rep);
            blocks[a].genes.insert(blocks[a].genes.end(), blocks[b].genes.begin(),
                                   blocks[b].genes.end());
            blocks[b] = std::move(blocks.back());
            blocks.pop_back();
        } else {
            // gene merge: block proportional to its pair count, uniform pair inside
            std::uint64_t r = rng.below(gene_pairs);
            std::size_t bi = 0;
            while (r >= pairs_in(blocks[bi].genes.size())) {
                r -= pairs_in(blocks[bi].genes.size());
                ++bi;
            }
            auto& genes = blocks[bi].genes;
            const std::size_t k = genes.size();
            std::size_t p = 0;
            while (r >= k - 1 - p) {
                r -= k - 1 - p;
                ++p;
            }
            const std::size_t q = p + 1 + r;
            const int node = next_node++;
            d.parent[genes[p]] = node;
            d.parent[genes[q]] = node;
            d.node_time[node] = t;
            d.gene_merges.push_back({t, genes[p], genes[q], node});
            genes[p] = node;
            genes[q] = genes.back();
            genes.pop_back();
            gene_pairs -= k - 1;
            --gene_blocks;
        }
    }
    return d;
}

M2MSpace build_m2m(const GeneDendrogram& d) {
    const int n = d.leaf_count();
    if (n > 4096)
        throw BudgetError("build_m2m materializes an " + std::to_string(n) + "x" +
                          std::to_string(n) + " matrix; limit is 4096 points");
    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            dist[a][b] = dist[b][a] = d.pairwise_distance(a, b);
    std::vector<std::string> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < d.M; ++i)
        for (int j = 0; j < d.N; ++j)
            labels[static_cast<std::size_t>(i * d.N + j)] =
                std::to_string(i + 1) + ":" + std::to_string(j + 1);

    std::vector<WeightedAtom> atoms;
    for (int i = 0; i < d.M; ++i) {
        std::vector<std::pair<std::size_t, double>> e;
        for (int j = 0; j < d.N; ++j)
            e.emplace_back(static_cast<std::size_t>(i * d.N + j), 1.0 / d.N);
        atoms.push_back({1.0 / d.M, AtomicMeasure(std::move(e))});
    }
    return M2MSpace::checked(FiniteMetricSpace::unchecked(std::move(dist), std::move(labels)),
                             TwoLevelMeasure(std::move(atoms)));
}

namespace {

double chi_clip(double x, double C) { return std::min(x, C); }

// nu_{M,N} has unit outer and inner masses, so chi and psi reduce to constant
// factors and phi integrates over uniform species/individual draws. Exact and
// Monte-Carlo evaluation work off the dendrogram directly; build_m2m plus
// eval_tf gives the same value (tested) but needs the full distance matrix.
double spec_prefactor(const TestFunctionalSpec& spec) {
    double pre = 1.0;
    for (int k = 0; k < spec.m; ++k) pre *= std::min(1.0, spec.psi.C);
    for (int k = 1; k < spec.m; ++k) pre /= spec.psi.C;
    if (spec.kind == TestFunctionalSpec::Kind::TF2 ||
        spec.kind == TestFunctionalSpec::Kind::TF3)
        pre *= chi_clip(1.0, spec.chi.C);
    return pre;
}

double eval_on_dendrogram_exact(const TestFunctionalSpec& spec, const GeneDendrogram& d) {
    const std::size_t total = spec.total_points();
    double tuples = 1.0;
    for (int i = 0; i < spec.m; ++i) tuples *= d.M;
    for (std::size_t t = 0; t < total; ++t) tuples *= d.N;
    if (tuples > 1e7)
        throw BudgetError("exact evaluation needs " + std::to_string(tuples) + " tuples");

    std::vector<int> species(static_cast<std::size_t>(spec.m));
    std::vector<int> leaves(total);
    std::vector<std::vector<double>> R(total, std::vector<double>(total, 0.0));

    double sum = 0.0;
    const double w_species = 1.0 / std::pow(static_cast<double>(d.M), spec.m);
    const double w_points = 1.0 / std::pow(static_cast<double>(d.N), static_cast<double>(total));

    // Odometer over species tuple and the flattened individual tuple.
    std::vector<int> indiv(total, 0);
    auto eval_current = [&]() {
        std::size_t slot = 0;
        for (int g = 0; g < spec.m; ++g)
            for (int t = 0; t < spec.n[static_cast<std::size_t>(g)]; ++t, ++slot)
                leaves[slot] = species[static_cast<std::size_t>(g)] * d.N + indiv[slot];
        for (std::size_t a = 0; a < total; ++a)
            for (std::size_t b = a + 1; b < total; ++b)
                R[a][b] = R[b][a] = d.pairwise_distance(leaves[a], leaves[b]);
        sum += spec.phi(R);
    };
    std::function<void(int)> loop_species = [&](int g) {
        if (g == spec.m) {
            std::fill(indiv.begin(), indiv.end(), 0);
            while (true) {
                eval_current();
                std::size_t k = 0;
                while (k < total && ++indiv[k] == d.N) indiv[k++] = 0;
                if (k == total) break;
            }
            return;
        }
        for (int i = 0; i < d.M; ++i) {
            species[static_cast<std::size_t>(g)] = i;
            loop_species(g + 1);
        }
    };
    loop_species(0);
    return spec_prefactor(spec) * sum * w_species * w_points;
}

double eval_on_dendrogram_mc(const TestFunctionalSpec& spec, const GeneDendrogram& d,
                             std::uint64_t samples, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t total = spec.total_points();
    std::vector<int> leaves(total);
    std::vector<std::vector<double>> R(total, std::vector<double>(total, 0.0));
    double sum = 0.0;
    for (std::uint64_t s = 0; s < samples; ++s) {
        std::size_t slot = 0;
        for (int g = 0; g < spec.m; ++g) {
            const int sp = static_cast<int>(rng.below(static_cast<std::uint64_t>(d.M)));
            for (int t = 0; t < spec.n[static_cast<std::size_t>(g)]; ++t, ++slot)
                leaves[slot] =
                    sp * d.N + static_cast<int>(rng.below(static_cast<std::uint64_t>(d.N)));
        }
        for (std::size_t a = 0; a < total; ++a)
            for (std::size_t b = a + 1; b < total; ++b)
                R[a][b] = R[b][a] = d.pairwise_distance(leaves[a], leaves[b]);
        sum += spec.phi(R);
    }
    return spec_prefactor(spec) * sum / static_cast<double>(samples);
}

MonteCarloEstimate summarize(const std::vector<double>& values) {
    MonteCarloEstimate est;
    est.replicates = static_cast<long>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    est.mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - est.mean) * (v - est.mean);
    est.stderr_ = values.size() > 1
                      ? std::sqrt(ss / (static_cast<double>(values.size()) *
                                        static_cast<double>(values.size() - 1)))
                      : 0.0;
    return est;
}

void require_tf34(const TestFunctionalSpec& spec) {
    spec.validate();
    if (spec.kind != TestFunctionalSpec::Kind::TF3 &&
        spec.kind != TestFunctionalSpec::Kind::TF4)
        throw ValidationError(ErrorKind::InvalidSpec,
                              "a TF3/TF4-shaped spec is required here");
}

} // namespace

MonteCarloEstimate estimate_Q(const TestFunctionalSpec& spec, const CoalescentParams& params,
                              int replicates, std::uint64_t seed,
                              std::uint64_t eval_samples) {
    spec.validate();
    params.validate();
    if (replicates < 2)
        throw ValidationError(ErrorKind::PreconditionViolated, "replicates must be >= 2");
    std::vector<double> values(static_cast<std::size_t>(replicates));
    for (int i = 0; i < replicates; ++i) {
        const std::uint64_t rep_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        if (spec.kind == TestFunctionalSpec::Kind::TF1) {
            values[static_cast<std::size_t>(i)] = chi_clip(1.0, spec.chi.C);
            continue;
        }
        if (spec.kind == TestFunctionalSpec::Kind::TF2) {
            // masses are identically 1, so the value is the constant prefactor
            values[static_cast<std::size_t>(i)] = spec_prefactor(spec);
            continue;
        }
        const GeneDendrogram d = simulate(params, rep_seed);
        values[static_cast<std::size_t>(i)] =
            eval_samples == 0
                ? eval_on_dendrogram_exact(spec, d)
                : eval_on_dendrogram_mc(spec, d, eval_samples, derive_seed(rep_seed, 1));
    }
    return summarize(values);
}

MonteCarloEstimate estimate_limit_statistic(const TestFunctionalSpec& spec, double gamma_s,
                                            double gamma_g, long replicates,
                                            std::uint64_t seed) {
    require_tf34(spec);
    if (replicates < 2)
        throw ValidationError(ErrorKind::PreconditionViolated, "replicates must be >= 2");
    int nmax = 0;
    for (int ni : spec.n) nmax = std::max(nmax, ni);
    if (spec.m * nmax > 12)
        throw ValidationError(ErrorKind::PreconditionViolated,
                              "limit statistic needs m * max(n) <= 12");

    CoalescentParams params{gamma_s, gamma_g, spec.m, nmax};
    const std::size_t total = spec.total_points();
    std::vector<int> leaves(total);
    std::vector<std::vector<double>> R(total, std::vector<double>(total, 0.0));
    const double pre = spec_prefactor(spec);

    std::vector<double> values(static_cast<std::size_t>(replicates));
    for (long i = 0; i < replicates; ++i) {
        const GeneDendrogram d = simulate(params, derive_seed(seed, static_cast<std::uint64_t>(i)));
        // all-distinct sample: species g contributes its first n_g individuals
        std::size_t slot = 0;
        for (int g = 0; g < spec.m; ++g)
            for (int t = 0; t < spec.n[static_cast<std::size_t>(g)]; ++t, ++slot)
                leaves[slot] = g * d.N + t;
        for (std::size_t a = 0; a < total; ++a)
            for (std::size_t b = a + 1; b < total; ++b)
                R[a][b] = R[b][a] = d.pairwise_distance(leaves[a], leaves[b]);
        values[static_cast<std::size_t>(i)] = pre * spec.phi(R);
    }
    return summarize(values);
}

double relative_frequency(const GeneDendrogram& d, int species_i, int species_l, double t) {
    const int anchor = d.leaf_id(species_i, 0);
    const auto path = d.root_path(anchor);
    std::unordered_map<int, double> on_path;
    for (const auto& [node, time] : path) on_path.emplace(node, time);
    int count = 0;
    for (int n = 0; n < d.N; ++n) {
        const int leaf = d.leaf_id(species_l, n);
        double join = 0.0;
        for (int u = leaf;; u = d.parent[u]) {
            auto it = on_path.find(u);
            if (it != on_path.end()) {
                join = it->second;
                break;
            }
            if (d.parent[u] == -1) {
                // disconnected only for a forest that never fully merged
                join = std::numeric_limits<double>::infinity();
                break;
            }
        }
        if (join <= t) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(d.N);
}

std::vector<BlockCountRow> block_counts(const GeneDendrogram& d,
                                        const std::vector<double>& t_grid) {
    std::vector<BlockCountRow> rows;
    for (double t : t_grid) {
        int gm = 0, sm = 0;
        for (const auto& e : d.gene_merges)
            if (e.time <= t) ++gm;
        for (const auto& e : d.species_merges)
            if (e.time <= t) ++sm;
        rows.push_back({t, d.leaf_count() - gm, d.M - sm});
    }
    return rows;
}

double hypoexp_cdf(double gamma_g, double gamma_s, double t) {
    if (std::abs(gamma_s - gamma_g) < 1e-12)
        throw ValidationError(ErrorKind::DegenerateParams,
                              "rates nearly equal; use the Erlang branch");
    if (t <= 0.0) return 0.0;
    return 1.0 - (gamma_s * std::exp(-gamma_g * t) - gamma_g * std::exp(-gamma_s * t)) /
                     (gamma_s - gamma_g);
}

double erlang2_cdf(double gamma, double t) {
    if (t <= 0.0) return 0.0;
    return 1.0 - std::exp(-gamma * t) * (1.0 + gamma * t);
}

double cross_species_cdf(double gamma_g, double gamma_s, double t) {
    if (std::abs(gamma_s - gamma_g) < 1e-12) return erlang2_cdf(gamma_g, t);
    return hypoexp_cdf(gamma_g, gamma_s, t);
}

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max(d, std::max((static_cast<double>(i) + 1.0) / n - f,
                                 f - static_cast<double>(i) / n));
    }
    return d;
}

DistanceLawResult distance_law_check(double gamma_s, double gamma_g, int pairs,
                                     std::uint64_t seed) {
    if (pairs < 100)
        throw ValidationError(ErrorKind::PreconditionViolated, "pairs must be >= 100");
    DistanceLawResult res;
    res.samples_same.reserve(static_cast<std::size_t>(pairs));
    res.samples_cross.reserve(static_cast<std::size_t>(pairs));
    const CoalescentParams same{gamma_s, gamma_g, 1, 2};
    const CoalescentParams cross{gamma_s, gamma_g, 2, 1};
    for (int i = 0; i < pairs; ++i) {
        const GeneDendrogram ds = simulate(same, derive_seed(seed, 2 * static_cast<std::uint64_t>(i)));
        res.samples_same.push_back(ds.pairwise_distance(0, 1));
        const GeneDendrogram dc =
            simulate(cross, derive_seed(seed, 2 * static_cast<std::uint64_t>(i) + 1));
        res.samples_cross.push_back(dc.pairwise_distance(0, 1));
    }
    res.ks_same_species = ks_statistic(
        res.samples_same, [gamma_g](double t) { return t <= 0.0 ? 0.0 : 1.0 - std::exp(-gamma_g * t); });
    res.ks_cross_species = ks_statistic(
        res.samples_cross,
        [gamma_g, gamma_s](double t) { return cross_species_cdf(gamma_g, gamma_s, t); });
    auto mean_se = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        const double m = s / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        return std::pair<double, double>(
            m, std::sqrt(ss / (static_cast<double>(v.size()) *
                               static_cast<double>(v.size() - 1))));
    };
    std::tie(res.mean_same, res.stderr_same) = mean_se(res.samples_same);
    std::tie(res.mean_cross, res.stderr_cross) = mean_se(res.samples_cross);
    return res;
}

} // namespace m2m
