#include "m2m/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <bit>
#include <limits>
#include <map>
#include <memory>
#include <tuple>

#include "m2m/core.hpp"
#include "m2m/rng.hpp"

namespace m2m {

namespace {

constexpr std::size_t kSupportBudget = 22;
constexpr int kMaxBisectIterations = 200;

// Prokhorov computations run on this reduced view: two weight vectors over a
// common abstract point set with a (pseudo)distance callback.
struct ProkhorovProblem {
    std::size_t n = 0;
    std::function<double(std::size_t, std::size_t)> dist;
    std::vector<double> wa, wb;
};

std::vector<std::size_t> positive_support(const std::vector<double>& w) {
    std::vector<std::size_t> s;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (w[i] > 0.0) s.push_back(i);
    return s;
}

// One-sided check of "big(A) <= small(B(A,eps)) + eps for all A" together
// with "small(A) <= big(B(A,eps)) + eps for all A", enumerating only subsets
// of the smaller support. Writing cover(x) for the small-support points
// within eps of x:
//   max_A [ big(A) - small(B(A,eps)) ]   = max_U [ Z(U) - small(U) ]
//   max_A [ small(A) - big(B(A,eps)) ]   = max_A [ small(A) - bigmass + Z(~A) ]
// where Z is the subset-sum (zeta transform) of big mass grouped by cover
// mask. The first identity holds because for fixed U the best A is every big
// point whose cover fits inside U.
bool feasible_small_side(const ProkhorovProblem& p,
                         const std::vector<std::size_t>& big_supp,
                         const std::vector<double>& big_w,
                         const std::vector<std::size_t>& small_supp,
                         const std::vector<double>& small_w, double eps) {
    const std::size_t k = small_supp.size();
    const std::size_t full = std::size_t{1} << k;

    std::vector<double> zeta(full, 0.0);
    double big_mass = 0.0;
    for (std::size_t x : big_supp) {
        std::size_t mask = 0;
        for (std::size_t j = 0; j < k; ++j)
            if (p.dist(x, small_supp[j]) < eps) mask |= std::size_t{1} << j;
        zeta[mask] += big_w[x];
        big_mass += big_w[x];
    }
    for (std::size_t bit = 0; bit < k; ++bit)
        for (std::size_t u = 0; u < full; ++u)
            if (u & (std::size_t{1} << bit)) zeta[u] += zeta[u ^ (std::size_t{1} << bit)];

    std::vector<double> small_mass(full, 0.0);
    for (std::size_t u = 1; u < full; ++u) {
        const std::size_t low = u & (~u + 1);
        const std::size_t j = static_cast<std::size_t>(std::countr_zero(low));
        small_mass[u] = small_mass[u ^ low] + small_w[small_supp[j]];
    }

    for (std::size_t u = 0; u < full; ++u) {
        if (zeta[u] - small_mass[u] > eps) return false;
        if (small_mass[u] - (big_mass - zeta[(full - 1) ^ u]) > eps) return false;
    }
    return true;
}

bool feasible_impl(const ProkhorovProblem& p, double eps) {
    const auto sa = positive_support(p.wa);
    const auto sb = positive_support(p.wb);
    if (std::min(sa.size(), sb.size()) > kSupportBudget)
        throw BudgetError("SupportTooLarge: smaller support has " +
                          std::to_string(std::min(sa.size(), sb.size())) +
                          " points, budget is " + std::to_string(kSupportBudget));
    if (sb.size() <= sa.size())
        return feasible_small_side(p, sa, p.wa, sb, p.wb, eps);
    return feasible_small_side(p, sb, p.wb, sa, p.wa, eps);
}

double prokhorov_impl(const ProkhorovProblem& p, double tol) {
    if (!(tol > 0.0))
        throw ValidationError(ErrorKind::PreconditionViolated, "tol must be > 0");
    double mass_a = 0.0, mass_b = 0.0;
    for (double w : p.wa) mass_a += w;
    for (double w : p.wb) mass_b += w;
    if (mass_a == 0.0 && mass_b == 0.0) return 0.0;
    double lo = 0.0, hi = std::max(mass_a, mass_b) + tol;
    for (int it = 0; it < kMaxBisectIterations && hi - lo > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (feasible_impl(p, mid))
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

ProkhorovProblem space_problem(const FiniteMetricSpace& space, const AtomicMeasure& mu,
                               const AtomicMeasure& eta) {
    ProkhorovProblem p;
    p.n = space.size();
    p.dist = [&space](std::size_t i, std::size_t j) { return space.distance(i, j); };
    p.wa.assign(p.n, 0.0);
    p.wb.assign(p.n, 0.0);
    for (const auto& [idx, w] : mu.entries()) p.wa.at(idx) = w;
    for (const auto& [idx, w] : eta.entries()) p.wb.at(idx) = w;
    return p;
}

} // namespace

bool prokhorov_feasible(const FiniteMetricSpace& space, const AtomicMeasure& mu,
                        const AtomicMeasure& eta, double eps) {
    if (!(eps > 0.0))
        throw ValidationError(ErrorKind::PreconditionViolated, "eps must be > 0");
    return feasible_impl(space_problem(space, mu, eta), eps);
}

double prokhorov(const FiniteMetricSpace& space, const AtomicMeasure& mu,
                 const AtomicMeasure& eta, double tol) {
    return prokhorov_impl(space_problem(space, mu, eta), tol);
}

double prokhorov(const RealDistribution& a, const RealDistribution& b, double tol) {
    std::vector<double> values;
    for (const auto& [v, w] : a.atoms) values.push_back(v);
    for (const auto& [v, w] : b.atoms) values.push_back(v);
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    auto index_of = [&values](double v) {
        return static_cast<std::size_t>(
            std::lower_bound(values.begin(), values.end(), v) - values.begin());
    };
    ProkhorovProblem p;
    p.n = values.size();
    p.dist = [values](std::size_t i, std::size_t j) { return std::abs(values[i] - values[j]); };
    p.wa.assign(p.n, 0.0);
    p.wb.assign(p.n, 0.0);
    for (const auto& [v, w] : a.atoms) p.wa[index_of(v)] += w;
    for (const auto& [v, w] : b.atoms) p.wb[index_of(v)] += w;
    return prokhorov_impl(p, tol);
}

namespace {

double l1_gap(const AtomicMeasure& a, const AtomicMeasure& b) {
    double gap = 0.0;
    auto ia = a.entries().begin();
    auto ib = b.entries().begin();
    while (ia != a.entries().end() || ib != b.entries().end()) {
        if (ib == b.entries().end() || (ia != a.entries().end() && ia->first < ib->first))
            gap += (ia++)->second;
        else if (ia == a.entries().end() || ib->first < ia->first)
            gap += (ib++)->second;
        else {
            gap += std::abs(ia->second - ib->second);
            ++ia;
            ++ib;
        }
    }
    return gap;
}

bool two_level_less(const TwoLevelMeasure& a, const TwoLevelMeasure& b) {
    if (a.atoms().size() != b.atoms().size()) return a.atoms().size() < b.atoms().size();
    if (a.mass() != b.mass()) return a.mass() < b.mass();
    for (std::size_t i = 0; i < a.atoms().size(); ++i) {
        if (a.atoms()[i].weight != b.atoms()[i].weight)
            return a.atoms()[i].weight < b.atoms()[i].weight;
        if (a.atoms()[i].inner != b.atoms()[i].inner)
            return AtomicMeasure::canonical_less(a.atoms()[i].inner, b.atoms()[i].inner);
    }
    return false;
}

} // namespace

double two_level_prokhorov(const FiniteMetricSpace& space, const TwoLevelMeasure& nu,
                           const TwoLevelMeasure& lambda, double tol) {
    if (!(tol > 0.0))
        throw ValidationError(ErrorKind::PreconditionViolated, "tol must be > 0");
    if (nu == lambda) return 0.0;
    // Canonical argument order keeps the computation symmetric bit for bit.
    if (two_level_less(lambda, nu)) return two_level_prokhorov(space, lambda, nu, tol);

    struct MetaAtom {
        const AtomicMeasure* inner;
        double wa = 0.0, wb = 0.0;
    };
    std::vector<MetaAtom> meta;
    const double merge_tol = tol / 10.0;
    auto add_atom = [&](const AtomicMeasure& inner, double w, bool side_a) {
        // L1 dominates the Prokhorov distance on a common space, so merging at
        // L1 <= tol/10 only merges atoms within the dedup tolerance.
        for (auto& m : meta)
            if (l1_gap(*m.inner, inner) <= merge_tol) {
                (side_a ? m.wa : m.wb) += w;
                return;
            }
        MetaAtom m;
        m.inner = &inner;
        (side_a ? m.wa : m.wb) = w;
        meta.push_back(m);
    };
    for (const auto& atom : nu.atoms()) add_atom(atom.inner, atom.weight, true);
    for (const auto& atom : lambda.atoms()) add_atom(atom.inner, atom.weight, false);

    // Lazily filled inner-distance cache; the feasibility checks only ever
    // request cross-side pairs, so most entries stay untouched.
    const std::size_t n = meta.size();
    std::vector<std::vector<double>> cache(n, std::vector<double>(n, -1.0));
    ProkhorovProblem outer;
    outer.n = n;
    outer.wa.resize(n);
    outer.wb.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        outer.wa[i] = meta[i].wa;
        outer.wb[i] = meta[i].wb;
    }
    auto cache_ptr = std::make_shared<std::vector<std::vector<double>>>(std::move(cache));
    outer.dist = [&space, &meta, cache_ptr, merge_tol](std::size_t i, std::size_t j) {
        if (i == j) return 0.0;
        double& slot = (*cache_ptr)[std::min(i, j)][std::max(i, j)];
        if (slot < 0.0)
            slot = prokhorov(space, *meta[std::min(i, j)].inner, *meta[std::max(i, j)].inner,
                             merge_tol);
        return slot;
    };
    return prokhorov_impl(outer, tol);
}

std::optional<std::string> validate_cross_block(const CrossDistanceBlock& block,
                                                const FiniteMetricSpace& X,
                                                const FiniteMetricSpace& Y,
                                                double slack) {
    const std::size_t nx = X.size(), ny = Y.size();
    if (block.c.size() != nx)
        return "block has " + std::to_string(block.c.size()) + " rows, expected " +
               std::to_string(nx);
    for (const auto& row : block.c)
        if (row.size() != ny)
            return "block row has " + std::to_string(row.size()) + " columns, expected " +
                   std::to_string(ny);
    for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t y = 0; y < ny; ++y)
            if (!(block.c[x][y] >= 0.0) || !std::isfinite(block.c[x][y]))
                return "C(" + std::to_string(x) + "," + std::to_string(y) +
                       ") is negative or not finite";
    for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t xp = 0; xp < nx; ++xp)
            for (std::size_t y = 0; y < ny; ++y) {
                const double r = X.distance(x, xp);
                if (std::abs(block.c[x][y] - block.c[xp][y]) > r + slack ||
                    r > block.c[x][y] + block.c[xp][y] + slack)
                    return "triangle violated on (x" + std::to_string(x) + ", x" +
                           std::to_string(xp) + ", y" + std::to_string(y) + ")";
            }
    for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t yp = 0; yp < ny; ++yp)
            for (std::size_t x = 0; x < nx; ++x) {
                const double d = Y.distance(y, yp);
                if (std::abs(block.c[x][y] - block.c[x][yp]) > d + slack ||
                    d > block.c[x][y] + block.c[x][yp] + slack)
                    return "triangle violated on (y" + std::to_string(y) + ", y" +
                           std::to_string(yp) + ", x" + std::to_string(x) + ")";
            }
    return std::nullopt;
}

namespace {

struct UnionContext {
    const M2MSpace& X;
    const M2MSpace& Y;
    TwoLevelMeasure nuU, lambdaU; // both reindexed into the union
    double tol;

    double objective(const CrossDistanceBlock& block) const {
        const std::size_t nx = X.space.size(), ny = Y.space.size();
        std::vector<std::vector<double>> d(nx + ny, std::vector<double>(nx + ny, 0.0));
        for (std::size_t i = 0; i < nx; ++i)
            for (std::size_t j = 0; j < nx; ++j) d[i][j] = X.space.distance(i, j);
        for (std::size_t i = 0; i < ny; ++i)
            for (std::size_t j = 0; j < ny; ++j) d[nx + i][nx + j] = Y.space.distance(i, j);
        for (std::size_t i = 0; i < nx; ++i)
            for (std::size_t j = 0; j < ny; ++j) d[i][nx + j] = d[nx + j][i] = block.c[i][j];
        const FiniteMetricSpace u = FiniteMetricSpace::unchecked(std::move(d));
        return two_level_prokhorov(u, nuU, lambdaU, tol);
    }
};

TwoLevelMeasure offset_measure(const TwoLevelMeasure& nu, std::size_t offset) {
    std::vector<WeightedAtom> atoms;
    for (const auto& a : nu.atoms()) {
        std::vector<std::pair<std::size_t, double>> e;
        for (const auto& [idx, w] : a.inner.entries()) e.emplace_back(idx + offset, w);
        atoms.push_back({a.weight, AtomicMeasure(std::move(e))});
    }
    return TwoLevelMeasure(std::move(atoms));
}

// Feasibility interval for a single entry given the rest of the block.
std::pair<double, double> entry_interval(const CrossDistanceBlock& block,
                                         const FiniteMetricSpace& X,
                                         const FiniteMetricSpace& Y, std::size_t x,
                                         std::size_t y) {
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (std::size_t xp = 0; xp < X.size(); ++xp) {
        if (xp == x) continue;
        const double r = X.distance(x, xp), c = block.c[xp][y];
        lo = std::max(lo, std::abs(r - c));
        hi = std::min(hi, r + c);
    }
    for (std::size_t yp = 0; yp < Y.size(); ++yp) {
        if (yp == y) continue;
        const double d = Y.distance(y, yp), c = block.c[x][yp];
        lo = std::max(lo, std::abs(d - c));
        hi = std::min(hi, d + c);
    }
    return {lo, hi};
}

// Repeated clamping of every entry into its feasibility interval. Returns
// true when the block validates afterwards.
bool project_block(CrossDistanceBlock& block, const FiniteMetricSpace& X,
                   const FiniteMetricSpace& Y) {
    for (int sweep = 0; sweep < 40; ++sweep) {
        bool moved = false;
        for (std::size_t x = 0; x < X.size(); ++x)
            for (std::size_t y = 0; y < Y.size(); ++y) {
                const auto [lo, hi] = entry_interval(block, X, Y, x, y);
                if (lo > hi) continue; // locally inconsistent; later sweeps may fix it
                const double v = std::clamp(block.c[x][y], lo, hi);
                if (v != block.c[x][y]) {
                    block.c[x][y] = v;
                    moved = true;
                }
            }
        if (!moved) break;
    }
    return !validate_cross_block(block, X, Y).has_value();
}

CrossDistanceBlock constant_block(const M2MSpace& X, const M2MSpace& Y) {
    const double c = std::max(X.space.diameter(), Y.space.diameter()) / 2.0;
    return CrossDistanceBlock{std::vector<std::vector<double>>(
        X.space.size(), std::vector<double>(Y.space.size(), c))};
}

// Shortest cross route through anchor pairs (x_k, y_k) at spread eta:
// C(x, y) = min_k [ r(x, x_k) + eta + d(y_k, y) ].
CrossDistanceBlock anchored_block(const M2MSpace& X, const M2MSpace& Y,
                                  const std::vector<std::pair<std::size_t, std::size_t>>& anchors,
                                  double eta) {
    CrossDistanceBlock block{std::vector<std::vector<double>>(
        X.space.size(),
        std::vector<double>(Y.space.size(), std::numeric_limits<double>::infinity()))};
    for (std::size_t x = 0; x < X.space.size(); ++x)
        for (std::size_t y = 0; y < Y.space.size(); ++y)
            for (const auto& [ax, ay] : anchors)
                block.c[x][y] = std::min(block.c[x][y],
                                         X.space.distance(x, ax) + eta + Y.space.distance(ay, y));
    return block;
}

// Greedy alignment of nu atoms to lambda atoms, point correspondences from
// the matched inner measures, randomized per start.
std::vector<std::pair<std::size_t, std::size_t>> greedy_anchors(const M2MSpace& X,
                                                                const M2MSpace& Y,
                                                                Rng& rng) {
    const auto& as = X.nu.atoms();
    const auto& bs = Y.nu.atoms();
    if (as.empty() || bs.empty()) return {};
    struct Pair {
        double score;
        std::size_t a, b;
    };
    std::vector<Pair> pairs;
    for (std::size_t a = 0; a < as.size(); ++a)
        for (std::size_t b = 0; b < bs.size(); ++b) {
            double score = std::abs(as[a].inner.mass() - bs[b].inner.mass()) +
                           std::abs(as[a].weight - bs[b].weight) +
                           0.1 * std::abs(static_cast<double>(as[a].inner.entries().size()) -
                                          static_cast<double>(bs[b].inner.entries().size()));
            score += 0.05 * rng.uniform();
            pairs.push_back({score, a, b});
        }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& p, const Pair& q) {
        if (p.score != q.score) return p.score < q.score;
        return std::tie(p.a, p.b) < std::tie(q.a, q.b);
    });
    std::vector<bool> used_a(as.size(), false), used_b(bs.size(), false);
    std::vector<std::pair<std::size_t, std::size_t>> anchors;
    for (const auto& p : pairs) {
        if (used_a[p.a] || used_b[p.b]) continue;
        used_a[p.a] = used_b[p.b] = true;
        // Match the support points of the two inner measures by weight rank.
        auto ea = as[p.a].inner.entries();
        auto eb = bs[p.b].inner.entries();
        auto by_weight = [](const auto& l, const auto& r) {
            if (l.second != r.second) return l.second > r.second;
            return l.first < r.first;
        };
        std::sort(ea.begin(), ea.end(), by_weight);
        std::sort(eb.begin(), eb.end(), by_weight);
        for (std::size_t t = 0; t < std::min(ea.size(), eb.size()); ++t)
            anchors.emplace_back(ea[t].first, eb[t].first);
    }
    std::sort(anchors.begin(), anchors.end());
    anchors.erase(std::unique(anchors.begin(), anchors.end()), anchors.end());
    return anchors;
}

} // namespace

namespace {

// Deterministic order on m2m spaces so that d2gp_bounds(x, y) and
// d2gp_bounds(y, x) run the identical computation.
bool m2m_less(const M2MSpace& a, const M2MSpace& b) {
    if (a.space.size() != b.space.size()) return a.space.size() < b.space.size();
    if (a.space.matrix() != b.space.matrix()) return a.space.matrix() < b.space.matrix();
    return two_level_less(a.nu, b.nu);
}

} // namespace

DistanceBound d2gp_bounds(const M2MSpace& xin, const M2MSpace& yin,
                          const D2gpOptions& opts) {
    if (!(opts.tol > 0.0))
        throw ValidationError(ErrorKind::PreconditionViolated, "tol must be > 0");
    const M2MSpace X = restrict_to_support(xin);
    const M2MSpace Y = restrict_to_support(yin);
    if (m2m_less(Y, X)) {
        DistanceBound swapped = d2gp_bounds(yin, xin, opts);
        if (swapped.witness) {
            CrossDistanceBlock t;
            t.c.assign(X.space.size(), std::vector<double>(Y.space.size(), 0.0));
            for (std::size_t i = 0; i < Y.space.size(); ++i)
                for (std::size_t j = 0; j < X.space.size(); ++j)
                    t.c[j][i] = swapped.witness->c[i][j];
            swapped.witness = std::move(t);
        }
        return swapped;
    }

    DistanceBound bound;
    const double mass_gap = std::abs(X.nu.mass() - Y.nu.mass());
    const double md_gap =
        prokhorov(mass_distribution(X.nu), mass_distribution(Y.nu), opts.tol);
    bound.lower = std::max(mass_gap, std::max(0.0, md_gap - opts.tol));

    const std::size_t nx = X.space.size(), ny = Y.space.size();
    if (nx == 0 && ny == 0) {
        // Both measures live on the null measure alone; the outer distance is
        // the outer-mass gap.
        bound.upper = mass_gap;
        bound.witness = CrossDistanceBlock{};
        return bound;
    }

    UnionContext ctx{X, Y, offset_measure(X.nu, 0), offset_measure(Y.nu, nx), opts.tol};

    double best_value = std::numeric_limits<double>::infinity();
    CrossDistanceBlock best_block;
    auto consider = [&](const CrossDistanceBlock& block) {
        if (validate_cross_block(block, X.space, Y.space)) return;
        const double v = ctx.objective(block);
        if (v < best_value) {
            best_value = v;
            best_block = block;
        }
    };

    consider(constant_block(X, Y));

    const EquivalenceResult eq = are_equivalent(X, Y, opts.tol);
    if (eq.equivalent) {
        std::vector<std::pair<std::size_t, std::size_t>> anchors;
        // Witness indices refer to the restricted spaces here because X and Y
        // are already restricted.
        for (const auto& [a, b] : eq.witness) anchors.emplace_back(a, b);
        if (!anchors.empty()) consider(anchored_block(X, Y, anchors, 0.0));
    }

    int starts = 0;
    const bool done = best_value <= bound.lower + opts.tol;
    if (!done) {
        for (int s = 0; s < opts.multistarts; ++s) {
            ++starts;
            Rng rng(derive_seed(opts.seed, static_cast<std::uint64_t>(s)));
            const auto anchors = greedy_anchors(X, Y, rng);
            if (anchors.empty()) continue;
            for (double eta : {0.0, opts.tol}) {
                CrossDistanceBlock block = anchored_block(X, Y, anchors, eta);
                if (project_block(block, X.space, Y.space)) consider(block);
            }
            if (best_value <= bound.lower + opts.tol) break;
        }
    }

    // Coordinate descent: move one entry at a time inside its feasibility
    // interval, probing the interval ends and an even grid.
    if (best_value > bound.lower + opts.tol && std::isfinite(best_value) && nx > 0 &&
        ny > 0) {
        for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
            bool improved = false;
            for (std::size_t x = 0; x < nx; ++x)
                for (std::size_t y = 0; y < ny; ++y) {
                    const auto [lo, hi] = entry_interval(best_block, X.space, Y.space, x, y);
                    if (!(lo <= hi) || !std::isfinite(lo)) continue;
                    const double cap = std::isfinite(hi)
                                           ? hi
                                           : std::max(lo, best_block.c[x][y]) + 1.0;
                    std::vector<double> probes{lo, cap};
                    for (int g = 1; g + 1 < opts.grid_points; ++g)
                        probes.push_back(lo + (cap - lo) * g /
                                         static_cast<double>(opts.grid_points - 1));
                    const double original = best_block.c[x][y];
                    double local_best = best_value;
                    double local_arg = original;
                    for (double v : probes) {
                        if (v == original) continue;
                        best_block.c[x][y] = v;
                        if (validate_cross_block(best_block, X.space, Y.space)) continue;
                        const double val = ctx.objective(best_block);
                        if (val < local_best - opts.tol / 10.0) {
                            local_best = val;
                            local_arg = v;
                        }
                    }
                    best_block.c[x][y] = local_arg;
                    if (local_best < best_value) {
                        best_value = local_best;
                        improved = true;
                    }
                }
            if (!improved || best_value <= bound.lower + opts.tol) break;
        }
    }

    bound.upper = best_value + opts.tol;
    bound.witness = best_block;
    bound.starts_used = starts;
    if (bound.lower > bound.upper)
        throw std::logic_error("d2gp_bounds produced lower > upper");
    return bound;
}

} // namespace m2m
