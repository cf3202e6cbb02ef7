#include "m2m/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "m2m/core.hpp"
#include "m2m/rng.hpp"

namespace m2m {

double PhiSpec::operator()(const std::vector<std::vector<double>>& R) const {
    const std::size_t n = R.size();
    switch (family) {
        case Family::ClipEntry:
            return std::min(R[i][j], C);
        case Family::ClipSum: {
            double s = 0.0;
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = a + 1; b < n; ++b) s += R[a][b];
            return std::min(s, C);
        }
        case Family::ExpSum: {
            double s = 0.0;
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = a + 1; b < n; ++b) s += R[a][b];
            return std::exp(-lambda * s);
        }
        case Family::MinEntryClip: {
            if (n < 2) return 0.0;
            double mn = R[0][1];
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = a + 1; b < n; ++b) mn = std::min(mn, R[a][b]);
            return std::min(mn, C);
        }
    }
    return 0.0;
}

void TestFunctionalSpec::validate() const {
    if (m < 1) throw ValidationError(ErrorKind::InvalidSpec, "m must be >= 1");
    if (!(chi.C > 0.0))
        throw ValidationError(ErrorKind::InvalidSpec, "chi clip bound C must be > 0");
    if (kind == Kind::TF1) return;
    if (!(psi.C > 0.0))
        throw ValidationError(ErrorKind::InvalidSpec, "psi clip bound C must be > 0");
    if (kind == Kind::TF2) return;
    if (n.size() != static_cast<std::size_t>(m))
        throw ValidationError(ErrorKind::InvalidSpec, "n must have length m");
    for (int ni : n)
        if (ni < 1) throw ValidationError(ErrorKind::InvalidSpec, "n entries must be >= 1");
    const std::size_t total = total_points();
    if (phi.family == PhiSpec::Family::ClipEntry) {
        if (phi.i >= total || phi.j >= total)
            throw ValidationError(ErrorKind::InvalidSpec,
                                  "phi entry index outside the sampled matrix");
        if (!(phi.C > 0.0))
            throw ValidationError(ErrorKind::InvalidSpec, "phi clip bound C must be > 0");
    }
    if ((phi.family == PhiSpec::Family::ClipSum ||
         phi.family == PhiSpec::Family::MinEntryClip) &&
        !(phi.C > 0.0))
        throw ValidationError(ErrorKind::InvalidSpec, "phi clip bound C must be > 0");
    if (phi.family == PhiSpec::Family::ExpSum && !(phi.lambda > 0.0))
        throw ValidationError(ErrorKind::InvalidSpec, "phi decay lambda must be > 0");
}

std::size_t TestFunctionalSpec::total_points() const {
    std::size_t t = 0;
    for (int ni : n) t += static_cast<std::size_t>(ni);
    return t;
}

RealDistribution::RealDistribution(std::vector<std::pair<double, double>> a) {
    std::map<double, double> acc;
    for (const auto& [v, w] : a) {
        if (!(w >= 0.0))
            throw ValidationError(ErrorKind::NegativeEntry, "distribution weight < 0");
        if (w > 0.0) acc[v] += w;
    }
    atoms.assign(acc.begin(), acc.end());
}

double RealDistribution::total_weight() const {
    double s = 0.0;
    for (const auto& [v, w] : atoms) s += w;
    return s;
}

double RealDistribution::max_value() const {
    return atoms.empty() ? 0.0 : atoms.back().first;
}

double RealDistribution::mean() const {
    const double tw = total_weight();
    if (tw == 0.0) return 0.0;
    double s = 0.0;
    for (const auto& [v, w] : atoms) s += v * w;
    return s / tw;
}

std::vector<std::vector<double>> distance_matrix(const FiniteMetricSpace& space,
                                                 const std::vector<std::size_t>& pts) {
    for (std::size_t p : pts)
        if (p >= space.size())
            throw ValidationError(ErrorKind::IndexOutOfRange,
                                  "point index " + std::to_string(p) + " out of range");
    std::vector<std::vector<double>> R(pts.size(), std::vector<double>(pts.size(), 0.0));
    for (std::size_t a = 0; a < pts.size(); ++a)
        for (std::size_t b = 0; b < pts.size(); ++b) R[a][b] = space.distance(pts[a], pts[b]);
    return R;
}

namespace {

double chi_eval(const ChiSpec& chi, double x) { return std::min(x, chi.C); }

double psi_eval(const PsiSpec& psi, const std::vector<double>& a) {
    double v = 1.0;
    for (double ai : a) v *= std::min(ai, psi.C);
    // rescale to stay bounded by C independently of m
    for (std::size_t k = 1; k < a.size(); ++k) v /= psi.C;
    return v;
}

constexpr std::uint64_t kTupleBudget = 10'000'000;

// Shared enumeration core for TF2/TF3/TF4. Walks all ordered atom tuples
// (with replacement); for TF3/TF4 additionally walks all ordered point tuples
// of the selected atoms.
struct ExactEvaluator {
    const TestFunctionalSpec& spec;
    const M2MSpace& x;
    bool outer_normalized; // TF2/TF3 use the normalized outer measure

    double run() const {
        const auto& atoms = x.nu.atoms();
        if (atoms.empty()) return 0.0;
        check_budget();
        std::vector<std::size_t> atom_idx(spec.m);
        return sum_atoms(0, 1.0, atom_idx);
    }

    void check_budget() const {
        const auto& atoms = x.nu.atoms();
        double tuples = 1.0;
        for (int i = 0; i < spec.m; ++i) tuples *= static_cast<double>(atoms.size());
        if (spec.kind == TestFunctionalSpec::Kind::TF3 ||
            spec.kind == TestFunctionalSpec::Kind::TF4) {
            std::size_t max_support = 0;
            for (const auto& a : atoms)
                max_support = std::max(max_support, a.inner.entries().size());
            for (int ni : spec.n)
                for (int t = 0; t < ni; ++t) tuples *= static_cast<double>(max_support);
        }
        if (tuples > static_cast<double>(kTupleBudget))
            throw BudgetError("exact evaluation needs " + std::to_string(tuples) +
                              " tuples, budget is " + std::to_string(kTupleBudget));
    }

    double sum_atoms(int level, double wprod, std::vector<std::size_t>& atom_idx) const {
        const auto& atoms = x.nu.atoms();
        if (level == spec.m) return wprod * integrand(atom_idx);
        double total = 0.0;
        const double denom = outer_normalized ? x.nu.mass() : 1.0;
        for (std::size_t k = 0; k < atoms.size(); ++k) {
            atom_idx[level] = k;
            total += sum_atoms(level + 1, wprod * atoms[k].weight / denom, atom_idx);
        }
        return total;
    }

    double integrand(const std::vector<std::size_t>& atom_idx) const {
        const auto& atoms = x.nu.atoms();
        std::vector<double> masses(spec.m);
        for (int i = 0; i < spec.m; ++i) masses[i] = atoms[atom_idx[i]].inner.mass();
        const double psi_v = psi_eval(spec.psi, masses);
        if (psi_v == 0.0) return 0.0; // covers null inner atoms: psi(..,0,..) = 0
        if (spec.kind == TestFunctionalSpec::Kind::TF2) return psi_v;
        std::vector<std::size_t> pts(spec.total_points());
        return psi_v * sum_points(0, 0, 0, 1.0, atom_idx, pts);
    }

    // Enumerates ordered point tuples; slot runs over the flattened n vector.
    double sum_points(int group, int within, std::size_t slot, double wprod,
                      const std::vector<std::size_t>& atom_idx,
                      std::vector<std::size_t>& pts) const {
        if (group == spec.m) {
            auto R = distance_matrix(x.space, pts);
            return wprod * spec.phi(R);
        }
        const AtomicMeasure& mu = x.nu.atoms()[atom_idx[group]].inner;
        const int next_within = within + 1 == spec.n[group] ? 0 : within + 1;
        const int next_group = within + 1 == spec.n[group] ? group + 1 : group;
        double total = 0.0;
        for (const auto& [p, w] : mu.entries()) {
            pts[slot] = p;
            total += sum_points(next_group, next_within, slot + 1, wprod * w / mu.mass(),
                                atom_idx, pts);
        }
        return total;
    }
};

} // namespace

EvalResult eval_tf_exact(const TestFunctionalSpec& spec, const M2MSpace& x) {
    spec.validate();
    const double nu_mass = x.nu.mass();
    switch (spec.kind) {
        case TestFunctionalSpec::Kind::TF1:
            return {chi_eval(spec.chi, nu_mass), 0.0, 0};
        case TestFunctionalSpec::Kind::TF2:
        case TestFunctionalSpec::Kind::TF3: {
            if (x.nu.is_null()) return {0.0, 0.0, 0};
            ExactEvaluator ev{spec, x, true};
            return {chi_eval(spec.chi, nu_mass) * ev.run(), 0.0, 0};
        }
        case TestFunctionalSpec::Kind::TF4: {
            ExactEvaluator ev{spec, x, false};
            return {ev.run(), 0.0, 0};
        }
    }
    return {};
}

EvalResult eval_tf_monte_carlo(const TestFunctionalSpec& spec, const M2MSpace& x,
                               std::uint64_t samples, std::uint64_t seed) {
    spec.validate();
    if (samples < 2)
        throw ValidationError(ErrorKind::PreconditionViolated,
                              "monte_carlo needs at least 2 samples");
    const double nu_mass = x.nu.mass();
    if (spec.kind == TestFunctionalSpec::Kind::TF1)
        return {chi_eval(spec.chi, nu_mass), 0.0, samples};
    if (x.nu.is_null()) return {0.0, 0.0, samples};

    const auto& atoms = x.nu.atoms();
    std::vector<double> outer_cum;
    double acc = 0.0;
    for (const auto& a : atoms) outer_cum.push_back(acc += a.weight);

    // TF2/TF3 integrate against the normalized outer measure; TF4 against the
    // unnormalized one, handled by the mass^m importance factor.
    double scale = 1.0;
    if (spec.kind == TestFunctionalSpec::Kind::TF4)
        for (int i = 0; i < spec.m; ++i) scale *= nu_mass;
    else
        scale = chi_eval(spec.chi, nu_mass);

    Rng rng(seed);
    auto draw_index = [&rng](const std::vector<double>& cum) {
        const double u = rng.uniform() * cum.back();
        return static_cast<std::size_t>(
            std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    };

    const bool needs_points = spec.kind != TestFunctionalSpec::Kind::TF2;
    double sum = 0.0, sumsq = 0.0;
    std::vector<double> masses(spec.m);
    std::vector<std::size_t> pts(needs_points ? spec.total_points() : 0);
    std::vector<std::size_t> atom_idx(spec.m);
    for (std::uint64_t s = 0; s < samples; ++s) {
        for (int i = 0; i < spec.m; ++i) {
            atom_idx[i] = draw_index(outer_cum);
            masses[i] = atoms[atom_idx[i]].inner.mass();
        }
        double v = psi_eval(spec.psi, masses);
        if (v != 0.0 && needs_points) {
            std::size_t slot = 0;
            for (int i = 0; i < spec.m; ++i) {
                const AtomicMeasure& mu = atoms[atom_idx[i]].inner;
                std::vector<double> cum;
                double a = 0.0;
                for (const auto& [p, w] : mu.entries()) cum.push_back(a += w);
                for (int t = 0; t < spec.n[i]; ++t) {
                    const std::size_t e = draw_index(cum);
                    pts[slot++] = mu.entries()[e].first;
                }
            }
            auto R = distance_matrix(x.space, pts);
            v *= spec.phi(R);
        }
        v *= scale;
        sum += v;
        sumsq += v * v;
    }
    const double mean = sum / static_cast<double>(samples);
    const double var =
        std::max(0.0, sumsq / static_cast<double>(samples) - mean * mean);
    const double se = std::sqrt(var / static_cast<double>(samples - 1));
    return {mean, se, samples};
}

RealDistribution mass_distribution(const TwoLevelMeasure& nu) {
    std::vector<std::pair<double, double>> a;
    for (const auto& atom : nu.atoms()) a.emplace_back(atom.inner.mass(), atom.weight);
    return RealDistribution(std::move(a));
}

RealDistribution distance_distribution(const FiniteMetricSpace& space,
                                       const AtomicMeasure& mu) {
    std::vector<std::pair<double, double>> a;
    for (const auto& [p, wp] : mu.entries())
        for (const auto& [q, wq] : mu.entries())
            a.emplace_back(space.distance(p, q), wp * wq);
    return RealDistribution(std::move(a));
}

double thin_point_mass(const FiniteMetricSpace& space, const AtomicMeasure& mu,
                       double eps, double delta) {
    double thin = 0.0;
    for (const auto& [p, wp] : mu.entries()) {
        double ball = 0.0;
        for (const auto& [q, wq] : mu.entries())
            if (space.distance(p, q) < eps) ball += wq;
        if (ball <= delta) thin += wp;
    }
    return thin;
}

double modulus_mass_distribution(const FiniteMetricSpace& space, const AtomicMeasure& mu,
                                 double delta) {
    if (delta < 0.0)
        throw ValidationError(ErrorKind::PreconditionViolated, "delta must be >= 0");
    if (mu.is_null()) return 0.0;

    // Breakpoints of eps -> mu(B(x,eps)): the pairwise support distances.
    // On (d_t, d_{t+1}] the thin-point mass g is constant, so the infimum of
    // {eps in the interval | g <= eps} is max(d_t, g) when that value fits.
    const auto& entries = mu.entries();
    std::vector<double> breaks{0.0};
    for (const auto& [p, wp] : entries)
        for (const auto& [q, wq] : entries)
            if (p < q) breaks.push_back(space.distance(p, q));
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < breaks.size(); ++t) {
        const double left = breaks[t];
        const double right =
            t + 1 < breaks.size() ? breaks[t + 1] : std::numeric_limits<double>::infinity();
        // g on this interval: open balls of radius eps in (left, right] hold
        // exactly the points at distance <= left.
        double g = 0.0;
        for (const auto& [p, wp] : entries) {
            double ball = 0.0;
            for (const auto& [q, wq] : entries)
                if (space.distance(p, q) <= left) ball += wq;
            if (ball <= delta) g += wp;
        }
        const double candidate = std::max(left, g);
        if (candidate <= right) best = std::min(best, candidate);
    }
    return best;
}

std::vector<std::size_t> thin_point_cover(const FiniteMetricSpace& space,
                                          const AtomicMeasure& mu, double eps,
                                          double delta) {
    // Heavy points: complement of the delta-thin set at radius eps.
    std::vector<std::size_t> heavy;
    std::vector<double> ball_mass;
    for (const auto& [p, wp] : mu.entries()) {
        double ball = 0.0;
        for (const auto& [q, wq] : mu.entries())
            if (space.distance(p, q) < eps) ball += wq;
        if (ball > delta) {
            heavy.push_back(p);
            ball_mass.push_back(ball);
        }
    }
    if (heavy.empty()) return {};

    // Maximal eps-separated subset, greedily picking the heaviest ball first.
    std::vector<std::size_t> order(heavy.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (ball_mass[a] != ball_mass[b]) return ball_mass[a] > ball_mass[b];
        return heavy[a] < heavy[b];
    });
    auto separated = [&]() {
        std::vector<std::size_t> a;
        for (std::size_t i : order) {
            bool ok = true;
            for (std::size_t c : a)
                if (space.distance(heavy[i], c) < eps) { ok = false; break; }
            if (ok) a.push_back(heavy[i]);
        }
        return a;
    }();

    // Alternative cover: greedily take the center whose eps-ball covers the
    // most uncovered heavy mass. Usually smaller when the separated set is
    // forced to overshoot; keep whichever is smaller.
    auto coverage = [&]() {
        std::vector<bool> covered(heavy.size(), false);
        std::vector<std::size_t> a;
        std::size_t left = heavy.size();
        while (left > 0) {
            std::size_t best_center = heavy[0];
            double best_gain = -1.0;
            for (const auto& [c, wc] : mu.entries()) {
                double gain = 0.0;
                for (std::size_t i = 0; i < heavy.size(); ++i)
                    if (!covered[i] && space.distance(c, heavy[i]) < eps)
                        gain += mu.weight(heavy[i]);
                if (gain > best_gain) {
                    best_gain = gain;
                    best_center = c;
                }
            }
            a.push_back(best_center);
            for (std::size_t i = 0; i < heavy.size(); ++i)
                if (!covered[i] && space.distance(best_center, heavy[i]) < eps) {
                    covered[i] = true;
                    --left;
                }
        }
        return a;
    }();

    return coverage.size() < separated.size() ? coverage : separated;
}

double g_K(double x, double K) {
    if (x <= K / 2.0) return 1.0;
    if (x <= K) return 2.0 - 2.0 * x / K;
    return 0.0;
}

TwoLevelMeasure apply_fK(const TwoLevelMeasure& nu, double K) {
    if (!(K > 0.0))
        throw ValidationError(ErrorKind::PreconditionViolated, "K must be > 0");
    std::vector<WeightedAtom> atoms;
    for (const auto& a : nu.atoms()) {
        const double w = a.weight * g_K(a.inner.mass(), K);
        if (w > 0.0) atoms.push_back({w, a.inner});
    }
    return TwoLevelMeasure(std::move(atoms));
}

TwoLevelSample sample_two_level(const TwoLevelMeasure& nu, int m, int n,
                                std::uint64_t seed) {
    if (std::abs(nu.mass() - 1.0) > 1e-9)
        throw ValidationError(ErrorKind::PreconditionViolated,
                              "nu must be a probability measure");
    for (const auto& a : nu.atoms())
        if (a.inner.is_null())
            throw ValidationError(ErrorKind::PreconditionViolated,
                                  "nu must not charge the null measure");
    if (m < 1 || n < 1)
        throw ValidationError(ErrorKind::PreconditionViolated, "m, n must be >= 1");

    std::vector<double> outer_cum;
    double acc = 0.0;
    for (const auto& a : nu.atoms()) outer_cum.push_back(acc += a.weight);

    Rng rng(seed);
    TwoLevelSample out;
    out.masses.resize(m);
    out.points.assign(m, std::vector<std::size_t>(n));
    for (int i = 0; i < m; ++i) {
        const double u = rng.uniform() * outer_cum.back();
        const std::size_t k = static_cast<std::size_t>(
            std::lower_bound(outer_cum.begin(), outer_cum.end(), u) - outer_cum.begin());
        const AtomicMeasure& mu = nu.atoms()[k].inner;
        out.masses[i] = mu.mass();
        std::vector<double> cum;
        double a = 0.0;
        for (const auto& [p, w] : mu.entries()) cum.push_back(a += w);
        for (int j = 0; j < n; ++j) {
            const double v = rng.uniform() * cum.back();
            const std::size_t e = static_cast<std::size_t>(
                std::lower_bound(cum.begin(), cum.end(), v) - cum.begin());
            out.points[i][j] = mu.entries()[e].first;
        }
    }
    return out;
}

TwoLevelMeasure reconstruct_two_level(const TwoLevelSample& sample) {
    if (sample.masses.size() != sample.points.size())
        throw ValidationError(ErrorKind::PreconditionViolated,
                              "masses and points row counts differ");
    const std::size_t m = sample.masses.size();
    std::vector<WeightedAtom> atoms;
    for (std::size_t i = 0; i < m; ++i) {
        const auto& row = sample.points[i];
        if (row.empty())
            throw ValidationError(ErrorKind::PreconditionViolated, "empty sample row");
        std::map<std::size_t, std::size_t> counts;
        for (std::size_t p : row) ++counts[p];
        std::vector<std::pair<std::size_t, double>> e;
        for (const auto& [p, c] : counts)
            e.emplace_back(p, sample.masses[i] * static_cast<double>(c) /
                                  static_cast<double>(row.size()));
        atoms.push_back({1.0 / static_cast<double>(m), AtomicMeasure(std::move(e))});
    }
    return TwoLevelMeasure(std::move(atoms));
}

namespace {
DistributionSummary summarize(const RealDistribution& d) {
    return {d.total_weight(), d.mean(), d.max_value()};
}
} // namespace

std::vector<CompactnessRow> compactness_profile(const M2MSpace& x,
                                                const std::vector<double>& K_grid,
                                                const std::vector<double>& delta_grid) {
    if (K_grid.empty() || delta_grid.empty())
        throw ValidationError(ErrorKind::PreconditionViolated, "grids must be nonempty");
    for (double K : K_grid)
        if (!(K > 0.0))
            throw ValidationError(ErrorKind::PreconditionViolated, "K grid must be positive");
    for (double d : delta_grid)
        if (!(d > 0.0))
            throw ValidationError(ErrorKind::PreconditionViolated,
                                  "delta grid must be positive");
    std::vector<CompactnessRow> rows;
    for (double K : K_grid) {
        const TwoLevelMeasure nuK = apply_fK(x.nu, K);
        const AtomicMeasure mm = moment_measure(nuK);
        const DistributionSummary dd = summarize(distance_distribution(x.space, mm));
        const DistributionSummary md = summarize(mass_distribution(nuK));
        for (double delta : delta_grid) {
            CompactnessRow row;
            row.K = K;
            row.delta = delta;
            row.V_delta = modulus_mass_distribution(x.space, mm, delta);
            row.dd = dd;
            row.mass_dist = md;
            rows.push_back(row);
        }
    }
    return rows;
}

std::vector<TestFunctionalSpec> standard_spec_library() {
    using K = TestFunctionalSpec::Kind;
    using F = PhiSpec::Family;
    auto tf = [](K kind, int m, std::vector<int> n, double chiC, double psiC, PhiSpec phi) {
        TestFunctionalSpec s;
        s.kind = kind;
        s.m = m;
        s.n = std::move(n);
        s.chi.C = chiC;
        s.psi.C = psiC;
        s.phi = phi;
        return s;
    };
    return {
        tf(K::TF1, 1, {}, 10.0, 1.0, {}),
        tf(K::TF1, 1, {}, 0.5, 1.0, {}),
        tf(K::TF2, 1, {}, 10.0, 10.0, {}),
        tf(K::TF2, 2, {}, 10.0, 2.0, {}),
        tf(K::TF3, 1, {2}, 10.0, 10.0, {F::ClipEntry, 0, 1, 10.0, 1.0}),
        tf(K::TF3, 1, {2}, 10.0, 10.0, {F::ExpSum, 0, 1, 1.0, 1.0}),
        tf(K::TF3, 1, {3}, 10.0, 10.0, {F::ClipSum, 0, 1, 10.0, 1.0}),
        tf(K::TF3, 2, {1, 1}, 10.0, 10.0, {F::ClipEntry, 0, 1, 10.0, 1.0}),
        tf(K::TF3, 2, {2, 1}, 10.0, 5.0, {F::MinEntryClip, 0, 1, 5.0, 1.0}),
        tf(K::TF3, 1, {2}, 10.0, 10.0, {F::ClipEntry, 0, 1, 0.75, 1.0}),
        tf(K::TF4, 1, {2}, 10.0, 10.0, {F::ClipEntry, 0, 1, 10.0, 1.0}),
        tf(K::TF4, 2, {1, 1}, 10.0, 10.0, {F::ExpSum, 0, 1, 1.0, 0.5}),
    };
}

bool is_in_A_N(const M2MSpace& x, int N) {
    if (N < 1) throw ValidationError(ErrorKind::PreconditionViolated, "N must be >= 1");
    const auto supp = effective_support(x.nu);
    if (supp.size() > static_cast<std::size_t>(N)) return false;
    for (std::size_t a : supp)
        for (std::size_t b : supp)
            if (x.space.distance(a, b) > static_cast<double>(N)) return false;
    if (x.nu.mass() > static_cast<double>(N)) return false;
    for (const auto& atom : x.nu.atoms())
        if (atom.inner.mass() > static_cast<double>(N)) return false;
    return true;
}

} // namespace m2m
