#include "m2m/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "m2m/rng.hpp"

namespace m2m {

AtomicMeasure normalize(const AtomicMeasure& mu) {
    if (mu.is_null()) return mu;
    std::vector<std::pair<std::size_t, double>> e = mu.entries();
    for (auto& [idx, w] : e) w /= mu.mass();
    return AtomicMeasure(std::move(e));
}

TwoLevelMeasure normalize(const TwoLevelMeasure& nu) {
    if (nu.is_null()) return nu;
    std::vector<WeightedAtom> atoms = nu.atoms();
    for (auto& a : atoms) a.weight /= nu.mass();
    return TwoLevelMeasure(std::move(atoms));
}

AtomicMeasure moment_measure(const TwoLevelMeasure& nu) {
    std::vector<std::pair<std::size_t, double>> e;
    for (const auto& atom : nu.atoms())
        for (const auto& [idx, w] : atom.inner.entries())
            e.emplace_back(idx, atom.weight * w);
    return AtomicMeasure(std::move(e));
}

std::vector<std::size_t> effective_support(const TwoLevelMeasure& nu) {
    return moment_measure(nu).support();
}

M2MSpace restrict_to_support(const M2MSpace& x) {
    const std::vector<std::size_t> supp = effective_support(x.nu);
    std::unordered_map<std::size_t, std::size_t> remap;
    std::vector<std::vector<double>> dist(supp.size(), std::vector<double>(supp.size()));
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < supp.size(); ++i) {
        remap[supp[i]] = i;
        labels.push_back(x.space.labels()[supp[i]]);
        for (std::size_t j = 0; j < supp.size(); ++j)
            dist[i][j] = x.space.distance(supp[i], supp[j]);
    }
    std::vector<WeightedAtom> atoms;
    for (const auto& atom : x.nu.atoms()) {
        std::vector<std::pair<std::size_t, double>> e;
        for (const auto& [idx, w] : atom.inner.entries()) e.emplace_back(remap.at(idx), w);
        atoms.push_back({atom.weight, AtomicMeasure(std::move(e))});
    }
    return M2MSpace{FiniteMetricSpace::unchecked(std::move(dist), std::move(labels)),
                    TwoLevelMeasure(std::move(atoms))};
}

AtomicMeasure pushforward(const PointMap& f, const AtomicMeasure& mu) {
    std::vector<std::pair<std::size_t, double>> e;
    for (const auto& [idx, w] : mu.entries()) {
        auto it = f.find(idx);
        if (it == f.end())
            throw ValidationError(ErrorKind::UnmappedPoint,
                                  "point " + std::to_string(idx) + " carries weight but has no image");
        e.emplace_back(it->second, w);
    }
    return AtomicMeasure(std::move(e));
}

TwoLevelMeasure two_level_pushforward(const PointMap& f, const TwoLevelMeasure& nu) {
    std::vector<WeightedAtom> atoms;
    for (const auto& atom : nu.atoms())
        atoms.push_back({atom.weight, pushforward(f, atom.inner)});
    return TwoLevelMeasure(std::move(atoms));
}

namespace {

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// Tolerance comparison of canonically sorted atom lists, index-wise.
bool atoms_match(const TwoLevelMeasure& a, const TwoLevelMeasure& b, double tol) {
    if (a.atoms().size() != b.atoms().size()) return false;
    for (std::size_t k = 0; k < a.atoms().size(); ++k) {
        const WeightedAtom& p = a.atoms()[k];
        const WeightedAtom& q = b.atoms()[k];
        if (!close(p.weight, q.weight, tol)) return false;
        if (p.inner.entries().size() != q.inner.entries().size()) return false;
        for (std::size_t t = 0; t < p.inner.entries().size(); ++t) {
            if (p.inner.entries()[t].first != q.inner.entries()[t].first) return false;
            if (!close(p.inner.entries()[t].second, q.inner.entries()[t].second, tol))
                return false;
        }
    }
    return true;
}

struct IsometrySearch {
    const FiniteMetricSpace& X;
    const FiniteMetricSpace& Y;
    std::size_t n;
    std::vector<std::size_t> order;     // x indices in assignment order
    std::vector<std::size_t> image;     // image[pos in order] = y index
    std::vector<bool> used;
    std::vector<std::vector<std::size_t>> candidates; // per order position
};

} // namespace

EquivalenceResult are_equivalent(const M2MSpace& xin, const M2MSpace& yin, double tol) {
    const M2MSpace X = restrict_to_support(xin);
    const M2MSpace Y = restrict_to_support(yin);
    const std::size_t n = X.space.size();
    EquivalenceResult res;
    if (n != Y.space.size()) return res;
    if (!close(X.nu.mass(), Y.nu.mass(), tol)) return res;
    if (X.nu.atoms().size() != Y.nu.atoms().size()) return res;

    const AtomicMeasure mmx_m = moment_measure(X.nu);
    const AtomicMeasure mmy_m = moment_measure(Y.nu);
    std::vector<double> mmx(n, 0.0), mmy(n, 0.0);
    for (const auto& [idx, w] : mmx_m.entries()) mmx[idx] = w;
    for (const auto& [idx, w] : mmy_m.entries()) mmy[idx] = w;

    {
        // Moment weights must agree as multisets.
        std::vector<double> a = mmx, b = mmy;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        for (std::size_t i = 0; i < n; ++i)
            if (!close(a[i], b[i], tol)) return res;
    }

    if (n == 0) {
        // Both spaces are empty; nu and lambda are concentrated on the null
        // measure and are compared by their outer weights alone.
        res.equivalent = atoms_match(X.nu, Y.nu, tol);
        return res;
    }

    // Distance profile per point: sorted row of distances. Used for candidate
    // pruning and for the deterministic search order.
    auto profile = [](const FiniteMetricSpace& s, std::size_t i) {
        std::vector<double> row;
        for (std::size_t j = 0; j < s.size(); ++j)
            if (j != i) row.push_back(s.distance(i, j));
        std::sort(row.begin(), row.end());
        return row;
    };
    std::vector<std::vector<double>> profx(n), profy(n);
    for (std::size_t i = 0; i < n; ++i) {
        profx[i] = profile(X.space, i);
        profy[i] = profile(Y.space, i);
    }

    IsometrySearch search{X.space, Y.space, n, {}, {}, {}, {}};
    search.order.resize(n);
    for (std::size_t i = 0; i < n; ++i) search.order[i] = i;
    std::sort(search.order.begin(), search.order.end(), [&](std::size_t a, std::size_t b) {
        if (mmx[a] != mmx[b]) return mmx[a] > mmx[b];
        return a < b;
    });
    search.image.resize(n);
    search.used.assign(n, false);
    search.candidates.resize(n);
    for (std::size_t pos = 0; pos < n; ++pos) {
        const std::size_t x = search.order[pos];
        std::vector<std::size_t> cand;
        for (std::size_t y = 0; y < n; ++y) {
            if (!close(mmx[x], mmy[y], tol)) continue;
            bool ok = true;
            for (std::size_t t = 0; t < n - 1 && ok; ++t)
                ok = close(profx[x][t], profy[y][t], tol);
            if (ok) cand.push_back(y);
        }
        if (cand.empty()) return res;
        std::sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
            if (mmy[a] != mmy[b]) return mmy[a] > mmy[b];
            if (profy[a] != profy[b]) return profy[a] < profy[b];
            return a < b;
        });
        search.candidates[pos] = std::move(cand);
    }

    // Backtrack over isometric bijections; accept the first one that also
    // carries the atom multiset of nu onto lambda.
    struct Verifier {
        IsometrySearch& s;
        const M2MSpace& X;
        const M2MSpace& Y;
        double tol;
        bool run(std::size_t pos) {
            if (pos == s.n) {
                PointMap f;
                for (std::size_t p = 0; p < s.n; ++p) f[s.order[p]] = s.image[p];
                return atoms_match(two_level_pushforward(f, X.nu), Y.nu, tol);
            }
            const std::size_t x = s.order[pos];
            for (std::size_t y : s.candidates[pos]) {
                if (s.used[y]) continue;
                bool ok = true;
                for (std::size_t p = 0; p < pos && ok; ++p)
                    ok = close(s.X.distance(x, s.order[p]), s.Y.distance(y, s.image[p]), tol);
                if (!ok) continue;
                s.used[y] = true;
                s.image[pos] = y;
                if (run(pos + 1)) return true;
                s.used[y] = false;
            }
            return false;
        }
    } verifier{search, X, Y, tol};

    if (!verifier.run(0)) return res;

    res.equivalent = true;
    const std::vector<std::size_t> suppx = effective_support(xin.nu);
    const std::vector<std::size_t> suppy = effective_support(yin.nu);
    for (std::size_t p = 0; p < n; ++p)
        res.witness.emplace_back(suppx[search.order[p]], suppy[search.image[p]]);
    std::sort(res.witness.begin(), res.witness.end());
    return res;
}

M2MSpace random_m2m(int n_points, int max_atoms, int max_inner, double mass_scale,
                    std::uint64_t seed) {
    if (n_points < 1 || max_atoms < 1 || max_inner < 1)
        throw ValidationError(ErrorKind::PreconditionViolated,
                              "random_m2m requires positive size parameters");
    Rng rng(seed);
    const std::size_t n = static_cast<std::size_t>(n_points);

    // Random positive edge lengths with small dyadic denominators, then
    // shortest-path closure; the closure satisfies the triangle inequality by
    // construction and keeps the entries exactly representable.
    std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            d[i][j] = d[j][i] = static_cast<double>(1 + rng.below(24)) / 8.0;
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);

    const int n_atoms = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_atoms)));
    std::vector<WeightedAtom> atoms;
    for (int a = 0; a < n_atoms; ++a) {
        const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(
                              std::min(max_inner, n_points))));
        std::vector<std::size_t> pts(n);
        for (std::size_t i = 0; i < n; ++i) pts[i] = i;
        for (int t = 0; t < k; ++t)
            std::swap(pts[t], pts[t + rng.below(n - static_cast<std::size_t>(t))]);
        std::vector<std::pair<std::size_t, double>> e;
        for (int t = 0; t < k; ++t)
            e.emplace_back(pts[t], mass_scale * static_cast<double>(1 + rng.below(16)) / 8.0);
        atoms.push_back({static_cast<double>(1 + rng.below(16)) / 8.0,
                         AtomicMeasure(std::move(e))});
    }
    return M2MSpace::checked(FiniteMetricSpace::unchecked(std::move(d)),
                             TwoLevelMeasure(std::move(atoms)));
}

} // namespace m2m
