#include "m2m/types.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace m2m {

const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NonZeroDiagonal: return "NonZeroDiagonal";
        case ErrorKind::Asymmetric: return "Asymmetric";
        case ErrorKind::NegativeEntry: return "NegativeEntry";
        case ErrorKind::TriangleViolation: return "TriangleViolation";
        case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorKind::UnmappedPoint: return "UnmappedPoint";
        case ErrorKind::InvalidSpec: return "InvalidSpec";
        case ErrorKind::PreconditionViolated: return "PreconditionViolated";
        case ErrorKind::UnknownLeaf: return "UnknownLeaf";
        case ErrorKind::UnknownSpecies: return "UnknownSpecies";
        case ErrorKind::DegenerateParams: return "DegenerateParams";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::SimulationError: return "SimulationError";
    }
    return "UnknownError";
}

static std::vector<std::string> default_labels(std::size_t n,
                                               std::vector<std::string> labels) {
    if (labels.empty()) {
        labels.reserve(n);
        for (std::size_t i = 0; i < n; ++i) labels.push_back("p" + std::to_string(i));
    }
    if (labels.size() != n)
        throw ValidationError(ErrorKind::ParseError,
                              "label count does not match matrix size");
    return labels;
}

FiniteMetricSpace FiniteMetricSpace::validated(std::vector<std::vector<double>> distance,
                                               std::vector<std::string> labels,
                                               double triangle_tol) {
    const std::size_t n = distance.size();
    for (const auto& row : distance)
        if (row.size() != n)
            throw ValidationError(ErrorKind::ParseError, "distance matrix is not square");
    for (std::size_t i = 0; i < n; ++i) {
        if (distance[i][i] != 0.0)
            throw ValidationError(ErrorKind::NonZeroDiagonal,
                                  "distance(" + std::to_string(i) + "," + std::to_string(i) +
                                      ") = " + std::to_string(distance[i][i]));
        for (std::size_t j = 0; j < n; ++j) {
            if (!(distance[i][j] >= 0.0) || !std::isfinite(distance[i][j]))
                throw ValidationError(ErrorKind::NegativeEntry,
                                      "distance(" + std::to_string(i) + "," +
                                          std::to_string(j) + ") is negative or not finite");
            if (distance[i][j] != distance[j][i])
                throw ValidationError(ErrorKind::Asymmetric,
                                      "distance(" + std::to_string(i) + "," +
                                          std::to_string(j) + ") != distance(" +
                                          std::to_string(j) + "," + std::to_string(i) + ")");
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k)
                if (distance[i][k] > distance[i][j] + distance[j][k] + triangle_tol)
                    throw ValidationError(
                        ErrorKind::TriangleViolation,
                        "d(" + std::to_string(i) + "," + std::to_string(k) + ") > d(" +
                            std::to_string(i) + "," + std::to_string(j) + ") + d(" +
                            std::to_string(j) + "," + std::to_string(k) + ")");
    FiniteMetricSpace s;
    s.labels_ = default_labels(n, std::move(labels));
    s.dist_ = std::move(distance);
    return s;
}

FiniteMetricSpace FiniteMetricSpace::unchecked(std::vector<std::vector<double>> distance,
                                               std::vector<std::string> labels) {
    FiniteMetricSpace s;
    s.labels_ = default_labels(distance.size(), std::move(labels));
    s.dist_ = std::move(distance);
    return s;
}

double FiniteMetricSpace::diameter() const {
    double d = 0.0;
    for (std::size_t i = 0; i < size(); ++i)
        for (std::size_t j = i + 1; j < size(); ++j) d = std::max(d, dist_[i][j]);
    return d;
}

AtomicMeasure::AtomicMeasure(std::vector<std::pair<std::size_t, double>> entries) {
    std::map<std::size_t, double> acc;
    for (const auto& [idx, w] : entries) {
        if (!(w >= 0.0) || !std::isfinite(w))
            throw ValidationError(ErrorKind::NegativeEntry,
                                  "weight at point " + std::to_string(idx) +
                                      " is negative or not finite");
        if (w > 0.0) acc[idx] += w;
    }
    entries_.assign(acc.begin(), acc.end());
    for (const auto& [idx, w] : entries_) mass_ += w;
}

double AtomicMeasure::weight(std::size_t point) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), point,
                               [](const auto& e, std::size_t p) { return e.first < p; });
    return (it != entries_.end() && it->first == point) ? it->second : 0.0;
}

std::vector<std::size_t> AtomicMeasure::support() const {
    std::vector<std::size_t> s;
    s.reserve(entries_.size());
    for (const auto& [idx, w] : entries_) s.push_back(idx);
    return s;
}

bool AtomicMeasure::canonical_less(const AtomicMeasure& a, const AtomicMeasure& b) {
    if (a.mass_ != b.mass_) return a.mass_ < b.mass_;
    return a.entries_ < b.entries_;
}

TwoLevelMeasure::TwoLevelMeasure(std::vector<WeightedAtom> atoms) {
    for (const auto& a : atoms) {
        if (!(a.weight > 0.0) || !std::isfinite(a.weight))
            throw ValidationError(ErrorKind::NegativeEntry,
                                  "outer weight must be positive and finite");
    }
    std::sort(atoms.begin(), atoms.end(), [](const WeightedAtom& a, const WeightedAtom& b) {
        return AtomicMeasure::canonical_less(a.inner, b.inner);
    });
    for (auto& a : atoms) {
        if (!atoms_.empty() && atoms_.back().inner == a.inner)
            atoms_.back().weight += a.weight;
        else
            atoms_.push_back(std::move(a));
    }
    for (const auto& a : atoms_) mass_ += a.weight;
}

M2MSpace M2MSpace::checked(FiniteMetricSpace space, TwoLevelMeasure nu) {
    for (const auto& atom : nu.atoms())
        for (const auto& [idx, w] : atom.inner.entries())
            if (idx >= space.size())
                throw ValidationError(ErrorKind::IndexOutOfRange,
                                      "inner measure references point " +
                                          std::to_string(idx) + " outside the space");
    return M2MSpace{std::move(space), std::move(nu)};
}

} // namespace m2m
