#ifndef M2M_TYPES_HPP
#define M2M_TYPES_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace m2m {

/// Named validation failures. The names appear verbatim in CLI error output.
enum class ErrorKind {
    NonZeroDiagonal,
    Asymmetric,
    NegativeEntry,
    TriangleViolation,
    IndexOutOfRange,
    UnmappedPoint,
    InvalidSpec,
    PreconditionViolated,
    UnknownLeaf,
    UnknownSpecies,
    DegenerateParams,
    ParseError,
    SimulationError,
};

const char* error_kind_name(ErrorKind kind);

/// Domain/validation error (CLI exit code 1).
class ValidationError : public std::runtime_error {
public:
    ValidationError(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what),
          kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

/// Enumeration/evaluation budget exceeded (CLI exit code 2).
class BudgetError : public std::runtime_error {
public:
    explicit BudgetError(const std::string& what) : std::runtime_error(what) {}
};

/// A finite point set with a validated distance matrix. Values are stored as
/// given and treated as exact after validation.
class FiniteMetricSpace {
public:
    FiniteMetricSpace() = default;

    /// Validates and constructs; throws ValidationError naming the first
    /// violated axiom (with the witness triple for triangle violations).
    /// `triangle_tol` is the slack allowed when checking the triangle
    /// inequality; entries must be exactly symmetric and the diagonal zero.
    static FiniteMetricSpace validated(std::vector<std::vector<double>> distance,
                                       std::vector<std::string> labels = {},
                                       double triangle_tol = 1e-12);

    /// Constructs without axiom checks. For matrices that are valid by
    /// construction (shortest-path closures, ultrametrics from merge trees).
    static FiniteMetricSpace unchecked(std::vector<std::vector<double>> distance,
                                       std::vector<std::string> labels = {});

    std::size_t size() const { return dist_.size(); }
    double distance(std::size_t i, std::size_t j) const { return dist_[i][j]; }
    const std::vector<std::vector<double>>& matrix() const { return dist_; }
    const std::vector<std::string>& labels() const { return labels_; }
    double diameter() const;

private:
    std::vector<std::vector<double>> dist_;
    std::vector<std::string> labels_;
};

/// Finite nonnegative weighted point set over some FiniteMetricSpace,
/// referenced by point index. Canonical form: entries sorted by index,
/// zero-weight entries absent. The default-constructed value is the null
/// measure o.
class AtomicMeasure {
public:
    AtomicMeasure() = default;
    explicit AtomicMeasure(std::vector<std::pair<std::size_t, double>> entries);

    double mass() const { return mass_; }
    bool is_null() const { return entries_.empty(); }
    double weight(std::size_t point) const;
    const std::vector<std::pair<std::size_t, double>>& entries() const {
        return entries_;
    }
    std::vector<std::size_t> support() const;

    friend bool operator==(const AtomicMeasure&, const AtomicMeasure&) = default;
    /// Canonical order: by (mass, lexicographic entry list).
    static bool canonical_less(const AtomicMeasure& a, const AtomicMeasure& b);

private:
    std::vector<std::pair<std::size_t, double>> entries_;
    double mass_ = 0.0;
};

struct WeightedAtom {
    double weight = 0.0; // outer weight, > 0
    AtomicMeasure inner;

    friend bool operator==(const WeightedAtom&, const WeightedAtom&) = default;
};

/// Finite weighted collection of AtomicMeasures over one shared space.
/// Canonical form: atoms sorted canonically, equal inner measures merged by
/// summing outer weights. Default-constructed value is the null measure.
class TwoLevelMeasure {
public:
    TwoLevelMeasure() = default;
    explicit TwoLevelMeasure(std::vector<WeightedAtom> atoms);

    double mass() const { return mass_; }
    bool is_null() const { return atoms_.empty(); }
    const std::vector<WeightedAtom>& atoms() const { return atoms_; }

    friend bool operator==(const TwoLevelMeasure&, const TwoLevelMeasure&) = default;

private:
    std::vector<WeightedAtom> atoms_;
    double mass_ = 0.0;
};

/// A metric two-level measure space at desk scale: (X, r, nu).
struct M2MSpace {
    FiniteMetricSpace space;
    TwoLevelMeasure nu;

    /// Verifies that every point carrying weight is a valid index of `space`.
    static M2MSpace checked(FiniteMetricSpace space, TwoLevelMeasure nu);
};

} // namespace m2m

#endif
