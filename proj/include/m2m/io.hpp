#ifndef M2M_IO_HPP
#define M2M_IO_HPP

#include <string>
#include <vector>

#include "m2m/functionals.hpp"
#include "m2m/types.hpp"

namespace m2m {

/// m2m JSON document:
///   { "points": ["a","b"], "distance": [[0,1],[1,0]],
///     "nu": [ {"weight": 0.5, "mu": [[0, 1.0], [1, 2.0]]}, ... ] }
/// where "mu" lists [point_index, weight] pairs. Readers accept any
/// nonnegative finite double weight. Parse and validation failures carry the
/// offending field in the message.
M2MSpace read_m2m_json(const std::string& path);
std::string m2m_to_json(const M2MSpace& x);
void write_m2m_json(const std::string& path, const M2MSpace& x);

/// Test functional spec JSON, e.g.
///   {"kind":"TF3","m":1,"n":[2],"chi":{"family":"clip","C":10},
///    "psi":{"family":"clip","C":10},
///    "phi":{"family":"clip_entry","i":0,"j":1,"C":10}}
TestFunctionalSpec read_tf_spec_json(const std::string& path);
TestFunctionalSpec tf_spec_from_json_text(const std::string& text);

/// Floats are printed with 17 significant digits, '.' decimal, no locale.
std::string format_double(double v);

/// CSV with a header row.
void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<std::string>>& rows);

std::vector<std::vector<std::string>> distribution_rows(const RealDistribution& d);

} // namespace m2m

#endif
