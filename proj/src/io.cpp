#include "m2m/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace m2m {

using nlohmann::json;

namespace {

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ValidationError(ErrorKind::ParseError, "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(ErrorKind::ParseError, path + ": " + e.what());
    }
}

double nonneg_weight(const json& j, const std::string& field) {
    if (!j.is_number())
        throw ValidationError(ErrorKind::ParseError, field + " must be a number");
    const double v = j.get<double>();
    if (!(v >= 0.0) || !std::isfinite(v))
        throw ValidationError(ErrorKind::NegativeEntry, field + " must be a nonnegative finite double");
    return v;
}

} // namespace

M2MSpace read_m2m_json(const std::string& path) {
    const json doc = load_json(path);
    if (!doc.contains("points") || !doc.contains("distance") || !doc.contains("nu"))
        throw ValidationError(ErrorKind::ParseError,
                              path + ": required fields are points, distance, nu");

    std::vector<std::string> labels;
    for (const auto& p : doc.at("points")) labels.push_back(p.get<std::string>());

    std::vector<std::vector<double>> dist;
    for (const auto& row : doc.at("distance")) {
        std::vector<double> r;
        for (const auto& v : row) {
            if (!v.is_number())
                throw ValidationError(ErrorKind::ParseError, "distance entries must be numbers");
            r.push_back(v.get<double>());
        }
        dist.push_back(std::move(r));
    }
    if (dist.size() != labels.size())
        throw ValidationError(ErrorKind::ParseError,
                              "distance row count does not match points");
    FiniteMetricSpace space = FiniteMetricSpace::validated(std::move(dist), std::move(labels));

    std::vector<WeightedAtom> atoms;
    std::size_t atom_no = 0;
    for (const auto& atom : doc.at("nu")) {
        const std::string ctx = "nu[" + std::to_string(atom_no++) + "]";
        if (!atom.contains("weight") || !atom.contains("mu"))
            throw ValidationError(ErrorKind::ParseError, ctx + " needs weight and mu");
        const double w = nonneg_weight(atom.at("weight"), ctx + ".weight");
        if (w == 0.0)
            throw ValidationError(ErrorKind::ParseError, ctx + ".weight must be positive");
        std::vector<std::pair<std::size_t, double>> e;
        for (const auto& pair : atom.at("mu")) {
            if (!pair.is_array() || pair.size() != 2)
                throw ValidationError(ErrorKind::ParseError,
                                      ctx + ".mu entries must be [point_index, weight]");
            if (!pair[0].is_number_integer() || pair[0].get<long long>() < 0)
                throw ValidationError(ErrorKind::ParseError,
                                      ctx + ".mu point index must be a nonnegative integer");
            e.emplace_back(pair[0].get<std::size_t>(), nonneg_weight(pair[1], ctx + ".mu weight"));
        }
        atoms.push_back({w, AtomicMeasure(std::move(e))});
    }
    return M2MSpace::checked(std::move(space), TwoLevelMeasure(std::move(atoms)));
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string m2m_to_json(const M2MSpace& x) {
    json doc;
    doc["points"] = x.space.labels();
    json dist = json::array();
    for (std::size_t i = 0; i < x.space.size(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < x.space.size(); ++j) row.push_back(x.space.distance(i, j));
        dist.push_back(std::move(row));
    }
    doc["distance"] = std::move(dist);
    json nu = json::array();
    for (const auto& atom : x.nu.atoms()) {
        json mu = json::array();
        for (const auto& [idx, w] : atom.inner.entries()) mu.push_back(json::array({idx, w}));
        nu.push_back(json{{"weight", atom.weight}, {"mu", std::move(mu)}});
    }
    doc["nu"] = std::move(nu);
    return doc.dump(2);
}

void write_m2m_json(const std::string& path, const M2MSpace& x) {
    std::ofstream out(path);
    if (!out)
        throw ValidationError(ErrorKind::ParseError, "cannot write " + path);
    out << m2m_to_json(x) << '\n';
}

TestFunctionalSpec tf_spec_from_json_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(ErrorKind::ParseError, std::string("spec: ") + e.what());
    }
    TestFunctionalSpec spec;
    const std::string kind = doc.value("kind", "");
    if (kind == "TF1")
        spec.kind = TestFunctionalSpec::Kind::TF1;
    else if (kind == "TF2")
        spec.kind = TestFunctionalSpec::Kind::TF2;
    else if (kind == "TF3")
        spec.kind = TestFunctionalSpec::Kind::TF3;
    else if (kind == "TF4")
        spec.kind = TestFunctionalSpec::Kind::TF4;
    else
        throw ValidationError(ErrorKind::InvalidSpec, "kind must be TF1..TF4");

    spec.m = doc.value("m", 1);
    if (doc.contains("n"))
        for (const auto& v : doc.at("n")) spec.n.push_back(v.get<int>());

    auto family_of = [](const json& j, const std::string& ctx) {
        if (!j.contains("family"))
            throw ValidationError(ErrorKind::InvalidSpec, ctx + " needs a family");
        return j.at("family").get<std::string>();
    };
    if (doc.contains("chi")) {
        const json& chi = doc.at("chi");
        if (family_of(chi, "chi") != "clip")
            throw ValidationError(ErrorKind::InvalidSpec,
                                  "chi family must be 'clip' (chi(0) = 0 is structural)");
        spec.chi.C = chi.value("C", 1.0);
    }
    if (doc.contains("psi")) {
        const json& psi = doc.at("psi");
        if (family_of(psi, "psi") != "clip")
            throw ValidationError(ErrorKind::InvalidSpec,
                                  "psi family must be 'clip' (vanishing at 0 is structural)");
        spec.psi.C = psi.value("C", 1.0);
    }
    if (doc.contains("phi")) {
        const json& phi = doc.at("phi");
        const std::string fam = family_of(phi, "phi");
        if (fam == "clip_entry")
            spec.phi.family = PhiSpec::Family::ClipEntry;
        else if (fam == "clip_sum")
            spec.phi.family = PhiSpec::Family::ClipSum;
        else if (fam == "exp_sum")
            spec.phi.family = PhiSpec::Family::ExpSum;
        else if (fam == "min_entry_clip")
            spec.phi.family = PhiSpec::Family::MinEntryClip;
        else
            throw ValidationError(ErrorKind::InvalidSpec, "unknown phi family " + fam);
        spec.phi.i = phi.value("i", 0);
        spec.phi.j = phi.value("j", 1);
        spec.phi.C = phi.value("C", 1.0);
        spec.phi.lambda = phi.value("lambda", 1.0);
    }
    spec.validate();
    return spec;
}

TestFunctionalSpec read_tf_spec_json(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ValidationError(ErrorKind::ParseError, "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return tf_spec_from_json_text(ss.str());
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out)
        throw ValidationError(ErrorKind::ParseError, "cannot write " + path);
    out << header << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << row[i] << (i + 1 < row.size() ? "," : "");
        out << '\n';
    }
}

std::vector<std::vector<std::string>> distribution_rows(const RealDistribution& d) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& [v, w] : d.atoms)
        rows.push_back({format_double(v), format_double(w)});
    return rows;
}

} // namespace m2m
