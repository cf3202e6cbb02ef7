// Command-line surface for the m2m toolkit: validation, distances, test
// functionals, coalescent simulation, convergence studies and compactness
// diagnostics. All commands are deterministic for a given seed and flag set;
// wall-clock timings go to stdout only, never into output files.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "m2m/coalescent.hpp"
#include "m2m/core.hpp"
#include "m2m/functionals.hpp"
#include "m2m/io.hpp"
#include "m2m/metrics.hpp"
#include "m2m/rng.hpp"

namespace {

constexpr std::uint64_t kDefaultSeed = 0xC0A1E5CEULL;

using Rows = std::vector<std::vector<std::string>>;

std::vector<double> parse_grid(const std::string& csv, const std::string& what) {
    std::vector<double> grid;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            grid.push_back(std::stod(item));
        } catch (...) {
            throw m2m::ValidationError(m2m::ErrorKind::ParseError,
                                       what + ": bad grid entry '" + item + "'");
        }
    }
    if (grid.empty())
        throw m2m::ValidationError(m2m::ErrorKind::ParseError, what + ": empty grid");
    return grid;
}

void emit(const std::string& out_path, const std::string& format,
          const std::string& header, const Rows& rows) {
    if (!out_path.empty()) {
        if (format == "json") {
            std::vector<std::string> cols;
            std::stringstream hs(header);
            std::string col;
            while (std::getline(hs, col, ',')) cols.push_back(col);
            std::ostringstream doc;
            doc << "[\n";
            for (std::size_t r = 0; r < rows.size(); ++r) {
                doc << "  {";
                for (std::size_t c = 0; c < cols.size(); ++c)
                    doc << '"' << cols[c] << "\": " << rows[r][c]
                        << (c + 1 < cols.size() ? ", " : "");
                doc << (r + 1 < rows.size() ? "},\n" : "}\n");
            }
            doc << "]\n";
            std::ofstream f(out_path);
            f << doc.str();
        } else {
            m2m::write_csv(out_path, header, rows);
        }
    }
    std::cout << header << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            std::cout << row[i] << (i + 1 < row.size() ? "," : "");
        std::cout << '\n';
    }
}

int cmd_validate(const std::string& file, double tol) {
    (void)tol;
    const m2m::M2MSpace x = m2m::read_m2m_json(file);
    const auto supp = m2m::effective_support(x.nu);
    std::cout << "valid: points=" << x.space.size() << " atoms=" << x.nu.atoms().size()
              << " mass=" << m2m::format_double(x.nu.mass())
              << " effective_support=" << supp.size()
              << " diameter=" << m2m::format_double(x.space.diameter()) << '\n';
    return 0;
}

int cmd_distance(const std::string& file_a, const std::string& file_b,
                 const std::string& mode, double tol, std::uint64_t seed, int multistarts,
                 int grid_points, const std::string& out, const std::string& witness_path,
                 const std::string& format) {
    const m2m::M2MSpace a = m2m::read_m2m_json(file_a);
    const m2m::M2MSpace b = m2m::read_m2m_json(file_b);
    const auto t0 = std::chrono::steady_clock::now();
    Rows rows;
    std::string header;
    if (mode == "prokhorov" || mode == "two_level") {
        if (a.space.matrix() != b.space.matrix() || a.space.labels() != b.space.labels())
            throw m2m::ValidationError(m2m::ErrorKind::PreconditionViolated,
                                       mode + " mode needs a shared space declaration");
        double value = 0.0;
        if (mode == "prokhorov") {
            if (a.nu.atoms().size() != 1 || b.nu.atoms().size() != 1)
                throw m2m::ValidationError(
                    m2m::ErrorKind::PreconditionViolated,
                    "prokhorov mode compares the inner measure of single-atom nu");
            value = m2m::prokhorov(a.space, a.nu.atoms()[0].inner, b.nu.atoms()[0].inner, tol);
        } else {
            value = m2m::two_level_prokhorov(a.space, a.nu, b.nu, tol);
        }
        header = "value";
        rows.push_back({m2m::format_double(value)});
    } else if (mode == "d2gp") {
        m2m::D2gpOptions opts;
        opts.tol = tol;
        opts.seed = seed;
        opts.multistarts = multistarts;
        opts.grid_points = grid_points;
        const m2m::DistanceBound bound = m2m::d2gp_bounds(a, b, opts);
        header = "lower,upper,starts_used";
        rows.push_back({m2m::format_double(bound.lower), m2m::format_double(bound.upper),
                        std::to_string(bound.starts_used)});
        if (!witness_path.empty() && bound.witness) {
            std::ofstream w(witness_path);
            w << "[\n";
            for (std::size_t i = 0; i < bound.witness->c.size(); ++i) {
                w << "  [";
                for (std::size_t j = 0; j < bound.witness->c[i].size(); ++j)
                    w << m2m::format_double(bound.witness->c[i][j])
                      << (j + 1 < bound.witness->c[i].size() ? ", " : "");
                w << (i + 1 < bound.witness->c.size() ? "],\n" : "]\n");
            }
            w << "]\n";
        }
    } else {
        throw m2m::ValidationError(m2m::ErrorKind::ParseError,
                                   "mode must be prokhorov, two_level or d2gp");
    }
    emit(out, format, header, rows);
    const auto t1 = std::chrono::steady_clock::now();
    std::cout << "wall_time_ms,"
              << std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count()
              << '\n';
    return 0;
}

int cmd_tf(const std::string& file, const std::string& spec_file, const std::string& mode,
           std::uint64_t samples, std::uint64_t seed, const std::string& out,
           const std::string& format) {
    const m2m::M2MSpace x = m2m::read_m2m_json(file);
    const m2m::TestFunctionalSpec spec = m2m::read_tf_spec_json(spec_file);
    Rows rows;
    std::string header;
    if (mode == "exact") {
        const m2m::EvalResult r = m2m::eval_tf_exact(spec, x);
        header = "value";
        rows.push_back({m2m::format_double(r.value)});
    } else if (mode == "mc") {
        const m2m::EvalResult r = m2m::eval_tf_monte_carlo(spec, x, samples, seed);
        header = "value,stderr,samples";
        rows.push_back({m2m::format_double(r.value), m2m::format_double(r.stderr_),
                        std::to_string(r.samples)});
    } else {
        throw m2m::ValidationError(m2m::ErrorKind::ParseError, "mode must be exact or mc");
    }
    emit(out, format, header, rows);
    return 0;
}

int cmd_simulate(double gamma_s, double gamma_g, int M, int N, int replicates,
                 std::uint64_t seed, const std::string& distances_path,
                 const std::string& blocks_path, const std::string& m2m_path,
                 const std::string& t_grid_csv) {
    const m2m::CoalescentParams params{gamma_s, gamma_g, M, N};
    params.validate();
    if (replicates < 1)
        throw m2m::ValidationError(m2m::ErrorKind::PreconditionViolated,
                                   "replicates must be >= 1");
    const std::vector<double> t_grid = parse_grid(t_grid_csv, "t-grid");

    Rows distance_rows, block_rows;
    for (int rep = 0; rep < replicates; ++rep) {
        const m2m::GeneDendrogram d =
            m2m::simulate(params, m2m::derive_seed(seed, static_cast<std::uint64_t>(rep)));
        if (N >= 2)
            distance_rows.push_back(
                {std::to_string(rep), "same_species",
                 m2m::format_double(d.pairwise_distance(d.leaf_id(0, 0), d.leaf_id(0, 1)))});
        if (M >= 2)
            distance_rows.push_back(
                {std::to_string(rep), "cross_species",
                 m2m::format_double(d.pairwise_distance(d.leaf_id(0, 0), d.leaf_id(1, 0)))});
        for (const auto& row : m2m::block_counts(d, t_grid))
            block_rows.push_back({std::to_string(rep), m2m::format_double(row.t),
                                  std::to_string(row.gene_blocks),
                                  std::to_string(row.species_blocks)});
        if (rep == 0 && !m2m_path.empty())
            m2m::write_m2m_json(m2m_path, m2m::build_m2m(d));
    }
    if (!distances_path.empty())
        m2m::write_csv(distances_path, "replicate,kind,distance", distance_rows);
    if (!blocks_path.empty())
        m2m::write_csv(blocks_path, "replicate,t,gene_blocks,species_blocks", block_rows);
    std::cout << "simulated " << replicates << " replicate(s) of M=" << M << " N=" << N
              << '\n';
    return 0;
}

int cmd_convergence(const std::string& spec_file, double gamma_s, double gamma_g,
                    const std::string& n_grid_csv, const std::string& m_grid_csv,
                    int replicates, long limit_replicates, std::uint64_t q_samples,
                    std::uint64_t seed, const std::string& out, const std::string& format) {
    const m2m::TestFunctionalSpec spec = m2m::read_tf_spec_json(spec_file);
    const std::vector<double> n_grid = parse_grid(n_grid_csv, "N-grid");
    const std::vector<double> m_grid = parse_grid(m_grid_csv, "M-grid");
    for (const auto* grid : {&n_grid, &m_grid})
        for (std::size_t i = 1; i < grid->size(); ++i)
            if ((*grid)[i] <= (*grid)[i - 1])
                throw m2m::ValidationError(m2m::ErrorKind::PreconditionViolated,
                                           "grids must be ascending");

    m2m::MonteCarloEstimate limit{0.0, 0.0, 0};
    const bool has_limit = spec.kind == m2m::TestFunctionalSpec::Kind::TF3 ||
                           spec.kind == m2m::TestFunctionalSpec::Kind::TF4;
    if (has_limit)
        limit = m2m::estimate_limit_statistic(spec, gamma_s, gamma_g, limit_replicates,
                                              m2m::derive_seed(seed, 0xABCDULL));

    Rows rows;
    for (double Mv : m_grid)
        for (double Nv : n_grid) {
            const m2m::CoalescentParams params{gamma_s, gamma_g, static_cast<int>(Mv),
                                               static_cast<int>(Nv)};
            const m2m::MonteCarloEstimate q = m2m::estimate_Q(
                spec, params, replicates,
                m2m::derive_seed(seed, static_cast<std::uint64_t>(Mv * 131071 + Nv)),
                q_samples);
            rows.push_back({std::to_string(params.M), std::to_string(params.N),
                            m2m::format_double(q.mean), m2m::format_double(q.stderr_),
                            m2m::format_double(limit.mean),
                            m2m::format_double(limit.stderr_)});
        }
    emit(out, format, "M,N,Q_estimate,Q_stderr,limit_estimate,limit_stderr", rows);
    return 0;
}

int cmd_diagnose(const std::string& file, const std::string& k_grid_csv,
                 const std::string& delta_grid_csv, const std::string& out,
                 const std::string& dd_hist, const std::string& md_hist,
                 const std::string& format) {
    const m2m::M2MSpace x = m2m::read_m2m_json(file);
    const std::vector<double> K_grid = parse_grid(k_grid_csv, "K-grid");
    const std::vector<double> delta_grid = parse_grid(delta_grid_csv, "delta-grid");
    const auto profile = m2m::compactness_profile(x, K_grid, delta_grid);

    Rows rows;
    for (const auto& r : profile)
        rows.push_back({m2m::format_double(r.K), m2m::format_double(r.delta),
                        m2m::format_double(r.V_delta), m2m::format_double(r.dd.total),
                        m2m::format_double(r.dd.mean), m2m::format_double(r.dd.max),
                        m2m::format_double(r.mass_dist.total),
                        m2m::format_double(r.mass_dist.mean),
                        m2m::format_double(r.mass_dist.max)});
    emit(out, format,
         "K,delta,V_delta,dd_total,dd_mean,dd_max,mass_total,mass_mean,mass_max", rows);

    if (!dd_hist.empty()) {
        Rows hist;
        for (double K : K_grid) {
            const auto dd = m2m::distance_distribution(
                x.space, m2m::moment_measure(m2m::apply_fK(x.nu, K)));
            for (const auto& [v, w] : dd.atoms)
                hist.push_back({m2m::format_double(K), m2m::format_double(v),
                                m2m::format_double(w)});
        }
        m2m::write_csv(dd_hist, "K,value,weight", hist);
    }
    if (!md_hist.empty()) {
        Rows hist;
        for (double K : K_grid) {
            const auto md = m2m::mass_distribution(m2m::apply_fK(x.nu, K));
            for (const auto& [v, w] : md.atoms)
                hist.push_back({m2m::format_double(K), m2m::format_double(v),
                                m2m::format_double(w)});
        }
        m2m::write_csv(md_hist, "K,value,weight", hist);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"finite metric two-level measure space toolkit"};
    app.require_subcommand(1);

    std::uint64_t seed = kDefaultSeed;
    double tol = 1e-9;
    std::string out, format = "csv";
    app.add_option("--seed", seed, "RNG seed")->capture_default_str();
    app.add_option("--tol", tol, "tolerance")->capture_default_str();
    app.add_option("--out", out, "output file");
    app.add_option("--format", format, "csv or json")->capture_default_str();

    auto* v = app.add_subcommand("validate", "validate an m2m JSON file");
    std::string v_file;
    v->add_option("file", v_file)->required();

    auto* dist = app.add_subcommand("distance", "distance between two m2m files");
    std::string d_a, d_b, d_mode = "d2gp", d_witness;
    int d_multistarts = 4, d_grid_points = 5;
    dist->add_option("fileA", d_a)->required();
    dist->add_option("fileB", d_b)->required();
    dist->add_option("--mode", d_mode, "prokhorov | two_level | d2gp")
        ->capture_default_str();
    dist->add_option("--multistarts", d_multistarts)->capture_default_str();
    dist->add_option("--grid-points", d_grid_points)->capture_default_str();
    dist->add_option("--witness", d_witness, "write the d2gp cross block as JSON");

    auto* tf = app.add_subcommand("tf", "evaluate a test functional on an m2m file");
    std::string t_file, t_spec, t_mode = "exact";
    std::uint64_t t_samples = 100000;
    tf->add_option("file", t_file)->required();
    tf->add_option("spec", t_spec)->required();
    tf->add_option("--mode", t_mode, "exact | mc")->capture_default_str();
    tf->add_option("--samples", t_samples)->capture_default_str();

    auto* sim = app.add_subcommand("simulate", "nested Kingman coalescent simulation");
    double s_gs = 1.0, s_gg = 1.0;
    int s_M = 1, s_N = 2, s_reps = 1;
    std::string s_dist, s_blocks, s_m2m, s_tgrid = "0,0.25,0.5,1,2,4";
    sim->add_option("--gamma-s", s_gs)->capture_default_str();
    sim->add_option("--gamma-g", s_gg)->capture_default_str();
    sim->add_option("-M,--species", s_M)->capture_default_str();
    sim->add_option("-N,--individuals", s_N)->capture_default_str();
    sim->add_option("--replicates", s_reps)->capture_default_str();
    sim->add_option("--distances", s_dist, "CSV of replicate pair distances");
    sim->add_option("--blocks", s_blocks, "CSV of block counts over the t grid");
    sim->add_option("--m2m", s_m2m, "write the first replicate as an m2m JSON file");
    sim->add_option("--t-grid", s_tgrid)->capture_default_str();

    auto* conv = app.add_subcommand("convergence", "Q_{M,N} estimates against the limit");
    std::string c_spec, c_ngrid = "25,100,400", c_mgrid = "20";
    int c_reps = 200;
    long c_limit_reps = 100000;
    std::uint64_t c_q_samples = 0;
    conv->add_option("spec", c_spec)->required();
    conv->add_option("--gamma-s", s_gs)->capture_default_str();
    conv->add_option("--gamma-g", s_gg)->capture_default_str();
    conv->add_option("--N-grid", c_ngrid)->capture_default_str();
    conv->add_option("--M-grid", c_mgrid)->capture_default_str();
    conv->add_option("--replicates", c_reps)->capture_default_str();
    conv->add_option("--limit-replicates", c_limit_reps)->capture_default_str();
    conv->add_option("--q-samples", c_q_samples,
                     "per-replicate Monte-Carlo samples, 0 = exact")
        ->capture_default_str();

    auto* diag = app.add_subcommand("diagnose", "compactness/tightness diagnostics");
    std::string g_file, g_kgrid = "1,2,4,8,16", g_dgrid = "0.01,0.1,0.5", g_dd, g_md;
    diag->add_option("file", g_file)->required();
    diag->add_option("--K-grid", g_kgrid)->capture_default_str();
    diag->add_option("--delta-grid", g_dgrid)->capture_default_str();
    diag->add_option("--dd-hist", g_dd, "CSV of DD(mm f_K nu) per K");
    diag->add_option("--md-hist", g_md, "CSV of mass_*(f_K nu) per K");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*v) return cmd_validate(v_file, tol);
        if (*dist)
            return cmd_distance(d_a, d_b, d_mode, tol, seed, d_multistarts, d_grid_points,
                                out, d_witness, format);
        if (*tf) return cmd_tf(t_file, t_spec, t_mode, t_samples, seed, out, format);
        if (*sim)
            return cmd_simulate(s_gs, s_gg, s_M, s_N, s_reps, seed, s_dist, s_blocks, s_m2m,
                                s_tgrid);
        if (*conv)
            return cmd_convergence(c_spec, s_gs, s_gg, c_ngrid, c_mgrid, c_reps,
                                   c_limit_reps, c_q_samples, seed, out, format);
        if (*diag)
            return cmd_diagnose(g_file, g_kgrid, g_dgrid, out, g_dd, g_md, format);
    } catch (const m2m::BudgetError& e) {
        std::cerr << "budget error: " << e.what() << '\n';
        return 2;
    } catch (const m2m::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
