#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "m2m/io.hpp"
#include "m2m/types.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code;
    std::string out;
    std::string err;
};

fs::path scratch() {
    static fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "m2m_cli_tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

RunResult run_cli(const std::string& args) {
    const fs::path out = scratch() / "stdout.txt";
    const fs::path err = scratch() / "stderr.txt";
    const std::string cmd = std::string(M2M_CLI_PATH) + " " + args + " > " +
                            out.string() + " 2> " + err.string();
    const int rc = std::system(cmd.c_str());
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    return {WEXITSTATUS(rc), slurp(out), slurp(err)};
}

std::string file_contents(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        std::vector<std::string> row;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(cell);
        rows.push_back(std::move(row));
    }
    return rows;
}

const char* kPairSpace = R"({
  "points": ["a", "b"],
  "distance": [[0, 1], [1, 0]],
  "nu": [{"weight": 1.0, "mu": [[0, 0.5], [1, 0.5]]}]
})";

} // namespace

TEST_CASE("validate: exit codes and named violations") {
    const fs::path good = scratch() / "good.json";
    write_file(good, kPairSpace);
    CHECK(run_cli("validate " + good.string()).exit_code == 0);

    const fs::path asym = scratch() / "asym.json";
    write_file(asym, R"({"points":["a","b"],"distance":[[0,1],[2,0]],
                         "nu":[{"weight":1.0,"mu":[[0,1.0]]}]})");
    const RunResult r = run_cli("validate " + asym.string());
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("Asymmetric") != std::string::npos);

    const fs::path neg = scratch() / "neg.json";
    write_file(neg, R"({"points":["a","b"],"distance":[[0,1],[1,0]],
                        "nu":[{"weight":1.0,"mu":[[0,-1.0]]}]})");
    const RunResult r2 = run_cli("validate " + neg.string());
    CHECK(r2.exit_code == 1);
    CHECK(r2.err.find("NegativeEntry") != std::string::npos);

    CHECK(run_cli("validate " + (scratch() / "missing.json").string()).exit_code == 1);
}

TEST_CASE("distance: d2gp on identical files is zero within tolerance") {
    const fs::path f = scratch() / "self.json";
    write_file(f, kPairSpace);
    const fs::path out = scratch() / "self_d2gp.csv";
    const RunResult r = run_cli("--tol 1e-7 --out " + out.string() + " distance " +
                                f.string() + " " + f.string() + " --mode d2gp");
    REQUIRE(r.exit_code == 0);
    const auto rows = parse_csv(file_contents(out));
    REQUIRE(rows.size() == 2);
    CHECK(rows[0][0] == "lower");
    CHECK(std::stod(rows[1][1]) <= 1e-6);
    CHECK(std::stod(rows[1][0]) <= std::stod(rows[1][1]));
    CHECK(r.out.find("wall_time_ms") != std::string::npos);
}

TEST_CASE("distance: prokhorov mode needs a shared space and single atoms") {
    const fs::path a = scratch() / "pa.json";
    const fs::path b = scratch() / "pb.json";
    write_file(a, R"({"points":["x","y"],"distance":[[0,0.3],[0.3,0]],
                      "nu":[{"weight":1.0,"mu":[[0,1.0]]}]})");
    write_file(b, R"({"points":["x","y"],"distance":[[0,0.3],[0.3,0]],
                      "nu":[{"weight":1.0,"mu":[[1,1.0]]}]})");
    const fs::path out = scratch() / "prok.csv";
    const RunResult r = run_cli("--tol 1e-7 --out " + out.string() + " distance " +
                                a.string() + " " + b.string() + " --mode prokhorov");
    REQUIRE(r.exit_code == 0);
    const auto rows = parse_csv(file_contents(out));
    CHECK(std::stod(rows[1][0]) == doctest::Approx(0.3).epsilon(1e-5));

    const fs::path c = scratch() / "pc.json";
    write_file(c, R"({"points":["x","y"],"distance":[[0,0.7],[0.7,0]],
                      "nu":[{"weight":1.0,"mu":[[1,1.0]]}]})");
    CHECK(run_cli("distance " + a.string() + " " + c.string() + " --mode prokhorov")
              .exit_code == 1);
}

TEST_CASE("tf: exact value, monte-carlo agreement, invalid spec") {
    const fs::path f = scratch() / "mass3.json";
    write_file(f, R"({"points":["a"],"distance":[[0]],
                      "nu":[{"weight":3.0,"mu":[[0,1.0]]}]})");
    const fs::path spec = scratch() / "tf1.json";
    write_file(spec, R"({"kind":"TF1","chi":{"family":"clip","C":10}})");
    const fs::path out = scratch() / "tf1.csv";
    const RunResult r =
        run_cli("--out " + out.string() + " tf " + f.string() + " " + spec.string());
    REQUIRE(r.exit_code == 0);
    CHECK(std::stod(parse_csv(file_contents(out))[1][0]) == 3.0);

    const fs::path pair = scratch() / "pair.json";
    write_file(pair, kPairSpace);
    const fs::path tf3 = scratch() / "tf3.json";
    write_file(tf3, R"({"kind":"TF3","m":1,"n":[2],
                        "chi":{"family":"clip","C":10},
                        "psi":{"family":"clip","C":10},
                        "phi":{"family":"clip_entry","i":0,"j":1,"C":10}})");
    const fs::path exact_out = scratch() / "tf3_exact.csv";
    const fs::path mc_out = scratch() / "tf3_mc.csv";
    REQUIRE(run_cli("--out " + exact_out.string() + " tf " + pair.string() + " " +
                    tf3.string() + " --mode exact")
                .exit_code == 0);
    REQUIRE(run_cli("--seed 5 --out " + mc_out.string() + " tf " + pair.string() + " " +
                    tf3.string() + " --mode mc --samples 100000")
                .exit_code == 0);
    const double exact = std::stod(parse_csv(file_contents(exact_out))[1][0]);
    const auto mc_row = parse_csv(file_contents(mc_out))[1];
    CHECK(exact == doctest::Approx(0.5));
    CHECK(std::abs(std::stod(mc_row[0]) - exact) < 4.0 * std::stod(mc_row[1]));

    const fs::path bad = scratch() / "bad_spec.json";
    write_file(bad, R"({"kind":"TF1","chi":{"family":"affine","C":10}})");
    const RunResult rb = run_cli("tf " + f.string() + " " + bad.string());
    CHECK(rb.exit_code == 1);
    CHECK(rb.err.find("InvalidSpec") != std::string::npos);
}

TEST_CASE("tf: budget overflow exits with code 2") {
    // 12 atoms x 12 support points, m=3, n=(3,3,3) overflows the tuple budget
    std::ostringstream doc;
    doc << R"({"points":[)";
    for (int i = 0; i < 12; ++i) doc << (i ? "," : "") << '"' << i << '"';
    doc << "],\"distance\":[";
    for (int i = 0; i < 12; ++i) {
        doc << (i ? "," : "") << '[';
        for (int j = 0; j < 12; ++j) doc << (j ? "," : "") << (i == j ? 0 : 1);
        doc << ']';
    }
    doc << "],\"nu\":[";
    for (int a = 0; a < 12; ++a) {
        doc << (a ? "," : "") << R"({"weight":1.0,"mu":[)";
        for (int j = 0; j < 12; ++j) doc << (j ? "," : "") << "[" << j << ",1.0]";
        doc << "]}";
    }
    doc << "]}";
    const fs::path f = scratch() / "big.json";
    write_file(f, doc.str());
    const fs::path spec = scratch() / "big_spec.json";
    write_file(spec, R"({"kind":"TF3","m":3,"n":[3,3,3],
                         "chi":{"family":"clip","C":1},
                         "psi":{"family":"clip","C":1},
                         "phi":{"family":"clip_sum","C":1}})");
    CHECK(run_cli("tf " + f.string() + " " + spec.string()).exit_code == 2);
}

TEST_CASE("simulate: distance mean, block counts, deterministic reruns") {
    const fs::path dist1 = scratch() / "d1.csv";
    const fs::path blocks1 = scratch() / "b1.csv";
    const fs::path m2m1 = scratch() / "m1.json";
    const std::string args = "--seed 99 simulate --gamma-s 1 --gamma-g 1 -M 1 -N 2 "
                             "--replicates 2000 --distances ";
    REQUIRE(run_cli(args + dist1.string() + " --blocks " + blocks1.string() + " --m2m " +
                    m2m1.string())
                .exit_code == 0);

    const auto rows = parse_csv(file_contents(dist1));
    REQUIRE(rows.size() == 2001);
    double sum = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i][1] == "same_species");
        sum += std::stod(rows[i][2]);
    }
    CHECK(sum / 2000.0 == doctest::Approx(1.0).epsilon(0.1)); // Exp(1) mean

    const auto brows = parse_csv(file_contents(blocks1));
    CHECK(brows[1][2] == "2"); // M*N gene blocks at t = 0
    CHECK(brows[1][3] == "1"); // M species blocks at t = 0

    CHECK_NOTHROW(m2m::read_m2m_json(m2m1.string()));

    const fs::path dist2 = scratch() / "d2.csv";
    const fs::path blocks2 = scratch() / "b2.csv";
    const fs::path m2m2 = scratch() / "m2.json";
    REQUIRE(run_cli(args + dist2.string() + " --blocks " + blocks2.string() + " --m2m " +
                    m2m2.string())
                .exit_code == 0);
    CHECK(file_contents(dist1) == file_contents(dist2));
    CHECK(file_contents(blocks1) == file_contents(blocks2));
    CHECK(file_contents(m2m1) == file_contents(m2m2));
}

TEST_CASE("convergence: TF1 rows are constant at one") {
    const fs::path spec = scratch() / "conv_tf1.json";
    write_file(spec, R"({"kind":"TF1","chi":{"family":"clip","C":10}})");
    const fs::path out = scratch() / "conv.csv";
    const RunResult r = run_cli("--seed 4 --out " + out.string() + " convergence " +
                                spec.string() +
                                " --N-grid 2,4 --M-grid 2 --replicates 10");
    REQUIRE(r.exit_code == 0);
    const auto rows = parse_csv(file_contents(out));
    REQUIRE(rows.size() == 3);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(std::stod(rows[i][2]) == 1.0);
        CHECK(std::stod(rows[i][3]) == 0.0);
    }
}

TEST_CASE("diagnose: V_delta monotone along the delta grid, histogram totals") {
    const fs::path f = scratch() / "diag.json";
    write_file(f, R"({"points":["a","b","c"],
                      "distance":[[0,1,2],[1,0,1],[2,1,0]],
                      "nu":[{"weight":1.0,"mu":[[0,0.5],[1,0.5]]},
                            {"weight":0.5,"mu":[[2,3.0]]}]})");
    const fs::path out = scratch() / "diag.csv";
    const fs::path dd = scratch() / "diag_dd.csv";
    const RunResult r = run_cli("--out " + out.string() + " diagnose " + f.string() +
                                " --K-grid 2,8 --delta-grid 0.125,0.25,1 --dd-hist " +
                                dd.string());
    REQUIRE(r.exit_code == 0);
    const auto rows = parse_csv(file_contents(out));
    REQUIRE(rows.size() == 7);
    // within each K the V_delta column is non-decreasing in delta
    for (std::size_t i = 2; i < rows.size(); ++i)
        if (rows[i][0] == rows[i - 1][0])
            CHECK(std::stod(rows[i][2]) >= std::stod(rows[i - 1][2]));

    // histogram weights add up to the documented dd_total of the profile
    const auto hist = parse_csv(file_contents(dd));
    double total_k2 = 0.0;
    for (std::size_t i = 1; i < hist.size(); ++i)
        if (hist[i][0] == rows[1][0]) total_k2 += std::stod(hist[i][2]);
    CHECK(total_k2 == doctest::Approx(std::stod(rows[1][3])));
}

TEST_CASE("distance: d2gp reruns are byte-identical") {
    const fs::path a = scratch() / "ra.json";
    const fs::path b = scratch() / "rb.json";
    write_file(a, kPairSpace);
    write_file(b, R"({
  "points": ["u", "v"],
  "distance": [[0, 2], [2, 0]],
  "nu": [{"weight": 1.0, "mu": [[0, 0.5], [1, 0.5]]}]
})");
    const fs::path o1 = scratch() / "r1.csv";
    const fs::path o2 = scratch() / "r2.csv";
    REQUIRE(run_cli("--seed 11 --out " + o1.string() + " distance " + a.string() + " " +
                    b.string() + " --mode d2gp")
                .exit_code == 0);
    REQUIRE(run_cli("--seed 11 --out " + o2.string() + " distance " + a.string() + " " +
                    b.string() + " --mode d2gp")
                .exit_code == 0);
    CHECK(file_contents(o1) == file_contents(o2));
    CHECK(file_contents(o1).find("nan") == std::string::npos);
}
