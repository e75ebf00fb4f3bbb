#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "helpers.hpp"
#include "mzh/mzh.hpp"

using namespace mzh;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(MZH_CLI_PATH) + " " + args + " > cli_stdout.txt 2> cli_stderr.txt";
    const int rc = std::system(cmd.c_str());
    return rc < 0 ? rc : (rc >> 8) & 0xff;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

bool exists(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return in.good();
}

}  // namespace

TEST_CASE("missing subcommand and unknown flags exit with code 2") {
    REQUIRE(run_cli("") == 2);
    REQUIRE(run_cli("norm --no-such-flag") == 2);
    REQUIRE(run_cli("decompose") == 2);
    REQUIRE(run_cli("norm --input missing.mzf --report r.json") == 2);
}

TEST_CASE("help exits cleanly") {
    REQUIRE(run_cli("--help") == 0);
    REQUIRE(run_cli("norm --help") == 0);
}

TEST_CASE("norm of a stored field matches the library value") {
    Grid g = Grid::cube(3, -1.0, 1.0, 16);
    DomainPtr d = share(DomainSpec::ball(g, {0.0, 0.0, 0.0}, 1.0));
    ScalarField f = build_field(d, [](const double*) { return 1.0; });
    write_mzf("cli_norm_in.mzf", f);

    REQUIRE(run_cli("norm --input cli_norm_in.mzf --q 2 --lambda 0 --block "
                    "--report cli_norm.json") == 0);
    json rep = json::parse(slurp("cli_norm.json"));
    REQUIRE(rep["schema"].get<int>() == 1);
    const double expect = morrey_norm(f, MorreyParams(3, 2.0, 0.0));
    REQUIRE(rep["morrey_norm"].get<double>() == Catch::Approx(expect).epsilon(1e-14));
    REQUIRE(rep["l2_norm"].get<double>() == Catch::Approx(l2_norm(f)).epsilon(1e-14));
    REQUIRE(rep["block"]["lower"].get<double>() <= rep["block"]["upper"].get<double>());
    std::remove("cli_norm_in.mzf");
    std::remove("cli_norm.json");
}

TEST_CASE("malformed input files exit with code 2 and no report") {
    {
        std::ofstream out("cli_bad.mzf", std::ios::binary);
        out << "JUNK\n";
    }
    std::remove("cli_bad.json");
    REQUIRE(run_cli("norm --input cli_bad.mzf --q 2 --lambda 1 --report cli_bad.json") == 2);
    REQUIRE_FALSE(exists("cli_bad.json"));
    std::remove("cli_bad.mzf");
}

TEST_CASE("non finite payloads exit with code 3 and still write the report") {
    Grid g = Grid::cube(3, -1.0, 1.0, 8);
    DomainPtr d = share(DomainSpec::box(g));
    VectorField u(d);
    u.comp[0][10] = std::numeric_limits<double>::quiet_NaN();
    write_mzf("cli_nan.mzf", u);
    REQUIRE(run_cli("decompose --input cli_nan.mzf --domain fullspace "
                    "--out-prefix cli_nan_out --report cli_nan.json") == 3);
    json rep = json::parse(slurp("cli_nan.json"));
    REQUIRE(rep.contains("error"));
    REQUIRE(rep["error"].get<std::string>().find("non-finite") != std::string::npos);
    std::remove("cli_nan.mzf");
    std::remove("cli_nan.json");
}

TEST_CASE("decompose writes the three parts and a diagnostics report") {
    Grid g = Grid::cube(3, -2.0, 2.0, 16);
    DomainPtr d = share(DomainSpec::box(g));
    VectorField u = th::gradient_bump_field(d, {0.0, 0.0, 0.0}, 1.2);
    write_mzf("cli_dec_in.mzf", u);
    REQUIRE(run_cli("decompose --input cli_dec_in.mzf --domain fullspace --route spectral "
                    "--out-prefix cli_dec --report cli_dec.json") == 0);
    VectorField w = read_mzf_vector("cli_dec_w.mzf");
    VectorField gp = read_mzf_vector("cli_dec_gradp.mzf");
    ScalarField p = read_mzf_scalar("cli_dec_p.mzf");
    REQUIRE(w.size() == u.size());
    REQUIRE(gp.size() == u.size());
    REQUIRE(p.size() == u.size());
    json rep = json::parse(slurp("cli_dec.json"));
    REQUIRE(rep["diagnostics"]["div_w_norm"].get<double>() >= 0.0);
    // gradient input: the solenoidal part carries only discretization residue
    REQUIRE(l2_norm(w) < 0.05 * l2_norm(u));
    // stored parts recompose to the input
    VectorField sum(u.dom);
    for (int c = 0; c < 3; ++c)
        for (i64 k = 0; k < u.size(); ++k)
            sum.comp[static_cast<size_t>(c)][static_cast<size_t>(k)] =
                w.comp[static_cast<size_t>(c)][static_cast<size_t>(k)] +
                gp.comp[static_cast<size_t>(c)][static_cast<size_t>(k)];
    REQUIRE(th::rel_l2(sum, u) < 1e-12);
    for (const char* f : {"cli_dec_in.mzf", "cli_dec_w.mzf", "cli_dec_gradp.mzf",
                          "cli_dec_p.mzf", "cli_dec.json"})
        std::remove(f);
}

TEST_CASE("verify reports are byte identical across runs") {
    REQUIRE(run_cli("verify --suite poincare --resolution 12 --seed 3 --report cli_v1.json "
                    "--csv cli_v1.csv") == 0);
    REQUIRE(run_cli("verify --suite poincare --resolution 12 --seed 3 --report cli_v2.json "
                    "--csv cli_v2.csv") == 0);
    const std::string a = slurp("cli_v1.json");
    const std::string b = slurp("cli_v2.json");
    REQUIRE(!a.empty());
    REQUIRE(a == b);
    REQUIRE(slurp("cli_v1.csv") == slurp("cli_v2.csv"));
    REQUIRE(slurp("cli_v1.csv").rfind("x,y,series", 0) == 0);
    for (const char* f : {"cli_v1.json", "cli_v2.json", "cli_v1.csv", "cli_v2.csv"})
        std::remove(f);
}

TEST_CASE("verify rejects out of range resolutions and unknown suites") {
    REQUIRE(run_cli("verify --suite embeddings --resolution 4 --report cli_bad_res.json") == 2);
    REQUIRE(run_cli("verify --suite embeddings --resolution 80 --report cli_bad_res.json") == 2);
    REQUIRE(run_cli("verify --suite nonsense --resolution 16 --report cli_bad_res.json") == 2);
}

TEST_CASE("divsolve solves on a ball and reports the residual") {
    Grid g = Grid::cube(3, -1.0, 1.0, 16);
    DomainPtr d = share(DomainSpec::ball(g, {0.0, 0.0, 0.0}, 1.0));
    ScalarField f = build_field(d, [](const double* x) { return x[0]; });
    write_mzf("cli_div_in.mzf", f);
    REQUIRE(run_cli("divsolve --input cli_div_in.mzf --domain ball:0,0,0,1 "
                    "--out cli_div_w.mzf --report cli_div.json") == 0);
    json rep = json::parse(slurp("cli_div.json"));
    REQUIRE(std::abs(rep["mass"].get<double>()) < 1e-12);
    REQUIRE(rep["residual_rel_l2"].get<double>() < 0.15);
    VectorField w = read_mzf_vector("cli_div_w.mzf");
    REQUIRE(w.size() == f.size());
    for (const char* p : {"cli_div_in.mzf", "cli_div.json", "cli_div_w.mzf"}) std::remove(p);
}

TEST_CASE("divsolve rejects sources with nonzero mean") {
    Grid g = Grid::cube(3, -1.0, 1.0, 12);
    DomainPtr d = share(DomainSpec::ball(g, {0.0, 0.0, 0.0}, 1.0));
    ScalarField f = build_field(d, [](const double*) { return 1.0; });
    write_mzf("cli_div_bad.mzf", f);
    REQUIRE(run_cli("divsolve --input cli_div_bad.mzf --domain ball:0,0,0,1 "
                    "--out cli_div_bad_w.mzf --report cli_div_bad.json") == 2);
    std::remove("cli_div_bad.mzf");
}

TEST_CASE("extend runs end to end on a stored graph field") {
    const int N = 16;
    const double h = 0.25;
    Grid g(std::vector<int>{N, N, N}, std::vector<double>{-2.0, -2.0, -0.4},
           std::vector<double>{h, h, h});
    std::vector<double> sigma(static_cast<size_t>(N * N));
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) {
            const double x = -2.0 + (a + 0.5) * h;
            const double y = -2.0 + (b + 0.5) * h;
            sigma[static_cast<size_t>(a * N + b)] = 0.12 * std::sin(0.8 * x) * std::cos(0.8 * y);
        }
    DomainPtr d = share(DomainSpec::graph(g, sigma, 0.15));
    ScalarField f = build_field(d, [](const double* x) {
        const double c[3] = {0.0, 0.0, 1.2};
        return th::bump(x, c, 0.9);
    });
    write_mzf("cli_ext_in.mzf", f);
    Grid g2(std::vector<int>{N, N}, std::vector<double>{-2.0, -2.0}, std::vector<double>{h, h});
    ScalarField sig_field(share(DomainSpec::box(g2)));
    for (i64 k = 0; k < sig_field.size(); ++k) sig_field[k] = sigma[static_cast<size_t>(k)];
    write_mzf("cli_ext_sigma.mzf", sig_field);

    REQUIRE(run_cli("extend --input cli_ext_in.mzf --domain graph:cli_ext_sigma.mzf,0.15 "
                    "--moments 3 --support 4 --out cli_ext_out.mzf --report cli_ext.json") == 0);
    json rep = json::parse(slurp("cli_ext.json"));
    REQUIRE(rep["psi"]["condition_estimate"].get<double>() >= 1.0);
    REQUIRE(rep["distance"]["m"].get<double>() >= 1.0);
    REQUIRE(rep["norms"]["ratio"].get<double>() > 0.0);
    ScalarField ext = read_mzf_scalar("cli_ext_out.mzf");
    REQUIRE(ext.size() == static_cast<i64>(g.cell_count()));
    // restriction to the stored graph domain is untouched
    for (i64 k = 0, at = 0; k < static_cast<i64>(g.cell_count()); ++k)
        if (d->mask[static_cast<size_t>(k)]) {
            REQUIRE(ext[k] == f[at]);
            ++at;
        }
    for (const char* p : {"cli_ext_in.mzf", "cli_ext_sigma.mzf", "cli_ext.json", "cli_ext_out.mzf"})
        std::remove(p);
}

TEST_CASE("stored fields survive a cli run untouched") {
    Grid g = Grid::cube(3, -1.0, 1.0, 10);
    DomainPtr d = share(DomainSpec::box(g));
    Rng rng(71);
    ScalarField f(d);
    for (i64 k = 0; k < f.size(); ++k) f[k] = rng.normal();
    write_mzf("cli_rt.mzf", f);
    const std::string before = slurp("cli_rt.mzf");
    REQUIRE(run_cli("norm --input cli_rt.mzf --q 2 --lambda 1 --report cli_rt.json") == 0);
    REQUIRE(slurp("cli_rt.mzf") == before);
    std::remove("cli_rt.mzf");
    std::remove("cli_rt.json");
}
