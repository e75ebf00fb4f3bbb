#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>

#include "helpers.hpp"
#include "mzh/mzh.hpp"

using namespace mzh;

namespace {

// Isotropic box with xy extent matched to the z range [zlo, zhi]; the graph
// sits near the bottom so reflected rays have headroom above.
DomainPtr graph_domain(int N, double zlo, double zhi, double (*fn)(double, double), double M) {
    const double len = zhi - zlo;
    Grid g(std::vector<int>{N, N, N}, std::vector<double>{-len / 2, -len / 2, zlo},
           std::vector<double>{len / N, len / N, len / N});
    std::vector<double> sigma(static_cast<size_t>(N * N));
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) {
            const double x = -len / 2 + (a + 0.5) * len / N;
            const double y = -len / 2 + (b + 0.5) * len / N;
            sigma[static_cast<size_t>(a * N + b)] = fn(x, y);
        }
    return share(DomainSpec::graph(g, sigma, M));
}

double flat0(double, double) { return 0.0; }
double wavy(double x, double y) { return 0.12 * std::sin(0.8 * x) * std::cos(0.8 * y); }

}  // namespace

TEST_CASE("weight moments hit the kronecker targets") {
    PsiWeight psi = moment_weight(3, 6.0);
    REQUIRE(psi.coeff.size() == 4);
    REQUIRE(psi.condition_estimate > 1.0);
    for (int k = 0; k <= 3; ++k) {
        const double target = k == 0 ? 1.0 : 0.0;
        REQUIRE(std::abs(psi.moment(k) - target) < 1e-10);
        REQUIRE(std::abs(psi.moment_residuals[static_cast<size_t>(k)]) < 1e-10);
    }
    // support clipping
    REQUIRE(psi(0.99) == 0.0);
    REQUIRE(psi(6.01) == 0.0);
    REQUIRE(psi(2.0) != 0.0);
}

TEST_CASE("first order weight must change sign") {
    PsiWeight psi = moment_weight(1, 4.0);
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i <= 200; ++i) {
        const double t = 1.0 + 3.0 * i / 200.0;
        lo = std::min(lo, psi(t));
        hi = std::max(hi, psi(t));
    }
    REQUIRE(lo < 0.0);
    REQUIRE(hi > 0.0);
}

TEST_CASE("zeroth order weight is a positive constant") {
    PsiWeight psi = moment_weight(0, 3.0);
    REQUIRE(psi(1.5) == Catch::Approx(0.5).epsilon(1e-12));
    REQUIRE(psi(2.9) > 0.0);
}

TEST_CASE("weight validation") {
    REQUIRE_THROWS_AS(moment_weight(-1, 4.0), std::invalid_argument);
    REQUIRE_THROWS_AS(moment_weight(2, 1.0), std::invalid_argument);
    // high degree on a sliver interval blows the moment system condition
    REQUIRE_THROWS_AS(moment_weight(24, 1.0001), std::invalid_argument);
}

TEST_CASE("flat graph distance is exact") {
    DomainPtr d = graph_domain(16, -0.5, 3.5, flat0, 0.0);
    RegularizedDistance rd = regularized_distance(d);
    REQUIRE(rd.lift == 0.0);
    REQUIRE(rd.m == 1.0);
    REQUIRE_FALSE(rd.m_adjusted);
    REQUIRE(rd.c1 == Catch::Approx(1.0).epsilon(1e-12));
    REQUIRE(rd.c2 == Catch::Approx(1.0).epsilon(1e-12));
    // theta equals |x_n| below the flat graph, bitwise
    for (i64 k = 0; k < rd.theta.size(); ++k) {
        const double xn = rd.complement->x(k)[2];
        REQUIRE(rd.theta[k] == -xn);
    }
}

TEST_CASE("wavy graph distance stays comparable to the true distance") {
    DomainPtr d = graph_domain(20, -0.4, 3.6, wavy, 0.15);
    RegularizedDistance rd = regularized_distance(d);
    REQUIRE(rd.m_initial == Catch::Approx(std::sqrt(1.0 + 0.15 * 0.15)).epsilon(1e-12));
    REQUIRE(rd.lift >= 0.0);
    REQUIRE(rd.c1 > 0.8);
    REQUIRE(rd.c2 < 1.3);
    REQUIRE(rd.c1 <= rd.c2);
    REQUIRE(rd.m >= rd.m_initial - 1e-12);
    for (i64 k = 0; k < rd.theta.size(); ++k) REQUIRE(rd.theta[k] > 0.0);
}

TEST_CASE("distance requires a graph domain") {
    Grid g = Grid::cube(3, -1.0, 1.0, 8);
    DomainPtr box = share(DomainSpec::box(g));
    REQUIRE_THROWS_AS(regularized_distance(box), std::invalid_argument);
}

TEST_CASE("extension restricts to the identity") {
    DomainPtr d = graph_domain(16, -0.4, 3.6, wavy, 0.15);
    ScalarField f = build_field(d, [](const double* x) {
        return std::cos(1.3 * x[0]) * std::sin(0.7 * x[1]) * std::exp(-0.4 * x[2]);
    });
    PsiWeight psi = moment_weight(3, 4.0);
    RegularizedDistance rd = regularized_distance(d);
    ScalarField ext = extend_special_lipschitz(f, psi, rd);
    REQUIRE(ext.dom->kind == DomainKind::Box);
    // in-mask cells carry f bitwise
    i64 j = 0;
    for (i64 k = 0; k < ext.size(); ++k) {
        if (!d->in_mask(ext.dom->cells[static_cast<size_t>(k)])) continue;
        REQUIRE(ext[k] == f[j]);
        ++j;
    }
    REQUIRE(j == f.size());
}

TEST_CASE("constants extend to constants") {
    DomainPtr d = graph_domain(16, -0.4, 3.6, wavy, 0.15);
    ScalarField f = build_field(d, [](const double*) { return 1.0; });
    PsiWeight psi = moment_weight(3, 4.0);
    RegularizedDistance rd = regularized_distance(d);
    i64 fallbacks = 0;
    ScalarField ext = extend_special_lipschitz(f, psi, rd, &fallbacks);
    for (i64 k = 0; k < ext.size(); ++k) REQUIRE(ext[k] == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("extension is linear") {
    DomainPtr d = graph_domain(12, -0.4, 3.6, wavy, 0.15);
    ScalarField f = build_field(d, [](const double* x) { return std::sin(x[0] + x[2]); });
    ScalarField h = build_field(d, [](const double* x) { return std::cos(x[1] - 0.5 * x[2]); });
    PsiWeight psi = moment_weight(3, 4.0);
    RegularizedDistance rd = regularized_distance(d);
    ScalarField ef = extend_special_lipschitz(f, psi, rd);
    ScalarField eh = extend_special_lipschitz(h, psi, rd);
    ScalarField mix(d);
    for (i64 k = 0; k < f.size(); ++k) mix[k] = 2.0 * f[k] - 0.5 * h[k];
    ScalarField emix = extend_special_lipschitz(mix, psi, rd);
    for (i64 k = 0; k < emix.size(); ++k)
        REQUIRE(emix[k] == Catch::Approx(2.0 * ef[k] - 0.5 * eh[k]).margin(1e-12));
}

TEST_CASE("vertical coordinate is reproduced by first order weights") {
    // E(x_n) = x_n + delta* . moment_1(psi) = x_n whenever moment_1 vanishes
    DomainPtr d = graph_domain(16, -0.5, 3.5, flat0, 0.0);
    ScalarField f = build_field(d, [](const double* x) { return x[2]; });
    PsiWeight psi = moment_weight(3, 4.0);
    RegularizedDistance rd = regularized_distance(d);
    ScalarField ext = extend_special_lipschitz(f, psi, rd);
    for (i64 k = 0; k < ext.size(); ++k) {
        const double xn = ext.dom->x(k)[2];
        REQUIRE(ext[k] == Catch::Approx(xn).margin(1e-9));
    }
}

TEST_CASE("rays leaving the box are rejected with a padding hint") {
    // deep complement, little headroom: reflected rays at T = 6 overshoot
    DomainPtr d = graph_domain(12, -2.0, 1.0, flat0, 0.0);
    ScalarField f = build_field(d, [](const double*) { return 1.0; });
    PsiWeight psi = moment_weight(3, 6.0);
    RegularizedDistance rd = regularized_distance(d);
    try {
        extend_special_lipschitz(f, psi, rd);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        REQUIRE(std::string(e.what()).find("padding") != std::string::npos);
    }
}

TEST_CASE("fallback samples are counted deterministically") {
    DomainPtr d = graph_domain(16, -0.4, 3.6, wavy, 0.15);
    ScalarField f = build_field(d, [](const double* x) { return x[0] * x[0] + x[2]; });
    PsiWeight psi = moment_weight(3, 4.0);
    RegularizedDistance rd = regularized_distance(d);
    i64 f1 = -1, f2 = -1;
    extend_special_lipschitz(f, psi, rd, &f1);
    extend_special_lipschitz(f, psi, rd, &f2);
    REQUIRE(f1 >= 0);
    REQUIRE(f1 == f2);
}

TEST_CASE("identity chart glue matches the special extension bitwise") {
    DomainPtr d = graph_domain(16, -0.5, 3.5, flat0, 0.0);
    ScalarField f = build_field(d, [](const double* x) { return std::sin(x[0]) + 0.3 * x[2]; });
    PsiWeight psi = moment_weight(1, 2.5);
    RegularizedDistance rd = regularized_distance(d);
    ScalarField direct = extend_special_lipschitz(f, psi, rd);

    DomainPtr box = share(DomainSpec::box(d->grid));
    LipschitzChart chart;
    chart.graph = d;
    chart.cutoff = build_field(box, [](const double*) { return 1.0; });
    ScalarField lp = build_field(box, [](const double*) { return 1.0; });
    ScalarField lm(box);
    ScalarField glued = extend_glued(f, {chart}, lp, lm, psi);
    for (i64 k = 0; k < glued.size(); ++k) REQUIRE(glued[k] == direct[k]);
}

TEST_CASE("translated chart reproduces the direct extension") {
    // world graph at one lattice step of height; the chart grid is shifted so
    // its own graph is flat zero, and the glue samples land on lattice nodes
    const int N = 16;
    const double len = 4.0;
    const double h = len / N;
    const double shift = h;
    Grid gw(std::vector<int>{N, N, N}, std::vector<double>{-len / 2, -len / 2, -0.5},
            std::vector<double>{h, h, h});
    std::vector<double> sw(static_cast<size_t>(N * N), shift);
    DomainPtr dw = share(DomainSpec::graph(gw, sw, 0.0));
    ScalarField f = build_field(dw, [](const double* x) { return std::sin(x[0]) * std::cos(0.5 * x[2]); });

    PsiWeight psi = moment_weight(1, 2.5);
    RegularizedDistance rdw = regularized_distance(dw);
    ScalarField direct = extend_special_lipschitz(f, psi, rdw);

    Grid gc(std::vector<int>{N, N, N}, std::vector<double>{-len / 2, -len / 2, -0.5 - shift},
            std::vector<double>{h, h, h});
    std::vector<double> sc(static_cast<size_t>(N * N), 0.0);
    DomainPtr dc = share(DomainSpec::graph(gc, sc, 0.0));

    DomainPtr box = share(DomainSpec::box(gw));
    LipschitzChart chart;
    chart.graph = dc;
    chart.shift = {0.0, 0.0, shift};
    chart.cutoff = build_field(box, [](const double*) { return 1.0; });
    ScalarField lp = build_field(box, [](const double*) { return 1.0; });
    ScalarField lm(box);
    ScalarField glued = extend_glued(f, {chart}, lp, lm, psi);
    for (i64 k = 0; k < glued.size(); ++k) REQUIRE(glued[k] == Catch::Approx(direct[k]).margin(1e-13));
}

TEST_CASE("partition violations name the offending cell") {
    DomainPtr d = graph_domain(10, -0.4, 3.6, flat0, 0.0);
    ScalarField f = build_field(d, [](const double*) { return 1.0; });
    PsiWeight psi = moment_weight(1, 2.5);
    DomainPtr box = share(DomainSpec::box(d->grid));
    LipschitzChart chart;
    chart.graph = d;
    chart.cutoff = build_field(box, [](const double*) { return 1.0; });
    ScalarField lp = build_field(box, [](const double*) { return 0.6; });
    ScalarField lm = build_field(box, [](const double*) { return 0.3; });  // 0.6 + 0.3 != 1
    try {
        extend_glued(f, {chart}, lp, lm, psi);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        REQUIRE(std::string(e.what()).find("cell") != std::string::npos);
    }
}

TEST_CASE("cutoff squares must cover the plus region") {
    DomainPtr d = graph_domain(10, -0.4, 3.6, flat0, 0.0);
    ScalarField f = build_field(d, [](const double*) { return 1.0; });
    PsiWeight psi = moment_weight(1, 2.5);
    DomainPtr box = share(DomainSpec::box(d->grid));
    LipschitzChart chart;
    chart.graph = d;
    chart.cutoff = build_field(box, [](const double*) { return 0.5; });  // sum of squares 0.25 < 1
    ScalarField lp = build_field(box, [](const double*) { return 1.0; });
    ScalarField lm(box);
    REQUIRE_THROWS_AS(extend_glued(f, {chart}, lp, lm, psi), std::invalid_argument);
}

TEST_CASE("charts require orthonormal rotations") {
    DomainPtr d = graph_domain(10, -0.4, 3.6, flat0, 0.0);
    ScalarField f = build_field(d, [](const double*) { return 1.0; });
    PsiWeight psi = moment_weight(1, 2.5);
    DomainPtr box = share(DomainSpec::box(d->grid));
    LipschitzChart chart;
    chart.graph = d;
    chart.rot = {1, 0, 0, 0, 1, 0, 0, 0, 2};  // not orthonormal
    chart.cutoff = build_field(box, [](const double*) { return 1.0; });
    ScalarField lp = build_field(box, [](const double*) { return 1.0; });
    ScalarField lm(box);
    REQUIRE_THROWS_AS(extend_glued(f, {chart}, lp, lm, psi), std::invalid_argument);
}

TEST_CASE("norm ratio of the extension stays bounded") {
    DomainPtr d = graph_domain(16, -0.4, 3.6, wavy, 0.15);
    ScalarField f = build_field(d, [](const double* x) {
        double c[3] = {0.0, 0.0, 1.2};
        return th::bump(x, c, 0.9);
    });
    PsiWeight psi = moment_weight(3, 4.0);
    RegularizedDistance rd = regularized_distance(d);
    ScalarField ext = extend_special_lipschitz(f, psi, rd);
    MorreyParams p(3, 2.0, 1.0);
    BallSampler s = BallSampler::geometric(d->grid.h(), 2.0, 16);
    const double rin = morrey_norm(f, p, s);
    const double rex = morrey_norm(ext, p, s);
    REQUIRE(rex > 0.0);
    REQUIRE(rex / rin < 10.0);
}
