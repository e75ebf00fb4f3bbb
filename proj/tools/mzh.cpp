#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mzh/mzh.hpp"

using namespace mzh;

namespace {

// The active report: on numerical failure the accumulated diagnostics are
// still written before exiting.
struct ReportSink {
    std::string path;
    std::string csv_path;
    json body;

    void write() const {
        if (!path.empty()) write_text(path, dump_json17(body));
    }
};

ReportSink sink;

json sampler_json(const BallSampler& s) {
    json j;
    j["center_stride"] = s.center_stride;
    j["radii"] = s.radii;
    return j;
}

BallSampler make_sampler(const DomainSpec& d, const std::string& centers, const std::string& radii) {
    BallSampler s = BallSampler::standard(d);
    if (centers == "all") {
        s.center_stride = 1;
    } else if (centers.rfind("stride=", 0) == 0) {
        s.center_stride = std::stoi(centers.substr(7));
        if (s.center_stride < 1) throw std::invalid_argument("norm: stride must be >= 1");
    } else if (!centers.empty()) {
        throw std::invalid_argument("norm: --centers expects all or stride=<k>");
    }
    if (!radii.empty()) {
        double rmin = 0, rmax = 0;
        int count = 0;
        if (std::sscanf(radii.c_str(), "%lf,%lf,%d", &rmin, &rmax, &count) != 3)
            throw std::invalid_argument("norm: --radii expects min,max,count");
        s = BallSampler::geometric(rmin, rmax, count);
        if (centers.rfind("stride=", 0) == 0) s.center_stride = std::stoi(centers.substr(7));
    }
    s.validate(d.grid.h());
    return s;
}

std::vector<double> parse_doubles(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

// Rebind a field read from disk onto a freshly built domain with an identical
// mask; the descriptor flag must agree with the stored geometry.
ScalarField rebind(const ScalarField& f, DomainPtr dom, const char* who) {
    if (f.dom->cells != dom->cells || !(f.grid() == dom->grid))
        throw std::invalid_argument(std::string(who) + ": --domain mask does not match the stored field");
    ScalarField g(std::move(dom));
    g.values = f.values;
    return g;
}

void run_norm(const std::string& input, double q, double lambda, bool block,
              const std::string& centers, const std::string& radii) {
    auto raw = detail::read_mzf_raw(input);
    const int n = raw.dom->grid.n;
    MorreyParams p(n, q, lambda);
    BallSampler s = make_sampler(*raw.dom, centers, radii);

    sink.body["schema"] = 1;
    sink.body["command"] = "norm";
    sink.body["input"] = input;
    sink.body["params"] = json{{"n", n}, {"q", q}, {"lambda", lambda}};
    sink.body["sampler"] = sampler_json(s);
    sink.body["components"] = static_cast<int>(raw.comp.size());

    if (raw.comp.size() == 1) {
        ScalarField f(raw.dom);
        f.values = raw.comp.front();
        sink.body["morrey_norm"] = morrey_norm(f, p, s);
        sink.body["l2_norm"] = l2_norm(f);
        if (block) {
            auto bb = block_norm_bounds(f, p);
            sink.body["block"] = json{{"lower", bb.lower},
                                      {"upper", bb.upper},
                                      {"blocks", static_cast<i64>(bb.witness.blocks.size())},
                                      {"coefficient_total", bb.witness.total()}};
        }
    } else {
        if (block) throw std::invalid_argument("norm: --block applies to scalar fields only");
        VectorField u(raw.dom);
        u.comp = raw.comp;
        sink.body["morrey_norm"] = morrey_norm(u, p, s);
        sink.body["l2_norm"] = l2_norm(u);
    }
    sink.write();
}

void run_decompose(const std::string& input, const std::string& domain, double q, double lambda,
                   const std::string& route, const std::string& out_prefix) {
    VectorField u = read_mzf_vector(input);
    const DomainKind kind = u.dom->kind;
    MorreyParams p(u.dom->grid.n, q, lambda);

    sink.body["schema"] = 1;
    sink.body["command"] = "decompose";
    sink.body["input"] = input;
    sink.body["domain"] = domain;
    sink.body["route"] = route;
    sink.body["params"] = json{{"n", u.dom->grid.n}, {"q", q}, {"lambda", lambda}};

    DecompositionResult res;
    if (domain == "fullspace") {
        if (kind != DomainKind::Box) throw std::invalid_argument("decompose: fullspace expects a box field");
        res = route == "direct" ? decompose_fullspace_direct(u) : decompose_fullspace_spectral(u);
    } else if (domain == "halfspace") {
        if (kind != DomainKind::HalfSpace) throw std::invalid_argument("decompose: halfspace expects a halfspace field");
        res = decompose_halfspace(u);
    } else if (domain.rfind("bent:", 0) == 0) {
        if (kind != DomainKind::Graph) throw std::invalid_argument("decompose: bent expects a graph-domain field");
        const std::string sigma_path = domain.substr(5);
        if (!sigma_path.empty()) {
            ScalarField sigma = read_mzf_scalar(sigma_path);
            if (sigma.values != u.dom->sigma)
                throw std::invalid_argument("decompose: sigma file disagrees with the stored boundary graph");
        }
        res = decompose_bent_halfspace(u);
    } else if (domain == "bounded") {
        res = decompose_bounded_neumann(u);
    } else {
        throw std::invalid_argument("decompose: unknown domain route " + domain);
    }

    const std::string p_path = out_prefix + "_p.mzf";
    const std::string g_path = out_prefix + "_gradp.mzf";
    const std::string w_path = out_prefix + "_w.mzf";
    write_mzf(p_path, res.p);
    write_mzf(g_path, res.grad_p);
    write_mzf(w_path, res.w);
    sink.body["artifacts"] = json{{"p", p_path}, {"grad_p", g_path}, {"w", w_path}};
    sink.body["diagnostics"] = json{{"div_w_norm", res.diagnostics.div_w_norm},
                                    {"curl_gradp_norm", res.diagnostics.curl_gradp_norm},
                                    {"weak_residual", res.diagnostics.weak_residual},
                                    {"boundary_flux_residual", res.diagnostics.boundary_flux_residual}};
    sink.body["norms"] = json{{"u", morrey_norm(u, p)},
                              {"w", morrey_norm(res.w, p)},
                              {"grad_p", morrey_norm(res.grad_p, p)}};
    sink.write();
}

void run_extend(const std::string& input, const std::string& domain, int moments, double support,
                double q, double lambda, const std::string& out) {
    ScalarField f = read_mzf_scalar(input);
    if (!domain.empty()) {
        if (domain.rfind("graph:", 0) != 0)
            throw std::invalid_argument("extend: --domain expects graph:<sigma.mzf,M>");
        const std::string rest = domain.substr(6);
        const auto comma = rest.rfind(',');
        if (comma == std::string::npos) throw std::invalid_argument("extend: --domain expects graph:<sigma.mzf,M>");
        ScalarField sigma = read_mzf_scalar(rest.substr(0, comma));
        const double m_bound = std::stod(rest.substr(comma + 1));
        f = rebind(f, share(DomainSpec::graph(f.grid(), sigma.values, m_bound)), "extend");
    }
    if (f.dom->kind != DomainKind::Graph)
        throw std::invalid_argument("extend: input must carry (or be given) a graph domain");

    PsiWeight psi = moment_weight(moments, support);
    RegularizedDistance rd = regularized_distance(f.dom);
    sink.body["schema"] = 1;
    sink.body["command"] = "extend";
    sink.body["input"] = input;
    sink.body["params"] = json{{"moments", moments}, {"support", support}, {"q", q}, {"lambda", lambda}};
    sink.body["psi"] = json{{"condition_estimate", psi.condition_estimate},
                            {"moment_residuals", psi.moment_residuals}};
    sink.body["distance"] = json{{"c1", rd.c1},       {"c2", rd.c2},
                                 {"m", rd.m},         {"m_initial", rd.m_initial},
                                 {"m_adjusted", rd.m_adjusted}, {"lift", rd.lift}};

    i64 fallbacks = 0;
    ScalarField ef = extend_special_lipschitz(f, psi, rd, &fallbacks);
    write_mzf(out, ef);
    MorreyParams p(f.grid().n, q, lambda);
    const double nf = morrey_norm(f, p);
    const double ne = morrey_norm(ef, p);
    sink.body["fallback_samples"] = fallbacks;
    sink.body["artifacts"] = json{{"out", out}};
    sink.body["norms"] = json{{"input", nf}, {"extension", ne}, {"ratio", nf > 0 ? ne / nf : 0.0}};
    sink.write();
}

void run_divsolve(const std::string& input, const std::string& domain, const std::string& out) {
    ScalarField f = read_mzf_scalar(input);
    if (domain.rfind("ball:", 0) == 0) {
        auto vals = parse_doubles(domain.substr(5));
        const int n = f.grid().n;
        if (static_cast<int>(vals.size()) != n + 1)
            throw std::invalid_argument("divsolve: ball:<center,radius> needs n+1 numbers");
        std::vector<double> c(vals.begin(), vals.begin() + n);
        f = rebind(f, share(DomainSpec::ball(f.grid(), c, vals.back())), "divsolve");
    } else if (domain.rfind("union:", 0) == 0) {
        std::ifstream is(domain.substr(6));
        if (!is) throw std::invalid_argument("divsolve: cannot open union spec " + domain.substr(6));
        json spec = json::parse(is, nullptr, true, true);
        std::vector<StarPiece> pieces;
        for (const auto& pj : spec.at("pieces")) {
            StarPiece sp;
            sp.center = pj.at("center").get<std::vector<double>>();
            sp.radius = pj.at("radius").get<double>();
            sp.star_center = pj.at("star_center").get<std::vector<double>>();
            sp.star_radius = pj.at("star_radius").get<double>();
            pieces.push_back(std::move(sp));
        }
        f = rebind(f, share(DomainSpec::star_union(f.grid(), std::move(pieces))), "divsolve");
    } else if (!domain.empty()) {
        throw std::invalid_argument("divsolve: unknown domain " + domain);
    }
    if (f.dom->kind != DomainKind::Ball && f.dom->kind != DomainKind::StarUnion)
        throw std::invalid_argument("divsolve: input must carry (or be given) a ball or star-union domain");

    sink.body["schema"] = 1;
    sink.body["command"] = "divsolve";
    sink.body["input"] = input;
    sink.body["mass"] = integral(f);

    VectorField w = solve_divergence(f);
    write_mzf(out, w);
    ScalarField dv = divergence(w, 1);
    double num = 0, den = 0;
    for (i64 k = 0; k < f.size(); ++k) {
        const double e = dv[k] - f[k];
        num += e * e;
        den += f[k] * f[k];
    }
    sink.body["artifacts"] = json{{"out", out}};
    sink.body["residual_rel_l2"] = den > 0 ? std::sqrt(num / den) : std::sqrt(num);
    sink.write();
}

void append_csv(std::string& csv, const InequalityReport& r) {
    for (size_t i = 0; i < r.ratios.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%zu,%.17g,", i, r.ratios[i]);
        csv += buf;
        csv += r.id;
        csv += "\n";
    }
}

void run_verify(const std::string& suite, double q, double lambda, std::uint64_t seed, int resolution) {
    if (resolution < 8 || resolution > 64) throw std::invalid_argument("verify: resolution must be in [8, 64]");
    const int n = 3;
    MorreyParams p(n, q, lambda);
    DomainPtr box = share(DomainSpec::box(Grid::cube(n, -1.0, 1.0, resolution)));

    sink.body["schema"] = 1;
    sink.body["command"] = "verify";
    sink.body["suite"] = suite;
    sink.body["seed"] = seed;
    sink.body["resolution"] = resolution;
    sink.body["params"] = json{{"n", n}, {"q", q}, {"lambda", lambda}};
    json reports = json::array();
    std::string csv = "x,y,series\n";

    const bool all = suite == "all";
    if (all || suite == "embeddings") {
        auto family = bump_family(box, 12, seed);
        const double q1 = n * q / (n - lambda);
        MorreyParams p1(n, q1, 0.0);
        for (auto mode : {EmbeddingMode::MorreyToMorrey, EmbeddingMode::LebesgueToMorrey,
                          EmbeddingMode::MorreyToWeighted, EmbeddingMode::WeightedToBlock}) {
            auto rep = check_embedding(family, p, p1, mode);
            append_csv(csv, rep);
            reports.push_back(report_json(rep));
        }
    }
    if (all || suite == "poincare") {
        auto rep0 = check_poincare(mean_zero_bump_family(box, 12, seed), p, PoincareMode::ZeroMean);
        auto rep1 = check_poincare(boundary_zero_bump_family(box, 12, seed + 1), p, PoincareMode::ZeroBoundary);
        append_csv(csv, rep0);
        append_csv(csv, rep1);
        reports.push_back(report_json(rep0));
        reports.push_back(report_json(rep1));
    }
    if (all || suite == "variational") {
        DomainPtr ball = share(DomainSpec::ball(box->grid, {0, 0, 0}, 0.9));
        std::vector<DecompositionResult> decomps;
        for (int s = 0; s < 4; ++s) {
            auto parts = bump_family(ball, 3, seed + 10 + static_cast<std::uint64_t>(s));
            VectorField u(ball);
            for (int a = 0; a < n; ++a) u.comp[static_cast<size_t>(a)] = parts[static_cast<size_t>(a)].values;
            decomps.push_back(decompose_bounded_neumann(u));
        }
        auto rep = check_variational(decomps, p, 16);
        append_csv(csv, rep);
        reports.push_back(report_json(rep));
    }
    if (all || suite == "operators") {
        auto family = bump_family(box, 8, seed + 2);
        auto repf = check_fractional(family, p, p, 1.0);
        auto reps = check_singular(family, p);
        append_csv(csv, repf);
        append_csv(csv, reps);
        reports.push_back(report_json(repf));
        reports.push_back(report_json(reps));
    }
    if (reports.empty()) throw std::invalid_argument("verify: unknown suite " + suite);
    sink.body["reports"] = std::move(reports);
    sink.write();
    if (!sink.csv_path.empty()) write_text(sink.csv_path, csv);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Morrey/block-space field operators: decomposition, norms, extension, divergence"};
    app.require_subcommand(1);

    std::string input, domain, out_prefix, out, report, csv, centers = "all", radii, route = "spectral",
                suite;
    double q = 2.0, lambda = 1.0, support = 6.0;
    int moments = 3, resolution = 32;
    std::uint64_t seed = 7;
    bool block = false;

    auto* c_norm = app.add_subcommand("norm", "Sampled Morrey norm (optionally block bounds) of a stored field");
    c_norm->add_option("--input", input)->required()->check(CLI::ExistingFile);
    c_norm->add_option("--q", q);
    c_norm->add_option("--lambda", lambda);
    c_norm->add_flag("--block", block);
    c_norm->add_option("--centers", centers);
    c_norm->add_option("--radii", radii);
    c_norm->add_option("--report", report)->required();

    auto* c_dec = app.add_subcommand("decompose", "Helmholtz decomposition of a stored vector field");
    c_dec->add_option("--input", input)->required()->check(CLI::ExistingFile);
    c_dec->add_option("--domain", domain)->required();
    c_dec->add_option("--q", q);
    c_dec->add_option("--lambda", lambda);
    c_dec->add_option("--route", route)->check(CLI::IsMember({"spectral", "direct"}));
    c_dec->add_option("--out-prefix", out_prefix)->required();
    c_dec->add_option("--report", report)->required();

    auto* c_ext = app.add_subcommand("extend", "Extension from a graph domain to the full box");
    c_ext->add_option("--input", input)->required()->check(CLI::ExistingFile);
    c_ext->add_option("--domain", domain);
    c_ext->add_option("--moments", moments);
    c_ext->add_option("--support", support);
    c_ext->add_option("--q", q);
    c_ext->add_option("--lambda", lambda);
    c_ext->add_option("--out", out)->required();
    c_ext->add_option("--report", report)->required();

    auto* c_div = app.add_subcommand("divsolve", "Divergence equation on a star-shaped domain or union");
    c_div->add_option("--input", input)->required()->check(CLI::ExistingFile);
    c_div->add_option("--domain", domain);
    c_div->add_option("--out", out)->required();
    c_div->add_option("--report", report)->required();

    auto* c_ver = app.add_subcommand("verify", "Sampled inequality suites with seeded random families");
    c_ver->add_option("--suite", suite)
        ->required()
        ->check(CLI::IsMember({"embeddings", "poincare", "variational", "operators", "all"}));
    c_ver->add_option("--q", q);
    c_ver->add_option("--lambda", lambda);
    c_ver->add_option("--seed", seed);
    c_ver->add_option("--resolution", resolution);
    c_ver->add_option("--report", report)->required();
    c_ver->add_option("--csv", csv);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    sink.path = report;
    sink.csv_path = csv;
    try {
        if (c_norm->parsed()) run_norm(input, q, lambda, block, centers, radii);
        if (c_dec->parsed()) run_decompose(input, domain, q, lambda, route, out_prefix);
        if (c_ext->parsed()) run_extend(input, domain, moments, support, q, lambda, out);
        if (c_div->parsed()) run_divsolve(input, domain, out);
        if (c_ver->parsed()) run_verify(suite, q, lambda, seed, resolution);
        return 0;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        sink.body["error"] = e.what();
        try {
            sink.write();
        } catch (...) {
        }
        return 3;
    }
}
