#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "helpers.hpp"
#include "mzh/mzh.hpp"

using namespace mzh;

namespace {

std::string tmp_path(const char* name) {
    return std::string("io_test_") + name + ".mzf";
}

ScalarField random_scalar(const DomainPtr& d, std::uint64_t seed) {
    Rng rng(seed);
    ScalarField f(d);
    for (i64 k = 0; k < f.size(); ++k) f[k] = rng.normal();
    return f;
}

VectorField random_vector(const DomainPtr& d, std::uint64_t seed) {
    Rng rng(seed);
    VectorField u(d);
    for (auto& c : u.comp)
        for (double& v : c) v = rng.normal();
    return u;
}

bool bitwise_equal(const ScalarField& a, const ScalarField& b) {
    if (a.size() != b.size()) return false;
    return std::memcmp(a.values.data(), b.values.data(),
                       a.values.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("scalar field round trips bit exactly") {
    Grid g = Grid::cube(3, -1.0, 1.0, 8);
    DomainPtr d = share(DomainSpec::ball(g, {0.0, 0.0, 0.0}, 0.8));
    ScalarField f = random_scalar(d, 42);
    const std::string path = tmp_path("scalar");
    write_mzf(path, f);
    ScalarField back = read_mzf_scalar(path);
    REQUIRE(back.dom->same_layout(*d));
    REQUIRE(back.dom->kind == DomainKind::Ball);
    REQUIRE(bitwise_equal(back, f));
    std::remove(path.c_str());
}

TEST_CASE("vector field round trips bit exactly") {
    Grid g = Grid::cube(3, -1.0, 1.0, 8);
    DomainPtr d = share(DomainSpec::box(g));
    VectorField u = random_vector(d, 43);
    const std::string path = tmp_path("vector");
    write_mzf(path, u);
    VectorField back = read_mzf_vector(path);
    REQUIRE(back.dom->same_layout(*d));
    for (int a = 0; a < 3; ++a)
        REQUIRE(std::memcmp(back.comp[static_cast<size_t>(a)].data(),
                            u.comp[static_cast<size_t>(a)].data(),
                            u.comp[static_cast<size_t>(a)].size() * sizeof(double)) == 0);
    std::remove(path.c_str());
}

TEST_CASE("every domain kind survives the header round trip") {
    Grid g = Grid::cube(3, -1.0, 1.0, 8);
    std::vector<DomainPtr> doms;
    doms.push_back(share(DomainSpec::box(g)));
    doms.push_back(share(DomainSpec::ball(g, {0.1, 0.0, -0.1}, 0.7)));
    doms.push_back(share(DomainSpec::half_space(g)));
    std::vector<double> sigma(64);
    for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) {
            const double x = -1.0 + (a + 0.5) * 0.25;
            const double y = -1.0 + (b + 0.5) * 0.25;
            sigma[static_cast<size_t>(a * 8 + b)] = 0.05 * std::sin(x) * std::cos(y);
        }
    doms.push_back(share(DomainSpec::graph(g, sigma, 0.3)));
    StarPiece p1{{-0.3, 0.0, 0.0}, 0.6, {}, 0.0};
    StarPiece p2{{0.3, 0.0, 0.0}, 0.6, {}, 0.0};
    doms.push_back(share(DomainSpec::star_union(g, {p1, p2})));
    doms.push_back(share(DomainSpec::box_minus_ball(g, {0.0, 0.0, 0.0}, 0.5)));

    int idx = 0;
    for (const DomainPtr& d : doms) {
        ScalarField f = random_scalar(d, 100 + static_cast<std::uint64_t>(idx));
        const std::string path = tmp_path(("kind" + std::to_string(idx)).c_str());
        write_mzf(path, f);
        ScalarField back = read_mzf_scalar(path);
        REQUIRE(back.dom->kind == d->kind);
        REQUIRE(back.dom->same_layout(*d));
        REQUIRE(bitwise_equal(back, f));
        std::remove(path.c_str());
        ++idx;
    }
}

TEST_CASE("arbitrary masks are encoded as run lengths") {
    Grid g = Grid::cube(3, -1.0, 1.0, 6);
    Rng rng(9);
    std::vector<std::uint8_t> mask(static_cast<size_t>(g.cell_count()), 0);
    for (auto& m : mask) m = rng.uniform() < 0.4 ? 1 : 0;
    mask[0] = 1;  // keep the mask non-empty
    DomainPtr d = share(DomainSpec::from_mask(g, mask));
    ScalarField f = random_scalar(d, 11);
    const std::string path = tmp_path("mask");
    write_mzf(path, f);
    ScalarField back = read_mzf_scalar(path);
    REQUIRE(back.dom->same_layout(*d));
    REQUIRE(bitwise_equal(back, f));
    std::remove(path.c_str());
}

TEST_CASE("many random fields round trip bit exactly") {
    Grid g = Grid::cube(3, -1.0, 1.0, 6);
    DomainPtr d = share(DomainSpec::box(g));
    for (std::uint64_t s = 0; s < 20; ++s) {
        ScalarField f = random_scalar(d, 1000 + s);
        const std::string path = tmp_path("many");
        write_mzf(path, f);
        REQUIRE(bitwise_equal(read_mzf_scalar(path), f));
        std::remove(path.c_str());
    }
}

TEST_CASE("bad magic is rejected with a byte offset") {
    const std::string path = tmp_path("badmagic");
    {
        std::ofstream out(path, std::ios::binary);
        out << "MZF2\n{}\n";
    }
    try {
        read_mzf_scalar(path);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        REQUIRE(std::string(e.what()).find("byte offset 0") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("truncated payload is rejected with a byte offset") {
    Grid g = Grid::cube(3, -1.0, 1.0, 4);
    DomainPtr d = share(DomainSpec::box(g));
    ScalarField f = random_scalar(d, 5);
    const std::string path = tmp_path("trunc");
    write_mzf(path, f);

    // drop the last 8 bytes
    std::string bytes;
    {
        std::ifstream in(path, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    {
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 8));
    }
    try {
        read_mzf_scalar(path);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        REQUIRE(std::string(e.what()).find("byte offset") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("malformed header is rejected") {
    const std::string path = tmp_path("badheader");
    {
        std::ofstream out(path, std::ios::binary);
        out << "MZF1\n{not json\n";
    }
    REQUIRE_THROWS_AS(read_mzf_scalar(path), std::invalid_argument);
    std::remove(path.c_str());
}

TEST_CASE("component count must match the reader") {
    Grid g = Grid::cube(3, -1.0, 1.0, 4);
    DomainPtr d = share(DomainSpec::box(g));
    VectorField u = random_vector(d, 3);
    const std::string path = tmp_path("comp");
    write_mzf(path, u);
    REQUIRE_THROWS_AS(read_mzf_scalar(path), std::invalid_argument);
    std::remove(path.c_str());

    ScalarField f = random_scalar(d, 4);
    write_mzf(path, f);
    REQUIRE_THROWS_AS(read_mzf_vector(path), std::invalid_argument);
    std::remove(path.c_str());
}

TEST_CASE("missing file is rejected") {
    REQUIRE_THROWS_AS(read_mzf_scalar("io_test_does_not_exist.mzf"), std::invalid_argument);
}

TEST_CASE("json dump pins float formatting") {
    json j;
    j["a"] = 0.1;
    j["b"] = 5.1298404667000003;
    j["c"] = {1.0, 2.5, -0.0};
    const std::string s1 = dump_json17(j);
    const std::string s2 = dump_json17(j);
    REQUIRE(s1 == s2);
    // every double survives a parse round trip
    json back = json::parse(s1);
    REQUIRE(back["a"].get<double>() == 0.1);
    REQUIRE(back["b"].get<double>() == 5.1298404667000003);
}
