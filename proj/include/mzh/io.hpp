#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mzh/grid.hpp"
#include "mzh/verify.hpp"

namespace mzh {

using json = nlohmann::ordered_json;

// Domain descriptor for the MZF1 header. Geometric kinds serialize their
// parameters; explicit masks serialize as alternating out/in run lengths.
inline json domain_json(const DomainSpec& d) {
    json j;
    switch (d.kind) {
        case DomainKind::Box:
            j["kind"] = "box";
            break;
        case DomainKind::Ball:
            j["kind"] = "ball";
            j["center"] = d.center;
            j["radius"] = d.radius;
            break;
        case DomainKind::HalfSpace:
            j["kind"] = "halfspace";
            break;
        case DomainKind::Graph:
            j["kind"] = "graph";
            j["lipschitz"] = d.lipschitz;
            j["sigma"] = d.sigma;
            break;
        case DomainKind::StarUnion: {
            j["kind"] = "star-union";
            json ps = json::array();
            for (const auto& p : d.pieces)
                ps.push_back(json{{"center", p.center},
                                  {"radius", p.radius},
                                  {"star_center", p.star_center},
                                  {"star_radius", p.star_radius}});
            j["pieces"] = std::move(ps);
            break;
        }
        case DomainKind::BoxMinusBall:
            j["kind"] = "box-minus-ball";
            j["center"] = d.center;
            j["radius"] = d.radius;
            break;
    }
    if (d.kind == DomainKind::Box) {
        // A Box kind may carry a nontrivial mask (from_mask); record it.
        bool full = true;
        for (auto b : d.mask)
            if (!b) {
                full = false;
                break;
            }
        if (!full) {
            j["kind"] = "mask";
            std::vector<i64> runs;
            std::uint8_t cur = 0;
            i64 len = 0;
            for (auto b : d.mask) {
                if ((b != 0) == (cur != 0)) {
                    ++len;
                } else {
                    runs.push_back(len);
                    cur = b;
                    len = 1;
                }
            }
            runs.push_back(len);
            j["runs"] = runs;
        }
    }
    return j;
}

inline DomainSpec domain_from_json(const Grid& g, const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "box") return DomainSpec::box(g);
    if (kind == "halfspace") return DomainSpec::half_space(g);
    if (kind == "ball")
        return DomainSpec::ball(g, j.at("center").get<std::vector<double>>(), j.at("radius").get<double>());
    if (kind == "graph")
        return DomainSpec::graph(g, j.at("sigma").get<std::vector<double>>(), j.at("lipschitz").get<double>());
    if (kind == "box-minus-ball")
        return DomainSpec::box_minus_ball(g, j.at("center").get<std::vector<double>>(), j.at("radius").get<double>());
    if (kind == "star-union") {
        std::vector<StarPiece> ps;
        for (const auto& pj : j.at("pieces")) {
            StarPiece p;
            p.center = pj.at("center").get<std::vector<double>>();
            p.radius = pj.at("radius").get<double>();
            p.star_center = pj.at("star_center").get<std::vector<double>>();
            p.star_radius = pj.at("star_radius").get<double>();
            ps.push_back(std::move(p));
        }
        return DomainSpec::star_union(g, std::move(ps));
    }
    if (kind == "mask") {
        std::vector<std::uint8_t> mask(static_cast<size_t>(g.cell_count()), 0);
        std::uint8_t cur = 0;
        size_t at = 0;
        for (const auto& rj : j.at("runs")) {
            const i64 len = rj.get<i64>();
            for (i64 i = 0; i < len; ++i) mask[at++] = cur;
            cur = cur ? 0 : 1;
        }
        if (at != mask.size()) throw std::invalid_argument("domain_from_json: mask runs do not cover the box");
        return DomainSpec::from_mask(g, std::move(mask));
    }
    throw std::invalid_argument("domain_from_json: unknown kind " + kind);
}

namespace detail {

inline json mzf_header(const DomainSpec& d, int components) {
    json j;
    j["n"] = d.grid.n;
    j["shape"] = d.grid.shape;
    j["origin"] = d.grid.origin;
    j["spacing"] = d.grid.spacing;
    j["components"] = components;
    j["domain"] = domain_json(d);
    return j;
}

inline void write_payload(std::ostream& os, const std::vector<double>& vals) {
    static_assert(sizeof(double) == 8);
    os.write(reinterpret_cast<const char*>(vals.data()),
             static_cast<std::streamsize>(vals.size() * sizeof(double)));
}

struct MzfRaw {
    DomainPtr dom;
    std::vector<std::vector<double>> comp;
};

inline MzfRaw read_mzf_raw(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::invalid_argument("read_mzf: cannot open " + path);
    std::string magic;
    std::getline(is, magic);
    if (magic != "MZF1") throw std::invalid_argument("read_mzf: bad magic at byte offset 0 in " + path);
    std::string header;
    std::getline(is, header);
    json j;
    try {
        j = json::parse(header);
    } catch (const json::exception& e) {
        throw std::invalid_argument("read_mzf: bad header at byte offset " + std::to_string(magic.size() + 1) +
                                    " in " + path + ": " + e.what());
    }

    Grid g(j.at("shape").get<std::vector<int>>(), j.at("origin").get<std::vector<double>>(),
           j.at("spacing").get<std::vector<double>>());
    if (g.n != j.at("n").get<int>()) throw std::invalid_argument("read_mzf: header rank mismatch");
    MzfRaw raw;
    raw.dom = share(domain_from_json(g, j.at("domain")));
    const int components = j.at("components").get<int>();
    if (components < 1) throw std::invalid_argument("read_mzf: bad component count");

    raw.comp.resize(static_cast<size_t>(components));
    const i64 count = raw.dom->size();
    std::streamsize offset = static_cast<std::streamsize>(magic.size() + 1 + header.size() + 1);
    for (auto& c : raw.comp) {
        c.resize(static_cast<size_t>(count));
        is.read(reinterpret_cast<char*>(c.data()), static_cast<std::streamsize>(c.size() * sizeof(double)));
        if (is.gcount() != static_cast<std::streamsize>(c.size() * sizeof(double)))
            throw std::invalid_argument("read_mzf: truncated payload at byte offset " +
                                        std::to_string(offset + is.gcount()) + " in " + path);
        offset += is.gcount();
    }
    return raw;
}

}  // namespace detail

inline void write_mzf(const std::string& path, const ScalarField& f) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::invalid_argument("write_mzf: cannot open " + path);
    os << "MZF1\n" << detail::mzf_header(*f.dom, 1).dump() << "\n";
    detail::write_payload(os, f.values);
    if (!os) throw std::runtime_error("write_mzf: write failed for " + path);
}

inline void write_mzf(const std::string& path, const VectorField& u) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::invalid_argument("write_mzf: cannot open " + path);
    os << "MZF1\n" << detail::mzf_header(*u.dom, u.dims()).dump() << "\n";
    for (const auto& c : u.comp) detail::write_payload(os, c);
    if (!os) throw std::runtime_error("write_mzf: write failed for " + path);
}

inline ScalarField read_mzf_scalar(const std::string& path) {
    auto raw = detail::read_mzf_raw(path);
    if (raw.comp.size() != 1) throw std::invalid_argument("read_mzf_scalar: file holds a vector field");
    ScalarField f(raw.dom);
    f.values = std::move(raw.comp.front());
    return f;
}

inline VectorField read_mzf_vector(const std::string& path) {
    auto raw = detail::read_mzf_raw(path);
    if (static_cast<int>(raw.comp.size()) != raw.dom->grid.n)
        throw std::invalid_argument("read_mzf_vector: component count does not match dimension");
    VectorField u(raw.dom);
    u.comp = std::move(raw.comp);
    return u;
}

inline json report_json(const InequalityReport& r) {
    json j;
    j["id"] = r.id;
    json params;
    for (const auto& [k, v] : r.params) params[k] = v;
    j["params"] = std::move(params);
    j["samples"] = r.samples;
    j["worst_ratio"] = r.worst_ratio;
    j["threshold"] = r.threshold;
    j["ratios"] = r.ratios;
    return j;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::invalid_argument("write_text: cannot open " + path);
    os << text;
    if (!os) throw std::runtime_error("write_text: write failed for " + path);
}

namespace detail {

inline void dump17(const json& j, std::string& out, int indent, int depth) {
    const std::string pad(static_cast<size_t>(indent * (depth + 1)), ' ');
    const std::string close_pad(static_cast<size_t>(indent * depth), ' ');
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += "{\n";
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out += ",\n";
                first = false;
                out += pad + json(it.key()).dump() + ": ";
                dump17(it.value(), out, indent, depth + 1);
            }
            out += "\n" + close_pad + "}";
            return;
        }
        case json::value_t::array: {
            if (j.empty()) {
                out += "[]";
                return;
            }
            out += "[\n";
            bool first = true;
            for (const auto& e : j) {
                if (!first) out += ",\n";
                first = false;
                out += pad;
                dump17(e, out, indent, depth + 1);
            }
            out += "\n" + close_pad + "]";
            return;
        }
        case json::value_t::number_float: {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", j.get<double>());
            out += buf;
            return;
        }
        default:
            out += j.dump();
            return;
    }
}

}  // namespace detail

// JSON text with floats at 17 significant digits, so identical inputs give
// byte-identical report files.
inline std::string dump_json17(const json& j, int indent = 2) {
    std::string out;
    detail::dump17(j, out, indent, 0);
    out += "\n";
    return out;
}

}  // namespace mzh
