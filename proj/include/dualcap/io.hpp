#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualcap/bound.hpp"
#include "dualcap/channel.hpp"
#include "dualcap/qgraph.hpp"
#include "dualcap/test_dist.hpp"

namespace dualcap {

using nlohmann::json;

// ------------------------------------------------------------- file helpers

// Write-then-rename so partially written outputs are never observed.
inline void atomic_write_file(const std::string& path, const std::string& contents) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
        out << contents;
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, target);
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    json j;
    in >> j;
    return j;
}

// ----------------------------------------------------------------- channels

inline json channel_to_json(const Fsc& ch) {
    json j;
    j["states"] = ch.state_count();
    j["inputs"] = ch.input_count();
    j["outputs"] = ch.output_count();
    if (!ch.output_labels().empty()) j["output_labels"] = ch.output_labels();
    auto kernel = json::array();
    for (int s = 0; s < ch.state_count(); ++s) {
        auto js = json::array();
        for (int x = 0; x < ch.input_count(); ++x) {
            auto jx = json::array();
            for (int sp = 0; sp < ch.state_count(); ++sp) {
                auto jsp = json::array();
                for (int y = 0; y < ch.output_count(); ++y) jsp.push_back(ch.prob(s, x, sp, y));
                jx.push_back(std::move(jsp));
            }
            js.push_back(std::move(jx));
        }
        kernel.push_back(std::move(js));
    }
    j["kernel"] = std::move(kernel);
    return j;
}

// Accepts either the full kernel or the unifilar pair
// {"unifilar": {"f": f[x][y][s], "pyxs": p[x][s][y]}}; always expands to the
// dense kernel internally.
inline Fsc channel_from_json(const json& j) {
    int ns = j.at("states").get<int>();
    int nx = j.at("inputs").get<int>();
    int ny = j.at("outputs").get<int>();
    std::vector<std::string> labels;
    if (j.contains("output_labels")) labels = j.at("output_labels").get<std::vector<std::string>>();
    if (j.contains("kernel")) {
        const auto& k = j.at("kernel");
        std::vector<double> kernel(static_cast<std::size_t>(ns) * nx * ns * ny);
        for (int s = 0; s < ns; ++s)
            for (int x = 0; x < nx; ++x)
                for (int sp = 0; sp < ns; ++sp)
                    for (int y = 0; y < ny; ++y)
                        kernel[((static_cast<std::size_t>(s) * nx + x) * ns + sp) * ny + y] =
                            k.at(s).at(x).at(sp).at(y).get<double>();
        return Fsc(ns, nx, ny, std::move(kernel), std::move(labels));
    }
    if (j.contains("unifilar")) {
        const auto& u = j.at("unifilar");
        const auto& f = u.at("f");
        const auto& pyxs = u.at("pyxs");
        return make_unifilar_fsc(
            ns, nx, ny,
            [&](int y, int x, int s) { return pyxs.at(x).at(s).at(y).get<double>(); },
            [&](int x, int y, int s) { return f.at(x).at(y).at(s).get<int>(); }, std::move(labels));
    }
    throw std::runtime_error("channel JSON needs either \"kernel\" or \"unifilar\"");
}

// ----------------------------------------------------------------- Q-graphs

inline json qgraph_to_json(const QGraph& g) {
    json j;
    j["nodes"] = g.node_count();
    j["outputs"] = g.output_count();
    auto phi = json::array();
    for (int q = 0; q < g.node_count(); ++q) {
        auto row = json::array();
        for (int y = 0; y < g.output_count(); ++y) row.push_back(g.step(q, y));
        phi.push_back(std::move(row));
    }
    j["phi"] = std::move(phi);
    j["q0"] = g.initial_node();
    return j;
}

inline QGraph qgraph_from_json(const json& j) {
    int n = j.at("nodes").get<int>();
    int ny = j.at("outputs").get<int>();
    std::vector<int> phi(static_cast<std::size_t>(n) * ny);
    for (int q = 0; q < n; ++q)
        for (int y = 0; y < ny; ++y) phi[static_cast<std::size_t>(q) * ny + y] = j.at("phi").at(q).at(y).get<int>();
    int q0 = j.value("q0", 0);
    return QGraph(n, ny, std::move(phi), q0);
}

// ----------------------------------------------------- test distributions

inline json test_dist_to_json(const TestDist& r) {
    json j;
    auto table = json::array();
    for (int q = 0; q < r.node_count(); ++q) {
        auto row = json::array();
        for (int y = 0; y < r.output_count(); ++y) row.push_back(r.prob(q, y));
        table.push_back(std::move(row));
    }
    j["table"] = std::move(table);
    return j;
}

inline TestDist test_dist_from_json(const json& j) {
    const auto& t = j.at("table");
    int nq = static_cast<int>(t.size());
    int ny = static_cast<int>(t.at(0).size());
    std::vector<double> table(static_cast<std::size_t>(nq) * ny);
    for (int q = 0; q < nq; ++q)
        for (int y = 0; y < ny; ++y) table[static_cast<std::size_t>(q) * ny + y] = t.at(q).at(y).get<double>();
    return TestDist(nq, ny, std::move(table));
}

// ------------------------------------------------------------ bound results

inline json bound_result_to_json(const BoundResult& b) {
    json j;
    j["value"] = b.value;
    j["method"] = b.method;
    json d;
    d["span"] = b.diagnostics.span;
    d["iterations"] = b.diagnostics.iterations;
    d["converged"] = b.diagnostics.converged;
    d["grid_delta"] = b.diagnostics.grid_delta;
    d["state_count"] = b.diagnostics.state_count;
    d["materialization"] = b.diagnostics.materialization;
    d["policy_digest"] = b.diagnostics.policy_digest;
    d["init_sensitivity"] = b.diagnostics.init_sensitivity;
    d["residual"] = b.diagnostics.residual;
    j["diagnostics"] = std::move(d);
    json p;
    p["channel"] = b.provenance.channel;
    p["qgraph"] = b.provenance.qgraph;
    p["test_dist"] = b.provenance.test_dist;
    j["provenance"] = std::move(p);
    return j;
}

inline BoundResult bound_result_from_json(const json& j) {
    BoundResult b;
    b.value = j.at("value").get<double>();
    b.method = j.at("method").get<std::string>();
    const auto& d = j.at("diagnostics");
    b.diagnostics.span = d.at("span").get<double>();
    b.diagnostics.iterations = d.at("iterations").get<int>();
    b.diagnostics.converged = d.at("converged").get<bool>();
    b.diagnostics.grid_delta = d.at("grid_delta").get<double>();
    b.diagnostics.state_count = d.at("state_count").get<int>();
    b.diagnostics.materialization = d.at("materialization").get<std::string>();
    b.diagnostics.policy_digest = d.at("policy_digest").get<std::string>();
    b.diagnostics.init_sensitivity = d.at("init_sensitivity").get<double>();
    b.diagnostics.residual = d.at("residual").get<double>();
    const auto& p = j.at("provenance");
    b.provenance.channel = p.at("channel").get<std::string>();
    b.provenance.qgraph = p.at("qgraph").get<std::string>();
    b.provenance.test_dist = p.at("test_dist").get<std::string>();
    return b;
}

}  // namespace dualcap
