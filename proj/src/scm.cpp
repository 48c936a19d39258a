#include "credo/scm.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "credo/json_file.hpp"

namespace credo {

double NoiseSpec::draw(std::mt19937_64& rng) const {
    switch (distribution) {
        case NoiseDistribution::none: return 0.0;
        case NoiseDistribution::gaussian: return std::normal_distribution<double>(first, second)(rng);
        case NoiseDistribution::uniform: return std::uniform_real_distribution<double>(first, second)(rng);
    }
    return 0.0;
}

double NoiseSpec::mean() const {
    switch (distribution) {
        case NoiseDistribution::none: return 0.0;
        case NoiseDistribution::gaussian: return first;
        case NoiseDistribution::uniform: return 0.5 * (first + second);
    }
    return 0.0;
}

NoiseDistribution noise_distribution_from_string(const std::string& s) {
    if (s == "none" || s == "constant") return NoiseDistribution::none;
    if (s == "gaussian" || s == "normal") return NoiseDistribution::gaussian;
    if (s == "uniform") return NoiseDistribution::uniform;
    throw GraphError("unsupported noise distribution '" + s + "'");
}

StructuralEquation StructuralEquation::linear(std::vector<std::string> parents, std::vector<double> coefficients,
                                              double intercept) {
    if (parents.size() != coefficients.size()) {
        throw GraphError("linear equation needs one coefficient per parent");
    }
    StructuralEquation eq;
    eq.form = Form::linear;
    eq.parents = std::move(parents);
    eq.coefficients = std::move(coefficients);
    eq.intercept = intercept;
    return eq;
}

StructuralEquation StructuralEquation::builtin(std::vector<std::string> parents, Closure closure) {
    StructuralEquation eq;
    eq.form = Form::builtin;
    eq.parents = std::move(parents);
    eq.closure = std::move(closure);
    return eq;
}

double StructuralEquation::apply(std::span<const double> parent_values, double noise) const {
    if (form == Form::builtin) return closure(parent_values, noise);
    double v = intercept + noise;
    for (std::size_t k = 0; k < coefficients.size(); ++k) v += coefficients[k] * parent_values[k];
    return v;
}

std::size_t CausalGraph::add_node(const std::string& name, NoiseSpec noise) {
    if (index_.count(name)) throw GraphError("duplicate node '" + name + "'");
    const std::size_t id = names_.size();
    names_.push_back(name);
    index_[name] = id;
    noise_.push_back(noise);
    edge_parents_.emplace_back();
    equations_.emplace_back();
    has_equation_.push_back(false);
    finalized_ = false;
    return id;
}

std::size_t CausalGraph::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw GraphError("unknown node '" + name + "'");
    return it->second;
}

void CausalGraph::add_edge(const std::string& parent, const std::string& child) {
    index_of(parent);
    auto& ps = edge_parents_[index_of(child)];
    if (std::find(ps.begin(), ps.end(), parent) != ps.end()) {
        throw GraphError("duplicate edge " + parent + " -> " + child);
    }
    ps.push_back(parent);
    finalized_ = false;
}

void CausalGraph::set_equation(const std::string& child, StructuralEquation equation) {
    const std::size_t id = index_of(child);
    for (const auto& p : equation.parents) index_of(p);
    if (equation.form == StructuralEquation::Form::linear &&
        equation.coefficients.size() != equation.parents.size()) {
        throw GraphError("equation for '" + child + "' needs one coefficient per parent");
    }
    equations_[id] = std::move(equation);
    has_equation_[id] = true;
    finalized_ = false;
}

void CausalGraph::finalize() {
    const std::size_t n = names_.size();
    parent_idx_.assign(n, {});
    for (std::size_t v = 0; v < n; ++v) {
        if (!has_equation_[v]) {
            if (!edge_parents_[v].empty()) {
                throw GraphError("node '" + names_[v] + "' has parents but no structural equation");
            }
            equations_[v] = StructuralEquation::linear({}, {}, 0.0);
            has_equation_[v] = true;
        }
        const auto& eq = equations_[v];
        const std::set<std::string> declared(eq.parents.begin(), eq.parents.end());
        const std::set<std::string> edges(edge_parents_[v].begin(), edge_parents_[v].end());
        if (declared != edges || declared.size() != eq.parents.size()) {
            throw GraphError("equation parents of '" + names_[v] + "' do not match its incoming edges");
        }
        for (const auto& p : eq.parents) parent_idx_[v].push_back(index_of(p));
    }

    // Kahn's algorithm; ties resolved by declaration order for determinism.
    std::vector<std::size_t> indegree(n, 0);
    std::vector<std::vector<std::size_t>> children(n);
    for (std::size_t v = 0; v < n; ++v) {
        indegree[v] = parent_idx_[v].size();
        for (auto p : parent_idx_[v]) children[p].push_back(v);
    }
    std::set<std::size_t> ready;
    for (std::size_t v = 0; v < n; ++v) {
        if (indegree[v] == 0) ready.insert(v);
    }
    order_.clear();
    while (!ready.empty()) {
        const std::size_t v = *ready.begin();
        ready.erase(ready.begin());
        order_.push_back(v);
        for (auto c : children[v]) {
            if (--indegree[c] == 0) ready.insert(c);
        }
    }
    if (order_.size() != n) {
        std::string cyc;
        for (std::size_t v = 0; v < n; ++v) {
            if (indegree[v] > 0) cyc += (cyc.empty() ? "" : ", ") + names_[v];
        }
        throw GraphError("causal graph has a cycle through: " + cyc);
    }
    finalized_ = true;
}

const std::vector<std::size_t>& CausalGraph::topological_order() const {
    if (!finalized_) throw GraphError("graph not finalized");
    return order_;
}

bool CausalGraph::has_path(std::size_t from, std::size_t to) const {
    if (!finalized_) throw GraphError("graph not finalized");
    std::vector<char> seen(names_.size(), 0);
    std::vector<std::size_t> stack{to};
    // Walk parents backwards from `to`.
    while (!stack.empty()) {
        const std::size_t v = stack.back();
        stack.pop_back();
        for (auto p : parent_idx_[v]) {
            if (p == from) return true;
            if (!seen[p]) {
                seen[p] = 1;
                stack.push_back(p);
            }
        }
    }
    return false;
}

CausalGraph CausalGraph::intervened(const std::map<std::string, double>& assignments) const {
    CausalGraph g = *this;
    for (const auto& [name, value] : assignments) {
        const std::size_t v = g.index_of(name);
        g.edge_parents_[v].clear();
        g.noise_[v] = NoiseSpec::none();
        g.equations_[v] = StructuralEquation::linear({}, {}, value);
        g.has_equation_[v] = true;
    }
    g.finalize();
    return g;
}

Matrix sample(const CausalGraph& graph, std::size_t n, std::uint64_t seed) {
    const auto& order = graph.topological_order();
    Matrix out(n, graph.size());
    std::mt19937_64 rng(seed);
    std::vector<double> parent_values;
    for (std::size_t r = 0; r < n; ++r) {
        auto row = out.row(r);
        for (auto v : order) {
            const auto& ps = graph.parents(v);
            parent_values.resize(ps.size());
            for (std::size_t k = 0; k < ps.size(); ++k) parent_values[k] = row[ps[k]];
            const double noise = graph.noise(v).draw(rng);
            row[v] = graph.equation(v).apply(parent_values, noise);
        }
    }
    return out;
}

Matrix intervene_sample(const CausalGraph& graph, const std::map<std::string, double>& assignments,
                        std::size_t n, std::uint64_t seed) {
    return sample(graph.intervened(assignments), n, seed);
}

void RoleAssignment::validate(std::size_t feature_count) const {
    std::vector<int> seen(feature_count, 0);
    auto mark = [&](std::size_t i) {
        if (i >= feature_count) throw GraphError("role index out of range");
        if (seen[i]++) throw GraphError("feature " + std::to_string(i) + " assigned to more than one role");
    };
    mark(treatment);
    for (auto z : mediators) mark(z);
    for (auto w : covariates) mark(w);
    for (std::size_t i = 0; i < feature_count; ++i) {
        if (!seen[i]) throw GraphError("feature " + std::to_string(i) + " has no role");
    }
}

namespace {

std::size_t feature_index(const std::vector<std::string>& feature_names, const std::string& name) {
    auto it = std::find(feature_names.begin(), feature_names.end(), name);
    if (it == feature_names.end()) throw GraphError("'" + name + "' is not a model feature");
    return static_cast<std::size_t>(it - feature_names.begin());
}

RoleAssignment build_roles(const CausalGraph& graph, const std::vector<std::string>& feature_names,
                           std::size_t treatment, std::vector<std::size_t> mediators, double baseline) {
    // Topological order of the graph decides mediator order.
    std::vector<std::size_t> position(graph.size());
    const auto& order = graph.topological_order();
    for (std::size_t k = 0; k < order.size(); ++k) position[order[k]] = k;
    std::sort(mediators.begin(), mediators.end(), [&](std::size_t a, std::size_t b) {
        return position[graph.index_of(feature_names[a])] < position[graph.index_of(feature_names[b])];
    });

    RoleAssignment roles;
    roles.treatment = treatment;
    roles.mediators = std::move(mediators);
    roles.baseline = baseline;
    for (std::size_t i = 0; i < feature_names.size(); ++i) {
        if (i != treatment && std::find(roles.mediators.begin(), roles.mediators.end(), i) == roles.mediators.end()) {
            roles.covariates.push_back(i);
        }
    }
    roles.validate(feature_names.size());
    return roles;
}

}  // namespace

RoleAssignment make_roles(const CausalGraph& graph, const std::vector<std::string>& feature_names,
                          const std::string& treatment, const std::vector<std::string>& mediators,
                          double baseline, const std::optional<std::string>& outcome) {
    const std::size_t t = feature_index(feature_names, treatment);
    const std::size_t tg = graph.index_of(treatment);
    std::vector<std::size_t> ms;
    for (const auto& m : mediators) {
        const std::size_t mg = graph.index_of(m);
        if (!graph.has_path(tg, mg)) throw GraphError("mediator '" + m + "' is not downstream of '" + treatment + "'");
        if (outcome && !graph.has_path(mg, graph.index_of(*outcome))) {
            throw GraphError("mediator '" + m + "' has no directed path to '" + *outcome + "'");
        }
        ms.push_back(feature_index(feature_names, m));
    }
    return build_roles(graph, feature_names, t, std::move(ms), baseline);
}

RoleAssignment derive_roles(const CausalGraph& graph, const std::vector<std::string>& feature_names,
                            const std::string& treatment, double baseline,
                            const std::optional<std::string>& outcome) {
    const std::size_t t = feature_index(feature_names, treatment);
    const std::size_t tg = graph.index_of(treatment);
    std::vector<std::size_t> ms;
    for (std::size_t i = 0; i < feature_names.size(); ++i) {
        if (i == t || !graph.contains(feature_names[i])) continue;
        const std::size_t g = graph.index_of(feature_names[i]);
        if (!graph.has_path(tg, g)) continue;
        if (outcome && !graph.has_path(g, graph.index_of(*outcome))) continue;
        ms.push_back(i);
    }
    return build_roles(graph, feature_names, t, std::move(ms), baseline);
}

double MediatorRegressor::predict(std::span<const double> features) const {
    double v = intercept;
    for (std::size_t k = 0; k < parents.size(); ++k) v += coefficients[k] * features[parents[k]];
    return v;
}

MediatorModel fit_mediators(const Matrix& features, const std::vector<std::string>& feature_names,
                            const CausalGraph& graph, const RoleAssignment& roles) {
    if (features.cols() != feature_names.size()) throw GraphError("feature names do not match data width");
    const auto n = static_cast<Eigen::Index>(features.rows());
    MediatorModel model;
    for (auto m : roles.mediators) {
        const std::string& name = feature_names[m];
        const std::size_t g = graph.index_of(name);
        MediatorRegressor reg;
        reg.mediator = m;
        for (auto p : graph.parents(g)) {
            const std::string& pname = graph.names()[p];
            auto it = std::find(feature_names.begin(), feature_names.end(), pname);
            if (it == feature_names.end()) {
                throw GraphError("parent '" + pname + "' of mediator '" + name + "' is not observed");
            }
            reg.parents.push_back(static_cast<std::size_t>(it - feature_names.begin()));
        }
        const auto k = static_cast<Eigen::Index>(reg.parents.size());
        if (n <= k) throw GraphError("too few rows to fit mediator '" + name + "'");

        Eigen::MatrixXd design(n, k + 1);
        Eigen::VectorXd target(n);
        for (Eigen::Index r = 0; r < n; ++r) {
            const auto row = features.row(static_cast<std::size_t>(r));
            design(r, 0) = 1.0;
            for (Eigen::Index c = 0; c < k; ++c) design(r, c + 1) = row[reg.parents[static_cast<std::size_t>(c)]];
            target(r) = row[m];
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
        if (qr.rank() < k + 1) throw GraphError("rank-deficient design when fitting mediator '" + name + "'");
        const Eigen::VectorXd beta = qr.solve(target);
        reg.intercept = beta(0);
        for (Eigen::Index c = 0; c < k; ++c) reg.coefficients.push_back(beta(c + 1));
        const Eigen::VectorXd resid = target - design * beta;
        reg.residual_variance = resid.squaredNorm() / static_cast<double>(n - k - 1);
        model.regressors.push_back(std::move(reg));
    }
    return model;
}

std::vector<double> mediator_values(const MediatorModel& mediators, const RoleAssignment& roles,
                                    std::span<const double> x, double t) {
    if (mediators.regressors.size() != roles.mediators.size()) {
        throw GraphError("mediator model does not match role assignment");
    }
    if (roles.mediators.empty()) return {};
    std::vector<double> row(x.begin(), x.end());
    row[roles.treatment] = t;
    std::vector<double> out;
    out.reserve(roles.mediators.size());
    for (const auto& reg : mediators.regressors) {
        row[reg.mediator] = reg.predict(row);
        out.push_back(row[reg.mediator]);
    }
    return out;
}

std::vector<double> counterfactual_row(const MediatorModel& mediators, const RoleAssignment& roles,
                                       std::span<const double> x, double t, double t_mediators) {
    std::vector<double> row(x.begin(), x.end());
    const auto z = mediator_values(mediators, roles, x, t_mediators);
    for (std::size_t k = 0; k < z.size(); ++k) row[roles.mediators[k]] = z[k];
    row[roles.treatment] = t;
    return row;
}

std::vector<double> mediator_sensitivities(const MediatorModel& mediators, const RoleAssignment& roles) {
    if (mediators.regressors.size() != roles.mediators.size()) {
        throw GraphError("mediator model does not match role assignment");
    }
    std::vector<double> d(mediators.regressors.size(), 0.0);
    for (std::size_t k = 0; k < mediators.regressors.size(); ++k) {
        const auto& reg = mediators.regressors[k];
        double total = 0.0;
        for (std::size_t p = 0; p < reg.parents.size(); ++p) {
            const std::size_t parent = reg.parents[p];
            if (parent == roles.treatment) {
                total += reg.coefficients[p];
                continue;
            }
            for (std::size_t j = 0; j < k; ++j) {
                if (roles.mediators[j] == parent) total += reg.coefficients[p] * d[j];
            }
        }
        d[k] = total;
    }
    return d;
}

GraphFile parse_graph_text(const std::string& text, const std::string& path) {
    const JsonDocument doc = parse_json_text(text, path);
    const auto& j = doc.root;
    if (!j.is_object()) doc.fail("", "graph file must hold a JSON object");
    if (!j.contains("nodes") || !j["nodes"].is_array()) doc.fail("nodes", "missing \"nodes\" array");

    GraphFile out;
    auto& g = out.graph;
    for (const auto& node : j["nodes"]) {
        const std::string name = node.value("name", std::string());
        if (name.empty()) doc.fail("nodes", "node without a name");
        NoiseSpec noise;
        if (node.contains("noise")) {
            const auto& jn = node["noise"];
            try {
                noise.distribution = noise_distribution_from_string(jn.value("dist", std::string("gaussian")));
            } catch (const std::exception& e) {
                doc.fail(name, e.what());
            }
            if (jn.contains("params")) {
                const auto& p = jn["params"];
                if (p.is_array()) {
                    const auto v = p.get<std::vector<double>>();
                    if (noise.distribution != NoiseDistribution::none && v.size() != 2) {
                        doc.fail(name, "noise params for '" + name + "' need two values");
                    }
                    if (v.size() >= 1) noise.first = v[0];
                    if (v.size() >= 2) noise.second = v[1];
                } else if (p.is_object()) {
                    if (noise.distribution == NoiseDistribution::uniform) {
                        noise.first = p.value("low", 0.0);
                        noise.second = p.value("high", 1.0);
                    } else {
                        noise.first = p.value("mean", 0.0);
                        noise.second = p.value("std", 1.0);
                    }
                }
            } else if (noise.distribution == NoiseDistribution::gaussian) {
                noise.second = 1.0;
            } else if (noise.distribution == NoiseDistribution::uniform) {
                noise.second = 1.0;
            }
        }
        try {
            g.add_node(name, noise);
        } catch (const std::exception& e) {
            doc.fail(name, e.what());
        }
    }

    if (j.contains("edges")) {
        for (const auto& e : j["edges"]) {
            if (!e.is_array() || e.size() != 2) doc.fail("edges", "edges must be [parent, child] pairs");
            const auto parent = e[0].get<std::string>();
            const auto child = e[1].get<std::string>();
            for (const auto& end : {parent, child}) {
                if (!g.contains(end)) doc.fail(end, "edge references undeclared variable '" + end + "'");
            }
            try {
                g.add_edge(parent, child);
            } catch (const std::exception& ex) {
                doc.fail(child, ex.what());
            }
        }
    }

    // Parent order for each equation follows its coefficient listing, so the
    // file is insensitive to node and edge ordering.
    if (j.contains("equations")) {
        for (const auto& eq : j["equations"]) {
            const std::string child = eq.value("child", std::string());
            if (!g.contains(child)) doc.fail(child.empty() ? "equations" : child, "equation for undeclared variable '" + child + "'");
            const std::string type = eq.value("type", std::string("linear"));
            if (type != "linear" && type != "linear-gaussian" && type != "linear_gaussian") {
                doc.fail(child, "unsupported equation type '" + type + "' for '" + child + "'");
            }
            std::vector<std::string> parents;
            std::vector<double> coeffs;
            if (eq.contains("coeffs") && eq["coeffs"].is_object()) {
                for (const auto& [p, c] : eq["coeffs"].items()) {
                    parents.push_back(p);
                    coeffs.push_back(c.get<double>());
                }
            } else if (eq.contains("coeffs")) {
                coeffs = eq["coeffs"].get<std::vector<double>>();
                if (!eq.contains("parents")) doc.fail(child, "array coeffs for '" + child + "' need a \"parents\" list");
                parents = eq["parents"].get<std::vector<std::string>>();
            }
            for (const auto& p : parents) {
                if (!g.contains(p)) doc.fail(p, "equation for '" + child + "' references undeclared variable '" + p + "'");
            }
            try {
                g.set_equation(child, StructuralEquation::linear(parents, coeffs, eq.value("intercept", 0.0)));
            } catch (const std::exception& ex) {
                doc.fail(child, ex.what());
            }
        }
    }

    try {
        g.finalize();
    } catch (const std::exception& e) {
        doc.fail(j.contains("edges") ? "edges" : "nodes", e.what());
    }

    if (j.contains("roles")) {
        const auto& r = j["roles"];
        if (r.contains("treatment")) {
            out.treatment = r["treatment"].get<std::string>();
            if (!g.contains(*out.treatment)) doc.fail(*out.treatment, "unknown treatment '" + *out.treatment + "'");
        }
        out.mediators = r.value("mediators", std::vector<std::string>{});
        for (const auto& m : out.mediators) {
            if (!g.contains(m)) doc.fail(m, "unknown mediator '" + m + "'");
        }
        out.baseline = r.value("baseline", 0.0);
        if (r.contains("outcome")) out.outcome = r["outcome"].get<std::string>();
    }
    if (j.contains("outcome")) out.outcome = j["outcome"].get<std::string>();
    if (out.outcome && !g.contains(*out.outcome)) doc.fail(*out.outcome, "unknown outcome '" + *out.outcome + "'");
    return out;
}

GraphFile load_graph_file(const std::string& path) {
    const JsonDocument doc = read_json_file(path);
    return parse_graph_text(doc.text, path);
}

CausalGraph synthetic_tabular4_graph() {
    CausalGraph g;
    g.add_node("W", NoiseSpec::gaussian(0.0, 1.0));
    g.add_node("Z", NoiseSpec::gaussian(4.0, 1.0));
    g.add_node("X", NoiseSpec::gaussian(2.0, 1.0));
    g.add_node("Y", NoiseSpec::gaussian(0.0, 0.1));
    g.add_edge("W", "Z");
    g.add_edge("Z", "X");
    g.add_edge("X", "Y");
    g.add_edge("Z", "Y");
    g.add_edge("W", "Y");
    g.set_equation("Z", StructuralEquation::linear({"W"}, {-2.0}));
    g.set_equation("X", StructuralEquation::linear({"Z"}, {0.5}));
    g.set_equation("Y", StructuralEquation::linear({"X", "Z", "W"}, {2.0, 1.0, 1.0}));
    g.finalize();
    return g;
}

}  // namespace credo
