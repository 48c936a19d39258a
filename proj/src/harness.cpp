#include "credo/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <set>
#include <sstream>

#include "credo/io_util.hpp"
#include "credo/json_file.hpp"
#include "credo/seeding.hpp"

namespace credo {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestFormat = "credo-run-manifest";

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string resolve_path(const std::string& p, const std::string& base_dir) {
    if (p.empty()) return p;
    fs::path path(p);
    if (path.is_relative()) path = fs::path(base_dir) / path;
    return fs::absolute(path).lexically_normal().string();
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback, const std::string& source) {
    if (!j.contains(key) || j[key].is_null()) return fallback;
    try {
        return j[key].get<T>();
    } catch (const std::exception& e) {
        throw ConfigError(source + ": field '" + key + "' has the wrong type");
    }
}

std::string file_stem_for(const std::string& key) {
    std::string out;
    for (char ch : key) out += std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' ? ch : '_';
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j, const std::string& base_dir, const std::string& source) {
    if (!j.is_object()) throw ConfigError(source + ": config must be a JSON object");
    ExperimentConfig c;
    c.name = get_or<std::string>(j, "name", c.name, source);
    c.seed = get_or<std::uint64_t>(j, "seed", 0, source);

    if (!j.contains("data") || !j["data"].is_object()) throw ConfigError(source + ": missing \"data\" section");
    const auto& d = j["data"];
    auto& ds = c.data;
    if (d.contains("recipe")) {
        ds.kind = "recipe";
        ds.recipe.id = d["recipe"].get<std::string>();
        ds.recipe.n = get_or<std::size_t>(d, "n", ds.recipe.id == "tabular4" ? 10000 : 1000, source);
        ds.recipe.seed = get_or<std::uint64_t>(d, "seed", derive_seed(c.seed, "data"), source);
        if (ds.recipe.id != "tabular1" && ds.recipe.id != "tabular2" && ds.recipe.id != "tabular3" &&
            ds.recipe.id != "tabular4") {
            throw ConfigError(source + ": unknown recipe '" + ds.recipe.id + "'");
        }
    } else if (d.contains("csv")) {
        ds.kind = "csv";
        ds.path = resolve_path(d["csv"].get<std::string>(), base_dir);
        ds.schema.target = get_or<std::string>(d, "target", "", source);
        if (ds.schema.target.empty()) throw ConfigError(source + ": csv data needs a \"target\" column");
        ds.schema.features = get_or<std::vector<std::string>>(d, "features", {}, source);
        ds.schema.one_hot = get_or<std::vector<std::string>>(d, "one_hot", {}, source);
        ds.schema.task = task_from_string(get_or<std::string>(d, "task", "regression", source));
        ds.binarize = get_or<bool>(d, "binarize", false, source);
        ds.recipe.seed = 0;
    } else if (d.contains("graph")) {
        ds.kind = "graph";
        ds.path = resolve_path(d["graph"].get<std::string>(), base_dir);
        ds.target = get_or<std::string>(d, "target", "", source);
        if (ds.target.empty()) throw ConfigError(source + ": graph data needs a \"target\" node");
        ds.n = get_or<std::size_t>(d, "n", 10000, source);
        ds.binarize = get_or<bool>(d, "binarize", true, source);
        ds.recipe.seed = get_or<std::uint64_t>(d, "seed", derive_seed(c.seed, "data"), source);
    } else {
        throw ConfigError(source + ": data section needs one of \"recipe\", \"csv\" or \"graph\"");
    }
    if (ds.kind != "recipe" && !fs::exists(ds.path)) throw ConfigError(source + ": data file not found: " + ds.path);

    c.normalization = get_or<std::string>(j, "normalization", "auto", source);
    if (c.normalization != "auto") normalization_from_string(c.normalization);
    c.split = get_or<std::vector<double>>(j, "split", c.split, source);

    if (j.contains("model")) {
        const auto& m = j["model"];
        c.hidden_sizes = get_or<std::vector<std::size_t>>(m, "hidden_sizes", c.hidden_sizes, source);
        c.activation = activation_from_string(get_or<std::string>(m, "activation", "relu", source));
        c.dropout = get_or<double>(m, "dropout", 0.0, source);
    }
    if (j.contains("training")) {
        const auto& t = j["training"];
        auto& tc = c.training;
        tc.learning_rate = get_or<double>(t, "learning_rate", tc.learning_rate, source);
        tc.batch_size = get_or<std::size_t>(t, "batch_size", tc.batch_size, source);
        tc.epochs = get_or<std::size_t>(t, "epochs", tc.epochs, source);
        tc.weight_decay = get_or<double>(t, "weight_decay", tc.weight_decay, source);
        tc.lambda1 = get_or<double>(t, "lambda1", tc.lambda1, source);
        tc.beta1 = get_or<double>(t, "beta1", tc.beta1, source);
        tc.beta2 = get_or<double>(t, "beta2", tc.beta2, source);
        tc.adam_epsilon = get_or<double>(t, "adam_epsilon", tc.adam_epsilon, source);
    }
    try {
        c.training.validate();
    } catch (const std::exception& e) {
        throw ConfigError(source + ": " + e.what());
    }

    if (!j.contains("priors")) throw ConfigError(source + ": missing \"priors\"");
    if (j["priors"].is_string()) {
        c.prior_path = resolve_path(j["priors"].get<std::string>(), base_dir);
        if (!fs::exists(c.prior_path)) throw ConfigError(source + ": prior file not found: " + c.prior_path);
    } else if (j["priors"].is_object()) {
        c.prior_inline = j["priors"];
    } else {
        throw ConfigError(source + ": \"priors\" must be a file path or an object");
    }
    c.signed_expansion = get_or<bool>(j, "signed_expansion", true, source);
    c.graph_path = resolve_path(get_or<std::string>(j, "graph", "", source), base_dir);
    if (!c.graph_path.empty() && !fs::exists(c.graph_path)) {
        throw ConfigError(source + ": graph file not found: " + c.graph_path);
    }
    if (j.contains("outcome") && !j["outcome"].is_null()) c.outcome = j["outcome"].get<std::string>();

    if (j.contains("effects")) {
        const auto& e = j["effects"];
        c.effects.estimator = get_or<std::string>(e, "estimator", "auto", source);
        if (c.effects.estimator != "auto" && c.effects.estimator != "taylor" &&
            c.effects.estimator != "monte_carlo") {
            throw ConfigError(source + ": unknown estimator '" + c.effects.estimator + "'");
        }
        c.effects.points = get_or<std::size_t>(e, "points", 50, source);
        c.effects.baseline = get_or<double>(e, "baseline", 0.0, source);
        if (e.contains("low") && !e["low"].is_null()) c.effects.low = e["low"].get<double>();
        if (e.contains("high") && !e["high"].is_null()) c.effects.high = e["high"].get<double>();
        if (c.effects.points < 2) throw ConfigError(source + ": effects.points must be at least 2");
    }
    if (j.contains("slope_search") && !j["slope_search"].is_null()) {
        const auto& s = j["slope_search"];
        SlopeSearchConfig sc;
        sc.feature = get_or<std::string>(s, "feature", "", source);
        if (sc.feature.empty()) throw ConfigError(source + ": slope_search needs a \"feature\"");
        sc.parameter = get_or<std::string>(s, "parameter", sc.parameter, source);
        sc.low = get_or<double>(s, "low", sc.low, source);
        sc.high = get_or<double>(s, "high", sc.high, source);
        sc.step = get_or<double>(s, "step", sc.step, source);
        sc.validation_fraction = get_or<double>(s, "validation_fraction", sc.validation_fraction, source);
        sc.jobs = get_or<unsigned>(s, "jobs", 1, source);
        c.slope_search = sc;
    }
    if (j.contains("sweep") && j["sweep"].contains("lambda")) {
        c.sweep_lambdas = j["sweep"]["lambda"].get<std::vector<double>>();
    }
    c.output_dir = resolve_path(get_or<std::string>(j, "output", "runs/" + c.name, source), base_dir);
    c.plots = get_or<bool>(j, "plots", true, source);
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    const JsonDocument doc = read_json_file(path);
    const std::string base = fs::absolute(fs::path(path)).parent_path().string();
    if (doc.root.is_object() && doc.root.value("format", std::string()) == kManifestFormat) {
        if (!doc.root.contains("config")) throw ConfigError(path + ": manifest has no embedded config");
        return config_from_json(doc.root["config"], base, path);
    }
    return config_from_json(doc.root, base, path);
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["name"] = c.name;
    j["seed"] = c.seed;
    nlohmann::json d;
    if (c.data.kind == "recipe") {
        d = {{"recipe", c.data.recipe.id}, {"n", c.data.recipe.n}, {"seed", c.data.recipe.seed}};
    } else if (c.data.kind == "csv") {
        d = {{"csv", c.data.path},
             {"target", c.data.schema.target},
             {"features", c.data.schema.features},
             {"one_hot", c.data.schema.one_hot},
             {"task", to_string(c.data.schema.task)},
             {"binarize", c.data.binarize}};
    } else {
        d = {{"graph", c.data.path},
             {"target", c.data.target},
             {"n", c.data.n},
             {"binarize", c.data.binarize},
             {"seed", c.data.recipe.seed}};
    }
    j["data"] = d;
    j["normalization"] = c.normalization;
    j["split"] = c.split;
    j["model"] = {{"hidden_sizes", c.hidden_sizes}, {"activation", to_string(c.activation)}, {"dropout", c.dropout}};
    const auto& t = c.training;
    j["training"] = {{"learning_rate", t.learning_rate}, {"batch_size", t.batch_size}, {"epochs", t.epochs},
                     {"weight_decay", t.weight_decay},   {"lambda1", t.lambda1},       {"beta1", t.beta1},
                     {"beta2", t.beta2},                 {"adam_epsilon", t.adam_epsilon}};
    j["priors"] = c.prior_path.empty() ? c.prior_inline : nlohmann::json(c.prior_path);
    j["signed_expansion"] = c.signed_expansion;
    if (!c.graph_path.empty()) j["graph"] = c.graph_path;
    if (c.outcome) j["outcome"] = *c.outcome;
    nlohmann::json e = {{"estimator", c.effects.estimator}, {"points", c.effects.points},
                        {"baseline", c.effects.baseline}};
    if (c.effects.low) e["low"] = *c.effects.low;
    if (c.effects.high) e["high"] = *c.effects.high;
    j["effects"] = e;
    if (c.slope_search) {
        const auto& s = *c.slope_search;
        j["slope_search"] = {{"feature", s.feature}, {"parameter", s.parameter}, {"low", s.low},
                             {"high", s.high},       {"step", s.step},           {"validation_fraction", s.validation_fraction},
                             {"jobs", s.jobs}};
    }
    if (!c.sweep_lambdas.empty()) j["sweep"] = {{"lambda", c.sweep_lambdas}};
    j["output"] = c.output_dir;
    j["plots"] = c.plots;
    return j;
}

std::string config_hash(const ExperimentConfig& config) {
    nlohmann::json j = config_to_json(config);
    // Where results are written does not change what is computed.
    j.erase("output");
    return hex64(fnv1a64(j.dump()));
}

namespace {

NormalizationMethod resolve_normalization(const ExperimentConfig& c) {
    if (c.normalization != "auto") return normalization_from_string(c.normalization);
    if (c.data.kind == "recipe") {
        return c.data.recipe.id == "tabular4" ? NormalizationMethod::zscore : NormalizationMethod::minmax;
    }
    if (c.data.kind == "graph") return NormalizationMethod::zscore;
    return NormalizationMethod::none;
}

PriorSpec expand_for_training(const ExperimentConfig& c, const PriorSpec& spec) {
    if (!c.signed_expansion || spec.classes != 2 || spec.entries.empty()) return spec;
    std::set<std::size_t> declared;
    for (const auto& e : spec.entries) declared.insert(e.class_index);
    if (declared.size() != 1) return spec;
    return signed_class_expansion(spec, 2);
}

std::uint64_t hash_parameters(std::span<const double> params) {
    std::uint64_t h = fnv1a64("parameters");
    for (double v : params) {
        char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof v);
        h = fnv1a64(std::string_view(bytes, sizeof bytes), h);
    }
    return h;
}

double cross_entropy(const Model& model, const Matrix& x, const std::vector<double>& y) {
    double total = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto out = model.predict(x.row(r));
        const double m = *std::max_element(out.begin(), out.end());
        double s = 0.0;
        for (double o : out) s += std::exp(o - m);
        total += m + std::log(s) - out[static_cast<std::size_t>(y[r])];
    }
    return total / static_cast<double>(x.rows());
}

std::string entry_key(const Prepared& prep, const PriorEntry& entry) {
    std::size_t same = 0;
    for (const auto& e : prep.spec.entries) same += e.feature == entry.feature;
    std::string key = prep.data.feature_names[entry.feature];
    if (same > 1) key += "[" + std::to_string(entry.class_index) + "]";
    return key;
}

}  // namespace

Prepared prepare(const ExperimentConfig& config) {
    Prepared prep;
    prep.config = config;
    const auto& ds = config.data;

    std::optional<CausalGraph> graph;
    std::optional<GraphFile> graph_file;
    std::optional<std::string> outcome = config.outcome;
    if (ds.kind == "recipe") {
        prep.data = generate(ds.recipe);
        if (ds.recipe.id == "tabular4") {
            graph = synthetic_tabular4_graph();
            if (!outcome) outcome = "Y";
        }
    } else if (ds.kind == "csv") {
        prep.data = load_csv(ds.path, ds.schema);
    } else {
        graph_file = load_graph_file(ds.path);
        graph = graph_file->graph;
        prep.data = dataset_from_graph(*graph, ds.target, ds.n, ds.recipe.seed, ds.binarize);
        if (!outcome) outcome = graph_file->outcome ? graph_file->outcome : std::optional<std::string>(ds.target);
    }
    if (!config.graph_path.empty()) {
        graph_file = load_graph_file(config.graph_path);
        graph = graph_file->graph;
        if (!outcome) outcome = graph_file->outcome;
    }

    prep.data = split(std::move(prep.data), config.split, derive_seed(config.seed, "split"));
    if (ds.kind == "csv" && ds.binarize) prep.data = binarize_output(std::move(prep.data));
    prep.data = normalize(std::move(prep.data), resolve_normalization(config));
    prep.x_train = prep.data.rows(prep.data.splits.train);
    prep.y_train = prep.data.targets_at(prep.data.splits.train);
    prep.x_test = prep.data.rows(prep.data.splits.test);
    prep.y_test = prep.data.targets_at(prep.data.splits.test);

    auto& a = prep.architecture;
    a.input_dim = prep.data.features.cols();
    a.output_dim = prep.data.class_count();
    a.hidden_sizes = config.hidden_sizes;
    a.activation = config.activation;
    a.dropout_rate = config.dropout;
    a.task = prep.data.task;
    a.validate();

    if (!config.prior_path.empty()) {
        prep.spec = load_prior_spec(config.prior_path, prep.data.feature_names, a.output_dim);
    } else {
        prep.spec = prior_spec_from_json(parse_json_text(config.prior_inline.dump(2), "<inline priors>"),
                                         prep.data.feature_names, a.output_dim);
    }
    prep.train_spec = expand_for_training(config, prep.spec);

    if (prep.spec.kind != EffectKind::acde) {
        if (!graph) {
            throw ConfigError(to_string(prep.spec.kind) + " priors need a causal graph (\"graph\" in the config)");
        }
        for (auto i : prep.spec.prior_features()) {
            const std::string& name = prep.data.feature_names[i];
            RoleAssignment roles;
            if (graph_file && graph_file->treatment == name && !graph_file->mediators.empty()) {
                roles = make_roles(*graph, prep.data.feature_names, name, graph_file->mediators,
                                   config.effects.baseline, outcome);
            } else {
                roles = derive_roles(*graph, prep.data.feature_names, name, config.effects.baseline, outcome);
            }
            auto mediators = fit_mediators(prep.x_train, prep.data.feature_names, *graph, roles);
            prep.contexts.emplace(i, TreatmentContext::make(std::move(roles), std::move(mediators)));
        }
    }
    prep.init_seed = derive_seed(config.seed, "init");
    prep.shuffle_seed = derive_seed(config.seed, "shuffle");
    return prep;
}

ArmResult train_arm(const Prepared& prep, const PriorSpec& spec, double lambda1, const Matrix& x_train,
                    const std::vector<double>& y_train) {
    ArmResult arm{Perceptron(prep.architecture, prep.init_seed), {}, 0.0, 0};
    arm.init_hash = hash_parameters(arm.model.parameters());
    TrainingConfig cfg = prep.config.training;
    cfg.lambda1 = lambda1;
    cfg.seed = prep.shuffle_seed;

    std::optional<CredoPenalty> penalty;
    if (lambda1 != 0.0 && !spec.entries.empty()) {
        if (spec.kind == EffectKind::acde) {
            penalty.emplace(spec);
        } else {
            penalty.emplace(spec, prep.contexts);
        }
    }
    const auto start = std::chrono::steady_clock::now();
    arm.trace = train(arm.model, x_train, y_train, cfg, penalty ? &*penalty : nullptr);
    arm.seconds = seconds_since(start);
    return arm;
}

EffectCurve effect_curve(const Prepared& prep, const Model& model, const PriorEntry& entry) {
    const auto& ec = prep.config.effects;
    EffectQuery q;
    q.kind = prep.spec.kind;
    q.treatment = entry.feature;
    q.class_index = entry.class_index;
    q.points = ec.points;
    q.baseline = ec.baseline;
    const auto column = prep.x_train.column(entry.feature);
    q.low = ec.low ? *ec.low : *std::min_element(column.begin(), column.end());
    q.high = ec.high ? *ec.high : *std::max_element(column.begin(), column.end());
    std::string estimator = ec.estimator;
    if (estimator == "auto") estimator = q.kind == EffectKind::acde ? "taylor" : "monte_carlo";
    if (estimator == "taylor") {
        const auto m = data_moments(prep.x_train);
        return taylor_ace_curve(model, q, m.mean, m.covariance);
    }
    MediatorContext ctx;
    if (q.kind != EffectKind::acde) {
        const auto& tc = prep.contexts.at(entry.feature);
        ctx.roles = &tc.roles;
        ctx.mediators = &tc.mediators;
    }
    return mc_effect_curve(model, prep.x_train, q, ctx);
}

double mean_abs_gradient(const Model& model, const Matrix& x, std::size_t class_index, std::size_t feature) {
    if (x.rows() == 0) throw std::invalid_argument("empty evaluation set");
    double total = 0.0;
    Tape tape;
    std::vector<Var> inputs;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        tape.clear();
        inputs.clear();
        for (double v : x.row(r)) inputs.push_back(tape.input(v));
        const auto out = model.record(tape, inputs, {});
        const auto adj = tape.adjoints(out.at(class_index));
        total += std::abs(adj[inputs[feature].id()]);
    }
    return total / static_cast<double>(x.rows());
}

nlohmann::json conformity_to_json(const ConformityReport& r) {
    nlohmann::json j;
    j["rmse"] = r.rmse;
    j["frechet"] = r.frechet;
    j["pearson"] = r.pearson ? nlohmann::json(*r.pearson) : nlohmann::json(nullptr);
    j["pearson_defined"] = r.pearson.has_value();
    return j;
}

namespace {

nlohmann::json arm_metrics(const Prepared& prep, const Perceptron& model) {
    nlohmann::json m;
    if (prep.architecture.task == Task::classification) {
        m["accuracy"] = accuracy(model, prep.x_test, prep.y_test);
        m["loss"] = cross_entropy(model, prep.x_test, prep.y_test);
    } else {
        m["loss"] = mean_squared_error(model, prep.x_test, prep.y_test);
    }
    nlohmann::json grads = nlohmann::json::object();
    for (const auto& e : prep.spec.entries) {
        grads[entry_key(prep, e)] = mean_abs_gradient(model, prep.x_test, e.class_index, e.feature);
    }
    m["mean_abs_gradient"] = grads;
    return m;
}

// Metrics and curves for an (ERM, CREDO) pair.
std::pair<nlohmann::json, std::vector<FeatureCurves>> compare_arms(const Prepared& prep, const ArmResult& erm,
                                                                    const ArmResult& credo, double lambda1) {
    nlohmann::json metrics;
    metrics["effect"] = to_string(prep.spec.kind);
    metrics["lambda1"] = lambda1;
    metrics["erm"] = arm_metrics(prep, erm.model);
    metrics["credo"] = arm_metrics(prep, credo.model);
    metrics["erm"]["conformity"] = nlohmann::json::object();
    metrics["credo"]["conformity"] = nlohmann::json::object();
    metrics["conformity"] = nlohmann::json::object();
    std::vector<FeatureCurves> curves;
    for (const auto& e : prep.spec.entries) {
        FeatureCurves fc;
        fc.key = entry_key(prep, e);
        fc.erm = effect_curve(prep, erm.model, e);
        fc.credo = effect_curve(prep, credo.model, e);
        fc.gt = prior_curve(fc.erm.t, e.function, baseline_index(fc.erm.t, prep.config.effects.baseline));
        fc.erm_report = compare_curves(fc.erm, fc.gt);
        fc.credo_report = compare_curves(fc.credo, fc.gt);
        metrics["erm"]["conformity"][fc.key] = conformity_to_json(fc.erm_report);
        metrics["credo"]["conformity"][fc.key] = conformity_to_json(fc.credo_report);
        metrics["conformity"][fc.key] = conformity_to_json(fc.credo_report);
        curves.push_back(std::move(fc));
    }
    return {metrics, curves};
}

void write_curves(const std::string& dir, const std::vector<FeatureCurves>& curves, bool plots) {
    for (const auto& fc : curves) {
        const std::string stem = file_stem_for(fc.key);
        write_curve_csv(fc.gt, dir + "/curves/" + stem + ".gt.csv");
        write_curve_csv(fc.erm, dir + "/curves/" + stem + ".erm.csv");
        write_curve_csv(fc.credo, dir + "/curves/" + stem + ".credo.csv");
        if (plots) {
            write_plot({{"GT", fc.gt}, {"ERM", fc.erm}, {"CREDO", fc.credo}}, fc.key, dir + "/plots/" + stem + ".svg");
        }
    }
}

std::string dump_json(const nlohmann::json& j) { return rounded(j).dump(2) + "\n"; }

}  // namespace

RunReport run(const ExperimentConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    const Prepared prep = prepare(config);
    const ArmResult erm = train_arm(prep, prep.train_spec, 0.0, prep.x_train, prep.y_train);
    const ArmResult credo = train_arm(prep, prep.train_spec, config.training.lambda1, prep.x_train, prep.y_train);

    RunReport report;
    auto [metrics, curves] = compare_arms(prep, erm, credo, config.training.lambda1);
    report.metrics = std::move(metrics);
    report.curves = std::move(curves);

    report.manifest["format"] = kManifestFormat;
    report.manifest["version"] = 1;
    report.manifest["config"] = config_to_json(config);
    report.manifest["config_hash"] = config_hash(config);
    report.manifest["seeds"] = {{"global", config.seed},
                                {"data", config.data.recipe.seed},
                                {"split", derive_seed(config.seed, "split")},
                                {"init", prep.init_seed},
                                {"shuffle", prep.shuffle_seed},
                                {"dropout", derive_seed(prep.init_seed, "dropout")}};
    report.manifest["init_hash"] = {{"erm", hex64(erm.init_hash)}, {"credo", hex64(credo.init_hash)}};
    report.manifest["init_match"] = erm.init_hash == credo.init_hash;
    report.manifest["dataset"] = dataset_manifest(prep.data);
    report.manifest["train_priors"] = prior_spec_to_json(prep.train_spec, prep.data.feature_names);

    report.timings = {{"erm_seconds", erm.seconds},
                      {"credo_seconds", credo.seconds},
                      {"overhead_ratio", erm.seconds > 0.0 ? credo.seconds / erm.seconds : 0.0},
                      {"total_seconds", seconds_since(start)}};

    const std::string dir = config.output_dir;
    fs::create_directories(dir);
    write_file_atomic(dir + "/metrics.json", dump_json(report.metrics));
    write_file_atomic(dir + "/manifest.json", dump_json(report.manifest));
    write_file_atomic(dir + "/timings.json", dump_json(report.timings));
    write_curves(dir, report.curves, config.plots);
    fs::create_directories(dir + "/models");
    save_checkpoint(erm.model, dir + "/models/erm.json");
    save_checkpoint(credo.model, dir + "/models/credo.json");
    return report;
}

std::vector<SweepRow> sweep(const ExperimentConfig& config, const std::vector<double>& lambdas) {
    if (lambdas.empty()) throw ConfigError("sweep needs at least one lambda value");
    const Prepared prep = prepare(config);
    const ArmResult erm = train_arm(prep, prep.train_spec, 0.0, prep.x_train, prep.y_train);
    std::vector<SweepRow> rows;
    nlohmann::json summary = nlohmann::json::array();
    std::string csv = "lambda1,ok,feature,erm_rmse,credo_rmse,erm_frechet,credo_frechet,credo_pearson,erm_metric,credo_metric\n";
    const bool cls = prep.architecture.task == Task::classification;
    for (double lambda : lambdas) {
        SweepRow row;
        row.lambda1 = lambda;
        try {
            const ArmResult credo = train_arm(prep, prep.train_spec, lambda, prep.x_train, prep.y_train);
            auto [metrics, curves] = compare_arms(prep, erm, credo, lambda);
            row.metrics = metrics;
            row.ok = true;
            const std::string dir = config.output_dir + "/lambda_" + format_real(lambda);
            write_file_atomic(dir + "/metrics.json", dump_json(metrics));
            write_curves(dir, curves, config.plots);
            for (const auto& fc : curves) {
                csv += format_real(lambda) + ",1," + fc.key + "," + format_real(fc.erm_report.rmse) + "," +
                       format_real(fc.credo_report.rmse) + "," + format_real(fc.erm_report.frechet) + "," +
                       format_real(fc.credo_report.frechet) + "," +
                       (fc.credo_report.pearson ? format_real(*fc.credo_report.pearson) : std::string("")) + "," +
                       format_real(metrics["erm"][cls ? "accuracy" : "loss"].get<double>()) + "," +
                       format_real(metrics["credo"][cls ? "accuracy" : "loss"].get<double>()) + "\n";
            }
        } catch (const std::exception& e) {
            row.error = e.what();
            csv += format_real(lambda) + ",0,,,,,,,,\n";
        }
        summary.push_back({{"lambda1", lambda},
                           {"ok", row.ok},
                           {"error", row.error},
                           {"metrics", row.ok ? row.metrics : nlohmann::json(nullptr)}});
        rows.push_back(std::move(row));
    }
    write_file_atomic(config.output_dir + "/sweep.json", dump_json(summary));
    write_file_atomic(config.output_dir + "/sweep.csv", csv);
    return rows;
}

SlopeSearchResult run_slope_search(const ExperimentConfig& config) {
    if (!config.slope_search) throw ConfigError("config has no \"slope_search\" section");
    const auto& sc = *config.slope_search;
    const Prepared prep = prepare(config);
    const Dataset carved = carve_validation(prep.data, sc.validation_fraction, derive_seed(config.seed, "validation"));
    const Matrix x_fit = carved.rows(carved.splits.train);
    const auto y_fit = carved.targets_at(carved.splits.train);
    const Matrix x_val = carved.rows(carved.splits.validation);
    const auto y_val = carved.targets_at(carved.splits.validation);

    const std::size_t feature = prep.data.feature_index(sc.feature);
    const PriorEntry* target = nullptr;
    for (const auto& e : prep.spec.entries) {
        if (e.feature == feature) {
            target = &e;
            break;
        }
    }
    if (target == nullptr) throw ConfigError("slope search feature '" + sc.feature + "' has no prior");
    const std::size_t target_class = target->class_index;

    auto train_fn = [&](double value) {
        PriorSpec spec = prep.spec;
        for (auto& e : spec.entries) {
            if (e.feature == feature && e.class_index == target_class) {
                e.function = e.function.with_parameter(sc.parameter, value);
            }
        }
        const PriorSpec train_spec = expand_for_training(config, spec);
        const ArmResult arm = train_arm(prep, train_spec, config.training.lambda1, x_fit, y_fit);
        if (prep.architecture.task == Task::classification) return accuracy(arm.model, x_val, y_val);
        return -mean_squared_error(arm.model, x_val, y_val);
    };
    const auto space = SlopeSearchSpace::range(sc.low, sc.high, sc.step);
    const SlopeSearchResult result = slope_search(space, train_fn, sc.jobs);

    nlohmann::json j;
    j["feature"] = sc.feature;
    j["parameter"] = sc.parameter;
    j["score"] = prep.architecture.task == Task::classification ? "validation_accuracy" : "negative_validation_mse";
    j["best_parameter"] = result.best_parameter;
    j["best_score"] = result.best_accuracy;
    j["table"] = nlohmann::json::array();
    std::string csv = "parameter,ok,score,error\n";
    for (const auto& row : result.table) {
        j["table"].push_back({{"parameter", row.parameter},
                              {"ok", row.ok},
                              {"score", row.ok ? nlohmann::json(row.accuracy) : nlohmann::json(nullptr)},
                              {"error", row.error}});
        csv += format_real(row.parameter) + "," + (row.ok ? "1" : "0") + "," +
               (row.ok ? format_real(row.accuracy) : std::string("")) + "," + row.error + "\n";
    }
    write_file_atomic(config.output_dir + "/slope_search.json", dump_json(j));
    write_file_atomic(config.output_dir + "/slope_search.csv", csv);
    return result;
}

namespace {

std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::strcmp(buf, "-0.000") == 0 ? "0.000" : buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += ch;
        }
    }
    return out;
}

std::string series_color(const std::string& label, std::size_t index) {
    if (label == "GT") return "#d62728";
    if (label == "ERM") return "#7f7f7f";
    if (label == "CREDO") return "#1f77b4";
    static const char* palette[] = {"#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2"};
    return palette[index % 5];
}

}  // namespace

std::string render_svg(const std::vector<std::pair<std::string, EffectCurve>>& series, const std::string& title) {
    if (series.empty()) throw std::invalid_argument("nothing to plot");
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& [label, c] : series) {
        if (c.size() == 0) throw std::invalid_argument("series '" + label + "' is empty");
        for (std::size_t k = 0; k < c.size(); ++k) {
            x0 = std::min(x0, c.t[k]);
            x1 = std::max(x1, c.t[k]);
            y0 = std::min(y0, c.effect[k]);
            y1 = std::max(y1, c.effect[k]);
        }
    }
    if (x1 == x0) {
        x0 -= 1.0;
        x1 += 1.0;
    }
    if (y1 == y0) {
        y0 -= 1.0;
        y1 += 1.0;
    }
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;

    const double W = 640, H = 420, L = 70, R = 130, T = 40, B = 50;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" viewBox=\"0 0 640 420\">\n";
    os << "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
    os << "<text x=\"" << svg_num(L) << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
       << xml_escape(title) << "</text>\n";
    os << "<line x1=\"" << svg_num(L) << "\" y1=\"" << svg_num(H - B) << "\" x2=\"" << svg_num(W - R) << "\" y2=\""
       << svg_num(H - B) << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << svg_num(L) << "\" y1=\"" << svg_num(T) << "\" x2=\"" << svg_num(L) << "\" y2=\""
       << svg_num(H - B) << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4.0;
        const double yv = y0 + (y1 - y0) * k / 4.0;
        os << "<text x=\"" << svg_num(px(xv)) << "\" y=\"" << svg_num(H - B + 18)
           << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << format_real(round12(xv))
           << "</text>\n";
        os << "<text x=\"" << svg_num(L - 6) << "\" y=\"" << svg_num(py(yv) + 4)
           << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">"
           << svg_num(yv) << "</text>\n";
    }
    os << "<text x=\"" << svg_num((L + W - R) / 2) << "\" y=\"" << svg_num(H - 10)
       << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">t</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const auto& [label, c] = series[s];
        os << "<polyline fill=\"none\" stroke=\"" << series_color(label, s) << "\" stroke-width=\"2\" points=\"";
        for (std::size_t k = 0; k < c.size(); ++k) {
            if (k) os << ' ';
            os << svg_num(px(c.t[k])) << ',' << svg_num(py(c.effect[k]));
        }
        os << "\"/>\n";
    }
    for (std::size_t s = 0; s < series.size(); ++s) {
        const double ly = T + 16.0 + 20.0 * static_cast<double>(s);
        const double lx = W - R + 16;
        os << "<line x1=\"" << svg_num(lx) << "\" y1=\"" << svg_num(ly) << "\" x2=\"" << svg_num(lx + 24)
           << "\" y2=\"" << svg_num(ly) << "\" stroke=\"" << series_color(series[s].first, s)
           << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << svg_num(lx + 30) << "\" y=\"" << svg_num(ly + 4)
           << "\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(series[s].first) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

void write_plot(const std::vector<std::pair<std::string, EffectCurve>>& series, const std::string& title,
                const std::string& path) {
    write_file_atomic(path, render_svg(series, title));
}

std::vector<std::string> plot_run(const std::string& run_dir) {
    const fs::path curves = fs::path(run_dir) / "curves";
    if (!fs::is_directory(curves)) throw std::runtime_error("no curves directory under " + run_dir);
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(curves)) {
        const std::string name = entry.path().filename().string();
        const std::string suffix = ".gt.csv";
        if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            stems.push_back(name.substr(0, name.size() - suffix.size()));
        }
    }
    if (stems.empty()) throw std::runtime_error("no curves to plot under " + curves.string());
    std::sort(stems.begin(), stems.end());
    std::vector<std::string> written;
    for (const auto& stem : stems) {
        std::vector<std::pair<std::string, EffectCurve>> series;
        series.emplace_back("GT", read_curve_csv((curves / (stem + ".gt.csv")).string()));
        for (const auto& [label, suffix] : {std::pair{"ERM", ".erm.csv"}, std::pair{"CREDO", ".credo.csv"}}) {
            const auto p = curves / (stem + suffix);
            if (fs::exists(p)) series.emplace_back(label, read_curve_csv(p.string()));
        }
        const std::string out = (fs::path(run_dir) / "plots" / (stem + ".svg")).string();
        write_plot(series, stem, out);
        written.push_back(out);
    }
    return written;
}

}  // namespace credo
