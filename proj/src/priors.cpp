#include "credo/priors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "credo/json_file.hpp"

namespace credo {

std::string to_string(EffectKind kind) {
    switch (kind) {
        case EffectKind::acde: return "ACDE";
        case EffectKind::ande: return "ANDE";
        case EffectKind::atce: return "ATCE";
    }
    return "?";
}

EffectKind effect_kind_from_string(const std::string& s) {
    if (s == "ACDE" || s == "acde") return EffectKind::acde;
    if (s == "ANDE" || s == "ande") return EffectKind::ande;
    if (s == "ATCE" || s == "atce") return EffectKind::atce;
    throw std::invalid_argument("unknown effect kind '" + s + "'");
}

namespace {

const std::pair<PriorFamily, const char*> kFamilyNames[] = {
    {PriorFamily::zero, "zero"},
    {PriorFamily::linear, "linear"},
    {PriorFamily::quadratic, "quadratic"},
    {PriorFamily::exponential_j, "exponential_j"},
    {PriorFamily::cubic_diminishing, "cubic_diminishing"},
    {PriorFamily::logarithmic, "logarithmic"},
    {PriorFamily::exponential, "exponential"},
    {PriorFamily::sinusoidal, "sinusoidal"},
    {PriorFamily::tabulated, "tabulated"},
};

}  // namespace

std::string to_string(PriorFamily family) {
    for (const auto& [f, name] : kFamilyNames) {
        if (f == family) return name;
    }
    return "?";
}

PriorFamily prior_family_from_string(const std::string& s) {
    for (const auto& [f, name] : kFamilyNames) {
        if (s == name) return f;
    }
    throw std::invalid_argument("unknown prior family '" + s + "'");
}

PriorFunction::PriorFunction(PriorFamily family, double a, double b, double c)
    : family_(family), a_(a), b_(b), c_(c) {}

PriorFunction PriorFunction::zero() { return {PriorFamily::zero, 0, 0, 0}; }
PriorFunction PriorFunction::linear(double alpha) { return {PriorFamily::linear, alpha, 0, 0}; }
PriorFunction PriorFunction::quadratic(double a) { return {PriorFamily::quadratic, a, 0, 0}; }
PriorFunction PriorFunction::exponential_j(double a, double b) { return {PriorFamily::exponential_j, a, b, 0}; }
PriorFunction PriorFunction::cubic_diminishing(double a, double b) {
    return {PriorFamily::cubic_diminishing, a, b, 0};
}
PriorFunction PriorFunction::logarithmic(double a, double b) { return {PriorFamily::logarithmic, a, b, 0}; }
PriorFunction PriorFunction::exponential(double a, double b) { return {PriorFamily::exponential, a, b, 0}; }
PriorFunction PriorFunction::sinusoidal(double a, double b, double c) {
    return {PriorFamily::sinusoidal, a, b, c};
}

PriorFunction PriorFunction::tabulated(std::vector<std::pair<double, double>> points) {
    if (points.size() < 2) throw std::invalid_argument("tabulated prior needs at least two knots");
    for (std::size_t k = 1; k < points.size(); ++k) {
        if (!(points[k].first > points[k - 1].first)) {
            throw std::invalid_argument("tabulated prior knots must be strictly increasing");
        }
    }
    PriorFunction f(PriorFamily::tabulated, 0, 0, 0);
    f.points_ = std::move(points);
    return f;
}

PriorFunction PriorFunction::make(PriorFamily family, const std::map<std::string, double>& params,
                                  std::vector<std::pair<double, double>> points) {
    auto get = [&](const char* name, std::optional<double> fallback = std::nullopt) {
        auto it = params.find(name);
        if (it != params.end()) return it->second;
        if (fallback) return *fallback;
        throw std::invalid_argument(to_string(family) + " prior requires parameter '" + name + "'");
    };
    switch (family) {
        case PriorFamily::zero: return zero();
        case PriorFamily::linear: return linear(get("alpha"));
        case PriorFamily::quadratic: return quadratic(get("a"));
        case PriorFamily::exponential_j: return exponential_j(get("a"), get("b"));
        case PriorFamily::cubic_diminishing: return cubic_diminishing(get("a"), get("b"));
        case PriorFamily::logarithmic: return logarithmic(get("a", 1.0), get("b"));
        case PriorFamily::exponential: return exponential(get("a", 1.0), get("b", 1.0));
        case PriorFamily::sinusoidal: return sinusoidal(get("a", 1.0), get("b", 1.0), get("c", 0.0));
        case PriorFamily::tabulated: return tabulated(std::move(points));
    }
    throw std::invalid_argument("unknown prior family");
}

std::size_t PriorFunction::segment(double x) const {
    if (x < points_.front().first || x > points_.back().first) {
        throw PriorDomainError("tabulated prior queried at " + std::to_string(x) + " outside [" +
                               std::to_string(points_.front().first) + ", " +
                               std::to_string(points_.back().first) + "]");
    }
    auto it = std::upper_bound(points_.begin(), points_.end(), x,
                               [](double v, const auto& p) { return v < p.first; });
    std::size_t k = static_cast<std::size_t>(it - points_.begin());
    if (k == 0) k = 1;
    if (k >= points_.size()) k = points_.size() - 1;
    return k - 1;
}

double PriorFunction::base_value(double x) const {
    switch (family_) {
        case PriorFamily::zero: return 0.0;
        case PriorFamily::linear: return a_ * x;
        case PriorFamily::quadratic: return a_ * x * x;
        case PriorFamily::exponential_j: return a_ * std::exp(b_ * x * x);
        case PriorFamily::cubic_diminishing: return -a_ * x * x * x + b_ * x * x;
        case PriorFamily::logarithmic: return a_ * std::log1p(b_ * x);
        case PriorFamily::exponential: return a_ * std::exp(b_ * x);
        case PriorFamily::sinusoidal: return a_ * std::sin(b_ * x + c_);
        case PriorFamily::tabulated: {
            const std::size_t k = segment(x);
            const auto [x0, y0] = points_[k];
            const auto [x1, y1] = points_[k + 1];
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
    }
    return 0.0;
}

double PriorFunction::base_derivative(double x) const {
    switch (family_) {
        case PriorFamily::zero: return 0.0;
        case PriorFamily::linear: return a_;
        case PriorFamily::quadratic: return 2.0 * a_ * x;
        case PriorFamily::exponential_j: return 2.0 * a_ * b_ * x * std::exp(b_ * x * x);
        case PriorFamily::cubic_diminishing: return -3.0 * a_ * x * x + 2.0 * b_ * x;
        case PriorFamily::logarithmic: return a_ * b_ / (1.0 + b_ * x);
        case PriorFamily::exponential: return a_ * b_ * std::exp(b_ * x);
        case PriorFamily::sinusoidal: return a_ * b_ * std::cos(b_ * x + c_);
        case PriorFamily::tabulated: {
            const std::size_t k = segment(x);
            const auto [x0, y0] = points_[k];
            const auto [x1, y1] = points_[k + 1];
            return (y1 - y0) / (x1 - x0);
        }
    }
    return 0.0;
}

double PriorFunction::value(double x) const { return sign_ * base_value(x); }
double PriorFunction::derivative(double x) const { return sign_ * base_derivative(x); }

PriorFunction PriorFunction::with_range(double low, double high) const {
    if (!(low < high)) throw std::invalid_argument("prior range must satisfy low < high");
    PriorFunction f = *this;
    f.range_ = std::make_pair(low, high);
    return f;
}

bool PriorFunction::active_at(double x) const {
    return !range_ || (x >= range_->first && x <= range_->second);
}

PriorFunction PriorFunction::negated() const {
    PriorFunction f = *this;
    f.sign_ = -sign_;
    return f;
}

PriorFunction PriorFunction::with_parameter(const std::string& name, double value) const {
    PriorFunction f = *this;
    if (family_ == PriorFamily::linear && name == "alpha") f.a_ = value;
    else if (family_ != PriorFamily::linear && family_ != PriorFamily::zero &&
             family_ != PriorFamily::tabulated && name == "a") f.a_ = value;
    else if ((family_ == PriorFamily::exponential_j || family_ == PriorFamily::cubic_diminishing ||
              family_ == PriorFamily::logarithmic || family_ == PriorFamily::exponential ||
              family_ == PriorFamily::sinusoidal) && name == "b") f.b_ = value;
    else if (family_ == PriorFamily::sinusoidal && name == "c") f.c_ = value;
    else throw std::invalid_argument(to_string(family_) + " prior has no parameter '" + name + "'");
    return f;
}

std::map<std::string, double> PriorFunction::parameters() const {
    switch (family_) {
        case PriorFamily::zero:
        case PriorFamily::tabulated: return {};
        case PriorFamily::linear: return {{"alpha", a_}};
        case PriorFamily::quadratic: return {{"a", a_}};
        case PriorFamily::sinusoidal: return {{"a", a_}, {"b", b_}, {"c", c_}};
        default: return {{"a", a_}, {"b", b_}};
    }
}

void PriorSpec::validate() const {
    if (epsilon < 0.0) throw std::invalid_argument("epsilon must be nonnegative");
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& e : entries) {
        if (e.class_index >= classes) throw std::out_of_range("prior class index out of range");
        if (e.feature >= features) throw std::out_of_range("prior feature index out of range");
        if (!seen.emplace(e.class_index, e.feature).second) {
            throw std::invalid_argument("duplicate prior for class " + std::to_string(e.class_index) +
                                        ", feature " + std::to_string(e.feature));
        }
    }
}

Matrix PriorSpec::mask() const {
    Matrix m(classes, features);
    for (const auto& e : entries) m(e.class_index, e.feature) = 1.0;
    return m;
}

const PriorEntry* PriorSpec::find(std::size_t class_index, std::size_t feature) const {
    for (const auto& e : entries) {
        if (e.class_index == class_index && e.feature == feature) return &e;
    }
    return nullptr;
}

std::vector<std::size_t> PriorSpec::prior_features() const {
    std::set<std::size_t> s;
    for (const auto& e : entries) s.insert(e.feature);
    return {s.begin(), s.end()};
}

Matrix prior_derivative_matrix(const PriorSpec& spec, std::span<const double> x) {
    if (x.size() != spec.features) throw std::invalid_argument("row width does not match prior spec");
    Matrix dg(spec.classes, spec.features);
    for (const auto& e : spec.entries) {
        const double xi = x[e.feature];
        if (e.function.active_at(xi)) dg(e.class_index, e.feature) = e.function.derivative(xi);
    }
    return dg;
}

Matrix active_mask(const PriorSpec& spec, std::span<const double> x) {
    if (x.size() != spec.features) throw std::invalid_argument("row width does not match prior spec");
    Matrix m(spec.classes, spec.features);
    for (const auto& e : spec.entries) {
        if (e.function.active_at(x[e.feature])) m(e.class_index, e.feature) = 1.0;
    }
    return m;
}

PriorSpec signed_class_expansion(const PriorSpec& spec, std::size_t classes) {
    if (classes != 2 || spec.classes != 2) {
        throw std::invalid_argument("signed class expansion needs exactly two classes");
    }
    std::set<std::size_t> declared;
    for (const auto& e : spec.entries) declared.insert(e.class_index);
    if (declared.size() > 1) throw std::invalid_argument("signed class expansion needs priors on a single class");
    PriorSpec out = spec;
    for (const auto& e : spec.entries) {
        out.entries.push_back(PriorEntry{1 - e.class_index, e.feature, e.function.negated()});
    }
    out.validate();
    return out;
}

PriorSpec prior_spec_from_json(const JsonDocument& doc, const std::vector<std::string>& feature_names,
                               std::size_t classes) {
    const auto& j = doc.root;
    if (!j.is_object()) doc.fail("", "prior file must hold a JSON object");
    PriorSpec spec;
    spec.classes = classes;
    spec.features = feature_names.size();
    spec.epsilon = j.value("epsilon", 0.0);
    if (spec.epsilon < 0.0) doc.fail("epsilon", "epsilon must be nonnegative");
    try {
        spec.kind = effect_kind_from_string(j.value("effect", std::string("ACDE")));
    } catch (const std::exception& e) {
        doc.fail("effect", e.what());
    }
    if (!j.contains("priors") || !j["priors"].is_array()) doc.fail("priors", "missing \"priors\" array");

    std::size_t last_line = 0;
    for (const auto& p : j["priors"]) {
        const std::string feature = p.value("feature", std::string());
        const std::size_t line = doc.line_of(feature, last_line);
        last_line = line;
        auto fail = [&](const std::string& what) { throw FileFormatError(doc.path, line, what); };

        auto it = std::find(feature_names.begin(), feature_names.end(), feature);
        if (it == feature_names.end()) fail("unknown feature '" + feature + "'");
        if (p.contains("effect") && effect_kind_from_string(p["effect"].get<std::string>()) != spec.kind) {
            fail("mixed effect kinds in one prior file are not supported");
        }
        const auto cls = p.value("class", std::int64_t{0});
        if (cls < 0 || static_cast<std::size_t>(cls) >= classes) {
            fail("class " + std::to_string(cls) + " out of range for " + std::to_string(classes) + " outputs");
        }
        try {
            const auto family = prior_family_from_string(p.value("family", std::string("zero")));
            std::map<std::string, double> params;
            std::vector<std::pair<double, double>> points;
            if (p.contains("params")) {
                for (const auto& [k, v] : p["params"].items()) {
                    if (k == "points") points = v.get<std::vector<std::pair<double, double>>>();
                    else params[k] = v.get<double>();
                }
            }
            PriorFunction fn = PriorFunction::make(family, params, std::move(points));
            if (p.contains("range") && !p["range"].is_null()) {
                const auto r = p["range"].get<std::vector<double>>();
                if (r.size() != 2) fail("range must be [low, high]");
                fn = fn.with_range(r[0], r[1]);
            }
            spec.entries.push_back(PriorEntry{static_cast<std::size_t>(cls),
                                              static_cast<std::size_t>(it - feature_names.begin()), fn});
        } catch (const FileFormatError&) {
            throw;
        } catch (const std::exception& e) {
            fail(e.what());
        }
    }
    try {
        spec.validate();
    } catch (const std::exception& e) {
        doc.fail("priors", e.what());
    }
    return spec;
}

PriorSpec load_prior_spec(const std::string& path, const std::vector<std::string>& feature_names,
                          std::size_t classes) {
    return prior_spec_from_json(read_json_file(path), feature_names, classes);
}

nlohmann::json prior_spec_to_json(const PriorSpec& spec, const std::vector<std::string>& feature_names) {
    nlohmann::json j;
    j["epsilon"] = spec.epsilon;
    j["effect"] = to_string(spec.kind);
    j["priors"] = nlohmann::json::array();
    for (const auto& e : spec.entries) {
        nlohmann::json p;
        p["feature"] = feature_names.at(e.feature);
        p["class"] = e.class_index;
        p["family"] = to_string(e.function.family());
        nlohmann::json params = e.function.parameters();
        if (e.function.family() == PriorFamily::tabulated) params["points"] = e.function.points();
        p["params"] = params;
        if (e.function.active_range()) {
            p["range"] = {e.function.active_range()->first, e.function.active_range()->second};
        }
        j["priors"].push_back(p);
    }
    return j;
}

SlopeSearchSpace SlopeSearchSpace::range(double low, double high, double step) {
    if (!(step > 0.0) || high < low) throw std::invalid_argument("invalid slope grid");
    SlopeSearchSpace s;
    const auto n = static_cast<std::size_t>(std::floor((high - low) / step + 1e-9));
    for (std::size_t k = 0; k <= n; ++k) {
        // Snap accumulated rounding so 1.0 + 5 * 0.2 is exactly 2.
        const double v = low + static_cast<double>(k) * step;
        s.grid.push_back(std::round(v * 1e9) / 1e9);
    }
    return s;
}

SlopeSearchResult slope_search(const SlopeSearchSpace& space, const std::function<double(double)>& train_fn,
                               unsigned jobs) {
    if (space.grid.empty()) throw std::invalid_argument("slope search grid is empty");
    SlopeSearchResult result;
    result.table.resize(space.grid.size());
    auto evaluate = [&](std::size_t k) {
        SlopeSearchRow& row = result.table[k];
        row.parameter = space.grid[k];
        try {
            row.accuracy = train_fn(row.parameter);
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
    };

    if (jobs <= 1) {
        for (std::size_t k = 0; k < space.grid.size(); ++k) evaluate(k);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        for (unsigned w = 0; w < jobs; ++w) {
            workers.emplace_back([&] {
                for (std::size_t k = next++; k < space.grid.size(); k = next++) evaluate(k);
            });
        }
        for (auto& t : workers) t.join();
    }

    bool found = false;
    for (const auto& row : result.table) {
        if (!row.ok) continue;
        const bool better = !found || row.accuracy > result.best_accuracy ||
                            (row.accuracy == result.best_accuracy && row.parameter < result.best_parameter);
        if (better) {
            result.best_parameter = row.parameter;
            result.best_accuracy = row.accuracy;
            found = true;
        }
    }
    if (!found) throw std::runtime_error("every slope-search grid point failed");
    return result;
}

}  // namespace credo
