#include "credo/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "credo/io_util.hpp"
#include "credo/seeding.hpp"

namespace credo {

std::string to_string(NormalizationMethod m) {
    switch (m) {
        case NormalizationMethod::none: return "none";
        case NormalizationMethod::minmax: return "minmax";
        case NormalizationMethod::zscore: return "zscore";
    }
    return "none";
}

NormalizationMethod normalization_from_string(const std::string& s) {
    if (s == "none") return NormalizationMethod::none;
    if (s == "minmax") return NormalizationMethod::minmax;
    if (s == "zscore") return NormalizationMethod::zscore;
    throw std::invalid_argument("unknown normalization '" + s + "'");
}

void Normalization::apply(Matrix& x) const {
    if (identity()) return;
    if (x.cols() != shift.size()) throw DimensionError("normalization width mismatch");
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) = (x(r, c) - shift[c]) / scale[c];
    }
}

void Normalization::invert(Matrix& x) const {
    if (identity()) return;
    if (x.cols() != shift.size()) throw DimensionError("normalization width mismatch");
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) = x(r, c) * scale[c] + shift[c];
    }
}

double Normalization::apply(std::size_t feature, double raw) const {
    return identity() ? raw : (raw - shift.at(feature)) / scale.at(feature);
}

double Normalization::invert(std::size_t feature, double normalized) const {
    return identity() ? normalized : normalized * scale.at(feature) + shift.at(feature);
}

std::size_t Dataset::feature_index(const std::string& name) const {
    auto it = std::find(feature_names.begin(), feature_names.end(), name);
    if (it == feature_names.end()) throw DataError("unknown feature '" + name + "'");
    return static_cast<std::size_t>(it - feature_names.begin());
}

std::vector<double> Dataset::targets_at(const std::vector<std::size_t>& idx) const {
    std::vector<double> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(targets.at(i));
    return out;
}

std::size_t Dataset::class_count() const {
    if (task == Task::regression) return 1;
    double top = 0.0;
    for (double y : targets) top = std::max(top, y);
    return std::max<std::size_t>(2, static_cast<std::size_t>(top) + 1);
}

Dataset generate(const SyntheticRecipe& recipe) {
    if (recipe.n == 0) throw DataError("recipe needs n > 0");
    Dataset data;
    std::mt19937_64 rng(recipe.seed);
    if (recipe.id == "tabular1") {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        data.feature_names = {"x"};
        data.target_name = "z";
        data.bounds = {{0.0, 1.0}};
        data.features = Matrix(recipe.n, 1);
        for (std::size_t r = 0; r < recipe.n; ++r) {
            const double x = u(rng);
            data.features(r, 0) = x;
            data.targets.push_back(std::log1p(2.0 * x));
        }
    } else if (recipe.id == "tabular2" || recipe.id == "tabular3") {
        const bool shifted = recipe.id == "tabular3";
        const double lo = shifted ? -2.0 : 0.0;
        const double hi = shifted ? -1.0 : 1.0;
        std::uniform_real_distribution<double> u(lo, hi);
        data.feature_names = {"x", "y"};
        data.target_name = "z";
        data.bounds = {{lo, hi}, {lo, hi}};
        data.features = Matrix(recipe.n, 2);
        for (std::size_t r = 0; r < recipe.n; ++r) {
            const double x = u(rng);
            const double y = u(rng);
            data.features(r, 0) = x;
            data.features(r, 1) = y;
            data.targets.push_back(std::sin(x) + std::exp(y));
        }
    } else if (recipe.id == "tabular4") {
        const CausalGraph g = synthetic_tabular4_graph();
        const Matrix raw = sample(g, recipe.n, recipe.seed);
        const std::size_t ix = g.index_of("X"), iz = g.index_of("Z"), iw = g.index_of("W"), iy = g.index_of("Y");
        data.feature_names = {"X", "Z", "W"};
        data.target_name = "Y";
        data.task = Task::classification;
        data.features = Matrix(recipe.n, 3);
        double mean = 0.0;
        for (std::size_t r = 0; r < recipe.n; ++r) mean += raw(r, iy);
        mean /= static_cast<double>(recipe.n);
        for (std::size_t r = 0; r < recipe.n; ++r) {
            data.features(r, 0) = raw(r, ix);
            data.features(r, 1) = raw(r, iz);
            data.features(r, 2) = raw(r, iw);
            data.targets.push_back(raw(r, iy) > mean ? 1.0 : 0.0);
        }
    } else {
        throw DataError("unknown synthetic recipe '" + recipe.id + "'");
    }
    return data;
}

Dataset dataset_from_graph(const CausalGraph& graph, const std::string& target, std::size_t n,
                           std::uint64_t seed, bool binarize) {
    if (n == 0) throw DataError("graph sample needs n > 0");
    const std::size_t it = graph.index_of(target);
    const Matrix raw = sample(graph, n, seed);
    Dataset data;
    data.target_name = target;
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < graph.size(); ++c) {
        if (c == it) continue;
        cols.push_back(c);
        data.feature_names.push_back(graph.names()[c]);
    }
    data.features = Matrix(n, cols.size());
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += raw(r, it);
    mean /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t k = 0; k < cols.size(); ++k) data.features(r, k) = raw(r, cols[k]);
        data.targets.push_back(binarize ? (raw(r, it) > mean ? 1.0 : 0.0) : raw(r, it));
    }
    data.task = binarize ? Task::classification : Task::regression;
    return data;
}

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

bool parse_number(const std::string& cell, double& out) {
    const std::string t = trim(cell);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size() && std::isfinite(out);
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    std::vector<std::string> header = split_csv_line(line);
    for (auto& h : header) h = trim(h);
    auto column = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError(path + ":1: missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t target_col = column(schema.target);
    std::vector<std::string> feature_cols = schema.features;
    if (feature_cols.empty()) {
        for (const auto& h : header) {
            if (h != schema.target) feature_cols.push_back(h);
        }
    }
    std::vector<std::size_t> feature_idx;
    for (const auto& f : feature_cols) feature_idx.push_back(column(f));
    const std::set<std::string> categorical(schema.one_hot.begin(), schema.one_hot.end());
    for (const auto& c : categorical) column(c);

    struct RawRow {
        std::vector<std::string> cells;
        std::size_t line;
    };
    std::vector<RawRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty() || trim(line) == "\r") continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                            " cells, found " + std::to_string(cells.size()));
        }
        rows.push_back({std::move(cells), line_no});
    }
    if (rows.empty()) throw DataError(path + ": no data rows");

    // Category levels in sorted order.
    std::map<std::string, std::vector<std::string>> levels;
    for (const auto& f : feature_cols) {
        if (!categorical.count(f)) continue;
        std::set<std::string> seen;
        const std::size_t c = column(f);
        for (const auto& r : rows) {
            const std::string v = trim(r.cells[c]);
            if (v.empty()) throw DataError(path + ":" + std::to_string(r.line) + ": empty cell in column '" + f + "'");
            seen.insert(v);
        }
        levels[f] = {seen.begin(), seen.end()};
    }

    Dataset data;
    data.task = schema.task;
    data.target_name = schema.target;
    for (const auto& f : feature_cols) {
        if (categorical.count(f)) {
            for (const auto& lv : levels[f]) data.feature_names.push_back(f + "=" + lv);
        } else {
            data.feature_names.push_back(f);
        }
    }
    data.features = Matrix(rows.size(), data.feature_names.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& raw = rows[r];
        std::size_t out_col = 0;
        for (std::size_t k = 0; k < feature_cols.size(); ++k) {
            const std::string& cell = raw.cells[feature_idx[k]];
            if (categorical.count(feature_cols[k])) {
                const auto& lv = levels[feature_cols[k]];
                const auto pos = std::find(lv.begin(), lv.end(), trim(cell)) - lv.begin();
                for (std::size_t q = 0; q < lv.size(); ++q) {
                    data.features(r, out_col++) = static_cast<std::ptrdiff_t>(q) == pos ? 1.0 : 0.0;
                }
            } else {
                double v = 0.0;
                if (!parse_number(cell, v)) {
                    throw DataError(path + ":" + std::to_string(raw.line) + ": column '" + feature_cols[k] +
                                    "' is not numeric: '" + trim(cell) + "'");
                }
                data.features(r, out_col++) = v;
            }
        }
        double y = 0.0;
        if (!parse_number(raw.cells[target_col], y)) {
            throw DataError(path + ":" + std::to_string(raw.line) + ": target '" + schema.target +
                            "' is not numeric: '" + trim(raw.cells[target_col]) + "'");
        }
        if (schema.task == Task::classification && (y < 0.0 || y != std::floor(y))) {
            throw DataError(path + ":" + std::to_string(raw.line) + ": class label must be a nonnegative integer");
        }
        data.targets.push_back(y);
    }
    return data;
}

std::string dataset_to_csv(const Dataset& data) {
    std::string out;
    for (const auto& name : data.feature_names) out += name + ",";
    out += data.target_name + "\n";
    for (std::size_t r = 0; r < data.size(); ++r) {
        for (std::size_t c = 0; c < data.features.cols(); ++c) out += format_real(data.features(r, c)) + ",";
        out += format_real(data.targets[r]) + "\n";
    }
    return out;
}

void save_csv(const Dataset& data, const std::string& path) { write_file_atomic(path, dataset_to_csv(data)); }

Dataset binarize_output(Dataset data) {
    if (data.targets.empty()) throw DataError("empty dataset");
    std::vector<std::size_t> ref = data.splits.train;
    if (ref.empty()) {
        ref.resize(data.size());
        std::iota(ref.begin(), ref.end(), std::size_t{0});
    }
    double mean = 0.0;
    double lo = data.targets[ref[0]], hi = lo;
    for (auto i : ref) {
        mean += data.targets[i];
        lo = std::min(lo, data.targets[i]);
        hi = std::max(hi, data.targets[i]);
    }
    if (lo == hi) throw DataError("cannot binarize a constant target");
    mean /= static_cast<double>(ref.size());
    for (auto& y : data.targets) y = y > mean ? 1.0 : 0.0;
    data.task = Task::classification;
    return data;
}

Dataset split(Dataset data, const std::vector<double>& fractions, std::uint64_t seed) {
    if (fractions.size() != 2 && fractions.size() != 3) {
        throw DataError("split needs (train, test) or (train, validation, test) fractions");
    }
    double sum = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0)) throw DataError("split fractions must be positive");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DataError("split fractions must sum to 1");
    const std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::size_t> counts;
    std::size_t used = 0;
    for (std::size_t k = 0; k + 1 < fractions.size(); ++k) {
        const auto c = static_cast<std::size_t>(std::llround(fractions[k] * static_cast<double>(n)));
        counts.push_back(std::min(c, n - used));
        used += counts.back();
    }
    counts.push_back(n - used);
    for (auto c : counts) {
        if (c == 0) throw DataError("split fractions leave an empty part for n = " + std::to_string(n));
    }
    std::vector<std::vector<std::size_t>> parts;
    std::size_t at = 0;
    for (auto c : counts) {
        parts.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                           order.begin() + static_cast<std::ptrdiff_t>(at + c));
        at += c;
    }
    data.splits = {};
    data.splits.train = parts[0];
    if (parts.size() == 3) {
        data.splits.validation = parts[1];
        data.splits.test = parts[2];
    } else {
        data.splits.test = parts[1];
    }
    return data;
}

Dataset carve_validation(Dataset data, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw DataError("validation fraction must lie in (0, 1)");
    auto& train = data.splits.train;
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(train.size())));
    if (k == 0 || k >= train.size()) throw DataError("validation carve leaves an empty split");
    std::vector<std::size_t> order = train;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    data.splits.validation.insert(data.splits.validation.end(), order.begin(),
                                  order.begin() + static_cast<std::ptrdiff_t>(k));
    train.assign(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
    return data;
}

Normalization fit_normalization(const Dataset& data, NormalizationMethod method) {
    Normalization norm;
    norm.method = method;
    if (method == NormalizationMethod::none) return norm;
    const std::size_t d = data.features.cols();
    std::vector<std::size_t> ref = data.splits.train;
    if (ref.empty()) {
        ref.resize(data.size());
        std::iota(ref.begin(), ref.end(), std::size_t{0});
    }
    if (ref.empty()) throw DataError("cannot fit normalization on an empty dataset");
    norm.shift.assign(d, 0.0);
    norm.scale.assign(d, 1.0);
    for (std::size_t c = 0; c < d; ++c) {
        if (method == NormalizationMethod::minmax) {
            double lo, hi;
            if (data.bounds.size() == d) {
                lo = data.bounds[c].first;
                hi = data.bounds[c].second;
            } else {
                lo = hi = data.features(ref[0], c);
                for (auto r : ref) {
                    lo = std::min(lo, data.features(r, c));
                    hi = std::max(hi, data.features(r, c));
                }
            }
            norm.shift[c] = lo;
            norm.scale[c] = hi > lo ? hi - lo : 1.0;
        } else {
            double mean = 0.0;
            for (auto r : ref) mean += data.features(r, c);
            mean /= static_cast<double>(ref.size());
            double var = 0.0;
            for (auto r : ref) var += (data.features(r, c) - mean) * (data.features(r, c) - mean);
            var /= static_cast<double>(ref.size());
            norm.shift[c] = mean;
            norm.scale[c] = var > 0.0 ? std::sqrt(var) : 1.0;
        }
    }
    return norm;
}

Dataset normalize(Dataset data, NormalizationMethod method) {
    if (!data.normalization.identity()) throw DataError("dataset is already normalized");
    data.normalization = fit_normalization(data, method);
    data.normalization.apply(data.features);
    return data;
}

Matrix denormalize(const Matrix& x, const Normalization& norm) {
    Matrix out = x;
    norm.invert(out);
    return out;
}

nlohmann::json normalization_to_json(const Normalization& norm) {
    return {{"method", to_string(norm.method)}, {"shift", norm.shift}, {"scale", norm.scale}};
}

nlohmann::json dataset_manifest(const Dataset& data) {
    nlohmann::json j;
    j["rows"] = data.size();
    j["features"] = data.feature_names;
    j["target"] = data.target_name;
    j["task"] = to_string(data.task);
    j["normalization"] = normalization_to_json(data.normalization);
    j["split_sizes"] = {{"train", data.splits.train.size()},
                        {"validation", data.splits.validation.size()},
                        {"test", data.splits.test.size()}};
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(dataset_hash(data)));
    j["hash"] = buf;
    return j;
}

std::uint64_t dataset_hash(const Dataset& data) {
    std::uint64_t h = fnv1a64("dataset");
    auto mix = [&](double v) {
        char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof v);
        h = fnv1a64(std::string_view(bytes, sizeof bytes), h);
    };
    for (double v : data.features.data()) mix(v);
    for (double v : data.targets) mix(v);
    for (auto i : data.splits.train) mix(static_cast<double>(i));
    for (auto i : data.splits.test) mix(static_cast<double>(i));
    return h;
}

}  // namespace credo
