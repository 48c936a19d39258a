#include "credo/effects.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "credo/io_util.hpp"

namespace credo {

void EffectQuery::validate() const {
    if (!(low < high)) throw std::invalid_argument("effect grid needs low < high");
    if (points < 2) throw std::invalid_argument("effect grid needs at least two points");
}

std::vector<double> effect_grid(const EffectQuery& query) {
    query.validate();
    std::vector<double> grid(query.points);
    const double step = (query.high - query.low) / static_cast<double>(query.points - 1);
    for (std::size_t k = 0; k < query.points; ++k) grid[k] = query.low + step * static_cast<double>(k);
    grid.back() = query.high;
    if (query.baseline > query.low && query.baseline < query.high &&
        std::find(grid.begin(), grid.end(), query.baseline) == grid.end()) {
        grid.insert(std::upper_bound(grid.begin(), grid.end(), query.baseline), query.baseline);
    }
    return grid;
}

std::size_t baseline_index(const std::vector<double>& grid, double baseline) {
    if (grid.empty()) throw std::invalid_argument("empty grid");
    std::size_t best = 0;
    for (std::size_t k = 1; k < grid.size(); ++k) {
        if (std::abs(grid[k] - baseline) < std::abs(grid[best] - baseline)) best = k;
    }
    return best;
}

namespace {

void check_context(const EffectQuery& query, const MediatorContext& context, std::size_t width) {
    if (query.treatment >= width) throw DimensionError("treatment index out of range");
    if (query.kind == EffectKind::acde) return;
    if (context.roles == nullptr || context.mediators == nullptr) {
        throw std::invalid_argument(to_string(query.kind) + " estimate needs fitted mediators");
    }
    if (context.roles->treatment != query.treatment) {
        throw std::invalid_argument("mediator roles are for a different treatment");
    }
}

}  // namespace

double mc_interventional_expectation(const Model& model, const Matrix& data, const EffectQuery& query, double t,
                                     const MediatorContext& context) {
    if (data.rows() == 0) throw std::invalid_argument("empty dataset");
    if (data.cols() != model.input_dim()) throw DimensionError("data width does not match model");
    if (query.class_index >= model.output_dim()) throw DimensionError("class index out of range");
    check_context(query, context, data.cols());

    double sum = 0.0;
    std::vector<double> row;
    for (std::size_t r = 0; r < data.rows(); ++r) {
        const auto x = data.row(r);
        switch (query.kind) {
            case EffectKind::acde:
                row.assign(x.begin(), x.end());
                row[query.treatment] = t;
                break;
            case EffectKind::ande:
                row = counterfactual_row(*context.mediators, *context.roles, x, t, query.baseline);
                break;
            case EffectKind::atce:
                row = counterfactual_row(*context.mediators, *context.roles, x, t, t);
                break;
        }
        sum += model.predict(row)[query.class_index];
    }
    return sum / static_cast<double>(data.rows());
}

EffectCurve mc_effect_curve(const Model& model, const Matrix& data, const EffectQuery& query,
                            const MediatorContext& context) {
    EffectCurve curve;
    curve.t = effect_grid(query);
    std::vector<double> ie(curve.t.size());
    for (std::size_t k = 0; k < curve.t.size(); ++k) {
        ie[k] = mc_interventional_expectation(model, data, query, curve.t[k], context);
    }
    const double anchor = ie[baseline_index(curve.t, query.baseline)];
    curve.effect.resize(ie.size());
    for (std::size_t k = 0; k < ie.size(); ++k) curve.effect[k] = ie[k] - anchor;
    return curve;
}

DataMoments data_moments(const Matrix& data) {
    if (data.rows() == 0) throw std::invalid_argument("empty dataset");
    const auto n = static_cast<double>(data.rows());
    const std::size_t d = data.cols();
    DataMoments m;
    m.mean.assign(d, 0.0);
    for (std::size_t r = 0; r < data.rows(); ++r) {
        for (std::size_t c = 0; c < d; ++c) m.mean[c] += data(r, c);
    }
    for (auto& v : m.mean) v /= n;
    m.covariance = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t r = 0; r < data.rows(); ++r) {
        for (std::size_t a = 0; a < d; ++a) {
            const double da = data(r, a) - m.mean[a];
            for (std::size_t b = a; b < d; ++b) {
                m.covariance(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) +=
                    da * (data(r, b) - m.mean[b]);
            }
        }
    }
    for (Eigen::Index a = 0; a < m.covariance.rows(); ++a) {
        for (Eigen::Index b = a; b < m.covariance.cols(); ++b) {
            m.covariance(a, b) /= n;
            m.covariance(b, a) = m.covariance(a, b);
        }
    }
    return m;
}

EffectCurve taylor_ace_curve(const Model& model, const EffectQuery& query, const std::vector<double>& mean,
                             const Eigen::MatrixXd& covariance) {
    if (query.kind != EffectKind::acde) {
        throw std::invalid_argument("Taylor ACE is defined for controlled direct effects only");
    }
    const std::size_t d = model.input_dim();
    const auto di = static_cast<Eigen::Index>(d);
    if (mean.size() != d || covariance.rows() != di || covariance.cols() != di) {
        throw DimensionError("moments do not match model input width");
    }
    if (query.treatment >= d) throw DimensionError("treatment index out of range");
    if (query.class_index >= model.output_dim()) throw DimensionError("class index out of range");
    const double scale = 1.0 + covariance.cwiseAbs().maxCoeff();
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw std::invalid_argument("covariance matrix is not symmetric");
    }

    Eigen::MatrixXd cov = covariance;
    const auto ti = static_cast<Eigen::Index>(query.treatment);
    cov.row(ti).setZero();
    cov.col(ti).setZero();

    EffectCurve curve;
    curve.t = effect_grid(query);
    std::vector<double> ie(curve.t.size());
    std::vector<double> mu = mean;
    for (std::size_t k = 0; k < curve.t.size(); ++k) {
        mu[query.treatment] = curve.t[k];
        Tape tape;
        std::vector<Var> inputs;
        for (double v : mu) inputs.push_back(tape.input(v));
        const auto outputs = model.record(tape, inputs, {});
        const Var y = outputs[query.class_index];
        const Eigen::MatrixXd h = tape.input_hessian(y, inputs);
        ie[k] = y.value() + 0.5 * (h * cov).trace();
    }
    const double anchor = ie[baseline_index(curve.t, query.baseline)];
    curve.effect.resize(ie.size());
    for (std::size_t k = 0; k < ie.size(); ++k) curve.effect[k] = ie[k] - anchor;
    return curve;
}

EffectCurve prior_curve(const std::vector<double>& grid, const PriorFunction& prior, std::size_t anchor) {
    if (anchor >= grid.size()) throw std::out_of_range("anchor outside grid");
    EffectCurve curve;
    curve.t = grid;
    const double base = prior.value(grid[anchor]);
    for (double t : grid) curve.effect.push_back(prior.value(t) - base);
    return curve;
}

std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw std::invalid_argument("series lengths differ");
    const auto n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        ma += a[k];
        mb += b[k];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        sab += (a[k] - ma) * (b[k] - mb);
        saa += (a[k] - ma) * (a[k] - ma);
        sbb += (b[k] - mb) * (b[k] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<Point2> polyline(const EffectCurve& curve) {
    std::vector<Point2> out;
    for (std::size_t k = 0; k < curve.size(); ++k) out.push_back({curve.t[k], curve.effect[k]});
    return out;
}

double frechet_distance(const std::vector<Point2>& a, const std::vector<Point2>& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("polylines must be nonempty");
    const std::size_t m = b.size();
    std::vector<double> prev(m), cur(m);
    auto dist = [&](std::size_t i, std::size_t j) { return std::hypot(a[i][0] - b[j][0], a[i][1] - b[j][1]); };
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double dij = dist(i, j);
            if (i == 0 && j == 0) {
                cur[j] = dij;
            } else if (i == 0) {
                cur[j] = std::max(cur[j - 1], dij);
            } else if (j == 0) {
                cur[j] = std::max(prev[j], dij);
            } else {
                cur[j] = std::max(std::min({prev[j], prev[j - 1], cur[j - 1]}), dij);
            }
        }
        std::swap(prev, cur);
    }
    return prev[m - 1];
}

ConformityReport compare_curves(const EffectCurve& curve, const EffectCurve& reference) {
    if (curve.t != reference.t) throw std::invalid_argument("curves are sampled on different grids");
    if (curve.size() == 0) throw std::invalid_argument("empty curve");
    ConformityReport r;
    double sq = 0.0;
    for (std::size_t k = 0; k < curve.size(); ++k) {
        const double diff = curve.effect[k] - reference.effect[k];
        sq += diff * diff;
    }
    r.rmse = std::sqrt(sq / static_cast<double>(curve.size()));
    r.frechet = frechet_distance(polyline(curve), polyline(reference));
    r.pearson = pearson(curve.effect, reference.effect);
    return r;
}

ConformityReport conformity(const EffectCurve& curve, const PriorFunction& prior, double baseline) {
    const auto reference = prior_curve(curve.t, prior, baseline_index(curve.t, baseline));
    return compare_curves(curve, reference);
}

std::string curve_to_csv(const EffectCurve& curve) {
    std::string out = "t,effect\n";
    for (std::size_t k = 0; k < curve.size(); ++k) {
        out += format_real(curve.t[k]) + "," + format_real(curve.effect[k]) + "\n";
    }
    return out;
}

void write_curve_csv(const EffectCurve& curve, const std::string& path) {
    write_file_atomic(path, curve_to_csv(curve));
}

EffectCurve read_curve_csv(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"t", "effect"}) {
        throw std::runtime_error(path + ":1: expected header t,effect");
    }
    EffectCurve curve;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 2) throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected 2 cells");
        try {
            curve.t.push_back(std::stod(cells[0]));
            curve.effect.push_back(std::stod(cells[1]));
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unparseable number");
        }
    }
    return curve;
}

}  // namespace credo
