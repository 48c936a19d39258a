#include "credo/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "credo/seeding.hpp"

namespace credo {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }
std::string to_string(Task t) { return t == Task::classification ? "classification" : "regression"; }

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

Task task_from_string(const std::string& s) {
    if (s == "classification") return Task::classification;
    if (s == "regression") return Task::regression;
    throw std::invalid_argument("unknown task '" + s + "'");
}

void Architecture::validate() const {
    if (input_dim == 0 || output_dim == 0) throw std::invalid_argument("architecture dimensions must be positive");
    if (hidden_sizes.empty()) throw std::invalid_argument("architecture needs at least one hidden layer");
    for (auto h : hidden_sizes) {
        if (h == 0) throw std::invalid_argument("hidden layer of size 0");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("dropout_rate must lie in [0,1)");
    if (task == Task::regression && output_dim != 1) {
        throw std::invalid_argument("regression networks have a single output");
    }
    if (task == Task::classification && output_dim < 2) {
        throw std::invalid_argument("classification needs at least two output logits");
    }
}

std::size_t Architecture::parameter_count() const {
    std::size_t count = 0;
    std::size_t in = input_dim;
    for (auto h : hidden_sizes) {
        count += (in + 1) * h;
        in = h;
    }
    return count + (in + 1) * output_dim;
}

std::vector<double> Model::predict(std::span<const double> x) const {
    if (x.size() != input_dim()) throw DimensionError("input has wrong dimension");
    Tape tape;
    std::vector<Var> inputs;
    inputs.reserve(x.size());
    for (double v : x) inputs.push_back(tape.input(v));
    const auto out = record(tape, inputs, {});
    std::vector<double> values;
    values.reserve(out.size());
    for (const auto& o : out) values.push_back(o.value());
    return values;
}

std::vector<Var> Model::parameter_leaves(Tape&) const { return {}; }

std::vector<Var> FunctionModel::record(Tape& tape, std::span<const Var> inputs,
                                       std::span<const Var>) const {
    if (inputs.size() != input_dim_) throw DimensionError("input has wrong dimension");
    auto out = fn_(tape, inputs);
    if (out.size() != output_dim_) throw DimensionError("model returned wrong number of outputs");
    return out;
}

Perceptron::Perceptron(Architecture arch, std::uint64_t seed)
    : arch_(std::move(arch)), seed_(seed), dropout_rng_(derive_seed(seed, "dropout")) {
    arch_.validate();
    layout();
    params_.assign(arch_.parameter_count(), 0.0);
    std::mt19937_64 init_rng(derive_seed(seed, "init"));
    std::size_t in = arch_.input_dim;
    for (std::size_t k = 0; k < offsets_.size(); ++k) {
        const std::size_t out = k < arch_.hidden_sizes.size() ? arch_.hidden_sizes[k] : arch_.output_dim;
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::size_t w = 0; w < in * out; ++w) params_[offsets_[k] + w] = dist(init_rng);
        in = out;
    }
}

Perceptron::Perceptron(Architecture arch, std::vector<double> parameters, std::uint64_t seed)
    : arch_(std::move(arch)), seed_(seed), params_(std::move(parameters)),
      dropout_rng_(derive_seed(seed, "dropout")) {
    arch_.validate();
    layout();
    if (params_.size() != arch_.parameter_count()) {
        throw DimensionError("parameter vector does not match architecture");
    }
}

void Perceptron::layout() {
    offsets_.clear();
    std::size_t offset = 0;
    std::size_t in = arch_.input_dim;
    for (auto h : arch_.hidden_sizes) {
        offsets_.push_back(offset);
        offset += (in + 1) * h;
        in = h;
    }
    offsets_.push_back(offset);
}

template <class S>
std::vector<S> Perceptron::run(Tape* tape, std::span<const S> x, std::span<const S> p,
                               const std::vector<double>* mask) const {
    using std::tanh;
    if (x.size() != arch_.input_dim) throw DimensionError("input has wrong dimension");
    std::vector<S> h(x.begin(), x.end());
    std::vector<S> next;
    std::size_t in = arch_.input_dim;
    std::size_t unit = 0;
    const std::size_t layers = offsets_.size();
    for (std::size_t k = 0; k < layers; ++k) {
        const bool hidden = k + 1 < layers;
        const std::size_t out = hidden ? arch_.hidden_sizes[k] : arch_.output_dim;
        const std::size_t w0 = offsets_[k];
        const std::size_t b0 = w0 + out * in;
        next.clear();
        next.reserve(out);
        for (std::size_t o = 0; o < out; ++o) {
            S acc = p[b0 + o];
            const std::size_t row = w0 + o * in;
            for (std::size_t i = 0; i < in; ++i) acc = acc + p[row + i] * h[i];
            if (hidden) {
                acc = arch_.activation == Activation::relu ? relu(acc) : tanh(acc);
                if (mask != nullptr) acc = acc * lift<S>(tape, (*mask)[unit]);
                ++unit;
            }
            next.push_back(acc);
        }
        std::swap(h, next);
        in = out;
    }
    return h;
}

std::vector<double> Perceptron::draw_mask() {
    std::size_t units = 0;
    for (auto h : arch_.hidden_sizes) units += h;
    std::vector<double> mask(units);
    std::bernoulli_distribution keep(1.0 - arch_.dropout_rate);
    const double scale = 1.0 / (1.0 - arch_.dropout_rate);
    for (auto& m : mask) m = keep(dropout_rng_) ? scale : 0.0;
    return mask;
}

std::vector<double> Perceptron::forward(std::span<const double> x, bool train_mode) {
    if (train_mode && arch_.dropout_rate > 0.0) {
        const auto mask = draw_mask();
        return run<double>(nullptr, x, params_, &mask);
    }
    return run<double>(nullptr, x, params_, nullptr);
}

std::vector<double> Perceptron::predict(std::span<const double> x) const {
    return run<double>(nullptr, x, params_, nullptr);
}

std::vector<Var> Perceptron::record(Tape& tape, std::span<const Var> inputs,
                                    std::span<const Var> params) const {
    if (params.empty()) {
        std::vector<Var> constants;
        constants.reserve(params_.size());
        for (double v : params_) constants.push_back(tape.constant(v));
        return run<Var>(&tape, inputs, constants, nullptr);
    }
    if (params.size() != params_.size()) throw DimensionError("wrong number of parameter leaves");
    return run<Var>(&tape, inputs, params, nullptr);
}

std::vector<Var> Perceptron::record_train(Tape& tape, std::span<const Var> inputs,
                                          std::span<const Var> params) {
    if (arch_.dropout_rate <= 0.0) return record(tape, inputs, params);
    if (params.size() != params_.size()) throw DimensionError("wrong number of parameter leaves");
    const auto mask = draw_mask();
    return run<Var>(&tape, inputs, params, &mask);
}

std::vector<Var> Perceptron::parameter_leaves(Tape& tape) const {
    std::vector<Var> leaves;
    leaves.reserve(params_.size());
    for (double v : params_) leaves.push_back(tape.parameter(v));
    return leaves;
}

std::vector<std::vector<double>> Perceptron::pre_activations(std::span<const double> x) const {
    if (x.size() != arch_.input_dim) throw DimensionError("input has wrong dimension");
    std::vector<std::vector<double>> out;
    std::vector<double> h(x.begin(), x.end());
    std::size_t in = arch_.input_dim;
    for (std::size_t k = 0; k < arch_.hidden_sizes.size(); ++k) {
        const std::size_t n = arch_.hidden_sizes[k];
        const std::size_t w0 = offsets_[k];
        std::vector<double> pre(n);
        for (std::size_t o = 0; o < n; ++o) {
            double acc = params_[w0 + n * in + o];
            for (std::size_t i = 0; i < in; ++i) acc += params_[w0 + o * in + i] * h[i];
            pre[o] = acc;
        }
        h.resize(n);
        for (std::size_t o = 0; o < n; ++o) {
            h[o] = arch_.activation == Activation::relu ? relu(pre[o]) : std::tanh(pre[o]);
        }
        out.push_back(std::move(pre));
        in = n;
    }
    return out;
}

Batch Batch::from_rows(const Matrix& x, std::span<const double> y, std::span<const std::size_t> rows) {
    Batch b;
    b.inputs.reserve(rows.size());
    b.targets.reserve(rows.size());
    for (auto r : rows) {
        b.inputs.push_back(x.row(r));
        b.targets.push_back(y[r]);
    }
    return b;
}

Var erm_from_outputs(Tape&, const std::vector<std::vector<Var>>& outputs,
                     std::span<const double> targets, Task task) {
    if (outputs.empty()) throw std::invalid_argument("empty batch");
    if (outputs.size() != targets.size()) throw DimensionError("outputs and targets differ in length");
    Var total;
    for (std::size_t j = 0; j < outputs.size(); ++j) {
        const auto& out = outputs[j];
        Var loss;
        if (task == Task::classification) {
            const double label = targets[j];
            if (!(label >= 0.0) || label != std::floor(label) ||
                label >= static_cast<double>(out.size())) {
                throw std::out_of_range("class label " + std::to_string(label) + " out of range");
            }
            Var m = out[0];
            for (std::size_t k = 1; k < out.size(); ++k) m = max(m, out[k]);
            Var sum = exp(out[0] - m);
            for (std::size_t k = 1; k < out.size(); ++k) sum = sum + exp(out[k] - m);
            loss = m + log(sum) - out[static_cast<std::size_t>(label)];
        } else {
            const Var diff = out[0] - targets[j];
            loss = diff * diff;
        }
        total = j == 0 ? loss : total + loss;
    }
    return total * (1.0 / static_cast<double>(outputs.size()));
}

Var erm_loss(Perceptron& model, Tape& tape, std::span<const Var> params, const Batch& batch,
             bool train_mode) {
    std::vector<std::vector<Var>> outputs;
    outputs.reserve(batch.size());
    std::vector<Var> inputs;
    for (const auto& x : batch.inputs) {
        if (x.size() != model.input_dim()) throw DimensionError("input has wrong dimension");
        inputs.clear();
        for (double v : x) inputs.push_back(tape.constant(v));
        outputs.push_back(train_mode ? model.record_train(tape, inputs, params)
                                     : model.record(tape, inputs, params));
    }
    return erm_from_outputs(tape, outputs, batch.targets, model.architecture().task);
}

void TrainingConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (epochs == 0) throw std::invalid_argument("epochs must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be nonnegative");
    if (!(lambda1 >= 0.0) || !std::isfinite(lambda1)) throw std::invalid_argument("lambda1 must be finite and nonnegative");
}

Var objective_root(Var erm, const Var* penalty, double lambda) {
    if (penalty == nullptr || lambda == 0.0) return erm;
    return erm + *penalty * lambda;
}

AdamOptimizer::AdamOptimizer(std::size_t n, const TrainingConfig& config)
    : lr_(config.learning_rate), beta1_(config.beta1), beta2_(config.beta2),
      eps_(config.adam_epsilon), weight_decay_(config.weight_decay), m_(n, 0.0), v_(n, 0.0) {}

void AdamOptimizer::step(std::vector<double>& params, std::span<const double> grad) {
    if (grad.size() != params.size() || params.size() != m_.size()) {
        throw DimensionError("optimizer state does not match parameters");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double g = grad[k] + weight_decay_ * params[k];
        m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g;
        v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g * g;
        const double m_hat = m_[k] / bc1;
        const double v_hat = v_[k] / bc2;
        params[k] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
}

TrainingError::TrainingError(std::size_t epoch_, std::size_t batch_, double norm, double loss_)
    : std::runtime_error([&] {
          std::ostringstream os;
          os << "non-finite training loss " << loss_ << " at epoch " << epoch_ << ", batch " << batch_
             << " (parameter norm " << norm << ")";
          return os.str();
      }()),
      epoch(epoch_), batch(batch_), param_norm(norm), loss(loss_) {}

TrainingTrace train(Perceptron& model, const Matrix& x, std::span<const double> y,
                    const TrainingConfig& config, const Regularizer* regularizer) {
    config.validate();
    if (x.rows() == 0) throw std::invalid_argument("empty training set");
    if (x.rows() != y.size()) throw DimensionError("feature and target row counts differ");
    if (x.cols() != model.input_dim()) throw DimensionError("feature width does not match model");

    const bool regularized = regularizer != nullptr && config.lambda1 != 0.0;
    std::mt19937_64 shuffle_rng(config.seed);
    AdamOptimizer optimizer(model.parameter_count(), config);
    std::vector<std::size_t> order(x.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> grad(model.parameter_count());

    TrainingTrace trace;
    Tape tape;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double obj_sum = 0.0, erm_sum = 0.0, pen_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const std::span<const std::size_t> rows(order.data() + start, stop - start);
            const Batch batch = Batch::from_rows(x, y, rows);

            tape.clear();
            const auto params = model.parameter_leaves(tape);
            const Var erm = erm_loss(model, tape, params, batch, true);
            Var penalty;
            if (regularized) penalty = regularizer->record(model, tape, params, batch);
            const Var objective = objective_root(erm, regularized ? &penalty : nullptr, config.lambda1);

            if (!std::isfinite(objective.value())) {
                double norm = 0.0;
                for (double p : model.parameters()) norm += p * p;
                throw TrainingError(epoch, batch_index, std::sqrt(norm), objective.value());
            }

            const auto adj = tape.adjoints(objective);
            for (std::size_t k = 0; k < params.size(); ++k) grad[k] = adj[params[k].id()];
            optimizer.step(model.mutable_parameters(), grad);

            const double w = static_cast<double>(rows.size());
            obj_sum += w * objective.value();
            erm_sum += w * erm.value();
            if (regularized) pen_sum += w * penalty.value();
        }
        const double n = static_cast<double>(order.size());
        trace.objective.push_back(obj_sum / n);
        trace.erm.push_back(erm_sum / n);
        trace.penalty.push_back(pen_sum / n);
    }
    return trace;
}

double accuracy(const Model& model, const Matrix& x, std::span<const double> y) {
    if (x.rows() == 0) throw std::invalid_argument("empty evaluation set");
    std::size_t correct = 0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto out = model.predict(x.row(r));
        const auto best = static_cast<double>(std::max_element(out.begin(), out.end()) - out.begin());
        if (best == y[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(x.rows());
}

double mean_squared_error(const Model& model, const Matrix& x, std::span<const double> y) {
    if (x.rows() == 0) throw std::invalid_argument("empty evaluation set");
    double sum = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double d = model.predict(x.row(r))[0] - y[r];
        sum += d * d;
    }
    return sum / static_cast<double>(x.rows());
}

namespace {
constexpr int kCheckpointVersion = 1;
}

void save_checkpoint(const Perceptron& model, const std::string& path) {
    const auto& a = model.architecture();
    nlohmann::json j;
    j["format"] = "credo-perceptron";
    j["version"] = kCheckpointVersion;
    j["architecture"] = {
        {"input_dim", a.input_dim},     {"output_dim", a.output_dim},
        {"hidden_sizes", a.hidden_sizes}, {"activation", to_string(a.activation)},
        {"dropout_rate", a.dropout_rate}, {"task", to_string(a.task)},
    };
    j["seed"] = model.seed();
    j["parameters"] = std::vector<double>(model.parameters().begin(), model.parameters().end());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out << j.dump(1) << '\n';
}

Perceptron load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path);
    const auto j = nlohmann::json::parse(in);
    if (j.value("format", "") != "credo-perceptron") throw std::runtime_error(path + ": not a perceptron checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) throw std::runtime_error(path + ": unsupported version");
    const auto& ja = j.at("architecture");
    Architecture a;
    a.input_dim = ja.at("input_dim").get<std::size_t>();
    a.output_dim = ja.at("output_dim").get<std::size_t>();
    a.hidden_sizes = ja.at("hidden_sizes").get<std::vector<std::size_t>>();
    a.activation = activation_from_string(ja.at("activation").get<std::string>());
    a.dropout_rate = ja.at("dropout_rate").get<double>();
    a.task = task_from_string(ja.at("task").get<std::string>());
    return Perceptron(a, j.at("parameters").get<std::vector<double>>(), j.at("seed").get<std::uint64_t>());
}

}  // namespace credo
