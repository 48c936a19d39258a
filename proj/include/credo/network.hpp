#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "credo/autodiff.hpp"
#include "credo/matrix.hpp"

namespace credo {

enum class Activation { relu, tanh };
enum class Task { classification, regression };

std::string to_string(Activation a);
std::string to_string(Task t);
Activation activation_from_string(const std::string& s);
Task task_from_string(const std::string& s);

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Architecture {
    std::size_t input_dim = 1;
    std::size_t output_dim = 1;
    std::vector<std::size_t> hidden_sizes{8};
    Activation activation = Activation::relu;
    double dropout_rate = 0.0;
    Task task = Task::regression;

    void validate() const;
    // Sum over layers of (fan_in + 1) * fan_out.
    std::size_t parameter_count() const;
    bool operator==(const Architecture&) const = default;
};

// Anything whose outputs can be recorded on a tape: trained perceptrons as
// well as hand-built closed-form models used by tests and oracles.
class Model {
public:
    virtual ~Model() = default;
    virtual std::size_t input_dim() const = 0;
    virtual std::size_t output_dim() const = 0;
    virtual std::size_t parameter_count() const { return 0; }

    // Deterministic forward pass. `params` is either empty (current parameter
    // values are recorded as constants) or holds parameter_count() leaves.
    virtual std::vector<Var> record(Tape& tape, std::span<const Var> inputs,
                                    std::span<const Var> params) const = 0;

    // Plain numeric evaluation; defaults to a throwaway tape.
    virtual std::vector<double> predict(std::span<const double> x) const;

    // Parameter leaves for the current parameter values, in flat order.
    virtual std::vector<Var> parameter_leaves(Tape& tape) const;
};

class FunctionModel final : public Model {
public:
    using Fn = std::function<std::vector<Var>(Tape&, std::span<const Var>)>;

    FunctionModel(std::size_t input_dim, std::size_t output_dim, Fn fn)
        : input_dim_(input_dim), output_dim_(output_dim), fn_(std::move(fn)) {}

    std::size_t input_dim() const override { return input_dim_; }
    std::size_t output_dim() const override { return output_dim_; }
    std::vector<Var> record(Tape& tape, std::span<const Var> inputs,
                            std::span<const Var> params) const override;

private:
    std::size_t input_dim_;
    std::size_t output_dim_;
    Fn fn_;
};

class Perceptron final : public Model {
public:
    // Glorot-uniform weights, zero biases. Initialisation and dropout draw
    // from separate streams derived from `seed`.
    Perceptron(Architecture arch, std::uint64_t seed);
    // Restores a model from explicit parameters (checkpoints).
    Perceptron(Architecture arch, std::vector<double> parameters, std::uint64_t seed);

    const Architecture& architecture() const { return arch_; }
    std::uint64_t seed() const { return seed_; }

    std::size_t input_dim() const override { return arch_.input_dim; }
    std::size_t output_dim() const override { return arch_.output_dim; }
    std::size_t parameter_count() const override { return params_.size(); }
    std::span<const double> parameters() const { return params_; }
    std::vector<double>& mutable_parameters() { return params_; }

    // Offset of layer k's weight block; biases follow the out x in weights.
    std::size_t layer_offset(std::size_t layer) const { return offsets_.at(layer); }
    std::size_t layer_count() const { return offsets_.size(); }

    // Logits or regression values. With train_mode on, a fresh dropout mask is
    // drawn from the model's dropout stream.
    std::vector<double> forward(std::span<const double> x, bool train_mode);
    std::vector<double> predict(std::span<const double> x) const override;

    std::vector<Var> record(Tape& tape, std::span<const Var> inputs,
                            std::span<const Var> params) const override;
    std::vector<Var> parameter_leaves(Tape& tape) const override;
    // Training-mode forward: draws a dropout mask when dropout_rate > 0.
    std::vector<Var> record_train(Tape& tape, std::span<const Var> inputs,
                                  std::span<const Var> params);

    // Hidden pre-activations for x, layer by layer.
    std::vector<std::vector<double>> pre_activations(std::span<const double> x) const;

    std::mt19937_64& dropout_rng() { return dropout_rng_; }

private:
    template <class S>
    std::vector<S> run(Tape* tape, std::span<const S> x, std::span<const S> params,
                       const std::vector<double>* mask) const;
    std::vector<double> draw_mask();
    void layout();

    Architecture arch_;
    std::uint64_t seed_;
    std::vector<double> params_;
    std::vector<std::size_t> offsets_;
    std::mt19937_64 dropout_rng_;
};

struct Batch {
    std::vector<std::span<const double>> inputs;
    std::vector<double> targets;

    std::size_t size() const { return inputs.size(); }
    static Batch from_rows(const Matrix& x, std::span<const double> y,
                           std::span<const std::size_t> rows);
};

// Mean cross-entropy over softmax (classification) or mean squared error
// (regression) of already recorded outputs.
Var erm_from_outputs(Tape& tape, const std::vector<std::vector<Var>>& outputs,
                     std::span<const double> targets, Task task);

// ERM loss of a perceptron on a batch. train_mode enables dropout.
Var erm_loss(Perceptron& model, Tape& tape, std::span<const Var> params, const Batch& batch,
             bool train_mode);

struct TrainingConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    std::size_t epochs = 100;
    double weight_decay = 0.0;
    double lambda1 = 0.0;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const;
};

// Differentiable penalty added to ERM during training.
class Regularizer {
public:
    virtual ~Regularizer() = default;
    virtual Var record(const Model& model, Tape& tape, std::span<const Var> params,
                       const Batch& batch) const = 0;
};

// erm + lambda * penalty. With lambda == 0 or no penalty, returns erm itself
// so the recorded tape is identical to plain ERM.
Var objective_root(Var erm, const Var* penalty, double lambda);

class AdamOptimizer {
public:
    AdamOptimizer(std::size_t n, const TrainingConfig& config);
    // Applies one update; weight decay enters as an L2 term on the gradient.
    void step(std::vector<double>& params, std::span<const double> grad);
    std::size_t steps() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_, weight_decay_;
    std::size_t t_ = 0;
    std::vector<double> m_, v_;
};

class TrainingError : public std::runtime_error {
public:
    TrainingError(std::size_t epoch, std::size_t batch, double param_norm, double loss);
    std::size_t epoch;
    std::size_t batch;
    double param_norm;
    double loss;
};

struct TrainingTrace {
    std::vector<double> objective;  // mean per epoch
    std::vector<double> erm;
    std::vector<double> penalty;
};

TrainingTrace train(Perceptron& model, const Matrix& x, std::span<const double> y,
                    const TrainingConfig& config, const Regularizer* regularizer = nullptr);

// Full-data metrics: accuracy for classification, mean squared error for regression.
double accuracy(const Model& model, const Matrix& x, std::span<const double> y);
double mean_squared_error(const Model& model, const Matrix& x, std::span<const double> y);

void save_checkpoint(const Perceptron& model, const std::string& path);
Perceptron load_checkpoint(const std::string& path);

}  // namespace credo
