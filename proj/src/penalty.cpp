#include "credo/penalty.hpp"

#include <algorithm>
#include <stdexcept>

namespace credo {

TreatmentContext TreatmentContext::make(RoleAssignment roles, MediatorModel mediators) {
    TreatmentContext ctx;
    ctx.sensitivities = mediator_sensitivities(mediators, roles);
    ctx.roles = std::move(roles);
    ctx.mediators = std::move(mediators);
    return ctx;
}

namespace {

struct Slot {
    const PriorEntry* entry;
    std::size_t column;  // c * d + i
};

std::vector<Slot> ordered_slots(const PriorSpec& spec) {
    std::vector<Slot> slots;
    for (const auto& e : spec.entries) slots.push_back({&e, e.class_index * spec.features + e.feature});
    std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) { return a.column < b.column; });
    return slots;
}

PenaltyValue run_penalty(const Model& model, Tape& tape, std::span<const Var> params, const Batch& batch,
                         const PriorSpec& spec, const std::map<std::size_t, TreatmentContext>* contexts) {
    spec.validate();
    const std::size_t n = batch.size();
    const std::size_t C = spec.classes;
    const std::size_t d = spec.features;
    if (n == 0) throw std::invalid_argument("empty batch");
    if (model.output_dim() != C) throw DimensionError("prior classes do not match model outputs");
    if (model.input_dim() != d) throw DimensionError("prior features do not match model inputs");

    const EffectKind kind = spec.kind;
    const auto features = spec.prior_features();
    std::vector<const TreatmentContext*> ctx(d, nullptr);
    if (kind != EffectKind::acde) {
        if (contexts == nullptr) throw std::invalid_argument(to_string(kind) + " penalty needs a mediator model");
        for (auto i : features) {
            auto it = contexts->find(i);
            if (it == contexts->end()) {
                throw std::invalid_argument(to_string(kind) + " penalty has no causal context for feature " +
                                            std::to_string(i));
            }
            if (it->second.roles.treatment != i) throw std::invalid_argument("context treatment mismatch");
            ctx[i] = &it->second;
        }
    }
    // Features whose derivative is the plain partial at the observed row. With
    // no mediators, ANDE and ATCE take exactly this path.
    auto factual = [&](std::size_t i) { return ctx[i] == nullptr || ctx[i]->roles.mediators.empty(); };

    const auto slots = ordered_slots(spec);
    PenaltyValue out;
    out.derivatives = Matrix(n, C * d);
    out.residuals = Matrix(n, C * d);
    out.l1.assign(n, 0.0);

    Var total;
    bool have_total = false;
    std::vector<Var> inputs;
    std::vector<Var> deriv(C * d);
    std::vector<char> have(C * d);

    for (std::size_t j = 0; j < n; ++j) {
        const auto x = batch.inputs[j];
        if (x.size() != d) throw DimensionError("input has wrong dimension");
        const Matrix active = active_mask(spec, x);
        const Matrix dg = prior_derivative_matrix(spec, x);
        std::fill(have.begin(), have.end(), 0);

        // Observed-row forward: partials for factual features, and the
        // treatment and mediator partials for ATCE total derivatives.
        bool need_observed = false;
        for (const auto& s : slots) {
            const std::size_t i = s.entry->feature;
            if (active(s.entry->class_index, i) != 0.0 && (factual(i) || kind == EffectKind::atce)) {
                need_observed = true;
            }
        }
        if (need_observed) {
            inputs.clear();
            for (double v : x) inputs.push_back(tape.input(v));
            const auto outputs = model.record(tape, inputs, params);
            for (std::size_t c = 0; c < C; ++c) {
                std::vector<std::size_t> leaves;
                for (const auto& s : slots) {
                    const std::size_t i = s.entry->feature;
                    if (s.entry->class_index != c || active(c, i) == 0.0) continue;
                    if (factual(i)) {
                        leaves.push_back(i);
                    } else if (kind == EffectKind::atce) {
                        leaves.push_back(i);
                        for (auto z : ctx[i]->roles.mediators) leaves.push_back(z);
                    }
                }
                if (leaves.empty()) continue;
                std::sort(leaves.begin(), leaves.end());
                leaves.erase(std::unique(leaves.begin(), leaves.end()), leaves.end());
                std::vector<Var> wrt;
                for (auto k : leaves) wrt.push_back(inputs[k]);
                const auto grads = tape.record_gradient(outputs[c], wrt);
                auto partial = [&](std::size_t k) {
                    return grads[static_cast<std::size_t>(std::lower_bound(leaves.begin(), leaves.end(), k) -
                                                          leaves.begin())];
                };
                for (const auto& s : slots) {
                    const std::size_t i = s.entry->feature;
                    if (s.entry->class_index != c || active(c, i) == 0.0) continue;
                    if (factual(i)) {
                        deriv[s.column] = partial(i);
                    } else if (kind == EffectKind::atce) {
                        // d y/d t = dy/dt + sum_l dy/dZ^l * dZ^l/dt, mediators frozen.
                        Var td = partial(i);
                        const auto& ms = ctx[i]->roles.mediators;
                        for (std::size_t l = 0; l < ms.size(); ++l) {
                            td = td + partial(ms[l]) * ctx[i]->sensitivities[l];
                        }
                        deriv[s.column] = td;
                    } else {
                        continue;
                    }
                    have[s.column] = 1;
                }
            }
        }

        // ANDE: partial at (t^j, Z_{t*}(x^j), w^j). The counterfactual
        // mediators enter as constants.
        if (kind == EffectKind::ande) {
            for (auto i : features) {
                if (factual(i)) continue;
                bool any = false;
                for (std::size_t c = 0; c < C; ++c) any = any || active(c, i) != 0.0;
                if (!any) continue;
                const auto& tc = *ctx[i];
                const auto row = counterfactual_row(tc.mediators, tc.roles, x, x[i], tc.roles.baseline);
                inputs.clear();
                for (std::size_t k = 0; k < d; ++k) {
                    inputs.push_back(k == i ? tape.input(row[k]) : tape.constant(row[k]));
                }
                const auto outputs = model.record(tape, inputs, params);
                const Var wrt[] = {inputs[i]};
                for (const auto& s : slots) {
                    if (s.entry->feature != i || active(s.entry->class_index, i) == 0.0) continue;
                    deriv[s.column] = tape.record_gradient(outputs[s.entry->class_index], wrt).front();
                    have[s.column] = 1;
                }
            }
        }

        Var l1;
        bool have_l1 = false;
        for (const auto& s : slots) {
            if (!have[s.column]) continue;
            const std::size_t c = s.entry->class_index;
            const std::size_t i = s.entry->feature;
            const Var term = abs(deriv[s.column] - dg(c, i));
            out.derivatives(j, s.column) = deriv[s.column].value();
            out.residuals(j, s.column) = term.value();
            l1 = have_l1 ? l1 + term : term;
            have_l1 = true;
        }
        if (!have_l1) continue;
        out.l1[j] = l1.value();
        const Var hinge = relu(spec.epsilon == 0.0 ? l1 : l1 - spec.epsilon);
        total = have_total ? total + hinge : hinge;
        have_total = true;
    }

    out.root = have_total ? total * (1.0 / static_cast<double>(n)) : tape.constant(0.0);
    return out;
}

}  // namespace

CredoPenalty::CredoPenalty(PriorSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    if (spec_.kind != EffectKind::acde) {
        throw std::invalid_argument(to_string(spec_.kind) + " penalty needs roles and a mediator model");
    }
}

CredoPenalty::CredoPenalty(PriorSpec spec, std::map<std::size_t, TreatmentContext> contexts)
    : spec_(std::move(spec)), contexts_(std::move(contexts)) {
    spec_.validate();
    if (spec_.kind != EffectKind::acde) {
        for (auto i : spec_.prior_features()) {
            if (!contexts_.count(i)) {
                throw std::invalid_argument("missing mediator model for feature " + std::to_string(i));
            }
        }
    }
}

PenaltyValue CredoPenalty::evaluate(const Model& model, Tape& tape, std::span<const Var> params,
                                    const Batch& batch) const {
    return run_penalty(model, tape, params, batch, spec_, spec_.kind == EffectKind::acde ? nullptr : &contexts_);
}

Var CredoPenalty::record(const Model& model, Tape& tape, std::span<const Var> params, const Batch& batch) const {
    return evaluate(model, tape, params, batch).root;
}

PenaltyValue acde_penalty(const Model& model, Tape& tape, std::span<const Var> params, const Batch& batch,
                          const PriorSpec& spec) {
    if (spec.kind != EffectKind::acde) throw std::invalid_argument("prior spec is not ACDE");
    return run_penalty(model, tape, params, batch, spec, nullptr);
}

PenaltyValue ande_penalty(const Model& model, Tape& tape, std::span<const Var> params, const Batch& batch,
                          const PriorSpec& spec, const std::map<std::size_t, TreatmentContext>& contexts) {
    if (spec.kind != EffectKind::ande) throw std::invalid_argument("prior spec is not ANDE");
    return run_penalty(model, tape, params, batch, spec, &contexts);
}

PenaltyValue atce_penalty(const Model& model, Tape& tape, std::span<const Var> params, const Batch& batch,
                          const PriorSpec& spec, const std::map<std::size_t, TreatmentContext>& contexts) {
    if (spec.kind != EffectKind::atce) throw std::invalid_argument("prior spec is not ATCE");
    return run_penalty(model, tape, params, batch, spec, &contexts);
}

Var combined_objective(Perceptron& model, Tape& tape, std::span<const Var> params, const Batch& batch,
                       const TrainingConfig& config, const Regularizer* penalty) {
    const Var erm = erm_loss(model, tape, params, batch, false);
    if (penalty == nullptr || config.lambda1 == 0.0) return objective_root(erm, nullptr, config.lambda1);
    const Var p = penalty->record(model, tape, params, batch);
    return objective_root(erm, &p, config.lambda1);
}

}  // namespace credo
