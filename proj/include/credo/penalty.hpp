#pragma once

#include <map>
#include <vector>

#include "credo/network.hpp"
#include "credo/priors.hpp"
#include "credo/scm.hpp"

namespace credo {

// Causal context of one treatment feature for ANDE/ATCE.
struct TreatmentContext {
    RoleAssignment roles;
    MediatorModel mediators;
    std::vector<double> sensitivities;  // dZ^k/dt, filled by make_context

    static TreatmentContext make(RoleAssignment roles, MediatorModel mediators);
};

struct PenaltyValue {
    Var root;
    // N x (C*d), column c*d + i. Model derivative used for each active
    // (class, feature) entry (partial or total), zero elsewhere.
    Matrix derivatives;
    // |derivative - prior derivative| on active entries, zero elsewhere.
    Matrix residuals;
    // Per-sample L1 norm before the hinge.
    std::vector<double> l1;
};

class CredoPenalty final : public Regularizer {
public:
    // ACDE: no causal graph needed.
    explicit CredoPenalty(PriorSpec spec);
    // ANDE/ATCE: one context per prior feature.
    CredoPenalty(PriorSpec spec, std::map<std::size_t, TreatmentContext> contexts);

    const PriorSpec& spec() const { return spec_; }
    EffectKind kind() const { return spec_.kind; }
    const std::map<std::size_t, TreatmentContext>& contexts() const { return contexts_; }

    PenaltyValue evaluate(const Model& model, Tape& tape, std::span<const Var> params,
                          const Batch& batch) const;
    Var record(const Model& model, Tape& tape, std::span<const Var> params,
               const Batch& batch) const override;

private:
    PriorSpec spec_;
    std::map<std::size_t, TreatmentContext> contexts_;
};

PenaltyValue acde_penalty(const Model& model, Tape& tape, std::span<const Var> params, const Batch& batch,
                          const PriorSpec& spec);
PenaltyValue ande_penalty(const Model& model, Tape& tape, std::span<const Var> params, const Batch& batch,
                          const PriorSpec& spec, const std::map<std::size_t, TreatmentContext>& contexts);
PenaltyValue atce_penalty(const Model& model, Tape& tape, std::span<const Var> params, const Batch& batch,
                          const PriorSpec& spec, const std::map<std::size_t, TreatmentContext>& contexts);

// erm_loss + lambda1 * penalty on one tape (deterministic forward).
Var combined_objective(Perceptron& model, Tape& tape, std::span<const Var> params, const Batch& batch,
                       const TrainingConfig& config, const Regularizer* penalty);

}  // namespace credo
