#pragma once

#include <span>
#include <vector>

#include "chasedpo/policy.hpp"

namespace chasedpo {

/// One online sample: prompt z with preferred (chosen) and dispreferred
/// (rejected) completions, tagged with its task domain.
struct PreferenceTriple {
  TokenSequence prompt;
  TokenSequence chosen;
  TokenSequence rejected;
  int domain = 1;

  friend bool operator==(const PreferenceTriple&, const PreferenceTriple&) = default;
};

/// Throws std::invalid_argument (or std::out_of_range for bad tokens).
void validate_triple(const ReferenceModel& model, const PreferenceTriple& triple);

struct ObjectiveConfig {
  double beta_dpo = 0.1;
  double alpha = 0.7;

  void validate() const;
};

/// Batch-mean values of the objective terms. `total` is dpo + alpha·fs for the
/// fast role and dpo - alpha·fs for the slow role.
struct LossBreakdown {
  double dpo = 0.0;
  double fs = 0.0;
  double total = 0.0;
  double margin_ref = 0.0;
  double margin_fs = 0.0;
};

enum class Role { fast, slow };

/// β·[(log π_num − log π_den)(chosen) − (log π_num − log π_den)(rejected)].
/// A null adapter stands for the reference policy.
double implicit_reward_margin(const ReferenceModel& model, const AdapterParams* numerator,
                              const AdapterParams* denominator, const PreferenceTriple& triple,
                              double beta_dpo);

/// −log σ(margin of adapter against the reference).
double dpo_loss(const ReferenceModel& model, const AdapterParams& adapter,
                const PreferenceTriple& triple, const ObjectiveConfig& cfg);

/// −log σ(margin of fast against slow).
double fs_reg_loss(const ReferenceModel& model, const AdapterParams& fast, const AdapterParams& slow,
                   const PreferenceTriple& triple, const ObjectiveConfig& cfg);

struct ObjectiveResult {
  LossBreakdown loss;
  AdapterGrad grad;
};

/// Mean of L_DPO(fast) + α·L_FS over the batch and its gradient with respect
/// to the fast adapter (slow held constant).
ObjectiveResult fast_objective_and_grad(const ReferenceModel& model, const AdapterParams& fast,
                                        const AdapterParams& slow,
                                        std::span<const PreferenceTriple> batch,
                                        const ObjectiveConfig& cfg);

/// Mean of L_DPO(slow) − α·L_FS over the batch and its gradient with respect
/// to the slow adapter (fast held constant).
ObjectiveResult slow_objective_and_grad(const ReferenceModel& model, const AdapterParams& fast,
                                        const AdapterParams& slow,
                                        std::span<const PreferenceTriple> batch,
                                        const ObjectiveConfig& cfg);

// Cached evaluation. Training loops and the offline oracle evaluate the same
// sequences under many adapters; these share the frozen forward pass.

struct CachedTriple {
  SequenceCache chosen;
  SequenceCache rejected;
};

CachedTriple cache_triple(const ReferenceModel& model, const PreferenceTriple& triple);
std::vector<CachedTriple> cache_triples(const ReferenceModel& model,
                                        std::span<const PreferenceTriple> triples);

/// Mean plain DPO loss over cached triples. Throws on an empty batch.
double mean_dpo_loss(std::span<const CachedTriple> batch, const AdapterParams& adapter,
                     double beta_dpo);

/// Mean fast-vs-slow regularizer loss over cached triples.
double mean_fs_loss(std::span<const CachedTriple> batch, const AdapterParams& fast,
                    const AdapterParams& slow, double beta_dpo);

/// Plain DPO loss and gradient (equivalent to the fast objective with α = 0).
ObjectiveResult dpo_objective_and_grad(std::span<const CachedTriple> batch,
                                       const AdapterParams& adapter, double beta_dpo);

/// Combined objective for `role`; the gradient is taken with respect to the
/// adapter holding that role.
ObjectiveResult objective_and_grad(std::span<const CachedTriple> batch, const AdapterParams& fast,
                                   const AdapterParams& slow, const ObjectiveConfig& cfg, Role role);

}  // namespace chasedpo
