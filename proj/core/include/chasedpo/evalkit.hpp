#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chasedpo/datagen.hpp"
#include "chasedpo/objectives.hpp"
#include "chasedpo/ofs_trainer.hpp"
#include "chasedpo/policy.hpp"

namespace chasedpo {

// ---- Offline optimum and regret -------------------------------------------

struct OptimumConfig {
  std::size_t epochs = 500;
  double lr = 1e-2;
};

struct OptimumResult {
  AdapterParams adapter;
  double loss = 0.0;
  std::size_t best_epoch = 0;
};

/// Best iterate of full-batch AdamW on the mean DPO loss, started from the
/// single-module initialization of `cfg`. Stand-in for argmin over θ.
OptimumResult offline_optimum(const ReferenceModel& model,
                              std::span<const PreferenceTriple> dataset, const TrainConfig& cfg,
                              const OptimumConfig& oc = {});
OptimumResult offline_optimum(std::span<const CachedTriple> dataset, AdapterParams init,
                              const TrainConfig& cfg, const OptimumConfig& oc = {});

struct RegretReport {
  std::size_t T = 0;
  double mean_loss_final = 0.0;
  double mean_loss_star = 0.0;
  double regret = 0.0;
  /// l(θ₁, x₁): loss of the initial parameters on the first online batch.
  std::optional<double> loss_first_step;
};

/// Mean loss of `final_adapter` minus mean loss of `star` over the dataset.
/// T is the number of online steps when logs are supplied, else the dataset size.
RegretReport empirical_regret(std::span<const CachedTriple> dataset,
                              const AdapterParams& final_adapter, const AdapterParams& star,
                              double beta_dpo, std::span<const StepLog> logs = {});
RegretReport empirical_regret(const ReferenceModel& model, const AdapterParams& final_adapter,
                              const AdapterParams& star, std::span<const PreferenceTriple> dataset,
                              double beta_dpo, std::span<const StepLog> logs = {});

/// Sum of per-task regrets of (final1 on data1) and (final2 on data2) against
/// a shared optimum.
RegretReport dual_task_regret(std::span<const CachedTriple> data1,
                              std::span<const CachedTriple> data2, const AdapterParams& final1,
                              const AdapterParams& final2, const AdapterParams& star,
                              double beta_dpo);
RegretReport dual_task_regret(const ReferenceModel& model, const AdapterParams& final1,
                              const AdapterParams& final2, const AdapterParams& star,
                              std::span<const PreferenceTriple> data1,
                              std::span<const PreferenceTriple> data2, double beta_dpo);

// ---- Regret lower bounds ---------------------------------------------------

struct BoundReport {
  double G = 0.0;
  double d = 0.0;
  double delta0 = 0.0;
  bool mode_fs = false;
  double rhs = 0.0;
  double lhs = 0.0;
  bool holds = false;
  /// Failure probability attached to the single-task bound.
  std::optional<double> delta;
  // Dual-task inputs (absent for the single-task bound).
  std::optional<double> B;
  std::optional<double> c;
  std::optional<double> l1;
  std::optional<double> delta1;
  std::optional<double> delta2;
  std::size_t T1 = 0;
  std::size_t T2 = 0;
};

/// Single-task bound. Requires report.loss_first_step, 0 < delta0 < 1, T >= 1.
BoundReport theorem1_rhs(const RegretReport& report, double G, double d, double delta0,
                         bool mode_fs, std::size_t T);

/// Dual-task bound; `measured` is the dual-task regret being checked.
BoundReport theorem2_rhs(double l1, double B, double delta1, double delta2, double G, double d,
                         bool mode_fs, std::size_t T1, std::size_t T2, double measured);

/// Largest gradient-norm entry (fast or slow) in the logs.
double estimate_G(std::span<const StepLog> logs);
/// Largest pairwise distance between checkpoints of the same module.
double estimate_d(std::span<const TrailPoint> trail);

// ---- Task metrics ----------------------------------------------------------

/// Substream used for evaluation item `index`; shared by every metric so that
/// two policies evaluated with the same rng see the same prompts.
Rng eval_item_rng(Rng rng, std::size_t index);

/// Mean reward of one sampled response for each of n_prompts fresh prompts.
double domain_score(const ReferenceModel& model, const AdapterParams* adapter,
                    const DomainSpec& d, std::size_t n_prompts, Rng rng);

/// Fraction of triples where a fresh sample beats the chosen response; ties count ½.
double win_rate(const ReferenceModel& model, const AdapterParams* adapter, const DomainSpec& d,
                std::span<const PreferenceTriple> test, Rng rng);

/// Clipped unigram-overlap F1.
double rouge1(std::span<const Token> pred, std::span<const Token> ref);

/// Mean ROUGE-1 of a fresh sample against each triple's chosen response.
double mean_rouge1(const ReferenceModel& model, const AdapterParams* adapter,
                   std::span<const PreferenceTriple> test, Rng rng);

/// Task-1 score drop: positive means forgetting, negative means improvement.
inline double sfr(double score_after_task1, double score_final) {
  return score_after_task1 - score_final;
}

struct GradNormStats {
  double mean = 0.0;
  double median = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

/// Statistics of grad_norm_fast over the final ceil(tail_fraction·n) steps.
GradNormStats grad_norm_stats(std::span<const StepLog> logs, double tail_fraction);

// ---- Gradient checking -----------------------------------------------------

/// Analytic gradient under test: (model, fast, slow, batch, cfg, role) -> grad.
using AnalyticGradient =
    std::function<AdapterGrad(const ReferenceModel&, const AdapterParams&, const AdapterParams&,
                              std::span<const CachedTriple>, const ObjectiveConfig&, Role)>;

struct GradPathResult {
  std::string path;
  double max_rel_error = 0.0;
};

struct GradCheckInstance {
  std::size_t index = 0;
  std::string path;
  double rel_error = 0.0;
  PolicySpec spec;
  AdapterParams fast;
  AdapterParams slow;
  std::vector<PreferenceTriple> batch;
};

struct GradCheckReport {
  std::size_t n_instances = 0;
  std::uint64_t seed = 0;
  double fd_step = 1e-5;
  double tolerance = 1e-4;
  double max_rel_error = 0.0;
  std::vector<GradPathResult> paths;
  GradCheckInstance worst;
  bool pass() const { return max_rel_error < tolerance; }
};

/// Compares analytic gradients against central differences on random small
/// instances (V <= 8, h <= 16, r <= 4) for the fast and slow objectives at
/// α ∈ {0, 0.7} and for the plain DPO loss.
GradCheckReport grad_check(std::size_t n_instances, std::uint64_t seed, double beta_dpo = 0.1,
                           const AnalyticGradient& analytic = {});

/// ‖a − n‖ / max(‖a‖, ‖n‖, 1e-6)
double relative_error(const AdapterGrad& analytic, const AdapterGrad& numeric);

}  // namespace chasedpo
