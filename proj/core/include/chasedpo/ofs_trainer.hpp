#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "chasedpo/objectives.hpp"
#include "chasedpo/policy.hpp"

namespace chasedpo {

/// Online training hyperparameters. Defaults follow the in-domain AdamW
/// settings with the learning rate rescaled for the toy policy:
/// lr_slow = lr_slow_base · lr_scale.
struct TrainConfig {
  std::size_t swap_period = 10;
  double alpha = 0.7;
  double beta_dpo = 0.1;
  double lr_slow_base = 5e-7;
  double lr_scale = 1e3;
  double lr_multiplier = 2.0;
  std::size_t slow_update_period = 1;
  std::size_t batch_size = 4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-6;
  std::uint64_t seed = 1;
  /// Initialize both modules from the same draw instead of independent ones.
  bool shared_init = false;

  double lr_slow() const { return lr_slow_base * lr_scale; }
  double lr_fast() const { return lr_slow() * lr_multiplier; }
  ObjectiveConfig objective() const { return {beta_dpo, alpha}; }
  void validate() const;
};

struct AdamMoments {
  Matrix m_a, v_a, m_b, v_b;
  std::size_t t = 0;

  static AdamMoments zeros_like(const AdapterParams& p);
};

/// Adapter plus the optimizer state that travels with it.
struct Module {
  AdapterParams params;
  AdamMoments moments;

  static Module fresh(AdapterParams p);
};

/// Decoupled-weight-decay Adam with bias correction. Throws NumericError
/// ("gradient blowup") on non-finite gradient entries.
Module adamw_step(Module module, const AdapterGrad& grad, double lr, const TrainConfig& cfg);

struct FastSlowState {
  Module module_a;
  Module module_b;
  bool fast_is_a = true;
  std::size_t step = 0;
  std::size_t swap_count = 0;

  Module& fast() { return fast_is_a ? module_a : module_b; }
  Module& slow() { return fast_is_a ? module_b : module_a; }
  const Module& fast() const { return fast_is_a ? module_a : module_b; }
  const Module& slow() const { return fast_is_a ? module_b : module_a; }
};

/// One online step. Loss fields are evaluated on the step's batch after the
/// update (and after the swap test, when one ran); gradient norms are those of
/// the gradients applied. Slow-side fields are empty for single-module runs.
struct StepLog {
  std::size_t step = 0;
  bool swapped = false;
  double loss_dpo_fast = 0.0;
  std::optional<double> loss_dpo_slow;
  std::optional<double> loss_fs;
  double grad_norm_fast = 0.0;
  std::optional<double> grad_norm_slow;
  double lr_fast = 0.0;
  std::optional<double> lr_slow;
  /// Plain DPO loss of the fast module on this batch before the update.
  double loss_dpo_fast_pre = 0.0;
};

/// Parameter snapshot taken at step 0 and every swap_period steps.
struct TrailPoint {
  std::size_t step = 0;
  AdapterParams module_a;
  std::optional<AdapterParams> module_b;
  bool fast_is_a = true;
};

FastSlowState init_fast_slow(const PolicySpec& spec, const TrainConfig& cfg);
FastSlowState init_fast_slow_from(const AdapterParams& start);
/// Initial adapter of a single-module run; equals module A of init_fast_slow.
AdapterParams init_single(const PolicySpec& spec, const TrainConfig& cfg);

struct StepResult {
  FastSlowState state;
  StepLog log;
};

StepResult online_step(const ReferenceModel& model, FastSlowState state,
                       std::span<const CachedTriple> batch, const TrainConfig& cfg);
StepResult online_step(const ReferenceModel& model, FastSlowState state,
                       std::span<const PreferenceTriple> batch, const TrainConfig& cfg);

struct SwapResult {
  FastSlowState state;
  bool swapped = false;
  /// Plain DPO losses on eval_batch of the modules holding each role after the test.
  double loss_fast = 0.0;
  double loss_slow = 0.0;
};

/// Flips roles iff the slow module has strictly lower plain DPO loss on eval_batch.
SwapResult swap_check(FastSlowState state, std::span<const CachedTriple> eval_batch,
                      const TrainConfig& cfg);
SwapResult swap_check(const ReferenceModel& model, FastSlowState state,
                      std::span<const PreferenceTriple> eval_batch, const TrainConfig& cfg);

struct OfsResult {
  FastSlowState state;
  std::vector<StepLog> logs;
  AdapterParams final_fast;
  std::vector<TrailPoint> trail;
};

/// Single pass over the stream in batch_size chunks (the last may be short).
/// `observe` is called once per triple in stream order after its batch step.
template <typename Observer>
OfsResult run_ofs(const ReferenceModel& model, std::span<const PreferenceTriple> stream,
                  const TrainConfig& cfg, FastSlowState init, Observer&& observe);

OfsResult run_ofs(const ReferenceModel& model, std::span<const PreferenceTriple> stream,
                  const TrainConfig& cfg);
OfsResult run_ofs(const ReferenceModel& model, std::span<const PreferenceTriple> stream,
                  const TrainConfig& cfg, FastSlowState init);

struct DpoResult {
  Module module;
  std::vector<StepLog> logs;
  AdapterParams final_adapter;
  std::vector<TrailPoint> trail;
};

/// Vanilla online DPO baseline: one module, α = 0, lr_slow, no swaps.
DpoResult run_dpo(const ReferenceModel& model, std::span<const PreferenceTriple> stream,
                  const TrainConfig& cfg);
DpoResult run_dpo(const ReferenceModel& model, std::span<const PreferenceTriple> stream,
                  const TrainConfig& cfg, AdapterParams init);

// ---------------------------------------------------------------------------

template <typename Observer>
OfsResult run_ofs(const ReferenceModel& model, std::span<const PreferenceTriple> stream,
                  const TrainConfig& cfg, FastSlowState state, Observer&& observe) {
  cfg.validate();
  OfsResult out;
  out.trail.push_back({state.step, state.module_a.params, state.module_b.params, state.fast_is_a});
  for (std::size_t begin = 0; begin < stream.size(); begin += cfg.batch_size) {
    const auto chunk = stream.subspan(begin, std::min(cfg.batch_size, stream.size() - begin));
    const auto cached = cache_triples(model, chunk);
    auto stepped = online_step(model, std::move(state), cached, cfg);
    state = std::move(stepped.state);
    StepLog log = stepped.log;
    if (state.step % cfg.swap_period == 0) {
      auto sw = swap_check(std::move(state), cached, cfg);
      state = std::move(sw.state);
      log.swapped = sw.swapped;
      if (sw.swapped) {
        log.loss_dpo_fast = sw.loss_fast;
        log.loss_dpo_slow = sw.loss_slow;
        log.loss_fs = mean_fs_loss(cached, state.fast().params, state.slow().params, cfg.beta_dpo);
      }
      out.trail.push_back({state.step, state.module_a.params, state.module_b.params, state.fast_is_a});
    }
    out.logs.push_back(log);
    for (const auto& t : chunk) observe(t);
  }
  out.final_fast = state.fast().params;
  out.state = std::move(state);
  return out;
}

}  // namespace chasedpo
