#include "chasedpo/ofs_trainer.hpp"

#include <cmath>
#include <stdexcept>

namespace chasedpo {

void TrainConfig::validate() const {
  if (swap_period < 1) throw std::invalid_argument("swap_period must be >= 1");
  if (slow_update_period < 1) throw std::invalid_argument("slow_update_period must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lr_multiplier > 0.0)) throw std::invalid_argument("lr_multiplier must be positive");
  if (!(lr_slow() > 0.0)) throw std::invalid_argument("lr_slow must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("adam_eps must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  objective().validate();
}

AdamMoments AdamMoments::zeros_like(const AdapterParams& p) {
  return {Matrix(p.a.rows(), p.a.cols()), Matrix(p.a.rows(), p.a.cols()),
          Matrix(p.b.rows(), p.b.cols()), Matrix(p.b.rows(), p.b.cols()), 0};
}

Module Module::fresh(AdapterParams p) {
  auto moments = AdamMoments::zeros_like(p);
  return {std::move(p), std::move(moments)};
}

namespace {

void adamw_update(std::span<double> param, std::span<double> m, std::span<double> v,
                  std::span<const double> g, double lr, double bc1, double bc2,
                  const TrainConfig& cfg) {
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    param[i] = param[i] * decay - lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
  }
}

}  // namespace

Module adamw_step(Module module, const AdapterGrad& grad, double lr, const TrainConfig& cfg) {
  if (!grad.da.same_shape(module.params.a) || !grad.db.same_shape(module.params.b)) {
    throw std::invalid_argument("gradient shape does not match parameters");
  }
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!grad.all_finite()) throw NumericError("gradient blowup");
  auto& mom = module.moments;
  mom.t += 1;
  const double t = static_cast<double>(mom.t);
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
  adamw_update(module.params.a.values(), mom.m_a.values(), mom.v_a.values(), grad.da.values(), lr,
               bc1, bc2, cfg);
  adamw_update(module.params.b.values(), mom.m_b.values(), mom.v_b.values(), grad.db.values(), lr,
               bc1, bc2, cfg);
  return module;
}

FastSlowState init_fast_slow(const PolicySpec& spec, const TrainConfig& cfg) {
  FastSlowState st;
  st.module_a = Module::fresh(init_adapter(spec, derive_seed(cfg.seed, 0)));
  st.module_b = cfg.shared_init ? Module::fresh(st.module_a.params)
                                : Module::fresh(init_adapter(spec, derive_seed(cfg.seed, 1)));
  return st;
}

FastSlowState init_fast_slow_from(const AdapterParams& start) {
  FastSlowState st;
  st.module_a = Module::fresh(start);
  st.module_b = Module::fresh(start);
  return st;
}

AdapterParams init_single(const PolicySpec& spec, const TrainConfig& cfg) {
  return init_adapter(spec, derive_seed(cfg.seed, 0));
}

namespace {

void check_loss(double v) {
  if (!std::isfinite(v)) throw NumericError("training diverged");
}

}  // namespace

StepResult online_step(const ReferenceModel& /*model*/, FastSlowState state,
                       std::span<const CachedTriple> batch, const TrainConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const auto obj = cfg.objective();
  state.step += 1;
  const bool update_slow = state.step % cfg.slow_update_period == 0;

  // Both gradients come from the pre-update parameters.
  const auto fast_res =
      objective_and_grad(batch, state.fast().params, state.slow().params, obj, Role::fast);
  check_loss(fast_res.loss.total);
  std::optional<ObjectiveResult> slow_res;
  if (update_slow) {
    slow_res = objective_and_grad(batch, state.fast().params, state.slow().params, obj, Role::slow);
    check_loss(slow_res->loss.total);
  }

  state.fast() = adamw_step(std::move(state.fast()), fast_res.grad, cfg.lr_fast(), cfg);
  if (update_slow) {
    state.slow() = adamw_step(std::move(state.slow()), slow_res->grad, cfg.lr_slow(), cfg);
  }

  StepLog log;
  log.step = state.step;
  log.loss_dpo_fast_pre = fast_res.loss.dpo;
  log.grad_norm_fast = fast_res.grad.norm();
  log.lr_fast = cfg.lr_fast();
  log.grad_norm_slow = update_slow ? slow_res->grad.norm() : 0.0;
  log.lr_slow = update_slow ? cfg.lr_slow() : 0.0;
  log.loss_dpo_fast = mean_dpo_loss(batch, state.fast().params, cfg.beta_dpo);
  log.loss_dpo_slow = mean_dpo_loss(batch, state.slow().params, cfg.beta_dpo);
  log.loss_fs = mean_fs_loss(batch, state.fast().params, state.slow().params, cfg.beta_dpo);
  check_loss(log.loss_dpo_fast);
  check_loss(*log.loss_dpo_slow);
  return {std::move(state), log};
}

StepResult online_step(const ReferenceModel& model, FastSlowState state,
                       std::span<const PreferenceTriple> batch, const TrainConfig& cfg) {
  cfg.validate();
  model.check_adapter(state.module_a.params);
  model.check_adapter(state.module_b.params);
  const auto cached = cache_triples(model, batch);
  return online_step(model, std::move(state), cached, cfg);
}

SwapResult swap_check(FastSlowState state, std::span<const CachedTriple> eval_batch,
                      const TrainConfig& cfg) {
  const double lf = mean_dpo_loss(eval_batch, state.fast().params, cfg.beta_dpo);
  const double ls = mean_dpo_loss(eval_batch, state.slow().params, cfg.beta_dpo);
  SwapResult res;
  res.swapped = ls < lf;
  if (res.swapped) {
    state.fast_is_a = !state.fast_is_a;
    state.swap_count += 1;
    res.loss_fast = ls;
    res.loss_slow = lf;
  } else {
    res.loss_fast = lf;
    res.loss_slow = ls;
  }
  res.state = std::move(state);
  return res;
}

SwapResult swap_check(const ReferenceModel& model, FastSlowState state,
                      std::span<const PreferenceTriple> eval_batch, const TrainConfig& cfg) {
  const auto cached = cache_triples(model, eval_batch);
  return swap_check(std::move(state), cached, cfg);
}

OfsResult run_ofs(const ReferenceModel& model, std::span<const PreferenceTriple> stream,
                  const TrainConfig& cfg) {
  return run_ofs(model, stream, cfg, init_fast_slow(model.spec(), cfg), [](const auto&) {});
}

OfsResult run_ofs(const ReferenceModel& model, std::span<const PreferenceTriple> stream,
                  const TrainConfig& cfg, FastSlowState init) {
  return run_ofs(model, stream, cfg, std::move(init), [](const auto&) {});
}

DpoResult run_dpo(const ReferenceModel& model, std::span<const PreferenceTriple> stream,
                  const TrainConfig& cfg) {
  return run_dpo(model, stream, cfg, init_single(model.spec(), cfg));
}

DpoResult run_dpo(const ReferenceModel& model, std::span<const PreferenceTriple> stream,
                  const TrainConfig& cfg, AdapterParams init) {
  cfg.validate();
  model.check_adapter(init);
  DpoResult out;
  out.module = Module::fresh(std::move(init));
  out.trail.push_back({0, out.module.params, std::nullopt, true});
  std::size_t step = 0;
  for (std::size_t begin = 0; begin < stream.size(); begin += cfg.batch_size) {
    const auto chunk = stream.subspan(begin, std::min(cfg.batch_size, stream.size() - begin));
    const auto cached = cache_triples(model, chunk);
    const auto res = dpo_objective_and_grad(cached, out.module.params, cfg.beta_dpo);
    check_loss(res.loss.dpo);
    out.module = adamw_step(std::move(out.module), res.grad, cfg.lr_slow(), cfg);
    ++step;
    StepLog log;
    log.step = step;
    log.loss_dpo_fast_pre = res.loss.dpo;
    log.grad_norm_fast = res.grad.norm();
    log.lr_fast = cfg.lr_slow();
    log.loss_dpo_fast = mean_dpo_loss(cached, out.module.params, cfg.beta_dpo);
    check_loss(log.loss_dpo_fast);
    out.logs.push_back(log);
    if (step % cfg.swap_period == 0) out.trail.push_back({step, out.module.params, std::nullopt, true});
  }
  out.final_adapter = out.module.params;
  return out;
}

}  // namespace chasedpo
