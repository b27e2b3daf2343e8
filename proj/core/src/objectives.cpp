#include "chasedpo/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace chasedpo {

void validate_triple(const ReferenceModel& model, const PreferenceTriple& triple) {
  if (triple.prompt.empty() || triple.chosen.empty() || triple.rejected.empty()) {
    throw std::invalid_argument("triple sequences must be nonempty");
  }
  if (triple.chosen == triple.rejected) {
    throw std::invalid_argument("chosen and rejected responses are identical");
  }
  if (triple.domain != 1 && triple.domain != 2) {
    throw std::invalid_argument("domain tag must be 1 or 2");
  }
  model.check_tokens(triple.prompt);
  model.check_tokens(triple.chosen);
  model.check_tokens(triple.rejected);
}

void ObjectiveConfig::validate() const {
  if (!(beta_dpo > 0.0)) throw std::invalid_argument("beta_dpo must be positive");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in [0, 1)");
}

CachedTriple cache_triple(const ReferenceModel& model, const PreferenceTriple& triple) {
  validate_triple(model, triple);
  return {cache_sequence(model, triple.prompt, triple.chosen),
          cache_sequence(model, triple.prompt, triple.rejected)};
}

std::vector<CachedTriple> cache_triples(const ReferenceModel& model,
                                        std::span<const PreferenceTriple> triples) {
  std::vector<CachedTriple> out;
  out.reserve(triples.size());
  for (const auto& t : triples) out.push_back(cache_triple(model, t));
  return out;
}

namespace {

double cached_margin(const CachedTriple& t, const AdapterParams* num, const AdapterParams* den,
                     double beta) {
  const double w = cached_logprob(t.chosen, num) - cached_logprob(t.chosen, den);
  const double l = cached_logprob(t.rejected, num) - cached_logprob(t.rejected, den);
  return beta * (w - l);
}

// −log σ(m)
double neg_log_sigmoid(double m) { return -log_sigmoid(m); }

}  // namespace

double implicit_reward_margin(const ReferenceModel& model, const AdapterParams* numerator,
                              const AdapterParams* denominator, const PreferenceTriple& triple,
                              double beta_dpo) {
  if (numerator != nullptr) model.check_adapter(*numerator);
  if (denominator != nullptr) model.check_adapter(*denominator);
  return cached_margin(cache_triple(model, triple), numerator, denominator, beta_dpo);
}

double dpo_loss(const ReferenceModel& model, const AdapterParams& adapter,
                const PreferenceTriple& triple, const ObjectiveConfig& cfg) {
  return neg_log_sigmoid(implicit_reward_margin(model, &adapter, nullptr, triple, cfg.beta_dpo));
}

double fs_reg_loss(const ReferenceModel& model, const AdapterParams& fast, const AdapterParams& slow,
                   const PreferenceTriple& triple, const ObjectiveConfig& cfg) {
  return neg_log_sigmoid(implicit_reward_margin(model, &fast, &slow, triple, cfg.beta_dpo));
}

double mean_dpo_loss(std::span<const CachedTriple> batch, const AdapterParams& adapter,
                     double beta_dpo) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  double acc = 0.0;
  for (const auto& t : batch) acc += neg_log_sigmoid(cached_margin(t, &adapter, nullptr, beta_dpo));
  return acc / static_cast<double>(batch.size());
}

double mean_fs_loss(std::span<const CachedTriple> batch, const AdapterParams& fast,
                    const AdapterParams& slow, double beta_dpo) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  double acc = 0.0;
  for (const auto& t : batch) acc += neg_log_sigmoid(cached_margin(t, &fast, &slow, beta_dpo));
  return acc / static_cast<double>(batch.size());
}

ObjectiveResult dpo_objective_and_grad(std::span<const CachedTriple> batch,
                                       const AdapterParams& adapter, double beta_dpo) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  ObjectiveResult res{{}, AdapterGrad::zeros_like(adapter)};
  LogprobTape tw, tl;
  for (const auto& t : batch) {
    const double lw = cached_logprob(t.chosen, adapter, tw);
    const double ll = cached_logprob(t.rejected, adapter, tl);
    const double m = beta_dpo * ((lw - t.chosen.ref_logprob) - (ll - t.rejected.ref_logprob));
    res.loss.dpo += neg_log_sigmoid(m) * inv_n;
    res.loss.margin_ref += m * inv_n;
    // d/dθ −log σ(m) = −σ(−m)·∂m/∂θ
    const double c = -beta_dpo * sigmoid(-m) * inv_n;
    accumulate_logprob_grad(t.chosen, adapter, tw, c, res.grad);
    accumulate_logprob_grad(t.rejected, adapter, tl, -c, res.grad);
  }
  res.loss.fs = std::log(2.0);
  res.loss.total = res.loss.dpo;
  return res;
}

ObjectiveResult objective_and_grad(std::span<const CachedTriple> batch, const AdapterParams& fast,
                                   const AdapterParams& slow, const ObjectiveConfig& cfg,
                                   Role role) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const double beta = cfg.beta_dpo;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const AdapterParams& own = role == Role::fast ? fast : slow;
  const AdapterParams& other = role == Role::fast ? slow : fast;
  ObjectiveResult res{{}, AdapterGrad::zeros_like(own)};
  LogprobTape tw, tl;
  for (const auto& t : batch) {
    const double ow = cached_logprob(t.chosen, own, tw);
    const double ol = cached_logprob(t.rejected, own, tl);
    const double xw = cached_logprob(t.chosen, &other);
    const double xl = cached_logprob(t.rejected, &other);
    const double fw = role == Role::fast ? ow : xw;
    const double fl = role == Role::fast ? ol : xl;
    const double sw = role == Role::fast ? xw : ow;
    const double sl = role == Role::fast ? xl : ol;
    const double m_ref = beta * ((ow - t.chosen.ref_logprob) - (ol - t.rejected.ref_logprob));
    const double m_fs = beta * ((fw - sw) - (fl - sl));
    res.loss.dpo += neg_log_sigmoid(m_ref) * inv_n;
    res.loss.fs += neg_log_sigmoid(m_fs) * inv_n;
    res.loss.margin_ref += m_ref * inv_n;
    res.loss.margin_fs += m_fs * inv_n;
    // Fast: ∂(αL_FS)/∂θF = −αβσ(−m_fs)·∇(w−l).
    // Slow: ∂(−αL_FS)/∂θS = −αβσ(−m_fs)·∇(w−l), since m_fs enters with −log π_S.
    // Both roles therefore share the coefficient below.
    const double c = -beta * (sigmoid(-m_ref) + cfg.alpha * sigmoid(-m_fs)) * inv_n;
    accumulate_logprob_grad(t.chosen, own, tw, c, res.grad);
    accumulate_logprob_grad(t.rejected, own, tl, -c, res.grad);
  }
  res.loss.total = role == Role::fast ? res.loss.dpo + cfg.alpha * res.loss.fs
                                      : res.loss.dpo - cfg.alpha * res.loss.fs;
  return res;
}

namespace {

ObjectiveResult role_objective(const ReferenceModel& model, const AdapterParams& fast,
                               const AdapterParams& slow, std::span<const PreferenceTriple> batch,
                               const ObjectiveConfig& cfg, Role role) {
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("empty batch");
  model.check_adapter(fast);
  model.check_adapter(slow);
  const auto cached = cache_triples(model, batch);
  return objective_and_grad(cached, fast, slow, cfg, role);
}

}  // namespace

ObjectiveResult fast_objective_and_grad(const ReferenceModel& model, const AdapterParams& fast,
                                        const AdapterParams& slow,
                                        std::span<const PreferenceTriple> batch,
                                        const ObjectiveConfig& cfg) {
  return role_objective(model, fast, slow, batch, cfg, Role::fast);
}

ObjectiveResult slow_objective_and_grad(const ReferenceModel& model, const AdapterParams& fast,
                                        const AdapterParams& slow,
                                        std::span<const PreferenceTriple> batch,
                                        const ObjectiveConfig& cfg) {
  return role_objective(model, fast, slow, batch, cfg, Role::slow);
}

}  // namespace chasedpo
