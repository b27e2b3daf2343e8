#include "chasedpo/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>

namespace chasedpo {

// ---- Offline optimum and regret -------------------------------------------

OptimumResult offline_optimum(std::span<const CachedTriple> dataset, AdapterParams init,
                              const TrainConfig& cfg, const OptimumConfig& oc) {
  if (dataset.empty()) throw std::invalid_argument("empty dataset");
  if (!(oc.lr > 0.0)) throw std::invalid_argument("optimum lr must be positive");
  Module m = Module::fresh(std::move(init));
  OptimumResult best{m.params, std::numeric_limits<double>::infinity(), 0};
  for (std::size_t epoch = 0; epoch < oc.epochs; ++epoch) {
    const auto res = dpo_objective_and_grad(dataset, m.params, cfg.beta_dpo);
    if (!std::isfinite(res.loss.dpo)) throw NumericError("training diverged");
    if (res.loss.dpo < best.loss) best = {m.params, res.loss.dpo, epoch};
    m = adamw_step(std::move(m), res.grad, oc.lr, cfg);
  }
  const double last = mean_dpo_loss(dataset, m.params, cfg.beta_dpo);
  if (last < best.loss) best = {m.params, last, oc.epochs};
  return best;
}

OptimumResult offline_optimum(const ReferenceModel& model,
                              std::span<const PreferenceTriple> dataset, const TrainConfig& cfg,
                              const OptimumConfig& oc) {
  const auto cached = cache_triples(model, dataset);
  return offline_optimum(cached, init_single(model.spec(), cfg), cfg, oc);
}

RegretReport empirical_regret(std::span<const CachedTriple> dataset,
                              const AdapterParams& final_adapter, const AdapterParams& star,
                              double beta_dpo, std::span<const StepLog> logs) {
  RegretReport r;
  r.T = logs.empty() ? dataset.size() : logs.size();
  r.mean_loss_final = mean_dpo_loss(dataset, final_adapter, beta_dpo);
  r.mean_loss_star = mean_dpo_loss(dataset, star, beta_dpo);
  r.regret = r.mean_loss_final - r.mean_loss_star;
  if (!logs.empty()) r.loss_first_step = logs.front().loss_dpo_fast_pre;
  return r;
}

RegretReport empirical_regret(const ReferenceModel& model, const AdapterParams& final_adapter,
                              const AdapterParams& star, std::span<const PreferenceTriple> dataset,
                              double beta_dpo, std::span<const StepLog> logs) {
  const auto cached = cache_triples(model, dataset);
  return empirical_regret(cached, final_adapter, star, beta_dpo, logs);
}

RegretReport dual_task_regret(std::span<const CachedTriple> data1,
                              std::span<const CachedTriple> data2, const AdapterParams& final1,
                              const AdapterParams& final2, const AdapterParams& star,
                              double beta_dpo) {
  const auto r1 = empirical_regret(data1, final1, star, beta_dpo);
  const auto r2 = empirical_regret(data2, final2, star, beta_dpo);
  RegretReport r;
  r.T = data1.size() + data2.size();
  r.mean_loss_final = r1.mean_loss_final + r2.mean_loss_final;
  r.mean_loss_star = r1.mean_loss_star + r2.mean_loss_star;
  r.regret = r.mean_loss_final - r.mean_loss_star;
  return r;
}

RegretReport dual_task_regret(const ReferenceModel& model, const AdapterParams& final1,
                              const AdapterParams& final2, const AdapterParams& star,
                              std::span<const PreferenceTriple> data1,
                              std::span<const PreferenceTriple> data2, double beta_dpo) {
  const auto c1 = cache_triples(model, data1);
  const auto c2 = cache_triples(model, data2);
  return dual_task_regret(c1, c2, final1, final2, star, beta_dpo);
}

// ---- Regret lower bounds ---------------------------------------------------

namespace {

double hoeffding_term(double delta) {
  return std::numbers::ln2 * std::sqrt(-std::log(delta) / 2.0);
}

void check_prob(double p, const char* name) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument(std::string(name) + " must lie in (0, 1)");
  }
}

}  // namespace

BoundReport theorem1_rhs(const RegretReport& report, double G, double d, double delta0,
                         bool mode_fs, std::size_t T) {
  check_prob(delta0, "delta0");
  if (T < 1) throw std::invalid_argument("T must be >= 1");
  if (!report.loss_first_step) throw std::invalid_argument("first-step loss required");
  if (G < 0.0 || d < 0.0) throw std::invalid_argument("G and d must be non-negative");
  const double Td = static_cast<double>(T);
  const double inv_t = 1.0 / Td;
  const double coef = 2.0 - inv_t + (1.0 - inv_t) * (mode_fs ? 1.0 : 0.0);
  BoundReport b;
  b.G = G;
  b.d = d;
  b.delta0 = delta0;
  b.mode_fs = mode_fs;
  b.rhs = *report.loss_first_step - report.mean_loss_star - coef * G * d -
          2.0 * (1.0 - inv_t) * hoeffding_term(delta0);
  b.lhs = report.regret;
  b.holds = b.lhs >= b.rhs;
  b.delta = 2.0 * (Td - 1.0) * delta0 -
            (Td - 1.0) * (2.0 * Td - 3.0) * delta0 * delta0 * std::pow(1.0 - delta0, 2.0 * Td - 4.0);
  b.T1 = T;
  return b;
}

BoundReport theorem2_rhs(double l1, double B, double delta1, double delta2, double G, double d,
                         bool mode_fs, std::size_t T1, std::size_t T2, double measured) {
  check_prob(delta1, "delta1");
  check_prob(delta2, "delta2");
  if (T1 < 1 || T2 < 1) throw std::invalid_argument("T1 and T2 must be >= 1");
  if (G < 0.0 || d < 0.0) throw std::invalid_argument("G and d must be non-negative");
  const double t1 = static_cast<double>(T1);
  const double t2 = static_cast<double>(T2);
  const double s = (t1 + t2) / (t1 * t2);
  const double c = std::max(hoeffding_term(delta1), hoeffding_term(delta2));
  const double coef = 6.0 - s + (2.0 - s) * (mode_fs ? 1.0 : 0.0);
  BoundReport b;
  b.G = G;
  b.d = d;
  b.delta0 = std::max(delta1, delta2);
  b.mode_fs = mode_fs;
  b.rhs = l1 - B - coef * G * d - 2.0 * (1.0 - s) * c;
  b.lhs = measured;
  b.holds = b.lhs >= b.rhs;
  b.B = B;
  b.c = c;
  b.l1 = l1;
  b.delta1 = delta1;
  b.delta2 = delta2;
  b.T1 = T1;
  b.T2 = T2;
  return b;
}

double estimate_G(std::span<const StepLog> logs) {
  double g = 0.0;
  for (const auto& l : logs) {
    g = std::max(g, l.grad_norm_fast);
    if (l.grad_norm_slow) g = std::max(g, *l.grad_norm_slow);
  }
  return g;
}

double estimate_d(std::span<const TrailPoint> trail) {
  // Distances are taken within the fast-role and slow-role sequences over time.
  std::vector<const AdapterParams*> fast;
  std::vector<const AdapterParams*> slow;
  for (const auto& p : trail) {
    if (!p.module_b) {
      fast.push_back(&p.module_a);
      continue;
    }
    fast.push_back(p.fast_is_a ? &p.module_a : &*p.module_b);
    slow.push_back(p.fast_is_a ? &*p.module_b : &p.module_a);
  }
  double d = 0.0;
  for (const auto* seq : {&fast, &slow}) {
    for (std::size_t i = 0; i < seq->size(); ++i) {
      for (std::size_t j = i + 1; j < seq->size(); ++j) {
        d = std::max(d, adapter_distance(*(*seq)[i], *(*seq)[j]));
      }
    }
  }
  return d;
}

// ---- Task metrics ----------------------------------------------------------

Rng eval_item_rng(Rng rng, std::size_t index) {
  const std::uint64_t base = rng.next();
  return Rng{derive_seed(base, index)};
}

double domain_score(const ReferenceModel& model, const AdapterParams* adapter,
                    const DomainSpec& d, std::size_t n_prompts, Rng rng) {
  if (n_prompts < 1) throw std::invalid_argument("n_prompts must be >= 1");
  if (adapter != nullptr) model.check_adapter(*adapter);
  double acc = 0.0;
  for (std::size_t i = 0; i < n_prompts; ++i) {
    Rng item = eval_item_rng(rng, i);
    const auto prompt = sample_prompt(d, item);
    const auto resp = sample_response(model, adapter, prompt, d.response_len, item);
    acc += reward(d, resp);
  }
  return acc / static_cast<double>(n_prompts);
}

double win_rate(const ReferenceModel& model, const AdapterParams* adapter, const DomainSpec& d,
                std::span<const PreferenceTriple> test, Rng rng) {
  if (test.empty()) throw std::invalid_argument("empty test set");
  double wins = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    Rng item = eval_item_rng(rng, i);
    const auto& t = test[i];
    const auto resp = sample_response(model, adapter, t.prompt, t.chosen.size(), item);
    const double r_new = reward(d, resp);
    const double r_ref = reward(d, t.chosen);
    if (r_new > r_ref) {
      wins += 1.0;
    } else if (r_new == r_ref) {
      wins += 0.5;
    }
  }
  return wins / static_cast<double>(test.size());
}

double rouge1(std::span<const Token> pred, std::span<const Token> ref) {
  if (pred.empty() || ref.empty()) throw std::invalid_argument("empty sequence");
  std::map<Token, int> ref_counts;
  for (Token t : ref) ++ref_counts[t];
  int overlap = 0;
  for (Token t : pred) {
    auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(pred.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(ref.size());
  return 2.0 * p * r / (p + r);
}

double mean_rouge1(const ReferenceModel& model, const AdapterParams* adapter,
                   std::span<const PreferenceTriple> test, Rng rng) {
  if (test.empty()) throw std::invalid_argument("empty test set");
  double acc = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    Rng item = eval_item_rng(rng, i);
    const auto& t = test[i];
    const auto resp = sample_response(model, adapter, t.prompt, t.chosen.size(), item);
    acc += rouge1(resp, t.chosen);
  }
  return acc / static_cast<double>(test.size());
}

GradNormStats grad_norm_stats(std::span<const StepLog> logs, double tail_fraction) {
  if (logs.empty()) throw std::invalid_argument("empty logs");
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) {
    throw std::invalid_argument("tail_fraction must lie in (0, 1]");
  }
  const auto n = static_cast<std::size_t>(
      std::ceil(tail_fraction * static_cast<double>(logs.size())));
  std::vector<double> xs;
  xs.reserve(n);
  for (std::size_t i = logs.size() - n; i < logs.size(); ++i) xs.push_back(logs[i].grad_norm_fast);
  GradNormStats s;
  s.count = xs.size();
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(var / static_cast<double>(xs.size()));
  std::sort(xs.begin(), xs.end());
  const std::size_t mid = xs.size() / 2;
  s.median = xs.size() % 2 == 1 ? xs[mid] : 0.5 * (xs[mid - 1] + xs[mid]);
  return s;
}

// ---- Gradient checking -----------------------------------------------------

double relative_error(const AdapterGrad& analytic, const AdapterGrad& numeric) {
  AdapterGrad diff = analytic;
  diff.add(numeric, -1.0);
  const double denom = std::max({analytic.norm(), numeric.norm(), 1e-6});
  return diff.norm() / denom;
}

namespace {

struct Instance {
  PolicySpec spec;
  AdapterParams fast;
  AdapterParams slow;
  std::vector<PreferenceTriple> batch;
};

TokenSequence random_tokens(Rng& rng, std::size_t vocab, std::size_t max_len) {
  TokenSequence s(1 + rng.below(max_len));
  for (auto& t : s) t = static_cast<Token>(rng.below(vocab));
  return s;
}

AdapterParams random_adapter(Rng& rng, const PolicySpec& spec) {
  AdapterParams p{Matrix(spec.rank, spec.feature_dim), Matrix(spec.vocab_size, spec.rank)};
  const double sa = 1.0 / std::sqrt(static_cast<double>(spec.feature_dim));
  for (double& v : p.a.values()) v = sa * rng.gaussian();
  for (double& v : p.b.values()) v = 0.5 * rng.gaussian();
  return p;
}

Instance random_instance(std::uint64_t seed) {
  Rng rng{seed};
  Instance inst;
  inst.spec.vocab_size = 2 + rng.below(7);
  inst.spec.feature_dim = 2 + rng.below(15);
  const std::size_t max_rank =
      std::min<std::size_t>({4, inst.spec.vocab_size, inst.spec.feature_dim});
  inst.spec.rank = 1 + rng.below(max_rank);
  inst.spec.base_seed = rng.next();
  inst.fast = random_adapter(rng, inst.spec);
  inst.slow = random_adapter(rng, inst.spec);
  const std::size_t n = 1 + rng.below(3);
  for (std::size_t i = 0; i < n; ++i) {
    PreferenceTriple t;
    t.prompt = random_tokens(rng, inst.spec.vocab_size, 4);
    t.chosen = random_tokens(rng, inst.spec.vocab_size, 4);
    do {
      t.rejected = random_tokens(rng, inst.spec.vocab_size, 4);
    } while (t.rejected == t.chosen);
    inst.batch.push_back(std::move(t));
  }
  return inst;
}

// Central differences of `f` with respect to every entry of `p`.
template <typename F>
AdapterGrad central_differences(AdapterParams p, double step, F&& f) {
  auto g = AdapterGrad::zeros_like(p);
  auto probe = [&](std::span<double> params, std::span<double> out) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double orig = params[i];
      params[i] = orig + step;
      const double up = f(p);
      params[i] = orig - step;
      const double down = f(p);
      params[i] = orig;
      out[i] = (up - down) / (2.0 * step);
    }
  };
  probe(p.a.values(), g.da.values());
  probe(p.b.values(), g.db.values());
  return g;
}

}  // namespace

GradCheckReport grad_check(std::size_t n_instances, std::uint64_t seed, double beta_dpo,
                           const AnalyticGradient& analytic) {
  if (n_instances < 1) throw std::invalid_argument("n_instances must be >= 1");
  GradCheckReport report;
  report.n_instances = n_instances;
  report.seed = seed;

  struct Path {
    std::string name;
    double alpha;
    Role role;
  };
  const std::vector<Path> paths = {{"fast_alpha0", 0.0, Role::fast},
                                   {"fast_alpha0.7", 0.7, Role::fast},
                                   {"slow_alpha0", 0.0, Role::slow},
                                   {"slow_alpha0.7", 0.7, Role::slow}};
  for (const auto& p : paths) report.paths.push_back({p.name, 0.0});
  report.paths.push_back({"dpo", 0.0});
  report.worst.rel_error = -1.0;

  auto record = [&](std::size_t path_idx, double err, std::size_t index, const Instance& inst) {
    auto& pr = report.paths[path_idx];
    pr.max_rel_error = std::max(pr.max_rel_error, err);
    if (err > report.worst.rel_error) {
      report.worst = {index, pr.path, err, inst.spec, inst.fast, inst.slow, inst.batch};
    }
  };

  for (std::size_t i = 0; i < n_instances; ++i) {
    const auto inst = random_instance(derive_seed(seed, i));
    const ReferenceModel model(inst.spec);
    const auto batch = cache_triples(model, inst.batch);

    for (std::size_t k = 0; k < paths.size(); ++k) {
      const ObjectiveConfig cfg{beta_dpo, paths[k].alpha};
      const Role role = paths[k].role;
      const AdapterGrad a =
          analytic ? analytic(model, inst.fast, inst.slow, batch, cfg, role)
                   : objective_and_grad(batch, inst.fast, inst.slow, cfg, role).grad;
      const AdapterParams& own = role == Role::fast ? inst.fast : inst.slow;
      const auto numeric =
          central_differences(own, report.fd_step, [&](const AdapterParams& probe) {
            const auto& f = role == Role::fast ? probe : inst.fast;
            const auto& s = role == Role::fast ? inst.slow : probe;
            return objective_and_grad(batch, f, s, cfg, role).loss.total;
          });
      record(k, relative_error(a, numeric), i, inst);
    }

    const auto a = dpo_objective_and_grad(batch, inst.fast, beta_dpo).grad;
    const auto numeric = central_differences(inst.fast, report.fd_step, [&](const AdapterParams& p) {
      return dpo_objective_and_grad(batch, p, beta_dpo).loss.dpo;
    });
    record(paths.size(), relative_error(a, numeric), i, inst);
  }
  for (const auto& p : report.paths) report.max_rel_error = std::max(report.max_rel_error, p.max_rel_error);
  return report;
}

}  // namespace chasedpo
