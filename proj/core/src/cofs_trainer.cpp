#include "chasedpo/cofs_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace chasedpo {

Reservoir::Reservoir(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_{seed} {
  if (capacity_ < 1) throw std::invalid_argument("reservoir capacity must be >= 1");
  items_.reserve(capacity_);
}

void Reservoir::insert(const PreferenceTriple& item) {
  seen_ += 1;
  if (items_.size() < capacity_) {
    items_.push_back(item);
    return;
  }
  const std::uint64_t j = rng_.below(seen_);
  if (j < capacity_) items_[j] = item;
}

Reservoir reservoir_insert(Reservoir res, const PreferenceTriple& item) {
  res.insert(item);
  return res;
}

void CombineConfig::validate() const {
  if (!(grid_step > 0.0 && grid_step < 1.0)) {
    throw std::invalid_argument("grid_step must lie in (0, 1)");
  }
  if (memory_capacity < 1) throw std::invalid_argument("memory_capacity must be >= 1");
}

std::vector<std::pair<double, double>> CombineConfig::grid() const {
  validate();
  std::vector<double> axis;
  for (std::size_t i = 1;; ++i) {
    const double b = static_cast<double>(i) * grid_step;
    if (b >= 1.0 - 1e-12) break;
    axis.push_back(b);
  }
  std::vector<std::pair<double, double>> pts;
  if (mode == CombineMode::constrained) {
    for (double b : axis) pts.emplace_back(b, 1.0 - b);
  } else {
    for (double b1 : axis) {
      for (double b2 : axis) pts.emplace_back(b1, b2);
    }
  }
  return pts;
}

AdapterParams combine_adapters(const AdapterParams& a1, const AdapterParams& a2, double beta1,
                               double beta2) {
  if (!a1.a.same_shape(a2.a) || !a1.b.same_shape(a2.b)) {
    throw std::invalid_argument("adapter shapes differ");
  }
  const std::size_t r = a1.rank();
  const std::size_t h = a1.a.cols();
  const std::size_t V = a1.b.rows();
  AdapterParams out{Matrix(2 * r, h), Matrix(V, 2 * r)};
  for (std::size_t k = 0; k < r; ++k) {
    std::copy_n(a1.a.row(k).begin(), h, out.a.row(k).begin());
    std::copy_n(a2.a.row(k).begin(), h, out.a.row(r + k).begin());
  }
  for (std::size_t v = 0; v < V; ++v) {
    for (std::size_t k = 0; k < r; ++k) {
      out.b(v, k) = beta1 * a1.b(v, k);
      out.b(v, r + k) = beta2 * a2.b(v, k);
    }
  }
  return out;
}

namespace {

// Per-token logit shifts of each task adapter, so that a grid point costs
// O(L·V) per sequence instead of a full adapter forward pass.
struct DirectionCache {
  const SequenceCache* seq;
  Matrix shift1;  // L × V
  Matrix shift2;
};

Matrix logit_shifts(const SequenceCache& seq, const AdapterParams& adapter) {
  const std::size_t L = seq.tokens.size();
  Matrix out(L, seq.base_logits.cols());
  for (std::size_t t = 0; t < L; ++t) {
    const auto z = matvec(adapter.a, seq.features.row(t));
    const auto d = matvec(adapter.b, z);
    std::copy(d.begin(), d.end(), out.row(t).begin());
  }
  return out;
}

double combined_logprob(const DirectionCache& dc, double b1, double b2, std::vector<double>& buf) {
  const auto& seq = *dc.seq;
  double lp = 0.0;
  for (std::size_t t = 0; t < seq.tokens.size(); ++t) {
    auto base = seq.base_logits.row(t);
    auto s1 = dc.shift1.row(t);
    auto s2 = dc.shift2.row(t);
    for (std::size_t v = 0; v < buf.size(); ++v) buf[v] = base[v] + b1 * s1[v] + b2 * s2[v];
    lp += buf[static_cast<std::size_t>(seq.tokens[t])] - logsumexp(buf);
  }
  return lp;
}

}  // namespace

BetaSearchResult beta_search(const ReferenceModel& model, const AdapterParams& a1,
                             const AdapterParams& a2, const Reservoir& mem1, const Reservoir& mem2,
                             const CombineConfig& cc, const ObjectiveConfig& cfg) {
  if (mem1.items().empty() || mem2.items().empty()) {
    throw std::invalid_argument("no retained samples");
  }
  model.check_adapter(a1);
  model.check_adapter(a2);
  std::vector<PreferenceTriple> pool(mem1.items());
  pool.insert(pool.end(), mem2.items().begin(), mem2.items().end());
  const auto cached = cache_triples(model, pool);

  std::vector<DirectionCache> chosen;
  std::vector<DirectionCache> rejected;
  chosen.reserve(cached.size());
  rejected.reserve(cached.size());
  for (const auto& t : cached) {
    chosen.push_back({&t.chosen, logit_shifts(t.chosen, a1), logit_shifts(t.chosen, a2)});
    rejected.push_back({&t.rejected, logit_shifts(t.rejected, a1), logit_shifts(t.rejected, a2)});
  }

  BetaSearchResult res;
  std::vector<double> buf(model.vocab());
  const double inv_n = 1.0 / static_cast<double>(cached.size());
  for (const auto& [b1, b2] : cc.grid()) {
    double loss = 0.0;
    for (std::size_t i = 0; i < cached.size(); ++i) {
      const double w = combined_logprob(chosen[i], b1, b2, buf) - cached[i].chosen.ref_logprob;
      const double l = combined_logprob(rejected[i], b1, b2, buf) - cached[i].rejected.ref_logprob;
      loss += -log_sigmoid(cfg.beta_dpo * (w - l)) * inv_n;
    }
    res.surface.push_back({b1, b2, loss});
  }

  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : res.surface) best = std::min(best, p.loss);
  const SurfacePoint* pick = nullptr;
  for (const auto& p : res.surface) {
    if (p.loss > best + kBetaTieTolerance) continue;
    if (pick == nullptr || std::pair{p.beta1, p.beta2} < std::pair{pick->beta1, pick->beta2}) {
      pick = &p;
    }
  }
  res.beta1 = pick->beta1;
  res.beta2 = pick->beta2;
  res.loss = pick->loss;
  res.combined = combine_adapters(a1, a2, res.beta1, res.beta2);
  return res;
}

CofsResult run_cofs(const ReferenceModel& model, std::span<const PreferenceTriple> stream1,
                    std::span<const PreferenceTriple> stream2, const TrainConfig& cfg,
                    const CombineConfig& cc) {
  if (stream1.empty() || stream2.empty()) throw std::invalid_argument("empty task stream");
  cc.validate();
  Reservoir mem1(cc.memory_capacity, derive_seed(cfg.seed, 101));
  Reservoir mem2(cc.memory_capacity, derive_seed(cfg.seed, 102));

  auto run1 = run_ofs(model, stream1, cfg, init_fast_slow(model.spec(), cfg),
                      [&](const PreferenceTriple& t) { mem1.insert(t); });
  auto run2 = run_ofs(model, stream2, cfg, init_fast_slow_from(run1.final_fast),
                      [&](const PreferenceTriple& t) { mem2.insert(t); });
  auto search = beta_search(model, run1.final_fast, run2.final_fast, mem1, mem2, cc,
                            cfg.objective());

  CofsResult out{run1.final_fast,
                 run2.final_fast,
                 std::move(search.combined),
                 search.beta1,
                 search.beta2,
                 std::move(search.surface),
                 std::move(mem1),
                 std::move(mem2),
                 std::move(run1),
                 std::move(run2)};
  return out;
}

}  // namespace chasedpo
