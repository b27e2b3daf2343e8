#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "chasedpo/cofs_trainer.hpp"
#include "chasedpo/datagen.hpp"
#include "oracles.hpp"

using namespace chasedpo;

namespace {

PreferenceTriple tagged(int id) {
  return PreferenceTriple{{static_cast<Token>(id)}, {0}, {1}, 1};
}

std::vector<PreferenceTriple> stream_for(const ReferenceModel& m, int domain, std::size_t n,
                                         std::uint64_t seed) {
  return gen_stream(m, StreamSpec{make_domain(domain, m.vocab(), seed), n, seed});
}

}  // namespace

TEST(Reservoir, KeepsEverythingUnderCapacity) {
  Reservoir r(5, 1);
  for (int i = 0; i < 3; ++i) r.insert(tagged(i));
  ASSERT_EQ(r.items().size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(r.items()[i].prompt[0], i);
  EXPECT_EQ(r.seen(), 3u);
  for (int i = 3; i < 40; ++i) r.insert(tagged(i));
  EXPECT_EQ(r.items().size(), 5u);
  EXPECT_EQ(r.seen(), 40u);
  EXPECT_THROW(Reservoir(0, 1), std::invalid_argument);
}

TEST(Reservoir, PureInsertLeavesInputUntouched) {
  Reservoir r(2, 3);
  const auto r2 = reservoir_insert(r, tagged(4));
  EXPECT_EQ(r.seen(), 0u);
  EXPECT_EQ(r2.seen(), 1u);
}

TEST(Reservoir, CapacityOneIsUniform) {
  const int n = 10;
  const int trials = 20000;
  std::vector<int> counts(n, 0);
  for (int s = 0; s < trials; ++s) {
    Reservoir r(1, derive_seed(77, s));
    for (int i = 0; i < n; ++i) r.insert(tagged(i));
    counts[r.items()[0].prompt[0]]++;
  }
  for (int c : counts) EXPECT_NEAR(static_cast<double>(c) / trials, 1.0 / n, 0.02);
}

TEST(Reservoir, InclusionCountsPassChiSquare) {
  const int n = 20;
  const int cap = 5;
  const int trials = 10000;
  std::vector<int> counts(n, 0);
  for (int s = 0; s < trials; ++s) {
    Reservoir r(cap, derive_seed(78, s));
    for (int i = 0; i < n; ++i) r.insert(tagged(i));
    for (const auto& t : r.items()) counts[t.prompt[0]]++;
  }
  const double expected = static_cast<double>(trials) * cap / n;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 0.999 quantile of chi-square with 19 degrees of freedom
  EXPECT_LT(chi2, 43.82);
}

TEST(CombineConfig, GridShapes) {
  CombineConfig cc;
  EXPECT_EQ(cc.grid().size(), 19u * 19u);
  cc.mode = CombineMode::constrained;
  const auto line = cc.grid();
  ASSERT_EQ(line.size(), 19u);
  for (const auto& [b1, b2] : line) EXPECT_NEAR(b1 + b2, 1.0, 1e-15);
  cc.grid_step = 0.5;
  ASSERT_EQ(cc.grid().size(), 1u);
  EXPECT_EQ(cc.grid()[0], std::make_pair(0.5, 0.5));
  for (const auto& [b1, b2] : CombineConfig{0.3}.grid()) {
    EXPECT_GT(b1, 0.0);
    EXPECT_LT(b1, 1.0);
    EXPECT_GT(b2, 0.0);
    EXPECT_LT(b2, 1.0);
  }
  EXPECT_THROW((CombineConfig{1.0}.validate()), std::invalid_argument);
  EXPECT_THROW((CombineConfig{0.0}.validate()), std::invalid_argument);
}

TEST(CombineAdapters, IdentitiesAndLinearity) {
  const PolicySpec spec{8, 12, 3, 2};
  const ReferenceModel m(spec);
  Rng rng{5};
  const auto a1 = oracle::random_adapter(spec, rng);
  const auto a2 = oracle::random_adapter(spec, rng);
  const auto f = feature_map(m, TokenSequence{1, 2}, TokenSequence{3});
  auto near = [](const std::vector<double>& x, const std::vector<double>& y) {
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d = std::max(d, std::abs(x[i] - y[i]));
    return d;
  };
  const auto c10 = combine_adapters(a1, a2, 1.0, 0.0);
  const auto c01 = combine_adapters(a1, a2, 0.0, 1.0);
  EXPECT_EQ(c10.rank(), 6u);
  EXPECT_LT(near(token_logits(m, &c10, f), token_logits(m, &a1, f)), 1e-12);
  EXPECT_LT(near(token_logits(m, &c01, f), token_logits(m, &a2, f)), 1e-12);
  for (auto [b1, b2] : {std::pair{0.5, 0.5}, std::pair{0.2, 0.9}}) {
    const auto c = combine_adapters(a1, a2, b1, b2);
    const auto d = c.delta();
    const auto d1 = a1.delta();
    const auto d2 = a2.delta();
    for (std::size_t i = 0; i < d.size(); ++i) {
      EXPECT_NEAR(d.values()[i], b1 * d1.values()[i] + b2 * d2.values()[i], 1e-12);
    }
  }
  const auto other = oracle::random_adapter(PolicySpec{8, 12, 2, 2}, rng);
  EXPECT_THROW(combine_adapters(a1, other, 0.5, 0.5), std::invalid_argument);
}

TEST(BetaSearch, SurfaceMatchesDirectEvaluationAndArgmin) {
  const PolicySpec spec{16, 24, 2, 3};
  const ReferenceModel m(spec);
  Rng rng{6};
  const auto a1 = oracle::random_adapter(spec, rng);
  const auto a2 = oracle::random_adapter(spec, rng);
  Reservoir mem1(6, 1);
  Reservoir mem2(6, 2);
  for (const auto& t : stream_for(m, 1, 6, 7)) mem1.insert(t);
  for (const auto& t : stream_for(m, 2, 6, 7)) mem2.insert(t);
  const CombineConfig cc{0.25};
  const ObjectiveConfig obj{0.1, 0.7};
  const auto res = beta_search(m, a1, a2, mem1, mem2, cc, obj);
  ASSERT_EQ(res.surface.size(), 9u);
  std::vector<PreferenceTriple> pool(mem1.items());
  pool.insert(pool.end(), mem2.items().begin(), mem2.items().end());
  const auto cached = cache_triples(m, pool);
  double best = res.surface[0].loss;
  for (const auto& p : res.surface) {
    const auto c = combine_adapters(a1, a2, p.beta1, p.beta2);
    EXPECT_NEAR(p.loss, mean_dpo_loss(cached, c, obj.beta_dpo), 1e-12);
    best = std::min(best, p.loss);
  }
  EXPECT_EQ(res.loss, best);
  EXPECT_EQ(res.combined, combine_adapters(a1, a2, res.beta1, res.beta2));
}

TEST(BetaSearch, TiesGoToSmallestBetas) {
  const PolicySpec spec{16, 24, 2, 3};
  const ReferenceModel m(spec);
  Rng rng{8};
  const auto a1 = oracle::random_adapter(spec, rng);
  Reservoir mem1(4, 1);
  Reservoir mem2(4, 2);
  for (const auto& t : stream_for(m, 1, 4, 9)) mem1.insert(t);
  for (const auto& t : stream_for(m, 2, 4, 9)) mem2.insert(t);
  // Along β₁ + β₂ = 1 the combination of an adapter with itself is constant.
  CombineConfig cc{0.1, CombineMode::constrained};
  const auto res = beta_search(m, a1, a1, mem1, mem2, cc, ObjectiveConfig{});
  for (const auto& p : res.surface) EXPECT_NEAR(p.loss, res.surface[0].loss, 1e-12);
  EXPECT_DOUBLE_EQ(res.beta1, 0.1);
  EXPECT_DOUBLE_EQ(res.beta2, 0.9);
}

TEST(BetaSearch, RequiresRetainedSamples) {
  const PolicySpec spec{8, 12, 2, 3};
  const ReferenceModel m(spec);
  Rng rng{1};
  const auto a = oracle::random_adapter(spec, rng);
  Reservoir empty(3, 1);
  Reservoir full(3, 2);
  full.insert(PreferenceTriple{{1}, {0}, {1}, 1});
  EXPECT_THROW(beta_search(m, a, a, empty, full, CombineConfig{}, ObjectiveConfig{}),
               std::invalid_argument);
}

TEST(RunCofs, SecondTaskStartsFromFirstTaskFastModule) {
  const ReferenceModel m(PolicySpec{});
  const auto s1 = stream_for(m, 1, 120, 3);
  const auto s2 = stream_for(m, 2, 80, 3);
  const TrainConfig cfg;
  const CombineConfig cc{0.1, CombineMode::independent, 50};
  const auto res = run_cofs(m, s1, s2, cfg, cc);
  EXPECT_EQ(res.run2.trail.front().module_a, res.task1);
  EXPECT_EQ(*res.run2.trail.front().module_b, res.task1);
  EXPECT_EQ(res.task2, res.run2.final_fast);
  EXPECT_EQ(res.mem1.items().size(), 50u);
  EXPECT_EQ(res.mem1.seen(), 120u);
  EXPECT_EQ(res.mem2.seen(), 80u);
  for (const auto& t : res.mem1.items()) EXPECT_EQ(t.domain, 1);
  for (const auto& t : res.mem2.items()) EXPECT_EQ(t.domain, 2);
  EXPECT_GT(res.beta1, 0.0);
  EXPECT_LT(res.beta1, 1.0);
  EXPECT_EQ(res.surface.size(), 81u);

  const auto again = run_cofs(m, s1, s2, cfg, cc);
  EXPECT_EQ(again.combined, res.combined);
  EXPECT_EQ(again.beta1, res.beta1);
  EXPECT_EQ(again.beta2, res.beta2);
  EXPECT_THROW(run_cofs(m, {}, s2, cfg, cc), std::invalid_argument);
}

TEST(RunCofs, SameDomainControlKeepsFirstTaskLoss) {
  // With both tasks drawn from one domain, continuing on task 2 should not
  // make the task-1 memory loss worse than the reference.
  const ReferenceModel m(PolicySpec{});
  const auto s1 = stream_for(m, 1, 400, 4);
  const auto s2 = gen_stream(m, StreamSpec{make_domain(1, 32, 4), 400, 5});
  const auto res = run_cofs(m, s1, s2, TrainConfig{}, CombineConfig{0.1, CombineMode::independent, 100});
  const auto cached = cache_triples(m, res.mem1.items());
  EXPECT_LT(mean_dpo_loss(cached, res.task2, 0.1), std::log(2.0));
  EXPECT_LT(mean_dpo_loss(cached, res.combined, 0.1), std::log(2.0));
}
