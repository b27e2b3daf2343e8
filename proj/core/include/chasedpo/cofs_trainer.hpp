#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "chasedpo/objectives.hpp"
#include "chasedpo/ofs_trainer.hpp"
#include "chasedpo/policy.hpp"

namespace chasedpo {

/// Capacity-bounded uniform sample of a stream (Algorithm R).
class Reservoir {
 public:
  Reservoir(std::size_t capacity, std::uint64_t seed);

  void insert(const PreferenceTriple& item);

  std::size_t capacity() const { return capacity_; }
  std::size_t seen() const { return seen_; }
  const std::vector<PreferenceTriple>& items() const { return items_; }

 private:
  std::size_t capacity_;
  std::size_t seen_ = 0;
  std::vector<PreferenceTriple> items_;
  Rng rng_;
};

Reservoir reservoir_insert(Reservoir res, const PreferenceTriple& item);

enum class CombineMode { independent, constrained };

struct CombineConfig {
  double grid_step = 0.05;
  CombineMode mode = CombineMode::independent;
  /// Per-task reservoir capacity.
  std::size_t memory_capacity = 250;

  void validate() const;
  /// Grid points in lexicographic order; every coordinate lies strictly in (0, 1).
  std::vector<std::pair<double, double>> grid() const;
};

/// Adapter whose effective delta is β₁·B₁A₁ + β₂·B₂A₂, represented exactly by
/// stacking the factors: A = [A₁; A₂], B = [β₁B₁, β₂B₂].
AdapterParams combine_adapters(const AdapterParams& a1, const AdapterParams& a2, double beta1,
                               double beta2);

struct SurfacePoint {
  double beta1 = 0.0;
  double beta2 = 0.0;
  double loss = 0.0;
};

struct BetaSearchResult {
  double beta1 = 0.0;
  double beta2 = 0.0;
  double loss = 0.0;
  AdapterParams combined;
  std::vector<SurfacePoint> surface;
};

/// Losses within this distance of the minimum count as ties.
inline constexpr double kBetaTieTolerance = 1e-12;

/// Grid search for the combination minimizing mean DPO loss on mem1 ∪ mem2.
/// Ties go to the lexicographically smallest (β₁, β₂).
BetaSearchResult beta_search(const ReferenceModel& model, const AdapterParams& a1,
                             const AdapterParams& a2, const Reservoir& mem1, const Reservoir& mem2,
                             const CombineConfig& cc, const ObjectiveConfig& cfg);

struct CofsResult {
  AdapterParams task1;
  AdapterParams task2;
  AdapterParams combined;
  double beta1 = 0.0;
  double beta2 = 0.0;
  std::vector<SurfacePoint> surface;
  Reservoir mem1;
  Reservoir mem2;
  OfsResult run1;
  OfsResult run2;
};

/// Task-1 OFS run from the reference initialization, Task-2 OFS run with both
/// modules started from the Task-1 fast adapter, then the β search.
CofsResult run_cofs(const ReferenceModel& model, std::span<const PreferenceTriple> stream1,
                    std::span<const PreferenceTriple> stream2, const TrainConfig& cfg,
                    const CombineConfig& cc);

}  // namespace chasedpo
