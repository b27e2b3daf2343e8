#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "chasedpo/numerics.hpp"

namespace chasedpo {

using Token = std::int32_t;
using TokenSequence = std::vector<Token>;

/// Standard deviation multiplier for the frozen output matrix: entries are
/// N(0, (kBaseOutputScale^2) / feature_dim). Small values keep the reference
/// policy close to uniform.
inline constexpr double kBaseOutputScale = 0.25;

/// Shape and seed of the frozen reference policy.
struct PolicySpec {
  std::size_t vocab_size = 32;
  std::size_t feature_dim = 64;
  std::size_t rank = 4;
  std::uint64_t base_seed = 7;

  /// Throws std::invalid_argument when 1 <= rank <= min(V, h) does not hold.
  void validate() const;
  friend bool operator==(const PolicySpec&, const PolicySpec&) = default;
};

/// Trainable low-rank delta on the output matrix: logits = (O_base + B·A)·f.
/// `a` is rank×h, `b` is V×rank. The rank need not equal PolicySpec::rank
/// (combined adapters have twice the rank).
struct AdapterParams {
  Matrix a;
  Matrix b;

  std::size_t rank() const { return a.rows(); }
  /// Dense V×h product B·A.
  Matrix delta() const;
  friend bool operator==(const AdapterParams&, const AdapterParams&) = default;
};

/// Gradient with respect to an adapter, same shapes as the adapter.
struct AdapterGrad {
  Matrix da;
  Matrix db;

  static AdapterGrad zeros_like(const AdapterParams& p);
  double norm() const;
  bool all_finite() const { return da.all_finite() && db.all_finite(); }
  void scale(double s);
  void add(const AdapterGrad& other, double s = 1.0);
};

/// A ~ N(0, 1/h), B = 0, so the initial policy equals the reference.
AdapterParams init_adapter(const PolicySpec& spec, std::uint64_t seed);
/// Frobenius distance between two adapters viewed as one parameter vector.
double adapter_distance(const AdapterParams& lhs, const AdapterParams& rhs);

/// Frozen matrices regenerated from PolicySpec::base_seed.
class ReferenceModel {
 public:
  explicit ReferenceModel(const PolicySpec& spec);

  const PolicySpec& spec() const { return spec_; }
  std::size_t vocab() const { return spec_.vocab_size; }
  std::size_t hdim() const { return spec_.feature_dim; }
  /// h × 3V feature projection.
  const Matrix& projection() const { return projection_; }
  /// V × h base output matrix.
  const Matrix& base_output() const { return base_output_; }

  /// Throws std::invalid_argument if the adapter does not fit this model.
  void check_adapter(const AdapterParams& adapter) const;
  void check_tokens(std::span<const Token> tokens) const;

 private:
  PolicySpec spec_;
  Matrix projection_;
  Matrix base_output_;
};

/// Projected context features for predicting the token after `prefix`.
std::vector<double> feature_map(const ReferenceModel& model, std::span<const Token> prompt,
                                std::span<const Token> prefix);

/// (O_base + B·A)·features, or O_base·features when adapter is null.
std::vector<double> token_logits(const ReferenceModel& model, const AdapterParams* adapter,
                                 std::span<const double> features);

double seq_logprob(const ReferenceModel& model, const AdapterParams* adapter,
                   std::span<const Token> prompt, std::span<const Token> response);

AdapterGrad grad_seq_logprob(const ReferenceModel& model, const AdapterParams& adapter,
                             std::span<const Token> prompt, std::span<const Token> response);

TokenSequence sample_response(const ReferenceModel& model, const AdapterParams* adapter,
                              std::span<const Token> prompt, std::size_t length, Rng& rng);

/// Per-position features and reference logits of one (prompt, response) pair.
/// The frozen part of the forward pass is computed once so that repeated
/// evaluation under different adapters costs O(L·r·(V+h)).
struct SequenceCache {
  TokenSequence tokens;
  Matrix features;     // L × h
  Matrix base_logits;  // L × V
  double ref_logprob = 0.0;
};

SequenceCache cache_sequence(const ReferenceModel& model, std::span<const Token> prompt,
                             std::span<const Token> response);

double cached_logprob(const SequenceCache& seq, const AdapterParams* adapter);

/// grad += coeff · ∇_adapter log π(seq)
void accumulate_logprob_grad(const SequenceCache& seq, const AdapterParams& adapter,
                             double coeff, AdapterGrad& grad);

/// Forward-pass intermediates kept for a later backward pass: the low-rank
/// activations z (L × r) and the logit residuals e_y − p (L × V).
struct LogprobTape {
  std::vector<double> z;
  std::vector<double> resid;
};

/// Same value as cached_logprob; also fills `tape`.
double cached_logprob(const SequenceCache& seq, const AdapterParams& adapter, LogprobTape& tape);

/// grad += coeff · ∇_adapter log π(seq), reusing a tape recorded with the same adapter.
void accumulate_logprob_grad(const SequenceCache& seq, const AdapterParams& adapter,
                             const LogprobTape& tape, double coeff, AdapterGrad& grad);

}  // namespace chasedpo
