#include "chasedpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace chasedpo {

void PolicySpec::validate() const {
  if (vocab_size < 1 || feature_dim < 1) {
    throw std::invalid_argument("vocab_size and feature_dim must be positive");
  }
  if (rank < 1 || rank > std::min(vocab_size, feature_dim)) {
    throw std::invalid_argument("rank must satisfy 1 <= r <= min(V, h)");
  }
}

Matrix AdapterParams::delta() const { return matmul(b, a); }

AdapterGrad AdapterGrad::zeros_like(const AdapterParams& p) {
  return {Matrix(p.a.rows(), p.a.cols()), Matrix(p.b.rows(), p.b.cols())};
}

double AdapterGrad::norm() const {
  const double na = frobenius_norm(da);
  const double nb = frobenius_norm(db);
  return std::sqrt(na * na + nb * nb);
}

void AdapterGrad::scale(double s) {
  for (double& v : da.values()) v *= s;
  for (double& v : db.values()) v *= s;
}

void AdapterGrad::add(const AdapterGrad& other, double s) {
  auto a = da.values();
  auto oa = other.da.values();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * oa[i];
  auto b = db.values();
  auto ob = other.db.values();
  for (std::size_t i = 0; i < b.size(); ++i) b[i] += s * ob[i];
}

AdapterParams init_adapter(const PolicySpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng{seed};
  const double sd = 1.0 / std::sqrt(static_cast<double>(spec.feature_dim));
  AdapterParams p{Matrix(spec.rank, spec.feature_dim), Matrix(spec.vocab_size, spec.rank)};
  for (double& v : p.a.values()) v = sd * rng.gaussian();
  return p;
}

double adapter_distance(const AdapterParams& lhs, const AdapterParams& rhs) {
  return std::sqrt(squared_distance(lhs.a, rhs.a) + squared_distance(lhs.b, rhs.b));
}

ReferenceModel::ReferenceModel(const PolicySpec& spec) : spec_(spec) {
  spec_.validate();
  const std::size_t V = spec_.vocab_size;
  const std::size_t h = spec_.feature_dim;
  Rng rng{spec_.base_seed};
  projection_ = Matrix(h, 3 * V);
  for (double& v : projection_.values()) v = rng.gaussian();
  base_output_ = Matrix(V, h);
  const double sd = kBaseOutputScale / std::sqrt(static_cast<double>(h));
  for (double& v : base_output_.values()) v = sd * rng.gaussian();
}

void ReferenceModel::check_adapter(const AdapterParams& adapter) const {
  if (adapter.a.cols() != hdim() || adapter.b.rows() != vocab() ||
      adapter.a.rows() != adapter.b.cols() || adapter.a.rows() == 0) {
    throw std::invalid_argument("adapter shape does not match policy");
  }
}

void ReferenceModel::check_tokens(std::span<const Token> tokens) const {
  for (Token t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab()) {
      throw std::out_of_range("token " + std::to_string(t) + " out of range for vocab " +
                              std::to_string(vocab()));
    }
  }
}

std::vector<double> feature_map(const ReferenceModel& model, std::span<const Token> prompt,
                                std::span<const Token> prefix) {
  if (prompt.empty()) throw std::invalid_argument("empty prompt");
  model.check_tokens(prompt);
  model.check_tokens(prefix);
  const std::size_t V = model.vocab();
  std::vector<double> u(3 * V, 0.0);
  const double wp = 1.0 / static_cast<double>(prompt.size());
  for (Token t : prompt) u[static_cast<std::size_t>(t)] += wp;
  if (!prefix.empty()) {
    const double wx = 1.0 / static_cast<double>(prefix.size());
    for (Token t : prefix) u[V + static_cast<std::size_t>(t)] += wx;
    u[2 * V + static_cast<std::size_t>(prefix.back())] = 1.0;
  }
  return matvec(model.projection(), u);
}

std::vector<double> token_logits(const ReferenceModel& model, const AdapterParams* adapter,
                                 std::span<const double> features) {
  if (features.size() != model.hdim()) {
    throw std::invalid_argument("feature vector length does not match policy");
  }
  auto logits = matvec(model.base_output(), features);
  if (adapter != nullptr) {
    model.check_adapter(*adapter);
    const auto z = matvec(adapter->a, features);
    const auto delta = matvec(adapter->b, z);
    for (std::size_t v = 0; v < logits.size(); ++v) logits[v] += delta[v];
  }
  return logits;
}

SequenceCache cache_sequence(const ReferenceModel& model, std::span<const Token> prompt,
                             std::span<const Token> response) {
  if (response.empty()) throw std::invalid_argument("empty response");
  model.check_tokens(response);
  const std::size_t L = response.size();
  SequenceCache seq;
  seq.tokens.assign(response.begin(), response.end());
  seq.features = Matrix(L, model.hdim());
  seq.base_logits = Matrix(L, model.vocab());
  double ref = 0.0;
  for (std::size_t t = 0; t < L; ++t) {
    const auto f = feature_map(model, prompt, response.first(t));
    std::copy(f.begin(), f.end(), seq.features.row(t).begin());
    const auto logits = matvec(model.base_output(), f);
    std::copy(logits.begin(), logits.end(), seq.base_logits.row(t).begin());
    ref += logits[static_cast<std::size_t>(response[t])] - logsumexp(logits);
  }
  seq.ref_logprob = ref;
  return seq;
}

namespace {

// Two partial sums so the compiler can overlap the adds.
double dot(const double* a, const double* b, std::size_t n) {
  double acc0 = 0.0;
  double acc1 = 0.0;
  std::size_t j = 0;
  for (; j + 1 < n; j += 2) {
    acc0 += a[j] * b[j];
    acc1 += a[j + 1] * b[j + 1];
  }
  if (j < n) acc0 += a[j] * b[j];
  return acc0 + acc1;
}

// z = A·f, logits = base + B·z
void adapted_logits(const AdapterParams& adapter, std::span<const double> f,
                    std::span<const double> base, std::vector<double>& z,
                    std::vector<double>& logits) {
  const std::size_t r = adapter.a.rows();
  for (std::size_t k = 0; k < r; ++k) z[k] = dot(adapter.a.row(k).data(), f.data(), f.size());
  for (std::size_t v = 0; v < base.size(); ++v) {
    auto brow = adapter.b.row(v);
    double acc = base[v];
    for (std::size_t k = 0; k < r; ++k) acc += brow[k] * z[k];
    logits[v] = acc;
  }
}

}  // namespace

double cached_logprob(const SequenceCache& seq, const AdapterParams* adapter) {
  if (adapter == nullptr) return seq.ref_logprob;
  if (adapter->a.cols() != seq.features.cols() || adapter->b.rows() != seq.base_logits.cols()) {
    throw std::invalid_argument("adapter shape does not match cached sequence");
  }
  std::vector<double> z(adapter->rank());
  std::vector<double> logits(seq.base_logits.cols());
  double lp = 0.0;
  for (std::size_t t = 0; t < seq.tokens.size(); ++t) {
    adapted_logits(*adapter, seq.features.row(t), seq.base_logits.row(t), z, logits);
    lp += logits[static_cast<std::size_t>(seq.tokens[t])] - logsumexp(logits);
  }
  return lp;
}

double cached_logprob(const SequenceCache& seq, const AdapterParams& adapter, LogprobTape& tape) {
  if (adapter.a.cols() != seq.features.cols() || adapter.b.rows() != seq.base_logits.cols()) {
    throw std::invalid_argument("adapter shape does not match cached sequence");
  }
  const std::size_t L = seq.tokens.size();
  const std::size_t r = adapter.rank();
  const std::size_t V = seq.base_logits.cols();
  const std::size_t h = seq.features.cols();
  tape.z.resize(L * r);
  tape.resid.resize(L * V);
  double lp = 0.0;
  for (std::size_t t = 0; t < L; ++t) {
    const auto f = seq.features.row(t);
    const auto base = seq.base_logits.row(t);
    double* z = tape.z.data() + t * r;
    double* x = tape.resid.data() + t * V;
    for (std::size_t k = 0; k < r; ++k) z[k] = dot(adapter.a.row(k).data(), f.data(), h);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < V; ++v) {
      const double* brow = adapter.b.row(v).data();
      double acc = base[v];
      for (std::size_t k = 0; k < r; ++k) acc += brow[k] * z[k];
      x[v] = acc;
      mx = std::max(mx, acc);
    }
    const auto y = static_cast<std::size_t>(seq.tokens[t]);
    const double target = x[y];
    double sum = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      x[v] = std::exp(x[v] - mx);
      sum += x[v];
    }
    lp += target - (mx + std::log(sum));
    const double inv = 1.0 / sum;
    for (std::size_t v = 0; v < V; ++v) x[v] *= -inv;
    x[y] += 1.0;
  }
  return lp;
}

void accumulate_logprob_grad(const SequenceCache& seq, const AdapterParams& adapter,
                             const LogprobTape& tape, double coeff, AdapterGrad& grad) {
  const std::size_t L = seq.tokens.size();
  const std::size_t r = adapter.rank();
  const std::size_t V = seq.base_logits.cols();
  const std::size_t h = seq.features.cols();
  if (tape.z.size() != L * r || tape.resid.size() != L * V) {
    throw std::invalid_argument("tape does not match sequence");
  }
  std::vector<double> q(r);
  for (std::size_t t = 0; t < L; ++t) {
    const double* z = tape.z.data() + t * r;
    const double* x = tape.resid.data() + t * V;
    std::fill(q.begin(), q.end(), 0.0);
    for (std::size_t v = 0; v < V; ++v) {
      const double g = coeff * x[v];
      double* dbrow = grad.db.row(v).data();
      const double* brow = adapter.b.row(v).data();
      for (std::size_t k = 0; k < r; ++k) {
        dbrow[k] += g * z[k];
        q[k] += brow[k] * g;
      }
    }
    const double* f = seq.features.row(t).data();
    for (std::size_t k = 0; k < r; ++k) {
      double* darow = grad.da.row(k).data();
      const double qk = q[k];
      for (std::size_t j = 0; j < h; ++j) darow[j] += qk * f[j];
    }
  }
}

void accumulate_logprob_grad(const SequenceCache& seq, const AdapterParams& adapter,
                             double coeff, AdapterGrad& grad) {
  LogprobTape tape;
  cached_logprob(seq, adapter, tape);
  accumulate_logprob_grad(seq, adapter, tape, coeff, grad);
}

double seq_logprob(const ReferenceModel& model, const AdapterParams* adapter,
                   std::span<const Token> prompt, std::span<const Token> response) {
  if (adapter != nullptr) model.check_adapter(*adapter);
  return cached_logprob(cache_sequence(model, prompt, response), adapter);
}

AdapterGrad grad_seq_logprob(const ReferenceModel& model, const AdapterParams& adapter,
                             std::span<const Token> prompt, std::span<const Token> response) {
  model.check_adapter(adapter);
  auto grad = AdapterGrad::zeros_like(adapter);
  accumulate_logprob_grad(cache_sequence(model, prompt, response), adapter, 1.0, grad);
  return grad;
}

TokenSequence sample_response(const ReferenceModel& model, const AdapterParams* adapter,
                              std::span<const Token> prompt, std::size_t length, Rng& rng) {
  if (length < 1) throw std::invalid_argument("response length must be >= 1");
  TokenSequence out;
  out.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    const auto f = feature_map(model, prompt, out);
    const auto logits = token_logits(model, adapter, f);
    out.push_back(static_cast<Token>(rng.categorical(logits)));
  }
  return out;
}

}  // namespace chasedpo
