#pragma once

// Brute-force reference computations used as test oracles. They share no code
// paths with the library beyond the frozen model matrices.

#include <cmath>
#include <functional>
#include <vector>

#include "chasedpo/objectives.hpp"
#include "chasedpo/policy.hpp"

namespace oracle {

using chasedpo::AdapterGrad;
using chasedpo::AdapterParams;
using chasedpo::Matrix;
using chasedpo::PolicySpec;
using chasedpo::ReferenceModel;
using chasedpo::Rng;
using chasedpo::Token;
using chasedpo::TokenSequence;

inline AdapterParams random_adapter(const PolicySpec& spec, Rng& rng, double sd_a = 0.5,
                                    double sd_b = 0.5) {
  AdapterParams p{Matrix(spec.rank, spec.feature_dim), Matrix(spec.vocab_size, spec.rank)};
  for (double& v : p.a.values()) v = sd_a * rng.gaussian();
  for (double& v : p.b.values()) v = sd_b * rng.gaussian();
  return p;
}

inline std::vector<double> features(const ReferenceModel& m, const TokenSequence& prompt,
                                    const TokenSequence& prefix) {
  const std::size_t V = m.vocab();
  std::vector<double> u(3 * V, 0.0);
  for (Token t : prompt) u[t] += 1.0 / prompt.size();
  for (Token t : prefix) u[V + t] += 1.0 / prefix.size();
  if (!prefix.empty()) u[2 * V + prefix.back()] = 1.0;
  std::vector<double> f(m.hdim(), 0.0);
  for (std::size_t i = 0; i < m.hdim(); ++i) {
    for (std::size_t j = 0; j < 3 * V; ++j) f[i] += m.projection()(i, j) * u[j];
  }
  return f;
}

// Logits through the dense matrix O_base + B·A.
inline std::vector<double> dense_logits(const ReferenceModel& m, const AdapterParams* ad,
                                        const std::vector<double>& f) {
  const std::size_t V = m.vocab();
  const std::size_t h = m.hdim();
  std::vector<double> out(V, 0.0);
  for (std::size_t v = 0; v < V; ++v) {
    for (std::size_t j = 0; j < h; ++j) {
      double w = m.base_output()(v, j);
      if (ad != nullptr) {
        for (std::size_t k = 0; k < ad->rank(); ++k) w += ad->b(v, k) * ad->a(k, j);
      }
      out[v] += w * f[j];
    }
  }
  return out;
}

inline double logprob(const ReferenceModel& m, const AdapterParams* ad,
                      const TokenSequence& prompt, const TokenSequence& resp) {
  double lp = 0.0;
  TokenSequence prefix;
  for (Token y : resp) {
    const auto logits = dense_logits(m, ad, features(m, prompt, prefix));
    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    double s = 0.0;
    for (double x : logits) s += std::exp(x - mx);
    lp += logits[y] - mx - std::log(s);
    prefix.push_back(y);
  }
  return lp;
}

// Calls fn on every response of length L over a vocabulary of size V.
inline void for_each_response(std::size_t V, std::size_t L,
                              const std::function<void(const TokenSequence&)>& fn) {
  TokenSequence seq(L, 0);
  while (true) {
    fn(seq);
    std::size_t i = 0;
    while (i < L && static_cast<std::size_t>(++seq[i]) == V) seq[i++] = 0;
    if (i == L) return;
  }
}

// Central differences of a scalar function of the adapter.
inline AdapterGrad numeric_grad(const std::function<double(const AdapterParams&)>& f,
                                AdapterParams p, double step = 1e-5) {
  auto g = AdapterGrad::zeros_like(p);
  auto probe = [&](Matrix& m, Matrix& out) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double keep = m.values()[i];
      m.values()[i] = keep + step;
      const double up = f(p);
      m.values()[i] = keep - step;
      const double down = f(p);
      m.values()[i] = keep;
      out.values()[i] = (up - down) / (2.0 * step);
    }
  };
  probe(p.a, g.da);
  probe(p.b, g.db);
  return g;
}

inline double max_abs_diff(const AdapterGrad& x, const AdapterGrad& y) {
  double d = 0.0;
  for (std::size_t i = 0; i < x.da.size(); ++i) d = std::max(d, std::abs(x.da.values()[i] - y.da.values()[i]));
  for (std::size_t i = 0; i < x.db.size(); ++i) d = std::max(d, std::abs(x.db.values()[i] - y.db.values()[i]));
  return d;
}

}  // namespace oracle
