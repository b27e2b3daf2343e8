#include "chasedpo/datagen.hpp"

namespace chasedpo {

namespace {
constexpr int kMaxTieResamples = 32;
}

DomainSpec make_domain(int domain_id, std::size_t vocab_size, std::uint64_t seed) {
  if (domain_id != 1 && domain_id != 2) throw std::invalid_argument("domain must be 1 or 2");
  if (vocab_size < 4) throw std::invalid_argument("vocab_size must be >= 4");
  DomainSpec d;
  d.domain_id = domain_id;
  d.seed = seed;
  d.reward.assign(vocab_size, 0.0);
  d.prompt_logits.assign(vocab_size, 0.0);
  const std::size_t quarter = vocab_size / 4;
  const std::size_t half = vocab_size / 2;
  const std::size_t r0 = domain_id == 1 ? 0 : quarter;
  for (std::size_t i = r0; i < r0 + quarter; ++i) d.reward[i] = 1.0;
  const std::size_t p0 = domain_id == 1 ? 0 : half;
  const std::size_t p1 = domain_id == 1 ? half : vocab_size;
  for (std::size_t i = p0; i < p1; ++i) d.prompt_logits[i] = 1.0;
  return d;
}

double reward(const DomainSpec& d, std::span<const Token> response) {
  if (response.empty()) throw std::invalid_argument("empty response");
  double acc = 0.0;
  for (Token t : response) {
    if (t < 0 || static_cast<std::size_t>(t) >= d.reward.size()) {
      throw std::out_of_range("token out of range for domain");
    }
    acc += d.reward[static_cast<std::size_t>(t)];
  }
  return acc / static_cast<double>(response.size());
}

TokenSequence sample_prompt(const DomainSpec& d, Rng& rng) {
  TokenSequence p;
  p.reserve(d.prompt_len);
  for (std::size_t i = 0; i < d.prompt_len; ++i) {
    p.push_back(static_cast<Token>(rng.categorical(d.prompt_logits)));
  }
  return p;
}

PreferenceTriple make_triple(const ReferenceModel& model, const DomainSpec& d, Rng& rng) {
  PreferenceTriple t;
  t.domain = d.domain_id;
  t.prompt = sample_prompt(d, rng);
  auto first = sample_response(model, nullptr, t.prompt, d.response_len, rng);
  const double r1 = reward(d, first);
  for (int attempt = 0; attempt < kMaxTieResamples; ++attempt) {
    auto second = sample_response(model, nullptr, t.prompt, d.response_len, rng);
    const double r2 = reward(d, second);
    if (r1 == r2) continue;
    if (r1 > r2) {
      t.chosen = std::move(first);
      t.rejected = std::move(second);
    } else {
      t.chosen = std::move(second);
      t.rejected = std::move(first);
    }
    return t;
  }
  throw DegenerateDomainError("degenerate domain");
}

std::vector<PreferenceTriple> gen_stream(const ReferenceModel& model, const StreamSpec& ss) {
  std::vector<PreferenceTriple> out;
  out.reserve(ss.length);
  const std::uint64_t stream_seed =
      derive_seed(ss.seed, static_cast<std::uint64_t>(ss.domain.domain_id));
  for (std::size_t i = 0; i < ss.length; ++i) {
    Rng rng{derive_seed(stream_seed, i)};
    out.push_back(make_triple(model, ss.domain, rng));
  }
  return out;
}

}  // namespace chasedpo
