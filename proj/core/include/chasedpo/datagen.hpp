#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "chasedpo/objectives.hpp"
#include "chasedpo/policy.hpp"

namespace chasedpo {

/// Raised when a domain cannot produce a strict preference.
class DegenerateDomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A synthetic task domain: ground-truth token rewards and a prompt distribution.
struct DomainSpec {
  int domain_id = 1;
  std::vector<double> reward;        // per-token weight in [0, 1]
  std::vector<double> prompt_logits;
  std::size_t prompt_len = 8;
  std::size_t response_len = 12;
  std::uint64_t seed = 0;

  friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

struct StreamSpec {
  DomainSpec domain;
  std::size_t length = 0;
  std::uint64_t seed = 0;
};

/// Domain 1 rewards the first quarter of the vocabulary, domain 2 the second;
/// prompts lean towards the first (domain 1) or second (domain 2) half.
DomainSpec make_domain(int domain_id, std::size_t vocab_size, std::uint64_t seed);

/// Mean reward weight over the response tokens.
double reward(const DomainSpec& d, std::span<const Token> response);

TokenSequence sample_prompt(const DomainSpec& d, Rng& rng);

/// Two reference-policy responses labelled by reward. Ties resample the second
/// response up to 32 times before throwing DegenerateDomainError.
PreferenceTriple make_triple(const ReferenceModel& model, const DomainSpec& d, Rng& rng);

/// `length` independent triples, each drawn from its own substream of
/// (seed, domain_id), so streams of different domains never share draws.
std::vector<PreferenceTriple> gen_stream(const ReferenceModel& model, const StreamSpec& ss);

}  // namespace chasedpo
