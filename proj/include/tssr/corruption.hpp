#pragma once

#include "tssr/codec.hpp"
#include "tssr/rng.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace tssr {

enum class NoiseKind { Mask, Uniform };

NoiseKind parse_noise_kind(std::string_view name);

/// kappa(t) is the fraction of tokens replaced by noise at time t, where
/// t = 0 is pure noise and t = 1 is clean data.
struct NoiseSchedule {
  enum class Kind { Linear };

  Kind kind = Kind::Linear;
  int train_steps = 1000;  // integer timesteps t_int in [0, train_steps]

  double kappa(double t) const;
  double time_of(int t_int) const;
};

struct CorruptionResult {
  TokenSequence x_t;
  std::vector<int> corrupted_positions;  // ascending
  double t = 0.0;
};

/// Each non-PAD position is independently replaced with probability kappa(t):
/// by MASK for the mask kind, by a uniform coordinate token in [0, V) for the
/// uniform kind. PAD positions are left untouched.
CorruptionResult corrupt(const TokenSequence& x1, double t, NoiseKind kind, const Codebook& book, Rng& rng,
                         const NoiseSchedule& schedule = {});

CorruptionResult corrupt(const TokenSequence& x1, double t, NoiseKind kind, const Codebook& book,
                         std::uint64_t seed, const NoiseSchedule& schedule = {});

}  // namespace tssr
