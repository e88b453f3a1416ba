#include "tssr/corruption.hpp"

#include "tssr/error.hpp"

#include <string>

namespace tssr {

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "mask") return NoiseKind::Mask;
  if (name == "uniform") return NoiseKind::Uniform;
  throw ValidationError("unknown noise kind '" + std::string(name) + "'");
}

double NoiseSchedule::kappa(double t) const {
  require(t >= 0.0 && t <= 1.0, "kappa: t must lie in [0, 1]");
  switch (kind) {
    case Kind::Linear: return 1.0 - t;
  }
  throw ValidationError("kappa: unknown schedule");
}

double NoiseSchedule::time_of(int t_int) const {
  require(t_int >= 0 && t_int <= train_steps, "timestep outside [0, T_train]");
  return static_cast<double>(t_int) / train_steps;
}

CorruptionResult corrupt(const TokenSequence& x1, double t, NoiseKind kind, const Codebook& book, Rng& rng,
                         const NoiseSchedule& schedule) {
  const double rate = schedule.kappa(t);
  const std::size_t n = unpadded_length(x1, book);
  for (std::size_t i = 0; i < n; ++i) require(book.is_coordinate(x1[i]), "corrupt: input is not clean");
  CorruptionResult res;
  res.t = t;
  res.x_t = x1;
  for (std::size_t i = 0; i < n; ++i) {
    if (!rng.bernoulli(rate)) continue;
    res.corrupted_positions.push_back(static_cast<int>(i));
    res.x_t[i] = kind == NoiseKind::Mask ? book.mask() : static_cast<Token>(rng.below(book.resolution));
  }
  return res;
}

CorruptionResult corrupt(const TokenSequence& x1, double t, NoiseKind kind, const Codebook& book,
                         std::uint64_t seed, const NoiseSchedule& schedule) {
  Rng rng(seed);
  return corrupt(x1, t, kind, book, rng, schedule);
}

}  // namespace tssr
