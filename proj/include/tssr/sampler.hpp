#pragma once

#include "tssr/codec.hpp"
#include "tssr/corruption.hpp"
#include "tssr/net.hpp"
#include "tssr/rng.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tssr {

/// Draws a coordinate token from softmax(row[0:V] / temperature); specials
/// are never sampled. temperature == 0 picks the argmax (lowest index on ties).
template <typename Derived>
Token sample_token(const Eigen::MatrixBase<Derived>& row, int resolution, double temperature, Rng& rng) {
  const auto v = row.head(resolution);
  Eigen::Index best = 0;
  double mx = static_cast<double>(v(0));
  for (Eigen::Index i = 1; i < resolution; ++i)
    if (static_cast<double>(v(i)) > mx) {
      mx = static_cast<double>(v(i));
      best = i;
    }
  if (temperature <= 0.0) return static_cast<Token>(best);
  double total = 0.0;
  thread_local std::vector<double> weights;
  weights.resize(static_cast<std::size_t>(resolution));
  for (Eigen::Index i = 0; i < resolution; ++i) {
    weights[static_cast<std::size_t>(i)] = std::exp((static_cast<double>(v(i)) - mx) / temperature);
    total += weights[static_cast<std::size_t>(i)];
  }
  double u = rng.uniform() * total;
  for (Eigen::Index i = 0; i < resolution; ++i) {
    u -= weights[static_cast<std::size_t>(i)];
    if (u < 0.0) return static_cast<Token>(i);
  }
  return static_cast<Token>(best);
}

/// Anything that maps (x_t, t, flag) to token and correctness logits. The
/// condition is bound at construction.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual int resolution() const = 0;
  virtual int max_faces() const = 0;
  virtual int train_steps() const = 0;
  virtual DenoiseOutput<float> denoise(const TokenSequence& x, int t_int, TaskFlag flag) = 0;
};

class ModelDenoiser final : public Denoiser {
 public:
  ModelDenoiser(const Model<float>& model, const PointCloud& condition);

  int resolution() const override { return model_.config().resolution; }
  int max_faces() const override { return model_.config().max_faces; }
  int train_steps() const override { return model_.config().train_steps; }
  DenoiseOutput<float> denoise(const TokenSequence& x, int t_int, TaskFlag flag) override;

 private:
  const Model<float>& model_;
  Eigen::MatrixXd features_;
};

/// Stand-in denoiser that knows the target sequence. Each token prediction
/// is replaced by a uniformly drawn wrong token with probability
/// `corruption`; the correctness logit is +/-`confidence_logit` depending on
/// whether the input token matches the target.
class OracleDenoiser final : public Denoiser {
 public:
  OracleDenoiser(TokenSequence truth, int resolution, double corruption, std::uint64_t seed,
                 double confidence_logit = 1e4, int max_faces = 1 << 20);

  int resolution() const override { return resolution_; }
  int max_faces() const override { return max_faces_; }
  int train_steps() const override { return 1000; }
  DenoiseOutput<float> denoise(const TokenSequence& x, int t_int, TaskFlag flag) override;

 private:
  TokenSequence truth_;
  int resolution_;
  double corruption_;
  Rng rng_;
  double confidence_logit_;
  int max_faces_;
};

struct SamplerConfig {
  int steps = 200;       // T
  double sigma = 0.9;    // confidence threshold
  double temperature = 1.0;
  bool keep_floor = true;
  std::uint64_t seed = 0;
  NoiseSchedule schedule{};
};

struct StepTrace {
  int step = 0;
  std::size_t committed = 0;
  double mean_confidence = 0.0;  // NaN on the final step (no classifier pass)
};

struct SamplerState {
  TokenSequence x;                 // MASK or committed tokens
  std::vector<char> committed;     // per position
  int t_index = 0;
  std::vector<StepTrace> history;

  std::size_t committed_count() const;
  bool final(int total_steps) const { return t_index >= total_steps; }
};

/// 9 * n_faces MASK tokens.
SamplerState init_state(int n_faces, int max_faces, const Codebook& book);

/// One round: mask-denoise, reuse the prediction as the uniform-task input,
/// uniform-denoise, then keep tokens whose classifier confidence reaches
/// sigma and re-mask the rest. With keep_floor, the committed count is
/// raised to ceil((1 - kappa(t + dt)) * S) by committing the most confident
/// masked positions. Committed positions never revert.
void hybrid_step(Denoiser& denoiser, SamplerState& state, const SamplerConfig& cfg, Rng& rng);

enum class FaceStrategy { GroundTruth, Biased, Constant };

struct FaceCountStrategy {
  FaceStrategy kind = FaceStrategy::GroundTruth;
  int faces = 0;          // reference count for S1/S2
  int width = 100;        // S2 bias range [-width, +width]
  int constant = 2000;    // S3 value

  /// Resolved face count; the S2 draw comes from `seed`.
  int resolve(std::uint64_t seed, int max_faces) const;
};

FaceStrategy parse_face_strategy(const std::string& name);

struct GenerateResult {
  TokenSequence tokens;
  int n_faces = 0;
  std::vector<StepTrace> trace;
  std::vector<std::size_t> committed_per_step;
};

GenerateResult generate(Denoiser& denoiser, const FaceCountStrategy& strategy, const SamplerConfig& cfg);
GenerateResult generate(Denoiser& denoiser, int n_faces, const SamplerConfig& cfg);

/// `step committed_count mean_confidence` per line.
std::string format_trace(const std::vector<StepTrace>& trace);

}  // namespace tssr
