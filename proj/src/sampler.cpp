#include "tssr/sampler.hpp"

#include "tssr/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace tssr {

ModelDenoiser::ModelDenoiser(const Model<float>& model, const PointCloud& condition)
    : model_(model), features_(condition_features(condition, model.config())) {}

DenoiseOutput<float> ModelDenoiser::denoise(const TokenSequence& x, int t_int, TaskFlag flag) {
  return model_.forward(x, t_int, features_, flag);
}

OracleDenoiser::OracleDenoiser(TokenSequence truth, int resolution, double corruption, std::uint64_t seed,
                               double confidence_logit, int max_faces)
    : truth_(std::move(truth)),
      resolution_(resolution),
      corruption_(corruption),
      rng_(seed),
      confidence_logit_(confidence_logit),
      max_faces_(max_faces) {
  require(corruption >= 0.0 && corruption <= 1.0, "oracle: corruption must lie in [0, 1]");
  require(resolution >= 2, "oracle: resolution must be >= 2");
}

DenoiseOutput<float> OracleDenoiser::denoise(const TokenSequence& x, int, TaskFlag) {
  require(x.size() == truth_.size(), "oracle: sequence length differs from the target");
  const auto n = static_cast<Eigen::Index>(x.size());
  DenoiseOutput<float> out;
  out.token_logits = ad::Matrix<float>::Zero(n, resolution_ + 2);
  out.correctness_logits.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Token pred = truth_[static_cast<std::size_t>(i)];
    if (corruption_ > 0.0 && rng_.bernoulli(corruption_)) {
      const auto shift = static_cast<Token>(1 + rng_.below(static_cast<std::uint64_t>(resolution_ - 1)));
      pred = (pred + shift) % resolution_;
    }
    out.token_logits(i, pred) = 1e4f;
    const bool right = x[static_cast<std::size_t>(i)] == truth_[static_cast<std::size_t>(i)];
    out.correctness_logits(i) = static_cast<float>(right ? confidence_logit_ : -confidence_logit_);
  }
  return out;
}

std::size_t SamplerState::committed_count() const {
  return static_cast<std::size_t>(std::count(committed.begin(), committed.end(), char{1}));
}

SamplerState init_state(int n_faces, int max_faces, const Codebook& book) {
  require(n_faces >= 1, "init_state: n_faces must be >= 1");
  require(n_faces <= max_faces, "init_state: n_faces exceeds max_faces");
  SamplerState s;
  const auto n = static_cast<std::size_t>(n_faces) * kTokensPerFace;
  s.x.assign(n, book.mask());
  s.committed.assign(n, 0);
  return s;
}

namespace {

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

void hybrid_step(Denoiser& denoiser, SamplerState& state, const SamplerConfig& cfg, Rng& rng) {
  require(cfg.steps >= 1, "sampler: T must be >= 1");
  require(!state.final(cfg.steps), "hybrid_step: state is already final");
  require(state.committed.size() == state.x.size(), "hybrid_step: malformed state");
  const Codebook book{denoiser.resolution()};
  const int k = state.t_index;
  const double t = static_cast<double>(k) / cfg.steps;
  const double t_next = static_cast<double>(k + 1) / cfg.steps;
  const int t_int = static_cast<int>(std::lround(t * denoiser.train_steps()));
  const std::size_t n = state.x.size();

  auto draw = [&](const DenoiseOutput<float>& out, const TokenSequence& keep_from) {
    TokenSequence next(n);
    for (std::size_t i = 0; i < n; ++i)
      next[i] = state.committed[i] ? keep_from[i]
                                   : sample_token(out.token_logits.row(static_cast<Eigen::Index>(i)),
                                                  book.resolution, cfg.temperature, rng);
    return next;
  };

  const auto mask_out = denoiser.denoise(state.x, t_int, TaskFlag::MaskTask);
  const TokenSequence x_uniform = draw(mask_out, state.x);
  const auto uniform_out = denoiser.denoise(x_uniform, t_int, TaskFlag::UniformTask);
  const TokenSequence prediction = draw(uniform_out, state.x);

  StepTrace trace;
  trace.step = k;
  if (k + 1 == cfg.steps) {
    state.x = prediction;
    std::fill(state.committed.begin(), state.committed.end(), char{1});
    trace.mean_confidence = std::numeric_limits<double>::quiet_NaN();
  } else {
    const auto cls_out = denoiser.denoise(prediction, t_int, TaskFlag::UniformTask);
    std::vector<double> conf(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      conf[i] = sigmoid(static_cast<double>(cls_out.correctness_logits(static_cast<Eigen::Index>(i))));
      sum += conf[i];
    }
    trace.mean_confidence = n ? sum / static_cast<double>(n) : 0.0;
    std::vector<std::size_t> masked;
    for (std::size_t i = 0; i < n; ++i) {
      if (state.committed[i]) continue;
      if (conf[i] >= cfg.sigma) {
        state.committed[i] = 1;
        state.x[i] = prediction[i];
      } else {
        state.x[i] = book.mask();
        masked.push_back(i);
      }
    }
    if (cfg.keep_floor) {
      const double target = (1.0 - cfg.schedule.kappa(t_next)) * static_cast<double>(n);
      const auto floor_count = static_cast<std::size_t>(std::ceil(target - 1e-9));
      std::size_t have = state.committed_count();
      if (have < floor_count) {
        std::stable_sort(masked.begin(), masked.end(),
                         [&](std::size_t a, std::size_t b) { return conf[a] > conf[b]; });
        for (std::size_t j = 0; j < masked.size() && have < floor_count; ++j, ++have) {
          state.committed[masked[j]] = 1;
          state.x[masked[j]] = prediction[masked[j]];
        }
      }
    }
  }
  trace.committed = state.committed_count();
  state.history.push_back(trace);
  ++state.t_index;
}

FaceStrategy parse_face_strategy(const std::string& name) {
  if (name == "s1") return FaceStrategy::GroundTruth;
  if (name == "s2") return FaceStrategy::Biased;
  if (name == "s3") return FaceStrategy::Constant;
  throw ValidationError("unknown face strategy '" + name + "' (expected s1, s2 or s3)");
}

int FaceCountStrategy::resolve(std::uint64_t seed, int max_faces) const {
  int n = 0;
  switch (kind) {
    case FaceStrategy::GroundTruth: n = faces; break;
    case FaceStrategy::Biased: {
      require(width >= 0, "face strategy: width must be >= 0");
      Rng rng(derive_seed(seed, 0xface));
      n = std::max(1, faces + static_cast<int>(rng.between(-width, width)));
      break;
    }
    case FaceStrategy::Constant: n = constant; break;
  }
  require(n >= 1, "face strategy resolved to fewer than one face");
  require(n <= max_faces, "face strategy resolved to " + std::to_string(n) + " faces, above max_faces " +
                              std::to_string(max_faces));
  return n;
}

GenerateResult generate(Denoiser& denoiser, int n_faces, const SamplerConfig& cfg) {
  require(cfg.steps >= 1, "sampler: T must be >= 1");
  const Codebook book{denoiser.resolution()};
  SamplerState state = init_state(n_faces, denoiser.max_faces(), book);
  Rng rng(derive_seed(cfg.seed, 0x5a3e));
  GenerateResult res;
  res.n_faces = n_faces;
  while (!state.final(cfg.steps)) {
    hybrid_step(denoiser, state, cfg, rng);
    res.committed_per_step.push_back(state.committed_count());
  }
  res.tokens = std::move(state.x);
  res.trace = std::move(state.history);
  return res;
}

GenerateResult generate(Denoiser& denoiser, const FaceCountStrategy& strategy, const SamplerConfig& cfg) {
  return generate(denoiser, strategy.resolve(cfg.seed, denoiser.max_faces()), cfg);
}

std::string format_trace(const std::vector<StepTrace>& trace) {
  std::string out;
  char buf[96];
  for (const auto& s : trace) {
    std::snprintf(buf, sizeof buf, "%d %zu %.6f\n", s.step, s.committed, s.mean_confidence);
    out += buf;
  }
  return out;
}

}  // namespace tssr
