#pragma once

#include "tssr/checkpoint.hpp"
#include "tssr/codec.hpp"
#include "tssr/geometry.hpp"
#include "tssr/net.hpp"
#include "tssr/objectives.hpp"
#include "tssr/rng.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tssr {

// ---- corpus ---------------------------------------------------------------

/// One corpus mesh in canonical quantized form with its derived artifacts.
struct CorpusEntry {
  SyntheticSpec spec;
  QuantizedMesh mesh;
  TokenSequence tokens;
  VertexGroups groups;
};

CorpusEntry make_entry(const SyntheticSpec& spec, int resolution = kDefaultResolution);

/// Directory layout: manifest.txt plus mesh_NNNNN.{obj,tok,grp} per entry.
/// The OBJ holds the dequantized canonical mesh.
void write_corpus(const std::string& dir, const std::vector<SyntheticSpec>& specs,
                  int resolution = kDefaultResolution);
std::string corpus_file(const std::string& dir, std::size_t index, const std::string& ext);

/// One training item: clean tokens, shared-vertex groups and condition
/// features sampled from the mesh surface.
struct TrainingExample {
  TokenSequence x1;
  VertexGroups groups;
  Eigen::MatrixXd cond;
  int faces = 0;
};

/// Reads the token dumps, group indexes and OBJs of a corpus directory.
/// Only meshes with face count in [min_faces, max_faces] are kept.
std::vector<TrainingExample> load_training_set(const std::string& dir, const NetConfig& net,
                                               std::uint64_t seed, int min_faces = 1,
                                               int max_faces = 1 << 30);

TrainingExample make_example(const QuantizedMesh& canonical, const NetConfig& net, std::uint64_t seed);

// ---- configuration ----------------------------------------------------------

struct TrainConfig {
  NetConfig net;
  int steps = 1000;
  int batch_size = 4;
  double lr_peak = 1e-4;
  int warmup_steps = 100;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double grad_clip = 1.0;          // global L2 norm; 0 disables
  double temperature = 1.0;        // draws for x_{t,uniform} and x_{1|t,uniform}
  bool ce_corrupted_only = false;  // CE over corrupted positions only
  LossWeights weights;
  std::uint64_t seed = 0;
  std::string corpus;
  std::string out;                 // checkpoint path
  std::string metrics;             // metrics log path (empty: none)
  int checkpoint_every = 0;        // 0: only at the end
  int min_faces = 1;               // curriculum window
  int max_faces = 1 << 30;
  std::string resume;              // checkpoint to continue from

  void validate() const;
  std::map<std::string, std::string> to_map() const;
};

/// lr_peak * step / warmup during warm-up, lr_peak afterwards.
double lr_schedule(const TrainConfig& cfg, int step);

// ---- optimizer ----------------------------------------------------------------

/// AdamW with decoupled weight decay: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
class AdamW {
 public:
  AdamW() = default;
  AdamW(const Model<float>& model, double beta1, double beta2, double eps, double weight_decay);

  void step(Model<float>& model, const Gradients<float>& grads, double lr);

  std::int64_t steps_taken() const { return t_; }
  const Gradients<float>& first_moments() const { return m_; }
  const Gradients<float>& second_moments() const { return v_; }

  void store(Checkpoint& ckpt, const Model<float>& model) const;
  void restore(const Checkpoint& ckpt, const Model<float>& model);

 private:
  double beta1_ = 0.9, beta2_ = 0.95, eps_ = 1e-8, wd_ = 0.0;
  std::int64_t t_ = 0;
  Gradients<float> m_, v_;
};

// ---- training step --------------------------------------------------------------

struct Batch {
  std::vector<const TrainingExample*> items;
  std::size_t length = 0;  // aligned length (max in batch)

  static Batch of(std::vector<const TrainingExample*> items);
};

/// PAD-extends x to `length`.
TokenSequence pad_to(const TokenSequence& x, std::size_t length, const Codebook& book);

struct StepResult {
  LossBreakdown losses;
  Gradients<float> grads;  // gradient of the weighted total, before clipping
  double grad_norm = 0.0;
};

/// Losses and gradients of one decoupled-training step without touching the
/// parameters. All draws come from `rng`, in item order.
template <typename Scalar>
struct LossAndGrad {
  LossBreakdown losses;
  Gradients<Scalar> grads;
};

template <typename Scalar>
LossAndGrad<Scalar> compute_step(const Model<Scalar>& model, const Batch& batch, Rng& rng, const TrainConfig& cfg);

/// compute_step followed by one AdamW update at learning rate `lr`.
StepResult train_step(Model<float>& model, AdamW& opt, const Batch& batch, Rng& rng, const TrainConfig& cfg,
                      double lr);

// ---- fit --------------------------------------------------------------------------

struct MetricsRow {
  int step = 0;
  double lr = 0.0;
  LossBreakdown losses;
};

std::string format_metrics_row(const MetricsRow& row);
/// Parses a metrics log; throws ValidationError on malformed lines.
std::map<int, MetricsRow> parse_metrics_log(const std::string& text);

/// Item indices for a global step: a seeded permutation per epoch,
/// consumed batch_size at a time across epoch boundaries.
std::vector<std::size_t> batch_indices(std::size_t corpus_size, int batch_size, int step, std::uint64_t seed);

struct FitResult {
  Checkpoint checkpoint;
  std::vector<MetricsRow> rows;
};

/// Training-state checkpoint: model, optimizer moments and the next step.
Checkpoint training_checkpoint(const Model<float>& model, const AdamW& opt, const TrainConfig& cfg, int next_step);

FitResult fit(const TrainConfig& cfg);
FitResult fit(const TrainConfig& cfg, const std::vector<TrainingExample>& data);

}  // namespace tssr
