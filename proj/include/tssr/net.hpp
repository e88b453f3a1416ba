#pragma once

#include "tssr/autograd.hpp"
#include "tssr/codec.hpp"
#include "tssr/geometry.hpp"
#include "tssr/rope.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace tssr {

enum class TaskFlag { MaskTask = 0, UniformTask = 1 };

/// Shape of the hourglass denoiser.
struct NetConfig {
  int d_model = 128;
  int n_heads = 4;
  /// coord encoder, vertex encoder, face trunk, vertex decoder, coord decoder
  std::array<int, 5> layers{2, 2, 4, 2, 2};
  std::array<double, 3> rope_split{0.5, 0.25, 0.25};
  int resolution = kDefaultResolution;  // V; the codebook is V + 2
  int max_faces = 128;
  int cond_points = 256;
  int train_steps = 1000;  // T_train
  int mlp_ratio = 4;
  int cond_frequencies = 6;
  /// Learned absolute position features added to the input embedding. The
  /// rotary encoding alone only sees relative offsets, which cannot tell
  /// positions of an all-MASK sequence apart.
  bool absolute_positions = true;

  int codebook_size() const { return resolution + 2; }
  int head_dim() const { return d_model / n_heads; }
  RopeLayout rope_layout() const;
  void validate() const;

  std::map<std::string, std::string> to_map() const;
  static NetConfig from_map(const std::map<std::string, std::string>& kv);
  bool operator==(const NetConfig&) const = default;
};

template <typename Scalar>
struct DenoiseOutput {
  ad::Matrix<Scalar> token_logits;                         // S x B
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> correctness_logits;  // S
};

template <typename Scalar>
struct Parameter {
  std::string name;
  ad::Matrix<Scalar> value;
};

/// One gradient matrix per parameter, same order as Model::parameters().
template <typename Scalar>
using Gradients = std::vector<ad::Matrix<Scalar>>;

/// Raw per-point input features for the condition encoder
/// (cond_points x feature_width).
Eigen::MatrixXd condition_features(const PointCloud& pc, const NetConfig& cfg);

/// Resamples to exactly `count` points: evenly strided if larger, cycled if
/// smaller.
PointCloud resample_cloud(const PointCloud& pc, int count);

/// The unified denoiser: one set of weights serves the mask task, the
/// uniform task and the correctness classifier.
template <typename Scalar>
class Model {
 public:
  using Mat = ad::Matrix<Scalar>;
  using Tape = ad::Tape<Scalar>;
  using Var = typename Tape::Var;

  Model(const NetConfig& cfg, std::uint64_t seed);

  const NetConfig& config() const { return cfg_; }
  std::vector<Parameter<Scalar>>& parameters() { return params_; }
  const std::vector<Parameter<Scalar>>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  int find_parameter(const std::string& name) const;
  Gradients<Scalar> zero_gradients() const;

  /// A recorded forward pass; keeps the tape for backward.
  struct Pass {
    std::unique_ptr<Tape> tape;
    Var token_logits;
    Var correctness;
    std::size_t length = 0;  // unpadded length; rows beyond it are PAD
    DenoiseOutput<Scalar> output;
  };

  /// `cond` is the output of condition_features. Padding rows of the output
  /// are zero.
  Pass forward_pass(const TokenSequence& x, int t_int, const Eigen::MatrixXd& cond, TaskFlag flag) const;

  DenoiseOutput<Scalar> forward(const TokenSequence& x, int t_int, const Eigen::MatrixXd& cond,
                                TaskFlag flag) const {
    return forward_pass(x, t_int, cond, flag).output;
  }

  /// Backpropagates d(loss)/d(token_logits) and d(loss)/d(correctness_logits)
  /// (either may be empty) and adds the parameter gradients into `grads`.
  void backward(Pass& pass, const Mat& d_token_logits, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& d_correctness,
                Gradients<Scalar>& grads) const;

  /// Condition embedding (cond_points x d_model).
  Mat encode_condition(const PointCloud& pc) const;

  /// Pre-softmax attention scores of one head in the first coordinate-level
  /// self-attention layer.
  Mat first_layer_scores(const TokenSequence& x, int t_int, TaskFlag flag, int head) const;

 private:
  struct Linear {
    int w = -1, b = -1;
  };
  struct Norm {
    int gain = -1, bias = -1;
  };
  struct Attention {
    Norm norm_q, norm_kv;
    int wq = -1, wk = -1, wv = -1;
    Linear out;
  };
  struct Block {
    Attention self;
    bool has_cross = false;
    Attention cross;
    Norm norm_mlp;
    Linear up, down;
  };
  struct Level {
    std::vector<Block> blocks;
  };

  struct Context;  // per-pass state (tape, cached rope tables)

  int add_param(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Linear make_linear(const std::string& name, int in, int out, double init_scale);
  Norm make_norm(const std::string& name);
  Attention make_attention(const std::string& name, bool cross, double out_scale);
  Block make_block(const std::string& name, bool cross, double out_scale);

  Var linear(Context& ctx, Var x, const Linear& l) const;
  Var norm(Context& ctx, Var x, const Norm& n) const;
  Var attend(Context& ctx, Var x, Var kv_source, const Attention& a, int level_q, int level_kv) const;
  Var block(Context& ctx, Var x, const Block& b, int level, Var cond) const;
  Var condition_embedding(Context& ctx, const Eigen::MatrixXd& features) const;
  Var conditioning_vector(Context& ctx, int t_int, TaskFlag flag) const;
  Var input_embedding(Context& ctx, const TokenSequence& x, std::size_t n) const;

  NetConfig cfg_;
  RopeLayout rope_;
  std::vector<Parameter<Scalar>> params_;

  int tok_emb_ = -1, slot_emb_ = -1, flag_emb_ = -1;
  Linear pos_proj_, time1_, time2_, cond1_, cond2_, tok_head_, cls_head_;
  Norm final_norm_;
  std::array<Level, 5> levels_;
  Attention up_vertex_, up_coord_;  // cross-attention bridges on the way up
};

/// Positional features for the absolute embedding (n x width).
Eigen::MatrixXd absolute_position_features(std::size_t n);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace tssr
