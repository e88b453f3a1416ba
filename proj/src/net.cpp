#include "tssr/net.hpp"

#include "tssr/error.hpp"
#include "tssr/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace tssr {

// --- config ------------------------------------------------------------------

RopeLayout NetConfig::rope_layout() const { return RopeLayout::from_split(head_dim(), rope_split); }

void NetConfig::validate() const {
  require(d_model > 0 && n_heads > 0 && d_model % n_heads == 0, "net: d_model must be a positive multiple of n_heads");
  for (int l : layers) require(l >= 0, "net: layer counts must be non-negative");
  require(resolution >= 2 && codebook_size() <= 65536, "net: resolution must be in [2, 65534]");
  require(max_faces >= 1, "net: max_faces must be >= 1");
  require(cond_points >= 1, "net: cond_points must be >= 1");
  require(train_steps >= 1, "net: train_steps must be >= 1");
  require(mlp_ratio >= 1, "net: mlp_ratio must be >= 1");
  require(cond_frequencies >= 0, "net: cond_frequencies must be >= 0");
  rope_layout();  // throws on an invalid split
}

namespace {

template <typename T, std::size_t N>
std::string join(const std::array<T, N>& a) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < N; ++i) os << (i ? "," : "") << a[i];
  return os.str();
}

template <typename T, std::size_t N>
std::array<T, N> split_list(const std::string& text, const std::string& key) {
  std::array<T, N> out{};
  std::istringstream is(text);
  std::string item;
  std::size_t i = 0;
  while (std::getline(is, item, ',')) {
    require(i < N, "net: too many values for " + key);
    std::istringstream one(item);
    require(static_cast<bool>(one >> out[i]), "net: bad value for " + key);
    ++i;
  }
  require(i == N, "net: expected " + std::to_string(N) + " values for " + key);
  return out;
}

int to_int(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const int x = std::stoi(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ValidationError("bad integer for " + key + ": '" + v + "'");
}

}  // namespace

std::map<std::string, std::string> NetConfig::to_map() const {
  return {{"d_model", std::to_string(d_model)},
          {"n_heads", std::to_string(n_heads)},
          {"layers", join(layers)},
          {"rope_split", join(rope_split)},
          {"resolution", std::to_string(resolution)},
          {"max_faces", std::to_string(max_faces)},
          {"cond_points", std::to_string(cond_points)},
          {"train_steps", std::to_string(train_steps)},
          {"mlp_ratio", std::to_string(mlp_ratio)},
          {"cond_frequencies", std::to_string(cond_frequencies)},
          {"absolute_positions", absolute_positions ? "true" : "false"}};
}

NetConfig NetConfig::from_map(const std::map<std::string, std::string>& kv) {
  NetConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "d_model") c.d_model = to_int(v, k);
    else if (k == "n_heads") c.n_heads = to_int(v, k);
    else if (k == "layers") c.layers = split_list<int, 5>(v, k);
    else if (k == "rope_split") c.rope_split = split_list<double, 3>(v, k);
    else if (k == "resolution") c.resolution = to_int(v, k);
    else if (k == "max_faces") c.max_faces = to_int(v, k);
    else if (k == "cond_points") c.cond_points = to_int(v, k);
    else if (k == "train_steps") c.train_steps = to_int(v, k);
    else if (k == "mlp_ratio") c.mlp_ratio = to_int(v, k);
    else if (k == "cond_frequencies") c.cond_frequencies = to_int(v, k);
    else if (k == "absolute_positions") {
      require(v == "true" || v == "false", "absolute_positions must be true or false");
      c.absolute_positions = v == "true";
    } else
      throw ValidationError("unknown net config key '" + k + "'");
  }
  c.validate();
  return c;
}

// --- condition features --------------------------------------------------------

PointCloud resample_cloud(const PointCloud& pc, int count) {
  require(pc.size() > 0, "condition: empty point cloud");
  require(pc.normals.rows() == pc.points.rows(), "condition: normals missing");
  PointCloud out;
  out.points.resize(count, 3);
  out.normals.resize(count, 3);
  const Eigen::Index n = pc.size();
  for (Eigen::Index i = 0; i < count; ++i) {
    const Eigen::Index src = n >= count ? (i * n) / count : i % n;
    out.points.row(i) = pc.points.row(src);
    out.normals.row(i) = pc.normals.row(src);
  }
  return out;
}

Eigen::MatrixXd condition_features(const PointCloud& pc, const NetConfig& cfg) {
  const PointCloud r = resample_cloud(pc, cfg.cond_points);
  const int nf = cfg.cond_frequencies;
  Eigen::MatrixXd f(cfg.cond_points, 6 + 6 * nf);
  f.leftCols(3) = r.points;
  f.middleCols(3, 3) = r.normals;
  for (int k = 0; k < nf; ++k) {
    const double w = std::numbers::pi * std::pow(2.0, k);
    f.middleCols(6 + 6 * k, 3) = (r.points * w).array().sin().matrix();
    f.middleCols(9 + 6 * k, 3) = (r.points * w).array().cos().matrix();
  }
  return f;
}

Eigen::MatrixXd absolute_position_features(std::size_t n) {
  constexpr int kFaceFreqs = 8;
  constexpr int kFractionFreqs = 4;
  Eigen::MatrixXd f(static_cast<Eigen::Index>(n), 2 * (kFaceFreqs + kFractionFreqs));
  const double faces = std::max<double>(1.0, static_cast<double>(n / kTokensPerFace));
  for (std::size_t p = 0; p < n; ++p) {
    const double face = static_cast<double>(p / kTokensPerFace);
    const auto r = static_cast<Eigen::Index>(p);
    for (int k = 0; k < kFaceFreqs; ++k) {
      const double a = face * std::pow(1000.0, -static_cast<double>(k) / kFaceFreqs);
      f(r, 2 * k) = std::sin(a);
      f(r, 2 * k + 1) = std::cos(a);
    }
    const double frac = (face + 0.5) / faces;
    for (int k = 0; k < kFractionFreqs; ++k) {
      const double a = std::numbers::pi * frac * std::pow(2.0, k);
      f(r, 2 * kFaceFreqs + 2 * k) = std::sin(a);
      f(r, 2 * kFaceFreqs + 2 * k + 1) = std::cos(a);
    }
  }
  return f;
}

namespace {

std::vector<PositionTuple> level_tuples(int level, std::size_t rows) {
  std::vector<PositionTuple> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const int i = static_cast<int>(r);
    if (level == 0) out[r] = {i / 9, (i % 9) / 3, i % 3};
    else if (level == 1) out[r] = {i / 3, i % 3, 0};
    else out[r] = {i, 0, 0};
  }
  return out;
}

}  // namespace

// --- model ---------------------------------------------------------------------

template <typename Scalar>
struct Model<Scalar>::Context {
  Tape& tape;
  std::vector<Var> vars;                 // lazily created parameter leaves
  std::array<Mat, 3> cos_tables, sin_tables;  // per level
  std::vector<char> have;

  Var p(const Model& m, int idx) {
    if (!have[static_cast<std::size_t>(idx)]) {
      vars[static_cast<std::size_t>(idx)] = tape.param(m.params_[static_cast<std::size_t>(idx)].value, idx);
      have[static_cast<std::size_t>(idx)] = 1;
    }
    return vars[static_cast<std::size_t>(idx)];
  }

  void set_levels(const RopeLayout& rope, std::size_t n) {
    for (int level = 0; level < 3; ++level) {
      std::size_t rows = n;
      for (int i = 0; i < level; ++i) rows /= 3;
      const auto tuples = level_tuples(level, rows);
      const Eigen::MatrixXd ang = rope.angles(tuples);
      cos_tables[static_cast<std::size_t>(level)] = ang.array().cos().matrix().template cast<Scalar>();
      sin_tables[static_cast<std::size_t>(level)] = ang.array().sin().matrix().template cast<Scalar>();
    }
  }
};

template <typename Scalar>
Model<Scalar>::Model(const NetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  rope_ = cfg_.rope_layout();
  const int d = cfg_.d_model;
  int total_layers = 2;
  for (int l : cfg_.layers) total_layers += l;
  const double out_scale = 1.0 / std::sqrt(2.0 * total_layers);

  tok_emb_ = add_param("tok_emb", cfg_.codebook_size(), d);
  slot_emb_ = add_param("slot_emb", kTokensPerFace, d);
  if (cfg_.absolute_positions)
    pos_proj_ = make_linear("pos_proj", static_cast<int>(absolute_position_features(0).cols()), d, 1.0);
  flag_emb_ = add_param("flag_emb", 2, d);
  time1_ = make_linear("time.1", d, d, 1.0);
  time2_ = make_linear("time.2", d, d, 1.0);
  const int cond_in = 6 + 6 * cfg_.cond_frequencies;
  cond1_ = make_linear("cond.1", cond_in, d, 1.0);
  cond2_ = make_linear("cond.2", d, d, 1.0);

  static const char* kLevelNames[5] = {"coord_enc", "vertex_enc", "face_trunk", "vertex_dec", "coord_dec"};
  for (int lv = 0; lv < 5; ++lv)
    for (int i = 0; i < cfg_.layers[static_cast<std::size_t>(lv)]; ++i)
      levels_[static_cast<std::size_t>(lv)].blocks.push_back(
          make_block(std::string(kLevelNames[lv]) + "." + std::to_string(i), lv == 2, out_scale));
  up_vertex_ = make_attention("up_vertex", true, out_scale);
  up_coord_ = make_attention("up_coord", true, out_scale);

  final_norm_ = make_norm("final_norm");
  tok_head_ = make_linear("head.token", d, cfg_.codebook_size(), 1.0);
  cls_head_ = make_linear("head.classifier", d, 1, 1.0);

  Rng rng(seed);
  for (auto& p : params_) {
    const bool is_bias = p.name.ends_with(".b") || p.name.ends_with(".bias");
    const bool is_gain = p.name.ends_with(".gain");
    if (is_gain) {
      p.value.setOnes();
    } else if (is_bias) {
      p.value.setZero();
    } else {
      // Larger token embedding and fan-in scaled token head: each of the V
      // rows is only updated when its token occurs, so a 0.02 start makes
      // even copying visible tokens slow to learn.
      const bool residual_out = p.name.ends_with("out.w") || p.name.ends_with("down.w");
      double std = 0.02 * (residual_out ? out_scale : 1.0);
      if (p.name == "tok_emb") std = 0.2;
      if (p.name == "head.token.w") std = 1.0 / std::sqrt(static_cast<double>(d));
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<Scalar>(std * rng.normal());
    }
  }
}

template <typename Scalar>
int Model<Scalar>::add_param(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  params_.push_back({name, Mat::Zero(rows, cols)});
  return static_cast<int>(params_.size()) - 1;
}

template <typename Scalar>
typename Model<Scalar>::Linear Model<Scalar>::make_linear(const std::string& name, int in, int out, double) {
  Linear l;
  l.w = add_param(name + ".w", in, out);
  l.b = add_param(name + ".b", 1, out);
  return l;
}

template <typename Scalar>
typename Model<Scalar>::Norm Model<Scalar>::make_norm(const std::string& name) {
  Norm n;
  n.gain = add_param(name + ".gain", 1, cfg_.d_model);
  n.bias = add_param(name + ".bias", 1, cfg_.d_model);
  return n;
}

template <typename Scalar>
typename Model<Scalar>::Attention Model<Scalar>::make_attention(const std::string& name, bool cross, double) {
  const int d = cfg_.d_model;
  Attention a;
  a.norm_q = make_norm(name + ".norm_q");
  if (cross) a.norm_kv = make_norm(name + ".norm_kv");
  a.wq = add_param(name + ".wq", d, d);
  a.wk = add_param(name + ".wk", d, d);
  a.wv = add_param(name + ".wv", d, d);
  a.out = make_linear(name + ".out", d, d, 1.0);
  return a;
}

template <typename Scalar>
typename Model<Scalar>::Block Model<Scalar>::make_block(const std::string& name, bool cross, double out_scale) {
  Block b;
  b.self = make_attention(name + ".self", false, out_scale);
  b.has_cross = cross;
  if (cross) b.cross = make_attention(name + ".cross", true, out_scale);
  b.norm_mlp = make_norm(name + ".norm_mlp");
  b.up = make_linear(name + ".up", cfg_.d_model, cfg_.d_model * cfg_.mlp_ratio, 1.0);
  b.down = make_linear(name + ".down", cfg_.d_model * cfg_.mlp_ratio, cfg_.d_model, 1.0);
  return b;
}

template <typename Scalar>
std::size_t Model<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

template <typename Scalar>
int Model<Scalar>::find_parameter(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return static_cast<int>(i);
  return -1;
}

template <typename Scalar>
Gradients<Scalar> Model<Scalar>::zero_gradients() const {
  Gradients<Scalar> g;
  g.reserve(params_.size());
  for (const auto& p : params_) g.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
  return g;
}

template <typename Scalar>
typename Model<Scalar>::Var Model<Scalar>::linear(Context& ctx, Var x, const Linear& l) const {
  return ctx.tape.linear(x, ctx.p(*this, l.w), ctx.p(*this, l.b));
}

template <typename Scalar>
typename Model<Scalar>::Var Model<Scalar>::norm(Context& ctx, Var x, const Norm& n) const {
  return ctx.tape.layer_norm(x, ctx.p(*this, n.gain), ctx.p(*this, n.bias));
}

template <typename Scalar>
typename Model<Scalar>::Var Model<Scalar>::attend(Context& ctx, Var x, Var kv_source, const Attention& a,
                                                  int level_q, int level_kv) const {
  auto& t = ctx.tape;
  const Var xq = norm(ctx, x, a.norm_q);
  const Var xkv = a.norm_kv.gain >= 0 ? norm(ctx, kv_source, a.norm_kv) : xq;
  Var q = t.project(xq, ctx.p(*this, a.wq));
  Var k = t.project(xkv, ctx.p(*this, a.wk));
  const Var v = t.project(xkv, ctx.p(*this, a.wv));
  if (level_q >= 0) {
    const auto lq = static_cast<std::size_t>(level_q);
    const auto lk = static_cast<std::size_t>(level_kv);
    q = t.rope(q, ctx.cos_tables[lq], ctx.sin_tables[lq], rope_.head_dim);
    k = t.rope(k, ctx.cos_tables[lk], ctx.sin_tables[lk], rope_.head_dim);
  }
  return linear(ctx, t.attention(q, k, v, cfg_.n_heads), a.out);
}

template <typename Scalar>
typename Model<Scalar>::Var Model<Scalar>::block(Context& ctx, Var x, const Block& b, int level, Var cond) const {
  auto& t = ctx.tape;
  x = t.add(x, attend(ctx, x, x, b.self, level, level));
  if (b.has_cross) x = t.add(x, attend(ctx, x, cond, b.cross, -1, -1));
  const Var hidden = t.gelu(linear(ctx, norm(ctx, x, b.norm_mlp), b.up));
  return t.add(x, linear(ctx, hidden, b.down));
}

template <typename Scalar>
typename Model<Scalar>::Var Model<Scalar>::condition_embedding(Context& ctx, const Eigen::MatrixXd& features) const {
  require(features.rows() == cfg_.cond_points && features.cols() == 6 + 6 * cfg_.cond_frequencies,
          "forward: condition features have the wrong shape");
  auto& t = ctx.tape;
  const Var f = t.constant(features.cast<Scalar>());
  return linear(ctx, t.gelu(linear(ctx, f, cond1_)), cond2_);
}

template <typename Scalar>
typename Model<Scalar>::Var Model<Scalar>::conditioning_vector(Context& ctx, int t_int, TaskFlag flag) const {
  require(t_int >= 0 && t_int <= cfg_.train_steps, "forward: timestep outside [0, T_train]");
  auto& t = ctx.tape;
  const int half = cfg_.d_model / 2;
  Mat feat = Mat::Zero(1, cfg_.d_model);
  for (int i = 0; i < half; ++i) {
    const double a = t_int * std::pow(10000.0, -static_cast<double>(i) / half);
    feat(0, i) = static_cast<Scalar>(std::sin(a));
    feat(0, half + i) = static_cast<Scalar>(std::cos(a));
  }
  const Var time = linear(ctx, t.silu(linear(ctx, t.constant(std::move(feat)), time1_)), time2_);
  const int id = flag == TaskFlag::MaskTask ? 0 : 1;
  const Var f = t.embed(ctx.p(*this, flag_emb_), std::span<const int>(&id, 1));
  return t.add(time, f);
}

template <typename Scalar>
typename Model<Scalar>::Var Model<Scalar>::input_embedding(Context& ctx, const TokenSequence& x, std::size_t n) const {
  auto& t = ctx.tape;
  std::vector<int> ids(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n));
  std::vector<int> slots(n);
  for (std::size_t i = 0; i < n; ++i) slots[i] = static_cast<int>(i % kTokensPerFace);
  Var h = t.add(t.embed(ctx.p(*this, tok_emb_), ids), t.embed(ctx.p(*this, slot_emb_), slots));
  if (cfg_.absolute_positions)
    h = t.add(h, linear(ctx, t.constant(absolute_position_features(n).cast<Scalar>()), pos_proj_));
  return h;
}

template <typename Scalar>
typename Model<Scalar>::Pass Model<Scalar>::forward_pass(const TokenSequence& x, int t_int,
                                                        const Eigen::MatrixXd& cond, TaskFlag flag) const {
  const Codebook book{cfg_.resolution};
  const std::size_t n = unpadded_length(x, book);
  require(n % kTokensPerFace == 0, "forward: unpadded length is not a multiple of 9");
  require(n <= static_cast<std::size_t>(kTokensPerFace) * static_cast<std::size_t>(cfg_.max_faces),
          "forward: sequence exceeds max_faces");
  for (std::size_t i = 0; i < n; ++i)
    require(x[i] >= 0 && x[i] < cfg_.codebook_size(), "forward: token outside the codebook");

  Pass pass;
  pass.tape = std::make_unique<Tape>();
  pass.length = n;
  const auto S = static_cast<Eigen::Index>(x.size());
  pass.output.token_logits = Mat::Zero(S, cfg_.codebook_size());
  pass.output.correctness_logits = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(S);
  if (n == 0) return pass;

  Context ctx{*pass.tape, std::vector<Var>(params_.size()), {}, {}, std::vector<char>(params_.size(), 0)};
  ctx.set_levels(rope_, n);
  auto& t = ctx.tape;

  const Var c = conditioning_vector(ctx, t_int, flag);
  const Var cond_emb = condition_embedding(ctx, cond);

  Var h = t.add_row(input_embedding(ctx, x, n), c);
  for (const auto& b : levels_[0].blocks) h = block(ctx, h, b, 0, cond_emb);
  const Var enc_coord = h;

  h = t.add_row(t.pool(h, 3), c);
  for (const auto& b : levels_[1].blocks) h = block(ctx, h, b, 1, cond_emb);
  const Var enc_vertex = h;

  h = t.add_row(t.pool(h, 3), c);
  for (const auto& b : levels_[2].blocks) h = block(ctx, h, b, 2, cond_emb);

  h = t.add_row(t.add(t.repeat(h, 3), enc_vertex), c);
  h = t.add(h, attend(ctx, h, enc_vertex, up_vertex_, 1, 1));
  for (const auto& b : levels_[3].blocks) h = block(ctx, h, b, 1, cond_emb);

  h = t.add_row(t.add(t.repeat(h, 3), enc_coord), c);
  h = t.add(h, attend(ctx, h, enc_coord, up_coord_, 0, 0));
  for (const auto& b : levels_[4].blocks) h = block(ctx, h, b, 0, cond_emb);

  const Var z = norm(ctx, h, final_norm_);
  pass.token_logits = linear(ctx, z, tok_head_);
  pass.correctness = linear(ctx, z, cls_head_);
  const auto rows = static_cast<Eigen::Index>(n);
  pass.output.token_logits.topRows(rows) = t.value(pass.token_logits);
  pass.output.correctness_logits.head(rows) = t.value(pass.correctness).col(0);
  return pass;
}

template <typename Scalar>
void Model<Scalar>::backward(Pass& pass, const Mat& d_token_logits,
                             const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& d_correctness,
                             Gradients<Scalar>& grads) const {
  if (pass.length == 0) return;
  const auto rows = static_cast<Eigen::Index>(pass.length);
  auto& t = *pass.tape;
  if (d_token_logits.size() > 0) t.seed(pass.token_logits, d_token_logits.topRows(rows));
  if (d_correctness.size() > 0) t.seed(pass.correctness, d_correctness.head(rows));
  t.backward();
  t.for_each_param_grad([&](int idx, const Mat& g) { grads[static_cast<std::size_t>(idx)] += g; });
}

template <typename Scalar>
typename Model<Scalar>::Mat Model<Scalar>::encode_condition(const PointCloud& pc) const {
  Tape tape;
  Context ctx{tape, std::vector<Var>(params_.size()), {}, {}, std::vector<char>(params_.size(), 0)};
  return tape.value(condition_embedding(ctx, condition_features(pc, cfg_)));
}

template <typename Scalar>
typename Model<Scalar>::Mat Model<Scalar>::first_layer_scores(const TokenSequence& x, int t_int, TaskFlag flag,
                                                              int head) const {
  require(!levels_[0].blocks.empty(), "first_layer_scores: no coordinate-level encoder layer");
  require(head >= 0 && head < cfg_.n_heads, "first_layer_scores: head out of range");
  const std::size_t n = unpadded_length(x, Codebook{cfg_.resolution});
  require(n > 0 && n % kTokensPerFace == 0, "first_layer_scores: bad length");
  Tape tape;
  Context ctx{tape, std::vector<Var>(params_.size()), {}, {}, std::vector<char>(params_.size(), 0)};
  ctx.set_levels(rope_, n);
  const Var h = tape.add_row(input_embedding(ctx, x, n), conditioning_vector(ctx, t_int, flag));
  const auto& a = levels_[0].blocks.front().self;
  const Var xq = norm(ctx, h, a.norm_q);
  const Var q = tape.rope(tape.project(xq, ctx.p(*this, a.wq)), ctx.cos_tables[0], ctx.sin_tables[0], rope_.head_dim);
  const Var k = tape.rope(tape.project(xq, ctx.p(*this, a.wk)), ctx.cos_tables[0], ctx.sin_tables[0], rope_.head_dim);
  const int dh = rope_.head_dim;
  return (tape.value(q).middleCols(head * dh, dh) * tape.value(k).middleCols(head * dh, dh).transpose()) /
         std::sqrt(static_cast<Scalar>(dh));
}

template class Model<float>;
template class Model<double>;

}  // namespace tssr
