#include "tssr/trainer.hpp"

#include "tssr/corruption.hpp"
#include "tssr/error.hpp"
#include "tssr/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace tssr {

// ---- corpus ---------------------------------------------------------------

CorpusEntry make_entry(const SyntheticSpec& spec, int resolution) {
  CorpusEntry e;
  e.spec = spec;
  e.mesh = canonical_order(quantize(normalize_mesh(gen_synthetic(spec)), resolution));
  e.tokens = tokenize(e.mesh);
  e.groups = shared_vertex_groups(e.mesh);
  return e;
}

std::string corpus_file(const std::string& dir, std::size_t index, const std::string& ext) {
  char name[32];
  std::snprintf(name, sizeof name, "mesh_%05zu.%s", index, ext.c_str());
  return (std::filesystem::path(dir) / name).string();
}

void write_corpus(const std::string& dir, const std::vector<SyntheticSpec>& specs, int resolution) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw RuntimeFailure("cannot create corpus directory '" + dir + "': " + ec.message());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const CorpusEntry e = make_entry(specs[i], resolution);
    write_file_atomic(corpus_file(dir, i, "obj"), write_obj(dequantize(e.mesh)));
    write_file_atomic(corpus_file(dir, i, "tok"), encode_tokens(e.tokens));
    write_file_atomic(corpus_file(dir, i, "grp"), encode_groups(e.groups));
  }
  std::ostringstream manifest;
  manifest << "# resolution " << resolution << "\n" << write_manifest(specs);
  write_file_atomic((std::filesystem::path(dir) / "manifest.txt").string(), manifest.str());
}

TrainingExample make_example(const QuantizedMesh& canonical, const NetConfig& net, std::uint64_t seed) {
  require(canonical.resolution == net.resolution, "training mesh resolution differs from the model's");
  TrainingExample ex;
  ex.x1 = tokenize(canonical);
  ex.groups = shared_vertex_groups(canonical);
  ex.faces = static_cast<int>(canonical.faces.rows());
  const PointCloud pc = sample_surface(dequantize(canonical), static_cast<std::size_t>(net.cond_points), seed);
  ex.cond = condition_features(pc, net);
  return ex;
}

std::vector<TrainingExample> load_training_set(const std::string& dir, const NetConfig& net, std::uint64_t seed,
                                               int min_faces, int max_faces) {
  const auto manifest_path = (std::filesystem::path(dir) / "manifest.txt").string();
  if (!std::filesystem::exists(manifest_path)) throw ValidationError("corpus manifest not found: " + manifest_path);
  const auto specs = read_manifest(read_file_bytes(manifest_path));
  std::vector<TrainingExample> out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const TokenSequence tokens = decode_tokens(read_file_bytes(corpus_file(dir, i, "tok")));
    const auto decoded = detokenize(tokens, net.resolution);
    const QuantizedMesh q = canonical_order(decoded.mesh);
    const int faces = static_cast<int>(q.faces.rows());
    if (faces < min_faces || faces > max_faces || faces > net.max_faces) continue;
    TrainingExample ex = make_example(q, net, derive_seed(seed, i));
    const VertexGroups stored = decode_groups(read_file_bytes(corpus_file(dir, i, "grp")));
    if (ex.x1 != tokens || stored.groups != ex.groups.groups)
      throw ValidationError("corpus entry " + std::to_string(i) + " is not in canonical form");
    out.push_back(std::move(ex));
  }
  return out;
}

// ---- configuration ----------------------------------------------------------

void TrainConfig::validate() const {
  net.validate();
  require(steps >= 0, "train: steps must be >= 0");
  require(batch_size >= 1, "train: batch_size must be >= 1");
  require(lr_peak > 0.0, "train: lr_peak must be > 0");
  require(warmup_steps >= 1, "train: warmup_steps must be >= 1");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "train: betas must lie in [0, 1)");
  require(eps > 0.0, "train: eps must be > 0");
  require(weight_decay >= 0.0, "train: weight_decay must be >= 0");
  require(grad_clip >= 0.0, "train: grad_clip must be >= 0");
  require(temperature >= 0.0, "train: temperature must be >= 0");
  require(checkpoint_every >= 0, "train: checkpoint_every must be >= 0");
  require(min_faces <= max_faces, "train: min_faces exceeds max_faces");
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  return {{"steps", std::to_string(steps)},
          {"batch_size", std::to_string(batch_size)},
          {"lr_peak", num(lr_peak)},
          {"warmup_steps", std::to_string(warmup_steps)},
          {"beta1", num(beta1)},
          {"beta2", num(beta2)},
          {"eps", num(eps)},
          {"weight_decay", num(weight_decay)},
          {"grad_clip", num(grad_clip)},
          {"temperature", num(temperature)},
          {"ce_corrupted_only", ce_corrupted_only ? "1" : "0"},
          {"w_mask", num(weights.mask)},
          {"w_uniform", num(weights.uniform)},
          {"w_phi", num(weights.phi)},
          {"w_connection", num(weights.connection)},
          {"seed", std::to_string(seed)},
          {"min_faces", std::to_string(min_faces)},
          {"max_faces", std::to_string(max_faces)}};
}

double lr_schedule(const TrainConfig& cfg, int step) {
  require(step >= 0, "lr_schedule: step must be >= 0");
  if (step < cfg.warmup_steps) return cfg.lr_peak * static_cast<double>(step) / cfg.warmup_steps;
  return cfg.lr_peak;
}

// ---- optimizer ----------------------------------------------------------------

AdamW::AdamW(const Model<float>& model, double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay), m_(model.zero_gradients()),
      v_(model.zero_gradients()) {}

void AdamW::step(Model<float>& model, const Gradients<float>& grads, double lr) {
  auto& params = model.parameters();
  require(grads.size() == params.size() && m_.size() == params.size(), "adamw: gradient count mismatch");
  ++t_;
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float c1 = static_cast<float>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
  const float c2 = static_cast<float>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
  const float lr_f = static_cast<float>(lr), eps = static_cast<float>(eps_), wd = static_cast<float>(wd_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = grads[i].array();
    m_[i].array() = b1 * m_[i].array() + (1.0f - b1) * g;
    v_[i].array() = b2 * v_[i].array() + (1.0f - b2) * g.square();
    if (lr_f == 0.0f) continue;
    auto p = params[i].value.array();
    p -= lr_f * ((m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps) + wd * p);
  }
}

void AdamW::store(Checkpoint& ckpt, const Model<float>& model) const {
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ckpt.tensors.push_back(to_block("adam.m/" + params[i].name, m_[i]));
    ckpt.tensors.push_back(to_block("adam.v/" + params[i].name, v_[i]));
  }
  ckpt.meta["adam.t"] = std::to_string(t_);
}

void AdamW::restore(const Checkpoint& ckpt, const Model<float>& model) {
  const auto& params = model.parameters();
  m_ = model.zero_gradients();
  v_ = model.zero_gradients();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const TensorBlock* m = ckpt.find("adam.m/" + params[i].name);
    const TensorBlock* v = ckpt.find("adam.v/" + params[i].name);
    require(m && v, "checkpoint: missing optimizer state for '" + params[i].name + "'");
    m_[i] = from_block<float>(*m);
    v_[i] = from_block<float>(*v);
    require(m_[i].rows() == params[i].value.rows() && m_[i].cols() == params[i].value.cols() &&
                v_[i].rows() == m_[i].rows() && v_[i].cols() == m_[i].cols(),
            "checkpoint: optimizer state shape mismatch for '" + params[i].name + "'");
  }
  const auto it = ckpt.meta.find("adam.t");
  require(it != ckpt.meta.end(), "checkpoint: missing adam.t");
  t_ = std::stoll(it->second);
}

// ---- training step --------------------------------------------------------------

Batch Batch::of(std::vector<const TrainingExample*> items) {
  require(!items.empty(), "batch: no items");
  Batch b;
  b.items = std::move(items);
  for (const auto* it : b.items) b.length = std::max(b.length, it->x1.size());
  return b;
}

TokenSequence pad_to(const TokenSequence& x, std::size_t length, const Codebook& book) {
  require(x.size() <= length, "pad_to: sequence longer than target length");
  TokenSequence out = x;
  out.resize(length, book.pad());
  return out;
}

template <typename Scalar>
LossAndGrad<Scalar> compute_step(const Model<Scalar>& model, const Batch& batch, Rng& rng, const TrainConfig& cfg) {
  const NetConfig& net = model.config();
  const Codebook book{net.resolution};
  const NoiseSchedule schedule{NoiseSchedule::Kind::Linear, net.train_steps};
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Draw {
    int t_int = 0;
    TokenSequence x1;
    TokenSequence x_mask;
    std::vector<char> include;
  };
  std::vector<Draw> draws(batch.items.size());
  std::size_t ce_count = 0, cls_count = 0, conn_count = 0;
  for (std::size_t b = 0; b < batch.items.size(); ++b) {
    const TrainingExample& ex = *batch.items[b];
    Draw& d = draws[b];
    d.t_int = static_cast<int>(rng.between(0, net.train_steps));
    d.x1 = pad_to(ex.x1, batch.length, book);
    d.x_mask = corrupt(d.x1, schedule.time_of(d.t_int), NoiseKind::Mask, book, rng, schedule).x_t;
    d.include.assign(d.x1.size(), 0);
    for (std::size_t i = 0; i < ex.x1.size(); ++i)
      d.include[i] = cfg.ce_corrupted_only ? static_cast<char>(d.x_mask[i] == book.mask()) : char{1};
    ce_count += static_cast<std::size_t>(std::count(d.include.begin(), d.include.end(), char{1}));
    cls_count += ex.x1.size();
    conn_count += ex.groups.groups.size();
  }

  LossAndGrad<Scalar> out;
  out.grads = model.zero_gradients();
  double s_mask = 0, s_uniform = 0, s_phi = 0, s_conn = 0;
  const auto scale = [](double w, std::size_t n) { return n ? static_cast<Scalar>(w / static_cast<double>(n)) : Scalar(0); };
  const Scalar k_mask = scale(cfg.weights.mask, ce_count);
  const Scalar k_uniform = scale(cfg.weights.uniform, ce_count);
  const Scalar k_phi = scale(cfg.weights.phi, cls_count);
  const Scalar k_conn = scale(cfg.weights.connection, conn_count);

  for (std::size_t b = 0; b < batch.items.size(); ++b) {
    const TrainingExample& ex = *batch.items[b];
    const Draw& d = draws[b];
    const std::size_t n = ex.x1.size();

    auto mask_pass = model.forward_pass(d.x_mask, d.t_int, ex.cond, TaskFlag::MaskTask);
    auto ce_m = ce_clean_terms(mask_pass.output.token_logits, d.x1, book, &d.include);
    s_mask += ce_m.sum;
    model.backward(mask_pass, ce_m.grad * k_mask, Vec(), out.grads);

    TokenSequence x_uniform = d.x_mask;
    for (std::size_t i = 0; i < n; ++i)
      if (d.x_mask[i] == book.mask())
        x_uniform[i] = sample_token(mask_pass.output.token_logits.row(static_cast<Eigen::Index>(i)), net.resolution,
                                    cfg.temperature, rng);
    mask_pass = {};

    auto uniform_pass = model.forward_pass(x_uniform, d.t_int, ex.cond, TaskFlag::UniformTask);
    auto ce_u = ce_clean_terms(uniform_pass.output.token_logits, d.x1, book, &d.include);
    auto conn = connection_terms(uniform_pass.output.token_logits, ex.groups);
    s_uniform += ce_u.sum;
    s_conn += conn.sum;
    ad::Matrix<Scalar> d_uniform = ce_u.grad * k_uniform;
    if (k_conn != Scalar(0)) d_uniform += conn.grad * k_conn;
    model.backward(uniform_pass, d_uniform, Vec(), out.grads);

    TokenSequence x_pred = x_uniform;
    for (std::size_t i = 0; i < n; ++i)
      if (d.x_mask[i] == book.mask())
        x_pred[i] = sample_token(uniform_pass.output.token_logits.row(static_cast<Eigen::Index>(i)), net.resolution,
                                 cfg.temperature, rng);
    uniform_pass = {};

    auto cls_pass = model.forward_pass(x_pred, d.t_int, ex.cond, TaskFlag::UniformTask);
    auto cls = classifier_terms(cls_pass.output.correctness_logits, x_pred, d.x1, book);
    s_phi += cls.sum;
    model.backward(cls_pass, ad::Matrix<Scalar>(), Vec(cls.grad.col(0) * k_phi), out.grads);
  }

  const auto mean = [](double s, std::size_t n) { return n ? s / static_cast<double>(n) : 0.0; };
  out.losses = total_loss(mean(s_mask, ce_count), mean(s_uniform, ce_count), mean(s_phi, cls_count),
                          mean(s_conn, conn_count), cfg.weights);
  return out;
}

template LossAndGrad<float> compute_step<float>(const Model<float>&, const Batch&, Rng&, const TrainConfig&);
template LossAndGrad<double> compute_step<double>(const Model<double>&, const Batch&, Rng&, const TrainConfig&);

StepResult train_step(Model<float>& model, AdamW& opt, const Batch& batch, Rng& rng, const TrainConfig& cfg,
                      double lr) {
  auto lg = compute_step(model, batch, rng, cfg);
  StepResult res;
  res.losses = lg.losses;
  double sq = 0.0;
  for (const auto& g : lg.grads) sq += g.template cast<double>().squaredNorm();
  res.grad_norm = std::sqrt(sq);
  if (!std::isfinite(res.grad_norm))
    throw RuntimeFailure("non-finite gradient norm (losses: mask " + std::to_string(res.losses.l_mask) +
                         ", uniform " + std::to_string(res.losses.l_uniform) + ", phi " +
                         std::to_string(res.losses.l_phi) + ", connection " +
                         std::to_string(res.losses.l_connection) + ")");
  res.grads = std::move(lg.grads);
  if (cfg.grad_clip > 0.0 && res.grad_norm > cfg.grad_clip) {
    const auto f = static_cast<float>(cfg.grad_clip / res.grad_norm);
    Gradients<float> clipped = res.grads;
    for (auto& g : clipped) g *= f;
    opt.step(model, clipped, lr);
  } else {
    opt.step(model, res.grads, lr);
  }
  return res;
}

// ---- fit --------------------------------------------------------------------------

std::string format_metrics_row(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n", r.step, r.lr, r.losses.l_mask,
                r.losses.l_uniform, r.losses.l_phi, r.losses.l_connection, r.losses.total);
  return buf;
}

std::map<int, MetricsRow> parse_metrics_log(const std::string& text) {
  std::map<int, MetricsRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    MetricsRow r;
    if (!(ls >> r.step >> r.lr >> r.losses.l_mask >> r.losses.l_uniform >> r.losses.l_phi >> r.losses.l_connection >>
          r.losses.total))
      throw ValidationError("metrics log line " + std::to_string(lineno) + ": expected 7 fields");
    std::string extra;
    if (ls >> extra) throw ValidationError("metrics log line " + std::to_string(lineno) + ": trailing fields");
    if (!rows.emplace(r.step, r).second)
      throw ValidationError("metrics log line " + std::to_string(lineno) + ": duplicate step");
  }
  return rows;
}

std::vector<std::size_t> batch_indices(std::size_t corpus_size, int batch_size, int step, std::uint64_t seed) {
  require(corpus_size > 0, "batch_indices: empty corpus");
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  const std::uint64_t first = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(batch_size);
  std::uint64_t cached_epoch = ~std::uint64_t{0};
  std::vector<std::size_t> perm(corpus_size);
  for (std::uint64_t k = first; k < first + static_cast<std::uint64_t>(batch_size); ++k) {
    const std::uint64_t epoch = k / corpus_size;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      Rng rng(derive_seed(seed, 0xe90c0000ULL + epoch));
      for (std::size_t i = corpus_size; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
      cached_epoch = epoch;
    }
    out.push_back(perm[k % corpus_size]);
  }
  return out;
}

Checkpoint training_checkpoint(const Model<float>& model, const AdamW& opt, const TrainConfig& cfg, int next_step) {
  Checkpoint ckpt = model_checkpoint(model);
  for (const auto& [k, v] : cfg.to_map()) ckpt.meta["train." + k] = v;
  ckpt.meta["train.next_step"] = std::to_string(next_step);
  opt.store(ckpt, model);
  return ckpt;
}

FitResult fit(const TrainConfig& cfg) {
  cfg.validate();
  const auto data = load_training_set(cfg.corpus, cfg.net, cfg.seed, cfg.min_faces, cfg.max_faces);
  return fit(cfg, data);
}

FitResult fit(const TrainConfig& cfg, const std::vector<TrainingExample>& data) {
  cfg.validate();
  require(!data.empty(), "train: corpus is empty (no meshes within the face-count window)");

  Model<float> model(cfg.net, derive_seed(cfg.seed, 0x1417));
  AdamW opt(model, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
  int start = 0;
  if (!cfg.resume.empty()) {
    const Checkpoint ckpt = load_checkpoint(cfg.resume);
    require(net_config_from_meta(ckpt.meta) == cfg.net, "resume: checkpoint net config differs from the run's");
    model = model_from_checkpoint<float>(ckpt);
    opt.restore(ckpt, model);
    const auto it = ckpt.meta.find("train.next_step");
    require(it != ckpt.meta.end(), "resume: checkpoint has no training state");
    start = std::stoi(it->second);
  }

  FitResult result;
  std::string log_prefix;
  if (!cfg.metrics.empty() && start > 0 && std::filesystem::exists(cfg.metrics)) {
    for (const auto& [step, row] : parse_metrics_log(read_file_bytes(cfg.metrics)))
      if (step < start) log_prefix += format_metrics_row(row);
  }
  std::ofstream log;
  if (!cfg.metrics.empty()) {
    log.open(cfg.metrics, std::ios::binary | std::ios::trunc);
    if (!log) throw RuntimeFailure("cannot open metrics log '" + cfg.metrics + "'");
    log << log_prefix;
  }

  for (int step = start; step < cfg.steps; ++step) {
    std::vector<const TrainingExample*> items;
    for (std::size_t i : batch_indices(data.size(), cfg.batch_size, step, cfg.seed)) items.push_back(&data[i]);
    Rng rng(derive_seed(derive_seed(cfg.seed, 0x57e9), static_cast<std::uint64_t>(step)));
    const double lr = lr_schedule(cfg, step);
    const StepResult res = train_step(model, opt, Batch::of(std::move(items)), rng, cfg, lr);
    MetricsRow row{step, lr, res.losses};
    result.rows.push_back(row);
    if (log.is_open()) {
      log << format_metrics_row(row);
      log.flush();
    }
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && !cfg.out.empty())
      save_checkpoint(cfg.out, training_checkpoint(model, opt, cfg, step + 1));
  }

  result.checkpoint = training_checkpoint(model, opt, cfg, std::max(start, cfg.steps));
  if (!cfg.out.empty()) save_checkpoint(cfg.out, result.checkpoint);
  return result;
}

}  // namespace tssr
