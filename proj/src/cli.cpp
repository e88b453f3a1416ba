#include "tssr/cli.hpp"

#include "tssr/checkpoint.hpp"
#include "tssr/codec.hpp"
#include "tssr/config.hpp"
#include "tssr/error.hpp"
#include "tssr/evalkit.hpp"
#include "tssr/geometry.hpp"
#include "tssr/sampler.hpp"
#include "tssr/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

namespace tssr::cli {

namespace {

/// Flags bound to config keys. A flag given on the command line overrides
/// the same key from the config file.
class FlagSet {
 public:
  explicit FlagSet(CLI::App* app) : app_(app) {}

  void option(const std::string& flag, const std::string& key, const std::string& help) {
    bound_.emplace_back(app_->add_option(flag, values_[key], help + "  [" + key + "]"), key);
  }

  void positional(const std::string& name, const std::string& key, const std::string& help) {
    bound_.emplace_back(app_->add_option(name, values_[key], help), key);
  }

  void toggle(const std::string& flag, const std::string& key, const std::string& value, const std::string& help) {
    const std::string text = help + "  [" + key + " = " + value + "]";
    auto* opt = app_->add_flag(flag, text);
    toggles_.emplace_back(opt, key, value);
  }

  ConfigValues resolve(const std::string& config_path) const {
    ConfigValues cfg = config_path.empty() ? ConfigValues{} : load_config(config_path);
    for (const auto& [opt, key] : bound_)
      if (opt->count() > 0) cfg[key] = values_.at(key);
    for (const auto& [opt, key, value] : toggles_)
      if (opt->count() > 0) cfg[key] = value;
    return cfg;
  }

 private:
  CLI::App* app_;
  std::map<std::string, std::string> values_;
  std::vector<std::pair<CLI::Option*, std::string>> bound_;
  std::vector<std::tuple<CLI::Option*, std::string, std::string>> toggles_;
};

std::uint64_t seed_of(const ConfigValues& cfg) {
  const long long s = config_int64(cfg, "seed", 0);
  require(s >= 0, "seed must be >= 0");
  return static_cast<std::uint64_t>(s);
}

void require_key(const ConfigValues& cfg, const std::string& key, const std::string& flag) {
  if (config_string(cfg, key, "").empty()) throw ValidationError("missing " + flag + " (config key " + key + ")");
}

NetConfig net_from(const ConfigValues& cfg) {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : cfg)
    if (k.rfind("net.", 0) == 0) kv[k.substr(4)] = v;
  return NetConfig::from_map(kv);
}

TrainConfig train_from(const ConfigValues& cfg) {
  TrainConfig t;
  t.net = net_from(cfg);
  t.steps = config_int(cfg, "train.steps", t.steps);
  t.batch_size = config_int(cfg, "train.batch_size", t.batch_size);
  t.lr_peak = config_double(cfg, "train.lr_peak", t.lr_peak);
  t.warmup_steps = config_int(cfg, "train.warmup_steps", t.warmup_steps);
  t.beta1 = config_double(cfg, "train.beta1", t.beta1);
  t.beta2 = config_double(cfg, "train.beta2", t.beta2);
  t.eps = config_double(cfg, "train.eps", t.eps);
  t.weight_decay = config_double(cfg, "train.weight_decay", t.weight_decay);
  t.grad_clip = config_double(cfg, "train.grad_clip", t.grad_clip);
  t.temperature = config_double(cfg, "train.temperature", t.temperature);
  t.ce_corrupted_only = config_bool(cfg, "train.ce_corrupted_only", t.ce_corrupted_only);
  t.weights.mask = config_double(cfg, "train.w_mask", t.weights.mask);
  t.weights.uniform = config_double(cfg, "train.w_uniform", t.weights.uniform);
  t.weights.phi = config_double(cfg, "train.w_phi", t.weights.phi);
  t.weights.connection = config_double(cfg, "train.w_connection", t.weights.connection);
  t.checkpoint_every = config_int(cfg, "train.checkpoint_every", t.checkpoint_every);
  t.min_faces = config_int(cfg, "train.min_faces", t.min_faces);
  t.max_faces = config_int(cfg, "train.max_faces", t.max_faces);
  t.corpus = config_string(cfg, "train.corpus", "");
  t.out = config_string(cfg, "train.out", "");
  t.metrics = config_string(cfg, "train.metrics", "");
  t.resume = config_string(cfg, "train.resume", "");
  t.seed = seed_of(cfg);
  return t;
}

SamplerConfig sampler_from(const ConfigValues& cfg, const std::string& section, int default_steps) {
  SamplerConfig s;
  s.steps = config_int(cfg, section + ".steps", default_steps);
  s.sigma = config_double(cfg, section + ".sigma", s.sigma);
  s.temperature = config_double(cfg, section + ".temperature", s.temperature);
  s.keep_floor = config_bool(cfg, section + ".keep_floor", s.keep_floor);
  s.seed = seed_of(cfg);
  require(s.steps >= 1, "steps must be >= 1");
  require(s.sigma > 0.0 && s.sigma < 1.0, "sigma must lie in (0, 1)");
  require(s.temperature >= 0.0, "temperature must be >= 0");
  return s;
}

void write_output(const std::string& path, const std::string& bytes, std::ostream& out) {
  if (path.empty() || path == "-") out << bytes;
  else write_file_atomic(path, bytes);
}

// ---- subcommands -------------------------------------------------------------

int cmd_synth(const ConfigValues& cfg, std::ostream& out) {
  require_key(cfg, "synth.out", "--out");
  const int count = config_int(cfg, "synth.count", 1000);
  const int min_faces = config_int(cfg, "synth.min_faces", 4);
  const int max_faces = config_int(cfg, "synth.max_faces", 128);
  const int resolution = config_int(cfg, "synth.resolution", kDefaultResolution);
  require(count >= 0, "count must be >= 0");
  const auto specs = make_corpus_specs(static_cast<std::size_t>(count), seed_of(cfg), min_faces, max_faces);
  const std::string dir = config_string(cfg, "synth.out", "");
  write_corpus(dir, specs, resolution);
  out << "wrote " << specs.size() << " meshes to " << dir << "\n";
  return 0;
}

int cmd_roundtrip(const ConfigValues& cfg, std::ostream& out) {
  require_key(cfg, "roundtrip.corpus", "--corpus");
  const std::string dir = config_string(cfg, "roundtrip.corpus", "");
  const int resolution = config_int(cfg, "roundtrip.resolution", kDefaultResolution);
  const auto manifest = (std::filesystem::path(dir) / "manifest.txt").string();
  if (!std::filesystem::exists(manifest)) throw ValidationError("corpus manifest not found: " + manifest);
  const auto specs = read_manifest(read_file_bytes(manifest));
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const CorpusEntry e = make_entry(specs[i], resolution);
    const TokenSequence stored = decode_tokens(read_file_bytes(corpus_file(dir, i, "tok")));
    const VertexGroups groups = decode_groups(read_file_bytes(corpus_file(dir, i, "grp")));
    std::string why;
    if (stored.size() != static_cast<std::size_t>(kTokensPerFace) * static_cast<std::size_t>(e.mesh.faces.rows()))
      why = "length is not 9N";
    else if (stored != e.tokens)
      why = "token dump differs from a fresh tokenization";
    else if (groups.groups != e.groups.groups)
      why = "group index differs";
    else {
      const auto back = detokenize(stored, resolution);
      if (back.dropped_faces != 0 || !(back.mesh == e.mesh)) why = "detokenize(tokenize(q)) != q";
    }
    if (!why.empty()) {
      ++mismatches;
      out << "mismatch mesh " << i << " (" << specs[i].to_line() << "): " << why << "\n";
    }
  }
  out << specs.size() << " meshes checked\n" << mismatches << " mismatches\n";
  return mismatches == 0 ? 0 : 2;
}

int cmd_train(const ConfigValues& cfg, std::ostream& out) {
  require_key(cfg, "train.corpus", "--corpus");
  require_key(cfg, "train.out", "--out");
  const TrainConfig t = train_from(cfg);
  const FitResult r = fit(t);
  if (!r.rows.empty()) {
    const auto& last = r.rows.back();
    out << "trained " << r.rows.size() << " steps; last total loss " << last.losses.total << "\n";
  } else {
    out << "no training steps run\n";
  }
  out << "checkpoint written to " << t.out << "\n";
  return 0;
}

PointCloud condition_from_obj(const std::string& path, const NetConfig& net, std::uint64_t seed) {
  Eigen::MatrixX3d normals;
  Mesh m = load_obj_file(path, &normals);
  require(m.vertices.rows() > 0, "input OBJ has no vertices");
  if (m.faces.rows() > 0) return sample_surface(normalize_mesh(m), static_cast<std::size_t>(net.cond_points), seed);
  require(normals.rows() == m.vertices.rows(), "point-cloud OBJ needs one vn normal per vertex");
  PointCloud pc;
  pc.points = normalize_mesh(m).vertices;
  pc.normals = normals.rowwise().normalized();
  return pc;
}

int cmd_generate(const ConfigValues& cfg, std::ostream& out, std::ostream& err) {
  require_key(cfg, "generate.checkpoint", "--checkpoint");
  require_key(cfg, "generate.input", "--input");
  const SamplerConfig sc = sampler_from(cfg, "generate", 200);
  const Model<float> model = model_from_checkpoint<float>(load_checkpoint(config_string(cfg, "generate.checkpoint", "")));
  const PointCloud cond =
      condition_from_obj(config_string(cfg, "generate.input", ""), model.config(), derive_seed(sc.seed, 0xc0d));

  FaceCountStrategy strategy;
  strategy.kind = parse_face_strategy(config_string(cfg, "generate.face_strategy", "s1"));
  strategy.faces = config_int(cfg, "generate.faces", 0);
  strategy.width = config_int(cfg, "generate.width", strategy.width);
  strategy.constant = config_int(cfg, "generate.constant", strategy.constant);
  if (strategy.kind != FaceStrategy::Constant) require(strategy.faces >= 1, "--faces must be >= 1");

  ModelDenoiser denoiser(model, cond);
  const GenerateResult g = generate(denoiser, strategy, sc);
  const auto decoded = detokenize(g.tokens, model.config().resolution);
  if (decoded.dropped_faces > 0)
    err << "note: dropped " << decoded.dropped_faces << " of " << g.n_faces << " generated faces ("
        << decoded.degenerate_faces << " degenerate, the rest duplicates)\n";
  write_output(config_string(cfg, "generate.out", ""), write_obj(dequantize(decoded.mesh)), out);
  if (const auto tok = config_string(cfg, "generate.tokens", ""); !tok.empty())
    write_file_atomic(tok, encode_tokens(g.tokens));
  if (const auto trace = config_string(cfg, "generate.trace", ""); !trace.empty())
    write_file_atomic(trace, format_trace(g.trace));
  return 0;
}

int cmd_eval(const ConfigValues& cfg, std::ostream& out) {
  require_key(cfg, "eval.a", "first mesh");
  require_key(cfg, "eval.b", "second mesh");
  EvalConfig ec;
  ec.samples = static_cast<std::size_t>(std::max(1, config_int(cfg, "eval.samples", 10000)));
  ec.tau = config_double(cfg, "eval.tau", ec.tau);
  ec.seed = seed_of(cfg);
  Mesh a = load_obj_file(config_string(cfg, "eval.a", ""));
  Mesh b = load_obj_file(config_string(cfg, "eval.b", ""));
  require(a.faces.rows() > 0 && b.faces.rows() > 0, "eval: both inputs need faces");
  if (config_bool(cfg, "eval.normalize", false)) {
    a = normalize_mesh(a);
    b = normalize_mesh(b);
  }
  const MetricReport r = evaluate_meshes(a, b, ec);
  const std::string format = config_string(cfg, "eval.format", "both");
  std::string text;
  if (format == "text") text = r.to_text();
  else if (format == "kv") text = r.to_key_values();
  else if (format == "both") text = r.to_text() + r.to_key_values();
  else throw ValidationError("eval: format must be text, kv or both");
  write_output(config_string(cfg, "eval.out", ""), text, out);
  return 0;
}

int cmd_oracle(const ConfigValues& cfg, std::ostream& out) {
  const SamplerConfig sc = sampler_from(cfg, "oracle", 20);
  const int faces = config_int(cfg, "oracle.faces", 100);
  const int resolution = config_int(cfg, "oracle.resolution", kDefaultResolution);
  const std::string mode = config_string(cfg, "oracle.mode", "noisy");
  double noise = config_double(cfg, "oracle.noise", 0.2);
  const double min_accuracy = config_double(cfg, "oracle.min_accuracy", 0.0);
  require(faces >= 1, "oracle: faces must be >= 1");
  require(resolution >= 2, "oracle: resolution must be >= 2");
  if (mode == "perfect") noise = 0.0;
  else require(mode == "noisy", "oracle: mode must be perfect or noisy");

  Rng truth_rng(derive_seed(sc.seed, 0x7e57));
  TokenSequence truth(static_cast<std::size_t>(faces) * kTokensPerFace);
  for (auto& t : truth) t = static_cast<Token>(truth_rng.below(static_cast<std::uint64_t>(resolution)));
  OracleDenoiser oracle(truth, resolution, noise, derive_seed(sc.seed, 0x0a11));
  const GenerateResult g = generate(oracle, faces, sc);

  std::size_t correct = 0, masks = 0;
  const Codebook book{resolution};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    correct += g.tokens[i] == truth[i];
    masks += g.tokens[i] == book.mask();
  }
  bool monotone = true;
  for (std::size_t k = 1; k < g.committed_per_step.size(); ++k)
    monotone = monotone && g.committed_per_step[k] >= g.committed_per_step[k - 1];
  const double accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());

  out << "mode=" << mode << "\nfaces=" << faces << "\ntokens=" << truth.size() << "\nsteps=" << sc.steps
      << "\nsteps_run=" << g.trace.size() << "\nnoise=" << noise << "\ntoken_accuracy=" << accuracy
      << "\nexact_match=" << (correct == truth.size() ? 1 : 0) << "\nmask_remaining=" << masks
      << "\nmonotone=" << (monotone ? 1 : 0)
      << "\ncommitted_after_first_step=" << (g.committed_per_step.empty() ? 0 : g.committed_per_step.front()) << "\n";
  if (const auto trace = config_string(cfg, "oracle.trace", ""); !trace.empty())
    write_file_atomic(trace, format_trace(g.trace));
  if (accuracy < min_accuracy || masks > 0 || !monotone) return 2;
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Discrete-diffusion mesh generation toolkit", "tssr"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::string config_path;
  auto add_common = [&](CLI::App* sub, FlagSet& f) {
    sub->add_option("--config", config_path, "Config file with [section] key = value lines");
    f.option("--seed", "seed", "Seed for every random draw");
  };

  CLI::App* synth = app.add_subcommand("synth", "Build a synthetic corpus with token dumps and group indexes");
  FlagSet synth_flags(synth);
  add_common(synth, synth_flags);
  synth_flags.option("--out", "synth.out", "Output directory");
  synth_flags.option("--count", "synth.count", "Number of meshes");
  synth_flags.option("--min-faces", "synth.min_faces", "Smallest face count");
  synth_flags.option("--max-faces", "synth.max_faces", "Largest face count");
  synth_flags.option("--resolution", "synth.resolution", "Bins per axis");

  CLI::App* roundtrip = app.add_subcommand("roundtrip", "Verify the codec over a corpus");
  FlagSet rt_flags(roundtrip);
  add_common(roundtrip, rt_flags);
  rt_flags.option("--corpus", "roundtrip.corpus", "Corpus directory");
  rt_flags.option("--resolution", "roundtrip.resolution", "Bins per axis");

  CLI::App* train = app.add_subcommand("train", "Train the denoiser on a corpus");
  FlagSet tr(train);
  add_common(train, tr);
  tr.option("--corpus", "train.corpus", "Corpus directory");
  tr.option("--out", "train.out", "Checkpoint path");
  tr.option("--metrics", "train.metrics", "Metrics log path");
  tr.option("--resume", "train.resume", "Checkpoint to continue from");
  tr.option("--steps", "train.steps", "Total optimizer steps");
  tr.option("--batch-size", "train.batch_size", "Meshes per step");
  tr.option("--lr", "train.lr_peak", "Peak learning rate");
  tr.option("--warmup", "train.warmup_steps", "Warm-up steps");
  tr.option("--beta1", "train.beta1", "AdamW beta1");
  tr.option("--beta2", "train.beta2", "AdamW beta2");
  tr.option("--weight-decay", "train.weight_decay", "AdamW decoupled weight decay");
  tr.option("--grad-clip", "train.grad_clip", "Global gradient-norm clip (0 disables)");
  tr.option("--temperature", "train.temperature", "Temperature of the training-time draws");
  tr.option("--w-mask", "train.w_mask", "Weight of the mask-task loss");
  tr.option("--w-uniform", "train.w_uniform", "Weight of the uniform-task loss");
  tr.option("--w-phi", "train.w_phi", "Weight of the classifier loss");
  tr.option("--w-connection", "train.w_connection", "Weight of the connection loss");
  tr.option("--checkpoint-every", "train.checkpoint_every", "Checkpoint cadence in steps (0: end only)");
  tr.option("--min-faces", "train.min_faces", "Curriculum window: smallest face count");
  tr.option("--max-faces", "train.max_faces", "Curriculum window: largest face count");
  tr.toggle("--ce-corrupted-only", "train.ce_corrupted_only", "true", "Cross-entropy on corrupted positions only");
  tr.option("--d-model", "net.d_model", "Model width");
  tr.option("--heads", "net.n_heads", "Attention heads");
  tr.option("--layers", "net.layers", "Blocks per level: coord,vertex,face,vertex,coord");
  tr.option("--rope-split", "net.rope_split", "Rotary dims per level: face,vertex,coord fractions");
  tr.option("--resolution", "net.resolution", "Bins per axis");
  tr.option("--model-max-faces", "net.max_faces", "Longest supported sequence in faces");
  tr.option("--cond-points", "net.cond_points", "Condition point count");
  tr.option("--train-steps", "net.train_steps", "Number of integer diffusion timesteps");

  CLI::App* gen = app.add_subcommand("generate", "Generate a mesh from a point cloud or mesh");
  FlagSet gf(gen);
  add_common(gen, gf);
  gf.option("--checkpoint", "generate.checkpoint", "Trained checkpoint");
  gf.option("--input", "generate.input", "Condition OBJ (mesh, or points with vn normals)");
  gf.option("--out", "generate.out", "Output OBJ (default stdout)");
  gf.option("--tokens", "generate.tokens", "Also write the token dump here");
  gf.option("--faces", "generate.faces", "Face count (reference count for s2)");
  gf.option("--face-strategy", "generate.face_strategy", "s1 (given), s2 (biased), s3 (constant)");
  gf.option("--width", "generate.width", "s2 bias range");
  gf.option("--constant", "generate.constant", "s3 face count");
  gf.option("--steps", "generate.steps", "Sampling steps T");
  gf.option("--sigma", "generate.sigma", "Confidence threshold");
  gf.option("--temperature", "generate.temperature", "Sampling temperature (0: argmax)");
  gf.toggle("--no-keep-floor", "generate.keep_floor", "false", "Disable the commitment floor");
  gf.option("--trace", "generate.trace", "Per-step trace file");

  CLI::App* ev = app.add_subcommand("eval", "Compare two meshes");
  FlagSet ef(ev);
  add_common(ev, ef);
  ef.positional("a", "eval.a", "First mesh OBJ");
  ef.positional("b", "eval.b", "Second mesh OBJ");
  ef.option("--samples", "eval.samples", "Surface samples per mesh");
  ef.option("--tau", "eval.tau", "F-score distance threshold");
  ef.option("--format", "eval.format", "text, kv or both");
  ef.option("--out", "eval.out", "Report file (default stdout)");
  ef.toggle("--normalize", "eval.normalize", "true", "Normalize both meshes into the unit cube first");

  CLI::App* oracle = app.add_subcommand("oracle-sim", "Run the sampler against a perfect or noisy oracle");
  FlagSet of(oracle);
  add_common(oracle, of);
  of.option("--mode", "oracle.mode", "perfect or noisy");
  of.option("--faces", "oracle.faces", "Sequence length in faces");
  of.option("--noise", "oracle.noise", "Per-token corruption probability of the noisy oracle");
  of.option("--resolution", "oracle.resolution", "Bins per axis");
  of.option("--steps", "oracle.steps", "Sampling steps T");
  of.option("--sigma", "oracle.sigma", "Confidence threshold");
  of.option("--temperature", "oracle.temperature", "Sampling temperature (0: argmax)");
  of.toggle("--no-keep-floor", "oracle.keep_floor", "false", "Disable the commitment floor");
  of.option("--min-accuracy", "oracle.min_accuracy", "Exit 2 when token accuracy falls below this");
  of.option("--trace", "oracle.trace", "Per-step trace file");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_flags.resolve(config_path), out);
    if (roundtrip->parsed()) return cmd_roundtrip(rt_flags.resolve(config_path), out);
    if (train->parsed()) return cmd_train(tr.resolve(config_path), out);
    if (gen->parsed()) return cmd_generate(gf.resolve(config_path), out, err);
    if (ev->parsed()) return cmd_eval(ef.resolve(config_path), out);
    if (oracle->parsed()) return cmd_oracle(of.resolve(config_path), out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const RuntimeFailure& e) {
    err << "failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return 2;
  }
  err << app.help();
  return 1;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace tssr::cli
