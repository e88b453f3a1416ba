#include "tssr/codec.hpp"
#include "tssr/error.hpp"
#include "tssr/trainer.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

using namespace tssr;

namespace {

namespace fs = std::filesystem;

/// Fresh scratch directory under the system temp dir.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("tssr_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& leaf) const { return (path / leaf).string(); }
};

NetConfig corpus_net() {
  NetConfig c = fixture::small_config();
  c.resolution = 1024;
  c.max_faces = 40;
  return c;
}

std::vector<SyntheticSpec> mixed_specs() {
  return {{SyntheticKind::Box, {}, 1},
          {SyntheticKind::Pyramid, {4, 1}, 2},
          {SyntheticKind::Icosphere, {0}, 3},
          {SyntheticKind::Prism, {5, 1}, 4},
          {SyntheticKind::Box, {1, 2, 0.5}, 5}};
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.net = corpus_net();
  cfg.steps = 6;
  cfg.batch_size = 2;
  cfg.lr_peak = 1e-3;
  cfg.warmup_steps = 2;
  cfg.seed = 9;
  return cfg;
}

std::vector<TrainingExample> examples_of(const std::vector<SyntheticSpec>& specs, const NetConfig& net) {
  std::vector<TrainingExample> out;
  for (std::size_t i = 0; i < specs.size(); ++i)
    out.push_back(make_example(make_entry(specs[i], net.resolution).mesh, net, derive_seed(1, i)));
  return out;
}

bool same_parameters(const Model<float>& a, const Model<float>& b) {
  for (std::size_t i = 0; i < a.parameters().size(); ++i)
    if (a.parameters()[i].value != b.parameters()[i].value) return false;
  return true;
}

}  // namespace

TEST_CASE("learning-rate warm-up") {
  TrainConfig cfg;
  cfg.lr_peak = 1e-4;
  cfg.warmup_steps = 100;
  CHECK(lr_schedule(cfg, 0) == 0.0);
  CHECK(lr_schedule(cfg, 50) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(lr_schedule(cfg, 100) == 1e-4);
  CHECK(lr_schedule(cfg, 5000) == 1e-4);
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.validate();
  for (auto breaker : std::vector<void (*)(TrainConfig&)>{
           [](TrainConfig& c) { c.steps = -1; }, [](TrainConfig& c) { c.batch_size = 0; },
           [](TrainConfig& c) { c.lr_peak = 0; }, [](TrainConfig& c) { c.beta2 = 1.0; },
           [](TrainConfig& c) { c.min_faces = 10, c.max_faces = 5; }, [](TrainConfig& c) { c.warmup_steps = 0; }}) {
    TrainConfig bad;
    breaker(bad);
    CHECK_THROWS_AS(bad.validate(), ValidationError);
  }
}

TEST_CASE("AdamW update rule") {
  NetConfig c = fixture::toy_config();
  Model<float> m(c, 1);
  const Model<float> init = m;

  SUBCASE("zero learning rate leaves parameters unchanged") {
    AdamW opt(m, 0.9, 0.95, 1e-8, 0.01);
    auto g = m.zero_gradients();
    for (auto& x : g) x.setConstant(0.5f);
    opt.step(m, g, 0.0);
    CHECK(same_parameters(m, init));
    CHECK(opt.steps_taken() == 1);
  }
  SUBCASE("zero gradients without decay leave parameters unchanged") {
    AdamW opt(m, 0.9, 0.95, 1e-8, 0.0);
    opt.step(m, m.zero_gradients(), 1e-2);
    CHECK(same_parameters(m, init));
  }
  SUBCASE("first step moves by lr * sign(g) plus decay") {
    AdamW opt(m, 0.9, 0.95, 1e-8, 0.1);
    auto g = m.zero_gradients();
    for (auto& x : g) x.setConstant(-0.25f);
    opt.step(m, g, 1e-2);
    // bias-corrected moments after one step: m_hat = g, v_hat = g^2
    const double step = 0.25 / (0.25 + 1e-8);
    for (std::size_t i = 0; i < m.parameters().size(); ++i) {
      const auto& p0 = init.parameters()[i].value;
      const auto& p1 = m.parameters()[i].value;
      for (Eigen::Index k = 0; k < p0.size(); ++k) {
        const double w = p0.data()[k];
        CHECK(std::abs(p1.data()[k] - (w + 1e-2 * step - 1e-2 * 0.1 * w)) < 1e-6);
      }
    }
  }
}

TEST_CASE("AdamW state round-trips through a checkpoint") {
  const NetConfig c = fixture::toy_config();
  Model<float> m(c, 2);
  AdamW opt(m, 0.9, 0.95, 1e-8, 0.01);
  auto g = m.zero_gradients();
  for (auto& x : g) x.setConstant(0.1f);
  opt.step(m, g, 1e-3);
  Checkpoint ck = model_checkpoint(m);
  opt.store(ck, m);
  AdamW back(m, 0.9, 0.95, 1e-8, 0.01);
  back.restore(decode_checkpoint(encode_checkpoint(ck)), m);
  CHECK(back.steps_taken() == 1);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(back.first_moments()[i] == opt.first_moments()[i]);
    CHECK(back.second_moments()[i] == opt.second_moments()[i]);
  }
}

TEST_CASE("pad_to and Batch::of") {
  const Codebook b{16};
  CHECK(pad_to({1, 2}, 4, b) == TokenSequence{1, 2, 17, 17});
  CHECK_THROWS_AS(pad_to({1, 2, 3}, 2, b), ValidationError);
  TrainingExample e1, e2;
  e1.x1 = TokenSequence(18, 0);
  e2.x1 = TokenSequence(27, 0);
  CHECK(Batch::of({&e1, &e2}).length == 27);
}

TEST_CASE("compute_step is a pure function of the rng state") {
  const NetConfig net = corpus_net();
  const auto data = examples_of(mixed_specs(), net);
  TrainConfig cfg = quick_config();
  const Model<float> m(net, 3);
  const auto batch = Batch::of({&data[0], &data[2], &data[3]});
  Rng r1(5), r2(5), r3(6);
  const auto a = compute_step(m, batch, r1, cfg);
  const auto b = compute_step(m, batch, r2, cfg);
  CHECK(a.losses == b.losses);
  for (std::size_t i = 0; i < a.grads.size(); ++i) CHECK(a.grads[i] == b.grads[i]);
  CHECK_FALSE(compute_step(m, batch, r3, cfg).losses == a.losses);
  CHECK(std::isfinite(a.losses.total));
  CHECK(a.losses.l_connection > 0.0);
}

TEST_CASE("a zero connection weight reports the term but excludes it from the update") {
  const NetConfig net = corpus_net();
  const auto data = examples_of(mixed_specs(), net);
  auto no_groups = data;
  for (auto& ex : no_groups) ex.groups.groups.clear();
  TrainConfig cfg = quick_config();
  cfg.weights.connection = 0.0;
  const Model<float> init(net, 4);

  const auto run = [&](const std::vector<TrainingExample>& d, const TrainConfig& c) {
    Model<float> m = init;
    AdamW opt(m, c.beta1, c.beta2, c.eps, c.weight_decay);
    Rng rng(7);
    const auto res = train_step(m, opt, Batch::of({&d[0], &d[1]}), rng, c, 1e-3);
    return std::pair{m, res.losses};
  };
  const auto [with_groups, losses] = run(data, cfg);
  const auto [without, losses_without] = run(no_groups, cfg);
  CHECK(losses.l_connection > 0.0);
  CHECK(losses_without.l_connection == 0.0);
  CHECK(losses.l_mask == losses_without.l_mask);
  CHECK(same_parameters(with_groups, without));

  TrainConfig weighted = cfg;
  weighted.weights.connection = 1.0;
  CHECK_FALSE(same_parameters(run(data, weighted).first, without));
}

TEST_CASE("non-finite loss aborts the step") {
  const NetConfig net = corpus_net();
  const auto data = examples_of(mixed_specs(), net);
  TrainConfig cfg = quick_config();
  Model<float> m(net, 5);
  m.parameters()[m.find_parameter("head.token.w")].value(0, 0) = std::numeric_limits<float>::quiet_NaN();
  AdamW opt(m, 0.9, 0.95, 1e-8, 0.0);
  Rng rng(1);
  CHECK_THROWS_AS(train_step(m, opt, Batch::of({&data[0]}), rng, cfg, 1e-3), RuntimeFailure);
}

TEST_CASE("gradient clipping bounds the update norm") {
  const NetConfig net = corpus_net();
  const auto data = examples_of(mixed_specs(), net);
  TrainConfig cfg = quick_config();
  cfg.grad_clip = 1e-3;
  Model<float> m(net, 6);
  AdamW opt(m, 0.9, 0.95, 1e-8, 0.0);
  Rng rng(2);
  const auto res = train_step(m, opt, Batch::of({&data[0]}), rng, cfg, 1e-3);
  CHECK(res.grad_norm > 1e-3);  // reported before clipping
  double norm2 = 0.0;
  for (const auto& mom : opt.first_moments()) norm2 += mom.cast<double>().squaredNorm();
  // first moment after one step is (1 - beta1) * clipped gradient
  CHECK(std::sqrt(norm2) == doctest::Approx(0.1 * 1e-3).epsilon(1e-3));
}

TEST_CASE("batch_indices visits every item once per epoch") {
  for (std::size_t n : {1u, 5u, 7u}) {
    for (int bs : {1, 2, 3, 8}) {
      std::vector<std::size_t> seq;
      for (int step = 0; step < 12; ++step) {
        const auto idx = batch_indices(n, bs, step, 42);
        CHECK(idx.size() == static_cast<std::size_t>(bs));
        seq.insert(seq.end(), idx.begin(), idx.end());
      }
      for (std::size_t e = 0; (e + 1) * n <= seq.size(); ++e) {
        std::set<std::size_t> epoch(seq.begin() + static_cast<long>(e * n), seq.begin() + static_cast<long>((e + 1) * n));
        CHECK(epoch.size() == n);
        CHECK(*epoch.rbegin() == n - 1);
      }
    }
  }
  CHECK(batch_indices(5, 2, 3, 1) == batch_indices(5, 2, 3, 1));
  CHECK_THROWS_AS(batch_indices(0, 2, 0, 1), ValidationError);
}

TEST_CASE("metrics log format") {
  MetricsRow r{3, 2.5e-5, {1.25, 2.0, 0.5, 0.125, 3.875}};
  const std::string line = format_metrics_row(r);
  CHECK(line.back() == '\n');
  const auto rows = parse_metrics_log("# header\n" + line);
  REQUIRE(rows.size() == 1);
  CHECK(rows.at(3).losses == r.losses);
  CHECK(rows.at(3).lr == r.lr);
  CHECK_THROWS_AS(parse_metrics_log("1 2 3\n"), ValidationError);
  CHECK_THROWS_AS(parse_metrics_log(line + line), ValidationError);
  CHECK_THROWS_AS(parse_metrics_log("1 0 1 1 1 1 1 extra\n"), ValidationError);
}

TEST_CASE("corpus files and curriculum window") {
  TempDir dir("corpus");
  const auto specs = mixed_specs();
  write_corpus(dir.path.string(), specs);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    CHECK(fs::exists(corpus_file(dir.path.string(), i, "obj")));
    const CorpusEntry e = make_entry(specs[i]);
    CHECK(decode_tokens(read_file_bytes(corpus_file(dir.path.string(), i, "tok"))) == e.tokens);
  }
  const NetConfig net = corpus_net();
  const auto all = load_training_set(dir.path.string(), net, 1);
  CHECK(all.size() == specs.size());
  for (const auto& ex : all) {
    CHECK(ex.x1.size() == 9 * static_cast<std::size_t>(ex.faces));
    CHECK(ex.cond.rows() == net.cond_points);
  }
  // faces: box 12, pyramid-4 6, icosphere-0 20, prism-5 16, box 12
  const auto window = load_training_set(dir.path.string(), net, 1, 10, 16);
  CHECK(window.size() == 3);
  for (const auto& ex : window) CHECK((ex.faces >= 10 && ex.faces <= 16));
  NetConfig narrow = net;
  narrow.max_faces = 12;
  CHECK(load_training_set(dir.path.string(), narrow, 1).size() == 3);
  CHECK_THROWS_AS(load_training_set(dir.file("missing"), net, 1), ValidationError);

  // a token dump out of canonical face order is rejected
  TokenSequence swapped = make_entry(specs[0]).tokens;
  std::swap_ranges(swapped.begin(), swapped.begin() + 9, swapped.end() - 9);
  write_file_atomic(corpus_file(dir.path.string(), 0, "tok"), encode_tokens(swapped));
  CHECK_THROWS_AS(load_training_set(dir.path.string(), net, 1), ValidationError);
}

TEST_CASE("fit with zero steps writes only the initial checkpoint") {
  TempDir dir("fit0");
  const NetConfig net = corpus_net();
  const auto data = examples_of(mixed_specs(), net);
  TrainConfig cfg = quick_config();
  cfg.steps = 0;
  cfg.out = dir.file("m.ckpt");
  cfg.metrics = dir.file("m.log");
  const FitResult r = fit(cfg, data);
  CHECK(r.rows.empty());
  CHECK(read_file_bytes(cfg.metrics).empty());
  const Checkpoint ck = load_checkpoint(cfg.out);
  CHECK(ck.meta.at("train.next_step") == "0");
  const Model<float> init(net, derive_seed(cfg.seed, 0x1417));
  CHECK(same_parameters(model_from_checkpoint<float>(ck), init));
  CHECK_THROWS_AS(fit(cfg, {}), ValidationError);
}

TEST_CASE("fit is reproducible and resumes bit-identically") {
  TempDir dir("resume");
  const NetConfig net = corpus_net();
  const auto data = examples_of(mixed_specs(), net);
  TrainConfig cfg = quick_config();
  cfg.steps = 6;

  TrainConfig full = cfg;
  full.out = dir.file("full.ckpt");
  full.metrics = dir.file("full.log");
  const FitResult a = fit(full, data);
  const FitResult again = fit(full, data);
  CHECK(encode_checkpoint(a.checkpoint) == encode_checkpoint(again.checkpoint));

  TrainConfig first = cfg;
  first.steps = 3;
  first.out = dir.file("part.ckpt");
  first.metrics = dir.file("part.log");
  fit(first, data);
  TrainConfig second = cfg;
  second.out = dir.file("part.ckpt");
  second.metrics = dir.file("part.log");
  second.resume = dir.file("part.ckpt");
  const FitResult b = fit(second, data);

  CHECK(read_file_bytes(full.metrics) == read_file_bytes(second.metrics));
  const auto rows = parse_metrics_log(read_file_bytes(second.metrics));
  REQUIRE(rows.size() == 6);
  int expect = 0;
  for (const auto& [step, row] : rows) CHECK(step == expect++);

  const Model<float> ma = model_from_checkpoint<float>(a.checkpoint);
  const Model<float> mb = model_from_checkpoint<float>(b.checkpoint);
  CHECK(same_parameters(ma, mb));
  AdamW oa(ma, 0.9, 0.95, 1e-8, 0.01), ob(mb, 0.9, 0.95, 1e-8, 0.01);
  oa.restore(a.checkpoint, ma);
  ob.restore(b.checkpoint, mb);
  CHECK(oa.steps_taken() == 6);
  CHECK(ob.steps_taken() == 6);
  for (std::size_t i = 0; i < oa.first_moments().size(); ++i) {
    CHECK(oa.first_moments()[i] == ob.first_moments()[i]);
    CHECK(oa.second_moments()[i] == ob.second_moments()[i]);
  }

  TrainConfig mismatch = second;
  mismatch.net.d_model = 64;
  CHECK_THROWS_AS(fit(mismatch, data), ValidationError);
}

TEST_CASE("overfitting a single box") {
  NetConfig net = corpus_net();
  net.d_model = 64;
  net.n_heads = 4;
  net.max_faces = 12;
  const auto data = examples_of({{SyntheticKind::Box, {}, 1}}, net);
  REQUIRE(data[0].faces == 12);
  TrainConfig cfg;
  cfg.net = net;
  cfg.lr_peak = 1e-3;
  cfg.warmup_steps = 10;
  cfg.weight_decay = 0.0;
  cfg.weights.connection = 1e-3;  // roughly 1/B: unit weight pins all positions to one output at this scale
  Model<float> m(net, derive_seed(cfg.seed, 0x1417));
  AdamW opt(m, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
  const Batch batch = Batch::of(std::vector<const TrainingExample*>(cfg.batch_size, &data[0]));

  // loss on a fixed greedy draw, so that successive values differ only by the update
  TrainConfig probe_cfg = cfg;
  probe_cfg.temperature = 0.0;
  const auto probe = [&] {
    Rng rng(123);
    return compute_step(m, batch, rng, probe_cfg).losses;
  };
  std::vector<LossBreakdown> trace{probe()};
  for (int step = 0; step < 200; ++step) {
    Rng rng(derive_seed(derive_seed(cfg.seed, 0x57e9), static_cast<std::uint64_t>(step)));
    train_step(m, opt, batch, rng, cfg, lr_schedule(cfg, step));
    trace.push_back(probe());
  }
  std::size_t decreasing = 0;
  for (std::size_t i = 1; i < trace.size(); ++i) decreasing += trace[i].total < trace[i - 1].total;
  const double frac = static_cast<double>(decreasing) / static_cast<double>(trace.size() - 1);
  MESSAGE("strictly decreasing step pairs: ", frac, ", final l_mask ", trace.back().l_mask);
  CHECK(frac >= 0.6);

  // the trend is monotone once step-to-step optimizer noise is averaged out
  std::vector<double> window(10, 0.0);
  for (std::size_t i = 1; i < trace.size(); ++i) window[(i - 1) / 20] += trace[i].total / 20.0;
  for (std::size_t w = 1; w < window.size(); ++w) CHECK(window[w] < window[w - 1]);
  CHECK(trace.back().l_mask < 0.05);
}
