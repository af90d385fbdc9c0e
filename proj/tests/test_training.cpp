#include <doctest.h>

#include <cmath>

#include "saan/ablation.hpp"
#include "saan/config.hpp"
#include "saan/losses.hpp"
#include "saan/trainer.hpp"
#include "test_util.hpp"

using namespace saan;
using saan::test::random_tensor;

TEST_CASE("loss_dm") {
  const TensorD pred({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const TensorD zeros({1, 1, 2, 2});
  CHECK(loss_dm(pred, zeros).value == 15.0);
  CHECK(loss_dm(pred, pred).value == 0.0);

  Rng rng(1);
  const TensorD a = random_tensor(rng, {3, 1, 4, 4}), b = random_tensor(rng, {3, 1, 4, 4});
  const auto l = loss_dm(a, b);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(l.grad[i] == doctest::Approx((a[i] - b[i]) / 3.0));
  CHECK_THROWS_AS(loss_dm(a, TensorD({3, 1, 4, 5})), DimensionError);
}

TEST_CASE("loss_gsa") {
  const std::vector<int> cls = {1, 2, 3};
  CHECK(loss_gsa(TensorD({3, 3}), cls).value == doctest::Approx(std::log(3.0)));
  const TensorD sure({1, 3}, std::vector<double>{0, 60, 0});
  CHECK(loss_gsa(sure, std::vector<int>{2}).value < 1e-20);

  Rng rng(2);
  TensorD z = random_tensor(rng, {3, 3}, -3, 3), shifted = z;
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t k = 0; k < 3; ++k) shifted.at(n, k) += static_cast<double>(n) * 7.5;
  CHECK(loss_gsa(z, cls).value == doctest::Approx(loss_gsa(shifted, cls).value).epsilon(1e-12));
  CHECK_THROWS_AS(loss_gsa(z, std::vector<int>{0, 1, 2}), ValidationError);
  CHECK_THROWS_AS(loss_gsa(z, std::vector<int>{1, 2, 4}), ValidationError);
}

TEST_CASE("loss_lsa") {
  const std::vector<LocalScaleMap> two(2, LocalScaleMap{2, 3, std::vector<std::uint8_t>(6, 2)});
  CHECK(loss_lsa(TensorD({2, 3, 2, 3}), two).value == doctest::Approx(std::log(3.0)));
  TensorD confident({2, 3, 2, 3});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t p = 0; p < 6; ++p) confident[(n * 3 + 1) * 6 + p] = 60.0;
  CHECK(loss_lsa(confident, two).value < 1e-20);
  CHECK_THROWS_AS(loss_lsa(TensorD({2, 3, 3, 3}), two), DimensionError);
}

TEST_CASE("combined loss and metrics") {
  const LossWeights w{0.1, 0.1};
  CHECK(loss_final({1.0, 2.0, 3.0, 0.0}, w) == doctest::Approx(1.5));
  CHECK(loss_final({1.0, 2.0, 3.0, 0.0}, {0.0, 0.0}) == 1.0);
  CHECK_THROWS_AS((LossWeights{-1.0, 0.0}.validate()), ValidationError);

  const std::vector<double> pred = {10, 20}, gt = {12, 17};
  CHECK(mae(pred, gt) == 2.5);
  CHECK(mse(pred, gt) == doctest::Approx(std::sqrt(6.5)));
  CHECK(mae(gt, gt) == 0.0);
  CHECK(mse(gt, gt) == 0.0);
  CHECK(mae(std::vector<double>{20, 10}, std::vector<double>{17, 12}) == 2.5);
  CHECK_THROWS_AS(mae(std::vector<double>{}, std::vector<double>{}), ValidationError);
  CHECK_THROWS_AS(mse(pred, std::vector<double>{1}), ValidationError);

  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> p(5), g(5);
    for (auto& v : p) v = rng.uniform(0, 50);
    for (auto& v : g) v = rng.uniform(0, 50);
    CHECK(mse(p, g) >= mae(p, g) - 1e-12);
  }
}

TEST_CASE("compute_loss satisfies the decomposition identity") {
  Rng rng(4);
  ForwardOutputs<double> out;
  out.density = random_tensor(rng, {2, 1, 8, 8});
  out.global_logits = random_tensor(rng, {2, 3});
  out.local_logits = random_tensor(rng, {2, 3, 2, 2});
  LossTargets<double> t;
  t.density = random_tensor(rng, {2, 1, 8, 8});
  t.global_classes = {1, 3};
  t.local_maps.assign(2, LocalScaleMap{2, 2, {1, 2, 3, 1}});
  const LossWeights w{0.25, 0.5};
  const auto r = compute_loss(out, t, w).report;
  CHECK(std::abs(r.l_final - r.l_dm - 0.25 * r.l_gsa - 0.5 * r.l_lsa) < 1e-6);
  const auto only_dm = compute_loss(out, t, w, {false, false});
  CHECK(only_dm.report.l_gsa == 0.0);
  CHECK(only_dm.report.l_final == only_dm.report.l_dm);
  CHECK(only_dm.grads.global_logits.empty());
}

TEST_CASE("adam") {
  ModelParams<float> p;
  p.add("x", Tensor({2}, std::vector<float>{1.0f, -2.0f}));
  ModelParams<float> zero;
  zero.add("x", Tensor({2}));
  OptimizerState st;
  adam_step(p, zero, st, {});
  CHECK(p.at("x") == Tensor({2}, std::vector<float>{1.0f, -2.0f}));

  // f(x) = x^2 against a scalar reference implementation in double.
  ModelParams<float> q;
  q.add("x", Tensor({1}, 1.0f));
  OptimizerState sq;
  double x = 1.0, m = 0.0, v = 0.0;
  const AdamParams hp{0.1, 0.9, 0.999, 1e-8};
  for (int t = 1; t <= 200; ++t) {
    ModelParams<float> g;
    g.add("x", Tensor({1}, 2.0f * q.at("x")[0]));
    adam_step(q, g, sq, hp);
    const double gr = 2.0 * x;
    m = 0.9 * m + 0.1 * gr;
    v = 0.999 * v + 0.001 * gr * gr;
    x -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  CHECK(std::abs(q.at("x")[0]) < 0.05);
  CHECK(std::abs(x) < 0.05);
  CHECK(q.at("x")[0] == doctest::Approx(x).epsilon(1e-3));
  CHECK(sq.step == 200);

  ModelParams<float> nan;
  nan.add("x", Tensor({1}, std::nanf("")));
  try {
    adam_step(q, nan, sq, hp);
    FAIL("expected a NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("'x'") != std::string::npos);
  }
}

namespace {

TrainingSet small_set(std::size_t n, std::size_t side) {
  TrainingSet set;
  std::vector<DensityMap> maps;
  for (std::size_t i = 0; i < n; ++i) {
    const Scene sc = synth_scene(mix_seed(77, i), side, side, 2, 20);
    Sample s{std::to_string(i), sc.image, sc.ann, gaussian_density_map(sc.ann, side, side)};
    maps.push_back(s.density);
    set.samples.push_back(std::move(s));
  }
  set.bins = compute_bins(maps);
  return set;
}

TrainConfig small_config() {
  TrainConfig c;
  c.network = NetworkConfig::tiny();
  c.phase1_epochs = 6;
  c.phase2_epochs = 6;
  c.adam.learning_rate = 1e-3;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("two-phase training contract") {
  const TrainingSet data = small_set(10, 32);
  const TrainConfig cfg = small_config();
  CHECK(effective_crop(data, 128) == 32);

  std::size_t steps = 0;
  TrainHooks hooks;
  hooks.on_step = [&](const StepLog& s) {
    ++steps;
    const auto& r = s.losses;
    CHECK(std::abs(r.l_final - r.l_dm - 0.1 * r.l_gsa - 0.1 * r.l_lsa) < 1e-6);
    if (s.phase == 1) CHECK(r.l_lsa == 0.0);
  };
  const auto run = train_two_phase(data, cfg, hooks);
  CHECK(steps == 12 * 3);

  for (const auto& [name, t] : run.initial)
    if (name.starts_with("lsa.")) CHECK(run.phase1.params.at(name) == t);
  CHECK_FALSE(run.phase1.params.at("fn.out.weight") == run.initial.at("fn.out.weight"));

  CHECK(run.phase1.epochs.back().l_dm < run.phase1.epochs.front().l_dm);
  CHECK(run.phase2.epochs.back().l_final < run.phase2.epochs.front().l_final);

  const auto again = train_two_phase(data, cfg);
  CHECK(again.phase2.params == run.phase2.params);
}

TEST_CASE("zero-epoch phases") {
  const TrainingSet data = small_set(4, 16);
  TrainConfig cfg = small_config();
  cfg.phase1_epochs = 0;
  cfg.phase2_epochs = 0;
  const auto init = init_params(cfg.network, cfg.seed);
  const auto p1 = train_phase1(init, data, cfg);
  CHECK(p1.params == init);
  const auto p2 = train_phase2(p1.params, data, cfg);
  for (const auto& [name, t] : p2.params) {
    if (name.starts_with("lsa.") && name.ends_with(".weight")) CHECK_FALSE(t == init.at(name));
    else if (!name.starts_with("lsa.")) CHECK(t == init.at(name));
  }
}

TEST_CASE("evaluation") {
  const auto perfect = summarize({{"a", 5, 5}, {"b", 10, 10}});
  CHECK(perfect.mae == 0.0);
  CHECK(perfect.mse == 0.0);
  const auto zero = summarize({{"a", 5, 0}, {"b", 10, 0}});
  CHECK(zero.mae == 7.5);
  CHECK_THROWS_AS(summarize({}), ValidationError);

  const TrainingSet data = small_set(3, 20);
  const auto params = init_params(NetworkConfig::tiny(), 1);
  const auto r = evaluate(params, NetworkConfig::tiny(), data.samples);
  REQUIRE(r.records.size() == 3);
  std::vector<double> p, g;
  for (const auto& rec : r.records) {
    p.push_back(rec.pred_count);
    g.push_back(rec.gt_count);
  }
  CHECK(r.mae == mae(p, g));
  CHECK(r.mse == mse(p, g));
  CHECK(r.records[0].gt_count == static_cast<double>(data.samples[0].ann.points.size()));
}

TEST_CASE("config parsing") {
  const CliConfig d = parse_config("{}");
  CHECK(d.train.phase1_epochs == 20);
  CHECK(d.train.phase2_epochs == 30);
  CHECK(d.train.adam.learning_rate == 1e-4);
  CHECK(d.train.batch_size == 4);
  CHECK(d.train.crop_size == 128);
  CHECK(d.train.weights.lambda_g == 0.1);
  CHECK(d.sigma == 4.0);

  const CliConfig c = parse_config(R"({"network": "tiny", "phase1_epochs": 2, "synth": {"radius_top": 5}})", "/data");
  CHECK(c.train.network == NetworkConfig::tiny());
  CHECK(c.synth.radius_top == 5.0);
  CHECK(c.manifest == std::filesystem::path("/data/manifest.json"));
  CHECK(parse_config(format_config(c)).train.phase1_epochs == 2);

  CHECK_THROWS_AS(parse_config(R"({"learning_rat": 1})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"synth": {"radius": 1}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"crop_size": 30})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"network": "huge"})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"seed": "one"})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"phase1_epochs": -1})"), ValidationError);
  CHECK_THROWS_AS(parse_config("{"), ParseError);
}

TEST_CASE("ablation plan and tables") {
  const auto plan = ablation_plan();
  REQUIRE(plan.model_variants.size() == 4);
  REQUIRE(plan.loss_variants.size() == 4);
  CHECK_FALSE(plan.model_variants[0].model.global);
  CHECK_FALSE(plan.model_variants[0].model.local);
  CHECK(plan.model_variants[3].model.global);
  CHECK_FALSE(plan.loss_variants[0].terms.gsa);
  const std::string text = ablation_text(plan);
  CHECK(text.find("base+GSA+LSA") != std::string::npos);
  CHECK(text.find("L_DM+L_LSA+L_GSA") != std::string::npos);
}
