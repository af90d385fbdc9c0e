#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "saan/checkpoint.hpp"
#include "saan/io.hpp"
#include "saan/network.hpp"
#include "test_util.hpp"

using namespace saan;
using saan::test::random_tensor;

namespace {

const ModelParams<float>& standard_params() {
  static const ModelParams<float> p = init_params(NetworkConfig::standard(), 1);
  return p;
}

Tensor random_image(std::uint64_t seed, std::size_t h, std::size_t w, std::size_t n = 1) {
  Rng rng(seed);
  return random_tensor(rng, {n, 1, h, w}, 0.0, 1.0).cast<float>();
}

}  // namespace

TEST_CASE("parameter inventory") {
  const auto specs = param_inventory(NetworkConfig::standard());
  const ModelParams<float>& p = standard_params();
  CHECK(p.size() == specs.size());
  CHECK(p.at("mfe.branch1.conv0.weight").dims() == Shape{16, 1, 9, 9});
  CHECK(p.at("mfe.branch3.conv2.weight").dims() == Shape{8, 8, 3, 3});
  CHECK(p.at("gsa.fc0.weight").dims() == Shape{32, 16});
  CHECK(p.at("lsa.fc2.weight").dims() == Shape{3, 16, 1, 1});
  CHECK(p.at("fn.conv0.weight").dims() == Shape{64, 48, 3, 3});
  CHECK(p.at("fn.deconv1.weight").dims() == Shape{16, 16, 4, 4});
  CHECK(p.at("fn.out.weight").dims() == Shape{1, 16, 1, 1});
  for (const auto& s : specs)
    if (s.name.ends_with(".bias"))
      for (float v : p.at(s.name).data()) CHECK(v == 0.0f);
  CHECK_THROWS_AS(p.at("nope"), InventoryError);
  CHECK(NetworkConfig::tiny().feature_depths() == std::array<std::size_t, 3>{6, 4, 2});
}

TEST_CASE("initialization is seeded per tensor") {
  const auto a = init_params(NetworkConfig::tiny(), 5), b = init_params(NetworkConfig::tiny(), 5);
  CHECK(a == b);
  CHECK_FALSE(a == init_params(NetworkConfig::tiny(), 6));

  // Sample std of a large weight tensor is close to sqrt(2 / fan_in).
  const Tensor& w = standard_params().at("fn.conv0.weight");
  double ss = 0.0;
  for (float v : w.data()) ss += static_cast<double>(v) * v;
  CHECK(std::sqrt(ss / static_cast<double>(w.size())) == doctest::Approx(std::sqrt(2.0 / (48 * 9))).epsilon(0.05));

  auto c = a;
  reinit_params(c, NetworkConfig::tiny(), "lsa.", 99);
  CHECK_FALSE(c.at("lsa.conv0.weight") == a.at("lsa.conv0.weight"));
  CHECK(c.at("gsa.conv0.weight") == a.at("gsa.conv0.weight"));
}

TEST_CASE("shape contract") {
  const NetworkConfig cfg = NetworkConfig::standard();
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{63, 65}, {64, 64}, {128, 96}}) {
    const auto out = model_forward(random_image(h * w, h, w), standard_params(), cfg);
    CHECK(out.density.dims() == Shape{1, 1, h, w});
    const std::size_t fh = (h + 3) / 4, fw = (w + 3) / 4;
    CHECK(out.features[0].dims() == Shape{1, 24, fh, fw});
    CHECK(out.features[1].dims() == Shape{1, 16, fh, fw});
    CHECK(out.features[2].dims() == Shape{1, 8, fh, fw});
    CHECK(out.local_maps.dims() == Shape{1, 3, fh, fw});
    CHECK(out.global_scores.dims() == Shape{1, 3});
  }
  CHECK_THROWS_AS(mfe_forward(random_image(1, 62, 64), standard_params(), cfg), DimensionError);
  CHECK_THROWS_AS(model_forward(Tensor({1, 2, 8, 8}), standard_params(), cfg), DimensionError);
}

TEST_CASE("sub-network outputs") {
  const NetworkConfig cfg = NetworkConfig::standard();
  auto p = standard_params();
  const Tensor img = random_image(3, 64, 64, 2);

  const auto f = mfe_forward(img, p, cfg);
  CHECK(f[0].dims() == Shape{2, 24, 16, 16});
  const auto fz = mfe_forward(Tensor({1, 1, 16, 16}), p, cfg);
  for (const auto& t : fz)
    for (float v : t.data()) CHECK(v == 0.0f);

  CHECK(gsa_forward(random_image(4, 37, 50), p, cfg).scores.dims() == Shape{1, 3});
  p.at("gsa.fc1.weight").fill(0.0f);
  const auto gz = gsa_forward(img, p, cfg);
  for (float v : gz.scores.data()) CHECK(v == doctest::Approx(1.0 / 3.0));

  const auto l = lsa_forward(img, p, cfg);
  CHECK(l.scores.dims() == Shape{2, 3, 16, 16});
  for (float v : l.scores.data()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  p.at("lsa.fc2.weight").fill(0.0f);
  const auto lz = lsa_forward(img, p, cfg);
  for (float v : lz.scores.data()) CHECK(v == 0.5f);

  const std::array<Tensor, 3> zeros = {Tensor({1, 24, 4, 4}), Tensor({1, 16, 4, 4}), Tensor({1, 8, 4, 4})};
  const Tensor dm = fusion_forward(zeros, p, cfg);
  CHECK(dm.dims() == Shape{1, 1, 16, 16});
  for (float v : dm.data()) CHECK(v == 0.0f);
  const std::array<Tensor, 3> wrong = {Tensor({1, 20, 4, 4}), Tensor({1, 16, 4, 4}), Tensor({1, 8, 4, 4})};
  CHECK_THROWS_AS(fusion_forward(wrong, p, cfg), DimensionError);
}

TEST_CASE("attention weighting equals the per-entry product") {
  Rng rng(8);
  const std::array<TensorD, 3> f = {random_tensor(rng, {2, 4, 3, 5}), random_tensor(rng, {2, 3, 3, 5}),
                                    random_tensor(rng, {2, 2, 3, 5})};
  const TensorD g = random_tensor(rng, {2, 3}, 0, 1);
  const TensorD l = random_tensor(rng, {2, 3, 3, 5}, 0, 1);
  const auto a = attention_weight(f, g, l);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < f[i].dim(1); ++c)
        for (std::size_t h = 0; h < 3; ++h)
          for (std::size_t w = 0; w < 5; ++w)
            CHECK(a[i].at(n, c, h, w) == g.at(n, i) * l.at(n, i, h, w) * f[i].at(n, c, h, w));

  TensorD g0 = g;
  for (std::size_t n = 0; n < 2; ++n) g0.at(n, 1) = 0.0;
  const auto a0 = attention_weight(f, g0, l);
  for (double v : a0[1].data()) CHECK(v == 0.0);
  const auto same = attention_weight(f, TensorD({2, 3}, 1.0), TensorD({2, 3, 3, 5}, 1.0));
  for (std::size_t i = 0; i < 3; ++i) CHECK(same[i] == f[i]);
}

TEST_CASE("disabled LSA equals forcing l to ones") {
  const NetworkConfig cfg = NetworkConfig::tiny();
  const auto p = init_params(cfg, 3);
  const Tensor img = random_image(5, 32, 32, 2);
  const auto off = model_forward(img, p, cfg, {true, false});
  for (float v : off.local_maps.data()) CHECK(v == 1.0f);
  const auto on = model_forward(img, p, cfg, {true, true});
  const auto weighted = attention_weight(on.features, on.global_scores, Tensor(on.local_maps.dims(), 1.0f));
  const Tensor dm = fusion_forward(weighted, p, cfg);
  CHECK(crop_top_left(dm, 32, 32) == off.density);

  const auto base = model_forward(img, p, cfg, {false, false});
  for (float v : base.global_scores.data()) CHECK(v == 1.0f);
}

TEST_CASE("forward is deterministic and the tape does not change results") {
  const NetworkConfig cfg = NetworkConfig::tiny();
  const auto p = init_params(cfg, 3);
  const Tensor img = random_image(6, 36, 28);
  TapeHandle<float> tape;
  const auto a = model_forward(img, p, cfg, {}, &tape);
  const auto b = model_forward(img, p, cfg);
  CHECK(a.density == b.density);
  CHECK(a.local_maps == b.local_maps);
}

TEST_CASE("backward returns zero gradients for disabled modules") {
  const NetworkConfig cfg = NetworkConfig::tiny();
  const auto p = init_params(cfg, 3);
  TapeHandle<float> tape;
  const auto out = model_forward(random_image(7, 16, 16), p, cfg, {true, false}, &tape);
  OutputGrads<float> g;
  g.density = Tensor(out.density.dims(), 1.0f);
  const auto grads = model_backward(tape, p, cfg, g);
  CHECK(grads.size() == p.size());
  for (float v : grads.at("lsa.conv3.weight").data()) CHECK(v == 0.0f);
  double s = 0.0;
  for (float v : grads.at("fn.out.bias").data()) s += v;
  CHECK(s == doctest::Approx(256.0));

  TapeHandle<float> empty;
  CHECK_THROWS_AS(model_backward(empty, p, cfg, g), Error);
}

TEST_CASE("count_from_density") {
  CHECK(count_from_density(Tensor({1, 1, 4, 4}))[0] == 0.0);
  Tensor one({1, 1, 3, 3});
  one[4] = 3.5f;
  CHECK(count_from_density(one)[0] == 3.5);

  Rng rng(10);
  const Tensor dm = random_tensor(rng, {2, 1, 100, 100}, 0, 0.01).cast<float>();
  const auto counts = count_from_density(dm);
  for (std::size_t n = 0; n < 2; ++n) {
    double naive = 0.0;
    for (std::size_t i = 0; i < 10000; ++i) naive += static_cast<double>(dm[n * 10000 + i]);
    CHECK(std::abs(counts[n] - naive) < 1e-4);
  }
}

TEST_CASE("checkpoint codec") {
  const auto p = init_params(NetworkConfig::tiny(), 4);
  const std::string bytes = encode_checkpoint(p);
  CHECK(bytes.substr(0, 8) == "SAANCK1\n");
  const auto back = decode_checkpoint(bytes);
  CHECK(back == p);
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(detect_config(back) == NetworkConfig::tiny());

  const Tensor img = random_image(9, 20, 20);
  CHECK(model_forward(img, back, NetworkConfig::tiny()).density ==
        model_forward(img, p, NetworkConfig::tiny()).density);

  try {
    validate_inventory(p, NetworkConfig::standard());
    FAIL("expected an InventoryError");
  } catch (const InventoryError& e) {
    CHECK_FALSE(e.param().empty());
  }
  auto extra = p;
  extra.add("mfe.branch4.conv0.weight", Tensor({1}));
  CHECK_THROWS_AS(validate_inventory(extra, NetworkConfig::tiny()), InventoryError);

  std::string bad = bytes;
  bad[3] = 'x';
  CHECK_THROWS_AS(decode_checkpoint(bad), ParseError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), ParseError);
  CHECK_THROWS_AS(decode_checkpoint(bytes + "zz"), ParseError);
  std::string version = bytes;
  version[8] = 2;
  CHECK_THROWS_AS(decode_checkpoint(version), ParseError);

  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "saan_test.ck";
  save_checkpoint(path, p);
  CHECK(load_checkpoint(path, NetworkConfig::tiny()) == p);
  CHECK_THROWS_AS(load_checkpoint(path, NetworkConfig::standard()), InventoryError);
  fs::remove(path);
}
