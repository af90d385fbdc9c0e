#include "saan/gradcheck_suite.hpp"

#include <cmath>
#include <functional>

#include "saan/gradcheck.hpp"
#include "saan/kernels.hpp"
#include "saan/losses.hpp"
#include "saan/network.hpp"
#include "saan/rng.hpp"

namespace saan {

namespace {

constexpr double kStep = 1e-3;

TensorD random_tensor(Rng& rng, Shape dims, double lo = -1.0, double hi = 1.0) {
  TensorD t(std::move(dims));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

double dot(const TensorD& a, const TensorD& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Distinct values at least 0.01 apart in random order, so no max-pool window
// can change its winner under a 1e-3 perturbation.
TensorD separated_tensor(Rng& rng, Shape dims) {
  TensorD t(std::move(dims));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.01 * static_cast<double>(i) - 0.5;
  for (std::size_t i = t.size(); i > 1; --i)
    std::swap(t[i - 1], t[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
  return t;
}

GradCheckResult finish(std::string name, const GradCheckReport& r) {
  return {std::move(name), r.max_rel_error, r.checked, r.skipped};
}

GradCheckResult check_conv(Rng& rng, std::size_t k, std::uint64_t seed) {
  TensorD x = random_tensor(rng, {2, 3, 5, 6});
  TensorD w = random_tensor(rng, {4, 3, k, k});
  TensorD b = random_tensor(rng, {4});
  const TensorD r = random_tensor(rng, {2, 4, 5, 6});
  auto g = conv2d_backward(x, w, r);
  auto f = [&] { return dot(conv2d(x, w, b), r); };
  return finish("conv2d_k" + std::to_string(k),
                grad_check(f, {{&x, &g.input}, {&w, &g.weight}, {&b, &g.bias}}, kStep, seed));
}

GradCheckResult check_deconv(Rng& rng, std::uint64_t seed) {
  TensorD x = random_tensor(rng, {2, 3, 3, 4});
  TensorD w = random_tensor(rng, {3, 2, 4, 4});
  TensorD b = random_tensor(rng, {2});
  const TensorD r = random_tensor(rng, {2, 2, 6, 8});
  auto g = conv2d_transpose_backward(x, w, r);
  auto f = [&] { return dot(conv2d_transpose(x, w, b), r); };
  return finish("conv2d_transpose", grad_check(f, {{&x, &g.input}, {&w, &g.weight}, {&b, &g.bias}}, kStep, seed));
}

GradCheckResult check_maxpool(Rng& rng, std::uint64_t seed) {
  TensorD x = separated_tensor(rng, {2, 2, 6, 8});
  const TensorD r = random_tensor(rng, {2, 2, 3, 4});
  auto p = maxpool2(x);
  const TensorD gx = maxpool2_backward(r, p.argmax, x.dims());
  auto f = [&] { return dot(maxpool2(x).output, r); };
  return finish("maxpool2", grad_check(f, {{&x, &gx}}, kStep, seed));
}

GradCheckResult check_fc(Rng& rng, std::uint64_t seed) {
  TensorD x = random_tensor(rng, {3, 5});
  TensorD w = random_tensor(rng, {5, 4});
  TensorD b = random_tensor(rng, {4});
  const TensorD r = random_tensor(rng, {3, 4});
  auto g = fully_connected_backward(x, w, r);
  auto f = [&] { return dot(fully_connected(x, w, b), r); };
  return finish("fully_connected", grad_check(f, {{&x, &g.input}, {&w, &g.weight}, {&b, &g.bias}}, kStep, seed));
}

GradCheckResult check_relu(Rng& rng, std::uint64_t seed) {
  TensorD x = random_tensor(rng, {2, 3, 4, 4});
  const TensorD r = random_tensor(rng, x.dims());
  const TensorD gx = relu_backward(x, r);
  auto f = [&] { return dot(relu(x), r); };
  GradCheckInput in{&x, &gx, [&](std::size_t i) { return std::abs(x[i]) < 2 * kStep; }, 0};
  return finish("relu", grad_check(f, {in}, kStep, seed));
}

GradCheckResult check_sigmoid(Rng& rng, std::uint64_t seed) {
  TensorD x = random_tensor(rng, {2, 3, 4, 4}, -4.0, 4.0);
  const TensorD r = random_tensor(rng, x.dims());
  const TensorD gx = sigmoid_backward(sigmoid(x), r);
  auto f = [&] { return dot(sigmoid(x), r); };
  return finish("sigmoid", grad_check(f, {{&x, &gx}}, kStep, seed));
}

GradCheckResult check_softmax(Rng& rng, std::uint64_t seed) {
  TensorD x = random_tensor(rng, {4, 3}, -3.0, 3.0);
  const TensorD r = random_tensor(rng, x.dims());
  const TensorD gx = softmax_backward(softmax(x), r);
  auto f = [&] { return dot(softmax(x), r); };
  return finish("softmax", grad_check(f, {{&x, &gx}}, kStep, seed));
}

GradCheckResult check_gap(Rng& rng, std::uint64_t seed) {
  TensorD x = random_tensor(rng, {2, 3, 3, 5});
  const TensorD r = random_tensor(rng, {2, 3});
  const TensorD gx = global_avg_pool_backward(r, x.dims());
  auto f = [&] { return dot(global_avg_pool(x), r); };
  return finish("global_avg_pool", grad_check(f, {{&x, &gx}}, kStep, seed));
}

GradCheckResult check_scale_mul(Rng& rng, std::uint64_t seed) {
  TensorD feat = random_tensor(rng, {2, 3, 4, 5});
  TensorD glob = random_tensor(rng, {2}, 0.0, 1.0);
  TensorD loc = random_tensor(rng, {2, 1, 4, 5}, 0.0, 1.0);
  const TensorD r = random_tensor(rng, feat.dims());
  auto g = scale_broadcast_mul_backward(feat, glob, loc, r);
  auto f = [&] { return dot(scale_broadcast_mul(feat, glob, loc), r); };
  return finish("scale_broadcast_mul",
                grad_check(f, {{&feat, &g.feature}, {&glob, &g.global}, {&loc, &g.local}}, kStep, seed));
}

GradCheckResult check_concat(Rng& rng, std::uint64_t seed) {
  TensorD a = random_tensor(rng, {2, 2, 3, 3});
  TensorD b = random_tensor(rng, {2, 3, 3, 3});
  const TensorD r = random_tensor(rng, {2, 5, 3, 3});
  const std::size_t channels[2] = {2, 3};
  auto parts = split_channels<double>(r, channels);
  auto f = [&] {
    const TensorD* in[2] = {&a, &b};
    return dot(concat_channels<double>(in), r);
  };
  return finish("concat_channels", grad_check(f, {{&a, &parts[0]}, {&b, &parts[1]}}, kStep, seed));
}

GradCheckResult check_pad_even(Rng& rng, std::uint64_t seed) {
  TensorD x = random_tensor(rng, {2, 2, 3, 5});
  const TensorD r = random_tensor(rng, {2, 2, 4, 6});
  const TensorD gx = pad_to_even_backward(r, x.dims());
  auto f = [&] { return dot(pad_to_even(x), r); };
  return finish("pad_to_even", grad_check(f, {{&x, &gx}}, kStep, seed));
}

GradCheckResult check_crop(Rng& rng, std::uint64_t seed) {
  TensorD x = random_tensor(rng, {2, 1, 8, 8});
  const TensorD r = random_tensor(rng, {2, 1, 7, 5});
  const TensorD gx = crop_top_left_backward(r, x.dims());
  auto f = [&] { return dot(crop_top_left(x, 7, 5), r); };
  return finish("crop_top_left", grad_check(f, {{&x, &gx}}, kStep, seed));
}

LocalScaleMap random_label_map(Rng& rng, std::size_t h, std::size_t w) {
  LocalScaleMap m{h, w, std::vector<std::uint8_t>(h * w)};
  for (auto& c : m.classes) c = static_cast<std::uint8_t>(rng.uniform_int(1, 3));
  return m;
}

GradCheckResult check_loss_dm(Rng& rng, std::uint64_t seed) {
  TensorD pred = random_tensor(rng, {3, 1, 4, 5});
  const TensorD gt = random_tensor(rng, pred.dims());
  const TensorD g = loss_dm(pred, gt).grad;
  auto f = [&] { return loss_dm(pred, gt).value; };
  return finish("loss_dm", grad_check(f, {{&pred, &g}}, kStep, seed));
}

GradCheckResult check_loss_gsa(Rng& rng, std::uint64_t seed) {
  TensorD logits = random_tensor(rng, {4, 3}, -2.0, 2.0);
  const std::vector<int> classes = {1, 2, 3, 2};
  const TensorD g = loss_gsa(logits, classes).grad;
  auto f = [&] { return loss_gsa(logits, classes).value; };
  return finish("loss_gsa", grad_check(f, {{&logits, &g}}, kStep, seed));
}

GradCheckResult check_loss_lsa(Rng& rng, std::uint64_t seed) {
  TensorD logits = random_tensor(rng, {2, 3, 3, 4}, -2.0, 2.0);
  const std::vector<LocalScaleMap> labels = {random_label_map(rng, 3, 4), random_label_map(rng, 3, 4)};
  const TensorD g = loss_lsa(logits, labels).grad;
  auto f = [&] { return loss_lsa(logits, labels).value; };
  return finish("loss_lsa", grad_check(f, {{&logits, &g}}, kStep, seed));
}

// The weighted combination, differentiated w.r.t. all three model outputs.
GradCheckResult check_loss_final(Rng& rng, std::uint64_t seed) {
  ForwardOutputs<double> out;
  out.density = random_tensor(rng, {2, 1, 8, 8});
  out.global_logits = random_tensor(rng, {2, 3}, -2.0, 2.0);
  out.local_logits = random_tensor(rng, {2, 3, 2, 2}, -2.0, 2.0);
  LossTargets<double> targets;
  targets.density = random_tensor(rng, {2, 1, 8, 8});
  targets.global_classes = {3, 1};
  targets.local_maps = {random_label_map(rng, 2, 2), random_label_map(rng, 2, 2)};
  const LossWeights weights{0.3, 0.7};
  const auto grads = compute_loss(out, targets, weights).grads;
  auto f = [&] { return compute_loss(out, targets, weights).report.l_final; };
  return finish("loss_final", grad_check(f, {{&out.density, &grads.density},
                                             {&out.global_logits, &grads.global_logits},
                                             {&out.local_logits, &grads.local_logits}},
                                         kStep, seed));
}

// Tiny config, 8x8 input, every parameter tensor, through L_final.
GradCheckResult check_end_to_end(Rng& rng, std::uint64_t seed, AttentionFlags flags, std::string name) {
  const NetworkConfig config = NetworkConfig::tiny();
  ModelParams<double> params = init_params(config, mix_seed(seed, 7)).cast<double>();
  // Non-zero biases so ReLUs are not all on the same side at initialization.
  for (auto& [pname, t] : params)
    if (pname.ends_with(".bias"))
      for (auto& v : t.data()) v = rng.uniform(-0.1, 0.1);

  const TensorD image = random_tensor(rng, {2, 1, 8, 8}, 0.0, 1.0);
  LossTargets<double> targets;
  targets.density = random_tensor(rng, {2, 1, 8, 8}, 0.0, 0.1);
  targets.global_classes = {1, 3};
  targets.local_maps = {random_label_map(rng, 2, 2), random_label_map(rng, 2, 2)};
  const LossWeights weights{0.5, 0.5};
  const LossTerms terms{flags.global, flags.local};

  TapeHandle<double> tape;
  auto out = model_forward(image, params, config, flags, &tape);
  auto loss = compute_loss(out, targets, weights, terms);
  const ModelParams<double> grads = model_backward(tape, params, config, loss.grads);

  auto f = [&] {
    auto o = model_forward(image, params, config, flags, &tape);
    return compute_loss(o, targets, weights, terms).report.l_final;
  };
  auto sig = [&] { return branch_signature(tape); };

  std::vector<GradCheckInput> inputs;
  for (auto& [pname, t] : params) {
    const bool disabled = (!flags.global && pname.starts_with("gsa.")) || (!flags.local && pname.starts_with("lsa."));
    if (disabled) continue;
    inputs.push_back({&t, &grads.at(pname)});
  }
  return finish(std::move(name), grad_check(f, std::move(inputs), kStep, seed, sig));
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCheckResult> out;
  auto sub = [&](std::uint64_t k) { return mix_seed(seed, k); };
  out.push_back(check_conv(rng, 1, sub(1)));
  out.push_back(check_conv(rng, 3, sub(2)));
  out.push_back(check_conv(rng, 5, sub(3)));
  out.push_back(check_deconv(rng, sub(4)));
  out.push_back(check_maxpool(rng, sub(5)));
  out.push_back(check_fc(rng, sub(6)));
  out.push_back(check_relu(rng, sub(7)));
  out.push_back(check_sigmoid(rng, sub(8)));
  out.push_back(check_softmax(rng, sub(9)));
  out.push_back(check_gap(rng, sub(10)));
  out.push_back(check_scale_mul(rng, sub(11)));
  out.push_back(check_concat(rng, sub(12)));
  out.push_back(check_pad_even(rng, sub(13)));
  out.push_back(check_crop(rng, sub(14)));
  out.push_back(check_loss_dm(rng, sub(15)));
  out.push_back(check_loss_gsa(rng, sub(16)));
  out.push_back(check_loss_lsa(rng, sub(17)));
  out.push_back(check_loss_final(rng, sub(18)));
  out.push_back(check_end_to_end(rng, sub(19), {true, true}, "model_end_to_end"));
  out.push_back(check_end_to_end(rng, sub(20), {true, false}, "model_end_to_end_phase1"));
  return out;
}

}  // namespace saan
