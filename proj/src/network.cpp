#include "saan/network.hpp"

#include <algorithm>
#include <cmath>

#include "saan/error.hpp"
#include "saan/rng.hpp"

namespace saan {

// ----------------------------------------------------------------- config

NetworkConfig NetworkConfig::standard() {
  NetworkConfig c;
  c.name = "standard";
  c.mfe = {{{{9, 7, 7}, {16, 20, 24}}, {{7, 5, 5}, {12, 14, 16}}, {{5, 3, 3}, {8, 8, 8}}}};
  c.gsa_widths = {8, 16, 32};
  c.gsa_hidden = 16;
  c.lsa_widths = {8, 8, 16, 16, 32, 32, 32, 32};
  c.lsa_hidden = {32, 16};
  c.fn_widths = {64, 32};
  c.fn_deconv = {16, 16};
  return c;
}

NetworkConfig NetworkConfig::tiny() {
  NetworkConfig c = standard();
  c.name = "tiny";
  auto quarter = [](std::size_t& v) { v = std::max<std::size_t>(1, v / 4); };
  for (auto& b : c.mfe) std::for_each(b.widths.begin(), b.widths.end(), quarter);
  std::for_each(c.gsa_widths.begin(), c.gsa_widths.end(), quarter);
  quarter(c.gsa_hidden);
  std::for_each(c.lsa_widths.begin(), c.lsa_widths.end(), quarter);
  std::for_each(c.lsa_hidden.begin(), c.lsa_hidden.end(), quarter);
  std::for_each(c.fn_widths.begin(), c.fn_widths.end(), quarter);
  std::for_each(c.fn_deconv.begin(), c.fn_deconv.end(), quarter);
  return c;
}

std::array<std::size_t, 3> NetworkConfig::feature_depths() const {
  return {mfe[0].widths[2], mfe[1].widths[2], mfe[2].widths[2]};
}

// ------------------------------------------------------------ architecture

namespace {

enum class Op { Conv, Pool, Deconv };

struct Layer {
  Op op;
  std::string name;
  std::size_t in = 0, out = 0, kernel = 0;
  bool relu = false;
  bool pad_even = false;
};

using Stack = std::vector<Layer>;

Layer conv(std::string name, std::size_t k, std::size_t in, std::size_t out, bool relu = true) {
  return {Op::Conv, std::move(name), in, out, k, relu, false};
}
Layer pool(bool pad_even = false) { return {Op::Pool, {}, 0, 0, 0, false, pad_even}; }
Layer deconv(std::string name, std::size_t in, std::size_t out) {
  return {Op::Deconv, std::move(name), in, out, 4, true, false};
}

struct Architecture {
  std::array<Stack, 3> mfe;
  Stack gsa;
  std::size_t gsa_features = 0;
  std::size_t gsa_hidden = 0;
  Stack lsa;
  Stack fn;
};

Architecture build(const NetworkConfig& c) {
  Architecture a;
  for (std::size_t b = 0; b < 3; ++b) {
    const auto& br = c.mfe[b];
    const std::string p = "mfe.branch" + std::to_string(b + 1) + ".";
    a.mfe[b] = {conv(p + "conv0", br.kernels[0], 1, br.widths[0]), pool(),
                conv(p + "conv1", br.kernels[1], br.widths[0], br.widths[1]), pool(),
                conv(p + "conv2", br.kernels[2], br.widths[1], br.widths[2])};
  }
  const auto& g = c.gsa_widths;
  a.gsa = {conv("gsa.conv0", 7, 1, g[0]), pool(true), conv("gsa.conv1", 5, g[0], g[1]), pool(true),
           conv("gsa.conv2", 3, g[1], g[2]), pool(true)};
  a.gsa_features = g[2];
  a.gsa_hidden = c.gsa_hidden;

  const auto& l = c.lsa_widths;
  a.lsa = {conv("lsa.conv0", 3, 1, l[0]),    conv("lsa.conv1", 3, l[0], l[1]), pool(),
           conv("lsa.conv2", 3, l[1], l[2]), conv("lsa.conv3", 3, l[2], l[3]), pool(),
           conv("lsa.conv4", 3, l[3], l[4]), conv("lsa.conv5", 3, l[4], l[5]),
           conv("lsa.conv6", 3, l[5], l[6]), conv("lsa.conv7", 3, l[6], l[7]),
           conv("lsa.fc0", 1, l[7], c.lsa_hidden[0]),
           conv("lsa.fc1", 1, c.lsa_hidden[0], c.lsa_hidden[1]),
           conv("lsa.fc2", 1, c.lsa_hidden[1], 3, false)};

  const auto d = c.feature_depths();
  a.fn = {conv("fn.conv0", 3, d[0] + d[1] + d[2], c.fn_widths[0]),
          conv("fn.conv1", 3, c.fn_widths[0], c.fn_widths[1]),
          deconv("fn.deconv0", c.fn_widths[1], c.fn_deconv[0]),
          deconv("fn.deconv1", c.fn_deconv[0], c.fn_deconv[1]),
          conv("fn.out", 1, c.fn_deconv[1], 1, false)};
  return a;
}

void add_stack_specs(const Stack& s, std::vector<ParamSpec>& out) {
  for (const auto& l : s) {
    if (l.op == Op::Conv) {
      out.push_back({l.name + ".weight", {l.out, l.in, l.kernel, l.kernel}, l.in * l.kernel * l.kernel});
      out.push_back({l.name + ".bias", {l.out}, 0});
    } else if (l.op == Op::Deconv) {
      // Stride 2: each output pixel sees a 2x2 subset of the 4x4 taps per channel.
      out.push_back({l.name + ".weight", {l.in, l.out, 4, 4}, l.in * 4});
      out.push_back({l.name + ".bias", {l.out}, 0});
    }
  }
}

}  // namespace

std::vector<ParamSpec> param_inventory(const NetworkConfig& config) {
  const Architecture a = build(config);
  std::vector<ParamSpec> specs;
  for (const auto& s : a.mfe) add_stack_specs(s, specs);
  add_stack_specs(a.gsa, specs);
  specs.push_back({"gsa.fc0.weight", {a.gsa_features, a.gsa_hidden}, a.gsa_features});
  specs.push_back({"gsa.fc0.bias", {a.gsa_hidden}, 0});
  specs.push_back({"gsa.fc1.weight", {a.gsa_hidden, 3}, a.gsa_hidden});
  specs.push_back({"gsa.fc1.bias", {3}, 0});
  add_stack_specs(a.lsa, specs);
  add_stack_specs(a.fn, specs);
  return specs;
}

// ------------------------------------------------------------ ModelParams

template <typename T>
void ModelParams<T>::add(std::string name, BasicTensor<T> tensor) {
  if (tensors_.count(name)) throw ValidationError("duplicate parameter '" + name + "'");
  tensors_.emplace(std::move(name), std::move(tensor));
}

template <typename T>
BasicTensor<T>& ModelParams<T>::at(std::string_view name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw InventoryError(std::string(name), "no such parameter");
  return it->second;
}

template <typename T>
const BasicTensor<T>& ModelParams<T>::at(std::string_view name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw InventoryError(std::string(name), "no such parameter");
  return it->second;
}

template <typename T>
std::size_t ModelParams<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros_like() const {
  ModelParams<T> out;
  for (const auto& [name, t] : tensors_) out.add(name, BasicTensor<T>(t.dims()));
  return out;
}

template class ModelParams<float>;
template class ModelParams<double>;

namespace {

Tensor draw_param(const ParamSpec& spec, std::uint64_t seed) {
  Tensor t(spec.shape);
  if (spec.fan_in == 0) return t;
  Rng rng(mix_seed(seed, hash_name(spec.name)));
  const double std_dev = std::sqrt(2.0 / static_cast<double>(spec.fan_in));
  for (auto& v : t.data()) v = static_cast<float>(std_dev * rng.normal());
  return t;
}

}  // namespace

ModelParams<float> init_params(const NetworkConfig& config, std::uint64_t seed) {
  ModelParams<float> params;
  for (const auto& spec : param_inventory(config)) params.add(spec.name, draw_param(spec, seed));
  return params;
}

void reinit_params(ModelParams<float>& params, const NetworkConfig& config, std::string_view prefix,
                   std::uint64_t seed) {
  for (const auto& spec : param_inventory(config)) {
    if (std::string_view(spec.name).substr(0, prefix.size()) == prefix) {
      params.at(spec.name) = draw_param(spec, seed);
    }
  }
}

// ------------------------------------------------------------ stack runner

namespace {

template <typename T>
struct StackTape {
  std::vector<BasicTensor<T>> acts;  // acts[0] = input, acts[i+1] = output of layer i
  std::vector<std::vector<std::size_t>> argmax;
  std::vector<Shape> pooled_dims;  // pool input after even-padding
};

template <typename T>
BasicTensor<T> apply_layer(const Layer& l, const ModelParams<T>& p, const BasicTensor<T>& x,
                           std::vector<std::size_t>* argmax, Shape* pooled_dims) {
  switch (l.op) {
    case Op::Conv: {
      auto y = conv2d(x, p.at(l.name + ".weight"), p.at(l.name + ".bias"));
      return l.relu ? relu(y) : y;
    }
    case Op::Deconv: {
      auto y = conv2d_transpose(x, p.at(l.name + ".weight"), p.at(l.name + ".bias"));
      return l.relu ? relu(y) : y;
    }
    case Op::Pool: {
      PoolResult<T> r = l.pad_even ? maxpool2(pad_to_even(x)) : maxpool2(x);
      if (pooled_dims) {
        *pooled_dims = x.dims();
        (*pooled_dims)[2] += (*pooled_dims)[2] % 2 * (l.pad_even ? 1 : 0);
        (*pooled_dims)[3] += (*pooled_dims)[3] % 2 * (l.pad_even ? 1 : 0);
      }
      if (argmax) *argmax = std::move(r.argmax);
      return std::move(r.output);
    }
  }
  return {};
}

template <typename T>
BasicTensor<T> run_stack(const Stack& s, const ModelParams<T>& p, BasicTensor<T> x,
                         StackTape<T>* tape) {
  if (!tape) {
    for (const auto& l : s) x = apply_layer(l, p, x, nullptr, nullptr);
    return x;
  }
  tape->acts.clear();
  tape->argmax.assign(s.size(), {});
  tape->pooled_dims.assign(s.size(), {});
  tape->acts.push_back(std::move(x));
  for (std::size_t i = 0; i < s.size(); ++i) {
    tape->acts.push_back(apply_layer(s[i], p, tape->acts.back(), &tape->argmax[i], &tape->pooled_dims[i]));
  }
  return tape->acts.back();
}

template <typename T>
BasicTensor<T> backprop_stack(const Stack& s, const ModelParams<T>& p, const StackTape<T>& t,
                              BasicTensor<T> dy, ModelParams<T>& grads, bool need_input_grad) {
  for (std::size_t i = s.size(); i-- > 0;) {
    const Layer& l = s[i];
    const BasicTensor<T>& x = t.acts[i];
    const BasicTensor<T>& y = t.acts[i + 1];
    const bool need = need_input_grad || i > 0;
    switch (l.op) {
      case Op::Conv:
      case Op::Deconv: {
        if (l.relu) dy = relu_backward(y, dy);
        const auto& w = p.at(l.name + ".weight");
        LayerGrad<T> g = l.op == Op::Conv ? conv2d_backward(x, w, dy, need)
                                          : conv2d_transpose_backward(x, w, dy, need);
        grads.at(l.name + ".weight") = std::move(g.weight);
        grads.at(l.name + ".bias") = std::move(g.bias);
        dy = std::move(g.input);
        break;
      }
      case Op::Pool: {
        BasicTensor<T> d = maxpool2_backward(dy, t.argmax[i], t.pooled_dims[i]);
        dy = l.pad_even ? pad_to_even_backward(d, x.dims()) : std::move(d);
        break;
      }
    }
    if (!need) return {};
  }
  return dy;
}

template <typename T>
BasicTensor<T> column(const BasicTensor<T>& g, std::size_t i) {
  BasicTensor<T> out({g.dim(0)});
  for (std::size_t n = 0; n < g.dim(0); ++n) out[n] = g.at(n, i);
  return out;
}

template <typename T>
BasicTensor<T> channel(const BasicTensor<T>& l, std::size_t i) {
  const std::size_t N = l.dim(0), C = l.dim(1), plane = l.dim(2) * l.dim(3);
  BasicTensor<T> out({N, 1, l.dim(2), l.dim(3)});
  for (std::size_t n = 0; n < N; ++n)
    std::copy_n(l.ptr() + (n * C + i) * plane, plane, out.ptr() + n * plane);
  return out;
}

void require_image(const Shape& dims, const char* op) {
  if (dims.size() != 4) throw DimensionError(op, "rank", "expected [N,1,H,W], got " + shape_string(dims));
  if (dims[1] != 1) throw DimensionError(op, "channels", "expected 1 channel, got " + std::to_string(dims[1]));
}

void require_multiple_of_4(const Shape& dims, const char* op) {
  if (dims[2] % 4 != 0 || dims[3] % 4 != 0) {
    throw DimensionError(op, dims[2] % 4 ? "height" : "width",
                         shape_string(dims) + " is not divisible by 4; pad the image first "
                                              "(model_forward pads automatically)");
  }
}

}  // namespace

// ---------------------------------------------------------------- forward

template <typename T>
struct ForwardTape {
  NetworkConfig config;
  AttentionFlags flags;
  Shape image_dims;
  Shape padded_dims;
  std::array<StackTape<T>, 3> mfe;
  StackTape<T> gsa;
  BasicTensor<T> gsa_pooled;
  BasicTensor<T> gsa_hidden;
  StackTape<T> lsa;
  StackTape<T> fn;
  std::array<BasicTensor<T>, 3> features;
  BasicTensor<T> global_scores;
  BasicTensor<T> local_maps;
};

template <typename T>
TapeHandle<T>::TapeHandle() : tape_(std::make_unique<ForwardTape<T>>()) {}
template <typename T>
TapeHandle<T>::~TapeHandle() = default;
template <typename T>
TapeHandle<T>::TapeHandle(TapeHandle&&) noexcept = default;
template <typename T>
TapeHandle<T>& TapeHandle<T>::operator=(TapeHandle&&) noexcept = default;

template class TapeHandle<float>;
template class TapeHandle<double>;

namespace {

template <typename T>
AttentionOutputs<T> run_gsa(const Architecture& a, const BasicTensor<T>& x, const ModelParams<T>& p,
                            ForwardTape<T>* tape) {
  BasicTensor<T> s = run_stack(a.gsa, p, x, tape ? &tape->gsa : nullptr);
  BasicTensor<T> pooled = global_avg_pool(s);
  BasicTensor<T> hidden = relu(fully_connected(pooled, p.at("gsa.fc0.weight"), p.at("gsa.fc0.bias")));
  AttentionOutputs<T> out;
  out.logits = fully_connected(hidden, p.at("gsa.fc1.weight"), p.at("gsa.fc1.bias"));
  out.scores = softmax(out.logits);
  if (tape) {
    tape->gsa_pooled = std::move(pooled);
    tape->gsa_hidden = std::move(hidden);
  }
  return out;
}

template <typename T>
AttentionOutputs<T> run_lsa(const Architecture& a, const BasicTensor<T>& x, const ModelParams<T>& p,
                            ForwardTape<T>* tape) {
  AttentionOutputs<T> out;
  out.logits = run_stack(a.lsa, p, x, tape ? &tape->lsa : nullptr);
  out.scores = sigmoid(out.logits);
  return out;
}

}  // namespace

template <typename T>
std::array<BasicTensor<T>, 3> mfe_forward(const BasicTensor<T>& image, const ModelParams<T>& params,
                                          const NetworkConfig& config) {
  require_image(image.dims(), "mfe_forward");
  require_multiple_of_4(image.dims(), "mfe_forward");
  const Architecture a = build(config);
  std::array<BasicTensor<T>, 3> f;
  for (std::size_t b = 0; b < 3; ++b) f[b] = run_stack<T>(a.mfe[b], params, image, nullptr);
  return f;
}

template <typename T>
AttentionOutputs<T> gsa_forward(const BasicTensor<T>& image, const ModelParams<T>& params,
                                const NetworkConfig& config) {
  require_image(image.dims(), "gsa_forward");
  return run_gsa<T>(build(config), image, params, nullptr);
}

template <typename T>
AttentionOutputs<T> lsa_forward(const BasicTensor<T>& image, const ModelParams<T>& params,
                                const NetworkConfig& config) {
  require_image(image.dims(), "lsa_forward");
  require_multiple_of_4(image.dims(), "lsa_forward");
  return run_lsa<T>(build(config), image, params, nullptr);
}

template <typename T>
std::array<BasicTensor<T>, 3> attention_weight(const std::array<BasicTensor<T>, 3>& features,
                                               const BasicTensor<T>& global_scores,
                                               const BasicTensor<T>& local_maps) {
  require_rank(global_scores, 2, "attention_weight");
  require_rank(local_maps, 4, "attention_weight");
  if (global_scores.dim(1) != 3 || local_maps.dim(1) != 3) {
    throw DimensionError("attention_weight", "scales", "expected 3 global scores and 3 local maps");
  }
  std::array<BasicTensor<T>, 3> out;
  for (std::size_t i = 0; i < 3; ++i)
    out[i] = scale_broadcast_mul(features[i], column(global_scores, i), channel(local_maps, i));
  return out;
}

template <typename T>
BasicTensor<T> fusion_forward(const std::array<BasicTensor<T>, 3>& weighted,
                              const ModelParams<T>& params, const NetworkConfig& config) {
  const auto depths = config.feature_depths();
  for (std::size_t i = 0; i < 3; ++i) {
    require_rank(weighted[i], 4, "fusion_forward");
    if (weighted[i].dim(1) != depths[i]) {
      throw DimensionError("fusion_forward", "depth of a" + std::to_string(i + 1),
                           std::to_string(weighted[i].dim(1)) + " vs " + std::to_string(depths[i]));
    }
  }
  const BasicTensor<T>* parts[3] = {&weighted[0], &weighted[1], &weighted[2]};
  return run_stack<T>(build(config).fn, params, concat_channels<T>(parts), nullptr);
}

template <typename T>
ForwardOutputs<T> model_forward(const BasicTensor<T>& image, const ModelParams<T>& params,
                                const NetworkConfig& config, AttentionFlags flags,
                                TapeHandle<T>* handle) {
  require_image(image.dims(), "model_forward");
  const Architecture a = build(config);
  ForwardTape<T>* tape = handle ? &handle->get() : nullptr;

  const std::size_t N = image.dim(0), H = image.dim(2), W = image.dim(3);
  const BasicTensor<T> x = reflect_pad(image, (4 - H % 4) % 4, (4 - W % 4) % 4);
  const std::size_t h = x.dim(2) / 4, w = x.dim(3) / 4;

  ForwardOutputs<T> out;
  for (std::size_t b = 0; b < 3; ++b) out.features[b] = run_stack(a.mfe[b], params, x, tape ? &tape->mfe[b] : nullptr);

  if (flags.global) {
    auto g = run_gsa(a, x, params, tape);
    out.global_logits = std::move(g.logits);
    out.global_scores = std::move(g.scores);
  } else {
    out.global_logits = BasicTensor<T>({N, 3});
    out.global_scores = BasicTensor<T>({N, 3}, T{1});
  }
  if (flags.local) {
    auto l = run_lsa(a, x, params, tape);
    out.local_logits = std::move(l.logits);
    out.local_maps = std::move(l.scores);
  } else {
    out.local_logits = BasicTensor<T>({N, 3, h, w});
    out.local_maps = BasicTensor<T>({N, 3, h, w}, T{1});
  }

  auto weighted = attention_weight(out.features, out.global_scores, out.local_maps);
  const BasicTensor<T>* parts[3] = {&weighted[0], &weighted[1], &weighted[2]};
  BasicTensor<T> dm = run_stack<T>(a.fn, params, concat_channels<T>(parts), tape ? &tape->fn : nullptr);
  out.density = crop_top_left(dm, H, W);

  if (tape) {
    tape->config = config;
    tape->flags = flags;
    tape->image_dims = image.dims();
    tape->padded_dims = x.dims();
    tape->features = out.features;
    tape->global_scores = out.global_scores;
    tape->local_maps = out.local_maps;
  }
  return out;
}

// --------------------------------------------------------------- backward

template <typename T>
ModelParams<T> model_backward(const TapeHandle<T>& handle, const ModelParams<T>& params,
                              const NetworkConfig& config, const OutputGrads<T>& grads) {
  const ForwardTape<T>& t = handle.get();
  if (t.padded_dims.empty()) throw Error("model_backward: tape is empty; run model_forward with a tape first");
  if (!(t.config == config)) throw Error("model_backward: tape was recorded with a different config");
  const Architecture a = build(config);
  ModelParams<T> out = params.zeros_like();

  const std::size_t N = t.image_dims[0];
  const Shape dm_dims{N, 1, t.padded_dims[2], t.padded_dims[3]};
  BasicTensor<T> d_density = grads.density.empty() ? BasicTensor<T>(dm_dims)
                                                   : crop_top_left_backward(grads.density, dm_dims);
  BasicTensor<T> d_cat = backprop_stack(a.fn, params, t.fn, std::move(d_density), out, true);

  const auto depths = config.feature_depths();
  const std::size_t depth_list[3] = {depths[0], depths[1], depths[2]};
  auto d_weighted = split_channels<T>(d_cat, depth_list);

  const std::size_t h = t.local_maps.dim(2), w = t.local_maps.dim(3), plane = h * w;
  BasicTensor<T> d_scores({N, 3});
  BasicTensor<T> d_maps({N, 3, h, w});
  std::array<BasicTensor<T>, 3> d_features;
  for (std::size_t i = 0; i < 3; ++i) {
    auto g = scale_broadcast_mul_backward(t.features[i], column(t.global_scores, i),
                                          channel(t.local_maps, i), d_weighted[i]);
    d_features[i] = std::move(g.feature);
    for (std::size_t n = 0; n < N; ++n) {
      d_scores.at(n, i) = g.global[n];
      std::copy_n(g.local.ptr() + n * plane, plane, d_maps.ptr() + (n * 3 + i) * plane);
    }
  }

  if (t.flags.global) {
    BasicTensor<T> d_logits = softmax_backward(t.global_scores, d_scores);
    if (!grads.global_logits.empty()) {
      for (std::size_t i = 0; i < d_logits.size(); ++i) d_logits[i] += grads.global_logits[i];
    }
    auto fc1 = fully_connected_backward(t.gsa_hidden, params.at("gsa.fc1.weight"), d_logits);
    out.at("gsa.fc1.weight") = std::move(fc1.weight);
    out.at("gsa.fc1.bias") = std::move(fc1.bias);
    auto fc0 = fully_connected_backward(t.gsa_pooled, params.at("gsa.fc0.weight"),
                                        relu_backward(t.gsa_hidden, fc1.input));
    out.at("gsa.fc0.weight") = std::move(fc0.weight);
    out.at("gsa.fc0.bias") = std::move(fc0.bias);
    BasicTensor<T> d_conv = global_avg_pool_backward(fc0.input, t.gsa.acts.back().dims());
    backprop_stack(a.gsa, params, t.gsa, std::move(d_conv), out, false);
  }

  if (t.flags.local) {
    BasicTensor<T> d_logits = sigmoid_backward(t.local_maps, d_maps);
    if (!grads.local_logits.empty()) {
      for (std::size_t i = 0; i < d_logits.size(); ++i) d_logits[i] += grads.local_logits[i];
    }
    backprop_stack(a.lsa, params, t.lsa, std::move(d_logits), out, false);
  }

  for (std::size_t b = 0; b < 3; ++b) {
    backprop_stack(a.mfe[b], params, t.mfe[b], std::move(d_features[b]), out, false);
  }
  return out;
}

// -------------------------------------------------------------- signature

namespace {

struct SignatureHash {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void add(std::uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ULL;
  }
};

template <typename T>
void hash_stack(const Stack& s, const StackTape<T>& t, SignatureHash& out) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].op == Op::Pool) {
      for (std::size_t a : t.argmax[i]) out.add(a);
    } else if (s[i].relu) {
      for (T v : t.acts[i + 1].data()) out.add(v > T{0});
    }
  }
}

}  // namespace

template <typename T>
std::uint64_t branch_signature(const TapeHandle<T>& handle) {
  const ForwardTape<T>& t = handle.get();
  const Architecture a = build(t.config);
  SignatureHash sig;
  for (std::size_t b = 0; b < 3; ++b) hash_stack(a.mfe[b], t.mfe[b], sig);
  if (t.flags.global) {
    hash_stack(a.gsa, t.gsa, sig);
    for (T v : t.gsa_hidden.data()) sig.add(v > T{0});
  }
  if (t.flags.local) hash_stack(a.lsa, t.lsa, sig);
  hash_stack(a.fn, t.fn, sig);
  return sig.h;
}

// ------------------------------------------------------------------ count

namespace {

template <typename T>
T pairwise_sum(const T* p, std::size_t n) {
  if (n <= 16) {
    T s = 0;
    for (std::size_t i = 0; i < n; ++i) s += p[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(p, half) + pairwise_sum(p + half, n - half);
}

}  // namespace

template <typename T>
std::vector<double> count_from_density(const BasicTensor<T>& density) {
  require_rank(density, 4, "count_from_density");
  const std::size_t N = density.dim(0), per = density.size() / N;
  std::vector<double> counts(N);
  for (std::size_t n = 0; n < N; ++n) counts[n] = static_cast<double>(pairwise_sum(density.ptr() + n * per, per));
  return counts;
}

#define SAAN_INSTANTIATE_NETWORK(T)                                                                  \
  template std::array<BasicTensor<T>, 3> mfe_forward(const BasicTensor<T>&, const ModelParams<T>&,   \
                                                     const NetworkConfig&);                          \
  template AttentionOutputs<T> gsa_forward(const BasicTensor<T>&, const ModelParams<T>&,             \
                                           const NetworkConfig&);                                    \
  template AttentionOutputs<T> lsa_forward(const BasicTensor<T>&, const ModelParams<T>&,             \
                                           const NetworkConfig&);                                    \
  template std::array<BasicTensor<T>, 3> attention_weight(const std::array<BasicTensor<T>, 3>&,      \
                                                          const BasicTensor<T>&,                     \
                                                          const BasicTensor<T>&);                    \
  template BasicTensor<T> fusion_forward(const std::array<BasicTensor<T>, 3>&, const ModelParams<T>&, \
                                         const NetworkConfig&);                                      \
  template ForwardOutputs<T> model_forward(const BasicTensor<T>&, const ModelParams<T>&,             \
                                           const NetworkConfig&, AttentionFlags, TapeHandle<T>*);    \
  template ModelParams<T> model_backward(const TapeHandle<T>&, const ModelParams<T>&,                \
                                         const NetworkConfig&, const OutputGrads<T>&);               \
  template std::vector<double> count_from_density(const BasicTensor<T>&);                           \
  template std::uint64_t branch_signature(const TapeHandle<T>&);

SAAN_INSTANTIATE_NETWORK(float)
SAAN_INSTANTIATE_NETWORK(double)

#undef SAAN_INSTANTIATE_NETWORK

}  // namespace saan
