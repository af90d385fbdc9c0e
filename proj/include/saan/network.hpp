#pragma once

// Scale-aware attention network: multi-scale feature extractor (MFE), global
// scale attention (GSA), local scale attention (LSA), and the fusion network
// (FN), with a hand-written backward pass through the whole graph.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "saan/kernels.hpp"
#include "saan/tensor.hpp"

namespace saan {

// Layer widths of every sub-network. Kernel sizes and topology are fixed.
struct NetworkConfig {
  struct Branch {
    std::array<std::size_t, 3> kernels;
    std::array<std::size_t, 3> widths;
    bool operator==(const Branch&) const = default;
  };

  std::string name;
  std::array<Branch, 3> mfe;               // low / mid / high density
  std::array<std::size_t, 3> gsa_widths;   // C(7)-P-C(5)-P-C(3)-P
  std::size_t gsa_hidden = 16;             // FC width before the 3 scores
  std::array<std::size_t, 8> lsa_widths;   // eight 3x3 convs, pools after the 2nd and 4th
  std::array<std::size_t, 2> lsa_hidden;   // 1x1 layers ahead of the 3-map output
  std::array<std::size_t, 2> fn_widths;    // 3x3 convs on the concatenated features
  std::array<std::size_t, 2> fn_deconv;    // two x2 upsampling stages

  // Full-width network.
  static NetworkConfig standard();
  // Same topology with every width divided by 4; used for gradient checks.
  static NetworkConfig tiny();

  std::array<std::size_t, 3> feature_depths() const;
  bool operator==(const NetworkConfig&) const = default;
};

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in;
};

// Every parameter the model defines, in creation order.
std::vector<ParamSpec> param_inventory(const NetworkConfig& config);

// Named parameter store. Iteration order is lexicographic by name.
template <typename T>
class ModelParams {
 public:
  using Map = std::map<std::string, BasicTensor<T>, std::less<>>;

  void add(std::string name, BasicTensor<T> tensor);
  BasicTensor<T>& at(std::string_view name);
  const BasicTensor<T>& at(std::string_view name) const;
  bool contains(std::string_view name) const { return tensors_.find(name) != tensors_.end(); }
  std::size_t size() const noexcept { return tensors_.size(); }
  std::size_t scalar_count() const;

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    for (const auto& [name, t] : tensors_) out.add(name, t.template cast<U>());
    return out;
  }

  // Zero tensors with this store's names and shapes.
  ModelParams zeros_like() const;

  bool operator==(const ModelParams&) const = default;

 private:
  Map tensors_;
};

// Zero-mean Gaussian weights with std sqrt(2 / fan_in), zero biases. Each
// tensor draws from its own stream seeded by (seed, name).
ModelParams<float> init_params(const NetworkConfig& config, std::uint64_t seed);

// Re-draws every parameter whose name starts with `prefix` (e.g. "lsa.").
void reinit_params(ModelParams<float>& params, const NetworkConfig& config, std::string_view prefix,
                   std::uint64_t seed);

// Which attention modules take part. A disabled module contributes
// all-ones attention (g = 1 or l = 1) and is not evaluated.
struct AttentionFlags {
  bool global = true;
  bool local = true;
};

template <typename T>
struct ForwardOutputs {
  BasicTensor<T> density;        // [N,1,H,W], same spatial size as the input
  BasicTensor<T> global_logits;  // [N,3]; zeros when GSA is disabled
  BasicTensor<T> global_scores;  // [N,3] softmax; ones when GSA is disabled
  BasicTensor<T> local_logits;   // [N,3,h,w]; zeros when LSA is disabled
  BasicTensor<T> local_maps;     // [N,3,h,w] sigmoid; ones when LSA is disabled
  std::array<BasicTensor<T>, 3> features;  // depths per NetworkConfig::feature_depths
};

// Activations kept by model_forward for model_backward.
template <typename T>
struct ForwardTape;

template <typename T>
class TapeHandle {
 public:
  TapeHandle();
  ~TapeHandle();
  TapeHandle(TapeHandle&&) noexcept;
  TapeHandle& operator=(TapeHandle&&) noexcept;
  ForwardTape<T>& get() { return *tape_; }
  const ForwardTape<T>& get() const { return *tape_; }

 private:
  std::unique_ptr<ForwardTape<T>> tape_;
};

// Any H, W: the image is reflect-padded (bottom/right) to a multiple of 4 and
// the density map is cropped back. Attention maps and features stay on the
// padded (H/4) x (W/4) grid.
template <typename T>
ForwardOutputs<T> model_forward(const BasicTensor<T>& image, const ModelParams<T>& params,
                                const NetworkConfig& config, AttentionFlags flags = {},
                                TapeHandle<T>* tape = nullptr);

// The per-branch pieces, exposed for testing.
template <typename T>
std::array<BasicTensor<T>, 3> mfe_forward(const BasicTensor<T>& image, const ModelParams<T>& params,
                                          const NetworkConfig& config);

template <typename T>
struct AttentionOutputs {
  BasicTensor<T> logits;
  BasicTensor<T> scores;
};

template <typename T>
AttentionOutputs<T> gsa_forward(const BasicTensor<T>& image, const ModelParams<T>& params,
                                const NetworkConfig& config);

template <typename T>
AttentionOutputs<T> lsa_forward(const BasicTensor<T>& image, const ModelParams<T>& params,
                                const NetworkConfig& config);

// a_i = g_i * l_i * f_i for i = 1..3. g: [N,3], l: [N,3,h,w].
template <typename T>
std::array<BasicTensor<T>, 3> attention_weight(const std::array<BasicTensor<T>, 3>& features,
                                               const BasicTensor<T>& global_scores,
                                               const BasicTensor<T>& local_maps);

// Concatenate, two convs, two x2 deconvs, 1x1 linear conv: [N,1,4h,4w].
template <typename T>
BasicTensor<T> fusion_forward(const std::array<BasicTensor<T>, 3>& weighted,
                              const ModelParams<T>& params, const NetworkConfig& config);

// Upstream gradients of the loss w.r.t. the model outputs. Empty tensors are zero.
template <typename T>
struct OutputGrads {
  BasicTensor<T> density;
  BasicTensor<T> global_logits;
  BasicTensor<T> local_logits;
};

// Parameter gradients for the forward pass recorded in `tape`. Parameters of
// disabled modules receive zero gradients.
template <typename T>
ModelParams<T> model_backward(const TapeHandle<T>& tape, const ModelParams<T>& params,
                              const NetworkConfig& config, const OutputGrads<T>& grads);

// Hash of every discrete choice recorded in the tape: ReLU on/off masks and
// max-pool winners. Equal signatures mean the same piecewise-smooth branch.
template <typename T>
std::uint64_t branch_signature(const TapeHandle<T>& tape);

// Per-sample sum of a [N,1,H,W] density map, no clamping. Pairwise summation.
template <typename T>
std::vector<double> count_from_density(const BasicTensor<T>& density);

}  // namespace saan
