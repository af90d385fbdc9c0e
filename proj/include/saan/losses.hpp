#pragma once

// Training losses (all batch means) and the count metrics.

#include <span>
#include <vector>

#include "saan/density.hpp"
#include "saan/network.hpp"

namespace saan {

template <typename T>
struct LossValue {
  double value = 0.0;
  BasicTensor<T> grad;  // d value / d input
};

// Per-image 0.5 * ||pred - gt||^2, averaged over the batch. pred, gt: [N,1,H,W].
template <typename T>
LossValue<T> loss_dm(const BasicTensor<T>& pred, const BasicTensor<T>& gt);

// Cross-entropy of softmax(logits) against classes in {1,2,3}. logits: [N,3].
template <typename T>
LossValue<T> loss_gsa(const BasicTensor<T>& logits, std::span<const int> classes);

// Per-pixel softmax cross-entropy over the 3 channels of logits [N,3,h,w],
// averaged over batch and pixels. labels[n] must be h x w.
template <typename T>
LossValue<T> loss_lsa(const BasicTensor<T>& logits, std::span<const LocalScaleMap> labels);

struct LossWeights {
  double lambda_g = 0.1;
  double lambda_l = 0.1;

  void validate() const;
};

struct LossReport {
  double l_dm = 0.0;
  double l_gsa = 0.0;
  double l_lsa = 0.0;
  double l_final = 0.0;
};

// l_dm + lambda_g * l_gsa + lambda_l * l_lsa
double loss_final(const LossReport& components, const LossWeights& weights);

// Which auxiliary terms take part. A disabled term reports 0.
struct LossTerms {
  bool gsa = true;
  bool lsa = true;
};

template <typename T>
struct LossTargets {
  BasicTensor<T> density;                  // [N,1,H,W]
  std::vector<int> global_classes;         // N entries in {1,2,3}
  std::vector<LocalScaleMap> local_maps;   // N maps of h x w
};

template <typename T>
struct FinalLoss {
  LossReport report;
  OutputGrads<T> grads;
};

// Evaluates every enabled term and returns the weighted output gradients.
template <typename T>
FinalLoss<T> compute_loss(const ForwardOutputs<T>& outputs, const LossTargets<T>& targets,
                          const LossWeights& weights, LossTerms terms = {});

// Mean absolute count error. Throws ValidationError on empty or unequal inputs.
double mae(std::span<const double> pred, std::span<const double> gt);
// Root of the mean squared count error.
double mse(std::span<const double> pred, std::span<const double> gt);

}  // namespace saan
