#include "saan/losses.hpp"

#include <algorithm>
#include <cmath>

#include "saan/error.hpp"

namespace saan {

template <typename T>
LossValue<T> loss_dm(const BasicTensor<T>& pred, const BasicTensor<T>& gt) {
  require_rank(pred, 4, "loss_dm");
  if (pred.dims() != gt.dims()) {
    throw DimensionError("loss_dm", "prediction vs ground truth",
                         shape_string(pred.dims()) + " vs " + shape_string(gt.dims()));
  }
  const std::size_t N = pred.dim(0);
  LossValue<T> out;
  out.grad = BasicTensor<T>(pred.dims());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
    sum += d * d;
    out.grad[i] = static_cast<T>(d / static_cast<double>(N));
  }
  out.value = 0.5 * sum / static_cast<double>(N);
  return out;
}

namespace {

// Softmax cross-entropy of 3 logits spaced `stride` apart; writes (p - onehot) * scale.
template <typename T>
double softmax_ce(const T* z, std::size_t stride, int label, T* grad, double scale) {
  const double a = z[0], b = z[stride], c = z[2 * stride];
  const double m = std::max({a, b, c});
  const double ea = std::exp(a - m), eb = std::exp(b - m), ec = std::exp(c - m);
  const double s = ea + eb + ec;
  const double e[3] = {ea, eb, ec};
  const double zl[3] = {a, b, c};
  for (int k = 0; k < 3; ++k) {
    grad[k * stride] = static_cast<T>((e[k] / s - (k == label ? 1.0 : 0.0)) * scale);
  }
  return m + std::log(s) - zl[label];
}

void check_class(int c, const char* op) {
  if (c < 1 || c > 3) throw ValidationError(std::string(op) + ": class " + std::to_string(c) + " outside {1,2,3}");
}

}  // namespace

template <typename T>
LossValue<T> loss_gsa(const BasicTensor<T>& logits, std::span<const int> classes) {
  require_rank(logits, 2, "loss_gsa");
  const std::size_t N = logits.dim(0);
  if (logits.dim(1) != 3) throw DimensionError("loss_gsa", "classes", "expected 3 logits per row");
  if (classes.size() != N) {
    throw DimensionError("loss_gsa", "batch", std::to_string(N) + " rows vs " + std::to_string(classes.size()) + " labels");
  }
  LossValue<T> out;
  out.grad = BasicTensor<T>(logits.dims());
  const double scale = 1.0 / static_cast<double>(N);
  double sum = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    check_class(classes[n], "loss_gsa");
    sum += softmax_ce(logits.ptr() + 3 * n, 1, classes[n] - 1, out.grad.ptr() + 3 * n, scale);
  }
  out.value = sum * scale;
  return out;
}

template <typename T>
LossValue<T> loss_lsa(const BasicTensor<T>& logits, std::span<const LocalScaleMap> labels) {
  require_rank(logits, 4, "loss_lsa");
  const std::size_t N = logits.dim(0), h = logits.dim(2), w = logits.dim(3), plane = h * w;
  if (logits.dim(1) != 3) throw DimensionError("loss_lsa", "channels", "expected 3 logit maps");
  if (labels.size() != N) {
    throw DimensionError("loss_lsa", "batch", std::to_string(N) + " vs " + std::to_string(labels.size()) + " label maps");
  }
  LossValue<T> out;
  out.grad = BasicTensor<T>(logits.dims());
  const double scale = 1.0 / static_cast<double>(N * plane);
  double sum = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const auto& lab = labels[n];
    if (lab.height != h || lab.width != w) {
      throw DimensionError("loss_lsa", "label map",
                           std::to_string(lab.height) + "x" + std::to_string(lab.width) + " vs " +
                               std::to_string(h) + "x" + std::to_string(w));
    }
    const T* z = logits.ptr() + n * 3 * plane;
    T* g = out.grad.ptr() + n * 3 * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      check_class(lab.classes[p], "loss_lsa");
      sum += softmax_ce(z + p, plane, lab.classes[p] - 1, g + p, scale);
    }
  }
  out.value = sum * scale;
  return out;
}

void LossWeights::validate() const {
  if (!std::isfinite(lambda_g) || !std::isfinite(lambda_l) || lambda_g < 0 || lambda_l < 0) {
    throw ValidationError("loss weights must be finite and non-negative");
  }
}

double loss_final(const LossReport& c, const LossWeights& w) {
  return c.l_dm + w.lambda_g * c.l_gsa + w.lambda_l * c.l_lsa;
}

template <typename T>
FinalLoss<T> compute_loss(const ForwardOutputs<T>& outputs, const LossTargets<T>& targets,
                          const LossWeights& weights, LossTerms terms) {
  weights.validate();
  FinalLoss<T> out;
  auto dm = loss_dm(outputs.density, targets.density);
  out.report.l_dm = dm.value;
  out.grads.density = std::move(dm.grad);
  if (terms.gsa) {
    auto g = loss_gsa(outputs.global_logits, targets.global_classes);
    out.report.l_gsa = g.value;
    for (auto& v : g.grad.data()) v = static_cast<T>(v * weights.lambda_g);
    out.grads.global_logits = std::move(g.grad);
  }
  if (terms.lsa) {
    auto l = loss_lsa(outputs.local_logits, targets.local_maps);
    out.report.l_lsa = l.value;
    for (auto& v : l.grad.data()) v = static_cast<T>(v * weights.lambda_l);
    out.grads.local_logits = std::move(l.grad);
  }
  out.report.l_final = loss_final(out.report, weights);
  return out;
}

namespace {

void check_counts(std::span<const double> pred, std::span<const double> gt, const char* op) {
  if (pred.empty()) throw ValidationError(std::string(op) + ": no samples");
  if (pred.size() != gt.size()) {
    throw ValidationError(std::string(op) + ": " + std::to_string(pred.size()) + " predictions vs " +
                          std::to_string(gt.size()) + " ground-truth counts");
  }
}

}  // namespace

double mae(std::span<const double> pred, std::span<const double> gt) {
  check_counts(pred, gt, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - gt[i]);
  return s / static_cast<double>(pred.size());
}

double mse(std::span<const double> pred, std::span<const double> gt) {
  check_counts(pred, gt, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - gt[i]) * (pred[i] - gt[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

#define SAAN_INSTANTIATE_LOSSES(T)                                                           \
  template LossValue<T> loss_dm(const BasicTensor<T>&, const BasicTensor<T>&);               \
  template LossValue<T> loss_gsa(const BasicTensor<T>&, std::span<const int>);               \
  template LossValue<T> loss_lsa(const BasicTensor<T>&, std::span<const LocalScaleMap>);     \
  template FinalLoss<T> compute_loss(const ForwardOutputs<T>&, const LossTargets<T>&,        \
                                     const LossWeights&, LossTerms);

SAAN_INSTANTIATE_LOSSES(float)
SAAN_INSTANTIATE_LOSSES(double)

#undef SAAN_INSTANTIATE_LOSSES

}  // namespace saan
