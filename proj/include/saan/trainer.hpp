#pragma once

// Adam, the two-phase training loop, and evaluation.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "saan/density.hpp"
#include "saan/losses.hpp"
#include "saan/network.hpp"

namespace saan {

struct AdamParams {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  std::map<std::string, Tensor, std::less<>> m;
  std::map<std::string, Tensor, std::less<>> v;
  std::uint64_t step = 0;
};

// One bias-corrected Adam update of every parameter named in `grads`.
// Throws NumericError naming the parameter if a gradient is not finite.
void adam_step(ModelParams<float>& params, const ModelParams<float>& grads, OptimizerState& state,
               const AdamParams& adam);

struct TrainConfig {
  std::uint64_t seed = 1;
  std::size_t phase1_epochs = 20;
  std::size_t phase2_epochs = 30;
  AdamParams adam;
  std::size_t batch_size = 4;
  std::size_t crop_size = 128;  // clamped to the smallest training image
  LossWeights weights;
  NetworkConfig network = NetworkConfig::standard();
  AttentionFlags model;  // which attention modules the trained model has
  LossTerms terms;       // which auxiliary losses are used when their module is present

  void validate() const;
};

struct TrainingSet {
  std::vector<Sample> samples;
  ScaleBins bins;
};

struct StepLog {
  int phase = 0;
  std::size_t epoch = 0;
  std::size_t step = 0;
  LossReport losses;
};

struct EpochStats {
  double l_dm = 0.0;
  double l_gsa = 0.0;
  double l_lsa = 0.0;
  double l_final = 0.0;
};

struct TrainHooks {
  std::function<void(const StepLog&)> on_step;
  std::function<void(int phase, std::size_t epoch, const ModelParams<float>&)> on_epoch;
  std::function<void(const ForwardOutputs<float>&)> on_forward;
};

struct PhaseResult {
  ModelParams<float> params;
  std::vector<EpochStats> epochs;
};

// Crop size actually used for a training set: crop_size clamped to the
// smallest image side, rounded down to a multiple of 4.
std::size_t effective_crop(const TrainingSet& data, std::size_t crop_size);

// MFE + GSA + FN with l = 1. LSA parameters are never touched.
PhaseResult train_phase1(ModelParams<float> params, const TrainingSet& data, const TrainConfig& config,
                         const TrainHooks& hooks = {});

// Re-initializes LSA, then trains every enabled module with a fresh optimizer.
PhaseResult train_phase2(ModelParams<float> params, const TrainingSet& data, const TrainConfig& config,
                         const TrainHooks& hooks = {});

struct TwoPhaseResult {
  ModelParams<float> initial;
  PhaseResult phase1;
  PhaseResult phase2;
};

TwoPhaseResult train_two_phase(const TrainingSet& data, const TrainConfig& config,
                               const TrainHooks& hooks = {});

struct EvalRecord {
  std::string id;
  double gt_count = 0.0;
  double pred_count = 0.0;
};

struct EvalResult {
  double mae = 0.0;
  double mse = 0.0;
  std::vector<EvalRecord> records;
};

// Metrics over per-image records. Throws ValidationError when empty.
EvalResult summarize(std::vector<EvalRecord> records);

// Full-image, batch-1 forward passes. Ground truth is the annotation count.
EvalResult evaluate(const ModelParams<float>& params, const NetworkConfig& network,
                    const std::vector<Sample>& samples, AttentionFlags flags = {});

}  // namespace saan
