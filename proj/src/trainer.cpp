#include "saan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "saan/error.hpp"
#include "saan/rng.hpp"

namespace saan {

void adam_step(ModelParams<float>& params, const ModelParams<float>& grads, OptimizerState& state,
               const AdamParams& adam) {
  for (const auto& [name, g] : grads) {
    for (float v : g.data()) {
      if (!std::isfinite(v)) throw NumericError("non-finite gradient for parameter '" + name + "'");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(adam.beta1, t);
  const double c2 = 1.0 - std::pow(adam.beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    if (p.dims() != g.dims()) {
      throw DimensionError("adam_step", name, shape_string(p.dims()) + " vs " + shape_string(g.dims()));
    }
    Tensor& m = state.m.try_emplace(name, g.dims()).first->second;
    Tensor& v = state.v.try_emplace(name, g.dims()).first->second;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i];
      const double mi = adam.beta1 * m[i] + (1.0 - adam.beta1) * gi;
      const double vi = adam.beta2 * v[i] + (1.0 - adam.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double step = adam.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + adam.epsilon);
      p[i] = static_cast<float>(p[i] - step);
    }
  }
}

void TrainConfig::validate() const {
  if (crop_size == 0 || crop_size % 4 != 0) {
    throw ValidationError("crop_size must be a positive multiple of 4, got " + std::to_string(crop_size));
  }
  if (batch_size == 0) throw ValidationError("batch_size must be at least 1");
  if (!(adam.learning_rate > 0) || !std::isfinite(adam.learning_rate)) {
    throw ValidationError("learning_rate must be positive");
  }
  if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1)) {
    throw ValidationError("adam betas must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0)) throw ValidationError("adam epsilon must be positive");
  weights.validate();
}

std::size_t effective_crop(const TrainingSet& data, std::size_t crop_size) {
  if (data.samples.empty()) throw ValidationError("training split is empty");
  std::size_t side = crop_size;
  for (const auto& s : data.samples) side = std::min({side, s.image.height, s.image.width});
  side -= side % 4;
  if (side == 0) throw ValidationError("training images must be at least 4x4");
  return side;
}

namespace {

struct PhaseSpec {
  int phase = 1;
  std::size_t epochs = 0;
  AttentionFlags flags;
  LossTerms terms;
  std::vector<std::string> frozen;  // parameter-name prefixes left untouched
};

bool is_frozen(const std::string& name, const std::vector<std::string>& frozen) {
  return std::any_of(frozen.begin(), frozen.end(),
                     [&](const std::string& p) { return name.compare(0, p.size(), p) == 0; });
}

struct Batch {
  Tensor images;
  LossTargets<float> targets;
};

Batch make_batch(const TrainingSet& data, std::span<const std::size_t> indices, std::uint64_t seed,
                 std::size_t crop) {
  const std::size_t B = indices.size(), plane = crop * crop;
  Batch b;
  b.images = Tensor({B, 1, crop, crop});
  b.targets.density = Tensor({B, 1, crop, crop});
  for (std::size_t i = 0; i < B; ++i) {
    const Sample s = augment(data.samples[indices[i]], mix_seed(seed, indices[i]), crop);
    std::copy(s.image.pixels.begin(), s.image.pixels.end(), b.images.ptr() + i * plane);
    std::copy(s.density.values.begin(), s.density.values.end(), b.targets.density.ptr() + i * plane);
    b.targets.global_classes.push_back(global_scale_label(s.density, data.bins));
    b.targets.local_maps.push_back(local_scale_map(s.density, data.bins));
  }
  return b;
}

PhaseResult run_phase(ModelParams<float> params, const TrainingSet& data, const TrainConfig& config,
                      const PhaseSpec& spec, const TrainHooks& hooks) {
  config.validate();
  PhaseResult result;
  if (spec.epochs == 0) {
    result.params = std::move(params);
    return result;
  }
  const std::size_t crop = effective_crop(data, config.crop_size);
  const std::size_t n = data.samples.size();
  OptimizerState opt;
  std::size_t step = 0;
  const std::uint64_t phase_seed = mix_seed(config.seed, static_cast<std::uint64_t>(spec.phase));

  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    const std::uint64_t epoch_seed = mix_seed(phase_seed, epoch);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(epoch_seed);
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
    }

    EpochStats sum;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, n - start);
      Batch batch = make_batch(data, std::span(order).subspan(start, count), epoch_seed, crop);

      TapeHandle<float> tape;
      auto out = model_forward(batch.images, params, config.network, spec.flags, &tape);
      if (hooks.on_forward) hooks.on_forward(out);
      auto loss = compute_loss(out, batch.targets, config.weights, spec.terms);
      const LossReport& r = loss.report;
      if (!std::isfinite(r.l_final)) {
        throw NumericError("non-finite loss at phase " + std::to_string(spec.phase) + " epoch " +
                           std::to_string(epoch) + " step " + std::to_string(step));
      }
      auto grads = model_backward(tape, params, config.network, loss.grads);
      ModelParams<float> trainable;
      for (auto& [name, g] : grads)
        if (!is_frozen(name, spec.frozen)) trainable.add(name, std::move(g));
      adam_step(params, trainable, opt, config.adam);

      if (hooks.on_step) hooks.on_step({spec.phase, epoch, step, r});
      sum.l_dm += r.l_dm;
      sum.l_gsa += r.l_gsa;
      sum.l_lsa += r.l_lsa;
      sum.l_final += r.l_final;
      ++batches;
      ++step;
    }
    const double k = static_cast<double>(batches);
    result.epochs.push_back({sum.l_dm / k, sum.l_gsa / k, sum.l_lsa / k, sum.l_final / k});
    if (hooks.on_epoch) hooks.on_epoch(spec.phase, epoch, params);
  }
  result.params = std::move(params);
  return result;
}

std::vector<std::string> disabled_prefixes(AttentionFlags flags) {
  std::vector<std::string> out;
  if (!flags.global) out.push_back("gsa.");
  if (!flags.local) out.push_back("lsa.");
  return out;
}

}  // namespace

PhaseResult train_phase1(ModelParams<float> params, const TrainingSet& data, const TrainConfig& config,
                         const TrainHooks& hooks) {
  PhaseSpec spec;
  spec.phase = 1;
  spec.epochs = config.phase1_epochs;
  spec.flags = {config.model.global, false};
  spec.terms = {config.terms.gsa && config.model.global, false};
  spec.frozen = disabled_prefixes(spec.flags);
  return run_phase(std::move(params), data, config, spec, hooks);
}

PhaseResult train_phase2(ModelParams<float> params, const TrainingSet& data, const TrainConfig& config,
                         const TrainHooks& hooks) {
  reinit_params(params, config.network, "lsa.", mix_seed(config.seed, 2));
  PhaseSpec spec;
  spec.phase = 2;
  spec.epochs = config.phase2_epochs;
  spec.flags = config.model;
  spec.terms = {config.terms.gsa && config.model.global, config.terms.lsa && config.model.local};
  spec.frozen = disabled_prefixes(spec.flags);
  return run_phase(std::move(params), data, config, spec, hooks);
}

TwoPhaseResult train_two_phase(const TrainingSet& data, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  TwoPhaseResult r;
  r.initial = init_params(config.network, config.seed);
  r.phase1 = train_phase1(r.initial, data, config, hooks);
  r.phase2 = train_phase2(r.phase1.params, data, config, hooks);
  return r;
}

EvalResult summarize(std::vector<EvalRecord> records) {
  if (records.empty()) throw ValidationError("evaluate: split is empty");
  std::vector<double> pred, gt;
  for (const auto& r : records) {
    pred.push_back(r.pred_count);
    gt.push_back(r.gt_count);
  }
  EvalResult out;
  out.mae = mae(pred, gt);
  out.mse = mse(pred, gt);
  out.records = std::move(records);
  return out;
}

EvalResult evaluate(const ModelParams<float>& params, const NetworkConfig& network,
                    const std::vector<Sample>& samples, AttentionFlags flags) {
  std::vector<EvalRecord> records;
  for (const auto& s : samples) {
    const Tensor image({1, 1, s.image.height, s.image.width}, s.image.pixels);
    const auto out = model_forward(image, params, network, flags);
    records.push_back({s.id, static_cast<double>(s.ann.points.size()), count_from_density(out.density)[0]});
  }
  return summarize(std::move(records));
}

}  // namespace saan
