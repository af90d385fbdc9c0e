// saan: synthetic data, preparation, training, evaluation, prediction,
// gradient checks and ablations from the command line.

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numeric>
#include <string>

#include "saan/ablation.hpp"
#include "saan/checkpoint.hpp"
#include "saan/config.hpp"
#include "saan/error.hpp"
#include "saan/gradcheck_suite.hpp"
#include "saan/io.hpp"
#include "saan/rng.hpp"
#include "saan/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace saan;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

void apply_thread_env() {
  const char* env = std::getenv("SAAN_THREADS");
  if (!env || !*env) return;
  int n = 0;
  const char* end = env + std::char_traits<char>::length(env);
  auto [ptr, ec] = std::from_chars(env, end, n);
  if (ec != std::errc{} || ptr != end || n < 1) {
    throw ValidationError(std::string("SAAN_THREADS must be a positive integer, got '") + env + "'");
  }
  omp_set_num_threads(n);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ValidationError("cannot create directory '" + dir.string() + "'");
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
  const auto x = s.find('x');
  std::size_t h = 0, w = 0;
  if (x != std::string::npos) {
    auto r1 = std::from_chars(s.data(), s.data() + x, h);
    auto r2 = std::from_chars(s.data() + x + 1, s.data() + s.size(), w);
    if (r1.ec == std::errc{} && r1.ptr == s.data() + x && r2.ec == std::errc{} &&
        r2.ptr == s.data() + s.size() && h >= 8 && w >= 8) {
      return {h, w};
    }
  }
  throw ValidationError("--size must be HxW with both sides at least 8, got '" + s + "'");
}

// ------------------------------------------------------------------ synth

struct SynthArgs {
  fs::path out;
  std::size_t images = 200;
  std::string size = "64x64";
  std::size_t count_min = 5;
  std::size_t count_max = 50;
  std::uint64_t seed = 42;
  std::string config;
};

int cmd_synth(const SynthArgs& a) {
  const auto [H, W] = parse_size(a.size);
  if (a.images == 0) throw ValidationError("--images must be at least 1");
  if (a.count_min > a.count_max) throw ValidationError("--count-min exceeds --count-max");
  SynthParams params;
  if (!a.config.empty()) params = load_config(a.config).synth;

  ensure_dir(a.out / "images");
  ensure_dir(a.out / "annotations");

  std::vector<std::size_t> order(a.images);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(a.seed, hash_name("split")));
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
  const auto n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(a.images)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(a.images)));
  std::vector<std::string> split(a.images, "test");
  for (std::size_t k = 0; k < a.images; ++k) {
    if (k < n_train) split[order[k]] = "train";
    else if (k < n_train + n_val) split[order[k]] = "val";
  }

  Manifest m;
  m.base_dir = a.out;
  for (std::size_t i = 0; i < a.images; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu", i);
    const Scene scene = synth_scene(mix_seed(a.seed, i), H, W, a.count_min, a.count_max, params);
    const std::string img = std::string("images/") + name + ".pgm";
    const std::string ann = std::string("annotations/") + name + ".txt";
    write_pgm(a.out / img, scene.image);
    write_annotation(a.out / ann, scene.ann);
    m.items.push_back({img, ann, split[i]});
  }
  save_manifest(a.out / "manifest.json", m);
  std::printf("wrote %zu images (%zu train, %zu val, %zu test) to %s\n", a.images, n_train, n_val,
              a.images - n_train - n_val, (a.out / "manifest.json").c_str());
  return 0;
}

// ---------------------------------------------------------------- prepare

int cmd_prepare(const fs::path& manifest_path, double sigma) {
  if (!(sigma > 0)) throw ValidationError("--sigma must be positive");
  Manifest m = load_manifest(manifest_path);
  std::vector<DensityMap> train_maps;
  for (const auto& it : m.items) {
    const Image image = read_pgm(m.resolve(it.image));
    const DotAnnotation ann = read_annotation(m.resolve(it.ann));
    DensityMap dm = gaussian_density_map(ann, image.height, image.width, sigma);
    write_density(density_path_for(m.resolve(it.ann)), dm);
    if (it.split == "train") train_maps.push_back(std::move(dm));
  }
  m.bins = compute_bins(train_maps);
  save_manifest(manifest_path, m);
  std::printf("prepared %zu density maps; global bins [%g, %g], local bins [%g, %g]\n", m.items.size(),
              m.bins->global.min, m.bins->global.max, m.bins->local.min, m.bins->local.max);
  return 0;
}

TrainingSet load_training_set(const Manifest& m) {
  if (!m.bins) throw ValidationError("manifest has no bins; run the prepare command first");
  TrainingSet set{load_samples(m, "train"), *m.bins};
  if (set.samples.empty()) throw ValidationError("manifest has no train items");
  return set;
}

// ------------------------------------------------------------------ train

int cmd_train(const fs::path& config_path) {
  const CliConfig cfg = load_config(config_path);
  const Manifest m = load_manifest(cfg.manifest);
  const TrainingSet data = load_training_set(m);
  ensure_dir(cfg.out_dir);
  write_file(cfg.out_dir / "config.json", format_config(cfg));

  std::ofstream log(cfg.out_dir / "train.log", std::ios::trunc);
  if (!log) throw ValidationError("cannot write " + (cfg.out_dir / "train.log").string());
  TrainHooks hooks;
  hooks.on_step = [&](const StepLog& s) {
    const json j = {{"phase", s.phase},          {"epoch", s.epoch},          {"step", s.step},
                    {"l_dm", s.losses.l_dm},     {"l_gsa", s.losses.l_gsa},   {"l_lsa", s.losses.l_lsa},
                    {"l_final", s.losses.l_final}};
    log << j.dump() << '\n';
  };
  hooks.on_epoch = [&](int phase, std::size_t epoch, const ModelParams<float>& params) {
    save_checkpoint(cfg.out_dir / "latest.ck", params);
    log.flush();
    std::fprintf(stderr, "phase %d epoch %zu done\n", phase, epoch + 1);
  };

  const TrainConfig& tc = cfg.train;
  ModelParams<float> params = init_params(tc.network, tc.seed);
  PhaseResult p1 = train_phase1(std::move(params), data, tc, hooks);
  save_checkpoint(cfg.out_dir / "phase1.ck", p1.params);
  PhaseResult p2 = train_phase2(std::move(p1.params), data, tc, hooks);
  save_checkpoint(cfg.out_dir / "final.ck", p2.params);

  json summary = {{"phase1_epochs", json::array()}, {"phase2_epochs", json::array()}};
  for (const auto& e : p1.epochs) summary["phase1_epochs"].push_back({{"l_dm", e.l_dm}, {"l_final", e.l_final}});
  for (const auto& e : p2.epochs) summary["phase2_epochs"].push_back({{"l_dm", e.l_dm}, {"l_final", e.l_final}});
  write_file(cfg.out_dir / "summary.json", summary.dump(2) + "\n");
  std::printf("wrote %s\n", (cfg.out_dir / "final.ck").c_str());
  return 0;
}

// ------------------------------------------------------------------- eval

int cmd_eval(const fs::path& ck_path, const fs::path& manifest_path, const std::string& split,
             fs::path csv_path) {
  const ModelParams<float> params = read_checkpoint(ck_path);
  const NetworkConfig network = detect_config(params);
  const Manifest m = load_manifest(manifest_path);
  const auto samples = load_samples(m, split);
  if (samples.empty()) throw ValidationError("split '" + split + "' has no items");
  const EvalResult r = evaluate(params, network, samples);

  if (csv_path.empty()) csv_path = ck_path.parent_path() / (ck_path.stem().string() + "_" + split + ".csv");
  std::string csv = "path,gt_count,pred_count\n";
  for (const auto& rec : r.records) {
    char buf[64];
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", rec.gt_count, rec.pred_count);
    csv += rec.id + buf;
  }
  write_file(csv_path, csv);
  const json out = {{"mae", r.mae}, {"mse", r.mse}, {"n", r.records.size()}};
  std::printf("%s\n", out.dump().c_str());
  return 0;
}

// ---------------------------------------------------------------- predict

Image visualize(const DensityMap& dm) {
  Image img{dm.height, dm.width, std::vector<float>(dm.values.size(), 0.0f)};
  const float peak = *std::max_element(dm.values.begin(), dm.values.end());
  if (!(peak > 0.0f)) return img;
  for (std::size_t i = 0; i < dm.values.size(); ++i) img.pixels[i] = std::max(0.0f, dm.values[i] / peak);
  return img;
}

int cmd_predict(const fs::path& ck_path, const fs::path& image_path, const std::string& prefix) {
  const ModelParams<float> params = read_checkpoint(ck_path);
  const NetworkConfig network = detect_config(params);
  const Image image = read_pgm(image_path);
  const Tensor x({1, 1, image.height, image.width}, image.pixels);
  const auto out = model_forward(x, params, network);
  DensityMap dm{image.height, image.width, {out.density.data().begin(), out.density.data().end()}};
  write_density(prefix + ".dm", dm);
  write_pgm(prefix + ".pgm", visualize(dm));
  std::printf("%.6f\n", count_from_density(out.density)[0]);
  return 0;
}

// -------------------------------------------------------------- gradcheck

int cmd_gradcheck(std::uint64_t seed) {
  const auto results = run_gradcheck_suite(seed);
  bool ok = true;
  std::printf("%-26s %14s %8s %8s  %s\n", "check", "max_rel_err", "checked", "skipped", "result");
  for (const auto& r : results) {
    std::printf("%-26s %14.3e %8zu %8zu  %s\n", r.name.c_str(), r.max_rel_error, r.checked, r.skipped,
                r.passed() ? "PASS" : "FAIL");
    ok = ok && r.passed();
  }
  std::printf("%zu checks, %s (tolerance %.0e)\n", results.size(), ok ? "all passed" : "FAILURES", kGradTolerance);
  return ok ? 0 : kExitRuntime;
}

// ----------------------------------------------------------------- ablate

int cmd_ablate(const fs::path& config_path) {
  const CliConfig cfg = load_config(config_path);
  const Manifest m = load_manifest(cfg.manifest);
  const TrainingSet data = load_training_set(m);
  const auto test = load_samples(m, "test");
  if (test.empty()) throw ValidationError("manifest has no test items");
  ensure_dir(cfg.out_dir);
  const AblationTables t = run_ablation(data, test, cfg.train, [](const std::string& v) {
    std::fprintf(stderr, "training variant %s\n", v.c_str());
  });
  write_file(cfg.out_dir / "ablation.json", ablation_json(t));
  const std::string text = ablation_text(t);
  write_file(cfg.out_dir / "ablation.txt", text);
  std::fputs(text.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scale-aware attention network for crowd counting"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic crowd dataset");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--images", synth.images, "Number of images")->capture_default_str();
  s->add_option("--size", synth.size, "Image size HxW")->capture_default_str();
  s->add_option("--count-min", synth.count_min, "Minimum heads per image")->capture_default_str();
  s->add_option("--count-max", synth.count_max, "Maximum heads per image")->capture_default_str();
  s->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  s->add_option("--config", synth.config, "Config file supplying generator parameters");

  fs::path manifest;
  double sigma = kDefaultSigma;
  auto* p = app.add_subcommand("prepare", "Write ground-truth density maps and scale bins");
  p->add_option("--manifest", manifest, "Manifest path")->required();
  p->add_option("--sigma", sigma, "Gaussian kernel sigma")->capture_default_str();

  fs::path config;
  auto* t = app.add_subcommand("train", "Two-phase training");
  t->add_option("--config", config, "Config JSON")->required();

  fs::path checkpoint, csv;
  std::string split = "test";
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest split");
  e->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  e->add_option("--manifest", manifest, "Manifest path")->required();
  e->add_option("--split", split, "train, val or test")->capture_default_str();
  e->add_option("--csv", csv, "Per-image CSV path (default: next to the checkpoint)");

  fs::path image;
  std::string prefix;
  auto* pr = app.add_subcommand("predict", "Predict the density map of one image");
  pr->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  pr->add_option("--image", image, "PGM image")->required();
  pr->add_option("--out", prefix, "Output prefix for .dm and .pgm")->required();

  std::uint64_t seed = 0;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  g->add_option("--seed", seed, "Random seed")->capture_default_str();

  auto* a = app.add_subcommand("ablate", "Model and loss ablations");
  a->add_option("--config", config, "Config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : kExitValidation;
  }

  try {
    apply_thread_env();
    if (*s) return cmd_synth(synth);
    if (*p) return cmd_prepare(manifest, sigma);
    if (*t) return cmd_train(config);
    if (*e) return cmd_eval(checkpoint, manifest, split, csv);
    if (*pr) return cmd_predict(checkpoint, image, prefix);
    if (*g) return cmd_gradcheck(seed);
    if (*a) return cmd_ablate(config);
  } catch (const ValidationError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitValidation;
  } catch (const ParseError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitValidation;
  } catch (const DimensionError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitValidation;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitRuntime;
  }
  return 0;
}
