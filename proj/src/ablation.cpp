#include "saan/ablation.hpp"

#include <cstdio>
#include <json.hpp>

#include "saan/error.hpp"

namespace saan {

AblationTables ablation_plan() {
  AblationTables t;
  t.model_variants = {{"base", {false, false}, {true, true}},
                      {"base+GSA", {true, false}, {true, true}},
                      {"base+LSA", {false, true}, {true, true}},
                      {"base+GSA+LSA", {true, true}, {true, true}}};
  t.loss_variants = {{"L_DM", {true, true}, {false, false}},
                     {"L_DM+L_LSA", {true, true}, {false, true}},
                     {"L_DM+L_GSA", {true, true}, {true, false}},
                     {"L_DM+L_LSA+L_GSA", {true, true}, {true, true}}};
  return t;
}

namespace {

void require_ones(const Tensor& t, const char* what, const std::string& variant) {
  for (float v : t.data()) {
    if (v != 1.0f) throw Error("ablation " + variant + ": " + what + " attention is not identically 1");
  }
}

void run_row(AblationRow& row, const TrainingSet& train, const std::vector<Sample>& test,
             const TrainConfig& base, const std::function<void(const std::string&)>& progress) {
  if (progress) progress(row.variant);
  TrainConfig config = base;
  config.model = row.model;
  config.terms = row.terms;
  TrainHooks hooks;
  hooks.on_forward = [&](const ForwardOutputs<float>& out) {
    if (!row.model.global) require_ones(out.global_scores, "global", row.variant);
    if (!row.model.local && !out.local_maps.empty()) require_ones(out.local_maps, "local", row.variant);
  };
  const auto result = train_two_phase(train, config, hooks);
  const auto eval = evaluate(result.phase2.params, config.network, test, row.model);
  row.mae = eval.mae;
  row.mse = eval.mse;
}

}  // namespace

AblationTables run_ablation(const TrainingSet& train, const std::vector<Sample>& test,
                            const TrainConfig& config,
                            const std::function<void(const std::string&)>& progress) {
  AblationTables t = ablation_plan();
  for (auto& row : t.model_variants) run_row(row, train, test, config, progress);
  for (auto& row : t.loss_variants) run_row(row, train, test, config, progress);
  return t;
}

namespace {

nlohmann::json rows_json(const std::vector<AblationRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) out.push_back({{"variant", r.variant}, {"mae", r.mae}, {"mse", r.mse}});
  return out;
}

std::string rows_text(const std::string& title, const std::vector<AblationRow>& rows) {
  std::size_t width = title.size();
  for (const auto& r : rows) width = std::max(width, r.variant.size());
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-*s  %10s  %10s\n", static_cast<int>(width), title.c_str(), "MAE", "MSE");
  out += buf;
  out += std::string(width + 24, '-') + "\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %10.3f  %10.3f\n", static_cast<int>(width), r.variant.c_str(), r.mae, r.mse);
    out += buf;
  }
  return out;
}

}  // namespace

std::string ablation_json(const AblationTables& t) {
  nlohmann::json j = {{"model_variants", rows_json(t.model_variants)},
                      {"loss_variants", rows_json(t.loss_variants)}};
  return j.dump(2) + "\n";
}

std::string ablation_text(const AblationTables& t) {
  return rows_text("Model", t.model_variants) + "\n" + rows_text("Loss", t.loss_variants);
}

}  // namespace saan
