#pragma once

// Model-variant and loss-variant ablations, all trained with one seed and budget.

#include <functional>
#include <string>
#include <vector>

#include "saan/trainer.hpp"

namespace saan {

struct AblationRow {
  std::string variant;
  AttentionFlags model;
  LossTerms terms;
  double mae = 0.0;
  double mse = 0.0;
};

struct AblationTables {
  std::vector<AblationRow> model_variants;  // base, base+GSA, base+LSA, full
  std::vector<AblationRow> loss_variants;   // L_DM, +L_LSA, +L_GSA, all three
};

// The eight variant definitions, metrics unset.
AblationTables ablation_plan();

// Trains and evaluates every row. While a variant without an attention
// module trains, its g (or l) is checked to be exactly 1 on every step.
AblationTables run_ablation(const TrainingSet& train, const std::vector<Sample>& test,
                            const TrainConfig& config,
                            const std::function<void(const std::string&)>& progress = {});

std::string ablation_json(const AblationTables& tables);
std::string ablation_text(const AblationTables& tables);

}  // namespace saan
