#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "calib_il/dataset.hpp"
#include "calib_il/logits.hpp"
#include "calib_il/model.hpp"

namespace calib_il {

/// Supervised training on the state-1 view (softmax cross-entropy, SGD with
/// momentum). Records each class's initial output row. `epoch_losses`, when
/// given, receives the mean training loss of every epoch.
Model train_initial(const BackboneConfig& config, const IncrementalDataset& dataset,
                    const StateView& first, std::vector<double>* epoch_losses = nullptr);

/// Plain fine-tuning on the new classes; every row trainable.
Model update_finetune(const Model& model, const IncrementalDataset& dataset, const StateView& view,
                      const BackboneConfig& config);

/// Fine-tuning with every past-class output row frozen.
Model update_ftplus(const Model& model, const IncrementalDataset& dataset, const StateView& view,
                    const BackboneConfig& config);

/// Fine-tuning, then past rows restored from their first-state snapshot and
/// every row standardized to zero mean and unit population std.
Model update_siw(const Model& model, const IncrementalDataset& dataset, const StateView& view,
                 const BackboneConfig& config);

/// Cross-entropy plus lambda_d * T^2 * KL(teacher || student) on past-class
/// posteriors softened by T, the teacher being the incoming model.
Model update_lwf(const Model& model, const IncrementalDataset& dataset, const StateView& view,
                 const BackboneConfig& config);

/// Cosine classifier with feature distillation
/// lambda * (1 - cos(student feature, teacher feature)).
Model update_lucir_lite(const Model& model, const IncrementalDataset& dataset,
                        const StateView& view, const BackboneConfig& config);

/// Dispatches on config.kind.
Model update_model(const Model& model, const IncrementalDataset& dataset, const StateView& view,
                   const BackboneConfig& config);

/// lambda_base * sqrt(|N_{s-1}| / |P_s|).
double lucir_lambda(int seen_before, int new_classes, double lambda_base);

/// Standardizes in place to zero mean and unit population std. A constant
/// row becomes all zeros and the function returns false.
bool standardize_row(std::span<double> row);

/// Mean of T^2 * KL(teacher || student) over past-class posteriors.
double lwf_distillation_term(const Model& teacher, const Model& student,
                             const IncrementalDataset& dataset,
                             std::span<const std::size_t> rows, double temperature);

/// Mean of 1 - cos(student hidden, teacher hidden).
double lucir_distillation_term(const Model& teacher, const Model& student,
                               const IncrementalDataset& dataset,
                               std::span<const std::size_t> rows);

/// Raw scores of `model` for the given rows over the |N_s| classes.
StateLogits extract_logits(const Model& model, const IncrementalDataset& dataset,
                           const StateSchedule& schedule, std::span<const std::size_t> rows,
                           int state, Provenance provenance = {});

/// Per-state validation and test logits of one full memoryless run.
struct IncrementalRun {
  std::vector<StateLogits> validation;  // index s-1
  std::vector<StateLogits> test;
  Model final_model;
};

IncrementalRun run_incremental(const IncrementalDataset& dataset, const StatePlan& plan,
                               const BackboneConfig& config);

}  // namespace calib_il
