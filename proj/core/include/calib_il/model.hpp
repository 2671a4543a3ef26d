#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "calib_il/matrix.hpp"

namespace calib_il {

enum class BackboneKind { kFtPlus, kSiw, kLwf, kLucirLite };

std::string_view to_string(BackboneKind kind);
/// Accepts "ftplus", "siw", "lwf", "lucir_lite"; throws SpecError otherwise.
BackboneKind parse_backbone(std::string_view text);

struct BackboneConfig {
  BackboneKind kind = BackboneKind::kFtPlus;
  int hidden_dim = 64;
  int epochs_initial = 60;
  int epochs_incremental = 30;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 32;
  double temperature = 2.0;       // LwF
  double distill_weight = 1.0;    // LwF lambda_d
  double lambda_base = 5.0;       // LUCIR-lite
  double cosine_scale_init = 10.0;  // LUCIR-lite eta at initialization
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

/// Output row of one class.
struct ClassHead {
  int class_id = 0;
  int first_state = 1;
  std::vector<double> weights;
  double bias = 0.0;
  bool frozen = false;
  // Row as learned in the class's first state (SIW restores it).
  std::vector<double> initial_weights;
  double initial_bias = 0.0;

  bool operator==(const ClassHead&) const = default;
};

/// Two-layer MLP: hidden = relu(W1 x + b1), then either linear scores
/// w_c . hidden + b_c or cosine scores eta * cos(hidden, w_c).
struct Model {
  int input_dim = 0;
  int hidden_dim = 0;
  Matrix w1;  // hidden_dim x input_dim
  std::vector<double> b1;
  std::vector<ClassHead> heads;  // sorted by class_id
  bool cosine = false;
  double scale = 1.0;  // eta, cosine mode only
  int state = 0;       // last state trained

  struct Activations {
    std::vector<double> pre;     // W1 x + b1
    std::vector<double> hidden;  // relu(pre)
    double hidden_norm = 0.0;    // cosine mode
    std::vector<double> head_norms;
    std::vector<double> scores;
  };

  void forward(std::span<const double> x, Activations& out) const;
  std::vector<double> scores(std::span<const double> x) const;
  /// Class id with the highest score; ties to the lowest class id.
  int predict(std::span<const double> x) const;
  std::vector<int> class_ids() const;
  const ClassHead* find_head(int class_id) const;

  bool operator==(const Model&) const = default;
};

inline constexpr double kNormEpsilon = 1e-8;

}  // namespace calib_il
