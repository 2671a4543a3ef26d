#include "calib_il/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "calib_il/error.hpp"

namespace calib_il {

std::string_view to_string(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::kFtPlus: return "ftplus";
    case BackboneKind::kSiw: return "siw";
    case BackboneKind::kLwf: return "lwf";
    case BackboneKind::kLucirLite: return "lucir_lite";
  }
  return "?";
}

BackboneKind parse_backbone(std::string_view text) {
  if (text == "ftplus") return BackboneKind::kFtPlus;
  if (text == "siw") return BackboneKind::kSiw;
  if (text == "lwf") return BackboneKind::kLwf;
  if (text == "lucir_lite") return BackboneKind::kLucirLite;
  throw SpecError("unknown backbone '" + std::string(text) + "' (expected ftplus, siw, lwf or lucir_lite)");
}

void BackboneConfig::validate() const {
  if (hidden_dim < 1) throw SpecError("backbone hidden_dim must be >= 1");
  if (epochs_initial < 0 || epochs_incremental < 0) throw SpecError("backbone epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw SpecError("backbone learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw SpecError("backbone momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw SpecError("backbone weight_decay must be >= 0");
  if (batch_size < 1) throw SpecError("backbone batch_size must be >= 1");
  if (!(temperature > 0.0)) throw SpecError("distillation temperature must be > 0");
  if (!(distill_weight >= 0.0)) throw SpecError("distillation weight must be >= 0");
  if (!(lambda_base >= 0.0)) throw SpecError("lambda_base must be >= 0");
  if (!(cosine_scale_init > 0.0)) throw SpecError("cosine_scale_init must be > 0");
}

void Model::forward(std::span<const double> x, Activations& out) const {
  const auto h = static_cast<std::size_t>(hidden_dim);
  out.pre.resize(h);
  out.hidden.resize(h);
  for (std::size_t j = 0; j < h; ++j) {
    const auto w = w1.row(j);
    double a = b1[j];
    for (std::size_t f = 0; f < x.size(); ++f) a += w[f] * x[f];
    out.pre[j] = a;
    out.hidden[j] = a > 0.0 ? a : 0.0;
  }

  out.scores.resize(heads.size());
  if (!cosine) {
    for (std::size_t c = 0; c < heads.size(); ++c) {
      double z = heads[c].bias;
      for (std::size_t j = 0; j < h; ++j) z += heads[c].weights[j] * out.hidden[j];
      out.scores[c] = z;
    }
    return;
  }

  double sq = 0.0;
  for (double v : out.hidden) sq += v * v;
  out.hidden_norm = std::max(std::sqrt(sq), kNormEpsilon);
  out.head_norms.resize(heads.size());
  for (std::size_t c = 0; c < heads.size(); ++c) {
    double dot = 0.0;
    double wsq = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      dot += heads[c].weights[j] * out.hidden[j];
      wsq += heads[c].weights[j] * heads[c].weights[j];
    }
    out.head_norms[c] = std::max(std::sqrt(wsq), kNormEpsilon);
    out.scores[c] = scale * dot / (out.hidden_norm * out.head_norms[c]);
  }
}

std::vector<double> Model::scores(std::span<const double> x) const {
  Activations act;
  forward(x, act);
  return std::move(act.scores);
}

int Model::predict(std::span<const double> x) const {
  if (heads.empty()) throw DataError("model has no output classes");
  const auto s = scores(x);
  std::size_t best = 0;
  for (std::size_t c = 1; c < s.size(); ++c) {
    if (s[c] > s[best]) best = c;
  }
  return heads[best].class_id;
}

std::vector<int> Model::class_ids() const {
  std::vector<int> out;
  out.reserve(heads.size());
  for (const ClassHead& head : heads) out.push_back(head.class_id);
  return out;
}

const ClassHead* Model::find_head(int class_id) const {
  auto it = std::lower_bound(heads.begin(), heads.end(), class_id,
                             [](const ClassHead& head, int id) { return head.class_id < id; });
  return it != heads.end() && it->class_id == class_id ? &*it : nullptr;
}

}  // namespace calib_il
