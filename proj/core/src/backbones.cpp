#include "calib_il/backbones.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <string>

#include "calib_il/error.hpp"
#include "calib_il/random.hpp"

namespace calib_il {
namespace {

// Stream ids for derive_seed.
constexpr std::uint64_t kInitStream = 1000;
constexpr std::uint64_t kShuffleStream = 2000;

// Auxiliary terms on top of cross-entropy. The teacher's outputs are cached
// per training sample since it never changes during a state.
struct Objective {
  double distill_weight = 0.0;  // LwF lambda_d
  double temperature = 1.0;
  double feature_weight = 0.0;  // LUCIR-lite lambda
  const Model* teacher = nullptr;
  std::vector<int> teacher_head;  // student head -> teacher head, or -1
};

struct TeacherCache {
  std::vector<std::vector<double>> scores;
  std::vector<std::vector<double>> hidden;
};

struct Buffers {
  Matrix w1;
  std::vector<double> b1;
  std::vector<std::vector<double>> head_w;
  std::vector<double> head_b;
  double scale = 0.0;

  explicit Buffers(const Model& model)
      : w1(model.w1.rows(), model.w1.cols()),
        b1(model.b1.size(), 0.0),
        head_w(model.heads.size(), std::vector<double>(static_cast<std::size_t>(model.hidden_dim), 0.0)),
        head_b(model.heads.size(), 0.0) {}

  void zero() {
    std::fill(w1.values().begin(), w1.values().end(), 0.0);
    std::fill(b1.begin(), b1.end(), 0.0);
    for (auto& w : head_w) std::fill(w.begin(), w.end(), 0.0);
    std::fill(head_b.begin(), head_b.end(), 0.0);
    scale = 0.0;
  }
};

std::vector<double> softmax(std::span<const double> z, double temperature) {
  double max_z = z[0];
  for (double v : z) max_z = std::max(max_z, v);
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp((z[i] - max_z) / temperature);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double cosine_of(std::span<const double> a, std::span<const double> b, double& norm_a, double& norm_b) {
  double dot = 0.0;
  double sa = 0.0;
  double sb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    sa += a[i] * a[i];
    sb += b[i] * b[i];
  }
  norm_a = std::max(std::sqrt(sa), kNormEpsilon);
  norm_b = std::max(std::sqrt(sb), kNormEpsilon);
  return dot / (norm_a * norm_b);
}

// T^2 * KL(p_teacher || p_student) over the teacher's classes; `dz` (sized
// like the student's heads) receives d/dz of lambda * that term.
double lwf_term(const Objective& obj, std::span<const double> teacher_scores,
                std::span<const double> student_scores, double weight, std::vector<double>* dz) {
  std::vector<double> past;
  std::vector<std::size_t> past_heads;
  for (std::size_t c = 0; c < obj.teacher_head.size(); ++c) {
    if (obj.teacher_head[c] >= 0) {
      past.push_back(student_scores[c]);
      past_heads.push_back(c);
    }
  }
  if (past.empty()) return 0.0;
  std::vector<double> ordered_teacher(past.size());
  for (std::size_t i = 0; i < past_heads.size(); ++i) {
    ordered_teacher[i] = teacher_scores[static_cast<std::size_t>(obj.teacher_head[past_heads[i]])];
  }
  const double t = obj.temperature;
  const auto pt = softmax(ordered_teacher, t);
  const auto ps = softmax(past, t);
  double kl = 0.0;
  for (std::size_t i = 0; i < pt.size(); ++i) {
    if (pt[i] > 0.0) kl += pt[i] * (std::log(pt[i]) - std::log(std::max(ps[i], 1e-300)));
  }
  if (dz != nullptr) {
    for (std::size_t i = 0; i < past_heads.size(); ++i) (*dz)[past_heads[i]] += weight * t * (ps[i] - pt[i]);
  }
  return t * t * kl;
}

double train_state(Model& model, const IncrementalDataset& data, std::span<const std::size_t> indices,
                   int epochs, const BackboneConfig& config, const Objective& obj, std::uint64_t shuffle_seed,
                   std::vector<double>* epoch_losses) {
  if (epochs == 0 || indices.empty()) return 0.0;
  const auto h = static_cast<std::size_t>(model.hidden_dim);
  const auto d = static_cast<std::size_t>(model.input_dim);

  TeacherCache cache;
  const bool use_lwf = obj.teacher != nullptr && obj.distill_weight > 0.0;
  const bool use_feature = obj.teacher != nullptr && obj.feature_weight > 0.0;
  if (use_lwf || use_feature) {
    Model::Activations act;
    for (std::size_t idx : indices) {
      obj.teacher->forward(data.features.row(idx), act);
      cache.scores.push_back(act.scores);
      cache.hidden.push_back(act.hidden);
    }
  }
  std::vector<std::size_t> position(indices.size());
  std::iota(position.begin(), position.end(), std::size_t{0});

  Buffers grad(model);
  Buffers velocity(model);
  Rng rng(shuffle_seed);
  Model::Activations act;
  std::vector<double> dz(model.heads.size());
  std::vector<double> dh(h);
  const auto batch = static_cast<std::size_t>(config.batch_size);
  double last_loss = 0.0;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(position.begin(), position.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < position.size(); start += batch) {
      const std::size_t end = std::min(position.size(), start + batch);
      grad.zero();
      for (std::size_t p = start; p < end; ++p) {
        const std::size_t idx = indices[position[p]];
        const auto x = data.features.row(idx);
        model.forward(x, act);

        const auto q = softmax(act.scores, 1.0);
        std::size_t target = model.heads.size();
        for (std::size_t c = 0; c < model.heads.size(); ++c) {
          if (model.heads[c].class_id == data.labels[idx]) target = c;
        }
        for (std::size_t c = 0; c < q.size(); ++c) dz[c] = q[c] - (c == target ? 1.0 : 0.0);
        epoch_loss += -std::log(std::max(q[target], 1e-300));

        if (use_lwf) {
          epoch_loss += obj.distill_weight * lwf_term(obj, cache.scores[position[p]], act.scores,
                                                      obj.distill_weight, &dz);
        }

        std::fill(dh.begin(), dh.end(), 0.0);
        if (use_feature) {
          const auto& teacher_hidden = cache.hidden[position[p]];
          double ns = 0.0;
          double nt = 0.0;
          const double cos = cosine_of(act.hidden, teacher_hidden, ns, nt);
          epoch_loss += obj.feature_weight * (1.0 - cos);
          for (std::size_t j = 0; j < h; ++j) {
            const double us = act.hidden[j] / ns;
            const double ut = teacher_hidden[j] / nt;
            dh[j] -= obj.feature_weight * (ut - cos * us) / ns;
          }
        }

        if (!model.cosine) {
          for (std::size_t c = 0; c < model.heads.size(); ++c) {
            const auto& w = model.heads[c].weights;
            auto& gw = grad.head_w[c];
            for (std::size_t j = 0; j < h; ++j) {
              gw[j] += dz[c] * act.hidden[j];
              dh[j] += dz[c] * w[j];
            }
            grad.head_b[c] += dz[c];
          }
        } else {
          const double hn = act.hidden_norm;
          for (std::size_t c = 0; c < model.heads.size(); ++c) {
            const auto& w = model.heads[c].weights;
            const double wn = act.head_norms[c];
            const double cos = act.scores[c] / model.scale;
            auto& gw = grad.head_w[c];
            for (std::size_t j = 0; j < h; ++j) {
              const double u = act.hidden[j] / hn;
              const double v = w[j] / wn;
              gw[j] += dz[c] * model.scale * (u - cos * v) / wn;
              dh[j] += dz[c] * model.scale * (v - cos * u) / hn;
            }
            grad.scale += dz[c] * cos;
          }
        }

        for (std::size_t j = 0; j < h; ++j) {
          if (act.pre[j] <= 0.0) continue;
          auto gw = grad.w1.row(j);
          for (std::size_t f = 0; f < d; ++f) gw[f] += dh[j] * x[f];
          grad.b1[j] += dh[j];
        }
      }

      const double inv_b = 1.0 / static_cast<double>(end - start);
      const double lr = config.learning_rate;
      const double mu = config.momentum;
      const double wd = config.weight_decay;
      auto step = [&](double& w, double& v, double g, bool decay) {
        v = mu * v + g * inv_b + (decay ? wd * w : 0.0);
        w -= lr * v;
      };
      for (std::size_t i = 0; i < model.w1.values().size(); ++i) {
        step(model.w1.values()[i], velocity.w1.values()[i], grad.w1.values()[i], true);
      }
      for (std::size_t j = 0; j < h; ++j) step(model.b1[j], velocity.b1[j], grad.b1[j], false);
      for (std::size_t c = 0; c < model.heads.size(); ++c) {
        ClassHead& head = model.heads[c];
        if (head.frozen) continue;
        for (std::size_t j = 0; j < h; ++j) step(head.weights[j], velocity.head_w[c][j], grad.head_w[c][j], true);
        if (!model.cosine) step(head.bias, velocity.head_b[c], grad.head_b[c], false);
      }
      if (model.cosine) step(model.scale, velocity.scale, grad.scale, false);
    }
    last_loss = epoch_loss / static_cast<double>(indices.size());
    if (epoch_losses != nullptr) epoch_losses->push_back(last_loss);
  }
  return last_loss;
}

std::vector<int> new_classes_of(const IncrementalDataset& data, const StateView& view) {
  std::vector<int> classes;
  for (std::size_t idx : view.train) classes.push_back(data.labels.at(idx));
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  return classes;
}

void add_heads(Model& model, const IncrementalDataset& data, const StateView& view, const BackboneConfig& config) {
  const auto classes = new_classes_of(data, view);
  if (classes.empty()) throw DataError("state " + std::to_string(view.state) + " has no training samples");
  Rng rng(derive_seed(config.seed, kInitStream + static_cast<std::uint64_t>(view.state)));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(model.hidden_dim)));
  for (int class_id : classes) {
    if (model.find_head(class_id) != nullptr) {
      throw DataError("state " + std::to_string(view.state) + " retrains class " + std::to_string(class_id) +
                      " from an earlier state");
    }
    ClassHead head;
    head.class_id = class_id;
    head.first_state = view.state;
    head.weights.resize(static_cast<std::size_t>(model.hidden_dim));
    for (double& w : head.weights) w = normal(rng);
    model.heads.push_back(std::move(head));
  }
  std::sort(model.heads.begin(), model.heads.end(),
            [](const ClassHead& a, const ClassHead& b) { return a.class_id < b.class_id; });
}

void snapshot_new_heads(Model& model, int state) {
  for (ClassHead& head : model.heads) {
    if (head.first_state == state) {
      head.initial_weights = head.weights;
      head.initial_bias = head.bias;
    }
  }
}

void check_input(const Model& model, const IncrementalDataset& data, const StateView& view) {
  if (data.feature_dim() != model.input_dim) {
    throw DataError("dataset has " + std::to_string(data.feature_dim()) + " features, model expects " +
                    std::to_string(model.input_dim));
  }
  if (view.state <= model.state) {
    throw DataError("state " + std::to_string(view.state) + " does not follow the model's state " +
                    std::to_string(model.state));
  }
}

Objective teacher_objective(const Model& teacher, const Model& student) {
  Objective obj;
  obj.teacher = &teacher;
  obj.teacher_head.assign(student.heads.size(), -1);
  for (std::size_t c = 0; c < student.heads.size(); ++c) {
    for (std::size_t t = 0; t < teacher.heads.size(); ++t) {
      if (teacher.heads[t].class_id == student.heads[c].class_id) obj.teacher_head[c] = static_cast<int>(t);
    }
  }
  return obj;
}

// Fine-tuning with an optional LwF term; lambda_d = 0 is plain fine-tuning.
Model finetune_with(const Model& model, const IncrementalDataset& data, const StateView& view,
                    const BackboneConfig& config, double distill_weight) {
  config.validate();
  check_input(model, data, view);
  Model student = model;
  add_heads(student, data, view, config);
  Objective obj;
  if (distill_weight > 0.0) {
    obj = teacher_objective(model, student);
    obj.distill_weight = distill_weight;
    obj.temperature = config.temperature;
  }
  train_state(student, data, view.train, config.epochs_incremental, config, obj,
              derive_seed(config.seed, kShuffleStream + static_cast<std::uint64_t>(view.state)), nullptr);
  snapshot_new_heads(student, view.state);
  student.state = view.state;
  return student;
}

}  // namespace

Model train_initial(const BackboneConfig& config, const IncrementalDataset& dataset, const StateView& first,
                    std::vector<double>* epoch_losses) {
  config.validate();
  if (first.train.empty()) throw DataError("initial state has no training samples");
  Model model;
  model.input_dim = dataset.feature_dim();
  model.hidden_dim = config.hidden_dim;
  model.cosine = config.kind == BackboneKind::kLucirLite;
  model.scale = model.cosine ? config.cosine_scale_init : 1.0;

  Rng rng(derive_seed(config.seed, kInitStream));
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(model.input_dim)));
  model.w1 = Matrix(static_cast<std::size_t>(model.hidden_dim), static_cast<std::size_t>(model.input_dim));
  for (double& w : model.w1.values()) w = normal(rng);
  model.b1.assign(static_cast<std::size_t>(model.hidden_dim), 0.0);

  add_heads(model, dataset, first, config);
  train_state(model, dataset, first.train, config.epochs_initial, config, Objective{},
              derive_seed(config.seed, kShuffleStream + static_cast<std::uint64_t>(first.state)), epoch_losses);
  snapshot_new_heads(model, first.state);
  model.state = first.state;
  return model;
}

Model update_finetune(const Model& model, const IncrementalDataset& dataset, const StateView& view,
                      const BackboneConfig& config) {
  return finetune_with(model, dataset, view, config, 0.0);
}

Model update_ftplus(const Model& model, const IncrementalDataset& dataset, const StateView& view,
                    const BackboneConfig& config) {
  Model frozen = model;
  for (ClassHead& head : frozen.heads) head.frozen = true;
  return finetune_with(frozen, dataset, view, config, 0.0);
}

Model update_siw(const Model& model, const IncrementalDataset& dataset, const StateView& view,
                 const BackboneConfig& config) {
  if (model.hidden_dim < 2) throw SpecError("SIW standardization needs hidden_dim >= 2");
  Model out = finetune_with(model, dataset, view, config, 0.0);
  for (ClassHead& head : out.heads) {
    if (head.first_state < view.state) {
      head.weights = head.initial_weights;
      head.bias = head.initial_bias;
    }
    if (!standardize_row(head.weights)) {
      std::cerr << "level=warning event=siw_constant_row class=" << head.class_id << " state=" << view.state
                << '\n';
    }
  }
  return out;
}

Model update_lwf(const Model& model, const IncrementalDataset& dataset, const StateView& view,
                 const BackboneConfig& config) {
  if (!(config.temperature > 0.0)) throw SpecError("distillation temperature must be > 0");
  return finetune_with(model, dataset, view, config, config.distill_weight);
}

Model update_lucir_lite(const Model& model, const IncrementalDataset& dataset, const StateView& view,
                        const BackboneConfig& config) {
  config.validate();
  check_input(model, dataset, view);
  if (!model.cosine) throw SpecError("LUCIR-lite needs a cosine-classifier model");
  Model student = model;
  for (ClassHead& head : student.heads) head.frozen = true;
  add_heads(student, dataset, view, config);

  Objective obj = teacher_objective(model, student);
  const int new_classes = static_cast<int>(student.heads.size() - model.heads.size());
  obj.feature_weight = lucir_lambda(static_cast<int>(model.heads.size()), new_classes, config.lambda_base);
  train_state(student, dataset, view.train, config.epochs_incremental, config, obj,
              derive_seed(config.seed, kShuffleStream + static_cast<std::uint64_t>(view.state)), nullptr);
  snapshot_new_heads(student, view.state);
  student.state = view.state;
  return student;
}

Model update_model(const Model& model, const IncrementalDataset& dataset, const StateView& view,
                   const BackboneConfig& config) {
  switch (config.kind) {
    case BackboneKind::kFtPlus: return update_ftplus(model, dataset, view, config);
    case BackboneKind::kSiw: return update_siw(model, dataset, view, config);
    case BackboneKind::kLwf: return update_lwf(model, dataset, view, config);
    case BackboneKind::kLucirLite: return update_lucir_lite(model, dataset, view, config);
  }
  throw SpecError("unknown backbone kind");
}

double lucir_lambda(int seen_before, int new_classes, double lambda_base) {
  if (seen_before < 1 || new_classes < 1) throw SpecError("lucir_lambda needs positive class counts");
  return lambda_base * std::sqrt(static_cast<double>(seen_before) / static_cast<double>(new_classes));
}

bool standardize_row(std::span<double> row) {
  if (row.empty()) return false;
  double mean = 0.0;
  for (double v : row) mean += v;
  mean /= static_cast<double>(row.size());
  double var = 0.0;
  for (double v : row) var += (v - mean) * (v - mean);
  const double stddev = std::sqrt(var / static_cast<double>(row.size()));
  if (!(stddev > 0.0)) {
    std::fill(row.begin(), row.end(), 0.0);
    return false;
  }
  for (double& v : row) v = (v - mean) / stddev;
  return true;
}

double lwf_distillation_term(const Model& teacher, const Model& student, const IncrementalDataset& dataset,
                             std::span<const std::size_t> rows, double temperature) {
  if (!(temperature > 0.0)) throw SpecError("distillation temperature must be > 0");
  if (rows.empty()) return 0.0;
  Objective obj = teacher_objective(teacher, student);
  obj.temperature = temperature;
  double sum = 0.0;
  for (std::size_t idx : rows) {
    const auto x = dataset.features.row(idx);
    sum += lwf_term(obj, teacher.scores(x), student.scores(x), 0.0, nullptr);
  }
  return sum / static_cast<double>(rows.size());
}

double lucir_distillation_term(const Model& teacher, const Model& student, const IncrementalDataset& dataset,
                               std::span<const std::size_t> rows) {
  if (rows.empty()) return 0.0;
  Model::Activations a;
  Model::Activations b;
  double sum = 0.0;
  for (std::size_t idx : rows) {
    const auto x = dataset.features.row(idx);
    student.forward(x, a);
    teacher.forward(x, b);
    double na = 0.0;
    double nb = 0.0;
    sum += 1.0 - cosine_of(a.hidden, b.hidden, na, nb);
  }
  return sum / static_cast<double>(rows.size());
}

StateLogits extract_logits(const Model& model, const IncrementalDataset& dataset, const StateSchedule& schedule,
                           std::span<const std::size_t> rows, int state, Provenance provenance) {
  if (model.class_ids() != schedule.seen_classes(state)) {
    throw DataError("model covers " + std::to_string(model.heads.size()) + " classes, state " +
                    std::to_string(state) + " needs exactly the " + std::to_string(schedule.seen_count(state)) +
                    " classes of N_s");
  }
  Matrix scores(rows.size(), model.heads.size());
  std::vector<int> labels;
  labels.reserve(rows.size());
  Model::Activations act;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    model.forward(dataset.features.row(rows[i]), act);
    std::copy(act.scores.begin(), act.scores.end(), scores.row(i).begin());
    labels.push_back(dataset.labels.at(rows[i]));
  }
  return StateLogits(schedule, state, std::move(scores), std::move(labels), std::move(provenance));
}

IncrementalRun run_incremental(const IncrementalDataset& dataset, const StatePlan& plan,
                               const BackboneConfig& config) {
  if (plan.states.empty()) throw DataError("state plan is empty");
  const Provenance provenance{dataset.name, std::string(to_string(config.kind)), config.seed};
  IncrementalRun run;
  Model model = train_initial(config, dataset, plan.states.front());
  for (const StateView& view : plan.states) {
    if (view.state > 1) model = update_model(model, dataset, view, config);
    run.validation.push_back(extract_logits(model, dataset, plan.schedule, view.validation, view.state, provenance));
    run.test.push_back(extract_logits(model, dataset, plan.schedule, view.test, view.state, provenance));
  }
  run.final_model = std::move(model);
  return run;
}

}  // namespace calib_il
