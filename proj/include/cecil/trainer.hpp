#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "cecil/buffer.hpp"
#include "cecil/dataset.hpp"
#include "cecil/nn/loss.hpp"
#include "cecil/nn/net.hpp"
#include "cecil/nn/sgd.hpp"
#include "cecil/rng.hpp"

namespace cecil {

enum class Method { icarl, wa };

inline std::string method_label(Method m) { return m == Method::icarl ? "icarl" : "wa"; }

inline Method method_from_label(const std::string& s) {
  if (s == "icarl") return Method::icarl;
  if (s == "wa") return Method::wa;
  throw ConfigError("unknown training method: " + s);
}

struct TrainConfig {
  std::string backbone = "resnet-lite-w8";
  int epochs = 12;
  int batch_size = 32;
  double lr = 0.1;
  std::vector<int> milestones;
  double lr_decay = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double distill_temperature = 2.0;
  std::uint32_t seed = 1993;
};

inline void validate_train_config(const TrainConfig& cfg) {
  require<ConfigError>(cfg.epochs > 0, "epochs must be positive");
  require<ConfigError>(cfg.batch_size > 0, "batch_size must be positive");
  require<ConfigError>(cfg.lr >= 0, "lr must be non-negative");
  require<ConfigError>(cfg.lr_decay > 0, "lr_decay must be positive");
  require<ConfigError>(cfg.momentum >= 0 && cfg.momentum < 1, "momentum must be in [0,1)");
  require<ConfigError>(cfg.weight_decay >= 0, "weight_decay must be non-negative");
  require<ConfigError>(cfg.distill_temperature > 0, "distill_temperature must be positive");
  for (int m : cfg.milestones)
    require<ConfigError>(m > 0 && m < cfg.epochs,
                         "lr milestone " + std::to_string(m) + " outside (0, epochs)");
}

/// Linear classifier over backbone features; rows of `weight` are classes.
struct LinearHead {
  nn::Param weight{"head.weight", 0};
  nn::Param bias{"head.bias", 0};
  int dim = 0;
  int classes = 0;

  nn::ConstMatMap W() const { return nn::ConstMatMap(weight.value.data(), classes, dim); }

  nn::RowMat logits(const nn::RowMat& features) const {
    require(int(features.cols()) == dim, "head: feature width mismatch");
    nn::RowMat out = features * W().transpose();
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      for (int j = 0; j < classes; ++j) out(i, j) += bias.value[std::size_t(j)];
    return out;
  }

  /// Appends `extra` freshly initialized class rows.
  void expand(int extra, std::mt19937& gen) {
    require(extra > 0, "head expansion must add classes");
    std::vector<float> rows(std::size_t(extra) * dim);
    nn::he_normal_init(rows, dim, gen);
    weight.value.insert(weight.value.end(), rows.begin(), rows.end());
    weight.grad.assign(weight.value.size(), 0.0f);
    bias.value.insert(bias.value.end(), std::size_t(extra), 0.0f);
    bias.grad.assign(bias.value.size(), 0.0f);
    classes += extra;
  }

  // Gradient accumulation for dL/dlogits; returns dL/dfeatures.
  nn::RowMat backward(const nn::RowMat& features, const nn::RowMat& dlogits) {
    nn::MatMap dW(weight.grad.data(), classes, dim);
    dW.noalias() += dlogits.transpose() * features;
    for (Eigen::Index i = 0; i < dlogits.rows(); ++i)
      for (int j = 0; j < classes; ++j) bias.grad[std::size_t(j)] += dlogits(i, j);
    return dlogits * W();
  }

  void zero_grads() {
    std::fill(weight.grad.begin(), weight.grad.end(), 0.0f);
    std::fill(bias.grad.begin(), bias.grad.end(), 0.0f);
  }

  double row_norm(int row) const {
    return double(W().row(row).norm());
  }
};

// A trained state of the incremental learner: backbone + expanding head.
// Head slot j holds the j-th class the model has seen (task arrival order);
// `seen_classes` maps slots back to dataset class ids.
struct ModelSnapshot {
  std::unique_ptr<nn::ConvNet> backbone;
  LinearHead head;
  int step = -1;
  std::vector<int> seen_classes;

  bool initialized() const { return backbone != nullptr; }

  int slot_of(int class_id) const {
    for (std::size_t j = 0; j < seen_classes.size(); ++j)
      if (seen_classes[j] == class_id) return static_cast<int>(j);
    throw StageError("class " + std::to_string(class_id) +
                     " has not been seen by this model");
  }
};

inline ModelSnapshot clone_snapshot(const ModelSnapshot& m) {
  ModelSnapshot out;
  if (m.backbone) out.backbone = nn::clone_net(*m.backbone);
  out.head = m.head;
  out.step = m.step;
  out.seen_classes = m.seen_classes;
  return out;
}

/// Deterministic feature extraction (evaluation mode), batched.
inline nn::RowMat extract_features(nn::ConvNet& backbone,
                                   const std::vector<const Image*>& images,
                                   int batch_size = 64) {
  require(!images.empty(), "extract_features on an empty batch");
  nn::RowMat out(images.size(), backbone.feature_dim());
  for (std::size_t at = 0; at < images.size(); at += std::size_t(batch_size)) {
    std::size_t n = std::min(std::size_t(batch_size), images.size() - at);
    std::vector<const Image*> chunk(images.begin() + long(at),
                                    images.begin() + long(at + n));
    nn::RowMat f = backbone.forward_features(nn::images_to_tensor(chunk), false);
    out.middleRows(Eigen::Index(at), Eigen::Index(n)) = f;
  }
  return out;
}

namespace detail {

struct TrainItem {
  const Image* image;
  int slot;  // head slot, not class id
};

inline std::vector<nn::Param*> all_params(ModelSnapshot& m) {
  auto params = m.backbone->params();
  params.push_back(&m.head.weight);
  params.push_back(&m.head.bias);
  return params;
}

}  // namespace detail

// One incremental step: expands the head with the task's classes and trains
// on task data plus replayed exemplars.
//   icarl: loss = (1-λ)·CE + λ·T²·KD against the previous snapshot over old
//          slots, λ = old/(old+new); step 0 reduces to plain CE.
//   wa:    same objective, then new-class weight rows are rescaled so the
//          mean new-row norm equals the mean old-row norm.
inline ModelSnapshot train_step(ModelSnapshot model,
                                const std::vector<Sample>& train_split,
                                const std::vector<int>& task_indices,
                                const std::vector<int>& task_classes,
                                const ExemplarBuffer& buffer, Method method,
                                const TrainConfig& cfg) {
  validate_train_config(cfg);
  require(!task_classes.empty(), "train_step with no task classes");
  require(!task_indices.empty(), "train_step with no task samples");
  for (int c : task_classes)
    for (int s : model.seen_classes)
      require(c != s, "task class " + std::to_string(c) + " was already seen");
  for (const auto& e : buffer.entries) {
    bool seen = false;
    for (int s : model.seen_classes) seen = seen || s == e.class_id;
    require(seen, "buffer holds class " + std::to_string(e.class_id) +
                      " which the model has not seen");
  }

  const int next_step = model.step + 1;
  if (!model.initialized()) {
    model.backbone = nn::make_backbone(cfg.backbone, mix_seed(cfg.seed, 0xB0D15EEDu));
    model.head.dim = model.backbone->feature_dim();
  }
  const int old_classes = static_cast<int>(model.seen_classes.size());
  ModelSnapshot teacher;
  if (old_classes > 0) teacher = clone_snapshot(model);

  {
    std::mt19937 gen(mix_seed(cfg.seed, 0x4EAD0000u + std::uint32_t(next_step)));
    model.head.expand(static_cast<int>(task_classes.size()), gen);
  }
  model.seen_classes.insert(model.seen_classes.end(), task_classes.begin(),
                            task_classes.end());
  const int total_classes = static_cast<int>(model.seen_classes.size());
  const double lambda = double(old_classes) / double(total_classes);
  const double T = cfg.distill_temperature;

  std::vector<detail::TrainItem> items;
  items.reserve(task_indices.size() + buffer.entries.size());
  for (int idx : task_indices) {
    const Sample& s = train_split[std::size_t(idx)];
    items.push_back({&s.image, model.slot_of(s.label)});
  }
  for (const auto& e : buffer.entries)
    items.push_back({&e.image, model.slot_of(e.class_id)});

  auto params = detail::all_params(model);
  nn::Sgd opt(cfg.momentum, cfg.weight_decay);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = nn::lr_at_epoch(cfg.lr, cfg.milestones, cfg.lr_decay, epoch);
    auto order = permutation_v1(
        static_cast<int>(items.size()),
        mix_seed(cfg.seed, 0xE90C0000u + std::uint32_t(next_step) * 251u +
                               std::uint32_t(epoch)));
    for (std::size_t at = 0; at < order.size(); at += std::size_t(cfg.batch_size)) {
      std::size_t n = std::min(std::size_t(cfg.batch_size), order.size() - at);
      std::vector<const Image*> images(n);
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& item = items[std::size_t(order[at + i])];
        images[i] = item.image;
        labels[i] = item.slot;
      }
      nn::Tensor x = nn::images_to_tensor(images);
      nn::RowMat feat = model.backbone->forward_features(x, true);
      nn::RowMat logits = model.head.logits(feat);

      auto ce = nn::softmax_cross_entropy(logits, labels);
      double loss = (1.0 - lambda) * ce.loss;
      nn::RowMat dlogits = float(1.0 - lambda) * ce.dlogits;
      if (old_classes > 0) {
        nn::RowMat tfeat = teacher.backbone->forward_features(x, false);
        nn::RowMat tlogits = teacher.head.logits(tfeat);
        auto kd = nn::distillation_loss(tlogits, logits, old_classes, T);
        loss += lambda * T * T * kd.loss;
        dlogits += float(lambda * T * T) * kd.dlogits;
      }
      if (!std::isfinite(loss))
        throw StageError("training diverged (non-finite loss) at step " +
                         std::to_string(next_step) + ", epoch " +
                         std::to_string(epoch) + ", batch offset " +
                         std::to_string(at));

      model.backbone->zero_grads();
      model.head.zero_grads();
      nn::RowMat dfeat = model.head.backward(feat, dlogits);
      model.backbone->backward_from_features(dfeat);
      opt.step(params, lr);
    }
  }

  if (method == Method::wa && old_classes > 0) {
    double old_norm = 0, new_norm = 0;
    for (int r = 0; r < old_classes; ++r) old_norm += model.head.row_norm(r);
    for (int r = old_classes; r < total_classes; ++r) new_norm += model.head.row_norm(r);
    old_norm /= double(old_classes);
    new_norm /= double(total_classes - old_classes);
    require(new_norm > 0, "weight alignment: new-class rows have zero norm");
    float scale = float(old_norm / new_norm);
    nn::MatMap W(model.head.weight.value.data(), model.head.classes, model.head.dim);
    for (int r = old_classes; r < total_classes; ++r) W.row(r) *= scale;
  }

  model.step = next_step;
  return model;
}

/// Nearest-mean classification: row index of the closest mean per query
/// (plain Euclidean distance, ties to the lower index).
inline std::vector<int> nearest_mean_predict(const nn::RowMat& means,
                                             const nn::RowMat& queries) {
  require(means.rows() > 0, "nearest_mean_predict with no means");
  require(means.cols() == queries.cols(), "mean/query dimension mismatch");
  std::vector<int> out(std::size_t(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index m = 0; m < means.rows(); ++m) {
      double d = double((queries.row(i) - means.row(m)).squaredNorm());
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(m);
      }
    }
    out[std::size_t(i)] = best;
  }
  return out;
}

struct EvalResult {
  double accuracy = 0;
  std::vector<int> labels;      // ground-truth class ids
  std::vector<int> predicted;   // predicted class ids, aligned with labels
};

namespace detail {

/// Per-slot exemplar feature means (L2-normalized features, normalized mean).
inline nn::RowMat exemplar_class_means(const ModelSnapshot& model,
                                       const ExemplarBuffer& buffer) {
  const int slots = static_cast<int>(model.seen_classes.size());
  std::vector<std::vector<const Image*>> per_slot;
  per_slot.resize(std::size_t(slots));
  for (const auto& e : buffer.entries)
    per_slot[std::size_t(model.slot_of(e.class_id))].push_back(&e.image);
  nn::RowMat means(slots, model.backbone->feature_dim());
  for (int s = 0; s < slots; ++s) {
    require(!per_slot[std::size_t(s)].empty(),
            "nearest-mean evaluation: class " +
                std::to_string(model.seen_classes[std::size_t(s)]) +
                " has no exemplars in the buffer");
    nn::RowMat f = extract_features(*const_cast<ModelSnapshot&>(model).backbone,
                                    per_slot[std::size_t(s)]);
    detail::l2_normalize_rows(f);
    Eigen::RowVectorXf mu = f.colwise().mean();
    float norm = mu.norm();
    if (norm > 0) mu /= norm;
    means.row(s) = mu;
  }
  return means;
}

}  // namespace detail

// Top-1 accuracy over `samples`, whose labels must all have been seen.
//   icarl: nearest mean of exemplar features (needs the buffer).
//   wa:    argmax of the head logits.
inline EvalResult evaluate(const ModelSnapshot& model,
                           const std::vector<Sample>& samples, Method method,
                           const ExemplarBuffer* buffer = nullptr) {
  require(model.initialized(), "evaluate on an untrained model");
  require(!samples.empty(), "evaluate on an empty sample set");
  for (const auto& s : samples) model.slot_of(s.label);  // throws on unseen

  std::vector<const Image*> images;
  images.reserve(samples.size());
  for (const auto& s : samples) images.push_back(&s.image);
  auto& backbone = *const_cast<ModelSnapshot&>(model).backbone;
  nn::RowMat feat = extract_features(backbone, images);

  std::vector<int> slot_pred;
  if (method == Method::icarl) {
    require(buffer != nullptr && !buffer->entries.empty(),
            "nearest-mean evaluation needs a non-empty exemplar buffer");
    nn::RowMat means = detail::exemplar_class_means(model, *buffer);
    nn::RowMat q = feat;
    detail::l2_normalize_rows(q);
    slot_pred = nearest_mean_predict(means, q);
  } else {
    nn::RowMat logits = model.head.logits(feat);
    slot_pred.resize(std::size_t(logits.rows()));
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      Eigen::Index arg = 0;
      logits.row(i).maxCoeff(&arg);
      slot_pred[std::size_t(i)] = static_cast<int>(arg);
    }
  }

  EvalResult res;
  res.labels.reserve(samples.size());
  res.predicted.reserve(samples.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    int pred_class = model.seen_classes[std::size_t(slot_pred[i])];
    res.labels.push_back(samples[i].label);
    res.predicted.push_back(pred_class);
    if (pred_class == samples[i].label) ++hits;
  }
  res.accuracy = double(hits) / double(samples.size());
  return res;
}

// ---------------------------------------------------------------------------
// Snapshot persistence: versioned binary blob. Layout (little-endian):
//   magic "CECILMD1" | u32 version | arch string | u32 feature_dim |
//   i32 step | i32 seen-count | seen class ids | u32 param-count |
//   per param: name string | u64 float-count | raw float32 data
// Strings are u32 length + bytes.
// ---------------------------------------------------------------------------

inline constexpr char kSnapshotMagic[8] = {'C', 'E', 'C', 'I', 'L', 'M', 'D', '1'};

namespace detail {

inline void write_string(std::ofstream& out, const std::string& s) {
  std::uint32_t len = static_cast<std::uint32_t>(s.size());
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(s.data(), std::streamsize(s.size()));
}

inline std::string read_string(std::ifstream& in) {
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 4);
  std::string s(len, '\0');
  in.read(s.data(), std::streamsize(len));
  require(bool(in), "truncated snapshot string");
  return s;
}

}  // namespace detail

inline void save_snapshot(const ModelSnapshot& model,
                          const std::filesystem::path& path) {
  require(model.initialized(), "cannot save an untrained model");
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(bool(out), "cannot write snapshot: " + path.string());
  out.write(kSnapshotMagic, 8);
  std::uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  detail::write_string(out, model.backbone->arch());
  std::uint32_t dim = std::uint32_t(model.head.dim);
  out.write(reinterpret_cast<const char*>(&dim), 4);
  std::int32_t step = model.step;
  out.write(reinterpret_cast<const char*>(&step), 4);
  std::int32_t seen = static_cast<std::int32_t>(model.seen_classes.size());
  out.write(reinterpret_cast<const char*>(&seen), 4);
  for (int c : model.seen_classes) {
    std::int32_t v = c;
    out.write(reinterpret_cast<const char*>(&v), 4);
  }
  auto params = const_cast<ModelSnapshot&>(model).backbone->params();
  std::vector<const nn::Param*> all(params.begin(), params.end());
  all.push_back(&model.head.weight);
  all.push_back(&model.head.bias);
  std::uint32_t count = static_cast<std::uint32_t>(all.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const nn::Param* p : all) {
    detail::write_string(out, p->name);
    std::uint64_t n = p->value.size();
    out.write(reinterpret_cast<const char*>(&n), 8);
    out.write(reinterpret_cast<const char*>(p->value.data()),
              std::streamsize(n * sizeof(float)));
  }
  require(bool(out), "snapshot write failed: " + path.string());

  nlohmann::json side;
  side["format"] = "cecil-model";
  side["version"] = 1;
  side["arch"] = model.backbone->arch();
  side["feature_dim"] = model.head.dim;
  side["step"] = model.step;
  side["seen_classes"] = model.seen_classes;
  side["params"] = all.size();
  write_text_file(path.string() + ".json", side.dump(2) + "\n");
}

inline ModelSnapshot load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), "cannot open snapshot: " + path.string());
  char magic[8];
  in.read(magic, 8);
  require(in && std::memcmp(magic, kSnapshotMagic, 8) == 0,
          "bad snapshot magic in " + path.string());
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  require(version == 1, "unsupported snapshot version " + std::to_string(version));
  std::string arch = detail::read_string(in);
  std::uint32_t dim = 0;
  in.read(reinterpret_cast<char*>(&dim), 4);
  ModelSnapshot model;
  std::int32_t step = 0, seen = 0;
  in.read(reinterpret_cast<char*>(&step), 4);
  in.read(reinterpret_cast<char*>(&seen), 4);
  model.step = step;
  for (int i = 0; i < seen; ++i) {
    std::int32_t c = 0;
    in.read(reinterpret_cast<char*>(&c), 4);
    model.seen_classes.push_back(c);
  }
  model.backbone = nn::make_backbone(arch, 0);
  require(model.backbone->feature_dim() == int(dim),
          "snapshot feature dim disagrees with backbone " + arch);
  model.head.dim = int(dim);
  model.head.classes = seen;
  std::uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), 4);
  auto params = model.backbone->params();
  require(count == params.size() + 2,
          "snapshot parameter count mismatch for " + arch);
  std::vector<nn::Param*> all(params.begin(), params.end());
  all.push_back(&model.head.weight);
  all.push_back(&model.head.bias);
  for (nn::Param* p : all) {
    std::string name = detail::read_string(in);
    require(name == p->name, "snapshot parameter order mismatch: expected " +
                                 p->name + ", found " + name);
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 8);
    p->value.assign(n, 0.0f);
    p->grad.assign(n, 0.0f);
    in.read(reinterpret_cast<char*>(p->value.data()),
            std::streamsize(n * sizeof(float)));
  }
  require(bool(in), "truncated snapshot: " + path.string());
  require(model.head.weight.value.size() == std::size_t(seen) * dim,
          "snapshot head shape mismatch");
  return model;
}

}  // namespace cecil
