#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "cecil/buffer.hpp"
#include "cecil/codec.hpp"
#include "cecil/csv.hpp"
#include "cecil/svgplot.hpp"
#include "cecil/tasks.hpp"
#include "cecil/trainer.hpp"

namespace cecil {

struct ForgettingProbeResult {
  CodecSpec codec;
  double acc_step1 = 0;
  double acc_step2 = 0;
  double forgetting = 0;  // acc_step1 - acc_step2
  double mean_bpp = 0;    // pooled rate of first-task train data under codec
  long long buffer_capacity = 0;
};

namespace detail {

/// Sub-dataset with only `classes`, remapped to contiguous ids (sorted order).
inline DatasetHandle restrict_to_classes(const DatasetHandle& ds,
                                         std::vector<int> classes) {
  std::sort(classes.begin(), classes.end());
  std::map<int, int> remap;
  DatasetHandle out;
  out.name = ds.name + "-sub" + std::to_string(classes.size());
  for (int c : classes) {
    require(c >= 0 && c < ds.num_classes, "restrict_to_classes: bad class id");
    int id = static_cast<int>(remap.size());
    remap[c] = id;
    out.class_names.push_back(ds.class_names.empty() ? std::to_string(c)
                                                     : ds.class_names[std::size_t(c)]);
  }
  out.num_classes = static_cast<int>(remap.size());
  for (const auto* split : {&ds.train, &ds.test}) {
    auto* dst = split == &ds.train ? &out.train : &out.test;
    for (const auto& s : *split) {
      auto it = remap.find(s.label);
      if (it == remap.end()) continue;
      Sample copy = s;
      copy.label = it->second;
      dst->push_back(std::move(copy));
    }
  }
  validate_dataset(out);
  return out;
}

/// Plain cross-entropy SGD over fixed (image, head-slot) items; the probe's
/// training loop for both steps.
inline void probe_fit(ModelSnapshot& model,
                      const std::vector<std::pair<const Image*, int>>& items,
                      const TrainConfig& cfg, int epochs, std::uint32_t salt) {
  if (epochs == 0) return;
  require(!items.empty(), "probe_fit with no items");
  auto params = all_params(model);
  nn::Sgd opt(cfg.momentum, cfg.weight_decay);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    double lr = nn::lr_at_epoch(cfg.lr, cfg.milestones, cfg.lr_decay, epoch);
    auto order = permutation_v1(static_cast<int>(items.size()),
                                mix_seed(cfg.seed, salt + std::uint32_t(epoch)));
    for (std::size_t at = 0; at < order.size(); at += std::size_t(cfg.batch_size)) {
      std::size_t n = std::min(std::size_t(cfg.batch_size), order.size() - at);
      std::vector<const Image*> images(n);
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& item = items[std::size_t(order[at + i])];
        images[i] = item.first;
        labels[i] = item.second;
      }
      nn::RowMat feat = model.backbone->forward_features(nn::images_to_tensor(images), true);
      nn::RowMat logits = model.head.logits(feat);
      auto ce = nn::softmax_cross_entropy(logits, labels);
      require(std::isfinite(ce.loss), "probe training diverged (non-finite loss)");
      model.backbone->zero_grads();
      model.head.zero_grads();
      nn::RowMat dfeat = model.head.backward(feat, ce.dlogits);
      model.backbone->backward_from_features(dfeat);
      opt.step(params, lr);
    }
  }
}

}  // namespace detail

// Two-step forgetting probe for one codec setting, on first-task data only:
//   1. preprocess the first-task classes with the codec (train and test),
//   2. train a fresh model on half of the first-task samples (T01),
//   3. continue training on the other half (T02) plus a herding buffer built
//      from T01 under the equivalent capacity this codec's rate buys,
//   4. forgetting = held-out accuracy after step 1 minus after step 2.
// The probe budget is the experiment budget scaled by the fraction of
// classes in the first task. `step2_epochs` < 0 means cfg.epochs.
inline ForgettingProbeResult forgetting_probe(const DatasetHandle& dataset,
                                              const ProtocolSpec& protocol,
                                              const CodecSpec& codec,
                                              long long reference_images,
                                              const TrainConfig& cfg,
                                              const PayloadCache* cache = nullptr,
                                              int step2_epochs = -1) {
  validate_train_config(cfg);
  require<ConfigError>(reference_images > 0, "probe needs a positive reference image count");
  auto seq = build_task_sequence(dataset, protocol);
  auto probe_src = detail::restrict_to_classes(dataset, seq.task_classes[0]);
  DatasetHandle pp;
  try {
    pp = preprocess_with_codec(probe_src, codec, cache);
  } catch (const CodecError& e) {
    throw StageError("forgetting probe failed for " + codec.id() + ": " + e.what());
  }

  const int k = probe_src.num_classes;
  MemoryBudget budget;
  {
    long long ref = std::max<long long>(
        1, reference_images * k / std::max(1, dataset.num_classes));
    budget = budget_from_reference(probe_src, ref, pooled_encoded_bpp(pp.train));
  }

  TaskSequence probe_seq = build_task_sequence(pp, {ProtocolKind::LFS, 1, protocol.shuffle_seed});
  auto [t01, t02] = split_first_task(pp, probe_seq, mix_seed(cfg.seed, 0x9083EEDBu));

  ModelSnapshot model;
  {
    ExemplarBuffer empty;
    model = train_step(std::move(model), pp.train, t01, probe_seq.task_classes[0],
                       empty, Method::wa, cfg);
  }
  auto acc1 = evaluate(model, pp.test, Method::wa);

  // herding buffer from T01 under the scaled equivalent capacity
  std::vector<Sample> t01_split;
  t01_split.reserve(t01.size());
  for (int idx : t01) t01_split.push_back(pp.train[std::size_t(idx)]);
  FeatureFn probe_features = [&](const std::vector<const Image*>& imgs) {
    return extract_features(*model.backbone, imgs);
  };
  ExemplarBuffer buf =
      rebuild_buffer(t01_split, probe_seq.task_classes[0], probe_features, budget);

  std::vector<std::pair<const Image*, int>> step2_items;
  for (int idx : t02)
    step2_items.push_back({&pp.train[std::size_t(idx)].image,
                           model.slot_of(pp.train[std::size_t(idx)].label)});
  for (const auto& e : buf.entries)
    step2_items.push_back({&e.image, model.slot_of(e.class_id)});
  detail::probe_fit(model, step2_items, cfg,
                    step2_epochs < 0 ? cfg.epochs : step2_epochs, 0x0BE52EF1u);
  auto acc2 = evaluate(model, pp.test, Method::wa);

  ForgettingProbeResult res;
  res.codec = codec;
  res.acc_step1 = acc1.accuracy;
  res.acc_step2 = acc2.accuracy;
  res.forgetting = acc1.accuracy - acc2.accuracy;
  res.mean_bpp = budget.bpp_comp;
  res.buffer_capacity = buf.capacity;
  return res;
}

// Least-forgetting winner; ties prefer the lower data rate, then the lower
// quality index so the choice is independent of input order.
inline const ForgettingProbeResult& select_rate(
    std::span<const ForgettingProbeResult> results) {
  require(!results.empty(), "select_rate over an empty probe table");
  for (const auto& r : results)
    require(std::isfinite(r.forgetting), "select_rate: non-finite forgetting for " +
                                             r.codec.id());
  const ForgettingProbeResult* best = &results[0];
  for (const auto& r : results) {
    auto key = [](const ForgettingProbeResult& x) {
      return std::tuple<double, double, int>(x.forgetting, x.mean_bpp, x.codec.quality);
    };
    if (key(r) < key(*best)) best = &r;
  }
  return *best;
}

/// Mean over rows AND columns of the squared difference (a true MSE).
inline double feature_mse_from_features(const nn::RowMat& a, const nn::RowMat& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "feature_mse: misaligned feature matrices");
  require(a.rows() > 0, "feature_mse over an empty set");
  double acc = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      double d = double(a(i, j)) - double(b(i, j));
      acc += d * d;
    }
  return acc / (double(a.rows()) * double(a.cols()));
}

/// Backbone-feature MSE between aligned original/compressed image pairs.
inline double feature_mse(nn::ConvNet& backbone,
                          const std::vector<const Image*>& originals,
                          const std::vector<const Image*>& compressed) {
  require(originals.size() == compressed.size(),
          "feature_mse: pair counts disagree (" + std::to_string(originals.size()) +
              " vs " + std::to_string(compressed.size()) + ")");
  nn::RowMat fa = extract_features(backbone, originals);
  nn::RowMat fb = extract_features(backbone, compressed);
  return feature_mse_from_features(fa, fb);
}

struct CodecScore {
  CodecSpec codec;
  double f_mse = 0;
  double mean_bpp = 0;
  double mean_psnr = 0;
};

/// Scores one codec on a fixed sample set with a frozen backbone.
inline CodecScore score_codec(nn::ConvNet& backbone,
                              const std::vector<Sample>& samples,
                              const CodecSpec& codec,
                              const PayloadCache* cache = nullptr) {
  require(!samples.empty(), "score_codec over an empty sample set");
  std::vector<Image> decoded;
  decoded.reserve(samples.size());
  std::vector<RateSample> rates;
  double psnr_acc = 0;
  bool psnr_inf = false;
  for (const auto& s : samples) {
    CompressedSample cs = encode_cached(s.image, codec, cache);
    decoded.push_back(decode(cs, codec));
    rates.push_back({cs.bits, cs.pixel_count()});
    double p = image_psnr(s.image, decoded.back());
    if (std::isinf(p)) psnr_inf = true;
    else psnr_acc += p;
  }
  std::vector<const Image*> orig, comp;
  for (const auto& s : samples) orig.push_back(&s.image);
  for (const auto& d : decoded) comp.push_back(&d);
  CodecScore score;
  score.codec = codec;
  score.f_mse = feature_mse(backbone, orig, comp);
  score.mean_bpp = pooled_bpp(rates);
  score.mean_psnr = psnr_inf ? std::numeric_limits<double>::infinity()
                             : psnr_acc / double(samples.size());
  return score;
}

// Lowest feature-MSE wins; ties prefer the lower rate, then the codec id so
// the winner never depends on input order.
inline const CodecScore& select_codec(std::span<const CodecScore> scores) {
  require(!scores.empty(), "select_codec over an empty score table");
  for (const auto& s : scores)
    require(std::isfinite(s.f_mse), "select_codec: non-finite score for " + s.codec.id());
  const CodecScore* best = &scores[0];
  for (const auto& s : scores) {
    auto key = [](const CodecScore& x) {
      return std::tuple<double, double, std::string>(x.f_mse, x.mean_bpp, x.codec.id());
    };
    if (key(s) < key(*best)) best = &s;
  }
  return *best;
}

/// Spearman rank correlation (average ranks on ties).
inline double spearman_rank_correlation(std::span<const double> xs,
                                        std::span<const double> ys) {
  require(xs.size() == ys.size() && xs.size() >= 2,
          "rank correlation needs >= 2 aligned pairs");
  auto ranks = [](std::span<const double> v) {
    std::vector<int> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[std::size_t(a)] < v[std::size_t(b)]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
      std::size_t j = i;
      while (j + 1 < idx.size() &&
             v[std::size_t(idx[j + 1])] == v[std::size_t(idx[i])]) ++j;
      double avg = (double(i) + double(j)) / 2.0 + 1.0;
      for (std::size_t t = i; t <= j; ++t) r[std::size_t(idx[t])] = avg;
      i = j + 1;
    }
    return r;
  };
  auto rx = ranks(xs), ry = ranks(ys);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) { mx += rx[i]; my += ry[i]; }
  mx /= double(rx.size());
  my /= double(ry.size());
  double num = 0, dx = 0, dy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  require(dx > 0 && dy > 0, "rank correlation undefined for constant inputs");
  return num / std::sqrt(dx * dy);
}

/// CSV columns: method, quality, bpp, acc1, acc2, forgetting.
inline void write_probe_csv(const std::filesystem::path& path,
                            std::span<const ForgettingProbeResult> results) {
  CsvWriter csv(path);
  csv.row({"method", "quality", "bpp", "acc1", "acc2", "forgetting"});
  for (const auto& r : results)
    csv.row({method_name(r.codec.method), std::to_string(r.codec.quality),
             format_double(r.mean_bpp), format_double(r.acc_step1),
             format_double(r.acc_step2), format_double(r.forgetting)});
}

/// Forgetting-vs-quality curves, one series per method, winner marked.
inline void write_probe_plot(const std::filesystem::path& path,
                             std::span<const ForgettingProbeResult> results,
                             const ForgettingProbeResult* selected = nullptr) {
  SvgPlot plot("Forgetting probe", "quality", "forgetting (acc points)");
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::map<std::string, SvgPlot::Series> series;
  int color = 0;
  for (const auto& r : results) {
    std::string m = method_name(r.codec.method);
    auto it = series.find(m);
    if (it == series.end()) {
      SvgPlot::Series s;
      s.label = m;
      s.color = palette[color++ % 5];
      it = series.emplace(m, std::move(s)).first;
    }
    it->second.x.push_back(double(r.codec.quality));
    it->second.y.push_back(r.forgetting);
  }
  for (auto& [name, s] : series) plot.add_series(std::move(s));
  if (selected)
    plot.mark_point(double(selected->codec.quality), selected->forgetting, "#000000");
  plot.save(path);
}

/// CSV columns: method, quality, bpp, psnr, f_mse, selected.
inline void write_codec_scores_csv(const std::filesystem::path& path,
                                   std::span<const CodecScore> scores,
                                   const CodecScore* selected = nullptr) {
  CsvWriter csv(path);
  csv.row({"method", "quality", "bpp", "psnr", "f_mse", "selected"});
  for (const auto& s : scores)
    csv.row({method_name(s.codec.method), std::to_string(s.codec.quality),
             format_double(s.mean_bpp), format_double(s.mean_psnr),
             format_double(s.f_mse),
             (selected && selected->codec == s.codec) ? "1" : "0"});
}

}  // namespace cecil
