#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "cecil/codec.hpp"
#include "cecil/csv.hpp"
#include "cecil/dataset.hpp"
#include "cecil/nn/tensor.hpp"

namespace cecil {

// A replay-memory budget. `bytes` is the hard constraint; the reference
// image count and the two data rates translate it into an exemplar
// capacity: capacity = floor(reference_image_count * bpp_ori / bpp_comp).
struct MemoryBudget {
  std::uint64_t bytes = 0;
  long long reference_image_count = 0;
  double bpp_ori = 0;
  double bpp_comp = 0;
};

/// Budget whose byte size equals `ref_images` average-sized source images.
inline MemoryBudget budget_from_reference(const DatasetHandle& ds, long long ref_images,
                                          double bpp_comp) {
  require<ConfigError>(ref_images > 0, "reference image count must be positive");
  std::uint64_t total_bits = 0;
  for (const auto& s : ds.train) total_bits += s.source_bits;
  double mean_bytes = double(total_bits) / 8.0 / double(ds.train.size());
  MemoryBudget b;
  b.bytes = std::uint64_t(double(ref_images) * mean_bytes);
  b.reference_image_count = ref_images;
  b.bpp_ori = pooled_source_bpp(ds.train);
  b.bpp_comp = bpp_comp;
  return b;
}

/// How many compressed exemplars fit in the budget that held
/// `reference_image_count` originals. Floored; never below the reference
/// count when the compressed rate is at most the original rate.
inline long long equivalent_capacity(const MemoryBudget& budget) {
  require<ConfigError>(budget.bpp_ori > 0 && budget.bpp_comp > 0,
                       "equivalent_capacity needs positive bpp values");
  require<ConfigError>(budget.reference_image_count > 0,
                       "equivalent_capacity needs a positive reference image count");
  return static_cast<long long>(
      double(budget.reference_image_count) * budget.bpp_ori / budget.bpp_comp);
}

// Greedy herding over the rows of `features`: step m adds the candidate
// that brings the mean of the selected set closest (L2) to the full-class
// mean. Ties go to the lowest sample index. Returns the first k rows in
// selection order.
inline std::vector<int> herding_select(const nn::RowMat& features, int k) {
  const int n = static_cast<int>(features.rows());
  require(n >= 1, "herding_select on an empty class");
  require(k >= 0 && k <= n, "herding_select: k out of range (k=" + std::to_string(k) +
                                ", class size " + std::to_string(n) + ")");
  for (int i = 0; i < n; ++i)
    require(features.row(i).allFinite(), "herding_select: non-finite feature row");

  // Distances run in double: two-sample classes tie exactly (the class mean
  // is their midpoint) and single-precision rounding would break such ties
  // by noise instead of by index.
  const int d = static_cast<int>(features.cols());
  std::vector<double> mean(std::size_t(d), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) mean[std::size_t(j)] += double(features(i, j));
  for (int j = 0; j < d; ++j) mean[std::size_t(j)] /= double(n);

  std::vector<double> selected_sum(std::size_t(d), 0.0);
  std::vector<bool> used(std::size_t(n), false);
  std::vector<int> order;
  order.reserve(std::size_t(k));
  for (int m = 0; m < k; ++m) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (used[std::size_t(i)]) continue;
      double acc = 0;
      for (int j = 0; j < d; ++j) {
        double trial = (selected_sum[std::size_t(j)] + double(features(i, j))) / double(m + 1);
        double diff = mean[std::size_t(j)] - trial;
        acc += diff * diff;
      }
      double dist = std::sqrt(acc);
      if (dist < best_d) {
        best_d = dist;
        best = i;
      }
    }
    used[std::size_t(best)] = true;
    for (int j = 0; j < d; ++j) selected_sum[std::size_t(j)] += double(features(best, j));
    order.push_back(best);
  }
  return order;
}

struct ExemplarEntry {
  int class_id = -1;
  int sample_index = -1;    // index into the preprocessed train split
  std::uint64_t bits = 0;   // stored (encoded) size of this exemplar
  Image image;              // decoded pixels, ready for training
};

struct ExemplarBuffer {
  long long capacity = 0;  // equivalent capacity the budget allows
  std::vector<ExemplarEntry> entries;

  std::uint64_t total_bits() const {
    std::uint64_t acc = 0;
    for (const auto& e : entries) acc += e.bits;
    return acc;
  }

  std::map<int, int> per_class_counts() const {
    std::map<int, int> counts;
    for (const auto& e : entries) counts[e.class_id]++;
    return counts;
  }
};

/// Batch feature extraction used by herding; rows follow input order.
using FeatureFn = std::function<nn::RowMat(const std::vector<const Image*>&)>;

namespace detail {

inline void l2_normalize_rows(nn::RowMat& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    float norm = m.row(i).norm();
    if (norm > 0) m.row(i) /= norm;
  }
}

}  // namespace detail

// Rebuilds the replay buffer from scratch over all seen classes:
//   1. capacity from the budget (equivalent_capacity),
//   2. equal per-class quotas, remainder to the lowest class ids,
//   3. herding order per class on L2-normalized features,
//   4. assembly rank-major (rank 0 of every class, then rank 1, ...) and a
//      final bit audit that trims entries from the back while the stored
//      sum exceeds the byte budget.
// `train` must be the preprocessed split: entry bits are the samples'
// encoded sizes and entry pixels their decoded form.
inline ExemplarBuffer rebuild_buffer(const std::vector<Sample>& train,
                                     const std::vector<int>& seen_classes,
                                     const FeatureFn& features,
                                     const MemoryBudget& budget) {
  require(!seen_classes.empty(), "rebuild_buffer with no seen classes");
  ExemplarBuffer buf;
  buf.capacity = equivalent_capacity(budget);
  const long long C = static_cast<long long>(seen_classes.size());
  if (buf.capacity < C) {
    double min_bytes =
        std::ceil(double(C) / double(buf.capacity > 0 ? buf.capacity : 1)) *
        double(budget.bytes);
    throw StageError("budget allows only " + std::to_string(buf.capacity) +
                     " exemplars for " + std::to_string(C) +
                     " classes; smallest feasible budget is about " +
                     std::to_string(std::uint64_t(min_bytes)) + " bytes");
  }

  std::vector<int> classes = seen_classes;
  std::sort(classes.begin(), classes.end());
  const long long base = buf.capacity / C;
  const long long remainder = buf.capacity % C;

  // herding order per class
  std::map<int, std::vector<int>> picked;  // class -> train indices in rank order
  int max_quota = 0;
  std::vector<std::vector<int>> by_class;
  {
    // size by the largest label anywhere in the split: `train` may hold
    // classes beyond the seen set (future tasks of the same dataset)
    int max_class = *std::max_element(classes.begin(), classes.end());
    for (const auto& s : train) max_class = std::max(max_class, s.label);
    by_class = indices_by_class(train, max_class + 1);
  }
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    int c = classes[ci];
    const auto& idx = by_class[std::size_t(c)];
    require(!idx.empty(), "rebuild_buffer: class " + std::to_string(c) +
                              " has no samples in the train split");
    long long quota = base + (static_cast<long long>(ci) < remainder ? 1 : 0);
    int take = static_cast<int>(std::min<long long>(quota, idx.size()));
    std::vector<const Image*> imgs;
    imgs.reserve(idx.size());
    for (int i : idx) imgs.push_back(&train[std::size_t(i)].image);
    nn::RowMat f = features(imgs);
    require(f.rows() == static_cast<Eigen::Index>(idx.size()),
            "feature extractor returned a wrong row count");
    detail::l2_normalize_rows(f);
    auto order = herding_select(f, take);
    auto& dst = picked[c];
    for (int o : order) dst.push_back(idx[std::size_t(o)]);
    max_quota = std::max(max_quota, take);
  }

  // rank-major assembly: rank r of every class (ascending id) before rank r+1
  for (int r = 0; r < max_quota; ++r)
    for (int c : classes) {
      const auto& ranks = picked[c];
      if (r >= static_cast<int>(ranks.size())) continue;
      const Sample& s = train[std::size_t(ranks[std::size_t(r)])];
      ExemplarEntry e;
      e.class_id = c;
      e.sample_index = ranks[std::size_t(r)];
      e.bits = s.encoded_bits;
      e.image = s.image;
      buf.entries.push_back(std::move(e));
    }

  // hard byte-budget audit: Eq.-1 capacity is an expectation over mean
  // rates; actual per-image sizes may overflow, so trim lowest-priority
  // entries until the stored sum fits.
  const std::uint64_t budget_bits = budget.bytes * 8;
  while (!buf.entries.empty() && buf.total_bits() > budget_bits) buf.entries.pop_back();
  require(!buf.entries.empty(),
          "budget of " + std::to_string(budget.bytes) +
              " bytes cannot hold even one encoded exemplar");
  return buf;
}

/// Buffer manifest: one row per exemplar, auditable offline.
inline void write_buffer_manifest(const std::filesystem::path& path, int step,
                                  const ExemplarBuffer& buf) {
  CsvWriter csv(path);
  csv.row({"step", "class", "sample_id", "bits"});
  for (const auto& e : buf.entries)
    csv.row({std::to_string(step), std::to_string(e.class_id),
             std::to_string(e.sample_index), std::to_string(e.bits)});
}

}  // namespace cecil
