#pragma once

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "cecil/codec.hpp"
#include "cecil/dataset.hpp"
#include "cecil/rng.hpp"

namespace cecil {

enum class ProtocolKind { LFS, LFH };

inline std::string protocol_name(ProtocolKind k) {
  return k == ProtocolKind::LFS ? "lfs" : "lfh";
}

inline ProtocolKind protocol_from_name(const std::string& s) {
  if (s == "lfs" || s == "LFS") return ProtocolKind::LFS;
  if (s == "lfh" || s == "LFH") return ProtocolKind::LFH;
  throw ConfigError("unknown protocol: " + s);
}

struct ProtocolSpec {
  ProtocolKind kind = ProtocolKind::LFS;
  int num_tasks = 0;
  std::uint32_t shuffle_seed = 1993;
};

struct TaskSequence {
  // task_classes[t] = class ids of task t, in shuffled order.
  std::vector<std::vector<int>> task_classes;
  // task_train_indices[t] = train-split indices of task t's samples.
  std::vector<std::vector<int>> task_train_indices;

  int num_tasks() const { return static_cast<int>(task_classes.size()); }

  std::vector<int> classes_up_to(int step) const {
    std::vector<int> out;
    for (int t = 0; t <= step; ++t)
      out.insert(out.end(), task_classes[std::size_t(t)].begin(),
                 task_classes[std::size_t(t)].end());
    return out;
  }
};

// Deterministic class-incremental task construction. Classes are shuffled
// by permutation_v1 keyed only by shuffle_seed (the dataset's native class
// order is the pre-shuffle order), then carved into tasks:
//   LFS: num_tasks equal chunks.
//   LFH: half the classes in task 0, the rest in equal chunks.
inline TaskSequence build_task_sequence(const DatasetHandle& ds,
                                        const ProtocolSpec& protocol) {
  const int C = ds.num_classes;
  require<ConfigError>(protocol.num_tasks > 0, "protocol needs num_tasks > 0");
  std::vector<int> sizes;
  if (protocol.kind == ProtocolKind::LFS) {
    if (C % protocol.num_tasks != 0)
      throw ConfigError("LFS: class count " + std::to_string(C) +
                        " is not divisible into " + std::to_string(protocol.num_tasks) +
                        " equal tasks");
    sizes.assign(std::size_t(protocol.num_tasks), C / protocol.num_tasks);
  } else {
    require<ConfigError>(protocol.num_tasks >= 2, "LFH needs at least 2 tasks");
    if (C % 2 != 0)
      throw ConfigError("LFH: class count " + std::to_string(C) + " is odd");
    int rest = C / 2;
    int later = protocol.num_tasks - 1;
    if (rest % later != 0)
      throw ConfigError("LFH: remaining " + std::to_string(rest) +
                        " classes are not divisible into " + std::to_string(later) +
                        " equal tasks");
    sizes.push_back(C / 2);
    sizes.insert(sizes.end(), std::size_t(later), rest / later);
  }

  std::vector<int> order = permutation_v1(C, protocol.shuffle_seed);
  auto by_class = indices_by_class(ds.train, C);

  TaskSequence seq;
  std::size_t cursor = 0;
  for (int size : sizes) {
    std::vector<int> classes(order.begin() + long(cursor),
                             order.begin() + long(cursor + std::size_t(size)));
    cursor += std::size_t(size);
    std::vector<int> indices;
    for (int c : classes)
      indices.insert(indices.end(), by_class[std::size_t(c)].begin(),
                     by_class[std::size_t(c)].end());
    seq.task_classes.push_back(std::move(classes));
    seq.task_train_indices.push_back(std::move(indices));
  }
  return seq;
}

// Splits the first task into two halves of equal class composition: each
// class contributes half its samples to each side (odd counts put the extra
// sample in the first half). Deterministic given the seed.
inline std::pair<std::vector<int>, std::vector<int>> split_first_task(
    const DatasetHandle& ds, const TaskSequence& seq, std::uint32_t seed) {
  require(!seq.task_classes.empty(), "empty task sequence");
  auto by_class = indices_by_class(ds.train, ds.num_classes);
  std::vector<int> first, second;
  for (int c : seq.task_classes[0]) {
    const auto& idx = by_class[std::size_t(c)];
    if (idx.size() < 2)
      throw StageError("class " + std::to_string(c) +
                       " has fewer than 2 samples; cannot split the first task");
    auto perm = permutation_v1(static_cast<int>(idx.size()), mix_seed(seed, std::uint32_t(c)));
    std::size_t take = (idx.size() + 1) / 2;
    if (idx.size() % 2 != 0)
      std::clog << "[cecil] split_first_task: class " << c << " has odd count "
                << idx.size() << "; extra sample goes to the first half\n";
    for (std::size_t i = 0; i < idx.size(); ++i) {
      int sample = idx[std::size_t(perm[i])];
      (i < take ? first : second).push_back(sample);
    }
  }
  return {first, second};
}

// Whole-dataset codec preprocessing: every train AND test image is replaced
// by decode(encode(image)) and its encoded bit cost is recorded. Labels and
// dimensions are untouched. Stored pixels are the decoded form (trainers
// consume pixels); the bit counts feed the memory accounting.
inline DatasetHandle preprocess_with_codec(const DatasetHandle& ds,
                                           const CodecSpec& spec,
                                           const PayloadCache* cache = nullptr) {
  DatasetHandle out = ds;
  for (auto* split : {&out.train, &out.test}) {
    for (std::size_t i = 0; i < split->size(); ++i) {
      Sample& s = (*split)[i];
      try {
        CompressedSample cs = encode_cached(s.image, spec, cache);
        Image decoded = decode(cs, spec);
        require<CodecError>(decoded.same_shape(s.image),
                            "codec changed image dimensions");
        s.image = std::move(decoded);
        s.encoded_bits = cs.bits;
      } catch (const CodecError& e) {
        throw CodecError("preprocessing failed at " +
                         std::string(split == &out.train ? "train" : "test") +
                         " sample " + std::to_string(i) + ": " + e.what());
      }
    }
  }
  return out;
}

/// Preprocesses only the train split (the mismatched-variant building block:
/// exemplars are drawn from this view while new-task data and the test set
/// stay in source form).
inline DatasetHandle preprocess_train_only(const DatasetHandle& ds,
                                           const CodecSpec& spec,
                                           const PayloadCache* cache = nullptr) {
  DatasetHandle out = ds;
  for (std::size_t i = 0; i < out.train.size(); ++i) {
    Sample& s = out.train[i];
    try {
      CompressedSample cs = encode_cached(s.image, spec, cache);
      Image decoded = decode(cs, spec);
      require<CodecError>(decoded.same_shape(s.image), "codec changed image dimensions");
      s.image = std::move(decoded);
      s.encoded_bits = cs.bits;
    } catch (const CodecError& e) {
      throw CodecError("preprocessing failed at train sample " + std::to_string(i) +
                       ": " + e.what());
    }
  }
  return out;
}

}  // namespace cecil
