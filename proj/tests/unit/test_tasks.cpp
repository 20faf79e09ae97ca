#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "cecil/synth.hpp"
#include "cecil/tasks.hpp"

using namespace cecil;

namespace {
DatasetHandle ten_class_ds() {
  SynthSpec spec;
  spec.classes = 10;
  spec.train_per_class = 8;
  spec.test_per_class = 4;
  spec.height = 16;
  spec.width = 16;
  spec.seed = 5;
  return make_synthetic_dataset(spec);
}
}  // namespace

TEST_CASE("lfs tasks partition the classes into equal chunks", "[tasks]") {
  auto ds = ten_class_ds();
  auto seq = build_task_sequence(ds, {ProtocolKind::LFS, 5, 1993});
  REQUIRE(seq.num_tasks() == 5);
  std::set<int> all;
  for (const auto& t : seq.task_classes) {
    CHECK(t.size() == 2u);
    all.insert(t.begin(), t.end());
  }
  CHECK(all.size() == 10u);  // disjoint, covers everything
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 9);
}

TEST_CASE("lfh puts half the classes in the first task", "[tasks]") {
  auto ds = ten_class_ds();
  auto seq = build_task_sequence(ds, {ProtocolKind::LFH, 6, 1993});
  REQUIRE(seq.num_tasks() == 6);
  CHECK(seq.task_classes[0].size() == 5u);
  for (int t = 1; t < 6; ++t) CHECK(seq.task_classes[t].size() == 1u);
  std::set<int> all;
  for (const auto& t : seq.task_classes) all.insert(t.begin(), t.end());
  CHECK(all.size() == 10u);
}

TEST_CASE("class order follows the pinned shuffle of the seed", "[tasks]") {
  auto ds = ten_class_ds();
  auto seq = build_task_sequence(ds, {ProtocolKind::LFS, 5, 1993});
  // permutation_v1(10, 1993) == {8, 7, 2, 0, 5, 3, 4, 9, 6, 1}  (reference impl)
  CHECK(seq.task_classes[0] == std::vector<int>{8, 7});
  CHECK(seq.task_classes[4] == std::vector<int>{6, 1});
  auto seq2 = build_task_sequence(ds, {ProtocolKind::LFS, 5, 7});
  CHECK(seq.task_classes != seq2.task_classes);
  auto seq3 = build_task_sequence(ds, {ProtocolKind::LFS, 5, 1993});
  CHECK(seq.task_classes == seq3.task_classes);
  CHECK(seq.task_train_indices == seq3.task_train_indices);
}

TEST_CASE("task train indices carry exactly the task's classes", "[tasks]") {
  auto ds = ten_class_ds();
  auto seq = build_task_sequence(ds, {ProtocolKind::LFS, 5, 1993});
  std::set<int> seen;
  for (int t = 0; t < seq.num_tasks(); ++t) {
    std::set<int> classes(seq.task_classes[t].begin(), seq.task_classes[t].end());
    CHECK(seq.task_train_indices[t].size() == classes.size() * 8);
    for (int idx : seq.task_train_indices[t]) {
      CHECK(classes.count(ds.train[idx].label) == 1u);
      CHECK(seen.insert(idx).second);  // no index repeats across tasks
    }
  }
  CHECK(seen.size() == ds.train.size());
}

TEST_CASE("classes_up_to accumulates prefixes", "[tasks]") {
  auto ds = ten_class_ds();
  auto seq = build_task_sequence(ds, {ProtocolKind::LFS, 5, 1993});
  CHECK(seq.classes_up_to(0).size() == 2u);
  CHECK(seq.classes_up_to(2).size() == 6u);
  CHECK(seq.classes_up_to(4).size() == 10u);
  CHECK(seq.classes_up_to(1) == std::vector<int>{8, 7, 2, 0});
}

TEST_CASE("invalid protocol shapes are config errors", "[tasks]") {
  auto ds = ten_class_ds();
  CHECK_THROWS_AS(build_task_sequence(ds, {ProtocolKind::LFS, 3, 1993}), ConfigError);
  CHECK_THROWS_AS(build_task_sequence(ds, {ProtocolKind::LFS, 0, 1993}), ConfigError);
  CHECK_THROWS_AS(build_task_sequence(ds, {ProtocolKind::LFH, 4, 1993}), ConfigError);
  CHECK_THROWS_AS(build_task_sequence(ds, {ProtocolKind::LFH, 1, 1993}), ConfigError);
  CHECK_NOTHROW(build_task_sequence(ds, {ProtocolKind::LFH, 6, 1993}));
}

TEST_CASE("protocol names round-trip", "[tasks]") {
  CHECK(protocol_from_name("lfs") == ProtocolKind::LFS);
  CHECK(protocol_from_name("LFH") == ProtocolKind::LFH);
  CHECK(protocol_name(ProtocolKind::LFH) == "lfh");
  CHECK_THROWS_AS(protocol_from_name("half"), ConfigError);
}

TEST_CASE("first-task split halves preserve class composition", "[tasks]") {
  auto ds = ten_class_ds();
  auto seq = build_task_sequence(ds, {ProtocolKind::LFS, 5, 1993});
  auto [first, second] = split_first_task(ds, seq, 1993);
  CHECK(first.size() == 8u);   // 2 classes x 4
  CHECK(second.size() == 8u);
  std::set<int> inter;
  std::set<int> a(first.begin(), first.end()), b(second.begin(), second.end());
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::inserter(inter, inter.begin()));
  CHECK(inter.empty());
  auto count_class = [&](const std::vector<int>& half, int cls) {
    return std::count_if(half.begin(), half.end(),
                         [&](int i) { return ds.train[i].label == cls; });
  };
  for (int c : seq.task_classes[0]) {
    CHECK(count_class(first, c) == 4);
    CHECK(count_class(second, c) == 4);
  }
  // deterministic
  auto [f2, s2] = split_first_task(ds, seq, 1993);
  CHECK(first == f2);
  CHECK(second == s2);
  auto [f3, s3] = split_first_task(ds, seq, 19);
  CHECK(first != f3);
}

TEST_CASE("odd per-class counts put the extra sample in the first half", "[tasks]") {
  SynthSpec spec;
  spec.classes = 2;
  spec.train_per_class = 5;
  spec.test_per_class = 2;
  spec.height = 8;
  spec.width = 8;
  auto ds = make_synthetic_dataset(spec);
  auto seq = build_task_sequence(ds, {ProtocolKind::LFS, 1, 1993});
  auto [first, second] = split_first_task(ds, seq, 1);
  CHECK(first.size() == 6u);
  CHECK(second.size() == 4u);
}

TEST_CASE("whole-dataset preprocessing rewrites pixels and bit costs", "[tasks]") {
  auto ds = ten_class_ds();
  CodecSpec jpeg{CodecMethod::jpeg, 30, ""};
  auto pp = preprocess_with_codec(ds, jpeg);
  REQUIRE(pp.train.size() == ds.train.size());
  REQUIRE(pp.test.size() == ds.test.size());
  bool train_changed = false, test_changed = false;
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    CHECK(pp.train[i].label == ds.train[i].label);
    CHECK(pp.train[i].image.same_shape(ds.train[i].image));
    CHECK(pp.train[i].encoded_bits > 0u);
    CHECK(pp.train[i].encoded_bits < ds.train[i].image.byte_size() * 8);
    CHECK(pp.train[i].source_bits == ds.train[i].source_bits);  // source untouched
    if (!(pp.train[i].image == ds.train[i].image)) train_changed = true;
  }
  for (std::size_t i = 0; i < ds.test.size(); ++i)
    if (!(pp.test[i].image == ds.test[i].image)) test_changed = true;
  CHECK(train_changed);
  CHECK(test_changed);
}

TEST_CASE("identity preprocessing is a no-op on pixels", "[tasks]") {
  auto ds = ten_class_ds();
  auto pp = preprocess_with_codec(ds, CodecSpec{CodecMethod::identity, 0, ""});
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    CHECK(pp.train[i].image == ds.train[i].image);
    CHECK(pp.train[i].encoded_bits == ds.train[i].image.byte_size() * 8);
  }
}

TEST_CASE("train-only preprocessing leaves the test split in source form", "[tasks]") {
  auto ds = ten_class_ds();
  CodecSpec jpeg{CodecMethod::jpeg, 30, ""};
  auto pp = preprocess_train_only(ds, jpeg);
  bool train_changed = false;
  for (std::size_t i = 0; i < ds.train.size(); ++i)
    if (!(pp.train[i].image == ds.train[i].image)) train_changed = true;
  CHECK(train_changed);
  for (std::size_t i = 0; i < ds.test.size(); ++i) {
    CHECK(pp.test[i].image == ds.test[i].image);
    CHECK(pp.test[i].encoded_bits == ds.test[i].encoded_bits);
  }
}
