#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "cecil/buffer.hpp"
#include "cecil/synth.hpp"

using namespace cecil;

namespace {

// Plain-loop double-precision herding, written independently of the library:
// greedily pick the candidate whose inclusion keeps the running mean closest
// to the class mean, lowest index on ties.
std::vector<int> herding_oracle(const std::vector<std::vector<double>>& f, int k) {
  const int n = static_cast<int>(f.size());
  const int d = static_cast<int>(f[0].size());
  std::vector<double> mu(static_cast<std::size_t>(d), 0.0);
  for (const auto& row : f)
    for (int j = 0; j < d; ++j) mu[std::size_t(j)] += row[std::size_t(j)];
  for (int j = 0; j < d; ++j) mu[std::size_t(j)] /= double(n);

  std::vector<bool> used(static_cast<std::size_t>(n), false);
  std::vector<double> sum(static_cast<std::size_t>(d), 0.0);
  std::vector<int> out;
  for (int s = 0; s < k; ++s) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < n; ++c) {
      if (used[std::size_t(c)]) continue;
      double acc = 0;
      for (int j = 0; j < d; ++j) {
        double trial = (sum[std::size_t(j)] + f[std::size_t(c)][std::size_t(j)]) / double(s + 1);
        acc += (mu[std::size_t(j)] - trial) * (mu[std::size_t(j)] - trial);
      }
      double dist = std::sqrt(acc);
      if (dist < best_d) {
        best_d = dist;
        best = c;
      }
    }
    used[std::size_t(best)] = true;
    out.push_back(best);
    for (int j = 0; j < d; ++j) sum[std::size_t(j)] += f[std::size_t(best)][std::size_t(j)];
  }
  return out;
}

nn::RowMat to_rowmat(const std::vector<std::vector<double>>& f) {
  nn::RowMat m(static_cast<Eigen::Index>(f.size()),
               static_cast<Eigen::Index>(f[0].size()));
  for (std::size_t i = 0; i < f.size(); ++i)
    for (std::size_t j = 0; j < f[0].size(); ++j)
      m(Eigen::Index(i), Eigen::Index(j)) = static_cast<float>(f[i][j]);
  return m;
}

// Train split of `classes` x `per_class` tiny images. Pixel (0,0,0) encodes
// the within-class sample index so feature functions can recover it.
std::vector<Sample> toy_split(int classes, int per_class, std::uint64_t bits) {
  std::vector<Sample> split;
  for (int c = 0; c < classes; ++c)
    for (int s = 0; s < per_class; ++s) {
      Sample smp;
      smp.image = Image(4, 4);
      smp.image.at(0, 0, 0) = static_cast<std::uint8_t>(s);
      smp.image.at(0, 0, 1) = static_cast<std::uint8_t>(c);
      smp.label = c;
      smp.source_bits = 4 * 4 * 24;
      smp.encoded_bits = bits;
      split.push_back(std::move(smp));
    }
  return split;
}

// Unit-circle features spread by within-class index; already L2-normalized so
// the buffer's normalization pass is the identity and herding order is the
// angular order toward the class mean direction.
FeatureFn angular_features() {
  return [](const std::vector<const Image*>& imgs) {
    nn::RowMat f(static_cast<Eigen::Index>(imgs.size()), 2);
    for (std::size_t i = 0; i < imgs.size(); ++i) {
      double a = 0.35 * double(imgs[i]->at(0, 0, 0));
      f(Eigen::Index(i), 0) = static_cast<float>(std::cos(a));
      f(Eigen::Index(i), 1) = static_cast<float>(std::sin(a));
    }
    return f;
  };
}

}  // namespace

TEST_CASE("equivalent capacity follows the rate ratio", "[buffer]") {
  MemoryBudget b;
  b.bytes = 1000;
  b.reference_image_count = 1000;
  b.bpp_ori = 24.0;
  b.bpp_comp = 1.148;
  CHECK(equivalent_capacity(b) == 20905);  // floor(1000 * 24 / 1.148)

  b.bpp_comp = 24.0;
  CHECK(equivalent_capacity(b) == 1000);  // identity rate keeps the count

  b.bpp_comp = 12.0;
  CHECK(equivalent_capacity(b) == 2000);

  // capacity never decreases as the compressed rate drops
  long long prev = 0;
  for (double rate = 24.0; rate >= 0.5; rate /= 2) {
    b.bpp_comp = rate;
    long long cap = equivalent_capacity(b);
    CHECK(cap >= prev);
    prev = cap;
  }
}

TEST_CASE("equivalent capacity validates its inputs", "[buffer]") {
  MemoryBudget b;
  b.reference_image_count = 10;
  b.bpp_ori = 24;
  b.bpp_comp = 2;
  CHECK_NOTHROW(equivalent_capacity(b));
  auto bad = b;
  bad.reference_image_count = 0;
  CHECK_THROWS_AS(equivalent_capacity(bad), ConfigError);
  bad = b;
  bad.bpp_ori = 0;
  CHECK_THROWS_AS(equivalent_capacity(bad), ConfigError);
  bad = b;
  bad.bpp_comp = -1;
  CHECK_THROWS_AS(equivalent_capacity(bad), ConfigError);
}

TEST_CASE("budget from a reference count uses source bytes", "[buffer]") {
  SynthSpec spec;
  spec.classes = 4;
  spec.train_per_class = 8;
  spec.test_per_class = 4;
  spec.height = 8;
  spec.width = 8;
  auto ds = make_synthetic_dataset(spec);
  // raw source form: 24 bpp, 8x8 -> 192 bytes per image
  auto b = budget_from_reference(ds, 10, 2.0);
  CHECK(b.bytes == 1920);
  CHECK(b.reference_image_count == 10);
  CHECK(b.bpp_ori == Catch::Approx(24.0).epsilon(1e-12));
  CHECK(b.bpp_comp == 2.0);
  CHECK(equivalent_capacity(b) == 120);
}

TEST_CASE("herding matches an independent double-precision oracle", "[buffer]") {
  std::mt19937 gen(902);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> nd(1, 8), dd(1, 4);
  for (int trial = 0; trial < 100; ++trial) {
    int n = nd(gen), d = dd(gen);
    std::vector<std::vector<double>> f(std::size_t(n),
                                       std::vector<double>(std::size_t(d), 0.0));
    for (auto& row : f)
      for (auto& v : row) v = u(gen);
    // double-rounded to float so the oracle sees the library's exact inputs
    for (auto& row : f)
      for (auto& v : row) v = double(float(v));
    auto expected = herding_oracle(f, n);
    auto got = herding_select(to_rowmat(f), n);
    INFO("trial " << trial << " n=" << n << " d=" << d);
    REQUIRE(got == expected);
  }
}

TEST_CASE("herding breaks ties toward the lowest index", "[buffer]") {
  nn::RowMat f(5, 3);
  for (Eigen::Index i = 0; i < 5; ++i) {
    f(i, 0) = 0.25f;
    f(i, 1) = -1.5f;
    f(i, 2) = 2.0f;
  }
  auto order = herding_select(f, 5);
  CHECK(order == std::vector<int>{0, 1, 2, 3, 4});
}

TEST_CASE("herding selections are prefixes of longer selections", "[buffer]") {
  std::mt19937 gen(17);
  std::uniform_real_distribution<float> u(-2.0f, 2.0f);
  nn::RowMat f(20, 6);
  for (Eigen::Index i = 0; i < f.rows(); ++i)
    for (Eigen::Index j = 0; j < f.cols(); ++j) f(i, j) = u(gen);
  auto full = herding_select(f, 20);
  for (int k : {0, 1, 5, 12, 19}) {
    auto part = herding_select(f, k);
    REQUIRE(part.size() == std::size_t(k));
    CHECK(std::equal(part.begin(), part.end(), full.begin()));
  }
}

TEST_CASE("herding rejects bad arguments", "[buffer]") {
  nn::RowMat f(3, 2);
  f.setZero();
  CHECK(herding_select(f, 0).empty());
  CHECK_THROWS_AS(herding_select(f, 4), StageError);
  CHECK_THROWS_AS(herding_select(f, -1), StageError);
  f(1, 1) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(herding_select(f, 2), StageError);
}

TEST_CASE("rebuild splits capacity equally with remainder to low ids", "[buffer]") {
  auto split = toy_split(10, 5, 100);
  MemoryBudget budget;
  budget.bytes = 1000;  // 8000 bits, no trimming
  budget.reference_image_count = 25;
  budget.bpp_ori = 24;
  budget.bpp_comp = 24;
  std::vector<int> seen{9, 3, 0, 1, 2, 4, 5, 6, 7, 8};  // unsorted on purpose

  auto buf = rebuild_buffer(split, seen, angular_features(), budget);
  CHECK(buf.capacity == 25);
  REQUIRE(buf.entries.size() == 25);
  auto counts = buf.per_class_counts();
  for (int c = 0; c <= 4; ++c) CHECK(counts.at(c) == 3);
  for (int c = 5; c <= 9; ++c) CHECK(counts.at(c) == 2);
  CHECK(buf.total_bits() == 2500);

  // rank-major assembly: the first 10 entries are rank 0 of classes 0..9
  for (int i = 0; i < 10; ++i) CHECK(buf.entries[std::size_t(i)].class_id == i);
}

TEST_CASE("rebuild ignores split classes beyond the seen set", "[buffer]") {
  // the split carries labels 0..9 but only {7, 8} have been seen; labels
  // above max(seen) must not confuse the per-class index
  auto split = toy_split(10, 5, 100);
  MemoryBudget budget;
  budget.bytes = 1000;
  budget.reference_image_count = 6;
  budget.bpp_ori = 24;
  budget.bpp_comp = 24;
  std::vector<int> seen{8, 7};

  auto buf = rebuild_buffer(split, seen, angular_features(), budget);
  REQUIRE(buf.entries.size() == 6);
  auto counts = buf.per_class_counts();
  CHECK(counts.at(7) == 3);
  CHECK(counts.at(8) == 3);
  for (const auto& e : buf.entries) CHECK((e.class_id == 7 || e.class_id == 8));
}

TEST_CASE("shrinking the budget keeps herding prefixes per class", "[buffer]") {
  auto split = toy_split(10, 5, 100);
  MemoryBudget big, small;
  big.bytes = small.bytes = 1000;
  big.bpp_ori = small.bpp_ori = 24;
  big.bpp_comp = small.bpp_comp = 24;
  big.reference_image_count = 25;
  small.reference_image_count = 20;
  std::vector<int> seen(10);
  std::iota(seen.begin(), seen.end(), 0);

  auto b25 = rebuild_buffer(split, seen, angular_features(), big);
  auto b20 = rebuild_buffer(split, seen, angular_features(), small);
  std::map<int, std::vector<int>> per25, per20;
  for (const auto& e : b25.entries) per25[e.class_id].push_back(e.sample_index);
  for (const auto& e : b20.entries) per20[e.class_id].push_back(e.sample_index);
  for (int c = 0; c < 10; ++c) {
    REQUIRE(per20[c].size() <= per25[c].size());
    CHECK(std::equal(per20[c].begin(), per20[c].end(), per25[c].begin()));
  }
}

TEST_CASE("bit audit trims the buffer to the byte budget", "[buffer]") {
  auto split = toy_split(10, 5, 100);
  MemoryBudget budget;
  budget.bytes = 200;  // 1600 bits -> at most 16 entries of 100 bits
  budget.reference_image_count = 25;
  budget.bpp_ori = 24;
  budget.bpp_comp = 24;
  std::vector<int> seen(10);
  std::iota(seen.begin(), seen.end(), 0);

  auto buf = rebuild_buffer(split, seen, angular_features(), budget);
  CHECK(buf.total_bits() <= budget.bytes * 8);
  CHECK(buf.entries.size() == 16);
  // trimming from the back keeps the per-class spread balanced
  auto counts = buf.per_class_counts();
  for (int c = 0; c <= 5; ++c) CHECK(counts.at(c) == 2);
  for (int c = 6; c <= 9; ++c) CHECK(counts.at(c) == 1);
}

TEST_CASE("quotas cap at the class sample count", "[buffer]") {
  auto split = toy_split(2, 3, 100);
  MemoryBudget budget;
  budget.bytes = 1000;
  budget.reference_image_count = 10;
  budget.bpp_ori = 24;
  budget.bpp_comp = 24;
  auto buf = rebuild_buffer(split, {0, 1}, angular_features(), budget);
  CHECK(buf.entries.size() == 6);
  auto counts = buf.per_class_counts();
  CHECK(counts.at(0) == 3);
  CHECK(counts.at(1) == 3);
}

TEST_CASE("infeasible budgets fail loudly", "[buffer]") {
  auto split = toy_split(10, 5, 100);
  MemoryBudget budget;
  budget.bytes = 1000;
  budget.reference_image_count = 5;  // capacity 5 < 10 classes
  budget.bpp_ori = 24;
  budget.bpp_comp = 24;
  std::vector<int> seen(10);
  std::iota(seen.begin(), seen.end(), 0);
  CHECK_THROWS_WITH(rebuild_buffer(split, seen, angular_features(), budget),
                    Catch::Matchers::ContainsSubstring("feasible budget"));

  budget.reference_image_count = 25;
  budget.bytes = 1;  // 8 bits cannot hold a 100-bit exemplar
  CHECK_THROWS_WITH(rebuild_buffer(split, seen, angular_features(), budget),
                    Catch::Matchers::ContainsSubstring("cannot hold"));
}

TEST_CASE("manifest lists every exemplar with its stored size", "[buffer]") {
  auto split = toy_split(4, 4, 150);
  MemoryBudget budget;
  budget.bytes = 4000;
  budget.reference_image_count = 8;
  budget.bpp_ori = 24;
  budget.bpp_comp = 24;
  auto buf = rebuild_buffer(split, {0, 1, 2, 3}, angular_features(), budget);

  auto path = std::filesystem::temp_directory_path() / "cecil_manifest_test.csv";
  write_buffer_manifest(path, 3, buf);
  auto rows = read_csv(path);
  REQUIRE(rows.size() == buf.entries.size() + 1);
  CHECK(rows[0] == std::vector<std::string>{"step", "class", "sample_id", "bits"});
  for (std::size_t i = 0; i < buf.entries.size(); ++i) {
    const auto& e = buf.entries[i];
    CHECK(rows[i + 1][0] == "3");
    CHECK(rows[i + 1][1] == std::to_string(e.class_id));
    CHECK(rows[i + 1][2] == std::to_string(e.sample_index));
    CHECK(rows[i + 1][3] == std::to_string(e.bits));
  }
  std::filesystem::remove(path);
}
