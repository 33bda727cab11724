#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "bdrlab/dataset.hpp"
#include "bdrlab/error.hpp"
#include "bdrlab/memory.hpp"
#include "bdrlab/rng.hpp"

using namespace bdrlab;
namespace fs = std::filesystem;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, SplitIgnoresParentDraws) {
  Rng a(7), b(7);
  for (int i = 0; i < 10; ++i) b.next_u64();
  EXPECT_EQ(a.split("init").next_u64(), b.split("init").next_u64());
  EXPECT_NE(a.split("init").next_u64(), a.split("batching").next_u64());
}

TEST(Rng, BelowAndUniformRanges) {
  Rng r(3);
  for (int i = 0; i < 10000; ++i) {
    EXPECT_LT(r.below(7), 7u);
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Gaussian, ShapesIdsAndMeanRadius) {
  const LabeledSet d = make_gaussian_mixture(4, 50, 6, 5.0, 1);
  EXPECT_EQ(d.size(), 200u);
  EXPECT_EQ(d.dim(), 6u);
  EXPECT_EQ(d.counts(), std::vector<std::size_t>(4, 50));
  std::set<std::size_t> ids(d.ids.begin(), d.ids.end());
  EXPECT_EQ(ids.size(), 200u);
  EXPECT_THROW(make_gaussian_mixture(1, 5, 6, 1.0, 0), ArgumentError);
}

TEST(Rings, RadiusGrowsWithClass) {
  const LabeledSet d = make_rings(3, 100, 0.0, 2);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto r = d.row(i);
    EXPECT_NEAR(std::hypot(r[0], r[1]), static_cast<double>(d.labels[i] + 1), 1e-12);
  }
}

TEST(Split, HoldsOutOneSixthPerClass) {
  const LabeledSet d = make_gaussian_mixture(3, 61, 4, 2.0, 5);
  const auto s = train_test_split(d, 9);
  EXPECT_EQ(s.test.counts(), std::vector<std::size_t>(3, 10));
  EXPECT_EQ(s.train.counts(), std::vector<std::size_t>(3, 51));
  std::set<std::size_t> test_ids(s.test.ids.begin(), s.test.ids.end());
  for (std::size_t id : s.train.ids) EXPECT_FALSE(test_ids.contains(id));
}

TEST(Phases, ProtocolShapes) {
  const LabeledSet d = make_gaussian_mixture(8, 30, 4, 2.0, 0);
  const PhaseStream s = split_phases(d, 4, 2, 0);
  ASSERT_EQ(s.phases.size(), 3u);
  EXPECT_EQ(s.phases[0].classes.size(), 4u);
  EXPECT_EQ(s.phases[2].classes.size(), 2u);
  const PhaseStream zero_base = split_phases(d, 0, 2, 0);
  EXPECT_EQ(zero_base.phases.size(), 4u);
}

TEST(Phases, IndivisibleProtocolNamesParameters) {
  const LabeledSet d = make_gaussian_mixture(8, 10, 4, 2.0, 0);
  try {
    split_phases(d, 3, 2, 0);
    FAIL() << "expected ProtocolError";
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("K=8, B=3, S=2"), std::string::npos);
  }
}

namespace {

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Idx, LoadsTinyFileAndRejectsBadMagic) {
  const fs::path dir = fs::temp_directory_path() / "bdrlab_idx_test";
  fs::create_directories(dir);
  write_bytes(dir / "img", {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 255, 51, 102});
  write_bytes(dir / "lab", {0, 0, 8, 1, 0, 0, 0, 2, 1, 0});
  const LabeledSet d = load_idx(dir / "img", dir / "lab");
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.dim(), 2u);
  EXPECT_DOUBLE_EQ(d.features.at(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(d.features.at(1, 0), 0.2);
  EXPECT_EQ(d.labels, (std::vector<std::size_t>{1, 0}));
  write_bytes(dir / "bad", {0, 0, 8, 9, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 255, 51, 102});
  EXPECT_THROW(load_idx(dir / "bad", dir / "lab"), FormatError);
  fs::remove_all(dir);
}

TEST(Herding, HandWorkedOrder) {
  // Mean 3.25: picks 2 (1.25 away), then 1 (pair mean 1.5), then 10.
  const std::vector<std::vector<double>> f{{0.0}, {1.0}, {2.0}, {10.0}};
  EXPECT_EQ(herding_select(f, 3), (std::vector<std::size_t>{2, 1, 3}));
  EXPECT_THROW(herding_select(f, 5), ArgumentError);
}

namespace {

ExemplarMemory::FeatureFn identity_features() {
  return [](const LabeledSet& s) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < s.size(); ++i) rows.emplace_back(s.row(i).begin(), s.row(i).end());
    return rows;
  };
}

LabeledSet classes_subset(const LabeledSet& d, std::set<std::size_t> keep) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (keep.contains(d.labels[i])) rows.push_back(i);
  return d.subset(rows);
}

}  // namespace

TEST(Memory, PerClassQuota) {
  const LabeledSet d = make_gaussian_mixture(4, 20, 3, 2.0, 1);
  ExemplarMemory m({BudgetMode::PerClass, 5, 0, Selection::Herding}, 0);
  m.update(classes_subset(d, {0, 1}), identity_features());
  m.update(classes_subset(d, {2, 3}), identity_features());
  EXPECT_EQ(m.total_stored(), 20u);
  for (const auto& [k, s] : m.classes()) EXPECT_EQ(s.ids.size(), 5u);
}

TEST(Memory, GlobalBudgetTrimsToPrefix) {
  const LabeledSet d = make_gaussian_mixture(4, 20, 3, 2.0, 1);
  ExemplarMemory m({BudgetMode::Global, 0, 12, Selection::Herding}, 0);
  m.update(classes_subset(d, {0, 1}), identity_features());
  const auto before = m.sample_ids();
  EXPECT_EQ(before.at(0).size(), 6u);
  m.update(classes_subset(d, {2, 3}), identity_features());
  const auto after = m.sample_ids();
  EXPECT_EQ(after.at(0).size(), 3u);
  EXPECT_TRUE(std::equal(after.at(0).begin(), after.at(0).end(), before.at(0).begin()));
}

TEST(Memory, ZeroQuotaIsConfigurationError) {
  const LabeledSet d = make_gaussian_mixture(4, 20, 3, 2.0, 1);
  ExemplarMemory m({BudgetMode::Global, 0, 3, Selection::Random}, 0);
  EXPECT_THROW(m.update(d, identity_features()), ConfigurationError);
}

TEST(Memory, RandomSelectionIsSeeded) {
  const LabeledSet d = make_gaussian_mixture(2, 30, 3, 2.0, 1);
  ExemplarMemory a({BudgetMode::PerClass, 4, 0, Selection::Random}, 9), b({BudgetMode::PerClass, 4, 0, Selection::Random}, 9);
  a.update(d, identity_features());
  b.update(d, identity_features());
  EXPECT_EQ(a.sample_ids(), b.sample_ids());
  const LabeledSet merged = merged_training_set(a, d);
  EXPECT_EQ(merged.size(), d.size() + 8);
}
