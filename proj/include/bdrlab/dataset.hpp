#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "bdrlab/autodiff.hpp"

namespace bdrlab {

// Labeled samples with global class indices. `ids` are stable sample
// identifiers from the generating corpus; they survive splitting and merging.
struct LabeledSet {
  Tensor features;  // [N x d]
  std::vector<std::size_t> labels;
  std::vector<std::size_t> ids;
  std::size_t class_count = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.rank() == 2 ? features.cols() : 0; }
  std::vector<std::size_t> indices_of_class(std::size_t k) const;
  // Per-class sample counts, length class_count.
  std::vector<std::size_t> counts() const;
  std::span<const double> row(std::size_t i) const { return features.data().subspan(i * dim(), dim()); }
  LabeledSet subset(std::span<const std::size_t> rows) const;

  // Throws on broken invariants (label range, sizes).
  void validate() const;
};

struct Phase {
  std::vector<std::size_t> classes;  // classes introduced in this phase
  LabeledSet train;
  LabeledSet test;
};

struct PhaseStream {
  std::vector<Phase> phases;
  std::size_t base = 0;  // B
  std::size_t step = 0;  // S
  std::vector<std::size_t> class_order;
  std::uint64_t seed = 0;
  std::size_t class_count = 0;
};

LabeledSet make_gaussian_mixture(std::size_t classes, std::size_t per_class, std::size_t dim, double separation,
                                 std::uint64_t seed);

// Concentric annuli in 2-D; class k sits at radius k + 1.
LabeledSet make_rings(std::size_t classes, std::size_t per_class, double noise, std::uint64_t seed);

// IDX image/label pair (big-endian, magic 0x00000803 / 0x00000801).
LabeledSet load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

struct TrainTestSplit {
  LabeledSet train;
  LabeledSet test;
};

inline constexpr std::size_t kHoldoutDenominator = 6;

// Stratified hold-out of floor(n_k / 6) samples per class.
TrainTestSplit train_test_split(const LabeledSet& data, std::uint64_t seed);

// B classes in phase 0 (S when B == 0), then S new classes per phase.
PhaseStream split_phases(const LabeledSet& data, std::size_t base, std::size_t step, std::uint64_t seed);

// Concatenation; both sets must share the feature dimension.
LabeledSet concat(const LabeledSet& a, const LabeledSet& b);

}  // namespace bdrlab
