#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bdrlab/dataset.hpp"

namespace bdrlab {

enum class BudgetMode { PerClass, Global };
enum class Selection { Random, Herding };

std::string to_string(BudgetMode mode);
std::string to_string(Selection selection);
BudgetMode parse_budget_mode(const std::string& text);
Selection parse_selection(const std::string& text);

struct MemoryConfig {
  BudgetMode mode = BudgetMode::PerClass;
  std::size_t per_class = 5;  // R, PerClass mode
  std::size_t total = 40;     // Global mode
  Selection selection = Selection::Herding;
};

// Greedy herding: step k picks the sample that brings the running mean of the
// chosen features closest to the class mean. Ties go to the lowest index.
std::vector<std::size_t> herding_select(std::span<const std::vector<double>> features, std::size_t quota);

// Exemplars of one class, stored verbatim in ranked order so that any prefix
// is a valid smaller selection.
struct StoredClass {
  std::vector<std::size_t> ids;
  std::vector<std::vector<double>> inputs;
};

class ExemplarMemory {
 public:
  // Maps a set of inputs to one feature vector per row.
  using FeatureFn = std::function<std::vector<std::vector<double>>(const LabeledSet&)>;

  ExemplarMemory() = default;
  ExemplarMemory(MemoryConfig config, std::uint64_t seed) : config_(config), seed_(seed) {}

  // Inserts the classes present in phase_data and, in Global mode, trims
  // previously stored classes to the new quota.
  void update(const LabeledSet& phase_data, const FeatureFn& features_of);

  const MemoryConfig& config() const noexcept { return config_; }
  const std::map<std::size_t, StoredClass>& classes() const noexcept { return classes_; }
  std::size_t total_stored() const;
  bool empty() const noexcept { return classes_.empty(); }

  // Memory contents as a labeled set (class_count and dim from the caller).
  LabeledSet as_set(std::size_t class_count, std::size_t dim) const;
  std::map<std::size_t, std::vector<std::size_t>> sample_ids() const;

 private:
  std::size_t quota_for(std::size_t class_total) const;

  MemoryConfig config_;
  std::uint64_t seed_ = 0;
  std::map<std::size_t, StoredClass> classes_;
};

// Phase data followed by memory contents.
LabeledSet merged_training_set(const ExemplarMemory& memory, const LabeledSet& phase_data);

}  // namespace bdrlab
