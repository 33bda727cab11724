#include "bdrlab/memory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "bdrlab/error.hpp"
#include "bdrlab/rng.hpp"

namespace bdrlab {

std::string to_string(BudgetMode mode) { return mode == BudgetMode::PerClass ? "per_class" : "global"; }
std::string to_string(Selection selection) { return selection == Selection::Herding ? "herding" : "random"; }

BudgetMode parse_budget_mode(const std::string& text) {
  if (text == "per_class") return BudgetMode::PerClass;
  if (text == "global") return BudgetMode::Global;
  throw ArgumentError("unknown budget mode '" + text + "' (expected per_class or global)");
}

Selection parse_selection(const std::string& text) {
  if (text == "herding") return Selection::Herding;
  if (text == "random") return Selection::Random;
  throw ArgumentError("unknown selection '" + text + "' (expected herding or random)");
}

std::vector<std::size_t> herding_select(std::span<const std::vector<double>> features, std::size_t quota) {
  if (features.empty()) throw ArgumentError("herding_select: no samples");
  const std::size_t n = features.size();
  const std::size_t d = features[0].size();
  if (quota > n) throw ArgumentError("herding_select: quota exceeds sample count");
  for (const auto& f : features)
    if (f.size() != d) throw DimensionError("herding_select: ragged features");

  std::vector<double> mu(d, 0.0);
  for (const auto& f : features)
    for (std::size_t j = 0; j < d; ++j) mu[j] += f[j];
  for (double& v : mu) v /= static_cast<double>(n);

  std::vector<double> chosen_sum(d, 0.0);
  std::vector<bool> taken(n, false);
  std::vector<std::size_t> order;
  order.reserve(quota);
  for (std::size_t k = 1; k <= quota; ++k) {
    std::size_t best = n;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = mu[j] - (chosen_sum[j] + features[i][j]) / static_cast<double>(k);
        dist += diff * diff;
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = i;
      }
    }
    taken[best] = true;
    order.push_back(best);
    for (std::size_t j = 0; j < d; ++j) chosen_sum[j] += features[best][j];
  }
  return order;
}

std::size_t ExemplarMemory::quota_for(std::size_t class_total) const {
  std::size_t quota = 0;
  if (config_.mode == BudgetMode::PerClass) {
    quota = config_.per_class;
  } else {
    quota = class_total ? config_.total / class_total : 0;
  }
  if (quota == 0) {
    throw ConfigurationError("memory quota is 0 for " + std::to_string(class_total) + " stored classes");
  }
  return quota;
}

void ExemplarMemory::update(const LabeledSet& phase_data, const FeatureFn& features_of) {
  std::set<std::size_t> incoming;
  for (std::size_t y : phase_data.labels)
    if (!classes_.contains(y)) incoming.insert(y);
  const std::size_t quota = quota_for(classes_.size() + incoming.size());

  for (auto& [k, stored] : classes_) {
    if (stored.ids.size() > quota) {
      stored.ids.resize(quota);
      stored.inputs.resize(quota);
    }
  }

  const Rng selection_rng = Rng(seed_).split("selection");
  for (std::size_t k : incoming) {
    const auto rows = phase_data.indices_of_class(k);
    const LabeledSet members = phase_data.subset(rows);
    const std::size_t take = std::min(quota, rows.size());
    std::vector<std::size_t> ranking;
    if (config_.selection == Selection::Herding) {
      const auto feats = features_of(members);
      if (feats.size() != rows.size()) throw DimensionError("feature function returned wrong number of rows");
      ranking = herding_select(feats, take);
    } else {
      ranking = selection_rng.split(k).permutation(rows.size());
      ranking.resize(take);
    }
    StoredClass stored;
    for (std::size_t r : ranking) {
      stored.ids.push_back(members.ids[r]);
      const auto row = members.row(r);
      stored.inputs.emplace_back(row.begin(), row.end());
    }
    classes_[k] = std::move(stored);
  }
}

std::size_t ExemplarMemory::total_stored() const {
  std::size_t n = 0;
  for (const auto& [k, stored] : classes_) n += stored.ids.size();
  return n;
}

LabeledSet ExemplarMemory::as_set(std::size_t class_count, std::size_t dim) const {
  LabeledSet out;
  out.class_count = class_count;
  std::vector<double> data;
  for (const auto& [k, stored] : classes_) {
    for (std::size_t i = 0; i < stored.ids.size(); ++i) {
      if (stored.inputs[i].size() != dim) {
        throw DimensionError("memory sample of dimension " + std::to_string(stored.inputs[i].size()) +
                             " does not match " + std::to_string(dim));
      }
      data.insert(data.end(), stored.inputs[i].begin(), stored.inputs[i].end());
      out.labels.push_back(k);
      out.ids.push_back(stored.ids[i]);
    }
  }
  out.features = Tensor({out.labels.size(), dim}, std::move(data));
  return out;
}

std::map<std::size_t, std::vector<std::size_t>> ExemplarMemory::sample_ids() const {
  std::map<std::size_t, std::vector<std::size_t>> out;
  for (const auto& [k, stored] : classes_) out[k] = stored.ids;
  return out;
}

LabeledSet merged_training_set(const ExemplarMemory& memory, const LabeledSet& phase_data) {
  if (memory.empty()) return phase_data;
  std::size_t class_count = phase_data.class_count;
  if (!memory.classes().empty()) class_count = std::max(class_count, memory.classes().rbegin()->first + 1);
  LabeledSet data = phase_data;
  data.class_count = class_count;
  return concat(data, memory.as_set(class_count, phase_data.dim()));
}

}  // namespace bdrlab
