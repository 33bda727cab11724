#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bdrlab/autodiff.hpp"
#include "bdrlab/balance.hpp"
#include "bdrlab/dataset.hpp"
#include "bdrlab/diagnostics.hpp"
#include "bdrlab/memory.hpp"
#include "bdrlab/rng.hpp"

namespace bdrlab {

// Multilayer perceptron: relu hidden layers, then a linear head with one
// output column per class seen so far.
class Classifier {
 public:
  Classifier() = default;
  static Classifier create(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t classes, Rng& rng);

  std::size_t input_dim() const noexcept { return weights_.empty() ? 0 : weights_.front().rows(); }
  std::size_t feature_dim() const noexcept { return weights_.empty() ? 0 : weights_.back().rows(); }
  std::size_t class_count() const noexcept { return weights_.empty() ? 0 : weights_.back().cols(); }
  std::size_t layer_count() const noexcept { return weights_.size(); }
  std::size_t parameter_count() const;

  // Parameters in order W1, b1, ..., W_head, b_head.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> flat);

  const Tensor& head_weights() const { return weights_.back(); }
  const Tensor& head_bias() const { return biases_.back(); }

  struct Output {
    Var features;  // penultimate activations (the input itself without hidden layers)
    Var logits;
  };
  // Parameters attached to `tape` as leaves, in parameters() order.
  std::vector<Var> attach(Tape& tape, bool trainable) const;
  Output forward(std::span<const Var> params, Var input) const;

  // Inference without gradient tracking.
  Tensor logits(const Tensor& x) const;
  Tensor features(const Tensor& x) const;

  // Appends `count` head columns drawn from N(0, 0.01^2) with zero bias.
  void expand_head(std::size_t count, Rng& rng);

 private:
  std::vector<Tensor> weights_;  // [in x out]
  std::vector<Tensor> biases_;   // [1 x out]
};

Classifier expand_head(Classifier model, std::size_t new_class_count, Rng& rng);

enum class LossVariant { CE, CR, BDR, Reweight };

std::string to_string(LossVariant variant);
LossVariant parse_loss_variant(const std::string& text);

enum class VarianceSource { Feature, Logit };

std::string to_string(VarianceSource source);
VarianceSource parse_variance_source(const std::string& text);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double lr_decay_fraction = 2.0 / 3.0;  // epoch fraction at which the rate drops
  double lr_decay_factor = 0.1;
  std::vector<std::size_t> hidden{64, 64};
  LossVariant variant = LossVariant::BDR;
  double distill_weight = 1.0;  // lambda
  double temperature = 2.0;     // T_d
  MemoryConfig memory;
  BdrHyper bdr;
  VarianceSource variance_source = VarianceSource::Feature;
  std::uint64_t seed = 0;
  // Power iterations for the per-phase Hessian estimate; 0 skips the bound.
  std::size_t hessian_iters = 40;

  void validate() const;
};

// T_d^2 * mean KL(softmax(teacher / T_d) || softmax(student / T_d)).
Var distill_loss(Var student_old_logits, const Tensor& teacher_old_logits, double temperature);

struct StepRecord {
  std::size_t phase = 0;
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss_new = 0.0;  // variant loss over new-class samples of the batch
  // Old-knowledge loss on the whole merged set at the parameters before this
  // step: distillation if lambda > 0, else CE on the old-class samples.
  double loss_old = 0.0;
  double grad_new_norm = 0.0;
  double grad_old_norm = 0.0;
  double grad_total_sq = 0.0;  // ||(Con_new + Con_old) / N||^2
  double contrib_inner = 0.0;  // Con_new . Con_old
  std::size_t batch_size = 0;
  std::size_t new_count = 0;
  std::size_t old_count = 0;
  double ce_new = 0.0;  // plain CE over new-class samples
  double ce_old = 0.0;  // plain CE over old-class samples (0 when none)
};

struct ScheduleRecord {
  std::size_t step = 0;  // global step across the run
  std::size_t phase = 0;
  std::vector<double> psi;
  std::vector<double> omega;
  std::vector<double> pi_hat;
};

struct PhaseTrace {
  std::vector<StepRecord> steps;
  std::vector<ScheduleRecord> schedule;
  std::size_t steps_per_epoch = 0;
};

struct PhaseContext {
  std::size_t phase = 0;
  std::size_t old_class_count = 0;  // slots [0, old) belong to earlier phases
  const Classifier* teacher = nullptr;
  std::size_t global_step_offset = 0;
};

// Trains `model` in place on the merged set. Labels are head slots.
PhaseTrace train_phase(Classifier& model, const LabeledSet& data, const TrainConfig& config, const PhaseContext& context,
                       Rng& batching);

double accuracy(const Classifier& model, const LabeledSet& data);

struct PhaseResult {
  std::size_t phase = 0;
  std::vector<std::size_t> classes;  // original class ids introduced
  double accuracy = 0.0;
  std::optional<double> old_accuracy;
  double new_accuracy = 0.0;
  std::size_t train_size = 0;
  std::size_t memory_size = 0;
  DestructionReport destruction;
  std::optional<BoundReport> bound;
  double initial_loss_new = 0.0;
  double initial_loss_old = 0.0;
  double initial_ce_new = 0.0;
  double initial_ce_old = 0.0;
  double converged_loss_new = 0.0;
};

struct RunReport {
  LossVariant variant = LossVariant::CE;
  std::uint64_t seed = 0;
  std::vector<PhaseResult> phases;
  double avg = 0.0;
  double last = 0.0;
  std::vector<StepRecord> trace;
  std::vector<ScheduleRecord> schedule;
  std::vector<std::size_t> class_order;  // head slot -> class id
  std::map<std::size_t, std::vector<std::size_t>> memory;  // class id -> sample ids
  double wall_seconds = 0.0;

  // Mean of F_max over incremental phases (0 with a single phase).
  double mean_incremental_f_max() const;
};

RunReport run_experiment(const PhaseStream& stream, const TrainConfig& config);

}  // namespace bdrlab
