#include "bdrlab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "bdrlab/error.hpp"

namespace bdrlab {

// --- Classifier ------------------------------------------------------------

Classifier Classifier::create(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t classes,
                              Rng& rng) {
  if (input_dim == 0 || classes == 0) throw ArgumentError("classifier needs positive input and class counts");
  Classifier model;
  std::size_t fan_in = input_dim;
  for (std::size_t width : hidden) {
    if (width == 0) throw ArgumentError("hidden layer width must be positive");
    Tensor w = Tensor::zeros({fan_in, width});
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : w.data()) v = rng.normal(0.0, sd);
    model.weights_.push_back(std::move(w));
    model.biases_.push_back(Tensor::zeros({1, width}));
    fan_in = width;
  }
  Tensor head = Tensor::zeros({fan_in, classes});
  const double sd = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (double& v : head.data()) v = rng.normal(0.0, sd);
  model.weights_.push_back(std::move(head));
  model.biases_.push_back(Tensor::zeros({1, classes}));
  return model;
}

std::size_t Classifier::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* p : parameters()) n += p->size();
  return n;
}

std::vector<Tensor*> Classifier::parameters() {
  std::vector<Tensor*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const Tensor*> Classifier::parameters() const {
  std::vector<const Tensor*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<double> Classifier::flat_parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const Tensor* p : parameters()) flat.insert(flat.end(), p->data().begin(), p->data().end());
  return flat;
}

void Classifier::set_flat_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw DimensionError("flat parameter vector has wrong size");
  std::size_t offset = 0;
  for (Tensor* p : parameters()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), p->size(), p->data().begin());
    offset += p->size();
  }
}

std::vector<Var> Classifier::attach(Tape& tape, bool trainable) const {
  std::vector<Var> vars;
  for (const Tensor* p : parameters()) {
    Tensor copy = *p;
    copy.zero_grad();
    copy.set_requires_grad(trainable);
    vars.push_back(tape.leaf(std::move(copy)));
  }
  return vars;
}

Classifier::Output Classifier::forward(std::span<const Var> params, Var input) const {
  if (params.size() != 2 * weights_.size()) throw ContractError("forward: wrong number of parameter variables");
  if (input.value().cols() != input_dim()) {
    throw DimensionError("forward: input " + shape_string(input.shape()) + " for input dimension " +
                         std::to_string(input_dim()));
  }
  Var h = input;
  const std::size_t hidden = weights_.size() - 1;
  for (std::size_t l = 0; l < hidden; ++l) h = relu(add_row(matmul(h, params[2 * l]), params[2 * l + 1]));
  Var logits = add_row(matmul(h, params[2 * hidden]), params[2 * hidden + 1]);
  return {h, logits};
}

Tensor Classifier::logits(const Tensor& x) const {
  Tape tape;
  const auto params = attach(tape, false);
  return forward(params, tape.constant(x)).logits.value();
}

Tensor Classifier::features(const Tensor& x) const {
  Tape tape;
  const auto params = attach(tape, false);
  return forward(params, tape.constant(x)).features.value();
}

void Classifier::expand_head(std::size_t count, Rng& rng) {
  if (count == 0) throw ArgumentError("expand_head: growth must be at least one class");
  const Tensor& w = weights_.back();
  const std::size_t f = w.rows(), k = w.cols();
  Tensor grown = Tensor::zeros({f, k + count});
  for (std::size_t i = 0; i < f; ++i) {
    for (std::size_t j = 0; j < k; ++j) grown.at(i, j) = w.at(i, j);
  }
  for (std::size_t j = k; j < k + count; ++j)
    for (std::size_t i = 0; i < f; ++i) grown.at(i, j) = rng.normal(0.0, 0.01);
  Tensor bias = Tensor::zeros({1, k + count});
  std::copy_n(biases_.back().data().begin(), k, bias.data().begin());
  weights_.back() = std::move(grown);
  biases_.back() = std::move(bias);
}

Classifier expand_head(Classifier model, std::size_t new_class_count, Rng& rng) {
  model.expand_head(new_class_count, rng);
  return model;
}

// --- configuration ---------------------------------------------------------

std::string to_string(LossVariant v) {
  switch (v) {
    case LossVariant::CE:
      return "CE";
    case LossVariant::CR:
      return "CR";
    case LossVariant::BDR:
      return "BDR";
    case LossVariant::Reweight:
      return "Reweight";
  }
  return "?";
}

LossVariant parse_loss_variant(const std::string& text) {
  if (text == "CE") return LossVariant::CE;
  if (text == "CR") return LossVariant::CR;
  if (text == "BDR") return LossVariant::BDR;
  if (text == "Reweight") return LossVariant::Reweight;
  throw ArgumentError("unknown loss variant '" + text + "' (expected CE, CR, BDR or Reweight)");
}

std::string to_string(VarianceSource s) { return s == VarianceSource::Feature ? "feature" : "logit"; }

VarianceSource parse_variance_source(const std::string& text) {
  if (text == "feature") return VarianceSource::Feature;
  if (text == "logit") return VarianceSource::Logit;
  throw ArgumentError("unknown variance source '" + text + "' (expected feature or logit)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
  if (!(distill_weight >= 0.0)) throw ArgumentError("distillation weight must be >= 0");
  if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
  if (epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ArgumentError("momentum must lie in [0, 1)");
  if (!(temperature > 0.0)) throw ArgumentError("temperature must be positive");
  if (!(weight_decay >= 0.0)) throw ArgumentError("weight decay must be >= 0");
  if (!(lr_decay_fraction >= 0.0 && lr_decay_fraction <= 1.0)) throw ArgumentError("lr decay fraction must lie in [0, 1]");
  if (!(lr_decay_factor > 0.0)) throw ArgumentError("lr decay factor must be positive");
  bdr.validate();
}

Var distill_loss(Var student, const Tensor& teacher, double temperature) {
  if (student.value().shape() != teacher.shape()) {
    throw DimensionError("distill_loss: student slice " + shape_string(student.shape()) + " vs teacher slice " +
                         shape_string(teacher.shape()));
  }
  return scale(softmax_kl(student, teacher, temperature), temperature * temperature);
}

// --- training --------------------------------------------------------------

namespace {

double plain_ce(const Tensor& logits, std::span<const std::size_t> labels) {
  const Tensor p = softmax_rows(logits);
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) s -= std::log(std::max(p.at(i, labels[i]), 1e-300));
  return labels.empty() ? 0.0 : s / static_cast<double>(labels.size());
}

double norm_sq(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

struct SubBatchResult {
  std::vector<double> grad_sum;  // sum of per-sample gradients
  double cls = 0.0;              // mean variant loss
  double distill = 0.0;          // mean distillation (unweighted)
  double ce = 0.0;               // mean plain CE
  Tensor stat_features;
};

}  // namespace

PhaseTrace train_phase(Classifier& model, const LabeledSet& data, const TrainConfig& config, const PhaseContext& ctx,
                       Rng& batching) {
  config.validate();
  data.validate();
  const std::size_t n = data.size();
  const std::size_t k = model.class_count();
  if (n == 0) throw ArgumentError("train_phase: empty training set");
  if (data.class_count > k) throw DimensionError("train_phase: data has more classes than the head");
  const bool incremental = ctx.teacher != nullptr;
  const std::size_t old = ctx.old_class_count;
  if (incremental && ctx.teacher->class_count() != old) {
    throw DimensionError("train_phase: teacher head does not cover the old classes");
  }

  std::vector<std::size_t> counts = data.counts();
  counts.resize(k, 0);

  // Loss shaping for this phase.
  std::vector<double> zero_offsets(k, 0.0);
  std::vector<double> psi;
  std::optional<ClassStats> stats;
  std::optional<OffsetSchedule> schedule;
  std::vector<double> fixed_offsets = zero_offsets;
  std::vector<double> class_weights;
  if (incremental && config.variant != LossVariant::CE) {
    psi = class_priors(counts);
    if (config.variant == LossVariant::CR) {
      for (std::size_t c = 0; c < k; ++c) fixed_offsets[c] = std::log(psi[c]);
    } else if (config.variant == LossVariant::Reweight) {
      class_weights.resize(k);
      for (std::size_t c = 0; c < k; ++c) class_weights[c] = 1.0 / (static_cast<double>(k) * psi[c]);
    } else {
      const Tensor snapshot = config.variance_source == VarianceSource::Feature ? model.features(data.features)
                                                                                : model.logits(data.features);
      stats = init_class_stats(snapshot, data.labels, k);
      schedule = init_schedule(psi, stats->omega, config.bdr);
    }
  }

  Tensor teacher_logits;
  const bool distill = incremental && config.distill_weight > 0.0 && old > 0;
  if (distill) {
    Tape tape;
    const Tensor full = ctx.teacher->logits(data.features);
    teacher_logits = slice_cols(tape.constant(full), 0, old).value();
  }

  PhaseTrace trace;
  trace.steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t p_count = model.parameter_count();
  std::vector<double> velocity(p_count, 0.0);
  const auto decay_epoch = static_cast<std::size_t>(std::floor(config.lr_decay_fraction * static_cast<double>(config.epochs)));
  std::size_t step = 0;

  // Old-knowledge loss over the whole merged set at the current parameters:
  // distillation when enabled, otherwise CE on the old-class samples.
  std::vector<std::size_t> old_sample_rows;
  for (std::size_t i = 0; i < n; ++i)
    if (data.labels[i] < old) old_sample_rows.push_back(i);
  const LabeledSet old_samples = data.subset(old_sample_rows);
  auto old_knowledge_loss = [&]() -> double {
    if (!incremental) return 0.0;
    if (distill) {
      Tape tape;
      const Tensor z = model.logits(data.features);
      return distill_loss(slice_cols(tape.constant(z), 0, old), teacher_logits, config.temperature).item();
    }
    if (old_samples.size() == 0) return 0.0;
    return plain_ce(model.logits(old_samples.features), old_samples.labels);
  };

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = epoch >= decay_epoch ? config.learning_rate * config.lr_decay_factor : config.learning_rate;
    const std::vector<std::size_t> perm = batching.permutation(n);
    for (std::size_t begin = 0; begin < n; begin += config.batch_size, ++step) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      std::vector<std::size_t> new_rows, old_rows;
      for (std::size_t i = begin; i < end; ++i) (data.labels[perm[i]] >= old ? new_rows : old_rows).push_back(perm[i]);

      const std::vector<double>& step_offsets = schedule ? offsets(*schedule) : fixed_offsets;
      auto run_sub = [&](const std::vector<std::size_t>& rows) {
        SubBatchResult r;
        r.grad_sum.assign(p_count, 0.0);
        if (rows.empty()) return r;
        std::vector<std::size_t> labels(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = data.labels[rows[i]];
        Tape tape;
        const auto params = model.attach(tape, true);
        const auto out = model.forward(params, tape.constant(data.features.select_rows(rows)));
        Var cls = class_weights.empty() ? ce_with_offset(out.logits, step_offsets, labels)
                                        : weighted_ce_with_offset(out.logits, zero_offsets, class_weights, labels);
        r.cls = cls.item();
        Var total = cls;
        if (distill) {
          Var d = distill_loss(slice_cols(out.logits, 0, old), teacher_logits.select_rows(rows), config.temperature);
          r.distill = d.item();
          total = add(cls, scale(d, config.distill_weight));
        }
        tape.backward(scale(total, static_cast<double>(rows.size())));
        std::size_t offset = 0;
        for (const Var& p : params) {
          const auto g = tape.grad(p);
          std::copy(g.begin(), g.end(), r.grad_sum.begin() + static_cast<std::ptrdiff_t>(offset));
          offset += g.size();
        }
        r.ce = plain_ce(out.logits.value(), labels);
        if (schedule) {
          r.stat_features = config.variance_source == VarianceSource::Feature ? out.features.value() : out.logits.value();
        }
        return r;
      };

      SubBatchResult fresh, kept;
      try {
        fresh = run_sub(new_rows);
        kept = run_sub(old_rows);
      } catch (const NumericError& e) {
        throw DivergenceError("training diverged in phase " + std::to_string(ctx.phase) + ": " + e.what(), step);
      }
      const double batch = static_cast<double>(end - begin);

      StepRecord rec;
      rec.phase = ctx.phase;
      rec.epoch = epoch;
      rec.step = step;
      rec.batch_size = end - begin;
      rec.new_count = new_rows.size();
      rec.old_count = old_rows.size();
      rec.loss_new = fresh.cls;
      rec.ce_new = fresh.ce;
      rec.ce_old = kept.ce;
      try {
        rec.loss_old = old_knowledge_loss();
      } catch (const NumericError& e) {
        throw DivergenceError("training diverged in phase " + std::to_string(ctx.phase) + ": " + e.what(), step);
      }

      std::vector<double> grad(p_count);
      double inner = 0.0;
      for (std::size_t i = 0; i < p_count; ++i) {
        grad[i] = (fresh.grad_sum[i] + kept.grad_sum[i]) / batch;
        inner += fresh.grad_sum[i] * kept.grad_sum[i];
      }
      rec.grad_new_norm = std::sqrt(norm_sq(fresh.grad_sum));
      rec.grad_old_norm = std::sqrt(norm_sq(kept.grad_sum));
      rec.grad_total_sq = norm_sq(grad);
      rec.contrib_inner = inner;
      if (!std::isfinite(rec.loss_new) || !std::isfinite(rec.loss_old) || !std::isfinite(rec.grad_total_sq) ||
          !std::isfinite(kept.cls)) {
        throw DivergenceError("training diverged in phase " + std::to_string(ctx.phase), step);
      }
      trace.steps.push_back(rec);

      if (schedule) {
        trace.schedule.push_back({ctx.global_step_offset + step, ctx.phase, schedule->psi, stats->omega, schedule->pi_hat});
        std::vector<std::size_t> labels;
        std::vector<double> feats;
        for (const auto* part : {&new_rows, &old_rows})
          for (std::size_t r : *part) labels.push_back(data.labels[r]);
        for (const auto* part : {&fresh, &kept})
          if (part->stat_features.size()) feats.insert(feats.end(), part->stat_features.data().begin(), part->stat_features.data().end());
        const std::size_t width = labels.empty() ? 0 : feats.size() / labels.size();
        momentum_update(*stats, *schedule, Tensor({labels.size(), width}, std::move(feats)), labels);
      }

      std::size_t offset = 0;
      for (Tensor* p : model.parameters()) {
        for (double& w : p->data()) {
          double& v = velocity[offset];
          v = config.momentum * v + grad[offset] + config.weight_decay * w;
          w -= lr * v;
          ++offset;
        }
      }
    }
  }
  return trace;
}

double accuracy(const Classifier& model, const LabeledSet& data) {
  if (data.size() == 0) throw ArgumentError("accuracy: empty evaluation set");
  const Tensor z = model.logits(data.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < z.cols(); ++j)
      if (z.at(i, j) > z.at(i, best)) best = j;
    if (best == data.labels[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

double RunReport::mean_incremental_f_max() const {
  if (phases.size() < 2) return 0.0;
  double s = 0.0;
  for (std::size_t t = 1; t < phases.size(); ++t) s += phases[t].destruction.f_max;
  return s / static_cast<double>(phases.size() - 1);
}

namespace {

LabeledSet to_slots(const LabeledSet& set, const std::vector<std::size_t>& slot_of) {
  LabeledSet out = set;
  for (std::size_t& y : out.labels) y = slot_of.at(y);
  return out;
}

// Gradient of sum_j mean-CE(phase j training data) at flat parameters.
GradientFn old_phase_gradient(const Classifier& shape, const std::vector<LabeledSet>& old_sets) {
  return [shape, &old_sets](std::span<const double> theta) {
    Classifier model = shape;
    model.set_flat_parameters(theta);
    std::vector<double> g(theta.size(), 0.0);
    const std::vector<double> zero(model.class_count(), 0.0);
    for (const LabeledSet& set : old_sets) {
      Tape tape;
      const auto params = model.attach(tape, true);
      const auto out = model.forward(params, tape.constant(set.features));
      tape.backward(ce_with_offset(out.logits, zero, set.labels));
      std::size_t offset = 0;
      for (const Var& p : params) {
        const auto pg = tape.grad(p);
        for (std::size_t i = 0; i < pg.size(); ++i) g[offset + i] += pg[i];
        offset += pg.size();
      }
    }
    return g;
  };
}

}  // namespace

RunReport run_experiment(const PhaseStream& stream, const TrainConfig& config) {
  config.validate();
  if (stream.phases.empty()) throw ArgumentError("run_experiment: empty phase stream");
  const auto started = std::chrono::steady_clock::now();

  std::vector<std::size_t> slot_of(stream.class_count);
  for (std::size_t pos = 0; pos < stream.class_order.size(); ++pos) slot_of[stream.class_order[pos]] = pos;

  const Rng root(config.seed);
  Rng init_rng = root.split("init");
  Rng batching = root.split("batching");
  const std::uint64_t selection_seed = root.split("selection").next_u64();

  std::vector<LabeledSet> train_sets, test_sets;
  for (const Phase& phase : stream.phases) {
    train_sets.push_back(to_slots(phase.train, slot_of));
    test_sets.push_back(to_slots(phase.test, slot_of));
  }

  RunReport report;
  report.variant = config.variant;
  report.seed = config.seed;
  report.class_order = stream.class_order;

  const std::size_t dim = train_sets.front().dim();
  Classifier model = Classifier::create(dim, config.hidden, stream.phases.front().classes.size(), init_rng);
  ExemplarMemory memory(config.memory, selection_seed);
  LabeledSet seen_test;
  std::size_t seen = 0;
  std::size_t global_step = 0;
  std::vector<double> accuracies;

  for (std::size_t t = 0; t < stream.phases.size(); ++t) {
    const Phase& phase = stream.phases[t];
    const std::size_t old = seen;
    seen += phase.classes.size();
    if (train_sets[t].dim() != dim) throw DimensionError("phase " + std::to_string(t) + " has a different feature dimension");

    std::optional<Classifier> teacher;
    if (t > 0) {
      teacher = model;
      model.expand_head(phase.classes.size(), init_rng);
    }
    LabeledSet train = merged_training_set(memory, train_sets[t]);
    train.class_count = seen;
    const std::vector<double> theta_start = model.flat_parameters();

    PhaseContext ctx{t, old, teacher ? &*teacher : nullptr, global_step};
    PhaseTrace trace = train_phase(model, train, config, ctx, batching);
    global_step += trace.steps.size();

    memory.update(train_sets[t], [&model](const LabeledSet& members) {
      const Tensor f = model.features(members.features);
      std::vector<std::vector<double>> rows(f.rows());
      for (std::size_t i = 0; i < f.rows(); ++i) rows[i].assign(f.data().begin() + static_cast<std::ptrdiff_t>(i * f.cols()),
                                                               f.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * f.cols()));
      return rows;
    });

    LabeledSet test = test_sets[t];
    test.class_count = seen;
    seen_test.class_count = seen;
    seen_test = concat(seen_test, test);
    seen_test.class_count = seen;

    PhaseResult result;
    result.phase = t;
    result.classes = phase.classes;
    result.train_size = train.size();
    result.memory_size = memory.total_stored();
    result.accuracy = accuracy(model, seen_test);
    std::vector<std::size_t> old_rows, new_rows;
    for (std::size_t i = 0; i < seen_test.size(); ++i) (seen_test.labels[i] < old ? old_rows : new_rows).push_back(i);
    if (!old_rows.empty()) result.old_accuracy = accuracy(model, seen_test.subset(old_rows));
    result.new_accuracy = accuracy(model, seen_test.subset(new_rows));

    std::vector<double> old_trace, grad_sq, gaps;
    for (const StepRecord& r : trace.steps) {
      old_trace.push_back(r.loss_old);
      grad_sq.push_back(r.grad_total_sq);
      const double b2 = static_cast<double>(r.batch_size) * static_cast<double>(r.batch_size);
      gaps.push_back(r.grad_total_sq - 4.0 * r.contrib_inner / b2);
    }
    result.destruction = destruction_report(old_trace, trace.steps_per_epoch);
    const StepRecord& first = trace.steps.front();
    result.initial_loss_new = first.loss_new;
    result.initial_loss_old = first.loss_old;
    result.initial_ce_new = first.ce_new;
    result.initial_ce_old = first.ce_old;
    {
      const std::size_t tail = std::min(trace.steps_per_epoch, trace.steps.size());
      double s = 0.0;
      for (std::size_t i = trace.steps.size() - tail; i < trace.steps.size(); ++i) s += trace.steps[i].loss_new;
      result.converged_loss_new = s / static_cast<double>(tail);
    }

    if (t > 0 && config.hessian_iters > 0) {
      Classifier at_start = model;
      at_start.set_flat_parameters(theta_start);
      const std::vector<LabeledSet> old_sets(train_sets.begin(), train_sets.begin() + static_cast<std::ptrdiff_t>(t));
      HessianOptions opts;
      opts.max_iters = config.hessian_iters;
      opts.tol = 1e-3;
      opts.seed = root.split("hessian").split(t).next_u64();
      const EigenEstimate sigma = hessian_top_eigen(old_phase_gradient(at_start, old_sets), theta_start, opts);
      result.bound = bound_report(old_trace, grad_sq, gaps, sigma, config.learning_rate);
    }

    accuracies.push_back(result.accuracy);
    report.phases.push_back(std::move(result));
    report.trace.insert(report.trace.end(), trace.steps.begin(), trace.steps.end());
    report.schedule.insert(report.schedule.end(), trace.schedule.begin(), trace.schedule.end());
  }

  const AccuracySummary summary = metrics(accuracies);
  report.avg = summary.avg;
  report.last = summary.last;
  for (const auto& [slot, ids] : memory.sample_ids()) report.memory[stream.class_order[slot]] = ids;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace bdrlab
