#include "bdrlab/checks.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "bdrlab/autodiff.hpp"
#include "bdrlab/balance.hpp"
#include "bdrlab/diagnostics.hpp"
#include "bdrlab/rng.hpp"

namespace bdrlab {

VerifyHooks VerifyHooks::library() {
  VerifyHooks h;
  h.compensation = [](std::span<const double> v) { return bdrlab::compensation(v); };
  h.ce_row = [](std::span<const double> z, std::size_t label) {
    const std::vector<double> zero(z.size(), 0.0);
    const std::vector<std::size_t> labels{label};
    return value_and_grad(
        [&](Var x) { return ce_with_offset(x, zero, labels); },
        Tensor({1, z.size()}, std::vector<double>(z.begin(), z.end())));
  };
  return h;
}

namespace {

template <class F>
CheckResult timed(std::string name, F&& body) {
  const auto start = std::chrono::steady_clock::now();
  CheckResult r;
  r.name = std::move(name);
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

Tensor random_tensor(Rng& rng, Shape shape, double sd = 1.0) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal(0.0, sd);
  return Tensor(std::move(shape), std::move(v));
}

// Random projection to a scalar, so every output entry reaches the loss.
Var project(Var y, const Tensor& weights) { return sum(mul(y, y.tape->constant(weights))); }

struct OpCase {
  std::string name;
  std::function<std::pair<ScalarFn, Tensor>(Rng&)> make;
};

std::vector<OpCase> op_cases() {
  auto dims = [](Rng& rng) { return std::pair<std::size_t, std::size_t>{2 + rng.below(4), 2 + rng.below(4)}; };
  std::vector<OpCase> cases;
  cases.push_back({"matmul(x, B)", [=](Rng& rng) {
                     auto [r, c] = dims(rng);
                     const std::size_t k = 2 + rng.below(4);
                     Tensor b = random_tensor(rng, {c, k}), w = random_tensor(rng, {r, k});
                     return std::pair{ScalarFn([=](Var x) { return project(matmul(x, x.tape->constant(b)), w); }),
                                      random_tensor(rng, {r, c})};
                   }});
  cases.push_back({"matmul(A, x)", [=](Rng& rng) {
                     auto [r, c] = dims(rng);
                     const std::size_t k = 2 + rng.below(4);
                     Tensor a = random_tensor(rng, {k, r}), w = random_tensor(rng, {k, c});
                     return std::pair{ScalarFn([=](Var x) { return project(matmul(x.tape->constant(a), x), w); }),
                                      random_tensor(rng, {r, c})};
                   }});
  cases.push_back({"add", [=](Rng& rng) {
                     auto [r, c] = dims(rng);
                     Tensor b = random_tensor(rng, {r, c}), w = random_tensor(rng, {r, c});
                     return std::pair{ScalarFn([=](Var x) { return project(add(x, x.tape->constant(b)), w); }),
                                      random_tensor(rng, {r, c})};
                   }});
  cases.push_back({"sub", [=](Rng& rng) {
                     auto [r, c] = dims(rng);
                     Tensor b = random_tensor(rng, {r, c}), w = random_tensor(rng, {r, c});
                     return std::pair{ScalarFn([=](Var x) { return project(sub(x.tape->constant(b), x), w); }),
                                      random_tensor(rng, {r, c})};
                   }});
  cases.push_back({"mul", [=](Rng& rng) {
                     auto [r, c] = dims(rng);
                     Tensor w = random_tensor(rng, {r, c});
                     return std::pair{ScalarFn([=](Var x) { return project(mul(x, x), w); }), random_tensor(rng, {r, c})};
                   }});
  cases.push_back({"scale", [=](Rng& rng) {
                     auto [r, c] = dims(rng);
                     const double f = rng.normal();
                     Tensor w = random_tensor(rng, {r, c});
                     return std::pair{ScalarFn([=](Var x) { return project(scale(x, f), w); }), random_tensor(rng, {r, c})};
                   }});
  cases.push_back({"add_row", [=](Rng& rng) {
                     auto [r, c] = dims(rng);
                     Tensor a = random_tensor(rng, {r, c}), w = random_tensor(rng, {r, c});
                     return std::pair{ScalarFn([=](Var x) { return project(add_row(x.tape->constant(a), x), w); }),
                                      random_tensor(rng, {1, c})};
                   }});
  cases.push_back({"relu", [=](Rng& rng) {
                     auto [r, c] = dims(rng);
                     Tensor w = random_tensor(rng, {r, c});
                     return std::pair{ScalarFn([=](Var x) { return project(relu(x), w); }), random_tensor(rng, {r, c})};
                   }});
  cases.push_back({"sum", [=](Rng& rng) {
                     auto [r, c] = dims(rng);
                     return std::pair{ScalarFn([=](Var x) { return sum(mul(x, x)); }), random_tensor(rng, {r, c})};
                   }});
  cases.push_back({"mean", [=](Rng& rng) {
                     auto [r, c] = dims(rng);
                     return std::pair{ScalarFn([=](Var x) { return mean(mul(x, x)); }), random_tensor(rng, {r, c})};
                   }});
  cases.push_back({"slice_cols", [=](Rng& rng) {
                     auto [r, c] = dims(rng);
                     const std::size_t b = rng.below(c), e = b + 1 + rng.below(c - b);
                     Tensor w = random_tensor(rng, {r, e - b});
                     return std::pair{ScalarFn([=](Var x) { return project(slice_cols(x, b, e), w); }),
                                      random_tensor(rng, {r, c})};
                   }});
  cases.push_back({"ce_with_offset", [=](Rng& rng) {
                     auto [r, c] = dims(rng);
                     std::vector<double> off(c);
                     for (double& o : off) o = std::log(0.05 + rng.uniform());
                     std::vector<std::size_t> labels(r);
                     for (auto& y : labels) y = rng.below(c);
                     return std::pair{ScalarFn([=](Var x) { return ce_with_offset(x, off, labels); }),
                                      random_tensor(rng, {r, c}, 2.0)};
                   }});
  cases.push_back({"weighted_ce_with_offset", [=](Rng& rng) {
                     auto [r, c] = dims(rng);
                     std::vector<double> off(c), wts(c);
                     for (double& o : off) o = std::log(0.05 + rng.uniform());
                     for (double& w : wts) w = 0.1 + 2.0 * rng.uniform();
                     std::vector<std::size_t> labels(r);
                     for (auto& y : labels) y = rng.below(c);
                     return std::pair{ScalarFn([=](Var x) { return weighted_ce_with_offset(x, off, wts, labels); }),
                                      random_tensor(rng, {r, c}, 2.0)};
                   }});
  cases.push_back({"softmax_kl", [=](Rng& rng) {
                     auto [r, c] = dims(rng);
                     Tensor teacher = random_tensor(rng, {r, c}, 2.0);
                     const double temp = 0.5 + 3.0 * rng.uniform();
                     return std::pair{ScalarFn([=](Var x) { return softmax_kl(x, teacher, temp); }),
                                      random_tensor(rng, {r, c}, 2.0)};
                   }});
  cases.push_back({"two-layer network", [=](Rng& rng) {
                     const std::size_t n = 3, d = 4, h = 5, k = 3;
                     Tensor input = random_tensor(rng, {n, d}), w2 = random_tensor(rng, {h, k}), b1 = random_tensor(rng, {1, h});
                     std::vector<double> off(k, 0.0);
                     std::vector<std::size_t> labels{0, 1, 2};
                     return std::pair{ScalarFn([=](Var w1) {
                                        Tape& t = *w1.tape;
                                        Var hidden = relu(add_row(matmul(t.constant(input), w1), t.constant(b1)));
                                        return ce_with_offset(matmul(hidden, t.constant(w2)), off, labels);
                                      }),
                                      random_tensor(rng, {d, h})};
                   }});
  return cases;
}

}  // namespace

CheckResult check_gradients(std::size_t instances_per_op, std::uint64_t seed) {
  return timed("gradient oracle", [&](CheckResult& r) {
    Rng root(seed);
    double worst = 0.0;
    std::string worst_op;
    std::size_t count = 0;
    for (const OpCase& op : op_cases()) {
      Rng rng = root.split(op.name);
      for (std::size_t i = 0; i < instances_per_op; ++i) {
        auto [f, x] = op.make(rng);
        const double err = finite_diff_check(f, x);
        ++count;
        if (err > worst) {
          worst = err;
          worst_op = op.name;
        }
      }
    }
    r.passed = worst < 1e-5;
    r.detail = std::to_string(count) + " instances, max relative error " + fmt(worst) + " (" + worst_op + ")";
  });
}

CheckResult check_exact_reductions(std::size_t trials, std::uint64_t seed) {
  return timed("exact reductions to CE", [&](CheckResult& r) {
    Rng rng(seed);
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      const std::size_t k = 2 + rng.below(8), n = 1 + rng.below(16);
      const Tensor logits = random_tensor(rng, {n, k}, 3.0);
      std::vector<std::size_t> labels(n);
      for (auto& y : labels) y = rng.below(k);
      Tape tape;
      const Var z = tape.constant(logits);
      const double plain = ce_with_offset(z, std::vector<double>(k, 0.0), labels).item();

      std::vector<double> skewed(k), omega(k);
      double s = 0.0, so = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        skewed[c] = 0.05 + rng.uniform();
        omega[c] = 0.05 + rng.uniform();
        s += skewed[c];
        so += omega[c];
      }
      for (std::size_t c = 0; c < k; ++c) {
        skewed[c] /= s;
        omega[c] /= so;
      }

      // Uniform pi_hat.
      OffsetSchedule uniform;
      uniform.psi = uniform.pi_init = uniform.pi_prime = uniform.pi_hat = std::vector<double>(k, 1.0 / static_cast<double>(k));
      worst = std::max(worst, std::abs(bdr_loss(z, labels, uniform).item() - plain));

      // tau = 0 with arbitrary priors.
      BdrHyper flat;
      flat.tau = 0.0;
      worst = std::max(worst, std::abs(bdr_loss(z, labels, init_schedule(skewed, omega, flat)).item() - plain));

      // m = 1 on balanced counts.
      BdrHyper pure;
      pure.m = 1.0;
      pure.m_prime = 1.0;
      const std::vector<std::size_t> counts(k, 1 + rng.below(50));
      worst = std::max(worst, std::abs(bdr_loss(z, labels, init_schedule(class_priors(counts), omega, pure)).item() - plain));
    }
    r.passed = worst <= 1e-12;
    r.detail = std::to_string(trials) + " trials x 3 reductions, max |difference| " + fmt(worst);
  });
}

CheckResult check_binary_closed_form(const VerifyHooks& hooks) {
  return timed("binary CE closed-form gradient", [&](CheckResult& r) {
    double worst = 0.0;
    std::size_t count = 0;
    for (int i = 0; i <= 400; ++i) {
      const double gap = -20.0 + 0.1 * i;
      for (double base : {-3.0, 0.0, 5.0}) {
        const double z1 = base + gap, z2 = base;
        const std::vector<double> z{z1, z2};
        const auto [value, grad] = hooks.ce_row(z, 0);
        const double expected = -1.0 / (1.0 + std::exp(z1 - z2));
        const double err = std::isfinite(grad[0]) ? std::abs(grad[0] - expected) : INFINITY;
        worst = std::max(worst, err);
        ++count;
      }
    }
    r.passed = worst <= 1e-10;
    r.detail = std::to_string(count) + " logit pairs, max |error| " + fmt(worst);
  });
}

CheckResult check_large_logits(const VerifyHooks& hooks) {
  return timed("large-logit CE gradient", [&](CheckResult& r) {
    double worst = 0.0;
    bool finite = true;
    for (double a : {-1000.0, -700.0, -50.0, 0.0, 50.0, 700.0, 1000.0}) {
      for (double b : {-1000.0, -300.0, 0.0, 300.0, 1000.0}) {
        const std::vector<double> z{a, b, 0.5 * (a + b)};
        for (std::size_t label = 0; label < 3; ++label) {
          const auto [value, grad] = hooks.ce_row(z, label);
          // Stable softmax minus one-hot as the reference.
          const double m = std::max({z[0], z[1], z[2]});
          double norm = 0.0;
          for (double v : z) norm += std::exp(v - m);
          finite = finite && std::isfinite(value);
          for (std::size_t j = 0; j < 3; ++j) {
            const double expected = std::exp(z[j] - m) / norm - (j == label ? 1.0 : 0.0);
            const double err = std::isfinite(grad[j]) ? std::abs(grad[j] - expected) : INFINITY;
            worst = std::max(worst, err);
          }
        }
      }
    }
    r.passed = finite && worst <= 1e-12;
    r.detail = std::string(finite ? "finite values" : "non-finite value") + ", max |gradient error| " + fmt(worst);
  });
}

CheckResult check_cauchy(std::size_t trials, std::uint64_t seed) {
  return timed("Cauchy gap identity", [&](CheckResult& r) {
    Rng rng(seed);
    double worst = 0.0;
    bool exact_zero = true;
    for (std::size_t t = 0; t < trials; ++t) {
      const std::size_t dim = 1 + rng.below(64);
      const double n = static_cast<double>(1 + rng.below(128));
      std::vector<double> a(dim), b(dim);
      for (double& v : a) v = rng.normal(0.0, 3.0);
      for (double& v : b) v = rng.normal(0.0, 3.0);
      double diff = 0.0;
      for (std::size_t i = 0; i < dim; ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
      worst = std::max(worst, std::abs(cauchy_check(a, b, n).gap - diff / (n * n)));
      exact_zero = exact_zero && cauchy_check(a, a, n).gap == 0.0;
    }
    r.passed = worst <= 1e-10 && exact_zero;
    r.detail = std::to_string(trials) + " pairs, max |gap - ||a-b||^2/N^2| " + fmt(worst) +
               (exact_zero ? ", gap exactly 0 for a == b" : ", nonzero gap for a == b");
  });
}

CheckResult check_compensation(const VerifyHooks& hooks, std::uint64_t seed) {
  return timed("compensation monotonicity", [&](CheckResult& r) {
    Rng rng(seed);
    std::size_t violations = 0, trials = 200;
    double sum_err = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      const std::size_t k = 2 + rng.below(9);
      std::vector<double> var(k);
      for (double& v : var) v = std::exp(rng.normal(0.0, 2.0));
      const auto w = hooks.compensation(var);
      double s = 0.0;
      for (double x : w) s += x;
      sum_err = std::max(sum_err, std::abs(s - 1.0));
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
          if (var[i] < var[j] && !(w[i] > w[j])) ++violations;
    }
    r.passed = violations == 0 && sum_err <= 1e-12;
    r.detail = std::to_string(trials) + " variance vectors, " + std::to_string(violations) +
               " ordering violations, max |sum - 1| " + fmt(sum_err);
  });
}

CheckResult check_lemma1(std::size_t problems, std::uint64_t seed) {
  return timed("adjusted-risk decisions", [&](CheckResult& r) {
    Rng rng(seed);
    std::size_t agree = 0;
    for (std::size_t p = 0; p < problems; ++p) {
      const std::size_t k = 2 + rng.below(4), xs = 2 + rng.below(11);
      std::vector<std::vector<double>> lik(k, std::vector<double>(xs));
      for (auto& row : lik) {
        double s = 0.0;
        for (double& v : row) s += (v = 0.01 + rng.uniform());
        for (double& v : row) v /= s;
      }
      // Priors spread geometrically up to a 20:1 ratio.
      const double ratio = 1.0 + 19.0 * rng.uniform();
      std::vector<double> priors(k);
      double s = 0.0;
      for (std::size_t y = 0; y < k; ++y) s += (priors[y] = std::pow(ratio, -static_cast<double>(y) / static_cast<double>(k - 1)));
      for (double& v : priors) v /= s;
      rng.shuffle(priors);
      if (lemma1_oracle(lik, priors).equivalent) ++agree;
    }
    // Constructed case: P(x|1) > P(x|0) but the 19:1 prior flips the plain posterior.
    const Lemma1Result skew = lemma1_oracle({{0.4, 0.6}, {0.6, 0.4}}, std::vector<double>{0.95, 0.05});
    r.passed = agree == problems && skew.equivalent && !skew.unadjusted_equivalent;
    r.detail = std::to_string(agree) + "/" + std::to_string(problems) + " random problems agree; constructed case " +
               (skew.unadjusted_equivalent ? "did not separate" : "separates") + " the plain risk";
  });
}

CheckResult check_hessian(std::size_t trials, std::uint64_t seed) {
  return timed("Hessian top eigenvalue", [&](CheckResult& r) {
    Rng rng(seed);
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      const std::size_t n = 2 + rng.below(19);
      Eigen::MatrixXd b(n, n);
      for (Eigen::Index i = 0; i < b.rows(); ++i)
        for (Eigen::Index j = 0; j < b.cols(); ++j) b(i, j) = rng.normal();
      const Eigen::MatrixXd h = b.transpose() * b / static_cast<double>(n);
      const double exact = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h).eigenvalues().maxCoeff();
      std::vector<double> theta(n);
      for (double& v : theta) v = rng.normal();
      GradientFn grad = [&](std::span<const double> x) {
        std::vector<double> g(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) g[i] += h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * x[j];
        return g;
      };
      HessianOptions opts;
      opts.max_iters = 5000;
      opts.tol = 1e-10;
      opts.seed = t;
      worst = std::max(worst, std::abs(hessian_top_eigen(grad, theta, opts).value - exact) / exact);
    }
    r.passed = worst < 1e-3;
    r.detail = std::to_string(trials) + " PSD quadratics, max relative error " + fmt(worst);
  });
}

CheckResult check_quadratic_toy(std::size_t trials, std::uint64_t seed) {
  return timed("bound on the quadratic toy", [&](CheckResult& r) {
    Rng rng(seed);
    double min_margin = INFINITY;
    for (std::size_t t = 0; t < trials; ++t) {
      const std::size_t n = 2 + rng.below(7);
      std::vector<std::vector<double>> h(n, std::vector<double>(n, 0.0));
      std::vector<std::vector<double>> b(n, std::vector<double>(n));
      for (auto& row : b)
        for (double& v : row) v = rng.normal();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t l = 0; l < n; ++l) h[i][j] += b[l][i] * b[l][j] / static_cast<double>(n);
      std::vector<double> star(n), target(n);
      for (double& v : star) v = rng.normal();
      for (double& v : target) v = rng.normal(0.0, 3.0);
      const QuadraticToy toy = analytic_quadratic_toy(h, star, target, 0.05 + 0.3 * rng.uniform(), 5 + rng.below(60));
      min_margin = std::min(min_margin, toy.bound - toy.f_max);
    }
    r.passed = min_margin >= 0.0;
    r.detail = std::to_string(trials) + " toys, min (bound - F_max) " + fmt(min_margin);
  });
}

std::vector<CheckResult> run_verify(const VerifyHooks& hooks) {
  return {check_gradients(),
          check_exact_reductions(),
          check_binary_closed_form(hooks),
          check_large_logits(hooks),
          check_cauchy(),
          check_compensation(hooks),
          check_lemma1(),
          check_hessian(),
          check_quadratic_toy()};
}

}  // namespace bdrlab
