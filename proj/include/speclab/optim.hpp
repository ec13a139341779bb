#pragma once

// Optimizer zoo and convergence-rate harness: full-batch deterministic
// runs with divergence detection, the 2-D quadratic experiment, the
// curvature sweep, Newton convergence checks, and the spiral second-order
// grid study.

#include <Eigen/Eigenvalues>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <thread>

#include "speclab/attack.hpp"
#include "speclab/autodiff.hpp"
#include "speclab/deform.hpp"
#include "speclab/net.hpp"

namespace speclab {

enum class OptimizerKind {
  Gd,
  Nesterov,
  HeavyBall,
  AdamLike,
  NewtonDamped,
  CubicNewton,
  MuonToy,
  DiagHessian
};

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::Gd: return "gd";
    case OptimizerKind::Nesterov: return "nesterov";
    case OptimizerKind::HeavyBall: return "heavy-ball";
    case OptimizerKind::AdamLike: return "adam-like";
    case OptimizerKind::NewtonDamped: return "newton-damped";
    case OptimizerKind::CubicNewton: return "cubic-newton";
    case OptimizerKind::MuonToy: return "muon-toy";
    case OptimizerKind::DiagHessian: return "diag-hessian";
  }
  return "gd";
}

inline bool optimizer_needs_hessian(OptimizerKind k) {
  return k == OptimizerKind::NewtonDamped || k == OptimizerKind::CubicNewton ||
         k == OptimizerKind::DiagHessian;
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Gd;
  double lr = 0.1;
  double momentum = 0.9;     // nesterov / heavy-ball / muon
  double damping = 0.0;      // newton-damped / diag-hessian
  double cubic_sigma = 1.0;  // cubic-newton
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;  // adam-like
};

enum class Outcome { ReachedTarget, Diverged, Exhausted };

inline std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::ReachedTarget: return "reached-target";
    case Outcome::Diverged: return "diverged";
    case Outcome::Exhausted: return "exhausted";
  }
  return "exhausted";
}

struct StepStat {
  double loss = 0.0;
  double grad_norm = 0.0;
  double metric = 0.0;  // accuracy for logistic tasks
};

struct RunRecord {
  std::vector<StepStat> steps;
  int steps_taken = 0;
  Outcome outcome = Outcome::Exhausted;
  int diverged_at = -1;
  double final_loss = 0.0;
  double final_metric = 0.0;
  double min_loss = std::numeric_limits<double>::infinity();
  double metric_at_min_loss = 0.0;
  DenseNetwork final_net;
};

struct RunConfig {
  int max_steps = 1000;
  double target_loss = std::numeric_limits<double>::quiet_NaN();
  double target_metric = std::numeric_limits<double>::quiet_NaN();
  bool train_injected = true;
  int hessian_cap = kDefaultHessianCap;
  int stall_window = 0;  // 0 disables; otherwise stop after this many steps without progress
  double stall_eps = 1e-12;
};

inline double classification_accuracy(const DenseNetwork& net, const Dataset& data) {
  int hits = 0;
  for (const auto& s : data) {
    const double f = forward(net, s.x);
    if ((f >= 0 && s.y > 0) || (f < 0 && s.y < 0)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

/// U V^T over the numerical rank of b; empty when b has no rank.
inline Matrix muon_orthogonal_factor(const Matrix& b) {
  const auto f = svd(b);
  const int r = f.numerical_rank();
  if (r == 0) return Matrix();
  return f.left.leftCols(r) * f.right.leftCols(r).transpose();
}

/// One Muon update: heavy-ball momentum, then a step along the orthogonal
/// factor of the momentum (exact SVD at toy scale). A zero momentum matrix
/// skips the update since the factor is undefined.
inline Matrix muon_toy_step(Matrix& momentum, const Matrix& grad, const Matrix& weight,
                            double lr, double beta) {
  momentum = beta * momentum + (1 - beta) * grad;
  if (momentum.norm() < 1e-300) return weight;
  const Matrix o = muon_orthogonal_factor(momentum);
  if (o.size() == 0) return weight;
  return weight - lr * o;
}

inline std::vector<char> trainable_mask(const DenseNetwork& net, bool train_injected) {
  std::vector<char> mask(parameter_count(net), 1);
  if (net.is_chain() && !train_injected) {
    for (const auto& g : parameter_groups(net))
      if (g.layer_index >= 0 && net.layers[g.layer_index].injected)
        for (int i = 0; i < g.size; ++i) mask[g.offset + i] = 0;
  }
  return mask;
}

namespace detail {

/// Pseudo-solve (H + damping I) s = g through an eigendecomposition;
/// near-singular modes are dropped.
inline Vector damped_solve(const Eigen::SelfAdjointEigenSolver<Matrix>& es, const Vector& g,
                           double damping) {
  const Vector& lam = es.eigenvalues();
  const Vector c = es.eigenvectors().transpose() * g;
  const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
  Vector w(c.size());
  for (int i = 0; i < c.size(); ++i) {
    const double d = lam[i] + damping;
    w[i] = std::abs(d) > 1e-12 * scale ? c[i] / d : 0.0;
  }
  return es.eigenvectors() * w;
}

/// Cubic-regularized Newton step: s = -(H + lambda I)^-1 g with
/// lambda = (sigma/2) ||s||, found by bisection on the 1-D secular equation.
inline Vector cubic_step(const Eigen::SelfAdjointEigenSolver<Matrix>& es, const Vector& g,
                         double sigma) {
  const Vector& lam = es.eigenvalues();
  const Vector c = es.eigenvectors().transpose() * g;
  const double lam_min = lam.minCoeff();
  const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
  auto radius = [&](double l) {
    double r2 = 0.0;
    for (int i = 0; i < c.size(); ++i) {
      const double d = lam[i] + l;
      if (std::abs(d) > 1e-300) r2 += (c[i] / d) * (c[i] / d);
    }
    return std::sqrt(r2);
  };
  double lo = std::max(0.0, -lam_min) + 1e-10 * scale;
  auto gap = [&](double l) { return l - 0.5 * sigma * radius(l); };
  double hi = lo + 1.0;
  while (gap(hi) < 0 && hi < 1e300) hi *= 4.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (gap(mid) < 0 ? lo : hi) = mid;
  }
  const double l = 0.5 * (lo + hi);
  Vector w(c.size());
  for (int i = 0; i < c.size(); ++i) w[i] = -c[i] / (lam[i] + l);
  return es.eigenvectors() * w;
}

inline Matrix reshape_group(const DenseNetwork& net, const ParamGroup& g, const Vector& flat) {
  int rows = 0, cols = 0;
  if (g.layer_index >= 0) {
    const auto& layer = net.layers[g.layer_index];
    if (layer.toeplitz()) {
      rows = layer.kernel_size;
      cols = 1;
    } else {
      rows = layer.rows();
      cols = layer.cols();
    }
  } else if (g.name == "readout") {
    rows = g.size;
    cols = 1;
  } else {
    rows = static_cast<int>(net.attn_query.rows());
    cols = static_cast<int>(net.attn_query.cols());
  }
  Matrix m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = flat[g.offset + r + rows * c];
  return m;
}

}  // namespace detail

/// Deterministic full-batch optimization run. Divergence: the loss exceeds
/// twice its running minimum after at least one improving step, or turns
/// non-finite.
inline RunRecord run(const DenseNetwork& net0, const Dataset& data, LossKind kind,
                     const OptimizerConfig& opt, const RunConfig& cfg) {
  DenseNetwork net = net0;
  Vector theta = get_parameters(net);
  const int n = static_cast<int>(theta.size());
  const std::vector<char> mask = trainable_mask(net, cfg.train_injected);
  std::vector<int> trainable;
  for (int i = 0; i < n; ++i)
    if (mask[i]) trainable.push_back(i);

  Vector velocity = Vector::Zero(n);     // heavy-ball
  Vector theta_prev = theta;             // nesterov
  Vector adam_m = Vector::Zero(n), adam_v = Vector::Zero(n);
  const auto groups = parameter_groups(net);
  std::vector<Matrix> muon_momentum;
  if (opt.kind == OptimizerKind::MuonToy)
    for (const auto& g : groups) muon_momentum.push_back(detail::reshape_group(net, g, Vector::Zero(n)));

  RunRecord rec;
  double running_min = std::numeric_limits<double>::infinity();
  double initial_loss = 0.0;
  bool improved = false;
  int since_progress = 0;
  const bool want_metric = kind == LossKind::Logistic;

  for (int t = 0;; ++t) {
    set_parameters(net, theta);
    const double loss = dataset_loss(net, data, kind);
    const Vector grad = gradient(net, data, kind);
    const double metric = want_metric ? classification_accuracy(net, data) : 0.0;
    rec.steps.push_back({loss, grad.norm(), metric});
    rec.steps_taken = t;

    if (t == 0) {
      require(std::isfinite(loss), "run: non-finite loss at step 0");
      initial_loss = loss;
    }
    if (!std::isfinite(loss)) {
      rec.outcome = Outcome::Diverged;
      rec.diverged_at = t;
      break;
    }
    if (loss < rec.min_loss) {
      rec.min_loss = loss;
      rec.metric_at_min_loss = metric;
      since_progress = 0;
    } else if (++since_progress > cfg.stall_window && cfg.stall_window > 0) {
      rec.outcome = Outcome::Exhausted;
      break;
    }
    if (!std::isnan(cfg.target_loss) && loss <= cfg.target_loss) {
      rec.outcome = Outcome::ReachedTarget;
      break;
    }
    if (!std::isnan(cfg.target_metric) && want_metric && metric >= cfg.target_metric) {
      rec.outcome = Outcome::ReachedTarget;
      break;
    }
    if (improved && loss > 2.0 * running_min) {
      rec.outcome = Outcome::Diverged;
      rec.diverged_at = t;
      break;
    }
    if (loss < running_min) {
      if (t > 0 && loss < initial_loss) improved = true;
      running_min = loss;
    }
    if (t == cfg.max_steps) {
      rec.outcome = Outcome::Exhausted;
      break;
    }

    // Parameter update.
    Vector g = grad;
    for (int i = 0; i < n; ++i)
      if (!mask[i]) g[i] = 0.0;

    switch (opt.kind) {
      case OptimizerKind::Gd: {
        theta -= opt.lr * g;
        break;
      }
      case OptimizerKind::HeavyBall: {
        velocity = opt.momentum * velocity - opt.lr * g;
        theta += velocity;
        break;
      }
      case OptimizerKind::Nesterov: {
        const Vector lookahead = theta + opt.momentum * (theta - theta_prev);
        set_parameters(net, lookahead);
        Vector gl = gradient(net, data, kind);
        for (int i = 0; i < n; ++i)
          if (!mask[i]) gl[i] = 0.0;
        theta_prev = theta;
        theta = lookahead - opt.lr * gl;
        break;
      }
      case OptimizerKind::AdamLike: {
        adam_m = opt.beta1 * adam_m + (1 - opt.beta1) * g;
        adam_v = opt.beta2 * adam_v.array().matrix() +
                 (1 - opt.beta2) * g.cwiseProduct(g);
        const double bc1 = 1 - std::pow(opt.beta1, t + 1);
        const double bc2 = 1 - std::pow(opt.beta2, t + 1);
        for (int i = 0; i < n; ++i) {
          if (!mask[i]) continue;
          const double mh = adam_m[i] / bc1, vh = adam_v[i] / bc2;
          theta[i] -= opt.lr * mh / (std::sqrt(vh) + opt.eps);
        }
        break;
      }
      case OptimizerKind::NewtonDamped:
      case OptimizerKind::CubicNewton:
      case OptimizerKind::DiagHessian: {
        const Matrix h = full_hessian(net, data, kind, cfg.hessian_cap);
        if (opt.kind == OptimizerKind::DiagHessian) {
          for (int i : trainable)
            theta[i] -= opt.lr * g[i] / (std::abs(h(i, i)) + opt.damping + 1e-12);
          break;
        }
        const int nt = static_cast<int>(trainable.size());
        Matrix hs(nt, nt);
        Vector gs(nt);
        for (int a = 0; a < nt; ++a) {
          gs[a] = g[trainable[a]];
          for (int b = 0; b < nt; ++b) hs(a, b) = h(trainable[a], trainable[b]);
        }
        Eigen::SelfAdjointEigenSolver<Matrix> es(hs);
        Vector step;
        if (opt.kind == OptimizerKind::NewtonDamped)
          step = -detail::damped_solve(es, gs, opt.damping);
        else
          step = detail::cubic_step(es, gs, opt.cubic_sigma);
        for (int a = 0; a < nt; ++a) theta[trainable[a]] += opt.lr * step[a];
        break;
      }
      case OptimizerKind::MuonToy: {
        for (size_t gi = 0; gi < groups.size(); ++gi) {
          const auto& grp = groups[gi];
          if (grp.layer_index >= 0 && !cfg.train_injected &&
              net.layers[grp.layer_index].injected)
            continue;
          const Matrix gm = detail::reshape_group(net, grp, g);
          const Matrix w = detail::reshape_group(net, grp, theta);
          const Matrix updated = muon_toy_step(muon_momentum[gi], gm, w, opt.lr, opt.momentum);
          const int rows = static_cast<int>(updated.rows());
          for (int c = 0; c < updated.cols(); ++c)
            for (int rr = 0; rr < rows; ++rr)
              theta[grp.offset + rr + rows * c] = updated(rr, c);
        }
        break;
      }
    }
  }

  rec.final_loss = rec.steps.back().loss;
  rec.final_metric = rec.steps.back().metric;
  set_parameters(net, theta);
  rec.final_net = net;
  return rec;
}

// ---------------------------------------------------------------------------
// 2-D quadratic experiment (half (s1 x^2 + s2 y^2)).

struct QuadraticRun {
  int steps = 0;
  Outcome outcome = Outcome::Exhausted;
};

inline QuadraticRun quadratic_descent(double s1, double s2, double lr, double grad_eps,
                                      int max_steps, OptimizerKind kind = OptimizerKind::Gd,
                                      double beta = 0.9) {
  require(s1 > 0 && s2 > 0, "quadratic_descent: curvatures must be positive");
  require(grad_eps > 0, "quadratic_descent: eps must be positive");
  Eigen::Vector2d theta(1.0, 1.0), prev = theta;
  double running_min = std::numeric_limits<double>::infinity();
  bool improved = false;
  double initial = 0.5 * (s1 + s2);
  QuadraticRun out;
  for (int t = 0;; ++t) {
    const Eigen::Vector2d grad(s1 * theta[0], s2 * theta[1]);
    const double loss = 0.5 * (s1 * theta[0] * theta[0] + s2 * theta[1] * theta[1]);
    if (!std::isfinite(loss)) {
      out.outcome = Outcome::Diverged;
      out.steps = t;
      return out;
    }
    if (grad.norm() <= grad_eps) {
      out.outcome = Outcome::ReachedTarget;
      out.steps = t;
      return out;
    }
    if (improved && loss > 2.0 * running_min) {
      out.outcome = Outcome::Diverged;
      out.steps = t;
      return out;
    }
    if (loss < running_min) {
      if (t > 0 && loss < initial) improved = true;
      running_min = loss;
    }
    if (t == max_steps) {
      out.steps = t;
      return out;
    }
    if (kind == OptimizerKind::Nesterov) {
      const Eigen::Vector2d look = theta + beta * (theta - prev);
      const Eigen::Vector2d gl(s1 * look[0], s2 * look[1]);
      prev = theta;
      theta = look - lr * gl;
    } else {
      theta -= lr * grad;
    }
  }
}

/// Steps for gradient descent at the maximal convergent rate eta = 1/s1 to
/// reach gradient norm <= eps on the 2-D quadratic.
inline int quadratic_experiment(double s1, double s2, double eps, int max_steps = 2000000) {
  require(s1 >= s2 && s2 > 0, "quadratic_experiment: need s1 >= s2 > 0");
  const auto r = quadratic_descent(s1, s2, 1.0 / s1, eps, max_steps);
  require(r.outcome == Outcome::ReachedTarget, "quadratic_experiment: did not converge");
  return r.steps;
}

// ---------------------------------------------------------------------------
// Curvature sweep (toy-network iteration experiment).

inline DenseNetwork make_toy_net(const std::string& arch, std::uint64_t seed) {
  if (arch == "mlp") return make_mlp({6, 6, 6, 6}, ActivationKind::Relu, seed);
  if (arch == "cnn1d") return make_cnn1d(6, 3, 2, ActivationKind::Tanh, seed);
  if (arch == "attention") return make_attention(6, 6, seed);
  throw std::invalid_argument("make_toy_net: unknown architecture " + arch);
}

/// Scale one layer of the toy network so its leading singular value equals
/// the target (Toeplitz layers scale their shared taps instead).
inline void set_sweep_sigma(DenseNetwork& net, double target) {
  if (net.architecture == Architecture::Attention) {
    net.attn_value = with_top_sigma(net.attn_value, target);
    return;
  }
  LayerSpec& layer = net.layers[1];
  if (layer.toeplitz()) {
    const double s1 = sigma_value(layer.weight, 1);
    layer.taps *= target / s1;
    layer.materialize();
  } else {
    layer.weight = with_top_sigma(layer.weight, target);
  }
}

struct CurvatureRow {
  std::string arch;
  std::uint64_t seed = 0;
  double sigma_target = 0.0;
  double sigma1_hessian = 0.0;
  int steps = 0;
};

/// Spearman rank correlation (average ranks on ties).
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "spearman: need matched samples");
  auto ranks = [](const std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    int i = 0;
    while (i < n) {
      int j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * (i + j) + 1.0;
      for (int k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  double mx = 0, my = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= rx.size();
  my /= ry.size();
  double num = 0, dx = 0, dy = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  if (dx == 0 || dy == 0) return 0.0;
  return num / std::sqrt(dx * dy);
}

/// One architecture x seed sweep: deform one layer to each sigma target,
/// measure sigma_1 of the loss Hessian at init, train for max_steps with
/// lr = 0.1 / sigma_1(H), then count steps to the worst final loss across
/// the sweep (the shared convergence target).
inline std::vector<CurvatureRow> curvature_sweep(const std::string& arch,
                                                 const std::vector<double>& sigma_targets,
                                                 const std::vector<std::uint64_t>& seeds,
                                                 int max_steps = 1000) {
  std::vector<CurvatureRow> rows;
  for (std::uint64_t seed : seeds) {
    const DenseNetwork base = make_toy_net(arch, seed);
    const Dataset data = gaussian_regression_dataset(128, base.input_dim(), derive_seed(seed, 9));
    std::vector<RunRecord> records;
    std::vector<double> sig_h;
    for (double target : sigma_targets) {
      DenseNetwork net = base;
      set_sweep_sigma(net, target);
      const Matrix h = full_hessian(net, data, LossKind::Mse);
      const double s1 = spectral_norm(h);
      OptimizerConfig opt;
      opt.kind = OptimizerKind::Gd;
      opt.lr = 0.1 / s1;
      RunConfig cfg;
      cfg.max_steps = max_steps;
      records.push_back(run(net, data, LossKind::Mse, opt, cfg));
      sig_h.push_back(s1);
    }
    double worst_final = 0.0;
    for (const auto& r : records) worst_final = std::max(worst_final, r.final_loss);
    for (size_t i = 0; i < sigma_targets.size(); ++i) {
      int steps = max_steps;
      for (size_t t = 0; t < records[i].steps.size(); ++t)
        if (records[i].steps[t].loss <= worst_final) {
          steps = static_cast<int>(t);
          break;
        }
      rows.push_back({arch, seed, sigma_targets[i], sig_h[i], steps});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Newton convergence checks on the cubic-perturbed strongly convex family
// f(theta) = mu/2 ||theta||^2 + c/6 sum theta_i^3 (minimum at 0, L2 = c).

struct NewtonCheck {
  std::vector<double> errors;
  std::vector<double> ratios;  // e_{k+1} / e_k^2
  int steps_to_eps = 0;
  double psi = 0.0;            // worst-case psi(rho) = L2 / (2 (mu - L2 rho))
  int formula_steps = 0;       // complexity formula evaluated at the worst-case psi
  int formula_steps_effective = 0;  // same formula at the measured contraction
  bool escaped_basin = false;
};

inline int newton_complexity_formula(double psi, double e0, double eps) {
  if (psi <= 0 || psi * e0 >= 1) return 0;
  const double ratio = std::log(1.0 / (psi * eps)) / std::log(1.0 / (psi * e0));
  return static_cast<int>(std::ceil(std::log2(ratio)));
}

inline NewtonCheck newton_cubic_check(int dim, double mu, double c, double rho, double e0,
                                      double eps, int max_steps = 60) {
  require(mu > 0 && c >= 0 && eps > 0, "newton_cubic_check: bad constants");
  if (c > 0) require(rho < mu / c, "newton_cubic_check: rho outside the invertibility ball");
  require(e0 <= rho || c == 0, "newton_cubic_check: start inside the rho-ball");

  NewtonCheck out;
  out.psi = c > 0 ? c / (2 * (mu - c * rho)) : 0.0;
  Vector theta = Vector::Constant(dim, e0 / std::sqrt(static_cast<double>(dim)));
  out.errors.push_back(theta.norm());
  out.steps_to_eps = max_steps;
  for (int k = 0; k < max_steps; ++k) {
    for (int i = 0; i < dim; ++i) {
      const double gradi = mu * theta[i] + 0.5 * c * theta[i] * theta[i];
      const double hessi = mu + c * theta[i];
      theta[i] -= gradi / hessi;
    }
    const double e = theta.norm();
    out.errors.push_back(e);
    const double prev = out.errors[out.errors.size() - 2];
    if (prev > 0) out.ratios.push_back(e / (prev * prev));
    if (e > rho && c > 0) out.escaped_basin = true;
    if (e <= eps) {
      out.steps_to_eps = k + 1;
      break;
    }
  }
  out.formula_steps = newton_complexity_formula(out.psi, e0, eps);
  double measured = 0.0;
  for (size_t i = 0; i + 1 < out.ratios.size(); ++i) measured = std::max(measured, out.ratios[i]);
  if (out.ratios.size() == 1) measured = out.ratios[0];
  out.formula_steps_effective = newton_complexity_formula(measured, e0, eps);
  return out;
}

// ---------------------------------------------------------------------------
// Spiral second-order grid study.

struct SpiralGridRow {
  OptimizerKind kind = OptimizerKind::Gd;
  double lr = 0.0;
  double damping = 0.0;      // newton / natural-style damping
  double cubic_sigma = 0.0;  // cubic-newton only
  double accuracy = 0.0;     // at the minimum-loss iterate
  double min_loss = 0.0;
  Outcome outcome = Outcome::Exhausted;
  bool stable = false;  // no divergence and the loss actually improved
};

struct SpiralGridSummary {
  std::vector<SpiralGridRow> rows;
  std::map<OptimizerKind, double> best_accuracy;
  std::map<OptimizerKind, double> best_stable_lr;
};

struct SpiralGridOptions {
  std::uint64_t seed = 1;
  bool defended = false;
  double alpha = 1e5;
  int first_order_steps = 1000;
  int second_order_steps = 300;
  int stall_window = 80;
  int jobs = static_cast<int>(std::thread::hardware_concurrency());
  std::vector<OptimizerKind> optimizers = {
      OptimizerKind::Gd,        OptimizerKind::Nesterov,    OptimizerKind::HeavyBall,
      OptimizerKind::AdamLike,  OptimizerKind::NewtonDamped, OptimizerKind::CubicNewton,
      OptimizerKind::MuonToy,   OptimizerKind::DiagHessian};
};

inline std::vector<double> log_lr_grid(int from_exp, int to_exp) {
  std::vector<double> g;
  for (int e = from_exp; e <= to_exp; ++e) g.push_back(std::pow(10.0, e));
  return g;
}

/// Run a list of tasks on a small worker pool; results keyed by index so
/// aggregation is deterministic regardless of scheduling.
inline void parallel_for_tasks(int jobs, int count, const std::function<void(int)>& fn) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < std::min(jobs, count); ++w)
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

inline SpiralGridSummary second_order_grid(const SpiralGridOptions& options) {
  const Dataset data = spiral_dataset(200, 0.05, derive_seed(options.seed, 1));
  DenseNetwork net = make_mlp({2, 8, 8}, ActivationKind::Relu, derive_seed(options.seed, 2));
  if (options.defended) {
    DeformationPlan plan;
    plan.layer_indices = {1};
    plan.alpha = options.alpha;
    plan.top_k = 1;
    net = spectral_deform(net, plan).deformed;
  }

  struct Task {
    OptimizerConfig opt;
    int steps;
  };
  std::vector<Task> tasks;
  for (OptimizerKind kind : options.optimizers) {
    const bool second = optimizer_needs_hessian(kind);
    const auto lrs = second && kind != OptimizerKind::DiagHessian ? log_lr_grid(-9, -2)
                                                                  : log_lr_grid(-9, -1);
    std::vector<double> dampings{0.0};
    std::vector<double> sigmas{0.0};
    if (kind == OptimizerKind::NewtonDamped) dampings = {0.1, 0.3, 1.0, 3.0};
    if (kind == OptimizerKind::DiagHessian) dampings = {1e-3, 1e-2, 1e-1};
    if (kind == OptimizerKind::CubicNewton) sigmas = {0.1, 0.5, 1.0, 5.0};
    for (double lr : lrs)
      for (double damping : dampings)
        for (double cs : sigmas) {
          OptimizerConfig opt;
          opt.kind = kind;
          opt.lr = lr;
          opt.damping = damping;
          opt.cubic_sigma = cs;
          tasks.push_back({opt, second ? options.second_order_steps : options.first_order_steps});
        }
  }

  SpiralGridSummary summary;
  summary.rows.resize(tasks.size());
  parallel_for_tasks(options.jobs, static_cast<int>(tasks.size()), [&](int i) {
    RunConfig cfg;
    cfg.max_steps = tasks[i].steps;
    cfg.stall_window = options.stall_window;
    const RunRecord rec = run(net, data, LossKind::Logistic, tasks[i].opt, cfg);
    SpiralGridRow row;
    row.kind = tasks[i].opt.kind;
    row.lr = tasks[i].opt.lr;
    row.damping = tasks[i].opt.damping;
    row.cubic_sigma = tasks[i].opt.cubic_sigma;
    row.accuracy = rec.metric_at_min_loss;
    row.min_loss = rec.min_loss;
    row.outcome = rec.outcome;
    row.stable = rec.outcome != Outcome::Diverged && rec.min_loss < 0.95 * rec.steps.front().loss;
    summary.rows[i] = row;
  });

  for (const auto& row : summary.rows) {
    auto& acc = summary.best_accuracy[row.kind];
    acc = std::max(acc, row.accuracy);
    if (row.stable) {
      auto& lr = summary.best_stable_lr[row.kind];
      lr = std::max(lr, row.lr);
    }
  }
  return summary;
}

}  // namespace speclab
