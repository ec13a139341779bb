#pragma once

// Exact derivatives for the network zoo: hand-written reverse-mode
// backprop templated on the scalar type, with forward-mode duals pushed
// through it for Hessian-vector products and third-order directional
// slices. Everything is deterministic and allocation-light.

#include <vector>

#include "speclab/dual.hpp"
#include "speclab/net.hpp"

namespace speclab {

enum class LossKind { RawOutput, Mse, Logistic };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::RawOutput: return "raw-output";
    case LossKind::Mse: return "mse";
    case LossKind::Logistic: return "logistic";
  }
  return "raw-output";
}

// ---------------------------------------------------------------------------
// Templated activation / loss primitives.

template <class T>
T act_value_t(ActivationKind k, const T& x) {
  using std::exp;
  using std::tanh;
  switch (k) {
    case ActivationKind::Identity: return x;
    case ActivationKind::Relu: return value_of(x) > 0 ? x : T(0.0);
    case ActivationKind::Gelu: return 0.5 * x * (1.0 + erf_t(x * M_SQRT1_2));
    case ActivationKind::Tanh: return tanh(x);
    default: throw std::invalid_argument("act_value_t: not an element-wise activation");
  }
}

template <class T>
T act_deriv_t(ActivationKind k, const T& x) {
  using std::exp;
  using std::tanh;
  switch (k) {
    case ActivationKind::Identity: return T(1.0);
    case ActivationKind::Relu: return value_of(x) > 0 ? T(1.0) : T(0.0);
    case ActivationKind::Gelu:
      return 0.5 * (1.0 + erf_t(x * M_SQRT1_2)) +
             x * exp(-0.5 * x * x) * (1.0 / std::sqrt(2.0 * M_PI));
    case ActivationKind::Tanh: {
      const T t = tanh(x);
      return 1.0 - t * t;
    }
    default: throw std::invalid_argument("act_deriv_t: not an element-wise activation");
  }
}

template <class T>
T softplus_t(const T& t) {
  using std::exp;
  using std::log1p;
  if (value_of(t) > 0) return t + log1p(exp(-t));
  return log1p(exp(t));
}

template <class T>
T loss_value_t(LossKind k, const T& f, double y) {
  switch (k) {
    case LossKind::RawOutput: return f;
    case LossKind::Mse: {
      const T r = f - y;
      return 0.5 * r * r;
    }
    case LossKind::Logistic: return softplus_t((-y) * f);
  }
  return f;
}

/// dL/df.
template <class T>
T loss_grad_t(LossKind k, const T& f, double y) {
  using std::exp;
  switch (k) {
    case LossKind::RawOutput: return T(1.0);
    case LossKind::Mse: return f - y;
    case LossKind::Logistic: {
      const T t = y * f;
      if (value_of(t) > 0) {
        const T e = exp(-t);
        return (-y) * e / (1.0 + e);
      }
      return (-y) / (1.0 + exp(t));
    }
  }
  return T(1.0);
}

// ---------------------------------------------------------------------------
// Chain (MLP / CNN) evaluation core.

template <class T>
struct ChainWork {
  std::vector<std::vector<T>> z;  // z[0] = input, z[l+1] = post-activation of layer l
  std::vector<std::vector<T>> h;  // pre-activation of layer l
  std::vector<T> back, back_next;
};

template <class T>
T chain_output_t(const DenseNetwork& net, const std::vector<T>& p, const Vector& x,
                 ChainWork<T>& w) {
  const int num_layers = static_cast<int>(net.layers.size());
  w.z.resize(num_layers + 1);
  w.h.resize(num_layers);
  w.z[0].assign(x.data(), x.data() + x.size());
  int off = 0;
  for (int l = 0; l < num_layers; ++l) {
    const LayerSpec& layer = net.layers[l];
    const int rows = layer.rows(), cols = layer.cols();
    const std::vector<T>& zin = w.z[l];
    std::vector<T>& h = w.h[l];
    h.assign(rows, T(0.0));
    if (layer.toeplitz()) {
      const int half = (layer.kernel_size - 1) / 2;
      for (int i = 0; i < rows; ++i)
        for (int u = 0; u < layer.kernel_size; ++u) {
          const int j = i + u - half;
          if (j >= 0 && j < cols) h[i] += p[off + u] * zin[j];
        }
    } else {
      for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) h[r] += p[off + r + rows * c] * zin[c];
    }
    off += layer.param_count();
    std::vector<T>& zout = w.z[l + 1];
    zout.resize(rows);
    for (int i = 0; i < rows; ++i) zout[i] = act_value_t(layer.activation, h[i]);
  }
  return w.z[num_layers][0];
}

/// Forward + reverse pass; accumulates the parameter gradient of the
/// per-sample loss into `grad` (same layout as get_parameters).
template <class T>
T chain_loss_backprop_t(const DenseNetwork& net, const std::vector<T>& p, const Vector& x,
                        double y, LossKind kind, std::vector<T>* grad, ChainWork<T>& w) {
  const T f = chain_output_t(net, p, x, w);
  const T loss = loss_value_t(kind, f, y);
  if (!grad) return loss;

  const int num_layers = static_cast<int>(net.layers.size());
  std::vector<T>& s = w.back;
  s.assign(1, loss_grad_t(kind, f, y));
  int off = static_cast<int>(p.size());
  for (int l = num_layers - 1; l >= 0; --l) {
    const LayerSpec& layer = net.layers[l];
    const int rows = layer.rows(), cols = layer.cols();
    off -= layer.param_count();
    // s currently holds dL/dz_{l+1}; fold in the activation Jacobian.
    for (int i = 0; i < rows; ++i) s[i] *= act_deriv_t(layer.activation, w.h[l][i]);
    const std::vector<T>& zin = w.z[l];
    if (layer.toeplitz()) {
      const int half = (layer.kernel_size - 1) / 2;
      for (int i = 0; i < rows; ++i)
        for (int u = 0; u < layer.kernel_size; ++u) {
          const int j = i + u - half;
          if (j >= 0 && j < cols) (*grad)[off + u] += s[i] * zin[j];
        }
      std::vector<T>& sp = w.back_next;
      sp.assign(cols, T(0.0));
      for (int i = 0; i < rows; ++i)
        for (int u = 0; u < layer.kernel_size; ++u) {
          const int j = i + u - half;
          if (j >= 0 && j < cols) sp[j] += p[off + u] * s[i];
        }
      std::swap(s, sp);
    } else {
      std::vector<T>& sp = w.back_next;
      sp.assign(cols, T(0.0));
      for (int c = 0; c < cols; ++c) {
        T acc(0.0);
        for (int r = 0; r < rows; ++r) {
          (*grad)[off + r + rows * c] += s[r] * zin[c];
          acc += p[off + r + rows * c] * s[r];
        }
        sp[c] = acc;
      }
      std::swap(s, sp);
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Attention evaluation core. Parameter layout: [vec Q, vec K, vec V, theta].

template <class T>
struct AttnWork {
  std::vector<T> qx, logits, s, vxs, wvec, ga, xs, xga, gq;
  std::vector<T> kx, vx;  // n x n, column-major
};

template <class T>
T attention_output_t(const DenseNetwork& net, const std::vector<T>& p, const Vector& x,
                     AttnWork<T>& w) {
  using std::exp;
  const int n = static_cast<int>(net.attn_query.rows());
  const int d = static_cast<int>(net.attn_query.cols());
  const Matrix& X = net.attn_context;
  const int off_k = n * d, off_v = 2 * n * d, off_t = 3 * n * d;

  w.qx.assign(n, T(0.0));
  for (int c = 0; c < d; ++c)
    for (int r = 0; r < n; ++r) w.qx[r] += p[r + n * c] * x[c];

  w.kx.assign(n * n, T(0.0));
  w.vx.assign(n * n, T(0.0));
  for (int j = 0; j < n; ++j)
    for (int c = 0; c < d; ++c) {
      const double xc = X(c, j);
      for (int r = 0; r < n; ++r) {
        w.kx[r + n * j] += p[off_k + r + n * c] * xc;
        w.vx[r + n * j] += p[off_v + r + n * c] * xc;
      }
    }

  w.logits.assign(n, T(0.0));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) w.logits[j] += w.kx[i + n * j] * w.qx[i];

  // Stable softmax; the max is taken on value parts.
  double m = value_of(w.logits[0]);
  for (int j = 1; j < n; ++j) m = std::max(m, value_of(w.logits[j]));
  w.s.assign(n, T(0.0));
  T denom(0.0);
  for (int j = 0; j < n; ++j) {
    w.s[j] = exp(w.logits[j] - m);
    denom += w.s[j];
  }
  for (int j = 0; j < n; ++j) w.s[j] = w.s[j] / denom;

  w.vxs.assign(n, T(0.0));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) w.vxs[i] += w.vx[i + n * j] * w.s[j];

  T f(0.0);
  for (int i = 0; i < n; ++i) f += p[off_t + i] * w.vxs[i];
  return f;
}

template <class T>
T attention_loss_backprop_t(const DenseNetwork& net, const std::vector<T>& p, const Vector& x,
                            double y, LossKind kind, std::vector<T>* grad, AttnWork<T>& w) {
  const T f = attention_output_t(net, p, x, w);
  const T loss = loss_value_t(kind, f, y);
  if (!grad) return loss;

  const int n = static_cast<int>(net.attn_query.rows());
  const int d = static_cast<int>(net.attn_query.cols());
  const Matrix& X = net.attn_context;
  const int off_k = n * d, off_v = 2 * n * d, off_t = 3 * n * d;
  const T g = loss_grad_t(kind, f, y);

  for (int i = 0; i < n; ++i) (*grad)[off_t + i] += g * w.vxs[i];

  // w = (VX)^T theta, softmax Jacobian pullback ga = (Diag(s) - s s^T) (g w).
  w.wvec.assign(n, T(0.0));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) w.wvec[j] += w.vx[i + n * j] * p[off_t + i];
  T dot(0.0);
  for (int j = 0; j < n; ++j) dot += w.s[j] * w.wvec[j];
  w.ga.assign(n, T(0.0));
  for (int j = 0; j < n; ++j) w.ga[j] = g * (w.s[j] * (w.wvec[j] - dot));

  // grad V = g * theta (X s)^T
  w.xs.assign(d, T(0.0));
  for (int j = 0; j < n; ++j)
    for (int c = 0; c < d; ++c) w.xs[c] += X(c, j) * w.s[j];
  for (int c = 0; c < d; ++c)
    for (int r = 0; r < n; ++r) (*grad)[off_v + r + n * c] += g * p[off_t + r] * w.xs[c];

  // grad Q = (KX ga) x^T
  w.gq.assign(n, T(0.0));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) w.gq[i] += w.kx[i + n * j] * w.ga[j];
  for (int c = 0; c < d; ++c)
    for (int r = 0; r < n; ++r) (*grad)[r + n * c] += w.gq[r] * x[c];

  // grad K = (Qx) (X ga)^T
  w.xga.assign(d, T(0.0));
  for (int j = 0; j < n; ++j)
    for (int c = 0; c < d; ++c) w.xga[c] += X(c, j) * w.ga[j];
  for (int c = 0; c < d; ++c)
    for (int r = 0; r < n; ++r) (*grad)[off_k + r + n * c] += w.qx[r] * w.xga[c];

  return loss;
}

// ---------------------------------------------------------------------------
// Dataset-level generic drivers (mean loss).

template <class T>
struct EvalWork {
  ChainWork<T> chain;
  AttnWork<T> attn;
};

template <class T>
T dataset_loss_grad_t(const DenseNetwork& net, const std::vector<T>& p, const Dataset& data,
                      LossKind kind, std::vector<T>* grad, EvalWork<T>& w) {
  T total(0.0);
  if (grad) grad->assign(p.size(), T(0.0));
  for (const Sample& sample : data) {
    if (net.is_chain())
      total += chain_loss_backprop_t(net, p, sample.x, sample.y, kind, grad, w.chain);
    else
      total += attention_loss_backprop_t(net, p, sample.x, sample.y, kind, grad, w.attn);
  }
  const double inv = 1.0 / static_cast<double>(data.size());
  total = total * inv;
  if (grad)
    for (T& gi : *grad) gi = gi * inv;
  return total;
}

template <class T>
std::vector<T> lift_parameters(const std::vector<double>& base) {
  return std::vector<T>(base.begin(), base.end());
}

/// Hessian-vector product via a forward-mode dual pushed through backprop.
template <class T>
std::vector<T> hvp_t(const DenseNetwork& net, const std::vector<T>& p, const Dataset& data,
                     LossKind kind, const std::vector<double>& v) {
  std::vector<Dual<T>> pd(p.size());
  for (size_t i = 0; i < p.size(); ++i) pd[i] = Dual<T>(p[i], T(v[i]));
  EvalWork<Dual<T>> w;
  std::vector<Dual<T>> grad;
  dataset_loss_grad_t(net, pd, data, kind, &grad, w);
  std::vector<T> out(p.size());
  for (size_t i = 0; i < p.size(); ++i) out[i] = grad[i].d;
  return out;
}

// ---------------------------------------------------------------------------
// Public double-precision API.

inline constexpr int kDefaultHessianCap = 2000;

inline double dataset_loss(const DenseNetwork& net, const Dataset& data, LossKind kind) {
  EvalWork<double> w;
  auto p = get_parameters(net);
  std::vector<double> pv(p.data(), p.data() + p.size());
  return dataset_loss_grad_t<double>(net, pv, data, kind, nullptr, w);
}

inline Vector gradient(const DenseNetwork& net, const Dataset& data, LossKind kind) {
  EvalWork<double> w;
  auto p = get_parameters(net);
  std::vector<double> pv(p.data(), p.data() + p.size());
  std::vector<double> grad;
  dataset_loss_grad_t<double>(net, pv, data, kind, &grad, w);
  return Eigen::Map<Vector>(grad.data(), grad.size());
}

inline Vector gradient_sample(const DenseNetwork& net, const Vector& x, LossKind kind,
                              double y = 0.0) {
  Dataset d{{x, y}};
  return gradient(net, d, kind);
}

inline Vector hvp(const DenseNetwork& net, const Dataset& data, LossKind kind, const Vector& v) {
  auto p = get_parameters(net);
  std::vector<double> pv(p.data(), p.data() + p.size());
  std::vector<double> vv(v.data(), v.data() + v.size());
  auto out = hvp_t<double>(net, pv, data, kind, vv);
  return Eigen::Map<Vector>(out.data(), out.size());
}

/// Full loss Hessian over the concatenated parameter vector. Guarded by a
/// parameter cap so accidental large runs get rejected instead of hanging.
inline Matrix full_hessian(const DenseNetwork& net, const Dataset& data, LossKind kind,
                           int cap = kDefaultHessianCap) {
  const int n = parameter_count(net);
  require(n <= cap, "full_hessian: parameter count exceeds cap");
  auto p = get_parameters(net);
  std::vector<double> pv(p.data(), p.data() + p.size());
  Matrix h(n, n);
  std::vector<double> e(n, 0.0);
  for (int j = 0; j < n; ++j) {
    e[j] = 1.0;
    auto col = hvp_t<double>(net, pv, data, kind, e);
    for (int i = 0; i < n; ++i) h(i, j) = col[i];
    e[j] = 0.0;
  }
  return 0.5 * (h + h.transpose());
}

inline Matrix full_hessian_sample(const DenseNetwork& net, const Vector& x, LossKind kind,
                                  double y = 0.0, int cap = kDefaultHessianCap) {
  Dataset d{{x, y}};
  return full_hessian(net, d, kind, cap);
}

struct HessianBlock {
  int i = 0;  // row parameter group
  int j = 0;  // column parameter group
  Matrix block;
};

/// Mixed-partial block for two parameter groups; computable above the full
/// Hessian cap since only |group j| products are taken.
inline HessianBlock hessian_block(const DenseNetwork& net, int group_i, int group_j,
                                  const Dataset& data, LossKind kind) {
  const auto groups = parameter_groups(net);
  require(group_i >= 0 && group_i < static_cast<int>(groups.size()) && group_j >= 0 &&
              group_j < static_cast<int>(groups.size()),
          "hessian_block: invalid group index");
  const ParamGroup& gi = groups[group_i];
  const ParamGroup& gj = groups[group_j];
  auto p = get_parameters(net);
  std::vector<double> pv(p.data(), p.data() + p.size());
  HessianBlock out;
  out.i = group_i;
  out.j = group_j;
  out.block = Matrix(gi.size, gj.size);
  std::vector<double> e(pv.size(), 0.0);
  for (int j = 0; j < gj.size; ++j) {
    e[gj.offset + j] = 1.0;
    auto col = hvp_t<double>(net, pv, data, kind, e);
    for (int i = 0; i < gi.size; ++i) out.block(i, j) = col[gi.offset + i];
    e[gj.offset + j] = 0.0;
  }
  return out;
}

inline HessianBlock hessian_block_sample(const DenseNetwork& net, int gi, int gj, const Vector& x,
                                         LossKind kind, double y = 0.0) {
  Dataset d{{x, y}};
  return hessian_block(net, gi, gj, d, kind);
}

/// Directional derivative of the full Hessian along parameter direction h,
/// i.e. the third-order slice  nabla^3 L [.,.,h].
inline Matrix directional_hessian(const DenseNetwork& net, const Dataset& data, LossKind kind,
                                  const Vector& h, int cap = kDefaultHessianCap) {
  const int n = parameter_count(net);
  require(n <= cap, "directional_hessian: parameter count exceeds cap");
  require(h.size() == n, "directional_hessian: direction size mismatch");
  auto p = get_parameters(net);
  std::vector<D1> pd(n);
  for (int i = 0; i < n; ++i) pd[i] = D1(p[i], h[i]);
  Matrix out(n, n);
  std::vector<double> e(n, 0.0);
  for (int j = 0; j < n; ++j) {
    e[j] = 1.0;
    auto col = hvp_t<D1>(net, pd, data, kind, e);
    for (int i = 0; i < n; ++i) out(i, j) = col[i].d;
    e[j] = 0.0;
  }
  return 0.5 * (out + out.transpose());
}

// ---------------------------------------------------------------------------
// Closed-form Hessian blocks (cross-validation targets).

/// (x kron I_m): maps R^m into R^{|x| m}; row c*m + r carries x[c].
inline Matrix kron_x_identity(const Vector& x, int m) {
  Matrix k = Matrix::Zero(x.size() * m, m);
  for (int c = 0; c < x.size(); ++c)
    for (int r = 0; r < m; ++r) k(c * m + r, r) = x[c];
  return k;
}

struct BlockFactors {
  Matrix a, b, c;
  Matrix product() const { return a * b * c; }
};

/// Exact factorization A * B * C of the mixed block
/// d^2 f / d vec(W_0) d W_readout for an element-wise chain, with
/// B = W_middle^T. Valid for any activations since the read-out enters
/// linearly. `middle_layer` is 0-based and must be strictly between the
/// first layer and the read-out.
inline BlockFactors chain_block_factors(const DenseNetwork& net, const Vector& x,
                                        int middle_layer) {
  require(net.is_chain(), "chain_block_factors: chain networks only");
  const int n = static_cast<int>(net.layers.size()) - 1;  // read-out index
  require(n >= 2, "chain_block_factors: need at least two layers before the read-out");
  require(middle_layer >= 1 && middle_layer <= n - 1, "chain_block_factors: bad middle layer");
  EvaluationTrace trace;
  forward(net, x, &trace);

  const int m0 = net.layers[0].rows();
  Matrix a = kron_x_identity(x, m0) * trace.jac_diag[0].asDiagonal();
  for (int t = 1; t < middle_layer; ++t)
    a = a * net.layers[t].weight.transpose() * trace.jac_diag[t].asDiagonal();
  Matrix b = net.layers[middle_layer].weight.transpose();
  Matrix c = Matrix(trace.jac_diag[middle_layer].asDiagonal());
  for (int t = middle_layer + 1; t < n; ++t)
    c = c * net.layers[t].weight.transpose() * trace.jac_diag[t].asDiagonal();
  return {a, b, c};
}

/// Closed-form d^2 f / d theta_3 d vec(theta_1) for the exact three-layer
/// MLP (two hidden layers plus read-out): (x kron I) D_{z1} theta_2^T D_{z2}.
inline Matrix analytic_mlp_block(const DenseNetwork& net, const Vector& x) {
  require(net.architecture == Architecture::Mlp && net.layers.size() == 3,
          "analytic_mlp_block: expects the three-layer MLP");
  return chain_block_factors(net, x, 1).product();
}

struct AttentionFactors {
  Matrix a, b;
  Matrix product() const { return a * b; }
};

/// Exact factorization A * B of d^2 f / d vec(Q) d theta with B = V^T:
/// A = (x kron I_n) KX (Diag(s) - s s^T) X^T.
inline AttentionFactors attention_block_factors(const DenseNetwork& net, const Vector& x) {
  require(net.architecture == Architecture::Attention, "attention factors: attention nets only");
  EvaluationTrace trace;
  forward(net, x, &trace);
  const Vector& s = trace.softmax_weights;
  const Matrix js = Matrix(s.asDiagonal()) - s * s.transpose();
  const Matrix kx = net.attn_key * net.attn_context;
  const int n = static_cast<int>(net.attn_query.rows());
  AttentionFactors f;
  f.a = kron_x_identity(x, n) * kx * js * net.attn_context.transpose();
  f.b = net.attn_value.transpose();
  return f;
}

/// Closed-form d^2 f / d vec(Q) d theta:
/// (x kron I_n) (KX (Diag(s) - s s^T) (VX)^T).
inline Matrix analytic_attention_block(const DenseNetwork& net, const Vector& x) {
  require(net.architecture == Architecture::Attention,
          "analytic_attention_block: attention nets only");
  EvaluationTrace trace;
  forward(net, x, &trace);
  const Vector& s = trace.softmax_weights;
  const Matrix js = Matrix(s.asDiagonal()) - s * s.transpose();
  const Matrix kx = net.attn_key * net.attn_context;
  const Matrix vx = net.attn_value * net.attn_context;
  const int n = static_cast<int>(net.attn_query.rows());
  return kron_x_identity(x, n) * (kx * js * vx.transpose());
}

}  // namespace speclab
