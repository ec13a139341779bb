#pragma once

// Toy network zoo: MLP chains, 1-D CNNs realized as Toeplitz-structured
// chains with shared taps, and single-head self-attention with a linear
// read-out. Networks are immutable value types; evaluation is pure.

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "speclab/linalg.hpp"
#include "speclab/rng.hpp"

namespace speclab {

enum class ActivationKind { Identity, Relu, Gelu, Tanh, SoftmaxAttention };
enum class Architecture { Mlp, Cnn1d, Attention };

inline std::string to_string(ActivationKind k) {
  switch (k) {
    case ActivationKind::Identity: return "identity";
    case ActivationKind::Relu: return "relu";
    case ActivationKind::Gelu: return "gelu";
    case ActivationKind::Tanh: return "tanh";
    case ActivationKind::SoftmaxAttention: return "softmax-attention";
  }
  return "identity";
}

inline ActivationKind activation_from_string(const std::string& s) {
  if (s == "identity") return ActivationKind::Identity;
  if (s == "relu") return ActivationKind::Relu;
  if (s == "gelu") return ActivationKind::Gelu;
  if (s == "tanh") return ActivationKind::Tanh;
  if (s == "softmax-attention") return ActivationKind::SoftmaxAttention;
  throw std::invalid_argument("unknown activation: " + s);
}

inline std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::Mlp: return "mlp";
    case Architecture::Cnn1d: return "cnn1d";
    case Architecture::Attention: return "attention";
  }
  return "mlp";
}

inline Architecture architecture_from_string(const std::string& s) {
  if (s == "mlp") return Architecture::Mlp;
  if (s == "cnn1d") return Architecture::Cnn1d;
  if (s == "attention") return Architecture::Attention;
  throw std::invalid_argument("unknown architecture: " + s);
}

/// Same-padding 1-D convolution as a banded Toeplitz matrix.
inline Matrix toeplitz_from_taps(const Vector& taps, int width) {
  const int k = static_cast<int>(taps.size());
  const int half = (k - 1) / 2;
  Matrix w = Matrix::Zero(width, width);
  for (int i = 0; i < width; ++i)
    for (int u = 0; u < k; ++u) {
      const int j = i + u - half;
      if (j >= 0 && j < width) w(i, j) = taps[u];
    }
  return w;
}

struct LayerSpec {
  Matrix weight;  // rows x cols; for Toeplitz layers derived from taps
  ActivationKind activation = ActivationKind::Identity;
  bool injected = false;  // compensation / attack-factor layer
  int kernel_size = 0;    // > 0 marks Toeplitz structure with shared taps
  Vector taps;

  int rows() const { return static_cast<int>(weight.rows()); }
  int cols() const { return static_cast<int>(weight.cols()); }
  bool toeplitz() const { return kernel_size > 0; }
  int param_count() const { return toeplitz() ? kernel_size : rows() * cols(); }

  void materialize() {
    if (toeplitz()) weight = toeplitz_from_taps(taps, static_cast<int>(weight.rows()));
  }
};

struct DenseNetwork {
  Architecture architecture = Architecture::Mlp;
  std::vector<LayerSpec> layers;  // chain archs; final layer is the 1 x d read-out

  // Attention extras. The context matrix is part of the network; forward()
  // takes the query vector as input.
  Matrix attn_query, attn_key, attn_value;  // n x d
  Matrix attn_context;                      // X: d x n
  Vector attn_readout;                      // theta: n

  bool is_chain() const { return architecture != Architecture::Attention; }

  int input_dim() const {
    if (is_chain()) return layers.empty() ? 0 : layers.front().cols();
    return static_cast<int>(attn_query.cols());
  }

  int context_size() const { return static_cast<int>(attn_context.cols()); }
};

struct ParamGroup {
  std::string name;
  int offset = 0;
  int size = 0;
  int layer_index = -1;  // chain nets only
};

inline std::vector<ParamGroup> parameter_groups(const DenseNetwork& net) {
  std::vector<ParamGroup> groups;
  int off = 0;
  if (net.is_chain()) {
    for (size_t l = 0; l < net.layers.size(); ++l) {
      ParamGroup g;
      g.name = "layer" + std::to_string(l);
      g.offset = off;
      g.size = net.layers[l].param_count();
      g.layer_index = static_cast<int>(l);
      off += g.size;
      groups.push_back(g);
    }
  } else {
    const int n = static_cast<int>(net.attn_query.rows());
    const int d = static_cast<int>(net.attn_query.cols());
    groups.push_back({"Q", off, n * d, -1});
    off += n * d;
    groups.push_back({"K", off, n * d, -1});
    off += n * d;
    groups.push_back({"V", off, n * d, -1});
    off += n * d;
    groups.push_back({"readout", off, n, -1});
  }
  return groups;
}

inline int parameter_count(const DenseNetwork& net) {
  int total = 0;
  for (const auto& g : parameter_groups(net)) total += g.size;
  return total;
}

inline Vector get_parameters(const DenseNetwork& net) {
  Vector p(parameter_count(net));
  int off = 0;
  if (net.is_chain()) {
    for (const auto& layer : net.layers) {
      if (layer.toeplitz()) {
        p.segment(off, layer.kernel_size) = layer.taps;
        off += layer.kernel_size;
      } else {
        for (int c = 0; c < layer.cols(); ++c)
          for (int r = 0; r < layer.rows(); ++r) p[off++] = layer.weight(r, c);
      }
    }
  } else {
    auto write_mat = [&](const Matrix& m) {
      for (int c = 0; c < m.cols(); ++c)
        for (int r = 0; r < m.rows(); ++r) p[off++] = m(r, c);
    };
    write_mat(net.attn_query);
    write_mat(net.attn_key);
    write_mat(net.attn_value);
    p.segment(off, net.attn_readout.size()) = net.attn_readout;
  }
  return p;
}

inline void set_parameters(DenseNetwork& net, const Vector& p) {
  require(p.size() == parameter_count(net), "set_parameters: size mismatch");
  int off = 0;
  if (net.is_chain()) {
    for (auto& layer : net.layers) {
      if (layer.toeplitz()) {
        layer.taps = p.segment(off, layer.kernel_size);
        off += layer.kernel_size;
        layer.materialize();
      } else {
        for (int c = 0; c < layer.cols(); ++c)
          for (int r = 0; r < layer.rows(); ++r) layer.weight(r, c) = p[off++];
      }
    }
  } else {
    auto read_mat = [&](Matrix& m) {
      for (int c = 0; c < m.cols(); ++c)
        for (int r = 0; r < m.rows(); ++r) m(r, c) = p[off++];
    };
    read_mat(net.attn_query);
    read_mat(net.attn_key);
    read_mat(net.attn_value);
    net.attn_readout = p.segment(off, net.attn_readout.size());
  }
}

// ---------------------------------------------------------------------------
// Activations (double path; the templated versions live in autodiff.hpp).

inline double activation_value(ActivationKind k, double x) {
  switch (k) {
    case ActivationKind::Identity: return x;
    case ActivationKind::Relu: return x > 0 ? x : 0.0;
    case ActivationKind::Gelu: return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
    case ActivationKind::Tanh: return std::tanh(x);
    case ActivationKind::SoftmaxAttention: throw std::invalid_argument("softmax is vector-valued");
  }
  return x;
}

inline double activation_derivative(ActivationKind k, double x) {
  switch (k) {
    case ActivationKind::Identity: return 1.0;
    case ActivationKind::Relu: return x > 0 ? 1.0 : 0.0;  // subgradient at 0 fixed to 0
    case ActivationKind::Gelu:
      return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) +
             x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    case ActivationKind::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case ActivationKind::SoftmaxAttention: throw std::invalid_argument("softmax is vector-valued");
  }
  return 1.0;
}

inline double activation_second_derivative(ActivationKind k, double x) {
  switch (k) {
    case ActivationKind::Identity: return 0.0;
    case ActivationKind::Relu: return 0.0;  // measurable selection, zero everywhere
    case ActivationKind::Gelu:
      return (2.0 - x * x) * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    case ActivationKind::Tanh: {
      const double t = std::tanh(x);
      return -2.0 * t * (1.0 - t * t);
    }
    case ActivationKind::SoftmaxAttention: throw std::invalid_argument("softmax is vector-valued");
  }
  return 0.0;
}

inline bool activation_smooth(ActivationKind k) {
  return k == ActivationKind::Gelu || k == ActivationKind::Tanh ||
         k == ActivationKind::Identity;
}

struct EvaluationTrace {
  std::vector<Vector> pre;         // h_i per layer
  std::vector<Vector> post;        // z_i per layer
  std::vector<Vector> jac_diag;    // phi'(h_i)
  std::vector<Vector> jac2_diag;   // phi''(h_i); zeros for relu/identity
  Vector softmax_weights;          // attention s (attention nets only)
};

inline Vector softmax(const Vector& a) {
  const double m = a.maxCoeff();
  Vector e = (a.array() - m).exp();
  return e / e.sum();
}

/// Forward pass. For chain networks `x` is the input vector; for attention
/// networks `x` is the query vector and the context matrix comes from the
/// network itself.
inline double forward(const DenseNetwork& net, const Vector& x, EvaluationTrace* trace = nullptr) {
  require(x.size() == net.input_dim(), "forward: input dimension mismatch");
  require(x.allFinite(), "forward: non-finite input");
  if (net.is_chain()) {
    Vector z = x;
    if (trace) {
      trace->pre.clear();
      trace->post.clear();
      trace->jac_diag.clear();
      trace->jac2_diag.clear();
    }
    for (const auto& layer : net.layers) {
      require(layer.cols() == z.size(), "forward: layer dimension mismatch");
      Vector h = layer.weight * z;
      Vector znext(h.size());
      for (int i = 0; i < h.size(); ++i) znext[i] = activation_value(layer.activation, h[i]);
      if (trace) {
        trace->pre.push_back(h);
        trace->post.push_back(znext);
        Vector d1(h.size()), d2(h.size());
        for (int i = 0; i < h.size(); ++i) {
          d1[i] = activation_derivative(layer.activation, h[i]);
          d2[i] = activation_second_derivative(layer.activation, h[i]);
        }
        trace->jac_diag.push_back(d1);
        trace->jac2_diag.push_back(d2);
      }
      z = znext;
    }
    require(z.size() == 1, "forward: network must end in a scalar read-out");
    return z[0];
  }
  // Attention: f = theta^T (V X) softmax((K X)^T Q x).
  const Vector qx = net.attn_query * x;
  const Matrix kx = net.attn_key * net.attn_context;
  const Vector logits = kx.transpose() * qx;
  const Vector s = softmax(logits);
  const Matrix vx = net.attn_value * net.attn_context;
  if (trace) {
    trace->pre.assign(1, logits);
    trace->post.assign(1, s);
    trace->softmax_weights = s;
  }
  return net.attn_readout.dot(vx * s);
}

// ---------------------------------------------------------------------------
// Builders.

/// MLP with the given widths; the final read-out row is appended
/// automatically. widths = {input, hidden...}.
inline DenseNetwork make_mlp(const std::vector<int>& widths, ActivationKind act,
                             std::uint64_t seed) {
  require(widths.size() >= 2, "make_mlp: need at least input and one hidden width");
  Rng rng(seed);
  DenseNetwork net;
  net.architecture = Architecture::Mlp;
  for (size_t i = 1; i < widths.size(); ++i) {
    LayerSpec layer;
    layer.weight = rng.gaussian_matrix(widths[i], widths[i - 1], 1.0 / std::sqrt(widths[i - 1]));
    layer.activation = act;
    net.layers.push_back(layer);
  }
  LayerSpec readout;
  readout.weight = rng.gaussian_matrix(1, widths.back(), 1.0 / std::sqrt(widths.back()));
  readout.activation = ActivationKind::Identity;
  net.layers.push_back(readout);
  return net;
}

/// 1-D CNN as a Toeplitz-structured chain: `conv_layers` shared-tap layers
/// followed by one dense layer and the read-out.
inline DenseNetwork make_cnn1d(int width, int kernel, int conv_layers, ActivationKind act,
                               std::uint64_t seed) {
  require(kernel % 2 == 1 && kernel <= width, "make_cnn1d: kernel must be odd and fit");
  Rng rng(seed);
  DenseNetwork net;
  net.architecture = Architecture::Cnn1d;
  for (int i = 0; i < conv_layers; ++i) {
    LayerSpec layer;
    layer.kernel_size = kernel;
    layer.taps = rng.gaussian_vector(kernel, 1.0 / std::sqrt(kernel));
    layer.weight = Matrix::Zero(width, width);
    layer.activation = act;
    layer.materialize();
    net.layers.push_back(layer);
  }
  LayerSpec dense;
  dense.weight = rng.gaussian_matrix(width, width, 1.0 / std::sqrt(width));
  dense.activation = act;
  net.layers.push_back(dense);
  LayerSpec readout;
  readout.weight = rng.gaussian_matrix(1, width, 1.0 / std::sqrt(width));
  readout.activation = ActivationKind::Identity;
  net.layers.push_back(readout);
  return net;
}

/// Single-head self-attention with linear read-out; context X is drawn once
/// and fixed as part of the network.
inline DenseNetwork make_attention(int d, int n, std::uint64_t seed) {
  Rng rng(seed);
  DenseNetwork net;
  net.architecture = Architecture::Attention;
  net.attn_query = rng.gaussian_matrix(n, d, 1.0 / std::sqrt(d));
  net.attn_key = rng.gaussian_matrix(n, d, 1.0 / std::sqrt(d));
  net.attn_value = rng.gaussian_matrix(n, d, 1.0 / std::sqrt(d));
  net.attn_context = rng.gaussian_matrix(d, n);
  net.attn_readout = rng.gaussian_vector(n, 1.0 / std::sqrt(n));
  return net;
}

// ---------------------------------------------------------------------------
// Datasets.

struct Sample {
  Vector x;
  double y = 0.0;
};
using Dataset = std::vector<Sample>;

/// Two intertwined spirals, n/2 points per arm, labels +1/-1. Coordinates
/// are confined to roughly [-1, 1]^2.
inline Dataset spiral_dataset(int n, double noise, std::uint64_t seed) {
  require(n >= 2, "spiral_dataset: need n >= 2");
  require(n % 2 == 0, "spiral_dataset: n must be even");
  Rng rng(seed);
  const int per_arm = n / 2;
  Dataset data;
  data.reserve(n);
  for (int i = 0; i < per_arm; ++i) {
    const double u = per_arm > 1 ? static_cast<double>(i) / (per_arm - 1) : 0.0;
    const double t = 0.5 * M_PI + 3.0 * M_PI * u;
    const double r = 0.1 + 0.9 * u;
    const double cx = r * std::cos(t), cy = r * std::sin(t);
    Sample a, b;
    a.x = Vector(2);
    a.x << cx + noise * rng.gaussian(), cy + noise * rng.gaussian();
    a.y = 1.0;
    b.x = Vector(2);
    b.x << -cx + noise * rng.gaussian(), -cy + noise * rng.gaussian();
    b.y = -1.0;
    data.push_back(a);
    data.push_back(b);
  }
  return data;
}

/// Regression task: isotropic Gaussian inputs with Gaussian targets.
inline Dataset gaussian_regression_dataset(int n, int dim, std::uint64_t seed) {
  Rng rng(seed);
  Dataset data;
  data.reserve(n);
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.x = rng.gaussian_vector(dim);
    s.y = rng.gaussian();
    data.push_back(s);
  }
  return data;
}

// ---------------------------------------------------------------------------
// Serialization (structured text, lossless doubles).

inline void write_matrix(std::ostream& os, const Matrix& m) {
  os.precision(17);
  os << m.rows() << " " << m.cols() << "\n";
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) os << (c ? " " : "") << m(r, c);
    os << "\n";
  }
}

inline Matrix read_matrix(std::istream& is) {
  int rows = 0, cols = 0;
  is >> rows >> cols;
  require(is.good() && rows >= 1 && cols >= 1, "read_matrix: bad header");
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) is >> m(r, c);
  require(!is.fail(), "read_matrix: truncated data");
  return m;
}

inline void save_network(const DenseNetwork& net, std::ostream& os) {
  os.precision(17);
  os << "speclab-net 1\n";
  os << "arch " << to_string(net.architecture) << "\n";
  if (net.is_chain()) {
    os << "layers " << net.layers.size() << "\n";
    for (const auto& layer : net.layers) {
      os << "layer " << to_string(layer.activation) << " " << (layer.injected ? 1 : 0) << " "
         << layer.kernel_size << "\n";
      if (layer.toeplitz()) {
        os << layer.rows() << "\n";
        for (int i = 0; i < layer.taps.size(); ++i) os << (i ? " " : "") << layer.taps[i];
        os << "\n";
      } else {
        write_matrix(os, layer.weight);
      }
    }
  } else {
    write_matrix(os, net.attn_query);
    write_matrix(os, net.attn_key);
    write_matrix(os, net.attn_value);
    write_matrix(os, net.attn_context);
    os << net.attn_readout.size() << "\n";
    for (int i = 0; i < net.attn_readout.size(); ++i)
      os << (i ? " " : "") << net.attn_readout[i];
    os << "\n";
  }
}

inline DenseNetwork load_network(std::istream& is) {
  std::string magic;
  int version = 0;
  is >> magic >> version;
  require(magic == "speclab-net" && version == 1, "load_network: bad magic");
  std::string key, value;
  is >> key >> value;
  require(key == "arch", "load_network: expected arch");
  DenseNetwork net;
  net.architecture = architecture_from_string(value);
  if (net.is_chain()) {
    std::size_t count = 0;
    is >> key >> count;
    require(key == "layers", "load_network: expected layers");
    for (std::size_t l = 0; l < count; ++l) {
      std::string act;
      int injected = 0, kernel = 0;
      is >> key >> act >> injected >> kernel;
      require(key == "layer", "load_network: expected layer");
      LayerSpec layer;
      layer.activation = activation_from_string(act);
      layer.injected = injected != 0;
      layer.kernel_size = kernel;
      if (kernel > 0) {
        int width = 0;
        is >> width;
        layer.taps = Vector(kernel);
        for (int i = 0; i < kernel; ++i) is >> layer.taps[i];
        layer.weight = Matrix::Zero(width, width);
        layer.materialize();
      } else {
        layer.weight = read_matrix(is);
      }
      net.layers.push_back(layer);
    }
  } else {
    net.attn_query = read_matrix(is);
    net.attn_key = read_matrix(is);
    net.attn_value = read_matrix(is);
    net.attn_context = read_matrix(is);
    int n = 0;
    is >> n;
    net.attn_readout = Vector(n);
    for (int i = 0; i < n; ++i) is >> net.attn_readout[i];
  }
  require(!is.fail(), "load_network: truncated stream");
  return net;
}

}  // namespace speclab
