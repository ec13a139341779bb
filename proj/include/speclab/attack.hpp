#pragma once

// The k-th-root layer-injection attack: factor each high-sigma layer into
// k factors with equal k-th-root spectra, restoring the weight-spectrum
// ceiling max_i sigma_1(theta_i) <= M^(1/k) at a linear parameter cost.

#include <cmath>
#include <vector>

#include "speclab/deform.hpp"
#include "speclab/linalg.hpp"
#include "speclab/net.hpp"

namespace speclab {

struct AttackPlan {
  int root_k = 1;
  std::vector<int> target_layers;  // empty: pick by threshold
  double sigma_threshold = 1e3;
  bool coalesce = false;  // merge adjacent pure-linear pairs after factoring
};

struct AttackReport {
  DenseNetwork attacked;
  int layers_added = 0;
  long parameters_added = 0;
  double parameter_growth_ratio = 1.0;
  double max_sigma1_before = 0.0;
  double max_sigma1_after = 0.0;
  std::vector<int> targets;
};

/// Factor theta into k matrices whose product reconstructs theta and whose
/// spectral norms all equal sigma_1(theta)^(1/k):
///   F_1 = U Sigma^(1/k) V^T,   F_j = U Sigma^(1/k) U^T  (j = 2..k).
/// Returned in application order (F_1 acts first).
inline std::vector<Matrix> kth_root_factorize(const Matrix& theta, int k) {
  require(k >= 1, "kth_root_factorize: k must be >= 1");
  if (k == 1) return {theta};
  const auto f = svd(theta);
  Vector root = f.sigmas;
  for (int i = 0; i < root.size(); ++i) root[i] = std::pow(f.sigmas[i], 1.0 / k);
  std::vector<Matrix> factors;
  factors.push_back(f.left * root.asDiagonal() * f.right.transpose());
  const Matrix interior = f.left * root.asDiagonal() * f.left.transpose();
  for (int j = 1; j < k; ++j) factors.push_back(interior);
  return factors;
}

inline double max_layer_sigma1(const DenseNetwork& net) {
  double m = 0.0;
  for (const auto& layer : net.layers) m = std::max(m, sigma_value(layer.weight, 1));
  return m;
}

/// Default target selection: every dense layer whose sigma_1 exceeds the
/// effective threshold. The threshold is clamped to the attack's achievable
/// ceiling M^(1/k) so the post-attack root law holds across the whole net.
inline std::vector<int> attack_targets(const DenseNetwork& net, const AttackPlan& plan) {
  require(net.is_chain(), "attack_targets: chain networks only");
  if (!plan.target_layers.empty()) {
    for (int i : plan.target_layers) {
      require(i >= 0 && i < static_cast<int>(net.layers.size()), "attack_targets: bad index");
      require(!net.layers[i].toeplitz(), "attack_targets: Toeplitz layers not supported");
    }
    return plan.target_layers;
  }
  const double m = max_layer_sigma1(net);
  const double ceiling = std::pow(m, 1.0 / plan.root_k);
  const double threshold = std::min(plan.sigma_threshold, ceiling * (1 + 1e-12));
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(net.layers.size()); ++i)
    if (!net.layers[i].toeplitz() && sigma_value(net.layers[i].weight, 1) > threshold)
      out.push_back(i);
  return out;
}

/// Exact parameter accounting: each of the (k-1) interior factors of a
/// d_out x d_in target adds d_out^2 parameters.
inline std::pair<long, double> attack_budget(const DenseNetwork& net, const AttackPlan& plan) {
  require(plan.root_k >= 1, "attack_budget: root_k must be >= 1");
  const auto targets = attack_targets(net, plan);
  long added = 0;
  for (int i : targets) {
    const long d_out = net.layers[i].rows();
    added += static_cast<long>(plan.root_k - 1) * d_out * d_out;
  }
  const long before = parameter_count(net);
  return {added, static_cast<double>(before + added) / static_cast<double>(before)};
}

/// Replace every target layer by its k factors; identity activations on all
/// but the outermost factor, which keeps the original activation. The
/// optional coalesce pass merges adjacent pure-linear pairs (a compensation
/// layer preceded by an identity-activation factor) for auditing the
/// trivial merge attack; the default preserves structure.
inline AttackReport layer_injection_attack(const DenseNetwork& net, const AttackPlan& plan) {
  require(net.is_chain(), "layer_injection_attack: chain networks only");
  require(plan.root_k >= 1, "layer_injection_attack: root_k must be >= 1");

  AttackReport rep;
  rep.max_sigma1_before = max_layer_sigma1(net);
  rep.targets = attack_targets(net, plan);
  rep.attacked = net;

  std::vector<int> order = rep.targets;
  std::sort(order.rbegin(), order.rend());
  for (int idx : order) {
    const LayerSpec target = rep.attacked.layers[idx];
    const auto factors = kth_root_factorize(target.weight, plan.root_k);
    std::vector<LayerSpec> replacement;
    for (size_t j = 0; j < factors.size(); ++j) {
      LayerSpec layer;
      layer.weight = factors[j];
      const bool outermost = j + 1 == factors.size();
      layer.activation = outermost ? target.activation : ActivationKind::Identity;
      layer.injected = outermost ? target.injected : true;
      replacement.push_back(layer);
    }
    rep.attacked.layers.erase(rep.attacked.layers.begin() + idx);
    rep.attacked.layers.insert(rep.attacked.layers.begin() + idx, replacement.begin(),
                               replacement.end());
  }
  rep.layers_added = static_cast<int>(rep.attacked.layers.size() - net.layers.size());
  rep.parameters_added = parameter_count(rep.attacked) - parameter_count(net);
  rep.parameter_growth_ratio = static_cast<double>(parameter_count(rep.attacked)) /
                               static_cast<double>(parameter_count(net));

  if (plan.coalesce) {
    auto& layers = rep.attacked.layers;
    bool merged = true;
    while (merged) {
      merged = false;
      for (size_t l = 0; l + 1 < layers.size(); ++l) {
        const bool linear_pair = layers[l].activation == ActivationKind::Identity &&
                                 !layers[l].toeplitz() && !layers[l + 1].toeplitz() &&
                                 (layers[l].injected || layers[l + 1].injected);
        if (!linear_pair) continue;
        layers[l + 1].weight = layers[l + 1].weight * layers[l].weight;
        layers[l + 1].injected = true;
        layers.erase(layers.begin() + l);
        merged = true;
        break;
      }
    }
  }
  rep.max_sigma1_after = max_layer_sigma1(rep.attacked);
  return rep;
}

inline void save_attack_plan(const AttackPlan& plan, std::ostream& os) {
  os.precision(17);
  os << "speclab-attack 1\n";
  os << "root_k " << plan.root_k << "\n";
  os << "sigma_threshold " << plan.sigma_threshold << "\n";
  os << "coalesce " << (plan.coalesce ? 1 : 0) << "\n";
  os << "targets " << plan.target_layers.size();
  for (int i : plan.target_layers) os << " " << i;
  os << "\n";
}

inline AttackPlan load_attack_plan(std::istream& is) {
  std::string magic, key;
  int version = 0, coalesce = 0;
  is >> magic >> version;
  require(magic == "speclab-attack" && version == 1, "load_attack_plan: bad magic");
  AttackPlan plan;
  is >> key >> plan.root_k;
  require(key == "root_k", "load_attack_plan: expected root_k");
  is >> key >> plan.sigma_threshold;
  require(key == "sigma_threshold", "load_attack_plan: expected sigma_threshold");
  is >> key >> coalesce;
  require(key == "coalesce", "load_attack_plan: expected coalesce");
  plan.coalesce = coalesce != 0;
  std::size_t count = 0;
  is >> key >> count;
  require(key == "targets", "load_attack_plan: expected targets");
  plan.target_layers.resize(count);
  for (auto& i : plan.target_layers) is >> i;
  require(!is.fail(), "load_attack_plan: truncated stream");
  return plan;
}

}  // namespace speclab
