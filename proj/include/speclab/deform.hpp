#pragma once

// Spectral deformation with functional-invariance compensation: scale the
// top-k singular values of selected layers by alpha and inject an
// identity-activation compensation layer so the network function is
// unchanged. Verification helpers check invariance and spectral control.

#include <cmath>
#include <cstdint>
#include <vector>

#include "speclab/autodiff.hpp"
#include "speclab/linalg.hpp"
#include "speclab/net.hpp"
#include "speclab/rng.hpp"

namespace speclab {

enum class CompensationSide { InjectAfter, InjectBefore };

struct DeformationPlan {
  std::vector<int> layer_indices;
  int top_k = 1;
  double alpha = 1.0;
  CompensationSide side = CompensationSide::InjectAfter;
  std::uint64_t seed = 0;  // used when layers were picked randomly
};

struct LayerDeformation {
  int original_index = -1;   // index in the original network
  int deformed_index = -1;   // index of theta' in the deformed network
  int comp_index = -1;       // index of the injected compensation layer
  Matrix deformed_weight;    // theta'
  Matrix compensation;       // theta^comp
  Vector scaling;            // diagonal of T
  double achieved_sigma1 = 0.0;
};

struct DeformationRecord {
  DenseNetwork original;
  DenseNetwork deformed;
  DeformationPlan plan;
  std::vector<LayerDeformation> per_layer;
};

/// Eligible deformation targets: dense, non-injected, non-read-out layers.
inline std::vector<int> eligible_layers(const DenseNetwork& net) {
  std::vector<int> out;
  for (int i = 0; i + 1 < static_cast<int>(net.layers.size()); ++i)
    if (!net.layers[i].toeplitz() && !net.layers[i].injected) out.push_back(i);
  return out;
}

enum class SelectionStrategy { UniformRandom, ByPosition };

/// Layer selection for a deformation plan. Deterministic under the seed;
/// the read-out layer is never eligible.
inline std::vector<int> select_layers(const DenseNetwork& net, int n, SelectionStrategy strategy,
                                      std::uint64_t seed,
                                      const std::vector<int>& positions = {}) {
  require(net.is_chain(), "select_layers: chain networks only");
  auto pool = eligible_layers(net);
  if (strategy == SelectionStrategy::ByPosition) {
    require(static_cast<int>(positions.size()) == n, "select_layers: positions size mismatch");
    for (int p : positions)
      require(std::find(pool.begin(), pool.end(), p) != pool.end(),
              "select_layers: position not eligible");
    return positions;
  }
  require(n <= static_cast<int>(pool.size()), "select_layers: not enough eligible layers");
  Rng rng(seed);
  std::vector<int> picked;
  for (int i = 0; i < n; ++i) {
    const int j = rng.index(static_cast<int>(pool.size()));
    picked.push_back(pool[j]);
    pool.erase(pool.begin() + j);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

/// Reconstruct a matrix with its leading singular value set to `target`
/// (remaining spectrum untouched).
inline Matrix with_top_sigma(const Matrix& m, double target) {
  auto f = svd(m);
  require(f.sigma(1) > 0, "with_top_sigma: zero matrix");
  Vector s = f.sigmas;
  s[0] = target;
  return f.left * s.asDiagonal() * f.right.transpose();
}

/// SpecDef. Each selected layer theta is replaced by theta' = U T Sigma V^T
/// and an adjacent identity-activation compensation layer restoring the
/// original linear map (pseudoinverse handles zero singular values).
inline DeformationRecord spectral_deform(const DenseNetwork& net, const DeformationPlan& plan) {
  require(net.is_chain(), "spectral_deform: chain networks only");
  require(std::isfinite(plan.alpha) && plan.alpha > 0,
          "spectral_deform: alpha must be positive and finite");
  require(plan.top_k >= 1, "spectral_deform: top_k must be >= 1");
  {
    std::vector<int> idx = plan.layer_indices;
    std::sort(idx.begin(), idx.end());
    require(std::adjacent_find(idx.begin(), idx.end()) == idx.end(),
            "spectral_deform: duplicate layer index");
  }

  DeformationRecord record;
  record.original = net;
  record.deformed = net;
  record.plan = plan;

  // Descending order keeps earlier indices valid while layers are inserted.
  std::vector<int> order = plan.layer_indices;
  std::sort(order.rbegin(), order.rend());

  for (int idx : order) {
    require(idx >= 0 && idx < static_cast<int>(record.deformed.layers.size()),
            "spectral_deform: layer index out of range");
    LayerSpec target = record.deformed.layers[idx];
    require(!target.toeplitz(), "spectral_deform: Toeplitz layers are not deformable");

    LayerDeformation ld;
    ld.original_index = idx;

    const auto f = svd(target.weight);
    const int q = static_cast<int>(f.sigmas.size());
    ld.scaling = Vector::Ones(q);
    for (int i = 0; i < std::min(plan.top_k, q); ++i) ld.scaling[i] = plan.alpha;

    if (plan.alpha == 1.0) {
      ld.deformed_weight = target.weight;  // exact identity deformation
      ld.compensation = plan.side == CompensationSide::InjectAfter
                            ? Matrix::Identity(target.rows(), target.rows())
                            : Matrix::Identity(target.cols(), target.cols());
    } else {
      Vector scaled = ld.scaling.cwiseProduct(f.sigmas);
      ld.deformed_weight = f.left * scaled.asDiagonal() * f.right.transpose();
      require(ld.deformed_weight.allFinite(),
              "spectral_deform: alpha overflow while scaling singular values");
      // ratio_i = sigma_i / scaled_i with the pseudoinverse convention.
      Vector ratio(q);
      const double cut = tol::rank_cut * (scaled.size() ? scaled.maxCoeff() : 0.0);
      for (int i = 0; i < q; ++i) ratio[i] = scaled[i] > cut ? f.sigmas[i] / scaled[i] : 0.0;
      if (plan.side == CompensationSide::InjectAfter)
        ld.compensation = f.left * ratio.asDiagonal() * f.left.transpose();
      else
        ld.compensation = f.right * ratio.asDiagonal() * f.right.transpose();
    }
    ld.achieved_sigma1 = sigma_value(ld.deformed_weight, 1);

    // Surgery. Inject-after: z -> theta' -> identity -> comp -> phi.
    // Inject-before: z -> comp -> identity -> theta' -> phi.
    LayerSpec deformed_layer, comp_layer;
    if (plan.side == CompensationSide::InjectAfter) {
      deformed_layer = {ld.deformed_weight, ActivationKind::Identity, target.injected, 0, {}};
      comp_layer = {ld.compensation, target.activation, true, 0, {}};
      record.deformed.layers[idx] = deformed_layer;
      record.deformed.layers.insert(record.deformed.layers.begin() + idx + 1, comp_layer);
      ld.deformed_index = idx;
      ld.comp_index = idx + 1;
    } else {
      comp_layer = {ld.compensation, ActivationKind::Identity, true, 0, {}};
      deformed_layer = {ld.deformed_weight, target.activation, target.injected, 0, {}};
      record.deformed.layers[idx] = deformed_layer;
      record.deformed.layers.insert(record.deformed.layers.begin() + idx, comp_layer);
      ld.deformed_index = idx + 1;
      ld.comp_index = idx;
    }
    record.per_layer.push_back(ld);
  }
  return record;
}

/// Max relative output deviation between two networks over seeded
/// standard-normal inputs.
inline double max_relative_deviation(const DenseNetwork& a, const DenseNetwork& b,
                                     int sample_count, std::uint64_t seed) {
  require(a.input_dim() == b.input_dim(), "max_relative_deviation: input dims differ");
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < sample_count; ++i) {
    const Vector x = rng.gaussian_vector(a.input_dim());
    const double fa = forward(a, x), fb = forward(b, x);
    worst = std::max(worst, std::abs(fa - fb) / (std::abs(fa) + 1e-12));
  }
  return worst;
}

/// Functional invariance: max relative deviation of the deformed network
/// from the original over seeded inputs.
inline double verify_invariance(const DeformationRecord& record, int sample_count,
                                std::uint64_t seed) {
  return max_relative_deviation(record.original, record.deformed, sample_count, seed);
}

struct SpectralControlReport {
  bool holds = false;
  bool bound_only = false;     // parameter cap exceeded; no direct sigma_1(H)
  double sigma1_hessian = 0.0; // of the deformed network function
  double bound_value = 0.0;    // sup-tightened product lower bound
  int bound_r1 = 0, bound_r2 = 0;
};

/// Spectral-control check: sigma_1 of the deformed network's Hessian versus
/// the threshold c, with the product lower bound evaluated on the deformed
/// layer's exact block factorization.
inline SpectralControlReport verify_spectral_control(const DeformationRecord& record, double c,
                                                     std::uint64_t input_seed = 0,
                                                     int hessian_cap = kDefaultHessianCap) {
  require(!record.per_layer.empty(), "verify_spectral_control: empty record");
  Rng rng(derive_seed(input_seed, 17));
  const Vector x = rng.gaussian_vector(record.deformed.input_dim());

  SpectralControlReport rep;
  const auto& ld = record.per_layer.front();
  auto factors = chain_block_factors(record.deformed, x, ld.deformed_index);
  auto bound = sup_lower_bound(factors.a, factors.b, factors.c);
  rep.bound_value = bound.lower_bound;
  rep.bound_r1 = bound.arg_r1;
  rep.bound_r2 = bound.arg_r2;

  if (parameter_count(record.deformed) > hessian_cap) {
    rep.bound_only = true;
    rep.holds = rep.bound_value >= c;
    return rep;
  }
  const Matrix h = full_hessian_sample(record.deformed, x, LossKind::RawOutput, 0.0, hessian_cap);
  rep.sigma1_hessian = spectral_norm(h);
  rep.holds = rep.sigma1_hessian >= c;
  return rep;
}

// Serialization of plans (same structured text family as networks).
inline void save_plan(const DeformationPlan& plan, std::ostream& os) {
  os.precision(17);
  os << "speclab-plan 1\n";
  os << "alpha " << plan.alpha << "\n";
  os << "top_k " << plan.top_k << "\n";
  os << "side " << (plan.side == CompensationSide::InjectAfter ? "inject-after" : "inject-before")
     << "\n";
  os << "seed " << plan.seed << "\n";
  os << "layers " << plan.layer_indices.size();
  for (int i : plan.layer_indices) os << " " << i;
  os << "\n";
}

inline DeformationPlan load_plan(std::istream& is) {
  std::string magic, key, side;
  int version = 0;
  is >> magic >> version;
  require(magic == "speclab-plan" && version == 1, "load_plan: bad magic");
  DeformationPlan plan;
  is >> key >> plan.alpha;
  require(key == "alpha", "load_plan: expected alpha");
  is >> key >> plan.top_k;
  require(key == "top_k", "load_plan: expected top_k");
  is >> key >> side;
  require(key == "side", "load_plan: expected side");
  plan.side =
      side == "inject-before" ? CompensationSide::InjectBefore : CompensationSide::InjectAfter;
  is >> key >> plan.seed;
  require(key == "seed", "load_plan: expected seed");
  std::size_t count = 0;
  is >> key >> count;
  require(key == "layers", "load_plan: expected layers");
  plan.layer_indices.resize(count);
  for (auto& i : plan.layer_indices) is >> i;
  require(!is.fail(), "load_plan: truncated stream");
  return plan;
}

}  // namespace speclab
