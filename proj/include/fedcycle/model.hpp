#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

namespace fedcycle {

enum class Arch { SoftmaxLinear, Mlp1 };

/// Architecture descriptor. The parameter count and flat-vector layout are
/// pure functions of this spec; two ParamVectors are combinable only when
/// their specs compare equal.
struct ModelSpec {
  Arch arch = Arch::SoftmaxLinear;
  int input_dim = 0;
  int num_classes = 0;
  int hidden_dim = 0;  // Mlp1 only

  int param_count() const;
  bool operator==(const ModelSpec&) const = default;
};

void validate(const ModelSpec& spec);

/// Flat, ordered model parameters plus the layout they belong to.
/// Layout:  SoftmaxLinear  [W (C x D, column-major), b (C)]
///          Mlp1           [W1 (H x D), b1 (H), W2 (C x H), b2 (C)]
struct ParamVector {
  ModelSpec layout;
  Eigen::VectorXd values;
};

bool same_layout(const ParamVector& a, const ParamVector& b);

ParamVector add(const ParamVector& p, const ParamVector& q);
ParamVector scale(const ParamVector& p, double c);

/// Weighted mean with pairwise-summation accumulation. Weights must be
/// non-negative with a positive sum.
ParamVector weighted_mean(std::span<const ParamVector* const> params,
                          std::span<const double> weights);
ParamVector weighted_mean(const std::vector<ParamVector>& params,
                          const std::vector<double>& weights);

/// Glorot-uniform weights, zero biases, deterministic in the seed.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

struct ForwardResult {
  Eigen::VectorXd logits;          // length num_classes
  Eigen::VectorXd representation;  // x for SoftmaxLinear, hidden relu for Mlp1
};

ForwardResult forward(const ModelSpec& spec, const ParamVector& params,
                      const Eigen::Ref<const Eigen::VectorXd>& x);

/// Argmax of the logits; ties break toward the lowest class index.
int predict(const ModelSpec& spec, const ParamVector& params,
            const Eigen::Ref<const Eigen::VectorXd>& x);

/// Batched logits for a column-per-sample feature matrix.
Eigen::MatrixXd logits_batch(const ModelSpec& spec, const ParamVector& params,
                             const Eigen::Ref<const Eigen::MatrixXd>& x);

struct LossStrategy {
  enum class Kind { FedAvg, FedProx, Moon, FedRs };

  Kind kind = Kind::FedAvg;
  double mu = 0.01;     // FedProx proximal coefficient
  double tau = 0.5;     // Moon temperature
  double weight = 1.0;  // Moon contrastive weight
  double alpha = 0.5;   // FedRs restricted-softmax scale, in [0, 1]

  bool operator==(const LossStrategy&) const = default;
};

void validate(const LossStrategy& strategy);

/// Extra inputs some strategies need. Missing required entries raise
/// std::invalid_argument naming the entry.
struct StrategyContext {
  const ParamVector* global_params = nullptr;      // FedProx, Moon
  const ParamVector* prev_local_params = nullptr;  // Moon
  std::span<const int> present_classes = {};       // FedRs, sorted class ids
};

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// Batch-mean strategy loss and its exact analytic gradient.
/// `features` is input_dim x batch, one column per sample.
LossGrad loss_and_grad(const ModelSpec& spec, const LossStrategy& strategy,
                       const ParamVector& params,
                       const Eigen::Ref<const Eigen::MatrixXd>& features,
                       std::span<const int> labels, const StrategyContext& ctx);

}  // namespace fedcycle
