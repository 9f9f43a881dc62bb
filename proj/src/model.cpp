#include "fedcycle/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fedcycle/errors.hpp"
#include "fedcycle/rng.hpp"

namespace fedcycle {

namespace {

using MapMat = Eigen::Map<const Eigen::MatrixXd>;
using MapVec = Eigen::Map<const Eigen::VectorXd>;
using MutMat = Eigen::Map<Eigen::MatrixXd>;
using MutVec = Eigen::Map<Eigen::VectorXd>;

// Flat-vector segment views. Offsets follow the layout documented in the
// header; weight matrices are column-major.
struct LinearView {
  MapMat w;
  MapVec b;
};

struct MlpView {
  MapMat w1;
  MapVec b1;
  MapMat w2;
  MapVec b2;
};

LinearView linear_view(const ModelSpec& s, const Eigen::VectorXd& v) {
  const int c = s.num_classes, d = s.input_dim;
  return {MapMat(v.data(), c, d), MapVec(v.data() + c * d, c)};
}

MlpView mlp_view(const ModelSpec& s, const Eigen::VectorXd& v) {
  const int d = s.input_dim, h = s.hidden_dim, c = s.num_classes;
  const double* p = v.data();
  return {MapMat(p, h, d), MapVec(p + h * d, h), MapMat(p + h * d + h, c, h),
          MapVec(p + h * d + h + c * h, c)};
}

double cosine(const Eigen::Ref<const Eigen::VectorXd>& u,
              const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;  // zero-vector convention
  return u.dot(v) / (nu * nv);
}

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

int ModelSpec::param_count() const {
  switch (arch) {
    case Arch::SoftmaxLinear:
      return num_classes * input_dim + num_classes;
    case Arch::Mlp1:
      return hidden_dim * input_dim + hidden_dim + num_classes * hidden_dim + num_classes;
  }
  return 0;
}

void validate(const ModelSpec& spec) {
  if (spec.input_dim < 1) throw ConfigError("model.input_dim must be >= 1");
  if (spec.num_classes < 2) throw ConfigError("model.num_classes must be >= 2");
  if (spec.arch == Arch::Mlp1 && spec.hidden_dim < 1) {
    throw ConfigError("model.hidden_dim must be >= 1 for mlp1");
  }
  if (spec.arch == Arch::SoftmaxLinear && spec.hidden_dim != 0) {
    throw ConfigError("model.hidden_dim must be omitted for softmax_linear");
  }
}

void validate(const LossStrategy& strategy) {
  if (strategy.mu < 0.0) throw ConfigError("strategy mu must be >= 0");
  if (!(strategy.tau > 0.0)) throw ConfigError("strategy tau must be > 0");
  if (strategy.weight < 0.0) throw ConfigError("strategy weight must be >= 0");
  if (strategy.alpha < 0.0 || strategy.alpha > 1.0) {
    throw ConfigError("strategy alpha must lie in [0, 1]");
  }
}

bool same_layout(const ParamVector& a, const ParamVector& b) {
  return a.layout == b.layout && a.values.size() == b.values.size();
}

ParamVector add(const ParamVector& p, const ParamVector& q) {
  require(same_layout(p, q), "add: parameter layouts differ");
  return {p.layout, p.values + q.values};
}

ParamVector scale(const ParamVector& p, double c) {
  return {p.layout, c * p.values};
}

namespace {

Eigen::VectorXd pairwise_weighted_sum(std::span<const ParamVector* const> ps,
                                      std::span<const double> ws, std::size_t lo,
                                      std::size_t hi) {
  if (hi - lo == 1) return ws[lo] * ps[lo]->values;
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_weighted_sum(ps, ws, lo, mid) + pairwise_weighted_sum(ps, ws, mid, hi);
}

double pairwise_sum(std::span<const double> ws, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return ws[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum(ws, lo, mid) + pairwise_sum(ws, mid, hi);
}

}  // namespace

ParamVector weighted_mean(std::span<const ParamVector* const> params,
                          std::span<const double> weights) {
  require(!params.empty(), "weighted_mean: empty input");
  require(params.size() == weights.size(), "weighted_mean: params/weights size mismatch");
  for (std::size_t i = 1; i < params.size(); ++i) {
    require(same_layout(*params[0], *params[i]), "weighted_mean: parameter layouts differ");
  }
  for (double w : weights) {
    require(w >= 0.0 && std::isfinite(w), "weighted_mean: weights must be finite and >= 0");
  }
  const double total = pairwise_sum(weights, 0, weights.size());
  require(total > 0.0, "weighted_mean: weights sum to zero");
  ParamVector out{params[0]->layout,
                  pairwise_weighted_sum(params, weights, 0, params.size())};
  out.values /= total;
  return out;
}

ParamVector weighted_mean(const std::vector<ParamVector>& params,
                          const std::vector<double>& weights) {
  std::vector<const ParamVector*> ptrs(params.size());
  std::transform(params.begin(), params.end(), ptrs.begin(),
                 [](const ParamVector& p) { return &p; });
  return weighted_mean(std::span<const ParamVector* const>(ptrs), std::span(weights));
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  ParamVector p{spec, Eigen::VectorXd::Zero(spec.param_count())};
  Rng rng(seed);
  const auto fill_uniform = [&](double* dst, int n, int fan_in, int fan_out) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (int i = 0; i < n; ++i) dst[i] = s * (2.0 * rng.next_double() - 1.0);
  };
  double* v = p.values.data();
  const int d = spec.input_dim, c = spec.num_classes, h = spec.hidden_dim;
  if (spec.arch == Arch::SoftmaxLinear) {
    fill_uniform(v, c * d, d, c);  // biases stay zero
  } else {
    fill_uniform(v, h * d, d, h);
    fill_uniform(v + h * d + h, c * h, h, c);
  }
  return p;
}

Eigen::MatrixXd logits_batch(const ModelSpec& spec, const ParamVector& params,
                             const Eigen::Ref<const Eigen::MatrixXd>& x) {
  require(params.layout == spec, "logits_batch: params do not match spec");
  require(x.rows() == spec.input_dim, "logits_batch: feature dimension mismatch");
  if (spec.arch == Arch::SoftmaxLinear) {
    const auto [w, b] = linear_view(spec, params.values);
    return (w * x).colwise() + b;
  }
  const auto m = mlp_view(spec, params.values);
  const Eigen::MatrixXd hidden = ((m.w1 * x).colwise() + m.b1).cwiseMax(0.0);
  return (m.w2 * hidden).colwise() + m.b2;
}

ForwardResult forward(const ModelSpec& spec, const ParamVector& params,
                      const Eigen::Ref<const Eigen::VectorXd>& x) {
  require(params.layout == spec, "forward: params do not match spec");
  require(x.size() == spec.input_dim, "forward: feature dimension mismatch");
  if (spec.arch == Arch::SoftmaxLinear) {
    const auto [w, b] = linear_view(spec, params.values);
    return {w * x + b, x};
  }
  const auto m = mlp_view(spec, params.values);
  const Eigen::VectorXd hidden = (m.w1 * x + m.b1).cwiseMax(0.0);
  return {m.w2 * hidden + m.b2, hidden};
}

int predict(const ModelSpec& spec, const ParamVector& params,
            const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::VectorXd logits = forward(spec, params, x).logits;
  int best = 0;
  for (int c = 1; c < logits.size(); ++c) {
    if (logits(c) > logits(best)) best = c;  // strict: ties keep the lowest index
  }
  return best;
}

LossGrad loss_and_grad(const ModelSpec& spec, const LossStrategy& strategy,
                       const ParamVector& params,
                       const Eigen::Ref<const Eigen::MatrixXd>& features,
                       std::span<const int> labels, const StrategyContext& ctx) {
  validate(spec);
  validate(strategy);
  require(params.layout == spec, "loss_and_grad: params do not match spec");
  require(features.cols() > 0, "loss_and_grad: empty batch");
  require(features.rows() == spec.input_dim, "loss_and_grad: feature dimension mismatch");
  require(static_cast<std::size_t>(features.cols()) == labels.size(),
          "loss_and_grad: features/labels size mismatch");
  for (int y : labels) {
    require(y >= 0 && y < spec.num_classes, "loss_and_grad: label out of range");
  }

  using Kind = LossStrategy::Kind;
  if (strategy.kind == Kind::FedProx || strategy.kind == Kind::Moon) {
    require(ctx.global_params != nullptr, "loss_and_grad: ctx.global_params missing");
    require(same_layout(*ctx.global_params, params),
            "loss_and_grad: ctx.global_params layout mismatch");
  }
  if (strategy.kind == Kind::Moon) {
    require(ctx.prev_local_params != nullptr, "loss_and_grad: ctx.prev_local_params missing");
    require(same_layout(*ctx.prev_local_params, params),
            "loss_and_grad: ctx.prev_local_params layout mismatch");
  }
  if (strategy.kind == Kind::FedRs) {
    require(!ctx.present_classes.empty(), "loss_and_grad: ctx.present_classes missing");
    for (int c : ctx.present_classes) {
      require(c >= 0 && c < spec.num_classes, "loss_and_grad: present class out of range");
    }
  }

  const int num_classes = spec.num_classes;
  const auto batch = static_cast<int>(features.cols());
  const double inv_batch = 1.0 / static_cast<double>(batch);

  // Forward pass, keeping the hidden pre-activation for the relu backward.
  Eigen::MatrixXd logits;
  Eigen::MatrixXd hidden_pre;
  Eigen::MatrixXd hidden;
  if (spec.arch == Arch::SoftmaxLinear) {
    const auto [w, b] = linear_view(spec, params.values);
    logits = (w * features).colwise() + b;
  } else {
    const auto m = mlp_view(spec, params.values);
    hidden_pre = (m.w1 * features).colwise() + m.b1;
    hidden = hidden_pre.cwiseMax(0.0);
    logits = (m.w2 * hidden).colwise() + m.b2;
  }

  // FedRs: scale logits of classes absent from the client before softmax.
  std::vector<char> present;
  if (strategy.kind == Kind::FedRs) {
    present.assign(static_cast<std::size_t>(num_classes), 0);
    for (int c : ctx.present_classes) present[static_cast<std::size_t>(c)] = 1;
    for (int c = 0; c < num_classes; ++c) {
      if (!present[static_cast<std::size_t>(c)]) logits.row(c) *= strategy.alpha;
    }
  }

  // Numerically stable softmax cross-entropy over columns.
  const Eigen::RowVectorXd shift = logits.colwise().maxCoeff();
  Eigen::MatrixXd probs = (logits.rowwise() - shift).array().exp().matrix();
  const Eigen::RowVectorXd norms = probs.colwise().sum();
  double loss = 0.0;
  for (int j = 0; j < batch; ++j) {
    loss += std::log(norms(j)) + shift(j) - logits(labels[static_cast<std::size_t>(j)], j);
  }
  loss *= inv_batch;
  probs.array().rowwise() /= norms.array();

  Eigen::MatrixXd dlogits = probs;
  for (int j = 0; j < batch; ++j) {
    dlogits(labels[static_cast<std::size_t>(j)], j) -= 1.0;
  }
  dlogits *= inv_batch;
  if (strategy.kind == Kind::FedRs) {
    for (int c = 0; c < num_classes; ++c) {
      if (!present[static_cast<std::size_t>(c)]) dlogits.row(c) *= strategy.alpha;
    }
  }

  // Moon contrastive term. Representations under the global and previous
  // local parameters are constants; gradients flow through the current
  // representation only, which for SoftmaxLinear is the raw input.
  Eigen::MatrixXd drep;
  if (strategy.kind == Kind::Moon && strategy.weight > 0.0) {
    Eigen::MatrixXd rep_g, rep_p;
    const bool rep_has_grad = spec.arch == Arch::Mlp1;
    if (rep_has_grad) {
      const auto mg = mlp_view(spec, ctx.global_params->values);
      const auto mp = mlp_view(spec, ctx.prev_local_params->values);
      rep_g = ((mg.w1 * features).colwise() + mg.b1).cwiseMax(0.0);
      rep_p = ((mp.w1 * features).colwise() + mp.b1).cwiseMax(0.0);
      drep = Eigen::MatrixXd::Zero(hidden.rows(), batch);
    }
    double loss_con = 0.0;
    for (int j = 0; j < batch; ++j) {
      const Eigen::VectorXd rep =
          rep_has_grad ? Eigen::VectorXd(hidden.col(j)) : Eigen::VectorXd(features.col(j));
      const Eigen::VectorXd vg =
          rep_has_grad ? Eigen::VectorXd(rep_g.col(j)) : Eigen::VectorXd(features.col(j));
      const Eigen::VectorXd vp =
          rep_has_grad ? Eigen::VectorXd(rep_p.col(j)) : Eigen::VectorXd(features.col(j));
      const double s_g = cosine(rep, vg);
      const double s_p = cosine(rep, vp);
      loss_con += std::log1p(std::exp((s_p - s_g) / strategy.tau));
      if (rep_has_grad) {
        const double p_prev = 1.0 / (1.0 + std::exp((s_g - s_p) / strategy.tau));
        const double coef = strategy.weight * inv_batch * p_prev / strategy.tau;
        const double nrep = rep.norm();
        if (nrep > 0.0) {
          const double nvg = vg.norm();
          const double nvp = vp.norm();
          if (nvg > 0.0) drep.col(j) -= coef * (vg / nvg - s_g * rep / nrep) / nrep;
          if (nvp > 0.0) drep.col(j) += coef * (vp / nvp - s_p * rep / nrep) / nrep;
        }
      }
    }
    loss += strategy.weight * loss_con * inv_batch;
  }

  // Backward pass into the flat gradient vector.
  LossGrad out;
  out.grad = {spec, Eigen::VectorXd::Zero(spec.param_count())};
  double* g = out.grad.values.data();
  const int d = spec.input_dim, c = num_classes, h = spec.hidden_dim;
  if (spec.arch == Arch::SoftmaxLinear) {
    MutMat dw(g, c, d);
    MutVec db(g + c * d, c);
    dw = dlogits * features.transpose();
    db = dlogits.rowwise().sum();
  } else {
    const auto m = mlp_view(spec, params.values);
    MutMat dw1(g, h, d);
    MutVec db1(g + h * d, h);
    MutMat dw2(g + h * d + h, c, h);
    MutVec db2(g + h * d + h + c * h, c);
    dw2 = dlogits * hidden.transpose();
    db2 = dlogits.rowwise().sum();
    Eigen::MatrixXd dhidden = m.w2.transpose() * dlogits;
    if (drep.size() > 0) dhidden += drep;
    const Eigen::MatrixXd dpre =
        (hidden_pre.array() > 0.0).select(dhidden, Eigen::MatrixXd::Zero(h, batch));
    dw1 = dpre * features.transpose();
    db1 = dpre.rowwise().sum();
  }

  if (strategy.kind == Kind::FedProx) {
    const Eigen::VectorXd diff = params.values - ctx.global_params->values;
    loss += 0.5 * strategy.mu * diff.squaredNorm();
    out.grad.values += strategy.mu * diff;
  }

  if (!std::isfinite(loss)) {
    throw DivergenceError("non-finite loss", -1, -1);
  }
  out.loss = loss;
  return out;
}

}  // namespace fedcycle
