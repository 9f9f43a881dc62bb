#include <doctest.h>

#include <vector>

#include "fedcycle/model.hpp"
#include "fedcycle/rng.hpp"
#include "support/finite_diff.hpp"

using namespace fedcycle;
using fedcycle::test::finite_diff_grad;
using fedcycle::test::grad_matches;

namespace {

struct Instance {
  ModelSpec spec;
  ParamVector params;
  ParamVector global;
  ParamVector prev;
  Eigen::MatrixXd features;
  std::vector<int> labels;
  std::vector<int> present;
};

ParamVector smooth_random(const ModelSpec& spec, Rng& rng) {
  ParamVector p{spec, Eigen::VectorXd(spec.param_count())};
  for (Eigen::Index i = 0; i < p.values.size(); ++i) p.values(i) = 0.8 * rng.next_normal();
  return p;
}

// Relu and the FD step do not mix: regenerate until no hidden pre-activation
// sits within 1e-3 of the kink (under the trained and context parameters).
bool kink_free(const Instance& inst) {
  if (inst.spec.arch != Arch::Mlp1) return true;
  const int h = inst.spec.hidden_dim, d = inst.spec.input_dim;
  for (const ParamVector* p : {&inst.params, &inst.global, &inst.prev}) {
    const Eigen::Map<const Eigen::MatrixXd> w1(p->values.data(), h, d);
    const Eigen::Map<const Eigen::VectorXd> b1(p->values.data() + h * d, h);
    const Eigen::MatrixXd pre = (w1 * inst.features).colwise() + b1;
    if (pre.cwiseAbs().minCoeff() < 1e-3) return false;
  }
  return true;
}

Instance make_instance(std::uint64_t seed, bool mlp) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(seed_combine(seed, attempt));
    Instance inst;
    const int dim = rng.next_int(2, 6);
    const int classes = rng.next_int(2, 4);
    const int batch = rng.next_int(1, 8);
    inst.spec = mlp ? ModelSpec{Arch::Mlp1, dim, classes, rng.next_int(2, 5)}
                    : ModelSpec{Arch::SoftmaxLinear, dim, classes, 0};
    inst.params = smooth_random(inst.spec, rng);
    inst.global = smooth_random(inst.spec, rng);
    inst.prev = smooth_random(inst.spec, rng);
    inst.features.resize(dim, batch);
    for (int j = 0; j < batch; ++j) {
      for (int i = 0; i < dim; ++i) inst.features(i, j) = rng.next_normal();
    }
    for (int j = 0; j < batch; ++j) inst.labels.push_back(rng.next_int(0, classes - 1));
    const int present_count = rng.next_int(1, classes);
    for (int c = 0; c < present_count; ++c) inst.present.push_back(c);
    if (kink_free(inst)) return inst;
  }
}

void check_strategy(const LossStrategy& strategy, int instances, std::uint64_t seed_base) {
  int checked = 0;
  for (int t = 0; t < instances; ++t) {
    const bool mlp = t % 2 == 1;
    const Instance inst = make_instance(seed_combine(seed_base, static_cast<std::uint64_t>(t)), mlp);
    StrategyContext ctx;
    ctx.global_params = &inst.global;
    ctx.prev_local_params = &inst.prev;
    ctx.present_classes = inst.present;
    const LossGrad lg =
        loss_and_grad(inst.spec, strategy, inst.params, inst.features, inst.labels, ctx);
    const Eigen::VectorXd fd =
        finite_diff_grad(inst.spec, strategy, inst.params, inst.features, inst.labels, ctx);
    const bool ok = grad_matches(lg.grad.values, fd);
    if (!ok) {
      CAPTURE(t);
      CAPTURE(mlp);
    }
    REQUIRE(ok);
    ++checked;
  }
  CHECK(checked == instances);
}

}  // namespace

TEST_CASE("FedAvg gradients match central finite differences") {
  check_strategy(LossStrategy{}, 100, 0xA1);
}

TEST_CASE("FedProx gradients match central finite differences") {
  LossStrategy s;
  s.kind = LossStrategy::Kind::FedProx;
  s.mu = 0.05;
  check_strategy(s, 100, 0xA2);
}

TEST_CASE("Moon gradients match central finite differences") {
  LossStrategy s;
  s.kind = LossStrategy::Kind::Moon;
  s.tau = 0.5;
  s.weight = 1.0;
  check_strategy(s, 100, 0xA3);
}

TEST_CASE("FedRs gradients match central finite differences") {
  LossStrategy s;
  s.kind = LossStrategy::Kind::FedRs;
  s.alpha = 0.5;
  check_strategy(s, 100, 0xA4);
}
