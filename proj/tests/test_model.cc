#include <gtest/gtest.h>

#include <cmath>

#include "msdn/errors.h"
#include "msdn/model.h"
#include "oracles.h"
#include "test_support.h"

namespace msdn {
namespace {

using testing::max_abs_diff;
using testing::random_normal;
using testing::TempDir;

struct Instance {
  Matrix regions;
  Matrix attributes;
  ModelParams params;
};

Instance random_instance(std::uint64_t seed, std::size_t k, std::size_t r, std::size_t dv, std::size_t da) {
  Rng rng(seed);
  Instance in{random_normal(rng, r, dv), random_normal(rng, k, da), ModelParams::zeros({dv, da, k, r})};
  for (Matrix* m : in.params.matrices()) *m = random_normal(rng, m->rows(), m->cols(), 0.5);
  return in;
}

TEST(InitParams, DeterministicAndBounded) {
  const ModelDims dims{16, 10, 12, 9};
  const ModelParams a = init_params(dims, 5);
  EXPECT_EQ(a, init_params(dims, 5));
  EXPECT_NE(a, init_params(dims, 6));
  for (const Matrix* m : a.matrices()) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m->rows() + m->cols()));
    for (double x : m->data()) EXPECT_LE(std::abs(x), limit);
  }
  EXPECT_EQ(a.w1.rows(), 10u);
  EXPECT_EQ(a.w1.cols(), 16u);
  EXPECT_EQ(a.w3.rows(), 16u);
  EXPECT_EQ(a.w3.cols(), 10u);
  EXPECT_EQ(a.parameter_count(), 5u * 160u);
}

TEST(A2V, ZeroW1GivesUniformAttention) {
  Instance in = random_instance(1, 4, 3, 5, 2);
  in.params.w1 = Matrix(2, 5);
  const A2VOutput out = a2v_forward(in.regions, in.attributes, in.params);
  for (double b : out.beta.data()) EXPECT_NEAR(b, 0.25, 1e-15);
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t d = 0; d < 5; ++d) {
      double expected = 0.0;
      for (std::size_t r = 0; r < 3; ++r) expected += in.regions(r, d);
      EXPECT_NEAR(out.features(k, d), expected / 4.0, 1e-12);
    }
}

TEST(A2V, SingleAttributeTakesAllMass) {
  const Instance in = random_instance(2, 1, 4, 3, 2);
  const A2VOutput out = a2v_forward(in.regions, in.attributes, in.params);
  for (double b : out.beta.data()) EXPECT_EQ(b, 1.0);
  for (std::size_t d = 0; d < 3; ++d) {
    double expected = 0.0;
    for (std::size_t r = 0; r < 4; ++r) expected += in.regions(r, d);
    EXPECT_NEAR(out.features(0, d), expected, 1e-12);
  }
}

TEST(A2V, MatchesScalarOracle) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Instance in = random_instance(seed, 3, 2, 4, 3);
    const A2VOutput out = a2v_forward(in.regions, in.attributes, in.params);
    const auto ref = oracle::a2v(oracle::to_grid(in.regions), oracle::to_grid(in.attributes),
                                 oracle::to_grid(in.params.w1), oracle::to_grid(in.params.w2));
    EXPECT_LE(max_abs_diff(out.beta, ref.beta), 1e-12);
    EXPECT_LE(max_abs_diff(out.features, ref.features), 1e-12);
    EXPECT_LE(max_abs_diff(out.psi, ref.psi), 1e-12);
  }
}

TEST(V2A, ZeroW3GivesUniformAttention) {
  Instance in = random_instance(3, 4, 5, 3, 2);
  in.params.w3 = Matrix(3, 2);
  const V2AOutput out = v2a_forward(in.regions, in.attributes, in.params);
  for (double t : out.tau.data()) EXPECT_NEAR(t, 0.2, 1e-15);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t d = 0; d < 2; ++d) {
      double expected = 0.0;
      for (std::size_t k = 0; k < 4; ++k) expected += in.attributes(k, d);
      EXPECT_NEAR(out.features(r, d), expected / 5.0, 1e-12);
    }
}

TEST(V2A, SingleRegionTakesAllMass) {
  const Instance in = random_instance(4, 3, 1, 4, 2);
  const V2AOutput out = v2a_forward(in.regions, in.attributes, in.params);
  for (double t : out.tau.data()) EXPECT_EQ(t, 1.0);
  for (std::size_t d = 0; d < 2; ++d) {
    double expected = 0.0;
    for (std::size_t k = 0; k < 3; ++k) expected += in.attributes(k, d);
    EXPECT_NEAR(out.features(0, d), expected, 1e-12);
  }
}

TEST(V2A, MatchesScalarOracle) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Instance in = random_instance(100 + seed, 3, 2, 4, 3);
    const V2AOutput out = v2a_forward(in.regions, in.attributes, in.params);
    const auto ref = oracle::v2a(oracle::to_grid(in.regions), oracle::to_grid(in.attributes),
                                 oracle::to_grid(in.params.w3), oracle::to_grid(in.params.w4),
                                 oracle::to_grid(in.params.w_att));
    EXPECT_LE(max_abs_diff(out.tau, ref.tau), 1e-12);
    EXPECT_LE(max_abs_diff(out.features, ref.features), 1e-12);
    EXPECT_LE(max_abs_diff(out.psi_bar, ref.psi_bar), 1e-12);
    EXPECT_LE(max_abs_diff(out.att, ref.att), 1e-12);
    EXPECT_LE(max_abs_diff(out.psi, ref.psi), 1e-12);
  }
}

TEST(Forward, AttentionIsNormalizedForRandomInputs) {
  Rng shape_rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + shape_rng.next_index(6), r = 1 + shape_rng.next_index(6);
    const Instance in = random_instance(1000 + trial, k, r, 1 + shape_rng.next_index(5), 1 + shape_rng.next_index(5));
    const ForwardTrace t = forward(in.regions, in.attributes, in.params);
    for (std::size_t rr = 0; rr < r; ++rr) {
      double s = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += t.a2v.beta(kk, rr);
      EXPECT_NEAR(s, 1.0, 1e-10);
    }
    for (std::size_t kk = 0; kk < k; ++kk) {
      double s = 0.0;
      for (std::size_t rr = 0; rr < r; ++rr) s += t.v2a.tau(rr, kk);
      EXPECT_NEAR(s, 1.0, 1e-10);
    }
  }
}

TEST(Forward, DeterministicAndShapeChecked) {
  const Instance in = random_instance(5, 3, 4, 5, 2);
  const ForwardTrace a = forward(in.regions, in.attributes, in.params);
  const ForwardTrace b = forward(in.regions, in.attributes, in.params);
  EXPECT_EQ(a.a2v.beta, b.a2v.beta);
  EXPECT_EQ(a.v2a.psi, b.v2a.psi);
  EXPECT_THROW(forward(Matrix(4, 6), in.attributes, in.params), ShapeError);
  EXPECT_THROW(forward(in.regions, Matrix(3, 3), in.params), ShapeError);
}

TEST(Forward, ScalingRegionsChangesBeta) {
  const Instance in = random_instance(6, 3, 4, 5, 2);
  Matrix scaled = in.regions;
  for (double& x : scaled.data()) x *= 3.0;
  EXPECT_GT(max_abs_diff(a2v_forward(in.regions, in.attributes, in.params).beta,
                         oracle::to_grid(a2v_forward(scaled, in.attributes, in.params).beta)),
            1e-6);
}

// Gradient of L = Σ_k c_k ψ_k + Σ_k d_k Ψ_k for random weights c, d.
TEST(Backward, ScalarFunctionOfEmbeddingsPassesGradCheck) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Instance in = random_instance(seed, 5, 4, 8, 6);
    Rng rng(seed + 50);
    std::vector<double> c(5), d(5);
    for (double& x : c) x = rng.next_normal();
    for (double& x : d) x = rng.next_normal();

    const ForwardTrace t = forward(in.regions, in.attributes, in.params);
    ModelParams grads = ModelParams::zeros(in.params.dims);
    a2v_backward(in.regions, in.attributes, in.params, t.a2v, c, grads);
    v2a_backward(in.regions, in.attributes, in.params, t.v2a, d, grads);

    for (std::size_t m = 0; m < 5; ++m) {
      auto f = [&](std::span<const double> values) {
        ModelParams p = in.params;
        std::copy(values.begin(), values.end(), p.matrices()[m]->data().begin());
        const ForwardTrace ft = forward(in.regions, in.attributes, p);
        return dot(c, ft.a2v.psi) + dot(d, ft.v2a.psi);
      };
      const auto r = grad_check(f, in.params.matrices()[m]->data(), grads.matrices()[m]->data());
      EXPECT_LE(r.max_rel_error, 1e-5) << ModelParams::kNames[m] << " seed " << seed;
    }
  }
}

TEST(ClassScores, DotProductWithEachClass) {
  const Matrix z{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const auto s = class_scores(std::vector<double>{0, 1, 0}, z);
  EXPECT_EQ(s, (std::vector<double>{0, 1, 0}));
  const auto zero = class_scores(std::vector<double>{0, 0, 0}, z);
  for (double x : zero) EXPECT_EQ(x, 0.0);
}

TEST(ClassScores, MatchesOracle) {
  Rng rng(8);
  const Matrix z = rng_uniform(rng, 0.0, 1.0, 6, 4);
  std::vector<double> e(4);
  for (double& x : e) x = rng.next_normal();
  const auto s = class_scores(e, z);
  for (std::size_t c = 0; c < 6; ++c) {
    double expected = 0.0;
    for (std::size_t k = 0; k < 4; ++k) expected += e[k] * z(c, k);
    EXPECT_NEAR(s[c], expected, 1e-12);
  }
  EXPECT_THROW(class_scores(std::vector<double>{1.0}, z), ShapeError);
}

TEST(Checkpoint, RoundTripIsExact) {
  TempDir dir("ckpt");
  const ModelParams p = init_params({7, 5, 4, 3}, 11);
  save_checkpoint(p, dir / "p.ckpt");
  EXPECT_EQ(load_checkpoint(dir / "p.ckpt"), p);
}

TEST(Checkpoint, FlattenInverts) {
  const ModelParams p = init_params({3, 2, 4, 5}, 2);
  const auto flat = flatten(p);
  EXPECT_EQ(flat.size(), p.parameter_count());
  EXPECT_EQ(unflatten(p.dims, flat), p);
}

}  // namespace
}  // namespace msdn
