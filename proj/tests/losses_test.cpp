#include "sgcl/losses.hpp"

#include <algorithm>
#include <cmath>

#include "gtest/gtest.h"
#include "support/oracles.hpp"
#include "support/testutil.hpp"

using namespace sgcl;

namespace {

std::vector<Tensor> to_tensors(const std::vector<oracle::Vec>& vs) {
  std::vector<Tensor> out;
  for (const auto& v : vs)
    out.push_back(Tensor::from_values({static_cast<std::int64_t>(v.size())},
                                      std::vector<double>(v)));
  return out;
}

std::vector<oracle::Vec> random_unit_batch(std::mt19937_64& rng, int count,
                                           int dim) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<oracle::Vec> out;
  for (int i = 0; i < count; ++i) {
    oracle::Vec v(static_cast<std::size_t>(dim));
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& x : v) {
        x = dist(rng);
        norm += x * x;
      }
    } while (norm < 1e-6);
    out.push_back(v);
  }
  return out;
}

}  // namespace

TEST(Cosine, BasicIdentities) {
  std::vector<double> u = {1.0, 2.0, -3.0};
  EXPECT_DOUBLE_EQ(cosine(u, u), 1.0);
  std::vector<double> ex = {1, 0}, ey = {0, 1};
  EXPECT_DOUBLE_EQ(cosine(ex, ey), 0.0);
  std::vector<double> a = {1, 2}, b = {2, 4};
  EXPECT_DOUBLE_EQ(cosine(a, b), 1.0);
  std::vector<double> zero = {0, 0};
  EXPECT_THROW(cosine(zero, ex), std::invalid_argument);
}

TEST(LogPhi, IdentityHeadExamples) {
  ProjectionHead identity = testutil::identity_head();
  Tensor u = Tensor::from_values({2}, {1, 0});

  EXPECT_NEAR(log_phi(u, u, identity, 1.0).item(), 1.0, 1e-15);
  // tau = 0.01 stays representable in log space.
  EXPECT_NEAR(log_phi(u, u, identity, 0.01).item(), 100.0, 1e-12);

  Tensor v = Tensor::from_values({2}, {1, 1});
  EXPECT_NEAR(log_phi(u, v, identity, 1.0).item(), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_THROW(log_phi(u, v, identity, 0.0), std::invalid_argument);
}

TEST(MatchingMu, DefinitionInvolutionAndPairing) {
  TaggedRef c3{TaggedRef::Kind::Sentence, 3};
  TaggedRef h3 = matching_mu(c3);
  EXPECT_EQ(h3.kind, TaggedRef::Kind::View);
  EXPECT_EQ(h3.index, 3);

  TaggedRef back = matching_mu(h3);
  EXPECT_EQ(back.kind, c3.kind);
  EXPECT_EQ(back.index, c3.index);

  // Over a b=4 batch the pairing is fixed-point-free on the 8 elements.
  for (int i = 0; i < 4; ++i) {
    for (auto kind : {TaggedRef::Kind::Sentence, TaggedRef::Kind::View}) {
      TaggedRef x{kind, i};
      TaggedRef y = matching_mu(x);
      EXPECT_FALSE(y.kind == x.kind && y.index == x.index);
      EXPECT_EQ(y.index, x.index);
    }
  }
  EXPECT_THROW(matching_mu(TaggedRef{}), std::invalid_argument);
}

TEST(LossBase, SinglePairDegeneratesToZero) {
  auto world = testutil::make_toy_world(1, 8, 51, true);
  std::vector<Tensor> c = {Tensor::from_values({3}, {1, 2, 3})};
  std::vector<Tensor> h = {Tensor::from_values({3}, {-1, 0.5, 2})};
  LossConfig config{LossVariant::Base, 1.0, 0.1, PoolingMethod::Max,
                    LayerSampler::all_layers(1)};
  auto result = loss_base(c, h, world.dual, config);
  EXPECT_NEAR(result.report.contrastive, 0.0, 1e-15);
  EXPECT_NEAR(result.report.total, 0.0, 1e-15);  // clones, reg = 0
}

TEST(LossBase, HandBuiltTwoBatchMatchesBruteForceEnumeration) {
  // c1=[1,0], h1=[1,0], c2=[0,1], h2=[0,1]; identity f, tau=1: all four
  // elements and the twelve ordered pairs enumerated by the oracle.
  std::vector<oracle::Vec> c = {{1, 0}, {0, 1}};
  std::vector<oracle::Vec> h = {{1, 0}, {0, 1}};
  ProjectionHead identity = testutil::identity_head();
  Tensor got = contrastive_base(to_tensors(c), to_tensors(h), identity, 1.0);
  EXPECT_NEAR(got.item(), oracle::loss_base(c, h, 1.0), 1e-12);
}

TEST(LossBase, RandomBatchesMatchOracleAndStayNonnegative) {
  std::mt19937_64 rng(60);
  ProjectionHead identity = testutil::identity_head();
  for (int trial = 0; trial < 50; ++trial) {
    const int b = 2 + static_cast<int>(rng() % 5);
    auto c = random_unit_batch(rng, b, 6);
    auto h = random_unit_batch(rng, b, 6);
    Tensor got = contrastive_base(to_tensors(c), to_tensors(h), identity, 0.7);
    EXPECT_NEAR(got.item(), oracle::loss_base(c, h, 0.7), 1e-11);
    EXPECT_GE(got.item(), 0.0);
  }
}

TEST(LossOpt1, SinglePairIsZeroAndBruteForceAgrees) {
  ProjectionHead identity = testutil::identity_head();
  std::vector<oracle::Vec> c1 = {{0.3, -0.4}};
  std::vector<oracle::Vec> h1 = {{0.5, 0.1}};
  EXPECT_NEAR(contrastive_opt1(to_tensors(c1), to_tensors(h1), identity, 1.0).item(),
              0.0, 1e-15);

  std::vector<oracle::Vec> c = {{1, 0}, {0, 1}};
  std::vector<oracle::Vec> h = {{1, 0}, {0, 1}};
  Tensor got = contrastive_opt1(to_tensors(c), to_tensors(h), identity, 1.0);
  EXPECT_NEAR(got.item(), oracle::loss_opt1(c, h, 1.0), 1e-12);
}

TEST(LossOpt1, RandomBatchesMatchOracleAndStayNonnegative) {
  std::mt19937_64 rng(61);
  ProjectionHead identity = testutil::identity_head();
  for (int trial = 0; trial < 50; ++trial) {
    const int b = 2 + static_cast<int>(rng() % 5);
    auto c = random_unit_batch(rng, b, 5);
    auto h = random_unit_batch(rng, b, 5);
    Tensor got = contrastive_opt1(to_tensors(c), to_tensors(h), identity, 0.5);
    EXPECT_NEAR(got.item(), oracle::loss_opt1(c, h, 0.5), 1e-11);
    EXPECT_GE(got.item(), 0.0);
  }
}

TEST(LossOpt2, HandValueForAxisVectors) {
  // c1=[1,0], h1=[1,0], h2=[0,1], identity f, tau=1:
  // L_1 = -log(e / (e + 1)) = log(1 + 1/e) ~ 0.313262
  ProjectionHead identity = testutil::identity_head();
  std::vector<oracle::Vec> c = {{1, 0}, {0, 1}};
  std::vector<oracle::Vec> h = {{1, 0}, {0, 1}};
  Tensor got = contrastive_opt2(to_tensors(c), to_tensors(h), identity, 1.0);
  const double l1 = std::log(1.0 + std::exp(-1.0));
  // Both rows have the same value by symmetry here.
  EXPECT_NEAR(got.item(), l1, 1e-6);
  EXPECT_NEAR(got.item(), oracle::loss_opt2(c, h, 1.0), 1e-12);

  std::vector<oracle::Vec> c1 = {{1.0, 0.5}};
  std::vector<oracle::Vec> h1 = {{0.2, 0.9}};
  EXPECT_NEAR(contrastive_opt2(to_tensors(c1), to_tensors(h1), identity, 1.0).item(),
              0.0, 1e-15);
}

TEST(LossOpt2, MatchesCrossEntropyOracleWithRealHeadOverHundredBatches) {
  std::mt19937_64 rng(62);
  HeadConfig head_config;
  head_config.seed = 9;
  ProjectionHead head = init_projection_head(6, head_config);
  const double tau = 0.3;

  for (int trial = 0; trial < 100; ++trial) {
    const int b = 2 + static_cast<int>(rng() % 4);
    auto c = random_unit_batch(rng, b, 6);
    auto h = random_unit_batch(rng, b, 6);

    // Oracle side: project with plain loops, logits = cos/tau, target i.
    double expected = 0.0;
    const auto& w1 = head.w1.values();
    const auto& b1 = head.b1.values();
    const auto& w2 = head.w2.values();
    const auto& b2 = head.b2.values();
    std::vector<oracle::Vec> pc, ph;
    for (int i = 0; i < b; ++i) {
      pc.push_back(oracle::project_head(c[static_cast<std::size_t>(i)], w1, b1,
                                        w2, b2, 6, 24, 6));
      ph.push_back(oracle::project_head(h[static_cast<std::size_t>(i)], w1, b1,
                                        w2, b2, 6, 24, 6));
    }
    for (int i = 0; i < b; ++i) {
      std::vector<double> logits;
      for (int j = 0; j < b; ++j)
        logits.push_back(
            oracle::cosine(pc[static_cast<std::size_t>(i)],
                           ph[static_cast<std::size_t>(j)]) /
            tau);
      expected += oracle::cross_entropy(logits, static_cast<std::size_t>(i));
    }
    expected /= b;

    Tensor got = contrastive_opt2(to_tensors(c), to_tensors(h), head, tau);
    EXPECT_NEAR(got.item(), expected, 1e-9) << "trial " << trial;
  }
}

TEST(LossOpt3, SingleSentenceLeavesOnlyRegularizer) {
  auto world = testutil::make_toy_world(1, 8, 53, true);
  std::vector<Tensor> c = {Tensor::from_values({3}, {1.0, 0.0, 0.0})};
  std::vector<std::vector<Tensor>> views = {
      {Tensor::from_values({3}, {0.0, 1.0, 0.0}),
       Tensor::from_values({3}, {0.0, 0.0, 1.0})}};
  LossConfig config{LossVariant::Opt3, 1.0, 0.25, PoolingMethod::Max,
                    LayerSampler::all_layers(1)};
  auto result = loss_opt3(c, views, world.dual, config);
  EXPECT_NEAR(result.report.contrastive, 0.0, 1e-15);
  EXPECT_NEAR(result.report.total, 0.25 * result.report.regularizer, 1e-15);
}

TEST(LossOpt3, TwoByTwoViewGridMatchesBruteForceDoubleSum) {
  ProjectionHead identity = testutil::identity_head();
  std::vector<oracle::Vec> c = {{1, 0, 0}, {0, 1, 0}};
  std::vector<std::vector<oracle::Vec>> views = {
      {{0.9, 0.1, 0.0}, {0.8, 0.0, 0.2}},
      {{0.1, 0.95, 0.0}, {0.0, 0.85, 0.3}}};
  std::vector<std::vector<Tensor>> view_tensors;
  for (const auto& per_sentence : views)
    view_tensors.push_back(to_tensors(per_sentence));
  Tensor got = contrastive_opt3(to_tensors(c), view_tensors, identity, 1.0);
  EXPECT_NEAR(got.item(), oracle::loss_opt3(c, views, 1.0), 1e-12);
  EXPECT_GE(got.item(), 0.0);
}

TEST(LossOpt3, EveryTermNonnegativeOnRandomGrids) {
  std::mt19937_64 rng(63);
  ProjectionHead identity = testutil::identity_head();
  for (int trial = 0; trial < 30; ++trial) {
    const int b = 2 + static_cast<int>(rng() % 3);
    const int layers = 1 + static_cast<int>(rng() % 4);
    auto c = random_unit_batch(rng, b, 5);
    std::vector<std::vector<oracle::Vec>> views;
    std::vector<std::vector<Tensor>> view_tensors;
    for (int i = 0; i < b; ++i) {
      views.push_back(random_unit_batch(rng, layers, 5));
      view_tensors.push_back(to_tensors(views.back()));
    }
    Tensor got = contrastive_opt3(to_tensors(c), view_tensors, identity, 0.4);
    EXPECT_GE(got.item(), 0.0);
    EXPECT_NEAR(got.item(), oracle::loss_opt3(c, views, 0.4), 1e-11);
  }
}

TEST(LossOpt3, SingleEligibleLayerReducesToOpt2) {
  std::mt19937_64 rng(64);
  HeadConfig head_config;
  head_config.seed = 5;
  ProjectionHead head = init_projection_head(5, head_config);
  for (int trial = 0; trial < 20; ++trial) {
    const int b = 2 + static_cast<int>(rng() % 4);
    auto c = random_unit_batch(rng, b, 5);
    auto h = random_unit_batch(rng, b, 5);
    std::vector<std::vector<Tensor>> single_view;
    for (int i = 0; i < b; ++i)
      single_view.push_back(to_tensors({h[static_cast<std::size_t>(i)]}));
    Tensor via_opt3 = contrastive_opt3(to_tensors(c), single_view, head, 0.35);
    Tensor via_opt2 = contrastive_opt2(to_tensors(c), to_tensors(h), head, 0.35);
    EXPECT_NEAR(via_opt3.item(), via_opt2.item(), 1e-12);
  }
}

TEST(RegTerm, CloneZeroDeltaSquaredAndFlattenOracle) {
  auto world = testutil::make_toy_world(1, 8, 55);
  EXPECT_DOUBLE_EQ(reg_term(world.dual.fixed, world.dual.tuned).item(), 0.0);

  // Single-weight perturbation by delta increases it by exactly delta^2.
  const double delta = 0.37;
  auto& w = world.dual.tuned.find("layers.0.ffn.inner.weight");
  std::vector<double> values(w.values());
  values[5] += delta;
  w.assign_values(values);
  EXPECT_DOUBLE_EQ(reg_term(world.dual.fixed, world.dual.tuned).item(),
                   delta * delta);

  // Random perturbation of all tuned weights matches the flatten oracle.
  std::mt19937_64 rng(77);
  std::vector<double> flat_fixed, flat_tuned;
  for (std::size_t i = 0; i < world.dual.tuned.params.size(); ++i) {
    auto& tensor = world.dual.tuned.params[i].tensor;
    std::vector<double> perturbed(tensor.values());
    if (tensor.requires_grad())
      for (auto& v : perturbed) v += truncated_normal(rng, 0.02);
    tensor.assign_values(perturbed);
    flat_tuned.insert(flat_tuned.end(), perturbed.begin(), perturbed.end());
    const auto& fv = world.dual.fixed.params[i].tensor.values();
    flat_fixed.insert(flat_fixed.end(), fv.begin(), fv.end());
  }
  EXPECT_NEAR(reg_term(world.dual.fixed, world.dual.tuned).item(),
              oracle::squared_distance(flat_fixed, flat_tuned), 1e-12);
}

TEST(RegTerm, RejectsLayoutMismatch) {
  auto a = testutil::make_toy_world(1, 8, 56);
  auto b = testutil::make_toy_world(2, 8, 56);
  EXPECT_THROW(reg_term(a.dual.fixed, b.dual.tuned), std::invalid_argument);
}

TEST(FactorReport, AllVectorsIdenticalGiveInverseTauEverywhere) {
  ProjectionHead identity = testutil::identity_head();
  std::vector<Tensor> c, h;
  for (int i = 0; i < 3; ++i) {
    c.push_back(Tensor::from_values({2}, {0.6, 0.8}));
    h.push_back(Tensor::from_values({2}, {0.6, 0.8}));
  }
  const double tau = 0.25;
  auto factors = factor_report(c, h, identity, tau);
  for (double f : factors) EXPECT_NEAR(f, 1.0 / tau, 1e-12);
}

TEST(FactorReport, OrthogonalDesignSeparatesAttraction) {
  ProjectionHead identity = testutil::identity_head();
  std::vector<Tensor> c, h;
  for (int i = 0; i < 4; ++i) {
    c.push_back(testutil::unit_axis(4, i));
    h.push_back(testutil::unit_axis(4, i));
  }
  const double tau = 0.5;
  auto factors = factor_report(c, h, identity, tau);
  EXPECT_NEAR(factors[0], 1.0 / tau, 1e-12);
  EXPECT_NEAR(factors[1], 0.0, 1e-12);
  EXPECT_NEAR(factors[2], 0.0, 1e-12);
  EXPECT_NEAR(factors[3], 0.0, 1e-12);
}

TEST(FactorReport, RandomBatchMatchesPairEnumerationOracle) {
  std::mt19937_64 rng(65);
  ProjectionHead identity = testutil::identity_head();
  for (int trial = 0; trial < 20; ++trial) {
    const int b = 2 + static_cast<int>(rng() % 6);
    auto c = random_unit_batch(rng, b, 7);
    auto h = random_unit_batch(rng, b, 7);
    auto got = factor_report(to_tensors(c), to_tensors(h), identity, 0.8);
    auto expected = oracle::factors(c, h, 0.8);
    for (int f = 0; f < 4; ++f) EXPECT_NEAR(got[static_cast<std::size_t>(f)],
                                            expected[static_cast<std::size_t>(f)],
                                            1e-12);
  }
  std::vector<Tensor> single = {Tensor::from_values({2}, {1, 0})};
  EXPECT_THROW(factor_report(single, single, identity, 1.0), std::invalid_argument);
}

TEST(LossInvariants, BatchPermutationInvariance) {
  std::mt19937_64 rng(66);
  HeadConfig head_config;
  head_config.seed = 3;
  ProjectionHead head = init_projection_head(5, head_config);
  const double tau = 0.4;

  const int b = 5;
  auto c = random_unit_batch(rng, b, 5);
  auto h = random_unit_batch(rng, b, 5);
  std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  std::vector<oracle::Vec> cp, hp;
  for (auto i : perm) {
    cp.push_back(c[i]);
    hp.push_back(h[i]);
  }

  EXPECT_NEAR(contrastive_opt1(to_tensors(c), to_tensors(h), head, tau).item(),
              contrastive_opt1(to_tensors(cp), to_tensors(hp), head, tau).item(),
              1e-9);
  EXPECT_NEAR(contrastive_opt2(to_tensors(c), to_tensors(h), head, tau).item(),
              contrastive_opt2(to_tensors(cp), to_tensors(hp), head, tau).item(),
              1e-9);
  EXPECT_NEAR(contrastive_base(to_tensors(c), to_tensors(h), head, tau).item(),
              contrastive_base(to_tensors(cp), to_tensors(hp), head, tau).item(),
              1e-9);

  std::vector<std::vector<Tensor>> views, views_p;
  std::vector<std::vector<oracle::Vec>> raw_views;
  for (int i = 0; i < b; ++i) raw_views.push_back(random_unit_batch(rng, 3, 5));
  for (int i = 0; i < b; ++i) views.push_back(to_tensors(raw_views[static_cast<std::size_t>(i)]));
  for (auto i : perm) views_p.push_back(to_tensors(raw_views[i]));
  EXPECT_NEAR(contrastive_opt3(to_tensors(c), views, head, tau).item(),
              contrastive_opt3(to_tensors(cp), views_p, head, tau).item(), 1e-9);
}

TEST(LossInvariants, ScaleInvarianceWithIdentityProjection) {
  std::mt19937_64 rng(67);
  ProjectionHead identity = testutil::identity_head();
  auto c = random_unit_batch(rng, 4, 6);
  auto h = random_unit_batch(rng, 4, 6);
  auto scale_all = [](std::vector<oracle::Vec> vs, double a) {
    for (auto& v : vs)
      for (auto& x : v) x *= a;
    return vs;
  };
  const double tau = 0.6;
  const double base = contrastive_base(to_tensors(c), to_tensors(h), identity, tau).item();
  const double scaled = contrastive_base(to_tensors(scale_all(c, 3.7)),
                                         to_tensors(scale_all(h, 3.7)), identity, tau)
                            .item();
  EXPECT_NEAR(base, scaled, 1e-12);
}

TEST(LossInvariants, TotalEqualsContrastivePlusWeightedRegularizer) {
  auto world = testutil::make_toy_world(2, 16, 58);
  std::mt19937_64 rng(58);
  for (auto& p : world.dual.tuned.params) {
    if (!p.tensor.requires_grad()) continue;
    std::vector<double> values(p.tensor.values());
    for (auto& v : values) v += truncated_normal(rng, 0.01);
    p.tensor.assign_values(values);
  }
  LayerSampler sampler = LayerSampler::all_layers(2);
  auto views = compute_views(world.dual, world.batch, PoolingMethod::Max, sampler);
  auto states = encode(world.dual.tuned, world.batch, false);
  std::vector<Tensor> c;
  for (const auto& s : states) c.push_back(cls_vector(s));

  LossConfig config{LossVariant::Opt3, 0.3, 0.7, PoolingMethod::Max, sampler};
  auto result = loss_opt3(c, views, world.dual, config);
  EXPECT_NEAR(result.report.total,
              result.report.contrastive + 0.7 * result.report.regularizer, 1e-12);
  EXPECT_GT(result.report.regularizer, 0.0);
}
