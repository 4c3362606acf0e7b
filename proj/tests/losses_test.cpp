#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "flaming/errors.hpp"
#include "flaming/losses.hpp"
#include "contrastive_oracle.hpp"
#include "test_support.hpp"

using namespace flaming;
using flaming::testing::random_tensor;
using namespace flaming::oracle;

// ---- flow alignment ----

TEST(LossFlm, EqualSimilaritiesGiveLogOfNegativeCount) {
  Tensor ones({4, 5}, 1.0);
  NoTapeScope none;
  EXPECT_NEAR(loss_flm({ones}, ones, 0.5).item(), std::log(3.0), 1e-14);
}

TEST(LossFlm, OrthogonalOneHotRows) {
  Tensor eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.mutable_data()[i * 4 + i] = 1.0;
  NoTapeScope none;
  EXPECT_NEAR(loss_flm({eye}, eye, 1.0).item(), std::log(3.0) - 1.0, 1e-14);
}

TEST(LossFlm, MatchesPairwiseOracleExhaustively) {
  std::mt19937_64 g(17);
  NoTapeScope none;
  for (std::size_t rows = 2; rows <= 6; ++rows) {
    for (std::size_t blocks = 1; blocks <= 3; ++blocks) {
      for (int rep = 0; rep < 8; ++rep) {
        const double tau = std::uniform_real_distribution<double>(0.1, 2.0)(g);
        Tensor m = random_tensor(g, {rows, 7}, 0.0, 1.0);
        std::vector<Tensor> att;
        std::vector<Rows> att_rows;
        for (std::size_t l = 0; l < blocks; ++l) {
          att.push_back(random_tensor(g, {rows, 7}, 0.0, 1.0));
          att_rows.push_back(rows_of(att.back()));
        }
        EXPECT_NEAR(loss_flm(att, m, tau).item(), flm_oracle(att_rows, rows_of(m), tau), 1e-10);
      }
    }
  }
}

TEST(LossFlm, InclusiveDenominatorAddsThePositive) {
  std::mt19937_64 g(4);
  Tensor a = random_tensor(g, {3, 4}), m = random_tensor(g, {3, 4});
  NoTapeScope none;
  auto rows = loss_flm_rows(a, m, 0.7, true);
  const Rows ar = rows_of(a), mr = rows_of(m);
  for (std::size_t i = 0; i < 3; ++i) {
    double den = 0.0;
    for (std::size_t j = 0; j < 3; ++j) den += std::exp(cos_sim(ar[i], mr[j]) / 0.7);
    EXPECT_NEAR(rows.at(i), -std::log(std::exp(cos_sim(ar[i], mr[i]) / 0.7) / den), 1e-12);
  }
}

TEST(LossFlm, Errors) {
  Tensor a({3, 4}, 1.0), m({2, 4}, 1.0);
  NoTapeScope none;
  EXPECT_THROW(loss_flm({a}, m, 0.5), ContractError);
  EXPECT_THROW(loss_flm({a}, a, 0.0), ConfigError);
  EXPECT_THROW(loss_flm({a}, a, -1.0), ConfigError);
  EXPECT_THROW(loss_flm({Tensor({1, 4}, 1.0)}, Tensor({1, 4}, 1.0), 0.5), ContractError);
}

TEST(LossFlm, InvariantToPositiveRowRescaling) {
  std::mt19937_64 g(5);
  Tensor a = random_tensor(g, {4, 6}, 0.0, 1.0), m = random_tensor(g, {4, 6}, 0.0, 1.0);
  NoTapeScope none;
  const double base = loss_flm({a}, m, 0.5).item();
  Tensor a2 = a.clone(), m2 = m.clone();
  for (std::size_t c = 0; c < 6; ++c) {
    a2.mutable_data()[6 + c] *= 3.7;
    m2.mutable_data()[18 + c] *= 0.02;
  }
  EXPECT_NEAR(loss_flm({a2}, m, 0.5).item(), base, 1e-12);
  EXPECT_NEAR(loss_flm({a}, m2, 0.5).item(), base, 1e-12);
}

TEST(LossFlm, InvariantToConsistentBatchPermutation) {
  std::mt19937_64 g(6);
  Tensor a = random_tensor(g, {5, 3}), m = random_tensor(g, {5, 3});
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  Rows ar = rows_of(a), mr = rows_of(m), ap, mp;
  for (auto p : perm) {
    ap.push_back(ar[p]);
    mp.push_back(mr[p]);
  }
  NoTapeScope none;
  EXPECT_NEAR(loss_flm({from_rows(ap)}, from_rows(mp), 0.5).item(), loss_flm({a}, m, 0.5).item(), 1e-12);
}

TEST(LossFlm, MonotoneInPositiveAlignment) {
  // Row 0 of the attention rotates toward its positive m_0 = e0; negatives stay fixed.
  Tensor m({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0.3, 1});
  NoTapeScope none;
  double prev = std::numeric_limits<double>::infinity();
  for (int step = 0; step <= 10; ++step) {
    const double th = 1.5 * (1.0 - step / 10.0);
    Tensor a({3, 3}, {std::cos(th), std::sin(th), 0.2, 0.1, 1, 0.4, 0.5, 0.2, 1});
    const double term = loss_flm_rows(a, m, 0.5).at(0);
    EXPECT_LT(term, prev);
    prev = term;
  }
}

TEST(LossFlm, L1VariantIsMeanAbsoluteDifference) {
  std::mt19937_64 g(7);
  for (std::size_t rows = 1; rows <= 6; ++rows) {
    Tensor a = random_tensor(g, {rows, 5}), m = random_tensor(g, {rows, 5});
    NoTapeScope none;
    auto r = loss_flm_l1_rows(a, m);
    for (std::size_t i = 0; i < rows; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < 5; ++c) s += std::abs(a.at(i * 5 + c) - m.at(i * 5 + c));
      EXPECT_NEAR(r.at(i), s / 5.0, 1e-15);
    }
  }
}

TEST(LossFlm, BlockSelection) {
  EXPECT_EQ(flm_block_indices(3, FlmBlocks::All), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(flm_block_indices(4, FlmBlocks::FirstHalf), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(flm_block_indices(4, FlmBlocks::SecondHalf), (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(flm_block_indices(3, FlmBlocks::FirstHalf), (std::vector<std::size_t>{0}));
  EXPECT_EQ(flm_block_indices(3, FlmBlocks::SecondHalf), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(flm_block_indices(1, FlmBlocks::SecondHalf), (std::vector<std::size_t>{0}));
}

// ---- temporal consistency ----

TEST(LossTco, IdenticalOrthonormalTokens) {
  Tensor w({2, 2, 2}, {1, 0, 0, 1, 1, 0, 0, 1});
  NoTapeScope none;
  EXPECT_NEAR(loss_tco(w, 1.0).item(), -2.0, 1e-14);
}

TEST(LossTco, SwappedTokens) {
  Tensor w({2, 2, 2}, {1, 0, 0, 1, 0, 1, 1, 0});
  NoTapeScope none;
  EXPECT_NEAR(loss_tco(w, 1.0).item(), 2.0, 1e-14);
}

TEST(LossTco, MatchesPairwiseOracleExhaustively) {
  std::mt19937_64 g(18);
  NoTapeScope none;
  for (std::size_t m = 2; m <= 6; ++m) {
    for (std::size_t t = 2; t <= 4; ++t) {
      for (int rep = 0; rep < 6; ++rep) {
        const double tau = std::uniform_real_distribution<double>(0.1, 2.0)(g);
        Tensor w = random_tensor(g, {t, m, 4});
        EXPECT_NEAR(loss_tco(w, tau).item(), tco_oracle(w, tau), 1e-10) << t << "x" << m;
      }
    }
  }
}

TEST(LossTco, L1VariantOracle) {
  std::mt19937_64 g(19);
  Tensor w = random_tensor(g, {4, 3, 5});
  double acc = 0.0;
  for (std::size_t t = 0; t < 3; ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < 15; ++i) s += std::abs(w.at(t * 15 + i) - w.at((t + 1) * 15 + i));
    acc += s / 15.0;
  }
  NoTapeScope none;
  EXPECT_NEAR(loss_tco_l1(w).item(), acc / 3.0, 1e-14);
}

TEST(LossTco, InvariantToConsistentTokenPermutation) {
  std::mt19937_64 g(20);
  Tensor w = random_tensor(g, {3, 4, 3});
  const std::vector<std::size_t> perm{2, 3, 1, 0};
  Tensor p({3, 4, 3});
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t c = 0; c < 3; ++c) p.mutable_data()[(t * 4 + i) * 3 + c] = w.at((t * 4 + perm[i]) * 3 + c);
    }
  }
  NoTapeScope none;
  EXPECT_NEAR(loss_tco(p, 0.5).item(), loss_tco(w, 0.5).item(), 1e-12);
}

TEST(LossTco, NeedsTwoFrames) {
  NoTapeScope none;
  EXPECT_THROW(loss_tco(Tensor({1, 3, 2}, 1.0), 0.5), ContractError);
  EXPECT_THROW(loss_tco_l1(Tensor({1, 3, 2}, 1.0)), ContractError);
}

TEST(LossTco, TokensByFrameRegroupsClipMajorTokens) {
  // tokens[n*T + t][k][c] = 100n + 10t + k
  Tensor tok({6, 2, 1});
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t t = 0; t < 3; ++t) {
      for (std::size_t k = 0; k < 2; ++k) tok.mutable_data()[(n * 3 + t) * 2 + k] = 100.0 * n + 10.0 * t + k;
    }
  }
  NoTapeScope none;
  auto w = tokens_by_frame(tok, 2, 3);
  ASSERT_EQ(w.shape(), (Shape{3, 4, 1}));
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t n = 0; n < 2; ++n) {
      for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(w.at(t * 4 + n * 2 + k), 100.0 * n + 10.0 * t + k);
    }
  }
}

// ---- per-frame classification ----

TEST(LossGf, UniformLogits) {
  NoTapeScope none;
  EXPECT_NEAR(loss_gf(Tensor({6, 8}, 0.3), {2, 7}).item(), std::log(8.0), 1e-14);
}

TEST(LossGf, LargeCorrectMarginApproachesZero) {
  NoTapeScope none;
  double prev = 1e9;
  for (double margin : {1.0, 5.0, 20.0}) {
    Tensor l({2, 3}, 0.0);
    l.mutable_data()[1] = margin;
    l.mutable_data()[4] = margin;
    const double v = loss_gf(l, {1}).item();
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_LT(prev, 1e-8);
}

TEST(LossGf, MixedBatchMatchesHandSum) {
  std::mt19937_64 g(21);
  Tensor l = random_tensor(g, {6, 4}, -2.0, 2.0);
  const std::vector<std::size_t> labels{3, 0};
  double s = 0.0;
  for (std::size_t r = 0; r < 6; ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < 4; ++c) z += std::exp(l.at(r * 4 + c));
    s += std::log(z) - l.at(r * 4 + labels[r / 3]);
  }
  NoTapeScope none;
  EXPECT_NEAR(loss_gf(l, labels).item(), s / 6.0, 1e-13);
}

TEST(LossGf, Errors) {
  NoTapeScope none;
  EXPECT_THROW(loss_gf(Tensor({6, 4}), {4, 0}), ContractError);
  EXPECT_THROW(loss_gf(Tensor({5, 4}), {1, 0}), ContractError);
}

// ---- total ----

TEST(TotalLoss, ArithmeticExample) {
  NoTapeScope none;
  auto gated = gated_flow_term(Tensor({3}, 1.0), {0.6}, false);
  auto total = total_loss(Tensor::scalar(2.0), gated, Tensor::scalar(-2.0), Tensor::scalar(2.0794));
  EXPECT_NEAR(total.item(), 2.4794, 1e-12);
}

TEST(TotalLoss, FullConfidenceDropsTheFlowTerm) {
  NoTapeScope none;
  auto gated = gated_flow_term(Tensor({4}, 3.0), {1.0, 1.0}, false);
  EXPECT_EQ(gated.item(), 0.0);
}

TEST(TotalLoss, PerSampleAndBatchMeanGates) {
  Tensor rows({4}, {1.0, 3.0, 2.0, 6.0});  // clip 0: 1, 3; clip 1: 2, 6
  NoTapeScope none;
  EXPECT_NEAR(gated_flow_term(rows, {0.5, 0.75}, false).item(), (0.5 * 4 + 0.25 * 8) / 4.0, 1e-15);
  EXPECT_NEAR(gated_flow_term(rows, {0.5, 0.75}, true).item(), 0.375 * 12 / 4.0, 1e-15);
}

namespace {

struct CompositeFixture {
  ModelConfig cfg = flaming::testing::tiny_model_config();
  FlamingModel model{cfg};
  std::mt19937_64 g{23};
  Tensor frames = random_tensor(g, {6, 3, 16, 24}, 0.0, 1.0);
  Tensor flow = random_tensor(g, {6, 24}, 0.0, 1.0);
  std::vector<std::size_t> labels{2, 5};
  LossConfig loss;

  CompositeFixture() {
    loss.k_flm = 2;
    // Zero-initialised biases put ReLUs exactly on their kinks when an input
    // pools to zero; move every parameter off that point.
    for (const auto& [name, t] : model.params().entries()) {
      Tensor h = t;
      for (auto& v : h.mutable_data()) v += 0.05 * std::uniform_real_distribution<double>(-1, 1)(g);
    }
  }
  LossResult run() const { return compute_losses(model.forward(frames), flow, labels, 3, loss); }
};

}  // namespace

TEST(TotalLoss, BreakdownReproducesTheSum) {
  CompositeFixture f;
  NoTapeScope none;
  auto r = f.run();
  const auto& p = r.parts;
  EXPECT_NEAR(p.total, p.ce + p.flm_gated + p.tco + p.gf, 1e-12);
  ASSERT_EQ(p.rho.size(), 2u);
  for (double rho : p.rho) {
    EXPECT_GE(rho, 1.0 / 8.0);
    EXPECT_LE(rho, 1.0);
  }
  // The gate only shrinks the flow term.
  EXPECT_LE(p.flm_gated, p.flm * (1.0 - std::min(p.rho[0], p.rho[1])) + 1e-12);
}

TEST(TotalLoss, SwitchesDropTerms) {
  CompositeFixture f;
  f.loss.use_flm = false;
  f.loss.use_tco = false;
  f.loss.use_gf = false;
  NoTapeScope none;
  auto r = f.run();
  EXPECT_EQ(r.parts.total, r.parts.ce);
  EXPECT_EQ(r.parts.flm_gated, 0.0);
}

TEST(TotalLoss, KflmOutOfRangeIsConfigError) {
  CompositeFixture f;
  f.loss.k_flm = 4;
  NoTapeScope none;
  EXPECT_THROW(f.run(), ConfigError);
}

TEST(TotalLoss, CompositeGradientMatchesFiniteDifferences) {
  CompositeFixture f;
  auto params = f.model.params().tensors();
  auto rep = finite_difference_check([&] { return f.run().total; }, params);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error << " over " << rep.coordinates << " worst "
                          << f.model.params().entries()[rep.worst_param].first << "[" << rep.worst_index << "]";
}

TEST(TotalLoss, NoGradientThroughTheGate) {
  // With only CE and the gated flow term, d total / d logits must equal the CE
  // gradient alone whenever the flow rows do not depend on the logits path.
  Tensor logits({2, 3}, {0.2, 1.0, -0.3, 0.5, 0.1, 0.0});
  logits.set_requires_grad(true);
  Tape tape;
  TapeScope scope(tape);
  const Tensor probs = stop_gradient(softmax_rows(logits));
  std::vector<double> rho{std::max({probs.at(0), probs.at(1), probs.at(2)}),
                          std::max({probs.at(3), probs.at(4), probs.at(5)})};
  Tensor total = total_loss(cross_entropy(logits, {1, 0}), gated_flow_term(Tensor({4}, 2.0), rho, false), {}, {});
  tape.backward(total);
  NoTapeScope none;
  Tensor ref = logits.clone();
  ref.set_requires_grad(true);
  Tape t2;
  {
    TapeScope s2(t2);
    t2.backward(cross_entropy(ref, {1, 0}));
  }
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(logits.grad()[i], ref.grad()[i]);
}
