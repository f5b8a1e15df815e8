#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "rgn/autodiff.hpp"
#include "rgn/grad_check.hpp"
#include "rgn/optimizer.hpp"
#include "rgn/param_store.hpp"
#include "test_util.hpp"

namespace rgn {
namespace {

using ad::Graph;
using ad::Var;
using testing::op_grad_error;
using testing::random_tensor;
using Vars = std::vector<Var>;

TEST(AutodiffValues, SoftplusOfZeroIsLn2) {
  Graph g;
  EXPECT_NEAR(ad::softplus(g.constant(Tensor::scalar(0.0))).item(), std::log(2.0), 1e-15);
}

TEST(AutodiffValues, SoftplusIsOverflowSafe) {
  Graph g;
  Var big = ad::softplus(g.constant(Tensor::vector({1000.0, -1000.0, 40.0})));
  EXPECT_DOUBLE_EQ(big.value()[0], 1000.0);
  EXPECT_GE(big.value()[1], 0.0);
  EXPECT_TRUE(big.value().all_finite());
  EXPECT_TRUE(ad::exp(g.constant(Tensor::scalar(-1000.0))).value().all_finite());
}

TEST(AutodiffValues, SoftmaxOfEqualEntriesIsUniform) {
  Graph g;
  Var s = ad::softmax(g.constant(Tensor::vector({3.7, 3.7})));
  EXPECT_DOUBLE_EQ(s.value()[0], 0.5);
  EXPECT_DOUBLE_EQ(s.value()[1], 0.5);
}

TEST(AutodiffValues, LeakyReluUsesSlope) {
  Graph g;
  EXPECT_DOUBLE_EQ(ad::leaky_relu(g.constant(Tensor::scalar(-1.0)), 0.2).item(), -0.2);
  EXPECT_DOUBLE_EQ(ad::leaky_relu(g.constant(Tensor::scalar(2.0)), 0.2).item(), 2.0);
}

TEST(AutodiffValues, LayerNormOfConstantVectorIsNearZero) {
  Graph g;
  Var y = ad::layer_norm(g.constant(Tensor::filled({6}, 4.2)));
  for (double v : y.value().data()) EXPECT_LT(std::abs(v), 1e-2);
}

TEST(AutodiffValues, SoftmaxRowsAndColumnsSumToOne) {
  std::mt19937_64 rng(3);
  Graph g;
  Var m = g.constant(random_tensor({4, 5}, rng, -20.0, 20.0));
  Var rows = ad::softmax(m, 1);
  Var cols = ad::softmax(m, 0);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 5; ++c) s += rows.value().at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  for (std::size_t c = 0; c < 5; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < 4; ++r) s += cols.value().at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(AutodiffValues, ShapeMismatchNamesBothShapes) {
  Graph g;
  Var a = g.constant(Tensor({2, 3}));
  Var b = g.constant(Tensor({4, 2}));
  try {
    (void)ad::matmul(a, b);
    FAIL() << "expected a shape error";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4, 2]"), std::string::npos) << msg;
  }
  EXPECT_THROW((void)ad::add(g.constant(Tensor({2})), g.constant(Tensor({3}))), ShapeError);
}

TEST(AutodiffBackward, SquareAtThree) {
  Graph g;
  Var x = g.variable(Tensor::scalar(3.0));
  g.backward(ad::mul(x, x));
  EXPECT_DOUBLE_EQ(g.grad(x).item(), 6.0);
}

TEST(AutodiffBackward, SoftplusSlopeAtZero) {
  Graph g;
  Var x = g.variable(Tensor::scalar(0.0));
  g.backward(ad::softplus(x));
  EXPECT_DOUBLE_EQ(g.grad(x).item(), 0.5);
}

TEST(AutodiffBackward, SecondBackwardThrows) {
  Graph g;
  Var x = g.variable(Tensor::scalar(1.0));
  Var y = ad::mul(x, x);
  g.backward(y);
  EXPECT_THROW(g.backward(y), std::logic_error);
}

TEST(AutodiffBackward, NonScalarLossThrows) {
  Graph g;
  Var x = g.variable(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(g.backward(ad::scale(x, 2.0)), std::invalid_argument);
}

TEST(AutodiffBackward, SharedSubexpressionAccumulates) {
  Graph g;
  Var x = g.variable(Tensor::scalar(2.0));
  Var y = ad::add(ad::mul(x, x), ad::scale(x, 3.0));  // x^2 + 3x
  g.backward(y);
  EXPECT_DOUBLE_EQ(g.grad(x).item(), 7.0);
}

TEST(AutodiffBackward, DisabledModeRecordsNothingDifferentiable) {
  ParamStore store;
  store.add("w", Tensor::vector({1.0, 2.0}));
  Graph g(&store, ad::GradMode::kDisabled);
  Var w = g.param("w");
  Var y = ad::sum(ad::mul(w, w));
  EXPECT_DOUBLE_EQ(y.item(), 5.0);
  EXPECT_FALSE(y.requires_grad());
}

TEST(AutodiffBackward, ParamGradientsFlushIntoStore) {
  ParamStore store;
  const std::size_t w = store.add("w", Tensor::vector({1.0, -2.0}));
  store.zero_grad();
  for (int rep = 0; rep < 2; ++rep) {
    Graph g(&store);
    Var p = g.param(w);
    EXPECT_EQ(g.param("w").id(), p.id());  // memoized leaf
    g.backward(ad::sum(ad::mul(p, p)));
    g.flush_param_grads(store);
  }
  EXPECT_DOUBLE_EQ(store.grad(w)[0], 4.0);
  EXPECT_DOUBLE_EQ(store.grad(w)[1], -8.0);
}

// Finite-difference check of every forward op on random small tensors.
class OpGradient : public ::testing::Test {
 protected:
  std::mt19937_64 rng{42};
  Tensor r(Shape s, double lo = -1.0, double hi = 1.0) { return random_tensor(std::move(s), rng, lo, hi); }
  static constexpr double kTol = 1e-6;
};

TEST_F(OpGradient, Matmul) {
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::matmul(v[0], v[1]); }, {r({3, 4}), r({4, 2})}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::matmul(v[0], v[1]); }, {r({3, 4}), r({4})}), kTol);
}

TEST_F(OpGradient, Elementwise) {
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::add(v[0], v[1]); }, {r({2, 3}), r({2, 3})}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::sub(v[0], v[1]); }, {r({5}), r({5})}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::mul(v[0], v[1]); }, {r({2, 3}), r({2, 3})}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::scale(v[0], -1.7); }, {r({4})}), kTol);
  const Tensor c = r({4});
  EXPECT_LT(op_grad_error([&](Graph&, Vars& v) { return ad::add_constant(v[0], c); }, {r({4})}), kTol);
}

TEST_F(OpGradient, Broadcasts) {
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::add_rowwise(v[0], v[1]); }, {r({3, 4}), r({4})}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::outer_sum(v[0], v[1]); }, {r({3}), r({5})}), kTol);
}

TEST_F(OpGradient, StructuralOps) {
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::transpose(v[0]); }, {r({2, 3})}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::concat({v[0], v[1]}); }, {r({2}), r({3})}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::concat({v[0], v[1]}, 1); }, {r({2, 2}), r({2, 3})}),
            kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::concat({v[0], v[1]}, 0); }, {r({1, 3}), r({2, 3})}),
            kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::stack_rows(v); }, {r({3}), r({3}), r({3})}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::slice(v[0], 0, 1, 3); }, {r({5})}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::slice(v[0], 1, 1, 2); }, {r({3, 4})}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::row(v[0], 2); }, {r({3, 4})}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::reshape(v[0], {6}); }, {r({2, 3})}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::pick(v[0], 3); }, {r({5})}), kTol);
}

TEST_F(OpGradient, Reductions) {
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::sum(v[0]); }, {r({2, 3})}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::mean(v[0]); }, {r({7})}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::l2_diff(v[0], v[1]); }, {r({4}), r({4})}), kTol);
}

TEST_F(OpGradient, Nonlinearities) {
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::sigmoid(v[0]); }, {r({6}, -3, 3)}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::tanh(v[0]); }, {r({6}, -3, 3)}), kTol);
  // Keep away from the kinks so central differences are meaningful.
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::relu(v[0]); },
                          {Tensor::vector({-1.3, -0.2, 0.4, 2.0})}),
            kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::leaky_relu(v[0], 0.2); },
                          {Tensor::vector({-1.3, -0.2, 0.4, 2.0})}),
            kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::softplus(v[0]); }, {r({6}, -30, 30)}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::exp(v[0]); }, {r({6}, -2, 2)}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::log(v[0]); }, {r({6}, 0.2, 3)}), kTol);
}

TEST_F(OpGradient, SoftmaxFamily) {
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::softmax(v[0]); }, {r({5}, -2, 2)}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::softmax(v[0], 1); }, {r({3, 4}, -2, 2)}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::softmax(v[0], 0); }, {r({3, 4}, -2, 2)}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::log_softmax(v[0]); }, {r({5}, -2, 2)}), kTol);
}

TEST_F(OpGradient, LayerNorm) {
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::layer_norm(v[0]); }, {r({6}, -2, 2)}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::layer_norm(v[0]); }, {r({3, 4}, -2, 2)}), kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::layer_norm(v[0], v[1], v[2]); },
                          {r({3, 4}, -2, 2), r({4}), r({4})}),
            kTol);
}

TEST_F(OpGradient, Linear) {
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::linear(v[0], v[1], v[2]); },
                          {r({4}), r({3, 4}), r({3})}),
            kTol);
  EXPECT_LT(op_grad_error([](Graph&, Vars& v) { return ad::linear(v[0], v[1]); }, {r({4}), r({2, 4})}), kTol);
}

TEST(Dropout, EvalModeIsExactIdentity) {
  std::mt19937_64 rng(1);
  Graph g;
  Tensor x = random_tensor({50}, rng);
  Var y = ad::dropout(g.constant(x), 0.3, /*train=*/false, rng);
  EXPECT_EQ(y.value(), x);
}

TEST(Dropout, TrainModeStatistics) {
  std::mt19937_64 rng(7);
  const double p = 0.1;
  const std::size_t n = 100000;
  Graph g;
  Var y = ad::dropout(g.constant(Tensor::filled({n}, 1.0)), p, /*train=*/true, rng);
  std::size_t zeros = 0;
  for (double v : y.value().data()) {
    if (v == 0.0) {
      ++zeros;
    } else {
      EXPECT_DOUBLE_EQ(v, 1.0 / (1.0 - p));
    }
  }
  const double frac = static_cast<double>(zeros) / static_cast<double>(n);
  EXPECT_NEAR(frac, p, 3.0 * std::sqrt(p * (1 - p) / static_cast<double>(n)));
}

TEST(Dropout, RejectsInvalidProbability) {
  std::mt19937_64 rng(1);
  Graph g;
  Var x = g.constant(Tensor::vector({1.0}));
  EXPECT_THROW((void)ad::dropout(x, 1.0, true, rng), std::invalid_argument);
  EXPECT_THROW((void)ad::dropout(x, -0.1, true, rng), std::invalid_argument);
}

TEST(GradCheck, QuadraticToyModel) {
  ParamStore store;
  store.add("a", Tensor::vector({0.3, -1.2, 2.0}));
  store.add("b", Tensor::matrix(2, 2, {1.0, 0.5, -0.5, 2.0}));
  auto loss = [](Graph& g) {
    Var a = g.param("a");
    Var b = g.param("b");
    return ad::add(ad::sum(ad::mul(a, a)), ad::sum(ad::mul(b, ad::scale(b, 3.0))));
  };
  const GradCheckReport report = grad_check(loss, store, {.h = 1e-5, .tolerance = 1e-8});
  EXPECT_TRUE(report.passed()) << report.max_rel_error;
  EXPECT_LT(report.max_rel_error, 1e-8);
  EXPECT_EQ(report.coords_checked, 7u);
  EXPECT_DOUBLE_EQ(store.value("a")[1], -1.2);  // restored
}

TEST(GradCheck, FlagsDropoutNonDeterminism) {
  ParamStore store;
  store.add("w", Tensor::filled({32}, 0.5));
  auto rng = std::make_shared<std::mt19937_64>(5);
  auto loss = [rng](Graph& g) { return ad::sum(ad::dropout(g.param("w"), 0.5, true, *rng)); };
  const GradCheckReport report = grad_check(loss, store);
  EXPECT_FALSE(report.deterministic);
  EXPECT_FALSE(report.passed());
}

TEST(GradCheck, RelativeErrorDefinition) {
  EXPECT_DOUBLE_EQ(relative_error(0.5, 0.25), 0.25);
  EXPECT_DOUBLE_EQ(relative_error(10.0, 8.0), 0.2);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore store;
  const std::size_t w = store.add("w", Tensor::vector({0.0, 5.0}));
  store.zero_grad();
  store.accumulate_grad(w, Tensor::vector({1.0, -1.0}));
  adam_step(store, {1e-4});
  EXPECT_NEAR(store.value(w)[0], -1e-4, 1e-11);
  EXPECT_NEAR(store.value(w)[1], 5.0 + 1e-4, 1e-11);
  EXPECT_EQ(store.step_count(), 1u);
  EXPECT_FALSE(store.has_grad(w));
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParamStore store;
  const std::size_t w = store.add("w", Tensor::vector({0.25, -3.0}));
  for (int i = 0; i < 3; ++i) {
    store.zero_grad();
    adam_step(store);
  }
  EXPECT_EQ(store.value(w), Tensor::vector({0.25, -3.0}));
}

TEST(Adam, ConstantGradientStepsDoNotGrow) {
  ParamStore store;
  const std::size_t w = store.add("w", Tensor::scalar(0.0));
  double prev = store.value(w).item();
  std::vector<double> deltas;
  for (int i = 0; i < 2; ++i) {
    store.zero_grad();
    store.accumulate_grad(w, Tensor::scalar(0.7));
    adam_step(store, {1e-3});
    deltas.push_back(std::abs(store.value(w).item() - prev));
    prev = store.value(w).item();
  }
  EXPECT_LE(deltas[1], deltas[0] * (1.0 + 1e-6));
}

TEST(Adam, MissingGradientNamesParameter) {
  ParamStore store;
  store.add("encoder.weight", Tensor::scalar(1.0));
  try {
    adam_step(store);
    FAIL() << "expected an error";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.weight"), std::string::npos);
  }
}

TEST(Adam, ClipGradNormRescalesGlobally) {
  ParamStore store;
  const std::size_t a = store.add("a", Tensor::vector({0.0, 0.0}));
  const std::size_t b = store.add("b", Tensor::scalar(0.0));
  store.zero_grad();
  store.accumulate_grad(a, Tensor::vector({3.0, 0.0}));
  store.accumulate_grad(b, Tensor::scalar(4.0));
  EXPECT_DOUBLE_EQ(clip_grad_norm(store, 1.0), 5.0);
  EXPECT_NEAR(store.grad_norm(), 1.0, 1e-15);
  EXPECT_NEAR(store.grad(a)[0], 0.6, 1e-15);
  EXPECT_DOUBLE_EQ(clip_grad_norm(store, 0.0), store.grad_norm());  // disabled
}

TEST(ParamStore, DuplicateNamesThrow) {
  ParamStore store;
  store.add("x", Tensor::scalar(1.0));
  EXPECT_THROW(store.add("x", Tensor::scalar(2.0)), std::invalid_argument);
}

TEST(ParamStore, MomentsMatchParameterShapes) {
  ParamStore store;
  const std::size_t i = store.add("m", Tensor({3, 2}));
  EXPECT_EQ(store.first_moment(i).shape(), (Shape{3, 2}));
  EXPECT_EQ(store.second_moment(i).shape(), (Shape{3, 2}));
  EXPECT_THROW(store.accumulate_grad(i, Tensor({2, 3})), ShapeError);
}

}  // namespace
}  // namespace rgn
