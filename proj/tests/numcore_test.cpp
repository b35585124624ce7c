#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "memtax/finite_diff.hpp"
#include "memtax/tape.hpp"
#include "memtax/tensor.hpp"

using namespace memtax;

namespace {

Tensor random_tensor(std::mt19937_64& rng, std::size_t r, std::size_t c, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Builds op(operands) on a fresh tape and reduces it to a scalar by a fixed
// random projection, so every output entry contributes to the check.
struct OpCase {
  OpKind kind;
  OpArgs args;
  std::vector<Tensor> operands;
  Tensor projection;
};

double forward_value(const OpCase& c, std::size_t which, const Tensor& replaced) {
  Tape tape;
  std::vector<Var> vars;
  for (std::size_t i = 0; i < c.operands.size(); ++i) vars.push_back(tape.constant(i == which ? replaced : c.operands[i]));
  const Var out = tape.record(c.kind, vars, c.args);
  return tape.value(tape.sum(tape.mul(out, tape.constant(c.projection)))).item();
}

double worst_error(const OpCase& c) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : c.operands) vars.push_back(tape.parameter(t));
  const Var out = tape.record(c.kind, vars, c.args);
  const Var root = tape.sum(tape.mul(out, tape.constant(c.projection)));
  const Gradients g = tape.backward(root);
  double worst = 0.0;
  for (std::size_t i = 0; i < c.operands.size(); ++i) {
    const Tensor numeric = finite_diff([&](const Tensor& x) { return forward_value(c, i, x); }, c.operands[i]);
    worst = std::max(worst, max_relative_error(g[vars[i]], numeric));
  }
  return worst;
}

OpCase make_case(OpKind kind, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dim(1, 5);
  const std::size_t r = dim(rng), c = dim(rng), k = dim(rng);
  OpCase oc{kind, {}, {}, {}};
  switch (kind) {
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
      oc.operands = {random_tensor(rng, r, c), random_tensor(rng, r, c)};
      break;
    case OpKind::Scale:
      oc.args.scalar = std::uniform_real_distribution<double>(-3, 3)(rng);
      oc.operands = {random_tensor(rng, r, c)};
      break;
    case OpKind::ScaleBy: oc.operands = {random_tensor(rng, 1, 1), random_tensor(rng, r, c)}; break;
    case OpKind::ScaleRows: oc.operands = {random_tensor(rng, r, c), random_tensor(rng, r, 1)}; break;
    case OpKind::MatMul: oc.operands = {random_tensor(rng, r, k), random_tensor(rng, k, c)}; break;
    case OpKind::Transpose: oc.operands = {random_tensor(rng, r, c)}; break;
    case OpKind::ConcatRows:
      oc.operands = {random_tensor(rng, r, c), random_tensor(rng, k, c), random_tensor(rng, 1, c)};
      break;
    case OpKind::SliceRows: {
      const std::size_t rows = r + 1;
      oc.args.begin = std::uniform_int_distribution<std::size_t>(0, rows - 1)(rng);
      oc.args.count = std::uniform_int_distribution<std::size_t>(1, rows - oc.args.begin)(rng);
      oc.operands = {random_tensor(rng, rows, c)};
      break;
    }
    case OpKind::Sigmoid:
    case OpKind::Tanh: oc.operands = {random_tensor(rng, r, c, -4, 4)}; break;
    case OpKind::Relu: {
      Tensor t = random_tensor(rng, r, c);
      for (double& v : t.values())
        if (std::abs(v) < 1e-3) v = 0.5;  // stay off the kink
      oc.operands = {t};
      break;
    }
    case OpKind::Softmax: oc.operands = {random_tensor(rng, r + 1, 1, -3, 3)}; break;
    case OpKind::Sum: oc.operands = {random_tensor(rng, r, c)}; break;
    case OpKind::SquaredError: oc.operands = {random_tensor(rng, r, c), random_tensor(rng, r, c)}; break;
    case OpKind::CrossEntropy:
      oc.operands = {random_tensor(rng, r, c, 0.05, 0.95), random_tensor(rng, r, c, 0.0, 1.0)};
      break;
    case OpKind::CosineSimilarity: oc.operands = {random_tensor(rng, r, c), random_tensor(rng, c, 1)}; break;
    case OpKind::CircularConvolve: {
      const std::size_t m = r + 2;
      const std::size_t n = std::uniform_int_distribution<std::size_t>(0, (m - 1) / 2)(rng);
      oc.operands = {random_tensor(rng, m, 1, 0, 1), random_tensor(rng, 2 * n + 1, 1, 0, 1)};
      break;
    }
    case OpKind::Leaf: break;
  }
  // Output shape comes from a dry forward pass.
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : oc.operands) vars.push_back(tape.constant(t));
  const Shape s = tape.shape(tape.record(kind, vars, oc.args));
  oc.projection = random_tensor(rng, s.rows, s.cols);
  return oc;
}

}  // namespace

TEST(Ops, SigmoidOfZeroIsHalf) {
  Tape tape;
  const Var y = tape.sigmoid(tape.constant(Tensor::zeros(3)));
  EXPECT_EQ(tape.value(y), Tensor(3, 1, 0.5));
}

TEST(Ops, SoftmaxOfEqualLogitsIsUniform) {
  Tape tape;
  const Tensor& p = tape.value(tape.softmax(tape.constant(Tensor::ones(3))));
  for (double v : p.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Ops, IdentityMatmul) {
  Tape tape;
  const Tensor x = Tensor::column({2.5, -7.0});
  EXPECT_EQ(tape.value(tape.matmul(tape.constant(Tensor::identity(2)), tape.constant(x))), x);
}

TEST(Ops, ShapeMismatchNamesBothShapes) {
  Tape tape;
  const Var a = tape.constant(Tensor::zeros(2, 3));
  const Var b = tape.constant(Tensor::zeros(3, 2));
  try {
    tape.add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2,3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(3,2)"), std::string::npos) << msg;
  }
}

TEST(Ops, CrossEntropyRejectsNegativeProbability) {
  Tape tape;
  EXPECT_THROW(tape.cross_entropy(tape.constant(Tensor::column({-0.1, 1.1})), tape.constant(Tensor::column({1, 0}))),
               DomainError);
}

TEST(Ops, CrossEntropyClampsZeroProbability) {
  Tape tape;
  const Var ce = tape.cross_entropy(tape.constant(Tensor::column({0.0, 1.0})), tape.constant(Tensor::column({1, 0})));
  EXPECT_DOUBLE_EQ(tape.value(ce).item(), -std::log(1e-12));
}

TEST(Ops, CircularConvolveRejectsTooManyShifts) {
  Tape tape;
  EXPECT_THROW(tape.circular_convolve(tape.constant(Tensor::ones(3)), tape.constant(Tensor::ones(5))), ShapeError);
  EXPECT_THROW(tape.circular_convolve(tape.constant(Tensor::ones(4)), tape.constant(Tensor::ones(2))), ShapeError);
}

TEST(Ops, RecordRejectsLeafKind) {
  Tape tape;
  const Var a = tape.constant(Tensor::ones(1));
  const Var ops[] = {a};
  EXPECT_THROW(tape.record(OpKind::Leaf, ops), std::invalid_argument);
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  const Var x = tape.parameter(Tensor::column({4, -1, 9}));
  EXPECT_EQ(tape.backward(tape.sum(x))[x], Tensor::ones(3));
}

TEST(Backward, SquaredErrorAgainstZero) {
  Tape tape;
  const Var x = tape.parameter(Tensor::column({1, 2}));
  const Var root = tape.squared_error(x, tape.constant(Tensor::zeros(2)));
  EXPECT_EQ(tape.backward(root)[x], Tensor::column({2, 4}));
}

TEST(Backward, RootGradientIsOneAndUnreachedIsZero) {
  Tape tape;
  const Var x = tape.parameter(Tensor::column({1, 2}));
  const Var unused = tape.tanh(x);
  const Var root = tape.sum(x);
  const Gradients g = tape.backward(root);
  EXPECT_EQ(g[root], Tensor::scalar(1.0));
  EXPECT_EQ(g[unused], Tensor::zeros(2));
}

TEST(Backward, NonScalarRootRejected) {
  Tape tape;
  const Var x = tape.parameter(Tensor::column({1, 2}));
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Backward, OperandsPrecedeNodes) {
  Tape tape;
  const Var x = tape.parameter(Tensor::column({1, 2}));
  const Var y = tape.add(tape.tanh(x), tape.sigmoid(x));
  tape.sum(tape.mul(y, y));
  for (std::uint32_t k = 0; k < tape.size(); ++k)
    for (std::uint32_t op : tape.operands(Var{k})) EXPECT_LT(op, k);
}

TEST(Backward, ReuseAccumulatesLinearly) {
  std::mt19937_64 rng(3);
  const Tensor x0 = random_tensor(rng, 4, 1);
  Tape once;
  const Var a = once.parameter(x0);
  const Tensor g1 = once.backward(once.sum(once.tanh(a)))[a];
  Tape twice;
  const Var b = twice.parameter(x0);
  const Tensor g2 = twice.backward(twice.add(twice.sum(twice.tanh(b)), twice.sum(twice.tanh(b))))[b];
  EXPECT_EQ(g2, g1 * 2.0);
}

TEST(Backward, RandomFiveNodeGraphMatchesFiniteDifferences) {
  // Two leaves, a random binary op, a random squashing op, then sum.
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor a0 = random_tensor(rng, 3, 1);
    const Tensor b0 = random_tensor(rng, 3, 1);
    const bool multiply = rng() % 2 == 0;
    const bool squash_tanh = rng() % 2 == 0;
    auto build = [&](Tape& t, Var a, Var b) {
      const Var joined = multiply ? t.mul(a, b) : t.add(a, b);
      return t.sum(squash_tanh ? t.tanh(joined) : t.sigmoid(joined));
    };
    Tape tape;
    const Var a = tape.parameter(a0);
    const Var b = tape.parameter(b0);
    const Var root = build(tape, a, b);
    ASSERT_EQ(tape.size(), 5u);
    const Gradients g = tape.backward(root);
    auto f_a = [&](const Tensor& v) {
      Tape t;
      return t.value(build(t, t.constant(v), t.constant(b0))).item();
    };
    auto f_b = [&](const Tensor& v) {
      Tape t;
      return t.value(build(t, t.constant(a0), t.constant(v))).item();
    };
    EXPECT_LT(max_relative_error(g[a], finite_diff(f_a, a0)), 1e-6);
    EXPECT_LT(max_relative_error(g[b], finite_diff(f_b, b0)), 1e-6);
  }
}

TEST(Backward, ConstantsDoNotReceiveGradients) {
  Tape tape;
  const Var c = tape.constant(Tensor::column({1, 2}));
  const Gradients g = tape.backward(tape.sum(tape.tanh(c)));
  EXPECT_FALSE(g.reached(c));
}

class EveryOp : public ::testing::TestWithParam<OpKind> {};

TEST_P(EveryOp, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()) * 7919 + 1);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) worst = std::max(worst, worst_error(make_case(GetParam(), rng)));
  EXPECT_LE(worst, 1e-5) << op_name(GetParam());
}

INSTANTIATE_TEST_SUITE_P(AllKinds, EveryOp,
                         ::testing::Values(OpKind::Add, OpKind::Sub, OpKind::Mul, OpKind::Scale, OpKind::ScaleBy,
                                           OpKind::ScaleRows, OpKind::MatMul, OpKind::Transpose, OpKind::ConcatRows,
                                           OpKind::SliceRows, OpKind::Sigmoid, OpKind::Tanh, OpKind::Relu,
                                           OpKind::Softmax, OpKind::Sum, OpKind::SquaredError, OpKind::CrossEntropy,
                                           OpKind::CosineSimilarity, OpKind::CircularConvolve),
                         [](const auto& info) {
                           std::string n = op_name(info.param);
                           for (char& ch : n)
                             if (ch == '-') ch = '_';
                           return n;
                         });

TEST(Properties, SoftmaxIsADistribution) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    Tape tape;
    const Tensor& p = tape.value(tape.softmax(tape.constant(random_tensor(rng, 7, 1, -30, 30))));
    for (double v : p.values()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
  }
}

TEST(Properties, FiniteInputsGiveFiniteOutputs) {
  std::mt19937_64 rng(8);
  Tape tape;
  const Var x = tape.constant(random_tensor(rng, 5, 1, -800, 800));
  for (Var y : {tape.sigmoid(x), tape.tanh(x), tape.softmax(x), tape.relu(x)}) EXPECT_TRUE(tape.value(y).all_finite());
}

TEST(Properties, ReluDerivativeAtZeroIsZero) {
  Tape tape;
  const Var x = tape.parameter(Tensor::column({0.0, 1.0}));
  EXPECT_EQ(tape.backward(tape.sum(tape.relu(x)))[x], Tensor::column({0.0, 1.0}));
}

TEST(FiniteDiff, Sum) {
  const Tensor g = finite_diff([](const Tensor& x) { return x.sum(); }, Tensor::column({3, 7}));
  EXPECT_NEAR(g[0], 1.0, 1e-9);
  EXPECT_NEAR(g[1], 1.0, 1e-9);
}

TEST(FiniteDiff, SigmoidSlopeAtZero) {
  auto f = [](const Tensor& x) {
    double s = 0;
    for (double v : x.values()) s += 1.0 / (1.0 + std::exp(-v));
    return s;
  };
  const Tensor g = finite_diff(f, Tensor::zeros(4));
  for (double v : g.values()) EXPECT_NEAR(v, 0.25, 1e-9);
}

TEST(FiniteDiff, RejectsNonPositiveStep) {
  EXPECT_THROW(finite_diff([](const Tensor& x) { return x.sum(); }, Tensor::zeros(1), 0.0), std::invalid_argument);
}

TEST(FiniteDiff, RelativeErrorFloor) {
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1e-9, 0.0), 1e-9 / 1e-8);
  EXPECT_DOUBLE_EQ(relative_error(1.0, 3.0), 0.5);
}
