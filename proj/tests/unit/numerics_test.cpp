#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "onlstm/errors.hpp"
#include "onlstm/numerics/gradcheck.hpp"
#include "onlstm/numerics/ops.hpp"
#include "test_util.hpp"

namespace onlstm {
namespace {

using testing::expect_near;
using testing::random_tensor;

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a.at(i, k) * b.at(k, j);
      c.at(i, j) = acc;
    }
  return c;
}

TEST(TensorTest, RejectsShapeValueMismatch) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  EXPECT_THROW(Tensor(Shape{0, 3}), DimensionError);
  Tensor t({2, 3});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
}

TEST(MatmulTest, IdentityAndHandChecked) {
  Tape tape;
  Var eye = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var m = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  EXPECT_EQ(ops::matmul(eye, m).value(), Tensor::matrix({{1, 2}, {3, 4}}));

  Var row = tape.constant(Tensor::matrix({{1, 2}}));
  Var col = tape.constant(Tensor::matrix({{3}, {4}}));
  EXPECT_EQ(ops::matmul(row, col).value(), Tensor::matrix({{11}}));
}

TEST(MatmulTest, MatchesTripleLoop) {
  Rng rng(7);
  const Tensor a = random_tensor({5, 7}, rng);
  const Tensor b = random_tensor({7, 3}, rng);
  Tape tape;
  expect_near(ops::matmul(tape.constant(a), tape.constant(b)).value(), naive_matmul(a, b), 1e-12);
}

TEST(MatmulTest, ShapeMismatchNamesBothShapes) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({4, 5}));
  try {
    ops::matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x5]"), std::string::npos) << msg;
  }
}

TEST(SoftmaxTest, Examples) {
  expect_near(softmax_rows(Tensor::vector({0, 0, 0, 0})), Tensor::vector({0.25, 0.25, 0.25, 0.25}), 1e-15);
  const Tensor saturated = softmax_rows(Tensor::vector({1000, 0}));
  ASSERT_TRUE(saturated.all_finite());
  EXPECT_NEAR(saturated[0], 1.0, 1e-12);
  EXPECT_NEAR(saturated[1], 0.0, 1e-12);
  expect_near(softmax_rows(Tensor::vector({0, std::log(2.0), std::log(3.0)})),
              Tensor::vector({1.0 / 6, 1.0 / 3, 1.0 / 2}), 1e-15);
}

TEST(SoftmaxTest, RowsSumToOne) {
  Rng rng(3);
  const Tensor y = softmax_rows(random_tensor({6, 11}, rng, -30, 30));
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double total = 0.0;
    for (double v : y.row(r)) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(CumsumTest, Examples) {
  EXPECT_EQ(cumsum_rows(Tensor::vector({1, 1, 1})), Tensor::vector({1, 2, 3}));
  EXPECT_EQ(cumsum_rows(Tensor::vector({0.25, 0.25, 0.25, 0.25})), Tensor::vector({0.25, 0.5, 0.75, 1.0}));
}

TEST(CumsumTest, MatchesPrefixLoop) {
  Rng rng(11);
  const Tensor x = random_tensor({9}, rng);
  Tape tape;
  const Tensor y = ops::cumsum(tape.constant(x)).value();
  double running = 0.0;
  for (std::size_t k = 0; k < 9; ++k) {
    running += x[k];
    EXPECT_EQ(y[k], running);
  }
}

TEST(CumaxTest, BoundedMonotoneEndsAtOne) {
  Rng rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    const double scale = trial % 2 ? 1000.0 : 20.0;
    const Tensor z = random_tensor({n}, rng, -scale, scale);
    const Tensor y = cumax_rows(z);
    const Tensor composite = cumsum_rows(softmax_rows(z));
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_GE(y[k], 0.0);
      EXPECT_LE(y[k], 1.0);
      EXPECT_NEAR(y[k], composite[k], 1e-14);
      if (k) {
        EXPECT_GE(y[k], y[k - 1]);
      }
    }
    EXPECT_EQ(y[n - 1], 1.0);
  }
}

TEST(BackwardTest, SumGivesOnes) {
  Parameter p("p", Tensor::vector({0.5, -2.0, 3.0}));
  Tape tape;
  tape.backward(ops::sum(tape.parameter(p)));
  EXPECT_EQ(p.grad, Tensor::vector({1, 1, 1}));
}

TEST(BackwardTest, SumOfSquaresGivesTwiceValue) {
  Parameter p("p", Tensor::vector({0.5, -2.0, 3.0}));
  Tape tape;
  Var v = tape.parameter(p);
  tape.backward(ops::sum(ops::mul(v, v)));
  EXPECT_EQ(p.grad, Tensor::vector({1.0, -4.0, 6.0}));
}

TEST(BackwardTest, NonScalarRootIsContractError) {
  Parameter p("p", Tensor::vector({1, 2}));
  Tape tape;
  EXPECT_THROW(tape.backward(tape.parameter(p)), ContractError);
}

TEST(BackwardTest, InferenceTapeCannotBackward) {
  Parameter p("p", Tensor::vector({1}));
  Tape tape(Tape::Mode::kInference);
  EXPECT_THROW(tape.backward(ops::sum(tape.parameter(p))), ContractError);
}

TEST(BackwardTest, RepeatedBackwardAccumulates) {
  Rng rng(2);
  Parameter a("a", random_tensor({3, 4}, rng));
  Parameter b("b", random_tensor({4, 2}, rng));
  Tape tape;
  Var loss = ops::sum(ops::tanh(ops::matmul(tape.parameter(a), tape.parameter(b))));
  tape.backward(loss);
  const Tensor once_a = a.grad;
  const Tensor once_b = b.grad;
  tape.backward(loss);
  for (std::size_t i = 0; i < a.grad.size(); ++i) EXPECT_EQ(a.grad[i], 2.0 * once_a[i]);
  for (std::size_t i = 0; i < b.grad.size(); ++i) EXPECT_EQ(b.grad[i], 2.0 * once_b[i]);
}

TEST(OpsTest, NonFiniteResultIsAnError) {
  Tape tape;
  Var big = tape.constant(Tensor::vector({1e308}));
  EXPECT_THROW(ops::affine(big, 10.0, 0.0), NumericalError);
}

TEST(FiniteDiffTest, Quadratic) {
  Parameter theta("theta", Tensor::scalar(3.0));
  auto grads = finite_diff_grad([&] { return theta.value[0] * theta.value[0]; }, {&theta}, 1e-5);
  EXPECT_NEAR(grads[0][0], 6.0, 1e-8);
  EXPECT_EQ(theta.value[0], 3.0);
}

TEST(FiniteDiffTest, LinearIsExact) {
  Parameter theta("theta", Tensor::vector({1.0, 2.0}));
  for (double eps : {1e-3, 1e-1, 1.0}) {
    auto grads = finite_diff_grad([&] { return 4.0 * theta.value[0] - 0.5 * theta.value[1]; }, {&theta}, eps);
    EXPECT_NEAR(grads[0][0], 4.0, 1e-12);
    EXPECT_NEAR(grads[0][1], -0.5, 1e-12);
  }
}

TEST(FiniteDiffTest, RejectsBadEpsilonAndNonFiniteLoss) {
  Parameter theta("theta", Tensor::scalar(0.0));
  EXPECT_THROW(finite_diff_grad([] { return 0.0; }, {&theta}, 0.0), ContractError);
  // log of a negative perturbation is NaN.
  EXPECT_THROW(finite_diff_grad([&] { return std::log(theta.value[0]); }, {&theta}, 1e-5), NumericalError);
}

// Random-input gradient check of each primitive: loss = sum(w * op(...)) with
// a fixed random weighting w so every output element matters.
class PrimitiveGradTest : public ::testing::Test {
 protected:
  using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

  double check(const std::vector<Shape>& shapes, const Builder& build, double lo = -1.0, double hi = 1.0) {
    Rng rng(17);
    std::vector<Parameter> params;
    params.reserve(shapes.size());
    for (std::size_t k = 0; k < shapes.size(); ++k) {
      params.emplace_back("p" + std::to_string(k), random_tensor(shapes[k], rng, lo, hi));
    }
    std::vector<Parameter*> ptrs;
    for (auto& p : params) ptrs.push_back(&p);
    Tensor weights;
    auto forward = [&](Tape& tape) {
      std::vector<Var> vars;
      for (auto& p : params) vars.push_back(tape.parameter(p));
      Var out = build(tape, vars);
      if (weights.empty()) weights = random_tensor(out.shape(), rng);
      return ops::sum(ops::mul(out, tape.constant(weights)));
    };
    auto report = check_gradients(
        [&] {
          Tape tape;
          tape.backward(forward(tape));
        },
        [&] {
          Tape tape(Tape::Mode::kInference);
          return forward(tape).value().item();
        },
        ptrs, 1e-4);
    return report.worst();
  }
};

TEST_F(PrimitiveGradTest, Matmul) {
  EXPECT_LT(check({{3, 4}, {4, 5}}, [](Tape&, auto& v) { return ops::matmul(v[0], v[1]); }), 1e-4);
  EXPECT_LT(check({{3, 4}, {5, 4}}, [](Tape&, auto& v) { return ops::matmul_nt(v[0], v[1]); }), 1e-4);
}

TEST_F(PrimitiveGradTest, AddSubMul) {
  EXPECT_LT(check({{3, 4}, {3, 4}}, [](Tape&, auto& v) { return ops::add(v[0], v[1]); }), 1e-4);
  EXPECT_LT(check({{3, 4}, {3, 4}}, [](Tape&, auto& v) { return ops::sub(v[0], v[1]); }), 1e-4);
  EXPECT_LT(check({{3, 4}, {3, 4}}, [](Tape&, auto& v) { return ops::mul(v[0], v[1]); }), 1e-4);
  EXPECT_LT(check({{3, 4}, {4}}, [](Tape&, auto& v) { return ops::add_row(v[0], v[1]); }), 1e-4);
  EXPECT_LT(check({{3, 4}}, [](Tape&, auto& v) { return ops::affine(v[0], -1.5, 1.0); }), 1e-4);
}

TEST_F(PrimitiveGradTest, Nonlinearities) {
  EXPECT_LT(check({{3, 4}}, [](Tape&, auto& v) { return ops::sigmoid(v[0]); }, -3, 3), 1e-4);
  EXPECT_LT(check({{3, 4}}, [](Tape&, auto& v) { return ops::tanh(v[0]); }, -3, 3), 1e-4);
  EXPECT_LT(check({{3, 4}}, [](Tape&, auto& v) { return ops::relu(v[0]); }, 0.1, 1), 1e-4);
  EXPECT_LT(check({{3, 4}}, [](Tape&, auto& v) { return ops::abs(v[0]); }, -1, -0.1), 1e-4);
}

TEST_F(PrimitiveGradTest, SoftmaxCumsumCumax) {
  EXPECT_LT(check({{3, 6}}, [](Tape&, auto& v) { return ops::softmax(v[0]); }, -3, 3), 1e-4);
  EXPECT_LT(check({{3, 6}}, [](Tape&, auto& v) { return ops::cumsum(v[0]); }), 1e-4);
  EXPECT_LT(check({{3, 6}}, [](Tape&, auto& v) { return ops::cumsum(ops::softmax(v[0])); }, -3, 3), 1e-4);
  EXPECT_LT(check({{3, 6}}, [](Tape&, auto& v) { return ops::cumax(v[0]); }, -3, 3), 1e-4);
}

TEST_F(PrimitiveGradTest, CumaxHonorsBothFaults) {
  for (Primitive p : {Primitive::kSoftmax, Primitive::kCumsum}) {
    ScopedDerivativeFault fault(p, 1.01);
    EXPECT_GT(check({{2, 5}}, [](Tape&, auto& v) { return ops::cumax(v[0]); }, -3, 3), 1e-3);
  }
}

TEST_F(PrimitiveGradTest, ConcatSliceRepeat) {
  EXPECT_LT(check({{3, 2}, {3, 4}}, [](Tape&, auto& v) { return ops::concat_cols({v[0], v[1], v[0]}); }), 1e-4);
  EXPECT_LT(check({{2, 4}, {3, 4}}, [](Tape&, auto& v) { return ops::concat_rows({v[0], v[1]}); }), 1e-4);
  EXPECT_LT(check({{3, 6}}, [](Tape&, auto& v) { return ops::slice_cols(v[0], 2, 3); }), 1e-4);
  EXPECT_LT(check({{5, 3}}, [](Tape&, auto& v) { return ops::slice_rows(v[0], 1, 3); }), 1e-4);
  EXPECT_LT(check({{3, 4}}, [](Tape&, auto& v) { return ops::repeat_cols(v[0], 3); }), 1e-4);
}

TEST_F(PrimitiveGradTest, GatherAndCrossEntropy) {
  const std::vector<int> ids{2, 0, 2, 4};
  EXPECT_LT(check({{5, 3}}, [&](Tape&, auto& v) { return ops::gather_rows(v[0], ids); }), 1e-4);
  const std::vector<int> targets{1, 0, 3};
  EXPECT_LT(check({{3, 4}}, [&](Tape&, auto& v) { return ops::cross_entropy(v[0], targets); }, -2, 2), 1e-4);
}

TEST(FaultInjectionTest, BrokenRuleIsDetected) {
  Rng rng(1);
  Parameter p("p", random_tensor({2, 3}, rng));
  auto recorded = [&] {
    Tape tape;
    tape.backward(ops::sum(ops::sigmoid(tape.parameter(p))));
  };
  auto plain = [&] {
    Tape tape(Tape::Mode::kInference);
    return ops::sum(ops::sigmoid(tape.parameter(p))).value().item();
  };
  EXPECT_TRUE(check_gradients(recorded, plain, {&p}, 1e-4).passed());
  ScopedDerivativeFault fault(Primitive::kSigmoid, 1.01);
  EXPECT_FALSE(check_gradients(recorded, plain, {&p}, 1e-4).passed());
}

}  // namespace
}  // namespace onlstm
