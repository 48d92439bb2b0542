#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mcat/error.hpp"
#include "mcat/ops.hpp"
#include "support.hpp"

namespace mcat {
namespace {

using test::fd_max_error;
using test::random_functional;
using test::random_tensor;

TEST(Primitives, ReluDefinition) {
  Tape t;
  auto out = relu(t.constant(Tensor::from_rows({{-1.0, 0.0, 2.0}})));
  EXPECT_EQ(out.value().storage(), (std::vector<double>{0.0, 0.0, 2.0}));
}

TEST(Primitives, SignOfZeroIsZero) {
  Tape t;
  auto out = sign(t.constant(Tensor::from_rows({{0.3, -0.2, 0.0}})));
  EXPECT_EQ(out.value().storage(), (std::vector<double>{1.0, -1.0, 0.0}));
}

TEST(Primitives, IdentityMatmul) {
  Tape t;
  for (std::uint64_t s = 0; s < 5; ++s) {
    Tensor v = random_tensor(3, 1, s);
    auto out = matmul(t.constant(Tensor::identity(3)), t.constant(v));
    EXPECT_EQ(out.value().storage(), v.storage());
  }
}

TEST(Primitives, ShapeMismatchIsDimensionError) {
  Tape t;
  auto a = t.constant(Tensor::matrix(2, 3));
  auto b = t.constant(Tensor::matrix(2, 3));
  EXPECT_THROW(matmul(a, b), DimensionError);
  EXPECT_THROW(add(a, t.constant(Tensor::matrix(3, 2))), DimensionError);
  EXPECT_THROW(add_row(a, t.constant(Tensor::matrix(1, 2))), DimensionError);
  const int labels[] = {0, 5};
  EXPECT_THROW(softmax_cross_entropy(a, labels), DimensionError);
}

TEST(Primitives, NanInputIsNumericError) {
  Tape t;
  auto bad = t.constant(Tensor::from_rows({{1.0, std::numeric_limits<double>::quiet_NaN()}}));
  EXPECT_THROW(relu(bad), NumericError);
  EXPECT_THROW(sum(bad), NumericError);
  auto inf = t.constant(Tensor::from_rows({{std::numeric_limits<double>::infinity()}}));
  EXPECT_THROW(scale(inf, 2.0), NumericError);
}

TEST(Primitives, NormalizeZeroRowIsNumericError) {
  Tape t;
  EXPECT_THROW(normalize_rows(t.constant(Tensor::matrix(1, 3))), NumericError);
}

TEST(Backward, SumOfSquares) {
  Tape t;
  auto x = t.leaf(Tensor::from_rows({{1.0, 2.0}}), true);
  t.backward(sum_squares(x));
  EXPECT_EQ(x.grad().storage(), (std::vector<double>{2.0, 4.0}));
}

TEST(Backward, ReluDerivativeAtZero) {
  Tape t;
  auto x = t.leaf(Tensor::from_rows({{0.0, 1.0, -1.0}}), true);
  t.backward(sum(relu(x)));
  EXPECT_EQ(x.grad().storage(), (std::vector<double>{0.0, 1.0, 0.0}));
}

TEST(Backward, NonScalarLossIsContractError) {
  Tape t;
  auto x = t.leaf(Tensor::matrix(2, 2, 1.0), true);
  EXPECT_THROW(t.backward(relu(x)), ContractError);
}

TEST(Backward, GradWithoutBackwardIsContractError) {
  Tape t;
  auto x = t.leaf(Tensor::matrix(1, 1, 1.0), true);
  EXPECT_THROW(x.grad(), ContractError);
}

TEST(Backward, Deterministic) {
  Tensor a = random_tensor(5, 4, 1), b = random_tensor(4, 3, 2);
  auto run = [&] {
    Tape t;
    auto av = t.leaf(a, true), bv = t.leaf(b, true);
    const int labels[] = {0, 1, 2, 1, 0};
    t.backward(softmax_cross_entropy(relu(matmul(av, bv)), labels));
    return std::make_pair(av.grad().storage(), bv.grad().storage());
  };
  EXPECT_EQ(run(), run());
}

TEST(Backward, ClampRangeAndGradient) {
  Tensor x = random_tensor(6, 5, 3, -3.0, 3.0);
  Tape t;
  auto xv = t.leaf(x, true);
  auto c = clamp(xv, -1.0, 0.5);
  t.backward(sum(c));
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_GE(c.value()[i], -1.0);
    EXPECT_LE(c.value()[i], 0.5);
    EXPECT_EQ(xv.grad()[i], (x[i] > -1.0 && x[i] < 0.5) ? 1.0 : 0.0);
  }
}

// Pushes entries away from a kink so central differences do not straddle it.
Tensor away_from(Tensor t, double kink) {
  for (double& v : t.data()) {
    if (std::abs(v - kink) < 1e-3) v = kink + 0.1;
  }
  return t;
}

class PrimitiveFd : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(PrimitiveFd, MatchesCentralDifferences) {
  const std::uint64_t s = GetParam();
  const Tensor x = random_tensor(3, 4, mix_seed({s, 1}));
  const Tensor other = random_tensor(3, 4, mix_seed({s, 2}));
  const Tensor right = random_tensor(4, 2, mix_seed({s, 3}));
  const Tensor row = random_tensor(1, 4, mix_seed({s, 4}));
  const int labels[] = {static_cast<int>(s % 4), 1, 3};
  constexpr double tol = 1e-4;

  EXPECT_LT(fd_max_error([&](Tape& t, Var v) { return random_functional(t, matmul(v, t.constant(right)), s); }, x),
            tol) << "matmul left";
  EXPECT_LT(fd_max_error([&](Tape& t, Var v) { return random_functional(t, matmul(t.constant(other), v), s); },
                         random_tensor(4, 2, s)),
            tol) << "matmul right";
  EXPECT_LT(fd_max_error([&](Tape& t, Var v) { return random_functional(t, transpose(v), s); }, x), tol);
  EXPECT_LT(fd_max_error([&](Tape& t, Var v) { return random_functional(t, add(v, t.constant(other)), s); }, x), tol);
  EXPECT_LT(fd_max_error([&](Tape& t, Var v) { return random_functional(t, add_row(t.constant(x), v), s); }, row),
            tol) << "add_row row";
  EXPECT_LT(fd_max_error([&](Tape& t, Var v) { return random_functional(t, sub(t.constant(other), v), s); }, x), tol);
  EXPECT_LT(fd_max_error([&](Tape& t, Var v) { return random_functional(t, scale(v, -1.7), s); }, x), tol);
  EXPECT_LT(fd_max_error([&](Tape& t, Var v) { return random_functional(t, relu(v), s); }, away_from(x, 0.0)), tol);
  EXPECT_LT(fd_max_error([&](Tape& t, Var v) { return random_functional(t, add(sign(v), v), s); }, away_from(x, 0.0)),
            tol) << "sign";
  Tensor xc = away_from(away_from(x, -1.0), 1.0);
  EXPECT_LT(fd_max_error([&](Tape& t, Var v) { return random_functional(t, clamp(v, -1.0, 1.0), s); }, xc), tol);
  EXPECT_LT(fd_max_error([](Tape&, Var v) { return sum_squares(v); }, x), tol);
  EXPECT_LT(fd_max_error([&](Tape& t, Var v) { return random_functional(t, row_sum_squares(v), s); }, x), tol);
  EXPECT_LT(fd_max_error([](Tape&, Var v) { return sum(v); }, x), tol);
  EXPECT_LT(fd_max_error([](Tape&, Var v) { return mean(v); }, x), tol);
  EXPECT_LT(fd_max_error([&](Tape&, Var v) { return softmax_cross_entropy(v, labels); }, x), tol);
  EXPECT_LT(fd_max_error([&](Tape&, Var v) { return softmax_cross_entropy(v, labels, Reduction::sum); }, x), tol);
  EXPECT_LT(fd_max_error([&](Tape& t, Var v) { return random_functional(t, normalize_rows(v), s); }, x), tol);
}

INSTANTIATE_TEST_SUITE_P(Random, PrimitiveFd, ::testing::Range<std::uint64_t>(0, 10));

TEST(CompositeFd, ThreeLayerMlpParameters) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    Mlp net({5, 7, 6, 3}, s);
    const Tensor x = random_tensor(4, 5, s + 100);
    const int labels[] = {0, 2, 1, 2};
    for (std::size_t k = 0; k < net.parameters().size(); ++k) {
      const Tensor p0 = *net.parameters()[k];
      auto f = [&](Tape& t, Var pv) {
        Mlp copy = net;
        *copy.parameters()[k] = pv.value();
        auto bound = copy.bind(t, false);
        if (k % 2 == 0) bound.weights[k / 2] = pv;
        else bound.biases[k / 2] = pv;
        return softmax_cross_entropy(copy.forward(bound, t.constant(x)), labels);
      };
      EXPECT_LT(fd_max_error(f, p0), 1e-4) << "seed " << s << " block " << k;
    }
  }
}

}  // namespace
}  // namespace mcat
