#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "wbc/part_mask.hpp"
#include "wbc/tensor.hpp"

using namespace wbc;

TEST(FiniteDiff, QuadraticIsExact) {
  const Vector x{1.0, 2.0};
  auto f = [](std::span<const double> v) { return v[0] * v[0] + v[1] * v[1]; };
  const Vector g = finite_diff_grad(f, x, 1e-5);
  EXPECT_NEAR(g[0], 2.0, 1e-8);
  EXPECT_NEAR(g[1], 4.0, 1e-8);
}

TEST(FiniteDiff, LinearFunction) {
  const Vector x{7.0};
  const Vector g = finite_diff_grad([](std::span<const double> v) { return v[0]; }, x, 1e-4);
  EXPECT_NEAR(g[0], 1.0, 1e-10);
}

TEST(FiniteDiff, BilinearProduct) {
  const Vector x{3.0, 5.0};
  const Vector g = finite_diff_grad([](std::span<const double> v) { return v[0] * v[1]; }, x, 1e-5);
  EXPECT_NEAR(g[0], 5.0, 1e-8);
  EXPECT_NEAR(g[1], 3.0, 1e-8);
}

TEST(FiniteDiff, NonFiniteValueNamesIndex) {
  const Vector x{1.0, 0.0, 2.0};
  auto g = [](std::span<const double> v) {
    return v[2] > 2.0 ? std::numeric_limits<double>::infinity() : v[0];
  };
  try {
    finite_diff_grad(g, x, 1e-5);
    FAIL() << "expected OracleError";
  } catch (const OracleError& e) {
    EXPECT_EQ(e.index(), 2u);
  }
}

TEST(FiniteDiff, RejectsNonPositiveEps) {
  const Vector x{1.0};
  EXPECT_THROW(finite_diff_grad([](std::span<const double> v) { return v[0]; }, x, 0.0), Error);
}

TEST(RelativeError, IdenticalInputs) {
  const Vector a{1, 2, 3};
  EXPECT_EQ(relative_error(a, a), 0.0);
}

TEST(RelativeError, ZeroZeroGuard) {
  const Vector z{0, 0};
  EXPECT_EQ(relative_error(z, z), 0.0);
}

TEST(RelativeError, OrthogonalUnitVectors) {
  const Vector a{1, 0}, b{0, 1};
  EXPECT_NEAR(relative_error(a, b), std::sqrt(2.0), 1e-12);
}

TEST(RelativeError, LengthMismatchThrows) {
  const Vector a{1, 0}, b{1};
  EXPECT_THROW(relative_error(a, b), DimensionError);
}

TEST(Matrix, ShapeAndIndexing) {
  Matrix m(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m(1, 0), 4.0);
  EXPECT_EQ(m.row(1)[2], 6.0);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
  const Matrix id = Matrix::identity(3);
  EXPECT_EQ(id(2, 2), 1.0);
  EXPECT_EQ(id(0, 2), 0.0);
}

TEST(Tensor3, LayoutIsRowMajorChannelsLast) {
  Tensor3 t(2, 3, 2);
  t(1, 2, 1) = 9.0;
  EXPECT_EQ(t.values()[(1 * 3 + 2) * 2 + 1], 9.0);
  EXPECT_EQ(t.pixel(5)[1], 9.0);
  EXPECT_THROW(Tensor3(2, 2, 2, std::vector<double>(7)), DimensionError);
}

TEST(PartMask, ValidatesRangeAndShape) {
  EXPECT_NO_THROW(PartMask(1, 2, std::vector<double>{0.0, 1.0}));
  EXPECT_THROW(PartMask(1, 2, std::vector<double>{0.5, 1.5}), Error);
  EXPECT_THROW(PartMask(1, 2, std::vector<double>{0.5}), DimensionError);
  EXPECT_THROW(PartMask(1, 1, std::vector<double>{std::nan("")}), Error);
  PartMask m(2, 2, 0.25);
  EXPECT_TRUE(m.matches(Tensor3(2, 2, 5)));
  EXPECT_FALSE(m.matches(Tensor3(2, 3, 5)));
}

TEST(Vectors, DotNormFinite) {
  const Vector a{3, 4};
  EXPECT_EQ(dot(a, a), 25.0);
  EXPECT_EQ(norm2(a), 5.0);
  EXPECT_TRUE(all_finite(a));
  const Vector b{1, std::numeric_limits<double>::quiet_NaN()};
  EXPECT_FALSE(all_finite(b));
}
