#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "caps/kernels/kernels.hpp"
#include "caps/util/rng.hpp"

namespace k = caps::kernels;

namespace {

bool have_avx2() { return k::detected_isa() == k::Isa::avx2; }

template <class T>
std::vector<T> random_vector(caps::Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return v;
}

// Lengths around the 4/8-lane boundaries and the unrolled main loop.
const std::size_t kLengths[] = {0, 1, 3, 4, 7, 8, 9, 15, 16, 17, 31, 32, 33, 63, 64, 65, 255, 1000, 4099};

template <class T>
T ulp_tolerance(T ref, int ulps) {
  return std::max(std::fabs(ref), T(1e-30)) * std::numeric_limits<T>::epsilon() * static_cast<T>(ulps);
}

}  // namespace

TEST(Kernels, DispatchReportsAnIsa) {
  EXPECT_TRUE(k::active_isa() == k::Isa::scalar || k::active_isa() == k::Isa::avx2);
  {
    k::ScopedIsa forced(k::Isa::scalar);
    EXPECT_EQ(k::active_isa(), k::Isa::scalar);
  }
  EXPECT_EQ(k::isa_name(k::Isa::avx2), "avx2");
}

TEST(Kernels, ScalarDotMatchesLongDoubleSum) {
  caps::Rng rng(3);
  for (std::size_t n : kLengths) {
    auto a = random_vector<double>(rng, n), b = random_vector<double>(rng, n);
    long double ref = 0;
    double mag = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ref += static_cast<long double>(a[i]) * b[i];
      mag += std::fabs(a[i] * b[i]);
    }
    EXPECT_NEAR(k::scalar::dot(a.data(), b.data(), n), static_cast<double>(ref), 1e-15 * (mag + 1)) << n;
  }
}

template <class T>
class KernelEquivalence : public ::testing::Test {};
using FloatTypes = ::testing::Types<float, double>;
TYPED_TEST_SUITE(KernelEquivalence, FloatTypes);

TYPED_TEST(KernelEquivalence, Dot) {
  if (!have_avx2()) GTEST_SKIP() << "CPU lacks AVX2/FMA";
  using T = TypeParam;
  caps::Rng rng(11);
  for (std::size_t n : kLengths) {
    auto a = random_vector<T>(rng, n), b = random_vector<T>(rng, n);
    double mag = 0;
    for (std::size_t i = 0; i < n; ++i) mag += std::fabs(static_cast<double>(a[i]) * b[i]);
    const double tol = 4.0 * std::numeric_limits<T>::epsilon() * (mag + 1.0) * std::sqrt(static_cast<double>(n) + 1.0);
    EXPECT_NEAR(k::avx2::dot(a.data(), b.data(), n), k::scalar::dot(a.data(), b.data(), n), tol) << n;
  }
}

TYPED_TEST(KernelEquivalence, Axpy) {
  if (!have_avx2()) GTEST_SKIP() << "CPU lacks AVX2/FMA";
  using T = TypeParam;
  caps::Rng rng(12);
  for (std::size_t n : kLengths) {
    auto x = random_vector<T>(rng, n);
    auto y0 = random_vector<T>(rng, n);
    const T alpha = static_cast<T>(rng.uniform(-2, 2));
    auto ys = y0, yv = y0;
    k::scalar::axpy(alpha, x.data(), ys.data(), n);
    k::avx2::axpy(alpha, x.data(), yv.data(), n);
    for (std::size_t i = 0; i < n; ++i)
      EXPECT_NEAR(yv[i], ys[i], ulp_tolerance<T>(std::fabs(alpha * x[i]) + std::fabs(y0[i]), 2)) << n << ":" << i;
  }
}

TYPED_TEST(KernelEquivalence, Blend) {
  if (!have_avx2()) GTEST_SKIP() << "CPU lacks AVX2/FMA";
  using T = TypeParam;
  caps::Rng rng(13);
  for (std::size_t n : kLengths) {
    auto src = random_vector<T>(rng, n);
    auto d0 = random_vector<T>(rng, n);
    for (T tau : {T(0), T(0.005), T(0.5), T(1)}) {
      auto ds = d0, dv = d0;
      k::scalar::blend(tau, src.data(), ds.data(), n);
      k::avx2::blend(tau, src.data(), dv.data(), n);
      for (std::size_t i = 0; i < n; ++i)
        EXPECT_NEAR(dv[i], ds[i], ulp_tolerance<T>(std::fabs(src[i]) + std::fabs(d0[i]), 3)) << n << ":" << i;
    }
  }
}

TYPED_TEST(KernelEquivalence, AdamStep) {
  if (!have_avx2()) GTEST_SKIP() << "CPU lacks AVX2/FMA";
  using T = TypeParam;
  caps::Rng rng(14);
  for (std::size_t n : kLengths) {
    auto g = random_vector<T>(rng, n);
    auto p0 = random_vector<T>(rng, n);
    auto m0 = random_vector<T>(rng, n, -0.1, 0.1);
    auto v0 = random_vector<T>(rng, n, 0.0, 0.01);
    const k::AdamCoefficients c{3e-4, 0.9, 0.999, 1e-8, 1 - std::pow(0.9, 7), 1 - std::pow(0.999, 7)};
    auto ps = p0, ms = m0, vs = v0, pv = p0, mv = m0, vv = v0;
    k::scalar::adam_step(c, g.data(), ps.data(), ms.data(), vs.data(), n);
    k::avx2::adam_step(c, g.data(), pv.data(), mv.data(), vv.data(), n);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(mv[i], ms[i], ulp_tolerance<T>(std::fabs(m0[i]) + std::fabs(g[i]), 4));
      EXPECT_NEAR(vv[i], vs[i], ulp_tolerance<T>(std::fabs(v0[i]) + g[i] * g[i], 4));
      // parameter moves by at most lr per step; compare the move itself
      EXPECT_NEAR(pv[i] - p0[i], ps[i] - p0[i], static_cast<T>(3e-4) * static_cast<T>(1e-3) + ulp_tolerance<T>(p0[i], 4));
    }
  }
}

TEST(Kernels, AdamScalarMatchesTextbookUpdate) {
  const k::AdamCoefficients c{0.1, 0.9, 0.999, 1e-8, 1 - 0.9, 1 - 0.999};
  double g = 0.5, p = 1.0, m = 0.0, v = 0.0;
  k::scalar::adam_step(c, &g, &p, &m, &v, 1);
  // first step: m_hat = g, v_hat = g^2, so the move is lr * g / (|g| + eps)
  EXPECT_NEAR(m, 0.05, 1e-15);
  EXPECT_NEAR(v, 0.00025, 1e-15);
  EXPECT_NEAR(p, 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-12);
}

TEST(Kernels, DispatchFollowsActiveIsa) {
  caps::Rng rng(15);
  auto a = random_vector<float>(rng, 37), b = random_vector<float>(rng, 37);
  k::ScopedIsa forced(k::Isa::scalar);
  EXPECT_EQ(k::dot(a.data(), b.data(), a.size()), k::scalar::dot(a.data(), b.data(), a.size()));
}
