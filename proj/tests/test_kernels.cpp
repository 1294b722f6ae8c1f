#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "mccf/kernels.hpp"
#include "mccf/rng.hpp"

using namespace mccf;
namespace k = mccf::kernels;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -3.0, double hi = 3.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

double rel_err(double a, double b) {
  return std::fabs(a - b) / (std::max(std::fabs(a), std::fabs(b)) + 1e-300);
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CAPTURE(i);
    CHECK(std::fabs(a[i] - b[i]) <= tol * (1.0 + std::max(std::fabs(a[i]), std::fabs(b[i]))));
  }
}

}  // namespace

TEST_CASE("active dispatch picks a valid table") {
  CHECK(k::ops().dot != nullptr);
  if (k::avx2_available()) {
    CHECK(std::string(k::active_isa()) == "avx2");
  } else {
    CHECK(std::string(k::active_isa()) == "scalar");
  }
}

TEST_CASE("scalar/simd equivalence on all element kernels") {
  if (!k::avx2_available()) return;  // nothing to compare on this host
  const auto& s = k::scalar_ops();
  const auto& a = k::avx2_ops();
  Rng rng(7);

  // Sizes straddle the vector width to exercise remainder loops.
  for (std::size_t n : {std::size_t(1), std::size_t(3), std::size_t(4), std::size_t(7),
                        std::size_t(16), std::size_t(63), std::size_t(64), std::size_t(257)}) {
    CAPTURE(n);
    auto x = random_vec(rng, n);
    auto y = random_vec(rng, n);

    CHECK(rel_err(s.dot(x.data(), y.data(), n), a.dot(x.data(), y.data(), n)) < 1e-13);

    auto y1 = y, y2 = y;
    s.axpy(0.37, x.data(), y1.data(), n);
    a.axpy(0.37, x.data(), y2.data(), n);
    check_close(y1, y2, 1e-14);

    std::vector<double> o1(n), o2(n);
    s.scale(x.data(), -1.7, o1.data(), n);
    a.scale(x.data(), -1.7, o2.data(), n);
    check_close(o1, o2, 1e-15);

    s.add(x.data(), y.data(), o1.data(), n);
    a.add(x.data(), y.data(), o2.data(), n);
    check_close(o1, o2, 1e-15);

    s.mul(x.data(), y.data(), o1.data(), n);
    a.mul(x.data(), y.data(), o2.data(), n);
    check_close(o1, o2, 1e-15);

    s.relu(x.data(), o1.data(), n);
    a.relu(x.data(), o2.data(), n);
    check_close(o1, o2, 0.0);

    s.leaky_relu(x.data(), 0.2, o1.data(), n);
    a.leaky_relu(x.data(), 0.2, o2.data(), n);
    check_close(o1, o2, 1e-15);

    s.sigmoid(x.data(), o1.data(), n);
    a.sigmoid(x.data(), o2.data(), n);
    check_close(o1, o2, 1e-13);

    auto g1 = random_vec(rng, n), g2 = g1;
    s.relu_bwd(x.data(), y.data(), g1.data(), n);
    a.relu_bwd(x.data(), y.data(), g2.data(), n);
    check_close(g1, g2, 0.0);

    g2 = g1;
    auto g3 = g1;
    s.sigmoid_bwd(o1.data(), y.data(), g2.data(), n);
    a.sigmoid_bwd(o1.data(), y.data(), g3.data(), n);
    check_close(g2, g3, 1e-13);
  }
}

TEST_CASE("vector exp/log match libm") {
  const auto& a = k::ops();
  Rng rng(11);
  const std::size_t n = 1003;
  auto x = random_vec(rng, n, -40.0, 40.0);
  std::vector<double> y(n);
  a.vexp(x.data(), y.data(), n);
  for (std::size_t i = 0; i < n; ++i) CHECK(rel_err(y[i], std::exp(x[i])) < 1e-13);

  auto xp = random_vec(rng, n, 1e-16, 50.0);
  a.vlog(xp.data(), y.data(), n);
  for (std::size_t i = 0; i < n; ++i) CHECK(rel_err(y[i], std::log(xp[i])) < 1e-13);

  // extreme but in-range arguments
  double lo[4] = {1e-300, 1e-16, 0.5, 1.0};
  double out[4];
  a.vlog(lo, out, 4);
  for (int i = 0; i < 4; ++i) CHECK(rel_err(out[i], std::log(lo[i])) < 1e-13);
  double xe[4] = {-700.0, -1.0, 0.0, 700.0};
  a.vexp(xe, out, 4);
  for (int i = 0; i < 4; ++i) CHECK(rel_err(out[i], std::exp(xe[i])) < 1e-13);
}

TEST_CASE("gather/scatter columns agree across implementations") {
  if (!k::avx2_available()) return;
  const auto& s = k::scalar_ops();
  const auto& a = k::avx2_ops();
  Rng rng(3);
  const std::size_t d = 37, L = 50, nnz = 12;
  auto mat = random_vec(rng, d * L);
  std::vector<std::int32_t> idx(nnz);
  for (auto& i : idx) i = std::int32_t(rng.bounded(L));
  auto val = random_vec(rng, nnz);

  std::vector<double> y1(d, 0.1), y2(d, 0.1);
  s.gather_cols_acc(mat.data(), d, idx.data(), val.data(), nnz, y1.data());
  a.gather_cols_acc(mat.data(), d, idx.data(), val.data(), nnz, y2.data());
  check_close(y1, y2, 1e-14);

  auto gy = random_vec(rng, d);
  std::vector<double> m1(d * L, 0.0), m2(d * L, 0.0);
  s.scatter_cols_acc(m1.data(), d, idx.data(), val.data(), nnz, gy.data());
  a.scatter_cols_acc(m2.data(), d, idx.data(), val.data(), nnz, gy.data());
  check_close(m1, m2, 1e-14);
}

TEST_CASE("hard-concrete kernels: formula values and equivalence") {
  const k::HcConsts hc{};
  // eval gate at log_alpha = 0: clamp(0.5*1.2 - 0.1) = 0.5
  double la0 = 0.0, z0 = -1.0;
  k::ops().hc_eval_gate(&la0, hc, &z0, 1);
  CHECK(z0 == doctest::Approx(0.5).epsilon(1e-12));

  // penalty at log_alpha = 0: sigmoid(-(2/3)*log(0.1/1.1)) ~= 0.8318
  double sig = 0.0;
  const double sum = k::ops().hc_penalty(&la0, hc.penalty_shift(), &sig, 1);
  const double expected = 1.0 / (1.0 + std::exp((2.0 / 3.0) * std::log(0.1 / 1.1)));
  CHECK(expected == doctest::Approx(0.8318).epsilon(1e-4));
  CHECK(sum == doctest::Approx(expected).epsilon(1e-9));

  // penalty exactly 0.5 when log_alpha equals the shift
  double las = hc.penalty_shift();
  k::ops().hc_penalty(&las, hc.penalty_shift(), &sig, 1);
  CHECK(sig == doctest::Approx(0.5).epsilon(1e-12));

  if (!k::avx2_available()) return;
  const auto& s = k::scalar_ops();
  const auto& a = k::avx2_ops();
  Rng rng(17);
  const std::size_t n = 133;
  auto w = random_vec(rng, n);
  auto la = random_vec(rng, n, -3.0, 3.0);
  std::vector<double> u(n);
  for (auto& x : u) x = rng.open01();

  std::vector<double> wt1(n), wt2(n), s1(n), s2(n);
  s.hc_train_fwd(w.data(), la.data(), u.data(), hc, wt1.data(), s1.data(), n);
  a.hc_train_fwd(w.data(), la.data(), u.data(), hc, wt2.data(), s2.data(), n);
  check_close(wt1, wt2, 1e-12);
  check_close(s1, s2, 1e-12);

  auto gwt = random_vec(rng, n);
  std::vector<double> gw1(n, 0.0), gw2(n, 0.0), gl1(n, 0.0), gl2(n, 0.0);
  s.hc_train_bwd(w.data(), s1.data(), gwt.data(), hc, gw1.data(), gl1.data(), n);
  a.hc_train_bwd(w.data(), s2.data(), gwt.data(), hc, gw2.data(), gl2.data(), n);
  check_close(gw1, gw2, 1e-12);
  check_close(gl1, gl2, 1e-12);

  // sampled training gates stay inside [0, 1]
  for (std::size_t i = 0; i < n; ++i) {
    const double z = w[i] != 0.0 ? wt1[i] / w[i] : 0.0;
    CHECK(z >= -1e-15);
    CHECK(z <= 1.0 + 1e-15);
  }
}

TEST_CASE("adam kernel: closed-form first step and equivalence") {
  // single scalar, g = 1, step 1: update = -lr * 1/(sqrt(1)+eps)
  double p = 0.0, g = 1.0, m = 0.0, v = 0.0;
  const double lr = 0.001, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 / (1.0 - b1), c2 = 1.0 / (1.0 - b2);
  CHECK(k::ops().adam(&p, &g, &m, &v, 1, lr, b1, b2, eps, c1, c2) == 1);
  CHECK(p == doctest::Approx(-lr / (1.0 + eps)).epsilon(1e-12));

  // zero gradient leaves parameters unchanged
  double p2 = 1.5, g2 = 0.0, m2 = 0.0, v2 = 0.0;
  k::ops().adam(&p2, &g2, &m2, &v2, 1, lr, b1, b2, eps, c1, c2);
  CHECK(p2 == 1.5);

  // non-finite gradient is reported
  double p3 = 0.0, g3 = std::nan(""), m3 = 0.0, v3 = 0.0;
  CHECK(k::ops().adam(&p3, &g3, &m3, &v3, 1, lr, b1, b2, eps, c1, c2) == 0);
  double g4[5] = {1.0, 2.0, 3.0, 4.0, std::numeric_limits<double>::infinity()};
  double p4[5] = {}, m4[5] = {}, v4[5] = {};
  CHECK(k::ops().adam(p4, g4, m4, v4, 5, lr, b1, b2, eps, c1, c2) == 0);

  if (!k::avx2_available()) return;
  Rng rng(23);
  const std::size_t n = 101;
  auto gs = random_vec(rng, n);
  auto ps1 = random_vec(rng, n);
  auto ps2 = ps1;
  std::vector<double> ms1(n, 0.0), vs1(n, 0.0), ms2(n, 0.0), vs2(n, 0.0);
  for (int t = 1; t <= 3; ++t) {
    const double cc1 = 1.0 / (1.0 - std::pow(b1, t));
    const double cc2 = 1.0 / (1.0 - std::pow(b2, t));
    k::scalar_ops().adam(ps1.data(), gs.data(), ms1.data(), vs1.data(), n, lr, b1, b2, eps, cc1, cc2);
    k::avx2_ops().adam(ps2.data(), gs.data(), ms2.data(), vs2.data(), n, lr, b1, b2, eps, cc1, cc2);
  }
  check_close(ps1, ps2, 1e-13);
}

TEST_CASE("rng: stream independence, open interval, shuffle determinism") {
  Rng a = Rng::stream(42, streams::kInit);
  Rng b = Rng::stream(42, streams::kInit);
  Rng c = Rng::stream(42, streams::kSample, 3);
  CHECK(a.next_u64() == b.next_u64());
  CHECK(a.next_u64() != c.next_u64());

  Rng r(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.open01();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }

  // mean/stddev sanity for the normal generator
  Rng g(9);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = g.normal(2.0, 3.0);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(mean == doctest::Approx(2.0).epsilon(0.02));
  CHECK(var == doctest::Approx(9.0).epsilon(0.03));

  std::vector<int> xs{0, 1, 2, 3, 4, 5, 6, 7};
  auto ys = xs;
  Rng s1(77), s2(77);
  s1.shuffle(std::span<int>(xs));
  s2.shuffle(std::span<int>(ys));
  CHECK(xs == ys);
}
