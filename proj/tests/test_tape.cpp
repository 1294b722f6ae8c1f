#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "mccf/tape.hpp"

using namespace mccf;

namespace {

// Central finite differences of the scalar the builder records, compared
// against the adjoints from one backward pass. Independent of the backward
// path: it only re-runs forwards at perturbed parameter values.
void fd_check_var(const std::function<VarId(Tape&)>& build, std::vector<Tensor*> params,
                  double h = 1e-5, double tol = 1e-6) {
  for (auto* p : params) p->zero_grad();
  Tape tape;
  const VarId loss = build(tape);
  tape.backward(loss);

  for (auto* p : params) {
    for (std::size_t i = 0; i < p->val.size(); ++i) {
      const double keep = p->val[i];
      p->val[i] = keep + h;
      Tape t1;
      const double f1 = t1.value(build(t1))[0];
      p->val[i] = keep - h;
      Tape t2;
      const double f2 = t2.value(build(t2))[0];
      p->val[i] = keep;
      const double fd = (f1 - f2) / (2.0 * h);
      const double an = p->grad[i];
      const double rel = std::fabs(an - fd) / (std::fabs(an) + 1e-8);
      CAPTURE(i);
      CAPTURE(an);
      CAPTURE(fd);
      CHECK(rel < tol);
    }
  }
}

Tensor make_tensor(std::initializer_list<double> vals, int r, int c, bool grad = true) {
  Tensor t(r, c, grad);
  std::size_t i = 0;
  for (double v : vals) t.val[i++] = v;
  return t;
}

}  // namespace

TEST_CASE("matvec: identity passes the vector through") {
  Tensor I = make_tensor({1, 0, 0, 1}, 2, 2);
  Tensor x = make_tensor({3, 4}, 2, 1);
  Tape t;
  const VarId y = t.matvec(t.leaf(I), t.leaf(x));
  CHECK(t.value(y)[0] == 3.0);
  CHECK(t.value(y)[1] == 4.0);
}

TEST_CASE("concat forwards values and sum routes unit gradients") {
  Tensor a = make_tensor({1}, 1, 1);
  Tensor b = make_tensor({2}, 1, 1);
  Tape t;
  const VarId c = t.concat(t.leaf(a), t.leaf(b));
  CHECK(t.value(c)[0] == 1.0);
  CHECK(t.value(c)[1] == 2.0);
  const VarId s = t.sum(c);
  t.backward(s);
  CHECK(a.grad[0] == 1.0);
  CHECK(b.grad[0] == 1.0);
}

TEST_CASE("backward: squares and products") {
  Tensor x = make_tensor({3}, 1, 1);
  {
    Tape t;
    const VarId f = t.matmul(t.leaf(x), t.leaf(x));
    t.backward(f);
    CHECK(x.grad[0] == doctest::Approx(6.0));
  }
  Tensor a = make_tensor({2}, 1, 1);
  Tensor b = make_tensor({5}, 1, 1);
  {
    a.zero_grad();
    b.zero_grad();
    Tape t;
    const VarId f = t.matmul(t.leaf(a), t.leaf(b));
    t.backward(f);
    CHECK(a.grad[0] == doctest::Approx(5.0));
    CHECK(b.grad[0] == doctest::Approx(2.0));
  }
}

TEST_CASE("matmul gradient matches central differences") {
  Rng rng(5);
  Tensor A = Tensor::gaussian(3, 3, rng, 0.0, 1.0);
  Tensor B = Tensor::gaussian(3, 3, rng, 0.0, 1.0);
  fd_check_var([&](Tape& t) { return t.sum(t.matmul(t.leaf(A), t.leaf(B))); }, {&A, &B});
}

TEST_CASE("elementwise activations") {
  Tensor x = make_tensor({-1, 0, 2}, 3, 1);
  Tape t;
  const VarId r = t.relu(t.leaf(x));
  CHECK(t.value(r)[0] == 0.0);
  CHECK(t.value(r)[1] == 0.0);
  CHECK(t.value(r)[2] == 2.0);

  Tensor z = make_tensor({0}, 1, 1);
  const VarId s = t.sigmoid(t.leaf(z));
  CHECK(t.value(s)[0] == doctest::Approx(0.5));

  Tensor m = make_tensor({-1}, 1, 1);
  const VarId l = t.leaky_relu(t.leaf(m), 0.2);
  CHECK(t.value(l)[0] == doctest::Approx(-0.2));
}

TEST_CASE("softmax: symmetry, shift invariance, normalization") {
  Tensor x = make_tensor({0, 0}, 2, 1);
  Tape t;
  const VarId y = t.softmax(t.leaf(x));
  CHECK(t.value(y)[0] == doctest::Approx(0.5));
  CHECK(t.value(y)[1] == doctest::Approx(0.5));

  Tensor big = make_tensor({1000, 1000}, 2, 1);
  const VarId yb = t.softmax(t.leaf(big));
  CHECK(t.value(yb)[0] == doctest::Approx(0.5));
  CHECK(std::isfinite(t.value(yb)[1]));

  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor v = Tensor::gaussian(7, 1, rng, 0.0, 2.0, false);
    Tensor vs = v;
    for (auto& e : vs.val) e += 123.456;
    Tape tt;
    const VarId av = tt.softmax(tt.leaf(v));
    const VarId bv = tt.softmax(tt.leaf(vs));
    const std::vector<double> a(tt.value(av).begin(), tt.value(av).end());
    const std::vector<double> b(tt.value(bv).begin(), tt.value(bv).end());
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] >= 0.0);
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
      sum += a[i];
    }
    CHECK(std::fabs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("softmax gradient matches central differences") {
  Rng rng(3);
  Tensor x = Tensor::gaussian(5, 1, rng, 0.0, 1.0);
  Tensor w = Tensor::gaussian(5, 1, rng, 0.0, 1.0, false);
  Tensor zero(1, 1, false);
  // weighted sum of softmax outputs gives a non-trivial scalar
  fd_check_var(
      [&](Tape& t) {
        const VarId sm = t.softmax(t.leaf(x));
        return t.dot_bias(t.leaf(w), sm, t.leaf(zero));
      },
      {&x});
}

TEST_CASE("dropout contract") {
  Rng rng(7);
  Tensor x = Tensor::gaussian(100, 1, rng, 1.0, 0.1, false);
  Tape t;
  const VarId id0 = t.dropout(t.leaf(x), 0.0, rng, true);
  CHECK(t.value(id0).data() == x.val.data());  // identity, no copy

  const VarId ide = t.dropout(t.leaf(x), 0.5, rng, false);
  CHECK(t.value(ide).data() == x.val.data());

  // Monte Carlo: survivor fraction 0.5 +- 0.01, mean preserved within 1%
  const std::size_t n = 100000;
  Tensor big(int(n), 1, false);
  for (auto& v : big.val) v = 1.0;
  Tape t2;
  const auto y = t2.value(t2.dropout(t2.leaf(big), 0.5, rng, true));
  std::size_t survivors = 0;
  double mean = 0.0;
  for (double v : y) {
    if (v != 0.0) ++survivors;
    mean += v;
  }
  mean /= double(n);
  CHECK(std::fabs(double(survivors) / double(n) - 0.5) < 0.01);
  CHECK(std::fabs(mean - 1.0) < 0.01);
}

TEST_CASE("dropout gradient respects the mask") {
  Rng rng(9);
  Tensor x = Tensor::gaussian(64, 1, rng, 0.0, 1.0);
  x.zero_grad();
  Tape t;
  const VarId xl = t.leaf(x);
  Rng drop(13);
  const VarId y = t.dropout(xl, 0.5, drop, true);
  const VarId loss = t.sum(y);
  t.backward(loss);
  const auto yv = t.value(y);
  for (std::size_t i = 0; i < x.val.size(); ++i) {
    if (yv[i] == 0.0 && x.val[i] != 0.0) {
      CHECK(x.grad[i] == 0.0);
    } else {
      CHECK(x.grad[i] == doctest::Approx(2.0));  // 1/(1-0.5)
    }
  }
}

TEST_CASE("primitive gradients match central differences on random inputs") {
  Rng rng(21);
  Tensor A = Tensor::gaussian(4, 6, rng, 0.0, 1.0);
  Tensor x = Tensor::gaussian(6, 1, rng, 0.0, 1.0);
  Tensor b = Tensor::gaussian(4, 1, rng, 0.0, 1.0);
  Tensor q = Tensor::gaussian(4, 1, rng, 0.0, 1.0);
  Tensor s = Tensor::gaussian(1, 1, rng, 0.0, 1.0);

  fd_check_var(
      [&](Tape& t) {
        const VarId y = t.affine(t.leaf(A), t.leaf(x), t.leaf(b));
        const VarId z = t.sigmoid(y);
        return t.dot_bias(t.leaf(q), z, t.leaf(s));
      },
      {&A, &x, &b, &q, &s});

  // leaky relu + mean + scale + add
  Tensor u = Tensor::gaussian(9, 1, rng, 0.0, 1.0);
  Tensor v = Tensor::gaussian(9, 1, rng, 0.0, 1.0);
  fd_check_var(
      [&](Tape& t) {
        const VarId m = t.add(t.scale(t.leaky_relu(t.leaf(u), 0.2), 1.7), t.leaf(v));
        return t.mean(m);
      },
      {&u, &v});
}

TEST_CASE("fused ops match central differences") {
  Rng rng(31);
  const int d = 5;
  Tensor mat = Tensor::gaussian(d, 8, rng, 0.0, 0.5, true, /*cm=*/true);
  std::vector<std::int32_t> idx{1, 3, 7};
  std::vector<double> val{2.0, -1.0, 0.5};
  const SparseVec feat{idx.data(), val.data(), 3};

  Tensor attn = Tensor::gaussian(2 * d, 1, rng, 0.0, 0.5);
  Tensor sc = Tensor::gaussian(d, 1, rng, 0.0, 0.5);
  Tensor h1 = Tensor::gaussian(d, 1, rng, 0.0, 0.5);
  Tensor h2 = Tensor::gaussian(d, 1, rng, 0.0, 0.5);

  fd_check_var(
      [&](Tape& t) {
        const VarId e = t.extract(t.leaf(mat), feat);
        const VarId hs[] = {t.leaf(h1), t.leaf(h2), e};
        const VarId scores = t.attn_scores(t.leaf(attn), t.leaf(sc), hs, Activation::leaky_relu);
        const VarId alpha = t.softmax(scores);
        const VarId z = t.weighted_sum(alpha, hs);
        return t.mean(z);
      },
      {&mat, &attn, &sc, &h1, &h2}, 1e-5, 2e-6);

  // pack + mse_half
  Tensor p1 = Tensor::gaussian(1, 1, rng, 0.0, 1.0);
  Tensor p2 = Tensor::gaussian(1, 1, rng, 0.0, 1.0);
  const double targets[] = {1.0, 3.0};
  fd_check_var(
      [&](Tape& t) {
        const VarId preds[] = {t.leaf(p1), t.leaf(p2)};
        return t.mse_half(preds, targets);
      },
      {&p1, &p2});
}

TEST_CASE("gated matrix and l0 penalty gradients") {
  Rng rng(41);
  Tensor w = Tensor::gaussian(3, 4, rng, 0.0, 0.5, true, true);
  Tensor la = Tensor::gaussian(3, 4, rng, 1.0, 0.1, true, true);
  std::vector<std::int32_t> idx{0, 2};
  std::vector<double> val{1.0, -2.0};
  const SparseVec feat{idx.data(), val.data(), 2};

  // fixed noise across finite-difference evaluations via a fixed stream
  fd_check_var(
      [&](Tape& t) {
        Rng noise(999);
        const VarId g = t.gated_matrix(w, la, &noise);
        const VarId e = t.extract(g, feat);
        Tensor* las[] = {&la};
        const VarId pen = t.l0_penalty(las);
        return t.add_scaled(t.mean(e), pen, 0.01);
      },
      {&w, &la}, 1e-6, 5e-5);
}

TEST_CASE("mse_half arithmetic") {
  Tensor p = make_tensor({2}, 1, 1, false);
  Tape t;
  const VarId pv[] = {t.leaf(p)};
  const double tgt[] = {4.0};
  CHECK(t.value(t.mse_half(pv, tgt))[0] == doctest::Approx(2.0));
}

TEST_CASE("backward linearity") {
  Rng rng(51);
  Tensor x = Tensor::gaussian(6, 1, rng, 0.0, 1.0);
  auto grad_of = [&](double a, double b) {
    x.zero_grad();
    Tape t;
    const VarId xl = t.leaf(x);
    const VarId f = t.sum(t.relu(xl));
    const VarId g = t.mean(t.sigmoid(xl));
    const VarId loss = t.add_scaled(t.scale(f, a), g, b);
    t.backward(loss);
    return x.grad;
  };
  const auto gf = grad_of(1.0, 0.0);
  const auto gg = grad_of(0.0, 1.0);
  const auto gc = grad_of(2.5, -1.5);
  for (std::size_t i = 0; i < gc.size(); ++i)
    CHECK(gc[i] == doctest::Approx(2.5 * gf[i] - 1.5 * gg[i]).epsilon(1e-12));
}

TEST_CASE("deterministic gradients for a fixed seed") {
  auto run = [] {
    Rng rng(77);
    Tensor A = Tensor::gaussian(8, 8, rng, 0.0, 1.0);
    Tensor x = Tensor::gaussian(8, 1, rng, 0.0, 1.0);
    Tape t;
    Rng drop(5);
    const VarId y = t.dropout(t.sigmoid(t.matvec(t.leaf(A), t.leaf(x))), 0.3, drop, true);
    t.backward(t.sum(y));
    return A.grad;
  };
  const auto g1 = run();
  const auto g2 = run();
  CHECK(g1 == g2);  // bitwise
}

TEST_CASE("error paths: non-scalar loss, tape reuse, shape mismatch") {
  Tensor x = make_tensor({1, 2}, 2, 1);
  {
    Tape t;
    const VarId xl = t.leaf(x);
    CHECK_THROWS_AS(t.backward(xl), TapeError);
  }
  {
    Tape t;
    const VarId s = t.sum(t.leaf(x));
    t.backward(s);
    CHECK_THROWS_AS(t.backward(s), TapeError);
  }
  {
    Tensor A = make_tensor({1, 2, 3, 4, 5, 6}, 2, 3);
    Tensor v = make_tensor({1, 1}, 2, 1);
    Tape t;
    CHECK_THROWS_AS(t.matvec(t.leaf(A), t.leaf(v)), TapeError);
  }
}

TEST_CASE("leaf memoization accumulates through shared subexpressions") {
  Tensor x = make_tensor({2}, 1, 1);
  x.zero_grad();
  Tape t;
  const VarId x1 = t.leaf(x);
  const VarId x2 = t.leaf(x);
  CHECK(x1 == x2);
  const VarId f = t.matmul(x1, x2);  // x^2
  t.backward(f);
  CHECK(x.grad[0] == doctest::Approx(4.0));
}
