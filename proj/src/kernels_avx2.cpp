#include "mccf/kernels.hpp"

#if defined(MCCF_BUILD_AVX2)

#include <immintrin.h>

#include <cmath>

// AVX2+FMA variants of the inner loops. Each function keeps a fixed lane
// order, so results are bitwise reproducible run-to-run; they differ from the
// scalar reference only by floating-point reassociation (covered by the
// equivalence tests in tests/test_kernels.cpp).

namespace mccf::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

// exp(x) for four lanes, Cephes-style: x = n*ln2 + r, exp(r) as a rational
// polynomial, then scale by 2^n. Inputs are clamped to +-709; values below
// the normal range flush to 0. Accurate to a few ulp.
inline __m256d exp_pd(__m256d x) {
  const __m256d hi = _mm256_set1_pd(709.08);
  const __m256d lo = _mm256_set1_pd(-708.39);
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212e-6);

  const __m256d under = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  x = _mm256_min_pd(x, hi);
  x = _mm256_max_pd(x, lo);

  __m256d n = _mm256_round_pd(_mm256_fmadd_pd(x, log2e, _mm256_set1_pd(0.0)),
                              _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, c1, x);
  r = _mm256_fnmadd_pd(n, c2, r);

  const __m256d rr = _mm256_mul_pd(r, r);
  __m256d p = _mm256_set1_pd(1.26177193074810590878e-4);
  p = _mm256_fmadd_pd(p, rr, _mm256_set1_pd(3.02994407707441961300e-2));
  p = _mm256_fmadd_pd(p, rr, _mm256_set1_pd(9.99999999999999999910e-1));
  p = _mm256_mul_pd(p, r);
  __m256d q = _mm256_set1_pd(3.00198505138664455042e-6);
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.52448340349684104192e-3));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.27265548208155028766e-1));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.00000000000000000005e0));
  __m256d e = _mm256_div_pd(p, _mm256_sub_pd(q, p));
  e = _mm256_fmadd_pd(_mm256_set1_pd(2.0), e, _mm256_set1_pd(1.0));

  // 2^n via the exponent field: (n + 1023) << 52.
  const __m256d bias = _mm256_add_pd(n, _mm256_set1_pd(1023.0 + 4503599627370496.0));
  const __m256i pow2n = _mm256_slli_epi64(_mm256_castpd_si256(bias), 52);
  e = _mm256_mul_pd(e, _mm256_castsi256_pd(pow2n));
  return _mm256_andnot_pd(under, e);
}

// log(x) for four lanes, positive normal inputs (the callers guarantee it).
inline __m256d log_pd(__m256d x) {
  const __m256i mant_mask = _mm256_set1_epi64x(0x000FFFFFFFFFFFFFll);
  const __m256i half_expo = _mm256_set1_epi64x(0x3FE0000000000000ll);
  const __m256d sqrth = _mm256_set1_pd(0.70710678118654752440);

  const __m256i bits = _mm256_castpd_si256(x);
  // Unbiased-to-1022 exponent as a double, via the 2^52 magic constant.
  __m256i eb = _mm256_srli_epi64(bits, 52);
  eb = _mm256_or_si256(eb, _mm256_castpd_si256(_mm256_set1_pd(4503599627370496.0)));
  __m256d e = _mm256_sub_pd(_mm256_castsi256_pd(eb),
                            _mm256_set1_pd(4503599627370496.0 + 1022.0));
  __m256d m = _mm256_castsi256_pd(
      _mm256_or_si256(_mm256_and_si256(bits, mant_mask), half_expo));

  const __m256d small = _mm256_cmp_pd(m, sqrth, _CMP_LT_OQ);
  e = _mm256_sub_pd(e, _mm256_and_pd(small, _mm256_set1_pd(1.0)));
  m = _mm256_add_pd(m, _mm256_and_pd(small, m));
  m = _mm256_sub_pd(m, _mm256_set1_pd(1.0));

  const __m256d z = _mm256_mul_pd(m, m);
  __m256d p = _mm256_set1_pd(1.01875663804580931796e-4);
  p = _mm256_fmadd_pd(p, m, _mm256_set1_pd(4.97494994976747001425e-1));
  p = _mm256_fmadd_pd(p, m, _mm256_set1_pd(4.70579119878881725854e0));
  p = _mm256_fmadd_pd(p, m, _mm256_set1_pd(1.44989225341610930846e1));
  p = _mm256_fmadd_pd(p, m, _mm256_set1_pd(1.79368678507819816313e1));
  p = _mm256_fmadd_pd(p, m, _mm256_set1_pd(7.70838733755885391666e0));
  __m256d q = _mm256_add_pd(m, _mm256_set1_pd(1.12873587189167450590e1));
  q = _mm256_fmadd_pd(q, m, _mm256_set1_pd(4.52279145837532221105e1));
  q = _mm256_fmadd_pd(q, m, _mm256_set1_pd(8.29875266912776603211e1));
  q = _mm256_fmadd_pd(q, m, _mm256_set1_pd(7.11544750618563894466e1));
  q = _mm256_fmadd_pd(q, m, _mm256_set1_pd(2.31251620126765340583e1));

  __m256d y = _mm256_mul_pd(_mm256_mul_pd(m, z), _mm256_div_pd(p, q));
  y = _mm256_fnmadd_pd(e, _mm256_set1_pd(2.121944400546905827679e-4), y);
  y = _mm256_fnmadd_pd(_mm256_set1_pd(0.5), z, y);
  __m256d out = _mm256_add_pd(m, y);
  out = _mm256_fmadd_pd(e, _mm256_set1_pd(0.693359375), out);
  return out;
}

inline __m256d sigmoid_pd(__m256d x) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d ex = exp_pd(_mm256_sub_pd(_mm256_setzero_pd(), x));
  return _mm256_div_pd(one, _mm256_add_pd(one, ex));
}

double k_dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  __m256d acc3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
    acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double sum = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void k_axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void k_scale(const double* x, double alpha, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = alpha * x[i];
}

void k_add(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

void k_acc(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] += x[i];
}

void k_mul(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

void k_mul_acc(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                                            _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a[i] * b[i];
}

void k_relu(const double* x, double* y, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void k_leaky(const double* x, double slope, double* y, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d vs = _mm256_set1_pd(slope);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d neg = _mm256_cmp_pd(v, zero, _CMP_LE_OQ);
    _mm256_storeu_pd(y + i, _mm256_blendv_pd(v, _mm256_mul_pd(v, vs), neg));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void k_sigmoid(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, sigmoid_pd(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

void k_relu_bwd(const double* x, const double* gy, double* gx, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d pos = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d g = _mm256_and_pd(pos, _mm256_loadu_pd(gy + i));
    _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), g));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0) gx[i] += gy[i];
}

void k_leaky_bwd(const double* x, double slope, const double* gy, double* gx, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d vs = _mm256_set1_pd(slope);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(gy + i);
    const __m256d neg = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_LE_OQ);
    const __m256d gsel = _mm256_blendv_pd(g, _mm256_mul_pd(g, vs), neg);
    _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), gsel));
  }
  for (; i < n; ++i) gx[i] += x[i] > 0.0 ? gy[i] : slope * gy[i];
}

void k_sigmoid_bwd(const double* y, const double* gy, double* gx, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d yv = _mm256_loadu_pd(y + i);
    const __m256d d = _mm256_mul_pd(yv, _mm256_sub_pd(one, yv));
    _mm256_storeu_pd(gx + i, _mm256_fmadd_pd(d, _mm256_loadu_pd(gy + i),
                                             _mm256_loadu_pd(gx + i)));
  }
  for (; i < n; ++i) gx[i] += y[i] * (1.0 - y[i]) * gy[i];
}

void k_vexp(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, exp_pd(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = std::exp(x[i]);
}

void k_vlog(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, log_pd(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = std::log(x[i]);
}

void k_gather(const double* mat, std::size_t d, const std::int32_t* idx,
              const double* val, std::size_t nnz, double* y) {
  for (std::size_t k = 0; k < nnz; ++k) {
    const double* col = mat + std::size_t(idx[k]) * d;
    if (k + 1 < nnz) {
      const double* next = mat + std::size_t(idx[k + 1]) * d;
      for (std::size_t p = 0; p < d; p += 8) _mm_prefetch((const char*)(next + p), _MM_HINT_T0);
    }
    const __m256d v = _mm256_set1_pd(val[k]);
    std::size_t r = 0;
    for (; r + 4 <= d; r += 4)
      _mm256_storeu_pd(y + r, _mm256_fmadd_pd(v, _mm256_loadu_pd(col + r),
                                              _mm256_loadu_pd(y + r)));
    for (; r < d; ++r) y[r] += val[k] * col[r];
  }
}

void k_scatter(double* gmat, std::size_t d, const std::int32_t* idx,
               const double* val, std::size_t nnz, const double* gy) {
  for (std::size_t k = 0; k < nnz; ++k) {
    double* col = gmat + std::size_t(idx[k]) * d;
    if (k + 1 < nnz) {
      double* next = gmat + std::size_t(idx[k + 1]) * d;
      for (std::size_t p = 0; p < d; p += 8) _mm_prefetch((const char*)(next + p), _MM_HINT_T0);
    }
    const __m256d v = _mm256_set1_pd(val[k]);
    std::size_t r = 0;
    for (; r + 4 <= d; r += 4)
      _mm256_storeu_pd(col + r, _mm256_fmadd_pd(v, _mm256_loadu_pd(gy + r),
                                                _mm256_loadu_pd(col + r)));
    for (; r < d; ++r) col[r] += val[k] * gy[r];
  }
}

void k_hc_train_fwd(const double* w, const double* la, const double* u01,
                    HcConsts hc, double* wt, double* s, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d stretch = _mm256_set1_pd(hc.zeta - hc.gamma);
  const __m256d gamma = _mm256_set1_pd(hc.gamma);
  const __m256d inv_beta = _mm256_set1_pd(1.0 / hc.beta);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d u = _mm256_loadu_pd(u01 + i);
    const __m256d logit_u = log_pd(_mm256_div_pd(u, _mm256_sub_pd(one, u)));
    const __m256d arg =
        _mm256_mul_pd(_mm256_add_pd(logit_u, _mm256_loadu_pd(la + i)), inv_beta);
    const __m256d si = sigmoid_pd(arg);
    __m256d z = _mm256_fmadd_pd(si, stretch, gamma);
    z = _mm256_min_pd(_mm256_max_pd(z, zero), one);
    _mm256_storeu_pd(s + i, si);
    _mm256_storeu_pd(wt + i, _mm256_mul_pd(z, _mm256_loadu_pd(w + i)));
  }
  for (; i < n; ++i) {
    const double logit_u = std::log(u01[i] / (1.0 - u01[i]));
    const double si = 1.0 / (1.0 + std::exp(-(logit_u + la[i]) / hc.beta));
    double z = si * (hc.zeta - hc.gamma) + hc.gamma;
    z = z < 0.0 ? 0.0 : (z > 1.0 ? 1.0 : z);
    s[i] = si;
    wt[i] = z * w[i];
  }
}

void k_hc_train_bwd(const double* w, const double* s, const double* gwt,
                    HcConsts hc, double* gw, double* gla, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d stretch = _mm256_set1_pd(hc.zeta - hc.gamma);
  const __m256d gamma = _mm256_set1_pd(hc.gamma);
  const __m256d k = _mm256_set1_pd((hc.zeta - hc.gamma) / hc.beta);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d si = _mm256_loadu_pd(s + i);
    const __m256d g = _mm256_loadu_pd(gwt + i);
    const __m256d sbar = _mm256_fmadd_pd(si, stretch, gamma);
    const __m256d z = _mm256_min_pd(_mm256_max_pd(sbar, zero), one);
    _mm256_storeu_pd(gw + i, _mm256_fmadd_pd(z, g, _mm256_loadu_pd(gw + i)));
    const __m256d open = _mm256_and_pd(_mm256_cmp_pd(sbar, zero, _CMP_GT_OQ),
                                       _mm256_cmp_pd(sbar, one, _CMP_LT_OQ));
    __m256d dz = _mm256_mul_pd(k, _mm256_mul_pd(si, _mm256_sub_pd(one, si)));
    dz = _mm256_and_pd(dz, open);
    const __m256d gl = _mm256_mul_pd(_mm256_mul_pd(g, _mm256_loadu_pd(w + i)), dz);
    _mm256_storeu_pd(gla + i, _mm256_add_pd(_mm256_loadu_pd(gla + i), gl));
  }
  for (; i < n; ++i) {
    const double sbar = s[i] * (hc.zeta - hc.gamma) + hc.gamma;
    const double z = sbar < 0.0 ? 0.0 : (sbar > 1.0 ? 1.0 : sbar);
    gw[i] += z * gwt[i];
    if (sbar > 0.0 && sbar < 1.0)
      gla[i] += gwt[i] * w[i] * (hc.zeta - hc.gamma) / hc.beta * s[i] * (1.0 - s[i]);
  }
}

void k_hc_eval_gate(const double* la, HcConsts hc, double* z, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d stretch = _mm256_set1_pd(hc.zeta - hc.gamma);
  const __m256d gamma = _mm256_set1_pd(hc.gamma);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d s = sigmoid_pd(_mm256_loadu_pd(la + i));
    __m256d zi = _mm256_fmadd_pd(s, stretch, gamma);
    _mm256_storeu_pd(z + i, _mm256_min_pd(_mm256_max_pd(zi, zero), one));
  }
  for (; i < n; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-la[i]));
    double zi = s * (hc.zeta - hc.gamma) + hc.gamma;
    z[i] = zi < 0.0 ? 0.0 : (zi > 1.0 ? 1.0 : zi);
  }
}

double k_hc_penalty(const double* la, double shift, double* sig, std::size_t n) {
  const __m256d vshift = _mm256_set1_pd(shift);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d s = sigmoid_pd(_mm256_sub_pd(_mm256_loadu_pd(la + i), vshift));
    _mm256_storeu_pd(sig + i, s);
    acc = _mm256_add_pd(acc, s);
  }
  double sum = hsum(acc);
  for (; i < n; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-(la[i] - shift)));
    sig[i] = s;
    sum += s;
  }
  return sum;
}

int k_adam(double* p, const double* g, double* m, double* v, std::size_t n,
           double lr, double b1, double b2, double eps, double c1, double c2) {
  const __m256d vb1 = _mm256_set1_pd(b1);
  const __m256d vb2 = _mm256_set1_pd(b2);
  const __m256d vnb1 = _mm256_set1_pd(1.0 - b1);
  const __m256d vnb2 = _mm256_set1_pd(1.0 - b2);
  const __m256d vc1 = _mm256_set1_pd(c1);
  const __m256d vc2 = _mm256_set1_pd(c2);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d inf = _mm256_set1_pd(__builtin_inf());
  __m256d bad = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gi = _mm256_loadu_pd(g + i);
    // NaN fails the self-compare; +-inf fails the abs < inf compare.
    const __m256d notfin = _mm256_or_pd(
        _mm256_cmp_pd(gi, gi, _CMP_UNORD_Q),
        _mm256_cmp_pd(_mm256_andnot_pd(_mm256_set1_pd(-0.0), gi), inf, _CMP_GE_OQ));
    bad = _mm256_or_pd(bad, notfin);
    const __m256d mi = _mm256_fmadd_pd(vb1, _mm256_loadu_pd(m + i), _mm256_mul_pd(vnb1, gi));
    const __m256d vi =
        _mm256_fmadd_pd(vb2, _mm256_loadu_pd(v + i), _mm256_mul_pd(vnb2, _mm256_mul_pd(gi, gi)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vi, vc2)), veps);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(vlr, _mm256_mul_pd(mi, vc1)), denom);
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
  }
  int ok = _mm256_movemask_pd(bad) == 0;
  for (; i < n; ++i) {
    const double gi = g[i];
    if (!std::isfinite(gi)) ok = 0;
    m[i] = b1 * m[i] + (1.0 - b1) * gi;
    v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
    p[i] -= lr * (m[i] * c1) / (std::sqrt(v[i] * c2) + eps);
  }
  return ok;
}

}  // namespace

namespace detail {

Ops make_avx2_ops() {
  Ops o{};
  o.name = "avx2";
  o.dot = k_dot;
  o.axpy = k_axpy;
  o.scale = k_scale;
  o.add = k_add;
  o.acc = k_acc;
  o.mul = k_mul;
  o.mul_acc = k_mul_acc;
  o.relu = k_relu;
  o.leaky_relu = k_leaky;
  o.sigmoid = k_sigmoid;
  o.relu_bwd = k_relu_bwd;
  o.leaky_relu_bwd = k_leaky_bwd;
  o.sigmoid_bwd = k_sigmoid_bwd;
  o.vexp = k_vexp;
  o.vlog = k_vlog;
  o.gather_cols_acc = k_gather;
  o.scatter_cols_acc = k_scatter;
  o.hc_train_fwd = k_hc_train_fwd;
  o.hc_train_bwd = k_hc_train_bwd;
  o.hc_eval_gate = k_hc_eval_gate;
  o.hc_penalty = k_hc_penalty;
  o.adam = k_adam;
  return o;
}

}  // namespace detail

}  // namespace mccf::kernels

#else  // !MCCF_BUILD_AVX2

namespace mccf::kernels::detail {
Ops make_avx2_ops() { return make_scalar_ops(); }
}  // namespace mccf::kernels::detail

#endif
