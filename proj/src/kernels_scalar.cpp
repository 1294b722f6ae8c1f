#include <cmath>

#include "mccf/kernels.hpp"

// Reference implementation. Deliberately plain loops: this is the oracle the
// SIMD variants are equivalence-tested against.

namespace mccf::kernels {

double HcConsts::penalty_shift() const { return beta * std::log(-gamma / zeta); }

namespace {

double k_dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void k_axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void k_scale(const double* x, double alpha, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

void k_add(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void k_acc(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void k_mul(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void k_mul_acc(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

void k_relu(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void k_leaky(const double* x, double slope, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void k_sigmoid(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

void k_relu_bwd(const double* x, const double* gy, double* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > 0.0) gx[i] += gy[i];
}

void k_leaky_bwd(const double* x, double slope, const double* gy, double* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) gx[i] += x[i] > 0.0 ? gy[i] : slope * gy[i];
}

void k_sigmoid_bwd(const double* y, const double* gy, double* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) gx[i] += y[i] * (1.0 - y[i]) * gy[i];
}

void k_vexp(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}

void k_vlog(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::log(x[i]);
}

void k_gather(const double* mat, std::size_t d, const std::int32_t* idx,
              const double* val, std::size_t nnz, double* y) {
  for (std::size_t k = 0; k < nnz; ++k) {
    const double* col = mat + std::size_t(idx[k]) * d;
    const double v = val[k];
    for (std::size_t r = 0; r < d; ++r) y[r] += v * col[r];
  }
}

void k_scatter(double* gmat, std::size_t d, const std::int32_t* idx,
               const double* val, std::size_t nnz, const double* gy) {
  for (std::size_t k = 0; k < nnz; ++k) {
    double* col = gmat + std::size_t(idx[k]) * d;
    const double v = val[k];
    for (std::size_t r = 0; r < d; ++r) col[r] += v * gy[r];
  }
}

void k_hc_train_fwd(const double* w, const double* la, const double* u01,
                    HcConsts hc, double* wt, double* s, std::size_t n) {
  const double stretch = hc.zeta - hc.gamma;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = u01[i];
    const double logit_u = std::log(u / (1.0 - u));
    const double si = 1.0 / (1.0 + std::exp(-(logit_u + la[i]) / hc.beta));
    double z = si * stretch + hc.gamma;
    z = z < 0.0 ? 0.0 : (z > 1.0 ? 1.0 : z);
    s[i] = si;
    wt[i] = z * w[i];
  }
}

void k_hc_train_bwd(const double* w, const double* s, const double* gwt,
                    HcConsts hc, double* gw, double* gla, std::size_t n) {
  const double stretch = hc.zeta - hc.gamma;
  for (std::size_t i = 0; i < n; ++i) {
    const double sbar = s[i] * stretch + hc.gamma;
    const double z = sbar < 0.0 ? 0.0 : (sbar > 1.0 ? 1.0 : sbar);
    gw[i] += z * gwt[i];
    if (sbar > 0.0 && sbar < 1.0) {
      const double dz = stretch / hc.beta * s[i] * (1.0 - s[i]);
      gla[i] += gwt[i] * w[i] * dz;
    }
  }
}

void k_hc_eval_gate(const double* la, HcConsts hc, double* z, std::size_t n) {
  const double stretch = hc.zeta - hc.gamma;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-la[i]));
    double zi = s * stretch + hc.gamma;
    z[i] = zi < 0.0 ? 0.0 : (zi > 1.0 ? 1.0 : zi);
  }
}

double k_hc_penalty(const double* la, double shift, double* sig, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-(la[i] - shift)));
    sig[i] = s;
    sum += s;
  }
  return sum;
}

int k_adam(double* p, const double* g, double* m, double* v, std::size_t n,
           double lr, double b1, double b2, double eps, double c1, double c2) {
  int ok = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = g[i];
    if (!std::isfinite(gi)) ok = 0;
    m[i] = b1 * m[i] + (1.0 - b1) * gi;
    v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
    const double mhat = m[i] * c1;
    const double vhat = v[i] * c2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
  return ok;
}

}  // namespace

namespace detail {

Ops make_scalar_ops() {
  Ops o{};
  o.name = "scalar";
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
