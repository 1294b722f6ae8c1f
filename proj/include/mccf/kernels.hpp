#pragma once

#include <cstddef>
#include <cstdint>

namespace mccf::kernels {

// Hard-concrete gate constants (temperature and stretch interval).
struct HcConsts {
  double beta = 2.0 / 3.0;
  double gamma = -0.1;
  double zeta = 1.1;
  // Shift used by the expected-L0 penalty: sigmoid(log_alpha - beta*log(-gamma/zeta)).
  double penalty_shift() const;
};

// Flat table of the arithmetic inner loops. Two complete implementations
// exist (scalar reference and AVX2); the active one is picked once at
// runtime from CPU features. Accumulation order is fixed within each
// implementation, so results are bitwise reproducible per ISA.
struct Ops {
  const char* name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);  // y += alpha*x
  void (*scale)(const double* x, double alpha, double* y, std::size_t n); // y = alpha*x
  void (*add)(const double* a, const double* b, double* y, std::size_t n);
  void (*acc)(const double* x, double* y, std::size_t n);                 // y += x
  void (*mul)(const double* a, const double* b, double* y, std::size_t n);
  void (*mul_acc)(const double* a, const double* b, double* y, std::size_t n);

  void (*relu)(const double* x, double* y, std::size_t n);
  void (*leaky_relu)(const double* x, double slope, double* y, std::size_t n);
  void (*sigmoid)(const double* x, double* y, std::size_t n);
  // Backward passes accumulate into gx. relu uses subgradient 0 at x = 0.
  void (*relu_bwd)(const double* x, const double* gy, double* gx, std::size_t n);
  void (*leaky_relu_bwd)(const double* x, double slope, const double* gy, double* gx, std::size_t n);
  void (*sigmoid_bwd)(const double* y, const double* gy, double* gx, std::size_t n);

  void (*vexp)(const double* x, double* y, std::size_t n);
  void (*vlog)(const double* x, double* y, std::size_t n);

  // Sparse-feature extraction over a column-major d x L matrix:
  //   y += sum_k val[k] * mat[:, idx[k]]
  void (*gather_cols_acc)(const double* mat, std::size_t d, const std::int32_t* idx,
                          const double* val, std::size_t nnz, double* y);
  //   gmat[:, idx[k]] += val[k] * gy
  void (*scatter_cols_acc)(double* gmat, std::size_t d, const std::int32_t* idx,
                           const double* val, std::size_t nnz, const double* gy);

  // Hard-concrete gates, fused with the elementwise weight product.
  // Training forward: s = sigmoid((logit(u) + la)/beta), z = clamp(s*(zeta-gamma)+gamma, 0, 1),
  // wt = z*w; the sigmoid output s is saved for backward.
  void (*hc_train_fwd)(const double* w, const double* la, const double* u01,
                       HcConsts hc, double* wt, double* s, std::size_t n);
  void (*hc_train_bwd)(const double* w, const double* s, const double* gwt,
                       HcConsts hc, double* gw, double* gla, std::size_t n);
  // Deterministic evaluation gate: z = clamp(sigmoid(la)*(zeta-gamma)+gamma, 0, 1).
  void (*hc_eval_gate)(const double* la, HcConsts hc, double* z, std::size_t n);
  // Expected-L0 penalty: sig[k] = sigmoid(la[k] - shift); returns sum(sig).
  double (*hc_penalty)(const double* la, double shift, double* sig, std::size_t n);

  // One Adam update with bias correction factors c1 = 1/(1-b1^t), c2 = 1/(1-b2^t).
  // Returns 0 if a non-finite gradient entry was seen (params still updated
  // for preceding entries; the caller aborts anyway).
  int (*adam)(double* p, const double* g, double* m, double* v, std::size_t n,
              double lr, double b1, double b2, double eps, double c1, double c2);
};

// Active table, selected at runtime (AVX2+FMA when the CPU has it).
const Ops& ops();

// Named tables for equivalence tests.
const Ops& scalar_ops();
bool avx2_available();
const Ops& avx2_ops();  // only valid when avx2_available()

// Name of the active implementation ("scalar" or "avx2").
const char* active_isa();

namespace detail {
Ops make_scalar_ops();
Ops make_avx2_ops();
}  // namespace detail

}  // namespace mccf::kernels
