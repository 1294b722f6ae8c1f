#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "mccf/kernels.hpp"
#include "mccf/rng.hpp"
#include "mccf/tensor.hpp"

namespace mccf {

using VarId = std::int32_t;

enum class Activation { relu, leaky_relu };

// Reverse-mode tape over dense double tensors. forward ops append nodes in
// topological order; backward() walks them once in reverse and accumulates
// exact adjoints into every reachable requires_grad tensor.
//
// A tape covers one forward recording (typically one mini-batch); reset()
// reuses the arenas for the next one. Single-threaded by design; run
// concurrent batches on distinct tapes.
class Tape {
 public:
  explicit Tape(kernels::HcConsts hc = {}) : hc_(hc) {}

  // --- variables -----------------------------------------------------------

  // External tensor (parameter). Memoized per tensor, so repeated leaf()
  // calls share one slot and adjoints accumulate once.
  VarId leaf(Tensor& t);
  VarId constant(std::span<const double> data, int rows, int cols);
  VarId constant_fill(double v, int rows, int cols);

  // --- generic primitives ----------------------------------------------------

  VarId matvec(VarId A, VarId x);             // row-major (r x c) * (c) -> (r)
  VarId matmul(VarId A, VarId B);
  VarId add(VarId a, VarId b);
  VarId concat(VarId a, VarId b);             // vectors only
  VarId scale(VarId a, double alpha);
  VarId sum(VarId a);
  VarId mean(VarId a);
  VarId relu(VarId a);
  VarId leaky_relu(VarId a, double slope);
  VarId sigmoid(VarId a);
  VarId activation(VarId a, Activation act, double slope = 0.2);
  VarId softmax(VarId a);                     // vector; max-shifted
  VarId dropout(VarId a, double rate, Rng& rng, bool training);

  // --- fused model ops -------------------------------------------------------

  // Hard-concrete gated weights: out = z .* w. Training mode (noise != null)
  // samples one gate per entry; eval mode uses the deterministic clamp.
  VarId gated_matrix(Tensor& w, Tensor& log_alpha, Rng* noise);
  // Sparse-feature extraction: out = mat * feat, mat column-major d x L.
  VarId extract(VarId mat, SparseVec feat);
  // Attention logits for one neighborhood:
  //   out[k] = act(dot(attn[0:d], s) + dot(attn[d:2d], h[k])).
  VarId attn_scores(VarId attn, VarId s, std::span<const VarId> h, Activation act,
                    double slope = 0.2);
  // out = sum_k w[k] * items[k]
  VarId weighted_sum(VarId w, std::span<const VarId> items);
  VarId affine(VarId W, VarId x, VarId b);    // row-major W * x + b
  VarId dot_bias(VarId q, VarId x, VarId b);  // scalar dot(q, x) + b
  VarId pack(std::span<const VarId> scalars);
  // 1/(2n) * sum (pred - target)^2, the rating loss.
  VarId mse_half(std::span<const VarId> preds, std::span<const double> targets);
  // Expected active-gate count over every entry of the given log-alpha tensors.
  VarId l0_penalty(std::span<Tensor* const> log_alphas);
  VarId add_scaled(VarId a, VarId b, double beta);  // a + beta * b

  // --- execution -------------------------------------------------------------

  void backward(VarId loss);
  void reset();

  // Spans point into the tape arena: recording further ops may reallocate
  // and invalidate them, like vector iterators. Copy if you need persistence.
  std::span<const double> value(VarId v) const;
  std::span<const double> grad_of(VarId v) const;  // valid after backward
  int rows(VarId v) const { return slots_[v].rows; }
  int cols(VarId v) const { return slots_[v].cols; }
  std::size_t num_nodes() const { return nodes_.size(); }
  const kernels::HcConsts& hc() const { return hc_; }

  // Smallest distance of any kinked nonlinearity (relu/leaky input, attention
  // pre-activation, gate clamp boundary) from its kink in the recorded
  // forward. Finite-difference harnesses redraw when this is too small.
  double kink_margin() const;

  // Test hook: scales the input-adjoint of every affine node, emulating a
  // broken backward rule so harness sensitivity can be verified.
  void set_backward_corruption(double f) { corrupt_ = f; }

 private:
  enum class Op : std::uint8_t {
    kLeaf, kConst, kMatVec, kMatMul, kAdd, kConcat, kScale, kSum, kMean,
    kRelu, kLeaky, kSigmoid, kSoftmax, kDropout, kGatedMatrix, kExtract,
    kAttnScores, kWeightedSum, kAffine, kDotBias, kPack, kMseHalf,
    kL0Penalty, kAddScaled,
  };

  struct Slot {
    std::int64_t off = -1;     // into the value arena; -1 when external
    Tensor* ext = nullptr;
    int rows = 0, cols = 0;
    bool needs_grad = false;
  };

  struct Node {
    Op op;
    VarId out = -1;
    VarId a = -1, b = -1, c = -1;
    std::int32_t args_off = 0, args_len = 0;   // extra VarId inputs
    std::int64_t aux_off = -1;                 // saved doubles
    std::int32_t sref = -1;                    // sparse feature reference
    std::int32_t targs_off = 0, targs_len = 0; // tensor args (l0 penalty)
    double x0 = 0.0;                           // op-specific scalar
  };

  // Slots come uninitialized (the arena is recycled across batches); ops
  // that accumulate into their output ask for zeroing.
  VarId new_slot(int rows, int cols, bool needs_grad, bool zeroed = false);
  std::int64_t new_aux(std::size_t n);
  double* val_ptr(VarId v);
  const double* val_ptr(VarId v) const;
  double* grad_ptr(VarId v);
  bool needs(VarId v) const { return slots_[v].needs_grad; }
  Node& push(Op op, VarId out, VarId a = -1, VarId b = -1, VarId c = -1);
  std::int32_t push_args(std::span<const VarId> xs);
  void check_vector(VarId v, const char* who) const;
  void backward_node(const Node& n);

  kernels::HcConsts hc_;
  std::vector<Slot> slots_;
  std::vector<Node> nodes_;
  std::vector<double> buf_;    // values; used_ is the live prefix
  std::size_t used_ = 0;
  std::vector<double> gbuf_;   // adjoints, mirrors buf_ offsets
  std::vector<double> aux_;
  std::vector<VarId> args_;
  std::vector<SparseVec> srefs_;
  std::vector<Tensor*> targs_;
  std::unordered_map<Tensor*, VarId> leaf_memo_;
  std::vector<double> scratch_;
  double corrupt_ = 1.0;
  bool consumed_ = false;
};

struct TapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mccf
