#include "mccf/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

namespace mccf {

namespace k = kernels;

namespace {
[[noreturn]] void fail(const char* op, const std::string& what) {
  std::ostringstream ss;
  ss << op << ": " << what;
  throw TapeError(ss.str());
}
}  // namespace

// ------------------------------------------------------------------- plumbing

VarId Tape::new_slot(int rows, int cols, bool needs_grad, bool zeroed) {
  Slot s;
  s.off = std::int64_t(used_);
  s.rows = rows;
  s.cols = cols;
  s.needs_grad = needs_grad;
  const std::size_t n = std::size_t(rows) * cols;
  used_ += n;
  if (buf_.size() < used_) buf_.resize(used_);  // grows once, then recycled
  if (zeroed) std::memset(buf_.data() + s.off, 0, n * sizeof(double));
  slots_.push_back(s);
  return VarId(slots_.size() - 1);
}

std::int64_t Tape::new_aux(std::size_t n) {
  const auto off = std::int64_t(aux_.size());
  aux_.resize(aux_.size() + n, 0.0);
  return off;
}

double* Tape::val_ptr(VarId v) {
  Slot& s = slots_[v];
  return s.ext ? s.ext->val.data() : buf_.data() + s.off;
}

const double* Tape::val_ptr(VarId v) const {
  const Slot& s = slots_[v];
  return s.ext ? s.ext->val.data() : buf_.data() + s.off;
}

double* Tape::grad_ptr(VarId v) {
  Slot& s = slots_[v];
  return s.ext ? s.ext->grad.data() : gbuf_.data() + s.off;
}

Tape::Node& Tape::push(Op op, VarId out, VarId a, VarId b, VarId c) {
  Node n;
  n.op = op;
  n.out = out;
  n.a = a;
  n.b = b;
  n.c = c;
  nodes_.push_back(n);
  return nodes_.back();
}

std::int32_t Tape::push_args(std::span<const VarId> xs) {
  const auto off = std::int32_t(args_.size());
  args_.insert(args_.end(), xs.begin(), xs.end());
  return off;
}

void Tape::check_vector(VarId v, const char* who) const {
  if (slots_[v].cols != 1) fail(who, "expected a vector operand");
}

std::span<const double> Tape::value(VarId v) const {
  const Slot& s = slots_[v];
  return {val_ptr(v), std::size_t(s.rows) * s.cols};
}

std::span<const double> Tape::grad_of(VarId v) const {
  const Slot& s = slots_[v];
  if (s.ext) return {s.ext->grad.data(), s.ext->grad.size()};
  if (gbuf_.size() < used_) fail("grad_of", "backward has not run");
  return {gbuf_.data() + s.off, std::size_t(s.rows) * s.cols};
}

void Tape::reset() {
  slots_.clear();
  nodes_.clear();
  used_ = 0;  // the value arena itself is recycled in place
  gbuf_.clear();
  aux_.clear();
  args_.clear();
  srefs_.clear();
  targs_.clear();
  leaf_memo_.clear();
  consumed_ = false;
}

// ------------------------------------------------------------------ variables

VarId Tape::leaf(Tensor& t) {
  if (auto it = leaf_memo_.find(&t); it != leaf_memo_.end()) return it->second;
  if (t.requires_grad && t.grad.size() != t.val.size()) t.grad.assign(t.val.size(), 0.0);
  Slot s;
  s.ext = &t;
  s.rows = t.rows;
  s.cols = t.cols;
  s.needs_grad = t.requires_grad;
  slots_.push_back(s);
  const VarId id = VarId(slots_.size() - 1);
  push(Op::kLeaf, id);
  leaf_memo_.emplace(&t, id);
  return id;
}

VarId Tape::constant(std::span<const double> data, int rows, int cols) {
  if (data.size() != std::size_t(rows) * cols) fail("constant", "size/shape mismatch");
  const VarId out = new_slot(rows, cols, false);
  std::memcpy(val_ptr(out), data.data(), data.size() * sizeof(double));
  push(Op::kConst, out);
  return out;
}

VarId Tape::constant_fill(double v, int rows, int cols) {
  const VarId out = new_slot(rows, cols, false);
  std::fill_n(val_ptr(out), std::size_t(rows) * cols, v);
  push(Op::kConst, out);
  return out;
}

// ----------------------------------------------------------------- primitives

VarId Tape::matvec(VarId A, VarId x) {
  check_vector(x, "matvec");
  const int r = rows(A), c = cols(A);
  if (c != rows(x)) fail("matvec", "inner dimensions disagree");
  const VarId out = new_slot(r, 1, needs(A) || needs(x));
  const double* a = val_ptr(A);
  const double* xv = val_ptr(x);
  double* y = val_ptr(out);
  for (int i = 0; i < r; ++i) y[i] = k::ops().dot(a + std::size_t(i) * c, xv, c);
  push(Op::kMatVec, out, A, x);
  return out;
}

VarId Tape::matmul(VarId A, VarId B) {
  const int r = rows(A), kk = cols(A), c = cols(B);
  if (kk != rows(B)) fail("matmul", "inner dimensions disagree");
  const VarId out = new_slot(r, c, needs(A) || needs(B));
  const double* a = val_ptr(A);
  const double* b = val_ptr(B);
  double* y = val_ptr(out);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) {
      double acc = 0.0;
      for (int l = 0; l < kk; ++l) acc += a[std::size_t(i) * kk + l] * b[std::size_t(l) * c + j];
      y[std::size_t(i) * c + j] = acc;
    }
  push(Op::kMatMul, out, A, B);
  return out;
}

VarId Tape::add(VarId a, VarId b) {
  if (rows(a) != rows(b) || cols(a) != cols(b)) fail("add", "shape mismatch");
  const VarId out = new_slot(rows(a), cols(a), needs(a) || needs(b));
  k::ops().add(val_ptr(a), val_ptr(b), val_ptr(out), value(out).size());
  push(Op::kAdd, out, a, b);
  return out;
}

VarId Tape::concat(VarId a, VarId b) {
  check_vector(a, "concat");
  check_vector(b, "concat");
  const int n = rows(a), m = rows(b);
  const VarId out = new_slot(n + m, 1, needs(a) || needs(b));
  double* y = val_ptr(out);
  std::memcpy(y, val_ptr(a), std::size_t(n) * sizeof(double));
  std::memcpy(y + n, val_ptr(b), std::size_t(m) * sizeof(double));
  push(Op::kConcat, out, a, b);
  return out;
}

VarId Tape::scale(VarId a, double alpha) {
  const VarId out = new_slot(rows(a), cols(a), needs(a));
  k::ops().scale(val_ptr(a), alpha, val_ptr(out), value(out).size());
  push(Op::kScale, out, a).x0 = alpha;
  return out;
}

VarId Tape::sum(VarId a) {
  const VarId out = new_slot(1, 1, needs(a));
  const auto v = value(a);
  double acc = 0.0;
  for (double x : v) acc += x;
  *val_ptr(out) = acc;
  push(Op::kSum, out, a);
  return out;
}

VarId Tape::mean(VarId a) {
  const VarId out = new_slot(1, 1, needs(a));
  const auto v = value(a);
  double acc = 0.0;
  for (double x : v) acc += x;
  *val_ptr(out) = acc / double(v.size());
  push(Op::kMean, out, a);
  return out;
}

VarId Tape::relu(VarId a) {
  const VarId out = new_slot(rows(a), cols(a), needs(a));
  k::ops().relu(val_ptr(a), val_ptr(out), value(out).size());
  push(Op::kRelu, out, a);
  return out;
}

VarId Tape::leaky_relu(VarId a, double slope) {
  const VarId out = new_slot(rows(a), cols(a), needs(a));
  k::ops().leaky_relu(val_ptr(a), slope, val_ptr(out), value(out).size());
  push(Op::kLeaky, out, a).x0 = slope;
  return out;
}

VarId Tape::sigmoid(VarId a) {
  const VarId out = new_slot(rows(a), cols(a), needs(a));
  k::ops().sigmoid(val_ptr(a), val_ptr(out), value(out).size());
  push(Op::kSigmoid, out, a);
  return out;
}

VarId Tape::activation(VarId a, Activation act, double slope) {
  return act == Activation::relu ? relu(a) : leaky_relu(a, slope);
}

VarId Tape::softmax(VarId a) {
  check_vector(a, "softmax");
  const int n = rows(a);
  const VarId out = new_slot(n, 1, needs(a));
  const double* x = val_ptr(a);
  double* y = val_ptr(out);
  double mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - mx);
    z += y[i];
  }
  for (int i = 0; i < n; ++i) y[i] /= z;
  push(Op::kSoftmax, out, a);
  return out;
}

VarId Tape::dropout(VarId a, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) fail("dropout", "rate must be in [0, 1)");
  if (!training || rate == 0.0) return a;  // identity, no node
  const auto n = value(a).size();
  const auto aux = new_aux(n);
  const VarId out = new_slot(rows(a), cols(a), needs(a));
  const double keep_scale = 1.0 / (1.0 - rate);
  double* mask = aux_.data() + aux;
  for (std::size_t i = 0; i < n; ++i) mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  k::ops().mul(val_ptr(a), mask, val_ptr(out), n);
  Node& nd = push(Op::kDropout, out, a);
  nd.aux_off = aux;
  return out;
}

// ------------------------------------------------------------------ fused ops

VarId Tape::gated_matrix(Tensor& w, Tensor& log_alpha, Rng* noise) {
  if (w.val.size() != log_alpha.val.size()) fail("gated_matrix", "gate/weight size mismatch");
  if (!w.requires_grad || !log_alpha.requires_grad)
    fail("gated_matrix", "gated weights and log-alphas must require grad");
  const VarId wv = leaf(w);
  const VarId lv = leaf(log_alpha);
  const std::size_t n = w.val.size();
  const auto aux = new_aux(n);
  const VarId out = new_slot(w.rows, w.cols, w.requires_grad || log_alpha.requires_grad);
  double* wt = val_ptr(out);
  double* s = aux_.data() + aux;
  double beta_eff;
  if (noise != nullptr) {
    scratch_.resize(n);
    for (std::size_t i = 0; i < n; ++i) scratch_[i] = noise->open01();
    k::ops().hc_train_fwd(w.val.data(), log_alpha.val.data(), scratch_.data(), hc_, wt, s, n);
    beta_eff = hc_.beta;
  } else {
    k::ops().sigmoid(log_alpha.val.data(), s, n);
    const double stretch = hc_.zeta - hc_.gamma;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = std::clamp(s[i] * stretch + hc_.gamma, 0.0, 1.0);
      wt[i] = z * w.val[i];
    }
    beta_eff = 1.0;
  }
  Node& nd = push(Op::kGatedMatrix, out, wv, lv);
  nd.aux_off = aux;
  nd.x0 = beta_eff;
  return out;
}

VarId Tape::extract(VarId mat, SparseVec feat) {
  const int d = rows(mat), L = cols(mat);
  for (std::int32_t i = 0; i < feat.nnz; ++i)
    if (feat.idx[i] < 0 || feat.idx[i] >= L) fail("extract", "feature index out of range");
  const VarId out = new_slot(d, 1, needs(mat), /*zeroed=*/true);
  k::ops().gather_cols_acc(val_ptr(mat), std::size_t(d), feat.idx, feat.val,
                           std::size_t(feat.nnz), val_ptr(out));
  Node& nd = push(Op::kExtract, out, mat);
  nd.sref = std::int32_t(srefs_.size());
  srefs_.push_back(feat);
  return out;
}

VarId Tape::attn_scores(VarId attn, VarId s, std::span<const VarId> h, Activation act,
                        double slope) {
  const int d = rows(s);
  if (rows(attn) != 2 * d) fail("attn_scores", "attention vector must have length 2d");
  if (h.empty()) fail("attn_scores", "empty neighborhood");
  const int K = int(h.size());
  bool ng = needs(attn) || needs(s);
  for (VarId hk : h) ng = ng || needs(hk);
  const auto args = push_args(h);
  const auto aux = new_aux(std::size_t(K));
  const VarId out = new_slot(K, 1, ng);
  const double* av = val_ptr(attn);
  const double* sv = val_ptr(s);
  double* pre = aux_.data() + aux;
  double* y = val_ptr(out);
  const double c0 = k::ops().dot(av, sv, d);
  for (int t = 0; t < K; ++t) pre[t] = c0 + k::ops().dot(av + d, val_ptr(h[t]), d);
  if (act == Activation::relu) {
    k::ops().relu(pre, y, K);
  } else {
    k::ops().leaky_relu(pre, slope, y, K);
  }
  Node& nd = push(Op::kAttnScores, out, attn, s);
  nd.args_off = args;
  nd.args_len = K;
  nd.aux_off = aux;
  nd.x0 = act == Activation::relu ? -1.0 : slope;  // negative marks plain relu
  return out;
}

VarId Tape::weighted_sum(VarId w, std::span<const VarId> items) {
  check_vector(w, "weighted_sum");
  if (items.empty()) fail("weighted_sum", "no items");
  if (rows(w) != int(items.size())) fail("weighted_sum", "weight/item count mismatch");
  const int d = rows(items[0]);
  bool ng = needs(w);
  for (VarId it : items) {
    if (rows(it) != d || cols(it) != 1) fail("weighted_sum", "item shape mismatch");
    ng = ng || needs(it);
  }
  const auto args = push_args(items);
  const VarId out = new_slot(d, 1, ng, /*zeroed=*/true);
  double* y = val_ptr(out);
  const double* wv = val_ptr(w);
  for (std::size_t t = 0; t < items.size(); ++t)
    k::ops().axpy(wv[t], val_ptr(items[t]), y, std::size_t(d));
  Node& nd = push(Op::kWeightedSum, out, w);
  nd.args_off = args;
  nd.args_len = std::int32_t(items.size());
  return out;
}

VarId Tape::affine(VarId W, VarId x, VarId b) {
  check_vector(x, "affine");
  check_vector(b, "affine");
  const int r = rows(W), c = cols(W);
  if (c != rows(x) || r != rows(b)) fail("affine", "shape mismatch");
  const VarId out = new_slot(r, 1, needs(W) || needs(x) || needs(b));
  const double* wv = val_ptr(W);
  const double* xv = val_ptr(x);
  const double* bv = val_ptr(b);
  double* y = val_ptr(out);
  for (int i = 0; i < r; ++i) y[i] = k::ops().dot(wv + std::size_t(i) * c, xv, c) + bv[i];
  push(Op::kAffine, out, W, x, b);
  return out;
}

VarId Tape::dot_bias(VarId q, VarId x, VarId b) {
  check_vector(q, "dot_bias");
  check_vector(x, "dot_bias");
  if (rows(q) != rows(x)) fail("dot_bias", "length mismatch");
  if (rows(b) != 1 || cols(b) != 1) fail("dot_bias", "bias must be scalar");
  const VarId out = new_slot(1, 1, needs(q) || needs(x) || needs(b));
  *val_ptr(out) = k::ops().dot(val_ptr(q), val_ptr(x), std::size_t(rows(q))) + *val_ptr(b);
  push(Op::kDotBias, out, q, x, b);
  return out;
}

VarId Tape::pack(std::span<const VarId> scalars) {
  if (scalars.empty()) fail("pack", "no inputs");
  bool ng = false;
  for (VarId s : scalars) {
    if (rows(s) != 1 || cols(s) != 1) fail("pack", "inputs must be scalars");
    ng = ng || needs(s);
  }
  const auto args = push_args(scalars);
  const VarId out = new_slot(int(scalars.size()), 1, ng);
  double* y = val_ptr(out);
  for (std::size_t i = 0; i < scalars.size(); ++i) y[i] = *val_ptr(scalars[i]);
  Node& nd = push(Op::kPack, out);
  nd.args_off = args;
  nd.args_len = std::int32_t(scalars.size());
  return out;
}

VarId Tape::mse_half(std::span<const VarId> preds, std::span<const double> targets) {
  if (preds.empty()) fail("mse_half", "empty batch");
  if (preds.size() != targets.size()) fail("mse_half", "pred/target count mismatch");
  bool ng = false;
  for (VarId p : preds) {
    if (rows(p) != 1 || cols(p) != 1) fail("mse_half", "predictions must be scalars");
    ng = ng || needs(p);
  }
  const auto args = push_args(preds);
  const auto aux = new_aux(targets.size());
  std::memcpy(aux_.data() + aux, targets.data(), targets.size() * sizeof(double));
  const VarId out = new_slot(1, 1, ng);
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double diff = *val_ptr(preds[i]) - targets[i];
    acc += diff * diff;
  }
  *val_ptr(out) = acc / (2.0 * double(preds.size()));
  Node& nd = push(Op::kMseHalf, out);
  nd.args_off = args;
  nd.args_len = std::int32_t(preds.size());
  nd.aux_off = aux;
  return out;
}

VarId Tape::l0_penalty(std::span<Tensor* const> log_alphas) {
  if (log_alphas.empty()) fail("l0_penalty", "no gate tensors");
  std::size_t total = 0;
  for (Tensor* t : log_alphas) total += t->val.size();
  const auto targ_off = std::int32_t(targs_.size());
  for (Tensor* t : log_alphas) {
    if (t->requires_grad && t->grad.size() != t->val.size()) t->grad.assign(t->val.size(), 0.0);
    targs_.push_back(t);
  }
  const auto aux = new_aux(total);
  const VarId out = new_slot(1, 1, true);
  const double shift = hc_.penalty_shift();
  double* sig = aux_.data() + aux;
  double acc = 0.0;
  for (Tensor* t : log_alphas) {
    acc += k::ops().hc_penalty(t->val.data(), shift, sig, t->val.size());
    sig += t->val.size();
  }
  *val_ptr(out) = acc;
  Node& nd = push(Op::kL0Penalty, out);
  nd.targs_off = targ_off;
  nd.targs_len = std::int32_t(log_alphas.size());
  nd.aux_off = aux;
  return out;
}

VarId Tape::add_scaled(VarId a, VarId b, double beta) {
  if (rows(a) != rows(b) || cols(a) != cols(b)) fail("add_scaled", "shape mismatch");
  const VarId out = new_slot(rows(a), cols(a), needs(a) || needs(b));
  const auto n = value(out).size();
  std::memcpy(val_ptr(out), val_ptr(a), n * sizeof(double));
  k::ops().axpy(beta, val_ptr(b), val_ptr(out), n);
  push(Op::kAddScaled, out, a, b).x0 = beta;
  return out;
}

// ------------------------------------------------------------------- backward

void Tape::backward(VarId loss) {
  if (consumed_) fail("backward", "tape already consumed; record a new forward");
  const Slot& ls = slots_[loss];
  if (ls.rows != 1 || ls.cols != 1) fail("backward", "loss must be scalar");
  consumed_ = true;
  gbuf_.assign(used_, 0.0);
  grad_ptr(loss)[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->out >= 0 && !slots_[it->out].needs_grad) continue;
    backward_node(*it);
  }
}

void Tape::backward_node(const Node& n) {
  const auto& o = k::ops();
  switch (n.op) {
    case Op::kLeaf:
    case Op::kConst:
      break;
    case Op::kMatVec: {
      const int r = rows(n.a), c = cols(n.a);
      const double* gy = grad_ptr(n.out);
      if (needs(n.a)) {
        double* ga = grad_ptr(n.a);
        const double* xv = val_ptr(n.b);
        for (int i = 0; i < r; ++i) o.axpy(gy[i], xv, ga + std::size_t(i) * c, c);
      }
      if (needs(n.b)) {
        double* gx = grad_ptr(n.b);
        const double* wv = val_ptr(n.a);
        for (int i = 0; i < r; ++i) o.axpy(gy[i], wv + std::size_t(i) * c, gx, c);
      }
      break;
    }
    case Op::kMatMul: {
      const int r = rows(n.a), kk = cols(n.a), c = cols(n.b);
      const double* gy = grad_ptr(n.out);
      const double* a = val_ptr(n.a);
      const double* b = val_ptr(n.b);
      if (needs(n.a)) {
        double* ga = grad_ptr(n.a);
        for (int i = 0; i < r; ++i)
          for (int l = 0; l < kk; ++l) {
            double acc = 0.0;
            for (int j = 0; j < c; ++j) acc += gy[std::size_t(i) * c + j] * b[std::size_t(l) * c + j];
            ga[std::size_t(i) * kk + l] += acc;
          }
      }
      if (needs(n.b)) {
        double* gb = grad_ptr(n.b);
        for (int l = 0; l < kk; ++l)
          for (int j = 0; j < c; ++j) {
            double acc = 0.0;
            for (int i = 0; i < r; ++i) acc += a[std::size_t(i) * kk + l] * gy[std::size_t(i) * c + j];
            gb[std::size_t(l) * c + j] += acc;
          }
      }
      break;
    }
    case Op::kAdd: {
      const auto sz = value(n.out).size();
      if (needs(n.a)) o.acc(grad_ptr(n.out), grad_ptr(n.a), sz);
      if (needs(n.b)) o.acc(grad_ptr(n.out), grad_ptr(n.b), sz);
      break;
    }
    case Op::kConcat: {
      const int na = rows(n.a);
      const int nb = rows(n.b);
      const double* gy = grad_ptr(n.out);
      if (needs(n.a)) o.acc(gy, grad_ptr(n.a), std::size_t(na));
      if (needs(n.b)) o.acc(gy + na, grad_ptr(n.b), std::size_t(nb));
      break;
    }
    case Op::kScale:
      if (needs(n.a)) o.axpy(n.x0, grad_ptr(n.out), grad_ptr(n.a), value(n.a).size());
      break;
    case Op::kSum: {
      if (needs(n.a)) {
        const double g = *grad_ptr(n.out);
        double* ga = grad_ptr(n.a);
        const auto sz = value(n.a).size();
        for (std::size_t i = 0; i < sz; ++i) ga[i] += g;
      }
      break;
    }
    case Op::kMean: {
      if (needs(n.a)) {
        const auto sz = value(n.a).size();
        const double g = *grad_ptr(n.out) / double(sz);
        double* ga = grad_ptr(n.a);
        for (std::size_t i = 0; i < sz; ++i) ga[i] += g;
      }
      break;
    }
    case Op::kRelu:
      if (needs(n.a)) o.relu_bwd(val_ptr(n.a), grad_ptr(n.out), grad_ptr(n.a), value(n.a).size());
      break;
    case Op::kLeaky:
      if (needs(n.a))
        o.leaky_relu_bwd(val_ptr(n.a), n.x0, grad_ptr(n.out), grad_ptr(n.a), value(n.a).size());
      break;
    case Op::kSigmoid:
      if (needs(n.a))
        o.sigmoid_bwd(val_ptr(n.out), grad_ptr(n.out), grad_ptr(n.a), value(n.a).size());
      break;
    case Op::kSoftmax: {
      if (!needs(n.a)) break;
      const int nn = rows(n.out);
      const double* y = val_ptr(n.out);
      const double* gy = grad_ptr(n.out);
      double* ga = grad_ptr(n.a);
      const double dotgy = o.dot(gy, y, std::size_t(nn));
      for (int i = 0; i < nn; ++i) ga[i] += y[i] * (gy[i] - dotgy);
      break;
    }
    case Op::kDropout:
      if (needs(n.a))
        o.mul_acc(grad_ptr(n.out), aux_.data() + n.aux_off, grad_ptr(n.a), value(n.a).size());
      break;
    case Op::kGatedMatrix: {
      Tensor* w = slots_[n.a].ext;
      Tensor* la = slots_[n.b].ext;
      k::HcConsts hc = hc_;
      hc.beta = n.x0;
      o.hc_train_bwd(w->val.data(), aux_.data() + n.aux_off, grad_ptr(n.out), hc,
                     w->grad.data(), la->grad.data(), w->val.size());
      break;
    }
    case Op::kExtract: {
      if (!needs(n.a)) break;
      const SparseVec& f = srefs_[n.sref];
      o.scatter_cols_acc(grad_ptr(n.a), std::size_t(rows(n.a)), f.idx, f.val,
                         std::size_t(f.nnz), grad_ptr(n.out));
      break;
    }
    case Op::kAttnScores: {
      const int K = n.args_len;
      const int d = rows(n.b);
      const double* pre = aux_.data() + n.aux_off;
      const double* gy = grad_ptr(n.out);
      const double* av = val_ptr(n.a);
      scratch_.resize(std::size_t(K));
      double sum_dpre = 0.0;
      for (int t = 0; t < K; ++t) {
        double dp;
        if (n.x0 < 0.0) {
          dp = pre[t] > 0.0 ? gy[t] : 0.0;
        } else {
          dp = pre[t] > 0.0 ? gy[t] : n.x0 * gy[t];
        }
        scratch_[t] = dp;
        sum_dpre += dp;
      }
      if (needs(n.a)) {
        double* ga = grad_ptr(n.a);
        o.axpy(sum_dpre, val_ptr(n.b), ga, std::size_t(d));
        for (int t = 0; t < K; ++t)
          o.axpy(scratch_[t], val_ptr(args_[n.args_off + t]), ga + d, std::size_t(d));
      }
      if (needs(n.b)) o.axpy(sum_dpre, av, grad_ptr(n.b), std::size_t(d));
      for (int t = 0; t < K; ++t) {
        const VarId hk = args_[n.args_off + t];
        if (needs(hk)) o.axpy(scratch_[t], av + d, grad_ptr(hk), std::size_t(d));
      }
      break;
    }
    case Op::kWeightedSum: {
      const int K = n.args_len;
      const int d = rows(n.out);
      const double* gy = grad_ptr(n.out);
      const double* wv = val_ptr(n.a);
      double* gw = needs(n.a) ? grad_ptr(n.a) : nullptr;
      for (int t = 0; t < K; ++t) {
        const VarId it = args_[n.args_off + t];
        if (gw) gw[t] += o.dot(gy, val_ptr(it), std::size_t(d));
        if (needs(it)) o.axpy(wv[t], gy, grad_ptr(it), std::size_t(d));
      }
      break;
    }
    case Op::kAffine: {
      const int r = rows(n.a), c = cols(n.a);
      const double* gy = grad_ptr(n.out);
      if (needs(n.a)) {
        double* gw = grad_ptr(n.a);
        const double* xv = val_ptr(n.b);
        for (int i = 0; i < r; ++i) o.axpy(gy[i], xv, gw + std::size_t(i) * c, c);
      }
      if (needs(n.b)) {
        double* gx = grad_ptr(n.b);
        const double* wv = val_ptr(n.a);
        for (int i = 0; i < r; ++i) o.axpy(corrupt_ * gy[i], wv + std::size_t(i) * c, gx, c);
      }
      if (needs(n.c)) o.acc(gy, grad_ptr(n.c), std::size_t(r));
      break;
    }
    case Op::kDotBias: {
      const double g = *grad_ptr(n.out);
      const int d = rows(n.a);
      if (needs(n.a)) o.axpy(g, val_ptr(n.b), grad_ptr(n.a), std::size_t(d));
      if (needs(n.b)) o.axpy(g, val_ptr(n.a), grad_ptr(n.b), std::size_t(d));
      if (needs(n.c)) *grad_ptr(n.c) += g;
      break;
    }
    case Op::kPack: {
      const double* gy = grad_ptr(n.out);
      for (int t = 0; t < n.args_len; ++t) {
        const VarId s = args_[n.args_off + t];
        if (needs(s)) *grad_ptr(s) += gy[t];
      }
      break;
    }
    case Op::kMseHalf: {
      const double g = *grad_ptr(n.out) / double(n.args_len);
      const double* tgt = aux_.data() + n.aux_off;
      for (int t = 0; t < n.args_len; ++t) {
        const VarId p = args_[n.args_off + t];
        if (needs(p)) *grad_ptr(p) += g * (*val_ptr(p) - tgt[t]);
      }
      break;
    }
    case Op::kL0Penalty: {
      const double g = *grad_ptr(n.out);
      const double* sig = aux_.data() + n.aux_off;
      for (int t = 0; t < n.targs_len; ++t) {
        Tensor* la = targs_[n.targs_off + t];
        if (la->requires_grad) {
          double* gl = la->grad.data();
          for (std::size_t i = 0; i < la->val.size(); ++i)
            gl[i] += g * sig[i] * (1.0 - sig[i]);
        }
        sig += la->val.size();
      }
      break;
    }
    case Op::kAddScaled: {
      const auto sz = value(n.out).size();
      if (needs(n.a)) o.acc(grad_ptr(n.out), grad_ptr(n.a), sz);
      if (needs(n.b)) o.axpy(n.x0, grad_ptr(n.out), grad_ptr(n.b), sz);
      break;
    }
  }
}

double Tape::kink_margin() const {
  double margin = std::numeric_limits<double>::infinity();
  for (const Node& n : nodes_) {
    switch (n.op) {
      case Op::kRelu:
      case Op::kLeaky:
        for (double x : value(n.a)) margin = std::min(margin, std::fabs(x));
        break;
      case Op::kAttnScores:
        for (int t = 0; t < n.args_len; ++t)
          margin = std::min(margin, std::fabs(aux_[n.aux_off + t]));
        break;
      case Op::kGatedMatrix: {
        const double stretch = hc_.zeta - hc_.gamma;
        const std::size_t sz = value(n.out).size();
        for (std::size_t i = 0; i < sz; ++i) {
          const double sbar = aux_[n.aux_off + i] * stretch + hc_.gamma;
          margin = std::min(margin, std::min(std::fabs(sbar), std::fabs(1.0 - sbar)));
        }
        break;
      }
      default:
        break;
    }
  }
  return margin;
}

}  // namespace mccf
