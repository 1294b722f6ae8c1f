#include "mccf/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace mccf {

namespace k = kernels;

namespace {

[[noreturn]] void fail(const std::string& what) { throw ModelError(what); }

// binary snapshot plumbing
template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) fail("snapshot truncated");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod(out, std::uint32_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}

std::string read_string(std::istream& in) {
  const auto n = read_pod<std::uint32_t>(in);
  if (n > (1u << 20)) fail("snapshot string too long");
  std::string s(n, '\0');
  in.read(s.data(), std::streamsize(n));
  if (!in) fail("snapshot truncated");
  return s;
}

constexpr char kSnapshotMagic[8] = {'M', 'C', 'C', 'F', 'S', 'N', 'P', '1'};

}  // namespace

// -------------------------------------------------------------------- config

void ModelConfig::validate() const {
  if (components < 1) fail("components must be >= 1");
  if (dim < 1) fail("dim must be >= 1");
  if (leaky_slope <= 0.0 || leaky_slope >= 1.0) fail("leaky_slope must be in (0, 1)");
  for (auto h : mlp_hidden)
    if (h < 1) fail("mlp hidden widths must be >= 1");
}

std::vector<std::int32_t> ModelConfig::resolved_mlp() const {
  if (!mlp_hidden.empty()) return mlp_hidden;
  return {dim, dim};  // two hidden layers
}

// -------------------------------------------------------------------- params

void ModelParams::for_each(
    const std::function<void(const char*, const std::string&, Tensor&)>& fn) {
  auto visit_path = [&](const char* prefix, PathParams& p) {
    for (std::size_t m = 0; m < p.W.size(); ++m)
      fn("W", std::string(prefix) + ".W." + std::to_string(m), p.W[m]);
    for (std::size_t m = 0; m < p.Q.size(); ++m)
      fn("Q", std::string(prefix) + ".Q." + std::to_string(m), p.Q[m]);
    for (std::size_t m = 0; m < p.attn.size(); ++m)
      fn("a", std::string(prefix) + ".a." + std::to_string(m), p.attn[m]);
    for (std::size_t m = 0; m < p.C.size(); ++m)
      fn("C", std::string(prefix) + ".C." + std::to_string(m), p.C[m]);
    for (std::size_t m = 0; m < p.C_bias.size(); ++m)
      fn("b_vec", std::string(prefix) + ".b_vec." + std::to_string(m), p.C_bias[m]);
    fn("q", std::string(prefix) + ".q", p.q);
    fn("b", std::string(prefix) + ".b", p.b);
    for (std::size_t m = 0; m < p.W_log_alpha.size(); ++m)
      fn("log_alpha", std::string(prefix) + ".W_la." + std::to_string(m), p.W_log_alpha[m]);
    for (std::size_t m = 0; m < p.Q_log_alpha.size(); ++m)
      fn("log_alpha", std::string(prefix) + ".Q_la." + std::to_string(m), p.Q_log_alpha[m]);
  };
  visit_path("user", user_path);
  visit_path("item", item_path);
  for (std::size_t l = 0; l < mlp.hidden_w.size(); ++l) {
    fn("MLP", "mlp.h" + std::to_string(l) + ".w", mlp.hidden_w[l]);
    fn("MLP", "mlp.h" + std::to_string(l) + ".b", mlp.hidden_b[l]);
  }
  fn("MLP", "mlp.out", mlp.w_out);
}

void ModelParams::zero_grads() {
  for_each([](const char*, const std::string&, Tensor& t) { t.zero_grad(); });
}

// ---------------------------------------------------------------------- init

Mccf::Mccf(ModelConfig cfg, GraphMeta meta, Rng& rng) : cfg_(std::move(cfg)), meta_(meta) {
  cfg_.validate();
  if (meta_.n_users < 1 || meta_.n_items < 1) fail("model needs a non-empty graph shape");
  const std::int32_t M = cfg_.components;
  const std::int32_t d = cfg_.dim;
  const std::int32_t len_user_feat = meta_.n_items;  // L_u
  const std::int32_t len_item_feat = meta_.n_users;  // L_i

  // Weights ~ N(0, 0.1), biases zero, gate logits ~ N(1.0, 0.1) so gates
  // start mostly open. All parameter tensors exist regardless of the
  // attention/gate flags; disabled stages simply never touch theirs.
  auto init_path = [&](PathParams& p) {
    for (std::int32_t m = 0; m < M; ++m)
      p.W.push_back(Tensor::gaussian(d, len_user_feat, rng, 0.0, 0.1, true, true));
    for (std::int32_t m = 0; m < M; ++m)
      p.Q.push_back(Tensor::gaussian(d, len_item_feat, rng, 0.0, 0.1, true, true));
    if (cfg_.l0_gates) {
      for (std::int32_t m = 0; m < M; ++m)
        p.W_log_alpha.push_back(Tensor::gaussian(d, len_user_feat, rng, 1.0, 0.1, true, true));
      for (std::int32_t m = 0; m < M; ++m)
        p.Q_log_alpha.push_back(Tensor::gaussian(d, len_item_feat, rng, 1.0, 0.1, true, true));
    }
    for (std::int32_t m = 0; m < M; ++m)
      p.attn.push_back(Tensor::gaussian(2 * d, 1, rng, 0.0, 0.1));
    for (std::int32_t m = 0; m < M; ++m) {
      p.C.push_back(Tensor::gaussian(d, 2 * d, rng, 0.0, 0.1));
      p.C_bias.push_back(Tensor(d, 1, true));
    }
    p.q = Tensor::gaussian(d, 1, rng, 0.0, 0.1);
    p.b = Tensor(1, 1, true);
  };
  init_path(params_.user_path);
  init_path(params_.item_path);

  std::int32_t in = 2 * d;
  for (const auto h : cfg_.resolved_mlp()) {
    params_.mlp.hidden_w.push_back(Tensor::gaussian(h, in, rng, 0.0, 0.1));
    params_.mlp.hidden_b.push_back(Tensor(h, 1, true));
    in = h;
  }
  params_.mlp.w_out = Tensor::gaussian(in, 1, rng, 0.0, 0.1);
}

std::vector<Tensor*> Mccf::gate_log_alphas() {
  std::vector<Tensor*> out;
  for (PathParams* p : {&params_.user_path, &params_.item_path}) {
    for (auto& t : p->W_log_alpha) out.push_back(&t);
    for (auto& t : p->Q_log_alpha) out.push_back(&t);
  }
  return out;
}

double Mccf::active_gate_fraction() const {
  if (!cfg_.l0_gates) return 1.0;
  const double shift = cfg_.hc.penalty_shift();
  double sum = 0.0;
  std::size_t count = 0;
  std::vector<double> sig;
  for (const PathParams* p : {&params_.user_path, &params_.item_path}) {
    for (const auto* family : {&p->W_log_alpha, &p->Q_log_alpha}) {
      for (const auto& t : *family) {
        sig.resize(t.val.size());
        sum += k::ops().hc_penalty(t.val.data(), shift, sig.data(), t.val.size());
        count += t.val.size();
      }
    }
  }
  return count == 0 ? 1.0 : sum / double(count);
}

// ------------------------------------------------------------- batch forward

struct Mccf::PathVars {
  std::vector<VarId> Wt, Qt;
  std::vector<VarId> attn;
  std::vector<VarId> C, C_bias;
  VarId q = -1, b = -1;
};

Mccf::PathVars Mccf::bind_path(Tape& tape, PathParams& p, Rng* gate_rng) {
  PathVars v;
  const std::int32_t M = cfg_.components;
  for (std::int32_t m = 0; m < M; ++m) {
    if (cfg_.l0_gates) {
      v.Wt.push_back(tape.gated_matrix(p.W[m], p.W_log_alpha[m], gate_rng));
      v.Qt.push_back(tape.gated_matrix(p.Q[m], p.Q_log_alpha[m], gate_rng));
    } else {
      v.Wt.push_back(tape.leaf(p.W[m]));
      v.Qt.push_back(tape.leaf(p.Q[m]));
    }
  }
  if (cfg_.node_attention)
    for (std::int32_t m = 0; m < M; ++m) v.attn.push_back(tape.leaf(p.attn[m]));
  if (cfg_.component_attention) {
    for (std::int32_t m = 0; m < M; ++m) {
      v.C.push_back(tape.leaf(p.C[m]));
      v.C_bias.push_back(tape.leaf(p.C_bias[m]));
    }
    v.q = tape.leaf(p.q);
    v.b = tape.leaf(p.b);
  }
  return v;
}

std::span<const VarId> Mccf::cached_components(Tape& tape, std::span<const VarId> mats,
                                               std::vector<VarId>& table, std::int32_t id,
                                               SparseVec row) {
  const std::int32_t M = cfg_.components;
  VarId* slot = table.data() + std::size_t(id) * M;
  if (slot[0] < 0)
    for (std::int32_t m = 0; m < M; ++m) slot[m] = tape.extract(mats[m], row);
  return {slot, std::size_t(M)};
}

VarId Mccf::path_embed(Tape& tape, const PathVars& pv, std::span<const VarId> center,
                       const SampledNeighborhood& nb, std::vector<VarId>& nb_table,
                       const FeatureMatrices& feats, bool neighbors_are_items, bool training,
                       double dropout_rate, Rng* dropout_rng, VarId zero_vec) {
  const std::int32_t M = cfg_.components;
  const auto K = nb.size();
  const auto mats = neighbors_are_items ? std::span<const VarId>(pv.Qt)
                                        : std::span<const VarId>(pv.Wt);
  // Canonical ascending-id order makes the aggregation exactly invariant to
  // neighbor-list permutations (summation order is fixed).
  std::span<const std::int32_t> ids(nb.ids);
  std::vector<std::int32_t> sorted_ids;
  if (!std::is_sorted(ids.begin(), ids.end())) {
    sorted_ids.assign(ids.begin(), ids.end());
    std::sort(sorted_ids.begin(), sorted_ids.end());
    ids = sorted_ids;
  }
  std::vector<VarId> z(static_cast<std::size_t>(M));
  std::vector<VarId> h_list(K);

  for (std::int32_t m = 0; m < M; ++m) {
    if (K == 0) {
      z[std::size_t(m)] = zero_vec;  // cold center: zero aggregated component
    } else {
      for (std::size_t t = 0; t < K; ++t) {
        const auto id = ids[t];
        const auto row = neighbors_are_items ? feats.item_row(id) : feats.user_row(id);
        h_list[t] = cached_components(tape, mats, nb_table, id, row)[std::size_t(m)];
      }
      VarId alpha;
      if (cfg_.node_attention) {
        const VarId scores = tape.attn_scores(pv.attn[std::size_t(m)], center[std::size_t(m)],
                                              h_list, cfg_.activation, cfg_.leaky_slope);
        alpha = tape.softmax(scores);
      } else {
        alpha = tape.constant_fill(1.0 / double(K), std::int32_t(K), 1);
      }
      z[std::size_t(m)] =
          tape.activation(tape.weighted_sum(alpha, h_list), cfg_.activation, cfg_.leaky_slope);
    }
    if (training && dropout_rate > 0.0)
      z[std::size_t(m)] = tape.dropout(z[std::size_t(m)], dropout_rate, *dropout_rng, true);
  }

  VarId beta;
  if (cfg_.component_attention) {
    std::vector<VarId> w(static_cast<std::size_t>(M));
    for (std::int32_t m = 0; m < M; ++m) {
      const VarId cat = tape.concat(z[std::size_t(m)], center[std::size_t(m)]);
      const VarId dm = tape.activation(
          tape.affine(pv.C[std::size_t(m)], cat, pv.C_bias[std::size_t(m)]), cfg_.activation,
          cfg_.leaky_slope);
      w[std::size_t(m)] = tape.activation(tape.dot_bias(pv.q, dm, pv.b), cfg_.activation,
                                          cfg_.leaky_slope);
    }
    beta = tape.softmax(tape.pack(w));
  } else {
    beta = tape.constant_fill(1.0 / double(M), M, 1);
  }
  return tape.weighted_sum(beta, z);
}

VarId Mccf::example_forward(Tape& tape, PathVars& up, PathVars& ip,
                            const FeatureMatrices& feats, std::int32_t user, std::int32_t item,
                            const SampledNeighborhood& user_nb, const SampledNeighborhood& item_nb,
                            std::vector<VarId>& ucenter, std::vector<VarId>& unbr,
                            std::vector<VarId>& icenter, std::vector<VarId>& inbr, bool training,
                            double dropout_rate, Rng* dropout_rng, VarId zero_vec,
                            VarId zero_scalar) {
  const auto su = cached_components(tape, up.Wt, ucenter, user, feats.user_row(user));
  const VarId zu = path_embed(tape, up, su, user_nb, unbr, feats, /*neighbors_are_items=*/true,
                              training, dropout_rate, dropout_rng, zero_vec);
  const auto si = cached_components(tape, ip.Qt, icenter, item, feats.item_row(item));
  const VarId vi = path_embed(tape, ip, si, item_nb, inbr, feats, /*neighbors_are_items=*/false,
                              training, dropout_rate, dropout_rng, zero_vec);

  VarId g = tape.concat(zu, vi);
  for (std::size_t l = 0; l < params_.mlp.hidden_w.size(); ++l) {
    g = tape.activation(
        tape.affine(tape.leaf(params_.mlp.hidden_w[l]), g, tape.leaf(params_.mlp.hidden_b[l])),
        cfg_.activation, cfg_.leaky_slope);
    if (training && dropout_rate > 0.0) g = tape.dropout(g, dropout_rate, *dropout_rng, true);
  }
  return tape.dot_bias(tape.leaf(params_.mlp.w_out), g, zero_scalar);
}

BatchOut Mccf::batch_forward(Tape& tape, const FeatureMatrices& feats,
                             const NeighborhoodSet& nbrs, std::span<const BatchExample> batch,
                             bool training, double dropout_rate, double lambda, Rng* gate_rng,
                             Rng* dropout_rng) {
  if (batch.empty()) fail("batch_forward: empty batch");
  if (feats.n_users() != meta_.n_users || feats.n_items() != meta_.n_items)
    fail("batch_forward: feature matrices do not match the model's graph shape");
  if (tape.hc().beta != cfg_.hc.beta || tape.hc().gamma != cfg_.hc.gamma ||
      tape.hc().zeta != cfg_.hc.zeta)
    fail("batch_forward: tape hard-concrete constants differ from the model's");
  if (training && cfg_.l0_gates && gate_rng == nullptr)
    fail("batch_forward: training with gates needs a gate noise source");
  if (training && dropout_rate > 0.0 && dropout_rng == nullptr)
    fail("batch_forward: training with dropout needs a dropout noise source");

  PathVars up = bind_path(tape, params_.user_path, training ? gate_rng : nullptr);
  PathVars ip = bind_path(tape, params_.item_path, training ? gate_rng : nullptr);

  const std::int32_t M = cfg_.components;
  std::vector<VarId> ucenter(std::size_t(meta_.n_users) * M, -1);
  std::vector<VarId> unbr(std::size_t(meta_.n_items) * M, -1);
  std::vector<VarId> icenter(std::size_t(meta_.n_items) * M, -1);
  std::vector<VarId> inbr(std::size_t(meta_.n_users) * M, -1);
  const VarId zero_vec = tape.constant_fill(0.0, cfg_.dim, 1);
  const VarId zero_scalar = tape.constant_fill(0.0, 1, 1);

  BatchOut out;
  std::vector<double> targets;
  out.predictions.reserve(batch.size());
  targets.reserve(batch.size());
  for (const auto& e : batch) {
    if (e.user < 0 || e.user >= meta_.n_users || e.item < 0 || e.item >= meta_.n_items)
      fail("batch_forward: example ids out of range");
    out.predictions.push_back(example_forward(
        tape, up, ip, feats, e.user, e.item, nbrs.users[std::size_t(e.user)],
        nbrs.items[std::size_t(e.item)], ucenter, unbr, icenter, inbr, training, dropout_rate,
        dropout_rng, zero_vec, zero_scalar));
    targets.push_back(e.rating);
  }
  out.rating_loss = tape.mse_half(out.predictions, targets);
  if (cfg_.l0_gates && lambda != 0.0) {
    const auto las = gate_log_alphas();
    out.penalty = tape.l0_penalty(las);
    out.total = tape.add_scaled(out.rating_loss, out.penalty, lambda);
  } else {
    out.total = out.rating_loss;
  }
  return out;
}

VarId Mccf::forward_one(Tape& tape, const FeatureMatrices& feats,
                        const SampledNeighborhood& user_nb, const SampledNeighborhood& item_nb,
                        std::int32_t user, std::int32_t item, bool training,
                        double dropout_rate, Rng* gate_rng, Rng* dropout_rng) {
  PathVars up = bind_path(tape, params_.user_path, training ? gate_rng : nullptr);
  PathVars ip = bind_path(tape, params_.item_path, training ? gate_rng : nullptr);
  const std::int32_t M = cfg_.components;
  std::vector<VarId> ucenter(std::size_t(meta_.n_users) * M, -1);
  std::vector<VarId> unbr(std::size_t(meta_.n_items) * M, -1);
  std::vector<VarId> icenter(std::size_t(meta_.n_items) * M, -1);
  std::vector<VarId> inbr(std::size_t(meta_.n_users) * M, -1);
  const VarId zero_vec = tape.constant_fill(0.0, cfg_.dim, 1);
  const VarId zero_scalar = tape.constant_fill(0.0, 1, 1);
  return example_forward(tape, up, ip, feats, user, item, user_nb, item_nb, ucenter, unbr,
                         icenter, inbr, training, dropout_rate, dropout_rng, zero_vec,
                         zero_scalar);
}

// ------------------------------------------------------------------ snapshot

void Mccf::save(std::ostream& out) const {
  out.write(kSnapshotMagic, sizeof(kSnapshotMagic));
  write_pod(out, cfg_.components);
  write_pod(out, cfg_.dim);
  write_pod(out, std::uint8_t(cfg_.activation == Activation::relu ? 0 : 1));
  write_pod(out, cfg_.leaky_slope);
  write_pod(out, std::uint8_t(cfg_.node_attention));
  write_pod(out, std::uint8_t(cfg_.component_attention));
  write_pod(out, std::uint8_t(cfg_.l0_gates));
  write_pod(out, std::int32_t(cfg_.resolved_mlp().size()));
  for (auto h : cfg_.resolved_mlp()) write_pod(out, h);
  write_pod(out, cfg_.hc.beta);
  write_pod(out, cfg_.hc.gamma);
  write_pod(out, cfg_.hc.zeta);
  write_pod(out, meta_.n_users);
  write_pod(out, meta_.n_items);
  write_pod(out, meta_.max_rating);
  write_pod(out, std::uint8_t(meta_.feature_mode == FeatureMode::rating_valued ? 0 : 1));

  std::uint64_t count = 0;
  const_cast<Mccf*>(this)->params_.for_each(
      [&](const char*, const std::string&, Tensor&) { ++count; });
  write_pod(out, count);
  const_cast<Mccf*>(this)->params_.for_each(
      [&](const char*, const std::string& name, Tensor& t) {
        write_string(out, name);
        write_pod(out, t.rows);
        write_pod(out, t.cols);
        write_pod(out, std::uint8_t(t.col_major));
        out.write(reinterpret_cast<const char*>(t.val.data()),
                  std::streamsize(t.val.size() * sizeof(double)));
      });
  if (!out) fail("snapshot write failed");
}

Mccf Mccf::load(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kSnapshotMagic, sizeof(magic)) != 0)
    fail("not a model snapshot (bad magic)");
  ModelConfig cfg;
  cfg.components = read_pod<std::int32_t>(in);
  cfg.dim = read_pod<std::int32_t>(in);
  cfg.activation = read_pod<std::uint8_t>(in) == 0 ? Activation::relu : Activation::leaky_relu;
  cfg.leaky_slope = read_pod<double>(in);
  cfg.node_attention = read_pod<std::uint8_t>(in) != 0;
  cfg.component_attention = read_pod<std::uint8_t>(in) != 0;
  cfg.l0_gates = read_pod<std::uint8_t>(in) != 0;
  const auto n_hidden = read_pod<std::int32_t>(in);
  if (n_hidden < 0 || n_hidden > 64) fail("snapshot: implausible MLP depth");
  for (std::int32_t l = 0; l < n_hidden; ++l) cfg.mlp_hidden.push_back(read_pod<std::int32_t>(in));
  cfg.hc.beta = read_pod<double>(in);
  cfg.hc.gamma = read_pod<double>(in);
  cfg.hc.zeta = read_pod<double>(in);
  GraphMeta meta;
  meta.n_users = read_pod<std::int32_t>(in);
  meta.n_items = read_pod<std::int32_t>(in);
  meta.max_rating = read_pod<std::int32_t>(in);
  meta.feature_mode =
      read_pod<std::uint8_t>(in) == 0 ? FeatureMode::rating_valued : FeatureMode::binary;

  Rng scratch_rng(0);
  Mccf model(cfg, meta, scratch_rng);

  struct Entry {
    std::int32_t rows, cols;
    bool col_major;
    std::vector<double> data;
  };
  std::map<std::string, Entry> entries;
  const auto count = read_pod<std::uint64_t>(in);
  for (std::uint64_t t = 0; t < count; ++t) {
    const auto name = read_string(in);
    Entry e;
    e.rows = read_pod<std::int32_t>(in);
    e.cols = read_pod<std::int32_t>(in);
    e.col_major = read_pod<std::uint8_t>(in) != 0;
    if (e.rows < 0 || e.cols < 0 || std::int64_t(e.rows) * e.cols > (std::int64_t(1) << 32))
      fail("snapshot: implausible tensor shape for " + name);
    e.data.resize(std::size_t(e.rows) * e.cols);
    in.read(reinterpret_cast<char*>(e.data.data()),
            std::streamsize(e.data.size() * sizeof(double)));
    if (!in) fail("snapshot truncated in tensor " + name);
    if (!entries.emplace(name, std::move(e)).second) fail("snapshot: duplicate tensor " + name);
  }

  std::size_t used = 0;
  model.params_.for_each([&](const char*, const std::string& name, Tensor& t) {
    auto it = entries.find(name);
    if (it == entries.end()) fail("snapshot: missing tensor " + name);
    const Entry& e = it->second;
    if (e.rows != t.rows || e.cols != t.cols || e.col_major != t.col_major) {
      std::ostringstream ss;
      ss << "snapshot: shape mismatch for " << name << " (got " << e.rows << "x" << e.cols
         << ", expected " << t.rows << "x" << t.cols << ")";
      fail(ss.str());
    }
    t.val = e.data;
    ++used;
  });
  if (used != entries.size()) fail("snapshot: contains unknown tensors");
  return model;
}

// --------------------------------------------------------------- eval context

namespace {

void apply_activation(Activation act, double slope, double* x, std::size_t n) {
  if (act == Activation::relu) {
    k::ops().relu(x, x, n);
  } else {
    k::ops().leaky_relu(x, slope, x, n);
  }
}

void softmax_inplace(double* x, std::size_t n) {
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - mx);
    z += x[i];
  }
  for (std::size_t i = 0; i < n; ++i) x[i] /= z;
}

}  // namespace

EvalContext::EvalContext(const Mccf& model, const FeatureMatrices& feats,
                         const BipartiteGraph& graph, DegreeThresholds thresholds)
    : model_(model), graph_(graph), thr_(thresholds) {
  const auto& cfg = model.config();
  const auto& meta = model.meta();
  if (feats.n_users() != meta.n_users || feats.n_items() != meta.n_items)
    fail("EvalContext: features do not match the model's graph shape");
  m_ = cfg.components;
  d_ = cfg.dim;
  eval_nbrs_ = eval_all(graph, thr_);

  // Materialize the deterministically gated extraction matrices once, use
  // them to precompute every entity's component vectors, then drop them.
  auto gate_family = [&](const std::vector<Tensor>& w, const std::vector<Tensor>& la) {
    std::vector<std::vector<double>> out;
    for (std::size_t m = 0; m < w.size(); ++m) {
      std::vector<double> g = w[m].val;
      if (cfg.l0_gates) {
        std::vector<double> z(g.size());
        k::ops().hc_eval_gate(la[m].val.data(), cfg.hc, z.data(), z.size());
        k::ops().mul(z.data(), w[m].val.data(), g.data(), g.size());
      }
      out.push_back(std::move(g));
    }
    return out;
  };
  const auto& up = model.params().user_path;
  const auto& ip = model.params().item_path;
  const auto w_user = gate_family(up.W, up.W_log_alpha);
  const auto q_user = gate_family(up.Q, up.Q_log_alpha);
  const auto w_item = gate_family(ip.W, ip.W_log_alpha);
  const auto q_item = gate_family(ip.Q, ip.Q_log_alpha);

  const auto md = std::size_t(m_) * d_;
  user_center_.assign(std::size_t(meta.n_users) * md, 0.0);
  user_as_neighbor_.assign(std::size_t(meta.n_users) * md, 0.0);
  item_center_.assign(std::size_t(meta.n_items) * md, 0.0);
  item_as_neighbor_.assign(std::size_t(meta.n_items) * md, 0.0);
  for (std::int32_t u = 0; u < meta.n_users; ++u) {
    const auto row = feats.user_row(u);
    for (std::int32_t m = 0; m < m_; ++m) {
      k::ops().gather_cols_acc(w_user[std::size_t(m)].data(), std::size_t(d_), row.idx, row.val,
                               std::size_t(row.nnz),
                               user_center_.data() + std::size_t(u) * md + std::size_t(m) * d_);
      k::ops().gather_cols_acc(w_item[std::size_t(m)].data(), std::size_t(d_), row.idx, row.val,
                               std::size_t(row.nnz),
                               user_as_neighbor_.data() + std::size_t(u) * md + std::size_t(m) * d_);
    }
  }
  for (std::int32_t i = 0; i < meta.n_items; ++i) {
    const auto row = feats.item_row(i);
    for (std::int32_t m = 0; m < m_; ++m) {
      k::ops().gather_cols_acc(q_item[std::size_t(m)].data(), std::size_t(d_), row.idx, row.val,
                               std::size_t(row.nnz),
                               item_center_.data() + std::size_t(i) * md + std::size_t(m) * d_);
      k::ops().gather_cols_acc(q_user[std::size_t(m)].data(), std::size_t(d_), row.idx, row.val,
                               std::size_t(row.nnz),
                               item_as_neighbor_.data() + std::size_t(i) * md + std::size_t(m) * d_);
    }
  }
}

void EvalContext::path_embed(const PathParams& pp, const double* center,
                             std::span<const std::int32_t> nb_ids,
                             const std::vector<double>& h_table, double* z_out,
                             double* betas_out, double* alphas_out, double* zm_out) const {
  const auto& cfg = model_.config();
  const auto md = std::size_t(m_) * d_;
  const std::size_t K = nb_ids.size();
  std::vector<double> z(md, 0.0);
  std::vector<double> scores(K);

  for (std::int32_t m = 0; m < m_; ++m) {
    double* zm = z.data() + std::size_t(m) * d_;
    const double* s = center + std::size_t(m) * d_;
    if (K > 0) {
      const double* a = pp.attn[std::size_t(m)].val.data();
      if (cfg.node_attention) {
        const double c0 = k::ops().dot(a, s, std::size_t(d_));
        for (std::size_t t = 0; t < K; ++t)
          scores[t] = c0 + k::ops().dot(a + d_,
                                        h_table.data() + std::size_t(nb_ids[t]) * md +
                                            std::size_t(m) * d_,
                                        std::size_t(d_));
        apply_activation(cfg.activation, cfg.leaky_slope, scores.data(), K);
        softmax_inplace(scores.data(), K);
      } else {
        std::fill(scores.begin(), scores.end(), 1.0 / double(K));
      }
      if (alphas_out != nullptr)
        std::copy(scores.begin(), scores.end(), alphas_out + std::size_t(m) * K);
      for (std::size_t t = 0; t < K; ++t)
        k::ops().axpy(scores[t],
                      h_table.data() + std::size_t(nb_ids[t]) * md + std::size_t(m) * d_, zm,
                      std::size_t(d_));
      apply_activation(cfg.activation, cfg.leaky_slope, zm, std::size_t(d_));
    }
  }

  std::vector<double> beta(static_cast<std::size_t>(m_));
  if (cfg.component_attention) {
    std::vector<double> cat(static_cast<std::size_t>(2) * d_);
    std::vector<double> dm(static_cast<std::size_t>(d_));
    for (std::int32_t m = 0; m < m_; ++m) {
      std::memcpy(cat.data(), z.data() + std::size_t(m) * d_, std::size_t(d_) * sizeof(double));
      std::memcpy(cat.data() + d_, center + std::size_t(m) * d_,
                  std::size_t(d_) * sizeof(double));
      const auto& C = pp.C[std::size_t(m)];
      const auto& cb = pp.C_bias[std::size_t(m)];
      for (std::int32_t r = 0; r < d_; ++r)
        dm[std::size_t(r)] =
            k::ops().dot(C.val.data() + std::size_t(r) * 2 * d_, cat.data(), cat.size()) +
            cb.val[std::size_t(r)];
      apply_activation(cfg.activation, cfg.leaky_slope, dm.data(), dm.size());
      double w = k::ops().dot(pp.q.val.data(), dm.data(), dm.size()) + pp.b.val[0];
      apply_activation(cfg.activation, cfg.leaky_slope, &w, 1);
      beta[std::size_t(m)] = w;
    }
    softmax_inplace(beta.data(), beta.size());
  } else {
    std::fill(beta.begin(), beta.end(), 1.0 / double(m_));
  }
  if (betas_out != nullptr) std::copy(beta.begin(), beta.end(), betas_out);
  if (zm_out != nullptr) std::copy(z.begin(), z.end(), zm_out);

  std::fill(z_out, z_out + d_, 0.0);
  for (std::int32_t m = 0; m < m_; ++m)
    k::ops().axpy(beta[std::size_t(m)], z.data() + std::size_t(m) * d_, z_out, std::size_t(d_));
}

EvalContext::PathDebug EvalContext::user_path_debug(std::int32_t user) const {
  PathDebug out;
  out.z.resize(static_cast<std::size_t>(d_));
  out.z_m.resize(std::size_t(m_) * d_);
  out.beta.resize(static_cast<std::size_t>(m_));
  path_embed(model_.params().user_path, user_center_.data() + std::size_t(user) * m_ * d_,
             eval_nbrs_.users[std::size_t(user)].ids, item_as_neighbor_, out.z.data(),
             out.beta.data(), nullptr, out.z_m.data());
  return out;
}

EvalContext::PathDebug EvalContext::item_path_debug(std::int32_t item) const {
  PathDebug out;
  out.z.resize(static_cast<std::size_t>(d_));
  out.z_m.resize(std::size_t(m_) * d_);
  out.beta.resize(static_cast<std::size_t>(m_));
  path_embed(model_.params().item_path, item_center_.data() + std::size_t(item) * m_ * d_,
             eval_nbrs_.items[std::size_t(item)].ids, user_as_neighbor_, out.z.data(),
             out.beta.data(), nullptr, out.z_m.data());
  return out;
}

double EvalContext::predict(std::int32_t user, std::int32_t item) const {
  const auto& cfg = model_.config();
  std::vector<double> zu(static_cast<std::size_t>(d_)), vi(static_cast<std::size_t>(d_));
  path_embed(model_.params().user_path, user_center_.data() + std::size_t(user) * m_ * d_,
             eval_nbrs_.users[std::size_t(user)].ids, item_as_neighbor_, zu.data(), nullptr,
             nullptr);
  path_embed(model_.params().item_path, item_center_.data() + std::size_t(item) * m_ * d_,
             eval_nbrs_.items[std::size_t(item)].ids, user_as_neighbor_, vi.data(), nullptr,
             nullptr);

  std::vector<double> g(zu.size() + vi.size());
  std::memcpy(g.data(), zu.data(), zu.size() * sizeof(double));
  std::memcpy(g.data() + zu.size(), vi.data(), vi.size() * sizeof(double));
  const auto& mlp = model_.params().mlp;
  std::vector<double> next;
  for (std::size_t l = 0; l < mlp.hidden_w.size(); ++l) {
    const auto& W = mlp.hidden_w[l];
    const auto& bias = mlp.hidden_b[l];
    next.resize(std::size_t(W.rows));
    for (std::int32_t r = 0; r < W.rows; ++r)
      next[std::size_t(r)] =
          k::ops().dot(W.val.data() + std::size_t(r) * W.cols, g.data(), g.size()) +
          bias.val[std::size_t(r)];
    apply_activation(cfg.activation, cfg.leaky_slope, next.data(), next.size());
    g = next;
  }
  return k::ops().dot(mlp.w_out.val.data(), g.data(), g.size());
}

std::vector<double> EvalContext::item_betas(std::int32_t item) const {
  std::vector<double> betas(static_cast<std::size_t>(m_));
  std::vector<double> unused(static_cast<std::size_t>(d_));
  path_embed(model_.params().item_path, item_center_.data() + std::size_t(item) * m_ * d_,
             graph_.users_of(item), user_as_neighbor_, unused.data(), betas.data(), nullptr);
  return betas;
}

EvalContext::NodeAttention EvalContext::user_node_attention(std::int32_t user) const {
  const auto ids = graph_.items_of(user);
  if (ids.empty()) fail("user_node_attention: user has no training neighbors");
  NodeAttention out;
  out.items.assign(ids.begin(), ids.end());
  out.alpha.resize(std::size_t(m_) * ids.size());
  std::vector<double> unused(static_cast<std::size_t>(d_));
  path_embed(model_.params().user_path, user_center_.data() + std::size_t(user) * m_ * d_, ids,
             item_as_neighbor_, unused.data(), nullptr, out.alpha.data());
  return out;
}

}  // namespace mccf
