#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mccf/graph.hpp"
#include "mccf/kernels.hpp"
#include "mccf/sampler.hpp"
#include "mccf/tape.hpp"

namespace mccf {

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Network hyperparameters. Disabling node_attention gives the MCCF-nd
// variant (uniform neighbor weights); disabling component_attention gives
// MCCF-cmp (uniform component weights).
struct ModelConfig {
  std::int32_t components = 2;  // M latent components
  std::int32_t dim = 64;        // embedding dimension d
  Activation activation = Activation::relu;
  double leaky_slope = 0.2;
  bool node_attention = true;
  bool component_attention = true;
  bool l0_gates = true;
  std::vector<std::int32_t> mlp_hidden;  // empty means {dim, dim}
  kernels::HcConsts hc;

  void validate() const;
  std::vector<std::int32_t> resolved_mlp() const;
};

// Shape of the graph a model instance is bound to. Extraction matrices have
// one column per feature entry, so a snapshot only loads against a graph
// with the same shape.
struct GraphMeta {
  std::int32_t n_users = 0;
  std::int32_t n_items = 0;
  std::int32_t max_rating = 0;
  FeatureMode feature_mode = FeatureMode::rating_valued;
};

// Parameters of one path (user-centered or item-centered). W transforms
// user-feature vectors, Q transforms item-feature vectors; the user path
// applies W to its center and Q to its item neighbors, the item path the
// mirror image. Extraction matrices are column-major for the sparse kernels.
struct PathParams {
  std::vector<Tensor> W, Q;
  std::vector<Tensor> W_log_alpha, Q_log_alpha;
  std::vector<Tensor> attn;    // per component, length 2d
  std::vector<Tensor> C;       // per component, d x 2d
  std::vector<Tensor> C_bias;  // per component, length d
  Tensor q;                    // shared attention vector, length d
  Tensor b;                    // shared scalar bias
};

struct PredictorParams {
  std::vector<Tensor> hidden_w;
  std::vector<Tensor> hidden_b;
  Tensor w_out;
};

struct ModelParams {
  PathParams user_path;
  PathParams item_path;
  PredictorParams mlp;

  // Visits every tensor as (group, name, tensor). Groups follow the paper's
  // parameter families: W, Q, a, C, b_vec, q, b, MLP, log_alpha.
  void for_each(const std::function<void(const char*, const std::string&, Tensor&)>& fn);
  void zero_grads();
};

struct BatchExample {
  std::int32_t user = 0;
  std::int32_t item = 0;
  double rating = 0.0;
};

struct BatchOut {
  std::vector<VarId> predictions;
  VarId rating_loss = -1;
  VarId penalty = -1;  // -1 when gates are disabled or lambda is 0
  VarId total = -1;
};

// The MCCF network: multi-component extraction with hard-concrete gates,
// node-level attention over sampled neighbors, component-level attention in
// the combiner, and an MLP rating head over [z_u || v_i].
class Mccf {
 public:
  Mccf() = default;
  Mccf(ModelConfig cfg, GraphMeta meta, Rng& init_rng);

  const ModelConfig& config() const { return cfg_; }
  const GraphMeta& meta() const { return meta_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  // Records one mini-batch forward (shared neighbor extractions are computed
  // once per batch) and the Eq.-16/17 objective on the tape.
  BatchOut batch_forward(Tape& tape, const FeatureMatrices& feats,
                         const NeighborhoodSet& nbrs, std::span<const BatchExample> batch,
                         bool training, double dropout_rate, double lambda,
                         Rng* gate_rng, Rng* dropout_rng);

  // Single prediction with explicit neighborhoods (tests, oracles).
  VarId forward_one(Tape& tape, const FeatureMatrices& feats,
                    const SampledNeighborhood& user_nb, const SampledNeighborhood& item_nb,
                    std::int32_t user, std::int32_t item, bool training = false,
                    double dropout_rate = 0.0, Rng* gate_rng = nullptr,
                    Rng* dropout_rng = nullptr);

  std::vector<Tensor*> gate_log_alphas();
  // Mean expected-active probability over all gate entries (history metric).
  double active_gate_fraction() const;

  void save(std::ostream& out) const;
  static Mccf load(std::istream& in);

 private:
  friend class EvalContext;
  struct PathVars;
  PathVars bind_path(Tape& tape, PathParams& p, Rng* gate_rng);
  std::span<const VarId> cached_components(Tape& tape, std::span<const VarId> mats,
                                           std::vector<VarId>& table, std::int32_t id,
                                           SparseVec row);
  VarId path_embed(Tape& tape, const PathVars& pv, std::span<const VarId> center,
                   const SampledNeighborhood& nb, std::vector<VarId>& nb_table,
                   const FeatureMatrices& feats, bool neighbors_are_items, bool training,
                   double dropout_rate, Rng* dropout_rng, VarId zero_vec);
  VarId example_forward(Tape& tape, PathVars& up, PathVars& ip, const FeatureMatrices& feats,
                        std::int32_t user, std::int32_t item,
                        const SampledNeighborhood& user_nb, const SampledNeighborhood& item_nb,
                        std::vector<VarId>& ucenter, std::vector<VarId>& unbr,
                        std::vector<VarId>& icenter, std::vector<VarId>& inbr, bool training,
                        double dropout_rate, Rng* dropout_rng, VarId zero_vec, VarId zero_scalar);

  ModelConfig cfg_;
  GraphMeta meta_;
  ModelParams params_;
  std::vector<VarId> scratch_vars_;
};

// Deterministic inference: evaluation gates, no dropout, neighbor component
// vectors for every entity precomputed once. Holds references to the model,
// features and graph; keep them alive while using it.
class EvalContext {
 public:
  EvalContext(const Mccf& model, const FeatureMatrices& feats, const BipartiteGraph& graph,
              DegreeThresholds thresholds);

  // Raw (unclipped) rating prediction with thresholded eval neighborhoods.
  double predict(std::int32_t user, std::int32_t item) const;

  // Component-level weights beta of item i (item path), over the full train
  // neighborhood. Defined for every item; empty neighborhoods fall back to
  // zero aggregated components.
  std::vector<double> item_betas(std::int32_t item) const;

  // Node-level weights of user u over the items of their full train
  // neighborhood: alpha[m * K + k] is the weight of the k-th neighbor under
  // component m.
  struct NodeAttention {
    std::vector<std::int32_t> items;
    std::vector<double> alpha;  // components x neighbors, row-major
  };
  NodeAttention user_node_attention(std::int32_t user) const;

  // Intermediate stages of one path under the eval neighborhoods; used by
  // the invariant tests (convex hull, normalization).
  struct PathDebug {
    std::vector<double> z;    // fused embedding, length d
    std::vector<double> z_m;  // aggregated components, M x d
    std::vector<double> beta;
  };
  PathDebug user_path_debug(std::int32_t user) const;
  PathDebug item_path_debug(std::int32_t item) const;

  const DegreeThresholds& thresholds() const { return thr_; }

 private:
  void path_embed(const PathParams& pp, const double* center,
                  std::span<const std::int32_t> nb_ids, const std::vector<double>& h_table,
                  double* z_out, double* betas_out, double* alphas_out,
                  double* zm_out = nullptr) const;

  const Mccf& model_;
  const BipartiteGraph& graph_;
  DegreeThresholds thr_;
  NeighborhoodSet eval_nbrs_;
  std::int32_t m_ = 0, d_ = 0;
  // per-entity component vectors, entity-major [id][m][d]
  std::vector<double> user_center_, user_as_neighbor_;  // s (user path), h (item path)
  std::vector<double> item_center_, item_as_neighbor_;  // s (item path), h (user path)
};

}  // namespace mccf
