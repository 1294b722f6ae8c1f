#include "mccf/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mccf/sampler.hpp"

namespace mccf {

EvalReport metrics(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.empty()) throw EvaluatorError("metrics: empty evaluation");
  if (predictions.size() != targets.size()) throw EvaluatorError("metrics: length mismatch");
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double diff = predictions[i] - targets[i];
    se += diff * diff;
    ae += std::fabs(diff);
  }
  EvalReport rep;
  rep.n_scored = std::int64_t(predictions.size());
  rep.rmse = std::sqrt(se / double(predictions.size()));
  rep.mae = ae / double(predictions.size());
  return rep;
}

EvalReport evaluate(const Mccf& model, const BipartiteGraph& train_graph,
                    std::span<const RatingEdge> test) {
  if (test.empty()) throw EvaluatorError("evaluate: empty test set");
  const auto& meta = model.meta();
  if (meta.n_users != train_graph.n_users() || meta.n_items != train_graph.n_items() ||
      meta.max_rating != train_graph.max_rating())
    throw EvaluatorError("evaluate: model snapshot does not match the graph shape");
  if (train_graph.edges().empty()) throw EvaluatorError("evaluate: empty train graph");

  const auto feats = build_features(train_graph, meta.feature_mode);
  const auto thresholds = average_degrees(train_graph);
  const EvalContext ctx(model, feats, train_graph, thresholds);

  double mean = 0.0;
  for (const auto& e : train_graph.edges()) mean += double(e.rating);
  mean /= double(train_graph.edges().size());

  const double lo = 1.0, hi = double(meta.max_rating);
  std::vector<double> preds, targets;
  preds.reserve(test.size());
  targets.reserve(test.size());
  EvalReport rep;
  for (const auto& e : test) {
    double pred;
    if (train_graph.user_degree(e.user) == 0 && train_graph.item_degree(e.item) == 0) {
      pred = mean;
      ++rep.n_fallback;
    } else {
      pred = ctx.predict(e.user, e.item);
    }
    preds.push_back(std::clamp(pred, lo, hi));
    targets.push_back(double(e.rating));
  }
  const auto base = metrics(preds, targets);
  rep.n_scored = base.n_scored;
  rep.rmse = base.rmse;
  rep.mae = base.mae;
  return rep;
}

AttentionDump export_attention(const Mccf& model, const BipartiteGraph& train_graph,
                               std::optional<std::int32_t> user,
                               const std::vector<std::int32_t>* item_labels) {
  const auto& meta = model.meta();
  if (meta.n_users != train_graph.n_users() || meta.n_items != train_graph.n_items())
    throw EvaluatorError("export_attention: model snapshot does not match the graph shape");
  const auto feats = build_features(train_graph, meta.feature_mode);
  const auto thresholds = average_degrees(train_graph);
  const EvalContext ctx(model, feats, train_graph, thresholds);

  std::int32_t u = -1;
  if (user.has_value()) {
    u = *user;
    if (u < 0 || u >= train_graph.n_users())
      throw EvaluatorError("export_attention: user id out of range");
  } else {
    // the user covering the most items; the paper picks one connected to all
    std::int32_t best = -1;
    for (std::int32_t cand = 0; cand < train_graph.n_users(); ++cand)
      if (train_graph.user_degree(cand) > best) {
        best = train_graph.user_degree(cand);
        u = cand;
      }
  }
  if (train_graph.user_degree(u) == 0)
    throw EvaluatorError("export_attention: user has an empty neighborhood");

  auto label_of = [&](std::int32_t item) {
    if (item_labels == nullptr) return std::int32_t(-1);
    if (item < 0 || std::size_t(item) >= item_labels->size())
      throw EvaluatorError("export_attention: label file does not cover item ids");
    return (*item_labels)[std::size_t(item)];
  };

  AttentionDump dump;
  const std::int32_t M = model.config().components;
  dump.components = M;

  // Node-level: per neighbor item of u, the cross-component profile
  // (alpha_m^{ui})_m normalized to a distribution over components.
  const auto na = ctx.user_node_attention(u);
  const std::size_t K = na.items.size();
  for (std::size_t t = 0; t < K; ++t) {
    AttentionRow row;
    row.entity = na.items[t];
    row.level = "node";
    row.idx = u;
    row.label = label_of(na.items[t]);
    row.w.resize(std::size_t(M));
    double sum = 0.0;
    for (std::int32_t m = 0; m < M; ++m) {
      row.w[std::size_t(m)] = na.alpha[std::size_t(m) * K + t];
      sum += row.w[std::size_t(m)];
    }
    for (auto& w : row.w) w /= sum;
    dump.rows.push_back(std::move(row));
  }

  // Component-level: beta vector of every item (item path).
  for (std::int32_t i = 0; i < train_graph.n_items(); ++i) {
    AttentionRow row;
    row.entity = i;
    row.level = "component";
    row.idx = -1;
    row.label = label_of(i);
    row.w = ctx.item_betas(i);
    dump.rows.push_back(std::move(row));
  }
  return dump;
}

void write_attention_csv(const AttentionDump& dump, std::ostream& out) {
  out << "entity_id,level,idx";
  for (std::int32_t m = 0; m < dump.components; ++m) out << ",w_" << m;
  out << ",label\n";
  for (const auto& row : dump.rows) {
    out << row.entity << ',' << row.level << ',' << row.idx;
    for (double w : row.w) out << ',' << w;
    out << ',';
    if (row.label >= 0) out << row.label;
    out << '\n';
  }
}

}  // namespace mccf
