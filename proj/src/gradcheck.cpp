#include "mccf/gradcheck.hpp"

#include <cmath>
#include <map>

#include "mccf/model.hpp"
#include "mccf/sampler.hpp"

namespace mccf {

BipartiteGraph toy_graph() {
  // user thresholds ceil(7/3) = 3, item thresholds ceil(7/4) = 2; every
  // degree is within its threshold
  return BipartiteGraph::build(3, 4, 5,
                               {{0, 0, 5},
                                {0, 1, 3},
                                {1, 1, 4},
                                {1, 2, 2},
                                {1, 3, 1},
                                {2, 0, 1},
                                {2, 3, 4}});
}

GradcheckReport gradcheck(std::uint64_t seed, bool corrupt_backward) {
  const auto graph = toy_graph();
  const auto feats = build_features(graph, FeatureMode::rating_valued);
  const auto thr = average_degrees(graph);
  const auto nbrs = eval_all(graph, thr);

  ModelConfig cfg;
  cfg.components = 2;
  cfg.dim = 6;
  cfg.mlp_hidden = {10, 8};
  const GraphMeta meta{graph.n_users(), graph.n_items(), graph.max_rating(),
                       FeatureMode::rating_valued};

  std::vector<BatchExample> batch;
  for (const auto& e : graph.edges()) batch.push_back({e.user, e.item, double(e.rating)});

  const double h = 1e-5;
  const double dropout_rate = 0.25;
  const double lambda = 1e-3;

  for (int attempt = 0; attempt < 200; ++attempt) {
    Rng init = Rng::stream(seed, streams::kGradcheck, std::uint64_t(attempt));
    Mccf model(cfg, meta, init);
    auto record = [&](Tape& tape) {
      Rng gates = Rng::stream(seed, streams::kGates, std::uint64_t(attempt));
      Rng drop = Rng::stream(seed, streams::kDropout, std::uint64_t(attempt));
      return model.batch_forward(tape, feats, nbrs, batch, /*training=*/true, dropout_rate,
                                 lambda, &gates, &drop);
    };

    Tape tape(cfg.hc);
    const BatchOut out = record(tape);
    const double margin = tape.kink_margin();
    if (margin <= 2e-4) continue;  // central differences would straddle a kink

    if (corrupt_backward) tape.set_backward_corruption(1.01);
    model.params().zero_grads();
    tape.backward(out.total);

    GradcheckReport report;
    report.kink_margin = margin;
    report.redraws = attempt;
    std::map<std::string, GradcheckGroup> groups;
    model.params().for_each([&](const char* group, const std::string&, Tensor& t) {
      auto& g = groups[group];
      g.name = group;
      for (std::size_t i = 0; i < t.val.size(); ++i) {
        const double keep = t.val[i];
        t.val[i] = keep + h;
        Tape tp(cfg.hc);
        const double fp = tp.value(record(tp).total)[0];
        t.val[i] = keep - h;
        Tape tm(cfg.hc);
        const double fm = tm.value(record(tm).total)[0];
        t.val[i] = keep;
        const double fd = (fp - fm) / (2.0 * h);
        const double an = t.grad[i];
        const double abs_err = std::fabs(an - fd);
        const double rel = abs_err / (std::fabs(an) + 1e-8);
        const double effective = abs_err < 1e-7 ? 0.0 : rel;
        g.max_rel_err = std::max(g.max_rel_err, effective);
        ++g.entries;
        if (effective >= 1e-4) g.pass = false;
      }
    });
    for (auto& [name, g] : groups) {
      report.groups.push_back(g);
      report.pass = report.pass && g.pass;
    }
    return report;
  }
  throw ModelError("gradcheck: no kink-safe initialization found in 200 attempts");
}

}  // namespace mccf
