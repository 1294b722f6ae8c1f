#include "mccf/synthgen.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "mccf/rng.hpp"

namespace mccf {

void SynthConfig::validate() const {
  if (n_users < 1) throw GraphError("synth: n_users must be >= 1");
  if (items_per_subgraph < 1) throw GraphError("synth: items_per_subgraph must be >= 1");
  if (variances.empty()) throw GraphError("synth: need at least one variance");
  for (double v : variances)
    if (!(v > 0.0)) throw GraphError("synth: variances must be positive");
  if (!(threshold > 0.0)) throw GraphError("synth: threshold must be positive");
}

double expected_block_density(double variance, double threshold) {
  return std::erfc(threshold / std::sqrt(2.0 * variance));
}

SynthResult generate(const SynthConfig& config) {
  config.validate();
  const auto blocks = std::int32_t(config.variances.size());
  const std::int32_t n_items = blocks * config.items_per_subgraph;
  const std::int32_t max_rating =
      config.rating_rule == SynthConfig::RatingRule::constant_one ? 1 : 5;

  Rng rng = Rng::stream(config.seed, streams::kSynth);
  std::vector<RatingEdge> edges;
  std::vector<std::int32_t> labels(static_cast<std::size_t>(n_items));
  for (std::int32_t g = 0; g < blocks; ++g) {
    const double sigma = std::sqrt(config.variances[std::size_t(g)]);
    for (std::int32_t local = 0; local < config.items_per_subgraph; ++local)
      labels[std::size_t(g * config.items_per_subgraph + local)] = g;
    for (std::int32_t u = 0; u < config.n_users; ++u) {
      for (std::int32_t local = 0; local < config.items_per_subgraph; ++local) {
        const double p = rng.normal(0.0, sigma);
        if (std::fabs(p) <= config.threshold) continue;
        const std::int32_t item = g * config.items_per_subgraph + local;
        std::int32_t rating = 1;
        if (config.rating_rule == SynthConfig::RatingRule::component_signal) {
          const double eps = rng.normal(0.0, std::sqrt(0.5));
          const auto r = std::llround(2.0 + double(g) + eps);
          rating = std::int32_t(std::clamp<long long>(r, 1, 5));
        }
        edges.push_back({u, item, rating});
      }
    }
  }
  SynthResult out;
  out.graph = BipartiteGraph::build(config.n_users, n_items, max_rating, std::move(edges));
  out.item_labels = std::move(labels);
  return out;
}

void write_labels(const std::vector<std::int32_t>& labels, std::ostream& out) {
  out << "item_id,class\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << labels[i] << '\n';
}

std::vector<std::int32_t> read_labels(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("item_id,class", 0) != 0)
    throw GraphError("labels: missing item_id,class header");
  std::vector<std::int32_t> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::int64_t id = 0, cls = 0;
    char comma = 0;
    if (!(ls >> id >> comma >> cls) || comma != ',') {
      std::ostringstream ss;
      ss << "labels: malformed line " << line_no;
      throw GraphError(ss.str());
    }
    if (id != std::int64_t(labels.size()))
      throw GraphError("labels: item ids must be dense and ascending");
    labels.push_back(std::int32_t(cls));
  }
  return labels;
}

}  // namespace mccf
