#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "mccf/graph.hpp"

namespace mccf {

// Multi-component synthetic bipartite graph: one user-item block per
// variance, users shared, item ranges disjoint. A (u, i) pair in block g is
// connected when |p| > threshold for p ~ N(0, variance_g), so block density
// grows with the variance and the block index is the item's class label.
struct SynthConfig {
  std::int32_t n_users = 300;
  std::int32_t items_per_subgraph = 100;
  std::vector<double> variances{0.5, 5.0, 50.0};
  double threshold = 0.5;
  std::uint64_t seed = 1;
  // component-signal: rating = clamp(round(2 + g + eps), 1, 5) with
  // eps ~ N(0, 0.5), so the latent component carries rating information.
  // constant-one: every edge rated 1.
  enum class RatingRule { component_signal, constant_one };
  RatingRule rating_rule = RatingRule::component_signal;

  void validate() const;
};

struct SynthResult {
  BipartiteGraph graph;
  std::vector<std::int32_t> item_labels;  // subgraph index per item
};

SynthResult generate(const SynthConfig& config);

// Expected edge density of a block: P(|N(0, v)| > t) = erfc(t / sqrt(2 v)).
double expected_block_density(double variance, double threshold);

// "item_id,class" per line, with a header; round-trips losslessly.
void write_labels(const std::vector<std::int32_t>& labels, std::ostream& out);
std::vector<std::int32_t> read_labels(std::istream& in);

}  // namespace mccf
