#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mccf/graph.hpp"
#include "mccf/rng.hpp"

namespace mccf {

// At most `threshold` neighbors of one node, kept in ascending-id order.
// When the original degree is within the threshold this is the full list.
struct SampledNeighborhood {
  std::int32_t center = -1;
  std::vector<std::int32_t> ids;
  std::vector<double> ratings;
  std::size_t size() const { return ids.size(); }
};

// A-Res key for weighted sampling without replacement: uniform_draw^(1/rating).
// Strictly increasing in the rating for a fixed draw below 1.
double sample_key(double rating, double uniform_draw);

// Rating-weighted random selection: one key per neighbor, keep the
// `threshold` largest (ties broken by ascending neighbor id). Neighborhoods
// at or under the threshold are returned untouched.
SampledNeighborhood sample_neighborhood(std::int32_t center,
                                        std::span<const std::int32_t> ids,
                                        std::span<const double> ratings,
                                        std::int32_t threshold, Rng& rng);

// Deterministic inference-time selection: the `threshold` highest-rated
// neighbors, ties broken by ascending neighbor id.
SampledNeighborhood eval_neighborhood(std::int32_t center,
                                      std::span<const std::int32_t> ids,
                                      std::span<const double> ratings,
                                      std::int32_t threshold);

// Per-epoch neighborhoods for every user and item of the graph.
struct NeighborhoodSet {
  std::vector<SampledNeighborhood> users;
  std::vector<SampledNeighborhood> items;
};

NeighborhoodSet sample_all(const BipartiteGraph& graph, const DegreeThresholds& thresholds,
                           Rng& rng);
NeighborhoodSet eval_all(const BipartiteGraph& graph, const DegreeThresholds& thresholds);

}  // namespace mccf
