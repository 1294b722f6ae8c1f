#include "mccf/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mccf {

double sample_key(double rating, double uniform_draw) {
  if (!(rating > 0.0)) throw std::invalid_argument("sample_key: rating must be positive");
  return std::pow(uniform_draw, 1.0 / rating);
}

namespace {

SampledNeighborhood take_all(std::int32_t center, std::span<const std::int32_t> ids,
                             std::span<const double> ratings) {
  SampledNeighborhood out;
  out.center = center;
  out.ids.assign(ids.begin(), ids.end());
  out.ratings.assign(ratings.begin(), ratings.end());
  return out;
}

SampledNeighborhood select(std::int32_t center, std::span<const std::int32_t> ids,
                           std::span<const double> ratings, std::int32_t threshold,
                           std::span<const double> keys) {
  const std::size_t n = ids.size();
  std::vector<std::int32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + threshold, order.end(),
                    [&](std::int32_t a, std::int32_t b) {
                      if (keys[a] != keys[b]) return keys[a] > keys[b];
                      return ids[a] < ids[b];
                    });
  std::vector<char> selected(n, 0);
  for (std::int32_t k = 0; k < threshold; ++k) selected[std::size_t(order[k])] = 1;

  SampledNeighborhood out;
  out.center = center;
  out.ids.reserve(std::size_t(threshold));
  out.ratings.reserve(std::size_t(threshold));
  // adjacency lists are id-sorted, so emitting in list order keeps ids ascending
  for (std::size_t k = 0; k < n; ++k) {
    if (selected[k]) {
      out.ids.push_back(ids[k]);
      out.ratings.push_back(ratings[k]);
    }
  }
  return out;
}

}  // namespace

SampledNeighborhood sample_neighborhood(std::int32_t center,
                                        std::span<const std::int32_t> ids,
                                        std::span<const double> ratings,
                                        std::int32_t threshold, Rng& rng) {
  if (threshold < 1) throw std::invalid_argument("sample_neighborhood: threshold must be >= 1");
  if (std::int32_t(ids.size()) <= threshold) return take_all(center, ids, ratings);
  std::vector<double> keys(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k)
    keys[k] = sample_key(ratings[k], rng.open01());
  return select(center, ids, ratings, threshold, keys);
}

SampledNeighborhood eval_neighborhood(std::int32_t center,
                                      std::span<const std::int32_t> ids,
                                      std::span<const double> ratings,
                                      std::int32_t threshold) {
  if (threshold < 1) throw std::invalid_argument("eval_neighborhood: threshold must be >= 1");
  if (std::int32_t(ids.size()) <= threshold) return take_all(center, ids, ratings);
  // ratings double as the keys: highest rating wins, id breaks ties
  return select(center, ids, ratings, threshold, ratings);
}

NeighborhoodSet sample_all(const BipartiteGraph& graph, const DegreeThresholds& thresholds,
                           Rng& rng) {
  NeighborhoodSet set;
  set.users.reserve(std::size_t(graph.n_users()));
  set.items.reserve(std::size_t(graph.n_items()));
  for (std::int32_t u = 0; u < graph.n_users(); ++u)
    set.users.push_back(sample_neighborhood(u, graph.items_of(u), graph.item_ratings_of(u),
                                            thresholds.user_threshold, rng));
  for (std::int32_t i = 0; i < graph.n_items(); ++i)
    set.items.push_back(sample_neighborhood(i, graph.users_of(i), graph.user_ratings_of(i),
                                            thresholds.item_threshold, rng));
  return set;
}

NeighborhoodSet eval_all(const BipartiteGraph& graph, const DegreeThresholds& thresholds) {
  NeighborhoodSet set;
  set.users.reserve(std::size_t(graph.n_users()));
  set.items.reserve(std::size_t(graph.n_items()));
  for (std::int32_t u = 0; u < graph.n_users(); ++u)
    set.users.push_back(eval_neighborhood(u, graph.items_of(u), graph.item_ratings_of(u),
                                          thresholds.user_threshold));
  for (std::int32_t i = 0; i < graph.n_items(); ++i)
    set.items.push_back(eval_neighborhood(i, graph.users_of(i), graph.user_ratings_of(i),
                                          thresholds.item_threshold));
  return set;
}

}  // namespace mccf
