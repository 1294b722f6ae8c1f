#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mccf/tensor.hpp"

namespace mccf {

struct GraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One observed rating: user -> item with an ordinal level in {1..R}.
// Timestamps are carried through ingestion but never used by the model.
struct RatingEdge {
  std::int32_t user = 0;
  std::int32_t item = 0;
  std::int32_t rating = 0;
  std::int64_t timestamp = -1;

  friend bool operator==(const RatingEdge& a, const RatingEdge& b) {
    return a.user == b.user && a.item == b.item && a.rating == b.rating;
  }
};

// The user-item bipartite graph: the single source of truth for topology.
// Adjacency lists are CSR with neighbors sorted by id; immutable once built.
class BipartiteGraph {
 public:
  BipartiteGraph() = default;
  // Validates index ranges, rating levels and (user, item) uniqueness.
  static BipartiteGraph build(std::int32_t n_users, std::int32_t n_items,
                              std::int32_t max_rating, std::vector<RatingEdge> edges);

  std::int32_t n_users() const { return n_users_; }
  std::int32_t n_items() const { return n_items_; }
  std::int32_t max_rating() const { return max_rating_; }
  const std::vector<RatingEdge>& edges() const { return edges_; }

  std::span<const std::int32_t> items_of(std::int32_t u) const {
    return {u_id_.data() + u_off_[u], std::size_t(u_off_[u + 1] - u_off_[u])};
  }
  std::span<const double> item_ratings_of(std::int32_t u) const {
    return {u_rat_.data() + u_off_[u], std::size_t(u_off_[u + 1] - u_off_[u])};
  }
  std::span<const std::int32_t> users_of(std::int32_t i) const {
    return {i_id_.data() + i_off_[i], std::size_t(i_off_[i + 1] - i_off_[i])};
  }
  std::span<const double> user_ratings_of(std::int32_t i) const {
    return {i_rat_.data() + i_off_[i], std::size_t(i_off_[i + 1] - i_off_[i])};
  }
  std::int32_t user_degree(std::int32_t u) const { return u_off_[u + 1] - u_off_[u]; }
  std::int32_t item_degree(std::int32_t i) const { return i_off_[i + 1] - i_off_[i]; }

 private:
  std::int32_t n_users_ = 0, n_items_ = 0, max_rating_ = 0;
  std::vector<RatingEdge> edges_;
  std::vector<std::int64_t> u_off_, i_off_;
  std::vector<std::int32_t> u_id_, i_id_;
  std::vector<double> u_rat_, i_rat_;
};

// Raw-id <-> dense-index map retained from ingestion, in first-seen order.
struct IdMap {
  std::vector<std::string> user_raw;
  std::vector<std::string> item_raw;
  std::unordered_map<std::string, std::int32_t> user_index;
  std::unordered_map<std::string, std::int32_t> item_index;
};

struct ParseResult {
  std::vector<RatingEdge> edges;
  IdMap ids;
  std::int32_t n_users = 0;
  std::int32_t n_items = 0;
  std::int32_t max_rating = 0;
  std::string error_flag;  // "no ratings" on an empty stream, else empty
};

// MovieLens-style delimited text: user <delim> item <delim> rating [<delim> ts].
// Raw ids may be arbitrary tokens; they are remapped to dense 0-based indices
// in first-seen order. Throws GraphError (with the line number) on malformed
// lines, ratings outside {1..R}, or duplicate (user, item) pairs.
// expected_max_rating = 0 infers R as the maximum observed rating.
ParseResult parse_ratings(std::istream& in, char delimiter = '\t',
                          std::int32_t expected_max_rating = 0);

BipartiteGraph graph_from_parse(const ParseResult& parsed);

struct SplitResult {
  BipartiteGraph train;          // keeps the full N_u x N_i shape
  std::vector<RatingEdge> test;
  std::string warning;           // set when either side is empty
};

// Seeded uniform partition; |train| = round(train_frac * |E|).
SplitResult split_train_test(const BipartiteGraph& graph, double train_frac,
                             std::uint64_t seed);

enum class FeatureMode { rating_valued, binary };

const char* to_string(FeatureMode m);
FeatureMode feature_mode_from_string(const std::string& s);

// Adjacency-derived feature rows. A user row has length N_i and carries the
// training ratings (or 1s in binary mode) at the purchased items' columns;
// item rows are the dual. Stored sparse; feeds extract() directly.
class FeatureMatrices {
 public:
  FeatureMatrices() = default;
  FeatureMode mode() const { return mode_; }
  std::int32_t n_users() const { return n_users_; }
  std::int32_t n_items() const { return n_items_; }

  SparseVec user_row(std::int32_t u) const {
    return {u_idx_.data() + u_off_[u], u_val_.data() + u_off_[u],
            std::int32_t(u_off_[u + 1] - u_off_[u])};
  }
  SparseVec item_row(std::int32_t i) const {
    return {i_idx_.data() + i_off_[i], i_val_.data() + i_off_[i],
            std::int32_t(i_off_[i + 1] - i_off_[i])};
  }
  std::vector<double> dense_user_row(std::int32_t u) const;
  std::vector<double> dense_item_row(std::int32_t i) const;

  friend FeatureMatrices build_features(const BipartiteGraph&, FeatureMode);

 private:
  FeatureMode mode_ = FeatureMode::rating_valued;
  std::int32_t n_users_ = 0, n_items_ = 0;
  std::vector<std::int64_t> u_off_, i_off_;
  std::vector<std::int32_t> u_idx_, i_idx_;
  std::vector<double> u_val_, i_val_;
};

FeatureMatrices build_features(const BipartiteGraph& train, FeatureMode mode);

struct DegreeThresholds {
  std::int32_t user_threshold = 1;  // N^u = ceil(mean user degree)
  std::int32_t item_threshold = 1;  // N^i = ceil(mean item degree)
};

DegreeThresholds average_degrees(const BipartiteGraph& train);

// Line-based snapshot: "mccf-graph 1" header, counts line "N_u N_i R", then
// one edge per line (dense indices, optional timestamp).
void save_graph(const BipartiteGraph& graph, std::ostream& out);
BipartiteGraph load_graph(std::istream& in);

void save_id_map(const IdMap& ids, std::ostream& out);
IdMap load_id_map(std::istream& in);

// Test edges reuse the graph snapshot container.
void save_edges(const std::vector<RatingEdge>& edges, std::int32_t n_users,
                std::int32_t n_items, std::int32_t max_rating, std::ostream& out);

}  // namespace mccf
