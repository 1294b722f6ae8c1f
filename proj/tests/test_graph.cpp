#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <map>
#include <sstream>

#include "doctest.h"
#include "mccf/graph.hpp"
#include "mccf/rng.hpp"

using namespace mccf;

namespace {

BipartiteGraph random_graph(Rng& rng, std::int32_t nu, std::int32_t ni, double density,
                            std::int32_t r_max = 5) {
  std::vector<RatingEdge> edges;
  for (std::int32_t u = 0; u < nu; ++u)
    for (std::int32_t i = 0; i < ni; ++i)
      if (rng.uniform() < density)
        edges.push_back({u, i, std::int32_t(1 + rng.bounded(std::uint64_t(r_max)))});
  return BipartiteGraph::build(nu, ni, r_max, std::move(edges));
}

std::multiset<std::tuple<int, int, int>> edge_multiset(const std::vector<RatingEdge>& es) {
  std::multiset<std::tuple<int, int, int>> out;
  for (const auto& e : es) out.insert({e.user, e.item, e.rating});
  return out;
}

}  // namespace

TEST_CASE("parse_ratings: dense remapping in first-seen order") {
  std::istringstream in("1\t2\t5\t0\n");
  const auto r = parse_ratings(in);
  REQUIRE(r.edges.size() == 1);
  CHECK(r.edges[0].user == 0);
  CHECK(r.edges[0].item == 0);
  CHECK(r.edges[0].rating == 5);
  CHECK(r.edges[0].timestamp == 0);
  CHECK(r.n_users == 1);
  CHECK(r.n_items == 1);
  CHECK(r.max_rating == 5);
  CHECK(r.ids.user_raw[0] == "1");
  CHECK(r.ids.item_raw[0] == "2");
}

TEST_CASE("parse_ratings: empty stream flags 'no ratings'") {
  std::istringstream in("");
  const auto r = parse_ratings(in);
  CHECK(r.edges.empty());
  CHECK(r.error_flag == "no ratings");
}

TEST_CASE("parse_ratings: duplicate pair and malformed input are errors") {
  {
    std::istringstream in("1 2 5\n1 2 4\n");
    CHECK_THROWS_WITH_AS(static_cast<void>(parse_ratings(in, ' ')),
                         doctest::Contains("duplicate"), GraphError);
  }
  {
    std::istringstream in("1\t2\n");
    CHECK_THROWS_WITH_AS(static_cast<void>(parse_ratings(in)), doctest::Contains("line 1"),
                         GraphError);
  }
  {
    std::istringstream in("1\t2\t5\n3\tx4\tnope\n");
    CHECK_THROWS_WITH_AS(static_cast<void>(parse_ratings(in)), doctest::Contains("line 2"),
                         GraphError);
  }
  {
    std::istringstream in("1\t2\t0\n");
    CHECK_THROWS_AS(static_cast<void>(parse_ratings(in)), GraphError);
  }
  {
    // rating above a configured R
    std::istringstream in("1\t2\t9\n");
    CHECK_THROWS_AS(static_cast<void>(parse_ratings(in, '\t', 5)), GraphError);
  }
}

TEST_CASE("snapshot round-trip preserves the edge multiset") {
  Rng rng(42);
  for (int rep = 0; rep < 5; ++rep) {
    const auto g = random_graph(rng, 13, 17, 0.2);
    std::ostringstream out;
    save_graph(g, out);
    std::istringstream in(out.str());
    const auto g2 = load_graph(in);
    CHECK(g2.n_users() == g.n_users());
    CHECK(g2.n_items() == g.n_items());
    CHECK(g2.max_rating() == g.max_rating());
    CHECK(edge_multiset(g2.edges()) == edge_multiset(g.edges()));
  }
}

TEST_CASE("id map round-trip") {
  std::istringstream in("alice\tm1\t4\nbob\tm2\t3\nalice\tm2\t5\n");
  const auto r = parse_ratings(in);
  std::ostringstream out;
  save_id_map(r.ids, out);
  std::istringstream back(out.str());
  const auto ids = load_id_map(back);
  CHECK(ids.user_raw == r.ids.user_raw);
  CHECK(ids.item_raw == r.ids.item_raw);
  CHECK(ids.user_index.at("bob") == 1);
}

TEST_CASE("split_train_test: sizes, determinism, partition") {
  Rng rng(7);
  const auto g = random_graph(rng, 5, 4, 0.55);
  // exact sizes on a 10-edge graph
  std::vector<RatingEdge> ten;
  for (int k = 0; k < 10; ++k) ten.push_back({k % 5, k % 4, 1 + k % 5});
  const auto g10 = BipartiteGraph::build(5, 4, 5, ten);
  const auto s = split_train_test(g10, 0.8, 123);
  CHECK(s.train.edges().size() == 8);
  CHECK(s.test.size() == 2);

  // determinism
  const auto s2 = split_train_test(g10, 0.8, 123);
  CHECK(edge_multiset(s.train.edges()) == edge_multiset(s2.train.edges()));
  CHECK(edge_multiset(s.test) == edge_multiset(s2.test));
  const auto s3 = split_train_test(g10, 0.8, 124);
  CHECK(edge_multiset(s.train.edges()) != edge_multiset(s3.train.edges()));

  // partition property: union is E, intersection empty
  const auto sp = split_train_test(g, 0.7, 99);
  auto uni = edge_multiset(sp.train.edges());
  for (const auto& e : sp.test) uni.insert({e.user, e.item, e.rating});
  CHECK(uni == edge_multiset(g.edges()));
  CHECK(sp.train.edges().size() + sp.test.size() == g.edges().size());

  // single edge: everything lands in train, warning emitted
  const auto g1 = BipartiteGraph::build(1, 1, 5, {{0, 0, 3}});
  const auto s1 = split_train_test(g1, 0.8, 1);
  CHECK(s1.train.edges().size() == 1);
  CHECK(s1.test.empty());
  CHECK(!s1.warning.empty());

  CHECK_THROWS_AS(static_cast<void>(split_train_test(g1, 1.0, 1)), GraphError);
}

TEST_CASE("build_features: definition cases") {
  // user 0 rated item 1 with 5, N_i = 3
  const auto g = BipartiteGraph::build(2, 3, 5, {{0, 1, 5}});
  const auto f = build_features(g, FeatureMode::rating_valued);
  CHECK(f.dense_user_row(0) == std::vector<double>{0, 5, 0});
  const auto fb = build_features(g, FeatureMode::binary);
  CHECK(fb.dense_user_row(0) == std::vector<double>{0, 1, 0});
  // user with no train edges has a zero row
  CHECK(f.dense_user_row(1) == std::vector<double>{0, 0, 0});
  // dual item rows
  CHECK(f.dense_item_row(1) == std::vector<double>{5, 0});
  CHECK(f.dense_item_row(0) == std::vector<double>{0, 0});
}

TEST_CASE("features use only train edges and row sums match") {
  Rng rng(11);
  const auto g = random_graph(rng, 20, 25, 0.3);
  const auto s = split_train_test(g, 0.8, 5);
  const auto f = build_features(s.train, FeatureMode::rating_valued);
  const auto fb = build_features(s.train, FeatureMode::binary);

  // zeroing any test edge's cell is a no-op (the cell is already zero)
  for (const auto& e : s.test) {
    CHECK(f.dense_user_row(e.user)[std::size_t(e.item)] == 0.0);
    CHECK(f.dense_item_row(e.item)[std::size_t(e.user)] == 0.0);
  }

  // row sums: sum of train ratings (rating-valued) or train degree (binary)
  for (std::int32_t u = 0; u < s.train.n_users(); ++u) {
    double want = 0.0;
    for (double r : s.train.item_ratings_of(u)) want += r;
    double got = 0.0;
    for (double v : f.dense_user_row(u)) got += v;
    CHECK(got == doctest::Approx(want));
    double degree = 0.0;
    for (double v : fb.dense_user_row(u)) degree += v;
    CHECK(degree == double(s.train.user_degree(u)));
  }
}

TEST_CASE("average_degrees: ceiling of the mean degree") {
  // degrees {2, 4}: ceil(3) = 3
  const auto g = BipartiteGraph::build(
      2, 6, 5, {{0, 0, 1}, {0, 1, 2}, {1, 2, 3}, {1, 3, 4}, {1, 4, 5}, {1, 5, 1}});
  CHECK(average_degrees(g).user_threshold == 3);
  CHECK(average_degrees(g).item_threshold == 1);  // 6 edges over 6 items

  // all users degree 1
  const auto g1 = BipartiteGraph::build(3, 3, 5, {{0, 0, 1}, {1, 1, 1}, {2, 2, 1}});
  CHECK(average_degrees(g1).user_threshold == 1);

  // degrees {1, 2}: ceil(1.5) = 2
  const auto g2 = BipartiteGraph::build(2, 3, 5, {{0, 0, 1}, {1, 1, 1}, {1, 2, 1}});
  CHECK(average_degrees(g2).user_threshold == 2);

  const auto empty = BipartiteGraph::build(2, 2, 5, {});
  CHECK_THROWS_AS(static_cast<void>(average_degrees(empty)), GraphError);
}

TEST_CASE("adjacency is id-sorted and consistent with edges") {
  Rng rng(3);
  const auto g = random_graph(rng, 15, 12, 0.35);
  std::size_t total = 0;
  for (std::int32_t u = 0; u < g.n_users(); ++u) {
    const auto ids = g.items_of(u);
    total += ids.size();
    CHECK(std::is_sorted(ids.begin(), ids.end()));
  }
  CHECK(total == g.edges().size());
  // every edge appears exactly once on each side
  for (const auto& e : g.edges()) {
    const auto ids = g.items_of(e.user);
    const auto it = std::lower_bound(ids.begin(), ids.end(), e.item);
    REQUIRE(it != ids.end());
    CHECK(*it == e.item);
    const auto rats = g.item_ratings_of(e.user);
    CHECK(rats[std::size_t(it - ids.begin())] == double(e.rating));
    const auto us = g.users_of(e.item);
    CHECK(std::binary_search(us.begin(), us.end(), e.user));
  }
}
