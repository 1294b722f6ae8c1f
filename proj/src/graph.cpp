#include "mccf/graph.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mccf/rng.hpp"

namespace mccf {

namespace {

[[noreturn]] void fail(const std::string& what) { throw GraphError(what); }

[[noreturn]] void fail_line(std::size_t line_no, const std::string& what) {
  std::ostringstream ss;
  ss << "line " << line_no << ": " << what;
  throw GraphError(ss.str());
}

bool parse_int64(const std::string& tok, std::int64_t& out) {
  if (tok.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stoll(tok, &pos);
  } catch (...) {
    return false;
  }
  return pos == tok.size();
}

std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == delim) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  // collapse empty trailing field from a terminal delimiter
  while (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

}  // namespace

// ---------------------------------------------------------------- BipartiteGraph

BipartiteGraph BipartiteGraph::build(std::int32_t n_users, std::int32_t n_items,
                                     std::int32_t max_rating,
                                     std::vector<RatingEdge> edges) {
  if (n_users < 0 || n_items < 0 || max_rating < 0) fail("negative graph dimension");
  BipartiteGraph g;
  g.n_users_ = n_users;
  g.n_items_ = n_items;
  g.max_rating_ = max_rating;
  g.edges_ = std::move(edges);

  std::vector<std::int64_t> ucount(std::size_t(n_users) + 1, 0);
  std::vector<std::int64_t> icount(std::size_t(n_items) + 1, 0);
  for (const auto& e : g.edges_) {
    if (e.user < 0 || e.user >= n_users) fail("edge user id out of range");
    if (e.item < 0 || e.item >= n_items) fail("edge item id out of range");
    if (e.rating < 1 || e.rating > max_rating) fail("edge rating outside {1..R}");
    ++ucount[std::size_t(e.user) + 1];
    ++icount[std::size_t(e.item) + 1];
  }
  g.u_off_.assign(ucount.begin(), ucount.end());
  g.i_off_.assign(icount.begin(), icount.end());
  std::partial_sum(g.u_off_.begin(), g.u_off_.end(), g.u_off_.begin());
  std::partial_sum(g.i_off_.begin(), g.i_off_.end(), g.i_off_.begin());

  const std::size_t m = g.edges_.size();
  g.u_id_.resize(m);
  g.u_rat_.resize(m);
  g.i_id_.resize(m);
  g.i_rat_.resize(m);
  std::vector<std::int64_t> ucur(g.u_off_.begin(), g.u_off_.end() - 1);
  std::vector<std::int64_t> icur(g.i_off_.begin(), g.i_off_.end() - 1);
  // Edges arrive in arbitrary order; a sort keyed on (center, neighbor) gives
  // id-sorted adjacency. Sorting indices keeps it simple at this scale.
  std::vector<std::int32_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
    const auto& ea = g.edges_[a];
    const auto& eb = g.edges_[b];
    return ea.user != eb.user ? ea.user < eb.user : ea.item < eb.item;
  });
  const RatingEdge* prev = nullptr;
  for (std::int32_t oi : order) {
    const auto& e = g.edges_[oi];
    if (prev && prev->user == e.user && prev->item == e.item) {
      std::ostringstream ss;
      ss << "duplicate (user, item) pair (" << e.user << ", " << e.item << ")";
      fail(ss.str());
    }
    prev = &g.edges_[oi];
    const auto upos = ucur[e.user]++;
    g.u_id_[upos] = e.item;
    g.u_rat_[upos] = double(e.rating);
  }
  std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
    const auto& ea = g.edges_[a];
    const auto& eb = g.edges_[b];
    return ea.item != eb.item ? ea.item < eb.item : ea.user < eb.user;
  });
  for (std::int32_t oi : order) {
    const auto& e = g.edges_[oi];
    const auto ipos = icur[e.item]++;
    g.i_id_[ipos] = e.user;
    g.i_rat_[ipos] = double(e.rating);
  }
  return g;
}

// --------------------------------------------------------------------- parsing

ParseResult parse_ratings(std::istream& in, char delimiter,
                          std::int32_t expected_max_rating) {
  ParseResult r;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::pair<std::int64_t, std::int64_t>> seen;  // (user, item) pairs

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line, delimiter);
    if (fields.size() < 3) fail_line(line_no, "expected at least 3 fields (user, item, rating)");

    auto intern = [](const std::string& raw, std::vector<std::string>& names,
                     std::unordered_map<std::string, std::int32_t>& index) {
      auto it = index.find(raw);
      if (it != index.end()) return it->second;
      const auto id = std::int32_t(names.size());
      names.push_back(raw);
      index.emplace(raw, id);
      return id;
    };
    const std::int32_t u = intern(fields[0], r.ids.user_raw, r.ids.user_index);
    const std::int32_t i = intern(fields[1], r.ids.item_raw, r.ids.item_index);

    std::int64_t rating = 0;
    if (!parse_int64(fields[2], rating)) fail_line(line_no, "rating is not an integer");
    if (rating < 1) fail_line(line_no, "rating below 1");
    if (expected_max_rating > 0 && rating > expected_max_rating)
      fail_line(line_no, "rating above configured maximum");

    RatingEdge e;
    e.user = u;
    e.item = i;
    e.rating = std::int32_t(rating);
    if (fields.size() > 3) {
      std::int64_t ts = 0;
      if (!parse_int64(fields[3], ts)) fail_line(line_no, "timestamp is not an integer");
      e.timestamp = ts;
    }
    r.edges.push_back(e);
    r.max_rating = std::max(r.max_rating, e.rating);
    seen.emplace_back(u, i);
  }

  std::sort(seen.begin(), seen.end());
  if (auto it = std::adjacent_find(seen.begin(), seen.end()); it != seen.end()) {
    std::ostringstream ss;
    ss << "duplicate (user, item) pair: raw ids ("
       << r.ids.user_raw[std::size_t(it->first)] << ", "
       << r.ids.item_raw[std::size_t(it->second)] << ")";
    fail(ss.str());
  }

  r.n_users = std::int32_t(r.ids.user_raw.size());
  r.n_items = std::int32_t(r.ids.item_raw.size());
  if (expected_max_rating > 0) r.max_rating = expected_max_rating;
  if (r.edges.empty()) r.error_flag = "no ratings";
  return r;
}

BipartiteGraph graph_from_parse(const ParseResult& parsed) {
  if (!parsed.error_flag.empty()) fail(parsed.error_flag);
  return BipartiteGraph::build(parsed.n_users, parsed.n_items, parsed.max_rating,
                               parsed.edges);
}

// ----------------------------------------------------------------------- split

SplitResult split_train_test(const BipartiteGraph& graph, double train_frac,
                             std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) fail("train_frac must be in (0, 1)");
  const auto& edges = graph.edges();
  const std::size_t m = edges.size();
  const auto n_train = std::size_t(std::llround(train_frac * double(m)));

  std::vector<std::int32_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::stream(seed, streams::kSplit);
  rng.shuffle(std::span<std::int32_t>(order));

  std::vector<char> is_train(m, 0);
  for (std::size_t k = 0; k < n_train && k < m; ++k) is_train[std::size_t(order[k])] = 1;

  SplitResult out;
  std::vector<RatingEdge> train_edges;
  train_edges.reserve(n_train);
  for (std::size_t k = 0; k < m; ++k) {
    if (is_train[k]) {
      train_edges.push_back(edges[k]);
    } else {
      out.test.push_back(edges[k]);
    }
  }
  if (out.test.empty()) out.warning = "test split is empty after rounding";
  if (train_edges.empty()) out.warning = "train split is empty after rounding";
  out.train = BipartiteGraph::build(graph.n_users(), graph.n_items(), graph.max_rating(),
                                    std::move(train_edges));
  return out;
}

// -------------------------------------------------------------------- features

const char* to_string(FeatureMode m) {
  return m == FeatureMode::rating_valued ? "rating-valued" : "binary";
}

FeatureMode feature_mode_from_string(const std::string& s) {
  if (s == "rating-valued") return FeatureMode::rating_valued;
  if (s == "binary") return FeatureMode::binary;
  fail("unknown feature mode: " + s);
}

FeatureMatrices build_features(const BipartiteGraph& train, FeatureMode mode) {
  FeatureMatrices f;
  f.mode_ = mode;
  f.n_users_ = train.n_users();
  f.n_items_ = train.n_items();
  f.u_off_.assign(1, 0);
  for (std::int32_t u = 0; u < train.n_users(); ++u) {
    const auto ids = train.items_of(u);
    const auto rats = train.item_ratings_of(u);
    f.u_idx_.insert(f.u_idx_.end(), ids.begin(), ids.end());
    if (mode == FeatureMode::binary) {
      f.u_val_.insert(f.u_val_.end(), ids.size(), 1.0);
    } else {
      f.u_val_.insert(f.u_val_.end(), rats.begin(), rats.end());
    }
    f.u_off_.push_back(std::int64_t(f.u_idx_.size()));
  }
  f.i_off_.assign(1, 0);
  for (std::int32_t i = 0; i < train.n_items(); ++i) {
    const auto ids = train.users_of(i);
    const auto rats = train.user_ratings_of(i);
    f.i_idx_.insert(f.i_idx_.end(), ids.begin(), ids.end());
    if (mode == FeatureMode::binary) {
      f.i_val_.insert(f.i_val_.end(), ids.size(), 1.0);
    } else {
      f.i_val_.insert(f.i_val_.end(), rats.begin(), rats.end());
    }
    f.i_off_.push_back(std::int64_t(f.i_idx_.size()));
  }
  return f;
}

std::vector<double> FeatureMatrices::dense_user_row(std::int32_t u) const {
  std::vector<double> row(std::size_t(n_items_), 0.0);
  const auto sv = user_row(u);
  for (std::int32_t k = 0; k < sv.nnz; ++k) row[std::size_t(sv.idx[k])] = sv.val[k];
  return row;
}

std::vector<double> FeatureMatrices::dense_item_row(std::int32_t i) const {
  std::vector<double> row(std::size_t(n_users_), 0.0);
  const auto sv = item_row(i);
  for (std::int32_t k = 0; k < sv.nnz; ++k) row[std::size_t(sv.idx[k])] = sv.val[k];
  return row;
}

DegreeThresholds average_degrees(const BipartiteGraph& train) {
  const auto m = std::int64_t(train.edges().size());
  if (m == 0) fail("average_degrees: empty graph");
  DegreeThresholds t;
  t.user_threshold = std::int32_t((m + train.n_users() - 1) / train.n_users());
  t.item_threshold = std::int32_t((m + train.n_items() - 1) / train.n_items());
  return t;
}

// -------------------------------------------------------------------- snapshot

void save_edges(const std::vector<RatingEdge>& edges, std::int32_t n_users,
                std::int32_t n_items, std::int32_t max_rating, std::ostream& out) {
  out << "mccf-graph 1\n" << n_users << ' ' << n_items << ' ' << max_rating << '\n';
  for (const auto& e : edges) {
    out << e.user << ' ' << e.item << ' ' << e.rating;
    if (e.timestamp >= 0) out << ' ' << e.timestamp;
    out << '\n';
  }
}

void save_graph(const BipartiteGraph& graph, std::ostream& out) {
  save_edges(graph.edges(), graph.n_users(), graph.n_items(), graph.max_rating(), out);
}

BipartiteGraph load_graph(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "mccf-graph" || version != 1)
    fail("not a mccf-graph snapshot");
  std::int32_t nu = 0, ni = 0, r = 0;
  if (!(in >> nu >> ni >> r)) fail("truncated graph header");
  std::vector<RatingEdge> edges;
  std::string line;
  std::getline(in, line);  // finish the header line
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    RatingEdge e;
    if (!(ls >> e.user >> e.item >> e.rating)) fail_line(line_no, "malformed edge");
    std::int64_t ts;
    if (ls >> ts) e.timestamp = ts;
    edges.push_back(e);
  }
  return BipartiteGraph::build(nu, ni, r, std::move(edges));
}

void save_id_map(const IdMap& ids, std::ostream& out) {
  out << "mccf-idmap 1\n" << ids.user_raw.size() << ' ' << ids.item_raw.size() << '\n';
  for (std::size_t u = 0; u < ids.user_raw.size(); ++u)
    out << "u " << u << ' ' << ids.user_raw[u] << '\n';
  for (std::size_t i = 0; i < ids.item_raw.size(); ++i)
    out << "i " << i << ' ' << ids.item_raw[i] << '\n';
}

IdMap load_id_map(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "mccf-idmap" || version != 1)
    fail("not a mccf-idmap file");
  std::size_t nu = 0, ni = 0;
  if (!(in >> nu >> ni)) fail("truncated idmap header");
  IdMap ids;
  ids.user_raw.resize(nu);
  ids.item_raw.resize(ni);
  for (std::size_t k = 0; k < nu + ni; ++k) {
    std::string kind, raw;
    std::size_t idx;
    if (!(in >> kind >> idx >> raw)) fail("truncated idmap entry");
    if (kind == "u" && idx < nu) {
      ids.user_raw[idx] = raw;
    } else if (kind == "i" && idx < ni) {
      ids.item_raw[idx] = raw;
    } else {
      fail("malformed idmap entry");
    }
  }
  for (std::size_t u = 0; u < nu; ++u) ids.user_index.emplace(ids.user_raw[u], std::int32_t(u));
  for (std::size_t i = 0; i < ni; ++i) ids.item_index.emplace(ids.item_raw[i], std::int32_t(i));
  return ids;
}

}  // namespace mccf
