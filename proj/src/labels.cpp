#include <nci/labels.hpp>

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>

namespace nci {

namespace {

using Edge = std::pair<int, int>;

std::set<Edge> expected_edges(GraphKind g) {
  switch (g) {
    case GraphKind::G1: return {{0, 1}};
    case GraphKind::G2: return {{1, 0}};
    case GraphKind::G3: return {};
    case GraphKind::G4: return {{2, 0}, {2, 1}, {0, 1}};
    case GraphKind::G5: return {{2, 0}, {2, 1}, {1, 0}};
    case GraphKind::G6: return {{2, 0}, {2, 1}};
  }
  return {};
}

int expected_nodes(GraphKind g) { return is_confounded(g) ? 3 : 2; }

int sample_categorical(const Eigen::Ref<const RowVector>& p, Rng& rng) {
  const double u = rng.uniform() * p.sum();
  double cum = 0.0;
  for (Index k = 0; k < p.size(); ++k) {
    cum += p(k);
    if (u < cum) return static_cast<int>(k);
  }
  for (Index k = p.size() - 1; k > 0; --k)
    if (p(k) > 0.0) return static_cast<int>(k);
  return 0;
}

RowVector concentrated(int arity, int target, double peak) {
  RowVector r = RowVector::Constant(arity, (1.0 - peak) / static_cast<double>(arity - 1));
  r(target) = peak;
  return r;
}

RowVector root_marginal(std::initializer_list<double> p) {
  RowVector r(static_cast<Index>(p.size()));
  Index k = 0;
  for (double v : p) r(k++) = v;
  return r;
}

}  // namespace

void DiscreteBayesNet::validate() const {
  if (size() != expected_nodes(graph)) throw ConfigError("DiscreteBayesNet: wrong node count for " +
                                                         std::string(graph_name(graph)));
  std::set<Edge> edges;
  for (int v = 0; v < size(); ++v) {
    const auto& n = nodes[static_cast<std::size_t>(v)];
    if (n.arity < 2) throw ConfigError("DiscreteBayesNet: arity must be >= 2");
    Index rows = 1;
    for (int p : n.parents) {
      if (p < 0 || p >= size() || p == v) throw ConfigError("DiscreteBayesNet: bad parent index");
      rows *= nodes[static_cast<std::size_t>(p)].arity;
      edges.insert({p, v});
    }
    if (n.cpt.rows() != rows || n.cpt.cols() != n.arity) throw ConfigError("DiscreteBayesNet: CPT shape mismatch");
    if ((n.cpt.array() < 0.0).any() || !n.cpt.allFinite()) throw ConfigError("DiscreteBayesNet: negative CPT entry");
    for (Index r = 0; r < rows; ++r) {
      if (std::abs(n.cpt.row(r).sum() - 1.0) > 1e-12) throw ConfigError("DiscreteBayesNet: CPT row does not sum to 1");
    }
  }
  if (edges != expected_edges(graph)) {
    throw ConfigError("DiscreteBayesNet: edges do not match " + std::string(graph_name(graph)));
  }
  (void)topological_order();
}

Index DiscreteBayesNet::cpt_row(int node, const std::vector<int>& state) const {
  Index row = 0;
  for (int p : nodes[static_cast<std::size_t>(node)].parents) {
    row = row * nodes[static_cast<std::size_t>(p)].arity + state[static_cast<std::size_t>(p)];
  }
  return row;
}

std::vector<int> DiscreteBayesNet::topological_order() const {
  std::vector<int> order;
  std::vector<bool> placed(nodes.size(), false);
  while (order.size() < nodes.size()) {
    bool progress = false;
    for (int v = 0; v < size(); ++v) {
      if (placed[static_cast<std::size_t>(v)]) continue;
      const auto& ps = nodes[static_cast<std::size_t>(v)].parents;
      if (std::all_of(ps.begin(), ps.end(), [&](int p) { return placed[static_cast<std::size_t>(p)]; })) {
        placed[static_cast<std::size_t>(v)] = true;
        order.push_back(v);
        progress = true;
      }
    }
    if (!progress) throw ConfigError("DiscreteBayesNet: graph has a cycle");
  }
  return order;
}

DiscreteBayesNet default_cpts(GraphKind graph, Strength strength) {
  constexpr int k = 4;
  const double peak = strength == Strength::High ? 0.88 : 0.4;
  const RowVector skewed = root_marginal({0.4, 0.3, 0.2, 0.1});
  const RowVector reversed = root_marginal({0.1, 0.2, 0.3, 0.4});

  // Effect of a single parent: states {0,1} -> 0 and {2,3} -> 1.
  auto single = [&](int parent) {
    BayesNode n{k, {parent}, Matrix(k, k)};
    for (int c = 0; c < k; ++c) n.cpt.row(c) = concentrated(k, c / 2, peak);
    return n;
  };
  // Effect of (cause, Z): the high halves of both parents.
  auto joint_parent = [&](int cause) {
    BayesNode n{k, {std::min(cause, 2), std::max(cause, 2)}, Matrix(k * k, k)};
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) n.cpt.row(a * k + b) = concentrated(k, a / 2 + 2 * (b / 2), peak);
    return n;
  };
  auto root = [&](const RowVector& p) { return BayesNode{k, {}, Matrix(p)}; };

  DiscreteBayesNet net;
  net.graph = graph;
  switch (graph) {
    case GraphKind::G1:
      net.nodes = {root(skewed), single(0)};
      break;
    case GraphKind::G2:
      net.nodes = {single(1), root(skewed)};
      break;
    case GraphKind::G3:
      net.nodes = {root(skewed), root(reversed)};
      break;
    case GraphKind::G4:
      net.nodes = {single(2), joint_parent(0), root(skewed)};
      break;
    case GraphKind::G5:
      net.nodes = {joint_parent(1), single(2), root(skewed)};
      break;
    case GraphKind::G6: {
      // X reads the low bit of Z and Y the high bit; with uniform Z the two
      // parts are independent.
      BayesNode x{k, {2}, Matrix(k, k)};
      BayesNode y{k, {2}, Matrix(k, k)};
      for (int z = 0; z < k; ++z) {
        x.cpt.row(z) = concentrated(k, z % 2, peak);
        y.cpt.row(z) = concentrated(k, z / 2, peak);
      }
      net.nodes = {x, y, root(RowVector::Constant(k, 0.25))};
      break;
    }
  }
  net.validate();
  return net;
}

std::vector<LabelPair> gibbs_sample(const DiscreteBayesNet& net, std::size_t count, Rng& rng, std::size_t burnin,
                                    std::size_t thin) {
  net.validate();
  if (count == 0) throw UsageError("gibbs_sample: count must be >= 1");
  if (thin == 0) throw UsageError("gibbs_sample: thin must be >= 1");
  const int n = net.size();
  std::vector<std::vector<int>> children(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v)
    for (int p : net.nodes[static_cast<std::size_t>(v)].parents) children[static_cast<std::size_t>(p)].push_back(v);

  std::vector<int> state(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) {
    state[static_cast<std::size_t>(v)] = static_cast<int>(rng.integer(0, net.nodes[static_cast<std::size_t>(v)].arity - 1));
  }
  std::vector<LabelPair> out;
  out.reserve(count);
  RowVector prob;
  for (std::size_t sweep = 0; out.size() < count; ++sweep) {
    for (int v = 0; v < n; ++v) {
      const auto& node = net.nodes[static_cast<std::size_t>(v)];
      prob = node.cpt.row(net.cpt_row(v, state));
      for (int c : children[static_cast<std::size_t>(v)]) {
        const auto& child = net.nodes[static_cast<std::size_t>(c)];
        for (int s = 0; s < node.arity; ++s) {
          state[static_cast<std::size_t>(v)] = s;
          prob(s) *= child.cpt(net.cpt_row(c, state), state[static_cast<std::size_t>(c)]);
        }
      }
      state[static_cast<std::size_t>(v)] = sample_categorical(prob, rng);
    }
    if (sweep >= burnin && (sweep - burnin) % thin == 0) out.emplace_back(state[0], state[1]);
  }
  return out;
}

std::vector<LabelPair> ancestral_sample(const DiscreteBayesNet& net, std::size_t count, Rng& rng) {
  net.validate();
  const auto order = net.topological_order();
  std::vector<int> state(net.nodes.size(), 0);
  std::vector<LabelPair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (int v : order) {
      state[static_cast<std::size_t>(v)] =
          sample_categorical(net.nodes[static_cast<std::size_t>(v)].cpt.row(net.cpt_row(v, state)), rng);
    }
    out.emplace_back(state[0], state[1]);
  }
  return out;
}

Matrix exact_joint(const DiscreteBayesNet& net) {
  net.validate();
  const int n = net.size();
  Matrix joint = Matrix::Zero(net.nodes[0].arity, net.nodes[1].arity);
  std::vector<int> state(static_cast<std::size_t>(n), 0);
  for (;;) {
    double p = 1.0;
    for (int v = 0; v < n; ++v) p *= net.nodes[static_cast<std::size_t>(v)].cpt(net.cpt_row(v, state), state[static_cast<std::size_t>(v)]);
    joint(state[0], state[1]) += p;
    int v = n - 1;
    while (v >= 0 && ++state[static_cast<std::size_t>(v)] == net.nodes[static_cast<std::size_t>(v)].arity) {
      state[static_cast<std::size_t>(v)] = 0;
      --v;
    }
    if (v < 0) break;
  }
  return joint;
}

Matrix empirical_joint(const std::vector<LabelPair>& pairs, int arity_x, int arity_y) {
  if (pairs.empty()) throw UsageError("empirical_joint: no pairs");
  Matrix t = Matrix::Zero(arity_x, arity_y);
  for (const auto& [x, y] : pairs) {
    if (x < 0 || x >= arity_x || y < 0 || y >= arity_y) throw UsageError("empirical_joint: state out of range");
    t(x, y) += 1.0;
  }
  return t / static_cast<double>(pairs.size());
}

double total_variation(const Matrix& p, const Matrix& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) throw DimensionError("total_variation: shape mismatch");
  return 0.5 * (p - q).cwiseAbs().sum();
}

double entropy_bits(const Eigen::Ref<const Eigen::ArrayXd>& p) {
  double h = 0.0;
  for (Index i = 0; i < p.size(); ++i)
    if (p(i) > 0.0) h -= p(i) * std::log2(p(i));
  return h;
}

std::vector<double> greedy_exogenous(const std::vector<Vector>& conditionals) {
  std::vector<Vector> rest = conditionals;
  std::vector<double> masses;
  if (rest.empty()) return masses;
  for (;;) {
    double e = std::numeric_limits<double>::infinity();
    for (const auto& r : rest) e = std::min(e, r.maxCoeff());
    if (!(e > 1e-15)) break;
    masses.push_back(e);
    for (auto& r : rest) {
      Index j = 0;
      r.maxCoeff(&j);
      r(j) = std::max(0.0, r(j) - e);
    }
  }
  return masses;
}

double entropic_direction_score(const Matrix& joint, Direction direction) {
  const Matrix table = direction == Direction::XtoY ? joint : Matrix(joint.transpose());
  std::vector<Vector> conditionals;
  for (Index c = 0; c < table.rows(); ++c) {
    const double mass = table.row(c).sum();
    if (mass > 1e-15) conditionals.emplace_back(table.row(c).transpose() / mass);
  }
  const auto masses = greedy_exogenous(conditionals);
  const Eigen::Map<const Eigen::ArrayXd> e(masses.data(), static_cast<Index>(masses.size()));
  return entropy_bits(e);
}

StrengthReport causal_strength(const Matrix& joint) {
  if ((joint.array() < 0.0).any() || std::abs(joint.sum() - 1.0) > 1e-9) {
    throw UsageError("causal_strength: joint must be a probability table");
  }
  StrengthReport r;
  r.h_exo_xy = entropic_direction_score(joint, Direction::XtoY);
  r.h_exo_yx = entropic_direction_score(joint, Direction::YtoX);
  const double hy = entropy_bits(joint.colwise().sum().transpose().array());
  const double hx = entropy_bits(joint.rowwise().sum().array());
  const double ratio_xy = hy > 1e-12 ? r.h_exo_xy / hy : 0.0;
  const double ratio_yx = hx > 1e-12 ? r.h_exo_yx / hx : 0.0;
  const double gap = std::abs(ratio_yx - ratio_xy);
  r.strength = std::clamp(gap, 0.0, 1.0);
  if (gap >= 0.05) r.direction = ratio_xy < ratio_yx ? 1 : 2;
  return r;
}

// --- files ----------------------------------------------------------------------

DiscreteBayesNet read_net(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("read_net: cannot open " + path.string());
  DiscreteBayesNet net;
  try {
    const auto j = nlohmann::json::parse(in);
    net.graph = graph_from_name(j.at("graph").get<std::string>());
    const auto arities = j.at("arities").get<std::vector<int>>();
    net.nodes.resize(arities.size());
    for (std::size_t v = 0; v < arities.size(); ++v) net.nodes[v].arity = arities[v];
    for (const auto& e : j.at("edges")) {
      const int from = e.at(0).get<int>();
      const int to = e.at(1).get<int>();
      if (to < 0 || to >= static_cast<int>(net.nodes.size())) throw ConfigError("read_net: edge out of range");
      net.nodes[static_cast<std::size_t>(to)].parents.push_back(from);
    }
    for (auto& n : net.nodes) std::sort(n.parents.begin(), n.parents.end());
    const auto& cpts = j.at("cpts");
    if (cpts.size() != net.nodes.size()) throw ConfigError("read_net: one CPT per node required");
    for (std::size_t v = 0; v < net.nodes.size(); ++v) {
      const auto rows = cpts[v].get<std::vector<std::vector<double>>>();
      Matrix m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (static_cast<Index>(rows[r].size()) != m.cols()) throw ConfigError("read_net: ragged CPT");
        for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
      }
      net.nodes[v].cpt = std::move(m);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("read_net: ") + e.what());
  }
  net.validate();
  return net;
}

void write_net(const std::filesystem::path& path, const DiscreteBayesNet& net) {
  nlohmann::json j;
  j["graph"] = std::string(graph_name(net.graph));
  auto arities = nlohmann::json::array();
  auto edges = nlohmann::json::array();
  auto cpts = nlohmann::json::array();
  for (int v = 0; v < net.size(); ++v) {
    const auto& n = net.nodes[static_cast<std::size_t>(v)];
    arities.push_back(n.arity);
    for (int p : n.parents) edges.push_back({p, v});
    auto rows = nlohmann::json::array();
    for (Index r = 0; r < n.cpt.rows(); ++r) {
      std::vector<double> row;
      for (Index c = 0; c < n.cpt.cols(); ++c) row.push_back(n.cpt(r, c));
      rows.push_back(row);
    }
    cpts.push_back(std::move(rows));
  }
  j["arities"] = std::move(arities);
  j["edges"] = std::move(edges);
  j["cpts"] = std::move(cpts);
  std::ofstream out(path);
  if (!out) throw ConfigError("write_net: cannot open " + path.string());
  out << j.dump(2) << '\n';
}

void write_label_csv(const std::filesystem::path& path, const std::vector<LabelPair>& pairs) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_label_csv: cannot open " + path.string());
  out << "a_x,a_y\n";
  for (const auto& [x, y] : pairs) out << x << ',' << y << '\n';
}

}  // namespace nci
