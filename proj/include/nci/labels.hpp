#pragma once

// Discrete attribute labels with a known causal graph: small Bayesian
// networks, a Gibbs sampler, and an entropic estimate of causal strength.

#include <nci/rng.hpp>
#include <nci/synth.hpp>

#include <filesystem>
#include <utility>
#include <vector>

namespace nci {

/// Node 0 is X, node 1 is Y, node 2 (when present) is the confounder Z.
struct BayesNode {
  int arity = 0;
  std::vector<int> parents;
  /// One row per parent configuration (mixed radix, first parent most
  /// significant); columns are this node's states.
  Matrix cpt;
};

struct DiscreteBayesNet {
  GraphKind graph = GraphKind::G3;
  std::vector<BayesNode> nodes;

  /// Throws ConfigError on bad rows, shapes, cycles or an edge set that does
  /// not match `graph`.
  void validate() const;
  int size() const { return static_cast<int>(nodes.size()); }
  /// CPT row index of `node` for a full assignment.
  Index cpt_row(int node, const std::vector<int>& state) const;
  /// Nodes in an order where parents precede children.
  std::vector<int> topological_order() const;
};

enum class Strength { High, Low };

/// Four-state presets. High: P(effect | cause) puts 0.88 on one state of a
/// many-to-one map; low: at most 0.4 on any state. G3 has independent
/// marginals.
DiscreteBayesNet default_cpts(GraphKind graph, Strength strength);

using LabelPair = std::pair<int, int>;

/// Gibbs sweeps over all nodes; keeps every `thin`-th sweep after `burnin`.
/// Returns the (X, Y) states of the kept sweeps.
std::vector<LabelPair> gibbs_sample(const DiscreteBayesNet& net, std::size_t count, Rng& rng,
                                    std::size_t burnin = 1000, std::size_t thin = 5);

/// Exact ancestral sampling, the reference for the Gibbs chain.
std::vector<LabelPair> ancestral_sample(const DiscreteBayesNet& net, std::size_t count, Rng& rng);

/// Exact P(X, Y) by enumerating every joint assignment.
Matrix exact_joint(const DiscreteBayesNet& net);

/// Normalized |X| x |Y| count table. Throws UsageError on empty input.
Matrix empirical_joint(const std::vector<LabelPair>& pairs, int arity_x, int arity_y);

double total_variation(const Matrix& p, const Matrix& q);
double entropy_bits(const Eigen::Ref<const Eigen::ArrayXd>& p);

enum class Direction { XtoY, YtoX };

/// Greedy minimum-entropy exogenous variable that makes every conditional
/// P(effect | cause = c) a deterministic function of (c, E). Returns H(E) in
/// bits. Cause states with zero mass are ignored.
double entropic_direction_score(const Matrix& joint, Direction direction);

/// The greedy exogenous distribution itself (masses in extraction order).
std::vector<double> greedy_exogenous(const std::vector<Vector>& conditionals);

struct StrengthReport {
  double h_exo_xy = 0.0;  // bits
  double h_exo_yx = 0.0;
  int direction = 0;      // 1: X -> Y, 2: Y -> X, 0: undecided
  double strength = 0.0;  // [0, 1]
};

/// Each direction's exogenous entropy is divided by the entropy of its effect
/// marginal; strength is the absolute difference of the two ratios. The
/// direction is the smaller ratio when the difference is at least 0.05.
StrengthReport causal_strength(const Matrix& joint);

// --- files ----------------------------------------------------------------------

/// JSON {graph, arities, edges: [[from, to]], cpts: [[[row]...]...]}.
DiscreteBayesNet read_net(const std::filesystem::path& path);
void write_net(const std::filesystem::path& path, const DiscreteBayesNet& net);
/// CSV with header "a_x,a_y".
void write_label_csv(const std::filesystem::path& path, const std::vector<LabelPair>& pairs);

}  // namespace nci
