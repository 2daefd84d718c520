#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dac/common.hpp"

namespace dac {

// Undirected communication graph. Self-loops are not stored; node self-weights
// are implicit in the weight matrix built from the graph.
struct CommGraph {
  int n_nodes = 0;
  std::vector<std::pair<int, int>> edges;  // i < j

  static CommGraph ring(int n) {
    CommGraph g;
    g.n_nodes = n;
    if (n == 2) {
      g.edges.push_back({0, 1});
    } else if (n > 2) {
      for (int i = 0; i < n; ++i) g.add_edge(i, (i + 1) % n);
    }
    return g;
  }

  static CommGraph complete(int n) {
    CommGraph g;
    g.n_nodes = n;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) g.edges.push_back({i, j});
    return g;
  }

  static CommGraph star(int n) {
    CommGraph g;
    g.n_nodes = n;
    for (int i = 1; i < n; ++i) g.edges.push_back({0, i});
    return g;
  }

  static CommGraph from_edges(int n, const std::vector<std::pair<int, int>>& es) {
    CommGraph g;
    g.n_nodes = n;
    for (auto [a, b] : es) g.add_edge(a, b);
    return g;
  }

  void add_edge(int a, int b) {
    if (a == b) return;  // self-weights are implicit
    if (a < 0 || b < 0 || a >= n_nodes || b >= n_nodes)
      throw TopologyError("edge endpoint out of range");
    auto e = std::minmax(a, b);
    std::pair<int, int> p{e.first, e.second};
    if (std::find(edges.begin(), edges.end(), p) == edges.end()) edges.push_back(p);
  }

  std::vector<int> degrees() const {
    std::vector<int> d(std::size_t(n_nodes), 0);
    for (auto [a, b] : edges) {
      d[std::size_t(a)]++;
      d[std::size_t(b)]++;
    }
    return d;
  }

  bool connected() const {
    if (n_nodes <= 0) return false;
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n_nodes));
    for (auto [a, b] : edges) {
      adj[std::size_t(a)].push_back(b);
      adj[std::size_t(b)].push_back(a);
    }
    std::vector<char> seen(std::size_t(n_nodes), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (int w : adj[std::size_t(v)])
        if (!seen[std::size_t(w)]) {
          seen[std::size_t(w)] = 1;
          count++;
          stack.push_back(w);
        }
    }
    return count == n_nodes;
  }
};

namespace detail {

// Largest singular value of W restricted to the mean-zero subspace, by power
// iteration on W^T W with deflation of the all-ones direction each step.
inline double second_singular_value(const Mat& w, double tol = 1e-10,
                                    long max_iter = 1000000) {
  const long n = w.rows();
  if (n <= 1) return 0.0;
  Vec v(n);
  for (long i = 0; i < n; ++i) v[i] = std::cos(0.7 * double(i + 1)) + 1e-3 * double(i);
  auto deflate = [n](Vec& x) { x.array() -= x.mean(); };
  deflate(v);
  if (v.norm() == 0.0) v[0] = 1.0, v[n - 1] = -1.0;
  v /= v.norm();
  double lambda = 0.0;
  for (long it = 0; it < max_iter; ++it) {
    Vec t = w.transpose() * (w * v);
    deflate(t);
    double norm = t.norm();
    if (norm == 0.0) return 0.0;  // W collapses the mean-zero subspace
    double next = v.dot(t);
    v = t / norm;
    if (std::abs(next - lambda) <= tol * std::max(1.0, std::abs(next))) {
      return std::sqrt(std::max(0.0, next));
    }
    lambda = next;
  }
  throw TopologyError("singular-value iteration did not converge");
}

}  // namespace detail

// Doubly stochastic communication matrix with cached second largest singular
// value nu. Construction always validates: rows/columns sum to 1 (1e-10),
// entries nonnegative, nu < 1.
class WeightMatrix {
 public:
  static WeightMatrix metropolis(const CommGraph& g) {
    if (g.n_nodes < 1) throw TopologyError("empty graph");
    if (!g.connected())
      throw TopologyError("graph is disconnected; consensus cannot contract (nu = 1)");
    const int n = g.n_nodes;
    Mat w = Mat::Zero(n, n);
    auto deg = g.degrees();
    for (auto [a, b] : g.edges) {
      double x = 1.0 / (1.0 + double(std::max(deg[std::size_t(a)], deg[std::size_t(b)])));
      w(a, b) = x;
      w(b, a) = x;
    }
    for (int i = 0; i < n; ++i) {
      double off = 0.0;
      for (int j = 0; j < n; ++j)
        if (j != i) off += w(i, j);
      w(i, i) = 1.0 - off;
    }
    return WeightMatrix(std::move(w));
  }

  // Validating constructor for user-supplied matrices.
  explicit WeightMatrix(Mat w) : w_(std::move(w)) {
    const long n = w_.rows();
    if (n < 1 || w_.cols() != n) throw TopologyError("weight matrix must be square");
    for (long i = 0; i < n; ++i) {
      double rs = 0.0, cs = 0.0;
      for (long j = 0; j < n; ++j) {
        if (w_(i, j) < -1e-12) throw TopologyError("weight matrix has a negative entry");
        rs += w_(i, j);
        cs += w_(j, i);
      }
      if (std::abs(rs - 1.0) > 1e-10) throw TopologyError("weight matrix row does not sum to 1");
      if (std::abs(cs - 1.0) > 1e-10)
        throw TopologyError("weight matrix column does not sum to 1");
    }
    nu_ = detail::second_singular_value(w_);
    if (nu_ >= 1.0 - 1e-12)
      throw TopologyError("second largest singular value is not below 1");
  }

  const Mat& matrix() const { return w_; }
  double nu() const { return nu_; }
  int n_nodes() const { return int(w_.rows()); }

 private:
  Mat w_;
  double nu_ = 0.0;
};

// One synchronous gossip round: row i of the result is sum_j W(i,j) * row j.
// Accumulation is an explicit left-to-right loop so results do not depend on
// SIMD reduction order.
inline Mat consensus_round(const Mat& values, const WeightMatrix& wm) {
  const Mat& w = wm.matrix();
  if (values.rows() != w.rows())
    throw ContractError("consensus_round: one row of values per node required");
  const long n = values.rows(), d = values.cols();
  Mat out = Mat::Zero(n, d);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) {
      const double wij = w(i, j);
      if (wij == 0.0) continue;
      for (long c = 0; c < d; ++c) out(i, c) += wij * values(j, c);
    }
  return out;
}

inline std::vector<Vec> consensus_round(const std::vector<Vec>& values,
                                        const WeightMatrix& wm) {
  if (values.empty()) throw ContractError("consensus_round: empty input");
  const long d = values.front().size();
  for (const auto& v : values)
    if (v.size() != d) throw ContractError("consensus_round: vector length mismatch");
  Mat stacked(long(values.size()), d);
  for (std::size_t i = 0; i < values.size(); ++i) stacked.row(long(i)) = values[i];
  Mat out = consensus_round(stacked, wm);
  std::vector<Vec> res(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) res[i] = out.row(long(i));
  return res;
}

// Frobenius norm of Q * stack(values) with Q = I - (1/N) 1 1^T: how far the
// per-node vectors are from their mean. Zero iff all nodes agree.
inline double disagreement_norm(const Mat& values) {
  const long n = values.rows(), d = values.cols();
  double total = 0.0;
  for (long c = 0; c < d; ++c) {
    double mean = 0.0;
    for (long i = 0; i < n; ++i) mean += values(i, c);
    mean /= double(n);
    for (long i = 0; i < n; ++i) total += sq(values(i, c) - mean);
  }
  return std::sqrt(total);
}

inline double disagreement_norm(const std::vector<Vec>& values) {
  if (values.empty()) return 0.0;
  Mat stacked(long(values.size()), values.front().size());
  for (std::size_t i = 0; i < values.size(); ++i) stacked.row(long(i)) = values[i];
  return disagreement_norm(stacked);
}

// K_r synchronous gossip rounds over one scalar per node.
inline std::vector<double> scalar_gossip(const std::vector<double>& values,
                                         const WeightMatrix& wm, int rounds) {
  if (rounds < 0) throw ContractError("scalar_gossip: negative round count");
  Mat x(long(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) x(long(i), 0) = values[i];
  for (int r = 0; r < rounds; ++r) x = consensus_round(x, wm);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = x(long(i), 0);
  return out;
}

}  // namespace dac
