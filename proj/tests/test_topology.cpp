#include <catch2/catch_amalgamated.hpp>

#include "dac/rng.hpp"
#include "dac/serialize.hpp"
#include "dac/topology.hpp"

#include "oracles.hpp"

using namespace dac;

TEST_CASE("metropolis weights on the 2-node complete graph average exactly") {
  WeightMatrix w = WeightMatrix::metropolis(CommGraph::complete(2));
  REQUIRE(w.matrix()(0, 0) == Catch::Approx(0.5));
  REQUIRE(w.matrix()(0, 1) == Catch::Approx(0.5));
  REQUIRE(w.matrix()(1, 0) == Catch::Approx(0.5));
  REQUIRE(w.nu() == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("single node weight matrix is [1] with nu = 0") {
  WeightMatrix w = WeightMatrix::metropolis(CommGraph::complete(1));
  REQUIRE(w.matrix()(0, 0) == 1.0);
  REQUIRE(w.nu() == 0.0);
}

TEST_CASE("metropolis on a 5-ring: stochastic rows, nu matches a full SVD") {
  WeightMatrix w = WeightMatrix::metropolis(CommGraph::ring(5));
  for (int i = 0; i < 5; ++i) {
    REQUIRE(w.matrix().row(i).sum() == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(w.matrix().col(i).sum() == Catch::Approx(1.0).margin(1e-12));
  }
  REQUIRE(w.nu() < 1.0);
  REQUIRE(w.nu() == Catch::Approx(testoracle::second_singular_svd(w.matrix())).margin(1e-9));
}

TEST_CASE("disconnected graphs are rejected") {
  CommGraph g = CommGraph::from_edges(4, {{0, 1}, {2, 3}});
  REQUIRE_THROWS_AS(WeightMatrix::metropolis(g), TopologyError);
}

TEST_CASE("weight matrix validator rejects non-doubly-stochastic input") {
  Mat bad(2, 2);
  bad << 0.9, 0.1, 0.3, 0.7;  // columns do not sum to 1
  REQUIRE_THROWS_AS(WeightMatrix(bad), TopologyError);
  Mat neg(2, 2);
  neg << 1.2, -0.2, -0.2, 1.2;
  REQUIRE_THROWS_AS(WeightMatrix(neg), TopologyError);
  Mat id = Mat::Identity(3, 3);  // doubly stochastic but nu = 1
  REQUIRE_THROWS_AS(WeightMatrix(id), TopologyError);
}

TEST_CASE("consensus round is a fixed point on identical inputs") {
  WeightMatrix w = WeightMatrix::metropolis(CommGraph::ring(4));
  Mat x(4, 3);
  for (int i = 0; i < 4; ++i) x.row(i) << 1.5, -2.0, 0.25;
  Mat y = consensus_round(x, w);
  REQUIRE((y - x).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("full-averaging matrix reaches the exact mean in one round") {
  WeightMatrix w = WeightMatrix::metropolis(CommGraph::complete(4));
  Rng rng(3);
  Mat x(4, 2);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 2; ++j) x(i, j) = rng.uniform(-1, 1);
  Mat y = consensus_round(x, w);
  for (int j = 0; j < 2; ++j) {
    double mean = x.col(j).mean();
    for (int i = 0; i < 4; ++i) REQUIRE(y(i, j) == Catch::Approx(mean).margin(1e-15));
  }
}

TEST_CASE("consensus preserves the mean and contracts disagreement geometrically") {
  WeightMatrix w = WeightMatrix::metropolis(CommGraph::ring(5));
  Rng rng(11);
  Mat x(5, 4);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) x(i, j) = rng.uniform(-2, 2);
  const Vec mean0 = x.colwise().mean();
  const double d0 = disagreement_norm(x);
  Mat ref = x;
  for (int k = 1; k <= 12; ++k) {
    x = consensus_round(x, w);
    ref = testoracle::matrix_power_apply(w.matrix(), ref, 1);
    REQUIRE((x - ref).cwiseAbs().maxCoeff() < 1e-12);  // matches the matrix power
    Vec mean = x.colwise().mean();
    REQUIRE((mean - mean0).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE(disagreement_norm(x) <= std::pow(w.nu(), k) * d0 + 1e-12);
  }
}

TEST_CASE("disagreement norm: zero on agreement, sqrt(2)|v| on (v,-v), shift invariant") {
  Mat same(3, 2);
  for (int i = 0; i < 3; ++i) same.row(i) << 4.0, -1.0;
  REQUIRE(disagreement_norm(same) == 0.0);

  Vec v(3);
  v << 1.0, 2.0, -0.5;
  Mat pm(2, 3);
  pm.row(0) = v.transpose();
  pm.row(1) = -v.transpose();
  REQUIRE(disagreement_norm(pm) == Catch::Approx(std::sqrt(2.0) * v.norm()).margin(1e-12));

  Rng rng(5);
  Mat x(4, 3);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) x(i, j) = rng.uniform(-1, 1);
  Mat shifted = x;
  for (int i = 0; i < 4; ++i) shifted.row(i).array() += 7.25;
  REQUIRE(disagreement_norm(shifted) == Catch::Approx(disagreement_norm(x)).margin(1e-12));
}

TEST_CASE("scalar gossip: zero rounds is identity, full averaging is exact") {
  WeightMatrix ring = WeightMatrix::metropolis(CommGraph::ring(5));
  std::vector<double> vals{1.0, -2.0, 0.5, 3.0, -1.5};
  REQUIRE(scalar_gossip(vals, ring, 0) == vals);

  WeightMatrix full = WeightMatrix::metropolis(CommGraph::complete(4));
  std::vector<double> v4{1.0, 2.0, 3.0, 4.0};
  auto out = scalar_gossip(v4, full, 1);
  for (double x : out) REQUIRE(x == Catch::Approx(2.5).margin(1e-15));
}

TEST_CASE("scalar gossip contracts disagreement by nu^2 over two rounds") {
  WeightMatrix w = WeightMatrix::metropolis(CommGraph::ring(5));
  Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> vals(5);
    for (auto& v : vals) v = rng.uniform(-1, 1) * (1.0 + 0.5 * rng.normal());
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= 5.0;
    double pre = 0.0;
    for (double v : vals) pre += dac::sq(v - mean);
    auto out = scalar_gossip(vals, w, 2);
    double post = 0.0;
    for (double v : out) post += dac::sq(v - mean);
    REQUIRE(post <= std::pow(w.nu(), 4) * pre + 1e-13);
  }
}

// Drift-bounded consensus: per-round perturbations of norm at most b keep the
// disagreement within the geometric envelope plus 4 sqrt(N) b sum nu^((k-t)/Kc - 1).
TEST_CASE("consensus with bounded per-round drift stays within the envelope") {
  const int n = 5, K_c = 3, T = 60;
  WeightMatrix w = WeightMatrix::metropolis(CommGraph::ring(n));
  const double nu = w.nu();
  const double b = 0.05;
  Rng rng(23);
  Mat x(n, 4);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 4; ++j) x(i, j) = rng.uniform(-1, 1);
  const double x0_norm = x.norm();
  for (int k = 1; k <= T; ++k) {
    if ((k - 1) % K_c == 0) x = consensus_round(x, w);
    for (int i = 0; i < n; ++i) {
      Vec pert(4);
      for (int j = 0; j < 4; ++j) pert[j] = rng.uniform(-1, 1);
      pert *= b / pert.norm() * rng.uniform();
      x.row(i) += pert.transpose();
    }
    double envelope = std::pow(nu, double(k) / K_c - 1.0) * x0_norm;
    for (int t = 0; t < k; ++t)
      envelope += 4.0 * std::sqrt(double(n)) * b * std::pow(nu, double(k - t) / K_c - 1.0);
    REQUIRE(disagreement_norm(x) <= envelope + 1e-12);
  }
}

TEST_CASE("weight matrix JSON round trip") {
  WeightMatrix w = WeightMatrix::metropolis(CommGraph::star(5));
  WeightMatrix back = weights_from_json(weights_to_json(w));
  REQUIRE((back.matrix() - w.matrix()).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(back.nu() == Catch::Approx(w.nu()).margin(1e-12));
}
