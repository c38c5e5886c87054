#include "doctest.h"
#include "pulse/error.hpp"
#include "pulse/features.hpp"
#include "pulse/rng.hpp"

using namespace pulse;

namespace {
Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}
}  // namespace

TEST_CASE("synthetic interaction map") {
  const FeatureMap m = FeatureMap::synthetic_interaction();
  CHECK(m.output_dim() == 4);
  CHECK(m.arm_count() == 2);
  const Vector s = vec({0.2});
  const Vector y = m.assemble(s, vec({0.5}));
  CHECK(m.phi(y, s, 1) == vec({1.0, 0.2, 0.5, 0.2}));
  CHECK(m.phi(y, s, 0) == vec({1.0, 0.2, 0.5, -0.2}));
  CHECK(m.affine_in_missing());
}

TEST_CASE("lower-bound map") {
  const FeatureMap m = FeatureMap::lower_bound_two_arm(2, 3);
  CHECK(m.output_dim() == 6);
  const Vector y = vec({0.3, -0.4, 0.1, 0.2, 0.9, 1.5});
  const Vector s = y.head(5);
  CHECK(m.phi(y, s, 0) == vec({-0.3, 0.4, 0, 0, 0, 0}));
  CHECK(m.phi(y, s, 1) == y);
}

TEST_CASE("dimension mismatch and arm range") {
  const FeatureMap m = FeatureMap::synthetic_interaction();
  CHECK_THROWS_AS(m.phi(vec({1, 2, 3}), vec({1}), 0), InputError);
  CHECK_THROWS_AS(m.phi(vec({1, 2}), vec({1, 2}), 0), InputError);
  CHECK_THROWS_AS(m.phi(vec({1, 2}), vec({1}), 2), InputError);
  CHECK_THROWS_AS(m.assemble(vec({1, 2}), vec({1})), InputError);
}

TEST_CASE("arm feature matrix") {
  const FeatureMap m = FeatureMap::synthetic_interaction();
  const Matrix z = m.arm_feature_matrix(vec({0, 0}), vec({0}));
  CHECK(z.rows() == 2);
  CHECK(z.row(0).transpose() == vec({1, 0, 0, 0}));
  CHECK(z.row(1).transpose() == vec({1, 0, 0, 0}));

  const FeatureMap single = FeatureMap::identity(2, 1, 1);
  const Vector y = vec({0.1, 0.2, 0.3});
  const Matrix one = single.arm_feature_matrix(y, y.head(2));
  CHECK(one.rows() == 1);
  CHECK(one.row(0).transpose() == single.phi(y, y.head(2), 0));

  Rng rng(5);
  const FeatureMap lb = FeatureMap::lower_bound_two_arm(3, 2);
  for (int rep = 0; rep < 100; ++rep) {
    Vector yy(6);
    for (auto& v : yy) v = rng.normal();
    const Vector ss = yy.head(5);
    const Matrix mm = lb.arm_feature_matrix(yy, ss);
    for (std::size_t a = 0; a < 2; ++a) CHECK(mm.row(static_cast<Eigen::Index>(a)).transpose() == lb.phi(yy, ss, a));
  }
}

TEST_CASE("phi is pure and the arms differ only in the interaction term") {
  const FeatureMap m = FeatureMap::synthetic_interaction();
  const Vector theta = vec({0.65, 1.52, -0.23, -0.23});
  Rng rng(6);
  for (int rep = 0; rep < 200; ++rep) {
    const Vector s = vec({rng.normal()});
    const Vector y = m.assemble(s, vec({rng.normal()}));
    CHECK(m.phi(y, s, 1) == m.phi(y, s, 1));
    const double diff = theta.dot(m.phi(y, s, 1)) - theta.dot(m.phi(y, s, 0));
    CHECK(diff == doctest::Approx(2.0 * theta(3) * s(0)).epsilon(1e-14));
  }
}

TEST_CASE("custom maps and registry") {
  FeatureRegistry reg;
  reg.add(FeatureMap::custom("square", 1, 1, 2, 2, [](const Vector& y, const Vector&, std::size_t a) {
    return vec({y(0) * y(0), a == 0 ? y(1) : -y(1)});
  }));
  CHECK(reg.contains("square"));
  const FeatureMap& m = reg.get("square");
  CHECK(m.phi(vec({3, 1}), vec({3}), 1) == vec({9, -1}));
  CHECK_FALSE(m.affine_in_missing());
  CHECK_THROWS(reg.get("missing"));
  CHECK(feature_kind_from_string("synthetic_interaction") == FeatureKind::SyntheticInteraction);
  CHECK_THROWS_AS(feature_kind_from_string("nope"), InputError);
}

TEST_CASE("feature norm monitor") {
  FeatureNormMonitor mon;
  mon.record(vec({1, 0.5}), 2.0);
  mon.record(vec({1.5, 0}), 2.0);
  mon.record(vec({3, 0}), 2.0);
  CHECK(mon.evaluated == 3);
  CHECK(mon.sup_violations == 2);
  CHECK(mon.l2_violations == 1);
  CHECK(mon.max_sup_norm == 3.0);
}
