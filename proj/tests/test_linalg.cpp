#include <cmath>

#include "doctest.h"
#include "pulse/error.hpp"
#include "pulse/linalg.hpp"
#include "pulse/rng.hpp"

using namespace pulse;

namespace {

Vector random_vector(Rng& rng, std::size_t d, double scale = 1.0) {
  Vector v(static_cast<Eigen::Index>(d));
  for (auto& x : v) x = rng.normal(0.0, scale);
  return v;
}

double dense_log_det(const Matrix& m) { return std::log(m.determinant()); }

}  // namespace

TEST_CASE("fresh ridge state") {
  RidgeState a(2, 1.0);
  CHECK(a.log_det() == doctest::Approx(0.0));
  CHECK(a.gram().isApprox(Matrix::Identity(2, 2)));
  CHECK(a.theta_hat().isZero());
  CHECK(a.update_count() == 0);

  RidgeState b(3, 0.5);
  CHECK(b.log_det() == doctest::Approx(3.0 * std::log(0.5)));
  CHECK(b.log_det() == doctest::Approx(-2.0794).epsilon(1e-4));

  RidgeState c(1, 1e-6);
  CHECK(c.gram()(0, 0) == 1e-6);
  CHECK(c.solve(Vector::Ones(1))(0) == doctest::Approx(1e6));
}

TEST_CASE("ridge state rejects bad parameters") {
  CHECK_THROWS_AS(RidgeState(0, 1.0), ParameterError);
  CHECK_THROWS_AS(RidgeState(2, 0.0), ParameterError);
  CHECK_THROWS_AS(RidgeState(2, -1.0), ParameterError);
}

TEST_CASE("single rank-one update") {
  RidgeState s(2, 1.0);
  s.rank_one_update((Vector(2) << 1.0, 0.0).finished(), 1.0);
  CHECK(s.log_det() == doctest::Approx(std::log(2.0)));
  CHECK(s.theta_hat()(0) == doctest::Approx(0.5));
  CHECK(s.theta_hat()(1) == doctest::Approx(0.0));
  CHECK(s.quadratic_form_inv((Vector(2) << 1.0, 0.0).finished()) == doctest::Approx(0.5));
  CHECK(s.update_count() == 1);
}

TEST_CASE("zero update leaves the estimate untouched") {
  Rng rng(3);
  RidgeState s(3, 1.0);
  for (int i = 0; i < 5; ++i) s.rank_one_update(random_vector(rng, 3), rng.normal());
  const Matrix g = s.gram();
  const double ld = s.log_det();
  const Vector th = s.theta_hat();
  s.rank_one_update(Vector::Zero(3), 5.0);
  CHECK(s.gram() == g);
  CHECK(s.log_det() == ld);
  CHECK(s.theta_hat() == th);
}

TEST_CASE("rank-one update rejects non-finite input") {
  RidgeState s(2, 1.0);
  CHECK_THROWS_AS(s.rank_one_update((Vector(2) << NAN, 0.0).finished(), 1.0), InputError);
  CHECK_THROWS_AS(s.rank_one_update((Vector(2) << 1.0, 0.0).finished(), INFINITY), InputError);
  CHECK_THROWS_AS(s.rank_one_update(Vector::Ones(3), 1.0), InputError);
  CHECK_THROWS_AS(s.quadratic_form_inv((Vector(2) << 0.0, INFINITY).finished()), InputError);
}

TEST_CASE("quadratic form") {
  RidgeState s(2, 1.0);
  CHECK(s.quadratic_form_inv((Vector(2) << 3.0, 4.0).finished()) == doctest::Approx(25.0));
  CHECK(s.quadratic_form_inv(Vector::Zero(2)) == 0.0);
}

TEST_CASE("log det tracks a dense determinant oracle") {
  Rng rng(11);
  RidgeState s(3, 1.0);
  Matrix direct = Matrix::Identity(3, 3);
  for (int i = 0; i < 50; ++i) {
    Vector x = random_vector(rng, 3);
    x.normalize();
    s.rank_one_update(x, rng.normal());
    direct += x * x.transpose();
    CHECK(std::abs(s.log_det() - dense_log_det(direct)) <= 1e-8 * std::max(1.0, std::abs(dense_log_det(direct))));
  }
}

TEST_CASE("quadratic form matches a dense inverse") {
  Rng rng(12);
  for (int rep = 0; rep < 20; ++rep) {
    RidgeState s(5, 0.7);
    for (int i = 0; i < 30; ++i) s.rank_one_update(random_vector(rng, 5), rng.normal());
    const Vector v = random_vector(rng, 5);
    const double direct = v.dot(s.gram().inverse() * v);
    CHECK(s.quadratic_form_inv(v) == doctest::Approx(direct).epsilon(1e-9));
  }
}

TEST_CASE("Sylvester identity, monotonicity and theta residual") {
  Rng rng(13);
  RidgeState s(4, 1.0);
  const Vector probe = random_vector(rng, 4);
  double prev_q = s.quadratic_form_inv(probe);
  for (int i = 0; i < 2000; ++i) {
    const Vector x = random_vector(rng, 4, 0.5);
    const double before = s.log_det();
    const double q = s.quadratic_form_inv(x);
    s.rank_one_update(x, rng.normal());
    CHECK(s.log_det() - before == doctest::Approx(std::log1p(q)).epsilon(1e-9));
    CHECK(s.log_det() >= before);
    const double now_q = s.quadratic_form_inv(probe);
    CHECK(now_q <= prev_q * (1.0 + 1e-12));
    prev_q = now_q;
  }
  const double resid = (s.gram() * s.theta_hat() - s.xr_sum()).norm();
  CHECK(resid <= 1e-9 * (1.0 + s.xr_sum().norm()));
  CHECK(s.refactor_count() >= 3);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(s.factor()(i, i) > 0.0);
}

TEST_CASE("incremental state agrees with a from-scratch solve after 10^4 updates") {
  Rng rng(14);
  RidgeState s(6, 1.0);
  for (int i = 0; i < 10000; ++i) s.rank_one_update(random_vector(rng, 6), rng.normal());
  for (int k = 0; k < 10; ++k) {
    const Vector v = random_vector(rng, 6);
    const double direct = v.dot(s.gram().ldlt().solve(v));
    CHECK(s.quadratic_form_inv(v) == doctest::Approx(direct).epsilon(1e-8));
  }
  CHECK(s.log_det() == doctest::Approx(dense_log_det(s.gram())).epsilon(1e-8));
}

TEST_CASE("potential function bound") {
  RidgeState fresh(3, 1.0);
  CHECK(potential_bound_check(fresh, 100, 1.0));

  RidgeState tight(1, 1.0);
  tight.rank_one_update(Vector::Ones(1), 0.0);
  CHECK(tight.log_det() == doctest::Approx(std::log(2.0)));
  CHECK(potential_bound_check(tight, 1, 1.0));

  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    RidgeState s(4, 1.0);
    const std::size_t horizon = 10000;
    for (std::size_t t = 0; t < horizon; ++t) {
      Vector x = random_vector(rng, 4);
      x *= 2.0 * rng.uniform() / x.norm();
      s.rank_one_update(x, 0.0);
    }
    if (!potential_bound_check(s, horizon, 2.0)) {
      FAIL("potential bound violated for seed " << seed);
    }
  }
}
