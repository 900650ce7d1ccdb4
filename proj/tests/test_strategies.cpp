// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "aspca/strategies.hpp"

using namespace aspca;

namespace {

// Identity basis: retained = first n_retained canonical vectors.
ReducedBasis<double> canonical_basis(const Vector<double>& eigenvalues,
                                     Index n_retained) {
  const Index n = eigenvalues.size();
  ReducedBasis<double> basis;
  basis.mean = Vector<double>::Zero(n);
  basis.retained = Matrix<double>::Identity(n, n).leftCols(n_retained);
  basis.retained_eigenvalues = eigenvalues.head(n_retained);
  basis.complement = Matrix<double>::Identity(n, n).rightCols(n - n_retained);
  basis.complement_eigenvalues = eigenvalues.tail(n - n_retained);
  return basis;
}

ReducedBasis<double> random_orthonormal_basis(Index n, Index n_retained,
                                              std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix<double> seed(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) seed(i, j) = normal(rng);
  const Matrix<double> q =
      Eigen::HouseholderQR<Matrix<double>>(seed).householderQ();

  ReducedBasis<double> basis;
  basis.mean = Vector<double>::Zero(n);
  basis.retained = q.leftCols(n_retained);
  basis.complement = q.rightCols(n - n_retained);
  basis.retained_eigenvalues =
      Vector<double>::LinSpaced(n, 5.0, 0.5).head(n_retained);
  basis.complement_eigenvalues =
      Vector<double>::LinSpaced(n, 5.0, 0.5).tail(n - n_retained);
  return basis;
}

Vector<double> all_eigenvalues_sorted(const ReducedBasis<double>& basis) {
  Vector<double> all(basis.n_retained() + basis.n_complement());
  all << basis.retained_eigenvalues, basis.complement_eigenvalues;
  std::sort(all.data(), all.data() + all.size());
  return all;
}

double retained_orthonormality_deviation(const ReducedBasis<double>& basis) {
  const Index n = basis.n_retained();
  return (basis.retained.transpose() * basis.retained -
          Matrix<double>::Identity(n, n))
      .lpNorm<Eigen::Infinity>();
}

}  // namespace

TEST_CASE("sensitivity coefficients decompose the gradient over the basis") {
  Vector<double> ev(4);
  ev << 4.0, 3.0, 2.0, 1.0;
  const ReducedBasis<double> basis = canonical_basis(ev, 2);

  const auto zero = sensitivity_coefficients(basis, Vector<double>::Zero(4));
  CHECK(zero.retained_c.norm() == 0.0);
  CHECK(zero.complement_c.norm() == 0.0);

  const auto first =
      sensitivity_coefficients(basis, basis.retained.col(0).eval());
  CHECK(first.retained_c[0] == doctest::Approx(1.0));
  CHECK(std::abs(first.retained_c[1]) < 1e-15);
  CHECK(first.complement_c.norm() == 0.0);

  Vector<double> mixed(4);
  mixed << 0.0, 0.0, 0.0, 2.5;  // complement-only sensitivity
  const auto tail = sensitivity_coefficients(basis, mixed);
  CHECK(tail.retained_c.norm() == 0.0);
  CHECK(tail.complement_c[1] == doctest::Approx(2.5));

  CHECK_THROWS_AS(sensitivity_coefficients(basis, Vector<double>::Zero(3)),
                  std::invalid_argument);
}

TEST_CASE("zero gradient is a fixed point of all three strategies") {
  Vector<double> ev(5);
  ev << 5.0, 4.0, 3.0, 2.0, 1.0;
  const ReducedBasis<double> basis = canonical_basis(ev, 2);
  const auto coeffs = sensitivity_coefficients(basis, Vector<double>::Zero(5));

  const auto rot = rotation_update(basis, coeffs, RotationConfig<double>{});
  CHECK_FALSE(rot.changed);
  CHECK((rot.basis.retained - basis.retained).norm() == 0.0);

  const auto ext = extension_update(basis, coeffs, 2);
  CHECK(ext.added.empty());
  CHECK(ext.basis.n_retained() == basis.n_retained());
  CHECK((ext.basis.retained - basis.retained).norm() == 0.0);

  const auto swp = swap_update(basis, coeffs, 1);
  CHECK(swp.complement_in.empty());
  CHECK((swp.basis.retained - basis.retained).norm() == 0.0);
}

TEST_CASE("rotation two-vector oracle") {
  // retained phi_1 = e1 (beta 2), complement phi_2 = e2 (beta 1),
  // gradient makes c_1 = c_2 = 1. Product mode gives c1 = 1*1*1/(2-1) = 1,
  // gamma = eps, so the rotated column is [1, eps] normalized.
  Vector<double> ev(2);
  ev << 2.0, 1.0;
  const ReducedBasis<double> basis = canonical_basis(ev, 1);
  const Vector<double> grad = Vector<double>::Ones(2);
  const auto coeffs = sensitivity_coefficients(basis, grad);
  CHECK(coeffs.retained_c[0] == doctest::Approx(1.0));
  CHECK(coeffs.complement_c[0] == doctest::Approx(1.0));

  RotationConfig<double> cfg;
  cfg.epsilon = 0.25;
  const auto result = rotation_update(basis, coeffs, cfg);
  CHECK(result.changed);
  CHECK(result.gamma == doctest::Approx(0.25).epsilon(1e-14));

  const double norm = std::sqrt(1.0 + 0.25 * 0.25);
  CHECK(result.basis.retained(0, 0) == doctest::Approx(1.0 / norm).epsilon(1e-12));
  CHECK(result.basis.retained(1, 0) ==
        doctest::Approx(0.25 / norm).epsilon(1e-12));
  // eigenvalues and mean untouched
  CHECK((result.basis.retained_eigenvalues - basis.retained_eigenvalues).norm() ==
        0.0);
  CHECK((result.basis.mean - basis.mean).norm() == 0.0);
}

TEST_CASE("rotation alpha modes weight retained rows differently") {
  // retained e1 (beta 4), e2 (beta 3); complement e3 (beta 1);
  // gradient coefficients c = (2, 1, 1).
  Vector<double> ev(3);
  ev << 4.0, 3.0, 1.0;
  const ReducedBasis<double> basis = canonical_basis(ev, 2);
  Vector<double> grad(3);
  grad << 2.0, 1.0, 1.0;
  const auto coeffs = sensitivity_coefficients(basis, grad);

  RotationConfig<double> cfg;
  cfg.epsilon = 0.1;

  // product: c1 rows (2*1*1/3, 1*1*1/2) = (2/3, 1/2); gamma = eps/(2/3)
  cfg.alpha_mode = AlphaMode::product;
  const auto prod = rotation_update(basis, coeffs, cfg);
  {
    const double up1 = 0.1;         // gamma * 2/3 = eps
    const double up2 = 0.1 * 0.75;  // gamma * 1/2
    const double n1 = std::sqrt(1 + up1 * up1);
    const double n2 = std::sqrt(1 + up2 * up2);
    CHECK(prod.basis.retained(2, 0) == doctest::Approx(up1 / n1).epsilon(1e-12));
    CHECK(prod.basis.retained(2, 1) == doctest::Approx(up2 / n2).epsilon(1e-12));
  }

  // ratio: c1 rows ((1/2)*1/3, (1/1)*1/2) = (1/6, 1/2); gamma = eps/(1/2)
  cfg.alpha_mode = AlphaMode::ratio;
  const auto rat = rotation_update(basis, coeffs, cfg);
  {
    const double up1 = 0.2 / 6.0;  // gamma * 1/6
    const double up2 = 0.1;        // gamma * 1/2 = eps
    const double n1 = std::sqrt(1 + up1 * up1);
    const double n2 = std::sqrt(1 + up2 * up2);
    CHECK(rat.basis.retained(2, 0) == doctest::Approx(up1 / n1).epsilon(1e-12));
    CHECK(rat.basis.retained(2, 1) == doctest::Approx(up2 / n2).epsilon(1e-12));
  }
}

TEST_CASE("rotation skips degenerate eigenvalue pairs and tiny ratio pivots") {
  Vector<double> ev(2);
  ev << 2.0, 2.0;  // degenerate pair
  const ReducedBasis<double> basis = canonical_basis(ev, 1);
  const auto coeffs = sensitivity_coefficients(basis, Vector<double>::Ones(2));
  const auto res = rotation_update(basis, coeffs, RotationConfig<double>{});
  CHECK_FALSE(res.changed);  // only pair skipped, nothing to rotate

  Vector<double> ev2(3);
  ev2 << 4.0, 3.0, 1.0;
  const ReducedBasis<double> basis2 = canonical_basis(ev2, 2);
  Vector<double> grad(3);
  grad << 0.0, 1.0, 1.0;  // c_1 = 0: ratio mode must skip row 0
  const auto coeffs2 = sensitivity_coefficients(basis2, grad);
  RotationConfig<double> cfg;
  cfg.alpha_mode = AlphaMode::ratio;
  const auto res2 = rotation_update(basis2, coeffs2, cfg);
  CHECK(res2.changed);
  CHECK(res2.basis.retained.allFinite());
  CHECK((res2.basis.retained.col(0) - basis2.retained.col(0)).norm() == 0.0);
}

TEST_CASE("rotation orthonormality deviation scales quadratically in epsilon") {
  std::mt19937_64 rng(2026);
  std::normal_distribution<double> normal;
  std::vector<double> ratios;
  for (int rep = 0; rep < 10; ++rep) {
    const ReducedBasis<double> basis = random_orthonormal_basis(20, 5, rng);
    Vector<double> grad(20);
    for (Index i = 0; i < 20; ++i) grad[i] = normal(rng);
    const auto coeffs = sensitivity_coefficients(basis, grad);

    RotationConfig<double> cfg;
    cfg.reorthonormalize = false;
    cfg.epsilon = 0.1;
    const double dev_full =
        retained_orthonormality_deviation(rotation_update(basis, coeffs, cfg).basis);
    cfg.epsilon = 0.05;
    const double dev_half =
        retained_orthonormality_deviation(rotation_update(basis, coeffs, cfg).basis);
    ratios.push_back(dev_full / dev_half);
  }
  std::sort(ratios.begin(), ratios.end());
  const double median = ratios[ratios.size() / 2];
  CHECK(median >= 3.5);
  CHECK(median <= 4.5);
}

TEST_CASE("rotation with re-orthonormalization restores exact orthonormality") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  const ReducedBasis<double> basis = random_orthonormal_basis(15, 4, rng);
  Vector<double> grad(15);
  for (Index i = 0; i < 15; ++i) grad[i] = normal(rng);
  const auto coeffs = sensitivity_coefficients(basis, grad);

  RotationConfig<double> cfg;
  cfg.reorthonormalize = true;
  cfg.epsilon = 0.3;
  const auto res = rotation_update(basis, coeffs, cfg);
  CHECK(retained_orthonormality_deviation(res.basis) < 1e-12);
}

TEST_CASE("extension promotes the most sensitive complement columns") {
  Vector<double> ev(5);
  ev << 5.0, 4.0, 3.0, 2.0, 1.0;
  const ReducedBasis<double> basis = canonical_basis(ev, 2);
  Vector<double> grad(5);
  grad << 0.3, 0.2, 0.1, 5.0, 0.3;  // complement c = (0.1, 5.0, 0.3)
  const auto coeffs = sensitivity_coefficients(basis, grad);

  const auto none = extension_update(basis, coeffs, 0);
  CHECK(none.basis.n_retained() == 2);
  CHECK((none.basis.retained - basis.retained).norm() == 0.0);

  const auto one = extension_update(basis, coeffs, 1);
  CHECK(one.added == std::vector<Index>{1});
  CHECK(one.basis.n_retained() == 3);
  CHECK(one.basis.n_complement() == 2);
  CHECK(one.basis.retained.col(2)[3] == doctest::Approx(1.0));  // e4 promoted
  CHECK(one.basis.retained_eigenvalues[2] == doctest::Approx(2.0));
  CHECK(retained_orthonormality_deviation(one.basis) < 1e-12);

  // captured sensitivity strictly increases
  const double before = (basis.retained.transpose() * grad).norm();
  const double after = (one.basis.retained.transpose() * grad).norm();
  CHECK(after > before);

  // eigenvalue multiset preserved
  CHECK((all_eigenvalues_sorted(one.basis) - all_eigenvalues_sorted(basis))
            .norm() == 0.0);

  CHECK_THROWS_AS(extension_update(basis, coeffs, 4), std::invalid_argument);
}

TEST_CASE("swap exchanges the weakest retained for the strongest complement") {
  // retained e1 (beta 3), e2 (beta 2); complement e3 (beta 1);
  // c = (2, 0.1, 1): update norms (1, 0.1) -> weakest retained is column 1.
  Vector<double> ev(3);
  ev << 3.0, 2.0, 1.0;
  const ReducedBasis<double> basis = canonical_basis(ev, 2);
  Vector<double> grad(3);
  grad << 2.0, 0.1, 1.0;
  const auto coeffs = sensitivity_coefficients(basis, grad);

  const auto none = swap_update(basis, coeffs, 0);
  CHECK((none.basis.retained - basis.retained).norm() == 0.0);

  const auto res = swap_update(basis, coeffs, 1);
  CHECK(res.retained_out == std::vector<Index>{1});
  CHECK(res.complement_in == std::vector<Index>{0});
  CHECK(res.basis.retained.col(1)[2] == doctest::Approx(1.0));  // e3 in
  CHECK(res.basis.retained_eigenvalues[1] == doctest::Approx(1.0));
  CHECK(res.basis.complement.col(0)[1] == doctest::Approx(1.0));  // e2 out
  CHECK(res.basis.complement_eigenvalues[0] == doctest::Approx(2.0));
  CHECK(res.basis.n_retained() == 2);
  CHECK(retained_orthonormality_deviation(res.basis) < 1e-12);
  CHECK((all_eigenvalues_sorted(res.basis) - all_eigenvalues_sorted(basis))
            .norm() == 0.0);

  CHECK_THROWS_AS(swap_update(basis, coeffs, 2), std::invalid_argument);
}

TEST_CASE("swapping twice with one gradient restores the basis") {
  // 4-vector toy: eigenvalues (4, 3, 2, 1), gradient coefficients
  // (1, 0.1, 0.5, 0.01). First swap exchanges phi_2 and phi_3; with the same
  // gradient the exchanged columns trade ranking and swap straight back.
  Vector<double> ev(4);
  ev << 4.0, 3.0, 2.0, 1.0;
  const ReducedBasis<double> basis = canonical_basis(ev, 2);
  Vector<double> grad(4);
  grad << 1.0, 0.1, 0.5, 0.01;

  const auto first =
      swap_update(basis, sensitivity_coefficients(basis, grad), 1);
  CHECK(first.retained_out == std::vector<Index>{1});
  CHECK((first.basis.retained.col(1) - basis.complement.col(0)).norm() == 0.0);

  const auto second =
      swap_update(first.basis, sensitivity_coefficients(first.basis, grad), 1);
  CHECK((second.basis.retained - basis.retained).norm() == 0.0);
  CHECK((second.basis.complement - basis.complement).norm() == 0.0);
  CHECK((second.basis.retained_eigenvalues - basis.retained_eigenvalues).norm() ==
        0.0);
  CHECK((second.basis.complement_eigenvalues - basis.complement_eigenvalues)
            .norm() == 0.0);
}

TEST_CASE("strategies are deterministic functions of their inputs") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal;
  const ReducedBasis<double> basis = random_orthonormal_basis(12, 4, rng);
  Vector<double> grad(12);
  for (Index i = 0; i < 12; ++i) grad[i] = normal(rng);
  const auto coeffs = sensitivity_coefficients(basis, grad);

  RotationConfig<double> cfg;
  const auto r1 = rotation_update(basis, coeffs, cfg);
  const auto r2 = rotation_update(basis, coeffs, cfg);
  CHECK((r1.basis.retained.array() == r2.basis.retained.array()).all());

  const auto e1 = extension_update(basis, coeffs, 2);
  const auto e2 = extension_update(basis, coeffs, 2);
  CHECK((e1.basis.retained.array() == e2.basis.retained.array()).all());

  const auto s1 = swap_update(basis, coeffs, 2);
  const auto s2 = swap_update(basis, coeffs, 2);
  CHECK((s1.basis.retained.array() == s2.basis.retained.array()).all());
  CHECK(s1.basis.fingerprint() == s2.basis.fingerprint());
  CHECK(s1.basis.fingerprint() != basis.fingerprint());
}
