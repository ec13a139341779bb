#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "speclab/linalg.hpp"
#include "speclab/rng.hpp"

using namespace speclab;

namespace {

// Independent oracle: cyclic Jacobi eigenvalue iteration for symmetric
// matrices, written from scratch so SVD checks do not route through the
// library's own factorization.
std::vector<double> jacobi_eigenvalues(Matrix a) {
  const int n = static_cast<int>(a.rows());
  for (int sweep = 0; sweep < 200; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-28) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double phi = 0.5 * std::atan2(2.0 * a(p, q), a(q, q) - a(p, p));
        const double c = std::cos(phi), s = std::sin(phi);
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> eig(n);
  for (int i = 0; i < n; ++i) eig[i] = a(i, i);
  std::sort(eig.rbegin(), eig.rend());
  return eig;
}

Matrix diag2(double a, double b) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

Matrix rank_deficient(Rng& rng, int rows, int cols, int rank) {
  return rng.gaussian_matrix(rows, rank) * rng.gaussian_matrix(rank, cols);
}

}  // namespace

TEST_CASE("svd on fixed matrices") {
  Matrix d = Matrix::Zero(3, 3);
  d(0, 0) = 3;
  d(1, 1) = 2;
  d(2, 2) = 1;
  auto f = svd(d);
  REQUIRE(f.sigmas.size() == 3);
  CHECK(f.sigmas[0] == Catch::Approx(3.0));
  CHECK(f.sigmas[1] == Catch::Approx(2.0));
  CHECK(f.sigmas[2] == Catch::Approx(1.0));

  auto fi = svd(Matrix::Identity(4, 4));
  for (int i = 0; i < 4; ++i) CHECK(fi.sigmas[i] == Catch::Approx(1.0));
}

TEST_CASE("svd sigma values match an independent eigen-solver on M^T M") {
  Rng rng(7);
  const Matrix m = rng.gaussian_matrix(5, 3);
  auto f = svd(m);
  auto eig = jacobi_eigenvalues(m.transpose() * m);
  REQUIRE(eig.size() == 3);
  for (int i = 0; i < 3; ++i) {
    const double expected = std::sqrt(std::max(0.0, eig[i]));
    CHECK(std::abs(f.sigmas[i] - expected) <= 1e-10 * std::max(1.0, expected));
  }
}

TEST_CASE("svd rejects non-finite input") {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(svd(m), std::invalid_argument);
}

TEST_CASE("svd reconstruction and orthogonality invariants") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(1234, seed));
    const int rows = 2 + rng.index(6), cols = 2 + rng.index(6);
    const Matrix m = rng.gaussian_matrix(rows, cols);
    auto f = svd(m);
    const double rel = (f.reconstruct() - m).norm() / std::max(1e-300, m.norm());
    CHECK(rel <= tol::svd_reconstruction);
    const int q = static_cast<int>(f.sigmas.size());
    CHECK((f.left.transpose() * f.left - Matrix::Identity(q, q)).norm() <= 1e-10);
    CHECK((f.right.transpose() * f.right - Matrix::Identity(q, q)).norm() <= 1e-10);
    for (int i = 1; i < q; ++i) CHECK(f.sigmas[i - 1] >= f.sigmas[i]);
    CHECK(f.sigmas[q - 1] >= 0.0);
  }
}

TEST_CASE("principal angle between rank-1 subspaces") {
  Matrix e11 = Matrix::Zero(2, 2), e22 = Matrix::Zero(2, 2);
  e11(0, 0) = 1.0;
  e22(1, 1) = 1.0;
  CHECK(principal_angle_cos(e11, 1, e11, 1).cos_value == Catch::Approx(1.0));
  CHECK(principal_angle_cos(e11, 1, e22, 1).cos_value == Catch::Approx(0.0).margin(1e-14));
  CHECK_THROWS_AS(principal_angle_cos(e11, 0, e22, 1), std::invalid_argument);
  CHECK_THROWS_AS(principal_angle_cos(e11, 1, e22, -1), std::invalid_argument);
}

TEST_CASE("principal angle cosine stays in [0,1]") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(derive_seed(99, seed));
    const Matrix a = rng.gaussian_matrix(4, 5), b = rng.gaussian_matrix(5, 3);
    const int r = 1 + rng.index(3), k = 1 + rng.index(3);
    const double c = principal_angle_cos(a, r, b, k).cos_value;
    CHECK(c >= 0.0);
    CHECK(c <= 1.0 + 1e-12);
  }
}

TEST_CASE("rotation construction: exact alignment at 0, vacuous at 90 degrees") {
  // B's left singular subspace is A's right singular subspace rotated by
  // theta, so the bound is tight at 0 and exactly zero at 90 degrees.
  Rng rng(5);
  const Matrix a = rng.gaussian_matrix(2, 2);
  auto fa = svd(a);
  const Matrix w = svd(rng.gaussian_matrix(2, 2)).left;
  Vector sb(2);
  sb << 1.7, 0.4;
  for (double deg : {0.0, 90.0}) {
    const double t = deg * M_PI / 180.0;
    Matrix rot(2, 2);
    rot << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
    const Matrix b = (fa.right * rot.transpose()) * sb.asDiagonal() * w.transpose();
    auto rep = product_lower_bound(a, b, 1, 1);
    const double cosab = principal_angle_cos(a, 1, b, 1).cos_value;
    if (deg == 0.0) {
      CHECK(std::abs(cosab - 1.0) <= 1e-9);
      CHECK(rep.slack_ratio == Catch::Approx(1.0).epsilon(1e-9));
    } else {
      CHECK(cosab <= 1e-12);
      CHECK(rep.lower_bound <= 1e-12);
    }
    CHECK(rep.holds());
  }
}

TEST_CASE("product lower bound on aligned diagonals") {
  auto rep = product_lower_bound(diag2(2, 1), diag2(3, 1), 1, 1);
  CHECK(rep.lower_bound == Catch::Approx(6.0));
  CHECK(rep.subject_value == Catch::Approx(6.0));
  CHECK(rep.slack_ratio == Catch::Approx(1.0));
}

TEST_CASE("product lower bound vanishes with the rank at k = 4") {
  Rng rng(21);
  const Matrix a = rank_deficient(rng, 4, 6, 3);
  const Matrix b = rank_deficient(rng, 6, 4, 3);
  auto rep = product_lower_bound(a, b, 4, 4);
  CHECK(rep.lower_bound <= 1e-12);
  CHECK(rep.subject_value <= 1e-12);
}

TEST_CASE("product lower bound holds on random pairs for all valid (k, r)") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(derive_seed(2024, seed));
    const int m = 2 + rng.index(4), n = 2 + rng.index(4), p = 2 + rng.index(4);
    const Matrix a = rng.gaussian_matrix(m, n), b = rng.gaussian_matrix(n, p);
    const auto fab = svd(a * b);  // direct oracle for sigma_k(AB)
    const int kmax = static_cast<int>(std::min(m, p));
    for (int k = 1; k <= kmax; ++k)
      for (int r = k; r <= std::min<int>(n, k + 2); ++r) {
        auto rep = product_lower_bound(a, b, k, r);
        CHECK(rep.subject_value == Catch::Approx(fab.sigma(k)).margin(1e-12));
        CHECK(rep.holds());
        ++checked;
      }
  }
  CHECK(checked > 500);
}

TEST_CASE("triple product bound on identity chain and aligned diagonals") {
  const Matrix id = Matrix::Identity(3, 3);
  for (auto v : {TripleVariant::IsolateLeft, TripleVariant::IsolateMiddle,
                 TripleVariant::IsolateRight}) {
    auto rep = triple_product_lower_bound(id, id, id, 1, 1, 1, v);
    CHECK(rep.lower_bound == Catch::Approx(1.0));
    CHECK(rep.subject_value == Catch::Approx(1.0));
  }
  auto rep = triple_product_lower_bound(diag2(2, 1), diag2(5, 1), diag2(3, 1), 1, 1, 1,
                                        TripleVariant::IsolateMiddle);
  CHECK(rep.lower_bound == Catch::Approx(30.0));
  CHECK(rep.subject_value == Catch::Approx(30.0));
}

TEST_CASE("triple product bound index constraints are enforced") {
  const Matrix id = Matrix::Identity(3, 3);
  CHECK_THROWS_AS(
      triple_product_lower_bound(id, id, id, 2, 1, 2, TripleVariant::IsolateMiddle),
      std::invalid_argument);
  CHECK_THROWS_AS(
      triple_product_lower_bound(id, id, id, 1, 2, 1, TripleVariant::IsolateRight),
      std::invalid_argument);
}

TEST_CASE("triple product bound holds on random chains, all variants") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(777, seed));
    const int m = 2 + rng.index(3), n = 2 + rng.index(3);
    const int p = 2 + rng.index(3), q = 2 + rng.index(3);
    const Matrix a = rng.gaussian_matrix(m, n);
    const Matrix b = rng.gaussian_matrix(n, p);
    const Matrix c = rng.gaussian_matrix(p, q);
    const int kmax = std::min({m, n, p, q});
    for (int k = 1; k <= kmax; ++k)
      for (int r1 = k; r1 <= kmax; ++r1)
        for (int r2 = r1; r2 <= kmax; ++r2) {
          CHECK(triple_product_lower_bound(a, b, c, k, r1, r2, TripleVariant::IsolateMiddle)
                    .holds());
          CHECK(triple_product_lower_bound(a, b, c, k, r1, r2, TripleVariant::IsolateLeft)
                    .holds());
          CHECK(triple_product_lower_bound(a, b, c, k, r1, r2, TripleVariant::IsolateRight)
                    .holds());
        }
  }
}

TEST_CASE("sup lower bound: identity chain and dominance over the (1,1) point") {
  const Matrix id = Matrix::Identity(3, 3);
  auto rep = sup_lower_bound(id, id, id);
  CHECK(rep.lower_bound == Catch::Approx(1.0));
  CHECK(rep.arg_r1 == 1);
  CHECK(rep.arg_r2 == 1);

  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(derive_seed(31, seed));
    const Matrix a = rng.gaussian_matrix(4, 4), b = rng.gaussian_matrix(4, 4),
                 c = rng.gaussian_matrix(4, 4);
    auto sup = sup_lower_bound(a, b, c);
    auto base = triple_product_lower_bound(a, b, c, 1, 1, 1, TripleVariant::IsolateMiddle);
    CHECK(sup.lower_bound >= base.lower_bound - 1e-12);
    CHECK(sup.holds());
    // The returned maximum really is the grid maximum.
    const int ra = numerical_rank(a), rc = numerical_rank(c);
    double grid_max = 0.0;
    for (int r1 = 1; r1 <= ra; ++r1)
      for (int r2 = 1; r2 <= rc; ++r2)
        grid_max = std::max(grid_max, triple_product_lower_bound(
                                          a, b, c, 1, r1, r2, TripleVariant::IsolateMiddle)
                                          .lower_bound);
    CHECK(sup.lower_bound == Catch::Approx(grid_max).margin(1e-12));
  }
}

TEST_CASE("sup lower bound can strictly improve on the (1,1) instance") {
  // A's top right-singular direction is orthogonal to the image of BC, but
  // its second direction aligns, so the supremum picks r1 = 2.
  Matrix a = Matrix::Zero(2, 2);
  a.col(0) = Vector::Zero(2);
  a(0, 0) = 5.0;  // right singular vector e1 maps with sigma 5
  a(1, 1) = 1.0;  // right singular vector e2 maps with sigma 1
  // BC with image along e2 only.
  Matrix b = Matrix::Zero(2, 2);
  b(1, 1) = 2.0;
  Matrix c = Matrix::Identity(2, 2);
  auto sup = sup_lower_bound(a, b, c);
  auto base = triple_product_lower_bound(a, b, c, 1, 1, 1, TripleVariant::IsolateMiddle);
  CHECK(sup.lower_bound > base.lower_bound + 0.5);
  CHECK(sup.arg_r1 == 2);
  CHECK(sup.holds());
}

TEST_CASE("sup lower bound never indexes past the numerical rank") {
  Rng rng(62);
  const Matrix a = rng.gaussian_matrix(6, 6);
  const Matrix b = rng.gaussian_matrix(6, 6);
  const Matrix c = rank_deficient(rng, 6, 6, 3);
  auto rep = sup_lower_bound(a, b, c);
  CHECK(rep.arg_r2 <= 3);
  CHECK(std::isfinite(rep.lower_bound));
  CHECK(rep.holds());
}

TEST_CASE("interlacing on a diagonal matrix") {
  Matrix d = Matrix::Zero(3, 3);
  d(0, 0) = 3;
  d(1, 1) = 2;
  d(2, 2) = 1;
  auto rep = interlacing_check(d, {2}, {2});
  REQUIRE(rep.all_ok);
  CHECK(rep.entries[0].upper == Catch::Approx(3.0));
  CHECK(rep.entries[0].mid == Catch::Approx(3.0));
  CHECK(rep.entries[0].lower == Catch::Approx(1.0));
  CHECK(rep.entries[1].mid == Catch::Approx(2.0));
  CHECK(rep.entries[1].lower == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("interlacing with no deletions gives equalities") {
  Rng rng(8);
  const Matrix a = rng.gaussian_matrix(4, 5);
  auto rep = interlacing_check(a, {}, {});
  REQUIRE(rep.all_ok);
  for (const auto& e : rep.entries) CHECK(e.upper == Catch::Approx(e.mid).margin(1e-12));
}

TEST_CASE("interlacing rejects empty submatrices") {
  Matrix a = Matrix::Identity(2, 2);
  CHECK_THROWS_AS(interlacing_check(a, {0, 1}, {}), std::invalid_argument);
}

TEST_CASE("interlacing holds on 500 random matrices with random deletions") {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    Rng rng(derive_seed(4242, seed));
    const int rows = 2 + rng.index(6), cols = 2 + rng.index(6);
    const Matrix a = rng.gaussian_matrix(rows, cols);
    std::vector<int> dr, dc;
    for (int i = 0; i < rows - 1; ++i)
      if (rng.uniform() < 0.3) dr.push_back(i);
    for (int j = 0; j < cols - 1; ++j)
      if (rng.uniform() < 0.3) dc.push_back(j);
    CHECK(interlacing_check(a, dr, dc).all_ok);
  }
}

TEST_CASE("additive singular value bounds") {
  Rng rng(3);
  const Matrix a = rng.gaussian_matrix(3, 4);
  auto zero = additive_sv_bounds(a, Matrix::Zero(3, 4), 2);
  CHECK(zero.low == Catch::Approx(zero.actual));
  CHECK(zero.high == Catch::Approx(zero.actual));

  auto d = additive_sv_bounds(diag2(5, 1), diag2(1, 1), 1);
  CHECK(d.low == Catch::Approx(4.0));
  CHECK(d.high == Catch::Approx(6.0));
  CHECK(d.actual == Catch::Approx(6.0));

  CHECK_THROWS_AS(additive_sv_bounds(a, Matrix::Zero(4, 3), 1), std::invalid_argument);

  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    Rng r2(derive_seed(555, seed));
    const int rows = 2 + r2.index(5), cols = 2 + r2.index(5);
    const Matrix x = r2.gaussian_matrix(rows, cols), y = r2.gaussian_matrix(rows, cols);
    for (int i = 1; i <= std::min(rows, cols); ++i)
      CHECK(additive_sv_bounds(x, y, i).holds(spectral_norm(x) + spectral_norm(y)));
  }
}

TEST_CASE("multiplicative singular value bounds") {
  Rng rng(4);
  const Matrix a = rng.gaussian_matrix(3, 3);
  auto ident = multiplicative_sv_bounds(a, Matrix::Identity(3, 3), 2);
  CHECK(ident.low == Catch::Approx(ident.actual));
  CHECK(ident.high == Catch::Approx(ident.actual));

  auto d = multiplicative_sv_bounds(diag2(2, 1), diag2(3, 1), 1);
  CHECK(d.low == Catch::Approx(2.0));
  CHECK(d.high == Catch::Approx(6.0));
  CHECK(d.actual == Catch::Approx(6.0));

  CHECK_THROWS_AS(multiplicative_sv_bounds(a, Matrix::Zero(4, 3), 1), std::invalid_argument);

  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    Rng r2(derive_seed(808, seed));
    const int m = 1 + r2.index(5), n = 1 + r2.index(5), p = 1 + r2.index(5);
    const Matrix x = r2.gaussian_matrix(m, n), y = r2.gaussian_matrix(n, p);
    for (int i = 1; i <= std::min(m, p); ++i)
      CHECK(multiplicative_sv_bounds(x, y, i).holds(spectral_norm(x) * spectral_norm(y)));
  }
}

TEST_CASE("bound chain property: sigma_k(AB) with the 1e-9 slack convention") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(606, seed));
    const Matrix a = rng.gaussian_matrix(5, 5), b = rng.gaussian_matrix(5, 5);
    const double s1ab = spectral_norm(a * b);
    for (int k = 1; k <= 3; ++k)
      for (int r = k; r <= 5; ++r) {
        auto rep = product_lower_bound(a, b, k, r);
        CHECK(rep.subject_value >= rep.lower_bound - 1e-9 * s1ab);
      }
  }
}
