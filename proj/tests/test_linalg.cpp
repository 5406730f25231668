#include <doctest.h>

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

#include "qtraj/linalg.hpp"
#include "qtraj/rng.hpp"

using namespace qtraj;

namespace {

Matrix random_hermitian(int d, Rng& rng) {
  Matrix a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = Complex(rng.normal(), rng.normal());
  return 0.5 * (a + a.adjoint());
}

Vector random_vector(int d, Rng& rng) {
  Vector v(d);
  for (int i = 0; i < d; ++i) v(i) = Complex(rng.normal(), rng.normal());
  return v;
}

// naive Kronecker product for cross-checking the embeddings
Matrix kron_naive(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      for (int k = 0; k < b.rows(); ++k)
        for (int l = 0; l < b.cols(); ++l) out(i * b.rows() + k, j * b.cols() + l) = a(i, j) * b(k, l);
  return out;
}

}  // namespace

TEST_CASE("state vectors keep finite entries and normalize") {
  CHECK_THROWS_AS(StateVector(Vector::Constant(2, Complex(NAN, 0.0))), Error);
  const StateVector v = StateVector::from({3.0, Complex(0.0, 4.0)});
  CHECK(v.norm2() == doctest::Approx(25.0));
  CHECK(std::abs(v.normalized().norm2() - 1.0) <= 1e-12);
  CHECK(StateVector::basis(3, 2)[2] == Complex(1.0, 0.0));
}

TEST_CASE("hermitian operator rejects asymmetry") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 1) = 1.0;
  CHECK_THROWS_AS(HermitianOperator{a}, Error);
  try {
    HermitianOperator bad(a);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::validation);
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
}

TEST_CASE("density matrix validation") {
  Matrix neg = Matrix::Zero(2, 2);
  neg(0, 0) = 1.5;
  neg(1, 1) = -0.5;
  CHECK_THROWS_AS(DensityMatrix{neg}, Error);
  const DensityMatrix pure = DensityMatrix::pure(StateVector::from({1.0, 1.0}).normalized());
  CHECK(pure.trace() == doctest::Approx(1.0));
  CHECK(pure.min_eigenvalue() >= -1e-12);
}

TEST_CASE("hermitian_eig") {
  SUBCASE("identity") {
    const EigenSystem es = hermitian_eig(Matrix::Identity(2, 2));
    CHECK(es.values(0) == doctest::Approx(1.0));
    CHECK(es.values(1) == doctest::Approx(1.0));
    CHECK(max_abs(es.vectors.adjoint() * es.vectors - Matrix::Identity(2, 2)) <= 1e-12);
  }
  SUBCASE("already diagonal") {
    const EigenSystem es = hermitian_eig(HermitianOperator::diagonal(std::vector<double>{0.0, 1.0}));
    CHECK(es.values(0) == 0.0);
    CHECK(es.values(1) == 1.0);
    CHECK(max_abs(es.vectors.cwiseAbs().cast<Complex>() - Matrix::Identity(2, 2)) <= 1e-14);
  }
  SUBCASE("random 8x8 reconstructs") {
    Rng rng(11);
    for (int rep = 0; rep < 20; ++rep) {
      const Matrix a = random_hermitian(8, rng);
      const EigenSystem es = hermitian_eig(a);
      const Matrix back = es.vectors * es.values.cast<Complex>().asDiagonal() * es.vectors.adjoint();
      CHECK(max_abs(back - a) <= 1e-10);
      CHECK(max_abs(es.vectors.adjoint() * es.vectors - Matrix::Identity(8, 8)) <= 1e-10);
      for (int k = 1; k < 8; ++k) CHECK(es.values(k) >= es.values(k - 1));
    }
  }
  SUBCASE("asymmetric input names the defect") {
    Matrix a = Matrix::Identity(3, 3);
    a(0, 2) = 0.25;
    try {
      hermitian_eig(a);
      FAIL("expected a validation error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::validation);
      CHECK(std::string(e.what()).find("0.25") != std::string::npos);
    }
  }
}

TEST_CASE("propagator") {
  Rng rng(12);
  SUBCASE("t = 0 is the identity") {
    const HermitianOperator h(random_hermitian(4, rng));
    CHECK(max_abs(propagator(h, 0.0) - Matrix::Identity(4, 4)) <= 1e-14);
  }
  SUBCASE("diagonal closed form") {
    const double e = 1.7, t = 0.9;
    const Matrix u = propagator(HermitianOperator::diagonal(std::vector<double>{0.0, e}), t);
    CHECK(std::abs(u(0, 0) - 1.0) <= 1e-15);
    CHECK(std::abs(u(1, 1) - std::exp(Complex(0.0, -e * t))) <= 1e-15);
  }
  SUBCASE("hbar enters as t / hbar") {
    const HermitianOperator h(random_hermitian(3, rng));
    CHECK(max_abs(propagator(h, 2.0, 2.0) - propagator(h, 1.0, 1.0)) <= 1e-12);
    CHECK_THROWS_AS(propagator(h, 1.0, 0.0), Error);
  }
  SUBCASE("unitary and group law on random H") {
    for (int rep = 0; rep < 10; ++rep) {
      const HermitianOperator h(random_hermitian(6, rng));
      const double s = rng.uniform() * 3.0, t = rng.uniform() * 3.0;
      const Matrix us = propagator(h, s), ut = propagator(h, t);
      CHECK(max_abs(us.adjoint() * us - Matrix::Identity(6, 6)) <= 1e-10);
      CHECK(max_abs(us * ut - propagator(h, s + t)) <= 1e-9);
    }
  }
  SUBCASE("agrees with the Pade exponential") {
    const HermitianOperator h(random_hermitian(5, rng));
    const Matrix pade = (Complex(0.0, -0.7) * h.matrix()).exp();
    CHECK(max_abs(propagator(h, 0.7) - pade) <= 1e-10);
  }
  SUBCASE("cached propagator matches") {
    const HermitianOperator h(random_hermitian(4, rng));
    const Propagator p(h, 1.3);
    const Vector psi = random_vector(4, rng);
    CHECK(max_abs(p.at(0.4) - propagator(h, 0.4, 1.3)) <= 1e-12);
    CHECK((p.apply(psi, 0.4) - propagator(h, 0.4, 1.3) * psi).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("embed_at_slot") {
  Rng rng(13);
  SUBCASE("M = 1 returns A") {
    const Matrix a = random_hermitian(3, rng);
    CHECK(max_abs(embed_at_slot(a, 1, 1) - a) <= 0.0);
  }
  SUBCASE("row-major order") {
    const Matrix a = HermitianOperator::diagonal(std::vector<double>{0.0, 1.0}).matrix();
    const Matrix e = embed_at_slot(a, 1, 2);
    const std::vector<double> expected{0, 0, 1, 1};
    for (int i = 0; i < 4; ++i) CHECK(e(i, i).real() == expected[i]);
    const Matrix e2 = embed_at_slot(a, 2, 2);
    const std::vector<double> expected2{0, 1, 0, 1};
    for (int i = 0; i < 4; ++i) CHECK(e2(i, i).real() == expected2[i]);
  }
  SUBCASE("matches naive Kronecker products") {
    const Matrix a = random_hermitian(2, rng);
    const Matrix id = Matrix::Identity(2, 2);
    CHECK(max_abs(embed_at_slot(a, 2, 3) - kron_naive(kron_naive(id, a), id)) <= 1e-14);
    CHECK(max_abs(kron(a, id) - kron_naive(a, id)) <= 1e-14);
  }
  SUBCASE("distinct slots commute") {
    for (int m = 2; m <= 3; ++m) {
      const Matrix a = random_hermitian(2, rng), b = random_hermitian(2, rng);
      for (int k = 1; k <= m; ++k)
        for (int l = 1; l <= m; ++l) {
          if (k == l) continue;
          const Matrix ak = embed_at_slot(a, k, m), bl = embed_at_slot(b, l, m);
          CHECK(max_abs(ak * bl - bl * ak) <= 1e-12);
          CHECK(hermiticity_defect(ak) <= 1e-12);
        }
    }
  }
  SUBCASE("slot out of range") {
    CHECK_THROWS_AS(embed_at_slot(Matrix::Identity(2, 2), 0, 2), Error);
    CHECK_THROWS_AS(embed_at_slot(Matrix::Identity(2, 2), 3, 2), Error);
  }
}

TEST_CASE("pair embedding acts on the chosen slots") {
  Rng rng(14);
  const Matrix w = random_hermitian(4, rng);
  const Matrix id = Matrix::Identity(2, 2);
  CHECK(max_abs(embed_pair(w, 1, 2, 3, 2) - kron_naive(w, id)) <= 1e-14);
  CHECK(max_abs(embed_pair(w, 2, 3, 3, 2) - kron_naive(id, w)) <= 1e-14);
  // slots (1,3): conjugate the (1,2) embedding by the swap of slots 2 and 3
  const Matrix swap23 = transposition_operator(1, 2, 3, 2);
  CHECK(max_abs(embed_pair(w, 1, 3, 3, 2) - swap23 * kron_naive(w, id) * swap23.adjoint()) <= 1e-14);
}

TEST_CASE("symmetrize") {
  Rng rng(15);
  SUBCASE("product states are symmetric") {
    const Vector eta = random_vector(3, rng);
    const StateVector prod(kron(eta, eta));
    CHECK((symmetrize(prod, 2, 3).amps() - prod.amps()).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("two-element orbit") {
    const StateVector v = StateVector::basis(4, 1);  // e0 (x) e1
    const StateVector s = symmetrize(v, 2, 2);
    CHECK(std::abs(s[1] - 0.5) <= 1e-15);
    CHECK(std::abs(s[2] - 0.5) <= 1e-15);
    CHECK(std::abs(s[0]) == 0.0);
    CHECK(std::abs(s[3]) == 0.0);
  }
  SUBCASE("idempotent and transposition invariant") {
    for (int m = 2; m <= 4; ++m) {
      const int dim = int_pow(2, m);
      const StateVector v(random_vector(dim, rng));
      const StateVector s = symmetrize(v, m, 2);
      CHECK((symmetrize(s, m, 2).amps() - s.amps()).cwiseAbs().maxCoeff() <= 1e-12);
      for (int a = 0; a < m; ++a)
        for (int b = a + 1; b < m; ++b)
          CHECK((transposition_operator(a, b, m, 2) * s.amps() - s.amps()).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  SUBCASE("projector is idempotent and Hermitian") {
    const Matrix p = symmetric_projector(3, 2);
    CHECK(max_abs(p * p - p) <= 1e-12);
    CHECK(hermiticity_defect(p) <= 1e-14);
    // symmetric subspace of 3 qubits has dimension 4
    CHECK(std::abs(p.trace().real() - 4.0) <= 1e-12);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(symmetrize(StateVector::basis(5, 0), 2, 2), Error);
    try {
      symmetric_projector(5, 2);
      FAIL("expected a capacity error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::capacity);
    }
  }
}

TEST_CASE("von Neumann entropy") {
  CHECK(von_neumann_entropy(DensityMatrix::pure(StateVector::from({0.6, 0.8}))) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(von_neumann_entropy(Matrix(0.5 * Matrix::Identity(2, 2))) - std::log(2.0)) <= 1e-12);
  Matrix diag = Matrix::Zero(2, 2);
  diag(0, 0) = 0.25;
  diag(1, 1) = 0.75;
  CHECK(std::abs(von_neumann_entropy(diag) - (-0.25 * std::log(0.25) - 0.75 * std::log(0.75))) <= 1e-12);
  // maximal on I/d, unnormalized input scaled away
  CHECK(std::abs(von_neumann_entropy(Matrix(3.0 * Matrix::Identity(5, 5))) - std::log(5.0)) <= 1e-12);
  CHECK_THROWS_AS(von_neumann_entropy(Matrix(Matrix::Zero(2, 2))), Error);

  Rng rng(16);
  const Matrix a = random_hermitian(4, rng);
  const Matrix rho = (a * a.adjoint()) / (a * a.adjoint()).trace();
  const Matrix u = propagator(HermitianOperator(random_hermitian(4, rng)), 0.8);
  CHECK(std::abs(von_neumann_entropy(rho) - von_neumann_entropy(Matrix(u * rho * u.adjoint()))) <= 1e-9);
  CHECK(von_neumann_entropy(rho) >= -1e-10);
}
