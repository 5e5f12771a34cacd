#pragma once

#include <cmm/errors.hpp>
#include <cmm/mesh.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace cmm {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Symmetric sparse N x N matrix.
///
/// Duplicate triplets are summed, explicit zeros are dropped, and the result
/// must be exactly symmetric (same pattern, bitwise equal values); otherwise
/// construction throws ValidationError.
class SparseSymmetric {
public:
    SparseSymmetric() = default;

    SparseSymmetric(int dimension, const std::vector<Triplet>& triplets) : matrix_(dimension, dimension) {
        matrix_.setFromTriplets(triplets.begin(), triplets.end());
        finalize();
    }

    explicit SparseSymmetric(SparseMatrix m) : matrix_(std::move(m)) {
        if (matrix_.rows() != matrix_.cols()) throw ValidationError("SparseSymmetric requires a square matrix");
        finalize();
    }

    int dimension() const { return static_cast<int>(matrix_.rows()); }
    const SparseMatrix& matrix() const { return matrix_; }
    Eigen::MatrixXd dense() const { return Eigen::MatrixXd(matrix_); }

    bool is_diagonal() const {
        for (int k = 0; k < matrix_.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(matrix_, k); it; ++it)
                if (it.row() != it.col()) return false;
        return true;
    }

    Eigen::VectorXd diagonal() const { return matrix_.diagonal(); }

private:
    void finalize() {
        matrix_.prune(0.0);
        matrix_.makeCompressed();
        const SparseMatrix transposed = matrix_.transpose();
        if (transposed.nonZeros() != matrix_.nonZeros())
            throw ValidationError("matrix is not structurally symmetric");
        for (int k = 0; k < matrix_.outerSize(); ++k) {
            SparseMatrix::InnerIterator a(matrix_, k), b(transposed, k);
            for (; a && b; ++a, ++b) {
                if (a.index() != b.index() || a.value() != b.value())
                    throw ValidationError("matrix is not symmetric at (" + std::to_string(a.row()) + ", " +
                                          std::to_string(a.col()) + ")");
            }
            if (a || b) throw ValidationError("matrix is not structurally symmetric");
        }
    }

    SparseMatrix matrix_;
};

enum class MassKind { lumped, unlumped };

/// Discrete Laplace-Beltrami operator in the factored form L = A^{-1} W.
struct LaplaceOperator {
    SparseSymmetric weight; ///< W, cotan stiffness (positive semidefinite)
    SparseSymmetric mass;   ///< A, positive definite
    MassKind mass_kind = MassKind::lumped;

    int dimension() const { return weight.dimension(); }
};

/// Largest cotangent magnitude accepted before a triangle is treated as degenerate.
inline constexpr double kMaxCotangent = 1e8;

/// Cotan stiffness matrix in the positive semidefinite (Dirichlet form) sign
/// convention: W_ij = -(cot a + cot b) / 2 over the angles opposite edge ij,
/// W_ii = -sum_j W_ij. Boundary edges receive a single cotangent.
inline SparseSymmetric assemble_cotan_weights(const TriangleMesh& mesh) {
    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(mesh.n_faces()) * 12);
    for (int f = 0; f < mesh.n_faces(); ++f) {
        const Face& t = mesh.face(f);
        for (int c = 0; c < 3; ++c) {
            const int k = t[c], i = t[(c + 1) % 3], j = t[(c + 2) % 3];
            const Eigen::Vector3d u = mesh.vertex(i) - mesh.vertex(k);
            const Eigen::Vector3d v = mesh.vertex(j) - mesh.vertex(k);
            const double cot = u.dot(v) / u.cross(v).norm();
            if (!std::isfinite(cot) || std::abs(cot) > kMaxCotangent)
                throw DegenerateTriangleError("face " + std::to_string(f) + " has a near-zero angle at vertex " +
                                              std::to_string(k));
            const double w = 0.5 * cot;
            triplets.emplace_back(i, j, -w);
            triplets.emplace_back(j, i, -w);
            triplets.emplace_back(i, i, w);
            triplets.emplace_back(j, j, w);
        }
    }
    return SparseSymmetric(mesh.n_vertices(), triplets);
}

/// Piecewise-linear FEM mass matrix (T/6 on the diagonal, T/12 off it, per
/// triangle of area T) or its row-lumped diagonal form (T/3 per corner).
inline SparseSymmetric assemble_mass(const TriangleMesh& mesh, MassKind kind) {
    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(mesh.n_faces()) * (kind == MassKind::lumped ? 3 : 9));
    for (int f = 0; f < mesh.n_faces(); ++f) {
        const Face& t = mesh.face(f);
        const double area = mesh.face_area(f);
        for (int a = 0; a < 3; ++a) {
            if (kind == MassKind::lumped) {
                triplets.emplace_back(t[a], t[a], area / 3.0);
                continue;
            }
            for (int b = 0; b < 3; ++b) triplets.emplace_back(t[a], t[b], a == b ? area / 6.0 : area / 12.0);
        }
    }
    return SparseSymmetric(mesh.n_vertices(), triplets);
}

inline LaplaceOperator assemble_operator(const TriangleMesh& mesh, MassKind kind) {
    return LaplaceOperator{assemble_cotan_weights(mesh), assemble_mass(mesh, kind), kind};
}

struct EigenPairs {
    Eigen::VectorXd values;  ///< ascending
    Eigen::MatrixXd vectors; ///< N x K, A-orthonormal columns
};

/// Default dimension cap for the dense generalized eigensolver.
inline constexpr int kDenseEigenCap = 5000;

/// K smallest eigenpairs of W phi = lambda A phi, computed densely.
///
/// Each eigenvector is normalised so that its largest-magnitude entry is
/// positive, which makes the output independent of LAPACK-style sign noise.
inline EigenPairs generalized_eigs(const SparseSymmetric& weight, const SparseSymmetric& mass, int k,
                                   int dense_cap = kDenseEigenCap) {
    const int n = weight.dimension();
    if (mass.dimension() != n) throw ValidationError("W and A dimensions differ");
    if (n > dense_cap)
        throw ConfigError("dense_cap", "dimension " + std::to_string(n) + " exceeds dense eigensolver cap " +
                                           std::to_string(dense_cap));
    if (k < 1 || k > n) throw ConfigError("K", "must lie in [1, " + std::to_string(n) + "]");

    const Eigen::MatrixXd a = mass.dense();
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("mass matrix is not positive definite");

    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(weight.dense(), a,
                                                                    Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
    if (solver.info() != Eigen::Success) throw NotPositiveDefinite("generalized eigensolver failed");

    EigenPairs out{solver.eigenvalues().head(k), solver.eigenvectors().leftCols(k)};
    for (int j = 0; j < k; ++j) {
        Eigen::Index arg = 0;
        out.vectors.col(j).cwiseAbs().maxCoeff(&arg);
        if (out.vectors(arg, j) < 0.0) out.vectors.col(j) *= -1.0;
    }
    return out;
}

/// MatrixMarket coordinate dump of the lower triangle (symmetric storage, 1-based).
inline void write_matrix_market(std::ostream& out, const SparseSymmetric& m) {
    const SparseMatrix& s = m.matrix();
    std::vector<Triplet> lower;
    for (int k = 0; k < s.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(s, k); it; ++it)
            if (it.row() >= it.col()) lower.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    out << "%%MatrixMarket matrix coordinate real symmetric\n";
    out << s.rows() << ' ' << s.cols() << ' ' << lower.size() << '\n';
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& t : lower) out << t.row() + 1 << ' ' << t.col() + 1 << ' ' << t.value() << '\n';
}

} // namespace cmm
