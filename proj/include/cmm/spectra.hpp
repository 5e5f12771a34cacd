#pragma once

#include <cmm/config.hpp>
#include <cmm/operators.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <vector>

namespace cmm {

/// Ordered, oriented modes with their compressed eigenvalues.
struct ModeSet {
    Eigen::MatrixXd modes;                   ///< N x K, columns in output order
    std::vector<double> compressed_eigenvalues;
    std::vector<double> dirichlet_energy;    ///< phi^T W phi
    std::vector<double> l1_norm;             ///< sum |phi_i|
    std::vector<bool> flipped;
    std::vector<double> accuracy;            ///< mean |W phi + mu/2 sign(phi) - lambda A phi|
    std::vector<int> permutation;            ///< output column j came from input column permutation[j]
    double mu = 0.0;

    int size() const { return static_cast<int>(modes.cols()); }
};

inline double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// lambda = phi^T W phi + (mu / 2) ||phi||_1. Reduces to the Rayleigh quotient
/// of an A-normalised phi when mu = 0.
inline double compressed_eigenvalue(const Eigen::VectorXd& phi, const SparseSymmetric& weight, double mu) {
    return phi.dot(weight.matrix() * phi) + 0.5 * mu * phi.cwiseAbs().sum();
}

/// Full K x K readout Phi^T W Phi + (mu/2) Phi^T sign(Phi). Its diagonal holds
/// the compressed eigenvalues; off-diagonal entries are diagnostic only.
inline Eigen::MatrixXd lagrangian_matrix(const Eigen::MatrixXd& phi, const SparseSymmetric& weight, double mu) {
    const Eigen::MatrixXd signs = phi.unaryExpr([](double v) { return sign0(v); });
    return phi.transpose() * (weight.matrix() * phi) + 0.5 * mu * phi.transpose() * signs;
}

/// Stable ascending sort of columns by compressed eigenvalue (or by Dirichlet
/// energy alone). Ties keep their input order.
inline ModeSet order_modes(const Eigen::MatrixXd& phi, const SparseSymmetric& weight, double mu,
                           OrderBy by = OrderBy::compressed) {
    const int k = static_cast<int>(phi.cols());
    std::vector<double> lambda(static_cast<std::size_t>(k)), dirichlet(lambda.size()), l1(lambda.size());
    for (int j = 0; j < k; ++j) {
        const Eigen::VectorXd col = phi.col(j);
        dirichlet[static_cast<std::size_t>(j)] = col.dot(weight.matrix() * col);
        l1[static_cast<std::size_t>(j)] = col.cwiseAbs().sum();
        lambda[static_cast<std::size_t>(j)] = compressed_eigenvalue(col, weight, mu);
    }
    const std::vector<double>& key = by == OrderBy::compressed ? lambda : dirichlet;

    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
        return key[static_cast<std::size_t>(a)] < key[static_cast<std::size_t>(b)];
    });

    ModeSet out;
    out.mu = mu;
    out.modes.resize(phi.rows(), k);
    out.permutation = perm;
    out.flipped.assign(static_cast<std::size_t>(k), false);
    for (int j = 0; j < k; ++j) {
        const auto src = static_cast<std::size_t>(perm[static_cast<std::size_t>(j)]);
        out.modes.col(j) = phi.col(static_cast<Eigen::Index>(src));
        out.compressed_eigenvalues.push_back(lambda[src]);
        out.dirichlet_energy.push_back(dirichlet[src]);
        out.l1_norm.push_back(l1[src]);
    }
    return out;
}

struct FlipResult {
    Eigen::VectorXd phi;
    bool flipped = false;
};

/// Resolves the sign ambiguity of a mode. `extremum` negates when
/// max + min < 0; `integral` negates when 1^T A phi < 0. Exact ties are left alone.
inline FlipResult flip_mode(const Eigen::VectorXd& phi, FlipMethod method, const SparseSymmetric& mass) {
    double score = 0.0;
    switch (method) {
    case FlipMethod::extremum:
        if (phi.size() > 0) score = phi.maxCoeff() + phi.minCoeff();
        break;
    case FlipMethod::integral:
        score = (mass.matrix() * phi).sum();
        break;
    case FlipMethod::none:
        break;
    }
    if (score < 0.0) return {-phi, true};
    return {phi, false};
}

/// Mean over vertices of |W phi + (mu/2) sign(phi) - lambda A phi| with sign(0) = 0.
inline double accuracy_residual(const Eigen::VectorXd& phi, double lambda, const LaplaceOperator& op, double mu) {
    if (phi.size() == 0) return 0.0;
    const Eigen::VectorXd signs = phi.unaryExpr([](double v) { return sign0(v); });
    const Eigen::VectorXd r = op.weight.matrix() * phi + 0.5 * mu * signs - lambda * (op.mass.matrix() * phi);
    return r.cwiseAbs().mean();
}

/// Orients every column, orders them, and evaluates the accuracy residual.
inline ModeSet package_modes(const Eigen::MatrixXd& phi, const LaplaceOperator& op, double mu, OrderBy by,
                             FlipMethod flip) {
    Eigen::MatrixXd oriented = phi;
    std::vector<bool> flipped(static_cast<std::size_t>(phi.cols()), false);
    for (Eigen::Index j = 0; j < phi.cols(); ++j) {
        FlipResult f = flip_mode(phi.col(j), flip, op.mass);
        oriented.col(j) = f.phi;
        flipped[static_cast<std::size_t>(j)] = f.flipped;
    }
    ModeSet out = order_modes(oriented, op.weight, mu, by);
    for (int j = 0; j < out.size(); ++j) {
        out.flipped[static_cast<std::size_t>(j)] = flipped[static_cast<std::size_t>(out.permutation[static_cast<std::size_t>(j)])];
        out.accuracy.push_back(
            accuracy_residual(out.modes.col(j), out.compressed_eigenvalues[static_cast<std::size_t>(j)], op, mu));
    }
    return out;
}

/// CSV table: rank, lambda, dirichlet_energy, l1_norm, accuracy_residual, flipped.
inline void write_eigenvalue_table(std::ostream& out, const ModeSet& modes) {
    out << "rank,lambda,dirichlet_energy,l1_norm,accuracy_residual,flipped\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (int j = 0; j < modes.size(); ++j) {
        const auto i = static_cast<std::size_t>(j);
        out << j + 1 << ',' << modes.compressed_eigenvalues[i] << ',' << modes.dirichlet_energy[i] << ','
            << modes.l1_norm[i] << ',' << (i < modes.accuracy.size() ? modes.accuracy[i] : 0.0) << ','
            << (modes.flipped[i] ? 1 : 0) << '\n';
    }
}

/// N rows, one column per mode in output order.
inline void write_modes_csv(std::ostream& out, const ModeSet& modes) {
    for (int j = 0; j < modes.size(); ++j) out << (j ? "," : "") << "mode" << j + 1;
    out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (Eigen::Index i = 0; i < modes.modes.rows(); ++i) {
        for (Eigen::Index j = 0; j < modes.modes.cols(); ++j) out << (j ? "," : "") << modes.modes(i, j);
        out << '\n';
    }
}

} // namespace cmm
