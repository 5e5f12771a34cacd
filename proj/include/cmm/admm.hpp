#pragma once

// Baseline ADMM for compressed manifold modes.
//
// The problem  min Tr(Phi^T W Phi) + mu ||Phi||_1  s.t.  Phi^T A Phi = I  is
// split into three terms coupled by Phi = E and Phi = S:
//
//   iota(Phi) + Tr(E^T W E) + mu ||S||_1,
//
// with iota the indicator of the A-orthonormality constraint. Every sub-step
// has a closed form: a K x K eigendecomposition for Phi, one sparse SPD solve
// per column for E, and row-weighted soft thresholding for S.
//
// The quadratic penalties are measured in the mass metric, which is the
// metric in which the Phi-step projection is exact:
//   (rho/2) ||Phi - E - dual_E||_A^2 + (rho/2) ||Phi - S - dual_S||_D^2,
// where D = diag(A 1) is the lumped mass (D = A when A is lumped). Scaled
// duals are updated by dual += (E - Phi), (S - Phi).

#include <cmm/config.hpp>
#include <cmm/errors.hpp>
#include <cmm/operators.hpp>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace cmm {

using Matrix = Eigen::MatrixXd;

struct ResidualRecord {
    double primal = 0.0;
    double dual = 0.0;
    double combined = 0.0; ///< c_k of the restart test
};

struct AdmmState {
    Matrix Phi;
    Matrix E;
    Matrix S;
    Matrix dual_E;
    Matrix dual_S;
    double rho = 1.0;
    int iter = 0;
    std::vector<ResidualRecord> residual_history;

    int rows() const { return static_cast<int>(Phi.rows()); }
    int cols() const { return static_cast<int>(Phi.cols()); }
};

/// Tr(Phi^T W Phi) + mu * sum |Phi_ij|.
inline double objective(const Matrix& phi, const SparseSymmetric& weight, double mu) {
    const Matrix w_phi = weight.matrix() * phi;
    return w_phi.cwiseProduct(phi).sum() + mu * phi.cwiseAbs().sum();
}

inline double objective(const Matrix& phi, const LaplaceOperator& op, double mu) {
    return objective(phi, op.weight, mu);
}

inline double shrink_scalar(double v, double t) {
    const double mag = std::abs(v) - t;
    return mag > 0.0 ? std::copysign(mag, v) : 0.0;
}

/// Soft thresholding, the proximal map of t * |.|.
inline Matrix shrink(const Matrix& z, double t) {
    return z.unaryExpr([t](double v) { return shrink_scalar(v, t); });
}

/// Soft thresholding with threshold t_i on row i.
inline Matrix shrink_rows(const Matrix& z, const Eigen::VectorXd& t) {
    Matrix out(z.rows(), z.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j)
        for (Eigen::Index i = 0; i < z.rows(); ++i) out(i, j) = shrink_scalar(z(i, j), t(i));
    return out;
}

/// Eigenvalue floor of Ytilde^T A Ytilde below which the projection refuses to run.
inline constexpr double kRankTolerance = 1e-12;

namespace detail {

inline Matrix project_once(const Matrix& y, const SparseMatrix& a) {
    Matrix gram = y.transpose() * (a * y);
    gram = 0.5 * (gram + gram.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    if (eig.info() != Eigen::Success) throw RankDeficient("eigendecomposition of Y^T A Y failed");
    const Eigen::VectorXd& sigma = eig.eigenvalues();
    if (!(sigma.minCoeff() > kRankTolerance))
        throw RankDeficient("Y^T A Y has eigenvalue " + std::to_string(sigma.minCoeff()) +
                            "; columns are dependent in the A-metric");
    const Matrix& v = eig.eigenvectors();
    return y * (v * sigma.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose());
}

} // namespace detail

/// Closest A-orthonormal frame in the polar sense: with Y^T A Y = V S V^T,
/// returns Y V S^{-1/2} V^T. Only the K x K Gram matrix is decomposed; no
/// square root of A is formed.
inline Matrix project_A_orthonormal(const Matrix& y, const SparseSymmetric& mass) {
    Matrix phi = detail::project_once(y, mass.matrix());
    // One polishing pass when Y was badly conditioned.
    const Matrix gram = phi.transpose() * (mass.matrix() * phi);
    if ((gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() > 1e-13)
        phi = detail::project_once(phi, mass.matrix());
    return phi;
}

/// max |Phi^T A Phi - I|.
inline double orthonormality_error(const Matrix& phi, const SparseSymmetric& mass) {
    const Matrix gram = phi.transpose() * (mass.matrix() * phi);
    return (gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

/// Mass metric used by the quadratic penalties, normalised so that the mean
/// lumped weight is one. The normalisation makes rho and the residual norms
/// independent of mesh scale and resolution; on a uniform mesh the weighted
/// norms coincide with Frobenius norms.
class PenaltyMetric {
public:
    PenaltyMetric() = default;

    static PenaltyMetric from_mass(const SparseSymmetric& mass) {
        const Eigen::VectorXd rows = mass.matrix() * Eigen::VectorXd::Ones(mass.dimension());
        const double mean = rows.mean();
        if (!(rows.minCoeff() > 0.0)) throw NotPositiveDefinite("mass matrix has a non-positive row sum");
        PenaltyMetric m;
        m.matrix_ = SparseSymmetric(SparseMatrix(mass.matrix() / mean));
        m.weights_ = rows / mean;
        return m;
    }

    static PenaltyMetric identity(int n) {
        SparseMatrix eye(n, n);
        eye.setIdentity();
        PenaltyMetric m;
        m.matrix_ = SparseSymmetric(std::move(eye));
        m.weights_ = Eigen::VectorXd::Ones(n);
        return m;
    }

    const SparseSymmetric& matrix() const { return matrix_; }
    /// Row sums of matrix(); the diagonal metric of the S-step.
    const Eigen::VectorXd& weights() const { return weights_; }

    /// sqrt(sum_i w_i sum_j x_ij^2)
    double norm(const Matrix& x) const { return std::sqrt(squared_norm(x)); }
    double squared_norm(const Matrix& x) const { return weights_.dot(x.rowwise().squaredNorm()); }

private:
    SparseSymmetric matrix_;
    Eigen::VectorXd weights_;
};

/// Cached LDL^T factorisation of 2W + rho M for the penalty metric M,
/// refactored only when rho changes.
class EnergySolver {
public:
    EnergySolver(const SparseSymmetric& weight, PenaltyMetric metric) : weight_(&weight), metric_(std::move(metric)) {
        if (weight.dimension() != metric_.matrix().dimension())
            throw ValidationError("W and metric dimensions differ");
    }

    const SparseSymmetric& weight() const { return *weight_; }
    const PenaltyMetric& metric() const { return metric_; }
    std::optional<double> factored_rho() const { return rho_; }
    int factorizations() const { return factorizations_; }

    /// Solves (2W + rho M) X = rhs column by column.
    Matrix solve(const Matrix& rhs, double rho) {
        ensure(rho);
        Matrix out(rhs.rows(), rhs.cols());
        for (Eigen::Index j = 0; j < rhs.cols(); ++j) out.col(j) = ldlt_.solve(rhs.col(j));
        return out;
    }

private:
    void ensure(double rho) {
        if (rho_ && *rho_ == rho) return;
        if (!(rho > 0.0)) throw FactorizationError("rho must be positive");
        const SparseMatrix system = 2.0 * weight_->matrix() + rho * metric_.matrix().matrix();
        if (!analyzed_) {
            ldlt_.analyzePattern(system);
            analyzed_ = true;
        }
        ldlt_.factorize(system);
        if (ldlt_.info() != Eigen::Success || !(ldlt_.vectorD().minCoeff() > 0.0)) {
            rho_.reset();
            throw FactorizationError("2W + rho M is not symmetric positive definite");
        }
        rho_ = rho;
        ++factorizations_;
    }

    const SparseSymmetric* weight_;
    PenaltyMetric metric_;
    Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
    std::optional<double> rho_;
    bool analyzed_ = false;
    int factorizations_ = 0;
};

/// argmin_E Tr(E^T W E) + rho/2 ||Phi - E - dual_E||_M^2, i.e. the solution of
/// (2W + rho M) E = rho M (Phi - dual_E).
inline Matrix update_E(const Matrix& phi, const Matrix& dual_E, double rho, EnergySolver& solver) {
    return solver.solve(rho * (solver.metric().matrix().matrix() * (phi - dual_E)), rho);
}

/// argmin_S mu ||S||_1 + rho/2 ||Phi - S - dual_S||_D^2 for diagonal D = diag(d).
inline Matrix update_S(const Matrix& phi, const Matrix& dual_S, double rho, double mu, const Eigen::VectorXd& d) {
    return shrink_rows(phi - dual_S, (mu / rho) * d.cwiseInverse());
}

/// Primal residual ||[Phi - E; Phi - S]|| and dual residual
/// rho ||(E - E_prev) + (S - S_prev)||, in the given metric.
inline ResidualRecord residuals(const AdmmState& prev, const AdmmState& cur, double rho, const PenaltyMetric& metric) {
    ResidualRecord r;
    r.primal = std::sqrt(metric.squared_norm(cur.Phi - cur.E) + metric.squared_norm(cur.Phi - cur.S));
    r.dual = rho * metric.norm((cur.E - prev.E) + (cur.S - prev.S));
    return r;
}

/// Frobenius-norm residuals.
inline ResidualRecord residuals(const AdmmState& prev, const AdmmState& cur, double rho) {
    return residuals(prev, cur, rho, PenaltyMetric::identity(cur.rows()));
}

struct StopTolerances {
    double primal = 0.0;
    double dual = 0.0;
};

/// eps_pri = sqrt(2n) eps_abs + eps_rel max(||Phi||, sqrt(||E||^2 + ||S||^2))
/// eps_dual = sqrt(n) eps_abs + eps_rel ||[dual_E; dual_S]||
inline StopTolerances stop_tolerances(const AdmmState& state, const SolveConfig& cfg, int n,
                                      const PenaltyMetric& metric) {
    StopTolerances tol;
    const double v_norm = std::sqrt(metric.squared_norm(state.E) + metric.squared_norm(state.S));
    const double dual_norm = std::sqrt(metric.squared_norm(state.dual_E) + metric.squared_norm(state.dual_S));
    tol.primal = std::sqrt(2.0 * n) * cfg.eps_abs + cfg.eps_rel * std::max(metric.norm(state.Phi), v_norm);
    tol.dual = std::sqrt(double(n)) * cfg.eps_abs + cfg.eps_rel * dual_norm;
    return tol;
}

inline StopTolerances stop_tolerances(const AdmmState& state, const SolveConfig& cfg, int n) {
    return stop_tolerances(state, cfg, n, PenaltyMetric::identity(state.rows()));
}

inline bool check_stop(const AdmmState& state, const SolveConfig& cfg, int n, const PenaltyMetric& metric) {
    if (state.residual_history.empty()) return false;
    const ResidualRecord& last = state.residual_history.back();
    const StopTolerances tol = stop_tolerances(state, cfg, n, metric);
    return last.primal <= tol.primal && last.dual <= tol.dual;
}

inline bool check_stop(const AdmmState& state, const SolveConfig& cfg, int n) {
    return check_stop(state, cfg, n, PenaltyMetric::identity(state.rows()));
}

/// Residual balancing: rho grows by tau when the primal residual dominates by
/// more than `ratio`, shrinks when the dual residual does. Scaled duals are
/// rescaled by the inverse factor. Returns the factor applied to rho.
inline double penalty_factor(double primal, double dual, const SolveConfig& cfg) {
    if (primal > cfg.penalty_ratio * dual) return cfg.penalty_tau;
    if (dual > cfg.penalty_ratio * primal) return 1.0 / cfg.penalty_tau;
    return 1.0;
}

inline AdmmState adapt_penalty(AdmmState state, double primal, double dual, const SolveConfig& cfg) {
    const double factor = penalty_factor(primal, dual, cfg);
    if (factor != 1.0) {
        state.rho *= factor;
        state.dual_E /= factor;
        state.dual_S /= factor;
    }
    return state;
}

/// rho * (||dual - dual_from||^2 + ||v - v_from||^2) for the values the step
/// started from.
inline double combined_residual(const AdmmState& state, const Matrix& e_from, const Matrix& s_from,
                                const Matrix& dual_e_from, const Matrix& dual_s_from, double rho,
                                const PenaltyMetric& metric) {
    return rho * (metric.squared_norm(state.dual_E - dual_e_from) + metric.squared_norm(state.dual_S - dual_s_from) +
                  metric.squared_norm(state.E - e_from) + metric.squared_norm(state.S - s_from));
}

namespace detail {

/// Lines 2-4 of one ADMM cycle from the given (possibly over-relaxed) start.
inline AdmmState admm_cycle(const AdmmState& base, const Matrix& e_from, const Matrix& s_from,
                            const Matrix& dual_e_from, const Matrix& dual_s_from, const LaplaceOperator& op,
                            double mu, EnergySolver& solver) {
    AdmmState next;
    next.rho = base.rho;
    next.iter = base.iter + 1;
    next.Phi = project_A_orthonormal(0.5 * ((e_from + dual_e_from) + (s_from + dual_s_from)), op.mass);
    next.E = update_E(next.Phi, dual_e_from, next.rho, solver);
    next.S = update_S(next.Phi, dual_s_from, next.rho, mu, solver.metric().weights());
    next.dual_E = dual_e_from + (next.E - next.Phi);
    next.dual_S = dual_s_from + (next.S - next.Phi);
    return next;
}

} // namespace detail

/// One unaccelerated cycle. Appends (primal, dual, c_k) to the history.
inline AdmmState admm_step(AdmmState state, const LaplaceOperator& op, const SolveConfig& cfg,
                           EnergySolver& solver) {
    AdmmState next =
        detail::admm_cycle(state, state.E, state.S, state.dual_E, state.dual_S, op, cfg.mu, solver);
    ResidualRecord r = residuals(state, next, next.rho, solver.metric());
    r.combined = combined_residual(next, state.E, state.S, state.dual_E, state.dual_S, next.rho, solver.metric());
    next.residual_history = std::move(state.residual_history);
    next.residual_history.push_back(r);
    return next;
}

/// Portable uniform [0,1) draw: the top 53 bits of a 64-bit Mersenne twister.
inline double uniform01(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

inline constexpr const char* kRngName = "mt19937_64/top53";

/// Smallest penalty for which K generalized eigenvectors are a fixed point of
/// the iteration at mu = 0. Below it the Phi-step flips the sign of the modes
/// whose scaled eigenvalue exceeds rho and the iteration cycles.
inline double eigen_start_penalty_bound(const SparseSymmetric& mass, double largest_eigenvalue) {
    const double mean = (mass.matrix() * Eigen::VectorXd::Ones(mass.dimension())).mean();
    return mean * largest_eigenvalue;
}

inline AdmmState initialize(const LaplaceOperator& op, const SolveConfig& cfg) {
    cfg.validate();
    const int n = op.dimension();
    if (cfg.K > n) throw ConfigError("K", "exceeds the number of vertices (" + std::to_string(n) + ")");

    AdmmState state;
    state.rho = cfg.rho0;
    if (cfg.init == InitPolicy::eigenfunctions) {
        const EigenPairs eig = generalized_eigs(op.weight, op.mass, cfg.K);
        state.Phi = eig.vectors;
        state.E = eig.vectors;
        state.S = eig.vectors;
    } else {
        std::mt19937_64 gen(cfg.seed);
        auto fill = [&](Matrix& m) {
            m.resize(n, cfg.K);
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = uniform01(gen);
        };
        fill(state.Phi);
        fill(state.E);
        fill(state.S);
        state.Phi = project_A_orthonormal(state.Phi, op.mass);
    }
    state.dual_E = Matrix::Zero(n, cfg.K);
    state.dual_S = Matrix::Zero(n, cfg.K);
    return state;
}

} // namespace cmm
