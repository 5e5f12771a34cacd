#pragma once

// Nesterov over-relaxation with restart around the ADMM cycle.
//
// Each iteration starts the Phi/E/S updates from over-relaxed shadows of the
// (E, S) block and of the duals. The combined residual
//   c_k = rho (||dual_k - dual_hat_k||^2 + ||v_k - v_hat_k||^2)
// drives the restart test. Two rules are available:
//   paper:     alpha_k <- 1 when c_k < eta c_{k-1}; iterates are never reverted.
//   goldstein: when c_k >= eta c_{k-1}, alpha <- 1, the next shadows fall back
//              to the previous iterates and c_k <- c_{k-1} / eta.

#include <cmm/admm.hpp>
#include <cmm/config.hpp>
#include <cmm/operators.hpp>
#include <cmm/spectra.hpp>

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

namespace cmm {

struct MomentumState {
    double alpha = 1.0;
    Matrix v_hat_E;
    Matrix v_hat_S;
    Matrix dual_hat_E;
    Matrix dual_hat_S;
    double c_prev = std::numeric_limits<double>::infinity();
    Matrix prev_E;
    Matrix prev_S;
    Matrix prev_dual_E;
    Matrix prev_dual_S;
};

/// Fresh momentum: alpha = 1, shadows equal to the iterates, c_0 = +inf.
inline MomentumState init_momentum(const AdmmState& state) {
    MomentumState m;
    m.v_hat_E = m.prev_E = state.E;
    m.v_hat_S = m.prev_S = state.S;
    m.dual_hat_E = m.prev_dual_E = state.dual_E;
    m.dual_hat_S = m.prev_dual_S = state.dual_S;
    return m;
}

/// c_k = rho (||dual - dual_hat||^2 + ||v - v_hat||^2) in the given metric.
inline double combined_residual(const AdmmState& state, const MomentumState& m, double rho,
                                const PenaltyMetric& metric) {
    return combined_residual(state, m.v_hat_E, m.v_hat_S, m.dual_hat_E, m.dual_hat_S, rho, metric);
}

inline double combined_residual(const AdmmState& state, const MomentumState& m, double rho) {
    return combined_residual(state, m, rho, PenaltyMetric::identity(state.rows()));
}

inline double update_alpha(double alpha) { return 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * alpha * alpha)); }

struct AcceleratedStep {
    AdmmState state;
    MomentumState momentum;
    bool restarted = false;
    double alpha_used = 1.0; ///< alpha_k after the restart test
};

/// One iteration of the accelerated scheme. The history entry appended to
/// the returned state carries (primal, dual, c_k).
inline AcceleratedStep accelerated_step(AdmmState state, MomentumState m, const LaplaceOperator& op,
                                        const SolveConfig& cfg, EnergySolver& solver) {
    AdmmState next = detail::admm_cycle(state, m.v_hat_E, m.v_hat_S, m.dual_hat_E, m.dual_hat_S, op, cfg.mu, solver);
    ResidualRecord r = residuals(state, next, next.rho, solver.metric());
    r.combined = combined_residual(next, m, next.rho, solver.metric());
    next.residual_history = std::move(state.residual_history);
    next.residual_history.push_back(r);

    const double c_k = r.combined;
    const bool decreased = c_k < cfg.eta * m.c_prev;
    AcceleratedStep out;
    double alpha_k = m.alpha;

    if (cfg.restart_rule == RestartRule::paper) {
        if (decreased) {
            alpha_k = 1.0;
            out.restarted = true;
        }
    } else if (!decreased) {
        out.restarted = true;
        out.alpha_used = alpha_k;
        m.alpha = 1.0;
        m.v_hat_E = m.prev_E;
        m.v_hat_S = m.prev_S;
        m.dual_hat_E = m.prev_dual_E;
        m.dual_hat_S = m.prev_dual_S;
        m.c_prev = m.c_prev / cfg.eta;
        m.prev_E = next.E;
        m.prev_S = next.S;
        m.prev_dual_E = next.dual_E;
        m.prev_dual_S = next.dual_S;
        out.state = std::move(next);
        out.momentum = std::move(m);
        return out;
    }

    const double alpha_next = update_alpha(alpha_k);
    const double coef = (alpha_k - 1.0) / alpha_next;
    if (coef == 0.0) {
        m.v_hat_E = next.E;
        m.v_hat_S = next.S;
        m.dual_hat_E = next.dual_E;
        m.dual_hat_S = next.dual_S;
    } else {
        m.v_hat_E = next.E + coef * (next.E - m.prev_E);
        m.v_hat_S = next.S + coef * (next.S - m.prev_S);
        m.dual_hat_E = next.dual_E + coef * (next.dual_E - m.prev_dual_E);
        m.dual_hat_S = next.dual_S + coef * (next.dual_S - m.prev_dual_S);
    }
    m.prev_E = next.E;
    m.prev_S = next.S;
    m.prev_dual_E = next.dual_E;
    m.prev_dual_S = next.dual_S;
    m.alpha = alpha_next;
    m.c_prev = c_k;

    out.alpha_used = alpha_k;
    out.state = std::move(next);
    out.momentum = std::move(m);
    return out;
}

struct TraceRecord {
    int iter = 0;
    double primal = 0.0;
    double dual = 0.0;
    double c_k = 0.0;
    double rho = 0.0;
    double objective = 0.0;
    // In-memory only; not part of the CSV schema.
    double alpha = 1.0;
    bool restarted = false;
};

struct ConvergenceTrace {
    std::vector<TraceRecord> records;
};

inline void write_trace_header(std::ostream& out) { out << "iter,primal,dual,c_k,rho,objective\n"; }

inline void write_trace_rows(std::ostream& out, std::span<const TraceRecord> rows) {
    const auto old = out.precision(std::numeric_limits<double>::max_digits10);
    for (const TraceRecord& t : rows)
        out << t.iter << ',' << t.primal << ',' << t.dual << ',' << t.c_k << ',' << t.rho << ',' << t.objective << '\n';
    out.precision(old);
}

inline void write_trace_csv(std::ostream& out, const ConvergenceTrace& trace) {
    write_trace_header(out);
    write_trace_rows(out, trace.records);
}

/// Receives trace records in batches while a solve runs.
using TraceSink = std::function<void(std::span<const TraceRecord>)>;

inline constexpr std::size_t kTraceFlushInterval = 100;

struct SolveResult {
    ModeSet modes;
    ConvergenceTrace trace;
    AdmmState state; ///< returned iterate (last on convergence, best-scoring otherwise)
    bool converged = false;
    int iterations = 0;
    int factorizations = 0;
    double orthonormality_error = 0.0;
    double wall_time = 0.0; ///< seconds
};

/// Runs ADMM or accelerated ADMM from `initial` until the stopping rule holds
/// or max_iter is reached. When the cap is hit, `converged` is false and the
/// iterate with the smallest residual-to-tolerance ratio is returned.
inline SolveResult solve_from(AdmmState initial, const LaplaceOperator& op, const SolveConfig& cfg,
                              const TraceSink& sink = {}) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const int n = op.dimension();
    EnergySolver solver(op.weight, PenaltyMetric::from_mass(op.mass));

    AdmmState state = std::move(initial);
    MomentumState momentum = init_momentum(state);
    SolveResult result;
    std::size_t flushed = 0;
    bool truncated = false;
    double best_score = std::numeric_limits<double>::infinity();
    AdmmState best;

    auto flush = [&](bool all) {
        if (!sink) return;
        const std::size_t pending = result.trace.records.size() - flushed;
        if (pending == 0 || (!all && pending < kTraceFlushInterval)) return;
        sink(std::span<const TraceRecord>(result.trace.records).subspan(flushed));
        flushed = result.trace.records.size();
    };

    for (int k = 0; k < cfg.max_iter; ++k) {
        TraceRecord rec;
        if (cfg.variant == Variant::fast_admm) {
            AcceleratedStep step = accelerated_step(std::move(state), std::move(momentum), op, cfg, solver);
            state = std::move(step.state);
            momentum = std::move(step.momentum);
            rec.alpha = step.alpha_used;
            rec.restarted = step.restarted;
        } else {
            state = admm_step(std::move(state), op, cfg, solver);
        }
        const ResidualRecord& r = state.residual_history.back();
        rec.iter = state.iter;
        rec.primal = r.primal;
        rec.dual = r.dual;
        rec.c_k = r.combined;
        rec.rho = state.rho;
        rec.objective = objective(state.Phi, op.weight, cfg.mu);
        result.trace.records.push_back(rec);
        flush(false);

        const StopTolerances tol = stop_tolerances(state, cfg, n, solver.metric());
        if (r.primal <= tol.primal && r.dual <= tol.dual) {
            result.converged = true;
            break;
        }
        const double score = std::max(r.primal / tol.primal, r.dual / tol.dual);
        if (score < best_score) {
            best_score = score;
            best.Phi = state.Phi;
            best.E = state.E;
            best.S = state.S;
            best.dual_E = state.dual_E;
            best.dual_S = state.dual_S;
            best.rho = state.rho;
            best.iter = state.iter;
        }

        if (cfg.truncation && !truncated && state.iter == cfg.truncation->after_iterations) {
            truncated = true;
            const double tol_zero = cfg.truncation->tolerance;
            const Matrix cut = state.Phi.unaryExpr([tol_zero](double v) { return std::abs(v) < tol_zero ? 0.0 : v; });
            state.E = cut;
            state.S = cut;
            state.Phi = project_A_orthonormal(cut, op.mass);
            state.dual_E.setZero();
            state.dual_S.setZero();
            momentum = init_momentum(state);
            continue;
        }

        const bool frozen = cfg.penalty_freeze_after > 0 && state.iter >= cfg.penalty_freeze_after;
        if (cfg.penalty_adapt && !frozen) {
            const double factor = penalty_factor(r.primal, r.dual, cfg);
            if (factor != 1.0) {
                state.rho *= factor;
                state.dual_E /= factor;
                state.dual_S /= factor;
                momentum.dual_hat_E /= factor;
                momentum.dual_hat_S /= factor;
                momentum.prev_dual_E /= factor;
                momentum.prev_dual_S /= factor;
            }
        }
    }
    flush(true);

    if (!result.converged && best.Phi.size() > 0) {
        best.residual_history = std::move(state.residual_history);
        state = std::move(best);
    }
    result.iterations = static_cast<int>(result.trace.records.size());
    result.factorizations = solver.factorizations();
    result.orthonormality_error = orthonormality_error(state.Phi, op.mass);
    result.modes = package_modes(state.Phi, op, cfg.mu, cfg.order, cfg.flip);
    result.state = std::move(state);
    result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

inline SolveResult solve(const LaplaceOperator& op, const SolveConfig& cfg, const TraceSink& sink = {}) {
    return solve_from(initialize(op, cfg), op, cfg, sink);
}

} // namespace cmm
