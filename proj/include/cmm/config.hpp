#pragma once

#include <cmm/errors.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

namespace cmm {

enum class InitPolicy { random_uniform, eigenfunctions };
enum class Variant { admm, fast_admm };
enum class RestartRule { paper, goldstein };
enum class OrderBy { compressed, dirichlet };
enum class FlipMethod { extremum, integral, none };

/// Zeroes small entries of Phi after a fixed number of iterations and
/// restarts from the truncated iterate. Off unless set in SolveConfig.
struct TruncationRestart {
    int after_iterations = 300;
    double tolerance = 1e-4;
};

struct SolveConfig {
    double mu = 0.0;
    int K = 1;
    double rho0 = 1.0;
    double eps_abs = 1e-8;
    double eps_rel = 1e-6;
    double eta = 0.999;
    int max_iter = 20000;

    InitPolicy init = InitPolicy::random_uniform;
    std::uint64_t seed = 0;
    Variant variant = Variant::fast_admm;
    RestartRule restart_rule = RestartRule::paper;

    bool penalty_adapt = true;
    double penalty_tau = 2.0;   ///< multiplicative change of rho
    double penalty_ratio = 10.0; ///< residual imbalance that triggers a change
    /// Stop adapting rho after this many iterations; 0 means never.
    int penalty_freeze_after = 0;

    std::optional<TruncationRestart> truncation;

    OrderBy order = OrderBy::compressed;
    FlipMethod flip = FlipMethod::extremum;

    /// Throws ConfigError naming the first offending field.
    void validate() const {
        if (!(std::isfinite(mu) && mu >= 0.0)) throw ConfigError("mu", "must be a finite value >= 0");
        if (K < 1) throw ConfigError("K", "must be >= 1");
        if (!(std::isfinite(rho0) && rho0 > 0.0)) throw ConfigError("rho0", "must be > 0");
        if (!(eps_abs >= 0.0)) throw ConfigError("eps_abs", "must be >= 0");
        if (!(eps_rel >= 0.0)) throw ConfigError("eps_rel", "must be >= 0");
        if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("eta", "must lie in (0, 1)");
        if (max_iter < 1) throw ConfigError("max_iter", "must be >= 1");
        if (!(penalty_tau > 1.0)) throw ConfigError("penalty_tau", "must be > 1");
        if (!(penalty_ratio > 1.0)) throw ConfigError("penalty_ratio", "must be > 1");
        if (penalty_freeze_after < 0) throw ConfigError("penalty_freeze_after", "must be >= 0");
        if (truncation) {
            if (truncation->after_iterations < 1) throw ConfigError("truncation.after_iterations", "must be >= 1");
            if (!(truncation->tolerance >= 0.0)) throw ConfigError("truncation.tolerance", "must be >= 0");
        }
    }
};

inline std::string to_string(InitPolicy p) { return p == InitPolicy::random_uniform ? "random" : "eigen"; }
inline std::string to_string(Variant v) { return v == Variant::admm ? "admm" : "fast_admm"; }
inline std::string to_string(RestartRule r) { return r == RestartRule::paper ? "paper" : "goldstein"; }
inline std::string to_string(OrderBy o) { return o == OrderBy::compressed ? "compressed" : "dirichlet"; }
inline std::string to_string(FlipMethod f) {
    switch (f) {
    case FlipMethod::extremum: return "extremum";
    case FlipMethod::integral: return "integral";
    case FlipMethod::none: return "none";
    }
    return "none";
}

} // namespace cmm
