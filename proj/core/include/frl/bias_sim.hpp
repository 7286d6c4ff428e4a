#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frl/decomp.hpp"

namespace frl::sim {

/// Setup for the overestimation-bias simulations: per-dimension action
/// counts, in-distribution noise half-width b, out-of-distribution widening
/// factor k, and the two repetition counts.
struct NoiseSimConfig {
    ActionSpec spec;
    double b = 1.0;
    double k = 2.0;
    double gamma = 1.0;
    long inner_reps = 10000;
    long outer_reps = 100;
    std::uint64_t seed = 0;

    void validate() const;
};

struct CoverageStats {
    double mean = 0.0;
    double variance = 0.0;
    double se_mean = 0.0;
    double se_var = 0.0;  // moment-based standard error of the variance estimate
};

/// One row per in-distribution count 0..prod(n_i); index equals coverage.
struct SimCurve {
    std::vector<CoverageStats> by_coverage;
};

/// Expected maximum of `card` iid uniform(-b, b) errors, scaled by gamma:
/// gamma * b * (card - 1) / (card + 1).
double closed_form_mean(std::uint64_t card, double b, double gamma);

/// Matching variance, gamma * 4 b^2 card / ((card+1)^2 (card+2)). Note the
/// single factor of gamma, as the source formula gives it.
double closed_form_var(std::uint64_t card, double b, double gamma);

/// Atomic-representation simulation: for each coverage level, the mean and
/// variance of gamma * max over a pooled sample of in/out-of-distribution
/// uniform errors.
SimCurve simulate_dqn(const NoiseSimConfig& cfg);

/// Factorised-representation simulation: coverage is a sampled set of atomic
/// actions whose per-dimension projections decide which sub-action errors
/// are in-distribution; the statistic is gamma times the mean over
/// dimensions of the per-dimension pooled maxima. Statistics pool all
/// outer x inner draws.
SimCurve simulate_decqn(const NoiseSimConfig& cfg);

/// CSV columns: coverage, mean_dqn, var_dqn, se_mean_dqn, se_var_dqn,
/// mean_dec, var_dec, se_mean_dec, se_var_dec.
void write_comparison_csv(const SimCurve& dqn, const SimCurve& dec, const std::string& path);

}  // namespace frl::sim
