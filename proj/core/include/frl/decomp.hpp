#pragma once

#include <cstdint>
#include <vector>

namespace frl {

/// A factorised action: one sub-action index per dimension.
using FactoredAction = std::vector<int>;

/// Shape of a factorisable action space: N dimensions, n[i] sub-actions each.
struct ActionSpec {
    std::vector<int> n;

    int dims() const { return static_cast<int>(n.size()); }
    void validate() const;
    bool valid_action(const FactoredAction& a) const;
};

struct ActionCounts {
    std::uint64_t atomic = 0;    // product of the n_i (saturated when overflowed)
    std::uint64_t factored = 0;  // sum of the n_i
    bool overflow = false;
};

/// (product, sum) of sub-action counts; flags overflow instead of wrapping.
ActionCounts action_counts(const ActionSpec& spec);

/// Per-dimension utility arrays, the decomposed analogue of a Q-row.
struct UtilityValues {
    std::vector<std::vector<double>> per_dim;

    int dims() const { return static_cast<int>(per_dim.size()); }
};

/// How per-dimension utilities aggregate into a global value.
/// `independent` treats each dimension as its own Q-function and therefore
/// has no global Q; see bdq_targets.
enum class DecompMode { mean, sum, independent };

/// Global Q-value of `action` under the given aggregation.
double q_value(const UtilityValues& utilities, const FactoredAction& action, DecompMode mode);

/// Per-dimension argmax; ties break toward the lowest index.
FactoredAction greedy_action(const UtilityValues& utilities);

/// Bootstrapped target y = r + gamma * aggregate of per-dimension maxima
/// (zero bootstrap on terminal transitions).
double decqn_target(double reward, const UtilityValues& next_utilities_target, double gamma,
                    DecompMode mode, bool terminal);

/// Independent-learner targets, y_i = r + gamma * max_a U^i(a).
std::vector<double> bdq_targets(double reward, const UtilityValues& next_utilities_target,
                                double gamma, bool terminal);

}  // namespace frl
