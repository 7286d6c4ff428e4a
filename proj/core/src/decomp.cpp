#include "frl/decomp.hpp"

#include <cmath>
#include <limits>

#include "frl/errors.hpp"

namespace frl {

void ActionSpec::validate() const {
    if (n.empty()) throw DimensionError("action spec: need at least one dimension");
    for (int count : n)
        if (count < 1) throw DimensionError("action spec: every dimension needs >= 1 sub-action");
}

bool ActionSpec::valid_action(const FactoredAction& a) const {
    if (a.size() != n.size()) return false;
    for (std::size_t i = 0; i < n.size(); ++i)
        if (a[i] < 0 || a[i] >= n[i]) return false;
    return true;
}

ActionCounts action_counts(const ActionSpec& spec) {
    spec.validate();
    ActionCounts counts;
    counts.atomic = 1;
    for (int count : spec.n) {
        const auto c = static_cast<std::uint64_t>(count);
        if (counts.atomic > std::numeric_limits<std::uint64_t>::max() / c) {
            counts.overflow = true;
            counts.atomic = std::numeric_limits<std::uint64_t>::max();
        } else if (!counts.overflow) {
            counts.atomic *= c;
        }
        counts.factored += c;
    }
    return counts;
}

namespace {

void check_utilities(const UtilityValues& utilities) {
    if (utilities.per_dim.empty()) throw DimensionError("utilities: no dimensions");
    for (const auto& dim : utilities.per_dim)
        if (dim.empty()) throw DimensionError("utilities: empty dimension");
}

}  // namespace

double q_value(const UtilityValues& utilities, const FactoredAction& action, DecompMode mode) {
    check_utilities(utilities);
    if (mode == DecompMode::independent)
        throw std::invalid_argument("q_value: independent mode has no global Q");
    if (action.size() != utilities.per_dim.size())
        throw DimensionError("q_value: action length does not match dimensions");
    double sum = 0.0;
    for (std::size_t i = 0; i < action.size(); ++i) {
        const auto& dim = utilities.per_dim[i];
        if (action[i] < 0 || action[i] >= static_cast<int>(dim.size()))
            throw DimensionError("q_value: sub-action out of range");
        sum += dim[action[i]];
    }
    return mode == DecompMode::mean ? sum / static_cast<double>(action.size()) : sum;
}

FactoredAction greedy_action(const UtilityValues& utilities) {
    check_utilities(utilities);
    FactoredAction action(utilities.per_dim.size(), 0);
    for (std::size_t i = 0; i < utilities.per_dim.size(); ++i) {
        const auto& dim = utilities.per_dim[i];
        int best = 0;
        for (int j = 1; j < static_cast<int>(dim.size()); ++j)
            if (dim[j] > dim[best]) best = j;
        action[i] = best;
    }
    return action;
}

namespace {

double max_of(const std::vector<double>& v) {
    double m = v[0];
    for (double x : v) m = std::max(m, x);
    return m;
}

}  // namespace

double decqn_target(double reward, const UtilityValues& next_utilities_target, double gamma,
                    DecompMode mode, bool terminal) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0,1]");
    if (mode == DecompMode::independent)
        throw std::invalid_argument("decqn_target: use bdq_targets for independent mode");
    if (terminal) return reward;
    check_utilities(next_utilities_target);
    double sum = 0.0;
    for (const auto& dim : next_utilities_target.per_dim) sum += max_of(dim);
    if (mode == DecompMode::mean) sum /= static_cast<double>(next_utilities_target.per_dim.size());
    return reward + gamma * sum;
}

std::vector<double> bdq_targets(double reward, const UtilityValues& next_utilities_target,
                                double gamma, bool terminal) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0,1]");
    check_utilities(next_utilities_target);
    std::vector<double> targets(next_utilities_target.per_dim.size(), reward);
    if (!terminal) {
        for (std::size_t i = 0; i < targets.size(); ++i)
            targets[i] += gamma * max_of(next_utilities_target.per_dim[i]);
    }
    return targets;
}

}  // namespace frl
