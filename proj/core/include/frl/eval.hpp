#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "frl/agents.hpp"
#include "frl/dataset.hpp"
#include "frl/maze.hpp"

namespace frl::eval {

struct EvalReport {
    int episodes = 0;
    double mean_return = 0.0;
    double std_error = 0.0;
    double normalized_score = 0.0;
    std::uint64_t seed = 0;
};

struct QErrorTrace {
    std::vector<std::pair<long, double>> samples;  // (update count, mean abs error)
};

/// Mean and standard error of undiscounted episode returns under `policy`.
std::pair<double, double> rollout_return(const maze::MazeConfig& cfg, const data::Policy& policy,
                                         int episodes, std::uint64_t seed);

/// 100 * (score - random) / (expert - random). Anchors must differ.
double normalized_score(double score, double random_anchor, double expert_anchor);

/// Monte-Carlo value-error diagnostic: roll the agent's greedy policy,
/// compare its decomposed Q of each action taken against the discounted sum
/// of the rewards actually observed from that point, and average the
/// absolute errors over the first `horizon` states of each rollout.
double mc_q_error(const maze::MazeConfig& cfg, const agents::Agent& agent, double gamma,
                  int rollouts, int horizon, std::uint64_t seed);

void write_report_csv(const EvalReport& report, const std::string& path);
EvalReport read_report_csv(const std::string& path);

void write_qerror_csv(const QErrorTrace& trace, const std::string& path);

}  // namespace frl::eval
