#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frl/decomp.hpp"
#include "frl/rng.hpp"

namespace frl::maze {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct Segment {
    Point a;
    Point b;
};

/// Multi-actuator point maze on the unit square. Actuator i pushes at angle
/// 2*pi*i/N when switched on; the move is the vector sum of active actuators
/// plus optional Gaussian noise. A move that would cross a wall or leave the
/// square is cancelled entirely.
struct MazeConfig {
    int actuators = 3;
    double step_size = 0.05;
    int max_steps = 150;
    Point start{0.1, 0.1};
    Point goal{0.9, 0.9};
    double goal_radius = 0.05;
    std::vector<Segment> walls;
    double motion_noise_std = 0.0;

    void validate() const;
    ActionSpec action_spec() const;  // N binary dimensions
};

/// The fixed layout used throughout: start (0.1,0.1), goal (0.9,0.9) with
/// radius 0.05, and one horizontal wall from (0,0.5) to (0.7,0.5) forcing a
/// detour along the right side.
MazeConfig preset(int actuators);

struct StepResult {
    double reward = 0.0;
    bool done = false;
    bool reached_goal = false;
};

class MazeEnv {
public:
    MazeEnv(MazeConfig cfg, std::uint64_t seed);

    /// Fresh episode, RNG stream re-initialised from `seed`.
    void reset(std::uint64_t seed);
    /// Fresh episode, RNG stream continues.
    void reset();

    /// Applies one factored action (0 = off, 1 = on per actuator).
    /// Reward is +100 on reaching the goal (episode ends) and -0.1 per other
    /// step; `done` is also set when the step cap is hit.
    StepResult step(const FactoredAction& action);

    std::vector<double> observation() const { return {pos_.x, pos_.y}; }
    Point position() const { return pos_; }
    int steps_elapsed() const { return steps_; }
    bool done() const { return done_; }
    const MazeConfig& config() const { return cfg_; }

private:
    MazeConfig cfg_;
    Rng rng_;
    Point pos_;
    int steps_ = 0;
    bool done_ = false;
};

/// Mean undiscounted return of uniformly random actions over `episodes`.
double random_policy_return(const MazeConfig& cfg, int episodes, std::uint64_t seed);

struct TrajectoryRow {
    int step = 0;
    Point position;
    FactoredAction action;
    double reward = 0.0;
};

/// Debug dump: step, x, y, one column per actuator bit, reward.
void write_trajectory_csv(const std::vector<TrajectoryRow>& rows, const std::string& path);

}  // namespace frl::maze
