#include "frl/maze.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "frl/errors.hpp"

namespace frl::maze {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kGoalReward = 100.0;
constexpr double kStepPenalty = -0.1;

double cross(Point o, Point a, Point b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool on_segment(Point p, Point q, Point r) {
    return std::min(p.x, r.x) <= q.x && q.x <= std::max(p.x, r.x) &&
           std::min(p.y, r.y) <= q.y && q.y <= std::max(p.y, r.y);
}

/// Proper or touching intersection of segments p1p2 and p3p4.
bool segments_intersect(Point p1, Point p2, Point p3, Point p4) {
    const double d1 = cross(p3, p4, p1);
    const double d2 = cross(p3, p4, p2);
    const double d3 = cross(p1, p2, p3);
    const double d4 = cross(p1, p2, p4);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
        ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
        return true;
    if (d1 == 0 && on_segment(p3, p1, p4)) return true;
    if (d2 == 0 && on_segment(p3, p2, p4)) return true;
    if (d3 == 0 && on_segment(p1, p3, p2)) return true;
    if (d4 == 0 && on_segment(p1, p4, p2)) return true;
    return false;
}

bool inside_unit_square(Point p) {
    return p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0;
}

double point_segment_distance(Point p, const Segment& s) {
    const double dx = s.b.x - s.a.x;
    const double dy = s.b.y - s.a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((p.x - s.a.x) * dx + (p.y - s.a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double px = s.a.x + t * dx - p.x;
    const double py = s.a.y + t * dy - p.y;
    return std::sqrt(px * px + py * py);
}

}  // namespace

void MazeConfig::validate() const {
    if (actuators < 1) throw ConfigError("maze: need at least one actuator");
    if (!(step_size > 0.0) || !std::isfinite(step_size))
        throw ConfigError("maze: step_size must be positive");
    if (max_steps < 1) throw ConfigError("maze: max_steps must be >= 1");
    if (!(goal_radius > 0.0)) throw ConfigError("maze: goal_radius must be positive");
    if (motion_noise_std < 0.0) throw ConfigError("maze: motion_noise_std must be >= 0");
    if (!inside_unit_square(start) || !inside_unit_square(goal))
        throw ConfigError("maze: start and goal must lie in the unit square");
    for (const auto& wall : walls) {
        if (!inside_unit_square(wall.a) || !inside_unit_square(wall.b))
            throw ConfigError("maze: wall endpoints must lie in the unit square");
        if (point_segment_distance(start, wall) == 0.0)
            throw ConfigError("maze: start lies on a wall");
        if (point_segment_distance(goal, wall) == 0.0)
            throw ConfigError("maze: goal lies on a wall");
    }
}

ActionSpec MazeConfig::action_spec() const {
    return ActionSpec{std::vector<int>(static_cast<std::size_t>(actuators), 2)};
}

MazeConfig preset(int actuators) {
    MazeConfig cfg;
    cfg.actuators = actuators;
    cfg.walls = {Segment{{0.0, 0.5}, {0.7, 0.5}}};
    return cfg;
}

MazeEnv::MazeEnv(MazeConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), rng_(seed) {
    cfg_.validate();
    pos_ = cfg_.start;
}

void MazeEnv::reset(std::uint64_t seed) {
    rng_ = Rng(seed);
    reset();
}

void MazeEnv::reset() {
    pos_ = cfg_.start;
    steps_ = 0;
    done_ = false;
}

StepResult MazeEnv::step(const FactoredAction& action) {
    if (done_) throw std::logic_error("maze: episode already finished");
    if (static_cast<int>(action.size()) != cfg_.actuators)
        throw DimensionError("maze: action has " + std::to_string(action.size()) +
                             " dimensions, expected " + std::to_string(cfg_.actuators));
    for (std::size_t i = 0; i < action.size(); ++i) {
        if (action[i] != 0 && action[i] != 1)
            throw DimensionError("maze: action dimension " + std::to_string(i) +
                                 " must be 0 (off) or 1 (on)");
    }

    double dx = 0.0;
    double dy = 0.0;
    for (int i = 0; i < cfg_.actuators; ++i) {
        if (action[static_cast<std::size_t>(i)] == 1) {
            const double angle = kTwoPi * i / cfg_.actuators;
            dx += std::cos(angle);
            dy += std::sin(angle);
        }
    }
    dx *= cfg_.step_size;
    dy *= cfg_.step_size;
    if (cfg_.motion_noise_std > 0.0) {
        dx += rng_.normal(0.0, cfg_.motion_noise_std);
        dy += rng_.normal(0.0, cfg_.motion_noise_std);
    }

    const Point proposed{pos_.x + dx, pos_.y + dy};
    bool blocked = !inside_unit_square(proposed);
    if (!blocked) {
        for (const auto& wall : cfg_.walls) {
            if (segments_intersect(pos_, proposed, wall.a, wall.b)) {
                blocked = true;
                break;
            }
        }
    }
    if (!blocked) pos_ = proposed;

    steps_ += 1;

    const double gx = pos_.x - cfg_.goal.x;
    const double gy = pos_.y - cfg_.goal.y;
    const bool at_goal = std::sqrt(gx * gx + gy * gy) <= cfg_.goal_radius;

    StepResult result;
    if (at_goal) {
        result.reward = kGoalReward;
        result.done = true;
        result.reached_goal = true;
    } else {
        result.reward = kStepPenalty;
        result.done = steps_ >= cfg_.max_steps;
    }
    done_ = result.done;
    return result;
}

double random_policy_return(const MazeConfig& cfg, int episodes, std::uint64_t seed) {
    if (episodes < 1) throw std::invalid_argument("random_policy_return: episodes must be >= 1");
    MazeEnv env(cfg, seed);
    Rng action_rng = Rng::substream(seed, 0x7a11);
    double total = 0.0;
    FactoredAction action(static_cast<std::size_t>(cfg.actuators), 0);
    for (int e = 0; e < episodes; ++e) {
        env.reset();
        double ep_return = 0.0;
        while (true) {
            for (auto& bit : action) bit = static_cast<int>(action_rng.uniform_int(2));
            const StepResult r = env.step(action);
            ep_return += r.reward;
            if (r.done) break;
        }
        total += ep_return;
    }
    return total / episodes;
}

void write_trajectory_csv(const std::vector<TrajectoryRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "step,x,y";
    const std::size_t dims = rows.empty() ? 0 : rows.front().action.size();
    for (std::size_t i = 0; i < dims; ++i) out << ",a" << i;
    out << ",reward\n";
    out.precision(17);
    for (const auto& row : rows) {
        out << row.step << ',' << row.position.x << ',' << row.position.y;
        for (int bit : row.action) out << ',' << bit;
        out << ',' << row.reward << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace frl::maze
