#include "frl/eval.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "frl/errors.hpp"

namespace frl::eval {

namespace {

/// Kahan-compensated sum; keeps episode aggregation order-independent in
/// practice.
double kahan_sum(const std::vector<double>& xs) {
    double sum = 0.0;
    double c = 0.0;
    for (double x : xs) {
        const double y = x - c;
        const double t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    return sum;
}

}  // namespace

std::pair<double, double> rollout_return(const maze::MazeConfig& cfg, const data::Policy& policy,
                                         int episodes, std::uint64_t seed) {
    if (episodes < 1) throw std::invalid_argument("rollout_return: episodes must be >= 1");
    maze::MazeEnv env(cfg, hash_u64(seed ^ 0x5011ed1ULL));
    std::vector<double> returns;
    returns.reserve(static_cast<std::size_t>(episodes));
    for (int e = 0; e < episodes; ++e) {
        env.reset();
        double ep_return = 0.0;
        while (true) {
            const FactoredAction action = policy(env.observation());
            const maze::StepResult r = env.step(action);
            ep_return += r.reward;
            if (r.done) break;
        }
        returns.push_back(ep_return);
    }
    const double mean = kahan_sum(returns) / episodes;
    double var = 0.0;
    if (episodes > 1) {
        std::vector<double> sq;
        sq.reserve(returns.size());
        for (double r : returns) sq.push_back((r - mean) * (r - mean));
        var = kahan_sum(sq) / (episodes - 1);
    }
    return {mean, std::sqrt(var / episodes)};
}

double normalized_score(double score, double random_anchor, double expert_anchor) {
    if (random_anchor == expert_anchor)
        throw std::invalid_argument("normalized_score: anchors must differ");
    return 100.0 * (score - random_anchor) / (expert_anchor - random_anchor);
}

double mc_q_error(const maze::MazeConfig& cfg, const agents::Agent& agent, double gamma,
                  int rollouts, int horizon, std::uint64_t seed) {
    if (rollouts < 1) throw std::invalid_argument("mc_q_error: rollouts must be >= 1");
    if (horizon < 1) throw std::invalid_argument("mc_q_error: horizon must be >= 1");
    if (agent.cfg.mode == DecompMode::independent)
        throw std::invalid_argument("mc_q_error: independent mode has no global Q");

    double abs_error_sum = 0.0;
    long pairs = 0;
    for (int rollout = 0; rollout < rollouts; ++rollout) {
        maze::MazeEnv env(cfg, hash_u64(seed ^ (0x9c0ULL + static_cast<std::uint64_t>(rollout))));
        env.reset();
        std::vector<std::vector<double>> states;
        std::vector<FactoredAction> actions;
        std::vector<double> rewards;
        while (true) {
            const std::vector<double> obs = env.observation();
            const FactoredAction action = agent.act_greedy(obs);
            const maze::StepResult r = env.step(action);
            states.push_back(obs);
            actions.push_back(action);
            rewards.push_back(r.reward);
            if (r.done) break;
        }
        // Discounted reward-to-go for every visited step.
        std::vector<double> mc(rewards.size());
        double tail = 0.0;
        for (std::size_t t = rewards.size(); t-- > 0;) {
            tail = rewards[t] + gamma * tail;
            mc[t] = tail;
        }
        const std::size_t limit = std::min<std::size_t>(states.size(), static_cast<std::size_t>(horizon));
        for (std::size_t t = 0; t < limit; ++t) {
            const double predicted = q_value(agent.utilities(states[t]), actions[t], agent.cfg.mode);
            abs_error_sum += std::fabs(predicted - mc[t]);
            pairs += 1;
        }
    }
    return abs_error_sum / static_cast<double>(pairs);
}

void write_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.precision(17);
    out << "episodes,mean_return,std_error,normalized_score,seed\n";
    out << report.episodes << ',' << report.mean_return << ',' << report.std_error << ','
        << report.normalized_score << ',' << report.seed << '\n';
    if (!out) throw IoError("write failed: " + path);
}

EvalReport read_report_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::string header, row;
    if (!std::getline(in, header) || !std::getline(in, row))
        throw FormatError(FormatError::Kind::truncated, "eval report: missing data row");
    EvalReport report;
    std::istringstream cells(row);
    std::string cell;
    auto next = [&]() {
        if (!std::getline(cells, cell, ','))
            throw FormatError(FormatError::Kind::truncated, "eval report: short row");
        return cell;
    };
    report.episodes = std::stoi(next());
    report.mean_return = std::stod(next());
    report.std_error = std::stod(next());
    report.normalized_score = std::stod(next());
    report.seed = std::stoull(next());
    return report;
}

void write_qerror_csv(const QErrorTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.precision(17);
    out << "update,mean_abs_error\n";
    for (const auto& [update, err] : trace.samples) out << update << ',' << err << '\n';
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace frl::eval
