#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "frl/dataset.hpp"
#include "frl/decomp.hpp"
#include "frl/maze.hpp"
#include "frl/nn.hpp"

namespace frl::agents {

enum class Algorithm { decqn, bcq, cql, iql, onestep, bc, online_decqn };

const char* to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

struct AgentConfig {
    Algorithm algorithm = Algorithm::decqn;
    DecompMode mode = DecompMode::mean;
    double gamma = 0.99;
    double polyak_mu = 0.005;
    double learning_rate = 3e-4;
    int batch_size = 256;
    long gradient_updates = 100000;
    bool dual_critic = true;
    int hidden_width = 512;
    double huber_delta = 1.0;
    double grad_clip_norm = 0.0;  // 0 disables clipping

    // Per-algorithm knobs.
    double bcq_tau = 0.5;
    double cql_alpha = 1.0;
    double iql_tau = 0.5;
    double iql_lambda = 20.0;
    double onestep_lambda = 50.0;

    // Online training only.
    double exploration_epsilon = 0.1;
    long replay_capacity = 100000;
    long warmup_steps = 1000;

    // Logging cadence.
    long metrics_interval = 1000;
    long eval_interval = 1000;
    int eval_episodes = 20;
    long checkpoint_interval = 25000;

    void validate() const;
};

// --- Reference operations used by the training losses and action rules ---

/// Relative-probability mask: keep sub-action j when probs[j] / max(probs)
/// meets `tau`. The argmax always survives.
std::vector<bool> bcq_allowed(std::span<const double> probs, double tau);

/// Constrained bootstrap target: per dimension, max utility over the
/// sub-actions the behaviour policy admits at threshold tau (mean
/// aggregation across dimensions; r alone on terminal).
double bcq_target(double reward, const UtilityValues& next_utilities_target,
                  const std::vector<std::vector<double>>& next_policy_probs, double gamma,
                  double tau, bool terminal);

/// Conservative penalty: alpha * batch mean of the per-dimension mean of
/// logsumexp(U^i) - U^i(a_i). Pushes data sub-actions up relative to the
/// rest; identical to alpha times the softmax behavioural-cloning NLL.
double cql_penalty(const std::vector<UtilityValues>& utilities_batch,
                   const std::vector<FactoredAction>& actions_batch, double alpha);

/// Asymmetric squared error |tau - 1(u<0)| u^2 with u = q - v.
double expectile_loss(double q, double v, double tau);

/// Advantage-weighted extraction: per dimension, argmax of
/// (1/lambda) * A(s,a_i) + log pi^i(a_i|s); ties to the lowest index.
FactoredAction iql_extract(const UtilityValues& advantages,
                           const std::vector<std::vector<double>>& log_pi, double lambda);

/// Behaviour-policy expectation of the decomposed value at the next state:
/// (1/N) sum_i sum_a pi^i(a) U^i(a).
double onestep_value(const std::vector<std::vector<double>>& policy_probs,
                     const UtilityValues& target_utilities);

/// Factorised cloning loss: batch mean of (1/N) sum_i -log pi^i(a_i|s).
double bc_loss(const std::vector<std::vector<std::vector<double>>>& log_pi_batch,
               const std::vector<FactoredAction>& actions_batch);

// --- Agent ---

/// Utility critics (two online + two target), optional per-dimension
/// behaviour policy and state-value nets, and the action rules that go with
/// each algorithm. Plain value type: copying an Agent copies the whole
/// parameter state.
struct Agent {
    AgentConfig cfg;
    ActionSpec spec;
    int obs_dim = 0;

    nn::NetParams critic1, critic2;
    nn::NetParams target1, target2;
    nn::AdamState critic1_opt, critic2_opt;

    nn::NetParams policy;  // bcq / iql / onestep / bc
    nn::AdamState policy_opt;

    nn::NetParams value;  // iql
    nn::AdamState value_opt;

    long updates_done = 0;

    bool has_policy_net() const;
    bool has_value_net() const;

    /// Mean of the online critics' utilities (single critic when dual_critic
    /// is off).
    UtilityValues utilities(std::span<const double> obs) const;
    /// Mean of the target critics' utilities.
    UtilityValues target_utilities(std::span<const double> obs) const;
    /// Per-dimension log-probabilities from the behaviour-policy net.
    std::vector<std::vector<double>> policy_log_probs(std::span<const double> obs) const;
    double state_value(std::span<const double> obs) const;

    /// Evaluation-time action under the algorithm's own rule: plain greedy
    /// for decqn/cql, mask-constrained greedy for bcq, advantage-weighted
    /// extraction for iql/onestep, cloned-policy argmax for bc.
    FactoredAction act_greedy(std::span<const double> obs) const;
};

Agent make_agent(const AgentConfig& cfg, const ActionSpec& spec, int obs_dim, std::uint64_t seed);

// --- Training ---

struct MetricsRow {
    long update = 0;
    double td_loss = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double cql_term = 0.0;
    double eval_return = std::numeric_limits<double>::quiet_NaN();
};

struct TrainOptions {
    std::string output_dir;  // empty: keep everything in memory
    /// When set, a greedy evaluation runs every eval_interval updates and
    /// lands in the metrics log.
    std::optional<maze::MazeConfig> eval_env;
    bool resume = false;  // continue from the newest snapshot in output_dir
};

struct TrainResult {
    Agent agent;
    std::vector<MetricsRow> metrics;
};

/// Offline training: cfg.gradient_updates steps of minibatch updates against
/// `dataset` per the configured algorithm. Throws DivergenceError when a
/// loss goes non-finite.
TrainResult train_offline(const data::Dataset& dataset, const AgentConfig& cfg,
                          std::uint64_t seed, const TrainOptions& opts = {});

struct OnlineOptions {
    std::string output_dir;
    long max_env_steps = 100000;
    /// Stop once the periodic greedy evaluation reaches this return.
    std::optional<double> stop_return;
    /// Snapshot the agent the first time evaluation reaches this return.
    std::optional<double> medium_return;
};

struct EvalPoint {
    long env_step = 0;
    double greedy_return = 0.0;
};

struct OnlineResult {
    Agent agent;
    bool reached_stop = false;
    long env_steps = 0;
    std::vector<EvalPoint> curve;
    std::optional<Agent> medium_agent;
    std::optional<double> medium_eval;
};

/// Online epsilon-greedy training with a FIFO replay buffer, used to
/// produce the expert/medium behaviour checkpoints.
OnlineResult train_online(const maze::MazeConfig& env_cfg, const AgentConfig& cfg,
                          std::uint64_t seed, const OnlineOptions& opts = {});

/// Greedy data-collection policy (optionally with the mean taken over both
/// critics) for a frozen agent.
data::Policy greedy_policy(const Agent& agent);

// --- Checkpointing (one FRLNET file per net + a role manifest) ---

void save_agent(const std::string& dir, const Agent& agent);
Agent load_agent(const std::string& dir, const AgentConfig& cfg);

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);

}  // namespace frl::agents
