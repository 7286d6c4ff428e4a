#include "frl/agents.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "frl/errors.hpp"
#include "frl/eval.hpp"

namespace frl::agents {

const char* to_string(Algorithm a) {
    switch (a) {
        case Algorithm::decqn: return "decqn";
        case Algorithm::bcq: return "bcq";
        case Algorithm::cql: return "cql";
        case Algorithm::iql: return "iql";
        case Algorithm::onestep: return "onestep";
        case Algorithm::bc: return "bc";
        case Algorithm::online_decqn: return "online-decqn";
    }
    return "?";
}

Algorithm algorithm_from_string(const std::string& s) {
    if (s == "decqn") return Algorithm::decqn;
    if (s == "bcq") return Algorithm::bcq;
    if (s == "cql") return Algorithm::cql;
    if (s == "iql") return Algorithm::iql;
    if (s == "onestep") return Algorithm::onestep;
    if (s == "bc") return Algorithm::bc;
    if (s == "online-decqn") return Algorithm::online_decqn;
    throw ConfigError("unknown algorithm: " + s);
}

void AgentConfig::validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("agent: gamma must lie in [0,1]");
    if (!(polyak_mu > 0.0 && polyak_mu <= 1.0))
        throw ConfigError("agent: target update rate must lie in (0,1]");
    if (!(learning_rate > 0.0)) throw ConfigError("agent: learning rate must be positive");
    if (batch_size < 1) throw ConfigError("agent: batch size must be >= 1");
    if (gradient_updates < 1) throw ConfigError("agent: gradient updates must be >= 1");
    if (hidden_width < 1) throw ConfigError("agent: hidden width must be >= 1");
    if (!(huber_delta > 0.0)) throw ConfigError("agent: huber delta must be positive");
    if (grad_clip_norm < 0.0) throw ConfigError("agent: gradient clip must be >= 0");
    if (!(bcq_tau >= 0.0 && bcq_tau <= 1.0)) throw ConfigError("agent: bcq tau must lie in [0,1]");
    if (cql_alpha < 0.0) throw ConfigError("agent: cql alpha must be >= 0");
    if (!(iql_tau > 0.0 && iql_tau < 1.0)) throw ConfigError("agent: iql tau must lie in (0,1)");
    if (!(iql_lambda > 0.0)) throw ConfigError("agent: iql lambda must be positive");
    if (!(onestep_lambda > 0.0)) throw ConfigError("agent: onestep lambda must be positive");
    if (!(exploration_epsilon >= 0.0 && exploration_epsilon <= 1.0))
        throw ConfigError("agent: exploration epsilon must lie in [0,1]");
    if (replay_capacity < 1) throw ConfigError("agent: replay capacity must be >= 1");
    if (metrics_interval < 1 || eval_interval < 1 || checkpoint_interval < 1)
        throw ConfigError("agent: logging intervals must be >= 1");
    if (eval_episodes < 1) throw ConfigError("agent: eval episodes must be >= 1");
    const bool mean_only = algorithm == Algorithm::bcq || algorithm == Algorithm::iql ||
                           algorithm == Algorithm::onestep;
    if (mean_only && mode != DecompMode::mean)
        throw ConfigError(std::string("agent: ") + to_string(algorithm) +
                          " supports the mean decomposition only");
}

// --- Reference operations ---------------------------------------------------

std::vector<bool> bcq_allowed(std::span<const double> probs, double tau) {
    if (probs.empty()) throw DimensionError("bcq_allowed: empty probabilities");
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("bcq_allowed: tau in [0,1]");
    double max_p = probs[0];
    for (double p : probs) {
        if (p < 0.0) throw std::invalid_argument("bcq_allowed: negative probability");
        max_p = std::max(max_p, p);
    }
    if (!(max_p > 0.0)) throw std::invalid_argument("bcq_allowed: all probabilities zero");
    std::vector<bool> mask(probs.size());
    for (std::size_t j = 0; j < probs.size(); ++j) mask[j] = probs[j] >= tau * max_p;
    return mask;
}

double bcq_target(double reward, const UtilityValues& next_utilities_target,
                  const std::vector<std::vector<double>>& next_policy_probs, double gamma,
                  double tau, bool terminal) {
    if (terminal) return reward;
    const std::size_t dims = next_utilities_target.per_dim.size();
    if (next_policy_probs.size() != dims)
        throw DimensionError("bcq_target: probs/utilities dimension mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < dims; ++i) {
        const auto& utilities = next_utilities_target.per_dim[i];
        const auto& probs = next_policy_probs[i];
        if (probs.size() != utilities.size())
            throw DimensionError("bcq_target: probs width mismatch");
        double max_p = 0.0;
        for (double p : probs) max_p = std::max(max_p, p);
        const double cutoff = tau * max_p;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < utilities.size(); ++j)
            if (probs[j] >= cutoff) best = std::max(best, utilities[j]);
        sum += best;
    }
    return reward + gamma * sum / static_cast<double>(dims);
}

double cql_penalty(const std::vector<UtilityValues>& utilities_batch,
                   const std::vector<FactoredAction>& actions_batch, double alpha) {
    if (alpha < 0.0) throw std::invalid_argument("cql_penalty: alpha must be >= 0");
    if (utilities_batch.size() != actions_batch.size())
        throw DimensionError("cql_penalty: batch size mismatch");
    if (utilities_batch.empty()) throw std::invalid_argument("cql_penalty: empty batch");
    if (alpha == 0.0) return 0.0;
    double total = 0.0;
    for (std::size_t b = 0; b < utilities_batch.size(); ++b) {
        const auto& dims = utilities_batch[b].per_dim;
        const auto& action = actions_batch[b];
        if (action.size() != dims.size()) throw DimensionError("cql_penalty: action mismatch");
        double per_sample = 0.0;
        for (std::size_t i = 0; i < dims.size(); ++i) {
            const auto& u = dims[i];
            double m = u[0];
            for (double x : u) m = std::max(m, x);
            double s = 0.0;
            for (double x : u) s += std::exp(x - m);
            per_sample += (m + std::log(s)) - u[static_cast<std::size_t>(action[i])];
        }
        total += per_sample / static_cast<double>(dims.size());
    }
    return alpha * total / static_cast<double>(utilities_batch.size());
}

double expectile_loss(double q, double v, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("expectile: tau in (0,1)");
    const double u = q - v;
    const double asym = std::fabs(tau - (u < 0.0 ? 1.0 : 0.0));
    return asym * u * u;
}

FactoredAction iql_extract(const UtilityValues& advantages,
                           const std::vector<std::vector<double>>& log_pi, double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("iql_extract: lambda must be positive");
    if (advantages.per_dim.size() != log_pi.size())
        throw DimensionError("iql_extract: dimension mismatch");
    FactoredAction action(advantages.per_dim.size(), 0);
    for (std::size_t i = 0; i < advantages.per_dim.size(); ++i) {
        const auto& adv = advantages.per_dim[i];
        const auto& lp = log_pi[i];
        if (adv.size() != lp.size()) throw DimensionError("iql_extract: width mismatch");
        int best = 0;
        double best_score = adv[0] / lambda + lp[0];
        for (std::size_t j = 1; j < adv.size(); ++j) {
            const double score = adv[j] / lambda + lp[j];
            if (score > best_score) {
                best_score = score;
                best = static_cast<int>(j);
            }
        }
        action[i] = best;
    }
    return action;
}

double onestep_value(const std::vector<std::vector<double>>& policy_probs,
                     const UtilityValues& target_utilities) {
    const std::size_t dims = target_utilities.per_dim.size();
    if (policy_probs.size() != dims) throw DimensionError("onestep_value: dimension mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < dims; ++i) {
        const auto& probs = policy_probs[i];
        const auto& utilities = target_utilities.per_dim[i];
        if (probs.size() != utilities.size()) throw DimensionError("onestep_value: width mismatch");
        double mass = 0.0;
        double expectation = 0.0;
        for (std::size_t j = 0; j < probs.size(); ++j) {
            mass += probs[j];
            expectation += probs[j] * utilities[j];
        }
        if (std::fabs(mass - 1.0) > 1e-6)
            throw std::invalid_argument("onestep_value: probabilities must sum to 1");
        sum += expectation;
    }
    return sum / static_cast<double>(dims);
}

double bc_loss(const std::vector<std::vector<std::vector<double>>>& log_pi_batch,
               const std::vector<FactoredAction>& actions_batch) {
    if (log_pi_batch.size() != actions_batch.size())
        throw DimensionError("bc_loss: batch size mismatch");
    if (log_pi_batch.empty()) throw std::invalid_argument("bc_loss: empty batch");
    double total = 0.0;
    for (std::size_t b = 0; b < log_pi_batch.size(); ++b) {
        const auto& dims = log_pi_batch[b];
        const auto& action = actions_batch[b];
        if (dims.size() != action.size()) throw DimensionError("bc_loss: action mismatch");
        double per_sample = 0.0;
        for (std::size_t i = 0; i < dims.size(); ++i)
            per_sample -= dims[i][static_cast<std::size_t>(action[i])];
        total += per_sample / static_cast<double>(dims.size());
    }
    return total / static_cast<double>(log_pi_batch.size());
}

// --- Agent -------------------------------------------------------------------

namespace {

UtilityValues slice_utilities(const std::vector<double>& flat, const ActionSpec& spec) {
    UtilityValues u;
    u.per_dim.resize(spec.n.size());
    int off = 0;
    for (std::size_t i = 0; i < spec.n.size(); ++i) {
        u.per_dim[i].assign(flat.begin() + off, flat.begin() + off + spec.n[i]);
        off += spec.n[i];
    }
    return u;
}

std::vector<double> mean_two(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = 0.5 * (a[i] + b[i]);
    return out;
}

}  // namespace

bool Agent::has_policy_net() const {
    switch (cfg.algorithm) {
        case Algorithm::bcq:
        case Algorithm::iql:
        case Algorithm::onestep:
        case Algorithm::bc: return true;
        default: return false;
    }
}

bool Agent::has_value_net() const { return cfg.algorithm == Algorithm::iql; }

UtilityValues Agent::utilities(std::span<const double> obs) const {
    std::vector<double> flat = nn::forward(critic1, obs);
    if (cfg.dual_critic) flat = mean_two(flat, nn::forward(critic2, obs));
    return slice_utilities(flat, spec);
}

UtilityValues Agent::target_utilities(std::span<const double> obs) const {
    std::vector<double> flat = nn::forward(target1, obs);
    if (cfg.dual_critic) flat = mean_two(flat, nn::forward(target2, obs));
    return slice_utilities(flat, spec);
}

std::vector<std::vector<double>> Agent::policy_log_probs(std::span<const double> obs) const {
    const std::vector<double> flat = nn::forward(policy, obs);
    std::vector<std::vector<double>> out(spec.n.size());
    int off = 0;
    for (std::size_t i = 0; i < spec.n.size(); ++i) {
        out[i] = nn::log_softmax(std::span<const double>(flat.data() + off,
                                                         static_cast<std::size_t>(spec.n[i])));
        off += spec.n[i];
    }
    return out;
}

double Agent::state_value(std::span<const double> obs) const {
    return nn::forward(value, obs)[0];
}

FactoredAction Agent::act_greedy(std::span<const double> obs) const {
    switch (cfg.algorithm) {
        case Algorithm::decqn:
        case Algorithm::cql:
        case Algorithm::online_decqn:
            return greedy_action(utilities(obs));
        case Algorithm::bc: {
            const auto log_pi = policy_log_probs(obs);
            FactoredAction action(log_pi.size(), 0);
            for (std::size_t i = 0; i < log_pi.size(); ++i) {
                int best = 0;
                for (std::size_t j = 1; j < log_pi[i].size(); ++j)
                    if (log_pi[i][j] > log_pi[i][static_cast<std::size_t>(best)])
                        best = static_cast<int>(j);
                action[i] = best;
            }
            return action;
        }
        case Algorithm::bcq: {
            const UtilityValues u = utilities(obs);
            const auto log_pi = policy_log_probs(obs);
            FactoredAction action(u.per_dim.size(), 0);
            for (std::size_t i = 0; i < u.per_dim.size(); ++i) {
                std::vector<double> probs(log_pi[i].size());
                for (std::size_t j = 0; j < probs.size(); ++j) probs[j] = std::exp(log_pi[i][j]);
                const auto mask = bcq_allowed(probs, cfg.bcq_tau);
                int best = -1;
                for (std::size_t j = 0; j < mask.size(); ++j) {
                    if (!mask[j]) continue;
                    if (best < 0 || u.per_dim[i][j] > u.per_dim[i][static_cast<std::size_t>(best)])
                        best = static_cast<int>(j);
                }
                action[i] = best;
            }
            return action;
        }
        case Algorithm::iql:
        case Algorithm::onestep: {
            const UtilityValues u = utilities(obs);
            const auto log_pi = policy_log_probs(obs);
            double v;
            if (cfg.algorithm == Algorithm::iql) {
                v = state_value(obs);
            } else {
                std::vector<std::vector<double>> probs(log_pi.size());
                for (std::size_t i = 0; i < log_pi.size(); ++i) {
                    probs[i].resize(log_pi[i].size());
                    for (std::size_t j = 0; j < probs[i].size(); ++j)
                        probs[i][j] = std::exp(log_pi[i][j]);
                }
                v = onestep_value(probs, u);
            }
            UtilityValues advantages = u;
            for (auto& dim : advantages.per_dim)
                for (double& x : dim) x -= v;
            const double lambda =
                cfg.algorithm == Algorithm::iql ? cfg.iql_lambda : cfg.onestep_lambda;
            return iql_extract(advantages, log_pi, lambda);
        }
    }
    throw std::logic_error("act_greedy: unhandled algorithm");
}

Agent make_agent(const AgentConfig& cfg, const ActionSpec& spec, int obs_dim,
                 std::uint64_t seed) {
    cfg.validate();
    spec.validate();
    if (obs_dim < 1) throw DimensionError("make_agent: obs_dim must be >= 1");

    Agent agent;
    agent.cfg = cfg;
    agent.spec = spec;
    agent.obs_dim = obs_dim;

    int out = 0;
    for (int n : spec.n) out += n;

    Rng r1 = Rng::substream(seed, 1);
    agent.critic1 = nn::make_mlp(obs_dim, cfg.hidden_width, out, r1);
    agent.target1 = agent.critic1;
    agent.critic1_opt = nn::make_adam_state(agent.critic1);
    if (cfg.dual_critic) {
        Rng r2 = Rng::substream(seed, 2);
        agent.critic2 = nn::make_mlp(obs_dim, cfg.hidden_width, out, r2);
        agent.target2 = agent.critic2;
        agent.critic2_opt = nn::make_adam_state(agent.critic2);
    }
    if (agent.has_policy_net()) {
        Rng r3 = Rng::substream(seed, 3);
        agent.policy = nn::make_mlp(obs_dim, cfg.hidden_width, out, r3);
        agent.policy_opt = nn::make_adam_state(agent.policy);
    }
    if (agent.has_value_net()) {
        Rng r4 = Rng::substream(seed, 4);
        agent.value = nn::make_mlp(obs_dim, cfg.hidden_width, 1, r4);
        agent.value_opt = nn::make_adam_state(agent.value);
    }
    return agent;
}

data::Policy greedy_policy(const Agent& agent) {
    auto shared = std::make_shared<const Agent>(agent);
    return [shared](std::span<const double> obs) { return shared->act_greedy(obs); };
}

// --- Training ------------------------------------------------------------------

namespace {

struct BatchView {
    nn::Matrix states;
    nn::Matrix next_states;
    std::vector<int> actions;  // batch x dims
    std::vector<double> rewards;
    std::vector<char> terminals;
    int size = 0;
};

template <typename GetTransition>
BatchView assemble(int batch_size, int obs_dim, int dims, const GetTransition& get) {
    BatchView b;
    b.size = batch_size;
    b.states = nn::Matrix(batch_size, obs_dim);
    b.next_states = nn::Matrix(batch_size, obs_dim);
    b.actions.resize(static_cast<std::size_t>(batch_size) * dims);
    b.rewards.resize(static_cast<std::size_t>(batch_size));
    b.terminals.resize(static_cast<std::size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
        const data::Transition& t = get(i);
        std::copy(t.state.begin(), t.state.end(), b.states.row(i));
        std::copy(t.next_state.begin(), t.next_state.end(), b.next_states.row(i));
        for (int d = 0; d < dims; ++d) b.actions[static_cast<std::size_t>(i) * dims + d] = t.action[d];
        b.rewards[static_cast<std::size_t>(i)] = t.reward;
        b.terminals[static_cast<std::size_t>(i)] = t.terminal ? 1 : 0;
    }
    return b;
}

// Scratch buffers reused across updates so the per-sample reference ops run
// without allocating.
struct UpdateScratch {
    UtilityValues next_util;
    std::vector<std::vector<double>> next_probs;
    nn::Matrix mean_target_next;
    nn::Matrix mean_target_cur;
    nn::Matrix policy_next;

    void init(const ActionSpec& spec) {
        next_util.per_dim.resize(spec.n.size());
        next_probs.resize(spec.n.size());
        for (std::size_t i = 0; i < spec.n.size(); ++i) {
            next_util.per_dim[i].resize(static_cast<std::size_t>(spec.n[i]));
            next_probs[i].resize(static_cast<std::size_t>(spec.n[i]));
        }
    }
};

void mean_into(nn::Matrix& dst, const nn::Matrix& a, const nn::Matrix& b) {
    dst = a;
    for (std::size_t i = 0; i < dst.data.size(); ++i)
        dst.data[i] = 0.5 * (a.data[i] + b.data[i]);
}

void fill_utilities_row(UtilityValues& u, const double* row, const ActionSpec& spec) {
    int off = 0;
    for (std::size_t i = 0; i < spec.n.size(); ++i) {
        for (int j = 0; j < spec.n[i]; ++j) u.per_dim[i][static_cast<std::size_t>(j)] = row[off + j];
        off += spec.n[i];
    }
}

void fill_softmax_row(std::vector<std::vector<double>>& probs, const double* row,
                      const ActionSpec& spec) {
    int off = 0;
    for (std::size_t i = 0; i < spec.n.size(); ++i) {
        const int width = spec.n[i];
        double m = row[off];
        for (int j = 1; j < width; ++j) m = std::max(m, row[off + j]);
        double s = 0.0;
        for (int j = 0; j < width; ++j) {
            probs[i][static_cast<std::size_t>(j)] = std::exp(row[off + j] - m);
            s += probs[i][static_cast<std::size_t>(j)];
        }
        for (int j = 0; j < width; ++j) probs[i][static_cast<std::size_t>(j)] /= s;
        off += width;
    }
}

class Trainer {
public:
    Trainer(Agent& agent) : agent_(agent) {
        const ActionSpec& spec = agent.spec;
        dims_ = spec.dims();
        scratch_.init(spec);

        critic_spec_.kind = agent.cfg.algorithm == Algorithm::cql ? nn::LossKind::cql_augmented
                                                                  : nn::LossKind::huber;
        critic_spec_.slices = spec.n;
        critic_spec_.huber_delta = agent.cfg.huber_delta;
        critic_spec_.cql_alpha = agent.cfg.cql_alpha;
        switch (agent.cfg.mode) {
            case DecompMode::mean:
                critic_spec_.select_weight = 1.0 / dims_;
                break;
            case DecompMode::sum:
                critic_spec_.select_weight = 1.0;
                break;
            case DecompMode::independent:
                critic_spec_.select_weight = 1.0 / dims_;
                critic_spec_.per_slice_targets = true;
                break;
        }

        policy_spec_.kind = nn::LossKind::nll;
        policy_spec_.slices = spec.n;
        policy_spec_.select_weight = 1.0 / dims_;

        value_spec_.kind = nn::LossKind::expectile;
        value_spec_.slices = {1};
        value_spec_.select_weight = 1.0;
        value_spec_.expectile_tau = agent.cfg.iql_tau;
    }

    MetricsRow update(const BatchView& batch) {
        const AgentConfig& cfg = agent_.cfg;
        MetricsRow row;
        row.update = agent_.updates_done + 1;

        if (agent_.has_policy_net()) {
            nn::LossBatch pb;
            pb.inputs = batch.states;
            pb.actions = batch.actions;
            row.policy_loss = step_net(agent_.policy, agent_.policy_opt, pb, policy_spec_);
        }

        if (cfg.algorithm != Algorithm::bc) {
            nn::LossBatch cb;
            cb.inputs = batch.states;
            cb.actions = batch.actions;
            build_targets(batch, cb);

            const double l1 = step_net(agent_.critic1, agent_.critic1_opt, cb, critic_spec_);
            double td = l1;
            if (cfg.dual_critic) {
                const double l2 = step_net(agent_.critic2, agent_.critic2_opt, cb, critic_spec_);
                td = 0.5 * (l1 + l2);
            }
            row.td_loss = td;

            if (agent_.has_value_net()) {
                nn::LossBatch vb;
                vb.inputs = batch.states;
                vb.actions.assign(static_cast<std::size_t>(batch.size), 0);
                vb.targets = value_targets(batch);
                row.value_loss = step_net(agent_.value, agent_.value_opt, vb, value_spec_);
            }

            nn::polyak(agent_.target1, agent_.critic1, cfg.polyak_mu);
            if (cfg.dual_critic) nn::polyak(agent_.target2, agent_.critic2, cfg.polyak_mu);
        }

        agent_.updates_done += 1;
        return row;
    }

private:
    double step_net(nn::NetParams& params, nn::AdamState& opt, const nn::LossBatch& batch,
                    const nn::LossSpec& spec) {
        nn::BackwardResult res = nn::backward(params, batch, spec);
        if (agent_.cfg.grad_clip_norm > 0.0) nn::clip_global_norm(res.grads, agent_.cfg.grad_clip_norm);
        nn::adam_step(params, res.grads, opt, agent_.cfg.learning_rate);
        return res.loss;
    }

    // Bootstrap targets for the critic loss, per the algorithm's rule.
    void build_targets(const BatchView& batch, nn::LossBatch& cb) {
        const AgentConfig& cfg = agent_.cfg;
        const ActionSpec& spec = agent_.spec;
        const int B = batch.size;

        const nn::Matrix t1 = nn::forward_batch(agent_.target1, batch.next_states);
        if (cfg.dual_critic) {
            const nn::Matrix t2 = nn::forward_batch(agent_.target2, batch.next_states);
            mean_into(scratch_.mean_target_next, t1, t2);
        } else {
            scratch_.mean_target_next = t1;
        }

        const bool needs_policy = cfg.algorithm == Algorithm::bcq || cfg.algorithm == Algorithm::onestep;
        if (needs_policy) scratch_.policy_next = nn::forward_batch(agent_.policy, batch.next_states);

        std::vector<double> value_next;
        if (cfg.algorithm == Algorithm::iql) {
            const nn::Matrix v = nn::forward_batch(agent_.value, batch.next_states);
            value_next.resize(static_cast<std::size_t>(B));
            for (int i = 0; i < B; ++i) value_next[static_cast<std::size_t>(i)] = v.at(i, 0);
        }

        if (cfg.mode == DecompMode::independent) {
            cb.slice_targets.resize(static_cast<std::size_t>(B) * dims_);
            for (int i = 0; i < B; ++i) {
                fill_utilities_row(scratch_.next_util, scratch_.mean_target_next.row(i), spec);
                const std::vector<double> y =
                    bdq_targets(batch.rewards[static_cast<std::size_t>(i)], scratch_.next_util,
                                cfg.gamma, batch.terminals[static_cast<std::size_t>(i)] != 0);
                std::copy(y.begin(), y.end(), cb.slice_targets.begin() + static_cast<std::size_t>(i) * dims_);
            }
            return;
        }

        cb.targets.resize(static_cast<std::size_t>(B));
        for (int i = 0; i < B; ++i) {
            const double r = batch.rewards[static_cast<std::size_t>(i)];
            const bool terminal = batch.terminals[static_cast<std::size_t>(i)] != 0;
            fill_utilities_row(scratch_.next_util, scratch_.mean_target_next.row(i), spec);
            double y = 0.0;
            switch (cfg.algorithm) {
                case Algorithm::decqn:
                case Algorithm::cql:
                case Algorithm::online_decqn:
                    y = decqn_target(r, scratch_.next_util, cfg.gamma, cfg.mode, terminal);
                    break;
                case Algorithm::bcq:
                    fill_softmax_row(scratch_.next_probs, scratch_.policy_next.row(i), spec);
                    y = bcq_target(r, scratch_.next_util, scratch_.next_probs, cfg.gamma,
                                   cfg.bcq_tau, terminal);
                    break;
                case Algorithm::onestep:
                    if (terminal) {
                        y = r;
                    } else {
                        fill_softmax_row(scratch_.next_probs, scratch_.policy_next.row(i), spec);
                        y = r + cfg.gamma * onestep_value(scratch_.next_probs, scratch_.next_util);
                    }
                    break;
                case Algorithm::iql:
                    y = terminal ? r : r + cfg.gamma * value_next[static_cast<std::size_t>(i)];
                    break;
                case Algorithm::bc:
                    break;
            }
            cb.targets[static_cast<std::size_t>(i)] = y;
        }
    }

    // Expectile regression targets: the target critics' Q at the observed
    // state-action pair.
    std::vector<double> value_targets(const BatchView& batch) {
        const ActionSpec& spec = agent_.spec;
        const int B = batch.size;
        const nn::Matrix t1 = nn::forward_batch(agent_.target1, batch.states);
        if (agent_.cfg.dual_critic) {
            const nn::Matrix t2 = nn::forward_batch(agent_.target2, batch.states);
            mean_into(scratch_.mean_target_cur, t1, t2);
        } else {
            scratch_.mean_target_cur = t1;
        }
        std::vector<double> q(static_cast<std::size_t>(B));
        for (int i = 0; i < B; ++i) {
            const double* row = scratch_.mean_target_cur.row(i);
            double sum = 0.0;
            int off = 0;
            for (int d = 0; d < dims_; ++d) {
                sum += row[off + batch.actions[static_cast<std::size_t>(i) * dims_ + d]];
                off += spec.n[static_cast<std::size_t>(d)];
            }
            q[static_cast<std::size_t>(i)] = sum / dims_;
        }
        return q;
    }

    Agent& agent_;
    int dims_ = 0;
    UpdateScratch scratch_;
    nn::LossSpec critic_spec_;
    nn::LossSpec policy_spec_;
    nn::LossSpec value_spec_;
};

std::string rng_state_hex(const std::array<std::uint64_t, 4>& s) {
    char buf[80];
    std::snprintf(buf, sizeof(buf), "%016llx %016llx %016llx %016llx",
                  static_cast<unsigned long long>(s[0]), static_cast<unsigned long long>(s[1]),
                  static_cast<unsigned long long>(s[2]), static_cast<unsigned long long>(s[3]));
    return buf;
}

std::array<std::uint64_t, 4> rng_state_from_hex(const std::string& text) {
    std::array<std::uint64_t, 4> s{};
    std::istringstream in(text);
    for (auto& w : s) {
        std::string tok;
        if (!(in >> tok)) throw FormatError(FormatError::Kind::truncated, "snapshot: bad rng state");
        w = std::stoull(tok, nullptr, 16);
    }
    return s;
}

}  // namespace

// --- Checkpointing ---------------------------------------------------------

namespace {

struct SnapshotMeta {
    long update = 0;
    bool has_rng = false;
    std::array<std::uint64_t, 4> rng_state{};
};

void save_agent_impl(const std::string& dir, const Agent& agent, const SnapshotMeta* meta) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto path = [&](const char* name) { return (fs::path(dir) / name).string(); };

    nn::save_net(agent.critic1, &agent.critic1_opt, path("critic1.frlnet"));
    nn::save_net(agent.target1, nullptr, path("target1.frlnet"));
    if (agent.cfg.dual_critic) {
        nn::save_net(agent.critic2, &agent.critic2_opt, path("critic2.frlnet"));
        nn::save_net(agent.target2, nullptr, path("target2.frlnet"));
    }
    if (agent.has_policy_net()) nn::save_net(agent.policy, &agent.policy_opt, path("policy.frlnet"));
    if (agent.has_value_net()) nn::save_net(agent.value, &agent.value_opt, path("value.frlnet"));

    std::ofstream out(path("manifest.txt"));
    if (!out) throw IoError("cannot write agent manifest in " + dir);
    out << "format = frl-agent-v1\n";
    out << "algorithm = " << to_string(agent.cfg.algorithm) << "\n";
    out << "obs_dim = " << agent.obs_dim << "\n";
    out << "actions =";
    for (int n : agent.spec.n) out << ' ' << n;
    out << "\n";
    out << "dual_critic = " << (agent.cfg.dual_critic ? 1 : 0) << "\n";
    out << "updates_done = " << agent.updates_done << "\n";
    out << "roles = critic1 target1";
    if (agent.cfg.dual_critic) out << " critic2 target2";
    if (agent.has_policy_net()) out << " policy";
    if (agent.has_value_net()) out << " value";
    out << "\n";
    if (meta) {
        out << "snapshot_update = " << meta->update << "\n";
        if (meta->has_rng) out << "snapshot_rng = " << rng_state_hex(meta->rng_state) << "\n";
    }
    if (!out) throw IoError("write failed for agent manifest in " + dir);
}

std::map<std::string, std::string> read_manifest(const std::string& dir) {
    std::ifstream in(std::filesystem::path(dir) / "manifest.txt");
    if (!in) throw IoError("missing agent manifest in " + dir);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
            while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t'))
                s.pop_back();
        };
        trim(key);
        trim(val);
        kv[key] = val;
    }
    return kv;
}

}  // namespace

void save_agent(const std::string& dir, const Agent& agent) { save_agent_impl(dir, agent, nullptr); }

Agent load_agent(const std::string& dir, const AgentConfig& cfg) {
    namespace fs = std::filesystem;
    const auto kv = read_manifest(dir);
    if (kv.count("format") && kv.at("format") != "frl-agent-v1")
        throw FormatError(FormatError::Kind::version_mismatch, "agent manifest: unknown format");

    Agent agent;
    agent.cfg = cfg;
    if (kv.count("algorithm")) agent.cfg.algorithm = algorithm_from_string(kv.at("algorithm"));
    agent.obs_dim = std::stoi(kv.at("obs_dim"));
    {
        std::istringstream in(kv.at("actions"));
        int n;
        while (in >> n) agent.spec.n.push_back(n);
    }
    agent.cfg.dual_critic = kv.at("dual_critic") == "1";
    if (kv.count("updates_done")) agent.updates_done = std::stol(kv.at("updates_done"));

    auto path = [&](const char* name) { return (fs::path(dir) / name).string(); };
    auto load_with_opt = [&](const char* name, nn::NetParams& params, nn::AdamState& opt) {
        nn::LoadedNet loaded = nn::load_net(path(name));
        params = std::move(loaded.params);
        opt = loaded.opt ? std::move(*loaded.opt) : nn::make_adam_state(params);
    };
    load_with_opt("critic1.frlnet", agent.critic1, agent.critic1_opt);
    agent.target1 = nn::load_net(path("target1.frlnet")).params;
    if (agent.cfg.dual_critic) {
        load_with_opt("critic2.frlnet", agent.critic2, agent.critic2_opt);
        agent.target2 = nn::load_net(path("target2.frlnet")).params;
    }
    if (agent.has_policy_net()) load_with_opt("policy.frlnet", agent.policy, agent.policy_opt);
    if (agent.has_value_net()) load_with_opt("value.frlnet", agent.value, agent.value_opt);
    return agent;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "update,td_loss,policy_loss,value_loss,cql_term,eval_return\n";
    out.precision(17);
    for (const auto& row : rows) {
        out << row.update << ',' << row.td_loss << ',' << row.policy_loss << ','
            << row.value_loss << ',' << row.cql_term << ',';
        if (std::isfinite(row.eval_return)) out << row.eval_return;
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

// --- Offline training --------------------------------------------------------

TrainResult train_offline(const data::Dataset& dataset, const AgentConfig& cfg,
                          std::uint64_t seed, const TrainOptions& opts) {
    cfg.validate();
    dataset.validate();
    if (dataset.transitions.empty()) throw std::invalid_argument("train_offline: empty dataset");
    if (cfg.algorithm == Algorithm::online_decqn)
        throw ConfigError("train_offline: online-decqn is the online algorithm");

    const ActionSpec spec = dataset.header.spec;
    const int obs_dim = dataset.header.obs_dim;

    Agent agent = make_agent(cfg, spec, obs_dim, seed);
    Rng batch_rng = Rng::substream(seed, 0);
    long start_update = 0;

    namespace fs = std::filesystem;
    const bool persist = !opts.output_dir.empty();
    const std::string latest_dir =
        persist ? (fs::path(opts.output_dir) / "ckpt_last").string() : std::string();

    if (opts.resume && persist && fs::exists(fs::path(latest_dir) / "manifest.txt")) {
        const auto kv = read_manifest(latest_dir);
        agent = load_agent(latest_dir, cfg);
        if (kv.count("snapshot_update")) start_update = std::stol(kv.at("snapshot_update"));
        if (kv.count("snapshot_rng")) batch_rng.set_state(rng_state_from_hex(kv.at("snapshot_rng")));
        agent.updates_done = start_update;
    }

    Trainer trainer(agent);
    TrainResult result;
    result.metrics.reserve(static_cast<std::size_t>(cfg.gradient_updates / cfg.metrics_interval + 2));

    const int dims = spec.dims();
    for (long update = start_update + 1; update <= cfg.gradient_updates; ++update) {
        const auto idx = data::sample_indices(dataset, cfg.batch_size, batch_rng);
        const BatchView batch = assemble(cfg.batch_size, obs_dim, dims, [&](int i) -> const data::Transition& {
            return dataset.transitions[idx[static_cast<std::size_t>(i)]];
        });

        MetricsRow row;
        try {
            row = trainer.update(batch);
        } catch (const DivergenceError& e) {
            throw DivergenceError("training diverged at update " + std::to_string(update) + ": " +
                                      e.what(),
                                  e.batch_index);
        }

        const bool record = update % cfg.metrics_interval == 0 || update == cfg.gradient_updates;
        if (record) {
            if (cfg.algorithm == Algorithm::cql && cfg.cql_alpha > 0.0) {
                // Penalty portion of the loss, logged as a diagnostic.
                std::vector<UtilityValues> us;
                std::vector<FactoredAction> as;
                us.reserve(static_cast<std::size_t>(batch.size));
                as.reserve(static_cast<std::size_t>(batch.size));
                for (int i = 0; i < batch.size; ++i) {
                    std::vector<double> obs(batch.states.row(i), batch.states.row(i) + obs_dim);
                    us.push_back(agent.utilities(obs));
                    as.emplace_back(batch.actions.begin() + static_cast<std::size_t>(i) * dims,
                                    batch.actions.begin() + static_cast<std::size_t>(i + 1) * dims);
                }
                row.cql_term = cql_penalty(us, as, cfg.cql_alpha);
            }
            if (opts.eval_env && update % cfg.eval_interval == 0) {
                const auto [mean_ret, se] = eval::rollout_return(
                    *opts.eval_env, greedy_policy(agent), cfg.eval_episodes,
                    hash_u64(seed ^ (0xe7a1ULL + static_cast<std::uint64_t>(update))));
                row.eval_return = mean_ret;
                (void)se;
            }
            result.metrics.push_back(row);
        }

        if (persist &&
            (update % cfg.checkpoint_interval == 0 || update == cfg.gradient_updates)) {
            SnapshotMeta meta;
            meta.update = update;
            meta.has_rng = true;
            meta.rng_state = batch_rng.state();
            save_agent_impl(latest_dir, agent, &meta);
        }
    }

    if (persist) {
        save_agent((fs::path(opts.output_dir) / "agent").string(), agent);
        write_metrics_csv(result.metrics, (fs::path(opts.output_dir) / "metrics.csv").string());
    }

    result.agent = std::move(agent);
    return result;
}

// --- Online training ---------------------------------------------------------

OnlineResult train_online(const maze::MazeConfig& env_cfg, const AgentConfig& cfg,
                          std::uint64_t seed, const OnlineOptions& opts) {
    cfg.validate();
    env_cfg.validate();
    if (cfg.algorithm != Algorithm::online_decqn)
        throw ConfigError("train_online: algorithm must be online-decqn");

    const ActionSpec spec = env_cfg.action_spec();
    const int dims = spec.dims();
    const int obs_dim = 2;

    Agent agent = make_agent(cfg, spec, obs_dim, seed);
    Trainer trainer(agent);

    maze::MazeEnv env(env_cfg, hash_u64(seed ^ 0xe57ULL));
    Rng batch_rng = Rng::substream(seed, 0);
    Rng explore = Rng::substream(seed, 5);

    std::vector<data::Transition> replay;
    replay.reserve(static_cast<std::size_t>(std::min<long>(cfg.replay_capacity, opts.max_env_steps)));
    std::size_t replay_head = 0;

    OnlineResult result;
    std::vector<double> obs = env.observation();

    for (long step = 1; step <= opts.max_env_steps; ++step) {
        FactoredAction action = greedy_action(agent.utilities(obs));
        for (int d = 0; d < dims; ++d) {
            if (explore.uniform() < cfg.exploration_epsilon)
                action[static_cast<std::size_t>(d)] =
                    static_cast<int>(explore.uniform_int(static_cast<std::uint64_t>(spec.n[d])));
        }
        const maze::StepResult sr = env.step(action);

        data::Transition t;
        t.state = obs;
        t.action = action;
        t.reward = sr.reward;
        t.next_state = env.observation();
        t.terminal = sr.reached_goal;
        if (static_cast<long>(replay.size()) < cfg.replay_capacity) {
            replay.push_back(std::move(t));
        } else {
            replay[replay_head] = std::move(t);
            replay_head = (replay_head + 1) % replay.size();
        }

        if (sr.done) {
            env.reset();
            obs = env.observation();
        } else {
            obs = env.observation();
        }

        if (step > cfg.warmup_steps) {
            const BatchView batch =
                assemble(cfg.batch_size, obs_dim, dims, [&](int i) -> const data::Transition& {
                    (void)i;
                    return replay[static_cast<std::size_t>(batch_rng.uniform_int(replay.size()))];
                });
            try {
                trainer.update(batch);
            } catch (const DivergenceError& e) {
                throw DivergenceError("online training diverged at env step " +
                                          std::to_string(step) + ": " + e.what(),
                                      e.batch_index);
            }
        }

        if (step % cfg.eval_interval == 0) {
            const auto [mean_ret, se] =
                eval::rollout_return(env_cfg, greedy_policy(agent), cfg.eval_episodes,
                                     hash_u64(seed ^ (0xeea1ULL + static_cast<std::uint64_t>(step))));
            (void)se;
            result.curve.push_back(EvalPoint{step, mean_ret});
            if (opts.medium_return && !result.medium_agent && mean_ret >= *opts.medium_return) {
                result.medium_agent = agent;
                result.medium_eval = mean_ret;
            }
            if (opts.stop_return && mean_ret >= *opts.stop_return) {
                result.reached_stop = true;
                result.env_steps = step;
                break;
            }
        }
    }
    if (result.env_steps == 0) result.env_steps = opts.max_env_steps;

    if (!opts.output_dir.empty()) {
        save_agent((std::filesystem::path(opts.output_dir) / "expert").string(), agent);
        if (result.medium_agent)
            save_agent((std::filesystem::path(opts.output_dir) / "medium").string(), *result.medium_agent);
    }

    result.agent = std::move(agent);
    return result;
}

}  // namespace frl::agents
