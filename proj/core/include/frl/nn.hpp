#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "frl/rng.hpp"

namespace frl::nn {

/// Dense row-major matrix of doubles. Deliberately minimal: the training
/// stack only needs batched affine maps and elementwise work.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

/// One affine layer, y = W x + b. Weights are (out x in) row-major.
struct Linear {
    Matrix w;
    std::vector<double> b;
};

/// Parameters of a ReLU multilayer perceptron. Layers are applied in order
/// with ReLU between them and no activation on the last layer. The stock
/// architecture is two hidden layers of `hidden_width` units.
struct NetParams {
    std::vector<Linear> layers;

    int input_dim() const { return layers.empty() ? 0 : layers.front().w.cols; }
    int output_dim() const { return layers.empty() ? 0 : layers.back().w.rows; }
    bool finite() const;
    /// Layer sizes must chain: out(l) == in(l+1).
    void validate() const;
};

/// Fresh 2-hidden-layer MLP. Hidden weights use Kaiming-uniform fan-in
/// scaling, the output layer uniform +-1/sqrt(fan_in), biases zero.
NetParams make_mlp(int input_dim, int hidden_width, int output_dim, Rng& rng);

/// Arbitrary layer stack, same init rules; used for small test nets.
NetParams make_net(const std::vector<int>& dims, Rng& rng);

/// Single-input forward pass.
std::vector<double> forward(const NetParams& params, std::span<const double> input);

/// Batched forward pass; `inputs` is (batch x input_dim).
Matrix forward_batch(const NetParams& params, const Matrix& inputs);

/// Loss families supported by `backward`. All are means over the batch.
enum class LossKind { huber, mse, nll, expectile, cql_augmented };

/// Describes how a network's output vector turns into a scalar loss.
///
/// The output is split into consecutive slices (one per action dimension;
/// scalar heads use a single slice of width 1). Per sample, one entry of each
/// slice is selected by an index, and:
///
///   huber / mse      prediction = select_weight * sum of selected entries,
///                    compared against the sample's scalar target
///   expectile        same prediction; asymmetric squared error with the
///                    residual taken as target - prediction
///   nll              select_weight * sum over slices of the negative
///                    log-softmax of the selected entry
///   cql_augmented    the huber loss plus cql_alpha * mean over slices of
///                    (logsumexp(slice) - selected entry)
struct LossSpec {
    LossKind kind = LossKind::mse;
    std::vector<int> slices;
    double select_weight = 1.0;
    double huber_delta = 1.0;
    double expectile_tau = 0.5;
    double cql_alpha = 0.0;
    /// Huber only: each slice regresses its selected entry onto its own
    /// target (LossBatch::slice_targets), select_weight weighting each term.
    /// Used by independent (per-dimension) learners.
    bool per_slice_targets = false;
};

/// A batch for `backward`. `actions` is row-major (batch x slices). For
/// nll the `targets` vector is unused and may be empty; with
/// per_slice_targets, `slice_targets` (batch x slices) replaces `targets`.
struct LossBatch {
    Matrix inputs;
    std::vector<double> targets;
    std::vector<double> slice_targets;
    std::vector<int> actions;
};

/// Gradients, one entry per layer, shapes mirroring NetParams.
struct GradBundle {
    std::vector<Linear> layers;

    double global_norm() const;
    bool finite() const;
};

struct BackwardResult {
    double loss = 0.0;
    GradBundle grads;
};

/// Reverse-mode gradients of the batch-mean loss. Throws DimensionError on
/// shape mismatch, std::invalid_argument on an empty batch, and
/// DivergenceError (with the offending sample index) when the loss is not
/// finite.
BackwardResult backward(const NetParams& params, const LossBatch& batch, const LossSpec& spec);

/// Pointwise Huber value: 0.5 u^2 for |u| <= delta, else delta(|u| - delta/2).
double huber(double pred, double target, double delta = 1.0);

/// Numerically stable log-softmax (max subtraction).
std::vector<double> log_softmax(std::span<const double> logits);

/// Adam moments; shapes mirror the parameters they update.
struct AdamState {
    std::vector<Linear> m;
    std::vector<Linear> v;
    std::uint64_t step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

AdamState make_adam_state(const NetParams& params);

/// One bias-corrected Adam update. Refuses non-finite gradients by throwing
/// DivergenceError; `state.step_count` increments exactly once per call.
void adam_step(NetParams& params, const GradBundle& grads, AdamState& state, double learning_rate);

/// target <- mu * online + (1 - mu) * target, entrywise.
void polyak(NetParams& target, const NetParams& online, double mu);

/// Scales all gradients by max_norm / ||g||_2 when the global norm exceeds
/// max_norm; otherwise leaves them untouched.
void clip_global_norm(GradBundle& grads, double max_norm);

// --- Checkpoint format ("FRLNET1\0", little-endian; see docs/formats.md) ---

void save_net(const NetParams& params, const AdamState* opt, const std::string& path);
void write_net(std::ostream& out, const NetParams& params, const AdamState* opt);

struct LoadedNet {
    NetParams params;
    std::optional<AdamState> opt;
};

LoadedNet load_net(const std::string& path);
LoadedNet read_net(std::istream& in);

}  // namespace frl::nn
