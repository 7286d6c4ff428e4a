#include "frl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "frl/errors.hpp"

namespace frl::nn {

namespace {

double dot(const double* a, const double* b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

void check_spec(const NetParams& params, const LossSpec& spec, const LossBatch& batch) {
    const int batch_size = batch.inputs.rows;
    if (batch_size < 1) throw std::invalid_argument("backward: empty batch");
    if (batch.inputs.cols != params.input_dim())
        throw DimensionError("backward: input width does not match network input dim");
    if (spec.slices.empty()) throw DimensionError("backward: loss spec has no output slices");
    int total = 0;
    for (int s : spec.slices) {
        if (s < 1) throw DimensionError("backward: slice width must be positive");
        total += s;
    }
    if (total != params.output_dim())
        throw DimensionError("backward: slices do not cover the network output");
    const std::size_t n_slices = spec.slices.size();
    if (batch.actions.size() != n_slices * static_cast<std::size_t>(batch_size))
        throw DimensionError("backward: actions size must be batch x slices");
    if (spec.per_slice_targets) {
        if (spec.kind != LossKind::huber)
            throw std::invalid_argument("backward: per-slice targets require the huber loss");
        if (batch.slice_targets.size() != n_slices * static_cast<std::size_t>(batch_size))
            throw DimensionError("backward: slice_targets size must be batch x slices");
    } else {
        const bool needs_targets = spec.kind != LossKind::nll;
        if (needs_targets && batch.targets.size() != static_cast<std::size_t>(batch_size))
            throw DimensionError("backward: one scalar target per sample required");
    }
    if (spec.kind == LossKind::huber || spec.kind == LossKind::cql_augmented) {
        if (!(spec.huber_delta > 0.0)) throw std::invalid_argument("huber delta must be positive");
    }
    if (spec.kind == LossKind::expectile) {
        if (!(spec.expectile_tau > 0.0 && spec.expectile_tau < 1.0))
            throw std::invalid_argument("expectile tau must lie in (0,1)");
    }
    if (spec.kind == LossKind::cql_augmented && spec.cql_alpha < 0.0)
        throw std::invalid_argument("cql alpha must be non-negative");
}

double huber_derivative(double u, double delta) {
    if (u > delta) return delta;
    if (u < -delta) return -delta;
    return u;
}

// Per-sample loss and d(loss)/d(output). `out` and `grad` have the net's
// output width; grad starts zeroed. `slice_targets` is non-null only in
// per-slice-target mode.
double loss_head(const LossSpec& spec, const double* out, int out_dim, const int* actions,
                 double target, const double* slice_targets, double* grad) {
    const int n_slices = static_cast<int>(spec.slices.size());
    const double w = spec.select_weight;

    if (spec.per_slice_targets) {
        double loss = 0.0;
        int off = 0;
        for (int i = 0; i < n_slices; ++i) {
            const double u = out[off + actions[i]] - slice_targets[i];
            loss += w * huber(u, 0.0, spec.huber_delta);
            grad[off + actions[i]] += w * huber_derivative(u, spec.huber_delta);
            off += spec.slices[i];
        }
        return loss;
    }

    auto selected_sum = [&]() {
        double p = 0.0;
        int off = 0;
        for (int i = 0; i < n_slices; ++i) {
            p += out[off + actions[i]];
            off += spec.slices[i];
        }
        return p;
    };

    auto scatter_prediction_grad = [&](double dp) {
        int off = 0;
        for (int i = 0; i < n_slices; ++i) {
            grad[off + actions[i]] += dp * w;
            off += spec.slices[i];
        }
    };

    // logsumexp terms shared by nll and the conservative penalty.
    auto slice_lse = [&](int off, int width) {
        double m = out[off];
        for (int j = 1; j < width; ++j) m = std::max(m, out[off + j]);
        double s = 0.0;
        for (int j = 0; j < width; ++j) s += std::exp(out[off + j] - m);
        return m + std::log(s);
    };

    switch (spec.kind) {
        case LossKind::mse: {
            const double u = w * selected_sum() - target;
            scatter_prediction_grad(2.0 * u);
            return u * u;
        }
        case LossKind::huber: {
            const double u = w * selected_sum() - target;
            scatter_prediction_grad(huber_derivative(u, spec.huber_delta));
            return huber(u, 0.0, spec.huber_delta);
        }
        case LossKind::expectile: {
            const double u = target - w * selected_sum();
            const double asym = std::fabs(spec.expectile_tau - (u < 0.0 ? 1.0 : 0.0));
            scatter_prediction_grad(-2.0 * asym * u);
            return asym * u * u;
        }
        case LossKind::nll: {
            double loss = 0.0;
            int off = 0;
            for (int i = 0; i < n_slices; ++i) {
                const int width = spec.slices[i];
                const double lse = slice_lse(off, width);
                loss += w * (lse - out[off + actions[i]]);
                for (int j = 0; j < width; ++j) {
                    const double soft = std::exp(out[off + j] - lse);
                    grad[off + j] += w * (soft - (j == actions[i] ? 1.0 : 0.0));
                }
                off += width;
            }
            return loss;
        }
        case LossKind::cql_augmented: {
            const double u = w * selected_sum() - target;
            scatter_prediction_grad(huber_derivative(u, spec.huber_delta));
            double loss = huber(u, 0.0, spec.huber_delta);
            if (spec.cql_alpha != 0.0) {
                const double aw = spec.cql_alpha / n_slices;
                int off = 0;
                for (int i = 0; i < n_slices; ++i) {
                    const int width = spec.slices[i];
                    const double lse = slice_lse(off, width);
                    loss += aw * (lse - out[off + actions[i]]);
                    for (int j = 0; j < width; ++j) {
                        const double soft = std::exp(out[off + j] - lse);
                        grad[off + j] += aw * (soft - (j == actions[i] ? 1.0 : 0.0));
                    }
                    off += width;
                }
            }
            return loss;
        }
    }
    return 0.0;
}

}  // namespace

bool NetParams::finite() const {
    for (const auto& layer : layers) {
        if (!all_finite(layer.w.data) || !all_finite(layer.b)) return false;
    }
    return true;
}

void NetParams::validate() const {
    if (layers.empty()) throw DimensionError("network has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& lin = layers[l];
        if (lin.w.rows < 1 || lin.w.cols < 1) throw DimensionError("layer with empty shape");
        if (static_cast<int>(lin.b.size()) != lin.w.rows)
            throw DimensionError("bias length does not match layer rows");
        if (l > 0 && layers[l - 1].w.rows != lin.w.cols)
            throw DimensionError("layer shapes do not chain");
    }
}

NetParams make_net(const std::vector<int>& dims, Rng& rng) {
    if (dims.size() < 2) throw DimensionError("make_net: need at least input and output dims");
    NetParams params;
    params.layers.resize(dims.size() - 1);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Linear& lin = params.layers[l];
        lin.w = Matrix(dims[l + 1], dims[l]);
        lin.b.assign(dims[l + 1], 0.0);
        const double fan_in = static_cast<double>(dims[l]);
        const bool output_layer = (l + 2 == dims.size());
        const double bound =
            output_layer ? 1.0 / std::sqrt(fan_in) : std::sqrt(6.0 / fan_in);
        for (double& w : lin.w.data) w = rng.uniform(-bound, bound);
    }
    return params;
}

NetParams make_mlp(int input_dim, int hidden_width, int output_dim, Rng& rng) {
    return make_net({input_dim, hidden_width, hidden_width, output_dim}, rng);
}

std::vector<double> forward(const NetParams& params, std::span<const double> input) {
    params.validate();
    if (static_cast<int>(input.size()) != params.input_dim())
        throw DimensionError("forward: input length does not match network input dim");
    std::vector<double> act(input.begin(), input.end());
    std::vector<double> next;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const Linear& lin = params.layers[l];
        next.assign(lin.w.rows, 0.0);
        for (int o = 0; o < lin.w.rows; ++o)
            next[o] = dot(lin.w.row(o), act.data(), lin.w.cols) + lin.b[o];
        if (l + 1 < params.layers.size())
            for (double& x : next) x = x > 0.0 ? x : 0.0;
        act.swap(next);
    }
    return act;
}

namespace {

// Forward pass keeping pre-activations; acts[0] is the input batch and
// acts[l+1] = relu(pre[l]) (identity on the last layer).
void forward_cached(const NetParams& params, const Matrix& inputs, std::vector<Matrix>& pre,
                    std::vector<Matrix>& acts) {
    const int batch = inputs.rows;
    const std::size_t n_layers = params.layers.size();
    pre.resize(n_layers);
    acts.resize(n_layers + 1);
    acts[0] = inputs;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const Linear& lin = params.layers[l];
        pre[l] = Matrix(batch, lin.w.rows);
        for (int bi = 0; bi < batch; ++bi) {
            const double* in_row = acts[l].row(bi);
            double* out_row = pre[l].row(bi);
            for (int o = 0; o < lin.w.rows; ++o)
                out_row[o] = dot(lin.w.row(o), in_row, lin.w.cols) + lin.b[o];
        }
        if (l + 1 < n_layers) {
            acts[l + 1] = pre[l];
            for (double& x : acts[l + 1].data) x = x > 0.0 ? x : 0.0;
        } else {
            acts[l + 1] = pre[l];
        }
    }
}

}  // namespace

Matrix forward_batch(const NetParams& params, const Matrix& inputs) {
    params.validate();
    if (inputs.cols != params.input_dim())
        throw DimensionError("forward_batch: input width does not match network input dim");
    std::vector<Matrix> pre, acts;
    forward_cached(params, inputs, pre, acts);
    return acts.back();
}

BackwardResult backward(const NetParams& params, const LossBatch& batch, const LossSpec& spec) {
    params.validate();
    check_spec(params, spec, batch);

    const int batch_size = batch.inputs.rows;
    const int out_dim = params.output_dim();
    const int n_slices = static_cast<int>(spec.slices.size());
    const std::size_t n_layers = params.layers.size();

    std::vector<Matrix> pre, acts;
    forward_cached(params, batch.inputs, pre, acts);

    // d(mean loss)/d(output), assembled per sample.
    Matrix dout(batch_size, out_dim);
    const double inv_b = 1.0 / batch_size;
    double total_loss = 0.0;
    std::vector<double> sample_grad(out_dim);
    for (int bi = 0; bi < batch_size; ++bi) {
        std::fill(sample_grad.begin(), sample_grad.end(), 0.0);
        const bool scalar_target = spec.kind != LossKind::nll && !spec.per_slice_targets;
        const double target = scalar_target ? batch.targets[static_cast<std::size_t>(bi)] : 0.0;
        const double* slice_targets =
            spec.per_slice_targets ? &batch.slice_targets[bi * n_slices] : nullptr;
        const double sample_loss =
            loss_head(spec, acts.back().row(bi), out_dim, &batch.actions[bi * n_slices],
                      target, slice_targets, sample_grad.data());
        if (!std::isfinite(sample_loss))
            throw DivergenceError("backward: non-finite loss", bi);
        total_loss += sample_loss;
        double* drow = dout.row(bi);
        for (int j = 0; j < out_dim; ++j) drow[j] = sample_grad[j] * inv_b;
    }
    total_loss *= inv_b;

    BackwardResult result;
    result.loss = total_loss;
    result.grads.layers.resize(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        result.grads.layers[l].w = Matrix(params.layers[l].w.rows, params.layers[l].w.cols);
        result.grads.layers[l].b.assign(params.layers[l].w.rows, 0.0);
    }

    Matrix dz = std::move(dout);
    for (std::size_t li = n_layers; li-- > 0;) {
        const Linear& lin = params.layers[li];
        Linear& g = result.grads.layers[li];
        const Matrix& layer_in = acts[li];
        for (int bi = 0; bi < batch_size; ++bi) {
            const double* dz_row = dz.row(bi);
            const double* in_row = layer_in.row(bi);
            for (int o = 0; o < lin.w.rows; ++o) {
                const double d = dz_row[o];
                if (d != 0.0) axpy(d, in_row, g.w.row(o), lin.w.cols);
                g.b[o] += d;
            }
        }
        if (li > 0) {
            Matrix dprev(batch_size, lin.w.cols);
            for (int bi = 0; bi < batch_size; ++bi) {
                const double* dz_row = dz.row(bi);
                double* dprev_row = dprev.row(bi);
                for (int o = 0; o < lin.w.rows; ++o) {
                    const double d = dz_row[o];
                    if (d != 0.0) axpy(d, lin.w.row(o), dprev_row, lin.w.cols);
                }
                const double* z_row = pre[li - 1].row(bi);
                for (int i = 0; i < lin.w.cols; ++i)
                    if (z_row[i] <= 0.0) dprev_row[i] = 0.0;
            }
            dz = std::move(dprev);
        }
    }
    return result;
}

double huber(double pred, double target, double delta) {
    const double u = pred - target;
    const double au = std::fabs(u);
    if (au <= delta) return 0.5 * u * u;
    return delta * (au - 0.5 * delta);
}

std::vector<double> log_softmax(std::span<const double> logits) {
    if (logits.empty()) throw DimensionError("log_softmax: empty input");
    double m = logits[0];
    for (double x : logits) m = std::max(m, x);
    double s = 0.0;
    for (double x : logits) s += std::exp(x - m);
    const double lse = m + std::log(s);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

double GradBundle::global_norm() const {
    double s = 0.0;
    for (const auto& layer : layers) {
        for (double g : layer.w.data) s += g * g;
        for (double g : layer.b) s += g * g;
    }
    return std::sqrt(s);
}

bool GradBundle::finite() const {
    for (const auto& layer : layers) {
        if (!all_finite(layer.w.data) || !all_finite(layer.b)) return false;
    }
    return true;
}

AdamState make_adam_state(const NetParams& params) {
    AdamState state;
    state.m.resize(params.layers.size());
    state.v.resize(params.layers.size());
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& lin = params.layers[l];
        state.m[l].w = Matrix(lin.w.rows, lin.w.cols);
        state.m[l].b.assign(lin.b.size(), 0.0);
        state.v[l].w = Matrix(lin.w.rows, lin.w.cols);
        state.v[l].b.assign(lin.b.size(), 0.0);
    }
    return state;
}

void adam_step(NetParams& params, const GradBundle& grads, AdamState& state,
               double learning_rate) {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
    if (grads.layers.size() != params.layers.size() || state.m.size() != params.layers.size())
        throw DimensionError("adam: shape mismatch between params, grads and state");
    if (!grads.finite()) throw DivergenceError("adam: non-finite gradient");

    state.step_count += 1;
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));

    auto update = [&](double& p, double g, double& m, double& v) {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        p -= learning_rate * (m / bc1) / (std::sqrt(v / bc2) + state.eps);
    };

    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& lw = params.layers[l].w.data;
        const auto& gw = grads.layers[l].w.data;
        auto& mw = state.m[l].w.data;
        auto& vw = state.v[l].w.data;
        if (gw.size() != lw.size()) throw DimensionError("adam: weight gradient shape mismatch");
        for (std::size_t i = 0; i < lw.size(); ++i) update(lw[i], gw[i], mw[i], vw[i]);

        auto& lb = params.layers[l].b;
        const auto& gb = grads.layers[l].b;
        auto& mb = state.m[l].b;
        auto& vb = state.v[l].b;
        if (gb.size() != lb.size()) throw DimensionError("adam: bias gradient shape mismatch");
        for (std::size_t i = 0; i < lb.size(); ++i) update(lb[i], gb[i], mb[i], vb[i]);
    }
}

void polyak(NetParams& target, const NetParams& online, double mu) {
    if (target.layers.size() != online.layers.size())
        throw DimensionError("polyak: layer count mismatch");
    for (std::size_t l = 0; l < target.layers.size(); ++l) {
        auto& tw = target.layers[l].w.data;
        const auto& ow = online.layers[l].w.data;
        if (tw.size() != ow.size()) throw DimensionError("polyak: layer shape mismatch");
        for (std::size_t i = 0; i < tw.size(); ++i) tw[i] = mu * ow[i] + (1.0 - mu) * tw[i];
        auto& tb = target.layers[l].b;
        const auto& ob = online.layers[l].b;
        for (std::size_t i = 0; i < tb.size(); ++i) tb[i] = mu * ob[i] + (1.0 - mu) * tb[i];
    }
}

void clip_global_norm(GradBundle& grads, double max_norm) {
    if (!(max_norm > 0.0)) throw std::invalid_argument("clip: max_norm must be positive");
    const double norm = grads.global_norm();
    if (norm <= max_norm) return;
    const double scale = max_norm / norm;
    for (auto& layer : grads.layers) {
        for (double& g : layer.w.data) g *= scale;
        for (double& g : layer.b) g *= scale;
    }
}

// --- Checkpoint I/O -------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'F', 'R', 'L', 'N', 'E', 'T', '1', '\0'};

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError(FormatError::Kind::truncated, "checkpoint: unexpected end of data");
    return v;
}

void write_doubles(std::ostream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::istream& in, std::vector<double>& v, std::size_t n) {
    v.resize(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw FormatError(FormatError::Kind::truncated, "checkpoint: unexpected end of data");
}

}  // namespace

void write_net(std::ostream& out, const NetParams& params, const AdamState* opt) {
    params.validate();
    out.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.layers.size()));
    for (const auto& lin : params.layers) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(lin.w.rows));
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(lin.w.cols));
        write_doubles(out, lin.w.data);
        write_doubles(out, lin.b);
    }
    write_pod<std::uint8_t>(out, opt ? 1 : 0);
    if (opt) {
        write_pod<std::uint64_t>(out, opt->step_count);
        write_pod<double>(out, opt->beta1);
        write_pod<double>(out, opt->beta2);
        write_pod<double>(out, opt->eps);
        for (std::size_t l = 0; l < params.layers.size(); ++l) {
            write_doubles(out, opt->m[l].w.data);
            write_doubles(out, opt->m[l].b);
            write_doubles(out, opt->v[l].w.data);
            write_doubles(out, opt->v[l].b);
        }
    }
}

LoadedNet read_net(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw FormatError(FormatError::Kind::magic_mismatch, "checkpoint: bad magic");
    const auto n_layers = read_pod<std::uint32_t>(in);
    if (n_layers == 0 || n_layers > 1024)
        throw FormatError(FormatError::Kind::invariant_violation,
                          "checkpoint: implausible layer count");
    LoadedNet loaded;
    loaded.params.layers.resize(n_layers);
    for (auto& lin : loaded.params.layers) {
        const auto rows = read_pod<std::uint32_t>(in);
        const auto cols = read_pod<std::uint32_t>(in);
        if (rows == 0 || cols == 0)
            throw FormatError(FormatError::Kind::invariant_violation,
                              "checkpoint: empty layer shape");
        lin.w = Matrix(static_cast<int>(rows), static_cast<int>(cols));
        read_doubles(in, lin.w.data, static_cast<std::size_t>(rows) * cols);
        read_doubles(in, lin.b, rows);
    }
    try {
        loaded.params.validate();
    } catch (const DimensionError& e) {
        throw FormatError(FormatError::Kind::invariant_violation, e.what());
    }
    const auto has_opt = read_pod<std::uint8_t>(in);
    if (has_opt) {
        AdamState opt = make_adam_state(loaded.params);
        opt.step_count = read_pod<std::uint64_t>(in);
        opt.beta1 = read_pod<double>(in);
        opt.beta2 = read_pod<double>(in);
        opt.eps = read_pod<double>(in);
        for (std::size_t l = 0; l < loaded.params.layers.size(); ++l) {
            read_doubles(in, opt.m[l].w.data, opt.m[l].w.data.size());
            read_doubles(in, opt.m[l].b, opt.m[l].b.size());
            read_doubles(in, opt.v[l].w.data, opt.v[l].w.data.size());
            read_doubles(in, opt.v[l].b, opt.v[l].b.size());
        }
        loaded.opt = std::move(opt);
    }
    return loaded;
}

void save_net(const NetParams& params, const AdamState* opt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    write_net(out, params, opt);
    if (!out) throw IoError("write failed: " + path);
}

LoadedNet load_net(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    return read_net(in);
}

}  // namespace frl::nn
