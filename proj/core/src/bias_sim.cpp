#include "frl/bias_sim.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "frl/errors.hpp"
#include "frl/rng.hpp"

namespace frl::sim {

void NoiseSimConfig::validate() const {
    spec.validate();
    if (!(b > 0.0)) throw ConfigError("sim: b must be positive");
    if (!(k > 1.0)) throw ConfigError("sim: k must be > 1");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("sim: gamma must lie in [0,1]");
    if (inner_reps < 1 || outer_reps < 1) throw ConfigError("sim: repetition counts must be >= 1");
    const ActionCounts counts = action_counts(spec);
    if (counts.overflow || counts.atomic > (1ULL << 20))
        throw ConfigError("sim: atomic action count too large to sweep");
}

double closed_form_mean(std::uint64_t card, double b, double gamma) {
    if (card < 1) throw std::invalid_argument("closed_form_mean: card must be >= 1");
    const double a = static_cast<double>(card);
    return gamma * b * (a - 1.0) / (a + 1.0);
}

double closed_form_var(std::uint64_t card, double b, double gamma) {
    if (card < 1) throw std::invalid_argument("closed_form_var: card must be >= 1");
    const double a = static_cast<double>(card);
    return gamma * 4.0 * b * b * a / ((a + 1.0) * (a + 1.0) * (a + 2.0));
}

namespace {

/// Streaming raw-moment accumulator; variance and its standard error come
/// from the second and fourth central moments.
struct Moments {
    long double s1 = 0.0L, s2 = 0.0L, s3 = 0.0L, s4 = 0.0L;
    long n = 0;

    void add(double x) {
        const long double v = x;
        s1 += v;
        s2 += v * v;
        s3 += v * v * v;
        s4 += v * v * v * v;
        n += 1;
    }

    CoverageStats stats() const {
        CoverageStats out;
        const long double mean = s1 / n;
        const long double m2 = s2 / n - mean * mean;
        const long double m3 = s3 / n - 3.0L * mean * s2 / n + 2.0L * mean * mean * mean;
        const long double m4 = s4 / n - 4.0L * mean * s3 / n + 6.0L * mean * mean * s2 / n -
                               3.0L * mean * mean * mean * mean;
        (void)m3;
        out.mean = static_cast<double>(mean);
        out.variance = n > 1 ? static_cast<double>(m2 * n / (n - 1)) : 0.0;
        out.se_mean = n > 0 ? std::sqrt(std::max(0.0, static_cast<double>(m2)) / n) : 0.0;
        const double var_of_var = std::max(0.0L, m4 - m2 * m2) / n;
        out.se_var = std::sqrt(static_cast<double>(var_of_var));
        return out;
    }
};

std::uint64_t cell_stream(std::uint64_t level, long outer) {
    return (level << 20) + static_cast<std::uint64_t>(outer) + 1;
}

}  // namespace

SimCurve simulate_dqn(const NoiseSimConfig& cfg) {
    cfg.validate();
    const std::uint64_t atomic = action_counts(cfg.spec).atomic;
    SimCurve curve;
    curve.by_coverage.resize(atomic + 1);
    for (std::uint64_t in_count = 0; in_count <= atomic; ++in_count) {
        Rng rng = Rng::substream(cfg.seed, cell_stream(in_count, 0));
        Moments acc;
        for (long rep = 0; rep < cfg.inner_reps; ++rep) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::uint64_t j = 0; j < atomic; ++j) {
                const double half = j < in_count ? cfg.b : cfg.k * cfg.b;
                best = std::max(best, rng.uniform(-half, half));
            }
            acc.add(cfg.gamma * best);
        }
        curve.by_coverage[in_count] = acc.stats();
    }
    return curve;
}

SimCurve simulate_decqn(const NoiseSimConfig& cfg) {
    cfg.validate();
    const std::uint64_t atomic = action_counts(cfg.spec).atomic;
    const int dims = cfg.spec.dims();

    SimCurve curve;
    curve.by_coverage.resize(atomic + 1);

    std::vector<std::uint64_t> ids(atomic);
    std::vector<std::vector<char>> in_dist(static_cast<std::size_t>(dims));
    for (int d = 0; d < dims; ++d)
        in_dist[static_cast<std::size_t>(d)].resize(static_cast<std::size_t>(cfg.spec.n[d]));

    for (std::uint64_t in_count = 0; in_count <= atomic; ++in_count) {
        Moments acc;
        for (long outer = 0; outer < cfg.outer_reps; ++outer) {
            Rng rng = Rng::substream(cfg.seed, cell_stream(in_count, outer + 1));

            // Draw the covered atomic set without replacement, then project
            // it onto each dimension: a sub-action is in-distribution when
            // any covered atomic action uses it.
            std::iota(ids.begin(), ids.end(), 0);
            for (std::uint64_t i = 0; i < in_count; ++i) {
                const std::uint64_t j = i + rng.uniform_int(atomic - i);
                std::swap(ids[i], ids[j]);
            }
            for (auto& dim : in_dist) std::fill(dim.begin(), dim.end(), 0);
            for (std::uint64_t i = 0; i < in_count; ++i) {
                std::uint64_t id = ids[i];
                for (int d = 0; d < dims; ++d) {
                    const int n = cfg.spec.n[d];
                    in_dist[static_cast<std::size_t>(d)][id % n] = 1;
                    id /= n;
                }
            }

            for (long rep = 0; rep < cfg.inner_reps; ++rep) {
                double sum_max = 0.0;
                for (int d = 0; d < dims; ++d) {
                    double best = -std::numeric_limits<double>::infinity();
                    const int n = cfg.spec.n[d];
                    for (int j = 0; j < n; ++j) {
                        const double half =
                            in_dist[static_cast<std::size_t>(d)][static_cast<std::size_t>(j)]
                                ? cfg.b
                                : cfg.k * cfg.b;
                        best = std::max(best, rng.uniform(-half, half));
                    }
                    sum_max += best;
                }
                acc.add(cfg.gamma * sum_max / dims);
            }
        }
        curve.by_coverage[in_count] = acc.stats();
    }
    return curve;
}

void write_comparison_csv(const SimCurve& dqn, const SimCurve& dec, const std::string& path) {
    if (dqn.by_coverage.size() != dec.by_coverage.size())
        throw DimensionError("sim csv: curves have different lengths");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "coverage,mean_dqn,var_dqn,se_mean_dqn,se_var_dqn,"
           "mean_dec,var_dec,se_mean_dec,se_var_dec\n";
    out.precision(17);
    for (std::size_t c = 0; c < dqn.by_coverage.size(); ++c) {
        const auto& a = dqn.by_coverage[c];
        const auto& b = dec.by_coverage[c];
        out << c << ',' << a.mean << ',' << a.variance << ',' << a.se_mean << ',' << a.se_var
            << ',' << b.mean << ',' << b.variance << ',' << b.se_mean << ',' << b.se_var << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace frl::sim
