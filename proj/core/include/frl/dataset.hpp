#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "frl/decomp.hpp"
#include "frl/maze.hpp"
#include "frl/rng.hpp"

namespace frl::data {

enum class SourceTag : std::uint8_t { expert = 0, medium = 1, random = 2, mixed = 3 };

const char* to_string(SourceTag tag);
SourceTag source_tag_from_string(const std::string& s);

struct Transition {
    std::vector<double> state;
    FactoredAction action;
    double reward = 0.0;
    std::vector<double> next_state;
    bool terminal = false;
    SourceTag source = SourceTag::random;  // originating tier, kept through mixing
};

struct MixPart {
    SourceTag tag = SourceTag::random;
    double fraction = 0.0;
    std::uint64_t count = 0;
};

struct DatasetHeader {
    std::uint32_t version = 1;
    std::string env_id;
    ActionSpec spec;
    int obs_dim = 0;
    std::uint64_t count = 0;
    SourceTag source = SourceTag::random;
    std::uint64_t seed = 0;
    std::vector<MixPart> recipe;  // non-empty only for mixed datasets
};

/// The offline buffer: a self-describing header plus an ordered transition
/// list. Immutable after construction.
struct Dataset {
    DatasetHeader header;
    std::vector<Transition> transitions;

    void validate() const;
};

using Policy = std::function<FactoredAction(std::span<const double> observation)>;

/// Rolls episodes in `env`, acting with `policy` except that each dimension
/// is independently re-drawn uniformly with probability `epsilon`. Exactly
/// `num_transitions` transitions are recorded; hitting the step cap truncates
/// the episode with terminal=false (terminal=true only on reaching the goal).
Dataset collect(maze::MazeEnv& env, const Policy& policy, long num_transitions, double epsilon,
                std::uint64_t seed, SourceTag tag, const std::string& env_id);

/// Draws floor(fraction * total) transitions without replacement from each
/// part (remainder topped up from the first), shuffles, and tags the result
/// as mixed with the recipe in the header.
Dataset mix(const std::vector<std::pair<const Dataset*, double>>& parts, long total,
            std::uint64_t seed);

/// Uniform-with-replacement index draw, the sampling primitive behind
/// sample_batch and the training loops.
std::vector<std::size_t> sample_indices(const Dataset& dataset, int batch_size, Rng& rng);

/// Uniform i.i.d. batch (with replacement).
std::vector<Transition> sample_batch(const Dataset& dataset, int batch_size, Rng& rng);

// --- Persistence ("FRLDAT1\0", little-endian; see docs/formats.md) ---

void save(const Dataset& dataset, const std::string& path);
Dataset load(const std::string& path);

/// Lossless text form (17 significant digits) for inspection.
void export_csv(const Dataset& dataset, const std::string& path);

/// FNV-1a over the serialised bytes; manifests use it to pin dataset files.
std::uint64_t content_hash(const Dataset& dataset);

}  // namespace frl::data
