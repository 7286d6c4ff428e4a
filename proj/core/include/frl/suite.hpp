#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "frl/agents.hpp"
#include "frl/dataset.hpp"
#include "frl/maze.hpp"

namespace frl::suite {

struct DatasetEntry {
    std::string file;
    std::uint64_t hash = 0;
    std::uint64_t count = 0;
};

/// Index of a generated benchmark suite: the environment it was collected
/// in, the normalisation anchors, the seeds involved, and one entry per
/// dataset file (content-hashed so reruns can be compared).
struct SuiteManifest {
    std::string env_id;
    maze::MazeConfig env;
    double random_anchor = 0.0;
    double expert_anchor = 0.0;
    double expert_eval = 0.0;
    double medium_eval = 0.0;
    std::uint64_t online_seed = 0;
    std::uint64_t collect_seed = 0;
    std::uint64_t mix_seed = 0;
    std::map<std::string, DatasetEntry> datasets;
};

void write_manifest(const SuiteManifest& manifest, const std::string& dir);
SuiteManifest read_manifest(const std::string& dir);

struct CollectParams {
    long transitions_per_dataset = 10000;
    double expert_stop_return = 90.0;
    long max_env_steps = 100000;
    std::uint64_t online_seed = 1;
    std::uint64_t collect_seed = 7;
    std::uint64_t mix_seed = 9;
    int random_anchor_episodes = 1000;
    int expert_anchor_episodes = 100;
    /// Reuse checkpoints already present in the suite directory instead of
    /// training; missing checkpoints are an error.
    bool no_train = false;
};

/// The full dataset-generation pipeline: train online to the expert stop
/// return (snapshotting the medium agent at the first crossing of a third of
/// it), roll the greedy checkpoints to collect expert/medium/random tiers,
/// mix medium-expert (50/50) and random-medium-expert (45/45/10), compute
/// the score anchors and write everything plus the manifest into `dir`.
SuiteManifest build_suite(const maze::MazeConfig& env, const agents::AgentConfig& online_cfg,
                          const CollectParams& params, const std::string& dir);

/// Loads `name`.frld from the suite directory, verifying the manifest hash.
data::Dataset load_dataset(const SuiteManifest& manifest, const std::string& dir,
                           const std::string& name);

}  // namespace frl::suite
