#include "frl/suite.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "frl/errors.hpp"
#include "frl/eval.hpp"

namespace frl::suite {

namespace fs = std::filesystem;

void write_manifest(const SuiteManifest& manifest, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream out(fs::path(dir) / "manifest.txt");
    if (!out) throw IoError("cannot write suite manifest in " + dir);
    out.precision(17);
    out << "format = frl-suite-v1\n";
    out << "env_id = " << manifest.env_id << "\n";
    out << "random_anchor = " << manifest.random_anchor << "\n";
    out << "expert_anchor = " << manifest.expert_anchor << "\n";
    out << "expert_eval = " << manifest.expert_eval << "\n";
    out << "medium_eval = " << manifest.medium_eval << "\n";
    out << "online_seed = " << manifest.online_seed << "\n";
    out << "collect_seed = " << manifest.collect_seed << "\n";
    out << "mix_seed = " << manifest.mix_seed << "\n";
    const maze::MazeConfig& env = manifest.env;
    out << "env_actuators = " << env.actuators << "\n";
    out << "env_step_size = " << env.step_size << "\n";
    out << "env_max_steps = " << env.max_steps << "\n";
    out << "env_start = " << env.start.x << ' ' << env.start.y << "\n";
    out << "env_goal = " << env.goal.x << ' ' << env.goal.y << "\n";
    out << "env_goal_radius = " << env.goal_radius << "\n";
    out << "env_motion_noise_std = " << env.motion_noise_std << "\n";
    out << "env_walls =";
    for (const auto& wall : env.walls)
        out << ' ' << wall.a.x << ' ' << wall.a.y << ' ' << wall.b.x << ' ' << wall.b.y;
    out << "\n";
    for (const auto& [name, entry] : manifest.datasets) {
        out << "dataset_" << name << " = " << entry.file << ' ' << std::hex << entry.hash
            << std::dec << ' ' << entry.count << "\n";
    }
    if (!out) throw IoError("write failed for suite manifest in " + dir);
}

SuiteManifest read_manifest(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.txt");
    if (!in) throw IoError("missing suite manifest in " + dir);
    SuiteManifest m;
    std::string line;
    bool format_seen = false;
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
        std::istringstream vs(val);
        if (key == "format") {
            if (val != "frl-suite-v1")
                throw FormatError(FormatError::Kind::version_mismatch,
                                  "suite manifest: unknown format " + val);
            format_seen = true;
        } else if (key == "env_id") {
            m.env_id = val;
        } else if (key == "random_anchor") {
            m.random_anchor = std::stod(val);
        } else if (key == "expert_anchor") {
            m.expert_anchor = std::stod(val);
        } else if (key == "expert_eval") {
            m.expert_eval = std::stod(val);
        } else if (key == "medium_eval") {
            m.medium_eval = std::stod(val);
        } else if (key == "online_seed") {
            m.online_seed = std::stoull(val);
        } else if (key == "collect_seed") {
            m.collect_seed = std::stoull(val);
        } else if (key == "mix_seed") {
            m.mix_seed = std::stoull(val);
        } else if (key == "env_actuators") {
            m.env.actuators = std::stoi(val);
        } else if (key == "env_step_size") {
            m.env.step_size = std::stod(val);
        } else if (key == "env_max_steps") {
            m.env.max_steps = std::stoi(val);
        } else if (key == "env_start") {
            vs >> m.env.start.x >> m.env.start.y;
        } else if (key == "env_goal") {
            vs >> m.env.goal.x >> m.env.goal.y;
        } else if (key == "env_goal_radius") {
            m.env.goal_radius = std::stod(val);
        } else if (key == "env_motion_noise_std") {
            m.env.motion_noise_std = std::stod(val);
        } else if (key == "env_walls") {
            m.env.walls.clear();
            maze::Segment wall;
            while (vs >> wall.a.x >> wall.a.y >> wall.b.x >> wall.b.y) m.env.walls.push_back(wall);
        } else if (key.rfind("dataset_", 0) == 0) {
            DatasetEntry entry;
            std::string hash_hex;
            if (!(vs >> entry.file >> hash_hex >> entry.count))
                throw FormatError(FormatError::Kind::truncated,
                                  "suite manifest: malformed dataset entry");
            entry.hash = std::stoull(hash_hex, nullptr, 16);
            m.datasets[key.substr(8)] = entry;
        }
    }
    if (!format_seen)
        throw FormatError(FormatError::Kind::magic_mismatch, "suite manifest: missing format line");
    m.env.validate();
    return m;
}

data::Dataset load_dataset(const SuiteManifest& manifest, const std::string& dir,
                           const std::string& name) {
    const auto it = manifest.datasets.find(name);
    if (it == manifest.datasets.end())
        throw IoError("suite has no dataset named '" + name + "'");
    data::Dataset ds = data::load((fs::path(dir) / it->second.file).string());
    if (data::content_hash(ds) != it->second.hash)
        throw FormatError(FormatError::Kind::invariant_violation,
                          "dataset '" + name + "' does not match its manifest hash");
    return ds;
}

SuiteManifest build_suite(const maze::MazeConfig& env, const agents::AgentConfig& online_cfg,
                          const CollectParams& params, const std::string& dir) {
    env.validate();
    fs::create_directories(dir);
    const std::string env_id = "maze-n" + std::to_string(env.actuators);

    agents::Agent expert_agent;
    agents::Agent medium_agent;
    double expert_eval = 0.0;
    double medium_eval = 0.0;

    const std::string ckpt_dir = (fs::path(dir) / "checkpoints").string();
    if (params.no_train) {
        agents::AgentConfig cfg = online_cfg;
        cfg.algorithm = agents::Algorithm::online_decqn;
        const fs::path expert_path = fs::path(ckpt_dir) / "expert";
        const fs::path medium_path = fs::path(ckpt_dir) / "medium";
        if (!fs::exists(expert_path / "manifest.txt"))
            throw IoError("collect: no_train is set but the expert checkpoint is missing at " +
                          expert_path.string());
        if (!fs::exists(medium_path / "manifest.txt"))
            throw IoError("collect: no_train is set but the medium checkpoint is missing at " +
                          medium_path.string());
        expert_agent = agents::load_agent(expert_path.string(), cfg);
        medium_agent = agents::load_agent(medium_path.string(), cfg);
        expert_eval = eval::rollout_return(env, agents::greedy_policy(expert_agent),
                                           online_cfg.eval_episodes, params.online_seed)
                          .first;
        medium_eval = eval::rollout_return(env, agents::greedy_policy(medium_agent),
                                           online_cfg.eval_episodes, params.online_seed)
                          .first;
    } else {
        agents::AgentConfig cfg = online_cfg;
        cfg.algorithm = agents::Algorithm::online_decqn;
        agents::OnlineOptions opts;
        opts.max_env_steps = params.max_env_steps;
        opts.stop_return = params.expert_stop_return;
        opts.medium_return = params.expert_stop_return / 3.0;
        opts.output_dir = ckpt_dir;
        agents::OnlineResult online = agents::train_online(env, cfg, params.online_seed, opts);
        if (!online.reached_stop)
            throw DivergenceError(
                "collect: online training never reached the expert stop return (best eval " +
                std::to_string(online.curve.empty() ? 0.0 : online.curve.back().greedy_return) +
                ")");
        if (!online.medium_agent)
            throw DivergenceError("collect: no medium checkpoint was snapshotted");
        expert_agent = std::move(online.agent);
        medium_agent = std::move(*online.medium_agent);
        expert_eval = online.curve.back().greedy_return;
        medium_eval = *online.medium_eval;
    }

    SuiteManifest manifest;
    manifest.env_id = env_id;
    manifest.env = env;
    manifest.online_seed = params.online_seed;
    manifest.collect_seed = params.collect_seed;
    manifest.mix_seed = params.mix_seed;
    manifest.expert_eval = expert_eval;
    manifest.medium_eval = medium_eval;

    auto collect_tier = [&](const agents::Agent& agent, double epsilon, data::SourceTag tag,
                            std::uint64_t stream) {
        maze::MazeEnv roll_env(env, hash_u64(params.collect_seed ^ stream));
        return data::collect(roll_env, agents::greedy_policy(agent),
                             params.transitions_per_dataset, epsilon,
                             hash_u64(params.collect_seed + stream), tag, env_id);
    };
    const data::Dataset expert_ds = collect_tier(expert_agent, 0.0, data::SourceTag::expert, 1);
    const data::Dataset medium_ds = collect_tier(medium_agent, 0.0, data::SourceTag::medium, 2);
    const data::Dataset random_ds = collect_tier(expert_agent, 1.0, data::SourceTag::random, 3);

    const data::Dataset medium_expert =
        data::mix({{&medium_ds, 0.5}, {&expert_ds, 0.5}}, params.transitions_per_dataset,
                  params.mix_seed);
    const data::Dataset random_medium_expert =
        data::mix({{&random_ds, 0.45}, {&medium_ds, 0.45}, {&expert_ds, 0.10}},
                  params.transitions_per_dataset, hash_u64(params.mix_seed + 1));

    auto store = [&](const data::Dataset& ds, const std::string& name) {
        const std::string file = name + ".frld";
        data::save(ds, (fs::path(dir) / file).string());
        manifest.datasets[name] = DatasetEntry{file, data::content_hash(ds), ds.header.count};
    };
    store(expert_ds, "expert");
    store(medium_ds, "medium");
    store(random_ds, "random");
    store(medium_expert, "medium-expert");
    store(random_medium_expert, "random-medium-expert");

    manifest.random_anchor =
        maze::random_policy_return(env, params.random_anchor_episodes,
                                   hash_u64(params.collect_seed ^ 0xa2c402ULL));
    manifest.expert_anchor =
        eval::rollout_return(env, agents::greedy_policy(expert_agent),
                             params.expert_anchor_episodes,
                             hash_u64(params.collect_seed ^ 0xa2c403ULL))
            .first;

    write_manifest(manifest, dir);
    return manifest;
}

}  // namespace frl::suite
