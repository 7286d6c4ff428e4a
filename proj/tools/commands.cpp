#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "frl/errors.hpp"
#include "frl/eval.hpp"
#include "frl/suite.hpp"

namespace frl::cli {

namespace fs = std::filesystem;

cfg::RunConfig load_config(const CommonOptions& common) {
    cfg::RunConfig config =
        common.config_path.empty() ? cfg::RunConfig() : cfg::RunConfig::from_file(common.config_path);
    for (const std::string& override_kv : common.overrides) {
        const auto eq = override_kv.find('=');
        const auto dot = override_kv.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq)
            throw ConfigError("--set expects section.key=value, got: " + override_kv);
        config.set(override_kv.substr(0, dot), override_kv.substr(dot + 1, eq - dot - 1),
                   override_kv.substr(eq + 1));
    }
    return config;
}

std::string resolve_output_root(const CommonOptions& common, const cfg::RunConfig& config) {
    if (!common.output_root.empty()) return common.output_root;
    if (const char* env_root = std::getenv("FRL_OUTPUT_ROOT"); env_root && *env_root)
        return env_root;
    return config.get_str("run", "output_root");
}

// --- collect -----------------------------------------------------------------

int cmd_collect(const CommonOptions& common) {
    const cfg::RunConfig config = load_config(common);
    const std::string root = resolve_output_root(common, config);
    const std::string suite_dir = (fs::path(root) / "suite").string();
    fs::create_directories(suite_dir);
    config.freeze_to_file((fs::path(suite_dir) / "config.frozen.ini").string());

    const maze::MazeConfig env = config.env_config();
    agents::AgentConfig agent_cfg = config.agent_config();
    agent_cfg.algorithm = agents::Algorithm::online_decqn;

    suite::CollectParams params;
    params.transitions_per_dataset = config.get_int("collect", "transitions_per_dataset");
    params.expert_stop_return = config.get_real("collect", "expert_stop_return");
    params.max_env_steps = config.get_int("collect", "max_env_steps");
    params.online_seed = static_cast<std::uint64_t>(config.get_int("collect", "online_seed"));
    params.collect_seed = static_cast<std::uint64_t>(config.get_int("collect", "collect_seed"));
    params.mix_seed = static_cast<std::uint64_t>(config.get_int("collect", "mix_seed"));
    params.random_anchor_episodes =
        static_cast<int>(config.get_int("collect", "random_anchor_episodes"));
    params.expert_anchor_episodes =
        static_cast<int>(config.get_int("collect", "expert_anchor_episodes"));
    params.no_train = config.get_bool("collect", "no_train");

    const suite::SuiteManifest manifest =
        suite::build_suite(env, agent_cfg, params, suite_dir);

    std::cout << "suite written to " << suite_dir << "\n";
    std::cout << "  env            " << manifest.env_id << "\n";
    std::cout << "  expert eval    " << manifest.expert_eval << "\n";
    std::cout << "  medium eval    " << manifest.medium_eval << "\n";
    std::cout << "  random anchor  " << manifest.random_anchor << "\n";
    std::cout << "  expert anchor  " << manifest.expert_anchor << "\n";
    for (const auto& [name, entry] : manifest.datasets)
        std::cout << "  dataset " << name << "  " << entry.count << " transitions  hash "
                  << std::hex << entry.hash << std::dec << "\n";
    return 0;
}

// --- train ---------------------------------------------------------------------

namespace {

struct GridCell {
    std::string label;
    agents::AgentConfig cfg;
    std::string dataset;
    std::uint64_t seed = 0;
};

std::string knob_label(double v) {
    std::ostringstream out;
    out << v;
    std::string s = out.str();
    std::replace(s.begin(), s.end(), '.', 'p');
    return s;
}

/// Expand [grid] into one cell per (algorithm x knob x dataset x seed).
std::vector<GridCell> expand_grid(const cfg::RunConfig& config) {
    const agents::AgentConfig base = config.agent_config();
    const auto algorithms = config.get_str_list("grid", "algorithms");
    const auto datasets = config.get_str_list("grid", "datasets");
    const auto seeds = config.get_int_list("grid", "seeds");
    if (algorithms.empty() || datasets.empty() || seeds.empty())
        throw ConfigError("grid: algorithms, datasets and seeds must be non-empty");

    std::vector<std::pair<std::string, agents::AgentConfig>> variants;
    for (const std::string& name : algorithms) {
        agents::AgentConfig cfg = base;
        cfg.algorithm = agents::algorithm_from_string(name);
        const auto sweep = [&](const char* key) { return config.get_real_list("grid", key); };
        switch (cfg.algorithm) {
            case agents::Algorithm::bcq: {
                const auto taus = sweep("bcq_tau");
                if (taus.empty()) {
                    variants.emplace_back(name, cfg);
                } else {
                    for (double tau : taus) {
                        cfg.bcq_tau = tau;
                        variants.emplace_back(name + "-t" + knob_label(tau), cfg);
                    }
                }
                break;
            }
            case agents::Algorithm::cql: {
                const auto alphas = sweep("cql_alpha");
                if (alphas.empty()) {
                    variants.emplace_back(name, cfg);
                } else {
                    for (double alpha : alphas) {
                        cfg.cql_alpha = alpha;
                        variants.emplace_back(name + "-a" + knob_label(alpha), cfg);
                    }
                }
                break;
            }
            case agents::Algorithm::iql: {
                const auto taus = sweep("iql_tau");
                const auto lambdas = sweep("iql_lambda");
                if (taus.empty() && lambdas.empty()) {
                    variants.emplace_back(name, cfg);
                } else {
                    const std::vector<double> tau_values = taus.empty() ? std::vector<double>{base.iql_tau} : taus;
                    const std::vector<double> lambda_values =
                        lambdas.empty() ? std::vector<double>{base.iql_lambda} : lambdas;
                    for (double tau : tau_values) {
                        for (double lambda : lambda_values) {
                            cfg.iql_tau = tau;
                            cfg.iql_lambda = lambda;
                            variants.emplace_back(
                                name + "-t" + knob_label(tau) + "-l" + knob_label(lambda), cfg);
                        }
                    }
                }
                break;
            }
            case agents::Algorithm::onestep: {
                const auto lambdas = sweep("onestep_lambda");
                if (lambdas.empty()) {
                    variants.emplace_back(name, cfg);
                } else {
                    for (double lambda : lambdas) {
                        cfg.onestep_lambda = lambda;
                        variants.emplace_back(name + "-l" + knob_label(lambda), cfg);
                    }
                }
                break;
            }
            default:
                variants.emplace_back(name, cfg);
        }
    }

    std::vector<GridCell> cells;
    for (const auto& [label, cfg] : variants)
        for (const std::string& dataset : datasets)
            for (long seed : seeds)
                cells.push_back(GridCell{label, cfg, dataset, static_cast<std::uint64_t>(seed)});
    return cells;
}

}  // namespace

int cmd_train(const CommonOptions& common) {
    const cfg::RunConfig config = load_config(common);
    const std::string root = resolve_output_root(common, config);
    std::string suite_dir = config.get_str("grid", "suite");
    if (suite_dir.empty()) suite_dir = (fs::path(root) / "suite").string();

    const suite::SuiteManifest manifest = suite::read_manifest(suite_dir);
    const std::string train_root = (fs::path(root) / "train").string();
    fs::create_directories(train_root);
    config.freeze_to_file((fs::path(train_root) / "config.frozen.ini").string());

    const std::vector<GridCell> cells = expand_grid(config);
    const int final_eval_episodes = static_cast<int>(config.get_int("grid", "final_eval_episodes"));

    // Datasets are immutable; load each once and share across workers.
    std::map<std::string, data::Dataset> datasets;
    for (const auto& cell : cells) {
        if (!datasets.count(cell.dataset))
            datasets.emplace(cell.dataset, suite::load_dataset(manifest, suite_dir, cell.dataset));
    }

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string failure;
    std::mutex io_mutex;

    auto worker = [&]() {
        while (!failed.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const GridCell& cell = cells[i];
            const fs::path cell_dir = fs::path(train_root) / cell.label / cell.dataset /
                                      ("seed" + std::to_string(cell.seed));
            try {
                if (fs::exists(cell_dir / "eval_report.csv")) {
                    std::lock_guard<std::mutex> lock(io_mutex);
                    std::cout << "skip " << cell_dir.string() << " (already evaluated)\n";
                    continue;
                }
                fs::create_directories(cell_dir);
                agents::TrainOptions opts;
                opts.output_dir = cell_dir.string();
                opts.eval_env = manifest.env;
                opts.resume = true;
                const agents::TrainResult result =
                    agents::train_offline(datasets.at(cell.dataset), cell.cfg, cell.seed, opts);

                const auto [mean_ret, se] =
                    eval::rollout_return(manifest.env, agents::greedy_policy(result.agent),
                                         final_eval_episodes, hash_u64(cell.seed ^ 0xf17a1ULL));
                eval::EvalReport report;
                report.episodes = final_eval_episodes;
                report.mean_return = mean_ret;
                report.std_error = se;
                report.normalized_score = eval::normalized_score(
                    mean_ret, manifest.random_anchor, manifest.expert_anchor);
                report.seed = cell.seed;
                eval::write_report_csv(report, (cell_dir / "eval_report.csv").string());

                std::lock_guard<std::mutex> lock(io_mutex);
                std::cout << cell.label << "/" << cell.dataset << "/seed" << cell.seed
                          << "  return " << mean_ret << "  norm " << report.normalized_score
                          << "\n";
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(io_mutex);
                failed = true;
                failure = std::string(e.what()) + " (cell " + cell_dir.string() + ")";
                return;
            }
        }
    };

    const unsigned int n_workers =
        std::max(1u, std::min<unsigned int>(std::thread::hardware_concurrency(),
                                            static_cast<unsigned int>(cells.size())));
    std::vector<std::thread> pool;
    for (unsigned int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    if (failed) throw std::runtime_error("train: " + failure);
    std::cout << cells.size() << " cells complete under " << train_root << "\n";
    return 0;
}

// --- eval ------------------------------------------------------------------------

int cmd_eval(const CommonOptions& common, const std::string& checkpoint,
             const std::string& trajectory_csv) {
    const cfg::RunConfig config = load_config(common);
    const std::string root = resolve_output_root(common, config);
    std::string ckpt = checkpoint.empty() ? config.get_str("eval", "checkpoint") : checkpoint;
    if (ckpt.empty()) throw ConfigError("eval: no checkpoint directory given");
    std::string suite_dir = config.get_str("eval", "suite");
    if (suite_dir.empty()) suite_dir = (fs::path(root) / "suite").string();

    const suite::SuiteManifest manifest = suite::read_manifest(suite_dir);
    const agents::Agent agent = agents::load_agent(ckpt, config.agent_config());
    const int episodes = static_cast<int>(config.get_int("eval", "episodes"));
    const auto seed = static_cast<std::uint64_t>(config.get_int("eval", "seed"));

    const auto [mean_ret, se] =
        eval::rollout_return(manifest.env, agents::greedy_policy(agent), episodes, seed);
    const double norm =
        eval::normalized_score(mean_ret, manifest.random_anchor, manifest.expert_anchor);
    std::cout << "episodes          " << episodes << "\n";
    std::cout << "mean return       " << mean_ret << "\n";
    std::cout << "std error         " << se << "\n";
    std::cout << "normalized score  " << norm << "\n";

    if (!trajectory_csv.empty()) {
        maze::MazeEnv env(manifest.env, hash_u64(seed ^ 0x7a3ULL));
        std::vector<maze::TrajectoryRow> rows;
        env.reset();
        int step = 0;
        while (true) {
            const FactoredAction action = agent.act_greedy(env.observation());
            const maze::StepResult r = env.step(action);
            rows.push_back(maze::TrajectoryRow{step++, env.position(), action, r.reward});
            if (r.done) break;
        }
        maze::write_trajectory_csv(rows, trajectory_csv);
        std::cout << "trajectory dumped to " << trajectory_csv << "\n";
    }
    return 0;
}

// --- simulate ---------------------------------------------------------------------

int cmd_simulate(const CommonOptions& common) {
    const cfg::RunConfig config = load_config(common);
    const std::string root = resolve_output_root(common, config);
    const sim::NoiseSimConfig sim_cfg = config.sim_config();

    const sim::SimCurve dqn = sim::simulate_dqn(sim_cfg);
    const sim::SimCurve dec = sim::simulate_decqn(sim_cfg);

    fs::create_directories(root);
    config.freeze_to_file((fs::path(root) / "sim.config.frozen.ini").string());
    const std::string csv_path = (fs::path(root) / "sim.csv").string();
    sim::write_comparison_csv(dqn, dec, csv_path);

    const std::uint64_t atomic = action_counts(sim_cfg.spec).atomic;
    std::printf("coverage sweep 0..%llu written to %s\n",
                static_cast<unsigned long long>(atomic), csv_path.c_str());
    std::printf("endpoints vs closed form (all in / all out):\n");
    std::printf("  dqn mean  %.4f / %.4f   expected %.4f / %.4f\n",
                dqn.by_coverage.back().mean, dqn.by_coverage.front().mean,
                sim::closed_form_mean(atomic, sim_cfg.b, sim_cfg.gamma),
                sim::closed_form_mean(atomic, sim_cfg.k * sim_cfg.b, sim_cfg.gamma));
    std::printf("  dqn var   %.4f / %.4f   expected %.4f / %.4f\n",
                dqn.by_coverage.back().variance, dqn.by_coverage.front().variance,
                sim::closed_form_var(atomic, sim_cfg.b, sim_cfg.gamma),
                sim::closed_form_var(atomic, sim_cfg.k * sim_cfg.b, sim_cfg.gamma));
    return 0;
}

// --- mix / export --------------------------------------------------------------------

int cmd_mix(const MixSpec& spec) {
    if (spec.parts.empty()) throw ConfigError("mix: need at least one part (path:fraction)");
    if (spec.out_file.empty()) throw ConfigError("mix: --out is required");
    std::vector<data::Dataset> sources;
    std::vector<double> fractions;
    sources.reserve(spec.parts.size());
    for (const std::string& part : spec.parts) {
        const auto colon = part.rfind(':');
        if (colon == std::string::npos)
            throw ConfigError("mix: part must be path:fraction, got " + part);
        sources.push_back(data::load(part.substr(0, colon)));
        fractions.push_back(std::stod(part.substr(colon + 1)));
    }
    std::vector<std::pair<const data::Dataset*, double>> parts;
    for (std::size_t i = 0; i < sources.size(); ++i) parts.emplace_back(&sources[i], fractions[i]);
    const data::Dataset mixed = data::mix(parts, spec.total, spec.seed);
    data::save(mixed, spec.out_file);
    std::cout << "mixed " << mixed.header.count << " transitions into " << spec.out_file << "\n";
    for (const auto& part : mixed.header.recipe)
        std::cout << "  " << data::to_string(part.tag) << "  " << part.count << "\n";
    return 0;
}

int cmd_export(const ExportSpec& spec) {
    if (spec.dataset.empty() || spec.csv.empty())
        throw ConfigError("export: --dataset and --csv are required");
    const data::Dataset ds = data::load(spec.dataset);
    data::export_csv(ds, spec.csv);
    std::cout << "wrote " << ds.header.count << " transitions to " << spec.csv << "\n";
    return 0;
}

// --- report -------------------------------------------------------------------------

namespace {

struct CellScores {
    std::vector<double> scores;
};

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double se_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    v /= static_cast<double>(xs.size() - 1);
    return std::sqrt(v / static_cast<double>(xs.size()));
}

}  // namespace

int cmd_report(const std::string& results_dir) {
    const fs::path root(results_dir);
    if (!fs::exists(root)) throw IoError("report: no such directory: " + results_dir);

    // Declaration order from the frozen config when present, otherwise
    // lexicographic scan.
    std::vector<std::string> label_order;
    std::vector<std::string> dataset_order;
    const fs::path frozen = root / "config.frozen.ini";
    if (fs::exists(frozen)) {
        const cfg::RunConfig config = cfg::RunConfig::from_file(frozen.string());
        for (const auto& cell : expand_grid(config)) {
            if (std::find(label_order.begin(), label_order.end(), cell.label) == label_order.end())
                label_order.push_back(cell.label);
            if (std::find(dataset_order.begin(), dataset_order.end(), cell.dataset) ==
                dataset_order.end())
                dataset_order.push_back(cell.dataset);
        }
    }

    std::map<std::string, std::map<std::string, CellScores>> table;
    std::vector<std::string> missing;
    for (const auto& label_entry : fs::directory_iterator(root)) {
        if (!label_entry.is_directory()) continue;
        const std::string label = label_entry.path().filename().string();
        for (const auto& ds_entry : fs::directory_iterator(label_entry.path())) {
            if (!ds_entry.is_directory()) continue;
            const std::string dataset = ds_entry.path().filename().string();
            for (const auto& seed_entry : fs::directory_iterator(ds_entry.path())) {
                if (!seed_entry.is_directory()) continue;
                const fs::path report_path = seed_entry.path() / "eval_report.csv";
                if (!fs::exists(report_path)) {
                    missing.push_back(seed_entry.path().string());
                    continue;
                }
                const eval::EvalReport report = eval::read_report_csv(report_path.string());
                table[label][dataset].scores.push_back(report.normalized_score);
            }
        }
    }
    if (table.empty()) throw IoError("report: no eval reports under " + results_dir);

    if (label_order.empty())
        for (const auto& [label, row] : table) label_order.push_back(label);
    if (dataset_order.empty()) {
        for (const auto& [label, row] : table)
            for (const auto& [dataset, cell] : row)
                if (std::find(dataset_order.begin(), dataset_order.end(), dataset) ==
                    dataset_order.end())
                    dataset_order.push_back(dataset);
        std::sort(dataset_order.begin(), dataset_order.end());
    }

    std::ofstream csv(root / "report.csv");
    if (!csv) throw IoError("report: cannot write report.csv");
    csv << "algorithm,dataset,seeds,mean_normalized,se\n";
    csv.precision(17);

    std::ostringstream text;
    text << std::left;
    text.precision(1);
    text.setf(std::ios::fixed);
    const int label_width = 18;
    const int col_width = 20;
    text << std::setw(label_width) << "algorithm";
    for (const auto& dataset : dataset_order) text << std::setw(col_width) << dataset;
    text << "\n";
    for (const auto& label : label_order) {
        if (!table.count(label)) continue;
        text << std::setw(label_width) << label;
        for (const auto& dataset : dataset_order) {
            const auto it = table[label].find(dataset);
            if (it == table[label].end() || it->second.scores.empty()) {
                text << std::setw(col_width) << "-";
                continue;
            }
            const auto& scores = it->second.scores;
            csv << label << ',' << dataset << ',' << scores.size() << ',' << mean_of(scores)
                << ',' << se_of(scores) << '\n';
            std::ostringstream cell;
            cell.precision(1);
            cell.setf(std::ios::fixed);
            cell << mean_of(scores) << " +- " << se_of(scores) << " (" << scores.size() << ")";
            text << std::setw(col_width) << cell.str();
        }
        text << "\n";
    }
    if (!missing.empty()) {
        text << "\nmissing cells (no eval report):\n";
        for (const auto& path : missing) text << "  " << path << "\n";
    }

    std::ofstream txt(root / "report.txt");
    txt << text.str();
    std::cout << text.str();
    return 0;
}

}  // namespace frl::cli
