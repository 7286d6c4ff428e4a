#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frl/config.hpp"

namespace frl::cli {

struct CommonOptions {
    std::string config_path;                // optional; defaults apply when empty
    std::string output_root;                // --out, FRL_OUTPUT_ROOT or run.output_root
    std::vector<std::string> overrides;     // --set section.key=value
};

cfg::RunConfig load_config(const CommonOptions& common);
std::string resolve_output_root(const CommonOptions& common, const cfg::RunConfig& config);

int cmd_collect(const CommonOptions& common);
int cmd_train(const CommonOptions& common);
int cmd_eval(const CommonOptions& common, const std::string& checkpoint,
             const std::string& trajectory_csv);
int cmd_simulate(const CommonOptions& common);
int cmd_report(const std::string& results_dir);

struct MixSpec {
    std::vector<std::string> parts;  // path:fraction
    long total = 10000;
    std::uint64_t seed = 0;
    std::string out_file;
};
int cmd_mix(const MixSpec& spec);

struct ExportSpec {
    std::string dataset;
    std::string csv;
};
int cmd_export(const ExportSpec& spec);

}  // namespace frl::cli
