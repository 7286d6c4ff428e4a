#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "frl/agents.hpp"
#include "frl/bias_sim.hpp"
#include "frl/maze.hpp"

namespace frl::cfg {

/// Flat sectioned key-value run configuration.
///
/// Files look like
///
///     # comment
///     [agent]
///     algorithm = cql
///     cql_alpha = 1
///
/// Every key belongs to a fixed schema with a typed default; unknown
/// sections or keys are rejected up front. `freeze` writes the fully
/// resolved configuration (defaults materialised) so a run can be reproduced
/// from its output directory alone.
class RunConfig {
public:
    RunConfig();  // all defaults

    static RunConfig from_file(const std::string& path);
    static RunConfig from_string(const std::string& text);

    void set(const std::string& section, const std::string& key, const std::string& value);

    long get_int(const std::string& section, const std::string& key) const;
    double get_real(const std::string& section, const std::string& key) const;
    bool get_bool(const std::string& section, const std::string& key) const;
    const std::string& get_str(const std::string& section, const std::string& key) const;
    std::vector<long> get_int_list(const std::string& section, const std::string& key) const;
    std::vector<double> get_real_list(const std::string& section, const std::string& key) const;
    std::vector<std::string> get_str_list(const std::string& section, const std::string& key) const;

    /// Serialise with every schema key present, in schema order.
    std::string freeze() const;
    void freeze_to_file(const std::string& path) const;

    /// Typed views over the relevant sections.
    maze::MazeConfig env_config() const;
    agents::AgentConfig agent_config() const;
    sim::NoiseSimConfig sim_config() const;

private:
    // section -> key -> value (always fully populated from the schema).
    std::map<std::string, std::map<std::string, std::string>> values_;
};

}  // namespace frl::cfg
