#include "frl/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "frl/errors.hpp"

namespace frl::cfg {

namespace {

enum class KeyType { integer, real, boolean, text, int_list, real_list, text_list };

struct KeyDef {
    const char* key;
    KeyType type;
    const char* default_value;
};

struct SectionDef {
    const char* name;
    std::vector<KeyDef> keys;
};

// The full schema; unknown keys are rejected and freeze() writes every key.
const std::vector<SectionDef>& schema() {
    static const std::vector<SectionDef> s = {
        {"run",
         {
             {"output_root", KeyType::text, "runs"},
             {"seeds", KeyType::int_list, "0 1 2 3 4"},
         }},
        {"env",
         {
             {"preset", KeyType::text, "maze"},
             {"actuators", KeyType::integer, "3"},
             {"step_size", KeyType::real, "0.05"},
             {"max_steps", KeyType::integer, "150"},
             {"start_x", KeyType::real, "0.1"},
             {"start_y", KeyType::real, "0.1"},
             {"goal_x", KeyType::real, "0.9"},
             {"goal_y", KeyType::real, "0.9"},
             {"goal_radius", KeyType::real, "0.05"},
             {"motion_noise_std", KeyType::real, "0"},
             {"walls", KeyType::text, "default"},
         }},
        {"agent",
         {
             {"algorithm", KeyType::text, "decqn"},
             {"mode", KeyType::text, "mean"},
             {"gamma", KeyType::real, "0.99"},
             {"polyak_mu", KeyType::real, "0.005"},
             {"learning_rate", KeyType::real, "0.0003"},
             {"batch_size", KeyType::integer, "256"},
             {"gradient_updates", KeyType::integer, "100000"},
             {"dual_critic", KeyType::boolean, "true"},
             {"hidden_width", KeyType::integer, "512"},
             {"huber_delta", KeyType::real, "1"},
             {"grad_clip_norm", KeyType::real, "0"},
             {"bcq_tau", KeyType::real, "0.5"},
             {"cql_alpha", KeyType::real, "1"},
             {"iql_tau", KeyType::real, "0.5"},
             {"iql_lambda", KeyType::real, "20"},
             {"onestep_lambda", KeyType::real, "50"},
             {"exploration_epsilon", KeyType::real, "0.1"},
             {"replay_capacity", KeyType::integer, "100000"},
             {"warmup_steps", KeyType::integer, "1000"},
             {"metrics_interval", KeyType::integer, "1000"},
             {"eval_interval", KeyType::integer, "1000"},
             {"eval_episodes", KeyType::integer, "20"},
             {"checkpoint_interval", KeyType::integer, "25000"},
         }},
        {"collect",
         {
             {"transitions_per_dataset", KeyType::integer, "10000"},
             {"expert_stop_return", KeyType::real, "90"},
             {"max_env_steps", KeyType::integer, "100000"},
             {"online_seed", KeyType::integer, "1"},
             {"collect_seed", KeyType::integer, "7"},
             {"mix_seed", KeyType::integer, "9"},
             {"random_anchor_episodes", KeyType::integer, "1000"},
             {"expert_anchor_episodes", KeyType::integer, "100"},
             {"no_train", KeyType::boolean, "false"},
         }},
        {"grid",
         {
             {"algorithms", KeyType::text_list, "cql"},
             {"datasets", KeyType::text_list, "expert medium medium-expert random-medium-expert"},
             {"seeds", KeyType::int_list, "0 1 2 3 4"},
             {"suite", KeyType::text, ""},
             {"final_eval_episodes", KeyType::integer, "100"},
             {"bcq_tau", KeyType::real_list, ""},
             {"cql_alpha", KeyType::real_list, ""},
             {"iql_tau", KeyType::real_list, ""},
             {"iql_lambda", KeyType::real_list, ""},
             {"onestep_lambda", KeyType::real_list, ""},
         }},
        {"sim",
         {
             {"subactions", KeyType::int_list, "2 2 2"},
             {"b", KeyType::real, "1"},
             {"k", KeyType::real, "2"},
             {"gamma", KeyType::real, "1"},
             {"inner_reps", KeyType::integer, "10000"},
             {"outer_reps", KeyType::integer, "100"},
             {"seed", KeyType::integer, "0"},
         }},
        {"eval",
         {
             {"checkpoint", KeyType::text, ""},
             {"episodes", KeyType::integer, "100"},
             {"seed", KeyType::integer, "123"},
             {"suite", KeyType::text, ""},
         }},
    };
    return s;
}

const KeyDef* find_key(const std::string& section, const std::string& key) {
    for (const auto& sec : schema()) {
        if (sec.name != section) continue;
        for (const auto& def : sec.keys)
            if (def.key == key) return &def;
        return nullptr;
    }
    return nullptr;
}

bool section_exists(const std::string& section) {
    return std::any_of(schema().begin(), schema().end(),
                       [&](const SectionDef& sec) { return sec.name == section; });
}

std::string trimmed(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

void check_value(const std::string& section, const std::string& key, KeyType type,
                 const std::string& value) {
    const std::string where = section + "." + key;
    auto fail = [&](const char* what) { throw ConfigError(where + ": " + what); };
    auto is_int = [](const std::string& tok) {
        if (tok.empty()) return false;
        std::size_t i = (tok[0] == '-' || tok[0] == '+') ? 1 : 0;
        if (i == tok.size()) return false;
        for (; i < tok.size(); ++i)
            if (!std::isdigit(static_cast<unsigned char>(tok[i]))) return false;
        return true;
    };
    auto is_real = [](const std::string& tok) {
        try {
            std::size_t used = 0;
            (void)std::stod(tok, &used);
            return used == tok.size();
        } catch (...) {
            return false;
        }
    };
    switch (type) {
        case KeyType::integer:
            if (!is_int(value)) fail("expected an integer");
            break;
        case KeyType::real:
            if (!is_real(value)) fail("expected a number");
            break;
        case KeyType::boolean:
            if (value != "true" && value != "false" && value != "1" && value != "0")
                fail("expected true/false");
            break;
        case KeyType::text:
            break;
        case KeyType::int_list: {
            std::istringstream in(value);
            std::string tok;
            while (in >> tok)
                if (!is_int(tok)) fail("expected a list of integers");
            break;
        }
        case KeyType::real_list: {
            std::istringstream in(value);
            std::string tok;
            while (in >> tok)
                if (!is_real(tok)) fail("expected a list of numbers");
            break;
        }
        case KeyType::text_list:
            break;
    }
}

}  // namespace

RunConfig::RunConfig() {
    for (const auto& sec : schema())
        for (const auto& def : sec.keys) values_[sec.name][def.key] = def.default_value;
}

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value) {
    if (!section_exists(section)) throw ConfigError("unknown config section: [" + section + "]");
    const KeyDef* def = find_key(section, key);
    if (!def) throw ConfigError("unknown config key: " + section + "." + key);
    const std::string v = trimmed(value);
    check_value(section, key, def->type, v);
    values_[section][key] = v;
}

RunConfig RunConfig::from_string(const std::string& text) {
    RunConfig config;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        line_no += 1;
        const std::string t = trimmed(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
            section = trimmed(t.substr(1, t.size() - 2));
            if (!section_exists(section))
                throw ConfigError("line " + std::to_string(line_no) + ": unknown section [" +
                                  section + "]");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        if (section.empty())
            throw ConfigError("line " + std::to_string(line_no) + ": key outside any section");
        config.set(section, trimmed(t.substr(0, eq)), trimmed(t.substr(eq + 1)));
    }
    return config;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_string(buf.str());
}

namespace {

const std::string& raw(const std::map<std::string, std::map<std::string, std::string>>& values,
                       const std::string& section, const std::string& key) {
    const auto sec = values.find(section);
    if (sec == values.end()) throw ConfigError("unknown config section: [" + section + "]");
    const auto it = sec->second.find(key);
    if (it == sec->second.end()) throw ConfigError("unknown config key: " + section + "." + key);
    return it->second;
}

}  // namespace

long RunConfig::get_int(const std::string& section, const std::string& key) const {
    return std::stol(raw(values_, section, key));
}

double RunConfig::get_real(const std::string& section, const std::string& key) const {
    return std::stod(raw(values_, section, key));
}

bool RunConfig::get_bool(const std::string& section, const std::string& key) const {
    const std::string& v = raw(values_, section, key);
    return v == "true" || v == "1";
}

const std::string& RunConfig::get_str(const std::string& section, const std::string& key) const {
    return raw(values_, section, key);
}

std::vector<long> RunConfig::get_int_list(const std::string& section, const std::string& key) const {
    std::istringstream in(raw(values_, section, key));
    std::vector<long> out;
    long v;
    while (in >> v) out.push_back(v);
    return out;
}

std::vector<double> RunConfig::get_real_list(const std::string& section,
                                             const std::string& key) const {
    std::istringstream in(raw(values_, section, key));
    std::vector<double> out;
    double v;
    while (in >> v) out.push_back(v);
    return out;
}

std::vector<std::string> RunConfig::get_str_list(const std::string& section,
                                                 const std::string& key) const {
    std::istringstream in(raw(values_, section, key));
    std::vector<std::string> out;
    std::string v;
    while (in >> v) out.push_back(v);
    return out;
}

std::string RunConfig::freeze() const {
    std::ostringstream out;
    out << "# frl run configuration (all defaults materialised)\n";
    for (const auto& sec : schema()) {
        out << "\n[" << sec.name << "]\n";
        for (const auto& def : sec.keys)
            out << def.key << " = " << values_.at(sec.name).at(def.key) << "\n";
    }
    return out.str();
}

void RunConfig::freeze_to_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << freeze();
    if (!out) throw IoError("write failed: " + path);
}

maze::MazeConfig RunConfig::env_config() const {
    const std::string preset_name = get_str("env", "preset");
    if (preset_name != "maze")
        throw ConfigError("env.preset: only the 'maze' preset is available, got " + preset_name);
    maze::MazeConfig cfg = maze::preset(static_cast<int>(get_int("env", "actuators")));
    cfg.step_size = get_real("env", "step_size");
    cfg.max_steps = static_cast<int>(get_int("env", "max_steps"));
    cfg.start = {get_real("env", "start_x"), get_real("env", "start_y")};
    cfg.goal = {get_real("env", "goal_x"), get_real("env", "goal_y")};
    cfg.goal_radius = get_real("env", "goal_radius");
    cfg.motion_noise_std = get_real("env", "motion_noise_std");
    const std::string walls = get_str("env", "walls");
    if (walls == "none") {
        cfg.walls.clear();
    } else if (walls != "default") {
        // Custom walls: semicolon-separated "x1 y1 x2 y2" quadruples.
        cfg.walls.clear();
        std::istringstream segments(walls);
        std::string seg;
        while (std::getline(segments, seg, ';')) {
            std::istringstream coords(seg);
            maze::Segment wall;
            if (!(coords >> wall.a.x >> wall.a.y >> wall.b.x >> wall.b.y))
                throw ConfigError("env.walls: expected 'x1 y1 x2 y2' per segment");
            cfg.walls.push_back(wall);
        }
    }
    cfg.validate();
    return cfg;
}

agents::AgentConfig RunConfig::agent_config() const {
    agents::AgentConfig cfg;
    cfg.algorithm = agents::algorithm_from_string(get_str("agent", "algorithm"));
    const std::string mode = get_str("agent", "mode");
    if (mode == "mean")
        cfg.mode = DecompMode::mean;
    else if (mode == "sum")
        cfg.mode = DecompMode::sum;
    else if (mode == "independent")
        cfg.mode = DecompMode::independent;
    else
        throw ConfigError("agent.mode: expected mean, sum or independent");
    cfg.gamma = get_real("agent", "gamma");
    cfg.polyak_mu = get_real("agent", "polyak_mu");
    cfg.learning_rate = get_real("agent", "learning_rate");
    cfg.batch_size = static_cast<int>(get_int("agent", "batch_size"));
    cfg.gradient_updates = get_int("agent", "gradient_updates");
    cfg.dual_critic = get_bool("agent", "dual_critic");
    cfg.hidden_width = static_cast<int>(get_int("agent", "hidden_width"));
    cfg.huber_delta = get_real("agent", "huber_delta");
    cfg.grad_clip_norm = get_real("agent", "grad_clip_norm");
    cfg.bcq_tau = get_real("agent", "bcq_tau");
    cfg.cql_alpha = get_real("agent", "cql_alpha");
    cfg.iql_tau = get_real("agent", "iql_tau");
    cfg.iql_lambda = get_real("agent", "iql_lambda");
    cfg.onestep_lambda = get_real("agent", "onestep_lambda");
    cfg.exploration_epsilon = get_real("agent", "exploration_epsilon");
    cfg.replay_capacity = get_int("agent", "replay_capacity");
    cfg.warmup_steps = get_int("agent", "warmup_steps");
    cfg.metrics_interval = get_int("agent", "metrics_interval");
    cfg.eval_interval = get_int("agent", "eval_interval");
    cfg.eval_episodes = static_cast<int>(get_int("agent", "eval_episodes"));
    cfg.checkpoint_interval = get_int("agent", "checkpoint_interval");
    cfg.validate();
    return cfg;
}

sim::NoiseSimConfig RunConfig::sim_config() const {
    sim::NoiseSimConfig cfg;
    for (long n : get_int_list("sim", "subactions")) cfg.spec.n.push_back(static_cast<int>(n));
    cfg.b = get_real("sim", "b");
    cfg.k = get_real("sim", "k");
    cfg.gamma = get_real("sim", "gamma");
    cfg.inner_reps = get_int("sim", "inner_reps");
    cfg.outer_reps = get_int("sim", "outer_reps");
    cfg.seed = static_cast<std::uint64_t>(get_int("sim", "seed"));
    cfg.validate();
    return cfg;
}

}  // namespace frl::cfg
