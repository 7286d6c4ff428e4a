#include "frl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "frl/errors.hpp"

namespace frl::data {

const char* to_string(SourceTag tag) {
    switch (tag) {
        case SourceTag::expert: return "expert";
        case SourceTag::medium: return "medium";
        case SourceTag::random: return "random";
        case SourceTag::mixed: return "mixed";
    }
    return "?";
}

SourceTag source_tag_from_string(const std::string& s) {
    if (s == "expert") return SourceTag::expert;
    if (s == "medium") return SourceTag::medium;
    if (s == "random") return SourceTag::random;
    if (s == "mixed") return SourceTag::mixed;
    throw ConfigError("unknown source tag: " + s);
}

void Dataset::validate() const {
    header.spec.validate();
    if (header.obs_dim < 1)
        throw FormatError(FormatError::Kind::invariant_violation, "dataset: obs_dim must be >= 1");
    if (header.count != transitions.size())
        throw FormatError(FormatError::Kind::invariant_violation,
                          "dataset: header count does not match body");
    if ((header.source == SourceTag::mixed) != !header.recipe.empty())
        throw FormatError(FormatError::Kind::invariant_violation,
                          "dataset: mix recipe present iff source is mixed");
    for (const auto& t : transitions) {
        if (static_cast<int>(t.state.size()) != header.obs_dim ||
            static_cast<int>(t.next_state.size()) != header.obs_dim)
            throw FormatError(FormatError::Kind::invariant_violation,
                              "dataset: observation width mismatch");
        if (!header.spec.valid_action(t.action))
            throw FormatError(FormatError::Kind::invariant_violation,
                              "dataset: action outside the action spec");
        if (!std::isfinite(t.reward))
            throw FormatError(FormatError::Kind::invariant_violation,
                              "dataset: non-finite reward");
    }
}

Dataset collect(maze::MazeEnv& env, const Policy& policy, long num_transitions, double epsilon,
                std::uint64_t seed, SourceTag tag, const std::string& env_id) {
    if (num_transitions < 1) throw std::invalid_argument("collect: num_transitions must be >= 1");
    if (!(epsilon >= 0.0 && epsilon <= 1.0))
        throw std::invalid_argument("collect: epsilon must lie in [0,1]");

    const ActionSpec spec = env.config().action_spec();
    Rng explore = Rng::substream(seed, 0xc0111ec7);

    Dataset ds;
    ds.header.env_id = env_id;
    ds.header.spec = spec;
    ds.header.obs_dim = static_cast<int>(env.observation().size());
    ds.header.source = tag;
    ds.header.seed = seed;
    ds.transitions.reserve(static_cast<std::size_t>(num_transitions));

    env.reset();
    std::vector<double> obs = env.observation();
    while (static_cast<long>(ds.transitions.size()) < num_transitions) {
        FactoredAction action = policy(obs);
        if (!spec.valid_action(action))
            throw DimensionError("collect: policy produced an invalid action");
        for (std::size_t i = 0; i < action.size(); ++i) {
            if (epsilon > 0.0 && explore.uniform() < epsilon)
                action[i] = static_cast<int>(explore.uniform_int(
                    static_cast<std::uint64_t>(spec.n[i])));
        }
        const maze::StepResult r = env.step(action);

        Transition t;
        t.state = obs;
        t.action = action;
        t.reward = r.reward;
        t.next_state = env.observation();
        // Step-cap truncation is not termination: only goal transitions stop
        // the bootstrap.
        t.terminal = r.reached_goal;
        t.source = tag;
        ds.transitions.push_back(std::move(t));

        if (r.done) {
            env.reset();
            obs = env.observation();
        } else {
            obs = env.observation();
        }
    }
    ds.header.count = ds.transitions.size();
    ds.validate();
    return ds;
}

Dataset mix(const std::vector<std::pair<const Dataset*, double>>& parts, long total,
            std::uint64_t seed) {
    if (parts.empty()) throw std::invalid_argument("mix: need at least one part");
    if (total < 1) throw std::invalid_argument("mix: total must be >= 1");
    double fraction_sum = 0.0;
    for (const auto& [ds, fraction] : parts) fraction_sum += fraction;
    if (std::fabs(fraction_sum - 1.0) > 1e-9)
        throw std::invalid_argument("mix: fractions must sum to 1");

    // floor(fraction * total) each; the first part absorbs the remainder.
    std::vector<std::uint64_t> take(parts.size());
    long assigned = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        take[p] = static_cast<std::uint64_t>(std::floor(parts[p].second * total));
        assigned += static_cast<long>(take[p]);
    }
    take[0] += static_cast<std::uint64_t>(total - assigned);

    const Dataset& first = *parts.front().first;
    Dataset out;
    out.header.env_id = first.header.env_id;
    out.header.spec = first.header.spec;
    out.header.obs_dim = first.header.obs_dim;
    out.header.source = SourceTag::mixed;
    out.header.seed = seed;
    out.transitions.reserve(static_cast<std::size_t>(total));

    Rng rng = Rng::substream(seed, 0x3143);
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const Dataset& src = *parts[p].first;
        if (src.header.spec.n != first.header.spec.n || src.header.obs_dim != first.header.obs_dim)
            throw std::invalid_argument("mix: parts disagree on action spec or observation dim");
        if (src.transitions.size() < take[p])
            throw std::invalid_argument(std::string("mix: source '") +
                                        to_string(src.header.source) +
                                        "' has too few transitions");
        // Partial Fisher-Yates: the first take[p] entries of a shuffled index
        // range, i.e. a uniform draw without replacement.
        std::vector<std::size_t> idx(src.transitions.size());
        std::iota(idx.begin(), idx.end(), 0);
        for (std::uint64_t i = 0; i < take[p]; ++i) {
            const std::size_t j =
                i + static_cast<std::size_t>(rng.uniform_int(idx.size() - i));
            std::swap(idx[i], idx[j]);
            out.transitions.push_back(src.transitions[idx[i]]);
        }
        out.header.recipe.push_back(MixPart{src.header.source, parts[p].second, take[p]});
    }

    for (std::size_t i = out.transitions.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
        std::swap(out.transitions[i - 1], out.transitions[j]);
    }
    out.header.count = out.transitions.size();
    out.validate();
    return out;
}

std::vector<std::size_t> sample_indices(const Dataset& dataset, int batch_size, Rng& rng) {
    if (batch_size < 1) throw std::invalid_argument("sample: batch_size must be >= 1");
    if (dataset.transitions.empty()) throw std::invalid_argument("sample: empty dataset");
    std::vector<std::size_t> idx(static_cast<std::size_t>(batch_size));
    for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(dataset.transitions.size()));
    return idx;
}

std::vector<Transition> sample_batch(const Dataset& dataset, int batch_size, Rng& rng) {
    std::vector<Transition> batch;
    batch.reserve(static_cast<std::size_t>(batch_size));
    for (std::size_t i : sample_indices(dataset, batch_size, rng))
        batch.push_back(dataset.transitions[i]);
    return batch;
}

// --- Persistence ------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'F', 'R', 'L', 'D', 'A', 'T', '1', '\0'};

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError(FormatError::Kind::truncated, "dataset: unexpected end of data");
    return v;
}

void write_dataset(std::ostream& out, const Dataset& ds) {
    out.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(out, ds.header.version);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ds.header.env_id.size()));
    out.write(ds.header.env_id.data(), static_cast<std::streamsize>(ds.header.env_id.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ds.header.spec.n.size()));
    for (int n : ds.header.spec.n) write_pod<std::uint16_t>(out, static_cast<std::uint16_t>(n));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ds.header.obs_dim));
    write_pod<std::uint64_t>(out, ds.header.count);
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(ds.header.source));
    write_pod<std::uint64_t>(out, ds.header.seed);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ds.header.recipe.size()));
    for (const auto& part : ds.header.recipe) {
        write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(part.tag));
        write_pod<double>(out, part.fraction);
        write_pod<std::uint64_t>(out, part.count);
    }
    for (const auto& t : ds.transitions) {
        for (double x : t.state) write_pod<double>(out, x);
        for (int a : t.action) write_pod<std::uint16_t>(out, static_cast<std::uint16_t>(a));
        write_pod<double>(out, t.reward);
        for (double x : t.next_state) write_pod<double>(out, x);
        write_pod<std::uint8_t>(out, t.terminal ? 1 : 0);
        write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(t.source));
    }
}

Dataset read_dataset(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw FormatError(FormatError::Kind::magic_mismatch, "dataset: bad magic");
    Dataset ds;
    ds.header.version = read_pod<std::uint32_t>(in);
    if (ds.header.version != 1)
        throw FormatError(FormatError::Kind::version_mismatch,
                          "dataset: unsupported version " + std::to_string(ds.header.version));
    const auto id_len = read_pod<std::uint32_t>(in);
    if (id_len > 4096)
        throw FormatError(FormatError::Kind::invariant_violation, "dataset: implausible env id");
    ds.header.env_id.resize(id_len);
    in.read(ds.header.env_id.data(), id_len);
    if (!in) throw FormatError(FormatError::Kind::truncated, "dataset: unexpected end of data");
    const auto dims = read_pod<std::uint32_t>(in);
    if (dims == 0 || dims > 65535)
        throw FormatError(FormatError::Kind::invariant_violation,
                          "dataset: implausible dimension count");
    ds.header.spec.n.resize(dims);
    for (auto& n : ds.header.spec.n) n = read_pod<std::uint16_t>(in);
    ds.header.obs_dim = static_cast<int>(read_pod<std::uint32_t>(in));
    ds.header.count = read_pod<std::uint64_t>(in);
    ds.header.source = static_cast<SourceTag>(read_pod<std::uint8_t>(in));
    ds.header.seed = read_pod<std::uint64_t>(in);
    const auto recipe_parts = read_pod<std::uint32_t>(in);
    for (std::uint32_t p = 0; p < recipe_parts; ++p) {
        MixPart part;
        part.tag = static_cast<SourceTag>(read_pod<std::uint8_t>(in));
        part.fraction = read_pod<double>(in);
        part.count = read_pod<std::uint64_t>(in);
        ds.header.recipe.push_back(part);
    }
    ds.transitions.resize(ds.header.count);
    for (auto& t : ds.transitions) {
        t.state.resize(ds.header.obs_dim);
        for (auto& x : t.state) x = read_pod<double>(in);
        t.action.resize(dims);
        for (auto& a : t.action) a = read_pod<std::uint16_t>(in);
        t.reward = read_pod<double>(in);
        t.next_state.resize(ds.header.obs_dim);
        for (auto& x : t.next_state) x = read_pod<double>(in);
        t.terminal = read_pod<std::uint8_t>(in) != 0;
        t.source = static_cast<SourceTag>(read_pod<std::uint8_t>(in));
    }
    ds.validate();
    return ds;
}

}  // namespace

void save(const Dataset& dataset, const std::string& path) {
    dataset.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    write_dataset(out, dataset);
    if (!out) throw IoError("write failed: " + path);
}

Dataset load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    return read_dataset(in);
}

void export_csv(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.precision(17);
    const int obs = dataset.header.obs_dim;
    const int dims = dataset.header.spec.dims();
    for (int i = 0; i < obs; ++i) out << "s" << i << ',';
    for (int i = 0; i < dims; ++i) out << "a" << i << ',';
    out << "reward,";
    for (int i = 0; i < obs; ++i) out << "ns" << i << ',';
    out << "terminal,source\n";
    for (const auto& t : dataset.transitions) {
        for (double x : t.state) out << x << ',';
        for (int a : t.action) out << a << ',';
        out << t.reward << ',';
        for (double x : t.next_state) out << x << ',';
        out << (t.terminal ? 1 : 0) << ',' << to_string(t.source) << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

std::uint64_t content_hash(const Dataset& dataset) {
    std::ostringstream buf(std::ios::binary);
    write_dataset(buf, dataset);
    const std::string bytes = buf.str();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace frl::data
