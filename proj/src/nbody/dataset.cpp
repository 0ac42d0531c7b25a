#include "spacetime/dataset.hpp"

#include <cmath>
#include <random>

#include "common/binary_io.hpp"
#include "json.hpp"
#include "spacetime/error.hpp"
#include "spacetime/rng.hpp"

namespace spacetime {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'S', 'E', 'T', 'D'};

std::uint64_t split_index(const std::string& split) {
    for (std::uint64_t i = 0; i < 3; ++i) {
        if (split == kSplits[i]) return i;
    }
    throw InvalidArgument("unknown split '" + split + "' (expected train, val or test)");
}

constexpr std::uint64_t kNoiseStream = 0x6e6f697365ULL;

json config_json(const DatasetConfig& c) {
    return json{{"n_particles", c.n_particles}, {"seq_len", c.seq_len},
                {"horizon", c.horizon},         {"train_count", c.train_count},
                {"val_count", c.val_count},     {"test_count", c.test_count},
                {"noise_variance", c.noise_variance},
                {"dt", c.dt},                   {"softening", c.softening},
                {"stride", c.stride},           {"seed", c.seed}};
}

DatasetConfig config_from(const json& j) {
    DatasetConfig c;
    auto take = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    take("n_particles", c.n_particles);
    take("seq_len", c.seq_len);
    take("horizon", c.horizon);
    take("train_count", c.train_count);
    take("val_count", c.val_count);
    take("test_count", c.test_count);
    take("noise_variance", c.noise_variance);
    take("dt", c.dt);
    take("softening", c.softening);
    take("stride", c.stride);
    take("seed", c.seed);
    return c;
}

}  // namespace

std::size_t DatasetConfig::count_for(const std::string& split) const {
    switch (split_index(split)) {
        case 0: return train_count;
        case 1: return val_count;
        default: return test_count;
    }
}

void DatasetConfig::validate() const {
    if (n_particles < 2) throw InvalidArgument("n_particles must be at least 2");
    if (seq_len < 1) throw InvalidArgument("seq_len must be at least 1");
    if (seq_len >= horizon) {
        throw InvalidArgument("horizon (" + std::to_string(horizon) + ") must exceed seq_len (" +
                              std::to_string(seq_len) + ")");
    }
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("dt must be positive");
    if (!(softening > 0.0) || !std::isfinite(softening)) throw InvalidArgument("softening must be positive");
    if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance)) {
        throw InvalidArgument("noise_variance must be non-negative");
    }
    if (stride < 1) throw InvalidArgument("stride must be at least 1");
}

std::span<const double> Trajectory::positions_at(std::size_t t) const {
    const std::size_t w = n_particles() * kSpatialDim;
    return std::span<const double>(positions).subspan(t * w, w);
}

std::span<const double> Trajectory::velocities_at(std::size_t t) const {
    const std::size_t w = n_particles() * kSpatialDim;
    return std::span<const double>(velocities).subspan(t * w, w);
}

ParticleState Trajectory::state_at(std::size_t t) const {
    auto x = positions_at(t);
    auto v = velocities_at(t);
    return ParticleState{{x.begin(), x.end()}, {v.begin(), v.end()}, charges};
}

Trajectory simulate_trajectory(const DatasetConfig& config, std::uint64_t seed) {
    ParticleState s = sample_initial_conditions(config.n_particles, seed);
    const std::size_t frames = config.frames();
    const std::size_t w = config.n_particles * kSpatialDim;
    Trajectory traj;
    traj.charges = s.charges;
    traj.positions.reserve(frames * w);
    traj.velocities.reserve(frames * w);
    for (std::size_t t = 0; t < frames; ++t) {
        if (t > 0) {
            for (std::size_t k = 0; k < config.stride; ++k) s = integrate_step(s, config.dt, config.softening);
        }
        traj.positions.insert(traj.positions.end(), s.positions.begin(), s.positions.end());
        traj.velocities.insert(traj.velocities.end(), s.velocities.begin(), s.velocities.end());
    }
    return traj;
}

Dataset generate_dataset(const DatasetConfig& config, const std::string& split) {
    config.validate();
    const std::uint64_t sid = split_index(split);
    Dataset ds;
    ds.split = split;
    ds.config = config;
    ds.config.noise_variance = 0.0;
    const std::size_t count = config.count_for(split);
    ds.trajectories.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        ds.trajectories.push_back(simulate_trajectory(config, derive_seed(config.seed, sid, i)));
    }
    if (config.noise_variance > 0.0) {
        return add_noise(ds, config.noise_variance, derive_seed(config.seed, sid, kNoiseStream));
    }
    return ds;
}

Dataset add_noise(const Dataset& dataset, double variance, std::uint64_t seed) {
    if (!(variance >= 0.0) || !std::isfinite(variance)) {
        throw InvalidArgument("add_noise: variance must be non-negative");
    }
    Dataset out = dataset;
    if (variance == 0.0) return out;
    out.config.noise_variance += variance;
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, std::sqrt(variance));
    for (Trajectory& t : out.trajectories) {
        for (double& x : t.positions) x += noise(rng);
        for (double& v : t.velocities) v += noise(rng);
    }
    return out;
}

std::string config_to_json(const DatasetConfig& config) { return config_json(config).dump(); }

DatasetConfig config_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (!j.is_object()) throw InvalidArgument("dataset config must be a JSON object");
        return config_from(j);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("dataset config: ") + e.what());
    }
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
    const std::size_t n = dataset.config.n_particles;
    const std::size_t w = dataset.config.frames() * n * kSpatialDim;
    json header = {{"split", dataset.split},
                   {"count", dataset.trajectories.size()},
                   {"config", config_json(dataset.config)}};
    io::Writer out;
    out.bytes(kMagic, sizeof kMagic);
    out.u32(kDatasetVersion);
    out.str(header.dump());
    for (const Trajectory& t : dataset.trajectories) {
        if (t.charges.size() != n || t.positions.size() != w || t.velocities.size() != w) {
            throw ShapeError("write_dataset: trajectory does not match the dataset config");
        }
        out.f64s(t.charges.data(), n);
        out.f64s(t.positions.data(), w);
        out.f64s(t.velocities.data(), w);
    }
    io::write_file(path, out.buffer());
}

Dataset read_dataset(const std::filesystem::path& path) {
    const std::string bytes = io::read_file(path);
    io::Reader in(bytes);
    char magic[4];
    in.bytes(magic, sizeof magic);
    if (std::string_view(magic, 4) != std::string_view(kMagic, 4)) {
        throw FormatError(path.string() + ": not a dataset file (bad magic)");
    }
    const std::uint32_t version = in.u32();
    if (version != kDatasetVersion) {
        throw FormatError(path.string() + ": unsupported dataset version " + std::to_string(version));
    }
    Dataset ds;
    std::size_t count = 0;
    try {
        const json header = json::parse(in.str());
        ds.split = header.at("split").get<std::string>();
        count = header.at("count").get<std::size_t>();
        ds.config = config_from(header.at("config"));
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": malformed header: " + e.what());
    }
    const std::size_t n = ds.config.n_particles;
    const std::size_t w = ds.config.frames() * n * kSpatialDim;
    const std::size_t per_traj = (n + 2 * w) * sizeof(double);
    if (per_traj == 0 || count > in.remaining() / per_traj) throw FormatError(path.string() + ": truncated payload");
    ds.trajectories.resize(count);
    for (Trajectory& t : ds.trajectories) {
        t.charges.resize(n);
        t.positions.resize(w);
        t.velocities.resize(w);
        in.f64s(t.charges.data(), n);
        in.f64s(t.positions.data(), w);
        in.f64s(t.velocities.data(), w);
    }
    if (in.remaining() != 0) throw FormatError(path.string() + ": trailing bytes after payload");
    return ds;
}

}  // namespace spacetime
