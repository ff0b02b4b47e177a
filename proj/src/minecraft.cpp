#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "dehrl/envs.hpp"

namespace dehrl {

namespace {

// Horizontal unit step per yaw: north is -y.
constexpr std::array<std::array<int, 2>, 4> kYawStep{{{0, -1}, {1, 0}, {0, 1}, {-1, 0}}};

double kind_code(Block b) {
    switch (b) {
    case Block::Grass:
        return 1.0 / 3.0;
    case Block::Brick:
        return 2.0 / 3.0;
    case Block::Stone:
        return 1.0;
    case Block::Air:
        break;
    }
    return 0.0;
}

bool solid(Block b) { return b != Block::Air; }

void validate(const MineCraftConfig& c) {
    if (c.size_x < 3 || c.size_y < 3 || c.size_z < 4)
        throw std::invalid_argument("MineCraft world must be at least 3 x 3 x 4");
    if (c.episode_length <= 0)
        throw std::invalid_argument("MineCraft episode length must be positive");
    if (c.action_count != 10 && c.action_count != 11)
        throw std::invalid_argument("MineCraft action count must be 10 or 11");
    if (c.view_size < 1 || c.view_size % 2 == 0)
        throw std::invalid_argument("MineCraft view size must be a positive odd number");
    if (!(c.view_depth > 0.0))
        throw std::invalid_argument("MineCraft view depth must be positive");
}

// Moves the agent one cell horizontally if possible; `climb` lets it step onto a
// one-block ledge. Falls afterwards until standing on something solid.
void try_move(VoxelWorld& w, int dx, int dy, bool climb) {
    const int tx = w.x + dx, ty = w.y + dy;
    if (!w.in_bounds(tx, ty, w.z))
        return;
    if (solid(w.at(tx, ty, w.z))) {
        if (!climb || w.z + 1 >= w.config.size_z)
            return;
        if (solid(w.at(tx, ty, w.z + 1)) || solid(w.at(w.x, w.y, w.z + 1)))
            return;
        w.x = tx;
        w.y = ty;
        ++w.z;
        return;
    }
    w.x = tx;
    w.y = ty;
    while (w.z > 0 && !solid(w.at(w.x, w.y, w.z - 1)))
        --w.z;
}

class Fnv1a {
public:
    void add_bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 1099511628211ull;
        }
    }
    template <typename T>
    void add(T v) {
        add_bytes(&v, sizeof(T));
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 14695981039346656037ull;
};

}  // namespace

bool VoxelWorld::in_bounds(int cx, int cy, int cz) const {
    return cx >= 0 && cy >= 0 && cz >= 0 && cx < config.size_x && cy < config.size_y && cz < config.size_z;
}

std::size_t VoxelWorld::index(int cx, int cy, int cz) const {
    return (static_cast<std::size_t>(cz) * static_cast<std::size_t>(config.size_y) + static_cast<std::size_t>(cy)) *
               static_cast<std::size_t>(config.size_x) +
           static_cast<std::size_t>(cx);
}

Block VoxelWorld::at(int cx, int cy, int cz) const { return blocks[index(cx, cy, cz)]; }

std::array<int, 3> VoxelWorld::faced_cell() const {
    const auto& d = kYawStep[static_cast<std::size_t>(yaw)];
    return {x + d[0], y + d[1], pitch_down ? z - 1 : z};
}

std::size_t VoxelWorld::valid_breaks() const {
    std::size_t n = 0;
    for (auto b : original_broken)
        n += b;
    return n;
}

std::size_t VoxelWorld::valid_builds() const {
    std::size_t n = 0;
    for (auto b : built)
        n += b;
    return n;
}

void VoxelWorld::save(BinaryWriter& w) const {
    w.tag("VOXW");
    w.write(config.size_x);
    w.write(config.size_y);
    w.write(config.size_z);
    w.write(config.episode_length);
    w.write(config.action_count);
    w.write(config.view_size);
    w.write(config.view_depth);
    std::vector<std::uint8_t> raw(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i)
        raw[i] = static_cast<std::uint8_t>(blocks[i]);
    w.write(raw);
    w.write(original_broken);
    w.write(built);
    w.write(x);
    w.write(y);
    w.write(z);
    w.write(yaw);
    w.write(static_cast<std::uint8_t>(pitch_down));
    w.write(steps);
    w.write(static_cast<std::uint8_t>(done));
    w.write(air_to_solid);
    w.write(built_removed);
}

VoxelWorld VoxelWorld::load(BinaryReader& r) {
    r.expect("VOXW");
    VoxelWorld w;
    w.config.size_x = r.read<int>();
    w.config.size_y = r.read<int>();
    w.config.size_z = r.read<int>();
    w.config.episode_length = r.read<int>();
    w.config.action_count = r.read<int>();
    w.config.view_size = r.read<int>();
    w.config.view_depth = r.read<double>();
    validate(w.config);
    auto raw = r.read_vector<std::uint8_t>();
    const std::size_t cells = static_cast<std::size_t>(w.config.size_x) * w.config.size_y * w.config.size_z;
    if (raw.size() != cells)
        throw FormatError("voxel grid size does not match its dimensions");
    w.blocks.resize(cells);
    for (std::size_t i = 0; i < cells; ++i) {
        if (raw[i] > 3)
            throw FormatError("unknown block kind in checkpoint");
        w.blocks[i] = static_cast<Block>(raw[i]);
    }
    w.original_broken = r.read_vector<std::uint8_t>();
    w.built = r.read_vector<std::uint8_t>();
    if (w.original_broken.size() != cells || w.built.size() != cells)
        throw FormatError("voxel bookkeeping size does not match the grid");
    w.x = r.read<int>();
    w.y = r.read<int>();
    w.z = r.read<int>();
    w.yaw = r.read<int>();
    w.pitch_down = r.read<std::uint8_t>() != 0;
    w.steps = r.read<int>();
    w.done = r.read<std::uint8_t>() != 0;
    w.air_to_solid = r.read<std::uint64_t>();
    w.built_removed = r.read<std::uint64_t>();
    return w;
}

VoxelWorld minecraft_reset(const MineCraftConfig& config) {
    validate(config);
    VoxelWorld w;
    w.config = config;
    const std::size_t cells = static_cast<std::size_t>(config.size_x) * config.size_y * config.size_z;
    w.blocks.assign(cells, Block::Air);
    w.original_broken.assign(cells, 0);
    w.built.assign(cells, 0);
    for (int cy = 0; cy < config.size_y; ++cy)
        for (int cx = 0; cx < config.size_x; ++cx) {
            w.blocks[w.index(cx, cy, 0)] = Block::Stone;
            w.blocks[w.index(cx, cy, 1)] = Block::Grass;
        }
    w.x = config.size_x / 2;
    w.y = config.size_y / 2;
    w.z = 2;
    return w;
}

StepOutcome minecraft_step(VoxelWorld& w, std::size_t action) {
    if (w.done)
        throw std::logic_error("minecraft_step: episode is already done");
    if (action >= static_cast<std::size_t>(w.config.action_count))
        throw std::out_of_range("minecraft_step: action " + std::to_string(action) + " outside [0, " +
                                std::to_string(w.config.action_count) + ")");

    const bool auto_climb = w.config.action_count == 10;
    const auto& fwd = kYawStep[static_cast<std::size_t>(w.yaw)];
    const std::array<int, 2> right{-fwd[1], fwd[0]};
    switch (static_cast<MineCraftAction>(action)) {
    case MineCraftAction::Forward:
        try_move(w, fwd[0], fwd[1], auto_climb);
        break;
    case MineCraftAction::Backward:
        try_move(w, -fwd[0], -fwd[1], auto_climb);
        break;
    case MineCraftAction::StrafeLeft:
        try_move(w, -right[0], -right[1], auto_climb);
        break;
    case MineCraftAction::StrafeRight:
        try_move(w, right[0], right[1], auto_climb);
        break;
    case MineCraftAction::TurnLeft:
        w.yaw = (w.yaw + 3) % 4;
        break;
    case MineCraftAction::TurnRight:
        w.yaw = (w.yaw + 1) % 4;
        break;
    case MineCraftAction::LookUp:
        w.pitch_down = false;
        break;
    case MineCraftAction::LookDown:
        w.pitch_down = true;
        break;
    case MineCraftAction::Break: {
        const auto c = w.faced_cell();
        if (!w.in_bounds(c[0], c[1], c[2]))
            break;
        const std::size_t i = w.index(c[0], c[1], c[2]);
        const Block b = w.blocks[i];
        if (b == Block::Air || b == Block::Stone)
            break;
        w.blocks[i] = Block::Air;
        if (w.built[i]) {
            w.built[i] = 0;
            ++w.built_removed;
        } else {
            w.original_broken[i] = 1;
        }
        break;
    }
    case MineCraftAction::Build: {
        const auto c = w.faced_cell();
        if (!w.in_bounds(c[0], c[1], c[2]))
            break;
        const std::size_t i = w.index(c[0], c[1], c[2]);
        if (w.blocks[i] != Block::Air)
            break;
        w.blocks[i] = Block::Brick;
        w.built[i] = 1;
        ++w.air_to_solid;
        break;
    }
    case MineCraftAction::Jump:
        try_move(w, fwd[0], fwd[1], true);
        break;
    }

    ++w.steps;
    StepOutcome out;
    out.done = w.steps >= w.config.episode_length;
    w.done = out.done;
    return out;
}

Observation minecraft_render(const VoxelWorld& w) {
    const auto k = static_cast<std::size_t>(w.config.view_size);
    Observation obs(2, k, k);
    const auto& fwd = kYawStep[static_cast<std::size_t>(w.yaw)];
    const double fx = fwd[0], fy = fwd[1];
    const double rx = -fwd[1], ry = fwd[0];
    const double ex = w.x + 0.5, ey = w.y + 0.5, ez = w.z + 0.5;
    const double half = (static_cast<double>(k) - 1.0) / 2.0;
    const double depth = w.config.view_depth;
    constexpr double kStep = 0.125;
    for (std::size_t row = 0; row < k; ++row) {
        double slope_v = half > 0 ? (half - static_cast<double>(row)) / half : 0.0;
        if (w.pitch_down)
            slope_v -= 1.0;
        for (std::size_t col = 0; col < k; ++col) {
            const double slope_h = half > 0 ? (static_cast<double>(col) - half) / half : 0.0;
            const double dx = fx + slope_h * rx, dy = fy + slope_h * ry, dz = slope_v;
            for (double s = kStep; s <= depth; s += kStep) {
                const int cx = static_cast<int>(std::floor(ex + s * dx));
                const int cy = static_cast<int>(std::floor(ey + s * dy));
                const int cz = static_cast<int>(std::floor(ez + s * dz));
                if (cz >= w.config.size_z)
                    break;  // open sky
                if (cx < 0 || cy < 0 || cx >= w.config.size_x || cy >= w.config.size_y || cz < 0) {
                    obs.at(0, row, col) = 1.0 - s / depth;
                    break;  // world boundary: depth only, kind 0
                }
                const Block b = w.at(cx, cy, cz);
                if (solid(b)) {
                    obs.at(0, row, col) = 1.0 - s / depth;
                    obs.at(1, row, col) = kind_code(b);
                    break;
                }
            }
        }
    }
    return obs;
}

std::size_t valid_operations(const VoxelWorld& w) { return w.valid_breaks() + w.valid_builds(); }

std::uint64_t world_hash(const VoxelWorld& w) {
    Fnv1a h;
    h.add_bytes(w.blocks.data(), w.blocks.size() * sizeof(Block));
    h.add_bytes(w.original_broken.data(), w.original_broken.size());
    h.add_bytes(w.built.data(), w.built.size());
    h.add(w.x);
    h.add(w.y);
    h.add(w.z);
    h.add(w.yaw);
    h.add(w.pitch_down);
    h.add(w.steps);
    return h.value();
}

MineCraftEnv::MineCraftEnv(MineCraftConfig config) : config_(config), world_(minecraft_reset(config)) {}

std::array<std::size_t, 3> MineCraftEnv::observation_shape() const {
    const auto k = static_cast<std::size_t>(config_.view_size);
    return {2, k, k};
}

Observation MineCraftEnv::reset() {
    world_ = minecraft_reset(config_);
    return observe();
}

StepOutcome MineCraftEnv::step(std::size_t action) { return minecraft_step(world_, action); }

std::map<std::string, double> MineCraftEnv::episode_stats() const {
    return {{"valid_operations", static_cast<double>(valid_operations(world_))},
            {"valid_breaks", static_cast<double>(world_.valid_breaks())},
            {"valid_builds", static_cast<double>(world_.valid_builds())}};
}

void MineCraftEnv::save(BinaryWriter& w) const {
    w.tag("MENV");
    world_.save(w);
}

void MineCraftEnv::load(BinaryReader& r) {
    r.expect("MENV");
    world_ = VoxelWorld::load(r);
}

void write_trace(std::ostream& out, const std::vector<TraceRecord>& records) {
    for (const auto& rec : records) {
        out << rec.step << ' ' << rec.action << ' ' << rec.reward << ' ' << (rec.done ? 1 : 0) << ' ' << std::hex
            << rec.hash << std::dec << '\n';
    }
}

std::vector<TraceRecord> read_trace(std::istream& in) {
    std::vector<TraceRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::istringstream ss(line);
        TraceRecord rec;
        int done = 0;
        ss >> rec.step >> rec.action >> rec.reward >> done >> std::hex >> rec.hash;
        if (ss.fail())
            throw std::runtime_error("malformed trace line: " + line);
        rec.done = done != 0;
        records.push_back(rec);
    }
    return records;
}

}  // namespace dehrl
