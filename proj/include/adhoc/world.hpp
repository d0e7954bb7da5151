#pragma once

// House, object, and placement model plus the benchmark scenario and team
// generators. Houses are procedurally generated rectangular-partition
// floorplans: rooms from a binary space split, door cells carved on shared
// walls along a spanning tree so every room is reachable.

#include "adhoc/rng.hpp"
#include "adhoc/taxonomy.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace adhoc::world {

struct GridPos {
    int row = 0;
    int col = 0;
    auto operator<=>(const GridPos&) const = default;
};

inline int manhattan(GridPos a, GridPos b) {
    return std::abs(a.row - b.row) + std::abs(a.col - b.col);
}

inline int chebyshev(GridPos a, GridPos b) {
    return std::max(std::abs(a.row - b.row), std::abs(a.col - b.col));
}

enum class CellKind : std::uint8_t { wall, door, floor };

struct Cell {
    CellKind kind = CellKind::wall;
    int room_id = -1; // only meaningful for floor cells
};

struct Room {
    int room_id = 0;
    RoomType room_type = RoomType::kitchen;
};

struct ReceptacleInstance {
    std::string receptacle_id;
    std::string receptacle_type;
    GridPos position;
    Elevation elevation = Elevation::low;
};

// An object is in exactly one place: on a receptacle, loose on a floor cell,
// or in some agent's hand.
struct ObjectLocation {
    enum class Kind { on_receptacle, on_floor, held };
    Kind kind = Kind::on_receptacle;
    std::string receptacle_id; // on_receptacle
    GridPos cell;              // on_floor
    int agent_id = -1;         // held

    static ObjectLocation on(std::string receptacle) {
        ObjectLocation l;
        l.kind = Kind::on_receptacle;
        l.receptacle_id = std::move(receptacle);
        return l;
    }
    static ObjectLocation on_floor(GridPos cell) {
        ObjectLocation l;
        l.kind = Kind::on_floor;
        l.cell = cell;
        return l;
    }
    static ObjectLocation held_by(int agent) {
        ObjectLocation l;
        l.kind = Kind::held;
        l.agent_id = agent;
        return l;
    }
    bool operator==(const ObjectLocation& o) const {
        if (kind != o.kind) return false;
        switch (kind) {
            case Kind::on_receptacle: return receptacle_id == o.receptacle_id;
            case Kind::on_floor: return cell == o.cell;
            case Kind::held: return agent_id == o.agent_id;
        }
        return false;
    }
};

struct ObjectInstance {
    std::string object_id;
    std::string object_type;
    double mass_kg = 1.0; // within [0.1, 20]
    ObjectLocation location;
};

struct House {
    int rows = 0;
    int cols = 0;
    std::vector<Cell> grid; // row-major
    std::vector<Room> rooms;
    std::vector<ReceptacleInstance> receptacles;
    std::vector<ObjectInstance> objects;
    std::uint64_t seed = 0;

    bool in_bounds(GridPos p) const {
        return p.row >= 0 && p.row < rows && p.col >= 0 && p.col < cols;
    }
    const Cell& at(GridPos p) const { return grid[p.row * cols + p.col]; }
    Cell& at(GridPos p) { return grid[p.row * cols + p.col]; }
    bool traversable(GridPos p) const {
        return in_bounds(p) && at(p).kind != CellKind::wall;
    }
    int room_id_at(GridPos p) const {
        return in_bounds(p) && at(p).kind == CellKind::floor ? at(p).room_id : -1;
    }
    RoomType room_type_of(int room_id) const { return rooms.at(room_id).room_type; }

    const ReceptacleInstance* find_receptacle(const std::string& id) const {
        for (const auto& r : receptacles)
            if (r.receptacle_id == id) return &r;
        return nullptr;
    }
    const ObjectInstance* find_object(const std::string& id) const {
        for (const auto& o : objects)
            if (o.object_id == id) return &o;
        return nullptr;
    }
    ObjectInstance* find_object(const std::string& id) {
        for (auto& o : objects)
            if (o.object_id == id) return &o;
        return nullptr;
    }

    // Resting position of an object; nullopt while held.
    std::optional<GridPos> object_cell(const ObjectInstance& obj) const {
        switch (obj.location.kind) {
            case ObjectLocation::Kind::on_receptacle: {
                const auto* rec = find_receptacle(obj.location.receptacle_id);
                if (!rec) throw std::runtime_error("dangling receptacle id " + obj.location.receptacle_id);
                return rec->position;
            }
            case ObjectLocation::Kind::on_floor: return obj.location.cell;
            case ObjectLocation::Kind::held: return std::nullopt;
        }
        return std::nullopt;
    }

    std::vector<GridPos> floor_cells() const {
        std::vector<GridPos> out;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                if (at({r, c}).kind == CellKind::floor) out.push_back({r, c});
        return out;
    }
};

struct AgentProfile {
    int agent_id = 0;
    bool alpha_nav = true;
    bool alpha_manip = false;
    int height = 0;           // 0 = low camera, 1 = high camera
    double payload_kg = 0.0;  // in [0.1, 20]
    int battery_steps = 0;    // in [50, 500]
    GridPos start_position;
    int join_time = 0;
};

enum class Difficulty { Easy, Medium, Difficult };

inline std::string to_string(Difficulty d) {
    switch (d) {
        case Difficulty::Easy: return "Easy";
        case Difficulty::Medium: return "Medium";
        case Difficulty::Difficult: return "Difficult";
    }
    return "?";
}

inline Difficulty classify_difficulty(int n_rooms) {
    if (n_rooms < 1 || n_rooms > 10)
        throw std::invalid_argument("room count out of range: " + std::to_string(n_rooms));
    if (n_rooms <= 3) return Difficulty::Easy;
    if (n_rooms <= 6) return Difficulty::Medium;
    return Difficulty::Difficult;
}

struct Misplacement {
    std::string object_id;
    std::string original_receptacle_id;
    ObjectLocation placed_at; // on_receptacle or on_floor
};

struct Scenario {
    std::string scenario_id;
    House house; // objects already carry their misplaced locations
    std::vector<Misplacement> misplacements;
    std::vector<AgentProfile> team;
    AgentProfile adhoc;
    Difficulty difficulty = Difficulty::Easy;

    int k() const { return static_cast<int>(misplacements.size()); }
};

// ---------------------------------------------------------------------------
// Grid helpers
// ---------------------------------------------------------------------------

inline const std::vector<GridPos>& four_neighbors() {
    static const std::vector<GridPos> kDirs = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
    return kDirs;
}

// BFS over traversable cells; returns distance grid (-1 unreachable).
inline std::vector<int> bfs_distances(const House& h, GridPos start) {
    std::vector<int> dist(static_cast<std::size_t>(h.rows) * h.cols, -1);
    if (!h.traversable(start)) return dist;
    std::deque<GridPos> queue{start};
    dist[start.row * h.cols + start.col] = 0;
    while (!queue.empty()) {
        GridPos p = queue.front();
        queue.pop_front();
        for (GridPos d : four_neighbors()) {
            GridPos q{p.row + d.row, p.col + d.col};
            if (!h.traversable(q)) continue;
            int& dq = dist[q.row * h.cols + q.col];
            if (dq < 0) {
                dq = dist[p.row * h.cols + p.col] + 1;
                queue.push_back(q);
            }
        }
    }
    return dist;
}

inline bool fully_traversable(const House& h) {
    auto cells = h.floor_cells();
    if (cells.empty()) return false;
    auto dist = bfs_distances(h, cells.front());
    for (GridPos p : cells)
        if (dist[p.row * h.cols + p.col] < 0) return false;
    return true;
}

// ---------------------------------------------------------------------------
// House generation
// ---------------------------------------------------------------------------

namespace detail {

struct Rect {
    int top, left, height, width; // interior cells, walls excluded
};

constexpr int kMinRoomSide = 4;

inline bool splittable(const Rect& r) {
    return r.height >= 2 * kMinRoomSide + 1 || r.width >= 2 * kMinRoomSide + 1;
}

} // namespace detail

inline House generate_house(std::uint64_t seed, int n_rooms,
                            const PlacementRules& rules = default_placement_rules()) {
    using detail::Rect;
    using detail::kMinRoomSide;
    if (n_rooms < 1 || n_rooms > 10)
        throw std::invalid_argument("n_rooms must be in [1,10], got " + std::to_string(n_rooms));

    Rng rng(mix_seed(seed, fnv1a64("house") ^ static_cast<std::uint64_t>(n_rooms)));

    // Greedy largest-first splitting can corner itself into a partition where
    // no rect is still splittable; re-roll the whole partition when that
    // happens instead of failing.
    std::vector<Rect> rects;
    int interior_rows = 0, interior_cols = 0;
    for (int attempt = 0;; ++attempt) {
        if (attempt >= 64) throw std::runtime_error("house generation: partition failed");
        // Interior sized so an a-by-b grid of rooms with side >= 4 fits.
        int a = 1, b = 1;
        while (a * b < n_rooms) (a <= b ? a : b) += 1;
        interior_rows = a * (kMinRoomSide + 2) + (a - 1) + rng.uniform_int(0, 2);
        interior_cols = b * (kMinRoomSide + 2) + (b - 1) + rng.uniform_int(0, 2);

        rects.assign(1, Rect{1, 1, interior_rows, interior_cols});
        bool stuck = false;
        while (static_cast<int>(rects.size()) < n_rooms && !stuck) {
            int best = -1;
            for (std::size_t i = 0; i < rects.size(); ++i) {
                if (!detail::splittable(rects[i])) continue;
                if (best < 0 || rects[i].height * rects[i].width >
                                    rects[best].height * rects[best].width)
                    best = static_cast<int>(i);
            }
            if (best < 0) {
                stuck = true;
                break;
            }
            Rect r = rects[best];
            const bool split_rows = r.height >= r.width
                                        ? r.height >= 2 * kMinRoomSide + 1
                                        : r.width < 2 * kMinRoomSide + 1;
            if (split_rows) {
                const int cut = rng.uniform_int(kMinRoomSide, r.height - kMinRoomSide - 1);
                rects[best] = {r.top, r.left, cut, r.width};
                rects.push_back({r.top + cut + 1, r.left, r.height - cut - 1, r.width});
            } else {
                const int cut = rng.uniform_int(kMinRoomSide, r.width - kMinRoomSide - 1);
                rects[best] = {r.top, r.left, r.height, cut};
                rects.push_back({r.top, r.left + cut + 1, r.height, r.width - cut - 1});
            }
        }
        if (!stuck) break;
    }

    House house;
    house.seed = seed;
    house.rows = interior_rows + 2;
    house.cols = interior_cols + 2;
    house.grid.assign(static_cast<std::size_t>(house.rows) * house.cols, Cell{});

    for (int i = 0; i < n_rooms; ++i) {
        const Rect& r = rects[i];
        for (int row = r.top; row < r.top + r.height; ++row)
            for (int col = r.left; col < r.left + r.width; ++col)
                house.at({row, col}) = Cell{CellKind::floor, i};
        house.rooms.push_back({i, rng.pick(all_room_types())});
    }

    // Door candidates: wall cells sitting between two distinct rooms.
    std::map<std::pair<int, int>, std::vector<GridPos>> shared_walls;
    for (int row = 1; row < house.rows - 1; ++row) {
        for (int col = 1; col < house.cols - 1; ++col) {
            GridPos p{row, col};
            if (house.at(p).kind != CellKind::wall) continue;
            const int up = house.room_id_at({row - 1, col});
            const int down = house.room_id_at({row + 1, col});
            const int left = house.room_id_at({row, col - 1});
            const int right = house.room_id_at({row, col + 1});
            if (up >= 0 && down >= 0 && up != down)
                shared_walls[{std::min(up, down), std::max(up, down)}].push_back(p);
            else if (left >= 0 && right >= 0 && left != right)
                shared_walls[{std::min(left, right), std::max(left, right)}].push_back(p);
        }
    }

    // Spanning tree over the room adjacency graph, one door per tree edge,
    // plus occasional extra doors on the remaining shared walls.
    std::vector<bool> connected(n_rooms, false);
    connected[0] = true;
    int n_connected = 1;
    std::vector<std::pair<int, int>> tree_edges;
    while (n_connected < n_rooms) {
        bool grew = false;
        for (auto& [edge, cells] : shared_walls) {
            if (connected[edge.first] == connected[edge.second]) continue;
            connected[edge.first] = connected[edge.second] = true;
            ++n_connected;
            tree_edges.push_back(edge);
            grew = true;
        }
        if (!grew) throw std::runtime_error("house generation: disconnected partition");
    }
    for (const auto& edge : tree_edges) {
        auto& cells = shared_walls[edge];
        house.at(rng.pick(cells)).kind = CellKind::door;
    }
    for (auto& [edge, cells] : shared_walls) {
        if (std::find(tree_edges.begin(), tree_edges.end(), edge) != tree_edges.end()) continue;
        if (rng.chance(0.25)) house.at(rng.pick(cells)).kind = CellKind::door;
    }

    // Receptacles: 2-6 per room on distinct floor cells. Make sure every room
    // keeps at least one receptacle type that can host an object there, so the
    // object pass below never starves.
    std::map<std::string, int> id_counters;
    auto next_id = [&id_counters](const std::string& type) {
        return type + "_" + std::to_string(id_counters[type]++);
    };
    std::vector<std::vector<GridPos>> room_cells(n_rooms);
    for (GridPos p : house.floor_cells()) room_cells[house.room_id_at(p)].push_back(p);

    auto hosts_anything = [&rules](const std::string& rec_type, RoomType room_type) {
        for (const auto& [obj, pairs] : rules.table)
            if (pairs.count({rec_type, room_type})) return true;
        return false;
    };

    for (int i = 0; i < n_rooms; ++i) {
        const RoomType room_type = house.rooms[i].room_type;
        const auto& allowed = room_receptacle_types(room_type);
        std::vector<GridPos> cells = room_cells[i];
        rng.shuffle(cells);
        const int count = std::min<int>(rng.uniform_int(2, 6), static_cast<int>(cells.size()));
        std::vector<std::string> chosen;
        for (int j = 0; j < count; ++j) chosen.push_back(rng.pick(allowed));
        const bool any_host = std::any_of(chosen.begin(), chosen.end(), [&](const auto& t) {
            return hosts_anything(t, room_type);
        });
        if (!any_host) {
            for (const auto& t : allowed)
                if (hosts_anything(t, room_type)) { chosen[0] = t; break; }
        }
        for (int j = 0; j < count; ++j) {
            ReceptacleInstance rec;
            rec.receptacle_type = chosen[j];
            rec.receptacle_id = next_id(rec.receptacle_type);
            rec.position = cells[j];
            rec.elevation = receptacle_elevation(rec.receptacle_type);
            house.receptacles.push_back(rec);
        }
    }

    // Objects: 1-8 per room, each placed reasonably on a receptacle in it.
    for (int i = 0; i < n_rooms; ++i) {
        const RoomType room_type = house.rooms[i].room_type;
        std::vector<std::pair<std::string, const ReceptacleInstance*>> feasible;
        for (const auto& [obj_type, pairs] : rules.table)
            for (const auto& rec : house.receptacles)
                if (house.room_id_at(rec.position) == i &&
                    pairs.count({rec.receptacle_type, room_type}))
                    feasible.push_back({obj_type, &rec});
        if (feasible.empty()) continue;
        const int count = rng.uniform_int(1, 8);
        for (int j = 0; j < count; ++j) {
            const auto& [obj_type, rec] = feasible[rng.uniform_index(feasible.size())];
            ObjectInstance obj;
            obj.object_type = obj_type;
            obj.object_id = next_id(obj_type);
            obj.mass_kg = rng.uniform_real(0.1, 20.0);
            obj.location = ObjectLocation::on(rec->receptacle_id);
            house.objects.push_back(obj);
        }
    }

    return house;
}

// ---------------------------------------------------------------------------
// Scenario / team generation
// ---------------------------------------------------------------------------

inline constexpr int kMisplacementRetryLimit = 32;

// Relocates k objects to rule-violating spots. Team fields are left empty;
// the benchmark builder fills them in.
inline Scenario generate_scenario(const House& house, int k, std::uint64_t seed,
                                  const PlacementRules& rules = default_placement_rules()) {
    if (k < 1 || k > 5) throw std::invalid_argument("k must be in [1,5]");
    if (static_cast<int>(house.objects.size()) < k)
        throw std::invalid_argument("house has fewer than k pickupable objects");

    Rng rng(mix_seed(seed, fnv1a64("scenario") ^ static_cast<std::uint64_t>(k)));
    Scenario sc;
    sc.house = house;
    sc.difficulty = classify_difficulty(static_cast<int>(house.rooms.size()));

    std::vector<std::size_t> order(house.objects.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    const auto floor_cells = house.floor_cells();
    for (int drawn = 0; drawn < k; ++drawn) {
        ObjectInstance& obj = sc.house.objects[order[drawn]];
        ObjectLocation target;
        bool found = false;
        for (int attempt = 0; attempt < kMisplacementRetryLimit && !found; ++attempt) {
            if (rng.chance(0.3)) {
                target = ObjectLocation::on_floor(floor_cells[rng.uniform_index(floor_cells.size())]);
                found = true;
            } else {
                const auto& rec = sc.house.receptacles[rng.uniform_index(sc.house.receptacles.size())];
                const RoomType room_type = house.room_type_of(house.room_id_at(rec.position));
                if (is_misplaced(obj.object_type, rec.receptacle_type, room_type, rules)) {
                    target = ObjectLocation::on(rec.receptacle_id);
                    found = true;
                }
            }
        }
        if (!found)
            throw std::runtime_error("no violating placement found for " + obj.object_id);
        Misplacement mp;
        mp.object_id = obj.object_id;
        mp.original_receptacle_id = obj.location.receptacle_id;
        mp.placed_at = target;
        obj.location = target;
        sc.misplacements.push_back(mp);
    }
    return sc;
}

namespace detail {

inline AgentProfile sample_profile(Rng& rng, const House& house, int agent_id) {
    AgentProfile p;
    p.agent_id = agent_id;
    p.alpha_nav = true;
    p.alpha_manip = rng.chance(0.5);
    p.height = rng.uniform_int(0, 1);
    p.payload_kg = rng.uniform_real(0.1, 20.0);
    p.battery_steps = rng.uniform_int(50, 500);
    const auto cells = house.floor_cells();
    p.start_position = cells[rng.uniform_index(cells.size())];
    p.join_time = 0;
    return p;
}

} // namespace detail

inline std::vector<AgentProfile> generate_team(const House& house, std::uint64_t seed,
                                               int n_teammates) {
    if (n_teammates < 3 || n_teammates > 5)
        throw std::invalid_argument("team size must be 3, 4, or 5");
    Rng rng(mix_seed(seed, fnv1a64("team") ^ static_cast<std::uint64_t>(n_teammates)));
    std::vector<AgentProfile> team;
    for (int i = 0; i < n_teammates; ++i) {
        AgentProfile p = detail::sample_profile(rng, house, i + 1);
        while (std::any_of(team.begin(), team.end(), [&](const AgentProfile& q) {
            return q.start_position == p.start_position;
        })) {
            const auto cells = house.floor_cells();
            p.start_position = cells[rng.uniform_index(cells.size())];
        }
        team.push_back(p);
    }
    if (std::none_of(team.begin(), team.end(),
                     [](const AgentProfile& p) { return p.alpha_manip; })) {
        team[rng.uniform_index(team.size())].alpha_manip = true;
    }
    return team;
}

// join_time is left 0 here; the episode runner assigns the configured t0.
inline AgentProfile generate_adhoc_agent(const House& house, std::uint64_t seed) {
    Rng rng(mix_seed(seed, fnv1a64("adhoc")));
    return detail::sample_profile(rng, house, 0);
}

// ---------------------------------------------------------------------------
// JSON serialization (scenario file format, version "v1")
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(GridPos p) { return {p.row, p.col}; }
inline GridPos gridpos_from_json(const nlohmann::json& j) {
    return {j.at(0).get<int>(), j.at(1).get<int>()};
}

inline nlohmann::json to_json(const ObjectLocation& l) {
    switch (l.kind) {
        case ObjectLocation::Kind::on_receptacle:
            return {{"on", l.receptacle_id}};
        case ObjectLocation::Kind::on_floor:
            return {{"floor", to_json(l.cell)}};
        case ObjectLocation::Kind::held:
            return {{"held_by", l.agent_id}};
    }
    return {};
}

inline ObjectLocation location_from_json(const nlohmann::json& j) {
    if (j.contains("on")) return ObjectLocation::on(j.at("on").get<std::string>());
    if (j.contains("floor")) return ObjectLocation::on_floor(gridpos_from_json(j.at("floor")));
    return ObjectLocation::held_by(j.at("held_by").get<int>());
}

inline nlohmann::json to_json(const AgentProfile& p) {
    return {{"agent_id", p.agent_id},
            {"alpha_nav", p.alpha_nav},
            {"alpha_manip", p.alpha_manip},
            {"height", p.height},
            {"payload_kg", p.payload_kg},
            {"battery_steps", p.battery_steps},
            {"start", to_json(p.start_position)},
            {"join_time", p.join_time}};
}

inline AgentProfile profile_from_json(const nlohmann::json& j) {
    AgentProfile p;
    p.agent_id = j.at("agent_id").get<int>();
    p.alpha_nav = j.at("alpha_nav").get<bool>();
    p.alpha_manip = j.at("alpha_manip").get<bool>();
    p.height = j.at("height").get<int>();
    p.payload_kg = j.at("payload_kg").get<double>();
    p.battery_steps = j.at("battery_steps").get<int>();
    p.start_position = gridpos_from_json(j.at("start"));
    p.join_time = j.at("join_time").get<int>();
    return p;
}

inline nlohmann::json to_json(const House& h) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < h.rows; ++r) {
        std::string line;
        for (int c = 0; c < h.cols; ++c) {
            const Cell& cell = h.at({r, c});
            if (cell.kind == CellKind::wall) line += '#';
            else if (cell.kind == CellKind::door) line += 'D';
            else line += static_cast<char>('0' + cell.room_id);
        }
        rows.push_back(line);
    }
    nlohmann::json rooms = nlohmann::json::array();
    for (const auto& room : h.rooms)
        rooms.push_back({{"room_id", room.room_id}, {"room_type", to_string(room.room_type)}});
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& rec : h.receptacles)
        recs.push_back({{"receptacle_id", rec.receptacle_id},
                        {"receptacle_type", rec.receptacle_type},
                        {"position", to_json(rec.position)},
                        {"elevation", to_string(rec.elevation)}});
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& obj : h.objects)
        objs.push_back({{"object_id", obj.object_id},
                        {"object_type", obj.object_type},
                        {"mass_kg", obj.mass_kg},
                        {"location", to_json(obj.location)}});
    return {{"seed", h.seed}, {"grid", rows},      {"rooms", rooms},
            {"receptacles", recs}, {"objects", objs}};
}

inline House house_from_json(const nlohmann::json& j) {
    House h;
    h.seed = j.at("seed").get<std::uint64_t>();
    const auto& rows = j.at("grid");
    h.rows = static_cast<int>(rows.size());
    h.cols = h.rows > 0 ? static_cast<int>(rows.at(0).get<std::string>().size()) : 0;
    h.grid.assign(static_cast<std::size_t>(h.rows) * h.cols, Cell{});
    for (int r = 0; r < h.rows; ++r) {
        const std::string line = rows.at(r).get<std::string>();
        for (int c = 0; c < h.cols; ++c) {
            if (line[c] == '#') h.at({r, c}) = Cell{CellKind::wall, -1};
            else if (line[c] == 'D') h.at({r, c}) = Cell{CellKind::door, -1};
            else h.at({r, c}) = Cell{CellKind::floor, line[c] - '0'};
        }
    }
    for (const auto& room : j.at("rooms"))
        h.rooms.push_back({room.at("room_id").get<int>(),
                           room_type_from_string(room.at("room_type").get<std::string>())});
    for (const auto& rec : j.at("receptacles")) {
        ReceptacleInstance r;
        r.receptacle_id = rec.at("receptacle_id").get<std::string>();
        r.receptacle_type = rec.at("receptacle_type").get<std::string>();
        r.position = gridpos_from_json(rec.at("position"));
        r.elevation = elevation_from_string(rec.at("elevation").get<std::string>());
        h.receptacles.push_back(r);
    }
    for (const auto& obj : j.at("objects")) {
        ObjectInstance o;
        o.object_id = obj.at("object_id").get<std::string>();
        o.object_type = obj.at("object_type").get<std::string>();
        o.mass_kg = obj.at("mass_kg").get<double>();
        o.location = location_from_json(obj.at("location"));
        h.objects.push_back(o);
    }
    return h;
}

inline nlohmann::json to_json(const Scenario& sc) {
    nlohmann::json mps = nlohmann::json::array();
    for (const auto& mp : sc.misplacements)
        mps.push_back({{"object_id", mp.object_id},
                       {"original", mp.original_receptacle_id},
                       {"placed_at", to_json(mp.placed_at)}});
    nlohmann::json team = nlohmann::json::array();
    for (const auto& p : sc.team) team.push_back(to_json(p));
    return {{"version", "v1"},
            {"scenario_id", sc.scenario_id},
            {"house", to_json(sc.house)},
            {"misplacements", mps},
            {"k", sc.k()},
            {"team", team},
            {"adhoc", to_json(sc.adhoc)},
            {"difficulty", to_string(sc.difficulty)}};
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
    if (j.at("version").get<std::string>() != "v1")
        throw std::invalid_argument("unsupported scenario version");
    Scenario sc;
    sc.scenario_id = j.at("scenario_id").get<std::string>();
    sc.house = house_from_json(j.at("house"));
    for (const auto& mp : j.at("misplacements")) {
        Misplacement m;
        m.object_id = mp.at("object_id").get<std::string>();
        m.original_receptacle_id = mp.at("original").get<std::string>();
        m.placed_at = location_from_json(mp.at("placed_at"));
        sc.misplacements.push_back(m);
    }
    for (const auto& p : j.at("team")) sc.team.push_back(profile_from_json(p));
    sc.adhoc = profile_from_json(j.at("adhoc"));
    const std::string d = j.at("difficulty").get<std::string>();
    sc.difficulty = d == "Easy" ? Difficulty::Easy
                  : d == "Medium" ? Difficulty::Medium : Difficulty::Difficult;
    if (static_cast<int>(sc.misplacements.size()) != j.at("k").get<int>())
        throw std::invalid_argument("scenario k does not match misplacement list");
    return sc;
}

} // namespace adhoc::world
