#pragma once

// Per-agent incremental world model: a semantic occupancy map, a hierarchical
// scene graph (rooms -> receptacles -> objects), room-type inference from
// observed entity types, and frontier extraction for exploration. One
// instance per agent; nothing here reads simulator ground truth.

#include "adhoc/engine.hpp"
#include "adhoc/taxonomy.hpp"
#include "adhoc/world.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace adhoc::perception {

using world::Elevation;
using world::GridPos;
using world::PlacementRules;
using world::RoomType;

// ---------------------------------------------------------------------------
// Semantic map
// ---------------------------------------------------------------------------

struct CellState {
    enum class Kind : std::uint8_t { unknown, free, wall };
    Kind kind = Kind::unknown;
    int room_id = -1;
    bool door = false;
    bool explored = false; // directly observed (bump-learned walls are not)
};

struct SemanticMap {
    int owner = -1;
    int rows = 0;
    int cols = 0;
    GridPos own_position;
    std::vector<CellState> cells;
    std::map<GridPos, std::set<std::string>> annotations; // entity ids seen at cell

    SemanticMap() = default;
    SemanticMap(int owner_id, int n_rows, int n_cols)
        : owner(owner_id), rows(n_rows), cols(n_cols),
          cells(static_cast<std::size_t>(n_rows) * n_cols) {}

    bool in_bounds(GridPos p) const {
        return p.row >= 0 && p.row < rows && p.col >= 0 && p.col < cols;
    }
    const CellState& at(GridPos p) const { return cells[p.row * cols + p.col]; }
    CellState& at(GridPos p) { return cells[p.row * cols + p.col]; }

    bool believed_free(GridPos p) const {
        return in_bounds(p) && at(p).kind == CellState::Kind::free;
    }

    // Bump learning: a blocked move into uncharted space is taken as a wall.
    // Later direct observation overrides (the obstacle may have been an
    // agent standing there).
    void mark_wall(GridPos p) {
        if (in_bounds(p) && at(p).kind == CellState::Kind::unknown)
            at(p).kind = CellState::Kind::wall;
    }

    int explored_count() const {
        int n = 0;
        for (const auto& c : cells) n += c.explored ? 1 : 0;
        return n;
    }

    // Free cells of a room already explored vs unknown cells that touch them.
    // Doorways count as room boundary, so a door opening onto darkness keeps
    // the room incomplete. 1.0 once no frontier borders the room.
    // Fraction of the room considered known: explored room cells against
    // unknown cells pressing directly on them. Space beyond the room's
    // doorways belongs to other rooms and does not count against it.
    double room_completeness(int room_id) const {
        int explored_in_room = 0, unknown_neighbors = 0;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                const GridPos p{r, c};
                const CellState& s = at(p);
                if (s.kind != CellState::Kind::free || s.room_id != room_id) continue;
                if (s.explored) ++explored_in_room;
                for (GridPos d : world::four_neighbors()) {
                    const GridPos q{p.row + d.row, p.col + d.col};
                    if (in_bounds(q) && at(q).kind == CellState::Kind::unknown)
                        ++unknown_neighbors;
                }
            }
        if (explored_in_room == 0) return 0.0;
        if (unknown_neighbors == 0) return 1.0;
        return std::min(0.99, static_cast<double>(explored_in_room) /
                                  (explored_in_room + unknown_neighbors));
    }
};

// ---------------------------------------------------------------------------
// Scene graph
// ---------------------------------------------------------------------------

struct ObjectNode {
    std::string object_id;
    std::string object_type;
    std::string parent_receptacle; // empty = floor pseudo-receptacle
    GridPos cell;
    double mass_kg = 0.0;
    int room_id = -1;
    int last_seen = -1;
    bool misplaced_belief = false;
    // Interaction proved the record wrong (pickup bounced off a phantom or a
    // stale sighting). Holds misplaced_belief down until a fresh direct look.
    bool discredited = false;
};

struct ReceptacleNode {
    std::string receptacle_id;
    std::string receptacle_type;
    GridPos cell;
    Elevation elevation = Elevation::low;
    int room_id = -1;
    int last_seen = -1;
    std::set<std::string> candidate_for; // object types it could host here
};

struct RoomBelief {
    std::set<std::string> seen_types;         // movable objects sighted here
    std::set<std::string> seen_fixture_types; // receptacles sighted here
    std::optional<RoomType> inferred;
};

struct SceneGraph {
    std::map<std::string, ReceptacleNode> receptacles;
    std::map<std::string, ObjectNode> objects;
    std::map<int, RoomBelief> rooms;
};

// A noteworthy detection, worth broadcasting: either a misplaced object or a
// receptacle that could host some object type in its inferred room.
struct KeyDetection {
    enum class Kind { misplaced_object, candidate_receptacle };
    Kind kind = Kind::misplaced_object;
    std::string entity_id;
    std::string entity_type;
    GridPos cell;
    std::string receptacle_id; // hosting receptacle (objects only; empty = floor)
    int room_id = -1;
    bool misplaced = false;
    std::vector<std::string> candidate_for; // candidate_receptacle only
};

// ---------------------------------------------------------------------------
// Room-type inference
// ---------------------------------------------------------------------------

// Each detected type votes for its affinity rooms; most votes wins, ties fall
// back to the fixed room-type order. Empty or voteless input -> nullopt.
inline std::optional<RoomType> infer_room_type(const std::set<std::string>& detected_types,
                                               const PlacementRules& rules) {
    std::map<RoomType, int> score;
    for (const auto& t : detected_types)
        for (RoomType room : world::room_affinity(t, rules)) score[room] += 1;
    std::optional<RoomType> best;
    int best_score = 0;
    for (RoomType room : world::all_room_types()) {
        const auto it = score.find(room);
        if (it != score.end() && it->second > best_score) {
            best = room;
            best_score = it->second;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Update
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> candidates_for(const std::string& receptacle_type,
                                               RoomType room, const PlacementRules& rules) {
    std::vector<std::string> out;
    for (const auto& [obj_type, pairs] : rules.table)
        if (pairs.count({receptacle_type, room})) out.push_back(obj_type);
    return out;
}

inline bool evaluate_misplaced(const ObjectNode& node, const SceneGraph& graph,
                               const PlacementRules& rules) {
    if (node.parent_receptacle.empty()) return true; // floor rule
    const auto it = graph.receptacles.find(node.parent_receptacle);
    if (it == graph.receptacles.end()) return false;
    const auto room_it = graph.rooms.find(it->second.room_id);
    if (room_it == graph.rooms.end() || !room_it->second.inferred) return false;
    return world::is_misplaced(node.object_type, it->second.receptacle_type,
                               *room_it->second.inferred, rules);
}

} // namespace detail

// Folds one observation into the map and scene graph. Returns the new key
// detections: objects newly believed misplaced and receptacles newly believed
// able to host something (never retracted once flagged).
inline std::vector<KeyDetection> update(SemanticMap& map, SceneGraph& graph,
                                        const engine::Observation& obs,
                                        const PlacementRules& rules) {
    if (obs.observer != map.owner)
        throw std::invalid_argument("observation for a different agent");
    map.own_position = obs.self_position;

    std::set<int> rooms_touched;
    for (const auto& v : obs.visible_cells) {
        CellState& s = map.at(v.cell);
        if (v.wall) {
            s.kind = CellState::Kind::wall; // direct sighting beats bump guesses
            s.explored = true;
            continue;
        }
        s.kind = CellState::Kind::free;
        s.room_id = v.room_id;
        s.door = v.door;
        s.explored = true;
        if (v.room_id >= 0) rooms_touched.insert(v.room_id);
    }

    // Room-type beliefs accumulate over every entity type seen in the room.
    for (const auto& rec : obs.visible_receptacles) {
        const int room = map.at(rec.cell).room_id;
        if (room >= 0) graph.rooms[room].seen_fixture_types.insert(rec.receptacle_type);
    }
    for (const auto& o : obs.visible_objects) {
        const int room = map.at(o.cell).room_id;
        if (room >= 0) graph.rooms[room].seen_types.insert(o.object_type);
    }
    for (int room : rooms_touched) {
        RoomBelief& belief = graph.rooms[room];
        // Fixtures define a room; movable objects may sit in the wrong one
        // (that is the whole premise of tidying). Infer from furniture when
        // any of it casts a vote, fall back to loose objects only in views
        // where no voting fixture has been seen yet.
        belief.inferred = infer_room_type(belief.seen_fixture_types, rules);
        if (!belief.inferred) belief.inferred = infer_room_type(belief.seen_types, rules);
    }

    std::vector<KeyDetection> detections;

    for (const auto& rec : obs.visible_receptacles) {
        ReceptacleNode& node = graph.receptacles[rec.receptacle_id];
        node.receptacle_id = rec.receptacle_id;
        node.receptacle_type = rec.receptacle_type;
        node.cell = rec.cell;
        node.elevation = rec.elevation;
        node.room_id = map.at(rec.cell).room_id;
        node.last_seen = obs.t;
        map.annotations[rec.cell].insert(rec.receptacle_id);

        const auto room_it = graph.rooms.find(node.room_id);
        if (room_it != graph.rooms.end() && room_it->second.inferred) {
            bool gained = false;
            for (const auto& t :
                 detail::candidates_for(node.receptacle_type, *room_it->second.inferred, rules))
                gained = node.candidate_for.insert(t).second || gained;
            if (gained) {
                KeyDetection d;
                d.kind = KeyDetection::Kind::candidate_receptacle;
                d.entity_id = node.receptacle_id;
                d.entity_type = node.receptacle_type;
                d.cell = node.cell;
                d.room_id = node.room_id;
                d.candidate_for.assign(node.candidate_for.begin(), node.candidate_for.end());
                detections.push_back(d);
            }
        }
    }

    std::set<std::string> seen_now;
    for (const auto& o : obs.visible_objects) {
        seen_now.insert(o.object_id);
        ObjectNode& node = graph.objects[o.object_id];
        const bool was_misplaced = !node.object_id.empty() && node.misplaced_belief;
        node.object_id = o.object_id;
        node.object_type = o.object_type;
        node.parent_receptacle = o.receptacle_id;
        node.cell = o.cell;
        node.mass_kg = o.mass_kg;
        node.room_id = map.at(o.cell).room_id;
        node.last_seen = obs.t;
        node.discredited = false; // seeing is believing again
        map.annotations[o.cell].insert(o.object_id);
        node.misplaced_belief = detail::evaluate_misplaced(node, graph, rules);
        if (node.misplaced_belief && !was_misplaced) {
            KeyDetection d;
            d.kind = KeyDetection::Kind::misplaced_object;
            d.entity_id = node.object_id;
            d.entity_type = node.object_type;
            d.cell = node.cell;
            d.receptacle_id = node.parent_receptacle;
            d.room_id = node.room_id;
            d.misplaced = true;
            detections.push_back(d);
        }
    }

    // A room-type update can flip beliefs about objects seen earlier.
    for (auto& [id, node] : graph.objects) {
        if (seen_now.count(id)) continue;
        if (node.discredited) continue;
        if (!rooms_touched.count(node.room_id)) continue;
        const bool was = node.misplaced_belief;
        node.misplaced_belief = detail::evaluate_misplaced(node, graph, rules);
        if (node.misplaced_belief && !was) {
            KeyDetection d;
            d.kind = KeyDetection::Kind::misplaced_object;
            d.entity_id = node.object_id;
            d.entity_type = node.object_type;
            d.cell = node.cell;
            d.receptacle_id = node.parent_receptacle;
            d.room_id = node.room_id;
            d.misplaced = true;
            detections.push_back(d);
        }
    }

    return detections;
}

// Records that an object is gone from where the map believed it was (picked
// up by this agent or reported moved); keeps the type knowledge.
inline void forget_object_location(SemanticMap& map, SceneGraph& graph,
                                   const std::string& object_id) {
    auto it = graph.objects.find(object_id);
    if (it == graph.objects.end()) return;
    auto ann = map.annotations.find(it->second.cell);
    if (ann != map.annotations.end()) ann->second.erase(object_id);
    graph.objects.erase(it);
}

// ---------------------------------------------------------------------------
// Frontiers
// ---------------------------------------------------------------------------

// Free cells bordering unknown space, nearest (by known-free path distance
// from the owner's position) first, ties by (row, col). Unreachable
// frontiers are omitted.
inline std::vector<GridPos> frontiers(const SemanticMap& map) {
    std::vector<int> dist(static_cast<std::size_t>(map.rows) * map.cols, -1);
    if (map.believed_free(map.own_position)) {
        std::deque<GridPos> queue{map.own_position};
        dist[map.own_position.row * map.cols + map.own_position.col] = 0;
        while (!queue.empty()) {
            const GridPos p = queue.front();
            queue.pop_front();
            for (GridPos d : world::four_neighbors()) {
                const GridPos q{p.row + d.row, p.col + d.col};
                if (!map.believed_free(q)) continue;
                int& dq = dist[q.row * map.cols + q.col];
                if (dq < 0) {
                    dq = dist[p.row * map.cols + p.col] + 1;
                    queue.push_back(q);
                }
            }
        }
    }

    std::vector<std::pair<int, GridPos>> found;
    for (int r = 0; r < map.rows; ++r)
        for (int c = 0; c < map.cols; ++c) {
            const GridPos p{r, c};
            if (!map.believed_free(p)) continue;
            const int d = dist[r * map.cols + c];
            if (d < 0) continue;
            bool borders_unknown = false;
            for (GridPos dd : world::four_neighbors()) {
                const GridPos q{p.row + dd.row, p.col + dd.col};
                if (map.in_bounds(q) && map.at(q).kind == CellState::Kind::unknown)
                    borders_unknown = true;
            }
            if (borders_unknown) found.push_back({d, p});
        }
    std::sort(found.begin(), found.end());
    std::vector<GridPos> out;
    out.reserve(found.size());
    for (const auto& [d, p] : found) out.push_back(p);
    return out;
}

// Does this frontier press on the given room? Either it lies inside the room,
// or it is a doorway (no room of its own) adjacent to a known cell of the
// room. Doorway frontiers count for both rooms they join: whoever is tasked
// with either side should be willing to step through.
inline bool frontier_touches_room(const SemanticMap& map, GridPos f, int room) {
    if (!map.in_bounds(f)) return false;
    if (map.at(f).room_id == room) return true;
    if (map.at(f).room_id >= 0) return false;
    for (GridPos d : world::four_neighbors()) {
        const GridPos q{f.row + d.row, f.col + d.col};
        if (map.in_bounds(q) && map.at(q).kind != CellState::Kind::unknown &&
            map.at(q).room_id == room)
            return true;
    }
    return false;
}

// True while some reachable unexplored boundary still presses on the room.
// A room can score fully complete on its own cells yet have an uncharted
// doorway; this is the signal that walking it is still worthwhile.
inline bool room_has_frontier(const SemanticMap& map, int room) {
    for (const GridPos& f : frontiers(map))
        if (frontier_touches_room(map, f, room)) return true;
    return false;
}

// ---------------------------------------------------------------------------
// Debug rendering (--dump-maps)
// ---------------------------------------------------------------------------

inline std::string ascii_map(const SemanticMap& map) {
    std::string out;
    for (int r = 0; r < map.rows; ++r) {
        for (int c = 0; c < map.cols; ++c) {
            const GridPos p{r, c};
            const CellState& s = map.at(p);
            char ch = '?';
            if (p == map.own_position) ch = 'A';
            else if (s.kind == CellState::Kind::wall) ch = '#';
            else if (s.kind == CellState::Kind::free)
                ch = s.door ? 'D' : (s.room_id >= 0 ? static_cast<char>('0' + s.room_id) : '.');
            out += ch;
        }
        out += '\n';
    }
    return out;
}

} // namespace adhoc::perception
