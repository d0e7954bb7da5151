#pragma once

// Synchronous stepped simulation. Each step takes one action per active
// agent, resolves them sequentially in ascending agent_id (so movement
// conflicts deterministically favor the lower id), then emits fresh
// observations. Planning costs no simulation time.

#include "adhoc/taxonomy.hpp"
#include "adhoc/world.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace adhoc::engine {

using world::AgentProfile;
using world::Elevation;
using world::GridPos;
using world::House;
using world::ObjectLocation;
using world::PlacementRules;
using world::RoomType;
using world::Scenario;

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

enum class ActionKind {
    move_ahead,
    move_back,
    move_right,
    move_left,
    rotate_right,
    rotate_left,
    look_up,
    look_down,
    stop,
    pickup,   // target: object_id
    put_down, // target: receptacle_id
    drop,
};

inline bool is_manipulation(ActionKind k) {
    return k == ActionKind::pickup || k == ActionKind::put_down || k == ActionKind::drop;
}

inline std::string to_string(ActionKind k) {
    switch (k) {
        case ActionKind::move_ahead: return "MoveAhead";
        case ActionKind::move_back: return "MoveBack";
        case ActionKind::move_right: return "MoveRight";
        case ActionKind::move_left: return "MoveLeft";
        case ActionKind::rotate_right: return "RotateRight";
        case ActionKind::rotate_left: return "RotateLeft";
        case ActionKind::look_up: return "LookUp";
        case ActionKind::look_down: return "LookDown";
        case ActionKind::stop: return "Stop";
        case ActionKind::pickup: return "PickUp";
        case ActionKind::put_down: return "PutDown";
        case ActionKind::drop: return "Drop";
    }
    return "?";
}

struct Action {
    ActionKind kind = ActionKind::stop;
    std::string target; // object_id for pickup, receptacle_id for put_down

    static Action move(ActionKind k) { return {k, {}}; }
    static Action pickup(std::string object_id) {
        return {ActionKind::pickup, std::move(object_id)};
    }
    static Action put_down(std::string receptacle_id) {
        return {ActionKind::put_down, std::move(receptacle_id)};
    }
    static Action drop() { return {ActionKind::drop, {}}; }
    static Action stop() { return {ActionKind::stop, {}}; }
};

inline std::string to_string(const Action& a) {
    if (a.kind == ActionKind::pickup || a.kind == ActionKind::put_down)
        return to_string(a.kind) + "(" + a.target + ")";
    return to_string(a.kind);
}

enum class FailureReason {
    no_manipulation_ability,
    payload_exceeded,
    not_adjacent,
    target_not_visible,
    blocked_by_obstacle,
    battery_exhausted,
    holding_conflict,
    invalid_target,
};

inline std::string to_string(FailureReason r) {
    switch (r) {
        case FailureReason::no_manipulation_ability: return "no_manipulation_ability";
        case FailureReason::payload_exceeded: return "payload_exceeded";
        case FailureReason::not_adjacent: return "not_adjacent";
        case FailureReason::target_not_visible: return "target_not_visible";
        case FailureReason::blocked_by_obstacle: return "blocked_by_obstacle";
        case FailureReason::battery_exhausted: return "battery_exhausted";
        case FailureReason::holding_conflict: return "holding_conflict";
        case FailureReason::invalid_target: return "invalid_target";
    }
    return "?";
}

struct ActionOutcome {
    bool success = true;
    std::optional<FailureReason> failure;

    static ActionOutcome ok() { return {true, std::nullopt}; }
    static ActionOutcome fail(FailureReason r) { return {false, r}; }
};

inline std::string to_string(const ActionOutcome& o) {
    return o.success ? "ok" : to_string(*o.failure);
}

// ---------------------------------------------------------------------------
// Agent state
// ---------------------------------------------------------------------------

enum class Facing { north, east, south, west };
enum class Pitch { down, level, up };

inline std::string to_string(Facing f) {
    switch (f) {
        case Facing::north: return "N";
        case Facing::east: return "E";
        case Facing::south: return "S";
        case Facing::west: return "W";
    }
    return "?";
}

inline GridPos facing_delta(Facing f) {
    switch (f) {
        case Facing::north: return {-1, 0};
        case Facing::east: return {0, 1};
        case Facing::south: return {1, 0};
        case Facing::west: return {0, -1};
    }
    return {0, 0};
}

inline Facing rotate(Facing f, int quarter_turns_cw) {
    return static_cast<Facing>((static_cast<int>(f) + quarter_turns_cw % 4 + 4) % 4);
}

struct AgentState {
    AgentProfile profile;
    GridPos position;
    Facing facing = Facing::north;
    Pitch pitch = Pitch::level;
    std::optional<std::string> holding;
    int battery_remaining = 0;
    bool joined = false;
    bool stopped = false;
    int actions_attempted = 0;

    int id() const { return profile.agent_id; }
    bool active() const { return joined && !stopped && battery_remaining > 0; }
};

// ---------------------------------------------------------------------------
// Observations
// ---------------------------------------------------------------------------

inline constexpr int kVisRadius = 8;
inline constexpr int kCloseVisRadius = 2; // pitch-assisted elevation range

// A visible cell comes annotated with what a semantic mapper would extract:
// which room it belongs to (-1 for doorways) and whether it is a doorway.
struct VisibleCell {
    GridPos cell;
    int room_id = -1;
    bool door = false;
    bool wall = false; // boundary walls adjacent to seen cells are seen too
};

struct VisibleObject {
    std::string object_id;
    std::string object_type;
    std::string receptacle_id; // empty when the object lies on the floor
    GridPos cell;
    double mass_kg = 0.0;
};

struct VisibleReceptacle {
    std::string receptacle_id;
    std::string receptacle_type;
    GridPos cell;
    Elevation elevation = Elevation::low;
};

struct Observation {
    int observer = -1;
    int t = 0;
    GridPos self_position;
    std::vector<VisibleCell> visible_cells; // sorted by position
    std::vector<VisibleObject> visible_objects;
    std::vector<VisibleReceptacle> visible_receptacles;
    int room_id_of_self = -1;

    bool cell_visible(GridPos p) const {
        for (const auto& v : visible_cells)
            if (v.cell == p) return true;
        return false;
    }
};

// Camera height class h and pitch determine which elevation classes an agent
// can perceive. Pitch widens the base set only at close range.
inline bool elevation_visible(int h, Pitch pitch, Elevation e, int dist2) {
    const bool base = h == 0 ? (e == Elevation::floor || e == Elevation::low)
                             : (e == Elevation::low || e == Elevation::high);
    if (base) return true;
    if (dist2 > kCloseVisRadius * kCloseVisRadius) return false;
    if (pitch == Pitch::down && e == Elevation::floor) return true;
    if (pitch == Pitch::up && e == Elevation::high) return true;
    return false;
}

enum class Termination { running, success, timeout, all_stopped };

inline std::string to_string(Termination t) {
    switch (t) {
        case Termination::running: return "running";
        case Termination::success: return "success";
        case Termination::timeout: return "timeout";
        case Termination::all_stopped: return "all_stopped";
    }
    return "?";
}

struct StepResult {
    std::map<int, ActionOutcome> outcomes;
    std::map<int, Observation> observations;
};

inline constexpr int kDefaultMaxSteps = 500;

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

class Engine {
public:
    Engine(const Scenario& scenario, int t_max = kDefaultMaxSteps,
           PlacementRules rules = world::default_placement_rules())
        : house_(scenario.house), t_max_(t_max), rules_(std::move(rules)) {
        for (const auto& mp : scenario.misplacements) tidy_targets_.push_back(mp.object_id);
        for (const auto& p : scenario.team) {
            AgentState a;
            a.profile = p;
            a.position = free_cell_near(p.start_position);
            a.battery_remaining = p.battery_steps;
            a.joined = true;
            insert_agent(a);
        }
    }

    const House& house() const { return house_; }
    int t() const { return t_; }
    int t_max() const { return t_max_; }
    const PlacementRules& rules() const { return rules_; }
    const std::vector<std::string>& tidy_targets() const { return tidy_targets_; }
    const std::vector<AgentState>& agents() const { return agents_; }

    const AgentState& agent(int agent_id) const {
        for (const auto& a : agents_)
            if (a.id() == agent_id) return a;
        throw std::invalid_argument("unknown agent " + std::to_string(agent_id));
    }

    std::vector<int> active_agent_ids() const {
        std::vector<int> out;
        for (const auto& a : agents_)
            if (a.active()) out.push_back(a.id());
        return out;
    }

    // The ad hoc agent joins mid-episode at its profile start (or the nearest
    // free cell), facing north, pitch level, full battery.
    void join_agent(const AgentProfile& profile) {
        for (const auto& a : agents_)
            if (a.id() == profile.agent_id)
                throw std::invalid_argument("agent already present");
        AgentState a;
        a.profile = profile;
        a.position = free_cell_near(profile.start_position);
        a.battery_remaining = profile.battery_steps;
        a.joined = true;
        insert_agent(a);
    }

    // One synchronous step. joint_actions must cover exactly the active
    // agents; failures surface as outcomes, never exceptions.
    StepResult step(const std::map<int, Action>& joint_actions) {
        for (const auto& [id, act] : joint_actions)
            if (!agent(id).active())
                throw std::invalid_argument("action submitted for inactive agent " +
                                            std::to_string(id));
        std::vector<int> acting;
        for (const auto& a : agents_)
            if (a.active()) {
                if (!joint_actions.count(a.id()))
                    throw std::invalid_argument("missing action for active agent " +
                                                std::to_string(a.id()));
                acting.push_back(a.id());
            }

        StepResult result;
        for (int id : acting) { // ascending: agents_ is sorted by id
            AgentState& a = mutable_agent(id);
            a.battery_remaining -= 1;
            a.actions_attempted += 1;
            result.outcomes[id] = apply(a, joint_actions.at(id));
        }
        t_ += 1;
        for (int id : acting) result.observations[id] = observe(id);
        return result;
    }

    Observation observe(int agent_id) const {
        const AgentState& a = agent(agent_id);
        Observation obs;
        obs.observer = agent_id;
        obs.t = t_;
        obs.self_position = a.position;
        const std::set<int> rooms = rooms_of_cell(a.position);
        obs.room_id_of_self = rooms.empty() ? -1 : *rooms.begin();

        std::set<GridPos> cells;
        for (int r = a.position.row - kVisRadius; r <= a.position.row + kVisRadius; ++r) {
            for (int c = a.position.col - kVisRadius; c <= a.position.col + kVisRadius; ++c) {
                const GridPos p{r, c};
                if (!house_.in_bounds(p)) continue;
                if (dist2(p, a.position) > kVisRadius * kVisRadius) continue;
                if (!cell_in_rooms(p, rooms)) continue;
                if (!line_clear(a.position, p)) continue;
                obs.visible_cells.push_back(
                    {p, house_.room_id_at(p), house_.at(p).kind == world::CellKind::door});
                cells.insert(p);
            }
        }
        // Walls enclosing what the agent sees are themselves seen.
        std::set<GridPos> walls;
        for (const GridPos& p : cells)
            for (const GridPos& d : world::four_neighbors()) {
                const GridPos q{p.row + d.row, p.col + d.col};
                if (house_.in_bounds(q) && house_.at(q).kind == world::CellKind::wall)
                    walls.insert(q);
            }
        for (const GridPos& q : walls)
            obs.visible_cells.push_back({q, house_.room_id_at(q), false, true});
        std::sort(obs.visible_cells.begin(), obs.visible_cells.end(),
                  [](const VisibleCell& a, const VisibleCell& b) { return a.cell < b.cell; });
        for (const auto& rec : house_.receptacles) {
            if (!cells.count(rec.position)) continue;
            obs.visible_receptacles.push_back(
                {rec.receptacle_id, rec.receptacle_type, rec.position, rec.elevation});
        }
        for (const auto& obj : house_.objects) {
            const auto cell = house_.object_cell(obj);
            if (!cell || !cells.count(*cell)) continue;
            const Elevation e = object_elevation(obj);
            if (!elevation_visible(a.profile.height, a.pitch, e, dist2(*cell, a.position)))
                continue;
            std::string rec_id;
            if (obj.location.kind == ObjectLocation::Kind::on_receptacle)
                rec_id = obj.location.receptacle_id;
            obs.visible_objects.push_back(
                {obj.object_id, obj.object_type, rec_id, *cell, obj.mass_kg});
        }
        return obs;
    }

    // success trumps timeout: a tidy house at t = T_max still counts.
    // join_pending suppresses all_stopped while an arrival is scheduled.
    Termination is_terminated(bool join_pending = false) const {
        bool all_tidy = true;
        for (const auto& id : tidy_targets_)
            if (!is_object_tidy(id)) { all_tidy = false; break; }
        if (all_tidy) return Termination::success;
        if (t_ >= t_max_) return Termination::timeout;
        if (active_agent_ids().empty() && !join_pending) return Termination::all_stopped;
        return Termination::running;
    }

    bool is_object_tidy(const std::string& object_id) const {
        const auto* obj = house_.find_object(object_id);
        if (!obj) throw std::invalid_argument("unknown object " + object_id);
        if (obj->location.kind != ObjectLocation::Kind::on_receptacle) return false;
        const auto* rec = house_.find_receptacle(obj->location.receptacle_id);
        const RoomType room = house_.room_type_of(house_.room_id_at(rec->position));
        return !world::is_misplaced(obj->object_type, rec->receptacle_type, room, rules_);
    }

    Elevation object_elevation(const world::ObjectInstance& obj) const {
        if (obj.location.kind == ObjectLocation::Kind::on_floor) return Elevation::floor;
        if (obj.location.kind == ObjectLocation::Kind::on_receptacle)
            return house_.find_receptacle(obj.location.receptacle_id)->elevation;
        throw std::invalid_argument("held object has no elevation");
    }

private:
    House house_;
    std::vector<AgentState> agents_; // sorted by agent_id
    int t_ = 0;
    int t_max_;
    PlacementRules rules_;
    std::vector<std::string> tidy_targets_;

    AgentState& mutable_agent(int agent_id) {
        for (auto& a : agents_)
            if (a.id() == agent_id) return a;
        throw std::invalid_argument("unknown agent " + std::to_string(agent_id));
    }

    void insert_agent(AgentState a) {
        auto it = agents_.begin();
        while (it != agents_.end() && it->id() < a.id()) ++it;
        agents_.insert(it, std::move(a));
    }

    bool cell_occupied(GridPos p) const {
        for (const auto& a : agents_)
            if (a.joined && a.position == p) return true;
        return false;
    }

    // Nearest free traversable cell, scanning Chebyshev rings outward in
    // row-major order within each ring.
    GridPos free_cell_near(GridPos start) const {
        for (int radius = 0; radius < house_.rows + house_.cols; ++radius) {
            for (int r = start.row - radius; r <= start.row + radius; ++r) {
                for (int c = start.col - radius; c <= start.col + radius; ++c) {
                    if (std::max(std::abs(r - start.row), std::abs(c - start.col)) != radius)
                        continue;
                    const GridPos p{r, c};
                    if (house_.traversable(p) && !cell_occupied(p)) return p;
                }
            }
        }
        throw std::runtime_error("no free cell available");
    }

    static int dist2(GridPos a, GridPos b) {
        const int dr = a.row - b.row, dc = a.col - b.col;
        return dr * dr + dc * dc;
    }

    // Rooms an agent standing at p belongs to: its own room on a floor cell,
    // both adjacent rooms on a door cell.
    std::set<int> rooms_of_cell(GridPos p) const {
        std::set<int> out;
        const int own = house_.room_id_at(p);
        if (own >= 0) {
            out.insert(own);
            return out;
        }
        if (house_.in_bounds(p) && house_.at(p).kind == world::CellKind::door)
            for (GridPos d : world::four_neighbors()) {
                const int r = house_.room_id_at({p.row + d.row, p.col + d.col});
                if (r >= 0) out.insert(r);
            }
        return out;
    }

    // Visibility region membership: floor cells of the observer's rooms, plus
    // door cells that open onto one of them.
    bool cell_in_rooms(GridPos p, const std::set<int>& rooms) const {
        const int room = house_.room_id_at(p);
        if (room >= 0) return rooms.count(room) > 0;
        if (house_.at(p).kind != world::CellKind::door) return false;
        for (GridPos d : world::four_neighbors()) {
            const int r = house_.room_id_at({p.row + d.row, p.col + d.col});
            if (r >= 0 && rooms.count(r)) return true;
        }
        return false;
    }

    // Bresenham walk between cell centers; interior wall cells occlude.
    // Endpoints are exempt so adjacent cells are always mutually visible.
    bool line_clear(GridPos from, GridPos to) const {
        int r = from.row, c = from.col;
        const int dc = std::abs(to.col - from.col);
        const int dr = -std::abs(to.row - from.row);
        const int sc = to.col > from.col ? 1 : -1;
        const int sr = to.row > from.row ? 1 : -1;
        int err = dc + dr;
        while (!(r == to.row && c == to.col)) {
            const int e2 = 2 * err;
            if (e2 >= dr) { err += dr; c += sc; }
            if (e2 <= dc) { err += dc; r += sr; }
            if (r == to.row && c == to.col) break;
            if (house_.at({r, c}).kind == world::CellKind::wall) return false;
        }
        return true;
    }

    ActionOutcome apply(AgentState& a, const Action& act) {
        switch (act.kind) {
            case ActionKind::move_ahead: return apply_move(a, facing_delta(a.facing));
            case ActionKind::move_back: return apply_move(a, negate(facing_delta(a.facing)));
            case ActionKind::move_right: return apply_move(a, facing_delta(rotate(a.facing, 1)));
            case ActionKind::move_left: return apply_move(a, facing_delta(rotate(a.facing, 3)));
            case ActionKind::rotate_right: a.facing = rotate(a.facing, 1); return ActionOutcome::ok();
            case ActionKind::rotate_left: a.facing = rotate(a.facing, 3); return ActionOutcome::ok();
            case ActionKind::look_up:
                if (a.pitch != Pitch::up) a.pitch = a.pitch == Pitch::down ? Pitch::level : Pitch::up;
                return ActionOutcome::ok();
            case ActionKind::look_down:
                if (a.pitch != Pitch::down) a.pitch = a.pitch == Pitch::up ? Pitch::level : Pitch::down;
                return ActionOutcome::ok();
            case ActionKind::stop: a.stopped = true; return ActionOutcome::ok();
            case ActionKind::pickup: return execute_pickup(a, act.target);
            case ActionKind::put_down: return execute_put(a, act.target);
            case ActionKind::drop: return execute_drop(a);
        }
        return ActionOutcome::fail(FailureReason::invalid_target);
    }

    static GridPos negate(GridPos p) { return {-p.row, -p.col}; }

    ActionOutcome apply_move(AgentState& a, GridPos delta) {
        const GridPos target{a.position.row + delta.row, a.position.col + delta.col};
        if (!house_.traversable(target) || cell_occupied(target))
            return ActionOutcome::fail(FailureReason::blocked_by_obstacle);
        a.position = target;
        return ActionOutcome::ok();
    }

    // Failure precedence: bad id, then capability, own hand, holder conflict,
    // payload, reach, sight.
    ActionOutcome execute_pickup(AgentState& a, const std::string& object_id) {
        auto* obj = house_.find_object(object_id);
        if (!obj) return ActionOutcome::fail(FailureReason::invalid_target);
        if (!a.profile.alpha_manip)
            return ActionOutcome::fail(FailureReason::no_manipulation_ability);
        if (a.holding) return ActionOutcome::fail(FailureReason::holding_conflict);
        if (obj->location.kind == ObjectLocation::Kind::held)
            return ActionOutcome::fail(FailureReason::invalid_target);
        if (obj->mass_kg > a.profile.payload_kg)
            return ActionOutcome::fail(FailureReason::payload_exceeded);
        const auto cell = house_.object_cell(*obj);
        if (world::chebyshev(*cell, a.position) > 1)
            return ActionOutcome::fail(FailureReason::not_adjacent);
        const Observation obs = observe(a.id());
        const bool seen = std::any_of(
            obs.visible_objects.begin(), obs.visible_objects.end(),
            [&](const VisibleObject& v) { return v.object_id == object_id; });
        if (!seen) return ActionOutcome::fail(FailureReason::target_not_visible);
        obj->location = ObjectLocation::held_by(a.id());
        a.holding = object_id;
        return ActionOutcome::ok();
    }

    ActionOutcome execute_put(AgentState& a, const std::string& receptacle_id) {
        const auto* rec = house_.find_receptacle(receptacle_id);
        if (!rec) return ActionOutcome::fail(FailureReason::invalid_target);
        if (!a.profile.alpha_manip)
            return ActionOutcome::fail(FailureReason::no_manipulation_ability);
        if (!a.holding) return ActionOutcome::fail(FailureReason::holding_conflict);
        if (world::chebyshev(rec->position, a.position) > 1)
            return ActionOutcome::fail(FailureReason::not_adjacent);
        house_.find_object(*a.holding)->location = ObjectLocation::on(receptacle_id);
        a.holding.reset();
        return ActionOutcome::ok();
    }

    ActionOutcome execute_drop(AgentState& a) {
        if (!a.profile.alpha_manip)
            return ActionOutcome::fail(FailureReason::no_manipulation_ability);
        if (!a.holding) return ActionOutcome::fail(FailureReason::holding_conflict);
        house_.find_object(*a.holding)->location = ObjectLocation::on_floor(a.position);
        a.holding.reset();
        return ActionOutcome::ok();
    }
};

} // namespace adhoc::engine
