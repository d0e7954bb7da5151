#pragma once

// Agent controllers: scripted teammates, negotiating teammates, and the ad
// hoc policies. Every controller turns its own beliefs plus its inbox into
// exactly one action per step; the shared executor walks sub-tasks through
// sub-skills, navigation, and failure-driven re-planning.

#include <algorithm>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "comms.hpp"
#include "engine.hpp"
#include "perception.hpp"
#include "planner.hpp"
#include "rng.hpp"
#include "world.hpp"

namespace adhoc::agents {

using world::GridPos;

// ---------------------------------------------------------------------------
// Route planning
// ---------------------------------------------------------------------------

// Unknown terrain is walkable but discouraged, so routes prefer charted
// ground and get revised when the shortcut turns out to be a wall.
inline constexpr int kUnknownStepCost = 3;

inline bool believed_traversable(const perception::SemanticMap& map, GridPos p) {
    return map.in_bounds(p) && map.at(p).kind != perception::CellState::Kind::wall;
}

// Shortest paths from one origin over believed terrain. Deterministic: the
// frontier is an ordered set, ties resolve by (cost, row, col).
struct RouteField {
    GridPos origin;
    std::map<GridPos, int> dist;
    std::map<GridPos, GridPos> parent;

    int cost(GridPos p) const {
        const auto it = dist.find(p);
        return it == dist.end() ? planner::kUnreachable : it->second;
    }

    // Cells to walk, origin excluded, goal included. Empty when unreachable
    // or already there.
    std::vector<GridPos> path_to(GridPos goal) const {
        std::vector<GridPos> out;
        if (!dist.count(goal)) return out;
        GridPos p = goal;
        while (!(p == origin)) {
            out.push_back(p);
            p = parent.at(p);
        }
        std::reverse(out.begin(), out.end());
        return out;
    }
};

inline RouteField compute_routes(const perception::SemanticMap& map, GridPos from) {
    RouteField field;
    field.origin = from;
    if (!believed_traversable(map, from)) return field;
    std::set<std::pair<int, GridPos>> frontier{{0, from}};
    field.dist[from] = 0;
    while (!frontier.empty()) {
        const auto [d, p] = *frontier.begin();
        frontier.erase(frontier.begin());
        if (d > field.dist[p]) continue;
        for (GridPos delta : world::four_neighbors()) {
            const GridPos q{p.row + delta.row, p.col + delta.col};
            if (!believed_traversable(map, q)) continue;
            const bool charted = map.at(q).kind == perception::CellState::Kind::free;
            const int nd = d + (charted ? 1 : kUnknownStepCost);
            const auto it = field.dist.find(q);
            if (it != field.dist.end() && it->second <= nd) continue;
            if (it != field.dist.end()) frontier.erase({it->second, q});
            field.dist[q] = nd;
            field.parent[q] = p;
            frontier.insert({nd, q});
        }
    }
    return field;
}

// Single move advancing from one cell to a 4-adjacent one. Vision is
// omnidirectional, so strafing beats turn-then-move.
inline std::optional<engine::ActionKind> step_toward(engine::Facing facing, GridPos from,
                                                     GridPos to) {
    const GridPos delta{to.row - from.row, to.col - from.col};
    if (delta == engine::facing_delta(facing)) return engine::ActionKind::move_ahead;
    if (delta == engine::facing_delta(engine::rotate(facing, 1)))
        return engine::ActionKind::move_right;
    if (delta == engine::facing_delta(engine::rotate(facing, 2)))
        return engine::ActionKind::move_back;
    if (delta == engine::facing_delta(engine::rotate(facing, 3)))
        return engine::ActionKind::move_left;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Action assessment
// ---------------------------------------------------------------------------

enum class ReplanLevel { none, subskill, subtask };

inline std::string to_string(ReplanLevel r) {
    switch (r) {
        case ReplanLevel::none: return "none";
        case ReplanLevel::subskill: return "subskill";
        case ReplanLevel::subtask: return "subtask";
    }
    return "?";
}

struct Assessment {
    engine::ActionOutcome outcome;
    ReplanLevel replan_level = ReplanLevel::none;
    std::vector<perception::KeyDetection> new_key_detections;
    bool terminal = false; // battery gone, wrap up
    std::string reason;
};

struct ExecutorState {
    std::optional<planner::SubTask> subtask;
    std::optional<planner::SubSkill> subskill;
    // Path cells are 4-adjacent and none believed solid when planned; walking
    // may still prove them wrong.
    std::vector<GridPos> path;
    std::optional<GridPos> intended_cell;   // where the last move aimed
    std::optional<GridPos> point_goal;      // resolved GoToPoint target
    std::optional<GridPos> frontier_target;
    int phase = 0;                          // actions spent in this sub-skill
    bool pitch_calibrated = false;
    std::optional<std::string> pending_replan;
    // a sub-skill failing twice in a row the same way stops being retried in
    // place and escalates
    std::string last_failure_key;
    int repeat_failures = 0;
};

// Escalation ladder: capability and target mismatches invalidate the
// sub-task, transient obstacles only the sub-skill, and a drained battery
// ends the agent. New key detections force re-planning too.
inline Assessment assess(ExecutorState& exec, const engine::ActionOutcome& outcome,
                         std::vector<perception::KeyDetection> detections) {
    Assessment a;
    a.outcome = outcome;
    a.new_key_detections = std::move(detections);

    for (const auto& d : a.new_key_detections) {
        if (d.kind == perception::KeyDetection::Kind::misplaced_object && d.misplaced) {
            a.replan_level = ReplanLevel::subtask;
            a.reason = "spotted misplaced " + d.entity_id;
        } else if (a.replan_level == ReplanLevel::none) {
            a.replan_level = ReplanLevel::subskill;
            a.reason = "spotted candidate receptacle " + d.entity_id;
        }
    }

    if (outcome.success) {
        exec.last_failure_key.clear();
        exec.repeat_failures = 0;
        return a;
    }

    switch (*outcome.failure) {
        case engine::FailureReason::battery_exhausted:
            a.terminal = true;
            a.replan_level = ReplanLevel::subtask;
            a.reason = "battery exhausted";
            return a;
        case engine::FailureReason::no_manipulation_ability:
        case engine::FailureReason::payload_exceeded:
        case engine::FailureReason::invalid_target:
        case engine::FailureReason::holding_conflict:
            a.replan_level = ReplanLevel::subtask;
            a.reason = engine::to_string(*outcome.failure);
            return a;
        case engine::FailureReason::not_adjacent:
        case engine::FailureReason::blocked_by_obstacle:
        case engine::FailureReason::target_not_visible:
            break;
    }

    // a fresh misplaced-object sighting outranks a transient failure
    if (a.replan_level == ReplanLevel::none) a.replan_level = ReplanLevel::subskill;
    a.reason = engine::to_string(*outcome.failure);
    const std::string key =
        (exec.subskill ? planner::to_string(*exec.subskill) : std::string("-")) + "|" + a.reason;
    if (key == exec.last_failure_key) {
        exec.repeat_failures += 1;
        if (exec.repeat_failures >= 2) {
            a.replan_level = ReplanLevel::subtask;
            a.reason += " (repeated)";
        }
    } else {
        exec.last_failure_key = key;
        exec.repeat_failures = 1;
    }
    return a;
}

// ---------------------------------------------------------------------------
// Controller interface
// ---------------------------------------------------------------------------

struct StepInput {
    engine::AgentState self;
    engine::Observation observation;
    int t = 0;
    std::vector<comms::Message> inbox;
    std::optional<engine::ActionOutcome> last_outcome; // result of the previous action
};

class Controller {
public:
    virtual ~Controller() = default;
    // exactly one action per active step
    virtual engine::Action decide(const StepInput& in) = 0;
    virtual void on_join(int /*t*/) {}

protected:
    virtual void on_message(const comms::Message& /*m*/) {}
};

// Primary reasoner with a deterministic stand-in: any reasoner failure makes
// the call fall through to the fallback. A null primary means rules only.
class FallbackReasoner : public planner::Reasoner {
public:
    FallbackReasoner(planner::Reasoner* primary, planner::Reasoner* fallback)
        : primary_(primary), fallback_(fallback) {
        if (!fallback_) throw std::invalid_argument("fallback reasoner required");
    }

    std::string name() const override {
        return primary_ ? primary_->name() + "|" + fallback_->name() : fallback_->name();
    }
    std::vector<planner::Proposal> propose(const planner::PlannerContext& ctx, int n) override {
        return guarded([&](planner::Reasoner& r) { return r.propose(ctx, n); });
    }
    std::vector<planner::Proposal> rank(const planner::PlannerContext& ctx,
                                        const std::vector<planner::Proposal>& c) override {
        return guarded([&](planner::Reasoner& r) { return r.rank(ctx, c); });
    }
    planner::Verdict judge(const planner::PlannerContext& ctx, const planner::SubTask& st,
                           const std::vector<comms::Fact>& facts) override {
        return guarded([&](planner::Reasoner& r) { return r.judge(ctx, st, facts); });
    }
    planner::SubSkillPlan plan_subskill(const planner::PlannerContext& ctx,
                                        const planner::SubTask& st) override {
        return guarded([&](planner::Reasoner& r) { return r.plan_subskill(ctx, st); });
    }

private:
    template <typename Fn>
    auto guarded(Fn&& fn) -> decltype(fn(std::declval<planner::Reasoner&>())) {
        if (primary_) {
            try {
                return fn(*primary_);
            } catch (const planner::ReasonerFailure&) {
                // fall through to the rules
            }
        }
        return fn(*fallback_);
    }

    planner::Reasoner* primary_;
    planner::Reasoner* fallback_;
};

// ---------------------------------------------------------------------------
// Acting controller: beliefs, executor, status broadcasts
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMemoryCap = 240;

class ActingController : public Controller {
public:
    ActingController(const world::AgentProfile& profile, int rows, int cols,
                     comms::Channel* channel, std::string dialect,
                     const world::PlacementRules* rules)
        : profile_(profile), map_(profile.agent_id, rows, cols), channel_(channel),
          dialect_(std::move(dialect)), rules_(rules) {
        if (!rules_) throw std::invalid_argument("placement rules required");
    }

    const world::AgentProfile& profile() const { return profile_; }
    const std::string& dialect() const { return dialect_; }
    const perception::SemanticMap& map() const { return map_; }
    const perception::SceneGraph& graph() const { return graph_; }
    const ExecutorState& executor() const { return exec_; }
    const std::vector<std::string>& memory() const { return memory_; }
    bool alive() const { return joined_ && !stopped_; }
    bool needs_plan() const { return alive() && !exec_.subtask; }

    // Every sub-task/sub-skill start, finish, and switch, in order. Each
    // entry has a matching status broadcast.
    const std::vector<std::string>& transitions() const { return transitions_; }

    void on_join(int /*t*/) override { joined_ = true; }

    // Synchronous reply to a teammate's announced intention: the facts this
    // agent holds about the intention's target. nullopt while absent.
    std::optional<std::vector<comms::Fact>> answer_feedback(int /*requester*/,
                                                            const std::string& literal) {
        if (!alive()) return std::nullopt;
        return relevant_facts(literal);
    }

    planner::PlannerContext make_context() const {
        planner::PlannerContext c;
        c.self = profile_;
        c.position = self_.position;
        c.holding = self_.holding;
        c.battery_remaining = self_.battery_remaining;
        c.t = t_;
        c.map = &map_;
        c.graph = &graph_;
        c.rules = rules_;
        c.inbox = inbox_;
        c.memory = memory_;
        c.teammates = teammates_;
        c.current_subtask = exec_.subtask;
        c.team_room_completeness = team_room_completeness_;
        c.objects_done = objects_done_;
        // objects this agent proved it cannot handle are done as far as its
        // own planning goes; they stay misplaced for everyone else
        c.objects_done.insert(cant_handle_.begin(), cant_handle_.end());
        c.objects_claimed = objects_claimed_;
        return c;
    }

    engine::Action decide(const StepInput& in) override {
        t_ = in.t;
        self_ = in.self;
        joined_ = true;
        inbox_ = in.inbox;

        auto detections = perception::update(map_, graph_, in.observation, *rules_);
        room_of_self_ = in.observation.room_id_of_self;

        const engine::ActionOutcome outcome =
            in.last_outcome.value_or(engine::ActionOutcome::ok());
        process_last_action(outcome);

        for (const auto& m : in.inbox) on_message(m);

        Assessment a = assess(exec_, outcome, std::move(detections));
        for (const auto& d : a.new_key_detections) {
            send(d);
            on_detection(d);
        }
        if (a.terminal) return emit_stop();

        apply_replan(a);
        check_belief_completion();
        return act();
    }

protected:
    // Policy hook: next sub-task, or nothing to do right now (wait in place).
    virtual std::optional<planner::SubTask> choose_subtask() = 0;
    virtual void on_subtask_done(const planner::SubTask& /*st*/) {}
    virtual void on_subtask_abandoned(const planner::SubTask& /*st*/,
                                      const std::string& /*reason*/) {}
    virtual void on_detection(const perception::KeyDetection& /*d*/) {}
    virtual planner::Reasoner& subskill_reasoner() { return rule_; }

    void on_message(const comms::Message& m) override {
        remember(comms::describe(m));
        if (const auto* cap = std::get_if<comms::CapabilityAnnounce>(&m.payload)) {
            auto& mate = teammates_[m.sender];
            mate.profile = cap->profile;
            mate.active = true;
        } else if (const auto* refl = std::get_if<comms::CapabilityReflect>(&m.payload)) {
            auto& mate = teammates_[m.sender];
            mate.profile = refl->profile;
            mate.last_subtask = refl->current_subtask;
            mate.active = true;
        } else if (const auto* det = std::get_if<perception::KeyDetection>(&m.payload)) {
            ingest_detection(*det, m.t_sent);
        } else if (const auto* st = std::get_if<comms::SubTaskStatus>(&m.payload)) {
            digest_subtask_status(m.sender, *st);
        } else if (const auto* sk = std::get_if<comms::SubSkillStatus>(&m.payload)) {
            teammates_[m.sender].last_subskill = sk->subskill;
        } else if (const auto* fb = std::get_if<comms::IntentionFeedback>(&m.payload)) {
            for (const auto& f : fb->facts) digest_fact(f);
        }
        // plain intentions carry no state beyond the memory line
    }

    void send(comms::Payload payload) {
        if (!channel_) return;
        comms::Message m;
        m.sender = profile_.agent_id;
        m.t_sent = t_;
        m.payload = std::move(payload);
        channel_->broadcast(m, dialect_);
    }

    void remember(std::string line) {
        memory_.push_back(std::move(line));
        if (memory_.size() > kMemoryCap)
            memory_.erase(memory_.begin(), memory_.begin() + (memory_.size() - kMemoryCap));
    }

    void digest_fact(const comms::Fact& f) {
        switch (f.kind) {
            case comms::Fact::Kind::explored_room: {
                double& c = team_room_completeness_[f.room_id];
                c = std::max(c, f.completeness);
                break;
            }
            case comms::Fact::Kind::object_seen:
                if (!f.misplaced) objects_done_.insert(f.object_id);
                break;
            case comms::Fact::Kind::executing_subtask: {
                const auto st = planner::parse_subtask(f.subtask);
                if (st && st->kind == planner::SubTask::Kind::replace)
                    objects_claimed_[st->object_id] = f.agent_id;
                break;
            }
        }
    }

    double effective_completeness(int room) const {
        double c = map_.room_completeness(room);
        const auto it = team_room_completeness_.find(room);
        if (it != team_room_completeness_.end()) c = std::max(c, it->second);
        return c;
    }

    std::vector<comms::Fact> relevant_facts(const std::string& literal) const {
        std::vector<comms::Fact> facts;
        const auto st = planner::parse_subtask(literal);
        if (!st) return facts;
        if (st->kind == planner::SubTask::Kind::replace) {
            const auto it = graph_.objects.find(st->object_id);
            if (it != graph_.objects.end()) {
                const auto& node = it->second;
                const bool still_misplaced =
                    node.misplaced_belief && !objects_done_.count(node.object_id);
                facts.push_back(comms::Fact::object_seen(node.object_id, node.cell,
                                                         node.parent_receptacle, node.room_id,
                                                         still_misplaced));
            } else if (objects_done_.count(st->object_id)) {
                facts.push_back(
                    comms::Fact::object_seen(st->object_id, GridPos{-1, -1}, "", -1, false));
            }
            if (exec_.subtask && exec_.subtask->kind == planner::SubTask::Kind::replace &&
                exec_.subtask->object_id == st->object_id) {
                facts.push_back(comms::Fact::executing_subtask(
                    profile_.agent_id, planner::to_string(*exec_.subtask)));
            } else {
                const auto claim = objects_claimed_.find(st->object_id);
                if (claim != objects_claimed_.end()) {
                    const auto mate = teammates_.find(claim->second);
                    if (mate != teammates_.end() && !mate->second.last_subtask.empty())
                        facts.push_back(comms::Fact::executing_subtask(
                            claim->second, mate->second.last_subtask));
                }
            }
        } else if (st->kind == planner::SubTask::Kind::explore) {
            const double c = effective_completeness(st->room_id);
            if (c > 0.0)
                facts.push_back(comms::Fact::explored_room(st->room_id, c));
        }
        return facts;
    }

    // ---- executor ---------------------------------------------------------

    struct Done {
        std::string note;
    };
    struct Failed {
        std::string reason;
    };
    using ExecStep = std::variant<engine::Action, Done, Failed>;

    void process_last_action(const engine::ActionOutcome& outcome) {
        if (!last_action_) {
            exec_.intended_cell.reset();
            return;
        }
        const engine::Action act = *last_action_;
        last_action_.reset();

        if (!outcome.success) {
            remember("[t=" + std::to_string(t_) + "] my " + engine::to_string(act) +
                     " failed: " + engine::to_string(outcome));
            if (outcome.failure == engine::FailureReason::blocked_by_obstacle &&
                exec_.intended_cell) {
                const GridPos cell = *exec_.intended_cell;
                if (map_.in_bounds(cell) && map_.at(cell).door) {
                    // a door never walls over, so the blocker is an agent; a
                    // second bump in a row risks a head-on deadlock at the
                    // passage, so step aside and let the other one through
                    if (++blocked_counts_[cell] >= 2) {
                        yield_cell_ = pick_aside(cell);
                        blocked_counts_.erase(cell);
                    }
                } else {
                    map_.mark_wall(cell); // uncharted blocker: learned as wall
                    // a charted cell blocking twice is someone parked there;
                    // route around it until it is seen empty again
                    if (++blocked_counts_[cell] >= 2 && map_.in_bounds(cell)) {
                        map_.at(cell).kind = perception::CellState::Kind::wall;
                        forced_walls_.insert(cell);
                    }
                }
                exec_.path.clear();
            }
            exec_.intended_cell.reset();
            return;
        }
        exec_.intended_cell.reset();
        blocked_counts_.clear();

        switch (act.kind) {
            case engine::ActionKind::move_ahead:
            case engine::ActionKind::move_back:
            case engine::ActionKind::move_left:
            case engine::ActionKind::move_right:
                if (!exec_.path.empty() && exec_.path.front() == self_.position)
                    exec_.path.erase(exec_.path.begin());
                break;
            case engine::ActionKind::pickup:
                if (exec_.subskill &&
                    exec_.subskill->kind == planner::SubSkill::Kind::pickup_object)
                    complete_subskill();
                break;
            case engine::ActionKind::put_down:
                if (exec_.subskill && exec_.subskill->kind == planner::SubSkill::Kind::put_object) {
                    objects_done_.insert(exec_.subskill->object_id);
                    complete_subskill();
                    if (exec_.subtask && exec_.subtask->kind == planner::SubTask::Kind::replace)
                        complete_subtask();
                }
                break;
            default:
                break;
        }
    }

    void apply_replan(const Assessment& a) {
        if (a.replan_level == ReplanLevel::none) return;
        if (a.replan_level == ReplanLevel::subskill) {
            drop_subskill(a.reason);
            return;
        }
        drop_subskill(a.reason);
        if (exec_.subtask) {
            const planner::SubTask st = *exec_.subtask;
            repair_beliefs_after_failure(st, a);
            note_subtask(st, comms::ProgressStatus::switched);
            exec_.subtask.reset();
            on_subtask_abandoned(st, a.reason);
        }
        remember("[t=" + std::to_string(t_) + "] re-planning: " + a.reason);
    }

    // Keep a bad target from being re-proposed forever. A pickup that bounced
    // with invalid_target, or a target that repeatedly could not be seen, was a
    // stale or wrong report: stop believing it is misplaced. A target beyond
    // this agent's strength or gear stays misplaced but is struck from its own
    // candidate list so someone else can take it.
    void repair_beliefs_after_failure(const planner::SubTask& st, const Assessment& a) {
        if (st.kind != planner::SubTask::Kind::replace || !a.outcome.failure) return;
        switch (*a.outcome.failure) {
            case engine::FailureReason::target_not_visible:
                // only after the failure repeated; one miss can be bad luck
                if (a.reason.find("repeated") == std::string::npos) break;
                [[fallthrough]];
            case engine::FailureReason::invalid_target: {
                const auto it = graph_.objects.find(st.object_id);
                if (it != graph_.objects.end()) {
                    it->second.misplaced_belief = false;
                    it->second.discredited = true;
                }
                remember("[t=" + std::to_string(t_) + "] dropping belief in " +
                         st.object_id + ": " + engine::to_string(*a.outcome.failure));
                break;
            }
            case engine::FailureReason::payload_exceeded:
            case engine::FailureReason::no_manipulation_ability:
                cant_handle_.insert(st.object_id);
                break;
            default:
                break;
        }
    }

    void check_belief_completion() {
        if (!exec_.subtask) return;
        const planner::SubTask st = *exec_.subtask;
        if (st.kind == planner::SubTask::Kind::explore) {
            // Complete only once the room scores full AND nothing unknown
            // presses on it. A wide-open doorway keeps the job alive even
            // when every cell inside the room proper has been seen.
            if (effective_completeness(st.room_id) >= 0.999 &&
                !perception::room_has_frontier(map_, st.room_id))
                complete_subtask();
        } else if (st.kind == planner::SubTask::Kind::replace) {
            if (self_.holding == st.object_id) return; // mid-carry beliefs lag
            const auto it = graph_.objects.find(st.object_id);
            const bool done_elsewhere =
                objects_done_.count(st.object_id) ||
                (it != graph_.objects.end() && !it->second.misplaced_belief);
            if (done_elsewhere) {
                drop_subskill("target already handled");
                note_subtask(st, comms::ProgressStatus::switched);
                exec_.subtask.reset();
                on_subtask_abandoned(st, "already re-placed");
            }
        }
    }

    engine::Action act() {
        if (yield_cell_) {
            const GridPos q = *yield_cell_;
            yield_cell_.reset();
            if (const auto kind = step_toward(self_.facing, self_.position, q)) {
                exec_.intended_cell = q;
                exec_.path.clear();
                last_action_ = engine::Action::move(*kind);
                return *last_action_;
            }
        }
        for (int guard = 0; guard < 4; ++guard) {
            if (stopped_) return engine::Action::stop();
            if (!exec_.subtask) {
                const auto st = choose_subtask();
                if (!st) return idle_action(); // work pending elsewhere
                begin_subtask(*st);
            }
            if (exec_.subtask->kind == planner::SubTask::Kind::stop) return emit_stop();
            if (!exec_.pitch_calibrated) return emit_pitch();
            if (!exec_.subskill) {
                const auto sk = plan_next_subskill(*exec_.subtask);
                if (!sk) {
                    abandon_subtask("no executable sub-skill");
                    continue;
                }
                begin_subskill(*sk);
            }
            ExecStep step = run_subskill();
            if (auto* action = std::get_if<engine::Action>(&step)) {
                exec_.phase += 1;
                last_action_ = *action;
                return *action;
            }
            if (std::holds_alternative<Done>(step)) {
                const planner::SubSkill finished = *exec_.subskill;
                complete_subskill();
                if (finished.kind == planner::SubSkill::Kind::explore && exec_.subtask &&
                    exec_.subtask->kind == planner::SubTask::Kind::explore)
                    complete_subtask(); // nothing left to uncover
                continue;
            }
            abandon_subtask(std::get<Failed>(step).reason);
        }
        // four planning rounds without an action: the sub-task cannot move
        // with current beliefs (say, its target placement does not exist in
        // this house); shelve it and re-decide next step with fresh eyes
        if (exec_.subtask) abandon_subtask("no progress with current beliefs");
        return idle_action();
    }

    std::optional<planner::SubSkill> plan_next_subskill(const planner::SubTask& st) {
        try {
            return planner::plan_subskill(make_context(), subskill_reasoner(), st).skill;
        } catch (const planner::ReasonerFailure& f) {
            remember("[t=" + std::to_string(t_) + "] reasoner failed (" + f.what() +
                     "), using rules");
            try {
                return planner::plan_subskill(make_context(), rule_, st).skill;
            } catch (const std::invalid_argument&) {
                return std::nullopt;
            }
        } catch (const std::invalid_argument& e) {
            remember("[t=" + std::to_string(t_) + "] " + e.what());
            return std::nullopt;
        }
    }

    ExecStep run_subskill() {
        const planner::SubSkill sk = *exec_.subskill;
        switch (sk.kind) {
            case planner::SubSkill::Kind::stop:
                return Failed{"no useful sub-skill"};
            case planner::SubSkill::Kind::explore:
                return explore_step();
            case planner::SubSkill::Kind::go_to_object: {
                const auto target = entity_cell(sk.object_id);
                if (!target) return Failed{"target unknown: " + sk.object_id};
                if (world::chebyshev(self_.position, *target) <= 1) return Done{"within reach"};
                return navigate_adjacent(*target);
            }
            case planner::SubSkill::Kind::go_to_point: {
                if (!exec_.point_goal) {
                    GridPos g{self_.position.row + sk.dx, self_.position.col + sk.dy};
                    g.row = std::clamp(g.row, 0, map_.rows - 1);
                    g.col = std::clamp(g.col, 0, map_.cols - 1);
                    exec_.point_goal = g;
                }
                if (self_.position == *exec_.point_goal) return Done{"arrived"};
                return navigate_to({*exec_.point_goal});
            }
            case planner::SubSkill::Kind::go_to_room: {
                if (room_of_self_ == sk.room_id) return Done{"inside"};
                std::vector<GridPos> goals;
                for (int r = 0; r < map_.rows; ++r)
                    for (int c = 0; c < map_.cols; ++c) {
                        const GridPos p{r, c};
                        if (map_.at(p).room_id == sk.room_id && believed_traversable(map_, p))
                            goals.push_back(p);
                    }
                if (goals.empty()) return Failed{"room never seen"};
                return navigate_to(goals);
            }
            case planner::SubSkill::Kind::pickup_object: {
                if (!profile_.alpha_manip) return Failed{"no manipulation gear"};
                if (self_.holding == sk.object_id) return Done{"holding it"};
                if (self_.holding) return Failed{"hands already full"};
                const auto target = entity_cell(sk.object_id);
                if (!target) return Failed{"target unknown: " + sk.object_id};
                if (world::chebyshev(self_.position, *target) > 1)
                    return navigate_adjacent(*target);
                return engine::Action::pickup(sk.object_id);
            }
            case planner::SubSkill::Kind::put_object: {
                if (!profile_.alpha_manip) return Failed{"no manipulation gear"};
                if (!(self_.holding == sk.object_id)) return Failed{"not holding " + sk.object_id};
                const auto it = graph_.receptacles.find(sk.receptacle_id);
                if (it == graph_.receptacles.end())
                    return Failed{"receptacle unknown: " + sk.receptacle_id};
                if (world::chebyshev(self_.position, it->second.cell) > 1)
                    return navigate_adjacent(it->second.cell);
                return engine::Action::put_down(sk.receptacle_id);
            }
        }
        return Failed{"unrecognized sub-skill"};
    }

    std::optional<GridPos> entity_cell(const std::string& id) const {
        const auto obj = graph_.objects.find(id);
        if (obj != graph_.objects.end()) return obj->second.cell;
        const auto rec = graph_.receptacles.find(id);
        if (rec != graph_.receptacles.end()) return rec->second.cell;
        return std::nullopt;
    }

    ExecStep navigate_adjacent(GridPos target) {
        std::vector<GridPos> goals;
        for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
                const GridPos q{target.row + dr, target.col + dc};
                if (believed_traversable(map_, q)) goals.push_back(q);
            }
        if (goals.empty()) return Failed{"nowhere to stand"};
        return navigate_to(goals);
    }

    // A charted-free cell that later bump-promoted to a wall was a parked
    // agent, not masonry (the houses are static). When those beliefs wall off
    // every route, assume the parker has moved on and try again.
    bool heal_forced_walls() {
        bool any = false;
        for (const GridPos& p : forced_walls_) {
            auto& cs = map_.at(p);
            if (cs.kind == perception::CellState::Kind::wall) {
                cs.kind = perception::CellState::Kind::free;
                any = true;
            }
        }
        forced_walls_.clear();
        blocked_counts_.clear();
        return any;
    }

    // Step target for letting an oncoming agent through: any believed-free
    // neighbor other than the contested cell, off the doorway if possible.
    std::optional<GridPos> pick_aside(GridPos contested) {
        std::vector<GridPos> clear, margin;
        for (GridPos d : world::four_neighbors()) {
            const GridPos q{self_.position.row + d.row, self_.position.col + d.col};
            if (q == contested || !believed_traversable(map_, q)) continue;
            (map_.at(q).door ? margin : clear).push_back(q);
        }
        auto& pool = clear.empty() ? margin : clear;
        if (pool.empty()) return std::nullopt;
        return pool[static_cast<std::size_t>(t_) % pool.size()];
    }

    ExecStep navigate_to(const std::vector<GridPos>& goals) {
        if (goals.empty()) return Failed{"nowhere to go"};
        if (std::find(goals.begin(), goals.end(), self_.position) != goals.end())
            return Done{"arrived"};
        for (int attempt = 0; attempt < 2; ++attempt) {
            if (!path_valid(goals)) {
                const RouteField field = compute_routes(map_, self_.position);
                const GridPos* best = nullptr;
                int best_cost = planner::kUnreachable;
                for (const GridPos& g : goals) {
                    const int c = field.cost(g);
                    if (c < best_cost || (c == best_cost && best && g < *best)) {
                        best = &g;
                        best_cost = c;
                    }
                }
                if (!best || best_cost == planner::kUnreachable) {
                    if (attempt == 0 && heal_forced_walls()) continue;
                    return Failed{"no route"};
                }
                exec_.path = field.path_to(*best);
            }
            if (exec_.path.empty()) return Done{"arrived"};
            const GridPos next = exec_.path.front();
            const auto kind = step_toward(self_.facing, self_.position, next);
            if (!kind) { // drifted off the plan, recompute once
                exec_.path.clear();
                continue;
            }
            exec_.intended_cell = next;
            return engine::Action::move(*kind);
        }
        return Failed{"lost the path"};
    }

    bool path_valid(const std::vector<GridPos>& goals) const {
        if (exec_.path.empty()) return false;
        if (std::find(goals.begin(), goals.end(), exec_.path.back()) == goals.end()) return false;
        if (world::manhattan(self_.position, exec_.path.front()) != 1) return false;
        for (const GridPos& p : exec_.path)
            if (!believed_traversable(map_, p)) return false;
        return true;
    }

    // Is this frontier on the given room's turf? Direct membership, or a
    // doorway touching one of the room's known cells.
    bool frontier_in_room(GridPos f, int room) const {
        return perception::frontier_touches_room(map_, f, room);
    }

    ExecStep explore_step() {
        const auto all = perception::frontiers(map_);
        if (all.empty()) return Done{"no frontiers left"};

        const int want_room = exec_.subtask && exec_.subtask->kind == planner::SubTask::Kind::explore
                                  ? exec_.subtask->room_id
                                  : -1;
        std::set<int> claimed;
        for (const auto& [room, agent] : rooms_claimed_)
            if (agent != profile_.agent_id) claimed.insert(room);

        std::vector<GridPos> pool;
        if (want_room >= 0) {
            bool room_known = false;
            for (int r = 0; r < map_.rows && !room_known; ++r)
                for (int c = 0; c < map_.cols && !room_known; ++c)
                    room_known = map_.at({r, c}).room_id == want_room;
            if (room_known) {
                for (const GridPos& f : all)
                    if (frontier_in_room(f, want_room)) pool.push_back(f);
                if (pool.empty()) return Done{"assigned room fully explored"};
            }
            // room never seen: any frontier may lead there
        }
        if (pool.empty())
            for (const GridPos& f : all)
                if (!claimed.count(map_.at(f).room_id)) pool.push_back(f);
        if (pool.empty()) pool = all;

        if (!exec_.frontier_target ||
            std::find(pool.begin(), pool.end(), *exec_.frontier_target) == pool.end()) {
            exec_.frontier_target = pool.front(); // nearest first already
            exec_.path.clear();
        }
        const GridPos target = *exec_.frontier_target;
        if (self_.position == target) {
            // the unseen cell hides behind a room boundary; step into it
            std::vector<GridPos> goals;
            for (GridPos d : world::four_neighbors()) {
                const GridPos q{target.row + d.row, target.col + d.col};
                if (map_.in_bounds(q) &&
                    map_.at(q).kind == perception::CellState::Kind::unknown)
                    goals.push_back(q);
            }
            if (goals.empty()) {
                exec_.frontier_target.reset();
                return Done{"frontier resolved"};
            }
            return navigate_to(goals);
        }
        return navigate_to({target});
    }

    // ---- transitions and bookkeeping --------------------------------------

    void begin_subtask(const planner::SubTask& st) {
        exec_.subtask = st;
        note_subtask(st, comms::ProgressStatus::started);
    }

    void begin_subskill(const planner::SubSkill& sk) {
        exec_.subskill = sk;
        exec_.path.clear();
        exec_.point_goal.reset();
        exec_.frontier_target.reset();
        exec_.phase = 0;
        note_subskill(sk, comms::ProgressStatus::started);
    }

    void complete_subskill() {
        if (!exec_.subskill) return;
        note_subskill(*exec_.subskill, comms::ProgressStatus::finished);
        exec_.subskill.reset();
        exec_.path.clear();
        exec_.point_goal.reset();
        exec_.phase = 0;
    }

    void complete_subtask() {
        if (!exec_.subtask) return;
        const planner::SubTask st = *exec_.subtask;
        drop_subskill("parent sub-task finished");
        note_subtask(st, comms::ProgressStatus::finished);
        exec_.subtask.reset();
        on_subtask_done(st);
    }

    void abandon_subtask(const std::string& reason) {
        drop_subskill(reason);
        if (exec_.subtask) {
            const planner::SubTask st = *exec_.subtask;
            note_subtask(st, comms::ProgressStatus::switched);
            exec_.subtask.reset();
            on_subtask_abandoned(st, reason);
        }
        remember("[t=" + std::to_string(t_) + "] gave up: " + reason);
    }

    void drop_subskill(const std::string& /*reason*/) {
        if (!exec_.subskill) return;
        note_subskill(*exec_.subskill, comms::ProgressStatus::switched);
        exec_.subskill.reset();
        exec_.path.clear();
        exec_.point_goal.reset();
        exec_.phase = 0;
    }

    void note_subtask(const planner::SubTask& st, comms::ProgressStatus status) {
        const std::string literal = planner::to_string(st);
        transitions_.push_back("subtask|" + literal + "|" + comms::to_string(status));
        send(comms::SubTaskStatus{literal, status});
    }

    void note_subskill(const planner::SubSkill& sk, comms::ProgressStatus status) {
        const std::string literal = planner::to_string(sk);
        transitions_.push_back("subskill|" + literal + "|" + comms::to_string(status));
        send(comms::SubSkillStatus{literal, status});
    }

    engine::Action emit_stop() {
        if (!stopped_) {
            if (!exec_.subtask || exec_.subtask->kind != planner::SubTask::Kind::stop) {
                drop_subskill("stopping");
                if (exec_.subtask) note_subtask(*exec_.subtask, comms::ProgressStatus::switched);
                begin_subtask(planner::SubTask::stop());
            }
            stopped_ = true;
        }
        return engine::Action::stop();
    }

    // One-off camera sweep: point the pitch at the elevation class the base
    // camera misses, and leave it there.
    engine::Action emit_pitch() {
        exec_.pitch_calibrated = true;
        const auto kind = profile_.height == 1 ? engine::ActionKind::look_down
                                               : engine::ActionKind::look_up;
        last_action_ = engine::Action::move(kind);
        return *last_action_;
    }

    bool beside_door(GridPos p) const {
        if (map_.in_bounds(p) && map_.at(p).door) return true;
        for (GridPos d : world::four_neighbors()) {
            const GridPos q{p.row + d.row, p.col + d.col};
            if (map_.in_bounds(q) && map_.at(q).door) return true;
        }
        return false;
    }

    // Waiting on a doorway, or in its mouth, starves everyone else of the
    // only passage between two rooms, so an idle agent drifts aside before
    // twiddling in place. The t-parity pick breaks head-on swaps.
    engine::Action idle_action() {
        if (map_.in_bounds(self_.position) && beside_door(self_.position)) {
            std::vector<GridPos> clear, margin;
            for (GridPos d : world::four_neighbors()) {
                const GridPos q{self_.position.row + d.row, self_.position.col + d.col};
                if (!believed_traversable(map_, q) || map_.at(q).door) continue;
                (beside_door(q) ? margin : clear).push_back(q);
            }
            auto& pool = clear.empty() ? margin : clear;
            if (!pool.empty()) {
                const GridPos q = pool[static_cast<std::size_t>(t_) % pool.size()];
                if (const auto kind = step_toward(self_.facing, self_.position, q)) {
                    exec_.intended_cell = q;
                    last_action_ = engine::Action::move(*kind);
                    return *last_action_;
                }
            }
        }
        return engine::Action::move(engine::ActionKind::rotate_right);
    }

    void ingest_detection(const perception::KeyDetection& d, int heard_t) {
        if (d.kind == perception::KeyDetection::Kind::misplaced_object) {
            if (graph_.objects.count(d.entity_id)) return; // own sighting wins
            perception::ObjectNode node;
            node.object_id = d.entity_id;
            node.object_type = d.entity_type;
            node.parent_receptacle = d.receptacle_id;
            node.cell = d.cell;
            node.room_id = d.room_id;
            node.last_seen = heard_t;
            node.misplaced_belief = d.misplaced;
            graph_.objects[d.entity_id] = std::move(node);
        } else {
            if (graph_.receptacles.count(d.entity_id)) return;
            perception::ReceptacleNode node;
            node.receptacle_id = d.entity_id;
            node.receptacle_type = d.entity_type;
            node.cell = d.cell;
            node.room_id = d.room_id;
            node.last_seen = heard_t;
            node.candidate_for.insert(d.candidate_for.begin(), d.candidate_for.end());
            graph_.receptacles[d.entity_id] = std::move(node);
        }
    }

    void digest_subtask_status(int sender, const comms::SubTaskStatus& s) {
        auto& mate = teammates_[sender];
        mate.last_subtask = s.subtask;
        mate.last_subtask_status = comms::to_string(s.status);
        const auto st = planner::parse_subtask(s.subtask);
        if (!st) return;
        if (st->kind == planner::SubTask::Kind::replace) {
            switch (s.status) {
                case comms::ProgressStatus::started:
                    objects_claimed_[st->object_id] = sender;
                    break;
                case comms::ProgressStatus::finished:
                    objects_done_.insert(st->object_id);
                    objects_claimed_.erase(st->object_id);
                    break;
                case comms::ProgressStatus::switched: {
                    const auto it = objects_claimed_.find(st->object_id);
                    if (it != objects_claimed_.end() && it->second == sender)
                        objects_claimed_.erase(it);
                    break;
                }
            }
        } else if (st->kind == planner::SubTask::Kind::explore) {
            switch (s.status) {
                case comms::ProgressStatus::started:
                    rooms_claimed_[st->room_id] = sender;
                    break;
                case comms::ProgressStatus::finished: {
                    double& c = team_room_completeness_[st->room_id];
                    c = std::max(c, 1.0);
                    if (rooms_claimed_[st->room_id] == sender)
                        rooms_claimed_.erase(st->room_id);
                    break;
                }
                case comms::ProgressStatus::switched: {
                    const auto it = rooms_claimed_.find(st->room_id);
                    if (it != rooms_claimed_.end() && it->second == sender)
                        rooms_claimed_.erase(it);
                    break;
                }
            }
        } else if (s.status == comms::ProgressStatus::started) {
            mate.active = false; // teammate is retiring
        }
    }

    world::AgentProfile profile_;
    perception::SemanticMap map_;
    perception::SceneGraph graph_;
    comms::Channel* channel_ = nullptr;
    std::string dialect_;
    const world::PlacementRules* rules_ = nullptr;
    planner::RuleReasoner rule_;

    engine::AgentState self_;
    int t_ = 0;
    int room_of_self_ = -1;
    bool joined_ = false;
    bool stopped_ = false;
    std::vector<comms::Message> inbox_;
    std::optional<engine::Action> last_action_;
    std::map<GridPos, int> blocked_counts_;
    std::set<GridPos> forced_walls_;        // bump-promoted walls, healable
    std::optional<GridPos> yield_cell_;     // step aside here next act

    ExecutorState exec_;
    std::vector<std::string> memory_;
    std::vector<std::string> transitions_;
    std::map<int, planner::TeammateInfo> teammates_;
    std::map<int, double> team_room_completeness_;
    std::set<std::string> objects_done_;
    std::set<std::string> cant_handle_; // too heavy or no gear, leave to others
    std::map<std::string, int> objects_claimed_;
    std::map<int, int> rooms_claimed_; // room -> agent announced exploring it
};

// One step's worth of decoded traffic for an agent. Undecodable messages are
// dropped, so foreign dialects degrade gracefully instead of crashing.
inline std::vector<comms::Message> collect_inbox(comms::Channel& channel, int agent_id, int t) {
    std::vector<comms::Message> out;
    for (const auto& raw : channel.collect(agent_id, t)) {
        const auto adapted = comms::adapt(raw);
        if (adapted.message) out.push_back(*adapted.message);
    }
    return out;
}

// Responder wiring: the channel calls straight into the controller when a
// teammate asks for intention feedback.
inline void register_feedback(comms::Channel& channel, ActingController& controller) {
    channel.register_feedback_responder(
        controller.profile().agent_id,
        [ctrl = &controller](int requester, const std::string& subtask) {
            return ctrl->answer_feedback(requester, subtask);
        });
}

inline comms::TeammateSnapshot snapshot(const ActingController& c) {
    comms::TeammateSnapshot s;
    s.profile = c.profile();
    s.active = c.alive();
    s.current_subtask = c.executor().subtask ? planner::to_string(*c.executor().subtask) : "";
    s.dialect = c.dialect();
    return s;
}

// ---------------------------------------------------------------------------
// Scripted team
// ---------------------------------------------------------------------------

// Coordination state of one pre-organized team. Members read and write it
// directly (they trained together); outsiders only ever see the broadcasts.
struct TeamBlackboard {
    std::map<int, world::AgentProfile> roster;
    std::map<int, GridPos> positions;
    std::map<std::string, int> assignments; // object -> member on it
    std::deque<std::string> queue;          // detection order, awaiting a claim
    std::map<std::string, perception::KeyDetection> sightings;
    std::set<std::string> done;
    std::set<std::string> outside_claims; // someone beyond the roster took it
    std::set<std::string> given_up;       // "<object>@<agent>": payload defeats

    bool queued(const std::string& id) const {
        return std::find(queue.begin(), queue.end(), id) != queue.end();
    }

    void enqueue(const perception::KeyDetection& d) {
        if (d.kind != perception::KeyDetection::Kind::misplaced_object || !d.misplaced) return;
        sightings[d.entity_id] = d;
        if (done.count(d.entity_id) || assignments.count(d.entity_id) ||
            outside_claims.count(d.entity_id) || queued(d.entity_id))
            return;
        queue.push_back(d.entity_id);
    }

    void release(const std::string& id, bool completed) {
        assignments.erase(id);
        if (completed) {
            done.insert(id);
            const auto it = std::find(queue.begin(), queue.end(), id);
            if (it != queue.end()) queue.erase(it);
        } else if (!queued(id) && !done.count(id) && !outside_claims.count(id)) {
            queue.push_back(id);
        }
    }

    bool busy(int agent) const {
        for (const auto& [obj, who] : assignments)
            if (who == agent) return true;
        return false;
    }

    bool work_remaining() const { return !queue.empty() || !assignments.empty(); }
};

// Frontier explorer that hands each detected misplaced object to the closest
// free manipulator (path distance on the member's own map, Manhattan when no
// path is known, ties to the lower id). Assignments stay with their owner
// until finished or proven impossible.
class HeuristicTeamController : public ActingController {
public:
    HeuristicTeamController(const world::AgentProfile& profile, int rows, int cols,
                            comms::Channel* channel, const world::PlacementRules* rules,
                            std::shared_ptr<TeamBlackboard> board,
                            std::string dialect = comms::kHeuristicDialect)
        : ActingController(profile, rows, cols, channel, std::move(dialect), rules),
          board_(std::move(board)) {
        if (!board_) throw std::invalid_argument("team blackboard required");
        board_->roster[profile.agent_id] = profile;
        board_->positions[profile.agent_id] = profile.start_position;
        joined_ = true;
    }

    const TeamBlackboard& blackboard() const { return *board_; }

    engine::Action decide(const StepInput& in) override {
        board_->positions[profile_.agent_id] = in.self.position;
        return ActingController::decide(in);
    }

protected:
    void on_detection(const perception::KeyDetection& d) override { board_->enqueue(d); }

    void on_message(const comms::Message& m) override {
        ActingController::on_message(m);
        if (board_->roster.count(m.sender)) return;
        // outsiders shape the shared plan too
        if (const auto* det = std::get_if<perception::KeyDetection>(&m.payload)) {
            board_->enqueue(*det);
        } else if (const auto* s = std::get_if<comms::SubTaskStatus>(&m.payload)) {
            const auto st = planner::parse_subtask(s->subtask);
            if (!st || st->kind != planner::SubTask::Kind::replace) return;
            const std::string& id = st->object_id;
            switch (s->status) {
                case comms::ProgressStatus::started: {
                    board_->outside_claims.insert(id);
                    const auto it = std::find(board_->queue.begin(), board_->queue.end(), id);
                    if (it != board_->queue.end()) board_->queue.erase(it);
                    break;
                }
                case comms::ProgressStatus::finished:
                    board_->outside_claims.erase(id);
                    board_->release(id, true);
                    break;
                case comms::ProgressStatus::switched:
                    board_->outside_claims.erase(id);
                    if (!board_->done.count(id) && board_->sightings.count(id) &&
                        !board_->queued(id))
                        board_->queue.push_back(id);
                    break;
            }
        }
    }

    std::optional<planner::SubTask> choose_subtask() override {
        if (self_.holding) {
            // an object in hand is its holder's job, whatever the board said
            board_->assignments[*self_.holding] = profile_.agent_id;
            const auto placement = planner::RuleReasoner::pick_placement(
                make_context(), planner::type_from_id(*self_.holding));
            if (placement)
                return planner::SubTask::replace(*self_.holding, placement->first,
                                                 placement->second);
        }
        if (profile_.alpha_manip && !board_->busy(profile_.agent_id)) {
            if (auto claim = try_claim()) return claim;
        }
        if (auto explore = pick_explore()) return explore;
        if (profile_.alpha_manip && board_->work_remaining())
            return std::nullopt; // wait for an object to free up
        return planner::SubTask::stop();
    }

    void on_subtask_done(const planner::SubTask& st) override {
        if (st.kind == planner::SubTask::Kind::replace) board_->release(st.object_id, true);
    }

    void on_subtask_abandoned(const planner::SubTask& st, const std::string& reason) override {
        if (st.kind != planner::SubTask::Kind::replace) return;
        if (self_.holding == st.object_id) return; // still in hand: stays mine
        const auto it = board_->assignments.find(st.object_id);
        if (it == board_->assignments.end() || it->second != profile_.agent_id) return;
        if (reason.find("payload") != std::string::npos)
            board_->given_up.insert(st.object_id + "@" + std::to_string(profile_.agent_id));
        board_->release(st.object_id, objects_done_.count(st.object_id) != 0);
    }

private:
    std::optional<planner::SubTask> try_claim() {
        const auto ctx = make_context();
        for (auto it = board_->queue.begin(); it != board_->queue.end(); ++it) {
            const std::string id = *it;
            if (board_->done.count(id) || board_->assignments.count(id) ||
                board_->outside_claims.count(id))
                continue;
            if (board_->given_up.count(id + "@" + std::to_string(profile_.agent_id))) continue;
            const auto node = graph_.objects.find(id);
            // own interaction proved this record wrong; let others try
            if (node != graph_.objects.end() && node->second.discredited) continue;
            const double mass = node != graph_.objects.end() ? node->second.mass_kg : 0.0;
            if (mass > profile_.payload_kg) continue;
            const auto cell = object_cell(id);
            if (!cell) continue;
            if (closest_free_manipulator(id, *cell, mass) != profile_.agent_id)
                continue; // its rightful owner claims it on their turn
            const std::string type = node != graph_.objects.end()
                                         ? node->second.object_type
                                         : board_->sightings.at(id).entity_type;
            const auto placement = planner::RuleReasoner::pick_placement(ctx, type);
            if (!placement) continue;
            board_->assignments[id] = profile_.agent_id;
            board_->queue.erase(it);
            return planner::SubTask::replace(id, placement->first, placement->second);
        }
        return std::nullopt;
    }

    std::optional<GridPos> object_cell(const std::string& id) const {
        const auto node = graph_.objects.find(id);
        if (node != graph_.objects.end()) return node->second.cell;
        const auto seen = board_->sightings.find(id);
        if (seen != board_->sightings.end()) return seen->second.cell;
        return std::nullopt;
    }

    int closest_free_manipulator(const std::string& object_id, GridPos object, double mass) const {
        int best = -1;
        long best_d = std::numeric_limits<long>::max();
        for (const auto& [mid, prof] : board_->roster) {
            if (!prof.alpha_manip) continue;
            if (board_->busy(mid)) continue;
            if (mass > 0.0 && mass > prof.payload_kg) continue;
            if (board_->given_up.count(object_id + "@" + std::to_string(mid))) continue;
            const auto pos = board_->positions.find(mid);
            const GridPos from = pos != board_->positions.end() ? pos->second
                                                                : prof.start_position;
            const long d = approach_cost(from, object);
            if (d < best_d) {
                best = mid;
                best_d = d;
            }
        }
        return best;
    }

    // Believed path length to reach the object's side; unreachable candidates
    // rank behind every reachable one, ordered among themselves by Manhattan.
    long approach_cost(GridPos from, GridPos object) const {
        const RouteField field = compute_routes(map_, from);
        int best = planner::kUnreachable;
        for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
                const GridPos q{object.row + dr, object.col + dc};
                best = std::min(best, field.cost(q));
            }
        if (best != planner::kUnreachable) return best;
        return 1000000L + world::manhattan(from, object);
    }

    std::optional<planner::SubTask> pick_explore() {
        const auto ctx = make_context();
        const auto dist = planner::believed_distances(map_, self_.position);
        std::optional<std::pair<int, int>> best, best_unclaimed; // (distance, room)
        for (const auto& [room, d] : planner::RuleReasoner::room_distances(ctx, dist)) {
            // A room is still worth a walk while its score is short of full
            // or a reachable frontier presses on it (an uncharted doorway).
            if (planner::RuleReasoner::effective_completeness(ctx, room) >= 0.999 &&
                !perception::room_has_frontier(map_, room))
                continue;
            const std::pair<int, int> cand{d, room};
            if (!best || cand < *best) best = cand;
            const auto it = rooms_claimed_.find(room);
            const bool claimed = it != rooms_claimed_.end() && it->second != profile_.agent_id;
            if (!claimed && (!best_unclaimed || cand < *best_unclaimed)) best_unclaimed = cand;
        }
        if (best_unclaimed) return planner::SubTask::explore(best_unclaimed->second);
        if (best) return planner::SubTask::explore(best->second);
        return std::nullopt;
    }

    std::shared_ptr<TeamBlackboard> board_;
};

// ---------------------------------------------------------------------------
// Negotiating team
// ---------------------------------------------------------------------------

struct NegotiationTrace {
    struct Objection {
        int by = -1;
        int against = -1;
        std::string subtask;
        std::string reason;
    };
    int rounds = 0;
    std::vector<Objection> objections;
};

namespace detail {

// What the judging agent knows that bears on someone else's plan, plus its
// own fresh intention (the usual source of conflicts).
inline std::vector<comms::Fact> negotiation_facts(const planner::PlannerContext& judge,
                                                  int judge_id,
                                                  const planner::SubTask& own_plan,
                                                  const planner::SubTask& judged) {
    std::vector<comms::Fact> facts;
    if (judged.kind == planner::SubTask::Kind::replace) {
        if (own_plan.kind == planner::SubTask::Kind::replace)
            facts.push_back(
                comms::Fact::executing_subtask(judge_id, planner::to_string(own_plan)));
        const auto it = judge.graph->objects.find(judged.object_id);
        if (it != judge.graph->objects.end() && !it->second.misplaced_belief)
            facts.push_back(comms::Fact::object_seen(judged.object_id, it->second.cell,
                                                     it->second.parent_receptacle,
                                                     it->second.room_id, false));
        else if (judge.objects_done.count(judged.object_id))
            facts.push_back(
                comms::Fact::object_seen(judged.object_id, GridPos{-1, -1}, "", -1, false));
    } else if (judged.kind == planner::SubTask::Kind::explore) {
        const double c = planner::RuleReasoner::effective_completeness(judge, judged.room_id);
        if (c > 0.0) facts.push_back(comms::Fact::explored_room(judged.room_id, c));
    }
    return facts;
}

} // namespace detail

// One planning dialog: members propose in id order, each seeing what earlier
// members announced; then later members audit the earlier results, and
// whoever drew an objection re-plans once with the objection on record. Two
// rounds at most, then the plans stand.
inline std::map<int, planner::SubTask> negotiate_team_plans(
    std::map<int, planner::PlannerContext> contexts,
    const std::map<int, planner::Reasoner*>& reasoners, int max_rounds = 2,
    NegotiationTrace* trace_out = nullptr) {
    NegotiationTrace scratch;
    NegotiationTrace& trace = trace_out ? *trace_out : scratch;
    trace = {};
    std::map<int, planner::SubTask> plans;
    if (contexts.empty()) return plans;
    if (max_rounds < 1) throw std::invalid_argument("negotiation needs at least one round");

    trace.rounds = 1;
    for (auto& [id, ctx] : contexts) {
        for (const auto& [j, st] : plans)
            ctx.memory.push_back("agent " + std::to_string(j) +
                                 " plans next: " + planner::to_string(st));
        plans[id] = planner::plan_single(ctx, *reasoners.at(id));
    }
    if (max_rounds == 1) return plans;

    std::set<int> objected;
    for (const auto& [id, ctx] : contexts) {
        for (const auto& [j, st] : plans) {
            if (j >= id) break;
            if (objected.count(j)) continue;
            planner::PlannerContext judge_view = ctx;
            judge_view.self = contexts.at(j).self; // judge the plan for its owner
            const auto facts = detail::negotiation_facts(ctx, id, plans.at(id), st);
            const planner::Verdict v = reasoners.at(id)->judge(judge_view, st, facts);
            if (!v.reasonable) {
                objected.insert(j);
                trace.objections.push_back({id, j, planner::to_string(st), v.reason});
            }
        }
    }
    if (objected.empty()) return plans;

    trace.rounds = 2;
    for (const auto& obj : trace.objections) {
        planner::PlannerContext ctx = contexts.at(obj.against);
        ctx.memory.push_back("agent " + std::to_string(obj.by) + " objects to " + obj.subtask +
                             ": " + obj.reason);
        const planner::SubTask old = plans.at(obj.against);
        if (old.kind == planner::SubTask::Kind::replace)
            ctx.objects_done.insert(old.object_id); // concede the target
        else if (old.kind == planner::SubTask::Kind::explore)
            ctx.team_room_completeness[old.room_id] = 1.0;
        for (const auto& [j, st] : plans)
            if (j != obj.against)
                ctx.memory.push_back("agent " + std::to_string(j) +
                                     " plans next: " + planner::to_string(st));
        plans[obj.against] = planner::plan_single(ctx, *reasoners.at(obj.against));
    }
    return plans;
}

class LlmTeamController;

// Shared dialog state of one negotiating team.
struct TeamNegotiator {
    int max_rounds = 2;
    // remind reasoners that the roster can change under them (agents break,
    // an ad hoc agent may join)
    bool adaptive_prompt = false;
    std::map<int, LlmTeamController*> members;
    std::map<int, planner::SubTask> pending; // negotiated, not yet picked up
    NegotiationTrace last_trace;
};

// Teammate that plans through the negotiation dialog. The member whose turn
// exposes a planning gap runs the dialog for every member currently without
// a sub-task; the results wait in the negotiator until each member's decide.
class LlmTeamController : public ActingController {
public:
    LlmTeamController(const world::AgentProfile& profile, int rows, int cols,
                      comms::Channel* channel, const world::PlacementRules* rules,
                      std::shared_ptr<TeamNegotiator> negotiator,
                      planner::Reasoner* primary = nullptr,
                      std::string dialect = comms::kHeuristicDialect)
        : ActingController(profile, rows, cols, channel, std::move(dialect), rules),
          negotiator_(std::move(negotiator)), reasoner_(primary, &rule_) {
        if (!negotiator_) throw std::invalid_argument("team negotiator required");
        negotiator_->members[profile.agent_id] = this;
        joined_ = true;
    }

    ~LlmTeamController() override {
        const auto it = negotiator_->members.find(profile_.agent_id);
        if (it != negotiator_->members.end() && it->second == this)
            negotiator_->members.erase(it);
    }

    LlmTeamController(const LlmTeamController&) = delete;
    LlmTeamController& operator=(const LlmTeamController&) = delete;

    planner::Reasoner& reasoner() { return reasoner_; }

protected:
    std::optional<planner::SubTask> choose_subtask() override {
        const auto ready = negotiator_->pending.find(profile_.agent_id);
        if (ready != negotiator_->pending.end()) {
            const planner::SubTask st = ready->second;
            negotiator_->pending.erase(ready);
            return st;
        }
        std::map<int, planner::PlannerContext> contexts;
        std::map<int, planner::Reasoner*> reasoners;
        for (const auto& [mid, member] : negotiator_->members) {
            if (!member) continue;
            if (mid != profile_.agent_id && !member->needs_plan()) continue;
            contexts[mid] = member->make_context();
            if (negotiator_->adaptive_prompt)
                contexts[mid].memory.push_back(
                    "Note: teammates may be broken or an ad hoc agent may have joined; trust "
                    "reported abilities over assumptions.");
            reasoners[mid] = &member->reasoner_;
        }
        const auto plans = negotiate_team_plans(std::move(contexts), reasoners,
                                                negotiator_->max_rounds,
                                                &negotiator_->last_trace);
        std::optional<planner::SubTask> mine;
        for (const auto& [mid, st] : plans) {
            if (mid == profile_.agent_id)
                mine = st;
            else
                negotiator_->pending[mid] = st;
        }
        return mine ? mine : std::optional<planner::SubTask>(planner::SubTask::stop());
    }

    planner::Reasoner& subskill_reasoner() override { return reasoner_; }

private:
    std::shared_ptr<TeamNegotiator> negotiator_;
    FallbackReasoner reasoner_;
};

// ---------------------------------------------------------------------------
// Ad hoc policies
// ---------------------------------------------------------------------------

enum class AdhocPolicy { none, random, heuristic, naive, cot, irot };

inline std::string to_string(AdhocPolicy p) {
    switch (p) {
        case AdhocPolicy::none: return "none";
        case AdhocPolicy::random: return "random";
        case AdhocPolicy::heuristic: return "heuristic";
        case AdhocPolicy::naive: return "naive";
        case AdhocPolicy::cot: return "cot";
        case AdhocPolicy::irot: return "irot";
    }
    return "?";
}

inline AdhocPolicy parse_adhoc_policy(const std::string& s) {
    for (AdhocPolicy p : {AdhocPolicy::none, AdhocPolicy::random, AdhocPolicy::heuristic,
                          AdhocPolicy::naive, AdhocPolicy::cot, AdhocPolicy::irot})
        if (s == to_string(p)) return p;
    throw std::invalid_argument("unknown ad hoc policy: " + s);
}

// "ev" skips candidate ranking, "rf" skips teammate-feedback judging, "evrf"
// skips both. Empty or "none" keeps the full loop.
inline planner::IRoTOptions ablation_options(const std::string& code) {
    planner::IRoTOptions o;
    if (code.empty() || code == "none") return o;
    if (code == "ev") {
        o.no_evaluation = true;
        return o;
    }
    if (code == "rf") {
        o.no_reflection = true;
        return o;
    }
    if (code == "evrf") {
        o.no_evaluation = true;
        o.no_reflection = true;
        return o;
    }
    throw std::invalid_argument("unknown ablation: " + code);
}

// Uniform draw over the currently legal action space. Deliberately no Stop:
// one unlucky draw would retire the agent for good and the baseline would
// measure luck, not behavior.
class RandomController : public Controller {
public:
    RandomController(const world::AgentProfile& profile, std::uint64_t seed)
        : profile_(profile),
          rng_(mix_seed(seed, fnv1a64("random-policy") ^
                                  static_cast<std::uint64_t>(profile.agent_id + 1))) {}

    engine::Action decide(const StepInput& in) override {
        std::vector<engine::Action> options;
        for (engine::ActionKind k :
             {engine::ActionKind::move_ahead, engine::ActionKind::move_back,
              engine::ActionKind::move_left, engine::ActionKind::move_right,
              engine::ActionKind::rotate_left, engine::ActionKind::rotate_right,
              engine::ActionKind::look_up, engine::ActionKind::look_down})
            options.push_back(engine::Action::move(k));
        if (profile_.alpha_manip) {
            if (in.self.holding) {
                for (const auto& r : in.observation.visible_receptacles)
                    options.push_back(engine::Action::put_down(r.receptacle_id));
                options.push_back(engine::Action::drop());
            } else {
                for (const auto& o : in.observation.visible_objects)
                    options.push_back(engine::Action::pickup(o.object_id));
            }
        }
        return options[rng_.uniform_index(options.size())];
    }

private:
    world::AgentProfile profile_;
    Rng rng_;
};

// The ad hoc agent proper: joins mid-episode, speaks the canonical dialect,
// and picks sub-tasks per the configured policy. A null primary reasoner
// means the deterministic rules stand in everywhere.
class PlanningAdhocController : public ActingController {
public:
    PlanningAdhocController(const world::AgentProfile& profile, int rows, int cols,
                            comms::Channel* channel, const world::PlacementRules* rules,
                            AdhocPolicy policy, planner::Reasoner* primary = nullptr,
                            planner::IRoTOptions irot = {})
        : ActingController(profile, rows, cols, channel, comms::kCanonicalDialect, rules),
          policy_(policy), primary_(primary), irot_(irot), reasoner_(primary, &rule_) {
        if (policy == AdhocPolicy::none || policy == AdhocPolicy::random)
            throw std::invalid_argument("policy has no planning controller");
        joined_ = false; // joins when told
    }

    const planner::IRoTTrace& last_trace() const { return trace_; }

protected:
    std::optional<planner::SubTask> choose_subtask() override {
        const planner::PlannerContext ctx = make_context();
        planner::SubTask st = planner::SubTask::stop();
        switch (policy_) {
            case AdhocPolicy::heuristic: {
                // scripted rules, honoring claims heard on the channel: a
                // teammate's object is done for us, their room needs no visit
                planner::PlannerContext mine = ctx;
                for (const auto& [obj, who] : objects_claimed_)
                    if (who != profile_.agent_id) mine.objects_done.insert(obj);
                for (const auto& [room, who] : rooms_claimed_)
                    if (who != profile_.agent_id) mine.team_room_completeness[room] = 1.0;
                st = planner::plan_single(mine, rule_);
                break;
            }
            case AdhocPolicy::naive:
                st = planner::naive_plan(ctx, reasoner_);
                break;
            case AdhocPolicy::cot:
                st = planner::cot_plan(ctx, reasoner_);
                break;
            case AdhocPolicy::irot: {
                planner::IRoTHooks hooks;
                hooks.broadcast_intention = [this](const planner::SubTask& s) {
                    send(comms::Intention{planner::to_string(s)});
                };
                hooks.gather_feedback = [this](const planner::SubTask& s) {
                    return gather_feedback(s);
                };
                hooks.refresh_context = [this] { return make_context(); };
                planner::Reasoner& primary =
                    primary_ ? *primary_ : static_cast<planner::Reasoner&>(rule_);
                const auto result = planner::plan_subtask_irot(
                    ctx, primary, primary_ ? &rule_ : nullptr, irot_, hooks);
                trace_ = result.trace;
                st = result.subtask;
                break;
            }
            default:
                break;
        }
        if (st.kind == planner::SubTask::Kind::replace && !profile_.alpha_manip) {
            // never walk into manipulation without the gear
            remember("[t=" + std::to_string(t_) + "] dropped " + planner::to_string(st) +
                     ": no manipulation ability");
            st = planner::plan_single(ctx, rule_);
        }
        return st;
    }

    planner::Reasoner& subskill_reasoner() override { return reasoner_; }

private:
    std::vector<comms::Fact> gather_feedback(const planner::SubTask& st) {
        std::vector<comms::Fact> facts;
        if (!channel_) return facts;
        const auto replies =
            channel_->request_intention_feedback(profile_.agent_id, planner::to_string(st), t_);
        for (const auto& m : replies) {
            remember(comms::describe(m));
            if (const auto* fb = std::get_if<comms::IntentionFeedback>(&m.payload))
                for (const auto& f : fb->facts) {
                    facts.push_back(f);
                    digest_fact(f);
                }
        }
        return facts;
    }

    AdhocPolicy policy_;
    planner::Reasoner* primary_ = nullptr;
    planner::IRoTOptions irot_;
    FallbackReasoner reasoner_;
    planner::IRoTTrace trace_;
};

struct AdhocDeps {
    comms::Channel* channel = nullptr;
    const world::PlacementRules* rules = nullptr;
    int rows = 0;
    int cols = 0;
    planner::Reasoner* reasoner = nullptr; // null: rules only
    planner::IRoTOptions irot;
    std::uint64_t seed = 1;
};

inline std::unique_ptr<Controller> make_adhoc_controller(AdhocPolicy policy,
                                                         const world::AgentProfile& profile,
                                                         const AdhocDeps& deps) {
    switch (policy) {
        case AdhocPolicy::none:
            return nullptr;
        case AdhocPolicy::random:
            return std::make_unique<RandomController>(profile, deps.seed);
        default:
            return std::make_unique<PlanningAdhocController>(profile, deps.rows, deps.cols,
                                                             deps.channel, deps.rules, policy,
                                                             deps.reasoner, deps.irot);
    }
}

} // namespace adhoc::agents
