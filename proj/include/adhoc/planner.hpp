#pragma once

// Hierarchical dynamic planning. A sub-task is chosen through a three-stage
// deliberation loop (generate candidates, rank them, judge each against
// teammate feedback), then decomposed into sub-skills one step at a time.
// Reasoners are pluggable: a deterministic rule reasoner ships here; the
// language-model reasoner lives in llm.hpp and shares the prompt scaffolding
// and reply grammar defined below.

#include "adhoc/comms.hpp"
#include "adhoc/perception.hpp"
#include "adhoc/taxonomy.hpp"
#include "adhoc/world.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace adhoc::planner {

using world::GridPos;
using world::PlacementRules;
using world::RoomType;

// ---------------------------------------------------------------------------
// Sub-task and sub-skill vocabularies
// ---------------------------------------------------------------------------

struct SubTask {
    enum class Kind { explore, replace, stop };
    Kind kind = Kind::stop;
    int room_id = -1;            // explore
    std::string object_id;       // replace
    std::string receptacle_type; // replace
    RoomType room_type = RoomType::kitchen; // replace

    static SubTask explore(int room) {
        SubTask s;
        s.kind = Kind::explore;
        s.room_id = room;
        return s;
    }
    static SubTask replace(std::string object, std::string receptacle, RoomType room) {
        SubTask s;
        s.kind = Kind::replace;
        s.object_id = std::move(object);
        s.receptacle_type = std::move(receptacle);
        s.room_type = room;
        return s;
    }
    static SubTask stop() { return {}; }

    bool operator==(const SubTask&) const = default;
};

inline std::string to_string(const SubTask& s) {
    switch (s.kind) {
        case SubTask::Kind::explore: return "Explore(room_" + std::to_string(s.room_id) + ")";
        case SubTask::Kind::replace:
            return "RePlace(" + s.object_id + ", " + s.receptacle_type + ", " +
                   world::to_string(s.room_type) + ")";
        case SubTask::Kind::stop: return "Stop";
    }
    return "?";
}

// Displacement bound for point navigation targets.
inline constexpr int kGoToPointMax = 8;

struct SubSkill {
    enum class Kind { go_to_object, go_to_point, go_to_room, pickup_object, put_object, explore,
                      stop };
    Kind kind = Kind::stop;
    std::string object_id;     // go_to_object (objects or receptacles), pickup, put
    int dx = 0, dy = 0;        // go_to_point, relative to the agent
    int room_id = -1;          // go_to_room, put_object
    std::string receptacle_id; // put_object

    static SubSkill go_to_object(std::string id) {
        SubSkill s;
        s.kind = Kind::go_to_object;
        s.object_id = std::move(id);
        return s;
    }
    static SubSkill go_to_point(int dx, int dy) {
        SubSkill s;
        s.kind = Kind::go_to_point;
        s.dx = dx;
        s.dy = dy;
        return s;
    }
    static SubSkill go_to_room(int room) {
        SubSkill s;
        s.kind = Kind::go_to_room;
        s.room_id = room;
        return s;
    }
    static SubSkill pickup(std::string id) {
        SubSkill s;
        s.kind = Kind::pickup_object;
        s.object_id = std::move(id);
        return s;
    }
    static SubSkill put(std::string object, std::string receptacle, int room) {
        SubSkill s;
        s.kind = Kind::put_object;
        s.object_id = std::move(object);
        s.receptacle_id = std::move(receptacle);
        s.room_id = room;
        return s;
    }
    static SubSkill explore() {
        SubSkill s;
        s.kind = Kind::explore;
        return s;
    }
    static SubSkill stop() { return {}; }

    bool operator==(const SubSkill&) const = default;
};

inline std::string to_string(const SubSkill& s) {
    switch (s.kind) {
        case SubSkill::Kind::go_to_object: return "GoToObject(" + s.object_id + ")";
        case SubSkill::Kind::go_to_point:
            return "GoToPoint(" + std::to_string(s.dx) + ", " + std::to_string(s.dy) + ")";
        case SubSkill::Kind::go_to_room: return "GoToRoom(room_" + std::to_string(s.room_id) + ")";
        case SubSkill::Kind::pickup_object: return "PickupObject(" + s.object_id + ")";
        case SubSkill::Kind::put_object:
            return "PutObject(" + s.object_id + ", " + s.receptacle_id + ", room_" +
                   std::to_string(s.room_id) + ")";
        case SubSkill::Kind::explore: return "Explore";
        case SubSkill::Kind::stop: return "Stop";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Literal parsing (also the reply grammar of the language-model reasoner)
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(std::string s) {
    const auto notspace = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
    s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
    return s;
}

// "Explore(room_3)" -> inner "room_3"; empty optional when the shape is off.
inline std::optional<std::string> call_args(const std::string& s, const std::string& name) {
    if (s.size() < name.size() + 2 || s.compare(0, name.size(), name) != 0) return std::nullopt;
    if (s[name.size()] != '(' || s.back() != ')') return std::nullopt;
    return s.substr(name.size() + 1, s.size() - name.size() - 2);
}

inline std::vector<std::string> split_args(const std::string& inner) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : inner) {
        if (c == ',') {
            parts.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(trim(cur));
    return parts;
}

inline std::optional<int> parse_int(const std::string& s) {
    if (s.empty()) return std::nullopt;
    std::size_t i = (s[0] == '-') ? 1 : 0;
    if (i == s.size()) return std::nullopt;
    for (; i < s.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return std::nullopt;
    return std::stoi(s);
}

// Accepts "room_3" or bare "3".
inline std::optional<int> parse_room_ref(std::string s) {
    if (s.rfind("room_", 0) == 0) s = s.substr(5);
    return parse_int(s);
}

} // namespace detail

inline std::optional<SubTask> parse_subtask(const std::string& raw) {
    const std::string s = detail::trim(raw);
    if (s == "Stop") return SubTask::stop();
    if (auto inner = detail::call_args(s, "Explore")) {
        if (auto room = detail::parse_room_ref(detail::trim(*inner)))
            return SubTask::explore(*room);
        return std::nullopt;
    }
    if (auto inner = detail::call_args(s, "RePlace")) {
        auto parts = detail::split_args(*inner);
        if (parts.size() != 3 || parts[0].empty() || parts[1].empty()) return std::nullopt;
        try {
            return SubTask::replace(parts[0], parts[1], world::room_type_from_string(parts[2]));
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

inline std::optional<SubSkill> parse_subskill(const std::string& raw) {
    const std::string s = detail::trim(raw);
    if (s == "Stop") return SubSkill::stop();
    if (s == "Explore") return SubSkill::explore();
    if (auto inner = detail::call_args(s, "GoToObject")) {
        const std::string id = detail::trim(*inner);
        if (id.empty()) return std::nullopt;
        return SubSkill::go_to_object(id);
    }
    if (auto inner = detail::call_args(s, "GoToRoom")) {
        if (auto room = detail::parse_room_ref(detail::trim(*inner)))
            return SubSkill::go_to_room(*room);
        return std::nullopt;
    }
    if (auto inner = detail::call_args(s, "GoToPoint")) {
        auto parts = detail::split_args(*inner);
        if (parts.size() != 2) return std::nullopt;
        auto dx = detail::parse_int(parts[0]);
        auto dy = detail::parse_int(parts[1]);
        if (!dx || !dy) return std::nullopt;
        if (std::abs(*dx) > kGoToPointMax || std::abs(*dy) > kGoToPointMax) return std::nullopt;
        return SubSkill::go_to_point(*dx, *dy);
    }
    if (auto inner = detail::call_args(s, "PickupObject")) {
        const std::string id = detail::trim(*inner);
        if (id.empty()) return std::nullopt;
        return SubSkill::pickup(id);
    }
    if (auto inner = detail::call_args(s, "PutObject")) {
        auto parts = detail::split_args(*inner);
        if (parts.size() != 3 || parts[0].empty() || parts[1].empty()) return std::nullopt;
        auto room = detail::parse_room_ref(parts[2]);
        if (!room) return std::nullopt;
        return SubSkill::put(parts[0], parts[1], *room);
    }
    return std::nullopt;
}

// Instance ids are formed as <Type>_<n>.
inline std::string type_from_id(const std::string& id) {
    const auto pos = id.rfind('_');
    return pos == std::string::npos ? id : id.substr(0, pos);
}

// Semantic validity on top of syntax: RePlace placements must be reasonable
// for the object's type under the active rules.
inline bool valid_subtask(const SubTask& s, const PlacementRules& rules) {
    switch (s.kind) {
        case SubTask::Kind::stop: return true;
        case SubTask::Kind::explore: return s.room_id >= 0;
        case SubTask::Kind::replace: {
            const std::string type = type_from_id(s.object_id);
            if (!rules.has_object_type(type)) return false;
            return world::reasonable_placements(type, rules)
                .count({s.receptacle_type, s.room_type}) > 0;
        }
    }
    return false;
}

// ---------------------------------------------------------------------------
// Planning context
// ---------------------------------------------------------------------------

struct TeammateInfo {
    world::AgentProfile profile;
    std::string last_subtask;        // empty when never reported
    std::string last_subtask_status; // started/finished/switched
    std::string last_subskill;
    bool active = true;
};

// Read-only snapshot a controller assembles before each planning call. The
// digests at the bottom are the controller's running summary of everything
// heard so far, so the reasoners need not re-parse raw history.
struct PlannerContext {
    world::AgentProfile self;
    GridPos position;
    std::optional<std::string> holding;
    int battery_remaining = 0;
    int t = 0;

    const perception::SemanticMap* map = nullptr;
    const perception::SceneGraph* graph = nullptr;
    const PlacementRules* rules = nullptr;

    std::vector<comms::Message> inbox;  // collected this step
    std::vector<std::string> memory;    // rendered history lines, oldest first
    std::map<int, TeammateInfo> teammates;
    std::optional<SubTask> current_subtask;

    std::map<int, double> team_room_completeness; // best report per room, self included
    std::set<std::string> objects_done;           // re-placed per traffic heard
    std::map<std::string, int> objects_claimed;   // object -> agent working on it

    bool valid() const { return map && graph && rules; }
};

struct Proposal {
    SubTask subtask;
    std::string rationale;
};

struct Verdict {
    bool reasonable = true;
    std::string reason;

    static Verdict ok() { return {}; }
    static Verdict infeasible(std::string why) { return {false, std::move(why)}; }
};

struct SubSkillPlan {
    SubSkill skill;
    std::string rationale;
};

class ReasonerFailure : public std::runtime_error {
public:
    enum class Kind { transport, auth, parse, other };

    ReasonerFailure(Kind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

inline std::string to_string(ReasonerFailure::Kind k) {
    switch (k) {
        case ReasonerFailure::Kind::transport: return "transport";
        case ReasonerFailure::Kind::auth: return "auth";
        case ReasonerFailure::Kind::parse: return "parse";
        case ReasonerFailure::Kind::other: return "other";
    }
    return "?";
}

class Reasoner {
public:
    virtual ~Reasoner() = default;
    virtual std::string name() const = 0;
    // Up to n distinct, syntactically valid sub-task proposals.
    virtual std::vector<Proposal> propose(const PlannerContext& ctx, int n) = 0;
    // A permutation of the input, best first.
    virtual std::vector<Proposal> rank(const PlannerContext& ctx,
                                       const std::vector<Proposal>& candidates) = 0;
    virtual Verdict judge(const PlannerContext& ctx, const SubTask& subtask,
                          const std::vector<comms::Fact>& feedback) = 0;
    virtual SubSkillPlan plan_subskill(const PlannerContext& ctx, const SubTask& subtask) = 0;
};

// ---------------------------------------------------------------------------
// Believed-map distances
// ---------------------------------------------------------------------------

inline constexpr int kUnreachable = std::numeric_limits<int>::max();

// BFS over cells the agent believes walkable. Unknown cells are not entered.
inline std::map<GridPos, int> believed_distances(const perception::SemanticMap& map,
                                                 GridPos from) {
    std::map<GridPos, int> dist;
    if (!map.in_bounds(from)) return dist;
    std::deque<GridPos> queue;
    dist[from] = 0;
    queue.push_back(from);
    while (!queue.empty()) {
        const GridPos p = queue.front();
        queue.pop_front();
        for (const auto& d : world::four_neighbors()) {
            const GridPos q{p.row + d.row, p.col + d.col};
            if (!map.in_bounds(q) || !map.believed_free(q) || dist.count(q)) continue;
            dist[q] = dist[p] + 1;
            queue.push_back(q);
        }
    }
    return dist;
}

inline int distance_or_max(const std::map<GridPos, int>& dist, GridPos p) {
    const auto it = dist.find(p);
    return it == dist.end() ? kUnreachable : it->second;
}

// ---------------------------------------------------------------------------
// Prompt scaffolding
// ---------------------------------------------------------------------------

enum class PromptStage { generation, evaluation, rejudging, subskill };

inline std::string to_string(PromptStage s) {
    switch (s) {
        case PromptStage::generation: return "generation";
        case PromptStage::evaluation: return "evaluation";
        case PromptStage::rejudging: return "rejudging";
        case PromptStage::subskill: return "subskill";
    }
    return "?";
}

struct PromptSection {
    std::string name;
    std::string text;
};

struct PromptBundle {
    PromptStage stage = PromptStage::generation;
    std::vector<PromptSection> sections;

    const PromptSection* find(const std::string& name) const {
        for (const auto& s : sections)
            if (s.name == name) return &s;
        return nullptr;
    }

    std::string render() const {
        std::string out;
        for (const auto& s : sections) {
            out += "## " + s.name + "\n" + s.text;
            if (!s.text.empty() && s.text.back() != '\n') out += "\n";
            out += "\n";
        }
        return out;
    }
};

struct PromptExtras {
    int n_candidates = 3;                  // generation
    std::vector<Proposal> candidates;      // evaluation
    std::optional<SubTask> chosen;         // rejudging
    std::vector<comms::Fact> feedback;     // rejudging
    std::optional<SubTask> subtask;        // subskill
    bool include_examples = true;          // false for the bare-prompt baseline
    int token_budget = 128000;
};

// Rough but stable: one token per four characters.
inline int approx_tokens(const std::string& s) {
    return static_cast<int>(s.size() / 4);
}

namespace detail {

inline std::string format_kg(double kg) {
    std::ostringstream os;
    os.precision(1);
    os << std::fixed << kg;
    return os.str();
}

inline std::string subtask_vocabulary() {
    return "Explore(room_<id>): move through the named room and look around until no frontier "
           "remains in it.\n"
           "RePlace(<object_id>, <receptacle_type>, <room_type>): pick up the object and put it "
           "onto a receptacle of that type inside a room of that type.\n"
           "Stop: declare your contribution finished and halt.\n";
}

inline std::string subskill_vocabulary() {
    return "GoToObject(<id>): navigate next to the named object or receptacle.\n"
           "GoToPoint(<dx>, <dy>): move by a relative offset, each component within " +
           std::to_string(kGoToPointMax) +
           " cells.\n"
           "GoToRoom(room_<id>): navigate into the named room.\n"
           "PickupObject(<object_id>): grasp an adjacent object.\n"
           "PutObject(<object_id>, <receptacle_id>, room_<id>): place the held object onto an "
           "adjacent receptacle.\n"
           "Explore: head for the nearest unexplored frontier and scan.\n"
           "Stop: halt.\n";
}

inline std::string output_format_text(PromptStage stage, int n) {
    switch (stage) {
        case PromptStage::generation:
            return "Think step by step, then finish with up to " + std::to_string(n) +
                   " lines, each of the form 'Plan: <sub-task>'. Every sub-task must be distinct "
                   "and use the exact literal syntax above.";
        case PromptStage::evaluation:
            return "Think step by step, then finish with one line 'Rank: i,j,...' listing every "
                   "candidate index exactly once (1-based), best first.";
        case PromptStage::rejudging:
            return "Think step by step, then finish with one line: either 'Verdict: reasonable' "
                   "or 'Verdict: infeasible(<short reason>)'.";
        case PromptStage::subskill:
            return "Think step by step, then finish with one line 'Plan: <sub-skill>' using the "
                   "exact literal syntax above.";
    }
    return "";
}

inline std::string examples_text(PromptStage stage) {
    switch (stage) {
        case PromptStage::generation:
            return "Example: a misplaced Knife_0 is known and you can lift it.\n"
                   "Plan: RePlace(Knife_0, CounterTop, kitchen)\n"
                   "Plan: Explore(room_2)\n";
        case PromptStage::evaluation:
            return "Example: candidates 1..3 where 2 matches your abilities best.\n"
                   "Rank: 2,1,3\n";
        case PromptStage::rejudging:
            return "Example: feedback says agent 2 already executes the same sub-task.\n"
                   "Verdict: infeasible(agent 2 is already handling it)\n";
        case PromptStage::subskill:
            return "Example: you must fetch Knife_0 and are far from it.\n"
                   "Plan: GoToObject(Knife_0)\n";
    }
    return "";
}

inline std::string self_state_text(const PlannerContext& ctx) {
    std::string out = "You are agent " + std::to_string(ctx.self.agent_id) + " at (" +
                      std::to_string(ctx.position.row) + ", " + std::to_string(ctx.position.col) +
                      ")";
    const int room = ctx.map && ctx.map->in_bounds(ctx.position)
                         ? ctx.map->at(ctx.position).room_id
                         : -1;
    if (room >= 0) out += " in room_" + std::to_string(room);
    out += ".\nHolding: " + (ctx.holding ? *ctx.holding : std::string("nothing")) + ".";
    out += "\nBattery: " + std::to_string(ctx.battery_remaining) + " steps left.";
    out += "\nAbilities: navigation " + std::string(ctx.self.alpha_nav ? "yes" : "no") +
           ", manipulation " + std::string(ctx.self.alpha_manip ? "yes" : "no") + ", " +
           (ctx.self.height ? "tall" : "short") + ", payload limit " +
           format_kg(ctx.self.payload_kg) + " kg.";
    if (ctx.current_subtask)
        out += "\nCurrent sub-task: " + planner::to_string(*ctx.current_subtask) + ".";
    return out + "\n";
}

inline std::string detection_text(const PlannerContext& ctx) {
    std::string out;
    for (const auto& [id, node] : ctx.graph->objects) {
        if (!node.misplaced_belief) continue;
        out += id + " (" + node.object_type + ", " + format_kg(node.mass_kg) + " kg) on " +
               (node.parent_receptacle.empty() ? "the floor" : node.parent_receptacle) +
               " in room_" + std::to_string(node.room_id) + ", believed misplaced";
        if (ctx.objects_done.count(id)) out += " but already re-placed per teammates";
        out += ".\n";
    }
    for (const auto& [id, node] : ctx.graph->receptacles) {
        if (node.candidate_for.empty()) continue;
        std::string fits;
        for (const auto& t : node.candidate_for) fits += (fits.empty() ? "" : ", ") + t;
        out += id + " (" + node.receptacle_type + ") in room_" + std::to_string(node.room_id) +
               " could host: " + fits + ".\n";
    }
    for (const auto& [room, belief] : ctx.graph->rooms) {
        out += "room_" + std::to_string(room) + ": " +
               (belief.inferred ? world::to_string(*belief.inferred) : std::string("type unknown"));
        const auto it = ctx.team_room_completeness.find(room);
        if (it != ctx.team_room_completeness.end())
            out += ", explored " + std::to_string(static_cast<int>(it->second * 100.0 + 0.5)) +
                   "% by the team";
        out += ".\n";
    }
    return out.empty() ? "Nothing notable detected yet.\n" : out;
}

inline std::string teammates_text(const PlannerContext& ctx) {
    if (ctx.teammates.empty()) return "No teammates known yet.\n";
    std::string out;
    for (const auto& [id, mate] : ctx.teammates) {
        out += "Agent " + std::to_string(id) + ": manipulation " +
               std::string(mate.profile.alpha_manip ? "yes" : "no") + ", " +
               (mate.profile.height ? "tall" : "short") + ", payload " +
               format_kg(mate.profile.payload_kg) + " kg";
        if (!mate.last_subtask.empty())
            out += "; last sub-task " + mate.last_subtask +
                   (mate.last_subtask_status.empty() ? "" : " (" + mate.last_subtask_status + ")");
        if (!mate.last_subskill.empty()) out += "; last sub-skill " + mate.last_subskill;
        out += mate.active ? "; active" : "; inactive";
        out += ".\n";
    }
    return out;
}

} // namespace detail

// Deterministic prompt assembly with a fixed section order per stage. When the
// rendered bundle would blow the token budget, the oldest communication lines
// are dropped first; everything else is bounded.
inline PromptBundle build_prompt(PromptStage stage, const PlannerContext& ctx,
                                 const PromptExtras& extras = {}) {
    if (!ctx.valid()) throw std::invalid_argument("planner context is incomplete");
    PromptBundle bundle;
    bundle.stage = stage;

    const bool subskill_stage = stage == PromptStage::subskill;
    std::string task =
        "A house has misplaced objects. Your team tidies it up: find objects that do not belong "
        "where they sit and move each to a reasonable receptacle. You joined an unfamiliar team "
        "and coordinate only by broadcast messages.";
    bundle.sections.push_back({"task_description", task + "\n"});
    bundle.sections.push_back({subskill_stage ? "subskill_descriptions" : "subtask_descriptions",
                               subskill_stage ? detail::subskill_vocabulary()
                                              : detail::subtask_vocabulary()});
    bundle.sections.push_back(
        {"output_format", detail::output_format_text(stage, extras.n_candidates) + "\n"});
    if (extras.include_examples)
        bundle.sections.push_back({"in_context_examples", detail::examples_text(stage)});
    bundle.sections.push_back({"self_state", detail::self_state_text(ctx)});
    bundle.sections.push_back({"detection_info", detail::detection_text(ctx)});
    bundle.sections.push_back({"teammate_abilities_and_states", detail::teammates_text(ctx)});

    std::vector<std::string> comm_lines = ctx.memory;
    for (const auto& m : ctx.inbox) comm_lines.push_back(comms::describe(m));
    std::size_t comm_index = bundle.sections.size();
    bundle.sections.push_back({"communication_messages", ""});

    switch (stage) {
        case PromptStage::generation:
            break;
        case PromptStage::evaluation: {
            std::string text;
            int i = 1;
            for (const auto& c : extras.candidates) {
                text += std::to_string(i++) + ". " + to_string(c.subtask);
                if (!c.rationale.empty()) text += " (" + c.rationale + ")";
                text += "\n";
            }
            bundle.sections.push_back({"candidates", text});
            break;
        }
        case PromptStage::rejudging: {
            std::string text = "Chosen sub-task: " +
                               (extras.chosen ? to_string(*extras.chosen) : std::string("?")) +
                               "\nTeammate feedback:\n";
            if (extras.feedback.empty()) text += "(none)\n";
            for (const auto& f : extras.feedback) text += "- " + comms::describe(f) + "\n";
            bundle.sections.push_back({"chosen_subtask_and_feedback", text});
            break;
        }
        case PromptStage::subskill:
            bundle.sections.push_back(
                {"current_subtask",
                 (extras.subtask ? to_string(*extras.subtask) : std::string("?")) + "\n"});
            break;
    }

    // Budget pass: evict oldest communication lines until the render fits.
    std::size_t drop = 0;
    for (;;) {
        std::string text;
        for (std::size_t i = drop; i < comm_lines.size(); ++i) text += comm_lines[i] + "\n";
        if (text.empty()) text = "(no messages)\n";
        bundle.sections[comm_index].text = text;
        if (approx_tokens(bundle.render()) <= extras.token_budget || drop >= comm_lines.size())
            break;
        ++drop;
    }
    return bundle;
}

// ---------------------------------------------------------------------------
// Reply grammar helpers
// ---------------------------------------------------------------------------

// All payloads of lines shaped "<tag> <payload>", e.g. tag "Plan:".
inline std::vector<std::string> tagged_lines(const std::string& reply, const std::string& tag) {
    std::vector<std::string> out;
    std::istringstream in(reply);
    std::string line;
    while (std::getline(in, line)) {
        line = detail::trim(line);
        if (line.rfind(tag, 0) == 0) out.push_back(detail::trim(line.substr(tag.size())));
    }
    return out;
}

// "Rank: 2,1,3" over n candidates -> zero-based order {1,0,2}. Anything that
// is not a full permutation is rejected.
inline std::optional<std::vector<int>> parse_rank_reply(const std::string& reply, int n) {
    const auto lines = tagged_lines(reply, "Rank:");
    if (lines.empty()) return std::nullopt;
    const auto parts = detail::split_args(lines.back());
    if (static_cast<int>(parts.size()) != n) return std::nullopt;
    std::vector<int> order;
    std::set<int> seen;
    for (const auto& p : parts) {
        const auto idx = detail::parse_int(p);
        if (!idx || *idx < 1 || *idx > n || !seen.insert(*idx).second) return std::nullopt;
        order.push_back(*idx - 1);
    }
    return order;
}

inline std::optional<Verdict> parse_verdict_reply(const std::string& reply) {
    const auto lines = tagged_lines(reply, "Verdict:");
    if (lines.empty()) return std::nullopt;
    const std::string v = lines.back();
    if (v == "reasonable") return Verdict::ok();
    if (auto why = detail::call_args(v, "infeasible"))
        return Verdict::infeasible(detail::trim(*why));
    if (v == "infeasible") return Verdict::infeasible("unspecified");
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Three-stage sub-task planning
// ---------------------------------------------------------------------------

struct IRoTOptions {
    int n_irot = 3;
    bool no_evaluation = false; // keep generation order instead of ranking
    bool no_reflection = false; // skip the judging stage
    int max_replan_rounds = 3;
};

// Comms wiring supplied by the controller; every hook is optional.
struct IRoTHooks {
    std::function<void(const SubTask&)> broadcast_intention;
    std::function<std::vector<comms::Fact>(const SubTask&)> gather_feedback;
    std::function<PlannerContext()> refresh_context; // for restart rounds
};

struct IRoTTrace {
    struct Judgement {
        SubTask subtask;
        Verdict verdict;
        std::size_t feedback_count = 0;
    };
    struct Round {
        std::vector<Proposal> candidates; // deduplicated generation output
        std::vector<Proposal> ranked;
        std::vector<Judgement> judgements;
    };
    std::vector<Round> rounds;
    std::string reasoner_name;
    bool fell_back = false;
    std::string fallback_reason;
    bool exhausted = false; // every round ended with no acceptable candidate
};

struct IRoTResult {
    SubTask subtask;
    IRoTTrace trace;
};

namespace detail {

inline std::vector<Proposal> dedup_proposals(std::vector<Proposal> proposals, int n,
                                             const PlacementRules& rules) {
    std::vector<Proposal> out;
    std::set<std::string> seen;
    for (auto& p : proposals) {
        if (static_cast<int>(out.size()) >= n) break;
        if (!valid_subtask(p.subtask, rules)) continue;
        if (!seen.insert(planner::to_string(p.subtask)).second) continue;
        out.push_back(std::move(p));
    }
    return out;
}

inline bool is_permutation_of(const std::vector<Proposal>& a, const std::vector<Proposal>& b) {
    if (a.size() != b.size()) return false;
    std::multiset<std::string> sa, sb;
    for (const auto& p : a) sa.insert(planner::to_string(p.subtask));
    for (const auto& p : b) sb.insert(planner::to_string(p.subtask));
    return sa == sb;
}

} // namespace detail

// One sub-task decision. Generation and ranking run once per round; judging
// walks the ranking until a candidate survives teammate feedback. A round
// with no survivor restarts with a refreshed context, up to
// max_replan_rounds, after which the agent gives up and stops. A reasoner
// failure swaps in the fallback for the rest of the call.
inline IRoTResult plan_subtask_irot(const PlannerContext& context, Reasoner& reasoner,
                                    Reasoner* fallback, const IRoTOptions& opt = {},
                                    const IRoTHooks& hooks = {}) {
    if (opt.n_irot < 1) throw std::invalid_argument("n_irot must be at least 1");
    if (!context.valid()) throw std::invalid_argument("planner context is incomplete");

    IRoTResult result;
    result.subtask = SubTask::stop();
    IRoTTrace& trace = result.trace;
    Reasoner* active = &reasoner;
    trace.reasoner_name = active->name();

    int round = 0;
    while (round < opt.max_replan_rounds) {
        PlannerContext refreshed;
        const PlannerContext* ctx = &context;
        if (round > 0 && hooks.refresh_context) {
            refreshed = hooks.refresh_context();
            ctx = &refreshed;
        }
        try {
            IRoTTrace::Round rec;
            rec.candidates = detail::dedup_proposals(active->propose(*ctx, opt.n_irot),
                                                     opt.n_irot, *ctx->rules);
            if (rec.candidates.empty()) {
                trace.rounds.push_back(std::move(rec));
                ++round;
                continue;
            }
            rec.ranked = opt.no_evaluation ? rec.candidates
                                           : active->rank(*ctx, rec.candidates);
            if (!detail::is_permutation_of(rec.candidates, rec.ranked))
                throw ReasonerFailure(ReasonerFailure::Kind::parse,
                                      "ranking is not a permutation of the candidates");
            if (opt.no_reflection) {
                result.subtask = rec.ranked.front().subtask;
                trace.rounds.push_back(std::move(rec));
                return result;
            }
            std::optional<SubTask> accepted;
            for (const auto& cand : rec.ranked) {
                if (hooks.broadcast_intention) hooks.broadcast_intention(cand.subtask);
                std::vector<comms::Fact> facts;
                if (hooks.gather_feedback) facts = hooks.gather_feedback(cand.subtask);
                const Verdict v = active->judge(*ctx, cand.subtask, facts);
                rec.judgements.push_back({cand.subtask, v, facts.size()});
                if (v.reasonable) {
                    accepted = cand.subtask;
                    break;
                }
            }
            trace.rounds.push_back(std::move(rec));
            if (accepted) {
                result.subtask = *accepted;
                return result;
            }
            ++round;
        } catch (const ReasonerFailure& f) {
            if (fallback && active != fallback) {
                active = fallback;
                trace.fell_back = true;
                trace.fallback_reason = to_string(f.kind()) + ": " + f.what();
                trace.reasoner_name = active->name();
                continue; // redo this round with the fallback
            }
            throw;
        }
    }
    trace.exhausted = true;
    return result;
}

// Single-shot planning used by the bare-prompt and chain-of-thought
// baselines: one generation call, first proposal wins, no ranking and no
// reflection. The prompt minimalism of the bare variant is configured on the
// reasoner itself.
inline SubTask plan_single(const PlannerContext& ctx, Reasoner& reasoner) {
    const auto proposals = detail::dedup_proposals(reasoner.propose(ctx, 1), 1, *ctx.rules);
    return proposals.empty() ? SubTask::stop() : proposals.front().subtask;
}

inline SubTask naive_plan(const PlannerContext& ctx, Reasoner& reasoner) {
    return plan_single(ctx, reasoner);
}

inline SubTask cot_plan(const PlannerContext& ctx, Reasoner& reasoner) {
    return plan_single(ctx, reasoner);
}

// ---------------------------------------------------------------------------
// Sub-skill planning entry point
// ---------------------------------------------------------------------------

// Validates that the sub-task still makes sense against current beliefs, then
// delegates. A std::invalid_argument here signals the caller to re-plan the
// sub-task.
inline SubSkillPlan plan_subskill(const PlannerContext& ctx, Reasoner& reasoner,
                                  const SubTask& subtask) {
    if (!ctx.valid()) throw std::invalid_argument("planner context is incomplete");
    switch (subtask.kind) {
        case SubTask::Kind::stop:
            break;
        case SubTask::Kind::replace: {
            const bool held = ctx.holding && *ctx.holding == subtask.object_id;
            if (!held && !ctx.graph->objects.count(subtask.object_id))
                throw std::invalid_argument("sub-task references unknown object " +
                                            subtask.object_id);
            break;
        }
        case SubTask::Kind::explore: {
            bool known = false;
            for (int r = 0; r < ctx.map->rows && !known; ++r)
                for (int c = 0; c < ctx.map->cols && !known; ++c)
                    known = ctx.map->at({r, c}).room_id == subtask.room_id;
            if (!known && perception::frontiers(*ctx.map).empty())
                throw std::invalid_argument("sub-task references unknown room room_" +
                                            std::to_string(subtask.room_id));
            break;
        }
    }
    return reasoner.plan_subskill(ctx, subtask);
}

// ---------------------------------------------------------------------------
// Deterministic rule reasoner
// ---------------------------------------------------------------------------

class RuleReasoner : public Reasoner {
public:
    std::string name() const override { return "rule"; }

    // Priority order: re-place what you can lift (nearest first), explore
    // what is not finished (nearest first), then stop.
    std::vector<Proposal> propose(const PlannerContext& ctx, int n) override {
        if (!ctx.valid()) throw std::invalid_argument("planner context is incomplete");
        const auto dist = believed_distances(*ctx.map, ctx.position);
        std::vector<Proposal> out;

        if (ctx.self.alpha_manip) {
            std::vector<std::pair<int, const perception::ObjectNode*>> targets;
            for (const auto& [id, node] : ctx.graph->objects) {
                if (!node.misplaced_belief) continue;
                if (ctx.objects_done.count(id)) continue;
                if (node.mass_kg > ctx.self.payload_kg) continue;
                if (ctx.holding && *ctx.holding != id) continue;
                targets.push_back({distance_or_max(dist, node.cell), &node});
            }
            std::sort(targets.begin(), targets.end(),
                      [](const auto& a, const auto& b) {
                          return std::tie(a.first, a.second->object_id) <
                                 std::tie(b.first, b.second->object_id);
                      });
            for (const auto& [d, node] : targets) {
                const auto placement = pick_placement(ctx, node->object_type);
                if (!placement) continue;
                out.push_back({SubTask::replace(node->object_id, placement->first,
                                                placement->second),
                               "misplaced, within payload, " +
                                   (d == kUnreachable ? std::string("location known")
                                                      : std::to_string(d) + " steps away")});
            }
        }

        std::vector<std::pair<int, int>> rooms; // (distance, room_id)
        for (const auto& [room, d] : room_distances(ctx, dist)) {
            if (effective_completeness(ctx, room) >= 0.999) continue;
            rooms.push_back({d, room});
        }
        std::sort(rooms.begin(), rooms.end());
        for (const auto& [d, room] : rooms)
            out.push_back({SubTask::explore(room),
                           d == kUnreachable ? "heard of, not reached yet"
                                             : "incomplete, " + std::to_string(d) + " steps away"});

        out.push_back({SubTask::stop(), "nothing left worth doing"});
        if (static_cast<int>(out.size()) > n) out.resize(n);
        return out;
    }

    // Capability match first (manipulators chase re-placements, others
    // explore), then believed path distance, then textual order.
    std::vector<Proposal> rank(const PlannerContext& ctx,
                               const std::vector<Proposal>& candidates) override {
        const auto dist = believed_distances(*ctx.map, ctx.position);
        std::vector<std::pair<std::tuple<int, int, std::string>, Proposal>> keyed;
        for (const auto& c : candidates) {
            int priority = 2;
            int d = 0;
            switch (c.subtask.kind) {
                case SubTask::Kind::replace: {
                    priority = ctx.self.alpha_manip ? 0 : 1;
                    const auto it = ctx.graph->objects.find(c.subtask.object_id);
                    d = it == ctx.graph->objects.end() ? kUnreachable
                                                       : distance_or_max(dist, it->second.cell);
                    break;
                }
                case SubTask::Kind::explore: {
                    priority = ctx.self.alpha_manip ? 1 : 0;
                    const auto rooms = room_distances(ctx, dist);
                    const auto it = rooms.find(c.subtask.room_id);
                    d = it == rooms.end() ? kUnreachable : it->second;
                    break;
                }
                case SubTask::Kind::stop:
                    priority = 2;
                    break;
            }
            keyed.push_back({{priority, d, planner::to_string(c.subtask)}, c});
        }
        std::stable_sort(keyed.begin(), keyed.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<Proposal> out;
        for (auto& [k, p] : keyed) out.push_back(std::move(p));
        return out;
    }

    Verdict judge(const PlannerContext& ctx, const SubTask& subtask,
                  const std::vector<comms::Fact>& feedback) override {
        switch (subtask.kind) {
            case SubTask::Kind::stop:
                return Verdict::ok();
            case SubTask::Kind::replace: {
                if (!ctx.self.alpha_manip)
                    return Verdict::infeasible("this agent cannot manipulate objects");
                const auto it = ctx.graph->objects.find(subtask.object_id);
                if (it != ctx.graph->objects.end() &&
                    it->second.mass_kg > ctx.self.payload_kg)
                    return Verdict::infeasible("object exceeds this agent's payload");
                for (const auto& f : feedback) {
                    if (f.kind == comms::Fact::Kind::object_seen &&
                        f.object_id == subtask.object_id && !f.misplaced)
                        return Verdict::infeasible("object was already re-placed");
                    if (f.kind == comms::Fact::Kind::executing_subtask &&
                        f.agent_id != ctx.self.agent_id) {
                        const auto other = parse_subtask(f.subtask);
                        if (other && other->kind == SubTask::Kind::replace &&
                            other->object_id == subtask.object_id)
                            return Verdict::infeasible("another agent is already handling it");
                    }
                }
                return Verdict::ok();
            }
            case SubTask::Kind::explore: {
                for (const auto& f : feedback) {
                    if (f.kind == comms::Fact::Kind::explored_room &&
                        f.room_id == subtask.room_id && f.completeness >= 0.999)
                        return Verdict::infeasible("room is already fully explored");
                }
                return Verdict::ok();
            }
        }
        return Verdict::ok();
    }

    // Phase rules. RePlace: reach the object, grab it, reach a fitting
    // receptacle, put. Explore: enter the room, then sweep it.
    SubSkillPlan plan_subskill(const PlannerContext& ctx, const SubTask& subtask) override {
        switch (subtask.kind) {
            case SubTask::Kind::stop:
                return {SubSkill::stop(), "sub-task is terminal"};
            case SubTask::Kind::explore: {
                const int own_room = ctx.map->in_bounds(ctx.position)
                                         ? ctx.map->at(ctx.position).room_id
                                         : -1;
                if (own_room == subtask.room_id)
                    return {SubSkill::explore(), "already inside the room, sweep it"};
                bool known = false;
                for (int r = 0; r < ctx.map->rows && !known; ++r)
                    for (int c = 0; c < ctx.map->cols && !known; ++c)
                        known = ctx.map->at({r, c}).room_id == subtask.room_id;
                if (known)
                    return {SubSkill::go_to_room(subtask.room_id), "head to the known room"};
                return {SubSkill::explore(), "room not mapped yet, push the frontier"};
            }
            case SubTask::Kind::replace: {
                if (ctx.holding && *ctx.holding == subtask.object_id)
                    return plan_delivery(ctx, subtask);
                const auto it = ctx.graph->objects.find(subtask.object_id);
                if (it == ctx.graph->objects.end())
                    throw std::invalid_argument("sub-task references unknown object " +
                                                subtask.object_id);
                if (world::chebyshev(it->second.cell, ctx.position) <= 1)
                    return {SubSkill::pickup(subtask.object_id), "object within reach"};
                return {SubSkill::go_to_object(subtask.object_id), "move next to the object"};
            }
        }
        return {SubSkill::stop(), ""};
    }

    // First reasonable placement whose receptacle is already known in a room
    // of matching type; otherwise the first placement in rule order. Kept
    // public: scripted teammates pick placements the same way.
    static std::optional<world::PlacementPair> pick_placement(const PlannerContext& ctx,
                                                              const std::string& object_type) {
        if (!ctx.rules->has_object_type(object_type)) return std::nullopt;
        const auto& pairs = world::reasonable_placements(object_type, *ctx.rules);
        if (pairs.empty()) return std::nullopt;
        for (const auto& pair : pairs) {
            for (const auto& [id, node] : ctx.graph->receptacles) {
                if (node.receptacle_type != pair.first) continue;
                const auto room = ctx.graph->rooms.find(node.room_id);
                if (room != ctx.graph->rooms.end() && room->second.inferred == pair.second)
                    return pair;
            }
        }
        return *pairs.begin();
    }

    // Known rooms and the believed distance to their nearest explored cell.
    // Rooms only heard about from teammates appear as unreachable.
    static std::map<int, int> room_distances(const PlannerContext& ctx,
                                             const std::map<GridPos, int>& dist) {
        std::map<int, int> out;
        for (int r = 0; r < ctx.map->rows; ++r) {
            for (int c = 0; c < ctx.map->cols; ++c) {
                const auto& cell = ctx.map->at({r, c});
                if (cell.room_id < 0) continue;
                const int d = distance_or_max(dist, {r, c});
                const auto it = out.find(cell.room_id);
                if (it == out.end() || d < it->second) out[cell.room_id] = d;
            }
        }
        for (const auto& [room, c] : ctx.team_room_completeness)
            if (!out.count(room)) out[room] = kUnreachable;
        return out;
    }

    static double effective_completeness(const PlannerContext& ctx, int room) {
        double own = ctx.map->room_completeness(room);
        const auto it = ctx.team_room_completeness.find(room);
        if (it != ctx.team_room_completeness.end()) own = std::max(own, it->second);
        return own;
    }

private:
    SubSkillPlan plan_delivery(const PlannerContext& ctx, const SubTask& subtask) {
        const auto dist = believed_distances(*ctx.map, ctx.position);
        const perception::ReceptacleNode* best = nullptr;
        int best_d = kUnreachable;
        for (const auto& [id, node] : ctx.graph->receptacles) {
            if (node.receptacle_type != subtask.receptacle_type) continue;
            const auto room = ctx.graph->rooms.find(node.room_id);
            if (room == ctx.graph->rooms.end() || room->second.inferred != subtask.room_type)
                continue;
            const int d = distance_or_max(dist, node.cell);
            if (!best || d < best_d ||
                (d == best_d && node.receptacle_id < best->receptacle_id)) {
                best = &node;
                best_d = d;
            }
        }
        if (best) {
            if (world::chebyshev(best->cell, ctx.position) <= 1)
                return {SubSkill::put(subtask.object_id, best->receptacle_id, best->room_id),
                        "receptacle within reach"};
            return {SubSkill::go_to_object(best->receptacle_id), "carry it to the receptacle"};
        }
        for (const auto& [room, belief] : ctx.graph->rooms) {
            if (belief.inferred == subtask.room_type)
                return {SubSkill::go_to_room(room), "no fitting receptacle seen, search its room"};
        }
        return {SubSkill::explore(), "no fitting room known, keep exploring"};
    }
};

} // namespace adhoc::planner
