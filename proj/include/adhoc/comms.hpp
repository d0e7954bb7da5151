#pragma once

// Decentralized broadcast messaging. Messages travel as dialect-tagged raw
// JSON; adapt() normalizes any registered dialect into the canonical Message
// the controllers consume. Regular traffic is delivered at the step after it
// was sent; intention feedback is a synchronous query resolved inside one
// planning call via registered responders.

#include "adhoc/perception.hpp"
#include "adhoc/world.hpp"

#include <json.hpp>

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace adhoc::comms {

using world::AgentProfile;
using world::GridPos;

// ---------------------------------------------------------------------------
// Canonical message model
// ---------------------------------------------------------------------------

enum class ProgressStatus { started, finished, switched };

inline std::string to_string(ProgressStatus s) {
    switch (s) {
        case ProgressStatus::started: return "started";
        case ProgressStatus::finished: return "finished";
        case ProgressStatus::switched: return "switched";
    }
    return "?";
}

inline ProgressStatus progress_from_string(const std::string& s) {
    if (s == "started") return ProgressStatus::started;
    if (s == "finished") return ProgressStatus::finished;
    if (s == "switched") return ProgressStatus::switched;
    throw std::invalid_argument("unknown progress status: " + s);
}

struct Fact {
    enum class Kind { explored_room, object_seen, executing_subtask };
    Kind kind = Kind::explored_room;
    // explored_room
    int room_id = -1;
    double completeness = 0.0;
    // object_seen
    std::string object_id;
    GridPos cell;
    std::string receptacle_id;
    bool misplaced = false;
    // executing_subtask
    int agent_id = -1;
    std::string subtask;

    static Fact explored_room(int room, double c) {
        Fact f;
        f.kind = Kind::explored_room;
        f.room_id = room;
        f.completeness = c;
        return f;
    }
    static Fact object_seen(std::string id, GridPos cell, std::string receptacle,
                            int room, bool misplaced) {
        Fact f;
        f.kind = Kind::object_seen;
        f.object_id = std::move(id);
        f.cell = cell;
        f.receptacle_id = std::move(receptacle);
        f.room_id = room;
        f.misplaced = misplaced;
        return f;
    }
    static Fact executing_subtask(int agent, std::string subtask) {
        Fact f;
        f.kind = Kind::executing_subtask;
        f.agent_id = agent;
        f.subtask = std::move(subtask);
        return f;
    }
};

struct CapabilityAnnounce {
    AgentProfile profile;
};
struct CapabilityReflect {
    AgentProfile profile;
    std::string current_subtask;
};
struct SubTaskStatus {
    std::string subtask;
    ProgressStatus status = ProgressStatus::started;
};
struct SubSkillStatus {
    std::string subskill;
    ProgressStatus status = ProgressStatus::started;
};
struct Intention {
    std::string subtask;
};
struct IntentionFeedback {
    std::vector<Fact> facts;
};

using Payload = std::variant<CapabilityAnnounce, CapabilityReflect, perception::KeyDetection,
                             SubTaskStatus, SubSkillStatus, Intention, IntentionFeedback>;

struct Message {
    int sender = -1;
    int t_sent = 0;
    Payload payload;
};

inline std::string kind_name(const Payload& p) {
    struct Visitor {
        std::string operator()(const CapabilityAnnounce&) const { return "CapabilityAnnounce"; }
        std::string operator()(const CapabilityReflect&) const { return "CapabilityReflect"; }
        std::string operator()(const perception::KeyDetection&) const { return "KeyDetection"; }
        std::string operator()(const SubTaskStatus&) const { return "SubTaskStatus"; }
        std::string operator()(const SubSkillStatus&) const { return "SubSkillStatus"; }
        std::string operator()(const Intention&) const { return "Intention"; }
        std::string operator()(const IntentionFeedback&) const { return "IntentionFeedback"; }
    };
    return std::visit(Visitor{}, p);
}

// ---------------------------------------------------------------------------
// Canonical JSON codec (dialect "canonical_v1")
// ---------------------------------------------------------------------------

inline constexpr const char* kCanonicalDialect = "canonical_v1";
inline constexpr const char* kHeuristicDialect = "heuristic_v1";

inline nlohmann::json fact_to_json(const Fact& f) {
    switch (f.kind) {
        case Fact::Kind::explored_room:
            return {{"fact", "ExploredRoom"}, {"room", f.room_id},
                    {"completeness", f.completeness}};
        case Fact::Kind::object_seen:
            return {{"fact", "ObjectSeen"},   {"object_id", f.object_id},
                    {"cell", {f.cell.row, f.cell.col}}, {"on", f.receptacle_id},
                    {"room", f.room_id},      {"misplaced", f.misplaced}};
        case Fact::Kind::executing_subtask:
            return {{"fact", "ExecutingSubTask"}, {"agent_id", f.agent_id},
                    {"subtask", f.subtask}};
    }
    return {};
}

inline Fact fact_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("fact").get<std::string>();
    if (kind == "ExploredRoom")
        return Fact::explored_room(j.at("room").get<int>(), j.at("completeness").get<double>());
    if (kind == "ObjectSeen")
        return Fact::object_seen(j.at("object_id").get<std::string>(),
                                 {j.at("cell").at(0).get<int>(), j.at("cell").at(1).get<int>()},
                                 j.at("on").get<std::string>(), j.at("room").get<int>(),
                                 j.at("misplaced").get<bool>());
    if (kind == "ExecutingSubTask")
        return Fact::executing_subtask(j.at("agent_id").get<int>(),
                                       j.at("subtask").get<std::string>());
    throw std::invalid_argument("unknown fact kind: " + kind);
}

inline nlohmann::json detection_to_json(const perception::KeyDetection& d) {
    return {{"what", d.kind == perception::KeyDetection::Kind::misplaced_object ? "object"
                                                                                : "receptacle"},
            {"id", d.entity_id},
            {"type", d.entity_type},
            {"cell", {d.cell.row, d.cell.col}},
            {"on", d.receptacle_id},
            {"room", d.room_id},
            {"misplaced", d.misplaced},
            {"candidate_for", d.candidate_for}};
}

inline perception::KeyDetection detection_from_json(const nlohmann::json& j) {
    perception::KeyDetection d;
    d.kind = j.at("what").get<std::string>() == "object"
                 ? perception::KeyDetection::Kind::misplaced_object
                 : perception::KeyDetection::Kind::candidate_receptacle;
    d.entity_id = j.at("id").get<std::string>();
    d.entity_type = j.at("type").get<std::string>();
    d.cell = {j.at("cell").at(0).get<int>(), j.at("cell").at(1).get<int>()};
    d.receptacle_id = j.at("on").get<std::string>();
    d.room_id = j.at("room").get<int>();
    d.misplaced = j.at("misplaced").get<bool>();
    d.candidate_for = j.at("candidate_for").get<std::vector<std::string>>();
    return d;
}

inline nlohmann::json message_to_json(const Message& m) {
    nlohmann::json body;
    struct Visitor {
        nlohmann::json& body;
        void operator()(const CapabilityAnnounce& p) const {
            body["profile"] = world::to_json(p.profile);
        }
        void operator()(const CapabilityReflect& p) const {
            body["profile"] = world::to_json(p.profile);
            body["current_subtask"] = p.current_subtask;
        }
        void operator()(const perception::KeyDetection& p) const {
            body["detection"] = detection_to_json(p);
        }
        void operator()(const SubTaskStatus& p) const {
            body["subtask"] = p.subtask;
            body["status"] = to_string(p.status);
        }
        void operator()(const SubSkillStatus& p) const {
            body["subskill"] = p.subskill;
            body["status"] = to_string(p.status);
        }
        void operator()(const Intention& p) const { body["subtask"] = p.subtask; }
        void operator()(const IntentionFeedback& p) const {
            auto arr = nlohmann::json::array();
            for (const auto& f : p.facts) arr.push_back(fact_to_json(f));
            body["facts"] = arr;
        }
    };
    std::visit(Visitor{body}, m.payload);
    return {{"dialect", kCanonicalDialect},
            {"sender", m.sender},
            {"t", m.t_sent},
            {"kind", kind_name(m.payload)},
            {"body", body}};
}

inline Message message_from_canonical_json(const nlohmann::json& j) {
    Message m;
    m.sender = j.at("sender").get<int>();
    m.t_sent = j.at("t").get<int>();
    const std::string kind = j.at("kind").get<std::string>();
    const nlohmann::json& body = j.at("body");
    if (kind == "CapabilityAnnounce") {
        m.payload = CapabilityAnnounce{world::profile_from_json(body.at("profile"))};
    } else if (kind == "CapabilityReflect") {
        m.payload = CapabilityReflect{world::profile_from_json(body.at("profile")),
                                      body.at("current_subtask").get<std::string>()};
    } else if (kind == "KeyDetection") {
        m.payload = detection_from_json(body.at("detection"));
    } else if (kind == "SubTaskStatus") {
        m.payload = SubTaskStatus{body.at("subtask").get<std::string>(),
                                  progress_from_string(body.at("status").get<std::string>())};
    } else if (kind == "SubSkillStatus") {
        m.payload = SubSkillStatus{body.at("subskill").get<std::string>(),
                                   progress_from_string(body.at("status").get<std::string>())};
    } else if (kind == "Intention") {
        m.payload = Intention{body.at("subtask").get<std::string>()};
    } else if (kind == "IntentionFeedback") {
        IntentionFeedback fb;
        for (const auto& f : body.at("facts")) fb.facts.push_back(fact_from_json(f));
        m.payload = fb;
    } else {
        throw std::invalid_argument("unknown message kind: " + kind);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Heuristic-team dialect codec ("heuristic_v1")
// ---------------------------------------------------------------------------
// The pre-coordinated team talks in its own terse format; the adapter maps it
// onto the canonical model and back.

namespace heuristic_codec {

inline nlohmann::json profile_out(const AgentProfile& p) {
    return {{"id", p.agent_id},   {"nav", p.alpha_nav},       {"man", p.alpha_manip},
            {"hgt", p.height},    {"load", p.payload_kg},     {"bat", p.battery_steps},
            {"row", p.start_position.row}, {"col", p.start_position.col},
            {"join", p.join_time}};
}

inline AgentProfile profile_in(const nlohmann::json& j) {
    AgentProfile p;
    p.agent_id = j.at("id").get<int>();
    p.alpha_nav = j.at("nav").get<bool>();
    p.alpha_manip = j.at("man").get<bool>();
    p.height = j.at("hgt").get<int>();
    p.payload_kg = j.at("load").get<double>();
    p.battery_steps = j.at("bat").get<int>();
    p.start_position = {j.at("row").get<int>(), j.at("col").get<int>()};
    p.join_time = j.at("join").get<int>();
    return p;
}

inline nlohmann::json fact_out(const Fact& f) {
    switch (f.kind) {
        case Fact::Kind::explored_room:
            return {{"f", "room"}, {"room", f.room_id}, {"c", f.completeness}};
        case Fact::Kind::object_seen:
            return {{"f", "seen"}, {"id", f.object_id}, {"rc", {f.cell.row, f.cell.col}},
                    {"on", f.receptacle_id}, {"room", f.room_id}, {"bad", f.misplaced}};
        case Fact::Kind::executing_subtask:
            return {{"f", "exec"}, {"who", f.agent_id}, {"sub", f.subtask}};
    }
    return {};
}

inline Fact fact_in(const nlohmann::json& j) {
    const std::string f = j.at("f").get<std::string>();
    if (f == "room") return Fact::explored_room(j.at("room").get<int>(), j.at("c").get<double>());
    if (f == "seen")
        return Fact::object_seen(j.at("id").get<std::string>(),
                                 {j.at("rc").at(0).get<int>(), j.at("rc").at(1).get<int>()},
                                 j.at("on").get<std::string>(), j.at("room").get<int>(),
                                 j.at("bad").get<bool>());
    if (f == "exec")
        return Fact::executing_subtask(j.at("who").get<int>(), j.at("sub").get<std::string>());
    throw std::invalid_argument("heuristic dialect: unknown fact " + f);
}

inline nlohmann::json encode(const Message& m) {
    nlohmann::json j = {{"dialect", kHeuristicDialect}, {"frm", m.sender}, {"at", m.t_sent}};
    struct Visitor {
        nlohmann::json& j;
        void operator()(const CapabilityAnnounce& p) const {
            j["typ"] = "cap";
            j["who"] = profile_out(p.profile);
        }
        void operator()(const CapabilityReflect& p) const {
            j["typ"] = "cap_reflect";
            j["who"] = profile_out(p.profile);
            j["doing"] = p.current_subtask;
        }
        void operator()(const perception::KeyDetection& p) const {
            j["typ"] = "det";
            j["what"] = p.kind == perception::KeyDetection::Kind::misplaced_object ? "obj" : "rec";
            j["id"] = p.entity_id;
            j["cls"] = p.entity_type;
            j["rc"] = {p.cell.row, p.cell.col};
            j["on"] = p.receptacle_id;
            j["room"] = p.room_id;
            j["bad"] = p.misplaced;
            j["fits"] = p.candidate_for;
        }
        void operator()(const SubTaskStatus& p) const {
            j["typ"] = "task";
            j["sub"] = p.subtask;
            j["st"] = to_string(p.status);
        }
        void operator()(const SubSkillStatus& p) const {
            j["typ"] = "skill";
            j["sk"] = p.subskill;
            j["st"] = to_string(p.status);
        }
        void operator()(const Intention& p) const {
            j["typ"] = "intent";
            j["sub"] = p.subtask;
        }
        void operator()(const IntentionFeedback& p) const {
            j["typ"] = "fb";
            auto arr = nlohmann::json::array();
            for (const auto& f : p.facts) arr.push_back(fact_out(f));
            j["facts"] = arr;
        }
    };
    std::visit(Visitor{j}, m.payload);
    return j;
}

inline Message decode(const nlohmann::json& j) {
    Message m;
    m.sender = j.at("frm").get<int>();
    m.t_sent = j.at("at").get<int>();
    const std::string typ = j.at("typ").get<std::string>();
    if (typ == "cap") {
        m.payload = CapabilityAnnounce{profile_in(j.at("who"))};
    } else if (typ == "cap_reflect") {
        m.payload = CapabilityReflect{profile_in(j.at("who")), j.at("doing").get<std::string>()};
    } else if (typ == "det") {
        perception::KeyDetection d;
        d.kind = j.at("what").get<std::string>() == "obj"
                     ? perception::KeyDetection::Kind::misplaced_object
                     : perception::KeyDetection::Kind::candidate_receptacle;
        d.entity_id = j.at("id").get<std::string>();
        d.entity_type = j.at("cls").get<std::string>();
        d.cell = {j.at("rc").at(0).get<int>(), j.at("rc").at(1).get<int>()};
        d.receptacle_id = j.at("on").get<std::string>();
        d.room_id = j.at("room").get<int>();
        d.misplaced = j.at("bad").get<bool>();
        d.candidate_for = j.at("fits").get<std::vector<std::string>>();
        m.payload = d;
    } else if (typ == "task") {
        m.payload = SubTaskStatus{j.at("sub").get<std::string>(),
                                  progress_from_string(j.at("st").get<std::string>())};
    } else if (typ == "skill") {
        m.payload = SubSkillStatus{j.at("sk").get<std::string>(),
                                   progress_from_string(j.at("st").get<std::string>())};
    } else if (typ == "intent") {
        m.payload = Intention{j.at("sub").get<std::string>()};
    } else if (typ == "fb") {
        IntentionFeedback fb;
        for (const auto& f : j.at("facts")) fb.facts.push_back(fact_in(f));
        m.payload = fb;
    } else {
        throw std::invalid_argument("heuristic dialect: unknown typ " + typ);
    }
    return m;
}

} // namespace heuristic_codec

// ---------------------------------------------------------------------------
// Human-readable one-liners, used in prompts and history logs
// ---------------------------------------------------------------------------

inline std::string describe(const Fact& f) {
    switch (f.kind) {
        case Fact::Kind::explored_room:
            return "room_" + std::to_string(f.room_id) + " explored to " +
                   std::to_string(static_cast<int>(f.completeness * 100.0 + 0.5)) + "%";
        case Fact::Kind::object_seen: {
            std::string where = f.receptacle_id.empty()
                                    ? "on the floor at (" + std::to_string(f.cell.row) + ", " +
                                          std::to_string(f.cell.col) + ")"
                                    : "on " + f.receptacle_id;
            return "saw " + f.object_id + " " + where + " in room_" + std::to_string(f.room_id) +
                   (f.misplaced ? " (misplaced)" : " (fine where it is)");
        }
        case Fact::Kind::executing_subtask:
            return "agent " + std::to_string(f.agent_id) + " is executing " + f.subtask;
    }
    return "?";
}

inline std::string describe(const Message& m) {
    std::string head =
        "[t=" + std::to_string(m.t_sent) + "] agent " + std::to_string(m.sender) + ": ";
    struct Visitor {
        std::string operator()(const CapabilityAnnounce& p) const {
            return "announced capabilities (manipulation " +
                   std::string(p.profile.alpha_manip ? "yes" : "no") + ", payload " +
                   std::to_string(p.profile.payload_kg) + " kg, height " +
                   std::string(p.profile.height ? "tall" : "short") + ")";
        }
        std::string operator()(const CapabilityReflect& p) const {
            return "reflected capabilities (manipulation " +
                   std::string(p.profile.alpha_manip ? "yes" : "no") + ", payload " +
                   std::to_string(p.profile.payload_kg) + " kg), currently " +
                   (p.current_subtask.empty() ? std::string("idle") : p.current_subtask);
        }
        std::string operator()(const perception::KeyDetection& p) const {
            if (p.kind == perception::KeyDetection::Kind::misplaced_object)
                return "detected misplaced " + p.entity_id + " on " +
                       (p.receptacle_id.empty() ? "the floor" : p.receptacle_id) + " in room_" +
                       std::to_string(p.room_id);
            std::string fits;
            for (const auto& t : p.candidate_for) fits += (fits.empty() ? "" : ", ") + t;
            return "noted " + p.entity_id + " in room_" + std::to_string(p.room_id) +
                   " could host: " + fits;
        }
        std::string operator()(const SubTaskStatus& p) const {
            return "sub-task " + p.subtask + " " + to_string(p.status);
        }
        std::string operator()(const SubSkillStatus& p) const {
            return "sub-skill " + p.subskill + " " + to_string(p.status);
        }
        std::string operator()(const Intention& p) const { return "intends " + p.subtask; }
        std::string operator()(const IntentionFeedback& p) const {
            if (p.facts.empty()) return "feedback: nothing relevant";
            std::string out = "feedback:";
            for (const auto& f : p.facts) out += " " + describe(f) + ";";
            return out;
        }
    };
    return head + std::visit(Visitor{}, m.payload);
}

// ---------------------------------------------------------------------------
// Adapter
// ---------------------------------------------------------------------------

struct RawMessage {
    std::string dialect;
    nlohmann::json body; // full dialect-shaped message, including routing fields
    int sender = -1;
    int t_sent = 0;
};

inline RawMessage encode_message(const Message& m, const std::string& dialect) {
    if (dialect == kCanonicalDialect) return {dialect, message_to_json(m), m.sender, m.t_sent};
    if (dialect == kHeuristicDialect)
        return {dialect, heuristic_codec::encode(m), m.sender, m.t_sent};
    throw std::invalid_argument("unknown dialect: " + dialect);
}

struct AdaptResult {
    std::optional<Message> message;
    std::string diagnostic; // nonempty when the raw message was skipped
};

// Normalizes a raw dialect message; failures are diagnostics, not errors, so
// an episode survives foreign or corrupt traffic.
inline AdaptResult adapt(const RawMessage& raw) {
    try {
        if (raw.dialect == kCanonicalDialect)
            return {message_from_canonical_json(raw.body), {}};
        if (raw.dialect == kHeuristicDialect) return {heuristic_codec::decode(raw.body), {}};
        return {std::nullopt, "unregistered dialect: " + raw.dialect};
    } catch (const std::exception& e) {
        return {std::nullopt, std::string("malformed ") + raw.dialect + " message: " + e.what()};
    }
}

// ---------------------------------------------------------------------------
// Channel
// ---------------------------------------------------------------------------

// Facts a teammate volunteers about an announced intention; nullopt when the
// teammate is inactive or unresponsive.
using FeedbackResponder =
    std::function<std::optional<std::vector<Fact>>(int requester, const std::string& subtask)>;

class Channel {
public:
    void register_agent(int agent_id) { registered_.insert(agent_id); }
    bool is_registered(int agent_id) const { return registered_.count(agent_id) > 0; }

    void register_feedback_responder(int agent_id, FeedbackResponder responder) {
        require_registered(agent_id);
        responders_[agent_id] = std::move(responder);
    }

    // Queued for every other agent from step t_sent + 1.
    void broadcast(const RawMessage& raw) {
        require_registered(raw.sender);
        entries_.push_back({raw, raw.t_sent + 1, next_seq_++});
    }

    void broadcast(const Message& m, const std::string& dialect) {
        broadcast(encode_message(m, dialect));
    }

    // Uncollected raw messages visible to `agent` at step t, ordered by
    // (delivery step, sender, emission order). Consume-once per agent.
    std::vector<RawMessage> collect(int agent_id, int t) {
        require_registered(agent_id);
        std::vector<const Entry*> ready;
        for (const auto& e : entries_) {
            if (e.raw.sender == agent_id || e.delivery_step > t) continue;
            if (consumed_[agent_id].count(e.seq)) continue;
            ready.push_back(&e);
        }
        std::sort(ready.begin(), ready.end(), [](const Entry* a, const Entry* b) {
            return std::tie(a->delivery_step, a->raw.sender, a->seq) <
                   std::tie(b->delivery_step, b->raw.sender, b->seq);
        });
        std::vector<RawMessage> out;
        out.reserve(ready.size());
        for (const Entry* e : ready) {
            consumed_[agent_id].insert(e->seq);
            out.push_back(e->raw);
        }
        return out;
    }

    // Synchronous intention query: every other registered agent with a
    // responder may contribute facts; replies cost no simulated time.
    std::vector<Message> request_intention_feedback(int requester, const std::string& subtask,
                                                    int t) {
        require_registered(requester);
        std::vector<Message> out;
        for (const auto& [id, responder] : responders_) {
            if (id == requester || !responder) continue;
            const auto facts = responder(requester, subtask);
            if (!facts) continue;
            Message m;
            m.sender = id;
            m.t_sent = t;
            m.payload = IntentionFeedback{*facts};
            out.push_back(m);
        }
        return out;
    }

    std::size_t pending_count() const { return entries_.size(); }

private:
    struct Entry {
        RawMessage raw;
        int delivery_step = 0;
        std::uint64_t seq = 0;
    };

    void require_registered(int agent_id) const {
        if (!registered_.count(agent_id))
            throw std::invalid_argument("agent not registered on channel: " +
                                        std::to_string(agent_id));
    }

    std::set<int> registered_;
    std::map<int, FeedbackResponder> responders_;
    std::vector<Entry> entries_;
    std::map<int, std::set<std::uint64_t>> consumed_;
    std::uint64_t next_seq_ = 0;
};

// ---------------------------------------------------------------------------
// Join handshake
// ---------------------------------------------------------------------------

struct TeammateSnapshot {
    AgentProfile profile;
    bool active = false;
    std::string current_subtask;
    std::string dialect = kHeuristicDialect;
};

// The arriving agent announces its capabilities; every active teammate
// reflects its own profile and what it is doing. All of it lands in inboxes
// at the next step. Returns the reflect messages for inspection.
inline std::vector<Message> handshake_on_join(Channel& channel, const AgentProfile& adhoc,
                                              int t, const std::vector<TeammateSnapshot>& team,
                                              const std::string& adhoc_dialect = kCanonicalDialect) {
    Message announce;
    announce.sender = adhoc.agent_id;
    announce.t_sent = t;
    announce.payload = CapabilityAnnounce{adhoc};
    channel.broadcast(announce, adhoc_dialect);

    std::vector<Message> reflects;
    for (const auto& mate : team) {
        if (!mate.active) continue;
        Message m;
        m.sender = mate.profile.agent_id;
        m.t_sent = t;
        m.payload = CapabilityReflect{mate.profile, mate.current_subtask};
        channel.broadcast(m, mate.dialect);
        reflects.push_back(m);
    }
    return reflects;
}

} // namespace adhoc::comms
