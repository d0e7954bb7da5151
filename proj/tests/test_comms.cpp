#include "adhoc/comms.hpp"

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <json.hpp>

namespace comms = adhoc::comms;
namespace perception = adhoc::perception;
using adhoc::world::AgentProfile;
using comms::Channel;
using comms::Fact;
using comms::Message;
using comms::RawMessage;
using nlohmann::json;
using testing::ElementsAre;
using testing::IsEmpty;

namespace {

AgentProfile sample_profile(int id) {
    AgentProfile p;
    p.agent_id = id;
    p.alpha_nav = true;
    p.alpha_manip = (id % 2) == 1;
    p.height = id % 2;
    p.payload_kg = 4.5 + id;
    p.battery_steps = 100 + id;
    p.start_position = {2, 3 + id};
    p.join_time = 0;
    return p;
}

perception::KeyDetection sample_detection() {
    perception::KeyDetection d;
    d.kind = perception::KeyDetection::Kind::misplaced_object;
    d.entity_id = "Knife_0";
    d.entity_type = "Knife";
    d.cell = {1, 5};
    d.receptacle_id = "Bed_0";
    d.room_id = 1;
    d.misplaced = true;
    d.candidate_for = {};
    return d;
}

std::vector<Message> all_payload_samples() {
    std::vector<Message> out;
    Message m;
    m.sender = 3;
    m.t_sent = 7;

    m.payload = comms::CapabilityAnnounce{sample_profile(3)};
    out.push_back(m);
    m.payload = comms::CapabilityReflect{sample_profile(3), "Explore(room_1)"};
    out.push_back(m);
    m.payload = sample_detection();
    out.push_back(m);
    m.payload = comms::SubTaskStatus{"RePlace(Knife_0, CounterTop, kitchen)",
                                     comms::ProgressStatus::started};
    out.push_back(m);
    m.payload = comms::SubSkillStatus{"GoToObject(Knife_0)", comms::ProgressStatus::finished};
    out.push_back(m);
    m.payload = comms::Intention{"Explore(room_0)"};
    out.push_back(m);
    comms::IntentionFeedback fb;
    fb.facts = {Fact::explored_room(0, 0.75),
                Fact::object_seen("Knife_0", {1, 5}, "Bed_0", 1, true),
                Fact::executing_subtask(2, "Explore(room_1)")};
    m.payload = fb;
    out.push_back(m);
    return out;
}

std::string canon(const Message& m) { return comms::message_to_json(m).dump(); }

} // namespace

TEST(CommsCodec, CanonicalRoundTripAllKinds) {
    for (const Message& m : all_payload_samples()) {
        const json j = comms::message_to_json(m);
        EXPECT_EQ(j.at("dialect"), "canonical_v1");
        EXPECT_EQ(j.at("sender"), 3);
        EXPECT_EQ(j.at("t"), 7);
        const Message back = comms::message_from_canonical_json(j);
        EXPECT_EQ(canon(back), j.dump()) << "kind " << comms::kind_name(m.payload);
    }
}

TEST(CommsCodec, HeuristicDialectRoundTripsThroughAdapt) {
    for (const Message& m : all_payload_samples()) {
        const RawMessage raw = comms::encode_message(m, comms::kHeuristicDialect);
        EXPECT_EQ(raw.body.at("dialect"), "heuristic_v1");
        EXPECT_EQ(raw.sender, m.sender);
        const auto adapted = comms::adapt(raw);
        ASSERT_TRUE(adapted.message.has_value()) << adapted.diagnostic;
        EXPECT_TRUE(adapted.diagnostic.empty());
        EXPECT_EQ(canon(*adapted.message), canon(m)) << "kind " << comms::kind_name(m.payload);
    }
}

TEST(CommsCodec, HeuristicDialectUsesItsOwnFieldNames) {
    Message m;
    m.sender = 1;
    m.t_sent = 4;
    m.payload = comms::SubTaskStatus{"Explore(room_2)", comms::ProgressStatus::switched};
    const RawMessage raw = comms::encode_message(m, comms::kHeuristicDialect);
    EXPECT_EQ(raw.body.at("typ"), "task");
    EXPECT_EQ(raw.body.at("frm"), 1);
    EXPECT_EQ(raw.body.at("sub"), "Explore(room_2)");
    EXPECT_EQ(raw.body.at("st"), "switched");
    EXPECT_FALSE(raw.body.contains("kind"));
}

TEST(CommsAdapt, CanonicalPassesThroughUnchanged) {
    const Message m = all_payload_samples()[2];
    const RawMessage raw = comms::encode_message(m, comms::kCanonicalDialect);
    const auto adapted = comms::adapt(raw);
    ASSERT_TRUE(adapted.message.has_value());
    EXPECT_EQ(canon(*adapted.message), raw.body.dump());
}

TEST(CommsAdapt, UnregisteredDialectSkippedWithDiagnostic) {
    RawMessage raw;
    raw.dialect = "binary_v9";
    raw.body = {{"dialect", "binary_v9"}, {"blob", "001100"}};
    raw.sender = 2;
    const auto adapted = comms::adapt(raw);
    EXPECT_FALSE(adapted.message.has_value());
    EXPECT_THAT(adapted.diagnostic, testing::HasSubstr("binary_v9"));
}

TEST(CommsAdapt, CorruptPayloadSkippedWithDiagnostic) {
    Message m;
    m.sender = 2;
    m.t_sent = 9;
    m.payload = comms::Intention{"Explore(room_0)"};
    RawMessage raw = comms::encode_message(m, comms::kHeuristicDialect);
    raw.body.erase("sub");
    const auto adapted = comms::adapt(raw);
    EXPECT_FALSE(adapted.message.has_value());
    EXPECT_THAT(adapted.diagnostic, testing::HasSubstr("heuristic_v1"));

    RawMessage canonical = comms::encode_message(m, comms::kCanonicalDialect);
    canonical.body["kind"] = "Telepathy";
    const auto adapted2 = comms::adapt(canonical);
    EXPECT_FALSE(adapted2.message.has_value());
    EXPECT_FALSE(adapted2.diagnostic.empty());
}

TEST(CommsCodec, UnknownDialectThrowsOnEncode) {
    Message m;
    m.sender = 1;
    m.payload = comms::Intention{"Stop"};
    EXPECT_THROW(comms::encode_message(m, "binary_v9"), std::invalid_argument);
}

namespace {

Channel three_agent_channel() {
    Channel ch;
    ch.register_agent(1);
    ch.register_agent(2);
    ch.register_agent(3);
    return ch;
}

Message intention_msg(int sender, int t, const std::string& subtask) {
    Message m;
    m.sender = sender;
    m.t_sent = t;
    m.payload = comms::Intention{subtask};
    return m;
}

} // namespace

TEST(CommsChannel, UnregisteredSenderRejected) {
    Channel ch = three_agent_channel();
    EXPECT_THROW(ch.broadcast(intention_msg(9, 0, "Stop"), comms::kCanonicalDialect),
                 std::invalid_argument);
    EXPECT_THROW(ch.collect(9, 0), std::invalid_argument);
}

TEST(CommsChannel, DeliveryStartsAtNextStep) {
    Channel ch = three_agent_channel();
    ch.broadcast(intention_msg(1, 5, "Explore(room_0)"), comms::kCanonicalDialect);
    EXPECT_THAT(ch.collect(2, 5), IsEmpty());
    const auto got = ch.collect(2, 6);
    ASSERT_EQ(got.size(), 1u);
    EXPECT_EQ(got[0].sender, 1);
    EXPECT_EQ(got[0].t_sent, 5);
}

TEST(CommsChannel, SenderNeverReceivesOwnBroadcast) {
    Channel ch = three_agent_channel();
    ch.broadcast(intention_msg(1, 0, "Explore(room_0)"), comms::kCanonicalDialect);
    EXPECT_THAT(ch.collect(1, 10), IsEmpty());
    EXPECT_EQ(ch.collect(2, 10).size(), 1u);
    EXPECT_EQ(ch.collect(3, 10).size(), 1u);
}

TEST(CommsChannel, CollectConsumesExactlyOnce) {
    Channel ch = three_agent_channel();
    ch.broadcast(intention_msg(1, 0, "Explore(room_0)"), comms::kCanonicalDialect);
    EXPECT_EQ(ch.collect(2, 1).size(), 1u);
    EXPECT_THAT(ch.collect(2, 1), IsEmpty());
    EXPECT_THAT(ch.collect(2, 99), IsEmpty());
    // Agent 3 has its own copy.
    EXPECT_EQ(ch.collect(3, 1).size(), 1u);
}

TEST(CommsChannel, OrderIsDeliveryStepThenSenderThenEmission) {
    Channel ch = three_agent_channel();
    // Emitted out of sender order within one step, plus an earlier straggler.
    ch.broadcast(intention_msg(3, 0, "early"), comms::kCanonicalDialect);
    ch.broadcast(intention_msg(2, 1, "b1"), comms::kCanonicalDialect);
    ch.broadcast(intention_msg(2, 1, "b2"), comms::kCanonicalDialect);
    ch.broadcast(intention_msg(3, 1, "c"), comms::kHeuristicDialect);

    const auto got = ch.collect(1, 2);
    ASSERT_EQ(got.size(), 4u);
    std::vector<std::string> subtasks;
    for (const auto& raw : got) {
        const auto adapted = comms::adapt(raw);
        ASSERT_TRUE(adapted.message.has_value()) << adapted.diagnostic;
        subtasks.push_back(std::get<comms::Intention>(adapted.message->payload).subtask);
    }
    EXPECT_THAT(subtasks, ElementsAre("early", "b1", "b2", "c"));
}

TEST(CommsChannel, LateCollectorGetsBacklog) {
    Channel ch = three_agent_channel();
    ch.broadcast(intention_msg(1, 2, "a"), comms::kCanonicalDialect);
    ch.broadcast(intention_msg(2, 40, "b"), comms::kCanonicalDialect);
    // Agent 3 first polls at t = 50; both old messages are still waiting.
    const auto got = ch.collect(3, 50);
    ASSERT_EQ(got.size(), 2u);
    EXPECT_EQ(got[0].sender, 1);
    EXPECT_EQ(got[1].sender, 2);
}

TEST(CommsChannel, HandshakeQueuesAnnounceAndReflects) {
    Channel ch = three_agent_channel();
    ch.register_agent(0);

    std::vector<comms::TeammateSnapshot> team;
    comms::TeammateSnapshot a;
    a.profile = sample_profile(1);
    a.active = true;
    a.current_subtask = "Explore(room_1)";
    team.push_back(a);
    comms::TeammateSnapshot b;
    b.profile = sample_profile(2);
    b.active = false; // stopped agents do not reflect
    team.push_back(b);
    comms::TeammateSnapshot c;
    c.profile = sample_profile(3);
    c.active = true;
    c.current_subtask = "RePlace(Knife_0, CounterTop, kitchen)";
    team.push_back(c);

    const AgentProfile adhoc = sample_profile(0);
    const auto reflects = comms::handshake_on_join(ch, adhoc, 50, team);
    ASSERT_EQ(reflects.size(), 2u);
    EXPECT_EQ(reflects[0].sender, 1);
    EXPECT_EQ(reflects[1].sender, 3);

    // Nothing is visible at the join step itself.
    EXPECT_THAT(ch.collect(0, 50), IsEmpty());

    // Next step the newcomer holds one reflect per active teammate.
    const auto inbox = ch.collect(0, 51);
    ASSERT_EQ(inbox.size(), 2u);
    for (const auto& raw : inbox) {
        EXPECT_EQ(raw.dialect, comms::kHeuristicDialect);
        const auto adapted = comms::adapt(raw);
        ASSERT_TRUE(adapted.message.has_value());
        const auto& reflect = std::get<comms::CapabilityReflect>(adapted.message->payload);
        EXPECT_EQ(reflect.profile.agent_id, adapted.message->sender);
        EXPECT_FALSE(reflect.current_subtask.empty());
    }

    // Teammates receive the announce (and each other's reflects).
    const auto mate_inbox = ch.collect(1, 51);
    ASSERT_EQ(mate_inbox.size(), 2u); // announce from 0, reflect from 3
    EXPECT_EQ(mate_inbox[0].sender, 0);
    const auto announce = comms::adapt(mate_inbox[0]);
    ASSERT_TRUE(announce.message.has_value());
    EXPECT_EQ(std::get<comms::CapabilityAnnounce>(announce.message->payload).profile.agent_id, 0);
}

TEST(CommsChannel, IntentionFeedbackIsSynchronousAndSkipsRequester) {
    Channel ch = three_agent_channel();
    ch.register_agent(0);

    std::vector<std::pair<int, std::string>> queries;
    ch.register_feedback_responder(1, [&](int requester, const std::string& subtask)
                                           -> std::optional<std::vector<Fact>> {
        queries.emplace_back(requester, subtask);
        return std::vector<Fact>{Fact::explored_room(0, 0.5)};
    });
    ch.register_feedback_responder(2, [&](int, const std::string&)
                                           -> std::optional<std::vector<Fact>> {
        return std::vector<Fact>{}; // knows nothing relevant, still answers
    });
    ch.register_feedback_responder(3, [&](int, const std::string&)
                                           -> std::optional<std::vector<Fact>> {
        return std::nullopt; // inactive, contributes nothing
    });
    ch.register_feedback_responder(0, [&](int, const std::string&)
                                           -> std::optional<std::vector<Fact>> {
        ADD_FAILURE() << "requester must not be queried";
        return std::nullopt;
    });

    const auto replies = ch.request_intention_feedback(0, "Explore(room_0)", 12);
    ASSERT_EQ(replies.size(), 2u);
    EXPECT_EQ(replies[0].sender, 1);
    EXPECT_EQ(replies[0].t_sent, 12);
    const auto& facts1 = std::get<comms::IntentionFeedback>(replies[0].payload).facts;
    ASSERT_EQ(facts1.size(), 1u);
    EXPECT_EQ(facts1[0].kind, Fact::Kind::explored_room);
    EXPECT_DOUBLE_EQ(facts1[0].completeness, 0.5);

    EXPECT_EQ(replies[1].sender, 2);
    EXPECT_THAT(std::get<comms::IntentionFeedback>(replies[1].payload).facts, IsEmpty());

    ASSERT_EQ(queries.size(), 1u);
    EXPECT_EQ(queries[0].first, 0);
    EXPECT_EQ(queries[0].second, "Explore(room_0)");

    // Zero-time: nothing was queued on the channel.
    EXPECT_EQ(ch.pending_count(), 0u);
    EXPECT_THAT(ch.collect(0, 99), IsEmpty());
}

TEST(CommsChannel, ResponderRegistrationRequiresChannelMembership) {
    Channel ch;
    EXPECT_THROW(ch.register_feedback_responder(
                     4, [](int, const std::string&) -> std::optional<std::vector<Fact>> {
                         return std::nullopt;
                     }),
                 std::invalid_argument);
}
