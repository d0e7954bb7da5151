#include "adhoc/llm.hpp"

#include "adhoc/engine.hpp"
#include "adhoc/perception.hpp"
#include "adhoc/planner.hpp"

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>

using namespace adhoc;
using llm::ChatClient;
using llm::ChatMessage;
using llm::ChatOptions;
using llm::ChatTransport;
using llm::LlmReasoner;
using llm::ScriptedChatServer;
using planner::PlannerContext;
using planner::ReasonerFailure;
using planner::SubSkill;
using planner::SubTask;
using world::AgentProfile;
using world::GridPos;
using world::RoomType;
using testing::Return;

namespace {

world::House two_room_house() {
    nlohmann::json j = {
        {"seed", 0},
        {"grid", {"###########", "#000#11111#", "#000#11111#", "#000D11111#",
                  "#000#11111#", "###########"}},
        {"rooms",
         {{{"room_id", 0}, {"room_type", "kitchen"}},
          {{"room_id", 1}, {"room_type", "bedroom"}}}},
        {"receptacles",
         {{{"receptacle_id", "CounterTop_0"}, {"receptacle_type", "CounterTop"},
           {"position", {1, 1}}, {"elevation", "low"}},
          {{"receptacle_id", "Bed_0"}, {"receptacle_type", "Bed"},
           {"position", {1, 5}}, {"elevation", "low"}}}},
        {"objects",
         {{{"object_id", "Knife_0"}, {"object_type", "Knife"}, {"mass_kg", 1.0},
           {"location", {{"on", "Bed_0"}}}}}}};
    return world::house_from_json(j);
}

// One agent, bedroom view, belief state ready for prompting.
struct Fixture {
    world::PlacementRules rules = world::default_placement_rules();
    std::unique_ptr<engine::Engine> eng;
    perception::SemanticMap map;
    perception::SceneGraph graph;

    Fixture() {
        world::Scenario sc;
        sc.house = two_room_house();
        world::Misplacement mp;
        mp.object_id = "Knife_0";
        mp.original_receptacle_id = "CounterTop_0";
        mp.placed_at = world::ObjectLocation::on("Bed_0");
        sc.misplacements.push_back(mp);
        AgentProfile mate;
        mate.agent_id = 1;
        mate.alpha_manip = true;
        mate.payload_kg = 8.0;
        mate.battery_steps = 100;
        mate.start_position = {2, 2};
        sc.team.push_back(mate);
        eng = std::make_unique<engine::Engine>(sc);

        AgentProfile me;
        me.agent_id = 0;
        me.alpha_manip = true;
        me.height = 1;
        me.payload_kg = 10.0;
        me.battery_steps = 120;
        me.start_position = {2, 7};
        eng->join_agent(me);
        map = perception::SemanticMap(0, sc.house.rows, sc.house.cols);
        perception::update(map, graph, eng->observe(0), rules);
    }

    PlannerContext ctx() const {
        PlannerContext c;
        const auto& a = eng->agent(0);
        c.self = a.profile;
        c.position = a.position;
        c.holding = a.holding;
        c.battery_remaining = a.battery_remaining;
        c.t = eng->t();
        c.map = &map;
        c.graph = &graph;
        c.rules = &rules;
        return c;
    }
};

ChatClient client_for(const ScriptedChatServer& server, ChatOptions opt = {}) {
    opt.url = server.url();
    return ChatClient(opt);
}

class MockTransport : public ChatTransport {
public:
    MOCK_METHOD(Result, complete, (const nlohmann::json&), (override));
};

} // namespace

// ---------------------------------------------------------------------------
// Client plumbing
// ---------------------------------------------------------------------------

TEST(ChatClientTest, SendsSchemaAndReadsContent) {
    ScriptedChatServer server;
    server.enqueue("Plan: Explore(room_3)");
    ChatOptions opt;
    opt.model = "test-model";
    opt.temperature = 0.3;
    ChatClient client = client_for(server, opt);
    const std::string reply = client.complete({{"user", "hello"}});
    EXPECT_EQ(reply, "Plan: Explore(room_3)");

    const auto reqs = server.requests();
    ASSERT_EQ(reqs.size(), 1u);
    EXPECT_EQ(reqs[0].at("model"), "test-model");
    EXPECT_DOUBLE_EQ(reqs[0].at("temperature").get<double>(), 0.3);
    EXPECT_TRUE(reqs[0].contains("max_tokens"));
    ASSERT_EQ(reqs[0].at("messages").size(), 1u);
    EXPECT_EQ(reqs[0].at("messages")[0].at("role"), "user");
    EXPECT_EQ(reqs[0].at("messages")[0].at("content"), "hello");
}

TEST(ChatClientTest, DeadEndpointFailsAsTransport) {
    ChatOptions opt;
    opt.url = "http://127.0.0.1:1"; // nothing listens here
    opt.retry_max = 1;
    ChatClient client(opt);
    try {
        client.complete({{"user", "hi"}});
        FAIL() << "expected transport failure";
    } catch (const ReasonerFailure& f) {
        EXPECT_EQ(f.kind(), ReasonerFailure::Kind::transport);
    }
}

TEST(ChatClientTest, ServerErrorsRetriedThenFail) {
    ScriptedChatServer server;
    server.set_http_status(500);
    ChatOptions opt;
    opt.retry_max = 2;
    ChatClient client = client_for(server, opt);
    EXPECT_THROW(client.complete({{"user", "hi"}}), ReasonerFailure);
    EXPECT_EQ(server.request_count(), 3u); // initial try plus two retries
}

TEST(ChatClientTest, AuthRejectionFailsImmediately) {
    ScriptedChatServer server;
    server.require_api_key("sekret");
    ChatOptions opt;
    opt.retry_max = 3;
    ChatClient bad = client_for(server, opt);
    try {
        bad.complete({{"user", "hi"}});
        FAIL() << "expected auth failure";
    } catch (const ReasonerFailure& f) {
        EXPECT_EQ(f.kind(), ReasonerFailure::Kind::auth);
    }
    EXPECT_EQ(server.request_count(), 1u); // no point retrying bad credentials

    opt.api_key = "sekret";
    server.enqueue("ok");
    ChatClient good = client_for(server, opt);
    EXPECT_EQ(good.complete({{"user", "hi"}}), "ok");
}

TEST(ChatClientTest, ApiKeyReadFromEnvironment) {
    ::setenv("ADHOC_LLM_API_KEY", "env-key", 1);
    const ChatOptions opt = ChatOptions::from_env();
    EXPECT_EQ(opt.api_key, "env-key");
    ::unsetenv("ADHOC_LLM_API_KEY");
    ChatOptions preset;
    preset.api_key = "explicit";
    EXPECT_EQ(ChatOptions::from_env(preset).api_key, "explicit");
}

TEST(ChatClientTest, MalformedBodyRetriedViaTransportMock) {
    auto transport = std::make_shared<MockTransport>();
    EXPECT_CALL(*transport, complete(testing::_))
        .WillOnce(Return(ChatTransport::Result{200, "not json at all", ""}))
        .WillOnce(Return(ChatTransport::Result{
            200, R"({"choices":[{"message":{"role":"assistant","content":"fine"}}]})", ""}));
    ChatOptions opt;
    opt.retry_max = 1;
    ChatClient client(opt, transport);
    EXPECT_EQ(client.complete({{"user", "hi"}}), "fine");
}

// ---------------------------------------------------------------------------
// Reasoner over the scripted server
// ---------------------------------------------------------------------------

TEST(LlmReasonerTest, ProposeParsesPlanLines) {
    Fixture fx;
    ScriptedChatServer server;
    server.enqueue("The knife is out of place, and the kitchen is unexplored.\n"
                   "Plan: RePlace(Knife_0, CounterTop, kitchen)\n"
                   "Plan: Explore(room_0)");
    LlmReasoner reasoner(client_for(server));
    const auto proposals = reasoner.propose(fx.ctx(), 3);
    ASSERT_EQ(proposals.size(), 2u);
    EXPECT_EQ(proposals[0].subtask,
              SubTask::replace("Knife_0", "CounterTop", RoomType::kitchen));
    EXPECT_EQ(proposals[1].subtask, SubTask::explore(0));
}

TEST(LlmReasonerTest, MalformedReplyGetsReminderThenSucceeds) {
    Fixture fx;
    ScriptedChatServer server;
    server.enqueue("I would simply tidy the house.");     // no Plan line
    server.enqueue("Plan: Explore(room_1)");
    LlmReasoner reasoner(client_for(server));
    const auto proposals = reasoner.propose(fx.ctx(), 2);
    ASSERT_EQ(proposals.size(), 1u);
    EXPECT_EQ(proposals[0].subtask, SubTask::explore(1));

    const auto reqs = server.requests();
    ASSERT_EQ(reqs.size(), 2u);
    // The retry carries the failed exchange plus a format reminder.
    ASSERT_EQ(reqs[1].at("messages").size(), 3u);
    EXPECT_EQ(reqs[1].at("messages")[1].at("role"), "assistant");
    EXPECT_NE(reqs[1].at("messages")[2].at("content").get<std::string>().find(
                  "did not follow the required format"),
              std::string::npos);
}

TEST(LlmReasonerTest, UnparseableAfterRetriesEscalates) {
    Fixture fx;
    ScriptedChatServer server;
    server.enqueue("nonsense");
    server.enqueue("Plan: FlyToTheMoon(now)");
    LlmReasoner reasoner(client_for(server));
    try {
        reasoner.propose(fx.ctx(), 2);
        FAIL() << "expected parse failure";
    } catch (const ReasonerFailure& f) {
        EXPECT_EQ(f.kind(), ReasonerFailure::Kind::parse);
    }
    EXPECT_EQ(server.request_count(), 2u);
}

TEST(LlmReasonerTest, RankAndJudgeAndSubskill) {
    Fixture fx;
    ScriptedChatServer server;
    LlmReasoner reasoner(client_for(server));
    const std::vector<planner::Proposal> candidates = {
        {SubTask::replace("Knife_0", "CounterTop", RoomType::kitchen), ""},
        {SubTask::explore(0), ""},
        {SubTask::explore(1), ""}};

    server.enqueue("The second is closest to my position.\nRank: 2,1,3");
    const auto ranked = reasoner.rank(fx.ctx(), candidates);
    ASSERT_EQ(ranked.size(), 3u);
    EXPECT_EQ(ranked[0].subtask, SubTask::explore(0));
    EXPECT_EQ(ranked[1].subtask, candidates[0].subtask);

    server.enqueue("Someone is on it already.\nVerdict: infeasible(agent 1 took it)");
    const auto verdict = reasoner.judge(fx.ctx(), candidates[0].subtask, {});
    EXPECT_FALSE(verdict.reasonable);
    EXPECT_EQ(verdict.reason, "agent 1 took it");

    server.enqueue("Walk over first.\nPlan: GoToObject(Knife_0)");
    const auto plan = reasoner.plan_subskill(fx.ctx(), candidates[0].subtask);
    EXPECT_EQ(plan.skill, SubSkill::go_to_object("Knife_0"));
}

TEST(LlmReasonerTest, BareStyleOmitsExamples) {
    Fixture fx;
    ScriptedChatServer server;
    server.enqueue("Plan: Stop");
    server.enqueue("Plan: Stop");
    LlmReasoner bare(client_for(server), llm::PromptStyle::bare);
    bare.propose(fx.ctx(), 1);
    LlmReasoner full(client_for(server), llm::PromptStyle::full);
    full.propose(fx.ctx(), 1);

    const auto reqs = server.requests();
    ASSERT_EQ(reqs.size(), 2u);
    const auto prompt_of = [&](int i) {
        return reqs[i].at("messages")[0].at("content").get<std::string>();
    };
    EXPECT_EQ(prompt_of(0).find("in_context_examples"), std::string::npos);
    EXPECT_NE(prompt_of(1).find("in_context_examples"), std::string::npos);
}

TEST(LlmReasonerTest, TokenBudgetTrimsOldHistory) {
    Fixture fx;
    PlannerContext ctx = fx.ctx();
    for (int i = 0; i < 300; ++i)
        ctx.memory.push_back("[t=" + std::to_string(i) +
                             "] agent 1: filler chatter with plenty of padding");

    ScriptedChatServer server;
    server.enqueue("Plan: Stop");
    ChatOptions opt;
    opt.token_budget = 1200;
    LlmReasoner reasoner(client_for(server, opt));
    reasoner.propose(ctx, 1);

    const auto reqs = server.requests();
    const std::string prompt = reqs[0].at("messages")[0].at("content").get<std::string>();
    EXPECT_LE(planner::approx_tokens(prompt), 1200);
    EXPECT_EQ(prompt.find("[t=0]"), std::string::npos);
    EXPECT_NE(prompt.find("[t=299]"), std::string::npos);
}

TEST(LlmReasonerTest, CallsLoggedWhenDirectoryConfigured) {
    Fixture fx;
    ScriptedChatServer server;
    server.enqueue("Plan: Explore(room_1)");
    const auto dir = std::filesystem::temp_directory_path() / "adhoc_llm_log_test";
    std::filesystem::remove_all(dir);
    ChatOptions opt;
    opt.log_dir = dir.string();
    LlmReasoner reasoner(client_for(server, opt));
    reasoner.propose(fx.ctx(), 1);

    const auto file = dir / "call_0000_generation.txt";
    ASSERT_TRUE(std::filesystem::exists(file));
    std::ifstream in(file);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    EXPECT_NE(text.find("## task_description"), std::string::npos);
    EXPECT_NE(text.find("=== reply ==="), std::string::npos);
    EXPECT_NE(text.find("Plan: Explore(room_1)"), std::string::npos);
    std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Scripted end-to-end selection
// ---------------------------------------------------------------------------

TEST(LlmReasonerTest, ScriptedDeliberationMatchesScript) {
    Fixture fx;
    ScriptedChatServer server;
    // Generation, ranking, first judgement rejects, second accepts.
    server.enqueue("Plan: RePlace(Knife_0, CounterTop, kitchen)\n"
                   "Plan: Explore(room_0)\n"
                   "Plan: Explore(room_1)");
    server.enqueue("Rank: 2,1,3");
    server.enqueue("Verdict: infeasible(too far for now)");
    server.enqueue("Verdict: reasonable");

    LlmReasoner reasoner(client_for(server));
    planner::RuleReasoner fallback;
    const auto result = planner::plan_subtask_irot(fx.ctx(), reasoner, &fallback);
    EXPECT_EQ(result.subtask,
              SubTask::replace("Knife_0", "CounterTop", RoomType::kitchen));
    EXPECT_FALSE(result.trace.fell_back);
    ASSERT_EQ(result.trace.rounds.size(), 1u);
    ASSERT_EQ(result.trace.rounds[0].judgements.size(), 2u);
    EXPECT_FALSE(result.trace.rounds[0].judgements[0].verdict.reasonable);
    EXPECT_EQ(server.request_count(), 4u);
}

TEST(LlmReasonerTest, DeadEndpointFallsBackToRules) {
    Fixture fx;
    ChatOptions opt;
    opt.url = "http://127.0.0.1:1";
    opt.retry_max = 0;
    LlmReasoner primary((ChatClient(opt)));
    planner::RuleReasoner fallback;
    const auto result = planner::plan_subtask_irot(fx.ctx(), primary, &fallback);
    EXPECT_TRUE(result.trace.fell_back);
    EXPECT_EQ(result.trace.reasoner_name, "rule");
    // The rule reasoner still reaches a sound decision.
    EXPECT_EQ(result.subtask,
              SubTask::replace("Knife_0", "CounterTop", RoomType::kitchen));
}
