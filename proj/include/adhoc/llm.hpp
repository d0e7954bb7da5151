#pragma once

// Chat-completion client and the language-model reasoner built on it. The
// transport is abstracted so tests can swap in mocks; the real transport
// speaks the common messages/temperature/max_tokens JSON schema over HTTP.
// Malformed replies are retried once with a format reminder appended; a call
// that still cannot be understood surfaces as a ReasonerFailure, which the
// sub-task loop turns into a rule-reasoner fallback.

#include "adhoc/planner.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace adhoc::llm {

struct ChatMessage {
    std::string role; // "system", "user", "assistant"
    std::string content;
};

struct ChatOptions {
    std::string url = "http://127.0.0.1:8089";
    std::string model = "local";
    double temperature = 0.3;
    int max_tokens = 1024;
    int retry_max = 1;        // extra attempts after a malformed or failed reply
    int token_budget = 128000; // prompt budget, oldest history evicted first
    std::string api_key;      // falls back to ADHOC_LLM_API_KEY
    std::string log_dir;      // per-call prompt/reply dumps when nonempty

    static ChatOptions from_env(ChatOptions base) {
        if (base.api_key.empty())
            if (const char* key = std::getenv("ADHOC_LLM_API_KEY")) base.api_key = key;
        return base;
    }
    static ChatOptions from_env() { return from_env(ChatOptions{}); }
};

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

class ChatTransport {
public:
    struct Result {
        int status = 0;
        std::string body;
        std::string error; // nonempty when the request never completed
    };

    virtual ~ChatTransport() = default;
    virtual Result complete(const nlohmann::json& request) = 0;
};

inline constexpr const char* kChatCompletionsPath = "/v1/chat/completions";

class HttpChatTransport : public ChatTransport {
public:
    explicit HttpChatTransport(std::string base_url, std::string api_key = {})
        : base_url_(std::move(base_url)), api_key_(std::move(api_key)) {}

    Result complete(const nlohmann::json& request) override {
        httplib::Client client(base_url_);
        client.set_connection_timeout(10);
        client.set_read_timeout(120);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.insert({"Authorization", "Bearer " + api_key_});
        auto res = client.Post(kChatCompletionsPath, headers, request.dump(),
                               "application/json");
        if (!res) return {0, "", httplib::to_string(res.error())};
        return {res->status, res->body, ""};
    }

private:
    std::string base_url_;
    std::string api_key_;
};

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

class ChatClient {
public:
    ChatClient(ChatOptions options, std::shared_ptr<ChatTransport> transport)
        : options_(std::move(options)), transport_(std::move(transport)) {
        if (!transport_)
            transport_ = std::make_shared<HttpChatTransport>(options_.url, options_.api_key);
    }

    explicit ChatClient(ChatOptions options)
        : ChatClient(std::move(options), nullptr) {}

    const ChatOptions& options() const { return options_; }

    // One round trip. Auth problems fail immediately; transport hiccups are
    // retried within the configured budget.
    std::string complete(const std::vector<ChatMessage>& messages) {
        nlohmann::json request = {{"model", options_.model},
                                  {"temperature", options_.temperature},
                                  {"max_tokens", options_.max_tokens}};
        auto arr = nlohmann::json::array();
        for (const auto& m : messages) arr.push_back({{"role", m.role}, {"content", m.content}});
        request["messages"] = arr;

        std::string last_error;
        for (int attempt = 0; attempt <= options_.retry_max; ++attempt) {
            const auto res = transport_->complete(request);
            if (!res.error.empty()) {
                last_error = "transport: " + res.error;
                continue;
            }
            if (res.status == 401 || res.status == 403)
                throw planner::ReasonerFailure(planner::ReasonerFailure::Kind::auth,
                                               "endpoint rejected credentials (status " +
                                                   std::to_string(res.status) + ")");
            if (res.status != 200) {
                last_error = "status " + std::to_string(res.status);
                continue;
            }
            const auto body = nlohmann::json::parse(res.body, nullptr, false);
            if (body.is_discarded() || !body.contains("choices") || body["choices"].empty() ||
                !body["choices"][0].contains("message")) {
                last_error = "response body not in chat-completion shape";
                continue;
            }
            return body["choices"][0]["message"].value("content", "");
        }
        throw planner::ReasonerFailure(planner::ReasonerFailure::Kind::transport,
                                       "chat endpoint unusable: " + last_error);
    }

private:
    ChatOptions options_;
    std::shared_ptr<ChatTransport> transport_;
};

// ---------------------------------------------------------------------------
// Language-model reasoner
// ---------------------------------------------------------------------------

enum class PromptStyle {
    bare, // no in-context examples, no reasoning scaffold
    full
};

class LlmReasoner : public planner::Reasoner {
public:
    LlmReasoner(ChatClient client, PromptStyle style = PromptStyle::full)
        : client_(std::move(client)), style_(style) {}

    std::string name() const override { return "llm"; }

    std::vector<planner::Proposal> propose(const planner::PlannerContext& ctx, int n) override {
        planner::PromptExtras extras = base_extras();
        extras.n_candidates = n;
        const auto bundle = planner::build_prompt(planner::PromptStage::generation, ctx, extras);
        std::vector<planner::Proposal> out;
        ask_until_parsed(bundle, "generation",
                         "Finish with up to " + std::to_string(n) +
                             " lines of the form 'Plan: <sub-task literal>'.",
                         [&](const std::string& reply) {
                             out.clear();
                             for (const auto& line : planner::tagged_lines(reply, "Plan:")) {
                                 const auto st = planner::parse_subtask(line);
                                 if (!st) return false; // any bad literal voids the reply
                                 out.push_back({*st, ""});
                             }
                             return !out.empty();
                         });
        return out;
    }

    std::vector<planner::Proposal> rank(const planner::PlannerContext& ctx,
                                        const std::vector<planner::Proposal>& candidates)
        override {
        planner::PromptExtras extras = base_extras();
        extras.candidates = candidates;
        const auto bundle = planner::build_prompt(planner::PromptStage::evaluation, ctx, extras);
        std::vector<planner::Proposal> out;
        ask_until_parsed(bundle, "evaluation",
                         "Finish with one line 'Rank: i,j,...' listing every candidate index "
                         "exactly once.",
                         [&](const std::string& reply) {
                             const auto order = planner::parse_rank_reply(
                                 reply, static_cast<int>(candidates.size()));
                             if (!order) return false;
                             out.clear();
                             for (int idx : *order) out.push_back(candidates[idx]);
                             return true;
                         });
        return out;
    }

    planner::Verdict judge(const planner::PlannerContext& ctx, const planner::SubTask& subtask,
                           const std::vector<comms::Fact>& feedback) override {
        planner::PromptExtras extras = base_extras();
        extras.chosen = subtask;
        extras.feedback = feedback;
        const auto bundle = planner::build_prompt(planner::PromptStage::rejudging, ctx, extras);
        planner::Verdict verdict;
        ask_until_parsed(bundle, "rejudging",
                         "Finish with 'Verdict: reasonable' or 'Verdict: infeasible(<reason>)'.",
                         [&](const std::string& reply) {
                             const auto v = planner::parse_verdict_reply(reply);
                             if (!v) return false;
                             verdict = *v;
                             return true;
                         });
        return verdict;
    }

    planner::SubSkillPlan plan_subskill(const planner::PlannerContext& ctx,
                                        const planner::SubTask& subtask) override {
        planner::PromptExtras extras = base_extras();
        extras.subtask = subtask;
        const auto bundle = planner::build_prompt(planner::PromptStage::subskill, ctx, extras);
        planner::SubSkillPlan plan;
        ask_until_parsed(bundle, "subskill",
                         "Finish with one line 'Plan: <sub-skill literal>'.",
                         [&](const std::string& reply) {
                             const auto lines = planner::tagged_lines(reply, "Plan:");
                             if (lines.empty()) return false;
                             const auto sk = planner::parse_subskill(lines.back());
                             if (!sk) return false;
                             plan = {*sk, ""};
                             return true;
                         });
        return plan;
    }

private:
    planner::PromptExtras base_extras() const {
        planner::PromptExtras extras;
        extras.include_examples = style_ == PromptStyle::full;
        extras.token_budget = client_.options().token_budget;
        return extras;
    }

    // Sends the rendered bundle; on a reply the parser rejects, appends the
    // exchange plus a format reminder and tries again. Parse failures beyond
    // the retry budget escalate.
    void ask_until_parsed(const planner::PromptBundle& bundle, const std::string& stage,
                          const std::string& reminder,
                          const std::function<bool(const std::string&)>& try_parse) {
        std::vector<ChatMessage> messages{{"user", bundle.render()}};
        const int retries = client_.options().retry_max;
        for (int attempt = 0; attempt <= retries; ++attempt) {
            const std::string reply = client_.complete(messages);
            log_call(stage, messages.back().content, reply);
            if (try_parse(reply)) return;
            messages.push_back({"assistant", reply});
            messages.push_back(
                {"user", "Your reply did not follow the required format. " + reminder});
        }
        throw planner::ReasonerFailure(planner::ReasonerFailure::Kind::parse,
                                       stage + " reply unparseable after retries");
    }

    void log_call(const std::string& stage, const std::string& prompt,
                  const std::string& reply) {
        const std::string& dir = client_.options().log_dir;
        if (dir.empty()) return;
        std::filesystem::create_directories(dir);
        char name[64];
        std::snprintf(name, sizeof(name), "call_%04d_%s.txt", call_counter_++, stage.c_str());
        std::ofstream out(std::filesystem::path(dir) / name);
        out << prompt << "\n=== reply ===\n" << reply << "\n";
    }

    ChatClient client_;
    PromptStyle style_;
    int call_counter_ = 0;
};

// ---------------------------------------------------------------------------
// Scripted in-process chat server
// ---------------------------------------------------------------------------

// Minimal stand-in for a real endpoint: replies come from a FIFO script or a
// responder callback, and every request body is captured for inspection.
class ScriptedChatServer {
public:
    ScriptedChatServer() {
        server_.Post(kChatCompletionsPath,
                     [this](const httplib::Request& req, httplib::Response& res) {
                         handle(req, res);
                     });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~ScriptedChatServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    ScriptedChatServer(const ScriptedChatServer&) = delete;
    ScriptedChatServer& operator=(const ScriptedChatServer&) = delete;

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int port() const { return port_; }

    void enqueue(std::string reply) {
        std::lock_guard lock(mu_);
        script_.push_back(std::move(reply));
    }

    // Takes precedence over the FIFO script.
    void set_responder(std::function<std::string(const nlohmann::json& request)> responder) {
        std::lock_guard lock(mu_);
        responder_ = std::move(responder);
    }

    // Forces this HTTP status on subsequent requests (200 restores normality).
    void set_http_status(int status) {
        std::lock_guard lock(mu_);
        forced_status_ = status;
    }

    // Requires this bearer token when nonempty; mismatches get a 401.
    void require_api_key(std::string key) {
        std::lock_guard lock(mu_);
        required_key_ = std::move(key);
    }

    std::vector<nlohmann::json> requests() const {
        std::lock_guard lock(mu_);
        return requests_;
    }

    std::size_t request_count() const {
        std::lock_guard lock(mu_);
        return requests_.size();
    }

private:
    void handle(const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(mu_);
        auto body = nlohmann::json::parse(req.body, nullptr, false);
        requests_.push_back(body.is_discarded() ? nlohmann::json{} : body);

        if (!required_key_.empty()) {
            const auto auth = req.get_header_value("Authorization");
            if (auth != "Bearer " + required_key_) {
                res.status = 401;
                res.set_content(R"({"error":{"message":"invalid api key"}})",
                                "application/json");
                return;
            }
        }
        if (forced_status_ != 200) {
            res.status = forced_status_;
            res.set_content(R"({"error":{"message":"scripted failure"}})", "application/json");
            return;
        }

        std::string reply = "Plan: Stop";
        if (responder_) {
            reply = responder_(requests_.back());
        } else if (!script_.empty()) {
            reply = script_.front();
            script_.erase(script_.begin());
        }
        const nlohmann::json out = {
            {"id", "scripted"},
            {"object", "chat.completion"},
            {"choices",
             {{{"index", 0},
               {"message", {{"role", "assistant"}, {"content", reply}}},
               {"finish_reason", "stop"}}}}};
        res.set_content(out.dump(), "application/json");
    }

    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    mutable std::mutex mu_;
    std::vector<std::string> script_;
    std::function<std::string(const nlohmann::json&)> responder_;
    int forced_status_ = 200;
    std::string required_key_;
    std::vector<nlohmann::json> requests_;
};

} // namespace adhoc::llm
