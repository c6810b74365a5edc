#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "fetchplan/http_backend.hpp"
#include "fetchplan/llm.hpp"
#include "fetchplan/prompts.hpp"

#include "test_util.hpp"

using namespace fetchplan;

namespace {

struct RecordingBackend : llm::Backend {
    std::vector<llm::BackendRequest> requests;
    std::string reply_text = "ok";

    llm::BackendResponse complete(const llm::BackendRequest& request) override {
        requests.push_back(request);
        return {reply_text, llm::estimate_tokens(reply_text), 0.0};
    }
};

std::string inquiry_for(prompts::InquiryLabel label, const std::string& object) {
    prompts::Bindings b;
    b.object_name = object;
    b.position_list = {"dining_table", "counter_wagon"};
    b.room_name = "kitchen";
    b.furniture_list = {"cabinet_kitchen", "counter_wagon"};
    b.situation = "locations";
    return prompts::render_inquiry(label, b);
}

} // namespace

TEST_CASE("token budget follows the context formula", "[llm]") {
    CHECK(llm::compute_token_budget(4096, 448) == 1280);
    CHECK(llm::compute_token_budget(4096, 0) == 1638);
    CHECK(llm::compute_token_budget(4096, 1000) == 838);
    CHECK_THROWS_AS(llm::compute_token_budget(4096, 2048), llm::BudgetError);

    int previous = llm::compute_token_budget(4096, 0);
    for (int sys = 100; sys < 2048; sys += 100) {
        int budget = llm::compute_token_budget(4096, sys);
        CHECK(budget < previous);
        previous = budget;
    }
}

TEST_CASE("default token estimator is ceil(chars/4) and monotone", "[llm]") {
    CHECK(llm::estimate_tokens("") == 0);
    CHECK(llm::estimate_tokens("12345678") == 2);
    CHECK(llm::estimate_tokens("123456789") == 3);

    std::string a = "where is the apple";
    std::string b = " on the table?";
    CHECK(llm::estimate_tokens(a + b) >=
          std::max(llm::estimate_tokens(a), llm::estimate_tokens(b)));
}

TEST_CASE("append_and_trim evicts whole turns oldest first", "[llm]") {
    llm::DialogMemory memory;
    memory.budget = 10;
    memory.enabled = true;

    llm::append_and_trim(memory, {llm::Role::user, "a", 4});
    REQUIRE(memory.turns.size() == 1);
    llm::append_and_trim(memory, {llm::Role::assistant, "b", 4});
    llm::append_and_trim(memory, {llm::Role::user, "c", 4});

    REQUIRE(memory.turns.size() == 2);
    CHECK(memory.turns[0].text == "b");
    CHECK(memory.turns[1].text == "c");
    CHECK(memory.total_tokens() == 8);

    CHECK_THROWS_AS(llm::append_and_trim(memory, {llm::Role::user, "too big", 11}),
                    llm::OversizedTurnError);
}

TEST_CASE("memory never exceeds budget and evicts prefixes only", "[llm]") {
    std::mt19937 rng(7);
    llm::DialogMemory memory;
    memory.budget = 50;
    memory.enabled = true;

    std::vector<int> all_ids;
    int next_id = 0;
    for (int step = 0; step < 500; ++step) {
        int tokens = 1 + static_cast<int>(rng() % 50);
        llm::append_and_trim(memory, {llm::Role::user, std::to_string(next_id), tokens});
        all_ids.push_back(next_id);
        ++next_id;

        REQUIRE(memory.total_tokens() <= memory.budget);
        // the surviving turns must be exactly the most recent appends
        REQUIRE(memory.turns.size() <= all_ids.size());
        std::size_t offset = all_ids.size() - memory.turns.size();
        for (std::size_t i = 0; i < memory.turns.size(); ++i)
            REQUIRE(memory.turns[i].text == std::to_string(all_ids[offset + i]));
    }
}

TEST_CASE("generate includes history only when memory is enabled", "[llm]") {
    RecordingBackend backend;
    llm::GenerationParams params;

    llm::DialogMemory disabled;
    disabled.budget = 1000;
    disabled.enabled = false;
    llm::generate(backend, "sys", disabled, "first?", params);
    llm::generate(backend, "sys", disabled, "second?", params);
    REQUIRE(backend.requests.size() == 2);
    CHECK(backend.requests[1].turns.empty());
    CHECK(disabled.turns.empty());

    llm::DialogMemory enabled;
    enabled.budget = 1000;
    enabled.enabled = true;
    llm::generate(backend, "sys", enabled, "first?", params);
    REQUIRE(enabled.turns.size() == 2);
    CHECK(enabled.turns[0].role == llm::Role::user);
    CHECK(enabled.turns[0].text == "first?");
    CHECK(enabled.turns[1].role == llm::Role::assistant);

    llm::generate(backend, "sys", enabled, "second?", params);
    REQUIRE(backend.requests.size() == 4);
    REQUIRE(backend.requests[3].turns.size() == 2);
    CHECK(backend.requests[3].turns[0].text == "first?");
    CHECK(backend.requests[3].inquiry == "second?");
}

TEST_CASE("scripted backend matches by template label and object", "[llm]") {
    llm::Script script;
    script.add("general_pos", "apple", R"({"position_list": ["dining_table"]})");
    script.add("multiple_pos", "apple", R"({"position_list": ["counter_wagon"]})");
    script.add("furniture", "apple", R"({"position_list": ["cabinet_kitchen"]})");
    script.add("again", "apple", R"({"position_list": ["high_table"]})");
    script.add("general_pos", "", "wildcard");

    llm::ScriptedBackend backend(std::make_shared<const llm::Script>(script));
    llm::GenerationParams params;
    llm::DialogMemory memory;
    memory.budget = 1000;

    auto ask = [&](const std::string& inquiry) {
        return llm::generate(backend, "sys", memory, inquiry, params).text;
    };

    CHECK(ask(inquiry_for(prompts::InquiryLabel::general_pos, "apple")) ==
          R"({"position_list": ["dining_table"]})");
    CHECK(ask(inquiry_for(prompts::InquiryLabel::multiple_pos, "apple")) ==
          R"({"position_list": ["counter_wagon"]})");
    CHECK(ask(inquiry_for(prompts::InquiryLabel::furniture, "apple")) ==
          R"({"position_list": ["cabinet_kitchen"]})");

    // the again inquiry names no object; the session's last object applies
    CHECK(ask(inquiry_for(prompts::InquiryLabel::again, "apple")) ==
          R"({"position_list": ["high_table"]})");

    // unmatched object falls back to the wildcard entry for the same label
    CHECK(ask(inquiry_for(prompts::InquiryLabel::general_pos, "banana")) == "wildcard");

    // no entry at all yields the default response
    CHECK(ask(inquiry_for(prompts::InquiryLabel::multiple_pos, "banana")) ==
          llm::Script{}.default_response);

    REQUIRE(backend.asked().size() == 6);
    CHECK(backend.asked()[0].label == "general_pos");
    CHECK(backend.asked()[0].object == "apple");
    CHECK(backend.asked()[3].label == "again");
    CHECK(backend.asked()[3].object == "apple");
}

TEST_CASE("scripted backend reports configured synthetic latency", "[llm]") {
    llm::Script script;
    script.add("general_pos", "apple", "somewhere");
    llm::ScriptedBackend backend(std::make_shared<const llm::Script>(script), 0.25);

    llm::BackendRequest request;
    request.inquiry = inquiry_for(prompts::InquiryLabel::general_pos, "apple");
    auto response = backend.complete(request);
    CHECK(response.latency_s == 0.25);
    CHECK(response.text == "somewhere");
}

TEST_CASE("script file fixture parses", "[llm]") {
    auto script = llm::load_script_file(data_path("backend_script.json"));
    CHECK(script.default_response == "I am not sure about that.");
    REQUIRE_FALSE(script.entries.empty());
    CHECK(script.entries.front().match.label == "general_pos");
    CHECK(script.entries.front().match.object == "apple");
}

TEST_CASE("session measures its budget from the system prompt", "[llm]") {
    RecordingBackend backend;
    std::string system_prompt(400, 'x'); // 100 tokens under the default estimator
    llm::BackendSession session(backend, system_prompt, llm::GenerationParams{}, true);
    CHECK(session.memory().budget == llm::compute_token_budget(4096, 100));

    session.ask("where is the apple?");
    session.ask("and the mug?");
    CHECK(session.stats().calls == 2);
    CHECK(session.stats().generated_tokens == 2 * llm::estimate_tokens("ok"));
    REQUIRE(backend.requests.size() == 2);
    CHECK(backend.requests[1].turns.size() == 2); // memory enabled carries the exchange
}

TEST_CASE("session records llm_call events when a log is attached", "[llm]") {
    RecordingBackend backend;
    llm::BackendSession session(backend, "sys", llm::GenerationParams{}, false);
    EpisodeLog log;
    session.attach_log(&log);
    session.ask("where is the apple?");

    auto calls = log.of_type("llm_call");
    REQUIRE(calls.size() == 1);
    CHECK(calls[0]->payload.at("inquiry") == "where is the apple?");
    CHECK(calls[0]->payload.at("response") == "ok");
}

TEST_CASE("http backend speaks the wire protocol", "[llm]") {
    httplib::Server server;
    nlohmann::json seen;
    server.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
        seen = nlohmann::json::parse(req.body);
        nlohmann::json reply = {{"text", "try the kitchen"}, {"generated_tokens", 42}};
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    llm::HttpBackend backend("http://127.0.0.1:" + std::to_string(port));
    llm::BackendRequest request;
    request.system_prompt = "sys";
    request.turns = {{llm::Role::user, "earlier", 2}, {llm::Role::assistant, "answer", 2}};
    request.inquiry = "where is the apple?";
    request.params.temperature = 0.6;
    request.params.top_p = 0.9;

    auto response = backend.complete(request);
    CHECK(response.text == "try the kitchen");
    CHECK(response.generated_tokens == 42);
    CHECK(response.latency_s >= 0.0);

    REQUIRE(seen.contains("system"));
    CHECK(seen.at("system") == "sys");
    REQUIRE(seen.at("messages").size() == 3); // two history turns + the inquiry
    CHECK(seen.at("messages")[0].at("role") == "user");
    CHECK(seen.at("messages")[1].at("role") == "assistant");
    CHECK(seen.at("messages")[2].at("text") == "where is the apple?");
    CHECK(seen.at("max_gen_len") == 2048);
    CHECK(seen.at("temperature") == 0.6);
    CHECK(seen.at("top_p") == 0.9);

    server.stop();
    worker.join();
}

TEST_CASE("http backend distinguishes failure kinds", "[llm]") {
    httplib::Server server;
    server.Post("/fail", [](const httplib::Request&, httplib::Response& res) {
        res.status = 500;
        res.set_content("boom", "text/plain");
    });
    server.Post("/garbled", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("not json at all", "text/plain");
    });
    server.Post("/empty", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"text": ""})", "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    std::string base = "http://127.0.0.1:" + std::to_string(port);

    llm::BackendRequest request;
    request.inquiry = "where?";

    auto kind_of = [&](const std::string& path) {
        llm::HttpBackend backend(base + path);
        try {
            backend.complete(request);
        } catch (const llm::BackendError& e) {
            return e.kind();
        }
        throw std::logic_error("expected a backend error");
    };

    CHECK(kind_of("/fail") == llm::BackendError::Kind::transport);
    CHECK(kind_of("/garbled") == llm::BackendError::Kind::truncated);
    CHECK(kind_of("/empty") == llm::BackendError::Kind::truncated);

    server.stop();
    worker.join();

    // nothing listens here anymore: transport failure
    llm::HttpBackend dead(base, 2.0);
    try {
        dead.complete(request);
        FAIL("expected a backend error");
    } catch (const llm::BackendError& e) {
        CHECK(e.kind() == llm::BackendError::Kind::transport);
    }
}
