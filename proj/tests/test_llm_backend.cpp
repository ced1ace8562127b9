// SPDX-License-Identifier: Apache-2.0
#include "jointkb/errors.hpp"
#include "jointkb/llm_backend.hpp"
#include "test_support.hpp"

#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <thread>

using namespace jointkb;
using namespace jointkb::testing;

namespace
{

/// Loopback chat-completions server; `reply` decides status and content per request.
class StubServer
{
  public:
    explicit StubServer(std::function<std::pair<int, std::string>(const nlohmann::json&)> reply)
        : _reply(std::move(reply))
    {
        _server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            ++requests;
            last_authorization = req.get_header_value("Authorization");
            auto const [status, content] = _reply(nlohmann::json::parse(req.body));
            res.status = status;
            nlohmann::json body { { "choices", { { { "message", { { "role", "assistant" }, { "content", content } } } } } } };
            res.set_content(body.dump(), "application/json");
        });
        _port = _server.bind_to_any_port("127.0.0.1");
        _thread = std::thread([this] { _server.listen_after_bind(); });
        _server.wait_until_ready();
    }

    ~StubServer()
    {
        _server.stop();
        _thread.join();
    }

    [[nodiscard]] std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(_port) + "/v1"; }

    std::atomic<int> requests { 0 };
    std::string last_authorization;

  private:
    std::function<std::pair<int, std::string>(const nlohmann::json&)> _reply;
    httplib::Server _server;
    int _port = 0;
    std::thread _thread;
};

LiveBackendConfig stub_config(const StubServer& server)
{
    LiveBackendConfig c;
    c.endpoint = server.endpoint();
    c.api_key = "test-key";
    c.initial_backoff = std::chrono::milliseconds(1);
    c.timeout = std::chrono::milliseconds(5000);
    return c;
}

ChatRequest cot_request(const std::string& question)
{
    return make_request(TemplateId::cot, { { "question", question } });
}

} // namespace

TEST_SUITE("llm_backend")
{
    TEST_CASE("every template name round-trips and has a query block")
    {
        for (auto id: { TemplateId::agent_train, TemplateId::agent_infer, TemplateId::entity_select,
                        TemplateId::relation_select, TemplateId::triple_generate, TemplateId::triple_modify,
                        TemplateId::path_select, TemplateId::cot })
        {
            CHECK(template_from_string(to_string(id)) == id);
            auto const& t = prompt_template(id);
            CHECK(!t.instruction.empty());
            CHECK(!t.query.empty());
        }
        CHECK_THROWS_AS((void)template_from_string("nope"), ArgumentError);
    }

    TEST_CASE("relation selection asks for the configured count")
    {
        auto const text = render(TemplateId::relation_select,
                                 { { "count", "3" },
                                   { "thought", "I need Woodrow Wilson's schools." },
                                   { "entity", "Woodrow Wilson" },
                                   { "relations", "educated at, employer" } });
        CHECK(text.find("Please select 3 relations") != std::string::npos);
        CHECK(text.find("Entity Name: Woodrow Wilson") != std::string::npos);
    }

    TEST_CASE("generation prompt carries the Hint line")
    {
        auto const text = render(TemplateId::triple_generate,
                                 { { "question", "q" }, { "hint_line", "Hint: a | b\n" }, { "known_triples", "" } });
        CHECK(text.find("Hint: a | b") != std::string::npos);
    }

    TEST_CASE("unbound slots are render errors naming the slot")
    {
        try
        {
            (void)render(TemplateId::cot, {});
            FAIL("expected RenderError");
        }
        catch (const RenderError& e)
        {
            CHECK(std::string(e.what()).find("question") != std::string::npos);
        }
    }

    TEST_CASE("substitution is single pass")
    {
        auto const t = parse_template("t", "### instruction\nSay {{a}}.\n### query\n{{b}}");
        CHECK(t.slots() == std::set<std::string> { "a", "b" });
        CHECK(render(t, { { "a", "{{b}}" }, { "b", "x" } }) == "Say {{b}}.\n\nx");
    }

    TEST_CASE("scripted backend replays in order then runs dry")
    {
        ScriptedBackend llm(ScriptedBackend::parse_script(R"({"response": "one"}
{"template": "cot", "match": "Question:   second", "response": "two"}
{"response": "three"}
)"));
        CHECK(llm.chat(cot_request("first")) == "one");
        CHECK(llm.chat(cot_request("second")) == "two");
        CHECK(llm.chat(cot_request("third")) == "three");
        CHECK(llm.remaining() == 0);
        CHECK_THROWS_AS((void)llm.chat(cot_request("fourth")), ScriptError);
    }

    TEST_CASE("scripted backend rejects a mismatched request")
    {
        ScriptedBackend wrong_text(ScriptedBackend::parse_script(R"({"match": "Woodrow", "response": "x"})"));
        CHECK_THROWS_AS((void)wrong_text.chat(cot_request("Shakespeare")), ScriptError);
        ScriptedBackend wrong_template(ScriptedBackend::parse_script(R"({"template": "path_select", "response": "x"})"));
        CHECK_THROWS_AS((void)wrong_template.chat(cot_request("q")), ScriptError);
        CHECK_THROWS_AS((void)ScriptedBackend::parse_script("{not json"), LoadError);
    }

    TEST_CASE("live backend returns the stub's content")
    {
        nlohmann::json seen;
        StubServer server([&](const nlohmann::json& body) {
            seen = body;
            return std::pair { 200, std::string("Answer: Paris") };
        });
        LiveBackend llm(stub_config(server));
        CHECK(llm.chat(cot_request("capital of france?")) == "Answer: Paris");
        CHECK(server.last_authorization == "Bearer test-key");
        CHECK(seen.at("model") == "gpt-4o-mini");
        CHECK(seen.at("temperature").get<double>() == 0.7);
        CHECK(seen.at("max_tokens").get<int>() == 256);
        CHECK(seen.at("messages").at(0).at("content").get<std::string>().find("capital of france?")
              != std::string::npos);
    }

    TEST_CASE("live backend retries server errors and rate limits")
    {
        std::atomic<int> calls { 0 };
        StubServer server([&](const nlohmann::json&) {
            int const n = ++calls;
            if (n == 1)
                return std::pair { 503, std::string() };
            if (n == 2)
                return std::pair { 429, std::string() };
            return std::pair { 200, std::string("ok") };
        });
        LiveBackend llm(stub_config(server));
        CHECK(llm.chat(cot_request("q")) == "ok");
        CHECK(calls == 3);
    }

    TEST_CASE("live backend gives up after the configured attempts and on client errors")
    {
        StubServer failing([](const nlohmann::json&) { return std::pair { 500, std::string() }; });
        LiveBackend llm(stub_config(failing));
        CHECK_THROWS_AS((void)llm.chat(cot_request("q")), TransportError);
        CHECK(failing.requests == 3);

        StubServer rejecting([](const nlohmann::json&) { return std::pair { 401, std::string() }; });
        LiveBackend unauthorized(stub_config(rejecting));
        CHECK_THROWS_AS((void)unauthorized.chat(cot_request("q")), TransportError);
        CHECK(rejecting.requests == 1);
    }

    TEST_CASE("live backend bounds concurrent requests")
    {
        std::atomic<int> in_flight { 0 };
        std::atomic<int> peak { 0 };
        StubServer server([&](const nlohmann::json&) {
            int const now = ++in_flight;
            int prev = peak.load();
            while (now > prev && !peak.compare_exchange_weak(prev, now))
            {
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
            --in_flight;
            return std::pair { 200, std::string("ok") };
        });
        auto config = stub_config(server);
        config.max_concurrency = 2;
        LiveBackend llm(config);
        std::vector<std::thread> workers;
        for (int i = 0; i < 6; ++i)
            workers.emplace_back([&] { (void)llm.chat(cot_request("q")); });
        for (auto& w: workers)
            w.join();
        CHECK(peak <= 2);
        CHECK(server.requests == 6);
    }

    TEST_CASE("unreachable endpoint is a transport error")
    {
        LiveBackendConfig c;
        c.endpoint = "http://127.0.0.1:1/v1";
        c.api_key = "k";
        c.attempts = 1;
        LiveBackend llm(c);
        CHECK_THROWS_AS((void)llm.chat(cot_request("q")), TransportError);
    }
}
