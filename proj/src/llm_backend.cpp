// SPDX-License-Identifier: Apache-2.0
#include "jointkb/llm_backend.hpp"

#include "jointkb/errors.hpp"
#include "jointkb/http_json.hpp"
#include "jointkb/text.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <array>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>
#include <utility>

namespace jointkb
{

namespace detail
{
extern const std::pair<std::string_view, std::string_view> prompt_assets[];
extern const std::size_t prompt_asset_count;
} // namespace detail

namespace
{

constexpr std::array template_names {
    std::pair { TemplateId::agent_train, std::string_view("agent_train") },
    std::pair { TemplateId::agent_infer, std::string_view("agent_infer") },
    std::pair { TemplateId::entity_select, std::string_view("entity_select") },
    std::pair { TemplateId::relation_select, std::string_view("relation_select") },
    std::pair { TemplateId::triple_generate, std::string_view("triple_generate") },
    std::pair { TemplateId::triple_modify, std::string_view("triple_modify") },
    std::pair { TemplateId::path_select, std::string_view("path_select") },
    std::pair { TemplateId::cot, std::string_view("cot") },
};

std::string strip_trailing_newlines(std::string s)
{
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r'))
        s.pop_back();
    return s;
}

std::map<TemplateId, PromptTemplate> load_catalog()
{
    std::map<TemplateId, PromptTemplate> catalog;
    for (std::size_t i = 0; i < detail::prompt_asset_count; ++i)
    {
        auto const& [name, text] = detail::prompt_assets[i];
        catalog.emplace(template_from_string(name), parse_template(std::string(name), text));
    }
    for (auto const& [id, name]: template_names)
        if (!catalog.contains(id))
            throw Error(fmt::format("prompt asset '{}' is missing from the build", name));
    return catalog;
}

} // namespace

std::string_view to_string(TemplateId id)
{
    for (auto const& [candidate, name]: template_names)
        if (candidate == id)
            return name;
    return "?";
}

TemplateId template_from_string(std::string_view name)
{
    for (auto const& [id, candidate]: template_names)
        if (candidate == name)
            return id;
    throw ArgumentError(fmt::format("unknown prompt template '{}'", name));
}

std::set<std::string> PromptTemplate::slots() const
{
    std::set<std::string> out;
    auto scan = [&](std::string_view s) {
        for (std::size_t pos = s.find("{{"); pos != std::string_view::npos; pos = s.find("{{", pos))
        {
            auto const end = s.find("}}", pos + 2);
            if (end == std::string_view::npos)
                break;
            out.emplace(s.substr(pos + 2, end - pos - 2));
            pos = end + 2;
        }
    };
    scan(instruction);
    for (auto const& e: exemplars)
        scan(e);
    scan(query);
    return out;
}

PromptTemplate parse_template(std::string name, std::string_view text)
{
    PromptTemplate tmpl;
    tmpl.name = std::move(name);

    std::string* current = nullptr;
    bool seen_instruction = false;
    bool seen_query = false;
    std::istringstream in { std::string(text) };
    std::string line;
    while (std::getline(in, line))
    {
        if (line.starts_with("### "))
        {
            auto const section = trim(std::string_view(line).substr(4));
            if (section == "instruction")
            {
                current = &tmpl.instruction;
                seen_instruction = true;
            }
            else if (section == "exemplar")
                current = &tmpl.exemplars.emplace_back();
            else if (section == "query")
            {
                current = &tmpl.query;
                seen_query = true;
            }
            else
                throw ArgumentError(fmt::format("template {}: unknown section '{}'", tmpl.name, section));
            continue;
        }
        if (!current)
        {
            if (!trim(line).empty())
                throw ArgumentError(fmt::format("template {}: text before the first section", tmpl.name));
            continue;
        }
        *current += line;
        *current += '\n';
    }
    if (!seen_instruction || !seen_query)
        throw ArgumentError(fmt::format("template {} needs instruction and query sections", tmpl.name));

    tmpl.instruction = strip_trailing_newlines(std::move(tmpl.instruction));
    for (auto& e: tmpl.exemplars)
        e = strip_trailing_newlines(std::move(e));
    tmpl.query = strip_trailing_newlines(std::move(tmpl.query));
    return tmpl;
}

const PromptTemplate& prompt_template(TemplateId id)
{
    static const auto catalog = load_catalog();
    return catalog.at(id);
}

std::string render(const PromptTemplate& tmpl, const Bindings& bindings)
{
    std::string source = tmpl.instruction;
    for (auto const& e: tmpl.exemplars)
        source += "\n\nExample:\n" + e;
    source += "\n\n" + tmpl.query;

    std::string out;
    out.reserve(source.size() + 256);
    std::size_t pos = 0;
    while (true)
    {
        auto const open = source.find("{{", pos);
        if (open == std::string::npos)
        {
            out.append(source, pos);
            break;
        }
        auto const close = source.find("}}", open + 2);
        if (close == std::string::npos)
            throw RenderError(fmt::format("template {}: unterminated placeholder", tmpl.name));
        out.append(source, pos, open - pos);
        auto const slot = std::string_view(source).substr(open + 2, close - open - 2);
        auto it = bindings.find(slot);
        if (it == bindings.end())
            throw RenderError(fmt::format("template {}: slot '{}' is not bound", tmpl.name, slot));
        out += it->second;
        pos = close + 2;
    }
    return out;
}

std::string render(TemplateId id, const Bindings& bindings)
{
    return render(prompt_template(id), bindings);
}

std::string_view to_string(ChatRole role)
{
    switch (role)
    {
        case ChatRole::system: return "system";
        case ChatRole::user: return "user";
        case ChatRole::assistant: return "assistant";
    }
    return "user";
}

std::string ChatRequest::text() const
{
    std::string out;
    for (auto const& t: turns)
    {
        if (!out.empty())
            out += '\n';
        out += t.content;
    }
    return out;
}

ChatRequest make_request(TemplateId id, const Bindings& bindings, const LlmParams& params)
{
    return ChatRequest { id, { ChatTurn { ChatRole::user, render(id, bindings) } }, params };
}

// ---------------------------------------------------------------------------
// ScriptedBackend

ScriptedBackend::ScriptedBackend(std::vector<ScriptStep> steps): _steps(std::move(steps)) {}

std::vector<ScriptStep> ScriptedBackend::parse_script(std::string_view jsonl, std::string_view origin)
{
    std::vector<ScriptStep> steps;
    std::istringstream in { std::string(jsonl) };
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line))
    {
        ++lineno;
        if (trim(line).empty())
            continue;
        try
        {
            auto const j = nlohmann::json::parse(line);
            ScriptStep step;
            if (j.contains("template"))
                step.template_id = template_from_string(j.at("template").get<std::string>());
            step.match = j.value("match", "");
            step.response = j.at("response").get<std::string>();
            steps.push_back(std::move(step));
        }
        catch (const nlohmann::json::exception& e)
        {
            throw LoadError(fmt::format("{}:{}: {}", origin, lineno, e.what()));
        }
        catch (const ArgumentError& e)
        {
            throw LoadError(fmt::format("{}:{}: {}", origin, lineno, e.what()));
        }
    }
    return steps;
}

std::vector<ScriptStep> ScriptedBackend::read_script(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw LoadError(fmt::format("cannot open script {}", path.string()));
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_script(buffer.str(), path.string());
}

std::string ScriptedBackend::chat(const ChatRequest& request)
{
    std::lock_guard lock(_mutex);
    if (_next >= _steps.size())
        throw ScriptError(fmt::format("script exhausted after {} steps; unexpected {} request:\n{}", _steps.size(),
                                      to_string(request.template_id), request.text()));
    auto const& step = _steps[_next];
    if (step.template_id && *step.template_id != request.template_id)
        throw ScriptError(fmt::format("script step {}: expected a {} request, got {}", _next + 1,
                                      to_string(*step.template_id), to_string(request.template_id)));
    if (!step.match.empty())
    {
        auto const expected = normalize_surface(step.match);
        auto const actual = normalize_surface(request.text());
        if (actual.find(expected) == std::string::npos)
            throw ScriptError(fmt::format("script step {}: prompt does not contain the expected text\n"
                                          "expected: {}\nactual:\n{}",
                                          _next + 1, step.match, request.text()));
    }
    ++_next;
    return step.response;
}

std::size_t ScriptedBackend::consumed() const
{
    std::lock_guard lock(_mutex);
    return _next;
}

std::size_t ScriptedBackend::remaining() const
{
    std::lock_guard lock(_mutex);
    return _steps.size() - _next;
}

// ---------------------------------------------------------------------------
// LiveBackend

LiveBackendConfig LiveBackendConfig::from_env()
{
    LiveBackendConfig config;
    if (auto const* v = std::getenv("JOINTKB_LLM_ENDPOINT"); v && *v)
        config.endpoint = v;
    if (auto const* v = std::getenv("JOINTKB_LLM_MODEL"); v && *v)
        config.model = v;
    if (auto const* v = std::getenv("JOINTKB_LLM_API_KEY"); v && *v)
        config.api_key = v;
    else if (auto const* fallback = std::getenv("OPENAI_API_KEY"); fallback && *fallback)
        config.api_key = fallback;
    return config;
}

LiveBackend::LiveBackend(LiveBackendConfig config): _config(std::move(config))
{
    if (_config.max_concurrency == 0 || _config.attempts == 0)
        throw ArgumentError("live backend needs positive concurrency and attempt limits");
    EndpointAddress::parse(_config.endpoint);
}

std::string LiveBackend::chat(const ChatRequest& request)
{
    {
        std::unique_lock lock(_mutex);
        _slot_free.wait(lock, [&] { return _in_flight < _config.max_concurrency; });
        ++_in_flight;
    }
    struct Release
    {
        LiveBackend* self;
        ~Release()
        {
            {
                std::lock_guard lock(self->_mutex);
                --self->_in_flight;
            }
            self->_slot_free.notify_one();
        }
    } release { this };

    auto messages = nlohmann::json::array();
    for (auto const& t: request.turns)
        messages.push_back({ { "role", to_string(t.role) }, { "content", t.content } });
    nlohmann::json const body {
        { "model", _config.model },
        { "messages", messages },
        { "temperature", request.params.temperature },
        { "max_tokens", request.params.max_tokens },
    };
    std::vector<std::pair<std::string, std::string>> headers;
    if (!_config.api_key.empty())
        headers.emplace_back("Authorization", "Bearer " + _config.api_key);

    auto const address = EndpointAddress::parse(_config.endpoint);
    auto backoff = _config.initial_backoff;
    for (std::size_t attempt = 1;; ++attempt)
    {
        int status = 0;
        try
        {
            auto const response = post_json(address, "/chat/completions", body, headers, _config.timeout, &status);
            auto const& content = response.at("choices").at(0).at("message").at("content");
            return content.is_null() ? std::string() : content.get<std::string>();
        }
        catch (const nlohmann::json::exception& e)
        {
            throw TransportError(fmt::format("chat endpoint sent an unexpected response: {}", e.what()));
        }
        catch (const TransportError& e)
        {
            bool const transient = status == 0 || status == 429 || status >= 500;
            if (!transient || attempt >= _config.attempts)
                throw;
            spdlog::warn("chat request failed (attempt {}/{}): {}", attempt, _config.attempts, e.what());
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
}

} // namespace jointkb
