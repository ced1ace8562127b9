// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace jointkb
{

enum class TemplateId
{
    agent_train,
    agent_infer,
    entity_select,
    relation_select,
    triple_generate,
    triple_modify,
    path_select,
    cot,
};

std::string_view to_string(TemplateId id);
/// Throws ArgumentError for unknown names.
TemplateId template_from_string(std::string_view name);

/// A prompt asset: instruction, worked examples and the query block, each possibly
/// holding {{slot}} placeholders.
struct PromptTemplate
{
    std::string name;
    std::string instruction;
    std::vector<std::string> exemplars;
    std::string query;

    [[nodiscard]] std::set<std::string> slots() const;
};

using Bindings = std::map<std::string, std::string, std::less<>>;

/// Parses the "### instruction / ### exemplar / ### query" asset format.
PromptTemplate parse_template(std::string name, std::string_view text);

/// The built-in catalog, parsed once from the assets compiled into the library.
const PromptTemplate& prompt_template(TemplateId id);

/// Fills every {{slot}} in one pass; bound values are not re-scanned. Throws
/// RenderError naming the first unbound slot.
std::string render(const PromptTemplate& tmpl, const Bindings& bindings);
std::string render(TemplateId id, const Bindings& bindings);

enum class ChatRole
{
    system,
    user,
    assistant,
};

std::string_view to_string(ChatRole role);

struct ChatTurn
{
    ChatRole role = ChatRole::user;
    std::string content;
};

struct LlmParams
{
    double temperature = 0.7;
    std::size_t max_tokens = 256;
};

/// A chat call plus the id of the template that produced it, so that backends and
/// logs can attribute every call.
struct ChatRequest
{
    TemplateId template_id = TemplateId::agent_infer;
    std::vector<ChatTurn> turns;
    LlmParams params;

    /// All turn contents concatenated with newlines.
    [[nodiscard]] std::string text() const;
};

ChatRequest make_request(TemplateId id, const Bindings& bindings, const LlmParams& params = {});

class LlmBackend
{
  public:
    virtual ~LlmBackend() = default;
    virtual std::string chat(const ChatRequest& request) = 0;
};

struct ScriptStep
{
    /// When set, the request must come from this template.
    std::optional<TemplateId> template_id;
    /// Substring the request must contain, compared after whitespace normalization.
    /// Empty matches anything.
    std::string match;
    std::string response;
};

/// Replays canned responses strictly in order. A request that does not match the
/// next step, or any request after the last step, throws ScriptError.
class ScriptedBackend final: public LlmBackend
{
  public:
    explicit ScriptedBackend(std::vector<ScriptStep> steps);

    /// JSON lines: {"template"?: name, "match"?: text, "response": text}.
    static std::vector<ScriptStep> read_script(const std::filesystem::path& path);
    static std::vector<ScriptStep> parse_script(std::string_view jsonl, std::string_view origin = "<script>");

    std::string chat(const ChatRequest& request) override;

    [[nodiscard]] std::size_t consumed() const;
    [[nodiscard]] std::size_t remaining() const;

  private:
    std::vector<ScriptStep> _steps;
    std::size_t _next = 0;
    mutable std::mutex _mutex;
};

/// Delegates to a callable; used for generated test traffic.
class FunctionBackend final: public LlmBackend
{
  public:
    explicit FunctionBackend(std::function<std::string(const ChatRequest&)> fn): _fn(std::move(fn)) {}
    std::string chat(const ChatRequest& request) override { return _fn(request); }

  private:
    std::function<std::string(const ChatRequest&)> _fn;
};

struct LiveBackendConfig
{
    /// Base URL of an OpenAI-compatible API; "/chat/completions" is appended.
    std::string endpoint = "https://api.openai.com/v1";
    std::string model = "gpt-4o-mini";
    std::string api_key;
    std::size_t max_concurrency = 4;
    std::size_t attempts = 3;
    std::chrono::milliseconds initial_backoff { 500 };
    std::chrono::milliseconds timeout { 60'000 };

    /// Reads JOINTKB_LLM_ENDPOINT, JOINTKB_LLM_MODEL and JOINTKB_LLM_API_KEY (falling
    /// back to OPENAI_API_KEY). Unset variables keep the defaults above.
    static LiveBackendConfig from_env();
};

/// Chat-completions client. Transport failures, HTTP 429 and 5xx responses are
/// retried with exponential backoff; other errors fail immediately.
class LiveBackend final: public LlmBackend
{
  public:
    explicit LiveBackend(LiveBackendConfig config);

    std::string chat(const ChatRequest& request) override;

    [[nodiscard]] const LiveBackendConfig& config() const noexcept { return _config; }

  private:
    LiveBackendConfig _config;
    std::mutex _mutex;
    std::condition_variable _slot_free;
    std::size_t _in_flight = 0;
};

} // namespace jointkb
