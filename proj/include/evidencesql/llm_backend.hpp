#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "evidencesql/feature_store.hpp"
#include "evidencesql/json_util.hpp"

namespace evidencesql {

enum class LlmTask { GlobalPlan, LocalQueries, ReferenceRange, Narrative };
const char* llm_task_name(LlmTask t);

struct LlmRequest {
    std::string system_prompt;
    std::string user_prompt;
    double temperature = 0.0;
    double timeout_seconds = 60.0;
    LlmTask task = LlmTask::GlobalPlan;
};

/// Text-generation port. Implementations return text or throw BackendError;
/// they never hang past the request timeout.
class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual std::string complete(const LlmRequest& request) = 0;
    virtual std::string name() const = 0;
    /// False when the backend has no domain knowledge to offer (reference
    /// ranges, narrative prose).
    virtual bool provides_knowledge() const { return true; }
    virtual bool is_remote() const { return false; }
};

/// Deterministic offline agent: answers plan and query requests from the
/// manifest alone and declines knowledge requests.
class TemplateBackend final : public LlmBackend {
public:
    explicit TemplateBackend(SchemaManifest manifest) : manifest_(std::move(manifest)) {}
    std::string complete(const LlmRequest& request) override;
    std::string name() const override { return "template"; }
    bool provides_knowledge() const override { return false; }

    std::string global_response() const;
    std::string local_response() const;

private:
    SchemaManifest manifest_;
};

/// Replays canned responses in order, repeating the last one when the
/// script runs out. Per-task scripts take precedence over the shared one.
class ScriptedBackend final : public LlmBackend {
public:
    explicit ScriptedBackend(std::vector<std::string> responses) : shared_(std::move(responses)) {}
    ScriptedBackend(std::map<LlmTask, std::vector<std::string>> per_task) : per_task_(std::move(per_task)) {}

    std::string complete(const LlmRequest& request) override;
    std::string name() const override { return "scripted"; }

    std::vector<LlmRequest> requests() const;

private:
    mutable std::mutex mu_;
    std::vector<std::string> shared_;
    std::size_t shared_pos_ = 0;
    std::map<LlmTask, std::vector<std::string>> per_task_;
    std::map<LlmTask, std::size_t> per_task_pos_;
    std::vector<LlmRequest> requests_;
};

struct RemoteSettings {
    std::string base_url;
    std::string model;
    std::string api_key;
};

/// Chat-completions style HTTP endpoint (`POST <base>/chat/completions`).
class RemoteBackend final : public LlmBackend {
public:
    explicit RemoteBackend(RemoteSettings settings) : settings_(std::move(settings)) {}
    std::string complete(const LlmRequest& request) override;
    std::string name() const override { return "remote:" + settings_.model; }
    bool is_remote() const override { return true; }

    /// Body sent for a request; exposed for tests.
    Json request_body(const LlmRequest& request) const;
    /// Pulls `choices[0].message.content` out of a response body.
    static std::string parse_response(const std::string& body);

private:
    RemoteSettings settings_;
};

struct BackendConfig {
    std::string kind = "template";
    double temperature = 0.0;
    double timeout_seconds = 60.0;
    int max_retries = 2;
    std::optional<std::string> base_url;
    std::optional<std::string> model;
    std::string prompt_version = "v1";

    static BackendConfig from_json(const Json& j);
    Json to_json() const;
};

/// Builds the configured backend. Remote settings come from the config first
/// and EVIDENCESQL_LLM_* environment variables second; ConfigError when
/// anything required is missing.
std::unique_ptr<LlmBackend> make_backend(const BackendConfig& config, const SchemaManifest& manifest);

}  // namespace evidencesql
