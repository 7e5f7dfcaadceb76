#include "evidencesql/llm_backend.hpp"

#include <cstdlib>
#include <sstream>

#include <httplib.h>

#include "evidencesql/errors.hpp"

namespace evidencesql {

const char* llm_task_name(LlmTask t) {
    switch (t) {
        case LlmTask::GlobalPlan: return "global_plan";
        case LlmTask::LocalQueries: return "local_queries";
        case LlmTask::ReferenceRange: return "reference_range";
        case LlmTask::Narrative: return "narrative";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// template backend

std::string TemplateBackend::complete(const LlmRequest& request) {
    switch (request.task) {
        case LlmTask::GlobalPlan: return global_response();
        case LlmTask::LocalQueries: return local_response();
        case LlmTask::ReferenceRange:
        case LlmTask::Narrative: break;
    }
    return "The template agent does not provide this information.";
}

std::string TemplateBackend::global_response() const {
    std::ostringstream out;
    out << "Plan:\n";
    const auto globals = manifest_.tables_at(Level::Global);
    for (const TableSchema* t : globals) {
        for (const auto& c : t->columns) {
            out << "- " << t->name << '.' << c.name << ": whole-patch " << dtype_name(c.dtype) << " descriptor";
            if (c.unit) out << " (" << *c.unit << ')';
            out << '\n';
        }
    }
    for (const TableSchema* t : globals) out << "\n```sql\nSELECT * FROM " << t->name << "\n```\n";
    return out.str();
}

std::string TemplateBackend::local_response() const {
    std::ostringstream out;
    const auto cellular = manifest_.tables_at(Level::LocalCellular);
    const auto architecture = manifest_.tables_at(Level::LocalArchitecture);

    auto reals = [](const TableSchema& t) {
        std::vector<std::string> cols;
        for (const auto& c : t.columns) {
            if (c.dtype == Dtype::Real) cols.push_back(c.name);
        }
        return cols;
    };

    if (!cellular.empty()) {
        const TableSchema& t = *cellular.front();
        const ColumnSchema* category = nullptr;
        for (const auto& c : t.columns) {
            if (c.categorical_domain && !c.categorical_domain->empty()) {
                category = &c;
                break;
            }
        }
        out << "Population composition:\n```sql\n";
        if (category) {
            out << "SELECT " << category->name << ", COUNT(*) AS n_" << t.name << " FROM " << t.name << " GROUP BY "
                << category->name;
        } else {
            out << "SELECT COUNT(*) AS n_" << t.name << " FROM " << t.name;
        }
        out << "\n```\n\n";

        const auto cols = reals(t);
        if (!cols.empty()) {
            const std::string prefix = category ? category->categorical_domain->front() + "_mean_" : "mean_";
            out << "Morphology means:\n```sql\nSELECT ";
            for (std::size_t i = 0; i < cols.size(); ++i) {
                if (i) out << ", ";
                out << "AVG(" << cols[i] << ") AS " << prefix << cols[i];
            }
            out << " FROM " << t.name;
            if (category) {
                out << " WHERE " << category->name << " = '" << category->categorical_domain->front() << "'";
            }
            out << "\n```\n\n";
        }
    }
    if (!architecture.empty()) {
        const TableSchema& t = *architecture.front();
        out << "Structure statistics:\n```sql\nSELECT COUNT(*) AS n_" << t.name;
        for (const auto& c : reals(t)) out << ", AVG(" << c << ") AS mean_" << c;
        out << " FROM " << t.name << "\n```\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// scripted backend

std::string ScriptedBackend::complete(const LlmRequest& request) {
    std::lock_guard<std::mutex> lock(mu_);
    requests_.push_back(request);
    std::vector<std::string>* script = &shared_;
    std::size_t* pos = &shared_pos_;
    if (auto it = per_task_.find(request.task); it != per_task_.end()) {
        script = &it->second;
        pos = &per_task_pos_[request.task];
    }
    if (script->empty()) throw BackendError("scripted backend has no response for " + std::string(llm_task_name(request.task)));
    const std::string& out = (*script)[std::min(*pos, script->size() - 1)];
    ++*pos;
    return out;
}

std::vector<LlmRequest> ScriptedBackend::requests() const {
    std::lock_guard<std::mutex> lock(mu_);
    return requests_;
}

// ---------------------------------------------------------------------------
// remote backend

Json RemoteBackend::request_body(const LlmRequest& request) const {
    return {{"model", settings_.model},
            {"temperature", request.temperature},
            {"messages",
             Json::array({{{"role", "system"}, {"content", request.system_prompt}},
                          {{"role", "user"}, {"content", request.user_prompt}}})}};
}

std::string RemoteBackend::parse_response(const std::string& body) {
    Json j;
    try {
        j = Json::parse(body);
    } catch (const Json::exception& e) {
        throw BackendError(std::string("response is not JSON: ") + e.what());
    }
    try {
        const Json& content = j.at("choices").at(0).at("message").at("content");
        if (!content.is_string()) throw BackendError("response content is not text");
        return content.get<std::string>();
    } catch (const Json::exception&) {
        if (j.contains("error")) throw BackendError("endpoint error: " + j["error"].dump());
        throw BackendError("response lacks choices[0].message.content");
    }
}

std::string RemoteBackend::complete(const LlmRequest& request) {
    // base_url = scheme://host[:port][/prefix]
    const std::string& url = settings_.base_url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw BackendError("base URL lacks a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    httplib::Client client(origin);
    const auto secs = static_cast<time_t>(request.timeout_seconds);
    const auto usecs = static_cast<time_t>((request.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!settings_.api_key.empty()) headers.emplace("Authorization", "Bearer " + settings_.api_key);

    auto res = client.Post(prefix + "/chat/completions", headers, request_body(request).dump(), "application/json");
    if (!res) throw BackendError("transport failure: " + httplib::to_string(res.error()));
    if (res->status != 200) {
        throw BackendError("endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    }
    return parse_response(res->body);
}

// ---------------------------------------------------------------------------
// configuration

BackendConfig BackendConfig::from_json(const Json& j) {
    BackendConfig c;
    if (!j.is_object()) throw ConfigError("backend config must be an object");
    try {
        c.kind = j.value("backend", c.kind);
        c.temperature = j.value("temperature", c.temperature);
        c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
        c.max_retries = j.value("max_retries", c.max_retries);
        c.prompt_version = j.value("prompt_version", c.prompt_version);
        if (j.contains("base_url") && !j["base_url"].is_null()) c.base_url = j["base_url"].get<std::string>();
        if (j.contains("model") && !j["model"].is_null()) c.model = j["model"].get<std::string>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("bad backend config: ") + e.what());
    }
    if (c.kind != "template" && c.kind != "remote") throw ConfigError("unknown backend '" + c.kind + "'");
    if (c.timeout_seconds <= 0) throw ConfigError("timeout_seconds must be positive");
    if (c.max_retries < 0) throw ConfigError("max_retries must be nonnegative");
    if (c.temperature < 0) throw ConfigError("temperature must be nonnegative");
    return c;
}

Json BackendConfig::to_json() const {
    Json j = {{"backend", kind},
              {"temperature", temperature},
              {"timeout_seconds", timeout_seconds},
              {"max_retries", max_retries},
              {"prompt_version", prompt_version}};
    j["base_url"] = base_url ? Json(*base_url) : Json(nullptr);
    j["model"] = model ? Json(*model) : Json(nullptr);
    return j;
}

namespace {

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

}  // namespace

std::unique_ptr<LlmBackend> make_backend(const BackendConfig& config, const SchemaManifest& manifest) {
    if (config.kind == "template") return std::make_unique<TemplateBackend>(manifest);
    RemoteSettings s;
    auto base = config.base_url ? config.base_url : env("EVIDENCESQL_LLM_BASE_URL");
    auto model = config.model ? config.model : env("EVIDENCESQL_LLM_MODEL");
    if (!base) throw ConfigError("remote backend needs a base URL (EVIDENCESQL_LLM_BASE_URL)");
    if (!model) throw ConfigError("remote backend needs a model name (EVIDENCESQL_LLM_MODEL)");
    s.base_url = *base;
    s.model = *model;
    s.api_key = env("EVIDENCESQL_LLM_API_KEY").value_or("");
    return std::make_unique<RemoteBackend>(std::move(s));
}

}  // namespace evidencesql
