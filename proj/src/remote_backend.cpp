#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "vdss/agent_runtime.hpp"

namespace vdss {

using nlohmann::json;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

struct Url {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

Url split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("model endpoint must be an absolute URL: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

RemoteBackend::Options RemoteBackend::Options::from_env(const std::filesystem::path& prompt_dir) {
    Options o;
    o.endpoint = env_or("VDSS_MODEL_ENDPOINT", "");
    o.api_key = env_or("VDSS_MODEL_API_KEY", "");
    o.model = env_or("VDSS_MODEL_ID", "");
    o.prompt_dir = prompt_dir;
    if (o.endpoint.empty()) throw ConfigError("VDSS_MODEL_ENDPOINT is not set");
    if (o.model.empty()) throw ConfigError("VDSS_MODEL_ID is not set");
    return o;
}

RemoteBackend::RemoteBackend(Options options) : options_(std::move(options)) {
    split_url(options_.endpoint);
    for (auto role : all_values<AgentRole>()) {
        const auto path = options_.prompt_dir / (std::string(to_string(role)) + ".txt");
        std::ifstream in(path);
        if (!in) throw ConfigError("missing prompt template " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        templates_[index_of(role)] = ss.str();
        if (templates_[index_of(role)].find("{{input}}") == std::string::npos)
            throw ConfigError("prompt template " + path.string() + " has no {{input}} placeholder");
    }
}

std::string RemoteBackend::render_prompt(AgentRole role, const json& input) const {
    std::string t = templates_[index_of(role)];
    const std::string payload = input.dump(2);
    for (auto pos = t.find("{{input}}"); pos != std::string::npos; pos = t.find("{{input}}", pos + payload.size()))
        t.replace(pos, 9, payload);
    return t;
}

json RemoteBackend::call(AgentRole role, const json& input) {
    const auto url = split_url(options_.endpoint);
    httplib::Client client(url.origin);
    client.set_connection_timeout(options_.timeout_s);
    client.set_read_timeout(options_.timeout_s);
    httplib::Headers headers;
    if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

    const json body{{"model", options_.model},
                    {"temperature", 0},
                    {"response_format", {{"type", "json_object"}}},
                    {"messages", json::array({{{"role", "user"}, {"content", render_prompt(role, input)}}})}};
    auto res = client.Post(url.path, headers, body.dump(), "application/json");
    if (!res) throw BackendUnavailable("model endpoint unreachable: " + httplib::to_string(res.error()));
    if (res->status >= 500 || res->status == 429)
        throw BackendUnavailable("model endpoint returned HTTP " + std::to_string(res->status));
    if (res->status != 200) throw BackendUnavailable("model endpoint rejected request: HTTP " + std::to_string(res->status));

    // Anything that is not a JSON object in the expected place is returned as
    // a bare string so the runtime counts it as a malformed output.
    json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) return json(res->body);
    try {
        const auto& content = reply.at("choices").at(0).at("message").at("content");
        if (!content.is_string()) return content;
        json parsed = json::parse(content.get<std::string>(), nullptr, false);
        return parsed.is_discarded() ? content : parsed;
    } catch (const json::exception&) {
        return json(res->body);
    }
}

}  // namespace vdss
