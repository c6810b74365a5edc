#pragma once

#include <chrono>
#include <string>

#include "httplib.h"
#include "json.hpp"

#include "fetchplan/llm.hpp"

namespace fetchplan::llm {

/// Wire backend: one synchronous HTTP exchange per generation. The request
/// body carries {system, messages[{role,text}], max_gen_len, temperature,
/// top_p}; the response body carries {text, generated_tokens}.
class HttpBackend : public Backend {
public:
    /// `endpoint` is "http://host:port" with an optional path; the default
    /// path is /generate.
    explicit HttpBackend(const std::string& endpoint, double timeout_s = 120.0) {
        auto scheme_end = endpoint.find("://");
        std::string rest = scheme_end == std::string::npos ? endpoint : endpoint.substr(scheme_end + 3);
        auto path_begin = rest.find('/');
        if (path_begin == std::string::npos) {
            host_ = rest;
            path_ = "/generate";
        } else {
            host_ = rest.substr(0, path_begin);
            path_ = rest.substr(path_begin);
        }
        client_ = std::make_unique<httplib::Client>(("http://" + host_).c_str());
        auto secs = std::chrono::duration<double>(timeout_s);
        client_->set_connection_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(secs));
        client_->set_read_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(secs));
        client_->set_write_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(secs));
    }

    BackendResponse complete(const BackendRequest& request) override {
        nlohmann::json body;
        body["system"] = request.system_prompt;
        body["messages"] = nlohmann::json::array();
        for (const auto& turn : request.turns)
            body["messages"].push_back({{"role", to_string(turn.role)}, {"text", turn.text}});
        body["messages"].push_back({{"role", "user"}, {"text", request.inquiry}});
        body["max_gen_len"] = request.params.max_gen_len;
        body["temperature"] = request.params.temperature;
        body["top_p"] = request.params.top_p;

        auto start = std::chrono::steady_clock::now();
        httplib::Result result = client_->Post(path_, body.dump(), "application/json");
        double latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        if (!result) {
            switch (result.error()) {
                case httplib::Error::ConnectionTimeout:
                case httplib::Error::Read:
                case httplib::Error::Write:
                    throw BackendError(BackendError::Kind::timeout,
                                       "backend timeout: " + httplib::to_string(result.error()));
                default:
                    throw BackendError(BackendError::Kind::transport,
                                       "backend transport failure: " + httplib::to_string(result.error()));
            }
        }
        if (result->status != 200)
            throw BackendError(BackendError::Kind::transport,
                               "backend returned HTTP " + std::to_string(result->status));

        nlohmann::json reply = nlohmann::json::parse(result->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("text") || !reply.at("text").is_string())
            throw BackendError(BackendError::Kind::truncated,
                               "backend response is not the expected JSON document");

        BackendResponse response;
        response.text = reply.at("text").get<std::string>();
        response.generated_tokens = reply.value("generated_tokens", estimate_tokens(response.text));
        response.latency_s = latency;
        if (response.text.empty())
            throw BackendError(BackendError::Kind::truncated, "backend response text is empty");
        return response;
    }

private:
    std::string host_;
    std::string path_;
    std::unique_ptr<httplib::Client> client_;
};

/// Name of the environment variable that selects a live backend endpoint.
/// When unset, callers fall back to the scripted backend.
inline constexpr const char* kBackendEndpointEnv = "FETCHPLAN_BACKEND";

} // namespace fetchplan::llm
