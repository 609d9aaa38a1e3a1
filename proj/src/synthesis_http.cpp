#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "embforge/synthesis.hpp"
#include "embforge/text.hpp"

namespace embforge {

using ordered_json = nlohmann::ordered_json;

namespace {

// "items one per line or as a JSON array (both accepted)"
std::vector<std::string> split_items(const std::string& content) {
    std::vector<std::string> items;
    ordered_json arr = ordered_json::parse(content, nullptr, false);
    if (!arr.is_discarded() && arr.is_array()) {
        for (const auto& el : arr) {
            if (el.is_string())
                items.push_back(el.get<std::string>());
            else
                items.push_back(el.dump());
        }
        return items;
    }
    std::string line;
    for (size_t i = 0; i <= content.size(); ++i) {
        if (i == content.size() || content[i] == '\n') {
            std::string_view t = trim(line);
            if (!t.empty()) items.emplace_back(t);
            line.clear();
        } else if (content[i] != '\r') {
            line.push_back(content[i]);
        }
    }
    return items;
}

} // namespace

HttpLlmClient::HttpLlmClient(LlmClientConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.base_url.empty())
        throw Error(ErrorCode::InvalidArgument, "HTTP client needs a base URL");
}

std::vector<std::string> HttpLlmClient::complete(const PromptSpec& prompt, uint64_t /*seed*/) {
    ordered_json body;
    body["model"] = cfg_.model_name;
    body["messages"] = ordered_json::array({
        ordered_json{{"role", "system"}, {"content", prompt.system_text}},
        ordered_json{{"role", "user"}, {"content", prompt.user_text}},
    });
    body["temperature"] = cfg_.sampling_temperature;
    body["n"] = prompt.expected_outputs;
    const std::string payload = body.dump();

    httplib::Client client(cfg_.base_url);
    const auto timeout = std::chrono::milliseconds(
        static_cast<long long>(cfg_.timeout_seconds * 1000.0));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers headers;
    if (const char* key = std::getenv(cfg_.api_key_env_var.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);

    std::string last_error = "no attempt made";
    for (size_t attempt = 0; attempt <= cfg_.retry_limit; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(100ll << (attempt - 1)));

        auto res = client.Post("/v1/chat/completions", headers, payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "HTTP status " + std::to_string(res->status);
            continue;
        }
        ordered_json doc = ordered_json::parse(res->body, nullptr, false);
        if (doc.is_discarded() || !doc.contains("choices") || !doc["choices"].is_array()) {
            last_error = "malformed response body";
            continue;
        }
        std::vector<std::string> items;
        for (const auto& choice : doc["choices"]) {
            if (!choice.contains("message") || !choice["message"].contains("content")) continue;
            const auto part = split_items(choice["message"]["content"].get<std::string>());
            items.insert(items.end(), part.begin(), part.end());
        }
        return items;
    }
    throw Error(ErrorCode::ApiError, "request failed after " + std::to_string(cfg_.retry_limit + 1) +
                                         " attempts: " + last_error);
}

} // namespace embforge
