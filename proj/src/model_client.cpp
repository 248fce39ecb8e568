#include "chartsum/model_client.hpp"

#include <chrono>

#include <httplib.h>
#include <json.hpp>

namespace chartsum {

using json = nlohmann::json;

GenerationClient::GenerationClient(GenerationClientConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.temperature < 0) throw std::invalid_argument("temperature must be >= 0");
    if (cfg_.endpoint.path.empty()) cfg_.endpoint.path = "/api/generate";
}

GenerationResult GenerationClient::call(const std::string& prompt) {
    httplib::Client cli(cfg_.endpoint.origin());
    const auto secs = static_cast<time_t>(cfg_.timeout_s);
    const auto usecs = static_cast<time_t>((cfg_.timeout_s - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(5, 0);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    if (!cfg_.api_key.empty()) cli.set_bearer_token_auth(cfg_.api_key);

    json body{{"model", cfg_.model},
              {"prompt", prompt},
              {"stream", false},
              {"options", {{"temperature", cfg_.temperature}, {"num_predict", cfg_.max_output_tokens}}}};
    if (cfg_.keep_alive.indefinite) {
        body["keep_alive"] = -1;
    } else {
        body["keep_alive"] = cfg_.keep_alive.seconds;
    }

    const auto start = std::chrono::steady_clock::now();
    auto res = cli.Post(cfg_.endpoint.path, body.dump(-1, ' ', false, json::error_handler_t::replace),
                        "application/json");
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::Read && wall >= cfg_.timeout_s * 0.95) {
            throw GenerationError(GenerationError::Kind::Timeout,
                                  "generation timed out after " + std::to_string(cfg_.timeout_s) + " s");
        }
        throw GenerationError(GenerationError::Kind::Unavailable,
                              "model server " + cfg_.endpoint.origin() + " unreachable: " + httplib::to_string(err));
    }
    if (res->status != 200) {
        throw GenerationError(GenerationError::Kind::BadResponse,
                              "model server returned HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    const json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.is_object() || !reply.contains(cfg_.response_field) ||
        !reply[cfg_.response_field].is_string()) {
        throw GenerationError(GenerationError::Kind::BadResponse, "model server reply lacks '" + cfg_.response_field + "'");
    }
    GenerationResult out;
    out.text = reply[cfg_.response_field].get<std::string>();
    const auto ns_field = [&](const std::string& name) {
        const auto it = reply.find(name);
        return it != reply.end() && it->is_number() ? it->get<double>() / 1e9 : 0.0;
    };
    out.load_s = ns_field(cfg_.load_duration_field);
    out.eval_s = ns_field(cfg_.eval_duration_field);
    out.wall_s = wall;
    return out;
}

GenerationResult GenerationClient::generate(const std::string& prompt) { return call(prompt); }

GenerationResult GenerationClient::warm() { return call(""); }

bool GenerationClient::reachable() {
    httplib::Client cli(cfg_.endpoint.origin());
    cli.set_connection_timeout(2, 0);
    cli.set_read_timeout(5, 0);
    if (!cfg_.api_key.empty()) cli.set_bearer_token_auth(cfg_.api_key);
    auto res = cli.Get(cfg_.health_path);
    return res && res->status == 200;
}

}  // namespace chartsum
