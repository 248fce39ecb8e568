#include "chartsum/summarizer_api.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace chartsum {

namespace {

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
}

void reply_error(httplib::Response& res, int status, std::string message, std::optional<std::string> dependency = {}) {
    json body{{"error", std::move(message)}};
    if (dependency) body["dependency"] = *dependency;
    reply(res, status, body);
}

}  // namespace

SummarizerApi::SummarizerApi(std::shared_ptr<SummarizerNode> node, std::string host, std::uint16_t port,
                             std::optional<std::filesystem::path> static_dir)
    : node_(std::move(node)),
      host_(std::move(host)),
      port_(port),
      static_dir_(std::move(static_dir)),
      server_(std::make_unique<httplib::Server>()) {}

SummarizerApi::~SummarizerApi() { stop(); }

void SummarizerApi::start() {
    auto& svr = *server_;

    svr.Post("/summarize", [this](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) return reply_error(res, 400, "body must be a JSON object");
        const auto pid = body.find("patient_id");
        if (pid == body.end() || !pid->is_string() || pid->get<std::string>().empty()) {
            return reply_error(res, 400, "patient_id must be a non-empty string");
        }
        const auto complaint = body.find("complaint");
        if (complaint == body.end() || !complaint->is_string()) return reply_error(res, 400, "complaint must be a string");
        PromptStrategy strategy = PromptStrategy::ZeroShot;
        if (const auto s = body.find("strategy"); s != body.end() && !s->is_null()) {
            const auto parsed = s->is_string() ? parse_strategy(s->get<std::string>()) : std::nullopt;
            if (!parsed) {
                return reply_error(res, 400,
                                   "unknown strategy " + s->dump() + "; expected one of: " + legal_strategy_names());
            }
            strategy = *parsed;
        }
        std::uint32_t k = kDefaultTopK;
        if (const auto kv = body.find("k"); kv != body.end() && !kv->is_null()) {
            if (!kv->is_number_unsigned() || kv->get<std::uint64_t>() < 1 || kv->get<std::uint64_t>() > 1000) {
                return reply_error(res, 400, "k must be an integer in 1..1000");
            }
            k = static_cast<std::uint32_t>(kv->get<std::uint64_t>());
        }
        ChiefComplaint cc;
        try {
            cc = ChiefComplaint::make(pid->get<std::string>(), complaint->get<std::string>(), k);
        } catch (const std::invalid_argument& e) {
            return reply_error(res, 400, e.what());
        }
        if (!node_->generator().reachable()) {
            return reply_error(res, 503, "model server unreachable", "model_server");
        }
        const auto id = node_->submit(std::move(cc), strategy);
        reply(res, 202, json{{"job_id", id}, {"state", to_string(JobState::Queued)}});
    });

    svr.Get(R"(/jobs/([A-Za-z0-9_-]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const auto snap = node_->snapshot(req.matches[1]);
        if (!snap) return reply_error(res, 404, "no such job");
        reply(res, 200, *snap);
    });

    svr.Get("/patients", [this](const httplib::Request&, httplib::Response& res) {
        try {
            reply(res, 200, json{{"patients", node_->source().patients()}});
        } catch (const std::exception& e) {
            reply_error(res, 503, std::string("retrieval node unreachable: ") + e.what(), "retrieval_node");
        }
    });

    svr.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
        const auto h = check_health(node_->source(), node_->generator());
        json failed = json::array();
        if (!h.retrieval_ok) failed.push_back("retrieval_node");
        if (!h.model_ok) failed.push_back("model_server");
        reply(res, h.ok() ? 200 : 503,
              json{{"status", h.ok() ? "ok" : "degraded"},
                   {"failed", failed},
                   {"retrieval_node", {{"ok", h.retrieval_ok}, {"detail", h.retrieval_detail}}},
                   {"model_server", {{"ok", h.model_ok}, {"detail", h.model_detail}}}});
    });

    if (static_dir_ && !svr.set_mount_point("/", static_dir_->string())) {
        throw std::runtime_error("cannot serve static files from " + static_dir_->string());
    }

    if (port_ == 0) {
        const int p = svr.bind_to_any_port(host_);
        if (p <= 0) throw std::runtime_error("summarizer api: cannot bind " + host_);
        port_ = static_cast<std::uint16_t>(p);
    } else if (!svr.bind_to_port(host_, port_)) {
        throw std::runtime_error("summarizer api: cannot bind " + host_ + ":" + std::to_string(port_));
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

void SummarizerApi::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

void SummarizerApi::wait() {
    if (thread_.joinable()) thread_.join();
}

}  // namespace chartsum
