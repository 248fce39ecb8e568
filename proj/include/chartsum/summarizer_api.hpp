#pragma once

// HTTP gateway in front of a SummarizerNode, used by the CLI and the console.
//
//   POST /summarize  {patient_id, complaint, strategy?, k?}  -> 202 {job_id, state}
//   GET  /jobs/{id}                                          -> job snapshot
//   GET  /patients                                           -> {patients: [...]}
//   GET  /health                                             -> 200 ok | 503 degraded

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "chartsum/summarizer_node.hpp"

namespace httplib {
class Server;
}

namespace chartsum {

class SummarizerApi {
public:
    SummarizerApi(std::shared_ptr<SummarizerNode> node, std::string host = "127.0.0.1", std::uint16_t port = 7402,
                  std::optional<std::filesystem::path> static_dir = std::nullopt);
    ~SummarizerApi();

    SummarizerApi(const SummarizerApi&) = delete;
    SummarizerApi& operator=(const SummarizerApi&) = delete;

    void start();
    void stop();
    void wait();
    std::uint16_t port() const { return port_; }

private:
    std::shared_ptr<SummarizerNode> node_;
    std::string host_;
    std::uint16_t port_;
    std::optional<std::filesystem::path> static_dir_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace chartsum
