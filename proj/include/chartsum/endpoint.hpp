#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace chartsum {

// "http://host:port/path" or "host:port" style addresses.
struct Endpoint {
    std::string scheme = "http";
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
    std::string path;  // "" when absent

    // scheme://host:port, without the path.
    std::string origin() const;
    std::string to_string() const { return origin() + path; }
};

// Throws std::invalid_argument. default_port applies when none is given.
Endpoint parse_endpoint(std::string_view text, std::uint16_t default_port = 80);

}  // namespace chartsum
