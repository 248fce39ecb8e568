#include "chartsum/endpoint.hpp"

#include <charconv>
#include <stdexcept>

namespace chartsum {

std::string Endpoint::origin() const {
    return scheme + "://" + host + ":" + std::to_string(port);
}

Endpoint parse_endpoint(std::string_view text, std::uint16_t default_port) {
    Endpoint ep;
    ep.port = default_port;
    std::string_view rest = text;
    if (const auto p = rest.find("://"); p != std::string_view::npos) {
        ep.scheme = std::string(rest.substr(0, p));
        rest.remove_prefix(p + 3);
    }
    if (ep.scheme != "http") throw std::invalid_argument("unsupported scheme in '" + std::string(text) + "'");
    if (const auto slash = rest.find('/'); slash != std::string_view::npos) {
        ep.path = std::string(rest.substr(slash));
        rest = rest.substr(0, slash);
    }
    if (const auto colon = rest.rfind(':'); colon != std::string_view::npos) {
        const auto port_text = rest.substr(colon + 1);
        unsigned value = 0;
        const auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), value);
        if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || value > 65535) {
            throw std::invalid_argument("bad port in '" + std::string(text) + "'");
        }
        ep.port = static_cast<std::uint16_t>(value);
        rest = rest.substr(0, colon);
    }
    if (rest.empty()) throw std::invalid_argument("missing host in '" + std::string(text) + "'");
    ep.host = std::string(rest);
    return ep;
}

}  // namespace chartsum
