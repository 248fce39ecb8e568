#include "chartsum/protocol.hpp"

#include <cerrno>
#include <stdexcept>

#include <sys/socket.h>
#include <unistd.h>

namespace chartsum {

namespace {

// Random input can be arbitrarily deeply nested; keep parsing bounded.
constexpr int kMaxNesting = 64;

bool nesting_within_limit(std::string_view s) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (char c : s) {
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{' || c == '[') {
            if (++depth > kMaxNesting) return false;
        } else if (c == '}' || c == ']') {
            --depth;
        }
    }
    return true;
}

FramingError structure_error(std::string detail) {
    return FramingError{FramingError::Kind::BadStructure, std::move(detail)};
}

}  // namespace

std::string_view to_string(FrameType t) {
    switch (t) {
        case FrameType::Query: return "QUERY";
        case FrameType::Context: return "CONTEXT";
        case FrameType::Error: return "ERROR";
        case FrameType::Ping: return "PING";
        case FrameType::Pong: return "PONG";
        case FrameType::Unknown: return "UNKNOWN";
    }
    return "UNKNOWN";
}

FrameType parse_frame_type(std::string_view name) {
    if (name == "QUERY") return FrameType::Query;
    if (name == "CONTEXT") return FrameType::Context;
    if (name == "ERROR") return FrameType::Error;
    if (name == "PING") return FrameType::Ping;
    if (name == "PONG") return FrameType::Pong;
    return FrameType::Unknown;
}

std::string_view to_string(FramingError::Kind k) {
    switch (k) {
        case FramingError::Kind::Oversize: return "Oversize";
        case FramingError::Kind::Truncated: return "Truncated";
        case FramingError::Kind::BadUtf8: return "BadUtf8";
        case FramingError::Kind::BadStructure: return "BadStructure";
    }
    return "?";
}

Frame Frame::make(FrameType t, std::uint64_t id, json body) {
    Frame f;
    f.type = std::string(to_string(t));
    f.id = id;
    f.body = std::move(body);
    return f;
}

bool is_valid_utf8(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t n;
        std::uint32_t cp;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            n = 1;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            n = 2;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            n = 3;
            cp = c & 0x07;
        } else {
            return false;
        }
        for (std::size_t k = 1; k <= n; ++k) {
            if (i + k >= s.size()) return false;
            const auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (cc & 0x3F);
        }
        // Overlong forms, surrogates and out-of-range scalars.
        if ((n == 1 && cp < 0x80) || (n == 2 && cp < 0x800) || (n == 3 && cp < 0x10000)) return false;
        if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
        i += n + 1;
    }
    return true;
}

std::string encode_frame(const Frame& frame, std::size_t max_bytes) {
    const json payload{{"v", frame.version}, {"type", frame.type}, {"id", frame.id}, {"body", frame.body}};
    const std::string text = payload.dump(-1, ' ', false, json::error_handler_t::replace);
    if (text.size() > max_bytes) throw std::length_error("frame payload exceeds limit");
    const auto n = static_cast<std::uint32_t>(text.size());
    std::string out;
    out.reserve(kFramePrefixBytes + text.size());
    out.push_back(static_cast<char>((n >> 24) & 0xFF));
    out.push_back(static_cast<char>((n >> 16) & 0xFF));
    out.push_back(static_cast<char>((n >> 8) & 0xFF));
    out.push_back(static_cast<char>(n & 0xFF));
    out += text;
    return out;
}

std::variant<Frame, FramingError> decode_payload(std::string_view payload) {
    if (!is_valid_utf8(payload)) return FramingError{FramingError::Kind::BadUtf8, "payload is not valid UTF-8"};
    if (!nesting_within_limit(payload)) return structure_error("payload nesting too deep");
    const json j = json::parse(payload, nullptr, false);
    if (j.is_discarded()) return structure_error("payload is not valid JSON");
    if (!j.is_object()) return structure_error("payload is not an object");

    Frame f;
    const auto v = j.find("v");
    if (v == j.end() || !v->is_number_unsigned() || v->get<std::uint64_t>() != kProtocolVersion) {
        return structure_error("missing or unsupported protocol version");
    }
    const auto type = j.find("type");
    if (type == j.end() || !type->is_string()) return structure_error("missing type");
    f.type = type->get<std::string>();
    if (const auto id = j.find("id"); id != j.end()) {
        if (!id->is_number_unsigned()) return structure_error("id must be an unsigned integer");
        f.id = id->get<std::uint64_t>();
    }
    if (const auto body = j.find("body"); body != j.end()) {
        if (!body->is_object()) return structure_error("body must be an object");
        f.body = *body;
    }
    return f;
}

DecodeResult decode_frame(std::string_view bytes, std::size_t max_bytes) {
    DecodeResult r{FramingError{FramingError::Kind::Truncated, ""}, 0};
    if (bytes.size() < kFramePrefixBytes) {
        r.value = FramingError{FramingError::Kind::Truncated, "missing length prefix"};
        return r;
    }
    const std::uint32_t n = (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[0])) << 24) |
                            (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[1])) << 16) |
                            (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[2])) << 8) |
                            static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[3]));
    if (n > max_bytes) {
        r.value = FramingError{FramingError::Kind::Oversize, "declared length " + std::to_string(n) + " exceeds limit"};
        return r;
    }
    if (bytes.size() - kFramePrefixBytes < n) {
        r.value = FramingError{FramingError::Kind::Truncated, "payload shorter than declared length"};
        return r;
    }
    auto decoded = decode_payload(bytes.substr(kFramePrefixBytes, n));
    if (std::holds_alternative<Frame>(decoded)) r.consumed = kFramePrefixBytes + n;
    r.value = std::move(decoded);
    return r;
}

namespace {

enum class RecvStatus { Ok, Closed, Timeout, IoError };

RecvStatus recv_exact(int fd, char* buf, std::size_t n) {
    std::size_t got = 0;
    while (got < n) {
        const ssize_t r = ::recv(fd, buf + got, n - got, 0);
        if (r == 0) return RecvStatus::Closed;
        if (r < 0) {
            if (errno == EINTR) continue;
            if (errno == EAGAIN || errno == EWOULDBLOCK) return RecvStatus::Timeout;
            return RecvStatus::IoError;
        }
        got += static_cast<std::size_t>(r);
    }
    return RecvStatus::Ok;
}

ReadStatus to_read_status(RecvStatus s) {
    switch (s) {
        case RecvStatus::Ok: return ReadStatus::Ok;
        case RecvStatus::Closed: return ReadStatus::Closed;
        case RecvStatus::Timeout: return ReadStatus::Timeout;
        case RecvStatus::IoError: return ReadStatus::IoError;
    }
    return ReadStatus::IoError;
}

}  // namespace

ReadOutcome read_frame(int fd, std::size_t max_bytes) {
    ReadOutcome out;
    char prefix[kFramePrefixBytes];
    if (auto s = recv_exact(fd, prefix, sizeof prefix); s != RecvStatus::Ok) {
        out.status = to_read_status(s);
        return out;
    }
    const std::uint32_t n = (static_cast<std::uint32_t>(static_cast<unsigned char>(prefix[0])) << 24) |
                            (static_cast<std::uint32_t>(static_cast<unsigned char>(prefix[1])) << 16) |
                            (static_cast<std::uint32_t>(static_cast<unsigned char>(prefix[2])) << 8) |
                            static_cast<std::uint32_t>(static_cast<unsigned char>(prefix[3]));
    if (n > max_bytes) {
        out.status = ReadStatus::Framing;
        out.error = FramingError{FramingError::Kind::Oversize, "declared length " + std::to_string(n) + " exceeds limit"};
        return out;
    }
    std::string payload(n, '\0');
    if (auto s = recv_exact(fd, payload.data(), n); s != RecvStatus::Ok) {
        if (s == RecvStatus::Closed) {
            out.status = ReadStatus::Framing;
            out.error = FramingError{FramingError::Kind::Truncated, "connection closed mid-frame"};
        } else {
            out.status = to_read_status(s);
        }
        return out;
    }
    auto decoded = decode_payload(payload);
    if (auto* f = std::get_if<Frame>(&decoded)) {
        out.frame = std::move(*f);
    } else {
        out.status = ReadStatus::Framing;
        out.error = std::get<FramingError>(decoded);
    }
    return out;
}

bool write_all(int fd, std::string_view bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t r = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (r < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        sent += static_cast<std::size_t>(r);
    }
    return true;
}

bool write_frame(int fd, const Frame& frame, std::size_t max_bytes) {
    return write_all(fd, encode_frame(frame, max_bytes));
}

Frame make_error_frame(std::uint64_t id, std::string_view code, std::string_view detail) {
    return Frame::make(FrameType::Error, id, json{{"code", code}, {"detail", detail}});
}

}  // namespace chartsum
