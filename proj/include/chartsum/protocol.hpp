#pragma once

// Length-prefixed framing between the summarizer and the retrieval node.
//
//   +----------------------+-------------------------------------------+
//   | u32 big-endian len   | len bytes of UTF-8 JSON                   |
//   +----------------------+-------------------------------------------+
//
// Payload: {"v": 1, "type": "QUERY"|"CONTEXT"|"ERROR"|"PING"|"PONG",
//           "id": <u64 correlation id>, "body": {...}}

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>

#include "chartsum/core.hpp"

namespace chartsum {

inline constexpr std::uint32_t kProtocolVersion = 1;
inline constexpr std::size_t kMaxFrameBytes = 16u * 1024u * 1024u;
inline constexpr std::size_t kFramePrefixBytes = 4;

enum class FrameType { Query, Context, Error, Ping, Pong, Unknown };

std::string_view to_string(FrameType t);
FrameType parse_frame_type(std::string_view name);

struct Frame {
    std::uint32_t version = kProtocolVersion;
    std::string type;  // wire name; kind() maps unrecognised names to Unknown
    std::uint64_t id = 0;
    json body = json::object();

    FrameType kind() const { return parse_frame_type(type); }

    static Frame make(FrameType t, std::uint64_t id, json body = json::object());

    bool operator==(const Frame&) const = default;
};

struct FramingError {
    enum class Kind { Oversize, Truncated, BadUtf8, BadStructure };

    Kind kind;
    std::string detail;
};

std::string_view to_string(FramingError::Kind k);

struct DecodeResult {
    std::variant<Frame, FramingError> value;
    std::size_t consumed = 0;  // prefix + payload on success, 0 on error

    bool ok() const { return std::holds_alternative<Frame>(value); }
    const Frame& frame() const { return std::get<Frame>(value); }
    const FramingError& error() const { return std::get<FramingError>(value); }
};

// Prefix + compact JSON payload. Throws std::length_error if the payload
// would exceed max_bytes.
std::string encode_frame(const Frame& frame, std::size_t max_bytes = kMaxFrameBytes);

// Decodes one frame from the front of bytes. Total: returns a Frame or a
// FramingError for every input, never throws.
DecodeResult decode_frame(std::string_view bytes, std::size_t max_bytes = kMaxFrameBytes);

// Decodes a payload whose length prefix was already consumed.
std::variant<Frame, FramingError> decode_payload(std::string_view payload);

bool is_valid_utf8(std::string_view s);

// Blocking frame I/O on a connected socket.
enum class ReadStatus { Ok, Closed, Timeout, IoError, Framing };

struct ReadOutcome {
    ReadStatus status = ReadStatus::Ok;
    std::optional<Frame> frame;
    std::optional<FramingError> error;
};

ReadOutcome read_frame(int fd, std::size_t max_bytes = kMaxFrameBytes);
bool write_frame(int fd, const Frame& frame, std::size_t max_bytes = kMaxFrameBytes);
bool write_all(int fd, std::string_view bytes);

// Error codes carried in ERROR bodies.
namespace error_code {
inline constexpr std::string_view kUnknownPatient = "UNKNOWN_PATIENT";
inline constexpr std::string_view kBadRequest = "BAD_REQUEST";
inline constexpr std::string_view kEmbedFailure = "EMBED_FAILURE";
inline constexpr std::string_view kInternal = "INTERNAL";
}  // namespace error_code

Frame make_error_frame(std::uint64_t id, std::string_view code, std::string_view detail);

}  // namespace chartsum
