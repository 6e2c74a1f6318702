#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "facekit/embedding.hpp"
#include "facekit/errors.hpp"
#include "facekit/store.hpp"

namespace facekit::wire {

// Newline-delimited UTF-8 JSON, one object per line. Image payloads travel as
// base64-encoded binary PGM bytes.
//
// Requests:
//   {"type":"register","user_id":<int>,"image":<base64>}
//   {"type":"recognize","request_id":<str>,"frames":[<base64>,...]}
//   {"type":"ping"}
// Responses:
//   {"type":"registered","user_id":<int>,"vector":[<5 floats>]}
//   {"type":"result","request_id":<str>,"face_uid":<str, optional>,
//    "matches":[{"user_id":<int>,"distance":<float>},...],
//    "empty_store":<bool, only when true>}
//   {"type":"pong"}
//   {"type":"error","message":<str>}

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// base64 (standard alphabet, strict padding)
// ---------------------------------------------------------------------------

inline std::string base64_encode(std::string_view bytes) {
    static constexpr char kAlphabet[] =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const std::uint32_t v = (static_cast<std::uint8_t>(bytes[i]) << 16) |
                                (static_cast<std::uint8_t>(bytes[i + 1]) << 8) |
                                static_cast<std::uint8_t>(bytes[i + 2]);
        out.push_back(kAlphabet[(v >> 18) & 63]);
        out.push_back(kAlphabet[(v >> 12) & 63]);
        out.push_back(kAlphabet[(v >> 6) & 63]);
        out.push_back(kAlphabet[v & 63]);
    }
    const std::size_t rem = bytes.size() - i;
    if (rem == 1) {
        const std::uint32_t v = static_cast<std::uint8_t>(bytes[i]) << 16;
        out.push_back(kAlphabet[(v >> 18) & 63]);
        out.push_back(kAlphabet[(v >> 12) & 63]);
        out.push_back('=');
        out.push_back('=');
    } else if (rem == 2) {
        const std::uint32_t v = (static_cast<std::uint8_t>(bytes[i]) << 16) |
                                (static_cast<std::uint8_t>(bytes[i + 1]) << 8);
        out.push_back(kAlphabet[(v >> 18) & 63]);
        out.push_back(kAlphabet[(v >> 12) & 63]);
        out.push_back(kAlphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

inline std::string base64_decode(std::string_view text) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    if (text.size() % 4 != 0) throw ProtocolError("base64: length not a multiple of 4");
    std::string out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int vals[4];
        int pad = 0;
        for (int j = 0; j < 4; ++j) {
            const char c = text[i + j];
            if (c == '=') {
                if (i + 4 != text.size() || j < 2) throw ProtocolError("base64: misplaced padding");
                vals[j] = 0;
                ++pad;
            } else {
                if (pad > 0) throw ProtocolError("base64: data after padding");
                vals[j] = value_of(c);
                if (vals[j] < 0) throw ProtocolError("base64: invalid character");
            }
        }
        const std::uint32_t v = (static_cast<std::uint32_t>(vals[0]) << 18) |
                                (static_cast<std::uint32_t>(vals[1]) << 12) |
                                (static_cast<std::uint32_t>(vals[2]) << 6) |
                                static_cast<std::uint32_t>(vals[3]);
        out.push_back(static_cast<char>((v >> 16) & 0xff));
        if (pad < 2) out.push_back(static_cast<char>((v >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<char>(v & 0xff));
    }
    return out;
}

// ---------------------------------------------------------------------------
// message types (image fields hold raw PGM bytes, not base64)
// ---------------------------------------------------------------------------

struct RegisterRequest {
    std::int64_t user_id = 0;
    std::string image;

    bool operator==(const RegisterRequest&) const = default;
};

struct RecognizeRequest {
    std::string request_id;
    std::vector<std::string> frames;

    bool operator==(const RecognizeRequest&) const = default;
};

struct PingRequest {
    bool operator==(const PingRequest&) const = default;
};

using Request = std::variant<RegisterRequest, RecognizeRequest, PingRequest>;

struct RegisteredResponse {
    std::int64_t user_id = 0;
    Embedding vector;

    bool operator==(const RegisteredResponse&) const = default;
};

struct ResultResponse {
    std::string request_id;
    std::optional<std::string> face_uid;
    std::vector<Match> matches;
    bool empty_store = false;

    bool operator==(const ResultResponse&) const = default;
};

struct PongResponse {
    bool operator==(const PongResponse&) const = default;
};

struct ErrorResponse {
    std::string message;

    bool operator==(const ErrorResponse&) const = default;
};

using Response = std::variant<RegisteredResponse, ResultResponse, PongResponse, ErrorResponse>;

// ---------------------------------------------------------------------------
// codec
// ---------------------------------------------------------------------------

namespace detail {

inline const json& require_field(const json& obj, const char* name) {
    const auto it = obj.find(name);
    if (it == obj.end())
        throw ProtocolError(std::string("malformed request: field '") + name + "' missing");
    return *it;
}

inline std::string require_string(const json& obj, const char* name) {
    const json& f = require_field(obj, name);
    if (!f.is_string())
        throw ProtocolError(std::string("malformed request: field '") + name +
                            "' must be a string");
    return f.get<std::string>();
}

inline std::int64_t require_int(const json& obj, const char* name) {
    const json& f = require_field(obj, name);
    if (!f.is_number_integer())
        throw ProtocolError(std::string("malformed request: field '") + name +
                            "' must be an integer");
    return f.get<std::int64_t>();
}

inline json parse_line(std::string_view line) {
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded()) throw ProtocolError("malformed request: invalid JSON");
    if (!obj.is_object()) throw ProtocolError("malformed request: expected a JSON object");
    return obj;
}

}  // namespace detail

inline std::string encode_request(const Request& req) {
    json obj;
    if (const auto* r = std::get_if<RegisterRequest>(&req)) {
        obj["type"] = "register";
        obj["user_id"] = r->user_id;
        obj["image"] = base64_encode(r->image);
    } else if (const auto* r = std::get_if<RecognizeRequest>(&req)) {
        obj["type"] = "recognize";
        obj["request_id"] = r->request_id;
        auto frames = json::array();
        for (const auto& f : r->frames) frames.push_back(base64_encode(f));
        obj["frames"] = std::move(frames);
    } else {
        obj["type"] = "ping";
    }
    return obj.dump();
}

inline Request decode_request(std::string_view line) {
    const json obj = detail::parse_line(line);
    const std::string type = detail::require_string(obj, "type");
    if (type == "register") {
        RegisterRequest r;
        r.user_id = detail::require_int(obj, "user_id");
        r.image = base64_decode(detail::require_string(obj, "image"));
        if (r.user_id < 0) throw ProtocolError("malformed request: 'user_id' must be >= 0");
        return r;
    }
    if (type == "recognize") {
        RecognizeRequest r;
        r.request_id = detail::require_string(obj, "request_id");
        if (r.request_id.empty())
            throw ProtocolError("malformed request: 'request_id' must be non-empty");
        const json& frames = detail::require_field(obj, "frames");
        if (!frames.is_array())
            throw ProtocolError("malformed request: field 'frames' must be an array");
        if (frames.empty())
            throw ProtocolError("malformed request: 'frames' must carry at least one frame");
        for (const auto& f : frames) {
            if (!f.is_string())
                throw ProtocolError("malformed request: 'frames' entries must be strings");
            r.frames.push_back(base64_decode(f.get<std::string>()));
        }
        return r;
    }
    if (type == "ping") return PingRequest{};
    throw ProtocolError("malformed request: unknown type '" + type + "'");
}

inline std::string encode_response(const Response& resp) {
    json obj;
    if (const auto* r = std::get_if<RegisteredResponse>(&resp)) {
        obj["type"] = "registered";
        obj["user_id"] = r->user_id;
        auto vec = json::array();
        for (int i = 0; i < kEmbeddingDim; ++i) vec.push_back(r->vector[i]);
        obj["vector"] = std::move(vec);
    } else if (const auto* r = std::get_if<ResultResponse>(&resp)) {
        obj["type"] = "result";
        obj["request_id"] = r->request_id;
        if (r->face_uid) obj["face_uid"] = *r->face_uid;
        auto matches = json::array();
        for (const auto& m : r->matches)
            matches.push_back({{"user_id", m.user_id}, {"distance", m.distance}});
        obj["matches"] = std::move(matches);
        if (r->empty_store) obj["empty_store"] = true;
    } else if (const auto* r = std::get_if<ErrorResponse>(&resp)) {
        obj["type"] = "error";
        obj["message"] = r->message;
    } else {
        obj["type"] = "pong";
    }
    return obj.dump();
}

inline Response decode_response(std::string_view line) {
    const json obj = detail::parse_line(line);
    const std::string type = detail::require_string(obj, "type");
    if (type == "registered") {
        RegisteredResponse r;
        r.user_id = detail::require_int(obj, "user_id");
        const json& vec = detail::require_field(obj, "vector");
        if (!vec.is_array() || vec.size() != kEmbeddingDim)
            throw ProtocolError("malformed request: field 'vector' must be an array of 5 numbers");
        for (int i = 0; i < kEmbeddingDim; ++i) {
            if (!vec[static_cast<std::size_t>(i)].is_number())
                throw ProtocolError("malformed request: 'vector' entries must be numbers");
            r.vector[i] = vec[static_cast<std::size_t>(i)].get<float>();
        }
        return r;
    }
    if (type == "result") {
        ResultResponse r;
        r.request_id = detail::require_string(obj, "request_id");
        if (obj.contains("face_uid")) r.face_uid = detail::require_string(obj, "face_uid");
        const json& matches = detail::require_field(obj, "matches");
        if (!matches.is_array())
            throw ProtocolError("malformed request: field 'matches' must be an array");
        for (const auto& m : matches) {
            if (!m.is_object())
                throw ProtocolError("malformed request: 'matches' entries must be objects");
            Match match;
            match.user_id = detail::require_int(m, "user_id");
            const json& dist = detail::require_field(m, "distance");
            if (!dist.is_number())
                throw ProtocolError("malformed request: field 'distance' must be a number");
            match.distance = dist.get<double>();
            r.matches.push_back(match);
        }
        if (obj.contains("empty_store")) {
            if (!obj["empty_store"].is_boolean())
                throw ProtocolError("malformed request: field 'empty_store' must be a boolean");
            r.empty_store = obj["empty_store"].get<bool>();
        }
        return r;
    }
    if (type == "pong") return PongResponse{};
    if (type == "error") return ErrorResponse{detail::require_string(obj, "message")};
    throw ProtocolError("malformed request: unknown type '" + type + "'");
}

}  // namespace facekit::wire
