#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace pipeh::wire {

// ---------------------------------------------------------------------------
// Wire protocol "pipe-wire/1": one JSON object per line.
//
//   {"v":"pipe-wire/1","type":"reset","session":"s1","payload":{"task_id":"m1"}}
//   {"v":"pipe-wire/1","type":"observation","session":"s1",
//    "payload":{"text":"...","done":false}}
//   {"v":"pipe-wire/1","type":"action","session":"s1","payload":{"text":"..."}}
//   {"v":"pipe-wire/1","type":"result","session":"s1",
//    "payload":{"reward":1.0,"length":4,"legacy_count":0}}
//   {"v":"pipe-wire/1","type":"error","session":"s1","payload":{"message":"..."}}
//
// A session starts with reset and then strictly alternates observation and
// action until an observation carries done=true (followed by one result
// record from the serving side). Sessions are isolated by id; a malformed
// line yields an error message and leaves sessions untouched.
// ---------------------------------------------------------------------------

inline constexpr const char* kProtocolVersion = "pipe-wire/1";

struct WireMessage {
    enum class Type { Reset, Observation, Action, Result, Error };
    Type type = Type::Error;
    std::string session;
    nlohmann::json payload;

    static WireMessage reset(std::string session, std::string task_id) {
        WireMessage m;
        m.type = Type::Reset;
        m.session = std::move(session);
        m.payload = {{"task_id", std::move(task_id)}};
        return m;
    }
    static WireMessage observation(std::string session, std::string text, bool done,
                                   std::optional<double> reward = std::nullopt) {
        WireMessage m;
        m.type = Type::Observation;
        m.session = std::move(session);
        m.payload = {{"text", std::move(text)}, {"done", done}};
        if (reward) m.payload["reward"] = *reward;
        return m;
    }
    static WireMessage action(std::string session, std::string text) {
        WireMessage m;
        m.type = Type::Action;
        m.session = std::move(session);
        m.payload = {{"text", std::move(text)}};
        return m;
    }
    static WireMessage result(std::string session, double reward, int length,
                              long legacy_count) {
        WireMessage m;
        m.type = Type::Result;
        m.session = std::move(session);
        m.payload = {{"reward", reward}, {"length", length}, {"legacy_count", legacy_count}};
        return m;
    }
    static WireMessage error(std::string session, std::string message) {
        WireMessage m;
        m.type = Type::Error;
        m.session = std::move(session);
        m.payload = {{"message", std::move(message)}};
        return m;
    }

    std::string text() const { return payload.value("text", ""); }
    bool done() const { return payload.value("done", false); }
};

inline const char* type_name(WireMessage::Type t) {
    switch (t) {
        case WireMessage::Type::Reset: return "reset";
        case WireMessage::Type::Observation: return "observation";
        case WireMessage::Type::Action: return "action";
        case WireMessage::Type::Result: return "result";
        case WireMessage::Type::Error: return "error";
    }
    return "?";
}

inline std::optional<WireMessage::Type> parse_type(std::string_view s) {
    if (s == "reset") return WireMessage::Type::Reset;
    if (s == "observation") return WireMessage::Type::Observation;
    if (s == "action") return WireMessage::Type::Action;
    if (s == "result") return WireMessage::Type::Result;
    if (s == "error") return WireMessage::Type::Error;
    return std::nullopt;
}

// One line, newline-terminated.
inline std::string encode(const WireMessage& m) {
    nlohmann::json j;
    j["v"] = kProtocolVersion;
    j["type"] = type_name(m.type);
    j["session"] = m.session;
    j["payload"] = m.payload.is_null() ? nlohmann::json::object() : m.payload;
    return j.dump() + "\n";
}

inline std::optional<WireMessage> decode(std::string_view line, std::string* error_out) {
    auto fail = [error_out](const std::string& why) -> std::optional<WireMessage> {
        if (error_out) *error_out = why;
        return std::nullopt;
    };
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        return fail(std::string("malformed message: ") + e.what());
    }
    if (!j.is_object()) return fail("malformed message: not an object");
    if (j.value("v", "") != kProtocolVersion)
        return fail("unsupported protocol version");
    auto t = parse_type(j.value("type", ""));
    if (!t) return fail("unknown message type");
    if (!j.contains("session") || !j["session"].is_string() || j["session"].get<std::string>().empty())
        return fail("missing session id");
    WireMessage m;
    m.type = *t;
    m.session = j["session"].get<std::string>();
    m.payload = j.value("payload", nlohmann::json::object());
    if (!m.payload.is_object()) return fail("payload must be an object");
    return m;
}

} // namespace pipeh::wire
