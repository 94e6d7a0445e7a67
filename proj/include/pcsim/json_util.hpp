#pragma once

// Small helpers for reading JSON documents with field-path diagnostics.

#include <pcsim/error.hpp>

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <string_view>

namespace pcsim::json_util {

using nlohmann::json;

inline std::string join_path(std::string_view parent, std::string_view key) {
    if (parent.empty()) return std::string(key);
    return std::string(parent) + "." + std::string(key);
}

template <typename T>
T as(const json& j, const std::string& path) {
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!j.is_boolean()) throw ConfigError(path + ": expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!j.is_number_integer()) throw ConfigError(path + ": expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0)
                    throw ConfigError(path + ": expected a non-negative integer");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!j.is_number()) throw ConfigError(path + ": expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!j.is_string()) throw ConfigError(path + ": expected a string");
        }
        return j.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

template <typename T>
T required(const json& obj, std::string_view key, std::string_view parent) {
    const std::string path = join_path(parent, key);
    auto it = obj.find(std::string(key));
    if (it == obj.end()) throw ConfigError(path + ": missing required field");
    return as<T>(*it, path);
}

template <typename T>
std::optional<T> optional(const json& obj, std::string_view key, std::string_view parent) {
    auto it = obj.find(std::string(key));
    if (it == obj.end() || it->is_null()) return std::nullopt;
    return as<T>(*it, join_path(parent, key));
}

inline void expect_object(const json& j, std::string_view path) {
    if (!j.is_object())
        throw ConfigError((path.empty() ? std::string("document") : std::string(path)) +
                          ": expected an object");
}

} // namespace pcsim::json_util
