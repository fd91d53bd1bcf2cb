#pragma once

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "srl/core.hpp"

namespace srl::jsonu {

using nlohmann::json;

/// Rejects keys outside `allowed`; `context` prefixes the error message.
inline void require_keys(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view context) {
    if (!obj.is_object()) throw ValidationError(std::string(context) + ": expected a JSON object");
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ValidationError(std::string(context) + ": unknown key '" + key + "'");
        }
    }
}

/// Typed field access with a readable error instead of json::type_error.
template <class T>
T get(const json& obj, std::string_view key, std::string_view context) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw ValidationError(std::string(context) + ": missing key '" + std::string(key) + "'");
    try {
        return it->template get<T>();
    } catch (const json::exception&) {
        throw ValidationError(std::string(context) + ": key '" + std::string(key) + "' has the wrong type");
    }
}

template <class T>
T get_or(const json& obj, std::string_view key, T fallback, std::string_view context) {
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return fallback;
    try {
        return it->template get<T>();
    } catch (const json::exception&) {
        throw ValidationError(std::string(context) + ": key '" + std::string(key) + "' has the wrong type");
    }
}

inline json read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(path + ": cannot open file");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(path + ": invalid JSON: " + e.what());
    }
}

/// Pretty-printed with a trailing newline; key order is nlohmann's sorted
/// map order, so output is stable across runs.
inline void write_file(const std::string& path, const json& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot write file");
    out << doc.dump(2) << '\n';
}

}  // namespace srl::jsonu
