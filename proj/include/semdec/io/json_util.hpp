#pragma once

#include "semdec/types.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>

namespace semdec::io {

using Json = nlohmann::json;

/// Throws ConfigError when `obj` is not an object or has a key outside `allowed`.
void reject_unknown_keys(const Json& obj, std::initializer_list<std::string_view> allowed, const std::string& section);

/// Copies obj[key] into `out` when present; type errors become ConfigError naming section.key.
template <typename T>
void read_field(const Json& obj, const char* key, T& out, const std::string& section)
{
    auto it = obj.find(key);
    if (it == obj.end())
        return;
    try {
        out = it->template get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError(section + "." + key + ": " + e.what());
    }
}

/// JSON has no infinity; "inf" strings stand in for it.
Json number_or_inf(double v);
void read_number_or_inf(const Json& obj, const char* key, double& out, const std::string& section);

/// Two-space indentation and a trailing newline. Keys are sorted, so equal
/// values always serialize to identical bytes.
std::string dump(const Json& j);
void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

} // namespace semdec::io
