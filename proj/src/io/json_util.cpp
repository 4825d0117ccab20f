#include "semdec/io/json_util.hpp"

#include <fstream>
#include <sstream>

namespace semdec::io {

void reject_unknown_keys(const Json& obj, std::initializer_list<std::string_view> allowed, const std::string& section)
{
    if (!obj.is_object())
        throw ConfigError(section + ": expected an object");
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (auto a : allowed)
            ok = ok || a == key;
        if (!ok)
            throw ConfigError(section + "." + key + ": unknown key");
    }
}

Json number_or_inf(double v)
{
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    return v;
}

void read_number_or_inf(const Json& obj, const char* key, double& out, const std::string& section)
{
    auto it = obj.find(key);
    if (it == obj.end())
        return;
    if (it->is_string()) {
        const auto s = it->get<std::string>();
        if (s == "inf")
            out = INFINITY;
        else if (s == "-inf")
            out = -INFINITY;
        else
            throw ConfigError(section + "." + key + ": expected a number or \"inf\"");
        return;
    }
    if (!it->is_number())
        throw ConfigError(section + "." + key + ": expected a number");
    out = it->get<double>();
}

std::string dump(const Json& j)
{
    return j.dump(2) + "\n";
}

void write_json(const std::filesystem::path& path, const Json& j)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << dump(j);
    if (!out)
        throw DataError("write failed: " + path.string());
}

Json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return Json::parse(buf.str());
    } catch (const Json::exception& e) {
        throw DataError(path.string() + ": malformed JSON: " + e.what());
    }
}

} // namespace semdec::io
