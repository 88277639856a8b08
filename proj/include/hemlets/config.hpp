#pragma once

/// \file config.hpp
/// \brief Plain-text `key = value` configuration files.
///
/// One assignment per line; `#` starts a comment; keys are unique. Readers
/// take values with get(); reject_unused() fails on keys nobody read.

#include "hemlets/error.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace hemlets {

class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(std::istream& is)
    {
        KeyValueConfig cfg;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            if (const auto hash = line.find('#'); hash != std::string::npos)
                line.erase(hash);
            const std::string body = trim(line);
            if (body.empty())
                continue;
            const auto eq = body.find('=');
            if (eq == std::string::npos)
                throw FormatError("config line " + std::to_string(line_no) + ": expected 'key = value'");
            const std::string key = trim(body.substr(0, eq));
            const std::string value = trim(body.substr(eq + 1));
            if (key.empty())
                throw FormatError("config line " + std::to_string(line_no) + ": empty key");
            if (!cfg.values_.emplace(key, value).second)
                throw FormatError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        }
        return cfg;
    }

    static KeyValueConfig load(const std::string& path)
    {
        std::ifstream is(path);
        if (!is)
            throw IoError("cannot open config '" + path + "'");
        return parse(is);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    template <class T>
    T get(const std::string& key, const T& fallback) const
    {
        const auto it = values_.find(key);
        if (it == values_.end())
            return fallback;
        used_.insert(key);
        return convert<T>(key, it->second);
    }

    std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const
    {
        const auto it = values_.find(key);
        if (it == values_.end())
            return fallback;
        used_.insert(key);
        std::vector<std::string> out;
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ','))
            if (auto t = trim(item); !t.empty())
                out.push_back(t);
        return out;
    }

    void reject_unused() const
    {
        for (const auto& [key, value] : values_)
            if (!used_.count(key))
                throw ValidationError("unknown config key '" + key + "'");
    }

private:
    static std::string trim(const std::string& s)
    {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos)
            return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    template <class T>
    static T convert(const std::string& key, const std::string& text)
    {
        if constexpr (std::is_same_v<T, std::string>) {
            return text;
        } else if constexpr (std::is_same_v<T, bool>) {
            if (text == "true" || text == "1" || text == "yes")
                return true;
            if (text == "false" || text == "0" || text == "no")
                return false;
            throw FormatError("config key '" + key + "': expected a boolean, got '" + text + "'");
        } else {
            T v{};
            const char* first = text.data();
            const char* last = text.data() + text.size();
            auto res = std::from_chars(first, last, v);
            if (res.ec != std::errc() || res.ptr != last)
                throw FormatError("config key '" + key + "': cannot parse '" + text + "'");
            return v;
        }
    }

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

} // namespace hemlets
