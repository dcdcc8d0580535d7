#pragma once

// Key/value run configuration.
//
//   # comment
//   seed = 42
//   [lord]
//   epochs = 40          -> key "lord.epochs"
//   dictionary = "d.tsv" -> quotes are stripped

#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "adenorm/error.hpp"
#include "adenorm/ontology.hpp"

namespace adenorm {

class Settings {
public:
    static Settings parse(std::istream& in) {
        Settings s;
        std::string raw, section;
        std::size_t line_no = 0;
        while (std::getline(in, raw)) {
            ++line_no;
            std::string line = trim(strip_comment(raw));
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw ParseError("unterminated section header", line_no);
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string::npos) throw ParseError("expected key = value", line_no);
            std::string key = trim(line.substr(0, eq));
            std::string value = unquote(trim(line.substr(eq + 1)));
            if (key.empty()) throw ParseError("empty key", line_no);
            s.values_[section.empty() ? key : section + "." + key] = value;
        }
        return s;
    }

    static Settings load(const std::string& path) {
        auto in = detail::open_input(path);
        try {
            return parse(in);
        } catch (const ParseError& e) {
            throw ParseError(path + ": " + e.what());
        }
    }

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    bool has(const std::string& key) const { return values_.contains(key); }

    std::optional<std::string> get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    std::string str(const std::string& key, std::string fallback = {}) const {
        return get(key).value_or(std::move(fallback));
    }

    std::string required(const std::string& key) const {
        auto v = get(key);
        if (!v || v->empty()) throw ValidationError("missing required setting '" + key + "'");
        return *v;
    }

    template <typename T>
    T number(const std::string& key, T fallback) const {
        auto v = get(key);
        if (!v) return fallback;
        T out{};
        auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
        if (ec != std::errc{} || ptr != v->data() + v->size())
            throw ValidationError("setting '" + key + "' is not a valid number: '" + *v + "'");
        return out;
    }

    const std::map<std::string, std::string>& values() const noexcept { return values_; }

private:
    static std::string strip_comment(const std::string& s) {
        bool quoted = false;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '"') quoted = !quoted;
            if (s[i] == '#' && !quoted) return s.substr(0, i);
        }
        return s;
    }

    static std::string trim(std::string_view s) {
        const char* ws = " \t\r\n";
        auto b = s.find_first_not_of(ws);
        if (b == std::string_view::npos) return {};
        auto e = s.find_last_not_of(ws);
        return std::string(s.substr(b, e - b + 1));
    }

    static std::string unquote(std::string s) {
        if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
        return s;
    }

    std::map<std::string, std::string> values_;
};

}  // namespace adenorm
