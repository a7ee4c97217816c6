#ifndef IABSDE_CONFIG_HPP
#define IABSDE_CONFIG_HPP

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "iabsde/errors.hpp"

/**
 * @file config.hpp
 * @brief Experiment configuration: line-oriented `key = value` text.
 *
 * The format is deliberately primitive so that configs stay diff-friendly
 * and readable in any tooling:
 *
 *     # duality cross-check on the flagship instance
 *     experiment.kind = duality
 *     instance        = D1
 *     paths.n_paths   = 1
 *     paths.seed      = 42
 *     output.dir      = out/d1-duality
 *
 * One `key = value` pair per line; `#` starts a comment (full line only);
 * blank lines are ignored; keys use dotted section prefixes by convention
 * but the parser treats them as opaque strings.  Duplicate keys are an
 * error — silently letting a later line win hides exactly the kind of typo
 * config files exist to prevent.
 *
 * Every malformed line or failed numeric conversion raises ConfigParseError
 * naming the line number and the field, which the CLI surfaces verbatim.
 */

namespace iabsde {

/// Immutable-ish key/value store with typed accessors.  Accessors throw
/// ConfigParseError (naming the field) on missing keys or failed
/// conversions; the *_or variants substitute a default when the key is
/// absent but still type-check a present value.
class Config {
public:
    Config() = default;

    static Config parse_text(const std::string& text, const std::string& origin = "<inline>") {
        Config cfg;
        cfg.origin_ = origin;
        std::size_t pos = 0;
        std::size_t line_no = 0;
        while (pos <= text.size()) {
            std::size_t nl = text.find('\n', pos);
            if (nl == std::string::npos) nl = text.size();
            std::string_view line(text.data() + pos, nl - pos);
            pos = nl + 1;
            ++line_no;
            cfg.take_line(line, line_no);
            if (nl == text.size()) break;
        }
        return cfg;
    }

    static Config parse_file(const std::filesystem::path& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f)
            throw Error(ErrorCode::ConfigParseError,
                        "cannot read config file '" + path.string() + "'");
        std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        return parse_text(text, path.string());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    /// Override or inject a value after parsing (the CLI's --seed flag).
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    const std::string& get_string(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end())
            throw Error(ErrorCode::ConfigParseError,
                        origin_ + ": missing required field '" + key + "'");
        return it->second;
    }

    std::string get_string_or(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key) const { return to_double(key, get_string(key)); }

    double get_double_or(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : to_double(key, it->second);
    }

    std::uint64_t get_u64(const std::string& key) const { return to_u64(key, get_string(key)); }

    std::uint64_t get_u64_or(const std::string& key, std::uint64_t fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : to_u64(key, it->second);
    }

    std::size_t get_size(const std::string& key) const {
        return static_cast<std::size_t>(get_u64(key));
    }

    std::size_t get_size_or(const std::string& key, std::size_t fallback) const {
        return static_cast<std::size_t>(get_u64_or(key, fallback));
    }

    /// All keys in lexicographic order — the manifest iterates these so its
    /// output is stable regardless of declaration order in the file.
    std::vector<std::string> keys() const {
        std::vector<std::string> out;
        out.reserve(values_.size());
        for (const auto& [k, v] : values_) out.push_back(k);
        return out;
    }

    const std::string& origin() const noexcept { return origin_; }

private:
    void take_line(std::string_view line, std::size_t line_no) {
        std::string_view body = trim(line);
        if (body.empty() || body.front() == '#') return;
        const std::size_t eq = body.find('=');
        if (eq == std::string_view::npos)
            throw Error(ErrorCode::ConfigParseError,
                        origin_ + ":" + std::to_string(line_no) +
                            ": expected 'key = value', got '" + std::string(body) + "'");
        const std::string key(trim(body.substr(0, eq)));
        const std::string value(trim(body.substr(eq + 1)));
        if (key.empty())
            throw Error(ErrorCode::ConfigParseError,
                        origin_ + ":" + std::to_string(line_no) + ": empty key");
        if (value.empty())
            throw Error(ErrorCode::ConfigParseError, origin_ + ":" + std::to_string(line_no) +
                                                         ": field '" + key + "' has no value");
        if (!values_.emplace(key, value).second)
            throw Error(ErrorCode::ConfigParseError, origin_ + ":" + std::to_string(line_no) +
                                                         ": duplicate field '" + key + "'");
    }

    static std::string_view trim(std::string_view s) {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
            s.remove_prefix(1);
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
            s.remove_suffix(1);
        return s;
    }

    double to_double(const std::string& key, const std::string& raw) const {
        double v = 0.0;
        const char* begin = raw.data();
        const char* end = raw.data() + raw.size();
        const auto res = std::from_chars(begin, end, v);
        if (res.ec != std::errc{} || res.ptr != end)
            throw Error(ErrorCode::ConfigParseError,
                        origin_ + ": field '" + key + "' is not a number: '" + raw + "'");
        return v;
    }

    std::uint64_t to_u64(const std::string& key, const std::string& raw) const {
        std::uint64_t v = 0;
        const char* begin = raw.data();
        const char* end = raw.data() + raw.size();
        const auto res = std::from_chars(begin, end, v);
        if (res.ec != std::errc{} || res.ptr != end)
            throw Error(ErrorCode::ConfigParseError, origin_ + ": field '" + key +
                                                         "' is not a non-negative integer: '" +
                                                         raw + "'");
        return v;
    }

    std::string origin_ = "<inline>";
    std::map<std::string, std::string> values_;
};

}  // namespace iabsde

#endif  // IABSDE_CONFIG_HPP
