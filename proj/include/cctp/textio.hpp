#pragma once

// Shared plumbing for the versioned plain-text artifact formats. Every
// artifact starts with a schema line ("#schema <kind> v<version>"), followed
// by a "#config" line with the resolved run configuration, followed by body
// lines of space-separated key=value pairs or positional fields.

#include <cerrno>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

namespace cctp {

class ArtifactError : public std::runtime_error {
public:
    enum class Kind { missing, schema_mismatch, malformed };

    ArtifactError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

namespace textio {

/// Shortest representation that round-trips exactly.
inline std::string fmt_double(double v) { return fmt::format("{}", v); }

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

/// Whitespace tokenization (runs of spaces collapse).
inline std::vector<std::string_view> fields(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

[[noreturn]] inline void malformed(std::string_view what) {
    throw ArtifactError(ArtifactError::Kind::malformed, std::string(what));
}

template <typename Int>
Int parse_int(std::string_view s) {
    Int v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) malformed(fmt::format("bad integer '{}'", s));
    return v;
}

inline double parse_double(std::string_view s) {
    std::string tmp(s);
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(tmp.c_str(), &end);
    if (tmp.empty() || end != tmp.c_str() + tmp.size() || errno == ERANGE)
        malformed(fmt::format("bad number '{}'", s));
    return v;
}

/// Ordered key=value record; lookups throw ArtifactError on absence.
class KeyValues {
public:
    KeyValues() = default;

    static KeyValues parse(std::string_view line) {
        KeyValues kv;
        for (std::string_view f : fields(line)) {
            std::size_t eq = f.find('=');
            if (eq == std::string_view::npos) malformed(fmt::format("expected key=value, got '{}'", f));
            kv.values_.emplace(std::string(f.substr(0, eq)), std::string(f.substr(eq + 1)));
        }
        return kv;
    }

    bool has(std::string_view key) const { return values_.find(std::string(key)) != values_.end(); }

    const std::string& str(std::string_view key) const {
        auto it = values_.find(std::string(key));
        if (it == values_.end()) malformed(fmt::format("missing key '{}'", key));
        return it->second;
    }

    int integer(std::string_view key) const { return parse_int<int>(str(key)); }
    std::uint64_t u64(std::string_view key) const { return parse_int<std::uint64_t>(str(key)); }
    double number(std::string_view key) const { return parse_double(str(key)); }

    const std::map<std::string, std::string, std::less<>>& entries() const noexcept { return values_; }

private:
    std::map<std::string, std::string, std::less<>> values_;
};

inline std::string schema_line(std::string_view kind, int version) {
    return fmt::format("#schema {} v{}\n", kind, version);
}

/// Consumes the schema line; throws schema_mismatch if kind or version differ.
inline void expect_schema(std::istream& in, std::string_view kind, int version) {
    std::string line;
    if (!std::getline(in, line))
        throw ArtifactError(ArtifactError::Kind::schema_mismatch, fmt::format("empty artifact, expected {}", kind));
    std::string want = schema_line(kind, version);
    want.pop_back();
    if (line != want)
        throw ArtifactError(ArtifactError::Kind::schema_mismatch,
                            fmt::format("expected '{}', found '{}'", want, line));
}

/// Reads the "#config ..." line that follows the schema line.
inline KeyValues read_config(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("#config", 0) != 0) malformed("missing #config line");
    return KeyValues::parse(std::string_view(line).substr(7));
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError(ArtifactError::Kind::missing, fmt::format("cannot open {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ArtifactError(ArtifactError::Kind::missing, fmt::format("cannot write {}", path.string()));
    out << content;
}

}  // namespace textio
}  // namespace cctp
