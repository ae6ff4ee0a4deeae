#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "dcgm/error.hpp"

namespace dcgm::detail {

inline std::ifstream open_input(const std::filesystem::path& path, bool binary = false)
{
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) {
        throw Error("cannot open '" + path.string() + "' for reading");
    }
    return in;
}

inline std::ofstream open_output(const std::filesystem::path& path, bool binary = false)
{
    std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    return out;
}

inline std::vector<std::string_view> split(std::string_view s, char sep)
{
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.push_back(s.substr(start));
            return parts;
        }
        parts.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::string_view trim(std::string_view s)
{
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

inline void chomp(std::string& line)
{
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

/// Shortest representation that parses back to the identical double.
inline std::string format_double(double value)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const char* what)
{
    s = trim(s);
    double value = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), value);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ParseError(std::string("invalid ") + what + " '" + std::string(s) + "'");
    }
    return value;
}

template <typename Int>
Int parse_int(std::string_view s, const char* what)
{
    s = trim(s);
    Int value{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), value);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ParseError(std::string("invalid ") + what + " '" + std::string(s) + "'");
    }
    return value;
}

// Little-endian binary helpers for the versioned containers.
static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

template <typename T>
void write_pod(std::ostream& out, const T& value)
{
    static_assert(std::is_trivially_copyable_v<T>);
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in)
{
    static_assert(std::is_trivially_copyable_v<T>);
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) {
        throw ParseError("unexpected end of binary container");
    }
    return value;
}

inline void write_string(std::ostream& out, std::string_view s)
{
    write_pod<std::uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in)
{
    auto size = read_pod<std::uint64_t>(in);
    if (size > (1ULL << 32)) {
        throw ParseError("corrupt string length in binary container");
    }
    std::string s(size, '\0');
    in.read(s.data(), static_cast<std::streamsize>(size));
    if (!in) {
        throw ParseError("unexpected end of binary container");
    }
    return s;
}

inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 14695981039346656037ULL)
{
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace dcgm::detail
