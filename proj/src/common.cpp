#include "coot/common.hpp"

#include <charconv>
#include <cmath>
#include <system_error>

namespace coot {

const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Io: return "io";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Config: return "config";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Net: return "net";
    case ErrorKind::Proto: return "proto";
    case ErrorKind::Internal: return "internal";
    }
    return "internal";
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    double value = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc{} || res.ptr != last) {
        throw Error(ErrorKind::Parse, "not a real number: '" + s + "'");
    }
    return value;
}

} // namespace coot
