#ifndef COOT_COMMON_HPP
#define COOT_COMMON_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace coot {

enum class ErrorKind { Io, Parse, Config, Numeric, Net, Proto, Internal };

const char* to_string(ErrorKind kind);

/// Error type carried across the library; `kind` maps to the CLI's
/// machine-parsable failure categories.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a master seed, used for
/// per-repeat and per-collaborator rngs (splitmix64 step).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// Shortest round-trip decimal for a double. All serialized reals go
/// through this so that encode/decode is lossless and output is canonical.
std::string format_double(double x);

/// Inverse of format_double; throws Error{Parse} on garbage or trailing junk.
double parse_double(const std::string& s);

} // namespace coot

#endif
