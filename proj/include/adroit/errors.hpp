#pragma once

#include <stdexcept>
#include <string>

namespace adroit {

// File missing, unreadable, or short.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

// File readable but malformed (bad record count, bad header, bad magic).
class format_error : public std::runtime_error {
public:
    explicit format_error(const std::string& what) : std::runtime_error(what) {}
};

// Operation called on an object in a state that cannot serve it
// (e.g. acquisition from an empty unlabeled pool).
class invalid_state : public std::runtime_error {
public:
    explicit invalid_state(const std::string& what) : std::runtime_error(what) {}
};

// Training produced a non-finite loss; partial results are preserved upstream.
class divergence_error : public std::runtime_error {
public:
    explicit divergence_error(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration file or inconsistent experiment spec.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace adroit
