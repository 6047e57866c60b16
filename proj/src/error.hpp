#pragma once

#include <stdexcept>
#include <string>

namespace progtune {

// Error categories mirrored 1:1 by the pgt_status codes in the C header.
enum class Errc {
    config,
    shape,
    index,
    length,
    state,
    contract,
    io,
    format,
    freeze_violation,
    diverged,
    oracle,
    invalid_argument,
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline const char* errc_name(Errc c) {
    switch (c) {
    case Errc::config: return "config";
    case Errc::shape: return "shape";
    case Errc::index: return "index";
    case Errc::length: return "length";
    case Errc::state: return "state";
    case Errc::contract: return "contract";
    case Errc::io: return "io";
    case Errc::format: return "format";
    case Errc::freeze_violation: return "freeze_violation";
    case Errc::diverged: return "diverged";
    case Errc::oracle: return "oracle";
    case Errc::invalid_argument: return "invalid_argument";
    }
    return "unknown";
}

}  // namespace progtune
