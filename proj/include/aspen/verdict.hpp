#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace aspen {

// Outcome of a validation step: kOk or a module-specific violation code.
template <typename Code>
struct Verdict {
    Code code = Code::kOk;
    std::string detail;

    static Verdict pass() { return {}; }
    static Verdict fail(Code c, std::string why = {}) { return {c, std::move(why)}; }

    bool ok() const { return code == Code::kOk; }
    explicit operator bool() const { return ok(); }
};

// Exception carrying a violation code, thrown by state-transition functions
// that reject their input atomically.
template <typename Code>
class ProtocolError : public std::runtime_error {
public:
    ProtocolError(Code code, const std::string &what) : std::runtime_error(what), code_(code) {}
    explicit ProtocolError(const Verdict<Code> &v) : std::runtime_error(v.detail), code_(v.code) {}

    Code code() const { return code_; }

private:
    Code code_;
};

}  // namespace aspen
