#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lincomb {

enum class ErrorCode {
    DimensionMismatch,
    ShapeMismatch,
    MissingWitness,
    NonSquare,
    NonFinite,
    Infeasible,
    Unbounded,
    DegenerateInstance,
    InvalidArgument,
    SolverFailure,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

}  // namespace lincomb
