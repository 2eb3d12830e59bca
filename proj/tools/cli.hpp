#pragma once

#include <iosfwd>

namespace lincomb::cli {

enum ExitCode : int {
    kOk = 0,
    kCheckFailed = 1,
    kInputError = 2,
    kSolverError = 3,
    kTrainingAborted = 4,
};

/// Entry point of the `lincomb` executable; argv[0] is the program name.
/// Reports go to `out`, single-line errors ("error: <code>: ...") to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lincomb::cli
