#pragma once

namespace kdiag::cli {

// Entry point for the kdiag binary. Returns the process exit code:
// 0 success, 2 usage / configuration / protocol errors, 3 input or parse
// errors, 4 numeric failures.
int run(int argc, const char* const* argv);

}  // namespace kdiag::cli
