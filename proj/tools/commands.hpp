#pragma once

namespace oodmine::cli {

// Exit codes: 0 success, 1 runtime failure, 2 usage error.
int run(int argc, char** argv);

}  // namespace oodmine::cli
