#pragma once

namespace spnas {

/// Entry point of the command-line tool. Returns the process exit code.
int dispatch(int argc, const char* const* argv);

}  // namespace spnas
