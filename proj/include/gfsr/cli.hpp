#pragma once

namespace gfsr {

// Exit codes: 0 success, 1 usage error, 2 data/file error, 3 numerical failure.
int run(int argc, char** argv);

}  // namespace gfsr
