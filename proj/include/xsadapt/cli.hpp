#pragma once

namespace xsa {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitConfig = 2,
    kExitData = 3,
    kExitInvariant = 4,
    kExitIo = 5,
    kExitInternal = 6,
};

/// Entry point behind the `xsadapt` binary.
int run_cli(int argc, char** argv);

}  // namespace xsa
