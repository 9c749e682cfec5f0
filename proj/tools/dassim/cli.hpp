#pragma once

namespace dassim::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kConfigError = 2,
    kValidationError = 3,
    kNumericError = 4,
    kMissingArtifact = 5,
};

int main(int argc, char** argv);

}  // namespace dassim::cli
