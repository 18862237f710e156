#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mtu::cli {

/// Process exit codes.
enum ExitCode : int {
  kPass = 0,
  kFailed = 1,        // verification ran but its criteria did not hold; internal errors
  kConfigError = 2,
  kTrainingFailure = 3,
  kMissingArtifact = 4,
  kPrecondition = 5,
};

/// Entry point shared by the executable and in-process callers.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Git-style blob hash: SHA-1 of "blob <size>\0" followed by the bytes.
std::string blob_hash(const std::string& bytes);

inline constexpr const char* kManifestName = "manifest.json";

}  // namespace mtu::cli
