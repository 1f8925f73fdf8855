// Command-line front end: synth, train, eval, ablate, sweep, explain,
// mask-eval.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mmdyn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;

// `args` excludes the program name. Failures print one line prefixed with
// "error[usage]:", "error[config]:" or "error[runtime]:" to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

const std::vector<std::string>& verbs();

}  // namespace mmdyn::cli
