#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace verbatim {

struct PolicyViolation {
  std::string kind;  // NetworkAccess | ProcessAccess | FilesystemEscape | SyntaxError
  std::string detail;
  std::size_t line = 0;
};

// Module classification shared by the static scan and the stub kernel.
bool is_network_module(std::string_view module);
bool is_process_module(std::string_view module);
// Dotted call targets such as os.system or os.popen.
bool is_process_call(std::string_view dotted_name);

// Static denylist scan of cell source: imports of network or process
// modules, process-spawning calls, and open() on absolute or parent-relative
// literal paths.
std::vector<PolicyViolation> scan_source(std::string_view source);

}  // namespace verbatim
