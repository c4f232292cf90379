#include "verbatim/sandbox_policy.hpp"

#include <algorithm>
#include <array>
#include <regex>

#include "verbatim/text.hpp"

namespace verbatim {

namespace {

std::string_view head(std::string_view dotted) {
  return dotted.substr(0, dotted.find('.'));
}

constexpr std::array<std::string_view, 16> kNetwork = {
    "socket",  "urllib",   "urllib2", "urllib3",  "requests",  "http",
    "httpx",   "aiohttp",  "ftplib",  "smtplib",  "telnetlib", "poplib",
    "imaplib", "paramiko", "websocket", "xmlrpc"};

constexpr std::array<std::string_view, 5> kProcess = {
    "subprocess", "multiprocessing", "pty", "ctypes", "signal"};

constexpr std::array<std::string_view, 12> kProcessCalls = {
    "os.system", "os.popen",  "os.fork",   "os.kill",  "os.execv", "os.execve",
    "os.execl",  "os.execvp", "os.spawnl", "os.spawnv", "os.posix_spawn",
    "os.startfile"};

}  // namespace

bool is_network_module(std::string_view module) {
  const auto h = head(module);
  return std::find(kNetwork.begin(), kNetwork.end(), h) != kNetwork.end();
}

bool is_process_module(std::string_view module) {
  const auto h = head(module);
  return std::find(kProcess.begin(), kProcess.end(), h) != kProcess.end();
}

bool is_process_call(std::string_view dotted_name) {
  return std::find(kProcessCalls.begin(), kProcessCalls.end(), dotted_name) !=
         kProcessCalls.end();
}

std::vector<PolicyViolation> scan_source(std::string_view source) {
  static const std::regex kImport(R"(^\s*import\s+(.+)$)");
  static const std::regex kFromImport(R"(^\s*from\s+([A-Za-z_][\w.]*)\s+import\s*(.*)$)");
  static const std::regex kDotted(R"(([A-Za-z_][\w]*(?:\.[A-Za-z_]\w*)+)\s*\()");
  static const std::regex kOpen(R"(\bopen\s*\(\s*(?:r|b|rb|f)?(['"])([^'"]*)\1)");

  std::vector<PolicyViolation> out;
  std::size_t line_no = 0;
  for (const auto& raw : text::split(source, '\n')) {
    ++line_no;
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::smatch m;
    std::vector<std::string> modules;
    if (std::regex_search(line, m, kFromImport)) {
      modules.push_back(m[1]);
      for (const auto& part : text::split(m[2].str(), ',')) {
        const auto words = text::split(text::collapse_whitespace(text::trim(part)), ' ');
        if (words.empty() || words.front().empty()) continue;
        const std::string name = m[1].str() + "." + words.front();
        if (is_process_call(name)) out.push_back({"ProcessAccess", "import of '" + name + "'", line_no});
      }
    } else if (std::regex_search(line, m, kImport)) {
      for (const auto& part : text::split(m[1].str(), ',')) {
        const auto words = text::split(text::collapse_whitespace(text::trim(part)), ' ');
        if (!words.empty() && !words.front().empty()) modules.push_back(words.front());
      }
    }
    for (const auto& mod : modules) {
      if (is_network_module(mod)) {
        out.push_back({"NetworkAccess", "import of '" + mod + "'", line_no});
      } else if (is_process_module(mod)) {
        out.push_back({"ProcessAccess", "import of '" + mod + "'", line_no});
      }
    }
    for (auto it = std::sregex_iterator(line.begin(), line.end(), kDotted);
         it != std::sregex_iterator(); ++it) {
      const std::string name = (*it)[1];
      if (is_process_call(name)) {
        out.push_back({"ProcessAccess", "call to '" + name + "'", line_no});
      } else if (is_network_module(name)) {
        out.push_back({"NetworkAccess", "call to '" + name + "'", line_no});
      }
    }
    for (auto it = std::sregex_iterator(line.begin(), line.end(), kOpen);
         it != std::sregex_iterator(); ++it) {
      const std::string path = (*it)[2];
      if (text::starts_with(path, "/") || text::starts_with(path, "~") ||
          path == ".." || text::starts_with(path, "../") ||
          text::contains(path, "/../")) {
        out.push_back({"FilesystemEscape", "open('" + path + "')", line_no});
      }
    }
  }
  return out;
}

}  // namespace verbatim
