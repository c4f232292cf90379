// verbatim-stub-kernel: the stub interpreter behind the NDJSON wire
// protocol on stdin/stdout.

#include <iostream>
#include <string>

#include "verbatim/error.hpp"
#include "verbatim/kernel.hpp"

int main() {
  std::ios::sync_with_stdio(false);
  verbatim::StubKernelEngine engine;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    verbatim::KernelMessage reply;
    try {
      const auto request = verbatim::KernelMessage::from_line(line);
      reply = engine.handle(request);
      std::cout << reply.to_line() << '\n' << std::flush;
      if (request.kind == verbatim::MessageKind::Shutdown && engine.finished()) break;
    } catch (const verbatim::Error& e) {
      reply.kind = verbatim::MessageKind::Result;
      reply.payload = {{"status", "error"},
                       {"error", verbatim::to_string(e.code())},
                       {"message", e.detail()}};
      std::cout << reply.to_line() << '\n' << std::flush;
    }
  }
  return 0;
}
