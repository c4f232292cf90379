#pragma once

#include <memory>
#include <string>

#include "verbatim/error.hpp"
#include "verbatim/service.hpp"

namespace httplib {
class Server;
}

namespace verbatim {

// HTTP status for a domain error: 404 unknown ids, 409 incomplete review,
// 422 malformed input, 503 gateway or kernel unavailable.
int http_status_for(Errc code);

// JSON front end over Service.
class HttpServer {
 public:
  // `token` non-empty requires "Authorization: Bearer <token>".
  HttpServer(Service& service, std::string token = {});
  ~HttpServer();

  // Returns the bound port; `port` 0 picks a free one. Throws Io.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

 private:
  void routes();

  Service& service_;
  std::string token_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace verbatim
