#pragma once

#include <memory>
#include <string>

#include "policylab/gateway.hpp"

namespace policylab::gateway {

/// HTTP front end for a Workbench. All endpoints live under `/api/v1` and
/// authenticate with `Authorization: Bearer <token>`.
class HttpServer {
 public:
  HttpServer(Workbench& workbench, TokenMap tokens);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Throws Error(Internal) when the address cannot be bound.
  void bind(const std::string& host, int port);
  /// Binds an ephemeral port and returns it.
  int bind_any_port(const std::string& host);
  /// Serves until stop(). Call after bind.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace policylab::gateway
