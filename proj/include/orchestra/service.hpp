#pragma once

#include <memory>
#include <string>

#include "orchestra/runtime.hpp"

namespace orchestra {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
};

/// HTTP front end over a Runtime.
///
///   POST /cases {question, label_set?, aliases?, gold?, id?, k?} -> 202 {case_id}
///   GET  /cases/{id}     status, plus the case result once done
///   GET  /traces/{id}    the case's trace records
///   GET  /tools          render_context bytes
///   GET  /healthz
///
/// Case requests and traces live under <output_dir>/service; every response
/// about a case is rebuilt from those files.
class Service {
 public:
  Service(std::unique_ptr<Runtime> runtime, ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and starts serving in the background. Throws Io when the address
  /// cannot be bound.
  void start();
  int port() const;
  /// Blocks until stop().
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace orchestra
