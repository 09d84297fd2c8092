#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "bcensus/review.hpp"

namespace bcensus {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8765;  // 0 picks a free port
  std::filesystem::path ui_dir;  // static review UI; a placeholder page when empty
};

// JSON API over a ReviewService:
//   GET  /api/session
//   GET  /api/pairs?state=pending|resolved|all&limit=N
//   POST /api/verdict {pair_key, label, note}
//   GET  /api/stats
//   GET  /api/neighbor?item=ID
//   GET  /img/ID[?corpus=training]   (image/bmp)
class ReviewServer {
 public:
  ReviewServer(ReviewService& service, ServerOptions options);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  // Binds the listening socket and returns the port. Throws InvalidInput
  // when the address cannot be bound.
  int bind();
  // Serves until stop(); bind() must have succeeded.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace bcensus
