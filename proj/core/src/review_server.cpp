#include "bcensus/review_server.hpp"

#include <charconv>
#include <limits>

#include <httplib.h>
#include <sys/socket.h>

#include "bcensus/errors.hpp"

namespace bcensus {

namespace {

constexpr std::string_view kPlaceholderPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>bcensus review</title></head>
<body>
<h1>bcensus review</h1>
<p>No review UI directory was given. The JSON API is available under <code>/api/</code>.</p>
</body></html>
)";

void send_json(httplib::Response& res, const nlohmann::json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view message) {
  send_json(res, {{"error", std::string(message)}}, status);
}

// Maps library exceptions onto HTTP status codes.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const NotFound& e) {
    send_error(res, 404, e.what());
  } catch (const InvalidArgument& e) {
    send_error(res, 400, e.what());
  } catch (const NoEstimate& e) {
    send_error(res, 409, e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

std::size_t parse_limit(const httplib::Request& req) {
  if (!req.has_param("limit")) return 50;
  const auto text = req.get_param_value("limit");
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw InvalidArgument("limit must be a non-negative integer");
  return value;
}

}  // namespace

struct ReviewServer::Impl {
  ReviewService& service;
  ServerOptions options;
  httplib::Server server;
  int port = -1;

  Impl(ReviewService& s, ServerOptions o) : service(s), options(std::move(o)) {
    // httplib also sets SO_REUSEPORT, which would let a second server share a busy port.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
  }

  void routes() {
    server.Get("/api/session", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { send_json(res, service.session_json()); });
    });
    server.Get("/api/stats", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { send_json(res, service.stats_json()); });
    });
    server.Get("/api/pairs", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto filter = parse_pair_filter(req.has_param("state") ? req.get_param_value("state") : "pending");
        send_json(res, service.pairs_json(filter, parse_limit(req)));
      });
    });
    server.Post("/api/verdict", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        nlohmann::json body;
        try {
          body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception&) {
          throw InvalidArgument("request body is not valid JSON");
        }
        if (!body.is_object() || !body.contains("pair_key") || !body.contains("label") ||
            !body["pair_key"].is_string() || !body["label"].is_string()) {
          throw InvalidArgument("expected {pair_key, label, note}");
        }
        std::string note;
        if (body.contains("note") && body["note"].is_string()) note = body["note"].get<std::string>();
        send_json(res, service.submit_verdict(body["pair_key"].get<std::string>(),
                                              body["label"].get<std::string>(), std::move(note)));
      });
    });
    server.Get("/api/neighbor", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        if (!req.has_param("item")) throw InvalidArgument("missing item parameter");
        send_json(res, service.neighbor_json(req.get_param_value("item")));
      });
    });
    server.Get(R"(/img/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const bool training = req.has_param("corpus") && req.get_param_value("corpus") == "training";
        res.set_content(service.image_bmp(req.matches[1].str(), training), "image/bmp");
      });
    });

    if (!options.ui_dir.empty()) {
      if (!server.set_mount_point("/", options.ui_dir.string())) {
        throw InvalidInput("UI directory " + options.ui_dir.string() + " does not exist");
      }
    } else {
      server.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(std::string(kPlaceholderPage), "text/html");
      });
    }
  }
};

ReviewServer::ReviewServer(ReviewService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
  impl_->routes();
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind() {
  auto& o = impl_->options;
  if (o.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(o.host);
  } else {
    impl_->port = impl_->server.bind_to_port(o.host, o.port) ? o.port : -1;
  }
  if (impl_->port < 0) throw InvalidInput("cannot listen on " + o.host + ":" + std::to_string(o.port));
  return impl_->port;
}

void ReviewServer::run() {
  if (impl_->port < 0) throw InvalidArgument("bind() must succeed before run()");
  impl_->server.listen_after_bind();
}

void ReviewServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace bcensus
