#pragma once

// HTTP front for a Service (cpp-httplib).
//   GET  /nb/:id/snapshot
//   POST /nb/:id/command
//   GET  /nb/:id/events          server-sent events, resumable via ?since= or Last-Event-ID
//   POST /nb/:id/telemetry
//   GET  /nb/:id/results?format=csv|json

#include <atomic>
#include <chrono>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "branchnb/service.hpp"

namespace branchnb::service {

inline std::string sse_frame(const json& delta) {
  return "id: " + std::to_string(delta.at("server_seq").get<long long>()) + "\ndata: " + delta.dump() + "\n\n";
}

class HttpServer {
 public:
  explicit HttpServer(Service& service) : service_(service) { routes(); }

  ~HttpServer() { stop(); }

  // Binds to host:port (port 0 picks a free port); returns the bound port or -1.
  int bind(const std::string& host = "127.0.0.1", int port = 0) {
    return port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
  }

  // Blocks until stop().
  bool listen_after_bind() { return server_.listen_after_bind(); }

  void stop() {
    stopping_ = true;
    server_.stop();
  }

  httplib::Server& raw() { return server_; }

 private:
  Service& service_;
  httplib::Server server_;
  std::atomic<bool> stopping_{false};

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  Session* find(const httplib::Request& req, httplib::Response& res) {
    try {
      return &service_.session(req.path_params.at("id"));
    } catch (const UnknownNotebook& e) {
      reply(res, 404, detail::error_body("UnknownNotebook", e.what()));
      return nullptr;
    }
  }

  void routes() {
    server_.Get("/nb/:id/snapshot", [this](const httplib::Request& req, httplib::Response& res) {
      if (auto* s = find(req, res)) reply(res, 200, s->snapshot());
    });

    server_.Post("/nb/:id/command", [this](const httplib::Request& req, httplib::Response& res) {
      json cmd;
      try {
        cmd = json::parse(req.body);
      } catch (const json::parse_error& e) {
        return reply(res, 400, detail::error_body("InvalidJson", e.what()));
      }
      auto r = service_.apply_command(req.path_params.at("id"), cmd);
      reply(res, r.http_status, r.body);
    });

    server_.Post("/nb/:id/telemetry", [this](const httplib::Request& req, httplib::Response& res) {
      auto* s = find(req, res);
      if (!s) return;
      try {
        s->ingest_telemetry(nlohmann::json::parse(req.body));
      } catch (const nlohmann::json::parse_error& e) {
        return reply(res, 400, detail::error_body("InvalidJson", e.what()));
      } catch (const telemetry::TelemetryError& e) {
        return reply(res, 400, detail::error_body("TelemetryError", e.what()));
      }
      reply(res, 200, json::object({{"accepted", true}}));
    });

    server_.Get("/nb/:id/results", [this](const httplib::Request& req, httplib::Response& res) {
      auto* s = find(req, res);
      if (!s) return;
      const std::string format = req.has_param("format") ? req.get_param_value("format") : "csv";
      if (format == "csv") {
        res.set_content(s->results(ResultsFormat::Csv), "text/csv");
      } else if (format == "json") {
        res.set_content(s->results(ResultsFormat::Json), "application/json");
      } else {
        reply(res, 400, detail::error_body("InvalidField", "format must be csv or json"));
      }
    });

    server_.Get("/nb/:id/events", [this](const httplib::Request& req, httplib::Response& res) {
      auto* s = find(req, res);
      if (!s) return;
      long long since = 0;
      try {
        if (req.has_param("since")) since = std::stoll(req.get_param_value("since"));
        else if (req.has_header("Last-Event-ID")) since = std::stoll(req.get_header_value("Last-Event-ID"));
      } catch (const std::exception&) {
        return reply(res, 400, detail::error_body("InvalidField", "since must be an integer"));
      }
      auto cursor = std::make_shared<long long>(since);
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider("text/event-stream", [this, s, cursor](std::size_t, httplib::DataSink& sink) {
        if (stopping_) {
          sink.done();
          return true;
        }
        auto batch = s->deltas_since(*cursor, std::chrono::milliseconds(250));
        if (batch.empty()) {
          // comment line keeps the connection alive and detects closed peers
          const std::string ping = ": ping\n\n";
          return sink.write(ping.data(), ping.size());
        }
        for (const auto& d : batch) {
          const std::string frame = sse_frame(d);
          if (!sink.write(frame.data(), frame.size())) return false;
          *cursor = d.at("server_seq").get<long long>();
        }
        return true;
      });
    });
  }
};

}  // namespace branchnb::service
