#include "dwellmap/api.hpp"

#include <algorithm>
#include <charconv>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dwellmap/analysis.hpp"
#include "dwellmap/error.hpp"
#include "dwellmap/raster.hpp"

using nlohmann::json;

namespace dwellmap {

int http_status_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument:
    case ErrorCode::validation: return 400;
    case ErrorCode::not_found: return 404;
    case ErrorCode::order_violation:
    case ErrorCode::conflict: return 409;
    case ErrorCode::io:
    case ErrorCode::corrupt: return 500;
  }
  return 500;
}

namespace {

constexpr const char* kJson = "application/json";

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
  res.status = status;
  res.set_content(json{{"error", {{"code", code}, {"message", message}}}}.dump() + "\n", kJson);
}

template <typename Handler>
auto guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const Error& e) {
      send_error(res, http_status_for(e.code()), to_string(e.code()), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "validation", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::validation, fmt::format("malformed JSON body: {}", e.what()));
  }
}

std::int64_t int_field(const json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end()) throw Error(ErrorCode::validation, fmt::format("missing field '{}'", name));
  if (!it->is_number_integer()) throw Error(ErrorCode::validation, fmt::format("field '{}' must be an integer", name));
  return it->get<std::int64_t>();
}

BoundingBox box_from(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::validation, "rectangle must be an object");
  return BoundingBox{int_field(j, "x0"), int_field(j, "y0"), int_field(j, "x1"), int_field(j, "y1")};
}

ViewportEvent envelope_from(const json& j, const StreamKey& key) {
  if (!j.is_object()) throw Error(ErrorCode::validation, "event envelope must be an object");
  for (const auto& [field, expected] : {std::pair{"test_id", &key.test_id},
                                        std::pair{"image_id", &key.image_id},
                                        std::pair{"user_id", &key.user_id}}) {
    if (j.contains(field) && j[field] != *expected) {
      throw Error(ErrorCode::validation, fmt::format("'{}' does not match the request path", field));
    }
  }
  const auto kind_it = j.find("kind");
  if (kind_it == j.end() || !kind_it->is_string()) throw Error(ErrorCode::validation, "missing event kind");
  const auto kind = parse_event_kind(kind_it->get<std::string>());
  if (!kind) throw Error(ErrorCode::validation, fmt::format("unknown event kind {}", kind_it->dump()));
  ViewportEvent e;
  e.kind = *kind;
  e.t = int_field(j, "t");
  const bool has_box = j.contains("x0") || j.contains("y0") || j.contains("x1") || j.contains("y1");
  if (has_box) e.bbox = box_from(j);
  return e;
}

std::optional<double> threshold_param(const httplib::Request& req, std::optional<double> fallback) {
  if (!req.has_param("threshold")) return fallback;
  const std::string text = req.get_param_value("threshold");
  if (text == "mean") return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !(v >= 0.0 && v <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, fmt::format("threshold '{}' must be a number in [0, 1]", text));
  }
  return v;
}

std::int64_t scale_param(const httplib::Request& req, std::int64_t fallback) {
  if (!req.has_param("scale")) return fallback;
  const std::string text = req.get_param_value("scale");
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || v < 1) {
    throw Error(ErrorCode::invalid_argument, fmt::format("scale '{}' must be a positive integer", text));
  }
  return v;
}

PayloadFormat format_param(const httplib::Request& req) {
  const std::string text = req.has_param("format") ? req.get_param_value("format") : "raster";
  if (text == "raster") return PayloadFormat::raster;
  if (text == "grid") return PayloadFormat::grid;
  if (text == "none") return PayloadFormat::none;
  throw Error(ErrorCode::invalid_argument, fmt::format("unknown format '{}'", text));
}

bool flag_param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return false;
  const std::string v = req.get_param_value(name);
  return v == "1" || v == "true";
}

}  // namespace

IngestionService::IngestionService(EventStore& store, ApiConfig config)
    : store_(store), config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  install_routes();
}

IngestionService::~IngestionService() { stop(); }

int IngestionService::bind(const std::string& host, int port) {
  if (port < 0 || port > 65535) {
    throw Error(ErrorCode::invalid_argument, fmt::format("invalid port {}", port));
  }
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error(ErrorCode::io, fmt::format("cannot bind {}:{}", host, port));
  return bound;
}

void IngestionService::serve() { server_->listen_after_bind(); }

void IngestionService::stop() {
  if (server_) server_->stop();
}

void IngestionService::wait_until_ready() const { server_->wait_until_ready(); }

void IngestionService::install_routes() {
  auto& svr = *server_;

  svr.set_post_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_header("Origin") || config_.cors_allow.empty()) return;
    const std::string origin = req.get_header_value("Origin");
    const bool any = std::find(config_.cors_allow.begin(), config_.cors_allow.end(), "*") !=
                     config_.cors_allow.end();
    if (any || std::find(config_.cors_allow.begin(), config_.cors_allow.end(), origin) !=
                   config_.cors_allow.end()) {
      res.set_header("Access-Control-Allow-Origin", any ? "*" : origin);
      res.set_header("Vary", "Origin");
    }
  });

  svr.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.set_header("Access-Control-Max-Age", "600");
  });

  svr.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"status\":\"ok\"}\n", kJson);
  });

  svr.Put(R"(/api/v1/images/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    ImageMeta meta{req.matches[1], int_field(body, "width"), int_field(body, "height")};
    if (meta.width < 1 || meta.height < 1) {
      throw Error(ErrorCode::validation, "width and height must be positive");
    }
    const bool existed = store_.find_image(meta.image_id).has_value();
    store_.register_image(meta);
    res.status = existed ? 200 : 201;
    res.set_content(json{{"image_id", meta.image_id}, {"width", meta.width}, {"height", meta.height}}.dump() + "\n",
                    kJson);
  }));

  svr.Get(R"(/api/v1/images/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto meta = store_.find_image(req.matches[1]);
    if (!meta) throw Error(ErrorCode::not_found, fmt::format("image '{}' is not registered", std::string(req.matches[1])));
    res.set_content(json{{"image_id", meta->image_id}, {"width", meta->width}, {"height", meta->height}}.dump() + "\n",
                    kJson);
  }));

  svr.Post(R"(/api/v1/tests/([^/]+)/images/([^/]+)/users/([^/]+)/events)",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
             const StreamKey key{req.matches[1], req.matches[2], req.matches[3]};
             if (!store_.find_image(key.image_id)) {
               throw Error(ErrorCode::not_found, fmt::format("image '{}' is not registered", key.image_id));
             }
             const json body = parse_body(req);
             const bool batch = body.is_array() || (body.is_object() && body.contains("events"));
             const json& items = body.is_array() ? body : (batch ? body["events"] : body);
             if (batch && !items.is_array()) throw Error(ErrorCode::validation, "'events' must be an array");
             if (batch && items.size() > config_.batch_cap) {
               send_error(res, 413, "batch_too_large",
                          fmt::format("batch of {} exceeds the cap of {}", items.size(), config_.batch_cap));
               return;
             }
             std::vector<ViewportEvent> events;
             if (batch) {
               if (items.empty()) throw Error(ErrorCode::validation, "empty batch");
               for (const json& item : items) events.push_back(envelope_from(item, key));
             } else {
               events.push_back(envelope_from(items, key));
             }
             const auto seqs = ingest_events(store_, key, events);
             res.status = 201;
             res.set_content((batch ? json{{"seqs", seqs}} : json{{"seq", seqs.front()}}).dump() + "\n", kJson);
           }));

  svr.Post(R"(/api/v1/tests/([^/]+)/images/([^/]+)/users/([^/]+)/marks)",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
             const StreamKey key{req.matches[1], req.matches[2], req.matches[3]};
             if (!store_.find_image(key.image_id)) {
               throw Error(ErrorCode::not_found, fmt::format("image '{}' is not registered", key.image_id));
             }
             const json body = parse_body(req);
             const json& items = body.is_array() ? body : body.at("rects");
             if (!items.is_array()) throw Error(ErrorCode::validation, "'rects' must be an array");
             std::vector<BoundingBox> rects;
             for (const json& item : items) rects.push_back(box_from(item));
             const std::size_t count = submit_marks(store_, key, rects);
             res.status = 201;
             res.set_content(json{{"count", count}}.dump() + "\n", kJson);
           }));

  svr.Get(R"(/api/v1/tests/([^/]+)/images/([^/]+)/heatmap)",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
            AnalysisOptions options;
            options.scale = scale_param(req, config_.default_scale);
            options.threshold = threshold_param(req, config_.default_threshold);
            options.format = format_param(req);
            std::optional<std::string> user;
            if (req.has_param("user")) user = req.get_param_value("user");
            const ImageAnalysis analysis = analyze_image(store_, req.matches[1], req.matches[2], user, options);
            res.set_content(heatmap_payload(analysis, options.format), kJson);
          }));

  svr.Get(R"(/api/v1/tests/([^/]+)/images/([^/]+)/validation)",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
            AnalysisOptions options;
            options.scale = scale_param(req, config_.default_scale);
            options.threshold = threshold_param(req, config_.default_threshold);
            options.full_resolution = flag_param(req, "full_resolution");
            const ValidationRun run = validate_image(store_, req.matches[1], req.matches[2], options);
            res.set_content(validation_payload(run), kJson);
          }));

  svr.Get(R"(/api/v1/tests/([^/]+)/images/([^/]+)/validation/overlays/([^/]+))",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
            AnalysisOptions options;
            options.scale = scale_param(req, config_.default_scale);
            options.threshold = threshold_param(req, config_.default_threshold);
            options.full_resolution = flag_param(req, "full_resolution");
            const std::string test = req.matches[1];
            const std::string image = req.matches[2];
            const std::string name = req.matches[3];
            const ValidationRun run = validate_image(store_, test, image, options);
            for (const auto& [user, file] : run.overlay_names) {
              if (file != name) continue;
              const RgbaImage img = user_overlay(store_, StreamKey{test, image, user}, options);
              res.set_content(encode_png(img), "image/png");
              return;
            }
            throw Error(ErrorCode::not_found, fmt::format("no overlay named '{}'", name));
          }));
}

}  // namespace dwellmap
