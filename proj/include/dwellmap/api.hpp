#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dwellmap/error.hpp"
#include "dwellmap/storage.hpp"

namespace httplib {
class Server;
}

namespace dwellmap {

struct ApiConfig {
  std::int64_t default_scale = 1;
  std::optional<double> default_threshold;  // nullopt: above-average
  std::size_t batch_cap = 1000;
  std::vector<std::string> cors_allow;  // exact origins, or "*"
};

/// HTTP front end over an EventStore.
///
///   PUT  /api/v1/images/{image}                                  {"width","height"}
///   GET  /api/v1/images/{image}
///   POST /api/v1/tests/{t}/images/{i}/users/{u}/events           envelope | [envelope] | {"events":[...]}
///   POST /api/v1/tests/{t}/images/{i}/users/{u}/marks            [rect] | {"rects":[...]}
///   GET  /api/v1/tests/{t}/images/{i}/heatmap?user=&threshold=&scale=&format=raster|grid|none
///   GET  /api/v1/tests/{t}/images/{i}/validation?threshold=&scale=&full_resolution=
///   GET  /api/v1/tests/{t}/images/{i}/validation/overlays/{name}.png
///   GET  /healthz
class IngestionService {
public:
  IngestionService(EventStore& store, ApiConfig config);
  ~IngestionService();

  IngestionService(const IngestionService&) = delete;
  IngestionService& operator=(const IngestionService&) = delete;

  /// Binds without serving. port 0 picks a free port. Returns the bound
  /// port; throws io when the address is unavailable.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void serve();
  void stop();
  void wait_until_ready() const;

private:
  void install_routes();

  EventStore& store_;
  ApiConfig config_;
  std::unique_ptr<httplib::Server> server_;
};

int http_status_for(ErrorCode code) noexcept;

}  // namespace dwellmap
