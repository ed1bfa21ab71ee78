#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dwellmap/types.hpp"

namespace dwellmap {

/// Caller-facing identifiers of one event stream. On disk each component is
/// sanitized to a path-safe name; colliding names get a "~N" suffix.
struct StreamKey {
  std::string test_id;
  std::string image_id;
  std::string user_id;

  friend auto operator<=>(const StreamKey&, const StreamKey&) = default;
};

struct EventRecord {
  StreamKey key;
  std::uint64_t seq = 0;
  ViewportEvent event;
};

struct ReplayResult {
  std::vector<EventRecord> records;
  bool truncated_tail = false;  // an incomplete trailing record was skipped
};

struct StoreOptions {
  // fsync after every append. When false, data is synced by flush() and on
  // destruction.
  bool sync_each_append = true;
};

// Path-safe rendering of an identifier: [A-Za-z0-9._-] kept, everything else
// (and a leading '.') replaced by '_', truncated to 96 bytes.
std::string sanitize_component(std::string_view raw);

// One record line (without the trailing newline), fields in fixed order:
// {"seq":N,"kind":"zoom","t":N,"x0":N,"y0":N,"x1":N,"y1":N}. session_end
// records omit the box fields.
std::string encode_record(std::uint64_t seq, const ViewportEvent& event);
std::pair<std::uint64_t, ViewportEvent> decode_record(std::string_view line);

/// Durable append-only event logs laid out as
///
///   <root>/<test>/<image>/<user>.log         viewport events
///   <root>/<test>/<image>/marks/<user>.log   marked rectangles
///   <root>/.images/<image>.json              registered image dimensions
///
/// Each .log is newline-delimited records with dense 0-based seq numbers.
/// Appends to one stream are serialized by a per-stream lock; distinct
/// streams proceed independently. Readers may replay while a writer appends
/// and observe a prefix of the stream.
class EventStore {
public:
  explicit EventStore(std::filesystem::path root, StoreOptions options = {});
  ~EventStore();

  EventStore(const EventStore&) = delete;
  EventStore& operator=(const EventStore&) = delete;

  [[nodiscard]] const std::filesystem::path& root() const noexcept { return root_; }

  /// Idempotent for identical dimensions; conflict when they differ.
  void register_image(const ImageMeta& meta);
  [[nodiscard]] std::optional<ImageMeta> find_image(const std::string& image_id) const;
  [[nodiscard]] std::vector<ImageMeta> list_images() const;

  /// Returns the assigned seq. Throws order_violation when event.t precedes
  /// the stream tail, validation for malformed events, io on write failure.
  std::uint64_t append(const StreamKey& key, const ViewportEvent& event);

  /// All-or-nothing: every event is validated against the tail (and its
  /// predecessors in the batch) before a single write.
  std::vector<std::uint64_t> append_batch(const StreamKey& key,
                                          std::span<const ViewportEvent> events);

  /// Throws not_found for unknown streams.
  [[nodiscard]] ReplayResult replay(const StreamKey& key) const;
  [[nodiscard]] bool has_stream(const StreamKey& key) const;

  /// User streams of one image, ordered by user_id.
  [[nodiscard]] std::vector<StreamKey> list_streams(const std::string& test_id,
                                                    const std::string& image_id) const;
  [[nodiscard]] std::vector<std::string> list_tests() const;
  [[nodiscard]] std::vector<std::string> list_test_images(const std::string& test_id) const;

  /// Atomically replaces the user's marks with `rects` (latest wins).
  void replace_marks(const StreamKey& key, std::span<const BoundingBox> rects);
  [[nodiscard]] std::optional<std::vector<BoundingBox>> load_marks(const StreamKey& key) const;
  [[nodiscard]] std::vector<StreamKey> list_mark_streams(const std::string& test_id,
                                                         const std::string& image_id) const;

  /// Absolute log path for an existing stream; nullopt if unknown.
  [[nodiscard]] std::optional<std::filesystem::path> stream_path(const StreamKey& key) const;

  /// fsyncs every open stream.
  void flush();

  /// Writes every image, event stream and marks stream of a test as one
  /// line-delimited archive.
  void export_test(const std::string& test_id, std::ostream& out) const;
  /// Replays an archive through the normal validation path. Streams already
  /// holding data are a conflict. Returns the test id.
  std::string import_archive(std::istream& in);

private:
  class NameRegistry;
  struct StreamState;

  NameRegistry& registry(const std::filesystem::path& dir) const;
  std::optional<std::filesystem::path> find_dir(const StreamKey& key, int depth) const;
  std::filesystem::path make_dir(const StreamKey& key, int depth);
  std::filesystem::path events_path(const std::filesystem::path& image_dir,
                                    const std::string& user_name) const;
  std::shared_ptr<StreamState> state_for(const std::filesystem::path& path);
  void open_for_append(StreamState& state, const std::filesystem::path& path);

  std::filesystem::path root_;
  StoreOptions options_;

  mutable std::mutex names_mu_;
  mutable std::map<std::filesystem::path, std::unique_ptr<NameRegistry>> registries_;

  mutable std::mutex images_mu_;
  std::map<std::string, ImageMeta> images_;

  std::mutex streams_mu_;
  std::map<std::filesystem::path, std::shared_ptr<StreamState>> streams_;
};

}  // namespace dwellmap
