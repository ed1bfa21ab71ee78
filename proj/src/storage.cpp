#include "dwellmap/storage.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "dwellmap/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dwellmap {

namespace {

constexpr std::size_t kMaxComponent = 96;
constexpr const char* kNamesFile = ".names";
constexpr const char* kImagesDir = ".images";
constexpr const char* kMarksDir = "marks";

[[noreturn]] void throw_errno(const std::string& what, const fs::path& path) {
  throw Error(ErrorCode::io, fmt::format("{} {}: {}", what, path.string(), std::strerror(errno)));
}

void fsync_dir(const fs::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (fd < 0) throw_errno("open directory", dir);
  ::fsync(fd);
  ::close(fd);
}

void write_all(int fd, std::string_view bytes, const fs::path& path) {
  while (!bytes.empty()) {
    const ssize_t n = ::write(fd, bytes.data(), bytes.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("write", path);
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

void append_durably(const fs::path& path, std::string_view bytes) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw_errno("open", path);
  try {
    write_all(fd, bytes, path);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::fsync(fd);
  ::close(fd);
}

// Writes to a sibling temp file, fsyncs, then renames over `path`.
void replace_file(const fs::path& path, std::string_view bytes) {
  const fs::path tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw_errno("open", tmp);
  try {
    write_all(fd, bytes, tmp);
  } catch (...) {
    ::close(fd);
    throw;
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    throw_errno("fsync", tmp);
  }
  ::close(fd);
  if (::rename(tmp.c_str(), path.c_str()) != 0) throw_errno("rename", tmp);
  fsync_dir(path.parent_path());
}

std::optional<std::string> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void require_id(const std::string& id, std::string_view what) {
  if (id.empty()) throw Error(ErrorCode::invalid_argument, fmt::format("{} must be non-empty", what));
}

struct ParsedLog {
  std::vector<std::pair<std::uint64_t, ViewportEvent>> records;
  std::size_t complete_bytes = 0;  // offset just past the last newline
  bool truncated_tail = false;
};

ParsedLog parse_log(std::string_view data, const fs::path& path) {
  ParsedLog out;
  std::size_t pos = 0;
  while (pos < data.size()) {
    const std::size_t nl = data.find('\n', pos);
    if (nl == std::string_view::npos) {
      out.truncated_tail = true;
      break;
    }
    const std::string_view line = data.substr(pos, nl - pos);
    auto record = [&] {
      try {
        return decode_record(line);
      } catch (const Error& e) {
        throw Error(ErrorCode::corrupt, fmt::format("{}: record {}: {}", path.string(),
                                                    out.records.size(), e.what()));
      }
    }();
    if (record.first != out.records.size()) {
      throw Error(ErrorCode::corrupt, fmt::format("{}: expected seq {}, found {}", path.string(),
                                                  out.records.size(), record.first));
    }
    out.records.push_back(std::move(record));
    pos = nl + 1;
    out.complete_bytes = pos;
  }
  return out;
}

}  // namespace

std::string sanitize_component(std::string_view raw) {
  std::string out;
  out.reserve(std::min(raw.size(), kMaxComponent));
  for (char ch : raw) {
    if (out.size() == kMaxComponent) break;
    const bool safe = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
                      (ch >= '0' && ch <= '9') || ch == '.' || ch == '_' || ch == '-';
    out.push_back(safe ? ch : '_');
  }
  if (!out.empty() && out.front() == '.') out.front() = '_';
  return out;
}

std::string encode_record(std::uint64_t seq, const ViewportEvent& event) {
  if (!event.bbox) {
    return fmt::format(R"({{"seq":{},"kind":"{}","t":{}}})", seq, to_string(event.kind), event.t);
  }
  const BoundingBox& b = *event.bbox;
  return fmt::format(R"({{"seq":{},"kind":"{}","t":{},"x0":{},"y0":{},"x1":{},"y1":{}}})", seq,
                     to_string(event.kind), event.t, b.x0, b.y0, b.x1, b.y1);
}

std::pair<std::uint64_t, ViewportEvent> decode_record(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::corrupt, fmt::format("unparsable record: {}", e.what()));
  }
  try {
    const auto kind = parse_event_kind(j.at("kind").get<std::string>());
    if (!kind) throw Error(ErrorCode::corrupt, "unknown event kind");
    ViewportEvent event;
    event.kind = *kind;
    event.t = j.at("t").get<std::int64_t>();
    if (j.contains("x0")) {
      event.bbox = BoundingBox{j.at("x0").get<std::int64_t>(), j.at("y0").get<std::int64_t>(),
                               j.at("x1").get<std::int64_t>(), j.at("y1").get<std::int64_t>()};
    }
    return {j.at("seq").get<std::uint64_t>(), event};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::corrupt, fmt::format("malformed record: {}", e.what()));
  }
}

// Maps raw identifiers to on-disk names within one directory. Persisted as
// JSON lines {"raw":...,"name":...} in <dir>/.names; entries are only added.
class EventStore::NameRegistry {
public:
  explicit NameRegistry(fs::path dir) : dir_(std::move(dir)) {
    const auto data = read_file(dir_ / kNamesFile);
    if (!data) return;
    std::istringstream in(*data);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        const json j = json::parse(line);
        add(j.at("raw").get<std::string>(), j.at("name").get<std::string>());
      } catch (const json::exception&) {
        // A torn final entry names nothing that was ever acknowledged.
        break;
      }
    }
  }

  [[nodiscard]] std::optional<std::string> find(const std::string& raw) const {
    const auto it = by_raw_.find(raw);
    if (it == by_raw_.end()) return std::nullopt;
    return it->second;
  }

  std::string resolve(const std::string& raw) {
    if (auto found = find(raw)) return *found;
    const std::string base = sanitize_component(raw);
    std::string name = base;
    for (int n = 1; taken_.contains(name); ++n) name = fmt::format("{}~{}", base, n);
    fs::create_directories(dir_);
    const json entry = {{"raw", raw}, {"name", name}};
    append_durably(dir_ / kNamesFile, entry.dump() + "\n");
    add(raw, name);
    return name;
  }

  [[nodiscard]] const std::map<std::string, std::string>& entries() const { return by_raw_; }

private:
  void add(const std::string& raw, const std::string& name) {
    by_raw_[raw] = name;
    taken_[name] = raw;
  }

  fs::path dir_;
  std::map<std::string, std::string> by_raw_;
  std::map<std::string, std::string> taken_;
};

struct EventStore::StreamState {
  std::mutex mu;
  int fd = -1;
  bool loaded = false;
  std::uint64_t next_seq = 0;
  std::optional<std::int64_t> last_t;

  ~StreamState() {
    if (fd >= 0) {
      ::fsync(fd);
      ::close(fd);
    }
  }
};

EventStore::EventStore(fs::path root, StoreOptions options)
    : root_(std::move(root)), options_(options) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) {
    throw Error(ErrorCode::io, fmt::format("cannot create data directory {}: {}", root_.string(),
                                           ec.message()));
  }
  if (::access(root_.c_str(), W_OK) != 0) throw_errno("data directory not writable", root_);

  if (!fs::is_directory(root_ / kImagesDir)) return;
  for (const auto& entry : fs::directory_iterator(root_ / kImagesDir)) {
    if (entry.path().extension() != ".json") continue;
    const auto data = read_file(entry.path());
    if (!data) continue;
    try {
      const json j = json::parse(*data);
      ImageMeta meta{j.at("image_id").get<std::string>(), j.at("width").get<std::int64_t>(),
                     j.at("height").get<std::int64_t>()};
      images_[meta.image_id] = meta;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::corrupt,
                  fmt::format("bad image record {}: {}", entry.path().string(), e.what()));
    }
  }
}

EventStore::~EventStore() = default;

EventStore::NameRegistry& EventStore::registry(const fs::path& dir) const {
  auto& slot = registries_[dir];
  if (!slot) slot = std::make_unique<NameRegistry>(dir);
  return *slot;
}

void EventStore::register_image(const ImageMeta& meta) {
  require_id(meta.image_id, "image id");
  meta.validate();
  std::lock_guard lock(images_mu_);
  if (const auto it = images_.find(meta.image_id); it != images_.end()) {
    if (it->second.width == meta.width && it->second.height == meta.height) return;
    throw Error(ErrorCode::conflict,
                fmt::format("image '{}' already registered as {}x{}", meta.image_id,
                            it->second.width, it->second.height));
  }
  std::string name;
  {
    std::lock_guard names(names_mu_);
    name = registry(root_ / kImagesDir).resolve(meta.image_id);
  }
  const json j = {{"image_id", meta.image_id}, {"width", meta.width}, {"height", meta.height}};
  replace_file(root_ / kImagesDir / (name + ".json"), j.dump() + "\n");
  images_[meta.image_id] = meta;
}

std::optional<ImageMeta> EventStore::find_image(const std::string& image_id) const {
  std::lock_guard lock(images_mu_);
  const auto it = images_.find(image_id);
  if (it == images_.end()) return std::nullopt;
  return it->second;
}

std::vector<ImageMeta> EventStore::list_images() const {
  std::lock_guard lock(images_mu_);
  std::vector<ImageMeta> out;
  for (const auto& [id, meta] : images_) out.push_back(meta);
  return out;
}

std::optional<fs::path> EventStore::find_dir(const StreamKey& key, int depth) const {
  std::lock_guard lock(names_mu_);
  const auto test = registry(root_).find(key.test_id);
  if (!test) return std::nullopt;
  fs::path dir = root_ / *test;
  if (depth == 1) return dir;
  const auto image = registry(dir).find(key.image_id);
  if (!image) return std::nullopt;
  return dir / *image;
}

fs::path EventStore::make_dir(const StreamKey& key, int depth) {
  std::lock_guard lock(names_mu_);
  fs::path dir = root_ / registry(root_).resolve(key.test_id);
  if (depth >= 2) dir /= registry(dir).resolve(key.image_id);
  fs::create_directories(dir);
  return dir;
}

fs::path EventStore::events_path(const fs::path& image_dir, const std::string& user_name) const {
  return image_dir / (user_name + ".log");
}

std::optional<fs::path> EventStore::stream_path(const StreamKey& key) const {
  const auto dir = find_dir(key, 2);
  if (!dir) return std::nullopt;
  std::optional<std::string> user;
  {
    std::lock_guard lock(names_mu_);
    user = registry(*dir).find(key.user_id);
  }
  if (!user) return std::nullopt;
  fs::path path = events_path(*dir, *user);
  if (!fs::exists(path)) return std::nullopt;
  return path;
}

std::shared_ptr<EventStore::StreamState> EventStore::state_for(const fs::path& path) {
  std::lock_guard lock(streams_mu_);
  auto& slot = streams_[path];
  if (!slot) slot = std::make_shared<StreamState>();
  return slot;
}

void EventStore::open_for_append(StreamState& state, const fs::path& path) {
  if (state.loaded) return;
  if (const auto data = read_file(path)) {
    const ParsedLog log = parse_log(*data, path);
    if (log.truncated_tail) {
      // Drop the torn record left by a crashed writer before appending.
      if (::truncate(path.c_str(), static_cast<off_t>(log.complete_bytes)) != 0) {
        throw_errno("truncate", path);
      }
    }
    state.next_seq = log.records.size();
    if (!log.records.empty()) state.last_t = log.records.back().second.t;
  }
  const bool existed = fs::exists(path);
  state.fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (state.fd < 0) throw_errno("open", path);
  if (!existed) fsync_dir(path.parent_path());
  state.loaded = true;
}

std::uint64_t EventStore::append(const StreamKey& key, const ViewportEvent& event) {
  return append_batch(key, std::span<const ViewportEvent>(&event, 1)).front();
}

std::vector<std::uint64_t> EventStore::append_batch(const StreamKey& key,
                                                    std::span<const ViewportEvent> events) {
  require_id(key.test_id, "test id");
  require_id(key.image_id, "image id");
  require_id(key.user_id, "user id");
  for (const ViewportEvent& e : events) {
    validate_event_shape(e);
    if (e.kind == EventKind::mark) {
      throw Error(ErrorCode::validation, "mark records belong in the marks stream");
    }
  }
  if (events.empty()) return {};

  const fs::path dir = make_dir(key, 2);
  std::string user_name;
  {
    std::lock_guard lock(names_mu_);
    user_name = registry(dir).resolve(key.user_id);
  }
  const fs::path path = events_path(dir, user_name);
  const auto state = state_for(path);

  std::lock_guard lock(state->mu);
  open_for_append(*state, path);

  std::optional<std::int64_t> last = state->last_t;
  for (const ViewportEvent& e : events) {
    if (last && e.t < *last) {
      throw Error(ErrorCode::order_violation,
                  fmt::format("timestamp {} precedes stream tail {}", e.t, *last));
    }
    last = e.t;
  }

  std::string bytes;
  std::vector<std::uint64_t> seqs;
  seqs.reserve(events.size());
  std::uint64_t seq = state->next_seq;
  for (const ViewportEvent& e : events) {
    bytes += encode_record(seq, e);
    bytes += '\n';
    seqs.push_back(seq++);
  }
  // One write per batch; O_APPEND keeps concurrent readers on record
  // boundaries or a detectable partial tail.
  write_all(state->fd, bytes, path);
  if (options_.sync_each_append && ::fsync(state->fd) != 0) throw_errno("fsync", path);
  state->next_seq = seq;
  state->last_t = last;
  return seqs;
}

ReplayResult EventStore::replay(const StreamKey& key) const {
  const auto path = stream_path(key);
  if (!path) {
    throw Error(ErrorCode::not_found, fmt::format("no stream for test '{}' image '{}' user '{}'",
                                                  key.test_id, key.image_id, key.user_id));
  }
  const auto data = read_file(*path);
  if (!data) throw_errno("read", *path);
  ParsedLog log = parse_log(*data, *path);
  ReplayResult out;
  out.truncated_tail = log.truncated_tail;
  out.records.reserve(log.records.size());
  for (auto& [seq, event] : log.records) out.records.push_back(EventRecord{key, seq, event});
  return out;
}

bool EventStore::has_stream(const StreamKey& key) const { return stream_path(key).has_value(); }

std::vector<StreamKey> EventStore::list_streams(const std::string& test_id,
                                                const std::string& image_id) const {
  std::vector<StreamKey> out;
  const auto dir = find_dir(StreamKey{test_id, image_id, {}}, 2);
  if (!dir) return out;
  std::lock_guard lock(names_mu_);
  for (const auto& [raw, name] : registry(*dir).entries()) {
    if (fs::exists(events_path(*dir, name))) out.push_back(StreamKey{test_id, image_id, raw});
  }
  return out;
}

std::vector<std::string> EventStore::list_tests() const {
  std::lock_guard lock(names_mu_);
  std::vector<std::string> out;
  for (const auto& [raw, name] : registry(root_).entries()) out.push_back(raw);
  return out;
}

std::vector<std::string> EventStore::list_test_images(const std::string& test_id) const {
  std::vector<std::string> out;
  const auto dir = find_dir(StreamKey{test_id, {}, {}}, 1);
  if (!dir) return out;
  std::lock_guard lock(names_mu_);
  for (const auto& [raw, name] : registry(*dir).entries()) out.push_back(raw);
  return out;
}

void EventStore::replace_marks(const StreamKey& key, std::span<const BoundingBox> rects) {
  require_id(key.test_id, "test id");
  require_id(key.image_id, "image id");
  require_id(key.user_id, "user id");
  std::string bytes;
  std::uint64_t seq = 0;
  for (const BoundingBox& rect : rects) {
    if (rect.is_empty() || rect.x0 < 0 || rect.y0 < 0) {
      throw Error(ErrorCode::validation, "degenerate mark rectangle");
    }
    bytes += encode_record(seq++, ViewportEvent{EventKind::mark, 0, rect});
    bytes += '\n';
  }
  const fs::path dir = make_dir(key, 2);
  std::string user_name;
  {
    std::lock_guard lock(names_mu_);
    user_name = registry(dir).resolve(key.user_id);
  }
  fs::create_directories(dir / kMarksDir);
  const fs::path path = dir / kMarksDir / (user_name + ".log");
  const auto state = state_for(path);
  std::lock_guard lock(state->mu);
  replace_file(path, bytes);
}

std::optional<std::vector<BoundingBox>> EventStore::load_marks(const StreamKey& key) const {
  const auto dir = find_dir(key, 2);
  if (!dir) return std::nullopt;
  std::optional<std::string> user;
  {
    std::lock_guard lock(names_mu_);
    user = registry(*dir).find(key.user_id);
  }
  if (!user) return std::nullopt;
  const fs::path path = *dir / kMarksDir / (*user + ".log");
  const auto data = read_file(path);
  if (!data) return std::nullopt;
  const ParsedLog log = parse_log(*data, path);
  std::vector<BoundingBox> rects;
  for (const auto& [seq, event] : log.records) {
    if (event.kind != EventKind::mark || !event.bbox) {
      throw Error(ErrorCode::corrupt, fmt::format("{}: non-mark record", path.string()));
    }
    rects.push_back(*event.bbox);
  }
  return rects;
}

std::vector<StreamKey> EventStore::list_mark_streams(const std::string& test_id,
                                                     const std::string& image_id) const {
  std::vector<StreamKey> out;
  const auto dir = find_dir(StreamKey{test_id, image_id, {}}, 2);
  if (!dir) return out;
  std::lock_guard lock(names_mu_);
  for (const auto& [raw, name] : registry(*dir).entries()) {
    if (fs::exists(*dir / kMarksDir / (name + ".log"))) {
      out.push_back(StreamKey{test_id, image_id, raw});
    }
  }
  return out;
}

void EventStore::flush() {
  std::lock_guard lock(streams_mu_);
  for (auto& [path, state] : streams_) {
    std::lock_guard stream_lock(state->mu);
    if (state->fd >= 0 && ::fsync(state->fd) != 0) throw_errno("fsync", path);
  }
}

void EventStore::export_test(const std::string& test_id, std::ostream& out) const {
  if (!find_dir(StreamKey{test_id, {}, {}}, 1)) {
    throw Error(ErrorCode::not_found, fmt::format("unknown test '{}'", test_id));
  }
  out << json{{"archive", "dwellmap"}, {"version", 1}, {"test_id", test_id}}.dump() << '\n';
  for (const std::string& image_id : list_test_images(test_id)) {
    if (const auto meta = find_image(image_id)) {
      out << json{{"image", {{"image_id", meta->image_id},
                             {"width", meta->width},
                             {"height", meta->height}}}}
                 .dump()
          << '\n';
    }
    for (const StreamKey& key : list_streams(test_id, image_id)) {
      const ReplayResult replayed = replay(key);
      out << json{{"stream", {{"image_id", image_id}, {"user_id", key.user_id}, {"kind", "events"}}}}
                 .dump()
          << '\n';
      for (const EventRecord& r : replayed.records) out << encode_record(r.seq, r.event) << '\n';
    }
    for (const StreamKey& key : list_mark_streams(test_id, image_id)) {
      const auto marks = load_marks(key);
      out << json{{"stream", {{"image_id", image_id}, {"user_id", key.user_id}, {"kind", "marks"}}}}
                 .dump()
          << '\n';
      std::uint64_t seq = 0;
      for (const BoundingBox& rect : *marks) {
        out << encode_record(seq++, ViewportEvent{EventKind::mark, 0, rect}) << '\n';
      }
    }
  }
  if (!out) throw Error(ErrorCode::io, "archive write failed");
}

std::string EventStore::import_archive(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) -> Error {
    return Error(ErrorCode::validation, fmt::format("archive line {}: {}", line_no, msg));
  };

  std::string test_id;
  struct Pending {
    StreamKey key;
    bool marks = false;
    std::vector<ViewportEvent> events;
  };
  std::vector<Pending> streams;
  std::vector<ImageMeta> images;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw fail(e.what());
    }
    try {
      if (line_no == 1) {
        if (j.value("archive", "") != "dwellmap") throw fail("not a dwellmap archive");
        test_id = j.at("test_id").get<std::string>();
      } else if (j.contains("image")) {
        const json& m = j["image"];
        images.push_back(ImageMeta{m.at("image_id").get<std::string>(),
                                   m.at("width").get<std::int64_t>(),
                                   m.at("height").get<std::int64_t>()});
      } else if (j.contains("stream")) {
        const json& s = j["stream"];
        streams.push_back(Pending{StreamKey{test_id, s.at("image_id").get<std::string>(),
                                            s.at("user_id").get<std::string>()},
                                  s.at("kind").get<std::string>() == "marks",
                                  {}});
      } else {
        if (streams.empty()) throw fail("record outside of a stream section");
        auto [seq, event] = decode_record(line);
        if (seq != streams.back().events.size()) throw fail("non-dense seq");
        streams.back().events.push_back(event);
      }
    } catch (const json::exception& e) {
      throw fail(e.what());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::validation) throw;
      throw fail(e.what());
    }
  }
  if (test_id.empty()) throw Error(ErrorCode::validation, "empty archive");

  for (const ImageMeta& meta : images) register_image(meta);
  for (const Pending& p : streams) {
    if (p.marks) {
      if (load_marks(p.key)) {
        throw Error(ErrorCode::conflict, fmt::format("marks for user '{}' already exist", p.key.user_id));
      }
      std::vector<BoundingBox> rects;
      for (const auto& e : p.events) rects.push_back(*e.bbox);
      replace_marks(p.key, rects);
    } else {
      if (has_stream(p.key)) {
        throw Error(ErrorCode::conflict,
                    fmt::format("stream for user '{}' already exists", p.key.user_id));
      }
      append_batch(p.key, p.events);
    }
  }
  return test_id;
}

}  // namespace dwellmap
