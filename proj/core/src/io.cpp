#include "bss/io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "bss/error.hpp"

namespace bss {
namespace {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// WAV

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

// ---------------------------------------------------------------------------
// JSON helpers that keep the path of every value for error messages.

class Node {
 public:
  Node(const json& value, std::string path) : value_(value), path_(std::move(path)) {}

  const json& value() const { return value_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& message) const {
    throw ConfigError(path_ + ": " + message);
  }

  void expect_object(const std::set<std::string>& allowed) const {
    if (!value_.is_object()) fail("expected an object");
    for (const auto& [key, unused] : value_.items()) {
      if (!allowed.count(key)) Node(unused, child_path(key)).fail("unknown key");
    }
  }

  bool has(const std::string& key) const {
    return value_.contains(key) && !value_.at(key).is_null();
  }

  Node at(const std::string& key) const { return Node(value_.at(key), child_path(key)); }

  Node at(std::size_t index) const {
    return Node(value_.at(index), path_ + "[" + std::to_string(index) + "]");
  }

  double number() const {
    if (!value_.is_number()) fail("expected a number");
    return value_.get<double>();
  }

  long long integer() const {
    if (value_.is_number_integer()) return value_.get<long long>();
    if (value_.is_number_float()) {
      const double v = value_.get<double>();
      if (v == std::floor(v) && std::abs(v) < 9e15) return static_cast<long long>(v);
    }
    fail("expected an integer");
  }

  std::string string() const {
    if (!value_.is_string()) fail("expected a string");
    return value_.get<std::string>();
  }

  std::size_t size() const {
    if (!value_.is_array()) fail("expected an array");
    return value_.size();
  }

  Vec3 point() const {
    if (size() != 3) fail("expected [x, y, z]");
    return {at(0).number(), at(1).number(), at(2).number()};
  }

  std::vector<Vec3> points() const {
    std::vector<Vec3> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back(at(i).point());
    return out;
  }

  std::vector<std::string> strings() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back(at(i).string());
    return out;
  }

  double number_or(const std::string& key, double fallback) const {
    return has(key) ? at(key).number() : fallback;
  }

  long long integer_or(const std::string& key, long long fallback) const {
    return has(key) ? at(key).integer() : fallback;
  }

 private:
  std::string child_path(const std::string& key) const {
    return path_.empty() || path_ == "$" ? "$." + key : path_ + "." + key;
  }

  const json& value_;
  std::string path_;
};

json parse_document(const std::string& text) {
  try {
    return text.empty() ? json::object() : json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
}

void apply_overrides(json& doc, const Overrides& overrides) {
  for (const auto& [key, raw] : overrides) {
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot - start);
      if (part.empty()) throw ConfigError("override: malformed key '" + key + "'");
      if (!node->is_object()) *node = json::object();
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
}

json load_document(const std::string& text, const Overrides& overrides) {
  json doc = parse_document(text);
  if (!doc.is_object()) throw ConfigError("$: expected an object");
  apply_overrides(doc, overrides);
  return doc;
}

int checked_int(const Node& n, long long v, long long lo, long long hi) {
  if (v < lo || v > hi) {
    n.fail("value " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
           std::to_string(hi) + "]");
  }
  return static_cast<int>(v);
}

Room parse_room(const Node& n, int sample_rate) {
  n.expect_object({"dimensions", "t60", "reflection", "formula", "max_image_order",
                   "rir_seconds"});
  Room room;
  room.sample_rate = sample_rate;
  if (n.has("dimensions")) room.dimensions = n.at("dimensions").point();
  for (int a = 0; a < 3; ++a) {
    if (!(room.dimensions[a] > 0.0)) n.at("dimensions").fail("dimensions must be positive");
  }
  if (n.has("t60") && n.has("reflection")) {
    n.fail("give either t60 or reflection, not both");
  }
  if (n.has("reflection")) {
    const Node r = n.at("reflection");
    if (r.value().is_number()) {
      room.reflection.fill(r.number());
    } else {
      if (r.size() != 6) r.fail("expected 6 wall coefficients");
      for (std::size_t w = 0; w < 6; ++w) room.reflection[w] = r.at(w).number();
    }
    for (double b : room.reflection) {
      if (!(b >= 0.0 && b < 1.0)) r.fail("coefficients must lie in [0, 1)");
    }
  } else {
    const double t60 = n.number_or("t60", 0.2);
    if (!(t60 > 0.0)) n.at("t60").fail("t60 must be > 0");
    const std::string formula = n.has("formula") ? n.at("formula").string() : "calibrated";
    room.t60 = t60;
    try {
      if (formula == "calibrated") {
        room.reflection = calibrated_reflection(t60, room.dimensions, sample_rate);
      } else if (formula == "eyring") {
        room.reflection = t60_to_reflection(t60, room.dimensions, ReverbFormula::kEyring);
      } else if (formula == "sabine") {
        room.reflection = t60_to_reflection(t60, room.dimensions, ReverbFormula::kSabine);
      } else {
        n.at("formula").fail("expected \"calibrated\", \"eyring\" or \"sabine\"");
      }
    } catch (const ConfigError& e) {
      n.at("t60").fail(e.what());
    }
  }
  room.max_image_order = checked_int(n, n.integer_or("max_image_order", -1), -1, 1000);
  room.rir_seconds = n.number_or("rir_seconds", 0.0);
  if (room.rir_seconds < 0.0) n.at("rir_seconds").fail("must be >= 0");
  return room;
}

ArrayGeometry parse_array(const Node* n, const Room& room) {
  const Vec3& d = room.dimensions;
  const Vec3 default_center(d.x() / 2, d.y() / 2, d.z() > 3.25 ? 3.0 : d.z() / 2);
  if (n == nullptr) return ArrayGeometry::grid(3, 3, 0.06, default_center);
  n->expect_object({"grid", "positions"});
  if (n->has("grid") == n->has("positions")) n->fail("give exactly one of grid or positions");
  if (n->has("positions")) {
    auto geo = ArrayGeometry{n->at("positions").points()};
    if (geo.positions.empty()) n->at("positions").fail("needs at least one microphone");
    return geo;
  }
  const Node g = n->at("grid");
  g.expect_object({"rows", "cols", "spacing", "center"});
  const int rows = checked_int(g, g.integer_or("rows", 3), 1, 64);
  const int cols = checked_int(g, g.integer_or("cols", 3), 1, 64);
  const double spacing = g.number_or("spacing", 0.06);
  if (!(spacing > 0.0)) g.at("spacing").fail("must be > 0");
  const Vec3 center = g.has("center") ? g.at("center").point() : default_center;
  return ArrayGeometry::grid(rows, cols, spacing, center);
}

void check_inside(const Node& n, const Room& room, const std::vector<Vec3>& points) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!room.contains(points[i])) n.at(i).fail("position outside the room");
  }
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------

void AudioBuffer::validate() const {
  if (sample_rate <= 0) throw ContractViolation("audio: sample rate must be positive");
  for (const auto& ch : samples) {
    if (ch.size() != frames()) throw ContractViolation("audio: channel lengths differ");
  }
}

AudioBuffer read_wav(const std::filesystem::path& path) {
  const std::string bytes = read_bytes(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();
  const std::string name = path.string();
  if (size < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw IoError(name + ": not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const std::uint32_t chunk = le32(p + pos + 4);
    const unsigned char* body = p + pos + 8;
    const std::size_t avail = size - pos - 8;
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      if (chunk < 16 || avail < 16) throw IoError(name + ": truncated fmt chunk");
      format = le16(body);
      channels = le16(body + 2);
      rate = le32(body + 4);
      bits = le16(body + 14);
      if (format == kFormatExtensible) {
        if (chunk < 40 || avail < 40) throw IoError(name + ": truncated extensible fmt chunk");
        format = le16(body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (chunk > avail) throw IoError(name + ": truncated data chunk");
      data = body;
      data_size = chunk;
      break;
    }
    pos += 8 + chunk + (chunk & 1);
  }
  if (!have_fmt) throw IoError(name + ": missing fmt chunk");
  if (data == nullptr) throw IoError(name + ": missing data chunk");
  const bool supported = (format == kFormatPcm && (bits == 16 || bits == 24)) ||
                         (format == kFormatFloat && bits == 32);
  if (!supported) {
    throw IoError(name + ": unsupported codec (format " + std::to_string(format) + ", " +
                  std::to_string(bits) + " bits)");
  }
  if (channels == 0 || rate == 0) throw IoError(name + ": invalid channel count or rate");
  const std::size_t width = bits / 8;
  const std::size_t frame_bytes = width * channels;
  if (data_size % frame_bytes != 0) throw IoError(name + ": truncated sample frame");
  const std::size_t frames = data_size / frame_bytes;

  AudioBuffer buf;
  buf.sample_rate = static_cast<int>(rate);
  buf.samples.assign(channels, std::vector<double>(frames));
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* s = data + t * frame_bytes + c * width;
      double v;
      if (format == kFormatFloat) {
        const std::uint32_t u = le32(s);
        float f;
        std::memcpy(&f, &u, sizeof f);
        v = f;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(le16(s)) / 32768.0;
      } else {
        std::int32_t i = s[0] | s[1] << 8 | s[2] << 16;
        if (i & 0x800000) i -= 1 << 24;
        v = i / 8388608.0;
      }
      buf.samples[c][t] = v;
    }
  }
  return buf;
}

WavWriteInfo write_wav(const AudioBuffer& buffer, const std::filesystem::path& path,
                       WavFormat format) {
  buffer.validate();
  if (buffer.channels() == 0) throw ContractViolation("write_wav: no channels");
  const bool is_float = format == WavFormat::kFloat32;
  const std::uint16_t width = is_float ? 4 : 2;
  const auto channels = static_cast<std::uint16_t>(buffer.channels());
  const std::size_t frames = buffer.frames();
  const std::uint64_t data_bytes = std::uint64_t(frames) * channels * width;
  if (data_bytes > 0xFFFFFFFFull - 36) throw IoError("write_wav: file exceeds 4 GiB");

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put32(out, static_cast<std::uint32_t>(36 + data_bytes));
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, is_float ? kFormatFloat : kFormatPcm);
  put16(out, channels);
  put32(out, static_cast<std::uint32_t>(buffer.sample_rate));
  put32(out, static_cast<std::uint32_t>(buffer.sample_rate) * channels * width);
  put16(out, static_cast<std::uint16_t>(channels * width));
  put16(out, static_cast<std::uint16_t>(8 * width));
  out += "data";
  put32(out, static_cast<std::uint32_t>(data_bytes));

  WavWriteInfo info;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = buffer.samples[c][t];
      if (is_float) {
        const float f = static_cast<float>(v);
        std::uint32_t u;
        std::memcpy(&u, &f, sizeof u);
        put32(out, u);
      } else {
        double q = std::round(v * 32768.0);  // half away from zero
        if (q > 32767.0 || q < -32768.0 || std::isnan(q)) {
          ++info.clipped;
          q = std::isnan(q) ? 0.0 : std::clamp(q, -32768.0, 32767.0);
        }
        put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
      }
    }
  }
  write_text(path, out);
  return info;
}

std::string read_text(const std::filesystem::path& path) { return read_bytes(path); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------

std::pair<int, int> square_factors(int mics) {
  if (mics < 1) throw ConfigError("square_factors: mics must be >= 1");
  int m2 = static_cast<int>(std::sqrt(static_cast<double>(mics)));
  while (mics % m2 != 0) --m2;
  return {mics / m2, m2};
}

Scenario parse_scenario(const std::string& json_text, const Overrides& overrides) {
  const json doc = load_document(json_text, overrides);
  const Node root(doc, "$");
  root.expect_object({"sample_rate", "duration_s", "seed", "room", "array", "sources",
                      "noise", "isir_db", "isnr_db", "signals"});
  Scenario sc;
  const int fs = checked_int(root, root.integer_or("sample_rate", 16000), 1, 1000000);
  sc.room = root.has("room") ? parse_room(root.at("room"), fs) : parse_room(Node(json::object(), "$.room"), fs);
  if (root.has("array")) {
    const Node a = root.at("array");
    sc.array = parse_array(&a, sc.room);
    if (a.has("positions")) check_inside(a.at("positions"), sc.room, sc.array.positions);
  } else {
    sc.array = parse_array(nullptr, sc.room);
  }
  for (const auto& m : sc.array.positions) {
    if (!sc.room.contains(m)) root.at("array").fail("microphone outside the room");
  }
  if (root.has("sources")) {
    sc.sources = root.at("sources").points();
    check_inside(root.at("sources"), sc.room, sc.sources);
  } else {
    sc.sources = {Vec3(7.0, 6.0, 1.75), Vec3(6.5, 6.9, 1.75)};
    for (const auto& s : sc.sources) {
      if (!sc.room.contains(s)) root.fail("default sources do not fit the room; give sources");
    }
  }
  if (sc.sources.empty()) root.at("sources").fail("need at least one target source");

  if (root.has("noise")) {
    const Node n = root.at("noise");
    n.expect_object({"count", "positions", "white_scale", "gain"});
    if (n.has("positions")) {
      sc.noise_sources = n.at("positions").points();
      check_inside(n.at("positions"), sc.room, sc.noise_sources);
      sc.noise_count = static_cast<int>(sc.noise_sources.size());
      if (n.has("count") && n.at("count").integer() != sc.noise_count) {
        n.at("count").fail("disagrees with the number of positions");
      }
    } else {
      sc.noise_count = checked_int(n, n.integer_or("count", 3), 0, 64);
    }
    sc.white_noise_scale = n.number_or("white_scale", sc.white_noise_scale);
    if (!(sc.white_noise_scale >= 0.0)) n.at("white_scale").fail("must be >= 0");
    if (n.has("gain")) {
      sc.noise_gain = n.at("gain").number();
      if (!(*sc.noise_gain >= 0.0)) n.at("gain").fail("must be >= 0");
    }
  }
  sc.isir_db = root.number_or("isir_db", 0.0);
  sc.isnr_db = root.number_or("isnr_db", 20.0);
  sc.duration_s = root.number_or("duration_s", 30.0);
  if (!(sc.duration_s > 0.0)) root.at("duration_s").fail("must be > 0");
  const long long seed = root.integer_or("seed", 0);
  if (seed < 0) root.at("seed").fail("must be >= 0");
  sc.seed = static_cast<std::uint64_t>(seed);
  if (root.has("signals")) {
    const Node s = root.at("signals");
    s.expect_object({"sources", "noise"});
    if (s.has("sources")) {
      sc.source_files = s.at("sources").strings();
      if (sc.source_files.size() != sc.sources.size()) {
        s.at("sources").fail("need one file per target source");
      }
    }
    if (s.has("noise")) {
      sc.noise_files = s.at("noise").strings();
      if (static_cast<int>(sc.noise_files.size()) != sc.noise_count) {
        s.at("noise").fail("need one file per noise source");
      }
    }
  }
  sc.validate();
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path, const Overrides& overrides) {
  try {
    Scenario sc = parse_scenario(read_text(path), overrides);
    // Recording paths are relative to the scenario file.
    for (auto* files : {&sc.source_files, &sc.noise_files}) {
      for (auto& f : *files) {
        if (std::filesystem::path(f).is_relative()) f = (path.parent_path() / f).string();
      }
    }
    return sc;
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

SeparatorConfig parse_separator_config(const std::string& json_text,
                                       const Overrides& overrides) {
  const json doc = load_document(json_text, overrides);
  const Node root(doc, "$");
  root.expect_object({"algorithm", "mics", "sources", "m1", "m2", "alpha", "inner_iters",
                      "loading", "weight_floor"});
  SeparatorConfig cfg;
  if (root.has("algorithm")) {
    try {
      cfg.algorithm = parse_algorithm(root.at("algorithm").string());
    } catch (const ConfigError& e) {
      root.at("algorithm").fail(e.what());
    }
  }
  cfg.mics = checked_int(root, root.integer_or("mics", 9), 1, 1024);
  cfg.sources = checked_int(root, root.integer_or("sources", 2), 1, 1024);
  cfg.alpha = root.number_or("alpha", default_forgetting_factor(cfg.algorithm));
  cfg.inner_iters = checked_int(root, root.integer_or("inner_iters", 1), 0, 1000);
  cfg.loading = root.number_or("loading", kDefaultLoading);
  cfg.weight_floor = root.number_or("weight_floor", cfg.weight_floor);
  if (cfg.algorithm == Algorithm::kBiIva) {
    std::tie(cfg.m1, cfg.m2) = square_factors(cfg.mics);
    if (root.has("m1")) cfg.m1 = checked_int(root.at("m1"), root.at("m1").integer(), 1, 1024);
    if (root.has("m2")) cfg.m2 = checked_int(root.at("m2"), root.at("m2").integer(), 1, 1024);
    if (root.has("m1") != root.has("m2")) {
      // Complete the factorization from the one given factor.
      if (root.has("m1")) {
        cfg.m2 = cfg.mics % cfg.m1 == 0 ? cfg.mics / cfg.m1 : 0;
      } else {
        cfg.m1 = cfg.mics % cfg.m2 == 0 ? cfg.mics / cfg.m2 : 0;
      }
    }
    if (cfg.m1 * cfg.m2 != cfg.mics) {
      root.fail("biiva requires m1 * m2 == mics (got m1 = " + std::to_string(cfg.m1) +
                ", m2 = " + std::to_string(cfg.m2) + ", mics = " + std::to_string(cfg.mics) +
                ")");
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    root.fail(e.what());
  }
  return cfg;
}

SeparatorConfig load_separator_config(const std::filesystem::path& path,
                                      const Overrides& overrides) {
  try {
    return parse_separator_config(read_text(path), overrides);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

EvalConfig parse_eval_config(const std::string& json_text, const Overrides& overrides) {
  const json doc = load_document(json_text, overrides);
  const Node root(doc, "$");
  root.expect_object({"segment_length", "filter_length", "reference_channel", "pairing"});
  EvalConfig cfg;
  if (root.has("pairing")) {
    const std::string pairing = root.at("pairing").string();
    if (pairing == "converged") {
      cfg.pairing = PairingWindow::kConverged;
    } else if (pairing == "first_segment") {
      cfg.pairing = PairingWindow::kFirstSegment;
    } else {
      root.at("pairing").fail("expected \"converged\" or \"first_segment\"");
    }
  }
  cfg.segment_length = root.number_or("segment_length", cfg.segment_length);
  cfg.filter_length = checked_int(root, root.integer_or("filter_length", cfg.filter_length), 1, 1 << 16);
  cfg.reference_channel =
      checked_int(root, root.integer_or("reference_channel", cfg.reference_channel), 1, 1024);
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    root.fail(e.what());
  }
  return cfg;
}

StftConfig parse_stft_config(const std::string& json_text, const Overrides& overrides) {
  const json doc = load_document(json_text, overrides);
  const Node root(doc, "$");
  root.expect_object({"fft_size", "hop", "window", "sample_rate"});
  StftConfig cfg;
  cfg.fft_size = checked_int(root, root.integer_or("fft_size", cfg.fft_size), 2, 1 << 20);
  cfg.hop = checked_int(root, root.integer_or("hop", cfg.hop), 1, 1 << 20);
  cfg.sample_rate = checked_int(root, root.integer_or("sample_rate", cfg.sample_rate), 1, 1000000);
  if (root.has("window") && root.at("window").string() != "hann") {
    root.at("window").fail("only \"hann\" is supported");
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    root.fail(e.what());
  }
  return cfg;
}

// ---------------------------------------------------------------------------

std::string eval_csv(const EvalReport& report) {
  std::string out =
      "segment_index,t_start_s,source,sir_db,sdr_db,sir_improvement_db,"
      "sdr_improvement_db,clipped_flag\n";
  for (const auto& s : report.scores) {
    bool clipped = false;
    auto cell = [&](double v) {
      if (std::isinf(v)) {
        clipped = true;
        v = v > 0 ? kCsvInfinity : -kCsvInfinity;
      }
      return fmt("%.6f", v);
    };
    const std::string row = cell(s.sir_db) + "," + cell(s.sdr_db) + "," +
                            cell(s.sir_improvement_db) + "," + cell(s.sdr_improvement_db);
    out += std::to_string(s.segment) + "," + fmt("%.3f", s.t_start_s) + "," +
           std::to_string(s.source + 1) + "," + row + "," + (clipped ? "1" : "0") + "\n";
  }
  return out;
}

void write_eval_csv(const EvalReport& report, const std::filesystem::path& path) {
  write_text(path, eval_csv(report));
}

EvalReport parse_eval_csv(const std::string& text) {
  EvalReport report;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("segment_index,", 0) != 0) {
    throw IoError("eval csv: missing header");
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::array<double, 8> v{};
    std::istringstream row(line);
    std::string cell;
    int k = 0;
    while (std::getline(row, cell, ',') && k < 8) {
      try {
        v[k++] = std::stod(cell);
      } catch (const std::exception&) {
        throw IoError("eval csv line " + std::to_string(lineno) + ": bad number");
      }
    }
    if (k != 8) throw IoError("eval csv line " + std::to_string(lineno) + ": expected 8 columns");
    auto restore = [&](double x) {
      if (v[7] != 0.0 && std::abs(x) >= kCsvInfinity) return x > 0 ? kPlusInfinityDb : -kPlusInfinityDb;
      return x;
    };
    SegmentScore s;
    s.segment = static_cast<int>(v[0]);
    s.t_start_s = v[1];
    s.source = static_cast<int>(v[2]) - 1;
    s.sir_db = restore(v[3]);
    s.sdr_db = restore(v[4]);
    s.sir_improvement_db = restore(v[5]);
    s.sdr_improvement_db = restore(v[6]);
    report.segments = std::max(report.segments, s.segment + 1);
    report.scores.push_back(s);
  }
  return report;
}

std::string mix_metadata_json(const Scenario& scenario, const MixMetadata& metadata) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  auto pts = [](const std::vector<Vec3>& ps) {
    json a = json::array();
    for (const auto& p : ps) a.push_back({p.x(), p.y(), p.z()});
    return a;
  };
  json doc;
  doc["seed"] = scenario.seed;
  doc["sample_rate"] = scenario.room.sample_rate;
  doc["source_gains"] = metadata.source_gains;
  doc["noise_gain"] = metadata.noise_gain;
  doc["white_noise_scale"] = scenario.white_noise_scale;
  doc["target_isir_db"] = scenario.isir_db;
  doc["target_isnr_db"] = scenario.isnr_db;
  doc["measured_isir_db"] = num(metadata.measured_isir_db);
  doc["isir_defined"] = std::isfinite(metadata.measured_isir_db);
  doc["measured_isnr_db"] = num(metadata.measured_isnr_db);
  doc["reflection"] = scenario.room.reflection;
  doc["t60"] = scenario.room.t60;
  doc["microphones"] = pts(scenario.array.positions);
  doc["sources"] = pts(scenario.sources);
  doc["noise_positions"] = pts(metadata.noise_positions);
  return doc.dump(2) + "\n";
}

}  // namespace bss
