#pragma once

// File formats:
//  * float maps: raw little-endian f32, planar channels, row-major, with a
//    JSON sidecar "<data>.json" {width, height, channels, dtype, channel_names}
//  * label maps: 16-bit binary PGM (P5, maxval 65535, big-endian samples)
//  * annotations: JSON records {label, type, centroid}
//  * configs: flat "key = value" text

#include <bit>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hovernet/grid.hpp"
#include "hovernet/losses.hpp"
#include "hovernet/metrics.hpp"
#include "hovernet/postproc.hpp"
#include "hovernet/synth.hpp"
#include "hovernet/tiling.hpp"

namespace hovernet::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes via a temporary sibling and a rename so readers never observe a
/// partially written file.
inline void write_file_atomic(const fs::path& path, std::string_view bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::io, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::io, "cannot rename " + tmp.string() + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// Float maps

struct FloatMap {
  GridStack channels;
  std::vector<std::string> channel_names;
};

inline fs::path descriptor_path(const fs::path& data) {
  fs::path p = data;
  p += ".json";
  return p;
}

inline void write_float_map(const fs::path& path, const FloatMap& map) {
  require_stack(map.channels, "float map");
  if (!map.channel_names.empty() && map.channel_names.size() != map.channels.size()) {
    throw Error(ErrorKind::invalid_argument, "float map: channel name count mismatch");
  }
  const auto& first = map.channels.front();
  std::string bytes;
  bytes.reserve(map.channels.size() * first.size() * 4);
  for (const auto& ch : map.channels) {
    for (double v : ch) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
    }
  }
  json desc;
  desc["width"] = first.width();
  desc["height"] = first.height();
  desc["channels"] = map.channels.size();
  desc["dtype"] = "f32le";
  desc["channel_names"] = map.channel_names;
  write_file_atomic(path, bytes);
  write_file_atomic(descriptor_path(path), desc.dump(2) + "\n");
}

inline FloatMap read_float_map(const fs::path& path) {
  json desc;
  try {
    desc = json::parse(read_file(descriptor_path(path)));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, "bad descriptor for " + path.string() + ": " + e.what());
  }
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  FloatMap map;
  try {
    width = desc.at("width").get<std::size_t>();
    height = desc.at("height").get<std::size_t>();
    channels = desc.at("channels").get<std::size_t>();
    if (desc.at("dtype").get<std::string>() != "f32le") {
      throw Error(ErrorKind::parse, path.string() + ": unsupported dtype");
    }
    if (desc.contains("channel_names")) {
      map.channel_names = desc.at("channel_names").get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, "bad descriptor for " + path.string() + ": " + e.what());
  }
  if (width == 0 || height == 0 || channels == 0) {
    throw Error(ErrorKind::parse, path.string() + ": descriptor has zero dimension");
  }
  const std::string bytes = read_file(path);
  if (bytes.size() != width * height * channels * 4) {
    throw Error(ErrorKind::dimension_mismatch,
                path.string() + ": file holds " + std::to_string(bytes.size()) +
                    " bytes, descriptor implies " + std::to_string(width * height * channels * 4));
  }
  std::size_t off = 0;
  for (std::size_t ch = 0; ch < channels; ++ch) {
    RealGrid g(height, width, 0.0);
    for (auto& v : g) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off++])) << (8 * b);
      }
      v = static_cast<double>(std::bit_cast<float>(bits));
    }
    map.channels.push_back(std::move(g));
  }
  return map;
}

// ---------------------------------------------------------------------------
// 16-bit PGM label maps

template <class G>
void write_pgm16(const fs::path& path, const G& grid) {
  std::string bytes = "P5\n" + std::to_string(grid.width()) + " " +
                      std::to_string(grid.height()) + "\n65535\n";
  bytes.reserve(bytes.size() + grid.size() * 2);
  for (auto v : grid) {
    if (v < 0 || static_cast<std::uint64_t>(v) > 65535) {
      throw Error(ErrorKind::invalid_argument,
                  path.string() + ": value " + std::to_string(v) + " does not fit 16 bits");
    }
    const auto u = static_cast<std::uint16_t>(v);
    bytes.push_back(static_cast<char>(u >> 8));
    bytes.push_back(static_cast<char>(u & 0xFF));
  }
  write_file_atomic(path, bytes);
}

namespace detail {

inline std::size_t pgm_token(const std::string& s, std::size_t& pos, const fs::path& path) {
  auto skip = [&] {
    while (pos < s.size()) {
      if (s[pos] == '#') {
        while (pos < s.size() && s[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(s[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  skip();
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + s.size(), value);
  if (ec != std::errc{}) throw Error(ErrorKind::parse, path.string() + ": malformed PGM header");
  pos = static_cast<std::size_t>(ptr - s.data());
  return value;
}

}  // namespace detail

template <class G = InstanceMap>
G read_pgm16(const fs::path& path) {
  const std::string s = read_file(path);
  if (s.size() < 2 || s[0] != 'P' || s[1] != '5') {
    throw Error(ErrorKind::parse, path.string() + ": not a binary PGM (P5)");
  }
  std::size_t pos = 2;
  const std::size_t w = detail::pgm_token(s, pos, path);
  const std::size_t h = detail::pgm_token(s, pos, path);
  const std::size_t maxval = detail::pgm_token(s, pos, path);
  if (pos >= s.size() || !std::isspace(static_cast<unsigned char>(s[pos]))) {
    throw Error(ErrorKind::parse, path.string() + ": malformed PGM header");
  }
  ++pos;
  if (w == 0 || h == 0) throw Error(ErrorKind::parse, path.string() + ": empty PGM");
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  if (s.size() - pos != w * h * bpp) {
    throw Error(ErrorKind::dimension_mismatch, path.string() + ": PGM payload size does not match " +
                                                   std::to_string(w) + "x" + std::to_string(h));
  }
  G out(h, w);
  for (std::size_t i = 0; i < w * h; ++i) {
    std::uint32_t v = static_cast<unsigned char>(s[pos + i * bpp]);
    if (bpp == 2) v = (v << 8) | static_cast<unsigned char>(s[pos + i * 2 + 1]);
    out[i] = static_cast<typename G::value_type>(v);
  }
  return out;
}

inline void write_label_map(const fs::path& path, const InstanceMap& im) { write_pgm16(path, im); }
inline InstanceMap read_label_map(const fs::path& path) { return read_pgm16<InstanceMap>(path); }

// ---------------------------------------------------------------------------
// Annotations

inline std::map<ClassId, std::string> default_classes() {
  return {{1, "miscellaneous"}, {2, "inflammatory"}, {3, "epithelial"}, {4, "spindle"}};
}

struct Annotation {
  Label label;
  ClassId type;  // kUnlabelled when unknown
  Point centroid;
  std::optional<double> probability;
};

struct AnnotationFile {
  std::map<ClassId, std::string> classes = default_classes();
  std::vector<Annotation> instances;

  TypeAssignment type_assignment() const {
    TypeAssignment t;
    for (const auto& a : instances) {
      if (a.type != kUnlabelled) t[a.label] = a.type;
    }
    return t;
  }
};

inline std::string annotation_to_json(const AnnotationFile& f) {
  json j;
  j["classes"] = json::object();
  for (const auto& [id, name] : f.classes) j["classes"][std::to_string(id)] = name;
  j["instances"] = json::array();
  for (const auto& a : f.instances) {
    json r;
    r["label"] = a.label;
    if (a.type == kUnlabelled) {
      r["type"] = "UNLABELLED";
    } else {
      r["type"] = a.type;
    }
    r["centroid"] = {a.centroid.row, a.centroid.col};
    if (a.probability) r["probability"] = *a.probability;
    j["instances"].push_back(std::move(r));
  }
  return j.dump(2) + "\n";
}

inline AnnotationFile annotation_from_json(const std::string& text, const std::string& origin) {
  AnnotationFile f;
  try {
    const json j = json::parse(text);
    if (j.contains("classes")) {
      f.classes.clear();
      for (const auto& [key, name] : j.at("classes").items()) {
        f.classes[std::stoi(key)] = name.get<std::string>();
      }
    }
    std::set<Label> seen;
    for (const auto& r : j.at("instances")) {
      Annotation a{};
      a.label = r.at("label").get<Label>();
      const auto& t = r.at("type");
      if (t.is_string() && t.get<std::string>() == "UNLABELLED") {
        a.type = kUnlabelled;
      } else {
        a.type = t.get<ClassId>();
        if (!f.classes.contains(a.type)) {
          throw Error(ErrorKind::unknown_type, origin + ": label " + std::to_string(a.label) +
                                                   " has undeclared type " +
                                                   std::to_string(a.type));
        }
      }
      const auto& c = r.at("centroid");
      a.centroid = {c.at(0).get<double>(), c.at(1).get<double>()};
      if (r.contains("probability")) a.probability = r.at("probability").get<double>();
      if (!seen.insert(a.label).second) {
        throw Error(ErrorKind::parse, origin + ": duplicate label " + std::to_string(a.label));
      }
      f.instances.push_back(a);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, origin + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw Error(ErrorKind::parse, origin + ": bad class id");
  }
  return f;
}

inline AnnotationFile read_annotations(const fs::path& path) {
  return annotation_from_json(read_file(path), path.string());
}

inline void write_annotations(const fs::path& path, const AnnotationFile& f) {
  write_file_atomic(path, annotation_to_json(f));
}

// ---------------------------------------------------------------------------
// Flat key/value configs

using KeyValues = std::map<std::string, std::string>;

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline KeyValues parse_key_values(const std::string& text, const std::string& origin) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::parse, origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (!kv.emplace(key, trim(std::string_view(t).substr(eq + 1))).second) {
      throw Error(ErrorKind::parse, origin + ": duplicate key " + key);
    }
  }
  return kv;
}

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& value, const std::string& origin) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw Error(ErrorKind::parse, origin + ": bad value for " + key + ": '" + value + "'");
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline PostProcConfig postproc_config_from_text(const std::string& text,
                                                const std::string& origin) {
  PostProcConfig cfg;
  for (const auto& [key, value] : parse_key_values(text, origin)) {
    if (key == "h") {
      cfg.h = detail::parse_number<double>(key, value, origin);
    } else if (key == "k") {
      cfg.k = detail::parse_number<double>(key, value, origin);
    } else if (key == "sobel_ksize") {
      cfg.sobel_ksize = detail::parse_number<int>(key, value, origin);
    } else if (key == "min_marker_area") {
      cfg.min_marker_area = detail::parse_number<std::size_t>(key, value, origin);
    } else if (key == "min_instance_area") {
      cfg.min_instance_area = detail::parse_number<std::size_t>(key, value, origin);
    } else if (key == "energy_mode") {
      if (value == "sobel") {
        cfg.energy_mode = EnergyMode::sobel;
      } else if (value == "sqsum") {
        cfg.energy_mode = EnergyMode::sqsum;
      } else {
        throw Error(ErrorKind::parse, origin + ": energy_mode must be sobel or sqsum");
      }
    } else if (key == "marker_mode") {
      if (value == "sobel") {
        cfg.marker_mode = MarkerMode::sobel;
      } else if (value == "threshold") {
        cfg.marker_mode = MarkerMode::threshold;
      } else {
        throw Error(ErrorKind::parse, origin + ": marker_mode must be sobel or threshold");
      }
    } else if (key == "threshold_marker_lo") {
      cfg.threshold_marker_lo = detail::parse_number<double>(key, value, origin);
    } else if (key == "threshold_marker_hi") {
      cfg.threshold_marker_hi = detail::parse_number<double>(key, value, origin);
    } else {
      throw Error(ErrorKind::parse, origin + ": unknown key " + key);
    }
  }
  cfg.validate();
  return cfg;
}

inline std::string postproc_config_to_text(const PostProcConfig& cfg) {
  std::ostringstream out;
  out << "h = " << detail::format_double(cfg.h) << "\n"
      << "k = " << detail::format_double(cfg.k) << "\n"
      << "sobel_ksize = " << cfg.sobel_ksize << "\n"
      << "min_marker_area = " << cfg.min_marker_area << "\n"
      << "min_instance_area = " << cfg.min_instance_area << "\n"
      << "energy_mode = " << (cfg.energy_mode == EnergyMode::sobel ? "sobel" : "sqsum") << "\n"
      << "marker_mode = " << (cfg.marker_mode == MarkerMode::sobel ? "sobel" : "threshold")
      << "\n"
      << "threshold_marker_lo = " << detail::format_double(cfg.threshold_marker_lo) << "\n"
      << "threshold_marker_hi = " << detail::format_double(cfg.threshold_marker_hi) << "\n";
  return out.str();
}

/// Synthetic dataset settings: the scene parameters plus the image count.
struct SynthDatasetConfig {
  SynthConfig scene;
  std::size_t images = 1;
};

inline SynthDatasetConfig synth_config_from_text(const std::string& text,
                                                 const std::string& origin) {
  SynthDatasetConfig cfg;
  auto& s = cfg.scene;
  for (const auto& [key, value] : parse_key_values(text, origin)) {
    if (key == "height") {
      s.height = detail::parse_number<std::size_t>(key, value, origin);
    } else if (key == "width") {
      s.width = detail::parse_number<std::size_t>(key, value, origin);
    } else if (key == "count") {
      s.count = detail::parse_number<std::size_t>(key, value, origin);
    } else if (key == "radius_min") {
      s.radius_min = detail::parse_number<double>(key, value, origin);
    } else if (key == "radius_max") {
      s.radius_max = detail::parse_number<double>(key, value, origin);
    } else if (key == "overlap") {
      s.overlap = detail::parse_number<double>(key, value, origin);
    } else if (key == "classes") {
      s.classes = detail::parse_number<int>(key, value, origin);
    } else if (key == "seed") {
      s.seed = detail::parse_number<std::uint64_t>(key, value, origin);
    } else if (key == "max_retries") {
      s.max_retries = detail::parse_number<std::size_t>(key, value, origin);
    } else if (key == "images") {
      cfg.images = detail::parse_number<std::size_t>(key, value, origin);
    } else {
      throw Error(ErrorKind::parse, origin + ": unknown key " + key);
    }
  }
  s.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Reports

inline json to_json(const SegMetrics& m) {
  return {{"dice", m.dice}, {"dice2", m.dice2}, {"aji", m.aji},
          {"dq", m.dq},     {"sq", m.sq},       {"pq", m.pq}};
}

inline json to_json(const ClassMetrics& cm) {
  json j;
  j["f_d"] = cm.f_d;
  j["f_c_all"] = cm.f_c_all;
  j["counts"] = {{"tp_d", cm.tp_d},
                 {"fp_d", cm.fp_d},
                 {"fn_d", cm.fn_d},
                 {"correct", cm.correct},
                 {"incorrect", cm.incorrect},
                 {"unlabelled_matched", cm.unlabelled_matched},
                 {"unlabelled_gt", cm.unlabelled_gt}};
  j["per_type"] = json::object();
  for (const auto& [t, c] : cm.per_type) {
    j["per_type"][std::to_string(t)] = {{"f_c", c.f_c},   {"tp_c", c.tp_c}, {"tn_c", c.tn_c},
                                        {"fp_c", c.fp_c}, {"fn_c", c.fn_c}, {"fp_d", c.fp_d},
                                        {"fn_d", c.fn_d}};
  }
  return j;
}

inline json to_json(const TilePlan& plan) {
  json j;
  j["width"] = plan.width;
  j["height"] = plan.height;
  j["input_size"] = plan.geometry.input_size;
  j["output_size"] = plan.geometry.output_size;
  j["margin"] = plan.geometry.margin();
  j["padding"] = "reflect";
  j["rows"] = plan.rows;
  j["cols"] = plan.cols;
  j["tiles"] = json::array();
  auto rect = [](const Rect& r) {
    return json{{"row", r.row}, {"col", r.col}, {"height", r.height}, {"width", r.width}};
  };
  for (const auto& t : plan.tiles) {
    j["tiles"].push_back({{"index", t.index},
                          {"grid_row", t.grid_row},
                          {"grid_col", t.grid_col},
                          {"output", rect(t.output)},
                          {"input", rect(t.input)}});
  }
  return j;
}

}  // namespace hovernet::io
