#include "qrtag/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

namespace qrtag {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void format_fail(const fs::path& path, const std::string& what) {
  throw FormatError(path.string() + ": " + what);
}

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// Header token reader for netpbm: skips whitespace and '#' comments.
class PnmHeader {
 public:
  PnmHeader(const std::string& bytes, const fs::path& path) : bytes_(bytes), path_(path) {}

  std::string token() {
    skip();
    std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (start == pos_) format_fail(path_, "truncated PGM header");
    return bytes_.substr(start, pos_ - start);
  }

  long number() {
    const std::string t = token();
    try {
      std::size_t used = 0;
      const long v = std::stol(t, &used);
      if (used != t.size() || v < 0) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      format_fail(path_, "bad PGM header field '" + t + "'");
    }
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  void skip() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  const fs::path& path_;
  std::size_t pos_ = 0;
};

}  // namespace

// --- PGM -------------------------------------------------------------------

GrayImage read_pgm(const fs::path& path) {
  const std::string bytes = read_all(path);
  PnmHeader header(bytes, path);
  const std::string magic = header.token();
  if (magic != "P5" && magic != "P2") format_fail(path, "not a PGM file (magic '" + magic + "')");
  const long cols = header.number();
  const long rows = header.number();
  const long maxval = header.number();
  if (cols <= 0 || rows <= 0) format_fail(path, "empty image");
  if (maxval < 1 || maxval > 65535) format_fail(path, "maxval out of range");

  GrayImage img;
  img.maxval = static_cast<int>(maxval);
  img.pixels = Grid<std::uint16_t>(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
  const std::size_t n = img.pixels.size();
  if (magic == "P2") {
    for (std::size_t i = 0; i < n; ++i) {
      const long v = header.number();
      if (v > maxval) format_fail(path, "pixel exceeds maxval");
      img.pixels.flat()[i] = static_cast<std::uint16_t>(v);
    }
    return img;
  }
  header.advance(1);  // single whitespace byte after maxval
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  if (bytes.size() < header.pos() + n * bpp) format_fail(path, "truncated PGM raster");
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data() + header.pos());
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned v = bpp == 1 ? data[i] : (static_cast<unsigned>(data[2 * i]) << 8) | data[2 * i + 1];
    if (v > static_cast<unsigned>(maxval)) format_fail(path, "pixel exceeds maxval");
    img.pixels.flat()[i] = static_cast<std::uint16_t>(v);
  }
  return img;
}

void write_pgm(const fs::path& path, const Grid<std::uint8_t>& pixels) {
  std::string out = "P5\n" + std::to_string(pixels.cols()) + " " + std::to_string(pixels.rows()) + "\n255\n";
  out.append(reinterpret_cast<const char*>(pixels.flat().data()), pixels.size());
  write_all(path, out);
}

void write_layer_pgm(const fs::path& path, const BinaryLayer& layer) {
  Grid<std::uint8_t> px(layer.rows(), layer.cols());
  for (std::size_t i = 0; i < px.size(); ++i) px.flat()[i] = layer.pixels.flat()[i] ? 255 : 0;
  write_pgm(path, px);
}

BitGrid read_bits_pgm(const fs::path& path) {
  const GrayImage img = read_pgm(path);
  BitGrid bits(img.pixels.rows(), img.pixels.cols());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    const int v = img.pixels.flat()[i];
    if (v != 0 && v != img.maxval) {
      format_fail(path, "non-binary pixel value " + std::to_string(v) + " at index " + std::to_string(i));
    }
    bits.flat()[i] = v == img.maxval ? 1 : 0;
  }
  return bits;
}

void write_bits_pgm(const fs::path& path, const BitGrid& bits) {
  write_layer_pgm(path, {bits, LayerRole::front});
}

BinaryLayer read_layer_pgm(const fs::path& path, LayerRole role) { return {read_bits_pgm(path), role}; }

void write_gray_pgm(const fs::path& path, const RealGrid& image) {
  Grid<std::uint8_t> px(image.rows(), image.cols());
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double v = std::clamp(image.flat()[i], 0.0, 1.0);
    px.flat()[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  write_pgm(path, px);
}

RealGrid read_gray_pgm(const fs::path& path) {
  const GrayImage img = read_pgm(path);
  RealGrid out(img.pixels.rows(), img.pixels.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.flat()[i] = img.pixels.flat()[i] / static_cast<double>(img.maxval);
  return out;
}

// --- Stack -----------------------------------------------------------------

void write_stack(const fs::path& path, const ViewTargetStack& stack) {
  stack.validate();
  ordered_json j;
  j["format"] = "qrtag-stack";
  j["version"] = kFormatVersion;
  j["grid_k"] = stack.view.grid_k;
  j["shift_step"] = stack.view.shift_step;
  j["rows"] = stack.rows();
  j["cols"] = stack.cols();
  j["levels"] = {{"low", stack.levels().low}, {"high", stack.levels().high}};
  ordered_json codes = ordered_json::array();
  for (int v = 1; v <= stack.view.count(); ++v) {
    const BitGrid bits = stack.bits(v);
    ordered_json rows = ordered_json::array();
    for (std::size_t r = 0; r < bits.rows(); ++r) {
      std::string line(bits.cols(), '0');
      for (std::size_t c = 0; c < bits.cols(); ++c) line[c] = bits(r, c) ? '1' : '0';
      rows.push_back(line);
    }
    codes.push_back(rows);
  }
  j["codes"] = codes;
  write_all(path, j.dump(1) + "\n");
}

ViewTargetStack read_stack(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_all(path));
    if (j.at("format") != "qrtag-stack") format_fail(path, "not a stack file");
    if (j.at("version").get<int>() != kFormatVersion) format_fail(path, "unsupported stack version");
    const ViewSpec view = make_view_spec(j.at("grid_k").get<int>(), j.at("shift_step").get<int>());
    const Levels levels{j.at("levels").at("low").get<double>(), j.at("levels").at("high").get<double>()};
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    std::vector<BitGrid> bits;
    for (const auto& code : j.at("codes")) {
      if (code.size() != rows) format_fail(path, "code row count mismatch");
      BitGrid g(rows, cols);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::string line = code[r].get<std::string>();
        if (line.size() != cols) format_fail(path, "code column count mismatch");
        for (std::size_t c = 0; c < cols; ++c) {
          if (line[c] != '0' && line[c] != '1') format_fail(path, "code rows must be '0'/'1' strings");
          g(r, c) = line[c] == '1';
        }
      }
      bits.push_back(std::move(g));
    }
    return ViewTargetStack::from_bits(bits, view, levels);
  } catch (const json::exception& e) {
    format_fail(path, std::string("malformed stack: ") + e.what());
  }
}

// --- Manifest ----------------------------------------------------------------

ViewSpec RunManifest::view() const { return make_view_spec(grid_k, shift_step); }

ComboSolverConfig RunManifest::solver() const {
  ComboSolverConfig cfg;
  cfg.wnmf = wnmf;
  cfg.anneal = anneal;
  cfg.restarts = restarts;
  cfg.seed = seed;
  return cfg;
}

void RunManifest::validate() const {
  view().validate_against(cell);
  glass.validate();
  levels.validate();
  wnmf.validate();
  anneal.validate();
  if (restarts < 1) throw std::invalid_argument("restarts must be >= 1");
}

namespace {

template <typename T>
ordered_json optional_json(const std::optional<T>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

template <typename T>
std::optional<T> optional_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

const char* mode_name(AnnealMode m) { return m == AnnealMode::chained ? "chained" : "original"; }

AnnealMode mode_from(const std::string& s) {
  if (s == "chained") return AnnealMode::chained;
  if (s == "original") return AnnealMode::original;
  throw std::invalid_argument("unknown anneal mode '" + s + "'");
}

}  // namespace

std::string manifest_to_string(const RunManifest& m) {
  ordered_json j;
  j["format"] = "qrtag-manifest";
  j["version"] = kFormatVersion;
  j["tool_version"] = m.tool_version;
  j["cell"] = {{"scale", m.cell.scale}, {"margin", m.cell.margin}};
  j["view"] = {{"grid_k", m.grid_k}, {"shift_step", m.shift_step}};
  j["glass"] = {{"thickness_um", m.glass.thickness_um},
                {"n0", m.glass.n0},
                {"n1", m.glass.n1},
                {"pixel_pitch_um", optional_json(m.glass.pixel_pitch_um)}};
  j["levels"] = {{"low", m.levels.low}, {"high", m.levels.high}};
  j["wnmf"] = {{"lambda1", m.wnmf.lambda1}, {"lambda2", m.wnmf.lambda2},
               {"max_iters", m.wnmf.max_iters}, {"tol", m.wnmf.tol},
               {"window", m.wnmf.window},       {"epsilon", m.wnmf.epsilon}};
  ordered_json thresh = nullptr;
  if (m.anneal.thresh_init) thresh = {m.anneal.thresh_init->first, m.anneal.thresh_init->second};
  j["anneal"] = {{"a_values", m.anneal.a_values},
                 {"inner_max_iters", m.anneal.inner_max_iters},
                 {"learn_rate", m.anneal.learn_rate},
                 {"thresh_init", thresh},
                 {"mode", mode_name(m.anneal.mode)}};
  j["restarts"] = m.restarts;
  j["seed"] = m.seed;
  j["bounds"] = {{"max_combo_rms", optional_json(m.max_combo_rms)}, {"max_ber", optional_json(m.max_ber)}};
  j["paths"] = {{"stack", m.stack_path}, {"out", m.out_dir}};
  return j.dump(2) + "\n";
}

RunManifest manifest_from_string(const std::string& text) {
  RunManifest m;
  try {
    const json j = json::parse(text);
    if (j.at("format") != "qrtag-manifest") throw FormatError("not a manifest");
    if (j.at("version").get<int>() != kFormatVersion) throw FormatError("unsupported manifest version");
    m.tool_version = j.value("tool_version", std::string(kToolVersion));
    if (j.contains("cell")) {
      const auto& c = j["cell"];
      m.cell.scale = c.value("scale", m.cell.scale);
      m.cell.margin = c.value("margin", m.cell.margin);
    }
    if (j.contains("view")) {
      const auto& v = j["view"];
      m.grid_k = v.value("grid_k", m.grid_k);
      m.shift_step = v.value("shift_step", m.shift_step);
      if (!j.contains("cell") || !j["cell"].contains("margin")) m.cell.margin = default_margin(m.grid_k, m.shift_step);
    }
    if (j.contains("glass")) {
      const auto& g = j["glass"];
      m.glass.thickness_um = g.value("thickness_um", m.glass.thickness_um);
      m.glass.n0 = g.value("n0", m.glass.n0);
      m.glass.n1 = g.value("n1", m.glass.n1);
      m.glass.pixel_pitch_um = optional_from<double>(g, "pixel_pitch_um");
    }
    if (j.contains("levels")) {
      m.levels.low = j["levels"].value("low", m.levels.low);
      m.levels.high = j["levels"].value("high", m.levels.high);
    }
    if (j.contains("wnmf")) {
      const auto& w = j["wnmf"];
      m.wnmf.lambda1 = w.value("lambda1", m.wnmf.lambda1);
      m.wnmf.lambda2 = w.value("lambda2", m.wnmf.lambda2);
      m.wnmf.max_iters = w.value("max_iters", m.wnmf.max_iters);
      m.wnmf.tol = w.value("tol", m.wnmf.tol);
      m.wnmf.window = w.value("window", m.wnmf.window);
      m.wnmf.epsilon = w.value("epsilon", m.wnmf.epsilon);
    }
    if (j.contains("anneal")) {
      const auto& a = j["anneal"];
      m.anneal.a_values = a.value("a_values", m.anneal.a_values);
      m.anneal.inner_max_iters = a.value("inner_max_iters", m.anneal.inner_max_iters);
      m.anneal.learn_rate = a.value("learn_rate", m.anneal.learn_rate);
      if (a.contains("thresh_init") && !a["thresh_init"].is_null()) {
        const auto& t = a["thresh_init"];
        m.anneal.thresh_init = std::pair{t.at(0).get<double>(), t.at(1).get<double>()};
      }
      m.anneal.mode = mode_from(a.value("mode", std::string("chained")));
    }
    m.restarts = j.value("restarts", m.restarts);
    m.seed = j.value("seed", m.seed);
    if (j.contains("bounds")) {
      m.max_combo_rms = optional_from<double>(j["bounds"], "max_combo_rms");
      m.max_ber = optional_from<double>(j["bounds"], "max_ber");
    }
    if (j.contains("paths")) {
      m.stack_path = j["paths"].value("stack", std::string());
      m.out_dir = j["paths"].value("out", std::string());
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  m.validate();
  return m;
}

void write_manifest(const fs::path& path, const RunManifest& manifest) {
  write_all(path, manifest_to_string(manifest));
}

RunManifest read_manifest(const fs::path& path) {
  try {
    return manifest_from_string(read_all(path));
  } catch (const FormatError& e) {
    format_fail(path, e.what());
  }
}

// --- Cache -------------------------------------------------------------------

std::string pack_bit_row(std::span<const double> bits) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out((bits.size() + 3) / 4, '0');
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] != 0.0) {
      const std::size_t digit = i / 4;
      const int value = static_cast<int>(out[digit] <= '9' ? out[digit] - '0' : out[digit] - 'a' + 10);
      out[digit] = kHex[value | (8 >> (i % 4))];
    }
  }
  return out;
}

std::vector<double> unpack_bit_row(const std::string& hex, std::size_t width) {
  if (hex.size() != (width + 3) / 4) {
    throw FormatError("packed row '" + hex + "' does not hold " + std::to_string(width) + " bits");
  }
  std::vector<double> out(width);
  for (std::size_t i = 0; i < width; ++i) {
    const char ch = static_cast<char>(std::tolower(static_cast<unsigned char>(hex[i / 4])));
    int value = 0;
    if (ch >= '0' && ch <= '9') {
      value = ch - '0';
    } else if (ch >= 'a' && ch <= 'f') {
      value = ch - 'a' + 10;
    } else {
      throw FormatError("bad hex digit in packed row '" + hex + "'");
    }
    out[i] = (value & (8 >> (i % 4))) ? 1.0 : 0.0;
  }
  return out;
}

namespace {

std::string combo_file_name(std::uint32_t bits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "combo_%08x.json", bits);
  return buf;
}

ordered_json pack_window(const std::vector<double>& v, int scale) {
  ordered_json rows = ordered_json::array();
  const auto s = static_cast<std::size_t>(scale);
  for (std::size_t r = 0; r < s; ++r) rows.push_back(pack_bit_row(std::span(v).subspan(r * s, s)));
  return rows;
}

std::vector<double> unpack_window(const json& rows, int scale) {
  const auto s = static_cast<std::size_t>(scale);
  if (rows.size() != s) throw FormatError("packed window has wrong row count");
  std::vector<double> out;
  out.reserve(s * s);
  for (const auto& row : rows) {
    const std::vector<double> bits = unpack_bit_row(row.get<std::string>(), s);
    out.insert(out.end(), bits.begin(), bits.end());
  }
  return out;
}

}  // namespace

void write_cache(const fs::path& dir, const ComboCache& cache) {
  fs::create_directories(dir);
  ordered_json index;
  index["format"] = "qrtag-cache";
  index["version"] = kFormatVersion;
  index["cell"] = {{"scale", cache.cell.scale}, {"margin", cache.cell.margin}};
  index["view"] = {{"grid_k", cache.grid_k}, {"shift_step", cache.shift_step}};
  index["levels"] = {{"low", cache.levels.low}, {"high", cache.levels.high}};
  ordered_json combos = ordered_json::array();
  for (const auto& [bits, entry] : cache.entries) {
    combos.push_back(bits);
    ordered_json rec;
    rec["combo"] = bits;
    rec["views"] = entry.combo.views;
    rec["window"] = cache.cell.scale;
    rec["front"] = pack_window(entry.factors.w, cache.cell.scale);
    rec["rear"] = pack_window(entry.factors.h, cache.cell.scale);
    rec["view_values"] = entry.view_values;
    rec["rms"] = entry.rms;
    write_all(dir / combo_file_name(bits), rec.dump(1) + "\n");
  }
  index["combos"] = combos;
  write_all(dir / "index.json", index.dump(1) + "\n");
}

ComboCache read_cache(const fs::path& dir) {
  ComboCache cache;
  try {
    const json index = json::parse(read_all(dir / "index.json"));
    if (index.at("format") != "qrtag-cache") format_fail(dir, "not a combo cache");
    if (index.at("version").get<int>() != kFormatVersion) format_fail(dir, "unsupported cache version");
    cache.cell = {index.at("cell").at("scale").get<int>(), index.at("cell").at("margin").get<int>()};
    cache.grid_k = index.at("view").at("grid_k").get<int>();
    cache.shift_step = index.at("view").at("shift_step").get<int>();
    cache.levels = {index.at("levels").at("low").get<double>(), index.at("levels").at("high").get<double>()};
    for (const auto& item : index.at("combos")) {
      const auto bits = item.get<std::uint32_t>();
      const json rec = json::parse(read_all(dir / combo_file_name(bits)));
      if (rec.at("combo").get<std::uint32_t>() != bits) format_fail(dir, "combo record mismatch");
      if (rec.at("window").get<int>() != cache.cell.scale) format_fail(dir, "combo window mismatch");
      ComboEntry entry;
      entry.combo = {bits, rec.at("views").get<int>()};
      entry.factors.w = unpack_window(rec.at("front"), cache.cell.scale);
      entry.factors.h = unpack_window(rec.at("rear"), cache.cell.scale);
      entry.factors.mode = FactorMode::binary;
      entry.view_values = rec.at("view_values").get<std::vector<double>>();
      entry.rms = rec.at("rms").get<double>();
      cache.entries.emplace(bits, std::move(entry));
    }
  } catch (const json::exception& e) {
    format_fail(dir, std::string("malformed cache: ") + e.what());
  }
  return cache;
}

// --- Text ------------------------------------------------------------------

void write_trace_csv(const fs::path& path, std::span<const double> objective, std::span<const double> rms) {
  if (objective.size() != rms.size()) throw std::invalid_argument("trace columns differ in length");
  std::ostringstream out;
  out.precision(17);
  out << "iteration,objective,rms\n";
  for (std::size_t i = 0; i < objective.size(); ++i) out << i << ',' << objective[i] << ',' << rms[i] << '\n';
  write_all(path, out.str());
}

void write_text(const fs::path& path, const std::string& text) { write_all(path, text); }
std::string read_text(const fs::path& path) { return read_all(path); }

}  // namespace qrtag
