#include "qrtag/cli.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <random>
#include <regex>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "qrtag/optics.hpp"

namespace qrtag {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string manifest;
  int scale = 0;
  int grid = 0;
  int margin = -1;
  int shift_step = 0;
  std::string levels;
  std::optional<std::uint64_t> seed;
  int restarts = 0;
  int jobs = 0;
  double pixel_pitch = 0.0;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_out = true) {
  cmd->add_option("--manifest", o.manifest, "Run manifest (JSON)");
  cmd->add_option("--scale", o.scale, "High-res pixels per code pixel side");
  cmd->add_option("--grid", o.grid, "Views per axis (odd)");
  cmd->add_option("--margin", o.margin, "Padding ring width (default: largest view shift)");
  cmd->add_option("--shift-step", o.shift_step, "High-res pixels of layer shift per view step");
  cmd->add_option("--levels", o.levels, "Gray levels LOW,HIGH");
  cmd->add_option("--seed", o.seed, "Random seed");
  cmd->add_option("--restarts", o.restarts, "Random restarts per combo");
  cmd->add_option("--jobs", o.jobs, std::string("Worker threads (default: $") + kJobsEnv + ")");
  cmd->add_option("--pixel-pitch", o.pixel_pitch, "Printed high-res pixel pitch in micrometres");
  if (with_out) cmd->add_option("--out", o.out, "Output directory");
}

Levels parse_levels(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw std::invalid_argument("--levels expects LOW,HIGH");
  Levels l{std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
  l.validate();
  return l;
}

RunManifest resolve_manifest(const CommonOptions& o) {
  RunManifest m = o.manifest.empty() ? RunManifest{} : read_manifest(o.manifest);
  if (o.grid > 0) {
    m.grid_k = o.grid;
    if (o.margin < 0) m.cell.margin = default_margin(m.grid_k, o.shift_step > 0 ? o.shift_step : m.shift_step);
  }
  if (o.shift_step > 0) {
    m.shift_step = o.shift_step;
    if (o.margin < 0) m.cell.margin = default_margin(m.grid_k, m.shift_step);
  }
  if (o.margin >= 0) m.cell.margin = o.margin;
  if (o.scale > 0) m.cell.scale = o.scale;
  if (!o.levels.empty()) m.levels = parse_levels(o.levels);
  if (o.seed) m.seed = *o.seed;
  if (o.restarts > 0) m.restarts = o.restarts;
  if (o.pixel_pitch > 0.0) m.glass.pixel_pitch_um = o.pixel_pitch;
  m.validate();
  return m;
}

int resolve_jobs(const CommonOptions& o) {
  if (o.jobs > 0) return o.jobs;
  if (const char* env = std::getenv(kJobsEnv)) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return omp_get_max_threads();
}

fs::path manifest_dir(const CommonOptions& o) {
  return o.manifest.empty() ? fs::current_path() : fs::path(o.manifest).parent_path();
}

std::string fmt_fixed(double v, int digits, bool sign = false) {
  std::ostringstream s;
  if (sign) s << std::showpos;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string combo_bits_str(const PixelCombo& combo) {
  std::string s(static_cast<std::size_t>(combo.views), '0');
  for (int v = 1; v <= combo.views; ++v) s[static_cast<std::size_t>(v - 1)] = combo.bit(v) ? '1' : '0';
  return s;
}

std::vector<int> parse_views(const std::string& text, int count) {
  std::vector<int> out;
  if (text.empty() || text == "all") {
    for (int v = 1; v <= count; ++v) out.push_back(v);
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const int v = std::stoi(item);
    if (v < 1 || v > count) {
      throw std::out_of_range("view index " + std::to_string(v) + " out of range 1.." + std::to_string(count));
    }
    out.push_back(v);
  }
  return out;
}

std::string view_file_name(int v, const ViewSpec& view) {
  std::ostringstream name;
  name << "view_" << std::setw(2) << std::setfill('0') << v;
  const Shift s = view.offset(v);
  name << "_du" << std::showpos << s.du << "_dv" << s.dv << std::noshowpos;
  if (!view.angles.empty()) {
    const AnglePair& a = view.angles[static_cast<std::size_t>(v - 1)];
    name << "_ax" << fmt_fixed(a.theta_u, 2, true) << "_ay" << fmt_fixed(a.theta_v, 2, true);
  }
  name << ".pgm";
  return name.str();
}

std::string angle_table(const RunManifest& m) {
  const ViewSpec view = annotate_view_angles(m.glass, m.view());
  const double pitch = *m.glass.pixel_pitch_um;
  std::ostringstream out;
  out << "view,du,dv,x_um,y_um,theta_u_deg,theta_v_deg\n";
  for (const ViewOffsetEntry& e : view_offset_table(view)) {
    const AnglePair& a = view.angles[static_cast<std::size_t>(e.view_index - 1)];
    out << e.view_index << ',' << e.shift.du << ',' << e.shift.dv << ',' << fmt_fixed(e.shift.du * pitch, 4)
        << ',' << fmt_fixed(e.shift.dv * pitch, 4) << ',' << fmt_fixed(a.theta_u, 6) << ','
        << fmt_fixed(a.theta_v, 6) << '\n';
  }
  return out.str();
}

// --- encode ------------------------------------------------------------------

struct EncodeOptions {
  std::vector<std::string> images;
  std::string pattern;
  bool finders = false;
};

int cmd_encode(const CommonOptions& o, const EncodeOptions& e, std::ostream& out) {
  RunManifest m = resolve_manifest(o);
  if (o.out.empty()) throw std::invalid_argument("encode requires --out");
  const ViewSpec view = m.view();
  if (e.images.empty() == e.pattern.empty()) {
    throw std::invalid_argument("encode needs exactly one of --images or --pattern");
  }

  std::vector<BitGrid> bits;
  if (!e.images.empty()) {
    if (static_cast<int>(e.images.size()) != view.count()) {
      throw std::invalid_argument("expected " + std::to_string(view.count()) + " code images, got " +
                                  std::to_string(e.images.size()));
    }
    for (const std::string& path : e.images) bits.push_back(read_bits_pgm(path));
    std::vector<std::string> offending;
    for (std::size_t i = 1; i < bits.size(); ++i) {
      if (!bits[i].same_shape(bits[0])) offending.push_back(e.images[i] + " (" + shape_str(bits[i]) + ")");
    }
    if (!offending.empty()) {
      std::string msg = "code images differ in size from " + e.images[0] + " (" + shape_str(bits[0]) + "):";
      for (const std::string& f : offending) msg += " " + f;
      throw std::invalid_argument(msg);
    }
  } else {
    bits = generate_pattern(e.pattern, view.count(), m.seed);
  }

  ViewTargetStack stack = ViewTargetStack::from_bits(bits, view, m.levels);
  if (e.finders) stack = stamp_finder_patterns(stack);

  const fs::path dir(o.out);
  fs::create_directories(dir / "codes");
  write_stack(dir / "stack.json", stack);
  for (int v = 1; v <= view.count(); ++v) {
    char name[32];
    std::snprintf(name, sizeof name, "view_%02d.pgm", v);
    write_bits_pgm(dir / "codes" / name, stack.bits(v));
  }
  m.stack_path = "stack.json";
  m.out_dir = ".";
  write_manifest(dir / "manifest.json", m);
  out << "wrote " << view.count() << " codes of " << shape_str(stack.rows(), stack.cols()) << " to "
      << (dir / "stack.json").string() << "\n";
  return kExitOk;
}

// --- solve -------------------------------------------------------------------

struct SolveOptions {
  std::string stack;
  bool angles = false;
  bool all_combos = false;
  bool traces = false;
};

int cmd_solve(const CommonOptions& o, const SolveOptions& s, std::ostream& out, std::ostream& err) {
  RunManifest m = resolve_manifest(o);
  if (s.angles && !m.glass.pixel_pitch_um) {
    err << "error: --angles requires glass.pixel_pitch_um in the manifest (or --pixel-pitch)\n";
    return kExitUsage;
  }
  fs::path stack_path = s.stack;
  if (stack_path.empty()) {
    if (m.stack_path.empty()) throw std::invalid_argument("solve needs --stack or a manifest stack path");
    stack_path = manifest_dir(o) / m.stack_path;
  }
  if (o.out.empty()) throw std::invalid_argument("solve requires --out");

  const ViewTargetStack stack = read_stack(stack_path);
  if (stack.view.grid_k != m.grid_k || stack.view.shift_step != m.shift_step) {
    throw std::invalid_argument("stack view grid does not match the manifest");
  }
  if (!(stack.levels() == m.levels)) throw std::invalid_argument("stack levels do not match the manifest");
  const ViewSpec view = m.view();
  const int jobs = resolve_jobs(o);

  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<PixelCombo> combos = s.all_combos ? all_combos(view) : collect_combos(stack);
  const ComboBatch batch = solve_all_combos(combos, m.cell, view, m.levels, m.solver(), jobs);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path dir(o.out);
  fs::create_directories(dir);
  write_cache(dir / "cache", batch.cache);

  std::ostringstream combo_csv;
  combo_csv << std::setprecision(17) << "combo,bits,rms";
  for (int v = 1; v <= view.count(); ++v) combo_csv << ",view" << v;
  combo_csv << '\n';
  double worst_rms = 0.0;
  for (const auto& [bits, entry] : batch.cache.entries) {
    worst_rms = std::max(worst_rms, entry.rms);
    combo_csv << bits << ',' << combo_bits_str(entry.combo) << ',' << entry.rms;
    for (double x : entry.view_values) combo_csv << ',' << x;
    combo_csv << '\n';
  }
  write_text(dir / "combo_report.csv", combo_csv.str());

  if (s.traces) {
    for (const auto& [bits, entry] : batch.cache.entries) {
      char name[40];
      std::snprintf(name, sizeof name, "trace_%08x.csv", bits);
      write_trace_csv(dir / "traces" / name, entry.objective_trace, entry.rms_trace);
    }
  }

  int status = kExitOk;
  for (const ComboFailure& f : batch.failures) {
    err << "combo " << combo_bits_str(f.combo) << " failed: " << f.message << '\n';
    status = kExitError;
  }

  double worst_ber = 0.0;
  if (batch.failures.empty()) {
    const DesignLayers layers = aggregate(stack, batch.cache, m.cell);
    write_layer_pgm(dir / "front.pgm", layers.front);
    write_layer_pgm(dir / "rear.pgm", layers.rear);
    std::ostringstream view_csv;
    view_csv << std::setprecision(17) << "view,du,dv,hamming,ber,rms\n";
    for (const ViewDecode& d : decode_all_views(layers, stack, m.cell)) {
      const Shift sh = view.offset(d.view_index);
      view_csv << d.view_index << ',' << sh.du << ',' << sh.dv << ',' << d.hamming << ',' << d.ber << ','
               << d.rms << '\n';
      worst_ber = std::max(worst_ber, d.ber);
    }
    write_text(dir / "view_report.csv", view_csv.str());
  }
  if (s.angles) write_text(dir / "angles.csv", angle_table(m));

  RunManifest written = m;
  written.stack_path = fs::absolute(stack_path).lexically_normal().string();
  written.out_dir = ".";
  write_manifest(dir / "manifest.json", written);

  out << "solved " << batch.cache.entries.size() << " combos (" << batch.failures.size() << " failed) in "
      << fmt_fixed(seconds, 2) << " s on " << jobs << " thread(s); worst combo rms "
      << fmt_fixed(worst_rms, 4) << ", worst view ber " << fmt_fixed(worst_ber, 4) << '\n';

  if (m.max_combo_rms && worst_rms > *m.max_combo_rms) {
    err << "bound violated: worst combo rms " << worst_rms << " > " << *m.max_combo_rms << '\n';
    status = status == kExitOk ? kExitBoundViolated : status;
  }
  if (m.max_ber && worst_ber > *m.max_ber) {
    err << "bound violated: worst view ber " << worst_ber << " > " << *m.max_ber << '\n';
    status = status == kExitOk ? kExitBoundViolated : status;
  }
  return status;
}

// --- render ------------------------------------------------------------------

struct RenderOptions {
  std::string layers;
  std::string views = "all";
};

int cmd_render(CommonOptions o, const RenderOptions& r, std::ostream& out) {
  if (r.layers.empty()) throw std::invalid_argument("render requires --layers DIR");
  const fs::path layer_dir(r.layers);
  if (o.manifest.empty()) o.manifest = (layer_dir / "manifest.json").string();
  const RunManifest m = resolve_manifest(o);
  if (o.out.empty()) throw std::invalid_argument("render requires --out");

  ViewSpec view = m.view();
  if (m.glass.pixel_pitch_um) view = annotate_view_angles(m.glass, view);
  const std::vector<int> selected = parse_views(r.views, view.count());

  const BinaryLayer front = read_layer_pgm(layer_dir / "front.pgm", LayerRole::front);
  const BinaryLayer rear = read_layer_pgm(layer_dir / "rear.pgm", LayerRole::rear);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  for (int v : selected) {
    const RealGrid img = render_view(front, rear, view, v, m.cell);
    const std::string name = view_file_name(v, view);
    write_gray_pgm(dir / name, img);
    out << name << '\n';
  }
  return kExitOk;
}

// --- decode ------------------------------------------------------------------

struct DecodeOptions {
  std::string image;
  std::string code;
  std::string bits_out;
};

int cmd_decode(const CommonOptions& o, const DecodeOptions& d, std::ostream& out, std::ostream& err) {
  const RunManifest m = resolve_manifest(o);
  if (d.image.empty()) throw std::invalid_argument("decode requires --image");
  const GrayImage raw = read_pgm(d.image);
  RealGrid image(raw.pixels.rows(), raw.pixels.cols());
  for (std::size_t i = 0; i < image.size(); ++i) image.flat()[i] = raw.pixels.flat()[i] / static_cast<double>(raw.maxval);
  // The midpoint is quantized like the pixels were, so the >= tie rule
  // survives export: x >= mid implies round(x) >= round(mid).
  const double threshold = static_cast<double>(std::lround(m.levels.midpoint() * raw.maxval)) / raw.maxval;
  const BitGrid bits = binarize(image, threshold);
  if (!d.bits_out.empty()) write_bits_pgm(d.bits_out, bits);

  std::size_t ones = 0;
  for (auto b : bits.flat()) ones += b;
  nlohmann::ordered_json report;
  report["rows"] = bits.rows();
  report["cols"] = bits.cols();
  report["threshold"] = threshold;
  report["ones"] = ones;

  int status = kExitOk;
  if (!d.code.empty()) {
    const BitGrid code = read_bits_pgm(d.code);
    if (!code.same_shape(bits)) {
      throw std::invalid_argument("image is " + shape_str(bits) + " but intended code is " + shape_str(code));
    }
    const std::size_t ham = hamming_distance(bits, code);
    const double ber = static_cast<double>(ham) / static_cast<double>(bits.size());
    report["hamming"] = ham;
    report["ber"] = ber;
    report["rms"] = rms_error(GrayTarget::from_bits(code, m.levels).values, image);
    if (m.max_ber && ber > *m.max_ber) {
      err << "bound violated: ber " << ber << " > " << *m.max_ber << '\n';
      status = kExitBoundViolated;
    }
  }
  out << report.dump() << '\n';
  return status;
}

// --- angles ------------------------------------------------------------------

int cmd_angles(const CommonOptions& o, std::ostream& out, std::ostream& err) {
  const RunManifest m = resolve_manifest(o);
  if (!m.glass.pixel_pitch_um) {
    err << "error: angle table requires glass.pixel_pitch_um in the manifest (or --pixel-pitch)\n";
    return kExitUsage;
  }
  out << angle_table(m);
  return kExitOk;
}

}  // namespace

std::vector<BitGrid> generate_pattern(const std::string& spec, int views, std::uint64_t seed) {
  static const std::regex kSpec(R"(\s*(checkerboard|random)\s+(\d+)x(\d+)\s*)");
  std::smatch match;
  if (!std::regex_match(spec, match, kSpec)) {
    throw std::invalid_argument("unknown pattern '" + spec + "' (expected 'checkerboard RxC' or 'random RxC')");
  }
  const auto rows = static_cast<std::size_t>(std::stoul(match[2]));
  const auto cols = static_cast<std::size_t>(std::stoul(match[3]));
  if (rows == 0 || cols == 0) throw std::invalid_argument("pattern size must be positive");
  std::vector<BitGrid> out;
  for (int v = 1; v <= views; ++v) {
    BitGrid g(rows, cols);
    if (match[1] == "checkerboard") {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) g(r, c) = (r + c + static_cast<std::size_t>(v - 1)) % 2;
      }
    } else {
      std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(v)));
      for (auto& b : g.flat()) b = static_cast<std::uint8_t>(rng() >> 63);
    }
    out.push_back(std::move(g));
  }
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-layer parallax marker designer"};
  app.require_subcommand(1);

  CommonOptions common;
  EncodeOptions enc;
  SolveOptions sol;
  RenderOptions ren;
  DecodeOptions dec;

  auto* encode = app.add_subcommand("encode", "Build a view-target stack from code images or a pattern");
  add_common(encode, common);
  encode->add_option("--images", enc.images, "One binary PGM per view, view 1 first");
  encode->add_option("--pattern", enc.pattern, "Built-in pattern, e.g. 'random 21x21'");
  encode->add_flag("--finders", enc.finders, "Stamp finder patterns into three corners");

  auto* solve = app.add_subcommand("solve", "Solve all combos and aggregate the two layers");
  add_common(solve, common);
  solve->add_option("--stack", sol.stack, "Stack file (default: from manifest)");
  solve->add_flag("--angles", sol.angles, "Also write the per-view angle table");
  solve->add_flag("--all-combos", sol.all_combos, "Solve every combo word, not only those in the stack");
  solve->add_flag("--traces", sol.traces, "Write per-combo relaxed-stage traces");

  auto* render = app.add_subcommand("render", "Render views of a solved design");
  add_common(render, common);
  render->add_option("--layers", ren.layers, "Directory holding front.pgm and rear.pgm");
  render->add_option("--views", ren.views, "'all' or comma-separated view indices");

  auto* decode = app.add_subcommand("decode", "Binarize a rendered view and score it");
  add_common(decode, common, false);
  decode->add_option("--image", dec.image, "Rendered low-res PGM");
  decode->add_option("--code", dec.code, "Intended code as binary PGM");
  decode->add_option("--bits-out", dec.bits_out, "Write the decoded bits as PGM");

  auto* angles = app.add_subcommand("angles", "Print view offsets and physical angles");
  add_common(angles, common, false);

  std::vector<std::string> argv_store{"qrtag"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (std::string& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*encode) return cmd_encode(common, enc, out);
    if (*solve) return cmd_solve(common, sol, out, err);
    if (*render) return cmd_render(common, ren, out);
    if (*decode) return cmd_decode(common, dec, out, err);
    if (*angles) return cmd_angles(common, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitUsage;
}

}  // namespace qrtag
