#pragma once

// File formats: binary PGM images, the view-target stack file, the run
// manifest, the on-disk combo cache and CSV traces.
//
// Stack file (JSON):
//   {"format": "qrtag-stack", "version": 1, "grid_k": K, "shift_step": S,
//    "rows": R, "cols": C, "levels": {"low": L, "high": H},
//    "codes": [[row strings of '0'/'1'] per view, view 1 first]}
//
// Combo cache directory:
//   index.json             {"format": "qrtag-cache", "version": 1, cell, view,
//                           levels, "combos": [combo words, ascending]}
//   combo_XXXXXXXX.json    {"combo": word, "views": N, "window": scale,
//                           "front": [hex rows], "rear": [hex rows],
//                           "view_values": [...], "rms": x}
// Packed rows hold one bit per window pixel, most significant bit first,
// padded with zeros to a whole number of hex digits.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qrtag/factorization.hpp"
#include "qrtag/grid.hpp"
#include "qrtag/optics.hpp"
#include "qrtag/pixelwise.hpp"

namespace qrtag {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kFormatVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- PGM -------------------------------------------------------------------

struct GrayImage {
  Grid<std::uint16_t> pixels;
  int maxval = 255;
};

/// Reads P5 (binary) or P2 (ASCII) graymaps.
GrayImage read_pgm(const std::filesystem::path& path);
/// Writes a P5 graymap with maxval 255.
void write_pgm(const std::filesystem::path& path, const Grid<std::uint8_t>& pixels);

/// Layer pixel 1 exports as 255 and 0 as 0.
void write_layer_pgm(const std::filesystem::path& path, const BinaryLayer& layer);
/// Accepts only pixels equal to 0 or maxval.
BinaryLayer read_layer_pgm(const std::filesystem::path& path, LayerRole role);

/// Intensities in [0, 1], rounded to the nearest 8-bit level at export.
void write_gray_pgm(const std::filesystem::path& path, const RealGrid& image);
RealGrid read_gray_pgm(const std::filesystem::path& path);

/// Code image: 0 is bit 0, maxval is bit 1, anything else is rejected.
BitGrid read_bits_pgm(const std::filesystem::path& path);
void write_bits_pgm(const std::filesystem::path& path, const BitGrid& bits);

// --- Stack -----------------------------------------------------------------

void write_stack(const std::filesystem::path& path, const ViewTargetStack& stack);
ViewTargetStack read_stack(const std::filesystem::path& path);

// --- Manifest ----------------------------------------------------------------

struct RunManifest {
  std::string tool_version = kToolVersion;
  CellSpec cell{10, 1};
  int grid_k = 3;
  int shift_step = 1;
  GlassSpec glass;
  Levels levels;
  WnmfConfig wnmf;
  AnnealSchedule anneal;
  int restarts = 8;
  std::uint64_t seed = 0;
  std::optional<double> max_combo_rms;
  std::optional<double> max_ber;
  std::string stack_path;
  std::string out_dir;

  ViewSpec view() const;
  ComboSolverConfig solver() const;
  void validate() const;
};

std::string manifest_to_string(const RunManifest& manifest);
RunManifest manifest_from_string(const std::string& text);
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& path);

// --- Cache -------------------------------------------------------------------

std::string pack_bit_row(std::span<const double> bits);
std::vector<double> unpack_bit_row(const std::string& hex, std::size_t width);

void write_cache(const std::filesystem::path& dir, const ComboCache& cache);
ComboCache read_cache(const std::filesystem::path& dir);

// --- Text ------------------------------------------------------------------

/// iteration,objective,rms
void write_trace_csv(const std::filesystem::path& path, std::span<const double> objective,
                     std::span<const double> rms);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace qrtag
