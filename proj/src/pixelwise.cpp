#include "qrtag/pixelwise.hpp"

#include <omp.h>

#include <algorithm>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

namespace qrtag {

namespace {

constexpr int kMaxViews = 25;

std::string combo_str(const PixelCombo& combo) {
  std::string s(static_cast<std::size_t>(combo.views), '0');
  for (int i = 0; i < combo.views; ++i) {
    if ((combo.bits >> i) & 1u) s[static_cast<std::size_t>(combo.views - 1 - i)] = '1';
  }
  return "0b" + s;
}

}  // namespace

void PixelCombo::validate() const {
  if (views < 1 || views > kMaxViews) {
    throw std::invalid_argument("combo view count " + std::to_string(views) + " outside 1.." +
                                std::to_string(kMaxViews));
  }
  if (views < 32 && (bits >> views) != 0) {
    throw std::invalid_argument("combo word " + std::to_string(bits) + " has bits beyond view " +
                                std::to_string(views));
  }
}

void ViewTargetStack::validate() const {
  view.validate();
  if (static_cast<int>(codes.size()) != view.count()) {
    throw std::invalid_argument("stack has " + std::to_string(codes.size()) + " codes for " +
                                std::to_string(view.count()) + " views");
  }
  if (view.count() > kMaxViews) throw std::invalid_argument("at most 25 views are supported");
  for (std::size_t i = 0; i < codes.size(); ++i) {
    codes[i].validate();
    if (!codes[i].values.same_shape(codes[0].values)) {
      throw std::invalid_argument("view " + std::to_string(i + 1) + " code is " +
                                  shape_str(codes[i].values) + ", view 1 code is " +
                                  shape_str(codes[0].values));
    }
    if (!(codes[i].levels == codes[0].levels)) {
      throw std::invalid_argument("views use different level pairs");
    }
  }
}

ViewTargetStack ViewTargetStack::from_bits(const std::vector<BitGrid>& bits, const ViewSpec& view,
                                           const Levels& levels) {
  ViewTargetStack stack;
  stack.view = view;
  stack.codes.reserve(bits.size());
  for (const BitGrid& b : bits) stack.codes.push_back(GrayTarget::from_bits(b, levels));
  stack.validate();
  return stack;
}

BitGrid ViewTargetStack::bits(int view_index) const {
  const GrayTarget& code = codes.at(static_cast<std::size_t>(view_index - 1));
  BitGrid out(code.values.rows(), code.values.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.flat()[i] = code.values.flat()[i] == code.levels.high;
  return out;
}

PixelCombo ViewTargetStack::combo_at(std::size_t row, std::size_t col) const {
  PixelCombo combo{0, view.count()};
  for (int v = 0; v < view.count(); ++v) {
    const GrayTarget& code = codes[static_cast<std::size_t>(v)];
    if (code.values(row, col) == code.levels.high) combo.bits |= 1u << v;
  }
  return combo;
}

const ComboEntry* ComboCache::find(std::uint32_t bits) const {
  const auto it = entries.find(bits);
  return it == entries.end() ? nullptr : &it->second;
}

ViewTargetStack combo_target(const PixelCombo& combo, const ViewSpec& view, const Levels& levels) {
  combo.validate();
  if (combo.views != view.count()) {
    throw std::invalid_argument("combo has " + std::to_string(combo.views) + " views, grid has " +
                                std::to_string(view.count()));
  }
  std::vector<BitGrid> bits;
  bits.reserve(static_cast<std::size_t>(view.count()));
  for (int v = 1; v <= view.count(); ++v) bits.emplace_back(1, 1, combo.bit(v) ? 1 : 0);
  return ViewTargetStack::from_bits(bits, view, levels);
}

FactorProblem combo_problem(const PixelCombo& combo, const CellSpec& cell, const ViewSpec& view,
                            const Levels& levels) {
  const ViewTargetStack targets = combo_target(combo, view, levels);
  std::vector<double> target;
  target.reserve(targets.codes.size());
  for (const GrayTarget& t : targets.codes) target.push_back(t.values(0, 0));
  std::vector<double> weights(target.size(), 1.0);
  return {std::move(target), std::move(weights), ProjectionOperator::cell_views(cell, view)};
}

ComboEntry solve_combo(const PixelCombo& combo, const CellSpec& cell, const ViewSpec& view,
                       const Levels& levels, const ComboSolverConfig& cfg) {
  const FactorProblem problem = combo_problem(combo, cell, view, levels);
  WnmfConfig wnmf = cfg.wnmf;
  wnmf.seed = derive_seed(cfg.seed, combo.bits);
  BmfResult solved = bmf_solve(problem, wnmf, cfg.anneal, cfg.restarts);

  ComboEntry entry;
  entry.combo = combo;
  entry.view_values = problem.op.forward(solved.factors.w, solved.factors.h);
  entry.rms = solved.report.rms;
  entry.objective_trace = std::move(solved.report.wnmf_trace);
  entry.rms_trace = std::move(solved.report.wnmf_rms_trace);
  entry.factors = std::move(solved.factors);
  return entry;
}

std::vector<PixelCombo> collect_combos(const ViewTargetStack& stack) {
  stack.validate();
  std::set<std::uint32_t> seen;
  for (std::size_t r = 0; r < stack.rows(); ++r) {
    for (std::size_t c = 0; c < stack.cols(); ++c) seen.insert(stack.combo_at(r, c).bits);
  }
  std::vector<PixelCombo> out;
  out.reserve(seen.size());
  for (std::uint32_t bits : seen) out.push_back({bits, stack.view.count()});
  return out;
}

std::vector<PixelCombo> all_combos(const ViewSpec& view) {
  view.validate();
  if (view.count() > kMaxFullEnumerationViews) {
    throw std::invalid_argument("full combo enumeration refused for " + std::to_string(view.count()) +
                                " views; solve the combos present in a stack instead");
  }
  const std::uint32_t n = 1u << view.count();
  std::vector<PixelCombo> out;
  out.reserve(n);
  for (std::uint32_t b = 0; b < n; ++b) out.push_back({b, view.count()});
  return out;
}

namespace {

ComboBatch empty_batch(const CellSpec& cell, const ViewSpec& view, const Levels& levels) {
  ComboBatch batch;
  batch.cache.cell = cell;
  batch.cache.grid_k = view.grid_k;
  batch.cache.shift_step = view.shift_step;
  batch.cache.levels = levels;
  return batch;
}

void check_batch_inputs(const std::vector<PixelCombo>& combos, const CellSpec& cell,
                        const ViewSpec& view, const Levels& levels) {
  view.validate_against(cell);
  levels.validate();
  for (const PixelCombo& c : combos) {
    c.validate();
    if (c.views != view.count()) throw std::invalid_argument("combo view count does not match grid");
  }
}

}  // namespace

ComboBatch solve_all_combos(const std::vector<PixelCombo>& combos, const CellSpec& cell,
                            const ViewSpec& view, const Levels& levels,
                            const ComboSolverConfig& cfg, int jobs) {
  check_batch_inputs(combos, cell, view, levels);
  const int threads = jobs > 0 ? jobs : omp_get_max_threads();
  const auto n = static_cast<std::ptrdiff_t>(combos.size());
  std::vector<std::optional<ComboEntry>> solved(combos.size());
  std::vector<std::string> errors(combos.size());

  // Each slot is written by exactly one iteration.
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      solved[k] = solve_combo(combos[k], cell, view, levels, cfg);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }

  ComboBatch batch = empty_batch(cell, view, levels);
  for (std::size_t k = 0; k < combos.size(); ++k) {
    if (solved[k]) {
      batch.cache.entries.emplace(combos[k].bits, std::move(*solved[k]));
    } else {
      batch.failures.push_back({combos[k], errors[k]});
    }
  }
  return batch;
}

namespace reference {

ComboBatch solve_all_combos(const std::vector<PixelCombo>& combos, const CellSpec& cell,
                            const ViewSpec& view, const Levels& levels,
                            const ComboSolverConfig& cfg) {
  check_batch_inputs(combos, cell, view, levels);
  ComboBatch batch = empty_batch(cell, view, levels);
  for (const PixelCombo& combo : combos) {
    try {
      batch.cache.entries.emplace(combo.bits, solve_combo(combo, cell, view, levels, cfg));
    } catch (const std::exception& e) {
      batch.failures.push_back({combo, e.what()});
    }
  }
  return batch;
}

}  // namespace reference

DesignLayers aggregate(const ViewTargetStack& stack, const ComboCache& cache, const CellSpec& cell) {
  stack.validate();
  if (cache.cell.scale != cell.scale || cache.cell.margin != cell.margin) {
    throw std::invalid_argument("combo cache was solved for a different cell geometry");
  }
  if (cache.grid_k != stack.view.grid_k) {
    throw std::invalid_argument("combo cache was solved for a different view grid");
  }
  const auto side = static_cast<std::size_t>(cell.side());
  DesignLayers out{{BitGrid(stack.rows() * side, stack.cols() * side), LayerRole::front},
                   {BitGrid(stack.rows() * side, stack.cols() * side), LayerRole::rear}};

  for (std::size_t r = 0; r < stack.rows(); ++r) {
    for (std::size_t c = 0; c < stack.cols(); ++c) {
      const PixelCombo combo = stack.combo_at(r, c);
      const ComboEntry* entry = cache.find(combo.bits);
      if (entry == nullptr) {
        std::ostringstream msg;
        msg << "combo " << combo_str(combo) << " at pixel (" << r << ", " << c
            << ") is missing from the cache";
        throw std::invalid_argument(msg.str());
      }
      const BitGrid front = cell_tile(entry->factors.w, cell);
      const BitGrid rear = cell_tile(entry->factors.h, cell);
      for (std::size_t i = 0; i < side; ++i) {
        for (std::size_t j = 0; j < side; ++j) {
          out.front.pixels(r * side + i, c * side + j) = front(i, j);
          out.rear.pixels(r * side + i, c * side + j) = rear(i, j);
        }
      }
    }
  }
  return out;
}

std::vector<GridPos> default_finder_positions(std::size_t rows, std::size_t cols) {
  const std::size_t far_r = rows >= kFinderSide ? rows - kFinderSide : 0;
  const std::size_t far_c = cols >= kFinderSide ? cols - kFinderSide : 0;
  return {{0, 0}, {0, far_c}, {far_r, 0}};
}

ViewTargetStack stamp_finder_patterns(const ViewTargetStack& stack,
                                      const std::vector<GridPos>& positions) {
  stack.validate();
  constexpr std::size_t kMinSide = 2 * (kFinderSide + 1);
  if (stack.rows() < kMinSide || stack.cols() < kMinSide) {
    throw std::invalid_argument("code " + shape_str(stack.rows(), stack.cols()) +
                                " too small for finder patterns (need at least " +
                                std::to_string(kMinSide) + " per side)");
  }
  for (const GridPos& p : positions) {
    if (p.row + kFinderSide > stack.rows() || p.col + kFinderSide > stack.cols()) {
      throw std::invalid_argument("finder pattern at (" + std::to_string(p.row) + ", " +
                                  std::to_string(p.col) + ") falls outside the code");
    }
  }
  ViewTargetStack out = stack;
  for (GrayTarget& code : out.codes) {
    for (const GridPos& p : positions) {
      for (std::size_t i = 0; i < kFinderSide; ++i) {
        for (std::size_t j = 0; j < kFinderSide; ++j) {
          // Chebyshev ring: 3 is the outer ring, 2 the inner ring, <= 1 the core.
          const std::size_t ring = std::max(i > 3 ? i - 3 : 3 - i, j > 3 ? j - 3 : 3 - j);
          code.values(p.row + i, p.col + j) = ring == 2 ? code.levels.low : code.levels.high;
        }
      }
    }
  }
  return out;
}

ViewTargetStack stamp_finder_patterns(const ViewTargetStack& stack) {
  return stamp_finder_patterns(stack, default_finder_positions(stack.rows(), stack.cols()));
}

std::vector<ViewDecode> decode_all_views(const DesignLayers& layers, const ViewTargetStack& stack,
                                         const CellSpec& cell) {
  stack.validate();
  std::vector<ViewDecode> out;
  out.reserve(stack.codes.size());
  const double threshold = stack.levels().midpoint();
  for (int v = 1; v <= stack.view.count(); ++v) {
    const RealGrid rendered = render_view(layers.front, layers.rear, stack.view, v, cell);
    ViewDecode d;
    d.view_index = v;
    d.bits = binarize(rendered, threshold);
    d.hamming = hamming_distance(d.bits, stack.bits(v));
    d.ber = static_cast<double>(d.hamming) / static_cast<double>(d.bits.size());
    d.rms = rms_error(stack.codes[static_cast<std::size_t>(v - 1)], rendered);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace qrtag
