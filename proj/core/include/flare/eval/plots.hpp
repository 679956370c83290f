#pragma once

#include <array>
#include <string>
#include <vector>

namespace flare::eval {

// Curve columns charted by emit_plots, one SVG file per entry.
inline constexpr std::array<const char*, 4> kPlotMetrics = {
    "eval_sr", "eval_sel", "mean_ep_len", "mean_collisions"};

struct PlotResult {
  std::vector<std::string> files;  // <out_dir>/<metric>.svg in kPlotMetrics order
};

// Renders one chart per metric overlaying every run's training curve against
// env steps. Each run directory must hold a curves.csv; a missing file or a
// file with missing/reordered columns raises SchemaError. The x axis spans
// [0, max env_steps across runs] on every chart, the legend carries one entry
// per run, and rendering is a pure function of the inputs, so identical run
// data produces byte-identical SVGs.
PlotResult emit_plots(const std::vector<std::string>& run_dirs,
                      const std::string& out_dir);

}  // namespace flare::eval
