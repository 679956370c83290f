#include "flare/eval/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "flare/error.hpp"
#include "flare/rl/finetune.hpp"

namespace flare::eval {

namespace fs = std::filesystem;

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 70, kRight = 560, kTop = 40, kBottom = 390;

constexpr std::array<const char*, 8> kPalette = {
    "#0072b2", "#d55e00", "#009e73", "#cc79a7",
    "#e69f00", "#56b4e9", "#8c8c8c", "#000000"};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string coord(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

// The run's last two path components, the shape suite directories use
// (<run_name>/seed<k>).
std::string run_label(const std::string& dir) {
  fs::path p = fs::path(dir).lexically_normal();
  std::string leaf = p.filename().string();
  if (leaf.empty()) {
    p = p.parent_path();
    leaf = p.filename().string();
  }
  std::string parent = p.parent_path().filename().string();
  return parent.empty() || parent == "." ? leaf : parent + "/" + leaf;
}

double metric_value(const rl::CurveRow& r, const std::string& m) {
  if (m == "eval_sr") return r.eval_sr;
  if (m == "eval_sel") return r.eval_sel;
  if (m == "mean_ep_len") return r.mean_ep_len;
  if (m == "mean_collisions") return r.mean_collisions;
  throw ContractError("emit_plots: unknown metric " + m);
}

struct RunCurve {
  std::string label;
  std::vector<rl::CurveRow> rows;
};

std::string render_chart(const std::string& metric, const std::vector<RunCurve>& runs,
                         double xmax) {
  double ymax = 1.0;
  if (metric != "eval_sr" && metric != "eval_sel") {
    double peak = 0.0;
    for (const RunCurve& rc : runs)
      for (const rl::CurveRow& r : rc.rows) peak = std::max(peak, metric_value(r, metric));
    ymax = peak > 0.0 ? peak * 1.05 : 1.0;
  }
  const double xspan = kRight - kLeft, yspan = kBottom - kTop;
  auto px = [&](double steps) { return kLeft + (steps / xmax) * xspan; };
  auto py = [&](double v) { return kBottom - (v / ymax) * yspan; };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) +
       "\" height=\"" + num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " +
       num(kHeight) + "\" data-metric=\"" + metric + "\" data-xmax=\"" + num(xmax) +
       "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
       "\" fill=\"#ffffff\"/>\n";
  s += "<text x=\"" + coord((kLeft + kRight) / 2) +
       "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + metric + "</text>\n";

  for (int i = 0; i <= 4; i++) {
    const double fx = static_cast<double>(i) / 4.0;
    const double gx = kLeft + fx * xspan;
    const double gy = kBottom - fx * yspan;
    s += "<line x1=\"" + coord(gx) + "\" y1=\"" + coord(kTop) + "\" x2=\"" + coord(gx) +
         "\" y2=\"" + coord(kBottom) + "\" stroke=\"#dddddd\"/>\n";
    s += "<line x1=\"" + coord(kLeft) + "\" y1=\"" + coord(gy) + "\" x2=\"" +
         coord(kRight) + "\" y2=\"" + coord(gy) + "\" stroke=\"#dddddd\"/>\n";
    s += "<text x=\"" + coord(gx) + "\" y=\"" + coord(kBottom + 18) +
         "\" text-anchor=\"middle\">" + num(xmax * fx) + "</text>\n";
    s += "<text x=\"" + coord(kLeft - 8) + "\" y=\"" + coord(gy + 4) +
         "\" text-anchor=\"end\">" + num(ymax * fx) + "</text>\n";
  }
  s += "<line x1=\"" + coord(kLeft) + "\" y1=\"" + coord(kTop) + "\" x2=\"" + coord(kLeft) +
       "\" y2=\"" + coord(kBottom) + "\" stroke=\"#000000\"/>\n";
  s += "<line x1=\"" + coord(kLeft) + "\" y1=\"" + coord(kBottom) + "\" x2=\"" +
       coord(kRight) + "\" y2=\"" + coord(kBottom) + "\" stroke=\"#000000\"/>\n";
  s += "<text x=\"" + coord((kLeft + kRight) / 2) + "\" y=\"" + coord(kHeight - 14) +
       "\" text-anchor=\"middle\">env steps</text>\n";

  for (size_t ri = 0; ri < runs.size(); ri++) {
    const char* color = kPalette[ri % kPalette.size()];
    std::string pts;
    for (const rl::CurveRow& r : runs[ri].rows) {
      const double v = metric_value(r, metric);
      pts += coord(px(static_cast<double>(r.env_steps))) + "," + coord(py(v)) + " ";
      s += "<circle cx=\"" + coord(px(static_cast<double>(r.env_steps))) + "\" cy=\"" +
           coord(py(v)) + "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
    }
    if (!pts.empty()) pts.pop_back();
    s += "<polyline class=\"curve\" fill=\"none\" stroke=\"" + std::string(color) +
         "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
  }

  s += "<g class=\"legend\">\n";
  for (size_t ri = 0; ri < runs.size(); ri++) {
    const double ly = kTop + 8 + 18 * static_cast<double>(ri);
    const char* color = kPalette[ri % kPalette.size()];
    s += "<g class=\"legend-entry\"><line x1=\"" + coord(kRight + 14) + "\" y1=\"" +
         coord(ly) + "\" x2=\"" + coord(kRight + 38) + "\" y2=\"" + coord(ly) +
         "\" stroke=\"" + color + "\" stroke-width=\"2\"/><text x=\"" +
         coord(kRight + 44) + "\" y=\"" + coord(ly + 4) + "\">" +
         xml_escape(runs[ri].label) + "</text></g>\n";
  }
  s += "</g>\n</svg>\n";
  return s;
}

}  // namespace

PlotResult emit_plots(const std::vector<std::string>& run_dirs,
                      const std::string& out_dir) {
  if (run_dirs.empty()) throw ConfigError("emit_plots: no run directories given");

  std::vector<RunCurve> runs;
  double xmax = 0.0;
  for (const std::string& dir : run_dirs) {
    RunCurve rc;
    rc.label = run_label(dir);
    rc.rows = rl::load_curves((fs::path(dir) / "curves.csv").string());
    for (const rl::CurveRow& r : rc.rows)
      xmax = std::max(xmax, static_cast<double>(r.env_steps));
    runs.push_back(std::move(rc));
  }
  if (xmax <= 0.0) xmax = 1.0;

  fs::create_directories(out_dir);
  PlotResult result;
  for (const char* metric : kPlotMetrics) {
    const std::string path = (fs::path(out_dir) / (std::string(metric) + ".svg")).string();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << render_chart(metric, runs, xmax);
    result.files.push_back(path);
  }
  return result;
}

}  // namespace flare::eval
