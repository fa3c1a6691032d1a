#include "eqmap/svg.hpp"

#include <algorithm>
#include <fstream>

#include "eqmap/errors.hpp"

namespace eqmap {

namespace {

struct Bounds {
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  bool seen = false;
  void grow(const Vec2& p) {
    if (!seen) {
      xmin = xmax = p.x;
      ymin = ymax = p.y;
      seen = true;
      return;
    }
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
};

std::string points_attr(const std::vector<Vec2>& pts) {
  std::string s;
  for (size_t i = 0; i < pts.size(); ++i) {
    if (i) s += " ";
    s += fmt9(pts[i].x) + "," + fmt9(pts[i].y);
  }
  return s;
}

std::string polyline(const std::vector<Vec2>& pts) {
  return "    <polyline points=\"" + points_attr(pts) + "\"/>\n";
}

}  // namespace

std::string scene_svg(const Scene& scene, const std::vector<Vec2>& predicted) {
  Bounds b;
  for (size_t q = 0; q < scene.lanes.size(); ++q)
    if (scene.lane_valid[q])
      for (const Vec2& p : scene.lanes[q].points) b.grow(p);
  for (size_t a = 0; a < scene.agents.size(); ++a)
    if (scene.agent_valid[a])
      for (const Vec2& p : scene.agents[a]) b.grow(p);
  for (const Vec2& p : scene.ego_future) b.grow(p);
  for (const Vec2& p : predicted) b.grow(p);
  if (!b.seen) b.grow(Vec2(0, 0));

  const double margin = std::max(1.0, 0.05 * std::max(b.xmax - b.xmin, b.ymax - b.ymin));
  const double x0 = b.xmin - margin;
  const double w = (b.xmax - b.xmin) + 2 * margin;
  const double h = (b.ymax - b.ymin) + 2 * margin;
  // world y points up; drawing happens inside a scale(1,-1) group, so the
  // viewBox top is the negated world ymax
  const double y0 = -(b.ymax + margin);
  const double sw = 0.004 * std::max(w, h);
  const double fs = 0.03 * std::max(w, h);

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"640\" height=\"640\" "
       "viewBox=\"" +
       fmt9(x0) + " " + fmt9(y0) + " " + fmt9(w) + " " + fmt9(h) + "\">\n";
  s += "  <desc>" + scene.id + "</desc>\n";
  s += "  <g transform=\"scale(1,-1)\" fill=\"none\" stroke-linecap=\"round\" "
       "stroke-linejoin=\"round\">\n";

  s += "  <g class=\"layer\" id=\"lanes\" stroke=\"#9aa0a6\" stroke-width=\"" + fmt9(0.6 * sw) +
       "\">\n";
  for (size_t q = 0; q < scene.lanes.size(); ++q)
    if (scene.lane_valid[q]) s += polyline(scene.lanes[q].points);
  s += "  </g>\n";

  s += "  <g class=\"layer\" id=\"history\" stroke=\"#1a73e8\" stroke-width=\"" + fmt9(sw) +
       "\">\n";
  for (size_t a = 0; a < scene.agents.size(); ++a)
    if (scene.agent_valid[a]) s += polyline(scene.agents[a]);
  s += "  </g>\n";

  if (!scene.ego_future.empty()) {
    s += "  <g class=\"layer\" id=\"truth\" stroke=\"#188038\" stroke-width=\"" + fmt9(sw) +
         "\" stroke-dasharray=\"" + fmt9(3 * sw) + " " + fmt9(2 * sw) + "\">\n";
    s += polyline(scene.ego_future);
    s += "  </g>\n";
  }

  s += "  <g class=\"layer\" id=\"prediction\" stroke=\"#d93025\" stroke-width=\"" + fmt9(sw) +
       "\">\n";
  s += polyline(predicted);
  s += "  </g>\n";
  s += "  </g>\n";

  struct Entry {
    const char* label;
    const char* color;
    bool show;
  };
  const Entry entries[] = {{"lanes", "#9aa0a6", true},
                           {"history", "#1a73e8", true},
                           {"ground truth", "#188038", !scene.ego_future.empty()},
                           {"prediction", "#d93025", true}};
  s += "  <g class=\"legend\" font-family=\"sans-serif\" font-size=\"" + fmt9(fs) + "\">\n";
  int row = 0;
  for (const Entry& e : entries) {
    if (!e.show) continue;
    const double ly = y0 + fs * (1.5 + 1.3 * row);
    s += "    <line x1=\"" + fmt9(x0 + 0.5 * fs) + "\" y1=\"" + fmt9(ly - 0.35 * fs) +
         "\" x2=\"" + fmt9(x0 + 2.0 * fs) + "\" y2=\"" + fmt9(ly - 0.35 * fs) + "\" stroke=\"" +
         e.color + "\" stroke-width=\"" + fmt9(0.25 * fs) + "\"/>\n";
    s += "    <text x=\"" + fmt9(x0 + 2.4 * fs) + "\" y=\"" + fmt9(ly) + "\" fill=\"#202124\">" +
         std::string(e.label) + "</text>\n";
    ++row;
  }
  s += "  </g>\n";
  s += "</svg>\n";
  return s;
}

std::string loss_curve_svg(const std::vector<double>& train_loss) {
  const double width = 640, height = 400;
  const double ml = 70, mr = 20, mt = 20, mb = 50;
  const int n = static_cast<int>(train_loss.size());
  double lo = 0, hi = 1;
  if (n > 0) {
    lo = *std::min_element(train_loss.begin(), train_loss.end());
    hi = *std::max_element(train_loss.begin(), train_loss.end());
    if (hi - lo < 1e-12) {
      lo -= 1;
      hi += 1;
    } else {
      const double pad = 0.05 * (hi - lo);
      lo -= pad;
      hi += pad;
    }
  }
  auto px = [&](int e) {
    return n <= 1 ? (ml + (width - ml - mr) / 2)
                  : ml + (width - ml - mr) * double(e) / double(n - 1);
  };
  auto py = [&](double v) { return height - mb - (height - mb - mt) * (v - lo) / (hi - lo); };

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"640\" height=\"400\" "
       "viewBox=\"0 0 640 400\">\n";
  s += "  <rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" fill=\"#ffffff\"/>\n";
  s += "  <g class=\"axes\" stroke=\"#202124\" stroke-width=\"1\">\n";
  s += "    <line x1=\"" + fmt9(ml) + "\" y1=\"" + fmt9(mt) + "\" x2=\"" + fmt9(ml) + "\" y2=\"" +
       fmt9(height - mb) + "\"/>\n";
  s += "    <line x1=\"" + fmt9(ml) + "\" y1=\"" + fmt9(height - mb) + "\" x2=\"" +
       fmt9(width - mr) + "\" y2=\"" + fmt9(height - mb) + "\"/>\n";
  s += "  </g>\n";
  s += "  <g class=\"labels\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#202124\">\n";
  s += "    <text x=\"" + fmt9(width / 2) + "\" y=\"" + fmt9(height - 12) +
       "\" text-anchor=\"middle\">epoch</text>\n";
  s += "    <text x=\"16\" y=\"" + fmt9(height / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       fmt9(height / 2) + ")\">train loss</text>\n";
  if (n > 0) {
    s += "    <text x=\"" + fmt9(ml - 6) + "\" y=\"" + fmt9(py(hi) + 4) +
         "\" text-anchor=\"end\">" + fmt9(hi) + "</text>\n";
    s += "    <text x=\"" + fmt9(ml - 6) + "\" y=\"" + fmt9(py(lo) + 4) +
         "\" text-anchor=\"end\">" + fmt9(lo) + "</text>\n";
    s += "    <text x=\"" + fmt9(px(0)) + "\" y=\"" + fmt9(height - mb + 16) +
         "\" text-anchor=\"middle\">1</text>\n";
    s += "    <text x=\"" + fmt9(px(n - 1)) + "\" y=\"" + fmt9(height - mb + 16) +
         "\" text-anchor=\"middle\">" + std::to_string(n) + "</text>\n";
  }
  s += "  </g>\n";
  if (n > 0) {
    std::string pts;
    for (int e = 0; e < n; ++e) {
      if (e) pts += " ";
      pts += fmt9(px(e)) + "," + fmt9(py(train_loss[size_t(e)]));
    }
    s += "  <polyline class=\"curve\" fill=\"none\" stroke=\"#1a73e8\" stroke-width=\"1.5\" "
         "points=\"" +
         pts + "\"/>\n";
  }
  s += "</svg>\n";
  return s;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw DataError("write failed: " + path);
}

}  // namespace eqmap
