#include "tsce/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tsce {

namespace {

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string render_line_svg(const std::string& title,
                            const std::vector<SvgPanel>& panels, int width,
                            int panel_height) {
  const double ml = 56, mr = 150, mt = 34, mb = 26;
  const double title_h = title.empty() ? 0.0 : 28.0;
  double total_h = title_h + panels.size() * panel_height;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << px(total_h) << "\" viewBox=\"0 0 " << width << " "
     << px(total_h) << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << px(total_h)
     << "\" fill=\"#ffffff\"/>\n";
  if (!title.empty())
    os << "<text x=\"" << px(width / 2.0)
       << "\" y=\"19\" text-anchor=\"middle\" font-family=\"monospace\" "
          "font-size=\"14\" fill=\"#222222\">"
       << xml_escape(title) << "</text>\n";

  for (std::size_t pi = 0; pi < panels.size(); ++pi) {
    const SvgPanel& panel = panels[pi];
    double top = title_h + pi * panel_height;
    double plot_x = ml, plot_y = top + mt;
    double plot_w = width - ml - mr, plot_h = panel_height - mt - mb;

    std::size_t n = 0;
    double ymin = 0.0, ymax = 0.0;
    bool any = false;
    for (const auto& c : panel.curves) {
      n = std::max(n, c.values.size());
      for (double v : c.values) {
        if (!std::isfinite(v)) continue;
        if (!any) {
          ymin = ymax = v;
          any = true;
        } else {
          ymin = std::min(ymin, v);
          ymax = std::max(ymax, v);
        }
      }
    }
    if (!any) { ymin = 0.0; ymax = 1.0; }
    if (ymax - ymin < 1e-12) { ymin -= 1.0; ymax += 1.0; }
    double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;

    auto xpos = [&](std::size_t i) {
      if (n <= 1) return plot_x + plot_w / 2.0;
      return plot_x + plot_w * static_cast<double>(i) / static_cast<double>(n - 1);
    };
    auto ypos = [&](double v) {
      return plot_y + plot_h * (1.0 - (v - ymin) / (ymax - ymin));
    };

    os << "<rect x=\"" << px(plot_x) << "\" y=\"" << px(plot_y) << "\" width=\""
       << px(plot_w) << "\" height=\"" << px(plot_h)
       << "\" fill=\"none\" stroke=\"#999999\" stroke-width=\"1\"/>\n";
    if (!panel.title.empty())
      os << "<text x=\"" << px(plot_x) << "\" y=\"" << px(plot_y - 8)
         << "\" font-family=\"monospace\" font-size=\"12\" fill=\"#444444\">"
         << xml_escape(panel.title) << "</text>\n";
    os << "<text x=\"" << px(plot_x - 6) << "\" y=\"" << px(plot_y + 10)
       << "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"10\" "
          "fill=\"#666666\">"
       << format_double(ymax) << "</text>\n";
    os << "<text x=\"" << px(plot_x - 6) << "\" y=\"" << px(plot_y + plot_h)
       << "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"10\" "
          "fill=\"#666666\">"
       << format_double(ymin) << "</text>\n";
    if (n > 0) {
      os << "<text x=\"" << px(plot_x) << "\" y=\"" << px(plot_y + plot_h + 14)
         << "\" font-family=\"monospace\" font-size=\"10\" fill=\"#666666\">0</text>\n";
      os << "<text x=\"" << px(plot_x + plot_w) << "\" y=\""
         << px(plot_y + plot_h + 14)
         << "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"10\" "
            "fill=\"#666666\">"
         << (n - 1) << "</text>\n";
    }
    if (ymin < 0.0 && ymax > 0.0)
      os << "<line x1=\"" << px(plot_x) << "\" y1=\"" << px(ypos(0.0)) << "\" x2=\""
         << px(plot_x + plot_w) << "\" y2=\"" << px(ypos(0.0))
         << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";

    for (const auto& c : panel.curves) {
      if (c.values.empty()) continue;
      os << "<polyline fill=\"none\" stroke=\"" << c.color << "\" stroke-width=\""
         << px(c.width) << "\" stroke-opacity=\"" << px(c.opacity) << "\" points=\"";
      for (std::size_t i = 0; i < c.values.size(); ++i) {
        double v = std::isfinite(c.values[i]) ? c.values[i] : 0.0;
        if (i) os << ' ';
        os << px(xpos(i)) << ',' << px(ypos(v));
      }
      os << "\"/>\n";
    }

    double ly = plot_y + 12;
    for (const auto& c : panel.curves) {
      if (c.label.empty()) continue;
      os << "<line x1=\"" << px(plot_x + plot_w + 10) << "\" y1=\"" << px(ly - 4)
         << "\" x2=\"" << px(plot_x + plot_w + 30) << "\" y2=\"" << px(ly - 4)
         << "\" stroke=\"" << c.color << "\" stroke-width=\"2\"/>\n";
      os << "<text x=\"" << px(plot_x + plot_w + 36) << "\" y=\"" << px(ly)
         << "\" font-family=\"monospace\" font-size=\"10\" fill=\"#333333\">"
         << xml_escape(c.label) << "</text>\n";
      ly += 16;
    }
  }
  os << "</svg>\n";
  return os.str();
}

void write_svg(const std::string& path, const std::string& svg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << svg;
}

}  // namespace tsce
