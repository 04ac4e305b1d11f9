#include "ncspec/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ncspec/errors.hpp"

namespace ncspec {

namespace {

constexpr double kMargin = 48.0;

std::string fmt(const char* spec, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

// 1, 2 or 5 times a power of ten, giving 4..10 ticks over `span`.
double tick_step(double span) {
  const double raw = span / 6.0;
  const double p = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * p >= raw) return m * p;
  return 10.0 * p;
}

}  // namespace

Region bounding_region(const std::vector<cplx>& points, double pad) {
  if (points.empty()) return {-pad, pad, -pad, pad};
  Region r{points[0].real(), points[0].real(), points[0].imag(), points[0].imag()};
  for (cplx z : points) {
    r.re_min = std::min(r.re_min, z.real());
    r.re_max = std::max(r.re_max, z.real());
    r.im_min = std::min(r.im_min, z.imag());
    r.im_max = std::max(r.im_max, z.imag());
  }
  return {r.re_min - pad, r.re_max + pad, r.im_min - pad, r.im_max + pad};
}

Region merge(const Region& a, const Region& b) {
  return {std::min(a.re_min, b.re_min), std::max(a.re_max, b.re_max), std::min(a.im_min, b.im_min), std::max(a.im_max, b.im_max)};
}

SvgPlot::SvgPlot(const Region& view, int width) : view_(view) {
  if (!(view.re_max > view.re_min)) view_.re_max = view_.re_min + 1.0;
  if (!(view.im_max > view.im_min)) view_.im_max = view_.im_min + 1.0;
  scale_ = width / (view_.re_max - view_.re_min);
  width_ = width;
  height_ = scale_ * (view_.im_max - view_.im_min);
}

double SvgPlot::px(double re) const { return kMargin + (re - view_.re_min) * scale_; }
double SvgPlot::py(double im) const { return kMargin + (view_.im_max - im) * scale_; }

void SvgPlot::title(const std::string& text) { title_ = text; }

void SvgPlot::cells(const SpectrumMap& map) {
  const double side = std::max(map.step * scale_, 1.0);
  for (int j = 0; j < map.ny; ++j) {
    for (int i = 0; i < map.nx; ++i) {
      const auto& c = map.at(i, j);
      if (c.verdict == Verdict::Outside) continue;
      const char* fill = c.verdict == Verdict::InsideS0 ? "#fdae6b" : "#c6dbef";
      body_ += "<rect x=\"" + fmt("%.2f", px(c.z.real()) - side / 2) + "\" y=\"" + fmt("%.2f", py(c.z.imag()) - side / 2) +
               "\" width=\"" + fmt("%.2f", side) + "\" height=\"" + fmt("%.2f", side) + "\" fill=\"" + fill + "\"/>\n";
    }
  }
}

void SvgPlot::points(const std::vector<cplx>& z, const std::string& color, double radius) {
  for (cplx w : z)
    body_ += "<circle cx=\"" + fmt("%.2f", px(w.real())) + "\" cy=\"" + fmt("%.2f", py(w.imag())) + "\" r=\"" + fmt("%.2f", radius) +
             "\" fill=\"" + color + "\"/>\n";
}

void SvgPlot::crosses(const std::vector<cplx>& z, const std::string& color, double size) {
  for (cplx w : z) {
    const double x = px(w.real());
    const double y = py(w.imag());
    body_ += "<path d=\"M" + fmt("%.2f", x - size) + " " + fmt("%.2f", y - size) + "L" + fmt("%.2f", x + size) + " " +
             fmt("%.2f", y + size) + "M" + fmt("%.2f", x - size) + " " + fmt("%.2f", y + size) + "L" + fmt("%.2f", x + size) + " " +
             fmt("%.2f", y - size) + "\" stroke=\"" + color + "\" stroke-width=\"2\" fill=\"none\"/>\n";
  }
}

void SvgPlot::path(const std::vector<cplx>& z, const std::string& color, bool dashed) {
  if (z.size() < 2) return;
  std::string d;
  for (std::size_t i = 0; i < z.size(); ++i)
    d += (i == 0 ? "M" : "L") + fmt("%.2f", px(z[i].real())) + " " + fmt("%.2f", py(z[i].imag()));
  body_ += "<path d=\"" + d + "\" stroke=\"" + color + "\" stroke-width=\"1.5\" fill=\"none\"" +
           (dashed ? " stroke-dasharray=\"6 4\"" : "") + " clip-path=\"url(#plot)\"/>\n";
}

std::string SvgPlot::str() const {
  const double W = width_ + 2 * kMargin;
  const double H = height_ + 2 * kMargin;
  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", W) + "\" height=\"" + fmt("%.0f", H) + "\" viewBox=\"0 0 " +
       fmt("%.0f", W) + " " + fmt("%.0f", H) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<defs><clipPath id=\"plot\"><rect x=\"" + fmt("%.2f", kMargin) + "\" y=\"" + fmt("%.2f", kMargin) + "\" width=\"" +
       fmt("%.2f", width_) + "\" height=\"" + fmt("%.2f", height_) + "\"/></clipPath></defs>\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // Grid lines and tick labels.
  const double step = tick_step(std::max(view_.re_max - view_.re_min, view_.im_max - view_.im_min));
  for (double x = std::ceil(view_.re_min / step) * step; x <= view_.re_max + 1e-9; x += step) {
    s += "<line x1=\"" + fmt("%.2f", px(x)) + "\" y1=\"" + fmt("%.2f", kMargin) + "\" x2=\"" + fmt("%.2f", px(x)) + "\" y2=\"" +
         fmt("%.2f", kMargin + height_) + "\" stroke=\"#eeeeee\"/>\n";
    s += "<text x=\"" + fmt("%.2f", px(x)) + "\" y=\"" + fmt("%.2f", kMargin + height_ + 16) + "\" text-anchor=\"middle\">" +
         fmt("%g", std::abs(x) < 1e-12 ? 0.0 : x) + "</text>\n";
  }
  for (double y = std::ceil(view_.im_min / step) * step; y <= view_.im_max + 1e-9; y += step) {
    s += "<line x1=\"" + fmt("%.2f", kMargin) + "\" y1=\"" + fmt("%.2f", py(y)) + "\" x2=\"" + fmt("%.2f", kMargin + width_) + "\" y2=\"" +
         fmt("%.2f", py(y)) + "\" stroke=\"#eeeeee\"/>\n";
    s += "<text x=\"" + fmt("%.2f", kMargin - 6) + "\" y=\"" + fmt("%.2f", py(y) + 4) + "\" text-anchor=\"end\">" +
         fmt("%g", std::abs(y) < 1e-12 ? 0.0 : y) + "</text>\n";
  }
  if (view_.re_min <= 0.0 && view_.re_max >= 0.0)
    s += "<line x1=\"" + fmt("%.2f", px(0.0)) + "\" y1=\"" + fmt("%.2f", kMargin) + "\" x2=\"" + fmt("%.2f", px(0.0)) + "\" y2=\"" +
         fmt("%.2f", kMargin + height_) + "\" stroke=\"#999999\"/>\n";
  if (view_.im_min <= 0.0 && view_.im_max >= 0.0)
    s += "<line x1=\"" + fmt("%.2f", kMargin) + "\" y1=\"" + fmt("%.2f", py(0.0)) + "\" x2=\"" + fmt("%.2f", kMargin + width_) + "\" y2=\"" +
         fmt("%.2f", py(0.0)) + "\" stroke=\"#999999\"/>\n";

  s += body_;
  s += "<rect x=\"" + fmt("%.2f", kMargin) + "\" y=\"" + fmt("%.2f", kMargin) + "\" width=\"" + fmt("%.2f", width_) + "\" height=\"" +
       fmt("%.2f", height_) + "\" fill=\"none\" stroke=\"black\"/>\n";
  s += "<text x=\"" + fmt("%.2f", kMargin + width_ / 2) + "\" y=\"" + fmt("%.2f", H - 8) + "\" text-anchor=\"middle\">Re z</text>\n";
  s += "<text x=\"14\" y=\"" + fmt("%.2f", kMargin + height_ / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
       fmt("%.2f", kMargin + height_ / 2) + ")\">Im z</text>\n";
  if (!title_.empty())
    s += "<text x=\"" + fmt("%.2f", kMargin + width_ / 2) + "\" y=\"28\" text-anchor=\"middle\" font-size=\"13\">" + escape(title_) +
         "</text>\n";
  s += "</svg>\n";
  return s;
}

void SvgPlot::write(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw InputError("cannot write " + file.string());
  out << str();
}

}  // namespace ncspec
