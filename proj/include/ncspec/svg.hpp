#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ncspec/common.hpp"
#include "ncspec/freespec.hpp"

namespace ncspec {

/// Smallest region holding every point, widened by `pad` on each side.
Region bounding_region(const std::vector<cplx>& points, double pad);
Region merge(const Region& a, const Region& b);

/// A self-contained SVG figure of a window of the complex plane with equal
/// scales on both axes.
class SvgPlot {
 public:
  explicit SvgPlot(const Region& view, int width = 640);

  void title(const std::string& text);
  /// One square per grid node, coloured by verdict; Outside nodes stay blank.
  void cells(const SpectrumMap& map);
  void points(const std::vector<cplx>& z, const std::string& color, double radius = 1.6);
  void crosses(const std::vector<cplx>& z, const std::string& color, double size = 5.0);
  void path(const std::vector<cplx>& z, const std::string& color, bool dashed = false);

  std::string str() const;
  void write(const std::filesystem::path& file) const;

 private:
  double px(double re) const;
  double py(double im) const;

  Region view_;
  double scale_ = 1.0;  // pixels per unit
  double width_ = 0.0;
  double height_ = 0.0;
  std::string title_;
  std::string body_;
};

}  // namespace ncspec
