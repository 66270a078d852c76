#pragma once

#include <sstream>
#include <string>
#include <string_view>

namespace periop::svg {

// Two decimals, so output is byte-stable across platforms.
std::string num(double v);
std::string escape(std::string_view s);
// Linear blue (t = 0) to red (t = 1) ramp as #rrggbb.
std::string ramp(double t);

class Document {
 public:
  Document(double width, double height);

  void rect(double x, double y, double w, double h, std::string_view fill,
            std::string_view stroke = "none");
  void line(double x1, double y1, double x2, double y2, std::string_view stroke, double width = 1,
            std::string_view dash = "");
  void circle(double cx, double cy, double r, std::string_view fill, double opacity = 1);
  void text(double x, double y, std::string_view s, double size = 12,
            std::string_view anchor = "start", double rotate = 0);

  std::string str() const;

 private:
  double width_, height_;
  std::ostringstream body_;
};

}  // namespace periop::svg
