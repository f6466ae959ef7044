#include "svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <vector>

namespace spidl::svg {

namespace {

constexpr double kLeft = 70, kRight = 90, kTop = 40, kBottom = 55;

// Viridis-like ramp through five anchor colours.
std::string color(double u) {
  static constexpr std::array<std::array<double, 3>, 5> stops{
      {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
  if (!std::isfinite(u)) return "#cccccc";
  u = std::clamp(u, 0.0, 1.0) * 4.0;
  const int i = std::min(static_cast<int>(u), 3);
  const double f = u - i;
  std::ostringstream os;
  os << '#' << std::hex << std::setfill('0');
  for (int c = 0; c < 3; ++c) os << std::setw(2) << static_cast<int>(stops[i][c] + f * (stops[i + 1][c] - stops[i][c]) + 0.5);
  return os.str();
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '<') out += "&lt;";
    else if (ch == '>') out += "&gt;";
    else if (ch == '&') out += "&amp;";
    else out += ch;
  }
  return out;
}

/// Plot area with linear data-to-pixel maps, axes and ticks.
class Canvas {
 public:
  Canvas(double width, double height, Range xr, Range yr) : w_(width), h_(height), xr_(xr), yr_(yr) {
    if (xr_.second <= xr_.first) xr_.second = xr_.first + 1.0;
    if (yr_.second <= yr_.first) yr_.second = yr_.first + 1.0;
    os_ << std::setprecision(6);
    os_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  }

  double px(double x) const { return kLeft + (x - xr_.first) / (xr_.second - xr_.first) * (w_ - kLeft - kRight); }
  double py(double y) const { return h_ - kBottom - (y - yr_.first) / (yr_.second - yr_.first) * (h_ - kTop - kBottom); }

  std::ostream& raw() { return os_; }
  std::string str() const { return os_.str(); }

  void rect(double x0, double y0, double x1, double y1, const std::string& fill, const std::string& extra = "") {
    const double a = px(x0), b = px(x1), c = py(y1), d = py(y0);
    os_ << "<rect x=\"" << std::min(a, b) << "\" y=\"" << std::min(c, d) << "\" width=\"" << std::abs(b - a)
        << "\" height=\"" << std::abs(d - c) << "\" fill=\"" << fill << "\"" << extra << "/>\n";
  }

  void polyline(const ArrayXd& x, const ArrayXd& y, const std::string& stroke, double width = 1.5,
                const std::string& extra = "") {
    std::ostringstream pts;
    pts << std::setprecision(6);
    bool any = false;
    auto flush = [&]() {
      if (any) os_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << width << "\"" << extra
                   << " points=\"" << pts.str() << "\"/>\n";
      pts.str("");
      any = false;
    };
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (!std::isfinite(x(i)) || !std::isfinite(y(i))) {
        flush();
        continue;
      }
      pts << px(x(i)) << ',' << py(y(i)) << ' ';
      any = true;
    }
    flush();
  }

  /// Filled band between lo and hi, skipping non-finite points.
  void band(const ArrayXd& x, const ArrayXd& lo, const ArrayXd& hi, const std::string& fill) {
    std::vector<Eigen::Index> ok;
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (std::isfinite(x(i)) && std::isfinite(lo(i)) && std::isfinite(hi(i))) ok.push_back(i);
    if (ok.size() < 2) return;
    os_ << "<polygon fill=\"" << fill << "\" stroke=\"none\" points=\"";
    for (auto i : ok) os_ << px(x(i)) << ',' << py(hi(i)) << ' ';
    for (auto it = ok.rbegin(); it != ok.rend(); ++it) os_ << px(x(*it)) << ',' << py(lo(*it)) << ' ';
    os_ << "\"/>\n";
  }

  void text(double x, double y, const std::string& s, const std::string& anchor = "middle", const std::string& extra = "") {
    os_ << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor << "\"" << extra << ">" << escape(s)
        << "</text>\n";
  }

  void axes(const std::string& title, const std::string& xl, const std::string& yl) {
    const double x0 = px(xr_.first), x1 = px(xr_.second), y0 = py(yr_.first), y1 = py(yr_.second);
    os_ << "<rect x=\"" << x0 << "\" y=\"" << y1 << "\" width=\"" << x1 - x0 << "\" height=\"" << y0 - y1
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 5; ++k) {
      const double fx = xr_.first + k * (xr_.second - xr_.first) / 5, fy = yr_.first + k * (yr_.second - yr_.first) / 5;
      text(px(fx), y0 + 16, fmt(fx));
      text(x0 - 6, py(fy) + 4, fmt(fy), "end");
    }
    text((x0 + x1) / 2, h_ - 14, xl);
    text(16, (y0 + y1) / 2, yl, "middle", " transform=\"rotate(-90 16 " + fmt((y0 + y1) / 2) + ")\"");
    text((x0 + x1) / 2, 24, title, "middle", " font-size=\"15\"");
  }

  void save(const std::filesystem::path& path) {
    os_ << "</svg>\n";
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << os_.str();
  }

  double width() const { return w_; }
  double height() const { return h_; }

 private:
  double w_, h_;
  Range xr_, yr_;
  std::ostringstream os_;
};

Range finite_range(std::initializer_list<const ArrayXd*> arrays) {
  double lo = INFINITY, hi = -INFINITY;
  for (const ArrayXd* a : arrays)
    for (double v : *a)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  return {lo, hi};
}

}  // namespace

void heatmap(const MatrixXd& z, Range t, Range x, Range z_range, const std::string& title, const std::string& x_label,
             const std::string& y_label, const std::filesystem::path& path) {
  Canvas cv(900, 420, t, x);
  const double dt = z.cols() > 1 ? (t.second - t.first) / static_cast<double>(z.cols() - 1) : 1.0;
  const double dx = z.rows() > 1 ? (x.second - x.first) / static_cast<double>(z.rows() - 1) : 1.0;
  const double span = z_range.second - z_range.first > 0 ? z_range.second - z_range.first : 1.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index k = 0; k < z.cols(); ++k) {
      const double tc = t.first + k * dt, xc = x.first + i * dx;
      cv.rect(std::max(tc - dt / 2, t.first), std::max(xc - dx / 2, x.first), std::min(tc + dt / 2, t.second),
              std::min(xc + dx / 2, x.second), color((z(i, k) - z_range.first) / span), " shape-rendering=\"crispEdges\"");
    }
  cv.axes(title, x_label, y_label);
  // Colour bar.
  const double bx = cv.width() - kRight + 20, top = kTop, bottom = cv.height() - kBottom;
  for (int s = 0; s < 50; ++s) {
    const double y0 = bottom - (s + 1) * (bottom - top) / 50;
    cv.raw() << "<rect x=\"" << bx << "\" y=\"" << y0 << "\" width=\"16\" height=\"" << (bottom - top) / 50 + 0.5
             << "\" fill=\"" << color((s + 0.5) / 50) << "\"/>\n";
  }
  cv.text(bx + 20, top + 4, fmt(z_range.second), "start");
  cv.text(bx + 20, bottom + 4, fmt(z_range.first), "start");
  cv.save(path);
}

void fd_band(const ArrayXd& rho, const ArrayXd& v, const ArrayXd& centers, const ArrayXd& lo, const ArrayXd& mid,
             const ArrayXd& hi, const ArrayXd& s3, const std::filesystem::path& path) {
  const Range xr{0.0, finite_range({&rho, &centers}).second};
  const Range yr{0.0, finite_range({&v, &hi}).second};
  Canvas cv(700, 480, xr, yr);
  // At most 4000 scatter points keep the file small.
  const Eigen::Index step = std::max<Eigen::Index>(1, rho.size() / 4000);
  for (Eigen::Index i = 0; i < rho.size(); i += step)
    cv.raw() << "<circle cx=\"" << cv.px(rho(i)) << "\" cy=\"" << cv.py(v(i)) << "\" r=\"1.2\" fill=\"#7f7f7f\" fill-opacity=\"0.35\"/>\n";
  cv.band(centers, lo, hi, "#1f77b4\" fill-opacity=\"0.25");
  cv.polyline(centers, mid, "#1f77b4", 2.0);
  cv.polyline(centers, s3, "#d62728", 2.0, " stroke-dasharray=\"6 4\"");
  cv.axes("Estimated fundamental diagram with 95% band", "density (veh/m)", "speed (m/s)");
  cv.text(cv.width() - kRight - 10, kTop + 18, "band centre (blue), S3 fit (red dashed)", "end");
  cv.save(path);
}

void histograms(const ArrayXd& target, const ArrayXd& bin_lo, const ArrayXd& bin_hi, const ArrayXd& probability,
                const std::filesystem::path& path) {
  std::map<double, std::vector<Eigen::Index>> panels;
  for (Eigen::Index i = 0; i < target.size(); ++i) panels[target(i)].push_back(i);
  const double panel_w = 320, panel_h = 260;
  const int n = std::max<int>(1, static_cast<int>(panels.size()));
  std::ostringstream body;
  int p = 0;
  const Range xr{0.0, finite_range({&bin_hi}).second};
  for (const auto& [rho, idx] : panels) {
    double top = 1e-12;
    for (auto i : idx) top = std::max(top, std::isfinite(probability(i)) ? probability(i) : 0.0);
    Canvas cv(panel_w, panel_h, xr, {0.0, top * 1.1});
    for (auto i : idx)
      if (std::isfinite(probability(i)) && probability(i) > 0)
        cv.rect(bin_lo(i), 0.0, bin_hi(i), probability(i), "#1f77b4", " stroke=\"white\" stroke-width=\"0.5\"");
    cv.axes("density " + fmt(rho) + " veh/m", "speed (m/s)", "probability");
    // Each panel becomes a nested <svg> positioned in one row.
    std::string s = cv.str();
    s.replace(0, 4, "<svg x=\"" + fmt(p * panel_w) + "\"");
    body << s << "</svg>\n";
    ++p;
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << n * panel_w << "\" height=\"" << panel_h << "\">\n"
      << body.str() << "</svg>\n";
}

void profiles(const ArrayXd& row, const ArrayXd& t, const ArrayXd& truth, const ArrayXd& mean, const ArrayXd& lo,
              const ArrayXd& hi, const std::filesystem::path& path) {
  std::map<double, std::vector<Eigen::Index>> series;
  for (Eigen::Index i = 0; i < row.size(); ++i) series[row(i)].push_back(i);
  const Range tr = finite_range({&t});
  const Range yr{0.0, finite_range({&truth, &hi}).second};
  Canvas cv(900, 360, tr, yr);
  for (const auto& [r, idx] : series) {
    auto pick = [&](const ArrayXd& a) {
      ArrayXd out(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = a(idx[k]);
      return out;
    };
    const ArrayXd ts = pick(t);
    cv.band(ts, pick(lo), pick(hi), "#1f77b4\" fill-opacity=\"0.25");
    cv.polyline(ts, pick(truth), "black", 1.0);
    cv.polyline(ts, pick(mean), "#1f77b4", 1.5);
  }
  std::string rows;
  for (const auto& kv : series) rows += (rows.empty() ? "" : ", ") + fmt(kv.first);
  cv.axes("Speed at row " + rows + ": truth (black), estimate with 95% CI (blue)", "time (s)", "speed (m/s)");
  cv.save(path);
}

}  // namespace spidl::svg
