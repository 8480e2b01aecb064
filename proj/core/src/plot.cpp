#include "camalign/plot.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>

#include "camalign/error.hpp"
#include "camalign/image_io.hpp"

namespace camalign {

namespace {

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cells.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back();
    } else if (c != '\r') {
      cells.back() += c;
    }
  }
  return cells;
}

using Color = std::array<double, 3>;

const std::vector<Color>& palette() {
  static const std::vector<Color> colors{
      {0.12, 0.47, 0.71}, {1.00, 0.50, 0.05}, {0.17, 0.63, 0.17}, {0.84, 0.15, 0.16},
      {0.58, 0.40, 0.74}, {0.55, 0.34, 0.29}, {0.89, 0.47, 0.76}, {0.50, 0.50, 0.50},
      {0.74, 0.74, 0.13}, {0.09, 0.75, 0.81},
  };
  return colors;
}

/// RGB raster with a data window mapped onto a plot area.
class Canvas {
 public:
  Canvas(int width, int height) : image_(height, width, 3, 1.0) {}

  void set_window(double x0, double x1, double y0, double y1) {
    x0_ = x0;
    x1_ = x1 > x0 ? x1 : x0 + 1.0;
    y0_ = y0;
    y1_ = y1 > y0 ? y1 : y0 + 1.0;
  }

  int px(double x) const { return left_ + static_cast<int>(std::lround((x - x0_) / (x1_ - x0_) * (right() - left_))); }
  int py(double y) const { return bottom() - static_cast<int>(std::lround((y - y0_) / (y1_ - y0_) * (bottom() - top_))); }

  void dot(int x, int y, const Color& c) {
    if (x < 0 || y < 0 || x >= image_.width() || y >= image_.height()) return;
    for (int k = 0; k < 3; ++k) image_(y, x, k) = c[k];
  }

  void rect(int x0, int y0, int x1, int y1, const Color& c) {
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) dot(x, y, c);
    }
  }

  void line(int x0, int y0, int x1, int y1, const Color& c, int thickness = 1) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      rect(x0 - thickness / 2, y0 - thickness / 2, x0 + thickness / 2, y0 + thickness / 2, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) { err += dy; x0 += sx; }
      if (e2 <= dx) { err += dx; y0 += sy; }
    }
  }

  void marker(int x, int y, int radius, const Color& c) {
    for (int j = -radius; j <= radius; ++j) {
      for (int i = -radius; i <= radius; ++i) {
        if (i * i + j * j <= radius * radius) dot(x + i, y + j, c);
      }
    }
  }

  void text(int x, int y, const std::string& s, const Color& c) {
    // 3x5 glyphs for digits, '.', '-' and a few letters.
    static const std::map<char, std::array<const char*, 5>> font{
        {'0', {"111", "101", "101", "101", "111"}}, {'1', {"010", "110", "010", "010", "111"}},
        {'2', {"111", "001", "111", "100", "111"}}, {'3', {"111", "001", "111", "001", "111"}},
        {'4', {"101", "101", "111", "001", "001"}}, {'5', {"111", "100", "111", "001", "111"}},
        {'6', {"111", "100", "111", "101", "111"}}, {'7', {"111", "001", "010", "010", "010"}},
        {'8', {"111", "101", "111", "101", "111"}}, {'9', {"111", "101", "111", "001", "111"}},
        {'.', {"000", "000", "000", "000", "010"}}, {'-', {"000", "000", "111", "000", "000"}},
        {'K', {"101", "110", "100", "110", "101"}}, {'=', {"000", "111", "000", "111", "000"}},
    };
    const int scale = 2;
    for (char ch : s) {
      const auto it = font.find(ch);
      if (it != font.end()) {
        for (int r = 0; r < 5; ++r) {
          for (int col = 0; col < 3; ++col) {
            if (it->second[r][col] == '1') rect(x + col * scale, y + r * scale, x + col * scale + scale - 1, y + r * scale + scale - 1, c);
          }
        }
      }
      x += 4 * scale;
    }
  }

  void axes(int ticks_x, int ticks_y) {
    const Color grid{0.88, 0.88, 0.88};
    const Color ink{0.0, 0.0, 0.0};
    for (int i = 0; i <= ticks_y; ++i) {
      const double v = y0_ + (y1_ - y0_) * i / ticks_y;
      line(left_, py(v), right(), py(v), grid);
      text(4, py(v) - 5, label(v), ink);
    }
    for (int i = 0; i <= ticks_x; ++i) {
      const double v = x0_ + (x1_ - x0_) * i / ticks_x;
      text(px(v) - 8, bottom() + 8, label(v), ink);
    }
    line(left_, top_, left_, bottom(), ink);
    line(left_, bottom(), right(), bottom(), ink);
  }

  void save(const std::filesystem::path& path) const { write_png(path, image_); }

 private:
  static std::string label(double v) {
    char buf[32];
    const double mag = std::abs(v);
    const int digits = mag >= 100 ? 0 : mag >= 10 ? 1 : 2;
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
    return std::string(buf, ptr);
  }

  int right() const { return image_.width() - 16; }
  int bottom() const { return image_.height() - 28; }

  Tensor3 image_;
  int left_ = 52;
  int top_ = 12;
  double x0_ = 0, x1_ = 1, y0_ = 0, y1_ = 1;
};

}  // namespace

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error("csv: missing column '" + name + "'");
  return static_cast<int>(it - header.begin());
}

bool CsvTable::has_column(const std::string& name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

double CsvTable::number(std::size_t row, const std::string& name) const {
  const std::string& cell = rows.at(row)[column(name)];
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw Error("csv: column '" + name + "' row " + std::to_string(row + 1) + ": '" + cell + "' is not a number");
  }
  return v;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw Error(path.string() + ": empty csv");
  t.header = parse_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = parse_csv_line(line);
    if (cells.size() != t.header.size()) {
      throw Error(path.string() + ": row " + std::to_string(t.rows.size() + 1) + " has " +
                  std::to_string(cells.size()) + " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

void plot_histogram(const std::filesystem::path& csv, const std::filesystem::path& png) {
  const CsvTable t = read_csv(csv);
  for (const char* name : {"bin_low", "bin_high", "same", "different"}) t.column(name);
  if (t.rows.empty()) throw Error(csv.string() + ": histogram has no bins");
  const std::size_t n = t.rows.size();
  std::vector<double> lo(n), hi(n), same(n), diff(n);
  double same_total = 0.0, diff_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = t.number(i, "bin_low");
    hi[i] = t.number(i, "bin_high");
    same[i] = t.number(i, "same");
    diff[i] = t.number(i, "different");
    same_total += same[i];
    diff_total += diff[i];
  }
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double width = hi[i] > lo[i] ? hi[i] - lo[i] : 1.0;
    if (same_total > 0) same[i] /= same_total * width;
    if (diff_total > 0) diff[i] /= diff_total * width;
    peak = std::max({peak, same[i], diff[i]});
  }
  Canvas c(640, 400);
  c.set_window(lo.front(), hi.back(), 0.0, peak * 1.05);
  c.axes(5, 4);
  const Color same_color{0.17, 0.63, 0.17}, diff_color{0.84, 0.15, 0.16};
  for (std::size_t i = 0; i < n; ++i) {
    const int x0 = c.px(lo[i]), x1 = c.px(hi[i]);
    const int mid = (x0 + x1) / 2;
    c.rect(x0 + 1, c.py(same[i]), std::max(x0 + 1, mid - 1), c.py(0.0), same_color);
    c.rect(mid, c.py(diff[i]), std::max(mid, x1 - 1), c.py(0.0), diff_color);
  }
  c.save(png);
}

void plot_k_sweep(const std::filesystem::path& csv, const std::filesystem::path& png) {
  const CsvTable t = read_csv(csv);
  const int mode_col = t.column("mode");
  t.column("k");
  t.column("rank1");
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.has_column("variant") && t.rows[i][t.column("variant")].find("pam") == std::string::npos) continue;
    series[t.rows[i][mode_col]].emplace_back(t.number(i, "k"), t.number(i, "rank1"));
  }
  if (series.empty()) throw Error(csv.string() + ": no K-sweep rows");
  double kmin = 1e300, kmax = -1e300, rmin = 1e300, rmax = -1e300;
  for (auto& [mode, pts] : series) {
    std::sort(pts.begin(), pts.end());
    for (const auto& [k, r] : pts) {
      kmin = std::min(kmin, k);
      kmax = std::max(kmax, k);
      rmin = std::min(rmin, r);
      rmax = std::max(rmax, r);
    }
  }
  const double pad = std::max(1.0, 0.1 * (rmax - rmin));
  Canvas c(640, 400);
  c.set_window(kmin - 0.25, kmax + 0.25, std::max(0.0, rmin - pad), rmax + pad);
  c.axes(static_cast<int>(std::max(1.0, kmax - kmin)), 4);
  std::size_t s = 0;
  for (const auto& [mode, pts] : series) {
    const Color& col = palette()[s++ % palette().size()];
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i > 0) c.line(c.px(pts[i - 1].first), c.py(pts[i - 1].second), c.px(pts[i].first), c.py(pts[i].second), col, 3);
      c.marker(c.px(pts[i].first), c.py(pts[i].second), 5, col);
    }
  }
  c.save(png);
}

std::vector<std::filesystem::path> plot_projection(const std::filesystem::path& csv,
                                                   const std::filesystem::path& stem) {
  const CsvTable t = read_csv(csv);
  const int cam_col = t.column("camera");
  t.column("pc1");
  t.column("pc2");
  if (t.rows.empty()) throw Error(csv.string() + ": no rows to plot");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    xs.push_back(t.number(i, "pc1"));
    ys.push_back(t.number(i, "pc2"));
  }
  const auto [xmin, xmax] = std::minmax_element(xs.begin(), xs.end());
  const auto [ymin, ymax] = std::minmax_element(ys.begin(), ys.end());
  auto draw = [&](const std::vector<int>& keys, const std::filesystem::path& out) {
    Canvas c(520, 520);
    const double px = 0.05 * (*xmax - *xmin) + 1e-9, py = 0.05 * (*ymax - *ymin) + 1e-9;
    c.set_window(*xmin - px, *xmax + px, *ymin - py, *ymax + py);
    c.axes(4, 4);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      c.marker(c.px(xs[i]), c.py(ys[i]), 4, palette()[keys[i] % palette().size()]);
    }
    c.save(out);
  };
  std::vector<std::filesystem::path> written;
  std::vector<int> cams;
  for (const auto& row : t.rows) cams.push_back(std::max(0, std::atoi(row[cam_col].c_str()) - 1));
  const auto camera_png = std::filesystem::path(stem.string() + "_camera.png");
  draw(cams, camera_png);
  written.push_back(camera_png);
  if (t.has_column("identity")) {
    const int id_col = t.column("identity");
    std::map<std::string, int> ids;
    std::vector<int> keys;
    for (const auto& row : t.rows) keys.push_back(ids.emplace(row[id_col], static_cast<int>(ids.size())).first->second);
    const auto id_png = std::filesystem::path(stem.string() + "_identity.png");
    draw(keys, id_png);
    written.push_back(id_png);
  }
  return written;
}

}  // namespace camalign
