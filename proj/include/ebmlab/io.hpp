#pragma once

// Sample CSV files and SVG scatter plots.

#include "ebmlab/checkpoint.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace ebmlab {

inline void write_samples_csv(std::ostream& os, const Matrix& x, Eigen::Index dim = -1) {
  const Eigen::Index d = dim >= 0 ? dim : x.cols();
  for (Eigen::Index j = 0; j < d; ++j) os << (j ? "," : "") << 'x' << j;
  os << '\n';
  std::ostringstream line;
  line << std::setprecision(17);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    line.str("");
    for (Eigen::Index j = 0; j < x.cols(); ++j) line << (j ? "," : "") << x(i, j);
    os << line.str() << '\n';
  }
}

inline void save_samples_csv(const std::string& path, const Matrix& x, Eigen::Index dim = -1) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  write_samples_csv(os, x, dim);
}

inline Matrix parse_samples_csv(std::istream& is, const std::string& source) {
  std::string line;
  if (!std::getline(is, line)) throw Error(source + ": empty file, expected a header x0,x1,...");
  const Eigen::Index d = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',')) + 1;
  if (line.rfind("x0", 0) != 0) throw Error(source + ":1: expected header starting with x0");
  std::vector<double> vals;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Eigen::Index count = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw Error(source + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
      }
      ++count;
    }
    if (count != d)
      throw Error(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(d) + " columns, found " +
                  std::to_string(count));
  }
  const Eigen::Index n = static_cast<Eigen::Index>(vals.size()) / d;
  Matrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = vals[static_cast<std::size_t>(i * d + j)];
  return x;
}

inline Matrix load_samples_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  return parse_samples_csv(is, path);
}

/// Scatter of the first two coordinates (1D data is spread vertically by row
/// index). Output depends only on the points.
inline void write_scatter_svg(std::ostream& os, const Matrix& x, const std::string& title = "samples") {
  const int size = 480, margin = 20;
  // axis ranges: symmetric integer box around the data
  double lim = 1.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < std::min<Eigen::Index>(2, x.cols()); ++j)
      if (std::isfinite(x(i, j))) lim = std::max(lim, std::ceil(std::abs(x(i, j))));
  auto px = [&](double v) { return margin + (v + lim) / (2 * lim) * (size - 2 * margin); };
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\" viewBox=\"0 0 "
     << size << ' ' << size << "\">\n";
  os << "<title>" << title << "</title>\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << size - 2 * margin << "\" height=\""
     << size - 2 * margin << "\" fill=\"none\" stroke=\"#888\"/>\n";
  os << "<text x=\"" << margin << "\" y=\"14\" font-size=\"11\" font-family=\"monospace\">" << title << "  [-" << lim
     << ", " << lim << "]</text>\n";
  std::ostringstream c;
  c << std::fixed << std::setprecision(2);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double a = x(i, 0);
    const double b = x.cols() > 1 ? x(i, 1) : (x.rows() > 1 ? -lim + 2 * lim * i / (x.rows() - 1.0) : 0.0);
    if (!std::isfinite(a) || !std::isfinite(b)) continue;
    c.str("");
    c << "<circle cx=\"" << px(a) << "\" cy=\"" << size - px(b) << "\" r=\"1.5\" fill=\"#1f5fa8\" fill-opacity=\"0.5\"/>\n";
    os << c.str();
  }
  os << "</svg>\n";
}

inline void save_scatter_svg(const std::string& path, const Matrix& x, const std::string& title = "samples") {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  write_scatter_svg(os, x, title);
}

}  // namespace ebmlab
