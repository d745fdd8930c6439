#include "svg.hpp"

#include "mapo/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mapo::cli {

namespace {

constexpr std::array<const char*, 8> kPalette = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd",
                                                 "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

const char* color(int role) { return kPalette[static_cast<std::size_t>(role) % kPalette.size()]; }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

double num(const std::string& s, long line) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw ParseError("bad number '" + s + "'", line);
  }
}

struct Frame {
  double x0, x1, y0, y1;  // data range
  double w = 640, h = 400, pad = 40;

  double px(double x) const { return pad + (x - x0) / (x1 - x0) * (w - 2 * pad); }
  double py(double y) const { return h - pad - (y - y0) / (y1 - y0) * (h - 2 * pad); }
};

Frame fit_frame(double x0, double x1, double y0, double y1) {
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!(y1 > y0)) y1 = y0 + 1.0;
  return {x0, x1, y0, y1};
}

std::string header(const Frame& f, const std::string& title) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{3}</text>\n"
      "<rect x=\"{2}\" y=\"{2}\" width=\"{4}\" height=\"{5}\" fill=\"none\" stroke=\"#888\"/>\n",
      f.w, f.h, f.pad, title, f.w - 2 * f.pad, f.h - 2 * f.pad);
}

std::string polyline(const std::vector<std::pair<double, double>>& pts, const char* stroke,
                     double width, double opacity, bool dashed) {
  std::string s = "<polyline fill=\"none\" points=\"";
  for (const auto& [x, y] : pts) s += fmt::format("{:.2f},{:.2f} ", x, y);
  s += fmt::format("\" stroke=\"{}\" stroke-width=\"{}\" stroke-opacity=\"{}\"{}/>\n", stroke,
                   width, opacity, dashed ? " stroke-dasharray=\"4 3\"" : "");
  return s;
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << body << "</svg>\n";
}

std::set<int> roles_of(const StateTable& t) {
  std::set<int> r;
  for (const auto& row : t) r.insert(row.role);
  return r;
}

}  // namespace

std::map<std::string, StateTable> read_state_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::map<std::string, StateTable> out;
  std::string line;
  std::getline(in, line);
  long n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 10) throw ParseError("expected 10 columns", n);
    StateRow r;
    r.sample = static_cast<int>(num(c[1], n));
    r.t = static_cast<int>(num(c[2], n));
    r.role = static_cast<int>(num(c[3], n));
    r.pos = {num(c[4], n), num(c[5], n)};
    r.vel = {num(c[6], n), num(c[7], n)};
    r.acc = {num(c[8], n), num(c[9], n)};
    out[c[0]].push_back(r);
  }
  return out;
}

std::map<std::string, std::map<int, std::vector<GateRow>>> read_gate_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::map<std::string, std::map<int, std::vector<GateRow>>> out;
  std::string line;
  std::getline(in, line);
  long n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() < 5) throw ParseError("gate row too short", n);
    if (num(c[1], n) != 0.0) continue;
    GateRow g;
    g.t = static_cast<int>(num(c[2], n));
    g.b.resize(static_cast<Eigen::Index>(c.size() - 4));
    for (std::size_t i = 4; i < c.size(); ++i) g.b(static_cast<Eigen::Index>(i - 4)) = num(c[i], n);
    out[c[0]][static_cast<int>(num(c[3], n))].push_back(std::move(g));
  }
  return out;
}

std::string sanitize(const std::string& id) {
  std::string s = id;
  for (char& ch : s)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
  return s;
}

void write_trajectory_svg(const std::string& path, const StateTable& truth,
                          const StateTable& samples) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto* tab : {&truth, &samples})
    for (const auto& r : *tab) {
      x0 = std::min(x0, r.pos.x());
      x1 = std::max(x1, r.pos.x());
      y0 = std::min(y0, r.pos.y());
      y1 = std::max(y1, r.pos.y());
    }
  const Frame f = fit_frame(x0, x1, y0, y1);
  std::string body = header(f, "Trajectories: ground truth (dashed) and samples");
  std::set<int> sample_ids;
  for (const auto& r : samples) sample_ids.insert(r.sample);
  for (int role : roles_of(truth)) {
    for (int s : sample_ids) {
      std::vector<std::pair<double, double>> pts;
      for (const auto& r : samples)
        if (r.role == role && r.sample == s) pts.emplace_back(f.px(r.pos.x()), f.py(r.pos.y()));
      body += polyline(pts, color(role), 1.0, 0.35, false);
    }
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : truth)
      if (r.role == role) pts.emplace_back(f.px(r.pos.x()), f.py(r.pos.y()));
    body += polyline(pts, color(role), 2.0, 1.0, true);
    if (!pts.empty())
      body += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n",
                          pts.front().first, pts.front().second, color(role));
  }
  write_file(path, body);
}

void write_acceleration_svg(const std::string& path, const StateTable& truth,
                            const StateTable& samples) {
  int t1 = 1;
  double a1 = 0.0;
  for (const auto* tab : {&truth, &samples})
    for (const auto& r : *tab) {
      t1 = std::max(t1, r.t);
      a1 = std::max(a1, r.acc.norm());
    }
  const Frame f = fit_frame(0.0, t1, 0.0, a1);
  std::string body = header(f, "Acceleration norm over time: ground truth (dashed), sample 0");
  for (int role : roles_of(truth)) {
    std::vector<std::pair<double, double>> gt, s0;
    for (const auto& r : truth)
      if (r.role == role) gt.emplace_back(f.px(r.t), f.py(r.acc.norm()));
    for (const auto& r : samples)
      if (r.role == role && r.sample == 0) s0.emplace_back(f.px(r.t), f.py(r.acc.norm()));
    body += polyline(gt, color(role), 1.5, 1.0, true);
    body += polyline(s0, color(role), 1.5, 0.8, false);
  }
  write_file(path, body);
}

void write_gate_chart(const std::string& svg_path, const std::string& csv_path,
                      const std::vector<GateRow>& rows) {
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path);
  const Eigen::Index k = rows.empty() ? 0 : rows.front().b.size();
  csv << "t";
  for (Eigen::Index i = 0; i < k; ++i) csv << ",b" << i;
  csv << '\n';
  for (const auto& r : rows) {
    csv << r.t;
    for (Eigen::Index i = 0; i < r.b.size(); ++i) csv << ',' << r.b(i);
    csv << '\n';
  }

  int t0 = std::numeric_limits<int>::max(), t1 = 0;
  for (const auto& r : rows) {
    t0 = std::min(t0, r.t);
    t1 = std::max(t1, r.t);
  }
  if (rows.empty()) t0 = 0;
  Frame f = fit_frame(t0, t1 + 1, 0.0, static_cast<double>(std::max<Eigen::Index>(k, 1)));
  std::string body = header(f, "Observation coefficients b (rows: agent slot, columns: step)");
  const double cw = (f.w - 2 * f.pad) / (t1 + 1 - t0);
  const double ch = (f.h - 2 * f.pad) / static_cast<double>(std::max<Eigen::Index>(k, 1));
  for (const auto& r : rows)
    for (Eigen::Index i = 0; i < r.b.size(); ++i) {
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(r.b(i), 0.0, 1.0))));
      body += fmt::format(
          "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" "
          "fill=\"rgb({},{},{})\"/>\n",
          f.px(r.t), f.pad + static_cast<double>(i) * ch, cw, ch, shade, shade, shade);
    }
  for (Eigen::Index i = 0; i < k; ++i)
    body += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\" "
        "text-anchor=\"end\">{}</text>\n",
        f.pad - 4, f.pad + (static_cast<double>(i) + 0.7) * ch, i);
  write_file(svg_path, body);
}

}  // namespace mapo::cli
