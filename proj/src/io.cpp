#include "miro/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace miro::io {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw Error("line " + std::to_string(line) + ": " + what);
}

double parse_double(std::string_view s, std::size_t line) {
  s = trim(s);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    fail(line, "malformed number '" + std::string(s) + "'");
  return v;
}

long long parse_int(std::string_view s, std::size_t line) {
  s = trim(s);
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    fail(line, "malformed integer '" + std::string(s) + "'");
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

CloudFile parse_cloud(const std::string& text) {
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;

  // header
  std::vector<std::string> header;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty()) continue;
    for (auto f : split_fields(line)) header.emplace_back(trim(f));
    break;
  }
  if (header.size() < 2 || header[0] != "x_nm" || header[1] != "y_nm")
    throw Error("line " + std::to_string(line_no) + ": header must start with x_nm,y_nm");

  Columns cols;
  static const char* optional_names[] = {"frame", "cluster_id", "class_id", "coarse_id"};
  std::size_t next_opt = 0;
  for (std::size_t c = 2; c < header.size(); ++c) {
    while (next_opt < 4 && header[c] != optional_names[next_opt]) ++next_opt;
    if (next_opt == 4) fail(line_no, "unknown or out-of-order column '" + header[c] + "'");
    switch (next_opt) {
      case 0: cols.frame = true; break;
      case 1: cols.cluster_id = true; break;
      case 2: cols.class_id = true; break;
      case 3: cols.coarse_id = true; break;
    }
    ++next_opt;
  }

  std::vector<Localization> pts;
  std::vector<int> cluster, klass, coarse;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != header.size())
      fail(line_no, "expected " + std::to_string(header.size()) + " columns, found " + std::to_string(fields.size()));
    Localization loc;
    loc.x = parse_double(fields[0], line_no);
    loc.y = parse_double(fields[1], line_no);
    if (!std::isfinite(loc.x) || !std::isfinite(loc.y)) fail(line_no, "non-finite coordinate");
    std::size_t c = 2;
    if (cols.frame) {
      auto f = trim(fields[c++]);
      if (!f.empty()) {
        auto v = parse_int(f, line_no);
        if (v < 0) fail(line_no, "negative frame index");
        loc.frame = v;
      }
    }
    if (cols.cluster_id) {
      auto v = parse_int(fields[c++], line_no);
      if (v < -1) fail(line_no, "cluster_id must be >= -1");
      cluster.push_back(static_cast<int>(v));
    }
    if (cols.class_id) {
      auto v = parse_int(fields[c++], line_no);
      if (v < 0) fail(line_no, "class_id must be non-negative");
      klass.push_back(static_cast<int>(v));
    }
    if (cols.coarse_id) {
      auto v = parse_int(fields[c++], line_no);
      if (v < -1) fail(line_no, "coarse_id must be >= -1");
      coarse.push_back(static_cast<int>(v));
    }
    pts.push_back(loc);
  }

  const std::size_t n = pts.size();
  Partition truth = cols.cluster_id ? Partition(std::move(cluster)) : Partition::all_noise(n);
  std::optional<std::vector<int>> shape;
  if (cols.class_id) shape = std::move(klass);
  std::optional<Partition> coarse_p;
  if (cols.coarse_id) coarse_p = Partition(std::move(coarse));
  return CloudFile{LabeledCloud(PointCloud(std::move(pts)), std::move(truth), std::move(shape), std::move(coarse_p)),
                   cols};
}

CloudFile read_cloud(const std::filesystem::path& path) {
  try {
    return parse_cloud(read_text(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

Columns columns_for(const LabeledCloud& cloud) {
  Columns c;
  for (const auto& p : cloud.cloud().points())
    if (p.frame) c.frame = true;
  c.cluster_id = true;
  c.class_id = cloud.shape_class().has_value();
  c.coarse_id = cloud.coarse_truth().has_value();
  return c;
}

std::string format_cloud(const LabeledCloud& cloud, const Columns& cols) {
  if (cols.class_id && !cloud.shape_class()) throw Error("class_id column requested but cloud has no classes");
  if (cols.coarse_id && !cloud.coarse_truth()) throw Error("coarse_id column requested but cloud has no coarse truth");
  std::string out = "x_nm,y_nm";
  if (cols.frame) out += ",frame";
  if (cols.cluster_id) out += ",cluster_id";
  if (cols.class_id) out += ",class_id";
  if (cols.coarse_id) out += ",coarse_id";
  out += '\n';
  const auto& pts = cloud.cloud().points();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out += format_double(pts[i].x);
    out += ',';
    out += format_double(pts[i].y);
    if (cols.frame) {
      out += ',';
      if (pts[i].frame) out += std::to_string(*pts[i].frame);
    }
    if (cols.cluster_id) out += ',' + std::to_string(cloud.truth()[i]);
    if (cols.class_id) out += ',' + std::to_string((*cloud.shape_class())[i]);
    if (cols.coarse_id) out += ',' + std::to_string((*cloud.coarse_truth())[i]);
    out += '\n';
  }
  return out;
}

void write_cloud(const std::filesystem::path& path, const LabeledCloud& cloud, const Columns& columns) {
  write_atomic(path, format_cloud(cloud, columns));
}

void write_cloud(const std::filesystem::path& path, const LabeledCloud& cloud) {
  write_cloud(path, cloud, columns_for(cloud));
}

void write_positions(const std::filesystem::path& path, std::span<const Vec2> positions) {
  std::string out = "x_nm,y_nm\n";
  for (const auto& p : positions) out += format_double(p.x) + ',' + format_double(p.y) + '\n';
  write_atomic(path, out);
}

void write_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw Error("cannot open " + tmp.string() + " for writing");
    f << text;
    if (!f) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace miro::io
