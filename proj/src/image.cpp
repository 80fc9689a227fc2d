#include "diffiq/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "diffiq/errors.hpp"

namespace diffiq {

namespace {

struct ByteCursor {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  bool eof() const { return pos >= bytes.size(); }
  int peek() const { return eof() ? -1 : bytes[pos]; }
  int get() { return eof() ? -1 : bytes[pos++]; }
};

[[noreturn]] void parse_fail(const ByteCursor& cur, const std::string& what) {
  throw FormatError(what + " at byte offset " + std::to_string(cur.pos));
}

// Skips whitespace and '#' comments (comment runs to end of line).
void skip_separators(ByteCursor& cur) {
  while (!cur.eof()) {
    const int c = cur.peek();
    if (std::isspace(c)) {
      cur.get();
    } else if (c == '#') {
      while (!cur.eof() && cur.get() != '\n') {
      }
    } else {
      break;
    }
  }
}

int read_header_int(ByteCursor& cur, const char* field) {
  skip_separators(cur);
  if (cur.eof() || !std::isdigit(cur.peek()))
    parse_fail(cur, std::string("expected ") + field);
  long v = 0;
  while (!cur.eof() && std::isdigit(cur.peek())) {
    v = v * 10 + (cur.get() - '0');
    if (v > 1000000000L) parse_fail(cur, std::string("oversized ") + field);
  }
  return static_cast<int>(v);
}

// Common P5/P6 header; leaves the cursor on the first payload byte.
void read_pnm_header(ByteCursor& cur, char expected_kind, int& w, int& h) {
  if (cur.bytes.size() < 2 || cur.bytes[0] != 'P' || cur.bytes[1] != expected_kind)
    parse_fail(cur, std::string("bad magic, expected P") + expected_kind);
  cur.pos = 2;
  w = read_header_int(cur, "width");
  h = read_header_int(cur, "height");
  const int maxval = read_header_int(cur, "maxval");
  if (w <= 0 || h <= 0) parse_fail(cur, "non-positive dimensions");
  if (maxval > 255) parse_fail(cur, "maxval " + std::to_string(maxval) + " exceeds 255");
  if (maxval <= 0) parse_fail(cur, "non-positive maxval");
  // Exactly one whitespace byte separates the header from the payload.
  if (cur.eof() || !std::isspace(cur.peek())) parse_fail(cur, "missing header terminator");
  cur.get();
}

bool glob_match(const std::string& pattern, const std::string& name) {
  // Iterative '*'/'?' matcher with backtracking over the last star.
  std::size_t p = 0, n = 0, star = std::string::npos, mark = 0;
  while (n < name.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == name[n])) {
      ++p;
      ++n;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = n;
    } else if (star != std::string::npos) {
      p = star + 1;
      n = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace

ImagePlane read_pgm(const std::vector<std::uint8_t>& bytes) {
  ByteCursor cur{bytes};
  int w = 0, h = 0;
  read_pnm_header(cur, '5', w, h);
  const std::size_t need = static_cast<std::size_t>(w) * h;
  if (bytes.size() - cur.pos < need)
    parse_fail(cur, "truncated payload, need " + std::to_string(need) + " bytes, have " +
                        std::to_string(bytes.size() - cur.pos));
  ImagePlane img(w, h);
  for (std::size_t i = 0; i < need; ++i) img.data[i] = bytes[cur.pos + i];
  return img;
}

void read_ppm(const std::vector<std::uint8_t>& bytes, ImagePlane& r, ImagePlane& g,
              ImagePlane& b) {
  ByteCursor cur{bytes};
  int w = 0, h = 0;
  read_pnm_header(cur, '6', w, h);
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() - cur.pos < need)
    parse_fail(cur, "truncated payload, need " + std::to_string(need) + " bytes, have " +
                        std::to_string(bytes.size() - cur.pos));
  r = ImagePlane(w, h);
  g = ImagePlane(w, h);
  b = ImagePlane(w, h);
  for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i) {
    r.data[i] = bytes[cur.pos + 3 * i];
    g.data[i] = bytes[cur.pos + 3 * i + 1];
    b.data[i] = bytes[cur.pos + 3 * i + 2];
  }
}

std::vector<std::uint8_t> write_pgm(const ImagePlane& img) {
  char header[64];
  const int n = std::snprintf(header, sizeof(header), "P5\n%d %d\n255\n", img.width, img.height);
  std::vector<std::uint8_t> out(header, header + n);
  out.reserve(out.size() + img.size());
  for (const double v : img.data) {
    const double q = std::round(v);  // half away from zero
    out.push_back(static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0)));
  }
  return out;
}

ImagePlane rgb_to_luma(const ImagePlane& r, const ImagePlane& g, const ImagePlane& b) {
  if (!r.same_shape(g) || !r.same_shape(b))
    throw ShapeError("rgb_to_luma: channel dimensions differ");
  ImagePlane y(r.width, r.height);
  for (std::size_t i = 0; i < y.size(); ++i)
    y.data[i] = 0.299 * r.data[i] + 0.587 * g.data[i] + 0.114 * b.data[i];
  return y;
}

ImagePlane load_image(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
    ImagePlane r, g, b;
    try {
      read_ppm(bytes, r, g, b);
    } catch (const FormatError& e) {
      throw FormatError(path + ": " + e.what());
    }
    return rgb_to_luma(r, g, b);
  }
  try {
    return read_pgm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void save_pgm(const std::string& path, const ImagePlane& img) {
  const std::vector<std::uint8_t> bytes = write_pgm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

Dataset load_dataset(const std::string& dir, const std::string& pattern) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    const std::string ext = lowercase(entry.path().extension().string());
    if (ext != ".pgm" && ext != ".ppm") continue;
    if (!glob_match(pattern, name)) continue;
    files.push_back(entry.path());
  }
  if (files.empty())
    throw IoError("no PGM/PPM files matching '" + pattern + "' in " + dir);

  Dataset ds;
  std::set<std::string> seen;
  for (const auto& p : files) {
    DatasetEntry e;
    e.id = p.stem().string();
    if (!seen.insert(e.id).second)
      throw IoError("duplicate dataset identifier: " + e.id);
    e.image = load_image(p.string());
    ds.entries.push_back(std::move(e));
  }
  std::sort(ds.entries.begin(), ds.entries.end(),
            [](const DatasetEntry& a, const DatasetEntry& b) { return a.id < b.id; });
  return ds;
}

ImagePlane crop(const ImagePlane& img, int r0, int c0, int h, int w) {
  if (r0 < 0 || c0 < 0 || h <= 0 || w <= 0 || r0 + h > img.height || c0 + w > img.width)
    throw ShapeError("crop outside image bounds");
  ImagePlane out(w, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out.at(r, c) = img.at(r0 + r, c0 + c);
  return out;
}

double plane_min(const ImagePlane& img) {
  return *std::min_element(img.data.begin(), img.data.end());
}

double plane_max(const ImagePlane& img) {
  return *std::max_element(img.data.begin(), img.data.end());
}

double plane_mean(const ImagePlane& img) {
  double s = 0.0;
  for (const double v : img.data) s += v;
  return s / static_cast<double>(img.size());
}

double plane_std(const ImagePlane& img) {
  const double mu = plane_mean(img);
  double s = 0.0;
  for (const double v : img.data) s += (v - mu) * (v - mu);
  return std::sqrt(s / static_cast<double>(img.size()));
}

double pearson(const ImagePlane& a, const ImagePlane& b) {
  if (!a.same_shape(b)) throw ShapeError("pearson: dimensions differ");
  const double ma = plane_mean(a), mb = plane_mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a.data[i] - ma, db = b.data[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  const double denom = std::sqrt(saa) * std::sqrt(sbb);
  if (denom == 0.0) return 0.0;
  return sab / denom;
}

}  // namespace diffiq
