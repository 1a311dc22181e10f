#include "s2x/cube.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "binio.hpp"

namespace s2x {

std::vector<double> HsiCube::spectrum(int64_t y, int64_t x) const {
  std::vector<double> s(static_cast<size_t>(bands));
  size_t base = static_cast<size_t>((y * width + x) * bands);
  for (int64_t b = 0; b < bands; ++b) s[static_cast<size_t>(b)] = reflectance[base + static_cast<size_t>(b)];
  return s;
}

uint16_t HsiCube::label_at(int64_t y, int64_t x) const {
  if (labels.empty()) return 0;
  return labels[static_cast<size_t>(y * width + x)];
}

int HsiCube::num_classes() const {
  uint16_t m = 0;
  for (uint16_t l : labels) m = std::max(m, l);
  return m;
}

void HsiCube::validate() const {
  if (height <= 0 || width <= 0 || bands <= 0)
    throw ContractError("cube '" + name + "' has non-positive dimensions");
  size_t want = static_cast<size_t>(height) * static_cast<size_t>(width) * static_cast<size_t>(bands);
  if (reflectance.size() != want)
    throw ContractError("cube '" + name + "' reflectance length " + std::to_string(reflectance.size()) +
                        " does not match H*W*C = " + std::to_string(want));
  if (!labels.empty() && labels.size() != static_cast<size_t>(height * width))
    throw ContractError("cube '" + name + "' label map length " + std::to_string(labels.size()) +
                        " does not match H*W = " + std::to_string(height * width));
  for (size_t i = 0; i < reflectance.size(); ++i)
    if (!std::isfinite(reflectance[i]))
      throw ContractError("cube '" + name + "' has a non-finite reflectance value at flat index " +
                          std::to_string(i));
}

namespace {

constexpr uint16_t kContainerVersion = 1;
constexpr int64_t kMaxElements = 1'000'000'000;  // dim-overflow guard

std::string strip_suffix(const std::string& path, const std::string& suffix) {
  if (path.size() > suffix.size() && path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0)
    return path.substr(0, path.size() - suffix.size());
  return path;
}

using detail::Reader;
using detail::Writer;

int64_t checked_dim(uint32_t v, const char* what, const std::string& path, uint64_t offset) {
  if (v == 0)
    throw FormatError(path + ": zero " + std::string(what) + " at byte offset " + std::to_string(offset - 4));
  return static_cast<int64_t>(v);
}

void save_labels_file(const std::string& path, const HsiCube& cube) {
  Writer w(path);
  w.bytes("HSIL", 4);
  w.u16(kContainerVersion);
  w.u32(static_cast<uint32_t>(cube.height));
  w.u32(static_cast<uint32_t>(cube.width));
  for (uint16_t l : cube.labels) w.u16(l);
}

void load_labels_file(const std::string& path, HsiCube& cube) {
  Reader r(path);
  r.expect_magic("HSIL");
  uint16_t ver = r.u16("version");
  if (ver != kContainerVersion)
    throw FormatError(path + ": unsupported version " + std::to_string(ver) + " at byte offset 4");
  int64_t h = checked_dim(r.u32("height"), "height", path, r.offset);
  int64_t w = checked_dim(r.u32("width"), "width", path, r.offset);
  if (h != cube.height || w != cube.width)
    throw FormatError(path + ": label map is " + std::to_string(h) + "x" + std::to_string(w) +
                      " but cube is " + std::to_string(cube.height) + "x" + std::to_string(cube.width));
  cube.labels.resize(static_cast<size_t>(h * w));
  for (size_t i = 0; i < cube.labels.size(); ++i) cube.labels[i] = r.u16("labels");
  r.expect_eof();
}

void save_names_file(const std::string& path, const HsiCube& cube) {
  std::ofstream out(path);
  if (!out) throw FormatError(path + ": cannot open for writing");
  for (const auto& kv : cube.class_names) out << kv.first << "=" << kv.second << "\n";
}

void load_names_file(const std::string& path, HsiCube& cube) {
  std::ifstream in(path);
  if (!in) throw FormatError(path + ": cannot open for reading");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected key=value");
    int key = 0;
    try {
      key = std::stoi(line.substr(0, eq));
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": class key is not an integer");
    }
    cube.class_names[key] = line.substr(eq + 1);
  }
}

}  // namespace

std::string labels_path_for(const std::string& cube_path) {
  return strip_suffix(cube_path, ".hsic") + ".hsil";
}

std::string names_path_for(const std::string& cube_path) {
  return strip_suffix(cube_path, ".hsic") + ".names";
}

void save_cube(const std::string& path, const HsiCube& cube) {
  cube.validate();
  {
    Writer w(path);
    w.bytes("HSIC", 4);
    w.u16(kContainerVersion);
    w.u32(static_cast<uint32_t>(cube.height));
    w.u32(static_cast<uint32_t>(cube.width));
    w.u32(static_cast<uint32_t>(cube.bands));
    for (float v : cube.reflectance) w.f32(v);
  }
  std::error_code ec;
  if (cube.has_labels())
    save_labels_file(labels_path_for(path), cube);
  else
    std::filesystem::remove(labels_path_for(path), ec);  // drop stale sibling
  if (!cube.class_names.empty())
    save_names_file(names_path_for(path), cube);
  else
    std::filesystem::remove(names_path_for(path), ec);
}

HsiCube load_cube(const std::string& path) {
  HsiCube cube;
  {
    Reader r(path);
    r.expect_magic("HSIC");
    uint16_t ver = r.u16("version");
    if (ver != kContainerVersion)
      throw FormatError(path + ": unsupported version " + std::to_string(ver) + " at byte offset 4");
    cube.height = checked_dim(r.u32("height"), "height", path, r.offset);
    cube.width = checked_dim(r.u32("width"), "width", path, r.offset);
    cube.bands = checked_dim(r.u32("bands"), "bands", path, r.offset);
    if (cube.height * cube.width > kMaxElements / cube.bands)
      throw FormatError(path + ": dimension overflow at byte offset 6 (" + std::to_string(cube.height) +
                        "x" + std::to_string(cube.width) + "x" + std::to_string(cube.bands) + ")");
    size_t n = static_cast<size_t>(cube.height * cube.width * cube.bands);
    cube.reflectance.resize(n);
    for (size_t i = 0; i < n; ++i) {
      uint64_t at = r.offset;
      cube.reflectance[i] = r.f32("reflectance");
      if (!std::isfinite(cube.reflectance[i]))
        throw FormatError(path + ": non-finite reflectance value at byte offset " + std::to_string(at));
    }
    r.expect_eof();
  }
  std::string stem = std::filesystem::path(path).stem().string();
  cube.name = stem;
  std::string lp = labels_path_for(path);
  if (std::filesystem::exists(lp)) load_labels_file(lp, cube);
  std::string np = names_path_for(path);
  if (std::filesystem::exists(np)) load_names_file(np, cube);
  return cube;
}

}  // namespace s2x
