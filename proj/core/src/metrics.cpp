#include "s2x/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "s2x/errors.hpp"

namespace s2x {

namespace {

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (int64_t c : counts) t += c;
  return t;
}

int64_t ConfusionMatrix::row_total(int64_t truth) const {
  int64_t t = 0;
  for (int64_t p = 1; p <= classes; ++p) t += at(truth, p);
  return t;
}

int64_t ConfusionMatrix::col_total(int64_t pred) const {
  int64_t t = 0;
  for (int64_t r = 1; r <= classes; ++r) t += at(r, pred);
  return t;
}

ConfusionMatrix tally(const std::vector<int64_t>& truth, const std::vector<int64_t>& pred,
                      int64_t classes) {
  if (classes < 1) throw ParamError("confusion matrix needs at least one class");
  if (truth.size() != pred.size())
    throw ShapeError("got " + std::to_string(truth.size()) + " truth labels and " +
                     std::to_string(pred.size()) + " predictions");
  ConfusionMatrix cm;
  cm.classes = classes;
  cm.counts.assign(static_cast<size_t>(classes * classes), 0);
  for (size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 1 || truth[i] > classes)
      throw ParamError("truth label " + std::to_string(truth[i]) + " outside 1.." +
                       std::to_string(classes));
    if (pred[i] < 1 || pred[i] > classes)
      throw ParamError("predicted label " + std::to_string(pred[i]) + " outside 1.." +
                       std::to_string(classes));
    ++cm.at(truth[i], pred[i]);
  }
  return cm;
}

Scores score(const ConfusionMatrix& cm) {
  if (cm.classes < 1) throw ParamError("confusion matrix needs at least one class");
  if (static_cast<int64_t>(cm.counts.size()) != cm.classes * cm.classes)
    throw ShapeError("confusion matrix storage does not match its class count");
  const double total = static_cast<double>(cm.total());
  if (total == 0.0) throw ContractError("confusion matrix has no samples");

  Scores s;
  s.per_class.resize(static_cast<size_t>(cm.classes));
  double diag = 0.0;
  double pe_num = 0.0;
  double acc_sum = 0.0;
  int64_t supported = 0;
  for (int64_t k = 1; k <= cm.classes; ++k) {
    int64_t row = cm.row_total(k);
    int64_t col = cm.col_total(k);
    diag += static_cast<double>(cm.at(k, k));
    pe_num += static_cast<double>(row) * static_cast<double>(col);
    ClassScore& c = s.per_class[static_cast<size_t>(k - 1)];
    c.support = row;
    if (row > 0) {
      c.accuracy = static_cast<double>(cm.at(k, k)) / static_cast<double>(row);
      acc_sum += c.accuracy;
      ++supported;
    }
  }
  s.oa = diag / total;
  s.aa = acc_sum / static_cast<double>(supported);  // supported >= 1 since total > 0
  s.pe = pe_num / (total * total);
  if (s.pe == 1.0) {
    s.degenerate_pe = true;
    s.kappa = (s.oa == 1.0) ? 1.0 : 0.0;
  } else {
    s.kappa = (s.oa - s.pe) / (1.0 - s.pe);
  }
  return s;
}

Aggregate aggregate(const std::vector<double>& xs) {
  if (xs.empty()) throw ParamError("nothing to aggregate");
  Aggregate a;
  for (double x : xs) a.mean += x;
  a.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - a.mean) * (x - a.mean);
  a.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  return a;
}

void write_report(const std::string& path, const std::vector<Scores>& runs) {
  if (runs.empty()) throw ParamError("report needs at least one run");
  const size_t classes = runs[0].per_class.size();
  for (const Scores& r : runs)
    if (r.per_class.size() != classes)
      throw ContractError("runs disagree on the class count: " + std::to_string(classes) +
                          " vs " + std::to_string(r.per_class.size()));

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out << "# " << runs.size() << " run(s); std is the population standard deviation (divisor n)\n";
  out << "# classes with no test samples are excluded from aa and reported as -\n";

  auto metric_line = [&](const std::string& name, auto pick) {
    std::vector<double> xs;
    xs.reserve(runs.size());
    for (const Scores& r : runs) xs.push_back(pick(r));
    Aggregate a = aggregate(xs);
    out << name << "\t" << fmt9(a.mean) << "\t" << fmt9(a.stddev) << "\n";
  };
  metric_line("oa", [](const Scores& r) { return r.oa; });
  metric_line("aa", [](const Scores& r) { return r.aa; });
  metric_line("kappa", [](const Scores& r) { return r.kappa; });

  for (size_t k = 0; k < classes; ++k) {
    std::vector<double> xs;
    for (const Scores& r : runs)
      if (r.per_class[k].support > 0) xs.push_back(r.per_class[k].accuracy);
    out << "class_" << (k + 1);
    if (xs.empty()) {
      out << "\t-\t-\n";
    } else {
      Aggregate a = aggregate(xs);
      out << "\t" << fmt9(a.mean) << "\t" << fmt9(a.stddev) << "\n";
    }
  }
  out.flush();
  if (!out) throw FormatError(path + ": write failed");
}

const std::vector<std::array<uint8_t, 3>>& label_palette() {
  static const std::vector<std::array<uint8_t, 3>> palette = {
      {0, 0, 0},       {255, 0, 0},     {0, 255, 0},   {0, 0, 255},   {255, 255, 0},
      {0, 255, 255},   {255, 0, 255},   {191, 191, 191}, {128, 128, 128}, {128, 0, 0},
      {128, 128, 0},   {0, 128, 0},     {128, 0, 128}, {0, 128, 128}, {0, 0, 128},
      {255, 166, 0},   {255, 217, 0},
  };
  return palette;
}

void export_map(const std::string& path, const std::vector<int64_t>& labels, int64_t height,
                int64_t width) {
  if (height < 1 || width < 1)
    throw ParamError("map dimensions must be positive, got " + std::to_string(height) + " x " +
                     std::to_string(width));
  if (static_cast<int64_t>(labels.size()) != height * width)
    throw ParamError("got " + std::to_string(labels.size()) + " labels for a " +
                     std::to_string(height) + " x " + std::to_string(width) + " map");
  const auto& palette = label_palette();
  const int64_t limit = static_cast<int64_t>(palette.size());
  for (int64_t l : labels)
    if (l < 0 || l >= limit)
      throw ParamError("label " + std::to_string(l) + " has no palette entry (0.." +
                       std::to_string(limit - 1) + ")");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out << "P6\n# palette";
  for (size_t i = 0; i < palette.size(); ++i)
    out << " " << i << ":" << int(palette[i][0]) << "," << int(palette[i][1]) << ","
        << int(palette[i][2]);
  out << "\n" << width << " " << height << "\n255\n";
  std::vector<char> row(static_cast<size_t>(width) * 3);
  for (int64_t y = 0; y < height; ++y) {
    for (int64_t x = 0; x < width; ++x) {
      const auto& rgb = palette[static_cast<size_t>(labels[static_cast<size_t>(y * width + x)])];
      row[static_cast<size_t>(x * 3)] = static_cast<char>(rgb[0]);
      row[static_cast<size_t>(x * 3 + 1)] = static_cast<char>(rgb[1]);
      row[static_cast<size_t>(x * 3 + 2)] = static_cast<char>(rgb[2]);
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  out.flush();
  if (!out) throw FormatError(path + ": write failed");
}

namespace {

// One whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(std::istream& in, const std::string& path) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (tok.empty()) throw FormatError(path + ": truncated header");
  return tok;
}

int64_t ppm_number(std::istream& in, const std::string& path, const char* what) {
  std::string tok = ppm_token(in, path);
  try {
    size_t used = 0;
    int64_t v = std::stoll(tok, &used);
    if (used != tok.size() || v < 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError(path + ": bad " + what + " '" + tok + "'");
  }
}

}  // namespace

LabelMap read_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open");
  std::string magic = ppm_token(in, path);
  if (magic != "P6") throw FormatError(path + ": not a P6 map (magic '" + magic + "')");
  LabelMap map;
  map.width = ppm_number(in, path, "width");
  map.height = ppm_number(in, path, "height");
  int64_t maxval = ppm_number(in, path, "max value");
  if (map.width < 1 || map.height < 1 || maxval != 255)
    throw FormatError(path + ": unsupported dimensions or depth");
  // the token reader consumed the single separator byte after the max
  // value, so the stream now sits on the first pixel

  const auto& palette = label_palette();
  std::map<std::array<uint8_t, 3>, int64_t> reverse;
  for (size_t i = 0; i < palette.size(); ++i) reverse[palette[i]] = static_cast<int64_t>(i);

  map.labels.resize(static_cast<size_t>(map.height * map.width));
  std::vector<char> row(static_cast<size_t>(map.width) * 3);
  for (int64_t y = 0; y < map.height; ++y) {
    in.read(row.data(), static_cast<std::streamsize>(row.size()));
    if (in.gcount() != static_cast<std::streamsize>(row.size()))
      throw FormatError(path + ": truncated pixel data at row " + std::to_string(y));
    for (int64_t x = 0; x < map.width; ++x) {
      std::array<uint8_t, 3> rgb = {static_cast<uint8_t>(row[static_cast<size_t>(x * 3)]),
                                    static_cast<uint8_t>(row[static_cast<size_t>(x * 3 + 1)]),
                                    static_cast<uint8_t>(row[static_cast<size_t>(x * 3 + 2)])};
      auto it = reverse.find(rgb);
      if (it == reverse.end())
        throw FormatError(path + ": color " + std::to_string(rgb[0]) + "," +
                          std::to_string(rgb[1]) + "," + std::to_string(rgb[2]) + " at (" +
                          std::to_string(y) + "," + std::to_string(x) +
                          ") is not in the palette");
      map.labels[static_cast<size_t>(y * map.width + x)] = it->second;
    }
  }
  if (in.get() != EOF) throw FormatError(path + ": trailing data after pixels");
  return map;
}

}  // namespace s2x
