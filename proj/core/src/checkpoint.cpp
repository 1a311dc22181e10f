#include "s2x/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

#include "binio.hpp"

namespace s2x {

namespace {

constexpr uint16_t kCheckpointVersion = 1;
constexpr uint32_t kMaxHeaderBytes = 1 << 20;
constexpr uint32_t kMaxTensors = 1 << 20;
constexpr int64_t kMaxTensorElements = 1'000'000'000;

const char* const kReservedKeys[] = {"kind",        "epoch",     "adam_step",   "width",
                                     "heads",       "cross_layers", "conv_kernel", "bands",
                                     "ffn_mult",    "masking_ratio", "use_cross_attention",
                                     "with_class_token"};

bool is_reserved(const std::string& key) {
  for (const char* r : kReservedKeys)
    if (key == r) return true;
  return false;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string header_text(const CheckpointMeta& meta) {
  std::ostringstream h;
  h << "kind=" << meta.kind << "\n";
  h << "epoch=" << meta.epoch << "\n";
  h << "adam_step=" << meta.adam_step << "\n";
  h << "width=" << meta.encoder.width << "\n";
  h << "heads=" << meta.encoder.heads << "\n";
  h << "cross_layers=" << meta.encoder.cross_layers << "\n";
  h << "conv_kernel=" << meta.encoder.conv_kernel << "\n";
  h << "bands=" << meta.encoder.bands << "\n";
  h << "ffn_mult=" << meta.encoder.ffn_mult << "\n";
  h << "masking_ratio=" << fmt_double(meta.encoder.masking_ratio) << "\n";
  h << "use_cross_attention=" << (meta.encoder.use_cross_attention ? 1 : 0) << "\n";
  h << "with_class_token=" << (meta.encoder.with_class_token ? 1 : 0) << "\n";
  for (const auto& kv : meta.extra) h << kv.first << "=" << kv.second << "\n";  // map keeps keys sorted
  return h.str();
}

int64_t parse_int(const std::string& v, const std::string& key, const std::string& path) {
  try {
    size_t used = 0;
    int64_t out = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw FormatError(path + ": header value for " + key + " is not an integer: '" + v + "'");
  }
}

double parse_double(const std::string& v, const std::string& key, const std::string& path) {
  try {
    size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw FormatError(path + ": header value for " + key + " is not a number: '" + v + "'");
  }
}

CheckpointMeta parse_header(const std::string& text, const std::string& path) {
  CheckpointMeta meta;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError(path + ": header line " + std::to_string(lineno) + " is not key=value: '" +
                        line + "'");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    if (key == "kind")
      meta.kind = val;
    else if (key == "epoch")
      meta.epoch = parse_int(val, key, path);
    else if (key == "adam_step")
      meta.adam_step = parse_int(val, key, path);
    else if (key == "width")
      meta.encoder.width = parse_int(val, key, path);
    else if (key == "heads")
      meta.encoder.heads = parse_int(val, key, path);
    else if (key == "cross_layers")
      meta.encoder.cross_layers = parse_int(val, key, path);
    else if (key == "conv_kernel")
      meta.encoder.conv_kernel = parse_int(val, key, path);
    else if (key == "bands")
      meta.encoder.bands = parse_int(val, key, path);
    else if (key == "ffn_mult")
      meta.encoder.ffn_mult = parse_int(val, key, path);
    else if (key == "masking_ratio")
      meta.encoder.masking_ratio = parse_double(val, key, path);
    else if (key == "use_cross_attention")
      meta.encoder.use_cross_attention = parse_int(val, key, path) != 0;
    else if (key == "with_class_token")
      meta.encoder.with_class_token = parse_int(val, key, path) != 0;
    else
      meta.extra[key] = val;
  }
  if (meta.kind.empty()) throw FormatError(path + ": header is missing the kind key");
  return meta;
}

void write_entry(detail::Writer& w, const std::string& name, const Shape& shape,
                 const std::vector<double>& data) {
  if (name.empty() || name.size() > 0xffff)
    throw ContractError("checkpoint tensor name length out of range: '" + name + "'");
  if (shape.size() > 0xff) throw ContractError("checkpoint tensor rank out of range for " + name);
  w.u16(static_cast<uint16_t>(name.size()));
  w.bytes(name.data(), name.size());
  unsigned char rank = static_cast<unsigned char>(shape.size());
  w.bytes(&rank, 1);
  for (int64_t d : shape) w.u32(static_cast<uint32_t>(d));
  for (double v : data) w.f32(static_cast<float>(v));
}

}  // namespace

void quantize_params(ParamStore& ps) {
  for (const auto& name : ps.names())
    for (double& v : ps.get(name).mutable_values()) v = static_cast<double>(static_cast<float>(v));
}

void save_checkpoint(const std::string& path, const CheckpointMeta& meta, const ParamStore& params,
                     const Adam* adam) {
  if (meta.kind.empty()) throw ContractError("checkpoint kind must not be empty");
  for (const auto& kv : meta.extra)
    if (is_reserved(kv.first))
      throw ContractError("checkpoint extra key '" + kv.first + "' collides with a header field");

  std::string header = header_text(meta);
  std::vector<std::string> adam_names;
  if (adam)
    for (const auto& kv : adam->state()) adam_names.push_back(kv.first);
  std::sort(adam_names.begin(), adam_names.end());

  detail::Writer w(path);
  w.bytes("S2CK", 4);
  w.u16(kCheckpointVersion);
  w.u32(static_cast<uint32_t>(header.size()));
  w.bytes(header.data(), header.size());
  uint32_t count = static_cast<uint32_t>(params.size() + 2 * adam_names.size());
  w.u32(count);
  for (const auto& name : params.names()) {
    const Tensor& t = params.get(name);
    write_entry(w, name, t.shape(), t.values());
  }
  for (const auto& name : adam_names) {
    if (!params.has(name))
      throw ContractError("optimizer state refers to unknown parameter " + name);
    const Shape& shape = params.get(name).shape();
    const Adam::Moments& mo = adam->state().at(name);
    write_entry(w, "adam/m/" + name, shape, mo.m);
    write_entry(w, "adam/v/" + name, shape, mo.v);
  }
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  detail::Reader r(path);
  r.expect_magic("S2CK");
  uint16_t ver = r.u16("version");
  if (ver != kCheckpointVersion)
    throw FormatError(path + ": unsupported version " + std::to_string(ver) + " at byte offset 4");
  uint32_t header_len = r.u32("header length");
  if (header_len == 0 || header_len > kMaxHeaderBytes)
    throw FormatError(path + ": implausible header length " + std::to_string(header_len) +
                      " at byte offset 6");
  std::string header(header_len, '\0');
  r.bytes(header.data(), header_len, "header");

  LoadedCheckpoint out;
  out.meta = parse_header(header, path);

  uint32_t count = r.u32("tensor count");
  if (count > kMaxTensors)
    throw FormatError(path + ": implausible tensor count " + std::to_string(count));
  std::map<std::string, std::vector<double>> adam_m, adam_v;
  std::map<std::string, Shape> adam_shape;
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t name_len = r.u16("tensor name length");
    if (name_len == 0)
      throw FormatError(path + ": empty tensor name at byte offset " + std::to_string(r.offset - 2));
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len, "tensor name");
    unsigned char rank = 0;
    r.bytes(&rank, 1, "tensor rank");
    Shape shape(rank);
    int64_t numel = 1;
    for (auto& d : shape) {
      uint64_t at = r.offset;
      uint32_t ext = r.u32("tensor extent");
      if (ext == 0)
        throw FormatError(path + ": zero extent in tensor " + name + " at byte offset " +
                          std::to_string(at));
      d = static_cast<int64_t>(ext);
      if (numel > kMaxTensorElements / d)
        throw FormatError(path + ": tensor " + name + " element count overflows");
      numel *= d;
    }
    std::vector<double> data(static_cast<size_t>(numel));
    for (auto& v : data) {
      uint64_t at = r.offset;
      float f = r.f32("tensor payload");
      if (!std::isfinite(f))
        throw FormatError(path + ": non-finite value in tensor " + name + " at byte offset " +
                          std::to_string(at));
      v = static_cast<double>(f);
    }
    if (name.rfind("adam/m/", 0) == 0) {
      adam_m[name.substr(7)] = std::move(data);
      adam_shape[name.substr(7)] = shape;
    } else if (name.rfind("adam/v/", 0) == 0) {
      adam_v[name.substr(7)] = std::move(data);
    } else {
      if (out.params.has(name)) throw FormatError(path + ": duplicate tensor " + name);
      out.params.add(name, Tensor::from(shape, std::move(data)));
    }
  }
  r.expect_eof();

  for (auto& kv : adam_m) {
    auto it = adam_v.find(kv.first);
    if (it == adam_v.end())
      throw FormatError(path + ": optimizer state for " + kv.first + " is missing its v half");
    if (it->second.size() != kv.second.size())
      throw FormatError(path + ": optimizer moment sizes disagree for " + kv.first);
    if (!out.params.has(kv.first))
      throw FormatError(path + ": optimizer state for unknown parameter " + kv.first);
    if (out.params.get(kv.first).shape() != adam_shape[kv.first])
      throw FormatError(path + ": optimizer state shape disagrees with parameter " + kv.first);
    out.adam[kv.first] = Adam::Moments{std::move(kv.second), std::move(it->second)};
    adam_v.erase(it);
  }
  if (!adam_v.empty())
    throw FormatError(path + ": optimizer state for " + adam_v.begin()->first +
                      " is missing its m half");
  return out;
}

void pca_to_params(const PcaModel& model, ParamStore& ps) {
  if (model.in_bands < 1 || model.out_bands < 1)
    throw ContractError("cannot persist an empty band projection");
  ps.add("pca/mean", Tensor::from({model.in_bands}, model.mean));
  ps.add("pca/components", Tensor::from({model.in_bands, model.out_bands}, model.components));
  ps.add("pca/explained_variance", Tensor::from({model.out_bands}, model.explained_variance));
}

bool has_pca(const ParamStore& ps) { return ps.has("pca/components"); }

PcaModel pca_from_params(const ParamStore& ps) {
  if (!has_pca(ps)) throw ContractError("parameter tree holds no band projection");
  const Tensor& mean = ps.get("pca/mean");
  const Tensor& comp = ps.get("pca/components");
  const Tensor& ev = ps.get("pca/explained_variance");
  if (comp.rank() != 2 || mean.rank() != 1 || ev.rank() != 1 || mean.dim(0) != comp.dim(0) ||
      ev.dim(0) != comp.dim(1))
    throw ContractError("band projection tensors have inconsistent shapes");
  PcaModel m;
  m.in_bands = comp.dim(0);
  m.out_bands = comp.dim(1);
  m.mean = mean.values();
  m.components = comp.values();
  m.explained_variance = ev.values();
  return m;
}

std::string structure_diff(const ParamStore& expected, const ParamStore& actual) {
  std::string diff;
  auto line = [&](const std::string& s) {
    if (!diff.empty()) diff += "\n";
    diff += "  " + s;
  };
  for (const auto& name : expected.names()) {
    if (!actual.has(name)) {
      line("missing tensor " + name + " " + shape_str(expected.get(name).shape()));
    } else if (actual.get(name).shape() != expected.get(name).shape()) {
      line("shape mismatch " + name + ": expected " + shape_str(expected.get(name).shape()) +
           ", got " + shape_str(actual.get(name).shape()));
    }
  }
  for (const auto& name : actual.names())
    if (!expected.has(name)) line("unexpected tensor " + name + " " + shape_str(actual.get(name).shape()));
  return diff;
}

}  // namespace s2x
