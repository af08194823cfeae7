#include "dcno/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dcno {
namespace {

constexpr char kDatasetMagic[8] = {'D', 'C', 'N', 'O', 'D', 'S', '0', '1'};
constexpr char kCheckpointMagic[8] = {'D', 'C', 'N', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kDatasetVersion = 1;
constexpr std::uint32_t kCheckpointVersion = 1;

// All multi-byte fields are little-endian on disk regardless of host order.
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(std::string bytes, std::string origin)
      : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  void need(std::size_t n, const char* what) {
    if (pos_ + n > bytes_.size())
      throw std::runtime_error(origin_ + ": truncated payload reading " + what +
                               " (need " + std::to_string(pos_ + n) +
                               " bytes, file has " + std::to_string(bytes_.size()) + ")");
  }

  void raw(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    raw(b, 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  std::uint64_t u64(const char* what) {
    std::uint64_t lo = u32(what), hi = u32(what);
    return lo | (hi << 32);
  }

  std::uint8_t u8(const char* what) {
    unsigned char b;
    raw(&b, 1, what);
    return b;
  }

  double f64(const char* what) {
    std::uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  float f32(const char* what) {
    std::uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  void expect_magic(const char (&magic)[8], const char* kind) {
    char got[8];
    raw(got, 8, "magic");
    if (std::memcmp(got, magic, 8) != 0)
      throw std::runtime_error(origin_ + ": bad magic, not a " + kind + " file");
  }

  void expect_end() {
    if (pos_ != bytes_.size())
      throw std::runtime_error(origin_ + ": trailing garbage (" +
                               std::to_string(bytes_.size() - pos_) + " extra bytes)");
  }

 private:
  std::string bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void dump(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error(path + ": write failed");
}

void put_scalar_array(std::string& out, const std::vector<double>& v, std::uint8_t code) {
  if (code == 1) {
    for (double x : v) put_f64(out, x);
  } else {
    for (double x : v) put_f32(out, static_cast<float>(x));
  }
}

void read_scalar_array(Reader& r, std::vector<double>& v, std::size_t n,
                       std::uint8_t code, const char* what) {
  v.resize(n);
  if (code == 1) {
    for (std::size_t i = 0; i < n; ++i) v[i] = r.f64(what);
  } else {
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(r.f32(what));
  }
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

Field2D DatasetContainer::input_field(std::uint32_t sample) const {
  if (sample >= samples) throw std::out_of_range("DatasetContainer: sample index");
  Field2D f(static_cast<int>(h), static_cast<int>(w), static_cast<int>(cin), Lx, Ly);
  std::size_t base = static_cast<std::size_t>(sample) * h * w * cin;
  std::copy(inputs.begin() + base, inputs.begin() + base + f.size(), f.data.begin());
  return f;
}

Field2D DatasetContainer::output_field(std::uint32_t sample) const {
  if (sample >= samples) throw std::out_of_range("DatasetContainer: sample index");
  Field2D f(static_cast<int>(h), static_cast<int>(w), static_cast<int>(cout), Lx, Ly);
  std::size_t base = static_cast<std::size_t>(sample) * h * w * cout;
  std::copy(outputs.begin() + base, outputs.begin() + base + f.size(), f.data.begin());
  return f;
}

void DatasetContainer::append_sample(const Field2D& in, const Field2D& out) {
  if (samples == 0 && inputs.empty()) {
    h = static_cast<std::uint32_t>(in.h);
    w = static_cast<std::uint32_t>(in.w);
    cin = static_cast<std::uint32_t>(in.c);
    cout = static_cast<std::uint32_t>(out.c);
    Lx = in.Lx;
    Ly = in.Ly;
  }
  if (in.h != static_cast<int>(h) || in.w != static_cast<int>(w) ||
      in.c != static_cast<int>(cin) || out.h != static_cast<int>(h) ||
      out.w != static_cast<int>(w) || out.c != static_cast<int>(cout))
    throw std::invalid_argument("DatasetContainer: sample shape mismatch");
  inputs.insert(inputs.end(), in.data.begin(), in.data.end());
  outputs.insert(outputs.end(), out.data.begin(), out.data.end());
  ++samples;
}

SampleSet DatasetContainer::slice(std::uint32_t begin, std::uint32_t end) const {
  if (begin > end || end > samples)
    throw std::out_of_range("DatasetContainer::slice: bad range");
  SampleSet set;
  set.inputs.reserve(end - begin);
  set.outputs.reserve(end - begin);
  for (std::uint32_t i = begin; i < end; ++i) {
    set.inputs.push_back(input_field(i));
    set.outputs.push_back(output_field(i));
  }
  return set;
}

void write_dataset(const std::string& path, const DatasetContainer& c) {
  if (c.scalar_code > 1)
    throw std::invalid_argument("write_dataset: unknown scalar code");
  if (c.inputs.size() != c.input_count() || c.outputs.size() != c.output_count())
    throw std::invalid_argument("write_dataset: payload size disagrees with header");
  std::string out;
  out.reserve(64 + (c.scalar_code == 1 ? 8 : 4) * (c.inputs.size() + c.outputs.size()));
  out.append(kDatasetMagic, 8);
  put_u32(out, kDatasetVersion);
  put_u32(out, c.samples);
  put_u32(out, c.h);
  put_u32(out, c.w);
  put_u32(out, c.cin);
  put_u32(out, c.cout);
  out.push_back(static_cast<char>(c.scalar_code));
  put_f64(out, c.Lx);
  put_f64(out, c.Ly);
  put_scalar_array(out, c.inputs, c.scalar_code);
  put_scalar_array(out, c.outputs, c.scalar_code);
  dump(path, out);
}

DatasetContainer read_dataset(const std::string& path) {
  Reader r(slurp(path), path);
  r.expect_magic(kDatasetMagic, "dataset");
  std::uint32_t version = r.u32("version");
  if (version != kDatasetVersion)
    throw std::runtime_error(path + ": unsupported dataset version " +
                             std::to_string(version) + " (expected " +
                             std::to_string(kDatasetVersion) + ")");
  DatasetContainer c;
  c.samples = r.u32("sample count");
  c.h = r.u32("height");
  c.w = r.u32("width");
  c.cin = r.u32("input channels");
  c.cout = r.u32("output channels");
  c.scalar_code = r.u8("scalar code");
  if (c.scalar_code > 1)
    throw std::runtime_error(path + ": unknown scalar code " +
                             std::to_string(c.scalar_code));
  c.Lx = r.f64("Lx");
  c.Ly = r.f64("Ly");
  read_scalar_array(r, c.inputs, c.input_count(), c.scalar_code, "input payload");
  read_scalar_array(r, c.outputs, c.output_count(), c.scalar_code, "output payload");
  r.expect_end();
  return c;
}

bool config_equal(const ModelConfig& a, const ModelConfig& b) {
  return a.pattern == b.pattern && a.cin == b.cin && a.cout == b.cout &&
         a.width == b.width && a.modes1 == b.modes1 && a.modes2 == b.modes2 &&
         a.dilations == b.dilations && a.conv_width == b.conv_width &&
         a.conv_ksize == b.conv_ksize && a.padding == b.padding &&
         a.ffn_hidden == b.ffn_hidden;
}

std::string serialize_model_config(const ModelConfig& cfg) {
  std::ostringstream out;
  out << "pattern=" << cfg.pattern << "\n";
  out << "cin=" << cfg.cin << "\n";
  out << "cout=" << cfg.cout << "\n";
  out << "width=" << cfg.width << "\n";
  out << "modes1=" << cfg.modes1 << "\n";
  out << "modes2=" << cfg.modes2 << "\n";
  out << "dilations=";
  for (std::size_t i = 0; i < cfg.dilations.size(); ++i) {
    if (i) out << ",";
    out << cfg.dilations[i];
  }
  out << "\n";
  out << "conv_width=" << cfg.conv_width << "\n";
  out << "conv_ksize=" << cfg.conv_ksize << "\n";
  out << "padding=" << (cfg.padding == convkernel::Pad::Zero ? "zero" : "circular") << "\n";
  out << "ffn_hidden=" << cfg.ffn_hidden << "\n";
  return std::move(out).str();
}

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected key=value, got \"" + line + "\"");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

std::map<std::string, std::string> read_kv_file(const std::string& path) {
  return parse_kv_text(slurp(path));
}

namespace {

int parse_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(value, &used);
  } catch (const std::exception&) {
    throw std::runtime_error("config key " + key + ": not an integer: \"" + value + "\"");
  }
  if (used != value.size())
    throw std::runtime_error("config key " + key + ": not an integer: \"" + value + "\"");
  return v;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) out.push_back(parse_int(key, trim(item)));
  if (out.empty())
    throw std::runtime_error("config key " + key + ": empty list");
  return out;
}

}  // namespace

ModelConfig parse_model_config(const std::map<std::string, std::string>& kv) {
  ModelConfig cfg;
  for (const auto& [key, value] : kv) {
    if (key == "pattern") cfg.pattern = value;
    else if (key == "cin") cfg.cin = parse_int(key, value);
    else if (key == "cout") cfg.cout = parse_int(key, value);
    else if (key == "width") cfg.width = parse_int(key, value);
    else if (key == "modes1") cfg.modes1 = parse_int(key, value);
    else if (key == "modes2") cfg.modes2 = parse_int(key, value);
    else if (key == "dilations") cfg.dilations = parse_int_list(key, value);
    else if (key == "conv_width") cfg.conv_width = parse_int(key, value);
    else if (key == "conv_ksize") cfg.conv_ksize = parse_int(key, value);
    else if (key == "ffn_hidden") cfg.ffn_hidden = parse_int(key, value);
    else if (key == "padding") {
      if (value == "zero") cfg.padding = convkernel::Pad::Zero;
      else if (value == "circular") cfg.padding = convkernel::Pad::Circular;
      else throw std::runtime_error("config key padding: expected zero|circular, got \"" + value + "\"");
    }
    // Unknown keys (epoch, seed, ...) ride along in the same blob; skip them.
  }
  return cfg;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::string blob = serialize_model_config(ckpt.config);
  blob += "epoch=" + std::to_string(ckpt.epoch) + "\n";
  blob += "seed=" + std::to_string(ckpt.seed) + "\n";

  std::string out;
  out.append(kCheckpointMagic, 8);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(blob.size()));
  out += blob;
  put_u64(out, ckpt.params.size());
  for (double p : ckpt.params) put_f64(out, p);
  if (ckpt.optimizer) {
    const AdamState& opt = *ckpt.optimizer;
    if (opt.m.size() != ckpt.params.size() || opt.v.size() != ckpt.params.size())
      throw std::invalid_argument("write_checkpoint: optimizer moment size mismatch");
    out.push_back(1);
    put_u64(out, static_cast<std::uint64_t>(opt.step));
    for (double m : opt.m) put_f64(out, m);
    for (double v : opt.v) put_f64(out, v);
  } else {
    out.push_back(0);
  }
  dump(path, out);
}

Checkpoint read_checkpoint(const std::string& path) {
  Reader r(slurp(path), path);
  r.expect_magic(kCheckpointMagic, "checkpoint");
  std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " +
                             std::to_string(version) + " (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  std::uint32_t blob_len = r.u32("config length");
  std::string blob = r.str(blob_len, "config text");

  Checkpoint ckpt;
  auto kv = parse_kv_text(blob);
  ckpt.config = parse_model_config(kv);
  if (auto it = kv.find("epoch"); it != kv.end()) ckpt.epoch = parse_int("epoch", it->second);
  if (auto it = kv.find("seed"); it != kv.end()) ckpt.seed = std::stoull(it->second);

  std::uint64_t count = r.u64("parameter count");
  ckpt.params.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) ckpt.params[i] = r.f64("parameters");
  std::uint8_t flag = r.u8("optimizer flag");
  if (flag == 1) {
    AdamState opt(count);
    opt.step = static_cast<long>(r.u64("optimizer step"));
    for (std::uint64_t i = 0; i < count; ++i) opt.m[i] = r.f64("first moments");
    for (std::uint64_t i = 0; i < count; ++i) opt.v[i] = r.f64("second moments");
    ckpt.optimizer = std::move(opt);
  } else if (flag != 0) {
    throw std::runtime_error(path + ": unknown optimizer flag " + std::to_string(flag));
  }
  r.expect_end();
  return ckpt;
}

Checkpoint read_checkpoint_for(const std::string& path, const ModelConfig& expected) {
  Checkpoint ckpt = read_checkpoint(path);
  if (!config_equal(ckpt.config, expected))
    throw std::runtime_error(path + ": checkpoint/config mismatch");
  if (ckpt.params.size() != count_parameters(expected, CountScope::All))
    throw std::runtime_error(path + ": checkpoint/config mismatch (parameter count)");
  return ckpt;
}

}  // namespace dcno
