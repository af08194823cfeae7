#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcno/model.hpp"
#include "dcno/train.hpp"

namespace dcno {

// In-memory form of the on-disk dataset: header fields plus flat row-major
// payloads, doubles in memory regardless of the persisted scalar width.
struct DatasetContainer {
  std::uint32_t samples = 0;
  std::uint32_t h = 0, w = 0;
  std::uint32_t cin = 1, cout = 1;
  std::uint8_t scalar_code = 1;  // 0 = f32 on disk, 1 = f64
  double Lx = 1.0, Ly = 1.0;
  std::vector<double> inputs;   // [samples][h][w][cin]
  std::vector<double> outputs;  // [samples][h][w][cout]

  std::size_t input_count() const {
    return static_cast<std::size_t>(samples) * h * w * cin;
  }
  std::size_t output_count() const {
    return static_cast<std::size_t>(samples) * h * w * cout;
  }
  Field2D input_field(std::uint32_t sample) const;
  Field2D output_field(std::uint32_t sample) const;
  void append_sample(const Field2D& in, const Field2D& out);

  // Half-open sample range as training-ready pairs.
  SampleSet slice(std::uint32_t begin, std::uint32_t end) const;
};

void write_dataset(const std::string& path, const DatasetContainer& c);
DatasetContainer read_dataset(const std::string& path);

struct Checkpoint {
  ModelConfig config;
  std::vector<double> params;
  int epoch = -1;
  std::uint64_t seed = 0;
  std::optional<AdamState> optimizer;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

// Loads a checkpoint and rejects it when its stored config differs from
// `expected` in any field ("checkpoint/config mismatch").
Checkpoint read_checkpoint_for(const std::string& path, const ModelConfig& expected);

bool config_equal(const ModelConfig& a, const ModelConfig& b);

// key=value text with '#' comments; later keys override earlier ones.
std::map<std::string, std::string> parse_kv_text(const std::string& text);
std::map<std::string, std::string> read_kv_file(const std::string& path);

std::string serialize_model_config(const ModelConfig& cfg);
ModelConfig parse_model_config(const std::map<std::string, std::string>& kv);

}  // namespace dcno
