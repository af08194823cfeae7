#pragma once

#include <string>
#include <vector>

#include "dcno/conv.hpp"
#include "dcno/field.hpp"
#include "dcno/rng.hpp"
#include "dcno/tape.hpp"

namespace dcno {

struct ModelConfig {
  std::string pattern = "FCFCFCF";  // 'F' spectral layer, 'C' dilated conv layer
  int cin = 1;
  int cout = 1;
  int width = 32;             // channel count d between encoder and decoder
  int modes1 = 12;            // retained modes along y in spectral layers
  int modes2 = 12;            // retained modes along x
  std::vector<int> dilations = {1, 3, 9, 3, 1};
  int conv_width = 32;        // channel count inside conv layers
  int conv_ksize = 3;
  convkernel::Pad padding = convkernel::Pad::Zero;
  int ffn_hidden = 128;
};

enum class CountScope { All, CLayersOnly };

// Closed-form parameter count for a config; must match Model::build exactly.
std::size_t count_parameters(const ModelConfig& cfg, CountScope scope);

// DCNO network: encoder, interleaved spectral ('F') and dilated conv ('C')
// layers per the pattern string, then a two-F decoder head with a pointwise
// FFN. Parameters live in an external ParameterStore so the same weights can
// be re-bound to tapes over and over during training.
class Model {
 public:
  // Registers every parameter tensor in a fixed order and initializes them
  // from a single seeded stream, so identical (cfg, seed) gives bit-identical
  // weights. The store must outlive the model.
  static Model build(const ModelConfig& cfg, ParameterStore& store,
                     std::uint64_t seed);

  // Binds an already-populated store whose entries were registered by an
  // earlier build with the same config (e.g. after checkpoint load).
  static Model attach(const ModelConfig& cfg, ParameterStore& store);

  const ModelConfig& config() const { return cfg_; }

  // Stage graphs. Each takes node ids on the given tape and returns the id
  // of the stage output.
  int encoder(Tape& t, int x) const;
  int spectral_layer(Tape& t, int v, int layer, bool activate) const;
  int conv_layer(Tape& t, int v, int layer) const;
  int decoder(Tape& t, int v) const;

  // Full network: x is a tape node holding an [h][w][cin] field.
  int forward(Tape& t, int x) const;

  // Convenience evaluation on a concrete input field.
  Field2D apply(const Field2D& x) const;

 private:
  Model(const ModelConfig& cfg, ParameterStore& store)
      : cfg_(cfg), store_(&store) {}

  int conv_unit(Tape& t, int v, const std::string& prefix, int dilation,
                bool activate) const;
  int pid(const std::string& name) const;
  Lattice coordinate_lattice() const;

  ModelConfig cfg_;
  ParameterStore* store_;
};

}  // namespace dcno
