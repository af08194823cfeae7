#include "dcno/model.hpp"

#include <cmath>
#include <stdexcept>

namespace dcno {

namespace {

void validate(const ModelConfig& cfg) {
    if (cfg.pattern.empty())
        throw std::invalid_argument("model pattern: empty");
    for (char ch : cfg.pattern)
        if (ch != 'F' && ch != 'C')
            throw std::invalid_argument(std::string("model pattern: invalid character '") + ch + "'");
    if (cfg.cin < 1 || cfg.cout < 1 || cfg.width < 1 || cfg.conv_width < 1 ||
        cfg.ffn_hidden < 1)
        throw std::invalid_argument("model config: channel counts must be positive");
    if (cfg.modes1 < 1 || cfg.modes2 < 1)
        throw std::invalid_argument("model config: kept mode counts must be positive");
    if (cfg.conv_ksize < 1 || cfg.conv_ksize % 2 == 0)
        throw std::invalid_argument("model config: conv kernel size must be odd");
    if (cfg.dilations.empty())
        throw std::invalid_argument("model config: dilation tuple empty");
    for (int d : cfg.dilations)
        if (d < 1) throw std::invalid_argument("model config: dilation entries must be >= 1");
}

std::size_t conv_params(int k, int cin, int cout) {
    return static_cast<std::size_t>(k) * k * cin * cout + cout;
}

std::size_t linear_params(int cin, int cout) {
    return static_cast<std::size_t>(cin) * cout + cout;
}

std::size_t f_layer_params(const ModelConfig& cfg) {
    std::size_t d = cfg.width;
    return 2ull * cfg.modes1 * cfg.modes2 * d * d * 2 + d * d + d;
}

// One C layer: per dilation entry, one block of three conv+GELU units at the
// fixed conv width, plus 1x1 channel adapters on both sides when the
// processor width differs from the conv width.
std::size_t c_layer_params(const ModelConfig& cfg, bool with_adapters) {
    std::size_t per_block =
        3 * conv_params(cfg.conv_ksize, cfg.conv_width, cfg.conv_width);
    std::size_t total = cfg.dilations.size() * per_block;
    if (with_adapters && cfg.width != cfg.conv_width)
        total += linear_params(cfg.width, cfg.conv_width) +
                 linear_params(cfg.conv_width, cfg.width);
    return total;
}

}  // namespace

std::size_t count_parameters(const ModelConfig& cfg, CountScope scope) {
    validate(cfg);
    if (scope == CountScope::CLayersOnly)
        return c_layer_params(cfg, /*with_adapters=*/false);

    std::size_t total = 0;
    total += conv_params(3, cfg.cin + 2, cfg.width);  // encoder unit 0
    total += conv_params(3, cfg.width, cfg.width);    // encoder unit 1
    for (char ch : cfg.pattern)
        total += (ch == 'F') ? f_layer_params(cfg) : c_layer_params(cfg, true);
    total += 2 * f_layer_params(cfg);  // decoder F pair
    total += linear_params(cfg.width, cfg.ffn_hidden);
    total += linear_params(cfg.ffn_hidden, cfg.ffn_hidden);
    total += linear_params(cfg.ffn_hidden, cfg.cout);
    return total;
}

Model Model::build(const ModelConfig& cfg, ParameterStore& store,
                   std::uint64_t seed) {
    validate(cfg);
    Rng rng(seed);
    std::size_t size_before = store.size();

    // Kernels draw uniform +-1/sqrt(fan_in); biases stay zero and consume no
    // draws, so the stream position depends only on the architecture.
    auto reg_conv = [&](const std::string& name, int k, int ci, int co) {
        int id = store.add(name + ".k", {k, k, ci, co});
        store.add(name + ".b", {co});
        double bound = 1.0 / std::sqrt(static_cast<double>(k) * k * ci);
        double* p = store.data(id);
        std::size_t n = static_cast<std::size_t>(k) * k * ci * co;
        for (std::size_t i = 0; i < n; ++i) p[i] = rng.uniform(-bound, bound);
    };
    auto reg_linear = [&](const std::string& name, int ci, int co) {
        int id = store.add(name + ".w", {ci, co});
        store.add(name + ".b", {co});
        double bound = 1.0 / std::sqrt(static_cast<double>(ci));
        double* p = store.data(id);
        std::size_t n = static_cast<std::size_t>(ci) * co;
        for (std::size_t i = 0; i < n; ++i) p[i] = rng.uniform(-bound, bound);
    };
    auto reg_spectral = [&](const std::string& name) {
        int d = cfg.width;
        int id = store.add(name + ".r", {2, cfg.modes1, cfg.modes2, d, d, 2});
        double scale = 1.0 / (static_cast<double>(d) * d);
        double* p = store.data(id);
        std::size_t n = 2ull * cfg.modes1 * cfg.modes2 * d * d * 2;
        for (std::size_t i = 0; i < n; ++i) p[i] = rng.normal() * scale;
        reg_linear(name, d, d);
    };

    reg_conv("enc.conv0", 3, cfg.cin + 2, cfg.width);
    reg_conv("enc.conv1", 3, cfg.width, cfg.width);
    for (std::size_t i = 0; i < cfg.pattern.size(); ++i) {
        std::string base = "proc." + std::to_string(i);
        if (cfg.pattern[i] == 'F') {
            reg_spectral(base);
        } else {
            bool adapt = cfg.width != cfg.conv_width;
            if (adapt) reg_linear(base + ".in", cfg.width, cfg.conv_width);
            for (std::size_t j = 0; j < cfg.dilations.size(); ++j)
                for (int u = 0; u < 3; ++u)
                    reg_conv(base + ".blk" + std::to_string(j) + ".unit" + std::to_string(u),
                             cfg.conv_ksize, cfg.conv_width, cfg.conv_width);
            if (adapt) reg_linear(base + ".out", cfg.conv_width, cfg.width);
        }
    }
    reg_spectral("dec.f0");
    reg_spectral("dec.f1");
    reg_linear("dec.ffn0", cfg.width, cfg.ffn_hidden);
    reg_linear("dec.ffn1", cfg.ffn_hidden, cfg.ffn_hidden);
    reg_linear("dec.ffn2", cfg.ffn_hidden, cfg.cout);

    if (store.size() - size_before != count_parameters(cfg, CountScope::All))
        throw std::logic_error("model build: registration disagrees with count_parameters");
    return Model(cfg, store);
}

Model Model::attach(const ModelConfig& cfg, ParameterStore& store) {
    validate(cfg);
    return Model(cfg, store);
}

int Model::pid(const std::string& name) const {
    int id = store_->find(name);
    if (id < 0) throw std::logic_error("model: missing parameter " + name);
    return id;
}

Lattice Model::coordinate_lattice() const {
    return cfg_.padding == convkernel::Pad::Circular ? Lattice::VertexPeriodic
                                                     : Lattice::VertexClosed;
}

int Model::encoder(Tape& t, int x) const {
    const TensorVal& v = t.val(x);
    Field2D coords(v.h, v.w, 2, v.Lx, v.Ly);
    Lattice lat = coordinate_lattice();
    for (int i = 0; i < v.h; ++i)
        for (int j = 0; j < v.w; ++j) {
            coords.at(i, j, 0) = lattice_coord(lat, i, v.h, 1.0);
            coords.at(i, j, 1) = lattice_coord(lat, j, v.w, 1.0);
        }
    int cat = t.concat_channels(x, t.input(coords));
    int h0 = t.gelu(t.conv2d_dilated(cat, pid("enc.conv0.k"), pid("enc.conv0.b"), 3, 1,
                                     cfg_.padding));
    return t.conv2d_dilated(h0, pid("enc.conv1.k"), pid("enc.conv1.b"), 3, 1, cfg_.padding);
}

int Model::spectral_layer(Tape& t, int v, int layer, bool activate) const {
    std::string base = layer >= 0 ? "proc." + std::to_string(layer)
                                  : (layer == -1 ? "dec.f0" : "dec.f1");
    int mixed = t.ifft2(t.mode_mix(t.fft2(v), pid(base + ".r"), cfg_.modes1, cfg_.modes2));
    int linear = t.channel_linear(v, pid(base + ".w"), pid(base + ".b"));
    int out = t.add(mixed, linear);
    return activate ? t.gelu(out) : out;
}

int Model::conv_unit(Tape& t, int v, const std::string& prefix, int dilation,
                     bool activate) const {
    int y = t.conv2d_dilated(v, pid(prefix + ".k"), pid(prefix + ".b"), cfg_.conv_ksize,
                             dilation, cfg_.padding);
    return activate ? t.gelu(y) : y;
}

int Model::conv_layer(Tape& t, int v, int layer) const {
    std::string base = "proc." + std::to_string(layer);
    bool adapt = cfg_.width != cfg_.conv_width;
    int u = adapt ? t.channel_linear(v, pid(base + ".in.w"), pid(base + ".in.b")) : v;
    int g = u;
    for (std::size_t j = 0; j < cfg_.dilations.size(); ++j) {
        std::string blk = base + ".blk" + std::to_string(j) + ".unit";
        for (int k = 0; k < 3; ++k)
            g = conv_unit(t, g, blk + std::to_string(k), cfg_.dilations[j], true);
    }
    int res = t.add(u, g);
    return adapt ? t.channel_linear(res, pid(base + ".out.w"), pid(base + ".out.b")) : res;
}

int Model::decoder(Tape& t, int v) const {
    int f0 = spectral_layer(t, v, -1, true);
    int f1 = spectral_layer(t, f0, -2, false);
    int h0 = t.gelu(t.channel_linear(f1, pid("dec.ffn0.w"), pid("dec.ffn0.b")));
    int h1 = t.gelu(t.channel_linear(h0, pid("dec.ffn1.w"), pid("dec.ffn1.b")));
    return t.channel_linear(h1, pid("dec.ffn2.w"), pid("dec.ffn2.b"));
}

int Model::forward(Tape& t, int x) const {
    int v = encoder(t, x);
    for (std::size_t i = 0; i < cfg_.pattern.size(); ++i)
        v = cfg_.pattern[i] == 'F' ? spectral_layer(t, v, static_cast<int>(i), true)
                                   : conv_layer(t, v, static_cast<int>(i));
    return decoder(t, v);
}

Field2D Model::apply(const Field2D& x) const {
    Tape t(store_);
    int y = forward(t, t.input(x));
    const TensorVal& out = t.val(y);
    Field2D f(out.h, out.w, out.c, out.Lx, out.Ly);
    f.data = out.re;
    return f;
}

}  // namespace dcno
