#include "dcno/tape.hpp"

#include <cblas.h>

#include <algorithm>

#include "dcno/fft.hpp"
#include "dcno/rng.hpp"

namespace dcno {

// ---------------------------------------------------------------------------
// ParameterStore
// ---------------------------------------------------------------------------

int ParameterStore::add(const std::string& name, const std::vector<int>& shape) {
    if (find(name) >= 0) throw std::invalid_argument("ParameterStore: duplicate name " + name);
    std::size_t count = 1;
    for (int s : shape) {
        if (s <= 0) throw std::invalid_argument("ParameterStore: nonpositive shape entry");
        count *= static_cast<std::size_t>(s);
    }
    Entry e;
    e.name = name;
    e.shape = shape;
    e.offset = values_.size();
    e.count = count;
    entries_.push_back(std::move(e));
    values_.resize(values_.size() + count, 0.0);
    return static_cast<int>(entries_.size()) - 1;
}

int ParameterStore::find(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
        if (entries_[i].name == name) return static_cast<int>(i);
    return -1;
}

void ParameterStore::unflatten(const std::vector<double>& v) {
    if (v.size() != values_.size())
        throw std::invalid_argument("ParameterStore: flat size mismatch");
    values_ = v;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

enum class OpKind {
    Const,
    Leaf,
    Add,
    Scale,
    ChannelLinear,
    Conv2dDilated,
    Gelu,
    Fft2,
    Ifft2,
    ModeMix,
    SpectralTruncate,
    Sum,
    Mean,
    Square,
    Sqrt,
    ConcatChannels,
    SliceChannels,
};

struct Tape::Node {
    OpKind kind = OpKind::Const;
    int a = -1, b = -1;
    int param = -1, param2 = -1;
    int i0 = 0, i1 = 0;
    double alpha = 1.0;
    convkernel::Pad pad = convkernel::Pad::Zero;
    std::vector<double> mask;
};

Tape::Tape(const ParameterStore* store) : store_(store) {
    if (!store_) throw std::invalid_argument("Tape: null parameter store");
    param_grad.assign(store_->size(), 0.0);
}

Tape::~Tape() = default;
Tape::Tape(Tape&&) noexcept = default;
Tape& Tape::operator=(Tape&&) noexcept = default;

void Tape::zero_grad() { std::fill(param_grad.begin(), param_grad.end(), 0.0); }

int Tape::push(TensorVal v, Node n) {
    vals_.push_back(std::move(v));
    nodes_.push_back(std::move(n));
    return static_cast<int>(vals_.size()) - 1;
}

void Tape::check_real(int id, const char* who) const {
    if (vals_.at(id).is_complex)
        throw std::invalid_argument(std::string(who) + ": expected a real tensor");
}

void Tape::check_complex(int id, const char* who) const {
    if (!vals_.at(id).is_complex)
        throw std::invalid_argument(std::string(who) + ": expected a complex tensor");
}

int Tape::input(const Field2D& f) {
    TensorVal v;
    v.h = f.h;
    v.w = f.w;
    v.c = f.c;
    v.Lx = f.Lx;
    v.Ly = f.Ly;
    v.re = f.data;
    return push(std::move(v), Node{});
}

int Tape::input(TensorVal v) { return push(std::move(v), Node{}); }

int Tape::leaf(int param_id, int h, int w, int c, bool is_complex) {
    const auto& e = store_->entry(param_id);
    std::size_t need = static_cast<std::size_t>(h) * w * c * (is_complex ? 2 : 1);
    if (e.count != need)
        throw std::invalid_argument("tape leaf: parameter count does not match requested shape");
    TensorVal v;
    v.h = h;
    v.w = w;
    v.c = c;
    v.is_complex = is_complex;
    const double* p = store_->data(param_id);
    if (is_complex) {
        v.re.resize(need / 2);
        v.im.resize(need / 2);
        for (std::size_t i = 0; i < need / 2; ++i) {
            v.re[i] = p[2 * i];
            v.im[i] = p[2 * i + 1];
        }
    } else {
        v.re.assign(p, p + need);
    }
    Node n;
    n.kind = OpKind::Leaf;
    n.param = param_id;
    return push(std::move(v), std::move(n));
}

int Tape::add(int a, int b) {
    const TensorVal& x = vals_.at(a);
    const TensorVal& y = vals_.at(b);
    if (x.h != y.h || x.w != y.w || x.c != y.c || x.is_complex != y.is_complex)
        throw std::invalid_argument("tape add: shape mismatch");
    TensorVal out = x;
    for (std::size_t i = 0; i < out.re.size(); ++i) out.re[i] += y.re[i];
    for (std::size_t i = 0; i < out.im.size(); ++i) out.im[i] += y.im[i];
    Node n;
    n.kind = OpKind::Add;
    n.a = a;
    n.b = b;
    return push(std::move(out), std::move(n));
}

int Tape::scale(int a, double alpha) {
    TensorVal out = vals_.at(a);
    for (double& v : out.re) v *= alpha;
    for (double& v : out.im) v *= alpha;
    Node n;
    n.kind = OpKind::Scale;
    n.a = a;
    n.alpha = alpha;
    return push(std::move(out), std::move(n));
}

int Tape::scale(int a, std::vector<double> mask) {
    const TensorVal& x = vals_.at(a);
    if (mask.size() != static_cast<std::size_t>(x.h) * x.w)
        throw std::invalid_argument("tape scale: mask must have one entry per lattice site");
    TensorVal out = x;
    for (int s = 0; s < x.h * x.w; ++s)
        for (int ch = 0; ch < x.c; ++ch) {
            out.re[static_cast<std::size_t>(s) * x.c + ch] *= mask[s];
            if (x.is_complex) out.im[static_cast<std::size_t>(s) * x.c + ch] *= mask[s];
        }
    Node n;
    n.kind = OpKind::Scale;
    n.a = a;
    n.alpha = 1.0;
    n.mask = std::move(mask);
    return push(std::move(out), std::move(n));
}

int Tape::channel_linear(int x, int weight_param, int bias_param) {
    check_real(x, "channel_linear");
    const TensorVal& v = vals_.at(x);
    const auto& we = store_->entry(weight_param);
    if (we.shape.size() != 2 || we.shape[0] != v.c)
        throw std::invalid_argument("channel_linear: weight shape mismatch");
    int cout = we.shape[1];
    if (bias_param >= 0 && store_->entry(bias_param).count != static_cast<std::size_t>(cout))
        throw std::invalid_argument("channel_linear: bias shape mismatch");
    TensorVal out;
    out.h = v.h;
    out.w = v.w;
    out.c = cout;
    out.Lx = v.Lx;
    out.Ly = v.Ly;
    out.re.assign(out.count(), 0.0);
    int sites = v.h * v.w;
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, sites, cout, v.c, 1.0, v.re.data(), v.c,
                store_->data(weight_param), cout, 0.0, out.re.data(), cout);
    if (bias_param >= 0) {
        const double* b = store_->data(bias_param);
        for (int s = 0; s < sites; ++s)
            for (int ch = 0; ch < cout; ++ch) out.re[static_cast<std::size_t>(s) * cout + ch] += b[ch];
    }
    Node n;
    n.kind = OpKind::ChannelLinear;
    n.a = x;
    n.param = weight_param;
    n.param2 = bias_param;
    return push(std::move(out), std::move(n));
}

int Tape::conv2d_dilated(int x, int kernel_param, int bias_param, int ksize, int dilation,
                         convkernel::Pad pad) {
    check_real(x, "conv2d_dilated");
    const TensorVal& v = vals_.at(x);
    const auto& ke = store_->entry(kernel_param);
    if (ke.shape.size() != 4 || ke.shape[0] != ksize || ke.shape[1] != ksize || ke.shape[2] != v.c)
        throw std::invalid_argument("conv2d_dilated: kernel shape mismatch");
    int cout = ke.shape[3];
    if (bias_param >= 0 && store_->entry(bias_param).count != static_cast<std::size_t>(cout))
        throw std::invalid_argument("conv2d_dilated: bias shape mismatch");
    TensorVal out;
    out.h = v.h;
    out.w = v.w;
    out.c = cout;
    out.Lx = v.Lx;
    out.Ly = v.Ly;
    out.re.assign(out.count(), 0.0);
    convkernel::forward(v.re.data(), v.h, v.w, v.c, store_->data(kernel_param),
                        bias_param >= 0 ? store_->data(bias_param) : nullptr, cout, ksize, dilation,
                        pad, out.re.data());
    Node n;
    n.kind = OpKind::Conv2dDilated;
    n.a = x;
    n.param = kernel_param;
    n.param2 = bias_param;
    n.i0 = ksize;
    n.i1 = dilation;
    n.pad = pad;
    return push(std::move(out), std::move(n));
}

int Tape::gelu(int x) {
    check_real(x, "gelu");
    TensorVal out = vals_.at(x);
    for (double& v : out.re) v = dcno::gelu(v);
    Node n;
    n.kind = OpKind::Gelu;
    n.a = x;
    return push(std::move(out), std::move(n));
}

int Tape::fft2(int x) {
    check_real(x, "tape fft2");
    const TensorVal& v = vals_.at(x);
    TensorVal out;
    out.h = v.h;
    out.w = v.w;
    out.c = v.c;
    out.Lx = v.Lx;
    out.Ly = v.Ly;
    out.is_complex = true;
    out.re.assign(v.count(), 0.0);
    out.im.assign(v.count(), 0.0);
    std::vector<double> re(static_cast<std::size_t>(v.h) * v.w), im(re.size());
    for (int ch = 0; ch < v.c; ++ch) {
        for (std::size_t s = 0; s < re.size(); ++s) {
            re[s] = v.re[s * v.c + ch];
            im[s] = 0.0;
        }
        fftcore::transform_2d(re.data(), im.data(), v.h, v.w, false);
        for (std::size_t s = 0; s < re.size(); ++s) {
            out.re[s * v.c + ch] = re[s];
            out.im[s * v.c + ch] = im[s];
        }
    }
    Node n;
    n.kind = OpKind::Fft2;
    n.a = x;
    return push(std::move(out), std::move(n));
}

int Tape::ifft2(int x) {
    check_complex(x, "tape ifft2");
    const TensorVal& v = vals_.at(x);
    TensorVal out;
    out.h = v.h;
    out.w = v.w;
    out.c = v.c;
    out.Lx = v.Lx;
    out.Ly = v.Ly;
    out.re.assign(v.count(), 0.0);
    double scale = 1.0 / (static_cast<double>(v.h) * v.w);
    std::vector<double> re(static_cast<std::size_t>(v.h) * v.w), im(re.size());
    for (int ch = 0; ch < v.c; ++ch) {
        for (std::size_t s = 0; s < re.size(); ++s) {
            re[s] = v.re[s * v.c + ch];
            im[s] = v.im[s * v.c + ch];
        }
        fftcore::transform_2d(re.data(), im.data(), v.h, v.w, true);
        // Imaginary residue is dropped: inside the network this op is always
        // fed spectra produced with Hermitian completion.
        for (std::size_t s = 0; s < re.size(); ++s) out.re[s * v.c + ch] = re[s] * scale;
    }
    Node n;
    n.kind = OpKind::Ifft2;
    n.a = x;
    return push(std::move(out), std::move(n));
}

namespace {

// Retained-mode geometry shared by mode_mix and spectral_truncate. Low modes
// along k1 live in two corner blocks (nonnegative and negative halves); along
// k2 only the nonnegative half is kept, its negative half being determined by
// Hermitian symmetry. kmax2 may include the Nyquist column so that a
// full-band configuration can represent the identity.
struct ModeBand {
    int h, w, kmax1, kmax2;

    ModeBand(int h_, int w_, int k1_, int k2_) : h(h_), w(w_), kmax1(k1_), kmax2(k2_) {
        if (kmax1 < 1 || kmax2 < 1 || kmax1 > (h + 1) / 2 || kmax2 > w / 2 + 1)
            throw std::invalid_argument(
                "mode band: resolution below mode cutoff (kmax1 <= ceil(h/2), kmax2 <= w/2+1 "
                "required)");
    }

    // Calls fn(k1, k2, corner, a1, a2) for every retained mode, where
    // (corner, a1, a2) addresses the weight block.
    template <typename Fn>
    void for_each(Fn&& fn) const {
        int c0_end = kmax1;             // corner 0 owns k1 in [0, kmax1)
        int c1_begin = std::max(h - kmax1, c0_end); // corner 1 owns the tail
        for (int k1 = 0; k1 < c0_end; ++k1)
            for (int k2 = 0; k2 < kmax2; ++k2) fn(k1, k2, 0, k1, k2);
        for (int k1 = c1_begin; k1 < h; ++k1)
            for (int k2 = 0; k2 < kmax2; ++k2) fn(k1, k2, 1, k1 - (h - kmax1), k2);
    }

    bool retained(int k1, int k2) const {
        if (k2 >= kmax2) return false;
        return k1 < kmax1 || k1 >= std::max(h - kmax1, kmax1);
    }
};

} // namespace

int Tape::mode_mix(int x, int r_param, int kmax1, int kmax2) {
    check_complex(x, "mode_mix");
    const TensorVal& v = vals_.at(x);
    ModeBand band(v.h, v.w, kmax1, kmax2);
    const auto& re = store_->entry(r_param);
    // Weight block: [corner][a1][a2][cin][cout][re|im].
    if (re.shape.size() != 6 || re.shape[0] != 2 || re.shape[1] != kmax1 ||
        re.shape[2] != kmax2 || re.shape[3] != v.c || re.shape[5] != 2)
        throw std::invalid_argument("mode_mix: weight shape mismatch");
    int cout = re.shape[4];
    const double* R = store_->data(r_param);
    TensorVal out;
    out.h = v.h;
    out.w = v.w;
    out.c = cout;
    out.Lx = v.Lx;
    out.Ly = v.Ly;
    out.is_complex = true;
    out.re.assign(out.count(), 0.0);
    out.im.assign(out.count(), 0.0);
    int d_in = v.c;
    band.for_each([&](int k1, int k2, int corner, int a1, int a2) {
        const double* blk =
            R + ((((static_cast<std::size_t>(corner) * kmax1 + a1) * kmax2 + a2) * d_in) * cout) * 2;
        std::size_t in_base = (static_cast<std::size_t>(k1) * v.w + k2) * d_in;
        std::size_t out_base = (static_cast<std::size_t>(k1) * v.w + k2) * cout;
        for (int co = 0; co < cout; ++co) {
            double acc_r = 0.0, acc_i = 0.0;
            for (int ci = 0; ci < d_in; ++ci) {
                double xr = v.re[in_base + ci], xi = v.im[in_base + ci];
                const double* rc = blk + (static_cast<std::size_t>(ci) * cout + co) * 2;
                acc_r += xr * rc[0] - xi * rc[1];
                acc_i += xr * rc[1] + xi * rc[0];
            }
            out.re[out_base + co] = acc_r;
            out.im[out_base + co] = acc_i;
        }
        // Hermitian completion: the mirror bin, when it is not itself a
        // retained mode, carries the conjugate so a later ifft2 is real.
        int m1 = (v.h - k1) % v.h, m2 = (v.w - k2) % v.w;
        if (!band.retained(m1, m2)) {
            std::size_t mir_base = (static_cast<std::size_t>(m1) * v.w + m2) * cout;
            for (int co = 0; co < cout; ++co) {
                out.re[mir_base + co] = out.re[out_base + co];
                out.im[mir_base + co] = -out.im[out_base + co];
            }
        }
    });
    Node n;
    n.kind = OpKind::ModeMix;
    n.a = x;
    n.param = r_param;
    n.i0 = kmax1;
    n.i1 = kmax2;
    return push(std::move(out), std::move(n));
}

int Tape::spectral_truncate(int x, int kmax1, int kmax2) {
    check_complex(x, "spectral_truncate");
    const TensorVal& v = vals_.at(x);
    ModeBand band(v.h, v.w, kmax1, kmax2);
    TensorVal out = v;
    for (int k1 = 0; k1 < v.h; ++k1)
        for (int k2 = 0; k2 < v.w; ++k2) {
            int m1 = (v.h - k1) % v.h, m2 = (v.w - k2) % v.w;
            if (band.retained(k1, k2) || band.retained(m1, m2)) continue;
            std::size_t base = (static_cast<std::size_t>(k1) * v.w + k2) * v.c;
            for (int ch = 0; ch < v.c; ++ch) {
                out.re[base + ch] = 0.0;
                out.im[base + ch] = 0.0;
            }
        }
    Node n;
    n.kind = OpKind::SpectralTruncate;
    n.a = x;
    n.i0 = kmax1;
    n.i1 = kmax2;
    return push(std::move(out), std::move(n));
}

int Tape::sum(int x) {
    check_real(x, "tape sum");
    const TensorVal& v = vals_.at(x);
    double acc = 0.0;
    for (double e : v.re) acc += e;
    TensorVal out;
    out.h = out.w = out.c = 1;
    out.re.assign(1, acc);
    Node n;
    n.kind = OpKind::Sum;
    n.a = x;
    return push(std::move(out), std::move(n));
}

int Tape::mean(int x) {
    check_real(x, "tape mean");
    const TensorVal& v = vals_.at(x);
    double acc = 0.0;
    for (double e : v.re) acc += e;
    TensorVal out;
    out.h = out.w = out.c = 1;
    out.re.assign(1, acc / static_cast<double>(v.count()));
    Node n;
    n.kind = OpKind::Mean;
    n.a = x;
    return push(std::move(out), std::move(n));
}

int Tape::square(int x) {
    const TensorVal& v = vals_.at(x);
    TensorVal out;
    out.h = v.h;
    out.w = v.w;
    out.c = v.c;
    out.Lx = v.Lx;
    out.Ly = v.Ly;
    out.re.assign(v.count(), 0.0);
    if (v.is_complex) {
        for (std::size_t i = 0; i < v.re.size(); ++i)
            out.re[i] = v.re[i] * v.re[i] + v.im[i] * v.im[i];
    } else {
        for (std::size_t i = 0; i < v.re.size(); ++i) out.re[i] = v.re[i] * v.re[i];
    }
    Node n;
    n.kind = OpKind::Square;
    n.a = x;
    return push(std::move(out), std::move(n));
}

int Tape::sqrt_op(int x) {
    check_real(x, "tape sqrt");
    TensorVal out = vals_.at(x);
    for (double& v : out.re) v = std::sqrt(v);
    Node n;
    n.kind = OpKind::Sqrt;
    n.a = x;
    return push(std::move(out), std::move(n));
}

int Tape::concat_channels(int a, int b) {
    check_real(a, "concat_channels");
    check_real(b, "concat_channels");
    const TensorVal& x = vals_.at(a);
    const TensorVal& y = vals_.at(b);
    if (x.h != y.h || x.w != y.w)
        throw std::invalid_argument("concat_channels: lattice shape mismatch");
    TensorVal out;
    out.h = x.h;
    out.w = x.w;
    out.c = x.c + y.c;
    out.Lx = x.Lx;
    out.Ly = x.Ly;
    out.re.assign(out.count(), 0.0);
    int sites = x.h * x.w;
    for (int s = 0; s < sites; ++s) {
        for (int ch = 0; ch < x.c; ++ch)
            out.re[static_cast<std::size_t>(s) * out.c + ch] = x.re[static_cast<std::size_t>(s) * x.c + ch];
        for (int ch = 0; ch < y.c; ++ch)
            out.re[static_cast<std::size_t>(s) * out.c + x.c + ch] =
                y.re[static_cast<std::size_t>(s) * y.c + ch];
    }
    Node n;
    n.kind = OpKind::ConcatChannels;
    n.a = a;
    n.b = b;
    return push(std::move(out), std::move(n));
}

int Tape::slice_channels(int x, int c0, int c1) {
    check_real(x, "slice_channels");
    const TensorVal& v = vals_.at(x);
    if (c0 < 0 || c1 > v.c || c0 >= c1)
        throw std::invalid_argument("slice_channels: bad channel range");
    TensorVal out;
    out.h = v.h;
    out.w = v.w;
    out.c = c1 - c0;
    out.Lx = v.Lx;
    out.Ly = v.Ly;
    out.re.assign(out.count(), 0.0);
    int sites = v.h * v.w;
    for (int s = 0; s < sites; ++s)
        for (int ch = c0; ch < c1; ++ch)
            out.re[static_cast<std::size_t>(s) * out.c + (ch - c0)] =
                v.re[static_cast<std::size_t>(s) * v.c + ch];
    Node n;
    n.kind = OpKind::SliceChannels;
    n.a = x;
    n.i0 = c0;
    n.i1 = c1;
    return push(std::move(out), std::move(n));
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

namespace {

TensorVal zeros_like(const TensorVal& v) {
    TensorVal g;
    g.h = v.h;
    g.w = v.w;
    g.c = v.c;
    g.Lx = v.Lx;
    g.Ly = v.Ly;
    g.is_complex = v.is_complex;
    g.re.assign(v.count(), 0.0);
    if (v.is_complex) g.im.assign(v.count(), 0.0);
    return g;
}

} // namespace

void Tape::backward(int loss_id, bool release_buffers) {
    const TensorVal& loss = vals_.at(loss_id);
    if (loss.h != 1 || loss.w != 1 || loss.c != 1 || loss.is_complex)
        throw std::invalid_argument("backward: loss node must be a real scalar");

    std::vector<TensorVal> grads(vals_.size());
    std::vector<bool> live(vals_.size(), false);
    grads[loss_id] = zeros_like(loss);
    grads[loss_id].re[0] = 1.0;
    live[loss_id] = true;

    auto touch = [&](int id) -> TensorVal& {
        if (!live[id]) {
            grads[id] = zeros_like(vals_[id]);
            live[id] = true;
        }
        return grads[id];
    };

    for (int i = loss_id; i >= 0; --i) {
        if (!live[i]) continue;
        const Node& n = nodes_[i];
        const TensorVal& g = grads[i];
        switch (n.kind) {
            case OpKind::Const:
                break;
            case OpKind::Leaf: {
                double* dst = param_grad.data() + store_->entry(n.param).offset;
                if (g.is_complex) {
                    for (std::size_t k = 0; k < g.re.size(); ++k) {
                        dst[2 * k] += g.re[k];
                        dst[2 * k + 1] += g.im[k];
                    }
                } else {
                    for (std::size_t k = 0; k < g.re.size(); ++k) dst[k] += g.re[k];
                }
                break;
            }
            case OpKind::Add: {
                TensorVal& ga = touch(n.a);
                for (std::size_t k = 0; k < g.re.size(); ++k) ga.re[k] += g.re[k];
                for (std::size_t k = 0; k < g.im.size(); ++k) ga.im[k] += g.im[k];
                TensorVal& gb = touch(n.b);
                for (std::size_t k = 0; k < g.re.size(); ++k) gb.re[k] += g.re[k];
                for (std::size_t k = 0; k < g.im.size(); ++k) gb.im[k] += g.im[k];
                break;
            }
            case OpKind::Scale: {
                TensorVal& ga = touch(n.a);
                if (n.mask.empty()) {
                    for (std::size_t k = 0; k < g.re.size(); ++k) ga.re[k] += n.alpha * g.re[k];
                    for (std::size_t k = 0; k < g.im.size(); ++k) ga.im[k] += n.alpha * g.im[k];
                } else {
                    const TensorVal& x = vals_[n.a];
                    for (int s = 0; s < x.h * x.w; ++s)
                        for (int ch = 0; ch < x.c; ++ch) {
                            std::size_t k = static_cast<std::size_t>(s) * x.c + ch;
                            ga.re[k] += n.mask[s] * g.re[k];
                            if (x.is_complex) ga.im[k] += n.mask[s] * g.im[k];
                        }
                }
                break;
            }
            case OpKind::ChannelLinear: {
                const TensorVal& x = vals_[n.a];
                int sites = x.h * x.w;
                int cout = vals_[i].c;
                const auto& we = store_->entry(n.param);
                TensorVal& ga = touch(n.a);
                // dX += dY · Wᵀ
                cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, sites, x.c, cout, 1.0,
                            g.re.data(), cout, store_->data(n.param), cout, 1.0, ga.re.data(), x.c);
                // dW += Xᵀ · dY
                cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, x.c, cout, sites, 1.0,
                            x.re.data(), x.c, g.re.data(), cout, 1.0,
                            param_grad.data() + we.offset, cout);
                if (n.param2 >= 0) {
                    double* gb = param_grad.data() + store_->entry(n.param2).offset;
                    for (int s = 0; s < sites; ++s)
                        for (int ch = 0; ch < cout; ++ch)
                            gb[ch] += g.re[static_cast<std::size_t>(s) * cout + ch];
                }
                break;
            }
            case OpKind::Conv2dDilated: {
                const TensorVal& x = vals_[n.a];
                int cout = vals_[i].c;
                const auto& ke = store_->entry(n.param);
                TensorVal& ga = touch(n.a);
                convkernel::backward_input(g.re.data(), x.h, x.w, cout, store_->data(n.param), x.c,
                                           n.i0, n.i1, n.pad, ga.re.data());
                convkernel::backward_kernel(
                    x.re.data(), g.re.data(), x.h, x.w, x.c, cout, n.i0, n.i1, n.pad,
                    param_grad.data() + ke.offset,
                    n.param2 >= 0 ? param_grad.data() + store_->entry(n.param2).offset : nullptr);
                break;
            }
            case OpKind::Gelu: {
                const TensorVal& x = vals_[n.a];
                TensorVal& ga = touch(n.a);
                for (std::size_t k = 0; k < g.re.size(); ++k)
                    ga.re[k] += gelu_prime(x.re[k]) * g.re[k];
                break;
            }
            case OpKind::Fft2: {
                // x real, y = F x (unnormalized). x̄ += Re(F^H ȳ) where F^H is
                // the unnormalized inverse transform.
                const TensorVal& x = vals_[n.a];
                TensorVal& ga = touch(n.a);
                std::vector<double> re(static_cast<std::size_t>(x.h) * x.w), im(re.size());
                for (int ch = 0; ch < x.c; ++ch) {
                    for (std::size_t s = 0; s < re.size(); ++s) {
                        re[s] = g.re[s * x.c + ch];
                        im[s] = g.im[s * x.c + ch];
                    }
                    fftcore::transform_2d(re.data(), im.data(), x.h, x.w, true);
                    for (std::size_t s = 0; s < re.size(); ++s) ga.re[s * x.c + ch] += re[s];
                }
                break;
            }
            case OpKind::Ifft2: {
                // y = (1/HW)·Re(F^H x). x̄ += (1/HW)·F ȳ with ȳ real.
                const TensorVal& x = vals_[n.a];
                TensorVal& ga = touch(n.a);
                double scale = 1.0 / (static_cast<double>(x.h) * x.w);
                std::vector<double> re(static_cast<std::size_t>(x.h) * x.w), im(re.size());
                for (int ch = 0; ch < x.c; ++ch) {
                    for (std::size_t s = 0; s < re.size(); ++s) {
                        re[s] = g.re[s * x.c + ch];
                        im[s] = 0.0;
                    }
                    fftcore::transform_2d(re.data(), im.data(), x.h, x.w, false);
                    for (std::size_t s = 0; s < re.size(); ++s) {
                        ga.re[s * x.c + ch] += re[s] * scale;
                        ga.im[s * x.c + ch] += im[s] * scale;
                    }
                }
                break;
            }
            case OpKind::ModeMix: {
                const TensorVal& x = vals_[n.a];
                int d_in = x.c;
                int cout = vals_[i].c;
                int kmax1 = n.i0, kmax2 = n.i1;
                ModeBand band(x.h, x.w, kmax1, kmax2);
                const double* R = store_->data(n.param);
                double* gR = param_grad.data() + store_->entry(n.param).offset;
                TensorVal& ga = touch(n.a);
                band.for_each([&](int k1, int k2, int corner, int a1, int a2) {
                    std::size_t in_base = (static_cast<std::size_t>(k1) * x.w + k2) * d_in;
                    std::size_t out_base = (static_cast<std::size_t>(k1) * x.w + k2) * cout;
                    int m1 = (x.h - k1) % x.h, m2 = (x.w - k2) % x.w;
                    bool mirrored = !band.retained(m1, m2);
                    std::size_t mir_base = (static_cast<std::size_t>(m1) * x.w + m2) * cout;
                    const double* blk =
                        R +
                        ((((static_cast<std::size_t>(corner) * kmax1 + a1) * kmax2 + a2) * d_in) *
                         cout) *
                            2;
                    double* gblk =
                        gR +
                        ((((static_cast<std::size_t>(corner) * kmax1 + a1) * kmax2 + a2) * d_in) *
                         cout) *
                            2;
                    for (int co = 0; co < cout; ++co) {
                        // Cotangent of this retained bin plus the conjugated
                        // cotangent of its mirror (y_mirror = conj(y)).
                        double gr = g.re[out_base + co];
                        double gi = g.im[out_base + co];
                        if (mirrored) {
                            gr += g.re[mir_base + co];
                            gi -= g.im[mir_base + co];
                        }
                        for (int ci = 0; ci < d_in; ++ci) {
                            const double* rc = blk + (static_cast<std::size_t>(ci) * cout + co) * 2;
                            double* grc = gblk + (static_cast<std::size_t>(ci) * cout + co) * 2;
                            double xr = x.re[in_base + ci], xi = x.im[in_base + ci];
                            // x̄ += conj(R)·ȳ
                            ga.re[in_base + ci] += rc[0] * gr + rc[1] * gi;
                            ga.im[in_base + ci] += rc[0] * gi - rc[1] * gr;
                            // R̄ += conj(x)·ȳ
                            grc[0] += xr * gr + xi * gi;
                            grc[1] += xr * gi - xi * gr;
                        }
                    }
                });
                break;
            }
            case OpKind::SpectralTruncate: {
                const TensorVal& x = vals_[n.a];
                ModeBand band(x.h, x.w, n.i0, n.i1);
                TensorVal& ga = touch(n.a);
                for (int k1 = 0; k1 < x.h; ++k1)
                    for (int k2 = 0; k2 < x.w; ++k2) {
                        int m1 = (x.h - k1) % x.h, m2 = (x.w - k2) % x.w;
                        if (!band.retained(k1, k2) && !band.retained(m1, m2)) continue;
                        std::size_t base = (static_cast<std::size_t>(k1) * x.w + k2) * x.c;
                        for (int ch = 0; ch < x.c; ++ch) {
                            ga.re[base + ch] += g.re[base + ch];
                            ga.im[base + ch] += g.im[base + ch];
                        }
                    }
                break;
            }
            case OpKind::Sum: {
                TensorVal& ga = touch(n.a);
                for (double& v : ga.re) v += g.re[0];
                break;
            }
            case OpKind::Mean: {
                TensorVal& ga = touch(n.a);
                double s = g.re[0] / static_cast<double>(ga.count());
                for (double& v : ga.re) v += s;
                break;
            }
            case OpKind::Square: {
                const TensorVal& x = vals_[n.a];
                TensorVal& ga = touch(n.a);
                if (x.is_complex) {
                    for (std::size_t k = 0; k < x.re.size(); ++k) {
                        ga.re[k] += 2.0 * x.re[k] * g.re[k];
                        ga.im[k] += 2.0 * x.im[k] * g.re[k];
                    }
                } else {
                    for (std::size_t k = 0; k < x.re.size(); ++k) ga.re[k] += 2.0 * x.re[k] * g.re[k];
                }
                break;
            }
            case OpKind::Sqrt: {
                const TensorVal& y = vals_[i];
                TensorVal& ga = touch(n.a);
                for (std::size_t k = 0; k < y.re.size(); ++k)
                    ga.re[k] += g.re[k] / (2.0 * y.re[k]);
                break;
            }
            case OpKind::ConcatChannels: {
                const TensorVal& x = vals_[n.a];
                const TensorVal& y = vals_[n.b];
                TensorVal& ga = touch(n.a);
                TensorVal& gb = touch(n.b);
                int sites = x.h * x.w;
                int call = x.c + y.c;
                for (int s = 0; s < sites; ++s) {
                    for (int ch = 0; ch < x.c; ++ch)
                        ga.re[static_cast<std::size_t>(s) * x.c + ch] +=
                            g.re[static_cast<std::size_t>(s) * call + ch];
                    for (int ch = 0; ch < y.c; ++ch)
                        gb.re[static_cast<std::size_t>(s) * y.c + ch] +=
                            g.re[static_cast<std::size_t>(s) * call + x.c + ch];
                }
                break;
            }
            case OpKind::SliceChannels: {
                const TensorVal& x = vals_[n.a];
                TensorVal& ga = touch(n.a);
                int sites = x.h * x.w;
                int cw = n.i1 - n.i0;
                for (int s = 0; s < sites; ++s)
                    for (int ch = 0; ch < cw; ++ch)
                        ga.re[static_cast<std::size_t>(s) * x.c + n.i0 + ch] +=
                            g.re[static_cast<std::size_t>(s) * cw + ch];
                break;
            }
        }
        if (release_buffers) {
            grads[i] = TensorVal{};
            live[i] = false;
            if (i != loss_id) vals_[i] = TensorVal{};
        }
    }
}

// ---------------------------------------------------------------------------
// grad_check
// ---------------------------------------------------------------------------

double grad_check(const std::function<int(Tape&)>& build, ParameterStore& store, double h,
                  int coords_per_entry, std::uint64_t seed) {
    if (h <= 0.0) throw std::invalid_argument("grad_check: step must be positive");
    Tape tape(&store);
    int loss = build(tape);
    tape.backward(loss, false);
    std::vector<double> analytic = tape.param_grad;

    auto loss_at = [&]() {
        Tape t(&store);
        int id = build(t);
        return t.val(id).re[0];
    };

    Rng rng(derive_seed(seed, 0xB0C4));
    double worst = 0.0;
    for (int e = 0; e < store.num_entries(); ++e) {
        const auto& entry = store.entry(e);
        // The coordinate with the largest analytic gradient plus a few random
        // ones; the top pick keeps the relative-error metric away from the
        // noise floor of near-zero gradients.
        std::vector<std::size_t> picks;
        std::size_t best = 0;
        for (std::size_t k = 1; k < entry.count; ++k)
            if (std::abs(analytic[entry.offset + k]) > std::abs(analytic[entry.offset + best]))
                best = k;
        picks.push_back(best);
        for (int k = 1; k < coords_per_entry; ++k)
            picks.push_back(static_cast<std::size_t>(rng.uniform_index(entry.count)));
        for (std::size_t k : picks) {
            std::size_t idx = entry.offset + k;
            double orig = store.flat()[idx];
            store.flat()[idx] = orig + h;
            double lp = loss_at();
            store.flat()[idx] = orig - h;
            double lm = loss_at();
            store.flat()[idx] = orig;
            double fd = (lp - lm) / (2.0 * h);
            double a = analytic[idx];
            double err = std::abs(a - fd) / (std::abs(a) + std::abs(fd) + 1e-12);
            worst = std::max(worst, err);
        }
    }
    return worst;
}

} // namespace dcno
