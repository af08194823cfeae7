#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dcno/conv.hpp"
#include "dcno/field.hpp"

namespace dcno {

// All trainable weights, flat and contiguous, in a registration order that is
// a pure function of the model configuration. Complex-valued blocks store
// re/im pairs innermost and account for both in their flat count.
class ParameterStore {
public:
    struct Entry {
        std::string name;
        std::vector<int> shape;
        std::size_t offset = 0;
        std::size_t count = 0;
    };

    int add(const std::string& name, const std::vector<int>& shape);
    int find(const std::string& name) const; // -1 when absent

    int num_entries() const { return static_cast<int>(entries_.size()); }
    const Entry& entry(int id) const { return entries_.at(id); }
    double* data(int id) { return values_.data() + entries_.at(id).offset; }
    const double* data(int id) const { return values_.data() + entries_.at(id).offset; }

    std::size_t size() const { return values_.size(); }
    double* flat() { return values_.data(); }
    const double* flat() const { return values_.data(); }

    std::vector<double> flatten() const { return values_; }
    void unflatten(const std::vector<double>& v);

private:
    std::vector<Entry> entries_;
    std::vector<double> values_;
};

// A tensor value living on the tape: real (im empty) or complex (split
// planes), with lattice metadata carried through every op.
struct TensorVal {
    int h = 0, w = 0, c = 1;
    bool is_complex = false;
    double Lx = 1.0, Ly = 1.0;
    std::vector<double> re, im;

    std::size_t count() const { return static_cast<std::size_t>(h) * w * c; }
};

// Reverse-mode tape over the primitive set the model needs. Forward values
// are computed eagerly at record time; backward() accumulates parameter
// gradients into `param_grad` in tape order (deterministic). Non-parameter
// inputs are constants and receive no gradient; anything that must be
// differentiated goes through the ParameterStore.
class Tape {
public:
    explicit Tape(const ParameterStore* store);
    ~Tape();
    Tape(Tape&&) noexcept;
    Tape& operator=(Tape&&) noexcept;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // --- constants and leaves ---
    int input(const Field2D& f);
    int input(TensorVal v);
    // Reads a parameter entry onto the tape as a differentiable tensor
    // (h·w·c values, or h·w·c re/im pairs when is_complex). The model's own
    // layers consume parameters through dedicated primitives; this leaf view
    // serves programs that differentiate with respect to a tensor directly.
    int leaf(int param_id, int h, int w, int c, bool is_complex = false);

    // --- primitives ---
    int add(int a, int b);
    int scale(int a, double alpha);                    // y = alpha * x
    int scale(int a, std::vector<double> mask);        // y = mask(site) * x, mask constant
    int channel_linear(int x, int weight_param, int bias_param = -1);
    int conv2d_dilated(int x, int kernel_param, int bias_param, int ksize, int dilation,
                       convkernel::Pad pad);
    int gelu(int x);
    int fft2(int x);   // real -> complex, unnormalized forward
    int ifft2(int x);  // complex -> real, 1/(H·W), imaginary part discarded
    int mode_mix(int x, int r_param, int kmax1, int kmax2);
    int spectral_truncate(int x, int kmax1, int kmax2);
    int sum(int x);    // real -> scalar
    int mean(int x);   // real -> scalar
    int square(int x); // real: x², complex: |z|² (real output)
    int sqrt_op(int x);
    int concat_channels(int a, int b);
    int slice_channels(int x, int c0, int c1); // half-open channel range

    const TensorVal& val(int id) const { return vals_.at(id); }
    int num_nodes() const { return static_cast<int>(vals_.size()); }

    // Scalar loss only. Accumulates into param_grad; frees intermediate
    // values as the sweep retires them, so a tape is good for one backward
    // pass (call zero_grad() and rebuild for another exact sweep, or use
    // backward(loss, false) to keep values).
    void backward(int loss_id, bool release_buffers = true);
    void zero_grad();

    const ParameterStore* store() const { return store_; }
    std::vector<double> param_grad;

private:
    struct Node;
    int push(TensorVal v, Node n);
    void check_real(int id, const char* who) const;
    void check_complex(int id, const char* who) const;

    const ParameterStore* store_;
    std::vector<TensorVal> vals_;
    std::vector<Node> nodes_;
};

// Max over a deterministic subsample of parameter coordinates of
// |analytic - central_difference| / (|analytic| + |central| + 1e-12).
// `build` records the program on a fresh tape and returns the loss node.
double grad_check(const std::function<int(Tape&)>& build, ParameterStore& store, double h = 1e-5,
                  int coords_per_entry = 3, std::uint64_t seed = 0);

} // namespace dcno
