#include <doctest.h>

#include <cstring>

#include "dcno/rng.hpp"
#include "dcno/tape.hpp"

using namespace dcno;

namespace {

int add_random_param(ParameterStore& store, const std::string& name, const std::vector<int>& shape,
                     std::uint64_t seed) {
    int id = store.add(name, shape);
    Rng rng(seed);
    double* p = store.data(id);
    for (std::size_t i = 0; i < store.entry(id).count; ++i) p[i] = rng.normal();
    return id;
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Inner product ⟨y̅, out⟩ assembled from linear primitives only, so a
// grad sweep through it exercises exactly the op under test. Real tensors.
int weighted_sum(Tape& t, int out, const std::vector<double>& ybar) {
    // dims copied up front: recording ops reallocates the tape's value table
    const int oh = t.val(out).h, ow = t.val(out).w, oc = t.val(out).c;
    int total = -1;
    for (int ch = 0; ch < oc; ++ch) {
        std::vector<double> m(static_cast<std::size_t>(oh) * ow);
        for (int s = 0; s < oh * ow; ++s) m[s] = ybar[static_cast<std::size_t>(s) * oc + ch];
        int part = t.sum(t.scale(t.slice_channels(out, ch, ch + 1), std::move(m)));
        total = total < 0 ? part : t.add(total, part);
    }
    return total;
}

// VJP identity for a primitive whose input is the leaf of `store`:
// ⟨J^T y̅, x̃⟩ from one backward sweep vs ⟨y̅, J x̃⟩ from a central difference
// through the forward map. `apply` records the op; out must be real.
double vjp_gap(ParameterStore& store, int px, int h, int w, int c, bool complex_leaf,
               const std::function<int(Tape&, int)>& apply, std::uint64_t seed) {
    std::size_t n = store.entry(px).count;
    std::vector<double> xt = random_vec(n, seed);
    auto out_vec = [&](Tape& t, int out) {
        const TensorVal& v = t.val(out);
        std::vector<double> flat = v.re;
        return flat;
    };
    Tape probe(&store);
    int out0 = apply(probe, probe.leaf(px, h, w, c, complex_leaf));
    std::vector<double> ybar = random_vec(probe.val(out0).count(), seed ^ 0x5DEECE66D);

    // lhs: one backward sweep of ⟨y̅, f(x)⟩.
    Tape t(&store);
    int loss = weighted_sum(t, apply(t, t.leaf(px, h, w, c, complex_leaf)), ybar);
    t.backward(loss);
    std::vector<double> jty(t.param_grad.begin() + store.entry(px).offset,
                            t.param_grad.begin() + store.entry(px).offset + n);
    double lhs = dot(jty, xt);

    // rhs: ⟨y̅, J x̃⟩ by central difference through the primitive.
    double eps = 1e-6;
    std::vector<double> base(store.data(px), store.data(px) + n);
    for (std::size_t i = 0; i < n; ++i) store.data(px)[i] = base[i] + eps * xt[i];
    Tape tp(&store);
    std::vector<double> fp = out_vec(tp, apply(tp, tp.leaf(px, h, w, c, complex_leaf)));
    for (std::size_t i = 0; i < n; ++i) store.data(px)[i] = base[i] - eps * xt[i];
    Tape tm(&store);
    std::vector<double> fm = out_vec(tm, apply(tm, tm.leaf(px, h, w, c, complex_leaf)));
    for (std::size_t i = 0; i < n; ++i) store.data(px)[i] = base[i];
    double rhs = 0.0;
    for (std::size_t i = 0; i < fp.size(); ++i) rhs += ybar[i] * (fp[i] - fm[i]) / (2.0 * eps);

    return std::abs(lhs - rhs) / (std::abs(lhs) + std::abs(rhs) + 1e-12);
}

} // namespace

TEST_CASE("forward values of basic primitives") {
    ParameterStore store;
    int px = add_random_param(store, "x", {4, 4, 2}, 1);
    Tape t(&store);
    int x = t.leaf(px, 4, 4, 2);

    SUBCASE("add(x, x) doubles") {
        int y = t.add(x, x);
        for (std::size_t i = 0; i < t.val(x).re.size(); ++i)
            CHECK(t.val(y).re[i] == doctest::Approx(2.0 * t.val(x).re[i]));
    }
    SUBCASE("gelu(0) = 0") {
        Field2D z(4, 4, 2);
        int y = t.gelu(t.input(z));
        for (double v : t.val(y).re) CHECK(v == 0.0);
    }
    SUBCASE("channel_linear with identity matrix is the identity") {
        int pw = store.add("w_id", {2, 2});
        store.data(pw)[0] = 1.0;
        store.data(pw)[3] = 1.0;
        Tape t2(&store);
        int x2 = t2.leaf(px, 4, 4, 2);
        int y = t2.channel_linear(x2, pw);
        for (std::size_t i = 0; i < t2.val(x2).re.size(); ++i)
            CHECK(t2.val(y).re[i] == doctest::Approx(t2.val(x2).re[i]));
    }
    SUBCASE("square of a complex tensor is |z|^2") {
        int s = t.fft2(x);
        int q = t.square(s);
        CHECK(!t.val(q).is_complex);
        for (std::size_t i = 0; i < t.val(q).re.size(); ++i)
            CHECK(t.val(q).re[i] ==
                  doctest::Approx(t.val(s).re[i] * t.val(s).re[i] + t.val(s).im[i] * t.val(s).im[i]));
    }
}

TEST_CASE("backward of sum is all-ones") {
    ParameterStore store;
    int px = add_random_param(store, "x", {3, 5, 2}, 2);
    Tape t(&store);
    int loss = t.sum(t.leaf(px, 3, 5, 2));
    t.backward(loss);
    for (std::size_t i = 0; i < store.entry(px).count; ++i) CHECK(t.param_grad[i] == 1.0);
}

TEST_CASE("GELU derivative at zero is exactly one half") {
    CHECK(gelu_prime(0.0) == 0.5);
    ParameterStore store;
    int px = store.add("x", {1, 1, 1});
    store.data(px)[0] = 0.0;
    Tape t(&store);
    int loss = t.sum(t.gelu(t.leaf(px, 1, 1, 1)));
    t.backward(loss);
    CHECK(t.param_grad[0] == 0.5);
}

TEST_CASE("conv2d_dilated gradient matches central finite differences") {
    // Random 1-channel 8x8 input, 3x3 kernel, dilation 3, both paddings.
    for (auto pad : {convkernel::Pad::Zero, convkernel::Pad::Circular}) {
        ParameterStore store;
        int px = add_random_param(store, "x", {8, 8, 1}, 10);
        int pk = add_random_param(store, "k", {3, 3, 1, 2}, 11);
        int pb = add_random_param(store, "b", {2}, 12);
        auto build = [&](Tape& t) {
            int x = t.leaf(px, 8, 8, 1);
            int y = t.conv2d_dilated(x, pk, pb, 3, 3, pad);
            // A curved functional so kernel and input gradients are nontrivial.
            return t.sum(t.square(y));
        };
        CHECK(grad_check(build, store, 1e-6, 4, 99) < 1e-6);
    }
}

TEST_CASE("vector-Jacobian consistency for every primitive") {
    // Real-output primitives: literal ⟨J^T y̅, x̃⟩ = ⟨y̅, J x̃⟩.
    auto run_real = [&](const char* name, int h, int w, int c, bool cplx,
                        std::function<int(Tape&, int)> apply, std::uint64_t seed,
                        std::function<void(ParameterStore&)> extra = {}) {
        CAPTURE(name);
        ParameterStore store;
        int px = add_random_param(store, "x", {h, w, c * (cplx ? 2 : 1)}, seed);
        if (extra) extra(store);
        CHECK(vjp_gap(store, px, h, w, c, cplx, apply, seed ^ 0xABC) < 1e-8);
    };

    run_real("add", 6, 6, 2, false, [](Tape& t, int x) { return t.add(x, t.scale(x, 0.7)); }, 21);
    run_real("scale", 6, 6, 2, false, [](Tape& t, int x) { return t.scale(x, -1.3); }, 22);
    run_real("scale_mask", 5, 7, 2, false,
             [](Tape& t, int x) { return t.scale(x, random_vec(35, 4)); }, 23);
    run_real("gelu", 6, 6, 1, false, [](Tape& t, int x) { return t.gelu(x); }, 24);
    run_real("square", 6, 6, 1, false, [](Tape& t, int x) { return t.square(x); }, 25);
    run_real("sqrt", 4, 4, 1, false,
             [](Tape& t, int x) { return t.sqrt_op(t.add(t.square(x), t.input(Field2D(4, 4, 1)))); },
             26);
    run_real("concat+slice", 6, 6, 2, false,
             [](Tape& t, int x) {
                 int both = t.concat_channels(x, t.gelu(x));
                 return t.slice_channels(both, 1, 3);
             },
             27);
    run_real("channel_linear", 6, 6, 3, false,
             [](Tape& t, int x) { return t.channel_linear(x, t.store()->find("w"), t.store()->find("bb")); },
             28, [](ParameterStore& s) {
                 add_random_param(s, "w", {3, 4}, 55);
                 add_random_param(s, "bb", {4}, 56);
             });
    run_real("conv2d_dilated", 8, 8, 2, false,
             [](Tape& t, int x) {
                 return t.conv2d_dilated(x, t.store()->find("k"), -1, 3, 2,
                                         convkernel::Pad::Circular);
             },
             29, [](ParameterStore& s) { add_random_param(s, "k", {3, 3, 2, 3}, 57); });
    run_real("fft2+ifft2", 8, 8, 2, false, [](Tape& t, int x) { return t.ifft2(t.fft2(x)); }, 30);
    run_real("spectral_truncate", 8, 8, 1, false,
             [](Tape& t, int x) { return t.ifft2(t.spectral_truncate(t.fft2(x), 3, 3)); }, 31);
    run_real("mode_mix", 8, 8, 2, false,
             [](Tape& t, int x) {
                 return t.ifft2(t.mode_mix(t.fft2(x), t.store()->find("r"), 3, 3));
             },
             32, [](ParameterStore& s) { add_random_param(s, "r", {2, 3, 3, 2, 2, 2}, 58); });
    // Complex leaf: differentiates with respect to re/im planes directly.
    run_real("complex leaf through mode_mix", 8, 8, 2, true,
             [](Tape& t, int x) {
                 return t.ifft2(t.mode_mix(x, t.store()->find("r"), 2, 2));
             },
             33, [](ParameterStore& s) { add_random_param(s, "r", {2, 2, 2, 2, 2, 2}, 59); });
}

TEST_CASE("mode_mix parameter gradients pass a finite-difference check") {
    ParameterStore store;
    int px = add_random_param(store, "x", {8, 8, 2}, 40);
    int pr = add_random_param(store, "r", {2, 3, 4, 2, 2, 2}, 41);
    (void)pr;
    auto build = [&](Tape& t) {
        int x = t.leaf(px, 8, 8, 2);
        int y = t.ifft2(t.mode_mix(t.fft2(x), t.store()->find("r"), 3, 4));
        return t.sum(t.square(y));
    };
    CHECK(grad_check(build, store, 1e-5, 6, 77) < 1e-7);
}

TEST_CASE("grad_check on a linear program is exact to round-off") {
    ParameterStore store;
    add_random_param(store, "x", {4, 4, 1}, 50);
    auto build = [&](Tape& t) {
        int x = t.leaf(t.store()->find("x"), 4, 4, 1);
        return t.mean(t.scale(t.add(x, x), 2.5));
    };
    CHECK(grad_check(build, store, 1e-5, 4, 1) < 1e-9);
}

TEST_CASE("grad_check on a spectral-layer-shaped program") {
    ParameterStore store;
    add_random_param(store, "x", {16, 16, 4}, 60);
    add_random_param(store, "r", {2, 4, 4, 4, 4, 2}, 61);
    add_random_param(store, "w", {4, 4}, 62);
    add_random_param(store, "b", {4}, 63);
    auto build = [&](Tape& t) {
        int x = t.leaf(t.store()->find("x"), 16, 16, 4);
        int spec = t.ifft2(t.mode_mix(t.fft2(x), t.store()->find("r"), 4, 4));
        int lin = t.channel_linear(x, t.store()->find("w"), t.store()->find("b"));
        int y = t.gelu(t.add(spec, lin));
        return t.sum(t.square(y));
    };
    CHECK(grad_check(build, store, 1e-5, 4, 7) < 1e-5);
}

TEST_CASE("backward is linear in the loss") {
    ParameterStore store;
    add_random_param(store, "x", {6, 6, 1}, 70);
    double alpha = 1.7, beta = -0.6;
    auto l1 = [&](Tape& t) { return t.sum(t.square(t.leaf(0, 6, 6, 1))); };
    auto l2 = [&](Tape& t) { return t.sum(t.gelu(t.leaf(0, 6, 6, 1))); };

    Tape ta(&store);
    ta.backward(l1(ta));
    Tape tb(&store);
    tb.backward(l2(tb));
    Tape tc(&store);
    tc.backward(tc.add(tc.scale(l1(tc), alpha), tc.scale(l2(tc), beta)));

    for (std::size_t i = 0; i < store.size(); ++i)
        CHECK(std::abs(tc.param_grad[i] - (alpha * ta.param_grad[i] + beta * tb.param_grad[i])) <
              1e-10);
}

TEST_CASE("two backward sweeps produce bit-identical gradients") {
    ParameterStore store;
    add_random_param(store, "x", {8, 8, 2}, 80);
    add_random_param(store, "k", {3, 3, 2, 2}, 81);
    Tape t(&store);
    int x = t.leaf(0, 8, 8, 2);
    int y = t.conv2d_dilated(x, 1, -1, 3, 1, convkernel::Pad::Zero);
    int loss = t.sum(t.square(t.ifft2(t.spectral_truncate(t.fft2(y), 3, 3))));
    t.backward(loss, false);
    std::vector<double> first = t.param_grad;
    t.zero_grad();
    t.backward(loss, false);
    CHECK(std::memcmp(first.data(), t.param_grad.data(), first.size() * sizeof(double)) == 0);
}

TEST_CASE("tape rejects malformed programs") {
    ParameterStore store;
    add_random_param(store, "x", {4, 4, 1}, 90);
    add_random_param(store, "y", {6, 6, 1}, 91);
    Tape t(&store);
    int a = t.leaf(0, 4, 4, 1);
    int b = t.leaf(1, 6, 6, 1);
    CHECK_THROWS(t.add(a, b));                      // shape mismatch
    CHECK_THROWS(t.backward(a));                    // non-scalar loss
    CHECK_THROWS(t.ifft2(a));                       // real where complex expected
    CHECK_THROWS(t.gelu(t.fft2(a)));                // complex where real expected
    CHECK_THROWS(t.mode_mix(t.fft2(a), 0, 9, 9));   // band beyond resolution
    CHECK_THROWS(t.slice_channels(a, 0, 5));        // channel range out of bounds
}

TEST_CASE("parameter store flatten/unflatten round trip") {
    ParameterStore store;
    add_random_param(store, "a", {3, 7}, 95);
    add_random_param(store, "b", {2, 2, 2}, 96);
    std::vector<double> flat = store.flatten();
    ParameterStore copy = store;
    std::vector<double> tweaked = flat;
    for (double& v : tweaked) v += 1.0;
    copy.unflatten(tweaked);
    copy.unflatten(flat);
    for (std::size_t i = 0; i < flat.size(); ++i) CHECK(copy.flat()[i] == store.flat()[i]);
    CHECK_THROWS(copy.unflatten(std::vector<double>(flat.size() + 1)));
    CHECK(store.find("a") == 0);
    CHECK(store.find("b") == 1);
    CHECK(store.find("zz") == -1);
}
