#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "dcno/diagnostics.hpp"
#include "dcno/fft.hpp"
#include "dcno/rng.hpp"

using namespace dcno;

namespace {

Field2D random_field(int h, int w, int c, std::uint64_t seed, double Lx = 1.0, double Ly = 1.0) {
    Rng rng(seed);
    Field2D f(h, w, c, Lx, Ly);
    for (double& v : f.data) v = rng.normal();
    return f;
}

double total(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0);
}

}  // namespace

TEST_CASE("error spectrum vanishes for perfect predictions and rejects zero targets") {
    Field2D target = random_field(12, 10, 2, 5);
    Field2D eps = error_spectrum(target, target);
    CHECK(eps.h == 12);
    CHECK(eps.w == 10);
    CHECK(eps.c == 2);
    for (double v : eps.data) CHECK(v == 0.0);

    Field2D zeros(8, 8, 1);
    CHECK_THROWS_AS(error_spectrum(random_field(8, 8, 1, 6), zeros), std::invalid_argument);
    CHECK_THROWS_AS(error_spectrum(Field2D(4, 4, 1), Field2D(4, 5, 1)), std::invalid_argument);
}

TEST_CASE("a single-mode error is supported exactly on its conjugate pair") {
    const int n = 16, k0 = 5;
    Field2D target = random_field(n, n, 1, 7);
    Field2D pred = target;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            pred.at(y, x) += 0.3 * std::cos(kTwoPi * k0 * x / n);
    Field2D eps = error_spectrum(pred, target);
    double support = eps.at(0, k0) + eps.at(0, n - k0);
    CHECK(eps.at(0, k0) > 1e-6);
    CHECK(eps.at(0, n - k0) > 1e-6);
    double off_support = 0.0;
    for (int k1 = 0; k1 < n; ++k1)
        for (int k2 = 0; k2 < n; ++k2)
            if (!(k1 == 0 && (k2 == k0 || k2 == n - k0)))
                off_support = std::max(off_support, eps.at(k1, k2));
    CHECK(off_support < 1e-12 * support);
}

TEST_CASE("error spectrum satisfies the Parseval identity") {
    Field2D target = random_field(16, 12, 2, 8);
    Field2D pred = random_field(16, 12, 2, 9);
    Field2D eps = error_spectrum(pred, target);

    double sum_eps2 = 0.0;
    for (double v : eps.data) sum_eps2 += v * v;

    double diff2 = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i)
        diff2 += (pred.data[i] - target.data[i]) * (pred.data[i] - target.data[i]);
    double that2 = 0.0;
    {
        Spectrum2D that = fft2(target);
        for (const auto& z : that.data) that2 += std::norm(z);
    }
    double expected = diff2 * (16.0 * 12.0) / that2;
    CHECK(std::abs(sum_eps2 - expected) / expected < 1e-10);
}

TEST_CASE("annulus binning partitions the lattice by integer mode radius") {
    const int n = 16;
    Field2D eps(n, n, 1);

    SUBCASE("single radius support") {
        eps.at(5, 0) = 2.5;  // signed mode (5, 0), radius exactly 5
        AnnulusDensity d = annulus_density(eps);
        for (std::size_t r = 0; r < d.mass.size(); ++r) {
            if (r == 5) {
                CHECK(d.mass[r] == 2.5);
                CHECK(d.density[r] == doctest::Approx(2.5 / 5.5).epsilon(1e-14));
            } else {
                CHECK(d.mass[r] == 0.0);
            }
        }
    }

    SUBCASE("uniform mass below radius 2 fills exactly bins 0 and 1") {
        int count = 0;
        for (int k1 = 0; k1 < n; ++k1)
            for (int k2 = 0; k2 < n; ++k2) {
                double m1 = signed_mode(k1, n), m2 = signed_mode(k2, n);
                if (m1 * m1 + m2 * m2 < 4.0) {
                    eps.at(k1, k2) = 1.0;
                    ++count;
                }
            }
        AnnulusDensity d = annulus_density(eps);
        CHECK(d.mass[0] + d.mass[1] == doctest::Approx(count).epsilon(1e-14));
        for (std::size_t r = 2; r < d.mass.size(); ++r) CHECK(d.mass[r] == 0.0);
    }

    SUBCASE("random lattice: bins are exhaustive and nonnegative") {
        Rng rng(10);
        for (double& v : eps.data) v = rng.uniform();
        AnnulusDensity d = annulus_density(eps);
        double lattice_total = total(std::vector<double>(eps.data.begin(), eps.data.end()));
        CHECK(std::abs(total(d.mass) - lattice_total) < 1e-12 * lattice_total);
        CHECK(static_cast<int>(d.mass.size()) ==
              static_cast<int>(std::floor(std::hypot(n / 2, n / 2))) + 1);
        for (double rho : d.density) CHECK(rho >= 0.0);
    }
}

TEST_CASE("frequency split puts band-limited errors in the right band") {
    const int n = 64;
    Field2D target = random_field(n, n, 1, 21);

    SUBCASE("error at |omega| = 2pi is purely low-band") {
        Field2D pred = target;
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) pred.at(y, x) += 0.2 * std::sin(kTwoPi * x / n);
        FreqSplit s = freq_split_error(pred, target);
        REQUIRE(s.low.has_value());
        REQUIRE(s.high.has_value());
        CHECK(*s.low > 1e-6);
        CHECK(*s.high < 1e-12);
    }

    SUBCASE("error at |omega| = 64pi is purely high-band") {
        Field2D pred = target;
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) pred.at(y, x) += 0.2 * std::cos(kTwoPi * 32 * x / n);
        FreqSplit s = freq_split_error(pred, target);
        CHECK(*s.low < 1e-12);
        CHECK(*s.high > 1e-6);
    }

    SUBCASE("perfect prediction gives (0, 0)") {
        FreqSplit s = freq_split_error(target, target);
        CHECK(*s.low == 0.0);
        CHECK(*s.high == 0.0);
    }

    SUBCASE("shared positive scaling leaves both bands unchanged") {
        Field2D pred = random_field(n, n, 1, 22);
        FreqSplit s1 = freq_split_error(pred, target);
        Field2D pred_s = pred, target_s = target;
        for (double& v : pred_s.data) v *= 37.5;
        for (double& v : target_s.data) v *= 37.5;
        FreqSplit s2 = freq_split_error(pred_s, target_s);
        CHECK(std::abs(*s1.low - *s2.low) < 1e-13 * *s1.low);
        CHECK(std::abs(*s1.high - *s2.high) < 1e-13 * *s1.high);
    }

    SUBCASE("boundary mode |omega| = omega_star counts as low") {
        Field2D pred = target;
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) pred.at(y, x) += 0.2 * std::cos(kTwoPi * 5 * x / n);
        FreqSplit s = freq_split_error(pred, target, kTwoPi * 5);
        CHECK(*s.low > 1e-6);
        CHECK(*s.high < 1e-12);
    }
}

TEST_CASE("frequency split reports empty bands as undefined") {
    Field2D target = random_field(16, 16, 1, 30);
    Field2D pred = random_field(16, 16, 1, 31);

    FreqSplit all_low = freq_split_error(pred, target, 1e9);
    CHECK(all_low.low.has_value());
    CHECK(!all_low.high.has_value());

    FreqSplit all_high = freq_split_error(pred, target, -1.0);
    CHECK(!all_high.low.has_value());
    CHECK(all_high.high.has_value());
}

TEST_CASE("shared-denominator split satisfies the partition identity") {
    Field2D target = random_field(32, 32, 2, 40, 2.0, 2.0);
    Field2D pred = random_field(32, 32, 2, 41, 2.0, 2.0);
    FreqSplit s = freq_split_error_shared(pred, target);
    REQUIRE(s.low.has_value());
    REQUIRE(s.high.has_value());

    double total_sq = 0.0;
    {
        Field2D eps = error_spectrum(pred, target);
        for (double v : eps.data) total_sq += v * v;
    }
    double split_sq = *s.low * *s.low + *s.high * *s.high;
    CHECK(std::abs(split_sq - total_sq) < 1e-10 * total_sq);
}

TEST_CASE("dynamics tracking: oracle forwards give the all-zero matrix") {
    SampleSet test;
    for (int i = 0; i < 3; ++i) {
        test.inputs.push_back(random_field(16, 16, 1, 50 + i));
        test.outputs.push_back(random_field(16, 16, 1, 60 + i));
    }
    auto oracle = [&](int, const Field2D& in) {
        for (std::size_t i = 0; i < test.size(); ++i)
            if (max_abs_diff(in, test.inputs[i]) == 0.0) return test.outputs[i];
        throw std::logic_error("unknown input");
    };
    auto rows = track_dynamics(oracle, {0, 5, 9}, test);
    REQUIRE(rows.size() == 3);
    for (const DynamicsRow& row : rows) {
        for (double m : row.annuli.mass) CHECK(m == 0.0);
        CHECK(*row.low == 0.0);
        CHECK(*row.high == 0.0);
    }
    CHECK(rows[1].epoch == 5);

    auto one = track_dynamics(oracle, {7}, test);
    CHECK(one.size() == 1);
}

TEST_CASE("dynamics tracking: halving the error field halves every column") {
    SampleSet test;
    test.inputs.push_back(random_field(16, 16, 1, 70));
    test.outputs.push_back(random_field(16, 16, 1, 71));
    Field2D err = random_field(16, 16, 1, 72);

    auto forward = [&](int epoch, const Field2D&) {
        Field2D pred = test.outputs[0];
        double scale = std::ldexp(1.0, -epoch);
        for (std::size_t i = 0; i < pred.data.size(); ++i)
            pred.data[i] += scale * err.data[i];
        return pred;
    };
    auto rows = track_dynamics(forward, {0, 1, 2, 3}, test);
    REQUIRE(rows.size() == 4);
    for (std::size_t e = 1; e < rows.size(); ++e) {
        for (std::size_t r = 0; r < rows[e].annuli.density.size(); ++r) {
            double prev = rows[e - 1].annuli.density[r];
            double cur = rows[e].annuli.density[r];
            if (prev == 0.0)
                CHECK(cur == 0.0);
            else
                CHECK(std::abs(cur - prev / 2.0) < 1e-12 * prev);
        }
        CHECK(std::abs(*rows[e].low - *rows[e - 1].low / 2.0) < 1e-12 * *rows[e - 1].low);
        CHECK(std::abs(*rows[e].high - *rows[e - 1].high / 2.0) < 1e-12 * *rows[e - 1].high);
    }
}

TEST_CASE("dynamics CSV has the documented header and parseable rows") {
    SampleSet test;
    test.inputs.push_back(random_field(8, 8, 1, 80));
    test.outputs.push_back(random_field(8, 8, 1, 81));
    auto forward = [&](int, const Field2D&) { return random_field(8, 8, 1, 82); };
    auto rows = track_dynamics(forward, {0, 1}, test);

    std::ostringstream csv;
    write_dynamics_csv(csv, rows);
    std::istringstream in(csv.str());
    std::string header;
    std::getline(in, header);
    std::string expected = "epoch";
    for (std::size_t r = 0; r < rows[0].annuli.density.size(); ++r)
        expected += ",r" + std::to_string(r);
    expected += ",low_err,high_err";
    CHECK(header == expected);

    std::string line;
    int data_rows = 0;
    while (std::getline(in, line)) {
        ++data_rows;
        int epoch = -1;
        double r0 = -1.0;
        CHECK(std::sscanf(line.c_str(), "%d,%lf", &epoch, &r0) == 2);
        CHECK(r0 >= 0.0);
    }
    CHECK(data_rows == 2);
}
