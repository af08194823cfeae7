#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dcno/io.hpp"
#include "dcno/rng.hpp"

using namespace dcno;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("io_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    REQUIRE(out.good());
}

DatasetContainer sample_container(std::uint64_t seed) {
    Rng rng(seed);
    DatasetContainer c;
    Field2D in(5, 4, 2, 1.0, 2.0), out(5, 4, 3, 1.0, 2.0);
    for (int s = 0; s < 3; ++s) {
        for (double& v : in.data) v = rng.normal();
        for (double& v : out.data) v = rng.normal() * 1e-7;
        c.append_sample(in, out);
    }
    return c;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

ModelConfig fancy_config() {
    ModelConfig cfg;
    cfg.pattern = "FCF";
    cfg.cin = 3;
    cfg.cout = 2;
    cfg.width = 12;
    cfg.modes1 = 4;
    cfg.modes2 = 5;
    cfg.dilations = {1, 2};
    cfg.conv_width = 8;
    cfg.conv_ksize = 5;
    cfg.padding = convkernel::Pad::Circular;
    cfg.ffn_hidden = 24;
    return cfg;
}

}  // namespace

TEST_CASE("dataset files round trip bit-exactly in f64") {
    TempFile tmp("ds_f64.bin");
    DatasetContainer c = sample_container(17);
    write_dataset(tmp.path, c);
    DatasetContainer r = read_dataset(tmp.path);
    CHECK(r.samples == c.samples);
    CHECK(r.h == c.h);
    CHECK(r.w == c.w);
    CHECK(r.cin == c.cin);
    CHECK(r.cout == c.cout);
    CHECK(r.scalar_code == 1);
    CHECK(r.Lx == c.Lx);
    CHECK(r.Ly == c.Ly);
    CHECK(bits_equal(r.inputs, c.inputs));
    CHECK(bits_equal(r.outputs, c.outputs));

    // Same container, second write: identical bytes on disk.
    TempFile tmp2("ds_f64_again.bin");
    write_dataset(tmp2.path, c);
    CHECK(read_bytes(tmp.path) == read_bytes(tmp2.path));
}

TEST_CASE("f32 datasets persist float-representable values exactly") {
    TempFile tmp("ds_f32.bin");
    DatasetContainer c;
    Field2D in(3, 3, 1), out(3, 3, 1);
    for (int i = 0; i < 9; ++i) {
        in.data[i] = 0.5 * i - 1.25;       // exactly representable in f32
        out.data[i] = 0.1 * i;             // generally not
    }
    c.append_sample(in, out);
    c.scalar_code = 0;
    write_dataset(tmp.path, c);
    DatasetContainer r = read_dataset(tmp.path);
    CHECK(r.scalar_code == 0);
    for (int i = 0; i < 9; ++i) {
        CHECK(r.inputs[i] == in.data[i]);
        CHECK(r.outputs[i] == static_cast<double>(static_cast<float>(out.data[i])));
    }
}

TEST_CASE("dataset reader distinguishes bad magic, bad version, and truncation") {
    TempFile tmp("ds_corrupt.bin");
    DatasetContainer c = sample_container(23);
    write_dataset(tmp.path, c);
    std::string good = read_bytes(tmp.path);

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    write_bytes(tmp.path, bad_magic);
    try {
        read_dataset(tmp.path);
        CHECK(false);
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("magic") != std::string::npos);
    }

    std::string bad_version = good;
    bad_version[8] = 9;  // little-endian version word follows the magic
    write_bytes(tmp.path, bad_version);
    try {
        read_dataset(tmp.path);
        CHECK(false);
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }

    write_bytes(tmp.path, good.substr(0, good.size() - 5));
    try {
        read_dataset(tmp.path);
        CHECK(false);
    } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        CHECK(msg.find("truncated") != std::string::npos);
        CHECK(msg.find(std::to_string(good.size() - 5)) != std::string::npos);
    }

    write_bytes(tmp.path, good + "zz");
    CHECK_THROWS_AS(read_dataset(tmp.path), std::runtime_error);
}

TEST_CASE("container accessors slice and validate shapes") {
    DatasetContainer c = sample_container(31);
    Field2D in1 = c.input_field(1);
    CHECK(in1.h == 5);
    CHECK(in1.c == 2);
    CHECK(in1.Ly == 2.0);
    CHECK(in1.data[0] == c.inputs[5 * 4 * 2]);

    SampleSet set = c.slice(1, 3);
    CHECK(set.size() == 2);
    CHECK(bits_equal(set.inputs[0].data, in1.data));
    CHECK_THROWS_AS(c.slice(2, 5), std::out_of_range);
    CHECK_THROWS_AS(c.input_field(3), std::out_of_range);

    Field2D wrong(4, 4, 2);
    CHECK_THROWS_AS(c.append_sample(wrong, c.output_field(0)), std::invalid_argument);
}

TEST_CASE("checkpoints round trip parameters, metadata, and moments") {
    TempFile tmp("ckpt_full.bin");
    Rng rng(47);
    Checkpoint ckpt;
    ckpt.config = fancy_config();
    ckpt.params.resize(257);
    for (double& v : ckpt.params) v = rng.normal();
    ckpt.epoch = 41;
    ckpt.seed = 0xDEADBEEFCAFEULL;
    AdamState opt(ckpt.params.size());
    opt.step = 1234;
    for (double& v : opt.m) v = rng.normal();
    for (double& v : opt.v) v = rng.uniform();
    ckpt.optimizer = opt;

    write_checkpoint(tmp.path, ckpt);
    Checkpoint r = read_checkpoint(tmp.path);
    CHECK(config_equal(r.config, ckpt.config));
    CHECK(bits_equal(r.params, ckpt.params));
    CHECK(r.epoch == 41);
    CHECK(r.seed == ckpt.seed);
    REQUIRE(r.optimizer.has_value());
    CHECK(r.optimizer->step == 1234);
    CHECK(bits_equal(r.optimizer->m, opt.m));
    CHECK(bits_equal(r.optimizer->v, opt.v));

    TempFile tmp2("ckpt_again.bin");
    write_checkpoint(tmp2.path, ckpt);
    CHECK(read_bytes(tmp.path) == read_bytes(tmp2.path));
}

TEST_CASE("checkpoints without optimizer state omit the moments") {
    TempFile tmp("ckpt_bare.bin");
    Checkpoint ckpt;
    ckpt.config = ModelConfig{};
    ckpt.params.assign(16, 0.5);
    write_checkpoint(tmp.path, ckpt);
    Checkpoint r = read_checkpoint(tmp.path);
    CHECK(!r.optimizer.has_value());
    CHECK(r.params == ckpt.params);
    CHECK(r.epoch == -1);
}

TEST_CASE("checkpoint loading enforces the expected model config") {
    TempFile tmp("ckpt_guard.bin");
    Checkpoint ckpt;
    ckpt.config = fancy_config();
    ckpt.params.assign(count_parameters(ckpt.config, CountScope::All), 0.25);
    write_checkpoint(tmp.path, ckpt);

    CHECK(config_equal(read_checkpoint_for(tmp.path, fancy_config()).config, ckpt.config));

    ModelConfig other = fancy_config();
    other.modes2 = 3;
    try {
        read_checkpoint_for(tmp.path, other);
        CHECK(false);
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("checkpoint/config mismatch") != std::string::npos);
    }
}

TEST_CASE("checkpoint reader errors are specific") {
    TempFile tmp("ckpt_corrupt.bin");
    Checkpoint ckpt;
    ckpt.config = ModelConfig{};
    ckpt.params.assign(8, 1.0);
    write_checkpoint(tmp.path, ckpt);
    std::string good = read_bytes(tmp.path);

    std::string bad_magic = good;
    bad_magic[3] = '?';
    write_bytes(tmp.path, bad_magic);
    try {
        read_checkpoint(tmp.path);
        CHECK(false);
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("magic") != std::string::npos);
    }

    write_bytes(tmp.path, good.substr(0, good.size() - 3));
    try {
        read_checkpoint(tmp.path);
        CHECK(false);
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }

    CHECK_THROWS_AS(read_checkpoint("no_such_file.bin"), std::runtime_error);
}

TEST_CASE("key=value text parsing handles comments, spaces, and overrides") {
    auto kv = parse_kv_text(
        "# leading comment\n"
        "pattern = FCF   # trailing comment\n"
        "\n"
        "width=7\n"
        "width = 9\n"
        "  modes1 =4\n");
    CHECK(kv.at("pattern") == "FCF");
    CHECK(kv.at("width") == "9");
    CHECK(kv.at("modes1") == "4");
    CHECK(kv.size() == 3);

    CHECK_THROWS_AS(parse_kv_text("novalue\n"), std::runtime_error);
    CHECK_THROWS_AS(parse_kv_text("=5\n"), std::runtime_error);
}

TEST_CASE("model config serialization round trips every field") {
    ModelConfig cfg = fancy_config();
    ModelConfig back = parse_model_config(parse_kv_text(serialize_model_config(cfg)));
    CHECK(config_equal(back, cfg));

    ModelConfig defaults;
    CHECK(config_equal(parse_model_config(parse_kv_text(serialize_model_config(defaults))), defaults));
    CHECK(!config_equal(cfg, defaults));

    auto kv = parse_kv_text("padding=bogus\n");
    CHECK_THROWS_AS(parse_model_config(kv), std::runtime_error);
    auto kv2 = parse_kv_text("width=abc\n");
    CHECK_THROWS_AS(parse_model_config(kv2), std::runtime_error);
    auto kv3 = parse_kv_text("dilations=1,,3\n");
    CHECK_THROWS_AS(parse_model_config(kv3), std::runtime_error);
}
