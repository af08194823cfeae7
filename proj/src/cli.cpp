#include "dcno/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dcno/datagen.hpp"
#include "dcno/diagnostics.hpp"
#include "dcno/io.hpp"
#include "dcno/model.hpp"
#include "dcno/train.hpp"

namespace dcno {
namespace {

namespace fs = std::filesystem;

// A checkpoint rebound to a live model. The store is heap-held so the model's
// internal pointer stays valid after this struct moves.
struct LoadedCkpt {
    Checkpoint ckpt;
    std::unique_ptr<ParameterStore> store;
    std::unique_ptr<Model> model;
};

LoadedCkpt load_ckpt(const std::string& path) {
    LoadedCkpt lc;
    lc.ckpt = read_checkpoint(path);
    lc.store = std::make_unique<ParameterStore>();
    lc.model = std::make_unique<Model>(Model::build(lc.ckpt.config, *lc.store, 0));
    lc.store->unflatten(lc.ckpt.params);
    return lc;
}

void require_dataset_fit(const DatasetContainer& ds, const ModelConfig& cfg) {
    if (cfg.cin != static_cast<int>(ds.cin) || cfg.cout != static_cast<int>(ds.cout)) {
        std::ostringstream msg;
        msg << "checkpoint/config mismatch: dataset carries cin=" << ds.cin
            << ", cout=" << ds.cout << " but the checkpointed model expects cin="
            << cfg.cin << ", cout=" << cfg.cout;
        throw std::runtime_error(msg.str());
    }
}

// Bad flag values are usage errors, not runtime failures.
std::vector<int> dilations_flag(const std::string& text) {
    try {
        return parse_dilations(text);
    } catch (const std::invalid_argument& err) {
        throw CLI::ValidationError(err.what());
    }
}

// Expands `--config FILE` into the flag stream: file pairs are spliced in
// front of the explicit flags, and every option takes its last occurrence,
// so the command line overrides the file. Done by hand because the vendored
// parser only processes config files attached to the root command.
std::vector<std::string> inject_config(const std::vector<std::string>& args) {
    if (args.empty()) return args;
    std::string file;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size())
            file = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0)
            file = args[i].substr(9);
    }
    if (file.empty()) return args;
    if (!fs::exists(file)) throw CLI::FileError::Missing(file);

    std::vector<std::string> out{args[0]};
    for (const auto& [key, value] : read_kv_file(file)) {
        if (key == "config") continue;
        out.push_back("--" + key);
        out.push_back(value);
    }
    out.insert(out.end(), args.begin() + 1, args.end());
    return out;
}

void take_last_all(CLI::App* sub) {
    for (CLI::Option* opt : sub->get_options())
        if (opt->get_expected_min() > 0) opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

Field2D output_channel(const Field2D& f, int ch) {
    Field2D out(f.h, f.w, 1, f.Lx, f.Ly);
    for (int y = 0; y < f.h; ++y)
        for (int x = 0; x < f.w; ++x) out.at(y, x, 0) = f.at(y, x, ch);
    return out;
}

// Half-open [begin, end) over dataset samples; end <= 0 means "all".
std::pair<std::uint32_t, std::uint32_t> sample_range(const DatasetContainer& ds, int begin,
                                                     int end) {
    std::uint32_t b = static_cast<std::uint32_t>(std::max(begin, 0));
    std::uint32_t e = end <= 0 ? ds.samples : static_cast<std::uint32_t>(end);
    if (b >= e || e > ds.samples)
        throw CLI::ValidationError("--begin/--end: need 0 <= begin < end <= " +
                                   std::to_string(ds.samples));
    return {b, e};
}

struct GenerateArgs {
    DataGenConfig cfg;
    std::string out;
    std::string config;
};

void run_generate(const GenerateArgs& a) {
    DatasetContainer ds = make_dataset(a.cfg);
    write_dataset(a.out, ds);
    std::printf("wrote %s: %u samples, %ux%u, cin=%u, cout=%u\n", a.out.c_str(), ds.samples,
                ds.h, ds.w, ds.cin, ds.cout);
}

struct TrainArgs {
    std::string data;
    std::string pattern = "FCFCFCF";
    int width = 32;
    int conv_width = -1;  // -1 follows --width
    int modes = 12;
    std::string dilations = "1,3,9,3,1";
    int kernel = 3;
    std::string padding = "zero";
    int ffn = 128;
    int epochs = 100;
    int batch = 8;
    double lr = 1e-3;
    double wd = 1e-4;
    LossKind loss = LossKind::RelativeL2;
    std::uint64_t seed = 0;
    int train_n = -1;  // -1: all samples not held out for validation
    int val_n = -1;    // -1: max(1, samples/10)
    std::string ckpt_out;
    std::string metrics_out;
    int ckpt_every = 0;
    std::string ckpt_dir;
    std::string config;
};

void run_train(const TrainArgs& a) {
    DatasetContainer ds = read_dataset(a.data);

    ModelConfig cfg;
    cfg.pattern = a.pattern;
    cfg.cin = static_cast<int>(ds.cin);
    cfg.cout = static_cast<int>(ds.cout);
    cfg.width = a.width;
    cfg.conv_width = a.conv_width < 0 ? a.width : a.conv_width;
    cfg.modes1 = a.modes;
    cfg.modes2 = a.modes;
    cfg.dilations = dilations_flag(a.dilations);
    cfg.conv_ksize = a.kernel;
    cfg.padding = a.padding == "circular" ? convkernel::Pad::Circular : convkernel::Pad::Zero;
    cfg.ffn_hidden = a.ffn;

    int total = static_cast<int>(ds.samples);
    int val_n = a.val_n < 0 ? std::max(1, total / 10) : a.val_n;
    int train_n = a.train_n < 0 ? total - val_n : a.train_n;
    if (train_n < 1 || val_n < 1 || train_n + val_n > total)
        throw CLI::ValidationError("--train-n/--val-n: need train >= 1, val >= 1, train + val <= " +
                                   std::to_string(total));
    SampleSet train_split = ds.slice(0, static_cast<std::uint32_t>(train_n));
    SampleSet val_split =
        ds.slice(static_cast<std::uint32_t>(train_n), static_cast<std::uint32_t>(train_n + val_n));

    ParameterStore store;
    Model model = Model::build(cfg, store, a.seed);

    TrainConfig tc;
    tc.epochs = a.epochs;
    tc.batch = a.batch;
    tc.peak_lr = a.lr;
    tc.weight_decay = a.wd;
    tc.loss = a.loss;
    tc.seed = a.seed;

    std::ofstream metrics;
    if (!a.metrics_out.empty()) {
        metrics.open(a.metrics_out, std::ios::binary);
        if (!metrics) throw std::runtime_error("cannot open metrics file: " + a.metrics_out);
    }

    std::function<void(int, const ParameterStore&)> hook;
    if (a.ckpt_every > 0) {
        if (a.ckpt_dir.empty())
            throw CLI::ValidationError("--ckpt-every needs --ckpt-dir");
        fs::create_directories(a.ckpt_dir);
        hook = [&](int epoch, const ParameterStore& s) {
            if ((epoch + 1) % a.ckpt_every != 0) return;
            Checkpoint ck;
            ck.config = cfg;
            ck.params = s.flatten();
            ck.epoch = epoch;
            ck.seed = a.seed;
            char name[32];
            std::snprintf(name, sizeof name, "epoch_%04d.ckpt", epoch);
            write_checkpoint((fs::path(a.ckpt_dir) / name).string(), ck);
        };
    }

    TrainResult res = train(model, store, train_split, val_split, tc,
                            metrics.is_open() ? &metrics : nullptr, hook);

    if (!a.ckpt_out.empty()) {
        Checkpoint ck;
        ck.config = cfg;
        ck.params = res.best_params;
        ck.epoch = res.best_epoch;
        ck.seed = a.seed;
        write_checkpoint(a.ckpt_out, ck);
    }
    std::printf("best_epoch=%d\n", res.best_epoch);
    std::printf("best_val_rel_l2=%.17g\n", res.best_val);
}

struct EvalArgs {
    std::string data;
    std::string ckpt;
    int begin = 0, end = 0;
    double omega_star = -1.0;  // < 0: skip the band split
};

void run_eval(const EvalArgs& a) {
    DatasetContainer ds = read_dataset(a.data);
    LoadedCkpt lc = load_ckpt(a.ckpt);
    require_dataset_fit(ds, lc.ckpt.config);
    auto [b, e] = sample_range(ds, a.begin, a.end);
    SampleSet split = ds.slice(b, e);

    std::printf("eval_rel_l2=%.17g\n", evaluate(*lc.model, split));
    if (a.omega_star >= 0.0) {
        double low = 0.0, high = 0.0;
        int nlow = 0, nhigh = 0;
        for (std::size_t i = 0; i < split.size(); ++i) {
            Field2D pred = lc.model->apply(split.inputs[i]);
            FreqSplit fsp = freq_split_error(pred, split.outputs[i], a.omega_star);
            if (fsp.low) low += *fsp.low, ++nlow;
            if (fsp.high) high += *fsp.high, ++nhigh;
        }
        if (nlow > 0) std::printf("low_err=%.17g\n", low / nlow);
        if (nhigh > 0) std::printf("high_err=%.17g\n", high / nhigh);
    }
}

struct RolloutArgs {
    std::string data;
    std::string ckpt;
    int t0 = 0;
    int T = -1;  // -1: trajectory end
    std::string out;
};

void run_rollout(const RolloutArgs& a) {
    DatasetContainer ds = read_dataset(a.data);
    if (ds.cout < 2)
        throw std::runtime_error("rollout: dataset is not a trajectory container (cout=" +
                                 std::to_string(ds.cout) + ", need snapshots as channels)");
    LoadedCkpt lc = load_ckpt(a.ckpt);
    if (lc.ckpt.config.cin != 1 || lc.ckpt.config.cout != 1)
        throw std::runtime_error(
            "checkpoint/config mismatch: rollout needs a one-step model (cin=1, cout=1), got cin=" +
            std::to_string(lc.ckpt.config.cin) + ", cout=" + std::to_string(lc.ckpt.config.cout));

    int last = static_cast<int>(ds.cout) - 1;
    int T = a.T < 0 ? last : a.T;
    if (a.t0 < 0 || T > last || a.t0 >= T)
        throw CLI::ValidationError("--t0/--T: need 0 <= t0 < T <= " + std::to_string(last));

    std::vector<std::vector<Field2D>> trajs(ds.samples);
    for (std::uint32_t s = 0; s < ds.samples; ++s) {
        Field2D snaps = ds.output_field(s);
        for (int t = 0; t <= T; ++t) trajs[s].push_back(output_channel(snaps, t));
    }
    RolloutResult rr =
        rollout_evaluate([&](const Field2D& x) { return lc.model->apply(x); }, trajs, a.t0);

    std::ofstream file;
    if (!a.out.empty()) {
        file.open(a.out, std::ios::binary);
        if (!file) throw std::runtime_error("cannot open output file: " + a.out);
    }
    std::ostream& os = file.is_open() ? static_cast<std::ostream&>(file) : std::cout;
    char line[64];
    os << "step,rel_l2\n";
    for (std::size_t i = 0; i < rr.per_step.size(); ++i) {
        std::snprintf(line, sizeof line, "%d,%.17g\n", a.t0 + 1 + static_cast<int>(i),
                      rr.per_step[i]);
        os << line;
    }
    std::snprintf(line, sizeof line, "mean_rel_l2=%.17g\n", rr.mean);
    os << line;
}

struct DiagnoseArgs {
    std::string data;
    std::string ckpt;
    std::string ckpt_dir;
    double threshold = 10.0 * kPi;
    int begin = 0, end = 0;
    std::string out;
};

void run_diagnose(const DiagnoseArgs& a) {
    if (a.ckpt.empty() == a.ckpt_dir.empty())
        throw CLI::ValidationError("diagnose: give exactly one of --ckpt and --ckpt-dir");

    std::vector<std::string> paths;
    if (!a.ckpt.empty()) {
        paths.push_back(a.ckpt);
    } else {
        for (const fs::directory_entry& entry : fs::directory_iterator(a.ckpt_dir))
            if (entry.is_regular_file() && entry.path().extension() == ".ckpt")
                paths.push_back(entry.path().string());
        std::sort(paths.begin(), paths.end());
        if (paths.empty())
            throw std::runtime_error("diagnose: no .ckpt files in " + a.ckpt_dir);
    }

    Checkpoint first = read_checkpoint(paths[0]);
    std::vector<std::pair<int, std::vector<double>>> epoch_params;
    epoch_params.emplace_back(first.epoch, first.params);
    for (std::size_t i = 1; i < paths.size(); ++i) {
        Checkpoint ck = read_checkpoint(paths[i]);
        if (!config_equal(ck.config, first.config))
            throw std::runtime_error("checkpoint/config mismatch: " + paths[i] +
                                     " differs from " + paths[0]);
        epoch_params.emplace_back(ck.epoch, std::move(ck.params));
    }

    DatasetContainer ds = read_dataset(a.data);
    require_dataset_fit(ds, first.config);
    auto [b, e] = sample_range(ds, a.begin, a.end);
    SampleSet split = ds.slice(b, e);

    ParameterStore store;
    Model model = Model::build(first.config, store, 0);
    std::vector<DynamicsRow> rows =
        track_dynamics(model, store, epoch_params, split, a.threshold);

    std::ofstream file;
    if (!a.out.empty()) {
        file.open(a.out, std::ios::binary);
        if (!file) throw std::runtime_error("cannot open output file: " + a.out);
    }
    write_dynamics_csv(file.is_open() ? static_cast<std::ostream&>(file) : std::cout, rows);
}

struct ParamsArgs {
    std::string pattern = "FCFCFCF";
    int width = 32;
    int conv_width = -1;
    int modes = 12;
    std::string dilations = "1,3,9,3,1";
    int kernel = 3;
    int ffn = 128;
};

void run_params(const ParamsArgs& a) {
    ModelConfig cfg;
    cfg.pattern = a.pattern;
    cfg.width = a.width;
    cfg.conv_width = a.conv_width < 0 ? a.width : a.conv_width;
    cfg.modes1 = a.modes;
    cfg.modes2 = a.modes;
    cfg.dilations = dilations_flag(a.dilations);
    cfg.conv_ksize = a.kernel;
    cfg.ffn_hidden = a.ffn;
    std::printf("C-layer params: %zu\n", count_parameters(cfg, CountScope::CLayersOnly));
    std::printf("total params: %zu\n", count_parameters(cfg, CountScope::All));
}

}  // namespace

std::vector<int> parse_dilations(const std::string& text) {
    std::vector<int> out;
    std::istringstream in(text);
    std::string token;
    while (std::getline(in, token, ',')) {
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(token, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != token.size() || token.empty() || v <= 0)
            throw std::invalid_argument("dilations: expected comma-separated positive integers, got '" +
                                        text + "'");
        out.push_back(v);
    }
    if (out.empty())
        throw std::invalid_argument("dilations: expected comma-separated positive integers, got '" +
                                    text + "'");
    return out;
}

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Dilated-convolution neural operator lab", "dcno"};
    app.require_subcommand(1);

    const std::map<std::string, Task> task_names{{"darcy-rough", Task::DarcyRough},
                                                 {"trig", Task::Trig},
                                                 {"ns", Task::NavierStokes},
                                                 {"inverse-darcy", Task::InverseDarcy}};
    const std::map<std::string, LossKind> loss_names{{"rel-l2", LossKind::RelativeL2},
                                                     {"rel-h1", LossKind::RelativeH1}};

    GenerateArgs gen;
    CLI::App* g = app.add_subcommand("generate", "Generate a dataset file");
    g->add_option("--task", gen.cfg.task, "Dataset family")
        ->transform(CLI::CheckedTransformer(task_names, CLI::ignore_case));
    g->add_option("--n", gen.cfg.samples, "Sample count");
    g->add_option("--res", gen.cfg.resolution, "Emitted lattice resolution");
    g->add_option("--fine-res", gen.cfg.fine_resolution,
                  "Solve lattice for elliptic tasks (downsampled to --res)");
    g->add_option("--c", gen.cfg.grf_c, "Roughness parameter of the coefficient field");
    g->add_option("--cg-tol", gen.cfg.cg_tol, "Elliptic solver relative tolerance");
    g->add_option("--eps", gen.cfg.noise_eps, "Observation noise level (inverse-darcy)");
    g->add_option("--nu", gen.cfg.nu, "Viscosity (ns)");
    g->add_option("--T", gen.cfg.ns_T, "Trajectory seconds (ns)");
    g->add_option("--dt", gen.cfg.ns_dt, "Solver step (ns)");
    g->add_option("--forcing-amp", gen.cfg.forcing_amp, "Forcing amplitude (ns)");
    g->add_option("--seed", gen.cfg.seed, "Master seed; sample i uses a stream derived from it");
    g->add_option("--out", gen.out, "Output dataset path")->required();
    g->add_option("--config", gen.config, "key=value file; command-line flags override it");
    take_last_all(g);
    g->callback([&gen] { run_generate(gen); });

    TrainArgs tr;
    CLI::App* t = app.add_subcommand("train", "Train a model on a dataset");
    t->add_option("--data", tr.data, "Dataset path")->required();
    t->add_option("--pattern", tr.pattern, "Layer pattern, e.g. FCFCFCF");
    t->add_option("--width", tr.width, "Channel width between encoder and decoder");
    t->add_option("--conv-width", tr.conv_width, "Channel width inside conv layers (default: --width)");
    t->add_option("--modes", tr.modes, "Retained modes per direction in spectral layers");
    t->add_option("--dilations", tr.dilations, "Comma-separated conv dilations, e.g. 1,3,9,3,1");
    t->add_option("--kernel", tr.kernel, "Conv kernel size");
    t->add_option("--padding", tr.padding, "Conv padding")
        ->check(CLI::IsMember({"zero", "circular"}));
    t->add_option("--ffn", tr.ffn, "Decoder FFN hidden width");
    t->add_option("--epochs", tr.epochs, "Training epochs");
    t->add_option("--batch", tr.batch, "Mini-batch size");
    t->add_option("--lr", tr.lr, "Peak learning rate of the 1cycle schedule");
    t->add_option("--wd", tr.wd, "Decoupled weight decay");
    t->add_option("--loss", tr.loss, "Training loss")
        ->transform(CLI::CheckedTransformer(loss_names, CLI::ignore_case));
    t->add_option("--seed", tr.seed, "Seed for init and batch order");
    t->add_option("--train-n", tr.train_n, "Training samples, taken from the front (default: rest)");
    t->add_option("--val-n", tr.val_n, "Validation samples after the training block (default: 10%)");
    t->add_option("--ckpt-out", tr.ckpt_out, "Write the best-validation checkpoint here");
    t->add_option("--metrics-out", tr.metrics_out, "Write the per-epoch metrics CSV here");
    t->add_option("--ckpt-every", tr.ckpt_every, "Also checkpoint every N epochs into --ckpt-dir");
    t->add_option("--ckpt-dir", tr.ckpt_dir, "Directory for periodic checkpoints");
    t->add_option("--config", tr.config, "key=value file; command-line flags override it");
    take_last_all(t);
    t->callback([&tr] { run_train(tr); });

    EvalArgs ev;
    CLI::App* e = app.add_subcommand("eval", "Mean relative L2 of a checkpoint on a dataset");
    e->add_option("--data", ev.data, "Dataset path")->required();
    e->add_option("--ckpt", ev.ckpt, "Checkpoint path")->required();
    e->add_option("--begin", ev.begin, "First sample of the evaluated range");
    e->add_option("--end", ev.end, "One past the last sample (default: all)");
    e->add_option("--omega-star", ev.omega_star,
                  "Also report the error split at this angular frequency");
    e->callback([&ev] { run_eval(ev); });

    RolloutArgs ro;
    CLI::App* r = app.add_subcommand("rollout", "Autoregressive trajectory evaluation");
    r->add_option("--data", ro.data, "Trajectory dataset path")->required();
    r->add_option("--ckpt", ro.ckpt, "One-step model checkpoint")->required();
    r->add_option("--t0", ro.t0, "Start snapshot index");
    r->add_option("--T", ro.T, "Final snapshot index (default: trajectory end)");
    r->add_option("--out", ro.out, "Write the per-step CSV here instead of stdout");
    r->callback([&ro] { run_rollout(ro); });

    DiagnoseArgs di;
    CLI::App* d = app.add_subcommand("diagnose", "Spectral error diagnostics of checkpoints");
    d->add_option("--data", di.data, "Dataset path")->required();
    CLI::Option* dc = d->add_option("--ckpt", di.ckpt, "Single checkpoint");
    d->add_option("--ckpt-dir", di.ckpt_dir, "Directory of .ckpt files, one CSV row each")
        ->excludes(dc);
    d->add_option("--threshold", di.threshold,
                  "Angular frequency separating the low and high bands");
    d->add_option("--begin", di.begin, "First sample of the evaluated range");
    d->add_option("--end", di.end, "One past the last sample (default: all)");
    d->add_option("--out", di.out, "Write the CSV here instead of stdout");
    d->callback([&di] { run_diagnose(di); });

    ParamsArgs pa;
    CLI::App* p = app.add_subcommand("params", "Print parameter counts for a config");
    p->add_option("--pattern", pa.pattern, "Layer pattern");
    p->add_option("--width", pa.width, "Channel width");
    p->add_option("--conv-width", pa.conv_width, "Conv channel width (default: --width)");
    p->add_option("--modes", pa.modes, "Retained modes per direction");
    p->add_option("--dilations", pa.dilations, "Comma-separated conv dilations");
    p->add_option("--kernel", pa.kernel, "Conv kernel size");
    p->add_option("--ffn", pa.ffn, "Decoder FFN hidden width");
    p->callback([&pa] { run_params(pa); });

    try {
        std::vector<std::string> tokens(argv + std::min(argc, 1), argv + argc);
        tokens = inject_config(tokens);
        std::reverse(tokens.begin(), tokens.end());
        app.parse(std::move(tokens));
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::CallForAllHelp& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        std::cerr << err.what() << "\n\n" << app.help() << std::flush;
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << std::endl;
        return 2;
    }
    return 0;
}

}  // namespace dcno
