#include "dcno/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "dcno/fft.hpp"
#include "dcno/rng.hpp"

namespace dcno {

namespace {

void check_pair(const Field2D& pred, const Field2D& target, const char* who) {
    if (pred.h != target.h || pred.w != target.w || pred.c != target.c)
        throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

// (1 + |omega|^2) per mode, replicated across channels.
std::vector<double> h1_weights(int h, int w, int c, double Lx, double Ly) {
    std::vector<double> mask(static_cast<std::size_t>(h) * w * c);
    for (int i = 0; i < h; ++i) {
        double wy = omega_component(i, h, Ly);
        for (int j = 0; j < w; ++j) {
            double wx = omega_component(j, w, Lx);
            double m = 1.0 + wy * wy + wx * wx;
            for (int ch = 0; ch < c; ++ch)
                mask[(static_cast<std::size_t>(i) * w + j) * c + ch] = m;
        }
    }
    return mask;
}

double h1_norm(const Field2D& f) {
    Spectrum2D s = fft2(f);
    double acc = 0.0;
    for (int i = 0; i < f.h; ++i) {
        double wy = omega_component(i, f.h, f.Ly);
        for (int j = 0; j < f.w; ++j) {
            double wx = omega_component(j, f.w, f.Lx);
            double m = 1.0 + wy * wy + wx * wx;
            for (int ch = 0; ch < f.c; ++ch) {
                double re = s.at(i, j, ch).real(), im = s.at(i, j, ch).imag();
                acc += m * (re * re + im * im);
            }
        }
    }
    return std::sqrt(acc);
}

}  // namespace

double relative_l2(const Field2D& pred, const Field2D& target) {
    check_pair(pred, target, "relative_l2");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        double d = pred.data[i] - target.data[i];
        num += d * d;
        den += target.data[i] * target.data[i];
    }
    if (den == 0.0) throw std::invalid_argument("relative_l2: zero target norm");
    return std::sqrt(num / den);
}

double relative_h1(const Field2D& pred, const Field2D& target) {
    check_pair(pred, target, "relative_h1");
    Field2D diff = pred;
    for (std::size_t i = 0; i < diff.data.size(); ++i) diff.data[i] -= target.data[i];
    double den = h1_norm(target);
    if (den == 0.0) throw std::invalid_argument("relative_h1: zero target norm");
    return h1_norm(diff) / den;
}

int loss_node(Tape& t, int pred, const Field2D& target, LossKind kind) {
    const TensorVal& pv = t.val(pred);
    if (pv.h != target.h || pv.w != target.w || pv.c != target.c)
        throw std::invalid_argument("loss_node: shape mismatch");
    int diff = t.add(pred, t.scale(t.input(target), -1.0));
    if (kind == LossKind::RelativeL2) {
        double den = l2_norm(target);
        if (den == 0.0) throw std::invalid_argument("loss_node: zero target norm");
        return t.scale(t.sqrt_op(t.sum(t.square(diff))), 1.0 / den);
    }
    double den = h1_norm(target);
    if (den == 0.0) throw std::invalid_argument("loss_node: zero target norm");
    int weighted = t.scale(t.square(t.fft2(diff)),
                           h1_weights(target.h, target.w, target.c, target.Lx, target.Ly));
    return t.scale(t.sqrt_op(t.sum(weighted)), 1.0 / den);
}

void adam_step(double* theta, const double* grad, std::size_t n, AdamState& state, double lr,
               double decay) {
    if (state.m.size() != n || state.v.size() != n)
        throw std::invalid_argument("adam_step: state size mismatch");
    ++state.step;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < n; ++i) {
        theta[i] -= lr * decay * theta[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
        double mhat = state.m[i] / bc1;
        double vhat = state.v[i] / bc2;
        theta[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

double onecycle_lr(long step, long total, const TrainConfig& cfg) {
    if (step < 0 || step >= total) throw std::out_of_range("onecycle_lr: step outside schedule");
    double start = cfg.peak_lr / cfg.start_div;
    double final_lr = cfg.peak_lr / cfg.final_div;
    long warmup_end = std::lround(cfg.warmup_frac * static_cast<double>(total - 1));
    auto cosine = [](double a, double b, double s) {
        return b + (a - b) * 0.5 * (1.0 + std::cos(kPi * s));
    };
    if (step <= warmup_end) {
        double s = warmup_end > 0 ? static_cast<double>(step) / warmup_end : 0.0;
        return cosine(start, cfg.peak_lr, s);
    }
    double span = static_cast<double>(total - 1 - warmup_end);
    double s = static_cast<double>(step - warmup_end) / span;
    return cosine(cfg.peak_lr, final_lr, s);
}

static void write_row(std::ostream& os, const EpochRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss,
                  r.val_rel_l2, r.lr);
    os << buf;
}

TrainResult train(const Model& model, ParameterStore& store, const SampleSet& train_split,
                  const SampleSet& val_split, const TrainConfig& cfg, std::ostream* csv,
                  const std::function<void(int, const ParameterStore&)>& epoch_hook) {
    if (cfg.epochs < 0 || cfg.batch < 1 || cfg.weight_decay < 0.0)
        throw std::invalid_argument("train: bad config");
    if (train_split.size() == 0 || train_split.inputs.size() != train_split.outputs.size())
        throw std::invalid_argument("train: empty or inconsistent training split");
    if (val_split.size() == 0 || val_split.inputs.size() != val_split.outputs.size())
        throw std::invalid_argument("train: empty or inconsistent validation split");

    const std::size_t n_params = store.size();
    const int n_train = static_cast<int>(train_split.size());
    const long batches_per_epoch = (n_train + cfg.batch - 1) / cfg.batch;
    const long total_steps = static_cast<long>(cfg.epochs) * batches_per_epoch;

    AdamState state(n_params);
    std::vector<double> grad_accum(n_params, 0.0);
    std::vector<int> order(n_train);
    for (int i = 0; i < n_train; ++i) order[i] = i;
    Rng shuffle_rng(cfg.seed);

    TrainResult result;
    if (csv) *csv << "epoch,train_loss,val_rel_l2,lr\n";

    long global_step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order.data(), order.size());
        double epoch_loss = 0.0;
        double last_lr = 0.0;
        for (long b = 0; b < batches_per_epoch; ++b) {
            int lo = static_cast<int>(b) * cfg.batch;
            int hi = std::min(lo + cfg.batch, n_train);
            std::fill(grad_accum.begin(), grad_accum.end(), 0.0);
            for (int s = lo; s < hi; ++s) {
                int idx = order[s];
                Tape t(&store);
                int pred = model.forward(t, t.input(train_split.inputs[idx]));
                int loss = loss_node(t, pred, train_split.outputs[idx], cfg.loss);
                double lv = t.val(loss).re[0];
                if (!std::isfinite(lv))
                    throw std::runtime_error("train: non-finite loss at epoch " +
                                             std::to_string(epoch) + ", sample " +
                                             std::to_string(idx));
                epoch_loss += lv;
                t.backward(loss);
                for (std::size_t i = 0; i < n_params; ++i) grad_accum[i] += t.param_grad[i];
            }
            last_lr = onecycle_lr(global_step, total_steps, cfg);
            adam_step(store.flat(), grad_accum.data(), n_params, state, last_lr,
                      cfg.weight_decay);
            ++global_step;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / n_train;
        rec.val_rel_l2 = evaluate(model, val_split);
        rec.lr = last_lr;
        result.metrics.push_back(rec);
        if (csv) write_row(*csv, rec);

        if (result.best_epoch < 0 || rec.val_rel_l2 < result.best_val) {
            result.best_val = rec.val_rel_l2;
            result.best_epoch = epoch;
            result.best_params = store.flatten();
        }
        if (epoch_hook) epoch_hook(epoch, store);
    }

    if (result.best_epoch < 0) {
        result.best_params = store.flatten();  // zero-epoch run keeps the initial weights
    } else {
        store.unflatten(result.best_params);
    }
    return result;
}

double evaluate(const ForwardFn& forward, const SampleSet& split) {
    if (split.size() == 0) throw std::invalid_argument("evaluate: empty split");
    if (split.inputs.size() != split.outputs.size())
        throw std::invalid_argument("evaluate: inconsistent split");
    double acc = 0.0;
    for (std::size_t i = 0; i < split.size(); ++i)
        acc += relative_l2(forward(split.inputs[i]), split.outputs[i]);
    return acc / static_cast<double>(split.size());
}

double evaluate(const Model& model, const SampleSet& split) {
    return evaluate([&](const Field2D& x) { return model.apply(x); }, split);
}

RolloutResult rollout_evaluate(const ForwardFn& step,
                               const std::vector<std::vector<Field2D>>& trajectories, int t0) {
    if (trajectories.empty()) throw std::invalid_argument("rollout_evaluate: no trajectories");
    std::size_t len = trajectories.front().size();
    for (const auto& traj : trajectories)
        if (traj.size() != len)
            throw std::invalid_argument("rollout_evaluate: ragged trajectory lengths");
    if (t0 < 0 || static_cast<std::size_t>(t0) + 1 >= len)
        throw std::invalid_argument("rollout_evaluate: trajectory shorter than the horizon");

    std::size_t horizon = len - 1 - t0;
    RolloutResult result;
    result.per_step.assign(horizon, 0.0);
    for (const auto& traj : trajectories) {
        Field2D state = traj[t0];
        for (std::size_t k = 0; k < horizon; ++k) {
            state = step(state);
            result.per_step[k] += relative_l2(state, traj[t0 + 1 + k]);
        }
    }
    double total = 0.0;
    for (auto& e : result.per_step) {
        e /= static_cast<double>(trajectories.size());
        total += e;
    }
    result.mean = total / static_cast<double>(horizon);
    return result;
}

void write_metrics_csv(std::ostream& os, const std::vector<EpochRecord>& rows) {
    os << "epoch,train_loss,val_rel_l2,lr\n";
    for (const auto& r : rows) write_row(os, r);
}

}  // namespace dcno
