#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "dcno/field.hpp"
#include "dcno/model.hpp"
#include "dcno/tape.hpp"

namespace dcno {

enum class LossKind { RelativeL2, RelativeH1 };

struct TrainConfig {
  int epochs = 500;
  int batch = 8;
  double weight_decay = 1e-4;
  double peak_lr = 1e-3;
  double warmup_frac = 0.3;
  double start_div = 25.0;
  double final_div = 1e4;
  LossKind loss = LossKind::RelativeL2;
  std::uint64_t seed = 0;
};

struct AdamState {
  std::vector<double> m, v;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Paired input/output samples, the shape both train() and evaluate() consume.
struct SampleSet {
  std::vector<Field2D> inputs;
  std::vector<Field2D> outputs;

  std::size_t size() const { return inputs.size(); }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_rel_l2 = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> metrics;
  std::vector<double> best_params;  // lowest validation relative-L2
  double best_val = 0.0;
  int best_epoch = -1;
};

double relative_l2(const Field2D& pred, const Field2D& target);
double relative_h1(const Field2D& pred, const Field2D& target);

// Records ||pred - target|| / ||target|| on the tape; the target norm enters
// as a constant so only the prediction path is differentiated.
int loss_node(Tape& t, int pred, const Field2D& target, LossKind kind);

// Decoupled weight decay (theta -= lr*decay*theta) applied before the
// bias-corrected Adam delta.
void adam_step(double* theta, const double* grad, std::size_t n, AdamState& state, double lr,
               double decay);

// Cosine 1cycle: start_lr -> peak over the warmup fraction, then peak ->
// final_lr; exact at step 0, the warmup end, and total-1.
double onecycle_lr(long step, long total, const TrainConfig& cfg);

// Mini-batch training with a seeded shuffle each epoch. Metrics are recorded
// per epoch (and streamed to `csv` when given, header included); the store is
// left holding the best-validation parameters. `epoch_hook`, when set, runs
// after each epoch while the store still holds that epoch's parameters.
TrainResult train(const Model& model, ParameterStore& store, const SampleSet& train_split,
                  const SampleSet& val_split, const TrainConfig& cfg, std::ostream* csv = nullptr,
                  const std::function<void(int, const ParameterStore&)>& epoch_hook = nullptr);

using ForwardFn = std::function<Field2D(const Field2D&)>;

double evaluate(const ForwardFn& forward, const SampleSet& split);
double evaluate(const Model& model, const SampleSet& split);

struct RolloutResult {
  std::vector<double> per_step;  // mean relative-L2 at each rollout step
  double mean = 0.0;
};

// Autoregressive evaluation: from each trajectory's state at index t0 the
// model is iterated to the trajectory end and compared against the recorded
// states.
RolloutResult rollout_evaluate(const ForwardFn& step, const std::vector<std::vector<Field2D>>& trajectories,
                               int t0 = 0);

void write_metrics_csv(std::ostream& os, const std::vector<EpochRecord>& rows);

}  // namespace dcno
