/* Copyright 2026 The compnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Adam, minibatch training runs, and random hyperparameter search with
// train-error or validation-error selection.

#ifndef COMPNET_TRAIN_HPP_
#define COMPNET_TRAIN_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "compnet/compfn.hpp"
#include "compnet/error.hpp"
#include "compnet/format.hpp"
#include "compnet/nets.hpp"
#include "compnet/rng.hpp"

namespace compnet {

struct HyperParams {
  double step_size = 1e-3;
  double decay_rate = 1.0;  // in (0, 1]
  int decay_every = 10;     // epochs
  int batch_size = 64;
  int epochs = 500;
  // Early stop when the best train MSE improved by less than this over
  // `patience` epochs. patience = 0 disables it.
  int patience = 50;
  double min_improvement = 1e-9;

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kAdamEps = 1e-8;

  void validate() const {
    if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ValidationError("step_size must be > 0");
    if (!(decay_rate > 0.0 && decay_rate <= 1.0)) throw ValidationError("decay_rate must be in (0, 1]");
    if (decay_every < 1) throw ValidationError("decay_every must be >= 1");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (patience < 0) throw ValidationError("patience must be >= 0");
  }
};

/// step_size * decay_rate^floor(epoch / decay_every), epochs counted from 0.
inline double decayed_step_size(const HyperParams& hp, int epoch) {
  return hp.step_size * std::pow(hp.decay_rate, epoch / hp.decay_every);
}

/// One bias-corrected Adam update in place; `t` is the 1-based step index.
inline void adam_step(std::span<double> params, std::span<const double> grads,
                      std::span<double> moment1, std::span<double> moment2, long t,
                      double step_size) {
  if (t < 1) throw ValidationError("adam step index starts at 1");
  if (grads.size() != params.size() || moment1.size() != params.size() ||
      moment2.size() != params.size()) {
    throw ValidationError("adam_step: shape mismatch");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw DivergenceError("non-finite gradient at parameter " + std::to_string(i) + " (step " +
                            std::to_string(t) + ")");
    }
  }
  const double correction1 = 1.0 - std::pow(HyperParams::kBeta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(HyperParams::kBeta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    moment1[i] = HyperParams::kBeta1 * moment1[i] + (1.0 - HyperParams::kBeta1) * g;
    moment2[i] = HyperParams::kBeta2 * moment2[i] + (1.0 - HyperParams::kBeta2) * g * g;
    const double m_hat = moment1[i] / correction1;
    const double v_hat = moment2[i] / correction2;
    params[i] -= step_size * m_hat / (std::sqrt(v_hat) + HyperParams::kAdamEps);
  }
}

inline double mse(const Network& net, const Dataset& data) {
  if (data.size() == 0) throw ValidationError("mse needs a nonempty dataset");
  const auto predictions = predict(net, data);
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = predictions[i] - data.targets[i];
    sum += r * r;
  }
  return sum / static_cast<double>(data.size());
}

struct RunRecord {
  HyperParams hyperparams;
  std::uint64_t seed = 0;
  std::vector<double> train_curve;  // one entry per epoch actually run
  std::vector<double> test_curve;
  double final_train = std::numeric_limits<double>::infinity();
  double final_val = std::numeric_limits<double>::quiet_NaN();
  double final_test = std::numeric_limits<double>::infinity();
  bool diverged = false;
  std::string diagnostic;
  Network params;
};

/// Minibatch Adam on MSE. Each epoch reshuffles the rows with a stream
/// derived from `seed`. A non-finite loss or gradient marks the record
/// diverged instead of throwing.
inline RunRecord train_run(Network net, const Dataset& train, const Dataset& test,
                           const HyperParams& hp, std::uint64_t seed,
                           const Dataset* validation = nullptr) {
  hp.validate();
  if (train.size() == 0) throw ValidationError("train_run needs training data");
  if (train.n_inputs != n_inputs_of(net) || (test.size() && test.n_inputs != n_inputs_of(net))) {
    throw ValidationError("dataset/net dimension mismatch");
  }
  RunRecord record;
  record.hyperparams = hp;
  record.seed = seed;

  auto& params = params_of(net);
  std::vector<double> moment1(params.size(), 0.0), moment2(params.size(), 0.0);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng(seed);
  const std::size_t batch = std::min<std::size_t>(hp.batch_size, train.size());
  long step = 0;
  double best_train = std::numeric_limits<double>::infinity();
  std::vector<double> best_so_far;

  try {
    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
      const double lr = decayed_step_size(hp, epoch);
      shuffle_rng.shuffle(order);
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t end = std::min(order.size(), start + batch);
        const auto lg = gradient(net, train, std::span<const std::size_t>(order).subspan(start, end - start));
        if (!std::isfinite(lg.loss)) throw DivergenceError("non-finite minibatch loss");
        adam_step(params, lg.gradient, moment1, moment2, ++step, lr);
      }
      const double train_mse = mse(net, train);
      if (!std::isfinite(train_mse)) throw DivergenceError("non-finite train MSE");
      record.train_curve.push_back(train_mse);
      record.test_curve.push_back(test.size() ? mse(net, test) : std::numeric_limits<double>::quiet_NaN());
      best_train = std::min(best_train, train_mse);
      best_so_far.push_back(best_train);
      if (hp.patience > 0 && epoch >= hp.patience &&
          best_so_far[epoch - hp.patience] - best_train < hp.min_improvement) {
        break;
      }
    }
    record.final_train = record.train_curve.back();
    record.final_test = record.test_curve.back();
    if (validation && validation->size()) record.final_val = mse(net, *validation);
  } catch (const DivergenceError& e) {
    record.diverged = true;
    record.diagnostic = e.what();
    record.final_train = record.final_test = std::numeric_limits<double>::infinity();
    record.final_val = std::numeric_limits<double>::infinity();
  }
  record.params = std::move(net);
  return record;
}

// ---------------------------------------------------------------------------
// Random search
// ---------------------------------------------------------------------------

enum class Selection { kByTrain, kByValidation };

inline std::string to_string(Selection s) {
  return s == Selection::kByTrain ? "by_train" : "by_validation";
}

inline Selection parse_selection(const std::string& name) {
  if (name == "by_train") return Selection::kByTrain;
  if (name == "by_validation") return Selection::kByValidation;
  throw ValidationError("unknown selection '" + name + "' (expected by_train or by_validation)");
}

/// Sampling ranges for the search. Defaults bracket the regimes Adam's
/// standard settings are tuned for; the epoch budget and early stop are fixed
/// across trials.
struct SearchSpace {
  double step_min = 1e-5, step_max = 1e-1;  // log-uniform
  double decay_min = 0.5, decay_max = 1.0;  // uniform
  int decay_every_min = 5, decay_every_max = 50;
  std::vector<int> batch_sizes = {32, 64, 128, 256};
  int epochs = 500;
  int patience = 50;
  double min_improvement = 1e-9;

  void validate() const {
    if (!(step_min > 0.0 && step_min <= step_max)) throw ValidationError("bad step size range");
    if (!(decay_min > 0.0 && decay_min <= decay_max && decay_max <= 1.0)) {
      throw ValidationError("decay range must lie in (0, 1]");
    }
    if (decay_every_min < 1 || decay_every_min > decay_every_max) {
      throw ValidationError("bad decay frequency range");
    }
    if (batch_sizes.empty()) throw ValidationError("batch size menu is empty");
    for (int b : batch_sizes) {
      if (b < 1) throw ValidationError("batch sizes must be positive");
    }
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
  }
};

inline HyperParams draw_hyperparams(const SearchSpace& space, Rng& rng) {
  HyperParams hp;
  hp.step_size = std::exp(rng.uniform(std::log(space.step_min), std::log(space.step_max)));
  hp.decay_rate = rng.uniform(space.decay_min, space.decay_max);
  hp.decay_every = static_cast<int>(rng.uniform_int(space.decay_every_min, space.decay_every_max));
  hp.batch_size = space.batch_sizes[rng.uniform_index(space.batch_sizes.size())];
  hp.epochs = space.epochs;
  hp.patience = space.patience;
  hp.min_improvement = space.min_improvement;
  return hp;
}

inline double selection_metric(const RunRecord& record, Selection selection) {
  return selection == Selection::kByTrain ? record.final_train : record.final_val;
}

/// Argmin of the selection metric over non-diverged records; ties go to the
/// earliest record.
inline std::size_t select_best(std::span<const RunRecord> records, Selection selection) {
  std::size_t best = records.size();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double metric = selection_metric(records[i], selection);
    if (records[i].diverged || !std::isfinite(metric)) continue;
    if (best == records.size() || metric < selection_metric(records[best], selection)) best = i;
  }
  if (best == records.size()) throw DivergenceError("every search trial diverged");
  return best;
}

struct SearchOptions {
  int trials = 30;
  Selection selection = Selection::kByTrain;
  std::uint64_t seed = 0;
  // Fraction of the training rows held out for validation. Negative means
  // "0.2 when selecting by validation, else 0".
  double holdout_fraction = -1.0;
  int threads = 1;
};

struct SearchResult {
  std::vector<RunRecord> records;
  std::size_t best = 0;
  const RunRecord& best_record() const { return records[best]; }
};

/// Rows of `data` split into (train, validation) by a seeded row permutation.
inline std::pair<Dataset, Dataset> split_holdout(const Dataset& data, double fraction,
                                                 std::uint64_t seed) {
  const auto held = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(data.size())));
  if (held == 0 || held >= data.size()) {
    throw ValidationError("holdout fraction leaves an empty train or validation split");
  }
  auto perm = random_permutation(data.size(), seed);
  Dataset train, val;
  train.n_inputs = val.n_inputs = data.n_inputs;
  train.noise_sigma = val.noise_sigma = data.noise_sigma;
  train.seed = val.seed = data.seed;
  for (std::size_t k = 0; k < perm.size(); ++k) {
    Dataset& dst = k < data.size() - held ? train : val;
    const auto row = data.row(perm[k]);
    dst.inputs.insert(dst.inputs.end(), row.begin(), row.end());
    dst.targets.push_back(data.targets[perm[k]]);
  }
  return {std::move(train), std::move(val)};
}

/// K seeded trials. Trial t draws its hyperparameters in order from the
/// search stream and derives its init and shuffle seeds from (seed, t), so
/// results do not depend on the thread count.
inline SearchResult random_search(const NetSpec& spec, const Dataset& train, const Dataset& test,
                                  const SearchSpace& space, const SearchOptions& options) {
  if (options.trials < 1) throw ValidationError("random search needs K >= 1 trials");
  space.validate();
  double holdout = options.holdout_fraction;
  if (holdout < 0.0) holdout = options.selection == Selection::kByValidation ? 0.2 : 0.0;
  if (options.selection == Selection::kByValidation && holdout <= 0.0) {
    throw ValidationError("selection by validation needs a holdout fraction > 0");
  }
  Dataset fit = train, validation;
  if (holdout > 0.0) std::tie(fit, validation) = split_holdout(train, holdout, mix_seed(options.seed, 0xB0));

  Rng space_rng(options.seed);
  std::vector<HyperParams> draws;
  for (int t = 0; t < options.trials; ++t) draws.push_back(draw_hyperparams(space, space_rng));

  SearchResult result;
  result.records.resize(options.trials);
  auto run_trial = [&](int t) {
    const std::uint64_t trial_seed = mix_seed(options.seed, static_cast<std::uint64_t>(t) + 1);
    Network net = init(spec, mix_seed(trial_seed, 0));
    result.records[t] = train_run(std::move(net), fit, test, draws[t], mix_seed(trial_seed, 1),
                                  holdout > 0.0 ? &validation : nullptr);
  };
  const int threads = std::max(1, std::min(options.threads, options.trials));
  if (threads == 1) {
    for (int t = 0; t < options.trials; ++t) run_trial(t);
  } else {
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (int t = next++; t < options.trials; t = next++) run_trial(t);
      });
    }
  }
  result.best = select_best(result.records, options.selection);
  return result;
}

/// "trial,epoch,train_mse,test_mse"
inline void write_curves_csv(std::ostream& out, std::span<const RunRecord> records) {
  out << "trial,epoch,train_mse,test_mse\n";
  for (std::size_t t = 0; t < records.size(); ++t) {
    for (std::size_t e = 0; e < records[t].train_curve.size(); ++e) {
      out << t << ',' << e << ',' << format_double(records[t].train_curve[e]) << ','
          << format_double(records[t].test_curve[e]) << '\n';
    }
  }
}

/// "trial,step_size,decay_rate,decay_every,batch_size,final_train,final_val,final_test,diverged"
inline void write_summary_csv(std::ostream& out, std::span<const RunRecord> records) {
  out << "trial,step_size,decay_rate,decay_every,batch_size,final_train,final_val,final_test,diverged\n";
  for (std::size_t t = 0; t < records.size(); ++t) {
    const auto& r = records[t];
    out << t << ',' << format_double(r.hyperparams.step_size) << ','
        << format_double(r.hyperparams.decay_rate) << ',' << r.hyperparams.decay_every << ','
        << r.hyperparams.batch_size << ',' << format_double(r.final_train) << ','
        << format_double(r.final_val) << ',' << format_double(r.final_test) << ','
        << (r.diverged ? 1 : 0) << '\n';
  }
}

}  // namespace compnet

#endif  // COMPNET_TRAIN_HPP_
