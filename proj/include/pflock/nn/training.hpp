#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "pflock/nn/discriminator.hpp"
#include "pflock/rng.hpp"

namespace pflock::nn {

struct OptimizerState {
  double learning_rate{0.025};
  double momentum{0.9};
  ParamTensors velocity;

  static OptimizerState create(const Architecture& arch, double lr, double momentum) {
    return {lr, momentum, zeros_like(arch)};
  }
};

// Classical momentum: v <- mu * v + g; theta <- theta - lr * v.
inline void sgd_step(Discriminator& net, const ParamTensors& grads, OptimizerState& opt) {
  for (std::size_t k = 0; k < kParamTensorCount; ++k) {
    auto& p = net.params[k];
    auto& v = opt.velocity[k];
    const auto& g = grads[k];
    if (p.shape() != g.shape() || p.shape() != v.shape()) {
      throw std::invalid_argument(std::string("sgd_step: shape mismatch for ") + std::string(kParamNames[k]));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = opt.momentum * v[i] + g[i];
      p[i] -= opt.learning_rate * v[i];
    }
  }
}

struct EpochStats {
  double mean_loss{0.0};
  std::size_t batches{0};
};

// One shuffled pass: forward (train mode), backward, running-stat update, SGD step per batch.
// The mean loss is weighted by batch size.
inline EpochStats train_epoch(Discriminator& net, std::span<const ObservationWindow> dataset, OptimizerState& opt,
                              std::size_t batch_size, Rng& rng) {
  if (dataset.empty()) throw std::invalid_argument("train_epoch: empty dataset");
  if (batch_size == 0) throw std::invalid_argument("train_epoch: batch_size must be positive");
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  EpochStats stats;
  double total = 0.0;
  std::vector<const ObservationWindow*> batch;
  std::vector<std::size_t> labels;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batch.clear();
    labels.clear();
    for (std::size_t k = start; k < end; ++k) {
      batch.push_back(&dataset[order[k]]);
      labels.push_back(dataset[order[k]].label);
    }
    const auto cache = forward_pass(net, pack_batch(net.arch, batch), Mode::train);
    const auto result = backward(net, cache, labels);
    update_running_stats(net, cache);
    sgd_step(net, result.grads, opt);
    total += result.loss * static_cast<double>(end - start);
    ++stats.batches;
  }
  stats.mean_loss = total / static_cast<double>(dataset.size());
  return stats;
}

inline constexpr std::size_t kEvalChunk = 256;

// Eval-mode logits, computed in chunks; calls fn(window index, logits row).
template <typename Fn>
void for_each_prediction(const Discriminator& net, std::span<const ObservationWindow> windows, Fn&& fn) {
  const std::size_t N = net.arch.n_robots;
  for (std::size_t start = 0; start < windows.size(); start += kEvalChunk) {
    const auto chunk = windows.subspan(start, std::min(kEvalChunk, windows.size() - start));
    const Tensor logits = forward(net, chunk, Mode::eval);
    for (std::size_t b = 0; b < chunk.size(); ++b)
      fn(start + b, std::span<const double>(logits.data() + b * N, N));
  }
}

// Fraction of windows whose argmax logit is the true leader.
inline double accuracy(const Discriminator& net, std::span<const ObservationWindow> dataset) {
  if (dataset.empty()) throw std::invalid_argument("accuracy: empty dataset");
  std::size_t correct = 0;
  for_each_prediction(net, dataset, [&](std::size_t i, std::span<const double> row) {
    if (argmax(row) == dataset[i].label) ++correct;
  });
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

// Summed eval-mode cross-entropy over the windows.
inline double total_cross_entropy(const Discriminator& net, std::span<const ObservationWindow> windows) {
  double sum = 0.0;
  for_each_prediction(net, windows, [&](std::size_t i, std::span<const double> row) {
    sum += cross_entropy(row, windows[i].label);
  });
  return sum;
}

// 1 / (sum of cross-entropies + gamma). Lower means a more confused discriminator.
inline double privacy_loss(const Discriminator& net, std::span<const ObservationWindow> windows, double gamma) {
  if (windows.empty()) throw std::invalid_argument("privacy_loss: empty window set");
  return 1.0 / (total_cross_entropy(net, windows) + gamma);
}

}  // namespace pflock::nn
