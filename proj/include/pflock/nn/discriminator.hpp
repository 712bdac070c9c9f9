#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pflock/nn/tensor.hpp"
#include "pflock/rng.hpp"
#include "pflock/window.hpp"

namespace pflock::nn {

// Layer sizes. The spatial input is robots x 3 with `in_channels` time samples as channels.
struct Architecture {
  std::size_t n_robots{9};
  std::size_t in_channels{10};
  std::size_t conv_channels{16};
  std::size_t hidden{512};

  std::size_t height() const { return n_robots; }
  static constexpr std::size_t width() { return 3; }
  std::size_t features() const { return conv_channels * n_robots * width(); }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

inline constexpr std::size_t kKernel = 3;

// Trainable tensors in checkpoint order.
enum ParamIndex : std::size_t {
  kConvWeight,
  kConvBias,
  kBnGamma,
  kBnBeta,
  kFc1Weight,
  kFc1Bias,
  kFc2Weight,
  kFc2Bias,
  kParamTensorCount
};

inline constexpr std::array<std::string_view, kParamTensorCount> kParamNames = {
    "conv.weight", "conv.bias", "bn.weight", "bn.bias", "fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"};

using ParamTensors = std::array<Tensor, kParamTensorCount>;

inline std::array<Shape, kParamTensorCount> parameter_shapes(const Architecture& a) {
  return {Shape{a.conv_channels, a.in_channels, kKernel, kKernel},
          Shape{a.conv_channels},
          Shape{a.conv_channels},
          Shape{a.conv_channels},
          Shape{a.hidden, a.features()},
          Shape{a.hidden},
          Shape{a.n_robots, a.hidden},
          Shape{a.n_robots}};
}

inline std::size_t parameter_count(const Architecture& a) {
  std::size_t n = 0;
  for (const auto& s : parameter_shapes(a)) n += element_count(s);
  return n;
}

inline ParamTensors zeros_like(const Architecture& a) {
  ParamTensors out;
  const auto shapes = parameter_shapes(a);
  for (std::size_t k = 0; k < kParamTensorCount; ++k) out[k] = Tensor(shapes[k]);
  return out;
}

enum class Mode { train, eval };

// Conv2d(3x3, s1, p1) -> BatchNorm2d -> ReLU -> MaxPool2d(3x3, s1, p1) -> Linear -> ReLU -> Linear.
struct Discriminator {
  Architecture arch;
  ParamTensors params;
  Tensor running_mean;
  Tensor running_var;
  double bn_epsilon{1e-5};
  double bn_momentum{0.1};

  // Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases and shifts 0; scales 1.
  static Discriminator create(const Architecture& arch, std::uint64_t seed) {
    Discriminator net;
    net.arch = arch;
    net.params = zeros_like(arch);
    net.running_mean = Tensor({arch.conv_channels}, 0.0);
    net.running_var = Tensor({arch.conv_channels}, 1.0);
    net.params[kBnGamma].fill(1.0);
    Rng rng(seed);
    auto init = [&rng](Tensor& t, std::size_t fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (double& v : t.values()) v = uniform(rng, -bound, bound);
    };
    init(net.params[kConvWeight], arch.in_channels * kKernel * kKernel);
    init(net.params[kFc1Weight], arch.features());
    init(net.params[kFc2Weight], arch.hidden);
    return net;
  }

  std::size_t parameter_count() const { return nn::parameter_count(arch); }
};

// Packs windows into a [batch, channels, robots, 3] tensor.
inline Tensor pack_batch(const Architecture& arch, std::span<const ObservationWindow* const> windows) {
  const std::size_t per = arch.in_channels * arch.height() * Architecture::width();
  Tensor input({windows.size(), arch.in_channels, arch.height(), Architecture::width()});
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const auto& w = *windows[b];
    if (w.channels != arch.in_channels || w.robots != arch.n_robots) {
      throw std::invalid_argument("conv: input shape [" + std::to_string(w.channels) + "x" + std::to_string(w.robots) +
                                  "x3] does not match [" + std::to_string(arch.in_channels) + "x" +
                                  std::to_string(arch.n_robots) + "x3]");
    }
    std::copy(w.data.begin(), w.data.end(), input.data() + b * per);
  }
  return input;
}

inline Tensor pack_batch(const Architecture& arch, std::span<const ObservationWindow> windows) {
  std::vector<const ObservationWindow*> ptrs;
  ptrs.reserve(windows.size());
  for (const auto& w : windows) ptrs.push_back(&w);
  return pack_batch(arch, ptrs);
}

// Intermediate activations kept for the backward pass.
struct ForwardCache {
  Mode mode{Mode::eval};
  std::size_t batch{0};
  Tensor input;          // [B, Ci, H, W]
  Tensor conv_out;       // [B, Co, H, W]
  Tensor normalized;     // x-hat, [B, Co, H, W]
  Tensor bn_out;         // [B, Co, H, W], pre-ReLU
  Tensor pooled;         // [B, Co, H, W]
  std::vector<std::size_t> pool_source;  // flat index into bn_out per pooled element
  Tensor batch_mean;     // [Co]
  Tensor batch_var;      // [Co], biased
  Tensor fc1_pre;        // [B, hidden]
  Tensor fc1_act;        // [B, hidden]
  Tensor logits;         // [B, N]
};

// Full forward pass. Train mode normalizes with batch statistics and records them in the cache;
// the running statistics are not touched (see update_running_stats).
inline ForwardCache forward_pass(const Discriminator& net, Tensor input, Mode mode) {
  const auto& a = net.arch;
  if (input.rank() != 4 || input.extent(1) != a.in_channels || input.extent(2) != a.height() ||
      input.extent(3) != Architecture::width()) {
    throw std::invalid_argument("conv: input " + shape_string(input.shape()) + " does not match in_channels=" +
                                std::to_string(a.in_channels) + ", robots=" + std::to_string(a.n_robots));
  }
  const std::size_t B = input.extent(0), Ci = a.in_channels, Co = a.conv_channels, H = a.height(),
                    W = Architecture::width(), HW = H * W;
  ForwardCache c;
  c.mode = mode;
  c.batch = B;

  // Convolution, zero padding 1.
  c.conv_out = Tensor({B, Co, H, W});
  const double* w = net.params[kConvWeight].data();
  const double* bias = net.params[kConvBias].data();
  const double* in = input.data();
  double* out = c.conv_out.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < Co; ++o) {
      double* op = out + (b * Co + o) * HW;
      for (std::size_t p = 0; p < HW; ++p) op[p] = bias[o];
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        const double* ip = in + (b * Ci + ci) * HW;
        const double* wp = w + (o * Ci + ci) * kKernel * kKernel;
        for (std::size_t y = 0; y < H; ++y) {
          for (std::size_t x = 0; x < W; ++x) {
            double acc = 0.0;
            for (std::size_t ky = 0; ky < kKernel; ++ky) {
              const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y + ky) - 1;
              if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(H)) continue;
              for (std::size_t kx = 0; kx < kKernel; ++kx) {
                const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x + kx) - 1;
                if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(W)) continue;
                acc += wp[ky * kKernel + kx] * ip[yy * W + xx];
              }
            }
            op[y * W + x] += acc;
          }
        }
      }
    }
  }

  // Batch normalization.
  c.batch_mean = Tensor({Co});
  c.batch_var = Tensor({Co});
  if (mode == Mode::train) {
    const double m = static_cast<double>(B * HW);
    for (std::size_t o = 0; o < Co; ++o) {
      double sum = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t p = 0; p < HW; ++p) sum += out[(b * Co + o) * HW + p];
      const double mean = sum / m;
      double var = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t p = 0; p < HW; ++p) {
          const double d = out[(b * Co + o) * HW + p] - mean;
          var += d * d;
        }
      c.batch_mean[o] = mean;
      c.batch_var[o] = var / m;
    }
  } else {
    c.batch_mean = net.running_mean;
    c.batch_var = net.running_var;
  }
  c.normalized = Tensor({B, Co, H, W});
  c.bn_out = Tensor({B, Co, H, W});
  const double* gamma = net.params[kBnGamma].data();
  const double* beta = net.params[kBnBeta].data();
  for (std::size_t o = 0; o < Co; ++o) {
    const double inv_std = 1.0 / std::sqrt(c.batch_var[o] + net.bn_epsilon);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t p = 0; p < HW; ++p) {
        const std::size_t idx = (b * Co + o) * HW + p;
        const double xh = (out[idx] - c.batch_mean[o]) * inv_std;
        c.normalized[idx] = xh;
        c.bn_out[idx] = gamma[o] * xh + beta[o];
      }
  }

  // ReLU then 3x3 max pool, stride 1, padding 1 (padding never wins).
  c.pooled = Tensor({B, Co, H, W});
  c.pool_source.assign(B * Co * HW, 0);
  for (std::size_t bo = 0; bo < B * Co; ++bo) {
    const double* src = c.bn_out.data() + bo * HW;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t ky = 0; ky < kKernel; ++ky) {
          const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t kx = 0; kx < kKernel; ++kx) {
            const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x + kx) - 1;
            if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(W)) continue;
            const std::size_t p = static_cast<std::size_t>(yy) * W + static_cast<std::size_t>(xx);
            const double v = std::max(src[p], 0.0);
            if (v > best) {
              best = v;
              arg = p;
            }
          }
        }
        c.pooled[bo * HW + y * W + x] = best;
        c.pool_source[bo * HW + y * W + x] = bo * HW + arg;
      }
  }

  // Classifier.
  const std::size_t F = a.features(), Hd = a.hidden, N = a.n_robots;
  c.fc1_pre = Tensor({B, Hd});
  c.fc1_act = Tensor({B, Hd});
  const double* w1 = net.params[kFc1Weight].data();
  const double* b1 = net.params[kFc1Bias].data();
  for (std::size_t b = 0; b < B; ++b) {
    const double* xin = c.pooled.data() + b * F;
    for (std::size_t h = 0; h < Hd; ++h) {
      const double* row = w1 + h * F;
      double acc = b1[h];
      for (std::size_t f = 0; f < F; ++f) acc += row[f] * xin[f];
      c.fc1_pre[b * Hd + h] = acc;
      c.fc1_act[b * Hd + h] = acc > 0.0 ? acc : 0.0;
    }
  }
  c.logits = Tensor({B, N});
  const double* w2 = net.params[kFc2Weight].data();
  const double* b2 = net.params[kFc2Bias].data();
  for (std::size_t b = 0; b < B; ++b) {
    const double* hin = c.fc1_act.data() + b * Hd;
    for (std::size_t n = 0; n < N; ++n) {
      const double* row = w2 + n * Hd;
      double acc = b2[n];
      for (std::size_t h = 0; h < Hd; ++h) acc += row[h] * hin[h];
      c.logits[b * N + n] = acc;
    }
  }
  c.input = std::move(input);
  return c;
}

// Logits [batch, N] for a batch of windows.
inline Tensor forward(const Discriminator& net, std::span<const ObservationWindow> batch, Mode mode) {
  return forward_pass(net, pack_batch(net.arch, batch), mode).logits;
}

// Exponential moving average of the batch statistics held in `cache` (unbiased variance).
inline void update_running_stats(Discriminator& net, const ForwardCache& cache) {
  const double m = static_cast<double>(cache.batch * net.arch.height() * Architecture::width());
  const double correction = m > 1.0 ? m / (m - 1.0) : 1.0;
  for (std::size_t o = 0; o < net.arch.conv_channels; ++o) {
    net.running_mean[o] = (1.0 - net.bn_momentum) * net.running_mean[o] + net.bn_momentum * cache.batch_mean[o];
    net.running_var[o] =
        (1.0 - net.bn_momentum) * net.running_var[o] + net.bn_momentum * cache.batch_var[o] * correction;
  }
}

inline std::vector<double> softmax(std::span<const double> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

// -log softmax(logits)[label], stabilized by max subtraction.
inline double cross_entropy(std::span<const double> logits, std::size_t label) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  return std::log(sum) - (logits[label] - mx);
}

// Index of the largest logit, lowest index on ties.
inline std::size_t argmax(std::span<const double> logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

struct BackwardResult {
  double loss{0.0};  // mean cross-entropy over the batch
  ParamTensors grads;
};

// Exact gradients of the mean batch cross-entropy. `cache` must come from forward_pass on the same
// network; in train mode gradients flow through the batch statistics.
inline BackwardResult backward(const Discriminator& net, const ForwardCache& c, std::span<const std::size_t> labels) {
  const auto& a = net.arch;
  const std::size_t B = c.batch, Ci = a.in_channels, Co = a.conv_channels, H = a.height(), W = Architecture::width(),
                    HW = H * W, F = a.features(), Hd = a.hidden, N = a.n_robots;
  if (labels.size() != B) throw std::invalid_argument("backward: label count does not match batch");
  BackwardResult r;
  r.grads = zeros_like(a);
  auto& g = r.grads;

  // d loss / d logits = (softmax - onehot) / B
  std::vector<double> dlogits(B * N);
  for (std::size_t b = 0; b < B; ++b) {
    const std::span<const double> row(c.logits.data() + b * N, N);
    if (labels[b] >= N) throw std::invalid_argument("backward: label out of range");
    r.loss += cross_entropy(row, labels[b]);
    const auto p = softmax(row);
    for (std::size_t n = 0; n < N; ++n)
      dlogits[b * N + n] = (p[n] - (n == labels[b] ? 1.0 : 0.0)) / static_cast<double>(B);
  }
  r.loss /= static_cast<double>(B);

  // fc2
  std::vector<double> dh(B * Hd, 0.0);
  const double* w2 = net.params[kFc2Weight].data();
  for (std::size_t b = 0; b < B; ++b) {
    const double* hin = c.fc1_act.data() + b * Hd;
    for (std::size_t n = 0; n < N; ++n) {
      const double d = dlogits[b * N + n];
      if (d == 0.0) continue;
      g[kFc2Bias][n] += d;
      double* gw = g[kFc2Weight].data() + n * Hd;
      const double* row = w2 + n * Hd;
      double* dhb = dh.data() + b * Hd;
      for (std::size_t h = 0; h < Hd; ++h) {
        gw[h] += d * hin[h];
        dhb[h] += d * row[h];
      }
    }
  }

  // ReLU + fc1
  std::vector<double> dpooled(B * F, 0.0);
  const double* w1 = net.params[kFc1Weight].data();
  for (std::size_t b = 0; b < B; ++b) {
    const double* xin = c.pooled.data() + b * F;
    double* dx = dpooled.data() + b * F;
    for (std::size_t h = 0; h < Hd; ++h) {
      if (c.fc1_pre[b * Hd + h] <= 0.0) continue;
      const double d = dh[b * Hd + h];
      if (d == 0.0) continue;
      g[kFc1Bias][h] += d;
      double* gw = g[kFc1Weight].data() + h * F;
      const double* row = w1 + h * F;
      for (std::size_t f = 0; f < F; ++f) {
        gw[f] += d * xin[f];
        dx[f] += d * row[f];
      }
    }
  }

  // Max pool routes to its source element; ReLU gates on the pre-activation.
  std::vector<double> dbn(B * Co * HW, 0.0);
  for (std::size_t k = 0; k < dpooled.size(); ++k) {
    const std::size_t src = c.pool_source[k];
    if (c.bn_out[src] > 0.0) dbn[src] += dpooled[k];
  }

  // Batch norm.
  std::vector<double> dconv(B * Co * HW, 0.0);
  const double m = static_cast<double>(B * HW);
  for (std::size_t o = 0; o < Co; ++o) {
    const double gamma = net.params[kBnGamma][o];
    const double inv_std = 1.0 / std::sqrt(c.batch_var[o] + net.bn_epsilon);
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t p = 0; p < HW; ++p) {
        const std::size_t idx = (b * Co + o) * HW + p;
        sum_dy += dbn[idx];
        sum_dy_xh += dbn[idx] * c.normalized[idx];
      }
    g[kBnGamma][o] = sum_dy_xh;
    g[kBnBeta][o] = sum_dy;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t p = 0; p < HW; ++p) {
        const std::size_t idx = (b * Co + o) * HW + p;
        if (c.mode == Mode::train) {
          dconv[idx] = gamma * inv_std / m * (m * dbn[idx] - sum_dy - c.normalized[idx] * sum_dy_xh);
        } else {
          dconv[idx] = gamma * inv_std * dbn[idx];
        }
      }
  }

  // Convolution weights and bias.
  const double* in = c.input.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < Co; ++o) {
      const double* dp = dconv.data() + (b * Co + o) * HW;
      for (std::size_t p = 0; p < HW; ++p) g[kConvBias][o] += dp[p];
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        const double* ip = in + (b * Ci + ci) * HW;
        double* gw = g[kConvWeight].data() + (o * Ci + ci) * kKernel * kKernel;
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x) {
            const double d = dp[y * W + x];
            if (d == 0.0) continue;
            for (std::size_t ky = 0; ky < kKernel; ++ky) {
              const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y + ky) - 1;
              if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(H)) continue;
              for (std::size_t kx = 0; kx < kKernel; ++kx) {
                const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x + kx) - 1;
                if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(W)) continue;
                gw[ky * kKernel + kx] += d * ip[yy * W + xx];
              }
            }
          }
      }
    }
  }
  return r;
}

}  // namespace pflock::nn
