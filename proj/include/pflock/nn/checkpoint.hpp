#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pflock/error.hpp"
#include "pflock/nn/discriminator.hpp"
#include "pflock/nn/training.hpp"

// Binary layout, all integers little-endian:
//   "PFNN" | u32 version | u32 record count | records...
//   record: u32 name length | name | u32 rank | u64 extents[rank] | f64 payload[prod(extents)]
// Records appear in fixed layer order: the trainable tensors, then bn.running_mean, bn.running_var,
// then a two-element "bn.config" tensor {epsilon, momentum}.

namespace pflock::nn {

inline constexpr char kCheckpointMagic[4] = {'P', 'F', 'N', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& is, const std::string& what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw CheckpointError("checkpoint truncated while reading " + what);
  return v;
}

struct Record {
  std::string name;
  Tensor tensor;
};

inline void write_record(std::ostream& os, std::string_view name, const Tensor& t) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) write_pod<std::uint64_t>(os, e);
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

inline Record read_record(std::istream& is) {
  Record r;
  const auto len = read_pod<std::uint32_t>(is, "name length");
  if (len > 256) throw CheckpointError("checkpoint corrupt: name length " + std::to_string(len));
  r.name.resize(len);
  if (!is.read(r.name.data(), len)) throw CheckpointError("checkpoint truncated while reading name");
  const auto rank = read_pod<std::uint32_t>(is, r.name + " rank");
  if (rank > 8) throw CheckpointError("checkpoint corrupt: " + r.name + " has rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) {
    e = read_pod<std::uint64_t>(is, r.name + " extents");
    if (e > (std::uint64_t{1} << 32)) throw CheckpointError("checkpoint corrupt: " + r.name + " extent too large");
  }
  r.tensor = Tensor(shape);
  if (!is.read(reinterpret_cast<char*>(r.tensor.data()), static_cast<std::streamsize>(r.tensor.size() * sizeof(double))))
    throw CheckpointError("checkpoint truncated while reading " + r.name + " payload");
  return r;
}

inline void write_header(std::ostream& os, std::uint32_t count) {
  os.write(kCheckpointMagic, 4);
  write_pod<std::uint32_t>(os, kCheckpointVersion);
  write_pod<std::uint32_t>(os, count);
}

inline std::uint32_t read_header(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4)) throw CheckpointError("checkpoint truncated while reading magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw CheckpointError("not a PFNN checkpoint");
  const auto version = read_pod<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  return read_pod<std::uint32_t>(is, "record count");
}

inline std::vector<Record> read_records(std::istream& is) {
  const auto count = read_header(is);
  if (count > 64) throw CheckpointError("checkpoint corrupt: record count " + std::to_string(count));
  std::vector<Record> records;
  for (std::uint32_t k = 0; k < count; ++k) records.push_back(read_record(is));
  return records;
}

inline const Record& expect(const std::vector<Record>& records, std::size_t index, std::string_view name) {
  if (index >= records.size() || records[index].name != name)
    throw CheckpointError("checkpoint missing layer " + std::string(name));
  return records[index];
}

}  // namespace detail

inline void save_weights(std::ostream& os, const Discriminator& net) {
  detail::write_header(os, static_cast<std::uint32_t>(kParamTensorCount + 3));
  for (std::size_t k = 0; k < kParamTensorCount; ++k) detail::write_record(os, kParamNames[k], net.params[k]);
  detail::write_record(os, "bn.running_mean", net.running_mean);
  detail::write_record(os, "bn.running_var", net.running_var);
  Tensor bn({2});
  bn[0] = net.bn_epsilon;
  bn[1] = net.bn_momentum;
  detail::write_record(os, "bn.config", bn);
}

// Rebuilds the network, inferring its architecture from the stored shapes. When `expected` is
// given, any layer whose shape differs is reported by name.
inline Discriminator load_weights(std::istream& is, const std::optional<Architecture>& expected = std::nullopt) {
  const auto records = detail::read_records(is);
  if (records.size() != kParamTensorCount + 3) throw CheckpointError("checkpoint has unexpected record count");
  const auto& conv = detail::expect(records, kConvWeight, kParamNames[kConvWeight]).tensor;
  const auto& fc1 = detail::expect(records, kFc1Weight, kParamNames[kFc1Weight]).tensor;
  const auto& fc2 = detail::expect(records, kFc2Weight, kParamNames[kFc2Weight]).tensor;
  if (conv.rank() != 4 || fc1.rank() != 2 || fc2.rank() != 2) throw CheckpointError("checkpoint has malformed layer ranks");
  Architecture arch{fc2.extent(0), conv.extent(1), conv.extent(0), fc1.extent(0)};
  const auto shapes = parameter_shapes(expected.value_or(arch));
  Discriminator net;
  net.arch = expected.value_or(arch);
  std::string mismatches;
  for (std::size_t k = 0; k < kParamTensorCount; ++k) {
    const auto& r = detail::expect(records, k, kParamNames[k]);
    if (r.tensor.shape() != shapes[k]) {
      mismatches += (mismatches.empty() ? "" : "; ") + r.name + ": checkpoint " + shape_string(r.tensor.shape()) +
                    ", expected " + shape_string(shapes[k]);
      continue;
    }
    net.params[k] = r.tensor;
  }
  if (!mismatches.empty()) throw CheckpointError("shape mismatch in " + mismatches);
  const Shape stat_shape{net.arch.conv_channels};
  net.running_mean = detail::expect(records, kParamTensorCount, "bn.running_mean").tensor;
  net.running_var = detail::expect(records, kParamTensorCount + 1, "bn.running_var").tensor;
  const auto& bn = detail::expect(records, kParamTensorCount + 2, "bn.config").tensor;
  if (net.running_mean.shape() != stat_shape) throw CheckpointError("shape mismatch in layer bn.running_mean");
  if (net.running_var.shape() != stat_shape) throw CheckpointError("shape mismatch in layer bn.running_var");
  if (bn.size() != 2) throw CheckpointError("shape mismatch in layer bn.config");
  net.bn_epsilon = bn[0];
  net.bn_momentum = bn[1];
  return net;
}

inline void save_weights(const std::string& path, const Discriminator& net) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open " + path + " for writing");
  save_weights(os, net);
  if (!os) throw CheckpointError("failed writing " + path);
}

inline Discriminator load_weights(const std::string& path, const std::optional<Architecture>& expected = std::nullopt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path);
  return load_weights(is, expected);
}

// Momentum buffers, same record layout with the trainable tensor names plus "sgd.config".
inline void save_optimizer(std::ostream& os, const OptimizerState& opt) {
  detail::write_header(os, static_cast<std::uint32_t>(kParamTensorCount + 1));
  for (std::size_t k = 0; k < kParamTensorCount; ++k) detail::write_record(os, kParamNames[k], opt.velocity[k]);
  Tensor cfg({2});
  cfg[0] = opt.learning_rate;
  cfg[1] = opt.momentum;
  detail::write_record(os, "sgd.config", cfg);
}

inline OptimizerState load_optimizer(std::istream& is, const Architecture& arch) {
  const auto records = detail::read_records(is);
  if (records.size() != kParamTensorCount + 1) throw CheckpointError("optimizer checkpoint has unexpected record count");
  const auto shapes = parameter_shapes(arch);
  OptimizerState opt;
  for (std::size_t k = 0; k < kParamTensorCount; ++k) {
    const auto& r = detail::expect(records, k, kParamNames[k]);
    if (r.tensor.shape() != shapes[k]) throw CheckpointError("shape mismatch in optimizer layer " + r.name);
    opt.velocity[k] = r.tensor;
  }
  const auto& cfg = detail::expect(records, kParamTensorCount, "sgd.config").tensor;
  if (cfg.size() != 2) throw CheckpointError("shape mismatch in layer sgd.config");
  opt.learning_rate = cfg[0];
  opt.momentum = cfg[1];
  return opt;
}

}  // namespace pflock::nn
