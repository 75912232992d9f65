#pragma once

// Forward and backward passes for the fixed layer set.
//
// Layout conventions (leading axis is always the batch):
//   CONV1D, TIME_DENSE, LSTM   [batch, time, features]   (channels last)
//   DENSE                      [batch, features]
//   RELU, DROPOUT              any shape
//   SOFTMAX                    normalizes over the last axis

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "specsense/rng.hpp"
#include "specsense/tensornet/tensor.hpp"

namespace specsense::nn {

enum class LayerKind : std::uint8_t { Conv1D, Dense, TimeDense, Lstm, Relu, Softmax, Dropout };
enum class Mode : std::uint8_t { Train, Eval };

[[nodiscard]] std::string_view to_string(LayerKind kind);
[[nodiscard]] LayerKind layer_kind_from_string(std::string_view name);

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::string name;
  std::size_t in_features = 0;  // input channels (CONV1D) or features
  std::size_t units = 0;        // filters, units or LSTM cells
  std::size_t kernel = 0;       // CONV1D width
  bool return_sequences = true; // LSTM: full sequence vs final hidden state
  double drop_ratio = 0.0;

  static LayerSpec conv1d(std::string name, std::size_t in_channels, std::size_t filters, std::size_t kernel);
  static LayerSpec dense(std::string name, std::size_t in_features, std::size_t units);
  static LayerSpec time_dense(std::string name, std::size_t in_features, std::size_t units);
  static LayerSpec lstm(std::string name, std::size_t in_features, std::size_t cells, bool return_sequences);
  static LayerSpec relu(std::string name);
  static LayerSpec softmax(std::string name);
  static LayerSpec dropout(std::string name, double ratio);

  [[nodiscard]] bool has_params() const noexcept;
  void validate() const;

  /// Left and right zero padding for same-length CONV1D output.
  [[nodiscard]] std::size_t pad_left() const noexcept { return (kernel - 1) / 2; }
  [[nodiscard]] std::size_t pad_right() const noexcept { return kernel - 1 - pad_left(); }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

[[nodiscard]] nlohmann::json to_json(const LayerSpec& spec);
[[nodiscard]] LayerSpec layer_spec_from_json(const nlohmann::json& j);

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

/// Ordered named tensors of one layer ("kernel", "bias", "recurrent_kernel").
template <typename T>
class ParamSet {
 public:
  void add(std::string name, Tensor<T> value);
  [[nodiscard]] Tensor<T>& at(std::string_view name);
  [[nodiscard]] const Tensor<T>& at(std::string_view name) const;
  [[nodiscard]] bool contains(std::string_view name) const noexcept;
  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }
  [[nodiscard]] std::size_t scalar_count() const noexcept;

  [[nodiscard]] std::vector<NamedTensor<T>>& entries() noexcept { return entries_; }
  [[nodiscard]] const std::vector<NamedTensor<T>>& entries() const noexcept { return entries_; }

  /// Same names and shapes, all zeros.
  [[nodiscard]] ParamSet zeros_like() const;

  template <typename U>
  [[nodiscard]] ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
    return out;
  }

 private:
  std::vector<NamedTensor<T>> entries_;
};

/// Glorot-uniform kernels, zero biases, LSTM forget-gate bias +1.
template <typename T>
[[nodiscard]] ParamSet<T> init_params(const LayerSpec& spec, RngStream& rng);

template <typename T>
struct LayerCache {
  LayerKind kind = LayerKind::Relu;
  std::string layer;
  Shape input_shape;
  Shape output_shape;
  std::vector<Tensor<T>> saved;
};

template <typename T>
struct ForwardResult {
  Tensor<T> output;
  LayerCache<T> cache;
};

template <typename T>
struct BackwardResult {
  Tensor<T> grad_input;
  ParamSet<T> grad_params;
};

template <typename T>
[[nodiscard]] ForwardResult<T> layer_forward(const LayerSpec& spec, const ParamSet<T>& params, const Tensor<T>& input,
                                             Mode mode, RngStream& rng);

/// Throws ValidationError if `cache` was not produced by a forward pass of `spec`
/// or `grad_output` does not match that pass's output shape.
template <typename T>
[[nodiscard]] BackwardResult<T> layer_backward(const LayerSpec& spec, const ParamSet<T>& params,
                                               const LayerCache<T>& cache, const Tensor<T>& grad_output);

template <typename T>
using BackwardFn = std::function<BackwardResult<T>(const LayerSpec&, const ParamSet<T>&, const LayerCache<T>&,
                                                   const Tensor<T>&)>;

}  // namespace specsense::nn
