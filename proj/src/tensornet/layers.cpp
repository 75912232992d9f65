#include "specsense/tensornet/layers.hpp"

#include <algorithm>
#include <cmath>

#include "gemm.hpp"

namespace specsense::nn {

using detail::gemm;

// --- specs -------------------------------------------------------------------

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv1D: return "CONV1D";
    case LayerKind::Dense: return "DENSE";
    case LayerKind::TimeDense: return "TIME_DENSE";
    case LayerKind::Lstm: return "LSTM";
    case LayerKind::Relu: return "RELU";
    case LayerKind::Softmax: return "SOFTMAX";
    case LayerKind::Dropout: return "DROPOUT";
  }
  return "?";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (auto k : {LayerKind::Conv1D, LayerKind::Dense, LayerKind::TimeDense, LayerKind::Lstm, LayerKind::Relu,
                 LayerKind::Softmax, LayerKind::Dropout}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("unknown layer kind: " + std::string(name));
}

LayerSpec LayerSpec::conv1d(std::string name, std::size_t in_channels, std::size_t filters, std::size_t kernel) {
  return {LayerKind::Conv1D, std::move(name), in_channels, filters, kernel, true, 0.0};
}
LayerSpec LayerSpec::dense(std::string name, std::size_t in_features, std::size_t units) {
  return {LayerKind::Dense, std::move(name), in_features, units, 0, true, 0.0};
}
LayerSpec LayerSpec::time_dense(std::string name, std::size_t in_features, std::size_t units) {
  return {LayerKind::TimeDense, std::move(name), in_features, units, 0, true, 0.0};
}
LayerSpec LayerSpec::lstm(std::string name, std::size_t in_features, std::size_t cells, bool return_sequences) {
  return {LayerKind::Lstm, std::move(name), in_features, cells, 0, return_sequences, 0.0};
}
LayerSpec LayerSpec::relu(std::string name) { return {LayerKind::Relu, std::move(name), 0, 0, 0, true, 0.0}; }
LayerSpec LayerSpec::softmax(std::string name) { return {LayerKind::Softmax, std::move(name), 0, 0, 0, true, 0.0}; }
LayerSpec LayerSpec::dropout(std::string name, double ratio) {
  return {LayerKind::Dropout, std::move(name), 0, 0, 0, true, ratio};
}

bool LayerSpec::has_params() const noexcept {
  return kind == LayerKind::Conv1D || kind == LayerKind::Dense || kind == LayerKind::TimeDense ||
         kind == LayerKind::Lstm;
}

void LayerSpec::validate() const {
  if (has_params()) {
    require(in_features > 0 && units > 0, "layer " + name + ": feature counts must be positive");
  }
  if (kind == LayerKind::Conv1D) require(kernel > 0, "layer " + name + ": kernel width must be positive");
  if (kind == LayerKind::Dropout) {
    require(drop_ratio >= 0.0 && drop_ratio < 1.0, "layer " + name + ": drop ratio must lie in [0, 1)");
  }
}

nlohmann::json to_json(const LayerSpec& spec) {
  nlohmann::json j{{"kind", std::string(to_string(spec.kind))}, {"name", spec.name}};
  switch (spec.kind) {
    case LayerKind::Conv1D:
      j["in_features"] = spec.in_features;
      j["units"] = spec.units;
      j["kernel"] = spec.kernel;
      break;
    case LayerKind::Dense:
    case LayerKind::TimeDense:
      j["in_features"] = spec.in_features;
      j["units"] = spec.units;
      break;
    case LayerKind::Lstm:
      j["in_features"] = spec.in_features;
      j["units"] = spec.units;
      j["return_sequences"] = spec.return_sequences;
      break;
    case LayerKind::Dropout:
      j["drop_ratio"] = spec.drop_ratio;
      break;
    case LayerKind::Relu:
    case LayerKind::Softmax:
      break;
  }
  return j;
}

LayerSpec layer_spec_from_json(const nlohmann::json& j) {
  LayerSpec s;
  s.kind = layer_kind_from_string(j.at("kind").get<std::string>());
  s.name = j.at("name").get<std::string>();
  s.in_features = j.value("in_features", std::size_t{0});
  s.units = j.value("units", std::size_t{0});
  s.kernel = j.value("kernel", std::size_t{0});
  s.return_sequences = j.value("return_sequences", true);
  s.drop_ratio = j.value("drop_ratio", 0.0);
  s.validate();
  return s;
}

// --- ParamSet ------------------------------------------------------------------

template <typename T>
void ParamSet<T>::add(std::string name, Tensor<T> value) {
  require(!contains(name), "duplicate parameter name: " + name);
  entries_.push_back({std::move(name), std::move(value)});
}

template <typename T>
Tensor<T>& ParamSet<T>::at(std::string_view name) {
  for (auto& e : entries_)
    if (e.name == name) return e.value;
  throw ValidationError("no parameter named " + std::string(name));
}

template <typename T>
const Tensor<T>& ParamSet<T>::at(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.value;
  throw ValidationError("no parameter named " + std::string(name));
}

template <typename T>
bool ParamSet<T>::contains(std::string_view name) const noexcept {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == name; });
}

template <typename T>
std::size_t ParamSet<T>::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros_like() const {
  ParamSet out;
  for (const auto& e : entries_) out.add(e.name, Tensor<T>(e.value.shape()));
  return out;
}

template <typename T>
ParamSet<T> init_params(const LayerSpec& spec, RngStream& rng) {
  spec.validate();
  auto glorot = [&](Shape shape, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * limit);
    return t;
  };
  ParamSet<T> p;
  const auto in = static_cast<double>(spec.in_features);
  const auto units = static_cast<double>(spec.units);
  switch (spec.kind) {
    case LayerKind::Conv1D: {
      const auto k = static_cast<double>(spec.kernel);
      p.add("kernel", glorot({spec.kernel, spec.in_features, spec.units}, k * in, k * units));
      p.add("bias", Tensor<T>({spec.units}));
      break;
    }
    case LayerKind::Dense:
    case LayerKind::TimeDense:
      p.add("kernel", glorot({spec.in_features, spec.units}, in, units));
      p.add("bias", Tensor<T>({spec.units}));
      break;
    case LayerKind::Lstm: {
      const std::size_t h = spec.units;
      p.add("kernel", glorot({spec.in_features, 4 * h}, in, 4.0 * units));
      p.add("recurrent_kernel", glorot({h, 4 * h}, units, 4.0 * units));
      Tensor<T> bias({4 * h});
      for (std::size_t j = h; j < 2 * h; ++j) bias[j] = T{1};
      p.add("bias", std::move(bias));
      break;
    }
    default:
      break;
  }
  return p;
}

// --- kernels -------------------------------------------------------------------

namespace {

template <typename T>
T sigmoid(T x) {
  return T{1} / (T{1} + std::exp(-x));
}

void expect_rank(const LayerSpec& spec, const Shape& shape, std::size_t rank) {
  if (shape.size() != rank) {
    throw ValidationError("layer " + spec.name + " (" + std::string(to_string(spec.kind)) + ") expects rank " +
                          std::to_string(rank) + " input, got " + shape_string(shape));
  }
}

void expect_features(const LayerSpec& spec, std::size_t got) {
  if (got != spec.in_features) {
    throw ValidationError("layer " + spec.name + " expects " + std::to_string(spec.in_features) +
                          " input features, got " + std::to_string(got));
  }
}

template <typename T>
void add_bias_rows(T* out, const T* bias, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bias[c];
}

template <typename T>
void sum_rows(const T* g, std::size_t rows, std::size_t cols, T* out) {
  std::fill(out, out + cols, T{});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += g[r * cols + c];
}

template <typename T>
ForwardResult<T> conv_forward(const LayerSpec& spec, const ParamSet<T>& params, const Tensor<T>& x) {
  expect_rank(spec, x.shape(), 3);
  expect_features(spec, x.dim(2));
  const std::size_t b = x.dim(0), t = x.dim(1), c = x.dim(2), k = spec.kernel, f = spec.units;
  const std::size_t pad = spec.pad_left();
  Tensor<T> col({b * t, k * c});
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t ti = 0; ti < t; ++ti) {
      T* row = col.data() + (bi * t + ti) * k * c;
      for (std::size_t ki = 0; ki < k; ++ki) {
        const auto src = static_cast<std::ptrdiff_t>(ti + ki) - static_cast<std::ptrdiff_t>(pad);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(t)) continue;
        std::copy_n(x.data() + (bi * t + static_cast<std::size_t>(src)) * c, c, row + ki * c);
      }
    }
  }
  Tensor<T> out({b, t, f});
  gemm<T>(false, false, b * t, f, k * c, col.data(), params.at("kernel").data(), out.data(), false);
  add_bias_rows(out.data(), params.at("bias").data(), b * t, f);
  ForwardResult<T> r{std::move(out), {}};
  r.cache.saved.push_back(std::move(col));
  return r;
}

template <typename T>
BackwardResult<T> conv_backward(const LayerSpec& spec, const ParamSet<T>& params, const LayerCache<T>& cache,
                                const Tensor<T>& g) {
  const auto& col = cache.saved.at(0);
  const std::size_t b = cache.input_shape[0], t = cache.input_shape[1], c = cache.input_shape[2];
  const std::size_t k = spec.kernel, f = spec.units, pad = spec.pad_left();
  BackwardResult<T> r;
  r.grad_params = params.zeros_like();
  gemm<T>(true, false, k * c, f, b * t, col.data(), g.data(), r.grad_params.at("kernel").data(), false);
  sum_rows(g.data(), b * t, f, r.grad_params.at("bias").data());
  Tensor<T> dcol({b * t, k * c});
  gemm<T>(false, true, b * t, k * c, f, g.data(), params.at("kernel").data(), dcol.data(), false);
  r.grad_input = Tensor<T>(cache.input_shape);
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t ti = 0; ti < t; ++ti) {
      const T* row = dcol.data() + (bi * t + ti) * k * c;
      for (std::size_t ki = 0; ki < k; ++ki) {
        const auto src = static_cast<std::ptrdiff_t>(ti + ki) - static_cast<std::ptrdiff_t>(pad);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(t)) continue;
        T* dst = r.grad_input.data() + (bi * t + static_cast<std::size_t>(src)) * c;
        for (std::size_t ci = 0; ci < c; ++ci) dst[ci] += row[ki * c + ci];
      }
    }
  }
  return r;
}

template <typename T>
ForwardResult<T> affine_forward(const LayerSpec& spec, const ParamSet<T>& params, const Tensor<T>& x) {
  expect_rank(spec, x.shape(), spec.kind == LayerKind::Dense ? 2 : 3);
  expect_features(spec, x.shape().back());
  const std::size_t rows = x.size() / spec.in_features;
  Shape out_shape = x.shape();
  out_shape.back() = spec.units;
  Tensor<T> out(out_shape);
  gemm<T>(false, false, rows, spec.units, spec.in_features, x.data(), params.at("kernel").data(), out.data(), false);
  add_bias_rows(out.data(), params.at("bias").data(), rows, spec.units);
  ForwardResult<T> r{std::move(out), {}};
  r.cache.saved.push_back(x);
  return r;
}

template <typename T>
BackwardResult<T> affine_backward(const LayerSpec& spec, const ParamSet<T>& params, const LayerCache<T>& cache,
                                  const Tensor<T>& g) {
  const auto& x = cache.saved.at(0);
  const std::size_t rows = x.size() / spec.in_features;
  BackwardResult<T> r;
  r.grad_params = params.zeros_like();
  gemm<T>(true, false, spec.in_features, spec.units, rows, x.data(), g.data(), r.grad_params.at("kernel").data(),
          false);
  sum_rows(g.data(), rows, spec.units, r.grad_params.at("bias").data());
  r.grad_input = Tensor<T>(x.shape());
  gemm<T>(false, true, rows, spec.in_features, spec.units, g.data(), params.at("kernel").data(), r.grad_input.data(),
          false);
  return r;
}

// Gate blocks are laid out [i | f | g | o] along the 4H axis.
template <typename T>
ForwardResult<T> lstm_forward(const LayerSpec& spec, const ParamSet<T>& params, const Tensor<T>& x) {
  expect_rank(spec, x.shape(), 3);
  expect_features(spec, x.dim(2));
  const std::size_t b = x.dim(0), t = x.dim(1), f = x.dim(2), h = spec.units, h4 = 4 * spec.units;
  const auto& u = params.at("recurrent_kernel");
  const auto& bias = params.at("bias");

  Tensor<T> xw({b * t, h4});
  gemm<T>(false, false, b * t, h4, f, x.data(), params.at("kernel").data(), xw.data(), false);

  Tensor<T> gates({b, t, h4});
  Tensor<T> cells({b, t, h});
  Tensor<T> hidden({b, t, h});
  Tensor<T> z({b, h4});
  Tensor<T> h_prev({b, h});
  Tensor<T> c_prev({b, h});
  for (std::size_t ti = 0; ti < t; ++ti) {
    for (std::size_t bi = 0; bi < b; ++bi) {
      const T* src = xw.data() + (bi * t + ti) * h4;
      T* dst = z.data() + bi * h4;
      for (std::size_t j = 0; j < h4; ++j) dst[j] = src[j] + bias[j];
    }
    if (ti > 0) gemm<T>(false, false, b, h4, h, h_prev.data(), u.data(), z.data(), true);
    for (std::size_t bi = 0; bi < b; ++bi) {
      const T* zr = z.data() + bi * h4;
      T* gr = gates.data() + (bi * t + ti) * h4;
      T* cr = cells.data() + (bi * t + ti) * h;
      T* hr = hidden.data() + (bi * t + ti) * h;
      T* cp = c_prev.data() + bi * h;
      T* hp = h_prev.data() + bi * h;
      for (std::size_t j = 0; j < h; ++j) {
        const T ig = sigmoid(zr[j]);
        const T fg = sigmoid(zr[h + j]);
        const T gg = std::tanh(zr[2 * h + j]);
        const T og = sigmoid(zr[3 * h + j]);
        gr[j] = ig;
        gr[h + j] = fg;
        gr[2 * h + j] = gg;
        gr[3 * h + j] = og;
        const T c = fg * cp[j] + ig * gg;
        cr[j] = c;
        hr[j] = og * std::tanh(c);
        cp[j] = c;
        hp[j] = hr[j];
      }
    }
  }
  Tensor<T> out;
  if (spec.return_sequences) {
    out = hidden;
  } else {
    out = std::move(h_prev);
  }
  ForwardResult<T> r{std::move(out), {}};
  r.cache.saved.push_back(x);
  r.cache.saved.push_back(std::move(gates));
  r.cache.saved.push_back(std::move(cells));
  r.cache.saved.push_back(std::move(hidden));
  return r;
}

template <typename T>
BackwardResult<T> lstm_backward(const LayerSpec& spec, const ParamSet<T>& params, const LayerCache<T>& cache,
                                const Tensor<T>& g) {
  const auto& x = cache.saved.at(0);
  const auto& gates = cache.saved.at(1);
  const auto& cells = cache.saved.at(2);
  const auto& hidden = cache.saved.at(3);
  const std::size_t b = x.dim(0), t = x.dim(1), f = x.dim(2), h = spec.units, h4 = 4 * spec.units;
  const auto& u = params.at("recurrent_kernel");

  BackwardResult<T> r;
  r.grad_params = params.zeros_like();
  auto& du = r.grad_params.at("recurrent_kernel");

  Tensor<T> dz_all({b * t, h4});
  Tensor<T> dz({b, h4});
  Tensor<T> dh_next({b, h});
  Tensor<T> dc_next({b, h});
  Tensor<T> h_prev({b, h});
  for (std::size_t step = t; step-- > 0;) {
    for (std::size_t bi = 0; bi < b; ++bi) {
      const T* gr = gates.data() + (bi * t + step) * h4;
      const T* cr = cells.data() + (bi * t + step) * h;
      T* dzr = dz.data() + bi * h4;
      T* dhn = dh_next.data() + bi * h;
      T* dcn = dc_next.data() + bi * h;
      for (std::size_t j = 0; j < h; ++j) {
        T dh = dhn[j];
        if (spec.return_sequences) {
          dh += g[(bi * t + step) * h + j];
        } else if (step + 1 == t) {
          dh += g[bi * h + j];
        }
        const T ig = gr[j], fg = gr[h + j], gg = gr[2 * h + j], og = gr[3 * h + j];
        const T tc = std::tanh(cr[j]);
        const T c_before = step > 0 ? cells[(bi * t + step - 1) * h + j] : T{};
        const T dc = dcn[j] + dh * og * (T{1} - tc * tc);
        dzr[j] = dc * gg * ig * (T{1} - ig);
        dzr[h + j] = dc * c_before * fg * (T{1} - fg);
        dzr[2 * h + j] = dc * ig * (T{1} - gg * gg);
        dzr[3 * h + j] = dh * tc * og * (T{1} - og);
        dcn[j] = dc * fg;
      }
      std::copy_n(dzr, h4, dz_all.data() + (bi * t + step) * h4);
    }
    if (step > 0) {
      for (std::size_t bi = 0; bi < b; ++bi)
        std::copy_n(hidden.data() + (bi * t + step - 1) * h, h, h_prev.data() + bi * h);
      gemm<T>(true, false, h, h4, b, h_prev.data(), dz.data(), du.data(), true);
      gemm<T>(false, true, b, h, h4, dz.data(), u.data(), dh_next.data(), false);
    }
  }
  gemm<T>(true, false, f, h4, b * t, x.data(), dz_all.data(), r.grad_params.at("kernel").data(), false);
  sum_rows(dz_all.data(), b * t, h4, r.grad_params.at("bias").data());
  r.grad_input = Tensor<T>(x.shape());
  gemm<T>(false, true, b * t, f, h4, dz_all.data(), params.at("kernel").data(), r.grad_input.data(), false);
  return r;
}

template <typename T>
Tensor<T> softmax_last_axis(const Tensor<T>& x) {
  require(x.rank() >= 1, "softmax of a scalar");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.size() / cols;
  Tensor<T> y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data() + r * cols;
    T* out = y.data() + r * cols;
    const T peak = *std::max_element(in, in + cols);
    T sum{};
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] = std::exp(in[c] - peak);
      sum += out[c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[c] /= sum;
  }
  return y;
}

}  // namespace

template <typename T>
ForwardResult<T> layer_forward(const LayerSpec& spec, const ParamSet<T>& params, const Tensor<T>& input, Mode mode,
                               RngStream& rng) {
  ForwardResult<T> r;
  switch (spec.kind) {
    case LayerKind::Conv1D:
      r = conv_forward(spec, params, input);
      break;
    case LayerKind::Dense:
    case LayerKind::TimeDense:
      r = affine_forward(spec, params, input);
      break;
    case LayerKind::Lstm:
      r = lstm_forward(spec, params, input);
      break;
    case LayerKind::Relu: {
      r.output = Tensor<T>(input.shape());
      for (std::size_t i = 0; i < input.size(); ++i) r.output[i] = input[i] > T{} ? input[i] : T{};
      r.cache.saved.push_back(input);
      break;
    }
    case LayerKind::Softmax:
      r.output = softmax_last_axis(input);
      r.cache.saved.push_back(r.output);
      break;
    case LayerKind::Dropout: {
      if (mode == Mode::Eval || spec.drop_ratio == 0.0) {
        r.output = input;
        break;
      }
      const T keep_scale = static_cast<T>(1.0 / (1.0 - spec.drop_ratio));
      Tensor<T> mask(input.shape());
      r.output = Tensor<T>(input.shape());
      for (std::size_t i = 0; i < input.size(); ++i) {
        mask[i] = rng.uniform() < spec.drop_ratio ? T{} : keep_scale;
        r.output[i] = input[i] * mask[i];
      }
      r.cache.saved.push_back(std::move(mask));
      break;
    }
  }
  r.cache.kind = spec.kind;
  r.cache.layer = spec.name;
  r.cache.input_shape = input.shape();
  r.cache.output_shape = r.output.shape();
  return r;
}

template <typename T>
BackwardResult<T> layer_backward(const LayerSpec& spec, const ParamSet<T>& params, const LayerCache<T>& cache,
                                 const Tensor<T>& grad_output) {
  if (cache.kind != spec.kind || cache.layer != spec.name) {
    throw ValidationError("stale or mismatched cache for layer " + spec.name);
  }
  if (grad_output.shape() != cache.output_shape) {
    throw ValidationError("gradient shape " + shape_string(grad_output.shape()) + " does not match layer " +
                          spec.name + " output " + shape_string(cache.output_shape));
  }
  switch (spec.kind) {
    case LayerKind::Conv1D:
      return conv_backward(spec, params, cache, grad_output);
    case LayerKind::Dense:
    case LayerKind::TimeDense:
      return affine_backward(spec, params, cache, grad_output);
    case LayerKind::Lstm:
      return lstm_backward(spec, params, cache, grad_output);
    case LayerKind::Relu: {
      const auto& x = cache.saved.at(0);
      BackwardResult<T> r{Tensor<T>(x.shape()), {}};
      for (std::size_t i = 0; i < x.size(); ++i) r.grad_input[i] = x[i] > T{} ? grad_output[i] : T{};
      return r;
    }
    case LayerKind::Softmax: {
      const auto& y = cache.saved.at(0);
      const std::size_t cols = y.shape().back();
      const std::size_t rows = y.size() / cols;
      BackwardResult<T> r{Tensor<T>(y.shape()), {}};
      for (std::size_t row = 0; row < rows; ++row) {
        T dot{};
        for (std::size_t c = 0; c < cols; ++c) dot += grad_output[row * cols + c] * y[row * cols + c];
        for (std::size_t c = 0; c < cols; ++c)
          r.grad_input[row * cols + c] = y[row * cols + c] * (grad_output[row * cols + c] - dot);
      }
      return r;
    }
    case LayerKind::Dropout: {
      if (cache.saved.empty()) return {grad_output, {}};
      const auto& mask = cache.saved.front();
      BackwardResult<T> r{Tensor<T>(mask.shape()), {}};
      for (std::size_t i = 0; i < mask.size(); ++i) r.grad_input[i] = grad_output[i] * mask[i];
      return r;
    }
  }
  throw ValidationError("unknown layer kind");
}

template class ParamSet<float>;
template class ParamSet<double>;
template ParamSet<float> init_params<float>(const LayerSpec&, RngStream&);
template ParamSet<double> init_params<double>(const LayerSpec&, RngStream&);
template ForwardResult<float> layer_forward<float>(const LayerSpec&, const ParamSet<float>&, const Tensor<float>&,
                                                   Mode, RngStream&);
template ForwardResult<double> layer_forward<double>(const LayerSpec&, const ParamSet<double>&, const Tensor<double>&,
                                                     Mode, RngStream&);
template BackwardResult<float> layer_backward<float>(const LayerSpec&, const ParamSet<float>&,
                                                     const LayerCache<float>&, const Tensor<float>&);
template BackwardResult<double> layer_backward<double>(const LayerSpec&, const ParamSet<double>&,
                                                       const LayerCache<double>&, const Tensor<double>&);

}  // namespace specsense::nn
