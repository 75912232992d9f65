#include "specsense/tensornet/checkpoint.hpp"

#include <fstream>

#include "specsense/binary_io.hpp"

namespace specsense::nn {

template <typename T>
void save_checkpoint(std::ostream& out, const Network<T>& network, const nlohmann::json& meta) {
  nlohmann::json manifest;
  manifest["format"] = "SPCK";
  manifest["meta"] = meta;
  manifest["layers"] = nlohmann::json::array();
  manifest["tensors"] = nlohmann::json::array();
  for (std::size_t l = 0; l < network.layer_count(); ++l) {
    const auto& spec = network.specs()[l];
    manifest["layers"].push_back(to_json(spec));
    for (const auto& e : network.params()[l].entries())
      manifest["tensors"].push_back({{"name", spec.name + "/" + e.name}, {"shape", e.value.shape()}});
  }
  io::write_container_header(out, "SPCK", kCheckpointFormatVersion, manifest.dump());
  for (const auto& ps : network.params())
    for (const auto& e : ps.entries())
      for (T v : e.value.values()) io::write_le<float>(out, static_cast<float>(v));
  if (!out) throw RuntimeFailure("failed writing checkpoint");
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Network<T>& network, const nlohmann::json& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  save_checkpoint(out, network, meta);
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(std::istream& in) {
  const auto container = io::read_container_header(in, "SPCK");
  require(container.version == kCheckpointFormatVersion, "unsupported checkpoint version");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(container.header);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }
  std::vector<LayerSpec> specs;
  for (const auto& j : manifest.at("layers")) specs.push_back(layer_spec_from_json(j));

  // Shapes come from the manifest; names must line up with what the layer kinds expect.
  RngStream unused(0);
  std::vector<ParamSet<T>> params;
  const auto& tensors = manifest.at("tensors");
  std::size_t next = 0;
  for (const auto& spec : specs) {
    ParamSet<T> expected = init_params<T>(spec, unused);
    ParamSet<T> loaded;
    for (const auto& e : expected.entries()) {
      require(next < tensors.size(), "checkpoint manifest lists too few tensors");
      const auto& t = tensors[next++];
      require(t.at("name").get<std::string>() == spec.name + "/" + e.name,
              "checkpoint tensor order mismatch at " + t.at("name").get<std::string>());
      const auto shape = t.at("shape").get<Shape>();
      require(shape == e.value.shape(), "checkpoint tensor " + spec.name + "/" + e.name + " has shape " +
                                            shape_string(shape) + ", expected " + shape_string(e.value.shape()));
      loaded.add(e.name, Tensor<T>(shape));
    }
    params.push_back(std::move(loaded));
  }
  require(next == tensors.size(), "checkpoint manifest lists extra tensors");
  for (auto& ps : params)
    for (auto& e : ps.entries())
      for (auto& v : e.value.values()) v = static_cast<T>(io::read_le<float>(in));
  return {Network<T>(std::move(specs), std::move(params)), manifest.value("meta", nlohmann::json::object())};
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  return load_checkpoint<T>(in);
}

template void save_checkpoint<float>(std::ostream&, const Network<float>&, const nlohmann::json&);
template void save_checkpoint<double>(std::ostream&, const Network<double>&, const nlohmann::json&);
template void save_checkpoint<float>(const std::filesystem::path&, const Network<float>&, const nlohmann::json&);
template void save_checkpoint<double>(const std::filesystem::path&, const Network<double>&, const nlohmann::json&);
template LoadedCheckpoint<float> load_checkpoint<float>(std::istream&);
template LoadedCheckpoint<double> load_checkpoint<double>(std::istream&);
template LoadedCheckpoint<float> load_checkpoint<float>(const std::filesystem::path&);
template LoadedCheckpoint<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace specsense::nn
