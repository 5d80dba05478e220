#include "gresynth/train/checkpoint.hpp"

#include <fstream>

#include "gresynth/error.hpp"
#include "gresynth/io/npy.hpp"

namespace gresynth::train {

using nlohmann::json;

namespace {

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace

void write_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck) {
  std::filesystem::create_directories(dir);
  json cfg = ck.config;
  json index = json::object();
  for (const auto& [net, entries] : ck.index) {
    json list = json::array();
    for (const auto& e : entries)
      list.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}, {"size", e.size}});
    index[net] = list;
  }
  cfg["parameter_index"] = index;
  json arrays = json::array();
  for (const auto& [name, data] : ck.arrays) {
    io::write_npy(dir / (name + ".npy"), std::span<const float>(data), {data.size()});
    arrays.push_back(name);
  }
  cfg["arrays"] = arrays;
  write_json(dir / "config.json", cfg);
  write_json(dir / "state.json", ck.state);
}

Checkpoint read_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("no checkpoint at " + dir.string());
  Checkpoint ck;
  ck.config = read_json(dir / "config.json");
  ck.state = read_json(dir / "state.json");
  try {
    for (const auto& [net, list] : ck.config.at("parameter_index").items()) {
      auto& entries = ck.index[net];
      for (const auto& e : list)
        entries.push_back({e.at("name").get<std::string>(), e.at("shape").get<std::vector<int>>(),
                           e.at("offset").get<std::size_t>(), e.at("size").get<std::size_t>()});
    }
    for (const auto& name : ck.config.at("arrays")) {
      std::vector<std::size_t> shape;
      const auto n = name.get<std::string>();
      ck.arrays[n] = io::read_npy<float>(dir / (n + ".npy"), shape);
    }
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint config in " + dir.string() + ": " + e.what());
  }
  ck.config.erase("parameter_index");
  ck.config.erase("arrays");
  return ck;
}

void require_congruent(const Checkpoint& ck, const std::string& network,
                       const nn::ParameterLayout& layout, const std::vector<std::string>& arrays) {
  const auto it = ck.index.find(network);
  if (it == ck.index.end()) throw ConfigError("checkpoint has no parameters for " + network);
  const auto& stored = it->second;
  const auto& expected = layout.entries();
  if (stored.size() != expected.size())
    throw ConfigError("checkpoint " + network + " has " + std::to_string(stored.size()) +
                      " parameter tensors, the configured network " +
                      std::to_string(expected.size()));
  for (std::size_t i = 0; i < stored.size(); ++i)
    if (stored[i].name != expected[i].name || stored[i].shape != expected[i].shape ||
        stored[i].offset != expected[i].offset)
      throw ConfigError("checkpoint parameter " + stored[i].name +
                        " does not match the configured network (" + expected[i].name + ")");
  for (const auto& a : arrays) {
    const auto arr = ck.arrays.find(a);
    if (arr == ck.arrays.end()) throw ConfigError("checkpoint lacks array " + a);
    if (arr->second.size() != layout.total())
      throw ConfigError("checkpoint array " + a + " has " + std::to_string(arr->second.size()) +
                        " values, expected " + std::to_string(layout.total()));
  }
}

}  // namespace gresynth::train
