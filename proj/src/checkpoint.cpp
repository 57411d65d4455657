#include "fairdi/checkpoint.hpp"

#include <fstream>

#include "fairdi/error.hpp"

namespace fairdi {
namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

Matrix matrix_from_json(const json& j) {
  Matrix m;
  m.rows = j.at("rows").get<std::size_t>();
  m.cols = j.at("cols").get<std::size_t>();
  m.data = j.at("data").get<std::vector<double>>();
  if (m.data.size() != m.rows * m.cols) throw Error(ErrorCode::shape_error, "matrix data does not match its shape");
  return m;
}

}  // namespace

json net_to_json(const DenseNet& net) {
  json layers = json::array();
  for (const auto& layer : net.layers) {
    layers.push_back({{"weight", matrix_to_json(layer.weight)},
                      {"bias", layer.bias},
                      {"activation", layer.activation == Activation::relu ? "relu" : "identity"}});
  }
  return json{{"layers", layers}, {"param_count", net.param_count()}};
}

DenseNet net_from_json(const json& j) {
  DenseNet net;
  for (const auto& lj : j.at("layers")) {
    DenseLayer layer;
    layer.weight = matrix_from_json(lj.at("weight"));
    layer.bias = lj.at("bias").get<std::vector<double>>();
    const std::string act = lj.at("activation").get<std::string>();
    if (act == "relu") {
      layer.activation = Activation::relu;
    } else if (act == "identity") {
      layer.activation = Activation::identity;
    } else {
      throw Error(ErrorCode::parse_error, "unknown activation '" + act + "'");
    }
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

json head_to_json(const Head& head) {
  return json{{"weight", matrix_to_json(head.weight)}, {"bias", head.bias}, {"temperature", head.temperature}};
}

Head head_from_json(const json& j) {
  Head head;
  head.weight = matrix_from_json(j.at("weight"));
  head.bias = j.at("bias").get<std::vector<double>>();
  head.temperature = j.at("temperature").get<double>();
  head.validate();
  return head;
}

json checkpoint_to_json(const Checkpoint& ckpt) {
  json j{{"format", "fairdi-checkpoint"}, {"version", kCheckpointVersion}, {"kind", ckpt.kind}, {"seed", ckpt.seed}};
  if (ckpt.backbone) j["backbone"] = net_to_json(*ckpt.backbone);
  if (ckpt.head) j["head"] = head_to_json(*ckpt.head);
  if (!ckpt.backbone_ref.empty()) j["backbone_ref"] = ckpt.backbone_ref;
  if (ckpt.group) j["group"] = *ckpt.group;
  return j;
}

Checkpoint checkpoint_from_json(const json& j) {
  try {
    if (j.value("format", "") != "fairdi-checkpoint") throw Error(ErrorCode::parse_error, "not a checkpoint file");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw Error(ErrorCode::parse_error, "unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    ckpt.kind = j.at("kind").get<std::string>();
    ckpt.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("backbone")) ckpt.backbone = net_from_json(j.at("backbone"));
    if (j.contains("head")) ckpt.head = head_from_json(j.at("head"));
    ckpt.backbone_ref = j.value("backbone_ref", "");
    if (j.contains("group")) ckpt.group = j.at("group").get<int>();
    return ckpt;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  // nlohmann serializes doubles in shortest round-trip form, so parameters reload bit-exactly.
  out << checkpoint_to_json(ckpt).dump(1) << '\n';
  if (!out) throw Error(ErrorCode::io_error, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot read " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace fairdi
