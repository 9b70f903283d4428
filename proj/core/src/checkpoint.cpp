#include <istream>
#include <ostream>

#include <json.hpp>

#include "trajsim/model.hpp"

namespace trajsim {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "trajsim-checkpoint-v1";

json tensor_to_json(const ad::Tensor& t) {
  json shape = json::array();
  if (t.rank() >= 1) shape.push_back(t.rows());
  if (t.rank() == 2) shape.push_back(t.cols());
  return json{{"shape", shape}, {"data", t.storage()}};
}

ad::Tensor tensor_from_json(const json& j) {
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  auto data = j.at("data").get<std::vector<double>>();
  switch (shape.size()) {
    case 0:
      if (data.size() != 1) throw InputError("checkpoint: scalar tensor needs one value");
      return ad::Tensor::scalar(data[0]);
    case 1:
      if (data.size() != shape[0]) throw InputError("checkpoint: vector length mismatch");
      return ad::Tensor::vector(std::move(data));
    case 2:
      return ad::Tensor::matrix(shape[0], shape[1], std::move(data));
    default:
      throw InputError("checkpoint: unsupported tensor rank");
  }
}

}  // namespace

void save_checkpoint(const Model& model, std::ostream& out) {
  const ModelConfig& c = model.config();
  json params = json::array();
  for (const auto& [name, t] : model.params().entries()) {
    json e = tensor_to_json(t);
    e["name"] = name;
    params.push_back(std::move(e));
  }
  json doc{
      {"format", kFormat},
      {"seed", c.seed},
      {"config",
       {{"hidden", c.hidden},
        {"time_terms", c.time_terms},
        {"location_dim", c.location_dim},
        {"fusion", std::string(to_string(c.fusion))},
        {"attention_softmax", c.attention_softmax},
        {"time_origin", c.time_origin},
        {"time_scale", c.time_scale}}},
      {"num_vertices", model.network().num_vertices()},
      {"node2vec", tensor_to_json(model.node2vec_table())},
      {"params", std::move(params)},
  };
  out << doc.dump() << '\n';
}

Model load_checkpoint(std::istream& in, const RoadNetwork& net) {
  try {
    const json doc = json::parse(in);
    if (doc.at("format").get<std::string>() != kFormat) {
      throw InputError("checkpoint: unknown format");
    }
    if (doc.at("num_vertices").get<std::size_t>() != net.num_vertices()) {
      throw InputError("checkpoint was trained on a network with a different vertex count");
    }
    const json& jc = doc.at("config");
    ModelConfig c;
    c.hidden = jc.at("hidden").get<std::size_t>();
    c.time_terms = jc.at("time_terms").get<std::size_t>();
    c.location_dim = jc.at("location_dim").get<std::size_t>();
    c.fusion = parse_fusion(jc.at("fusion").get<std::string>());
    c.attention_softmax = jc.at("attention_softmax").get<bool>();
    c.time_origin = jc.at("time_origin").get<double>();
    c.time_scale = jc.at("time_scale").get<double>();
    c.seed = doc.at("seed").get<std::uint64_t>();

    ModelParams params;
    for (const json& e : doc.at("params")) {
      params.add(e.at("name").get<std::string>(), tensor_from_json(e));
    }
    // Shapes must match a fresh initialization of the same config.
    const ModelParams expected = init_params(c);
    if (expected.size() != params.size()) throw InputError("checkpoint: parameter set mismatch");
    for (const auto& [name, t] : expected.entries()) {
      if (!params.contains(name) || !params.at(name).same_shape(t)) {
        throw InputError("checkpoint: parameter " + name + " missing or misshapen");
      }
    }
    return Model(c, net, tensor_from_json(doc.at("node2vec")), std::move(params));
  } catch (const json::exception& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace trajsim
