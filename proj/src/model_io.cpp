#include "tscore/model_io.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "tscore/errors.hpp"

namespace tscore {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()},
              {"values", std::vector<double>(m.values().begin(), m.values().end())}};
}

Matrix matrix_from_json(const json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  const auto v = j.at("values").get<std::vector<double>>();
  if (v.size() != m.size()) throw InvalidInput("matrix: value count does not match shape");
  std::copy(v.begin(), v.end(), m.values().begin());
  return m;
}

json network_to_json(const MlpNetwork& net) {
  json layers = json::array();
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const auto& l = net.layer(i);
    layers.push_back({{"activation", std::string(to_string(l.activation))},
                      {"weight", matrix_to_json(l.weight)},
                      {"bias", l.bias}});
  }
  return json{{"layers", layers}};
}

MlpNetwork network_from_json(const json& j) {
  std::vector<DenseLayer> layers;
  for (const auto& l : j.at("layers"))
    layers.push_back(DenseLayer{matrix_from_json(l.at("weight")), l.at("bias").get<Vector>(),
                                parse_activation(l.at("activation").get<std::string>())});
  return MlpNetwork(std::move(layers));
}

}  // namespace

json config_to_json(const TrainConfig& c) {
  return json{{"hidden_width", c.hidden_width},
              {"hidden_layers", c.hidden_layers},
              {"latent_dim", c.latent_dim},
              {"mixture_components", c.mixture_components},
              {"prior", std::string(to_string(c.prior_kind))},
              {"prior_variance", c.prior_variance},
              {"prior_concentration", c.prior_concentration},
              {"kernel_width", c.kernel_width},
              {"beta", c.beta},
              {"batch_size", c.batch_size},
              {"steps", c.steps},
              {"seed", c.seed},
              {"learning_rate", c.adam.learning_rate},
              {"adam_beta1", c.adam.beta1},
              {"adam_beta2", c.adam.beta2},
              {"adam_epsilon", c.adam.epsilon}};
}

TrainConfig config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  static const std::set<std::string> known{
      "hidden_width", "hidden_layers", "latent_dim", "mixture_components", "prior",
      "prior_variance", "prior_concentration", "kernel_width", "beta", "batch_size", "steps",
      "seed", "learning_rate", "adam_beta1", "adam_beta2", "adam_epsilon"};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown training config key '" + key + "'");
  try {
    if (j.contains("hidden_width")) c.hidden_width = j["hidden_width"].get<std::size_t>();
    if (j.contains("hidden_layers")) c.hidden_layers = j["hidden_layers"].get<std::size_t>();
    if (j.contains("latent_dim")) c.latent_dim = j["latent_dim"].get<std::size_t>();
    if (j.contains("mixture_components"))
      c.mixture_components = j["mixture_components"].get<std::size_t>();
    if (j.contains("prior")) c.prior_kind = parse_prior_kind(j["prior"].get<std::string>());
    if (j.contains("prior_variance")) c.prior_variance = j["prior_variance"].get<double>();
    if (j.contains("prior_concentration"))
      c.prior_concentration = j["prior_concentration"].get<double>();
    if (j.contains("kernel_width")) c.kernel_width = j["kernel_width"].get<double>();
    if (j.contains("beta")) c.beta = j["beta"].get<double>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("steps")) c.steps = j["steps"].get<std::size_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("learning_rate")) c.adam.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("adam_beta1")) c.adam.beta1 = j["adam_beta1"].get<double>();
    if (j.contains("adam_beta2")) c.adam.beta2 = j["adam_beta2"].get<double>();
    if (j.contains("adam_epsilon")) c.adam.epsilon = j["adam_epsilon"].get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  return c;
}

json model_to_json(const TrainedModel& m) {
  return json{{"config", config_to_json(m.config)},
              {"encoder", network_to_json(m.encoder)},
              {"decoder", network_to_json(m.decoder)},
              {"prior",
               {{"kind", std::string(to_string(m.prior.kind()))},
                {"scale", m.prior.scale()},
                {"centers", matrix_to_json(m.prior.centers())}}},
              {"input_scaling",
               {{"mean", m.input_scaling.mean()}, {"scale", m.input_scaling.scale()}}},
              {"residual_variance", m.residual_variance},
              {"final_loss", m.final_loss}};
}

TrainedModel model_from_json(const json& j) {
  TrainedModel m;
  m.config = config_from_json(j.at("config"));
  m.encoder = network_from_json(j.at("encoder"));
  m.decoder = network_from_json(j.at("decoder"));
  const auto& p = j.at("prior");
  const PriorKind kind = parse_prior_kind(p.at("kind").get<std::string>());
  Matrix centers = matrix_from_json(p.at("centers"));
  const double scale = p.at("scale").get<double>();
  switch (kind) {
    case PriorKind::standard_normal: m.prior = Prior::standard_normal(centers.cols()); break;
    case PriorKind::gaussian_mixture: m.prior = Prior::gaussian_mixture(std::move(centers), scale); break;
    case PriorKind::vmf_mixture: m.prior = Prior::vmf_mixture(std::move(centers), scale); break;
  }
  m.input_scaling = Normalizer(j.at("input_scaling").at("mean").get<Vector>(),
                               j.at("input_scaling").at("scale").get<Vector>());
  m.residual_variance = j.at("residual_variance").get<double>();
  m.final_loss = j.at("final_loss").get<double>();
  if (m.encoder.out_dim() != m.decoder.in_dim() || m.encoder.in_dim() != m.decoder.out_dim() ||
      m.prior.dim() != m.decoder.in_dim() || m.input_scaling.dim() != m.encoder.in_dim())
    throw InvalidInput("model: component dimensions are inconsistent");
  if (!(m.residual_variance > 0.0)) throw InvalidInput("model: residual variance must be positive");
  return m;
}

void write_model(const TrainedModel& m, std::ostream& out) {
  out << kModelMagic << ' ' << kModelVersion << '\n' << model_to_json(m).dump(1) << '\n';
}

void save_model(const TrainedModel& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file '" + path.string() + "'");
  write_model(m, out);
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, 0, "cannot open model file '" + path.string() + "'");
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kModelMagic)
    throw ParseError(1, 1, "not a model file (bad header)");
  if (version != kModelVersion)
    throw ParseError(1, 2, "unsupported model file version " + std::to_string(version));
  try {
    json j = json::parse(in);
    return model_from_json(j);
  } catch (const json::exception& e) {
    throw ParseError(2, 0, std::string("malformed model body: ") + e.what());
  } catch (const InvalidInput& e) {
    throw ParseError(2, 0, std::string("invalid model: ") + e.what());
  }
}

}  // namespace tscore
