#include "minmax/nets.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace minmax {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> view(const Array& a) {
  return {a.storage().data(), static_cast<Eigen::Index>(a.rows()),
          static_cast<Eigen::Index>(a.cols())};
}

std::size_t layer_in(const MLPConfig& cfg, std::size_t l) {
  return l == 0 ? cfg.input_dim : cfg.hidden_dim;
}

std::size_t layer_out(const MLPConfig& cfg, std::size_t l) {
  return l + 1 == cfg.depth ? cfg.output_dim : cfg.hidden_dim;
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

void MLPConfig::validate() const {
  if (input_dim == 0 || output_dim == 0) throw std::invalid_argument("MLP dims must be >= 1");
  if (depth < 2) throw std::invalid_argument("MLP depth must be >= 2");
  if (hidden_dim == 0) throw std::invalid_argument("MLP hidden_dim must be >= 1");
}

MLP::MLP(MLPConfig cfg, std::vector<Array> weights, std::vector<Array> biases) : cfg_(cfg) {
  cfg_.validate();
  if (weights.size() != cfg_.depth || biases.size() != cfg_.depth) {
    throw ShapeError("MLP expects " + std::to_string(cfg_.depth) + " layers");
  }
  params_.reserve(2 * cfg_.depth);
  for (std::size_t l = 0; l < cfg_.depth; ++l) {
    const Shape ws{layer_out(cfg_, l), layer_in(cfg_, l)};
    const Shape bs{layer_out(cfg_, l)};
    if (weights[l].shape() != ws || biases[l].shape() != bs) {
      throw ShapeError("layer " + std::to_string(l) + ": expected W" + shape_string(ws) +
                       " b" + shape_string(bs) + ", got W" +
                       shape_string(weights[l].shape()) + " b" +
                       shape_string(biases[l].shape()));
    }
    params_.emplace_back("w" + std::to_string(l), std::move(weights[l]));
    params_.emplace_back("b" + std::to_string(l), std::move(biases[l]));
  }
}

std::vector<Parameter*> MLP::parameters() {
  std::vector<Parameter*> out;
  for (Parameter& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> MLP::parameters() const {
  std::vector<const Parameter*> out;
  for (const Parameter& p : params_) out.push_back(&p);
  return out;
}

MLP::Trace MLP::trace(ad::Tape& tape, ad::Var x, bool trainable) {
  if (x.value().cols() != cfg_.input_dim) {
    throw ShapeError("MLP input has " + std::to_string(x.value().cols()) +
                     " columns, expected " + std::to_string(cfg_.input_dim));
  }
  Trace t;
  ad::Var a = x;
  for (std::size_t l = 0; l < layers(); ++l) {
    ad::Var w = trainable ? tape.parameter(weight(l)) : tape.frozen(weight(l));
    ad::Var b = trainable ? tape.parameter(bias(l)) : tape.frozen(bias(l));
    t.weights.push_back(w);
    ad::Var z = tape.affine(a, w, b);
    if (l + 1 == layers()) {
      t.output = z;
      break;
    }
    t.pre_activations.push_back(z);
    a = cfg_.activation == Activation::relu ? tape.relu(z) : tape.tanh(z);
    t.hidden.push_back(a);
  }
  return t;
}

ad::Var MLP::input_gradient(ad::Tape& tape, const Trace& tr) {
  if (cfg_.output_dim != 1) {
    throw std::invalid_argument("input gradient needs a scalar-output network");
  }
  const std::size_t n = tr.output.value().rows();
  // d out / d a_{L-1} is the last weight row, the same for every sample.
  ad::Var g = tape.broadcast_rows(tr.weights.back(), n);
  for (std::size_t l = layers() - 1; l-- > 0;) {
    ad::Var slope;
    if (cfg_.activation == Activation::relu) {
      slope = tape.step(tr.pre_activations[l]);
    } else {
      slope = tape.add_scalar(tape.scale(tape.square(tr.hidden[l]), -1.0), 1.0);
    }
    g = tape.matmul(tape.mul(g, slope), tr.weights[l]);
  }
  return g;
}

Array MLP::evaluate(const Array& x) const {
  if (x.cols() != cfg_.input_dim) {
    throw ShapeError("MLP input has " + std::to_string(x.cols()) + " columns, expected " +
                     std::to_string(cfg_.input_dim));
  }
  RowMatrix a = view(x);
  for (std::size_t l = 0; l < layers(); ++l) {
    const Array& w = weight(l).value;
    const Array& b = bias(l).value;
    RowMatrix z = a * view(w).transpose();
    z.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.storage().data(),
                                                        static_cast<Eigen::Index>(b.size()));
    if (l + 1 < layers()) {
      if (cfg_.activation == Activation::relu) {
        z = z.cwiseMax(0.0);
      } else {
        z = z.array().tanh().matrix();
      }
    }
    a = std::move(z);
  }
  Array out(Shape{x.rows(), cfg_.output_dim});
  Eigen::Map<RowMatrix>(out.storage().data(), a.rows(), a.cols()) = a;
  return out;
}

bool operator==(const MLP& a, const MLP& b) {
  if (!(a.cfg_ == b.cfg_) || a.params_.size() != b.params_.size()) return false;
  for (std::size_t i = 0; i < a.params_.size(); ++i) {
    if (!(a.params_[i].value == b.params_[i].value)) return false;
  }
  return true;
}

MLP init_mlp(const MLPConfig& cfg, Stream& rng) {
  cfg.validate();
  std::vector<Array> weights, biases;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const std::size_t fan_in = layer_in(cfg, l), fan_out = layer_out(cfg, l);
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    Array w(Shape{fan_out, fan_in});
    for (double& v : w.storage()) v = stddev * rng.normal();
    weights.push_back(std::move(w));
    biases.emplace_back(Shape{fan_out});
  }
  return MLP(cfg, std::move(weights), std::move(biases));
}

void Box::validate() const {
  if (lo.size() != hi.size() || lo.empty()) throw std::invalid_argument("box bounds mismatch");
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!(lo[i] <= hi[i])) throw std::invalid_argument("box has lo > hi");
  }
}

GeneratorEnsemble::GeneratorEnsemble(std::vector<MLP> members, std::optional<Box> support_box)
    : members_(std::move(members)), box_(std::move(support_box)) {
  if (members_.empty()) throw std::invalid_argument("generator needs at least one member");
  for (const MLP& m : members_) {
    if (m.config().input_dim != latent_dim() || m.config().output_dim != output_dim()) {
      throw ShapeError("generator members disagree on dimensions");
    }
  }
  if (box_) {
    box_->validate();
    if (box_->dim() != output_dim()) throw ShapeError("support box dimension mismatch");
  }
}

std::vector<Parameter*> GeneratorEnsemble::parameters() {
  std::vector<Parameter*> out;
  for (MLP& m : members_) {
    for (Parameter* p : m.parameters()) out.push_back(p);
  }
  return out;
}

std::vector<std::size_t> GeneratorEnsemble::route(std::size_t n, Stream& rng) const {
  std::vector<std::size_t> routes(n, 0);
  if (members_.size() > 1) {
    for (auto& r : routes) r = rng.uniform_index(members_.size());
  }
  return routes;
}

namespace {
std::vector<std::vector<std::size_t>> group_rows(const std::vector<std::size_t>& routes,
                                                 std::size_t members) {
  std::vector<std::vector<std::size_t>> groups(members);
  for (std::size_t i = 0; i < routes.size(); ++i) {
    if (routes[i] >= members) throw std::out_of_range("route index out of range");
    groups[routes[i]].push_back(i);
  }
  return groups;
}
}  // namespace

ad::Var GeneratorEnsemble::generate(ad::Tape& tape, const Array& latents,
                                    const std::vector<std::size_t>& routes, bool trainable) {
  if (routes.size() != latents.rows()) throw ShapeError("one route per latent row required");
  ad::Var out;
  if (members_.size() == 1) {
    out = members_[0].forward(tape, tape.constant(latents), trainable);
  } else {
    std::vector<ad::Var> parts;
    const auto groups = group_rows(routes, members_.size());
    for (std::size_t k = 0; k < members_.size(); ++k) {
      if (groups[k].empty()) continue;
      parts.push_back(members_[k].forward(tape, tape.constant(latents.take_rows(groups[k])),
                                          trainable));
    }
    out = tape.concat_rows(parts);
  }
  if (box_) out = tape.clamp(out, box_->lo, box_->hi);
  return out;
}

Array GeneratorEnsemble::sample(const Array& latents,
                                const std::vector<std::size_t>& routes) const {
  if (routes.size() != latents.rows()) throw ShapeError("one route per latent row required");
  Array out;
  if (members_.size() == 1) {
    out = members_[0].evaluate(latents);
  } else {
    out = Array(Shape{latents.rows(), output_dim()});
    const auto groups = group_rows(routes, members_.size());
    std::size_t offset = 0;
    for (std::size_t k = 0; k < members_.size(); ++k) {
      if (groups[k].empty()) continue;
      const Array part = members_[k].evaluate(latents.take_rows(groups[k]));
      std::copy(part.storage().begin(), part.storage().end(),
                out.storage().begin() + static_cast<std::ptrdiff_t>(offset));
      offset += part.size();
    }
  }
  if (box_) {
    const std::size_t d = output_dim();
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = std::clamp(out[i], box_->lo[i % d], box_->hi[i % d]);
    }
  }
  return out;
}

GeneratorEnsemble make_generator(std::size_t latent_dim, std::size_t output_dim,
                                 std::size_t hidden_dim, std::size_t depth,
                                 std::size_t members, std::optional<Box> box, Stream& rng) {
  if (members == 0) throw std::invalid_argument("mixture count must be >= 1");
  MLPConfig cfg{latent_dim, output_dim, depth, hidden_dim, Activation::tanh};
  std::vector<MLP> nets;
  for (std::size_t k = 0; k < members; ++k) nets.push_back(init_mlp(cfg, rng));
  return GeneratorEnsemble(std::move(nets), std::move(box));
}

std::vector<Parameter*> DiscriminatorSet::parameters() {
  std::vector<Parameter*> out;
  for (MLP& m : nets) {
    for (Parameter* p : m.parameters()) out.push_back(p);
  }
  return out;
}

Array DiscriminatorSet::eval_h(std::size_t j, const Array& z) const {
  if (j >= nets.size()) throw std::out_of_range("no discriminator for term " + std::to_string(j));
  return nets[j].evaluate(z);
}

DiscriminatorSet make_discriminators(const std::vector<std::size_t>& input_dims,
                                     std::size_t hidden_dim, std::size_t depth, Stream& rng) {
  DiscriminatorSet ds;
  for (std::size_t d : input_dims) {
    ds.nets.push_back(init_mlp(MLPConfig{d, 1, depth, hidden_dim, Activation::relu}, rng));
  }
  return ds;
}

nlohmann::json mlp_to_json(const MLP& mlp) {
  const MLPConfig& c = mlp.config();
  nlohmann::json arrays = nlohmann::json::array();
  for (const Parameter* p : mlp.parameters()) {
    arrays.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"data", p->value.storage()}});
  }
  return {{"config",
           {{"input_dim", c.input_dim},
            {"output_dim", c.output_dim},
            {"depth", c.depth},
            {"hidden_dim", c.hidden_dim},
            {"activation", to_string(c.activation)}}},
          {"arrays", arrays}};
}

MLP mlp_from_json(const nlohmann::json& j) {
  const auto& c = j.at("config");
  MLPConfig cfg{c.at("input_dim").get<std::size_t>(), c.at("output_dim").get<std::size_t>(),
                c.at("depth").get<std::size_t>(), c.at("hidden_dim").get<std::size_t>(),
                activation_from_string(c.at("activation").get<std::string>())};
  std::vector<Array> weights, biases;
  const auto& arrays = j.at("arrays");
  if (arrays.size() != 2 * cfg.depth) throw std::runtime_error("checkpoint: wrong array count");
  for (std::size_t k = 0; k < arrays.size(); ++k) {
    Array a(arrays[k].at("shape").get<Shape>(), arrays[k].at("data").get<std::vector<double>>());
    (k % 2 == 0 ? weights : biases).push_back(std::move(a));
  }
  return MLP(cfg, std::move(weights), std::move(biases));
}

nlohmann::json checkpoint_to_json(const GeneratorEnsemble& generator,
                                  const DiscriminatorSet& discriminators) {
  nlohmann::json members = nlohmann::json::array();
  for (const MLP& m : generator.members()) members.push_back(mlp_to_json(m));
  nlohmann::json disc = nlohmann::json::array();
  for (const MLP& m : discriminators.nets) disc.push_back(mlp_to_json(m));
  nlohmann::json box = nullptr;
  if (generator.support_box()) {
    box = {{"lo", generator.support_box()->lo}, {"hi", generator.support_box()->hi}};
  }
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"generator", {{"members", members}, {"support_box", box}}},
          {"discriminators", disc}};
}

void checkpoint_from_json(const nlohmann::json& j, GeneratorEnsemble& generator,
                          DiscriminatorSet& discriminators) {
  if (j.value("format", "") != kCheckpointFormat) {
    throw std::runtime_error("not a minmax-measure checkpoint");
  }
  if (j.value("version", 0) != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(j.value("version", 0)));
  }
  std::vector<MLP> members;
  for (const auto& m : j.at("generator").at("members")) members.push_back(mlp_from_json(m));
  std::optional<Box> box;
  const auto& jb = j.at("generator").at("support_box");
  if (!jb.is_null()) {
    box = Box{jb.at("lo").get<std::vector<double>>(), jb.at("hi").get<std::vector<double>>()};
  }
  generator = GeneratorEnsemble(std::move(members), std::move(box));
  discriminators.nets.clear();
  for (const auto& m : j.at("discriminators")) discriminators.nets.push_back(mlp_from_json(m));
}

void save_checkpoint(const std::filesystem::path& path, const GeneratorEnsemble& generator,
                     const DiscriminatorSet& discriminators) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(generator, discriminators).dump() << '\n';
}

void load_checkpoint(const std::filesystem::path& path, GeneratorEnsemble& generator,
                     DiscriminatorSet& discriminators) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  checkpoint_from_json(nlohmann::json::parse(in), generator, discriminators);
}

}  // namespace minmax
