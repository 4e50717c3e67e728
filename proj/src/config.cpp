#include "minmax/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace minmax {

using nlohmann::json;

namespace {

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
}

void allow_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
  require_object(j, path);
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError(path + ": unknown key '" + k + "'");
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) throw ConfigError(path + "." + key + ": required");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + "." + key + ": " + e.what());
  }
}

template <class T>
void maybe(const json& j, const char* key, const std::string& path, T& out) {
  if (j.contains(key)) out = get<T>(j, key, path);
}

// Wraps library validation errors so they surface as config errors.
template <class F>
auto checked(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const std::out_of_range& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

CostFunction cost_from_json(const json& j, const std::string& path) {
  allow_keys(j, path, {"kind", "expression"});
  const auto kind = get<std::string>(j, "kind", path);
  return checked(path, [&] {
    switch (CostFunction::kind_from_string(kind)) {
      case CostFunction::Kind::positive_sum: return CostFunction::positive_sum();
      case CostFunction::Kind::positive_increment: return CostFunction::positive_increment();
      case CostFunction::Kind::negative_squared_distance:
        return CostFunction::negative_squared_distance();
      case CostFunction::Kind::expression:
        return CostFunction::expression(get<std::string>(j, "expression", path));
    }
    throw ConfigError(path + ": unhandled cost kind");
  });
}

json cost_to_json(const CostFunction& f) {
  json j = {{"kind", f.name()}};
  if (f.kind() == CostFunction::Kind::expression) j["expression"] = f.text();
  return j;
}

std::optional<Box> box_from_json(const json& j, const std::string& path) {
  if (j.is_null()) return std::nullopt;
  allow_keys(j, path, {"lo", "hi"});
  Box b{get<std::vector<double>>(j, "lo", path), get<std::vector<double>>(j, "hi", path)};
  checked(path, [&] {
    b.validate();
    return 0;
  });
  return b;
}

ConstraintTerm term_from_json(const json& j, const std::string& path) {
  allow_keys(j, path, {"name", "weight", "projection", "target"});
  ConstraintTerm t;
  t.name = get<std::string>(j, "name", path);
  if (j.contains("weight")) {
    const json& w = j["weight"];
    const std::string wp = path + ".weight";
    allow_keys(w, wp, {"kind", "from", "to"});
    const auto kind = get<std::string>(w, "kind", wp);
    if (kind == "one") {
      t.weight = TermWeight::one();
    } else if (kind == "difference") {
      t.weight = TermWeight::difference(get<std::size_t>(w, "from", wp), get<std::size_t>(w, "to", wp));
    } else {
      throw ConfigError(wp + ".kind: expected one or difference");
    }
  }
  const json& p = j.at("projection");
  const std::string pp = path + ".projection";
  allow_keys(p, pp, {"kind", "indices", "from", "to"});
  const auto pkind = get<std::string>(p, "kind", pp);
  if (pkind == "coordinates") {
    t.projection = Projection::coordinates(get<std::vector<std::size_t>>(p, "indices", pp));
  } else if (pkind == "difference") {
    t.projection = Projection::difference(get<std::size_t>(p, "from", pp), get<std::size_t>(p, "to", pp));
  } else if (pkind == "identity") {
    t.projection = Projection::identity();
  } else {
    throw ConfigError(pp + ".kind: expected coordinates, difference or identity");
  }
  const json& g = j.at("target");
  const std::string gp = path + ".target";
  allow_keys(g, gp, {"kind", "coordinates"});
  const auto gkind = get<std::string>(g, "kind", gp);
  if (gkind == "analytic_zero") {
    t.target = TargetSide::analytic_zero();
  } else if (gkind == "sampler") {
    std::vector<Distribution1D> coords;
    const json& cs = g.at("coordinates");
    if (!cs.is_array()) throw ConfigError(gp + ".coordinates: expected an array");
    for (std::size_t k = 0; k < cs.size(); ++k) {
      coords.push_back(distribution_from_json(cs[k], gp + ".coordinates[" + std::to_string(k) + "]"));
    }
    t.target = TargetSide::sampler(std::move(coords));
  } else {
    throw ConfigError(gp + ".kind: expected sampler or analytic_zero");
  }
  return t;
}

json term_to_json(const ConstraintTerm& t) {
  json w = t.weight.kind == TermWeight::Kind::one
               ? json{{"kind", "one"}}
               : json{{"kind", "difference"}, {"from", t.weight.from}, {"to", t.weight.to}};
  json p;
  switch (t.projection.kind) {
    case Projection::Kind::coordinates:
      p = {{"kind", "coordinates"}, {"indices", t.projection.indices}};
      break;
    case Projection::Kind::difference:
      p = {{"kind", "difference"}, {"from", t.projection.from}, {"to", t.projection.to}};
      break;
    case Projection::Kind::identity: p = {{"kind", "identity"}}; break;
  }
  json g;
  if (t.target.kind == TargetSide::Kind::analytic_zero) {
    g = {{"kind", "analytic_zero"}};
  } else {
    json cs = json::array();
    for (const auto& d : t.target.coordinates) cs.push_back(to_json(d));
    g = {{"kind", "sampler"}, {"coordinates", cs}};
  }
  return {{"name", t.name}, {"weight", w}, {"projection", p}, {"target", g}};
}

}  // namespace

Distribution1D distribution_from_json(const json& j, const std::string& path) {
  require_object(j, path);
  const auto kind = get<std::string>(j, "kind", path);
  return checked(path, [&] {
    if (kind == "normal") {
      allow_keys(j, path, {"kind", "mean", "stddev"});
      return Distribution1D::normal(get<double>(j, "mean", path), get<double>(j, "stddev", path));
    }
    if (kind == "mixture") {
      allow_keys(j, path, {"kind", "weights", "means", "stddevs"});
      return Distribution1D::mixture(get<std::vector<double>>(j, "weights", path),
                                     get<std::vector<double>>(j, "means", path),
                                     get<std::vector<double>>(j, "stddevs", path));
    }
    if (kind == "student_t") {
      allow_keys(j, path, {"kind", "df"});
      return Distribution1D::student_t(get<unsigned>(j, "df", path));
    }
    if (kind == "uniform") {
      allow_keys(j, path, {"kind", "low", "high"});
      return Distribution1D::uniform(get<double>(j, "low", path), get<double>(j, "high", path));
    }
    throw ConfigError(path + ".kind: unknown distribution '" + kind + "'");
  });
}

json to_json(const Distribution1D& d) {
  switch (d.kind) {
    case Distribution1D::Kind::normal:
      return {{"kind", "normal"}, {"mean", d.means[0]}, {"stddev", d.stddevs[0]}};
    case Distribution1D::Kind::mixture:
      return {{"kind", "mixture"}, {"weights", d.weights}, {"means", d.means}, {"stddevs", d.stddevs}};
    case Distribution1D::Kind::student_t: return {{"kind", "student_t"}, {"df", d.df}};
    case Distribution1D::Kind::uniform:
      return {{"kind", "uniform"}, {"low", d.low}, {"high", d.high}};
  }
  return {};
}

ProblemInstance problem_from_json(const json& j) {
  const std::string path = "problem";
  if (j.is_string()) return problem_from_json(json{{"preset", j}});
  require_object(j, path);
  ProblemInstance p;
  if (j.contains("preset")) {
    allow_keys(j, path, {"preset", "dim", "var1", "var2", "marginals", "cost", "support_box"});
    const auto name = get<std::string>(j, "preset", path);
    if (name == "mot") {
      p = preset_mot();
    } else if (name == "dcot") {
      p = preset_dcot();
    } else if (name == "w2") {
      std::size_t d = 1;
      double v1 = 1.0, v2 = 4.0;
      maybe(j, "dim", path, d);
      maybe(j, "var1", path, v1);
      maybe(j, "var2", path, v2);
      p = checked(path, [&] { return preset_w2(d, v1, v2); });
    } else if (name == "ot") {
      const json& m = j.at("marginals");
      if (!m.is_array() || m.size() < 2) throw ConfigError(path + ".marginals: need at least two laws");
      std::vector<Distribution1D> laws;
      for (std::size_t k = 0; k < m.size(); ++k) {
        laws.push_back(distribution_from_json(m[k], path + ".marginals[" + std::to_string(k) + "]"));
      }
      const CostFunction f = j.contains("cost") ? cost_from_json(j["cost"], path + ".cost")
                                                : CostFunction::positive_sum();
      p = checked(path, [&] { return preset_multi_marginal(laws, f); });
    } else {
      throw ConfigError(path + ".preset: unknown preset '" + name + "' (expected ot, dcot, mot, w2)");
    }
    for (const char* k : {"dim", "var1", "var2"}) {
      if (j.contains(k) && name != "w2") throw ConfigError(path + "." + k + ": only valid for w2");
    }
    if ((j.contains("marginals") || j.contains("cost")) && name != "ot") {
      throw ConfigError(path + ": marginals and cost are only valid for the ot preset");
    }
    if (j.contains("support_box")) p.support_box = box_from_json(j["support_box"], path + ".support_box");
    checked(path, [&] {
      p.validate();
      return 0;
    });
    return p;
  }

  allow_keys(j, path, {"name", "dim", "cost", "terms", "latent", "support_box", "report_sign"});
  p.name = j.value("name", std::string("custom"));
  p.dim = get<std::size_t>(j, "dim", path);
  p.cost = cost_from_json(j.at("cost"), path + ".cost");
  const json& terms = j.at("terms");
  if (!terms.is_array()) throw ConfigError(path + ".terms: expected an array");
  for (std::size_t k = 0; k < terms.size(); ++k) {
    p.terms.push_back(term_from_json(terms[k], path + ".terms[" + std::to_string(k) + "]"));
  }
  p.latent = {p.dim, LatentSpec::Kind::uniform};
  if (j.contains("latent")) {
    const json& l = j["latent"];
    allow_keys(l, path + ".latent", {"dim", "kind"});
    maybe(l, "dim", path + ".latent", p.latent.dim);
    if (l.contains("kind")) {
      const auto kind = get<std::string>(l, "kind", path + ".latent");
      if (kind == "uniform") {
        p.latent.kind = LatentSpec::Kind::uniform;
      } else if (kind == "normal") {
        p.latent.kind = LatentSpec::Kind::normal;
      } else {
        throw ConfigError(path + ".latent.kind: expected uniform or normal");
      }
    }
  }
  if (j.contains("support_box")) p.support_box = box_from_json(j["support_box"], path + ".support_box");
  maybe(j, "report_sign", path, p.report_sign);
  checked(path, [&] {
    p.validate();
    return 0;
  });
  return p;
}

json to_json(const ProblemInstance& p) {
  json terms = json::array();
  for (const auto& t : p.terms) terms.push_back(term_to_json(t));
  json j = {{"name", p.name},
            {"dim", p.dim},
            {"cost", cost_to_json(p.cost)},
            {"terms", terms},
            {"latent",
             {{"dim", p.latent.dim},
              {"kind", p.latent.kind == LatentSpec::Kind::uniform ? "uniform" : "normal"}}},
            {"report_sign", p.report_sign}};
  if (p.support_box) {
    j["support_box"] = {{"lo", p.support_box->lo}, {"hi", p.support_box->hi}};
  }
  return j;
}

json to_json(const RegularizationConfig& r) {
  return {{"mode", to_string(r.mode)}, {"c", r.c}, {"L", r.lipschitz}, {"lambda", r.lambda}};
}

RegularizationConfig regularization_from_json(const json& j) {
  const std::string path = "regularization";
  RegularizationConfig r;
  if (j.is_string()) {
    r.mode = checked(path, [&] { return regularization_mode_from_string(j.get<std::string>()); });
    return r;
  }
  allow_keys(j, path, {"mode", "c", "L", "lambda"});
  if (j.contains("mode")) {
    r.mode = checked(path, [&] { return regularization_mode_from_string(get<std::string>(j, "mode", path)); });
  }
  if (j.contains("c")) {
    r.c = j["c"].is_array() ? get<std::vector<double>>(j, "c", path)
                            : std::vector<double>{get<double>(j, "c", path)};
  }
  maybe(j, "L", path, r.lipschitz);
  maybe(j, "lambda", path, r.lambda);
  return r;
}

void apply_setting(TrainConfig& cfg, const std::string& setting) {
  if (setting == "base") {
    cfg.unroll = 0;
    cfg.mixtures = 1;
  } else if (setting == "mixtures") {
    cfg.unroll = 0;
    cfg.mixtures = 5;
  } else if (setting == "unrolling") {
    cfg.unroll = 5;
    cfg.mixtures = 1;
  } else if (setting == "combined") {
    cfg.unroll = 5;
    cfg.mixtures = 5;
  } else {
    throw ConfigError("setting: unknown '" + setting +
                      "' (expected base, mixtures, unrolling or combined)");
  }
}

void apply_preset_defaults(RunConfig& rc) {
  TrainConfig& t = rc.train;
  t.iterations = 15000;
  t.return_window = 500;
  t.inner_steps = 1;
  t.warmup = 0;
  rc.stability_window = 5000;
  if (rc.preset == "mot") {
    rc.stability_window = 2500;
    rc.network.generator_hidden = rc.network.discriminator_hidden = 128;
  } else if (rc.preset == "w2") {
    t.inner_steps = 10;
    t.regularization = RegularizationConfig::divergence(150.0);
  } else if (rc.preset == "dcot") {
    t.iterations = 10000;
  }
}

namespace {

AdamHyper adam_from_json(const json& j, const std::string& path, AdamHyper h) {
  allow_keys(j, path, {"learning_rate", "beta1", "beta2", "epsilon"});
  maybe(j, "learning_rate", path, h.learning_rate);
  maybe(j, "beta1", path, h.beta1);
  maybe(j, "beta2", path, h.beta2);
  maybe(j, "epsilon", path, h.epsilon);
  return h;
}

json adam_to_json(const AdamHyper& h) {
  return {{"learning_rate", h.learning_rate},
          {"beta1", h.beta1},
          {"beta2", h.beta2},
          {"epsilon", h.epsilon}};
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  allow_keys(j, "config",
             {"problem", "network", "train", "regularization", "setting", "seeds",
              "stability_window", "evaluation", "output", "label"});
  RunConfig rc;
  rc.problem_json = j.contains("problem") ? j["problem"] : json{{"preset", "mot"}};
  rc.problem = problem_from_json(rc.problem_json);
  rc.preset = rc.problem_json.is_object() && rc.problem_json.contains("preset")
                  ? rc.problem_json["preset"].get<std::string>()
                  : rc.problem_json.is_string() ? rc.problem_json.get<std::string>() : "custom";
  apply_preset_defaults(rc);

  if (j.contains("setting")) {
    rc.setting = get<std::string>(j, "setting", "config");
    apply_setting(rc.train, rc.setting);
  }
  if (j.contains("network")) {
    const json& n = j["network"];
    allow_keys(n, "network", {"generator_hidden", "discriminator_hidden", "hidden", "depth"});
    if (n.contains("hidden")) {
      rc.network.generator_hidden = rc.network.discriminator_hidden =
          get<std::size_t>(n, "hidden", "network");
    }
    maybe(n, "generator_hidden", "network", rc.network.generator_hidden);
    maybe(n, "discriminator_hidden", "network", rc.network.discriminator_hidden);
    maybe(n, "depth", "network", rc.network.depth);
    if (rc.network.depth < 2 || rc.network.generator_hidden == 0 ||
        rc.network.discriminator_hidden == 0) {
      throw ConfigError("network: depth must be >= 2 and hidden sizes >= 1");
    }
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    const std::string p = "train";
    allow_keys(t, p,
               {"batch", "iterations", "inner_steps", "return_window", "warmup", "unroll",
                "mixtures", "trace_stride", "generator_adam", "discriminator_adam", "adam"});
    maybe(t, "batch", p, rc.train.batch);
    maybe(t, "iterations", p, rc.train.iterations);
    maybe(t, "inner_steps", p, rc.train.inner_steps);
    maybe(t, "return_window", p, rc.train.return_window);
    maybe(t, "warmup", p, rc.train.warmup);
    maybe(t, "unroll", p, rc.train.unroll);
    maybe(t, "mixtures", p, rc.train.mixtures);
    maybe(t, "trace_stride", p, rc.train.trace_stride);
    if (t.contains("adam")) {
      rc.train.generator_adam = rc.train.discriminator_adam =
          adam_from_json(t["adam"], p + ".adam", AdamHyper{});
    }
    if (t.contains("generator_adam")) {
      rc.train.generator_adam =
          adam_from_json(t["generator_adam"], p + ".generator_adam", rc.train.generator_adam);
    }
    if (t.contains("discriminator_adam")) {
      rc.train.discriminator_adam = adam_from_json(t["discriminator_adam"],
                                                   p + ".discriminator_adam",
                                                   rc.train.discriminator_adam);
    }
  }
  if (j.contains("regularization")) rc.train.regularization = regularization_from_json(j["regularization"]);
  if (j.contains("seeds")) {
    const json& s = j["seeds"];
    if (s.is_number_unsigned()) {
      rc.seeds.clear();
      for (std::uint64_t k = 0; k < s.get<std::uint64_t>(); ++k) rc.seeds.push_back(k);
    } else {
      rc.seeds = get<std::vector<std::uint64_t>>(j, "seeds", "config");
    }
    if (rc.seeds.empty()) throw ConfigError("seeds: need at least one seed");
  }
  maybe(j, "stability_window", "config", rc.stability_window);
  if (j.contains("evaluation")) {
    const json& e = j["evaluation"];
    allow_keys(e, "evaluation", {"samples", "seed"});
    maybe(e, "samples", "evaluation", rc.evaluation_samples);
    maybe(e, "seed", "evaluation", rc.evaluation_seed);
  }
  if (j.contains("output")) rc.output = get<std::string>(j, "output", "config");
  maybe(j, "label", "config", rc.label);

  // Preset windows shrink to fit a shortened run unless set explicitly.
  const bool explicit_window = j.contains("train") && j["train"].contains("return_window");
  if (!explicit_window) rc.train.return_window = std::min(rc.train.return_window, rc.train.iterations);
  checked("train", [&] {
    rc.train.validate();
    rc.train.regularization.validate(rc.problem.terms.size());
    return 0;
  });
  if (rc.stability_window == 0) throw ConfigError("stability_window must be >= 1");
  if (rc.evaluation_samples == 0) throw ConfigError("evaluation.samples must be >= 1");
  return rc;
}

json to_json(const RunConfig& rc) {
  json seeds = rc.seeds;
  json j = {{"problem", rc.problem_json},
            {"network",
             {{"generator_hidden", rc.network.generator_hidden},
              {"discriminator_hidden", rc.network.discriminator_hidden},
              {"depth", rc.network.depth}}},
            {"train",
             {{"batch", rc.train.batch},
              {"iterations", rc.train.iterations},
              {"inner_steps", rc.train.inner_steps},
              {"return_window", rc.train.return_window},
              {"warmup", rc.train.warmup},
              {"unroll", rc.train.unroll},
              {"mixtures", rc.train.mixtures},
              {"trace_stride", rc.train.trace_stride},
              {"generator_adam", adam_to_json(rc.train.generator_adam)},
              {"discriminator_adam", adam_to_json(rc.train.discriminator_adam)}}},
            {"regularization", to_json(rc.train.regularization)},
            {"seeds", seeds},
            {"stability_window", rc.stability_window},
            {"evaluation", {{"samples", rc.evaluation_samples}, {"seed", rc.evaluation_seed}}},
            {"output", rc.output.string()},
            {"label", rc.label}};
  if (!rc.setting.empty()) j["setting"] = rc.setting;
  return j;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace minmax
