// minmax-measure: training, oracle, evaluation and report front end.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "minmax/config.hpp"
#include "minmax/evaluation.hpp"
#include "minmax/oracle.hpp"
#include "minmax/report.hpp"
#include "minmax/runner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace minmax;

namespace {

enum Exit { ok = 0, config_error = 1, numeric_abort = 2, oracle_infeasible = 3 };

fs::path default_root() {
  if (const char* env = std::getenv("MINMAX_MEASURE_OUT"); env && *env) return env;
  return "runs";
}

struct TrainFlags {
  std::string config, preset, setting, reg, out, label, seed_list;
  std::size_t dim = 0, hidden = 0, n_inf = 0, iterations = 0, seeds = 0, workers = 1, unroll = 0,
              mixtures = 0, batch = 0, warmup = 0, trace_stride = 0, window = 0;
  double c = 0.0, L = 0.0, lambda = 0.0;
  bool quiet = false;
};

void add_train(CLI::App& app, TrainFlags& f) {
  app.add_option("--config", f.config, "Run configuration JSON");
  app.add_option("--preset", f.preset, "ot, dcot, mot or w2");
  app.add_option("--setting", f.setting, "base, mixtures, unrolling or combined");
  app.add_option("--reg", f.reg, "none, divergence or lipschitz");
  app.add_option("--c", f.c, "Divergence coefficient c");
  app.add_option("--L", f.L, "Lipschitz constant");
  app.add_option("--lambda", f.lambda, "Gradient penalty weight");
  app.add_option("--dim", f.dim, "Marginal dimension for w2");
  app.add_option("--hidden", f.hidden, "Hidden width of every network");
  app.add_option("--n-inf", f.n_inf, "Discriminator steps per iteration");
  app.add_option("--iterations", f.iterations, "Supremum iterations N");
  app.add_option("--unroll", f.unroll, "Unrolling steps U");
  app.add_option("--mixtures", f.mixtures, "Generator mixture size");
  app.add_option("--batch", f.batch, "Batch size");
  app.add_option("--warmup", f.warmup, "Warm-up iterations N_s");
  app.add_option("--trace-stride", f.trace_stride, "Write every k-th trace row");
  app.add_option("--window", f.window, "Trailing window of the stability metric");
  app.add_option("--seeds", f.seeds, "Number of seeds (0..n-1)");
  app.add_option("--seed-list", f.seed_list, "Comma-separated seeds");
  app.add_option("--workers", f.workers, "Runs in parallel");
  app.add_option("--out", f.out, "Output root (default $MINMAX_MEASURE_OUT/<label>)");
  app.add_option("--label", f.label, "Label grouping runs in reports");
  app.add_flag("--quiet", f.quiet, "No progress output");
}

json train_json(const TrainFlags& f) {
  json j = json::object();
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw ConfigError("cannot open config file " + f.config);
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError(f.config + ": " + e.what());
    }
  }
  if (!f.preset.empty()) {
    j["problem"] = {{"preset", f.preset}};
    if (f.dim) j["problem"]["dim"] = f.dim;
  } else if (f.dim) {
    if (!j.contains("problem") || !j["problem"].is_object()) throw ConfigError("--dim needs --preset w2");
    j["problem"]["dim"] = f.dim;
  }
  if (!f.setting.empty()) j["setting"] = f.setting;
  if (!f.reg.empty() || f.c > 0 || f.L > 0 || f.lambda > 0) {
    json r = j.contains("regularization") && j["regularization"].is_object() ? j["regularization"]
                                                                              : json::object();
    if (!f.reg.empty()) r["mode"] = f.reg;
    if (f.c > 0) r["c"] = f.c;
    if (f.L > 0) r["L"] = f.L;
    if (f.lambda > 0) r["lambda"] = f.lambda;
    j["regularization"] = r;
  }
  if (f.hidden) j["network"]["hidden"] = f.hidden;
  auto set_train = [&](const char* key, std::size_t v) {
    if (v) j["train"][key] = v;
  };
  set_train("inner_steps", f.n_inf);
  set_train("iterations", f.iterations);
  set_train("unroll", f.unroll);
  set_train("mixtures", f.mixtures);
  set_train("batch", f.batch);
  set_train("warmup", f.warmup);
  set_train("trace_stride", f.trace_stride);
  if (f.window) j["stability_window"] = f.window;
  if (f.seeds) j["seeds"] = f.seeds;
  if (!f.seed_list.empty()) {
    json list = json::array();
    std::stringstream ss(f.seed_list);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        list.push_back(std::stoull(tok));
      } catch (const std::exception&) {
        throw ConfigError("--seed-list: bad seed '" + tok + "'");
      }
    }
    j["seeds"] = list;
  }
  if (!f.out.empty()) j["output"] = f.out;
  if (!f.label.empty()) j["label"] = f.label;
  return j;
}

int cmd_train(const TrainFlags& f) {
  const RunConfig rc = run_config_from_json(train_json(f));
  const fs::path root = rc.output.empty() ? default_root() / run_label(rc) : rc.output;
  fs::create_directories(root);
  {
    std::ofstream echo(root / "config.json");
    echo << to_json(rc).dump(2) << '\n';
  }
  if (!f.quiet) {
    std::cerr << "training " << run_label(rc) << ": " << rc.seeds.size() << " seed(s), N="
              << rc.train.iterations << ", output " << root.string() << '\n';
  }
  const auto outcomes = run_all(rc, root, f.workers);
  std::vector<fs::path> dirs;
  int code = ok;
  for (const auto& o : outcomes) {
    dirs.push_back(o.dir);
    if (o.completed()) {
      std::cout << "seed " << o.seed << ": value " << format_double(o.reported_value)
                << ", stability " << format_double(o.stability) << ", "
                << format_double(o.wall_clock_seconds) << " s\n";
    } else {
      std::cout << "seed " << o.seed << ": aborted at iteration " << o.abort_iteration << ": "
                << o.abort_message << '\n';
      code = numeric_abort;
    }
  }
  write_report(build_report(dirs), root / "report");
  std::cout << "report: " << (root / "report" / "aggregate.csv").string() << '\n';
  return code;
}

struct OracleFlags {
  std::string preset = "mot";
  std::size_t grid = 0;
  std::size_t bins = 25;
  std::string L_list = "0.5,1,2,4";
  std::string sweep;
  std::string out;
};

std::vector<double> parse_list(const std::string& s, const char* flag) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      v.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError(std::string(flag) + ": bad number '" + tok + "'");
    }
  }
  if (v.empty()) throw ConfigError(std::string(flag) + ": empty list");
  return v;
}

std::vector<std::size_t> parse_sweep(const std::string& s) {
  std::size_t a = 0, b = 0, step = 0;
  char c1 = 0, c2 = 0;
  std::stringstream ss(s);
  if (!(ss >> a >> c1 >> b >> c2 >> step) || c1 != ':' || c2 != ':' || step == 0 || a == 0 || b < a) {
    throw ConfigError("--grid-sweep: expected from:to:step, e.g. 20:60:10");
  }
  std::vector<std::size_t> g;
  for (std::size_t n = a; n <= b; n += step) g.push_back(n);
  return g;
}

OracleResult solve_one(const std::string& preset, std::size_t grid, std::size_t bins) {
  if (preset == "mot") {
    return discrete_mot(mot_mu1(), mot_mu2(), CostFunction::positive_increment(), grid, grid);
  }
  if (preset == "dcot") {
    DcotOptions o;
    o.grid = grid;
    o.difference_bins = bins;
    return discrete_dcot(o);
  }
  if (preset == "ot") {
    return discrete_ot(dcot_marginal(), dcot_marginal(), CostFunction::positive_sum(), grid, grid);
  }
  if (preset == "w2") {
    OracleResult r = discrete_ot(Distribution1D::normal(0, 1), Distribution1D::normal(0, 2),
                                 CostFunction::negative_squared_distance(), grid, grid);
    return r;
  }
  throw ConfigError("--preset: unknown oracle preset '" + preset +
                    "' (expected mot, dcot, ot, w2 or ot-lipschitz)");
}

json result_json(const OracleResult& r) {
  json j = to_json(r);
  j.erase("plan");
  return j;
}

int cmd_oracle(const OracleFlags& f) {
  const std::size_t default_grid = f.preset == "mot" ? 60 : f.preset == "dcot" ? 40 : 100;
  const std::size_t grid = f.grid ? f.grid : default_grid;
  json out;
  bool infeasible = false;
  if (f.preset == "ot-lipschitz") {
    const auto Ls = parse_list(f.L_list, "--L");
    const auto mu = dcot_marginal();
    const OracleResult base = discrete_ot(mu, mu, CostFunction::positive_sum(), grid, grid);
    out = {{"preset", f.preset}, {"grid", grid}, {"discrete_ot", result_json(base)},
           {"relaxation", json::array()}};
    bool monotone = true;
    double prev = HUGE_VAL;
    for (double L : Ls) {
      const OracleResult r = discrete_lipschitz_relaxation(mu, mu, CostFunction::positive_sum(), L, grid);
      json row = result_json(r);
      row["L"] = L;
      out["relaxation"].push_back(row);
      if (r.status != LpStatus::optimal) infeasible = true;
      if (r.value > prev + 1e-8) monotone = false;
      prev = r.value;
    }
    out["nonincreasing"] = monotone;
  } else if (!f.sweep.empty()) {
    out = {{"preset", f.preset}, {"sweep", json::array()}};
    for (std::size_t g : parse_sweep(f.sweep)) {
      const OracleResult r = solve_one(f.preset, g, f.bins);
      json row = result_json(r);
      row["grid_size"] = g;
      out["sweep"].push_back(row);
      if (r.status == LpStatus::infeasible) infeasible = true;
    }
  } else {
    const OracleResult r = solve_one(f.preset, grid, f.bins);
    out = result_json(r);
    out["preset"] = f.preset;
    if (r.status == LpStatus::infeasible) infeasible = true;
  }
  const std::string text = out.dump(2);
  std::cout << text << '\n';
  if (!f.out.empty()) {
    std::ofstream o(f.out);
    o << text << '\n';
  }
  return infeasible ? oracle_infeasible : ok;
}

struct EvaluateFlags {
  std::string run;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_evaluate(const EvaluateFlags& f) {
  const fs::path dir = f.run;
  std::ifstream in(dir / "summary.json");
  if (!in) throw ConfigError("no summary.json in " + dir.string());
  json summary;
  in >> summary;
  const RunConfig rc = run_config_from_json(summary.at("config"));
  Networks nets = make_networks(rc.problem, rc.network, rc.train.mixtures, summary.at("seed"));
  load_checkpoint(dir / "checkpoint.json", nets.generator, nets.discriminators);
  const std::size_t n = f.samples ? f.samples : rc.evaluation_samples;
  const std::uint64_t seed = f.seed_set ? f.seed : rc.evaluation_seed;
  const Array samples = evaluation_samples(nets.generator, rc.problem, n, seed);
  const double v = objective_value(samples, rc.problem.cost);
  json out = {{"run", dir.generic_string()},
              {"samples", n},
              {"evaluation_seed", seed},
              {"objective_value", v},
              {"value", rc.problem.report_sign * v},
              {"feasibility", to_json(feasibility_report(samples, rc.problem, seed))}};
  std::cout << out.dump(2) << '\n';
  return ok;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_dir) {
  std::vector<fs::path> paths(inputs.begin(), inputs.end());
  const auto dirs = expand_run_dirs(paths);
  const Report rep = build_report(dirs);
  const fs::path out = out_dir.empty() ? default_root() / "report" : fs::path(out_dir);
  write_report(rep, out);
  for (const auto& m : rep.missing) std::cerr << "missing: " << m << '\n';
  std::cout << aggregate_csv(rep);
  if (rep.runs.empty()) {
    std::cerr << "no readable runs\n";
    return config_error;
  }
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linearly constrained optimization over measures by generator/discriminator training"};
  app.require_subcommand(1);

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Train one or more seeds and write run directories");
  add_train(*train, tf);

  OracleFlags of;
  auto* oracle = app.add_subcommand("oracle", "Solve the discretized problem as a linear program");
  oracle->add_option("--preset", of.preset, "mot, dcot, ot, w2 or ot-lipschitz");
  oracle->add_option("--grid", of.grid, "Atoms per marginal");
  oracle->add_option("--bins", of.bins, "Difference bins for dcot");
  oracle->add_option("--L", of.L_list, "Comma-separated Lipschitz constants");
  oracle->add_option("--grid-sweep", of.sweep, "from:to:step grid sizes");
  oracle->add_option("--out", of.out, "Also write the JSON here");

  EvaluateFlags ef;
  auto* evaluate = app.add_subcommand("evaluate", "Re-evaluate a trained run from its checkpoint");
  evaluate->add_option("run", ef.run, "Run directory")->required();
  evaluate->add_option("--samples", ef.samples, "Evaluation sample count");
  evaluate->add_option("--seed", ef.seed, "Evaluation seed")->each([&](const std::string&) {
    ef.seed_set = true;
  });

  std::vector<std::string> report_inputs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Aggregate run directories into tables and plots");
  report->add_option("runs", report_inputs, "Run directories or roots containing seed_* dirs");
  report->add_option("--out", report_out, "Report directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : config_error;
  }

  try {
    if (*train) return cmd_train(tf);
    if (*oracle) return cmd_oracle(of);
    if (*evaluate) return cmd_evaluate(ef);
    if (*report) return cmd_report(report_inputs, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return config_error;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return numeric_abort;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return config_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return config_error;
  }
  return ok;
}
