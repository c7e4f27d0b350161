#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <random>

#include <CLI11.hpp>

#include "io.hpp"
#include "lassogeom/lassogeom.hpp"

#ifndef LASSOGEOM_VERSION
#define LASSOGEOM_VERSION "unknown"
#endif

namespace lassogeom::cli {

namespace fs = std::filesystem;

Vec planted_observation(const Mat& A, std::uint64_t seed) {
  Rng rng = detail::chunk_rng(seed, 0x6f6273ULL);  // "obs"
  const Vec x0 = laplace_vector(static_cast<int>(A.cols()), rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec w(A.rows());
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = normal(rng);
  return A * x0 + w;
}

namespace {

/// Curves flag phi_beta past this point, where the double closed form breaks.
constexpr double kPhiUnreliable = 13.8;

struct Global {
  std::uint64_t seed = 1;
  std::string out = ".";
  bool json = false;
  unsigned threads = 0;
  std::string replay;
};

struct Session {
  Global g;
  RunManifest manifest;
  std::ostream* out = nullptr;

  fs::path dir() const { return fs::path(g.out); }

  fs::path output(const fs::path& name) {
    const fs::path path = name.is_absolute() ? name : dir() / name;
    manifest.outputs.push_back(path.string());
    return path;
  }

  MonteCarloOptions mc() const {
    MonteCarloOptions o;
    o.threads = g.threads;
    return o;
  }

  void finish(const json& summary) {
    write_json(dir() / (manifest.command + ".manifest.json"), manifest.to_json());
    if (g.json) {
      *out << summary.dump(2) << "\n";
    } else {
      for (const auto& p : manifest.outputs) *out << "wrote " << p << "\n";
    }
  }
};

json optional_to_json(const std::optional<std::int64_t>& v) { return v ? json(*v) : json(nullptr); }

json estimate_to_json(const PartitionEstimate& e) {
  json j;
  j["z"] = e.z;
  j["std_err"] = e.std_err;
  j["z_min"] = e.z_min;
  j["z_max"] = e.z_max;
  j["method"] = to_string(e.method);
  j["n_samples"] = e.n_samples;
  j["n_fallback"] = e.n_fallback;
  return j;
}

json polar_to_json(const LassoSolution& s) {
  json j;
  j["x"] = vec_to_json(s.x);
  j["objective"] = s.objective;
  j["best_beta"] = s.best_beta ? json(*s.best_beta) : json(nullptr);
  return j;
}

json fista_to_json(const LassoSolution& s) {
  json j;
  j["x"] = vec_to_json(s.x);
  j["objective"] = s.objective;
  j["iterations"] = s.iterations;
  j["final_step"] = s.final_step;
  j["residual"] = s.residual;
  j["converged"] = s.converged;
  return j;
}

int cmd_gen(Session& s, int n, int p, bool planted, const std::string& name) {
  ProblemInstance prob = gen_bernoulli_matrix(n, p, s.g.seed);
  if (planted) prob.y = planted_observation(prob.A, s.g.seed);
  const fs::path path = s.output(name);
  write_json(path, problem_to_json(prob));
  json sum;
  sum["problem"] = path.string();
  sum["n"] = n;
  sum["p"] = p;
  sum["op_norm"] = prob.op_norm;
  sum["y_norm"] = prob.y_norm();
  sum["beta_lower_bound"] = beta_lower_bound(prob);
  sum["zero_lasso_sufficient"] = zero_lasso_sufficient(prob);
  s.finish(sum);
  return kExitOk;
}

int cmd_solve(Session& s, const std::string& problem, const std::string& method, std::int64_t n_samples,
              int max_iter, double tol) {
  const ProblemInstance prob = read_problem(problem);
  json res;
  res["zero_lasso_sufficient"] = zero_lasso_sufficient(prob);
  bool ok = true;
  if (method != "fista") {
    res["polar"] = polar_to_json(lasso_polar(prob, n_samples, s.g.seed, s.mc()));
  }
  if (method != "polar") {
    const LassoSolution f = lasso_fista(prob, max_iter, tol);
    res["fista"] = fista_to_json(f);
    ok = f.converged;
  }
  write_json(s.output("solve.json"), res);
  s.finish(res);
  if (!ok) throw NumericError("fista did not reach tol within max-iter");
  return kExitOk;
}

int cmd_partition(Session& s, const std::string& problem, const std::string& method, std::int64_t n_samples,
                  bool shift) {
  const ProblemInstance prob = read_problem(problem);
  MonteCarloOptions opt = s.mc();
  json res;
  if (shift) {
    opt.shift = lasso_fista(prob).x;
    res["shift"] = vec_to_json(*opt.shift);
  }
  std::optional<PartitionEstimate> polar;
  if (method != "naive") {
    polar = z_polar_mc(prob, n_samples, s.g.seed, opt);
    res["polar"] = estimate_to_json(*polar);
  }
  if (method != "polar") {
    res["naive"] = estimate_to_json(z_naive_mc(prob, n_samples, s.g.seed, opt));
  }
  res["sphere_surface"] = sphere_surface(prob.p);
  if (polar) res["lasso_ball_volume"] = lasso_ball_volume(polar->z, prob.p);
  write_json(s.output("partition.json"), res);
  s.finish(res);
  if (polar && !(polar->z_min <= polar->z && polar->z <= polar->z_max)) {
    throw NumericError("polar estimate outside [z_min, z_max]");
  }
  return kExitOk;
}

int cmd_curves(Session& s, int p, int M, double beta_min, double beta_max, int steps) {
  if (!(beta_min > 0.0) || !(beta_min < beta_max)) throw FlagError("curves: need 0 < beta-min < beta-max");
  if (steps < 2) throw FlagError("curves: steps must be >= 2");
  if (M < p + 1) throw FlagError("curves: M must be >= p + 1");
  CsvWriter csv({"beta", "phi_beta", "phi_beta_double", "phi_beta_M", "remainder_bound", "phi_beta_reliable",
                 "mode_times_l1"});
  for (int i = 0; i < steps; ++i) {
    const double beta = i + 1 == steps ? beta_max : beta_min + (beta_max - beta_min) * i / (steps - 1);
    const ExpansionResult e = phi_beta_m(beta, 0.0, 0.0, p, M);
    csv.row({fmt(beta), fmt(phi_beta(beta, 0.0, 0.0, p)), fmt(phi_beta_in<double>(beta, 0.0, 0.0, p)),
             fmt(e.value), fmt(e.remainder_bound), beta <= kPhiUnreliable ? "1" : "0",
             fmt(mode_times_l1(beta, p))});
  }
  write_text(s.output("curves.csv"), csv.str());
  json sum;
  sum["points"] = steps;
  sum["p"] = p;
  sum["M"] = M;
  s.finish(sum);
  return kExitOk;
}

struct DiagnoseArgs {
  std::string problem;
  std::string sampler = "rw";
  std::int64_t iters = 10000;
  double q = 5.0;
  double rw_var = 0.5;
  std::string emit_series;
  std::int64_t thin = 1;
  bool shift = false;
  std::optional<double> z;
  std::int64_t z_samples = 100000;
};

int cmd_diagnose(Session& s, const DiagnoseArgs& a) {
  if (a.thin < 1) throw FlagError("diagnose: thin must be >= 1");
  const ProblemInstance prob = read_problem(a.problem);
  ChainConfig cfg;
  cfg.kind = a.sampler == "is" ? ChainKind::independent_laplace : ChainKind::random_walk;
  cfg.n_iter = a.iters;
  cfg.q = a.q;
  cfg.rw_variance = a.rw_var;
  cfg.seed = s.g.seed;
  if (a.shift) cfg.shift_l = lasso_fista(prob).x;
  std::optional<double> z = a.z;
  if (cfg.kind == ChainKind::independent_laplace && !z) {
    z = z_polar_mc(prob, a.z_samples, s.g.seed, s.mc()).z;
  }
  if (z && *z > 0.0 && *z < std::ldexp(1.0, prob.p)) cfg.z_for_tv = z;

  std::ofstream series;
  std::function<void(const ChainStep&)> on_step;
  if (!a.emit_series.empty()) {
    const fs::path path = s.output(a.emit_series);
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    series.open(path, std::ios::binary | std::ios::trunc);
    if (!series) throw IoError("cannot write " + path.string());
    series << "t,norm_x,q_times_r_theta,criterion\n";
    on_step = [&](const ChainStep& st) {
      if (st.t % a.thin != 0 && st.t != 1) return;
      series << st.t << ',' << fmt(st.norm_x) << ',' << fmt(st.q_times_r) << ',' << (st.criterion ? 1 : 0) << '\n';
    };
  }
  const ChainDiagnosis d = run_chain(prob, cfg, on_step);
  if (series.is_open()) {
    series.flush();
    if (!series) throw IoError("write failed: " + a.emit_series);
  }
  json res;
  res["sampler"] = a.sampler;
  res["iters"] = a.iters;
  res["q"] = a.q;
  if (cfg.kind == ChainKind::random_walk) res["rw_var"] = a.rw_var;
  res["shift"] = cfg.shift_l ? vec_to_json(*cfg.shift_l) : json(nullptr);
  res["first_hit"] = optional_to_json(d.first_hit);
  res["last_violation"] = optional_to_json(d.last_violation);
  res["satisfaction_rate"] = d.satisfaction_rate;
  res["mean"] = vec_to_json(d.running_mean);
  res["mean_norm"] = d.mean_norm;
  res["acceptance_rate"] = d.acceptance_rate;
  res["z_for_tv"] = cfg.z_for_tv ? json(*cfg.z_for_tv) : json(nullptr);
  res["tv_constant"] = d.tv_constant ? json(*d.tv_constant) : json(nullptr);
  write_json(s.output("diagnose.json"), res);
  s.finish(res);
  return kExitOk;
}

int cmd_tables(Session& s, int n, int p, std::int64_t n_samples, std::int64_t iters, double q) {
  ProblemInstance prob = gen_bernoulli_matrix(n, p, s.g.seed);
  prob.y = planted_observation(prob.A, s.g.seed);
  write_json(s.output("tables_problem.json"), problem_to_json(prob));

  std::vector<std::string> head = {"method"};
  for (int i = 1; i <= p; ++i) head.push_back("x" + std::to_string(i));
  head.push_back("objective");
  CsvWriter t1(head);
  const LassoSolution polar = lasso_polar(prob, n_samples, s.g.seed, s.mc());
  const LassoSolution fista = lasso_fista(prob);
  for (const LassoSolution* sol : {&polar, &fista}) {
    std::vector<std::string> row = {to_string(sol->method)};
    for (int i = 0; i < p; ++i) row.push_back(fmt(sol->x(i)));
    row.push_back(fmt(sol->objective));
    t1.row(row);
  }
  write_text(s.output("table1.csv"), t1.str());

  CsvWriter t2({"q", "P"});
  for (double qq : {2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0}) t2.row({fmt(qq), fmt_fixed(concentration_prob(qq, p), 4)});
  write_text(s.output("table2.csv"), t2.str());

  ProblemInstance prob0 = prob;
  prob0.y = Vec::Zero(n);
  head = {"sampler"};
  for (int i = 1; i <= p; ++i) head.push_back("x" + std::to_string(i));
  for (const char* c : {"norm", "acceptance_rate", "satisfaction_rate", "first_hit", "last_violation"}) {
    head.push_back(c);
  }
  CsvWriter t3(head);
  json chains = json::object();
  for (ChainKind kind : {ChainKind::independent_laplace, ChainKind::random_walk}) {
    ChainConfig cfg;
    cfg.kind = kind;
    cfg.n_iter = iters;
    cfg.q = q;
    cfg.seed = s.g.seed;
    const ChainDiagnosis d = run_chain(prob0, cfg);
    std::vector<std::string> row = {to_string(kind)};
    for (int i = 0; i < p; ++i) row.push_back(fmt(d.running_mean(i)));
    row.push_back(fmt(d.mean_norm));
    row.push_back(fmt(d.acceptance_rate));
    row.push_back(fmt(d.satisfaction_rate));
    row.push_back(d.first_hit ? std::to_string(*d.first_hit) : "");
    row.push_back(d.last_violation ? std::to_string(*d.last_violation) : "");
    t3.row(row);
    chains[to_string(kind)] = {{"mean_norm", d.mean_norm}, {"first_hit", optional_to_json(d.first_hit)}};
  }
  write_text(s.output("table3.csv"), t3.str());

  json sum;
  sum["polar_objective"] = polar.objective;
  sum["fista_objective"] = fista.objective;
  sum["chains"] = chains;
  s.finish(sum);
  if (!fista.converged) throw NumericError("fista did not converge for table1");
  return kExitOk;
}

json options_to_json(const CLI::App* app) {
  json j = json::object();
  for (const CLI::Option* o : app->get_options()) {
    const std::string name = o->get_name();
    if (name == "--help" || name.empty()) continue;
    const auto& r = o->results();
    if (r.empty()) {
      j[name] = o->get_default_str();
    } else if (r.size() == 1) {
      j[name] = r.front();
    } else {
      j[name] = r;
    }
  }
  return j;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int replay(const std::string& manifest_path, std::ostream& out, std::ostream& err) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open " + manifest_path);
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(manifest_path + ": " + e.what());
  }
  if (!m.contains("argv") || !m["argv"].is_array()) throw IoError(manifest_path + ": no argv");
  std::vector<std::string> args = m["argv"].get<std::vector<std::string>>();
  for (const auto& a : args) {
    if (a == "--replay") throw FlagError("manifest argv must not contain --replay");
  }
  return dispatch(args, out, err);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Polar geometry of the Bayesian LASSO posterior and MCMC diagnosis", "lassogeom"};
  app.set_version_flag("--version", std::string(LASSOGEOM_VERSION));
  app.option_defaults()->always_capture_default();
  app.fallthrough();  // global flags may follow the subcommand
  Global g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--json", g.json, "Print the result summary as JSON");
  app.add_option("--threads", g.threads, "Worker threads for Monte Carlo sweeps (0 = all cores)");
  app.add_option("--replay", g.replay, "Re-run the command recorded in a manifest");

  int gen_n = 4, gen_p = 7;
  bool gen_planted = false;
  std::string gen_name = "problem.json";
  CLI::App* gen = app.add_subcommand("gen", "Generate a Bernoulli design problem file");
  gen->add_option("--n", gen_n, "Rows of A");
  gen->add_option("--p", gen_p, "Columns of A");
  gen->add_flag("--planted", gen_planted, "Set y = A x0 + w with x0 ~ Laplace, w ~ N(0, I)");
  gen->add_option("--name", gen_name, "Problem file name inside --out");

  std::string problem;
  std::string solve_method = "both";
  std::int64_t solve_n = 100000;
  int max_iter = 100000;
  double tol = 1e-10;
  CLI::App* solve = app.add_subcommand("solve", "LASSO mode by polar sweep and FISTA");
  solve->add_option("--problem", problem, "Problem JSON")->required();
  solve->add_option("--method", solve_method)->check(CLI::IsMember({"polar", "fista", "both"}));
  solve->add_option("--n-samples", solve_n, "Directions for the polar sweep")->check(CLI::PositiveNumber);
  solve->add_option("--max-iter", max_iter)->check(CLI::PositiveNumber);
  solve->add_option("--tol", tol)->check(CLI::PositiveNumber);

  std::string part_method = "both";
  std::int64_t part_n = 100000;
  bool part_shift = false;
  CLI::App* part = app.add_subcommand("partition", "Monte Carlo estimates of the partition function");
  part->add_option("--problem", problem, "Problem JSON")->required();
  part->add_option("--method", part_method)->check(CLI::IsMember({"polar", "naive", "both"}));
  part->add_option("--n-samples", part_n)->check(CLI::PositiveNumber);
  part->add_flag("--shift", part_shift, "Sweep the density shifted to the FISTA lasso point");

  int cur_p = 7, cur_m = 17, cur_steps = 500;
  double beta_min = 6.0, beta_max = 45.0;
  CLI::App* curves = app.add_subcommand("curves", "Phi(beta), its expansion and the mode curve on a grid");
  curves->add_option("--p", cur_p)->check(CLI::PositiveNumber);
  curves->add_option("--M", cur_m);
  curves->add_option("--beta-min", beta_min);
  curves->add_option("--beta-max", beta_max);
  curves->add_option("--steps", cur_steps, "Grid points, endpoints included");

  DiagnoseArgs da;
  double z_value = 0.0;
  CLI::App* diag = app.add_subcommand("diagnose", "Run a chain and the q r(theta) criterion");
  diag->add_option("--problem", problem, "Problem JSON")->required();
  diag->add_option("--sampler", da.sampler)->check(CLI::IsMember({"is", "rw"}));
  diag->add_option("--iters", da.iters)->check(CLI::PositiveNumber);
  diag->add_option("--q", da.q)->check(CLI::PositiveNumber);
  diag->add_option("--rw-var", da.rw_var)->check(CLI::PositiveNumber);
  diag->add_option("--emit-series", da.emit_series, "CSV of (t, norm_x, q_times_r_theta, criterion)");
  diag->add_option("--thin", da.thin, "Keep every thin-th row of the series");
  diag->add_flag("--shift", da.shift, "Centre the criterion at the FISTA lasso point");
  CLI::Option* z_opt = diag->add_option("--z", z_value, "Partition function for the IS rate");
  diag->add_option("--z-samples", da.z_samples, "Directions used to estimate Z when --z is absent")
      ->check(CLI::PositiveNumber);

  int tab_n = 4, tab_p = 7;
  std::int64_t tab_samples = 100000, tab_iters = 1000000;
  double tab_q = 5.0;
  CLI::App* tables = app.add_subcommand("tables", "table1.csv, table2.csv and table3.csv");
  tables->add_option("--n", tab_n);
  tables->add_option("--p", tab_p);
  tables->add_option("--n-samples", tab_samples)->check(CLI::PositiveNumber);
  tables->add_option("--iters", tab_iters)->check(CLI::PositiveNumber);
  tables->add_option("--q", tab_q)->check(CLI::PositiveNumber);

  app.require_subcommand(0, 1);

  std::vector<const char*> argv = {"lassogeom"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitFlag;
  }

  if (!g.replay.empty()) {
    if (!app.get_subcommands().empty()) throw FlagError("--replay takes no subcommand");
    return replay(g.replay, out, err);
  }
  if (app.get_subcommands().empty()) {
    err << app.help();
    return kExitFlag;
  }

  CLI::App* sub = app.get_subcommands().front();
  Session s;
  s.g = g;
  s.out = &out;
  s.manifest.command = sub->get_name();
  s.manifest.argv = args;
  s.manifest.seed = g.seed;
  s.manifest.version = LASSOGEOM_VERSION;
  s.manifest.config = options_to_json(&app);
  s.manifest.config.erase("--replay");
  s.manifest.config.erase("--version");
  s.manifest.config[sub->get_name()] = options_to_json(sub);
  std::error_code ec;
  fs::create_directories(s.dir(), ec);
  if (ec) throw IoError("cannot create " + s.dir().string() + ": " + ec.message());

  if (sub == gen) return cmd_gen(s, gen_n, gen_p, gen_planted, gen_name);
  if (sub == solve) return cmd_solve(s, problem, solve_method, solve_n, max_iter, tol);
  if (sub == part) return cmd_partition(s, problem, part_method, part_n, part_shift);
  if (sub == curves) return cmd_curves(s, cur_p, cur_m, beta_min, beta_max, cur_steps);
  if (sub == diag) {
    da.problem = problem;
    if (z_opt->count() > 0) da.z = z_value;
    return cmd_diagnose(s, da);
  }
  return cmd_tables(s, tab_n, tab_p, tab_samples, tab_iters, tab_q);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const FlagError& e) {
    err << "error: " << e.what() << "\n";
    return kExitFlag;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitFlag;
  } catch (const std::domain_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFlag;
  } catch (const NumericError& e) {
    err << "numeric validation failed: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace lassogeom::cli
