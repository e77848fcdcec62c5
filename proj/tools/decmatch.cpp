// Command-line front end.
//
// Exit codes: 0 success or certified, 1 not certified, 2 usage error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "decmatch/decmatch.hpp"

namespace fs = std::filesystem;
using namespace decmatch;

namespace {

constexpr int kOk = 0;
constexpr int kUncertified = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out << text;
  if (!out) throw UsageError("write failed for '" + path + "'");
}

Market load_market(const std::string& path) {
  try {
    return market_from_json(read_json(path));
  } catch (const ConfigError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

std::uint64_t seed_or_entropy(const std::optional<std::uint64_t>& seed) {
  if (seed) return *seed;
  std::random_device rd;
  const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  std::cerr << "seed: " << s << '\n';
  return s;
}

// --- generate --------------------------------------------------------------

struct GenerateArgs {
  std::string kind = "hierarchical";
  int n = 3;
  std::optional<std::uint64_t> seed;
  double min_gap = 0.1;
  double eps = 0.1;
  std::string reward;
  double concentration = 10.0;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  GeneratorSpec g;
  g.kind = a.kind;
  g.n = a.n;
  g.min_gap = a.min_gap;
  g.example_eps = a.eps;
  if (a.kind != "example1") g.seed = seed_or_entropy(a.seed);
  std::string reward = a.reward.empty() ? (a.kind == "example1" ? "deterministic" : "bernoulli") : a.reward;
  g.reward = {reward_kind_from_string(reward), a.concentration};
  const Market market = make_market(g);
  write_text(a.out, to_json(market).dump(2) + "\n");
  std::cout << "wrote " << a.out << '\n'
            << "n = " << market.size() << '\n'
            << "gap = " << format_double(market.gap()) << '\n'
            << "mu_min = " << format_double(market.mu_min()) << '\n'
            << "mu_max = " << format_double(market.mu_max()) << '\n'
            << "c = " << format_double(market.local_constant()) << '\n';
  return kOk;
}

// --- run -------------------------------------------------------------------

struct RunArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  bool quiet = false;
};

int cmd_run(const RunArgs& a) {
  const json doc = read_json(a.config);
  const fs::path base = fs::path(a.config).parent_path();
  RunConfig cfg;
  try {
    cfg = run_config_from_json(doc, [&](const std::string& file) {
      const fs::path p = fs::path(file).is_absolute() ? fs::path(file) : base / file;
      return load_market(p.string());
    });
  } catch (const ConfigError& e) {
    throw UsageError(a.config + ": " + e.what());
  }
  if (a.seed) {
    cfg.seed = *a.seed;
  } else if (!doc.contains("seed")) {
    cfg.seed = seed_or_entropy(std::nullopt);
  }
  const Market market = resolve_market(cfg);
  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  if (ec) throw UsageError("cannot create '" + a.out_dir + "'");

  std::vector<Trajectory> trajs;
  for (int r = 0; r < cfg.replications; ++r) {
    Trajectory t = run_replication(cfg, market, r);
    for (const auto& w : t.warnings) std::cerr << "warning: replication " << r << ": " << w << '\n';
    std::ostringstream csv;
    write_trajectory_csv(csv, t, market.size());
    write_text((fs::path(a.out_dir) / ("trajectory_r" + std::to_string(r) + ".csv")).string(), csv.str());
    if (cfg.learner == LearnerKind::kTrial && cfg.trial.diagnostics) {
      std::ostringstream ep;
      write_episode_csv(ep, t, market.size());
      write_text((fs::path(a.out_dir) / ("episodes_r" + std::to_string(r) + ".csv")).string(), ep.str());
    }
    trajs.push_back(std::move(t));
  }
  const json summary = run_summary(cfg, market, trajs);
  write_text((fs::path(a.out_dir) / "summary.json").string(), summary.dump(2) + "\n");
  if (!a.quiet) {
    auto show = [&](const char* key) {
      const auto& v = summary[key];
      std::cout << key << " = " << (v.is_null() ? std::string("n/a") : v.dump()) << '\n';
    };
    show("regret_final");
    show("regret_per_logT");
    show("stability_rate_last_decade");
  }
  return kOk;
}

// --- enumerate / verify / round ---------------------------------------------

int cmd_enumerate(const std::string& market_path) {
  const Market market = load_market(market_path);
  std::vector<Matching> all;
  try {
    all = enumerate_stable_matchings(market);
  } catch (const std::domain_error& e) {
    throw UsageError(e.what());
  }
  json out = json::array();
  for (const auto& m : all) out.push_back(m.partners());
  std::cout << json{{"count", all.size()}, {"stable_matchings", out}}.dump(2) << '\n';
  return kOk;
}

MixedProfile load_profile(const std::string& path) {
  try {
    return profile_from_json(read_json(path));
  } catch (const ConfigError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

int cmd_verify(const std::string& market_path, const std::string& profile_path, double tol) {
  const Market market = load_market(market_path);
  const MixedProfile x = load_profile(profile_path);
  if (x.size() != market.size()) throw UsageError("profile size does not match market");
  const NECertificate cert = verify_mixed_ne(market, x, tol);
  json out = to_json(cert);
  if (const auto pure = x.to_pure()) {
    const bool perfect = Matching(*pure).is_perfect();
    out["stable"] = perfect && is_stable(market, Matching(*pure));
  }
  std::cout << out.dump(2) << '\n';
  return cert.certified() ? kOk : kUncertified;
}

int cmd_round(const std::string& market_path, const std::string& profile_path, double threshold) {
  const Market market = load_market(market_path);
  const MixedProfile x = load_profile(profile_path);
  if (x.size() != market.size()) throw UsageError("profile size does not match market");
  const RoundingResult res = round_mixed_to_pure(market, x, threshold);
  const bool stable = !res.partial && is_stable(market, res.matching);
  std::cout << json{{"actions", res.matching.partners()}, {"partial", res.partial}, {"stable", stable}}.dump(2)
            << '\n';
  return stable ? kOk : kUncertified;
}

// --- monotone-check ----------------------------------------------------------

struct MonotoneArgs {
  std::string market;
  double beta = 0.0;
  int samples = 100;
  std::optional<std::uint64_t> seed;
  bool solve = false;
  int iterations = 10000;
  double step = 0.0;
  double tol = 1e-10;
  std::string log;
};

MixedProfile random_profile(int n, Rng& rng) {
  Matrix x(n, n);
  for (int m = 0; m < n; ++m) {
    double s = 0.0;
    for (int w = 0; w < n; ++w) s += x(m, w) = -std::log(1.0 - uniform01(rng));
    for (int w = 0; w < n; ++w) x(m, w) /= s;
  }
  // Renormalize the rows exactly through the projection.
  for (int m = 0; m < n; ++m) {
    const auto p = simplex_project(x.row(m));
    std::copy(p.begin(), p.end(), x.row(m).begin());
  }
  return MixedProfile(std::move(x));
}

int cmd_monotone_check(const MonotoneArgs& a) {
  const Market market = load_market(a.market);
  const RegularizedGame game(market, a.beta);
  const int n = market.size();
  json q = json::array();
  bool all_psd = true;
  for (int w = 0; w < n; ++w) {
    const QMatrix qm = build_q(game, w);
    const PsdResult psd = is_psd(qm.q);
    all_psd = all_psd && psd.psd;
    q.push_back({{"w", w}, {"basis", qm.basis}, {"q", qm.q.to_rows()}, {"psd", psd.psd}});
  }
  Rng rng(derive_seed(seed_or_entropy(a.seed), 0, stream::kInit));
  double max_rel_err = 0.0;
  double max_gap = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < a.samples; ++s) {
    const auto x = random_profile(n, rng);
    const auto xp = random_profile(n, rng);
    const auto sides = monotone_identity_check(game, x, xp);
    max_rel_err = std::max(max_rel_err, std::abs(sides.lhs - sides.rhs) / (1.0 + std::abs(sides.lhs)));
    max_gap = std::max(max_gap, sides.lhs);
  }
  json out{{"beta", a.beta},
           {"threshold", n * market.mu_max() / 2.0},
           {"monotone_certified", game.monotone_certified()},
           {"all_q_psd", all_psd},
           {"q", std::move(q)},
           {"samples", a.samples},
           {"identity_max_relative_error", max_rel_err},
           {"max_monotonicity_gap", a.samples > 0 ? json(max_gap) : json(nullptr)}};
  if (a.solve) {
    SolverOptions opts;
    opts.iterations = a.iterations;
    opts.step = a.step;
    opts.tol = a.tol;
    const auto res = solve_eps_ne(game, MixedProfile::uniform(n), opts);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
    const auto rounded = round_mixed_to_pure(market, res.profile);
    out["solver"] = {{"iterations", res.iterations},
                     {"converged", res.converged},
                     {"residual_regularized", res.residual_regularized},
                     {"residual_simplified", res.residual_simplified},
                     {"profile", res.profile.matrix().to_rows()},
                     {"rounded", rounded.matching.partners()},
                     {"rounded_partial", rounded.partial}};
    if (!a.log.empty()) {
      std::ostringstream csv;
      write_solver_log_csv(csv, res.log);
      write_text(a.log, csv.str());
    }
  }
  std::cout << out.dump(2) << '\n';
  return all_psd ? kOk : kUncertified;
}

// --- probe-local -------------------------------------------------------------

struct ProbeArgs {
  std::string market;
  std::string matching;
  double radius = 0.0;
  std::int64_t rounds = 1000;
  int replications = 100;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> t0;
  double max_fraction = 0.1;
};

int cmd_probe_local(const ProbeArgs& a) {
  const Market market = load_market(a.market);
  Matching target;
  if (!a.matching.empty()) {
    const auto x = load_profile(a.matching).to_pure();
    if (!x) throw UsageError("matching file must hold a pure profile");
    target = Matching(*x);
  } else if (auto unique = unique_stable_matching(market)) {
    target = *unique;
  } else {
    throw UsageError("market has no unique stable matching; pass --matching");
  }
  ProbeOptions opts;
  opts.radius = a.radius;
  opts.rounds = a.rounds;
  opts.replications = a.replications;
  opts.seed = seed_or_entropy(a.seed);
  opts.start_round = a.t0;
  ProbeReport rep;
  try {
    rep = local_convergence_probe(market, target, opts);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << to_json(rep).dump(2) << '\n';
  return rep.envelope_violation_fraction <= a.max_fraction ? kOk : kUncertified;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized learning of stable matchings"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a market file");
  g->add_option("--kind", gen.kind, "hierarchical | general | example1")
      ->check(CLI::IsMember({"hierarchical", "general", "example1"}));
  g->add_option("-n,--n", gen.n, "Number of men and women")->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed, "Generator seed (default: from entropy)");
  g->add_option("--min-gap", gen.min_gap, "Minimum preference gap");
  g->add_option("--eps", gen.eps, "Small preference value of the example1 market");
  g->add_option("--reward", gen.reward, "bernoulli | beta | deterministic")
      ->check(CLI::IsMember({"bernoulli", "beta", "deterministic"}));
  g->add_option("--concentration", gen.concentration, "Beta concentration");
  g->add_option("-o,--out", gen.out, "Output path")->required();

  RunArgs run_args;
  auto* r = app.add_subcommand("run", "Run a learner and write trajectories");
  r->add_option("config", run_args.config, "Run config (JSON)")->required();
  r->add_option("--seed", run_args.seed, "Master seed (overrides the config)");
  r->add_option("-o,--out-dir", run_args.out_dir, "Output directory");
  r->add_flag("-q,--quiet", run_args.quiet, "Do not print headline metrics");

  std::string market_path, profile_path;
  double tol = kCertificateTol, threshold = kSupportThreshold;
  auto* e = app.add_subcommand("enumerate", "List all stable matchings");
  e->add_option("market", market_path, "Market file")->required();

  auto* v = app.add_subcommand("verify", "Certify a profile as a Nash equilibrium");
  v->add_option("market", market_path, "Market file")->required();
  v->add_option("profile", profile_path, "Profile file")->required();
  v->add_option("--tol", tol, "Certification tolerance");

  auto* rd = app.add_subcommand("round", "Round a mixed profile to a matching");
  rd->add_option("market", market_path, "Market file")->required();
  rd->add_option("profile", profile_path, "Profile file")->required();
  rd->add_option("--threshold", threshold, "Support threshold");

  MonotoneArgs mono;
  auto* mc = app.add_subcommand("monotone-check", "Check the waiting-list game for monotonicity");
  mc->add_option("market", mono.market, "Market file")->required();
  mc->add_option("--beta", mono.beta, "Regularizer")->required()->check(CLI::NonNegativeNumber);
  mc->add_option("--samples", mono.samples, "Random profile pairs for the identity check")
      ->check(CLI::NonNegativeNumber);
  mc->add_option("--seed", mono.seed, "Sampling seed (default: from entropy)");
  mc->add_flag("--solve", mono.solve, "Also run the projected-gradient solver");
  mc->add_option("--iterations", mono.iterations, "Solver iteration budget");
  mc->add_option("--step", mono.step, "Solver step (default: largest admissible)");
  mc->add_option("--tol", mono.tol, "Solver residual tolerance");
  mc->add_option("--log", mono.log, "Solver log CSV path");

  ProbeArgs probe;
  auto* pl = app.add_subcommand("probe-local", "Track local convergence against the envelope");
  pl->add_option("market", probe.market, "Market file")->required();
  pl->add_option("--matching", probe.matching, "Pure NE to start from (default: the unique stable matching)");
  pl->add_option("--radius", probe.radius, "Initial L1 radius (default: c / (250 n^2))");
  pl->add_option("--rounds", probe.rounds, "Rounds after t0")->check(CLI::PositiveNumber);
  pl->add_option("--replications", probe.replications, "Replications")->check(CLI::PositiveNumber);
  pl->add_option("--seed", probe.seed, "Master seed (default: from entropy)");
  pl->add_option("--t0", probe.t0, "Start round (default: computed)");
  pl->add_option("--max-violation-fraction", probe.max_fraction, "Exit 1 above this fraction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kUsage;
  }

  try {
    if (g->parsed()) return cmd_generate(gen);
    if (r->parsed()) return cmd_run(run_args);
    if (e->parsed()) return cmd_enumerate(market_path);
    if (v->parsed()) return cmd_verify(market_path, profile_path, tol);
    if (rd->parsed()) return cmd_round(market_path, profile_path, threshold);
    if (mc->parsed()) return cmd_monotone_check(mono);
    if (pl->parsed()) return cmd_probe_local(probe);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
