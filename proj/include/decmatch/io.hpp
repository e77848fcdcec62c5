#pragma once

// JSON documents (markets, profiles, certificates, run configs, summaries)
// and CSV writers for trajectories and solver logs.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "decmatch/equilibrium.hpp"
#include "decmatch/market.hpp"
#include "decmatch/monotone.hpp"
#include "decmatch/simulation.hpp"

namespace decmatch {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Malformed document; what() starts with the offending field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& msg)
      : std::runtime_error(path + ": " + msg), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

namespace detail {

inline std::string child(const std::string& path, const std::string& key) {
  return path + "/" + key;
}
inline std::string child(const std::string& path, std::size_t i) {
  return path + "/" + std::to_string(i);
}

inline const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(child(path, key), "missing required field");
  return *it;
}

template <class T>
T as(const json& j, const std::string& path) {
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!j.is_number()) throw ConfigError(path, "expected a number");
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0) {
          throw ConfigError(path, "expected a non-negative integer");
        }
      }
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!j.is_boolean()) throw ConfigError(path, "expected a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!j.is_string()) throw ConfigError(path, "expected a string");
    }
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path, e.what());
  }
}

template <class T>
T get(const json& j, const std::string& key, const std::string& path) {
  return as<T>(require(j, key, path), child(path, key));
}

template <class T>
T get_or(const json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return as<T>(*it, child(path, key));
}

/// Runs fn and rewraps library validation errors with the field path.
template <class F>
auto at_path(const std::string& path, F&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
}

inline void check_schema(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  auto it = j.find("schema_version");
  if (it == j.end()) return;  // optional on input
  const int v = as<int>(*it, child(path, "schema_version"));
  if (v != kSchemaVersion) {
    throw ConfigError(child(path, "schema_version"),
                      "unsupported version " + std::to_string(v));
  }
}

inline std::vector<std::vector<double>> as_rows(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of rows");
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& r = j[i];
    if (!r.is_array()) throw ConfigError(child(path, i), "expected an array");
    std::vector<double> row;
    for (std::size_t k = 0; k < r.size(); ++k) row.push_back(as<double>(r[k], child(child(path, i), k)));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Markets.

inline json to_json(const RewardDist& d) {
  json j{{"kind", to_string(d.kind)}};
  if (d.kind == RewardKind::kBeta) j["concentration"] = d.concentration;
  return j;
}

inline RewardDist reward_dist_from_json(const json& j, const std::string& path) {
  RewardDist d;
  const auto kind = detail::get<std::string>(j, "kind", path);
  d.kind = detail::at_path(detail::child(path, "kind"), [&] { return reward_kind_from_string(kind); });
  d.concentration = detail::get_or<double>(j, "concentration", path, 10.0);
  return d;
}

inline json to_json(const Market& market) {
  return json{{"schema_version", kSchemaVersion},
              {"n", market.size()},
              {"mu", market.mu().to_rows()},
              {"women_rank", market.women_rank()},
              {"reward_dist", to_json(market.reward_dist())}};
}

inline Market market_from_json(const json& j, const std::string& path = "") {
  detail::check_schema(j, path);
  const int n = detail::get<int>(j, "n", path);
  if (n < 1) throw ConfigError(detail::child(path, "n"), "must be >= 1");
  auto rows = detail::as_rows(detail::require(j, "mu", path), detail::child(path, "mu"));
  if (static_cast<int>(rows.size()) != n) throw ConfigError(detail::child(path, "mu"), "expected n rows");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<int>(rows[i].size()) != n) {
      throw ConfigError(detail::child(detail::child(path, "mu"), i), "expected n entries");
    }
  }
  const auto& jr = detail::require(j, "women_rank", path);
  const std::string rpath = detail::child(path, "women_rank");
  if (!jr.is_array() || static_cast<int>(jr.size()) != n) throw ConfigError(rpath, "expected n rows");
  std::vector<std::vector<int>> ranks;
  for (std::size_t w = 0; w < jr.size(); ++w) {
    if (!jr[w].is_array()) throw ConfigError(detail::child(rpath, w), "expected an array");
    std::vector<int> r;
    for (std::size_t k = 0; k < jr[w].size(); ++k) {
      r.push_back(detail::as<int>(jr[w][k], detail::child(detail::child(rpath, w), k)));
    }
    ranks.push_back(std::move(r));
  }
  RewardDist dist{RewardKind::kDeterministic, 10.0};
  if (j.contains("reward_dist")) {
    dist = reward_dist_from_json(j["reward_dist"], detail::child(path, "reward_dist"));
  }
  return detail::at_path(path.empty() ? "/" : path, [&] {
    return Market::create(Matrix::from_rows(rows), std::move(ranks), dist);
  });
}

// ---------------------------------------------------------------------------
// Profiles and certificates.

inline json to_json(const MixedProfile& x) {
  return json{{"schema_version", kSchemaVersion}, {"n", x.size()}, {"profile", x.matrix().to_rows()}};
}

/// {"profile": rows} for a mixed profile or {"actions": [...]} for a pure
/// one.
inline MixedProfile profile_from_json(const json& j, const std::string& path = "") {
  detail::check_schema(j, path);
  if (j.contains("actions")) {
    const auto& a = j["actions"];
    const std::string apath = detail::child(path, "actions");
    if (!a.is_array()) throw ConfigError(apath, "expected an array");
    PureProfile actions;
    for (std::size_t i = 0; i < a.size(); ++i) actions.push_back(detail::as<int>(a[i], detail::child(apath, i)));
    return detail::at_path(apath, [&] { return MixedProfile::from_pure(actions); });
  }
  auto rows = detail::as_rows(detail::require(j, "profile", path), detail::child(path, "profile"));
  return detail::at_path(detail::child(path, "profile"),
                         [&] { return MixedProfile(Matrix::from_rows(rows)); });
}

inline json to_json(const NECertificate& cert, double support_threshold = kSupportThreshold) {
  json edges = json::array();
  for (auto [m, w] : support_graph(cert.profile, support_threshold)) edges.push_back({m, w});
  return json{{"kind", to_string(cert.kind)},
              {"max_violation", cert.max_violation},
              {"tol", cert.tol},
              {"certified", cert.certified()},
              {"support_graph", std::move(edges)}};
}

inline json to_json(const Matching& matching) {
  return json{{"schema_version", kSchemaVersion}, {"actions", matching.partners()}};
}

// ---------------------------------------------------------------------------
// Run configs.

inline json to_json(const GeneratorSpec& g) {
  json j{{"generator", g.kind}, {"n", g.n}, {"seed", g.seed}, {"reward_dist", to_json(g.reward)}};
  if (g.kind == "example1") {
    j["eps"] = g.example_eps;
  } else {
    j["min_gap"] = g.min_gap;
  }
  return j;
}

inline json to_json(const RunConfig& cfg) {
  json j{{"schema_version", kSchemaVersion},
         {"horizon", cfg.horizon},
         {"replications", cfg.replications},
         {"seed", cfg.seed},
         {"feedback", to_string(cfg.feedback)}};
  if (const auto* m = std::get_if<Market>(&cfg.market)) {
    j["market"] = json{{"inline", to_json(*m)}};
  } else {
    j["market"] = to_json(std::get<GeneratorSpec>(cfg.market));
  }
  json l{{"kind", to_string(cfg.learner)}};
  switch (cfg.learner) {
    case LearnerKind::kExp: {
      const auto& e = cfg.exp;
      json s{{"kind", to_string(e.schedule)}};
      if (e.schedule == ScheduleKind::kTheorem3) {
        if (e.mixing_constant) s["M"] = *e.mixing_constant;
        if (e.gap_constant) s["c"] = *e.gap_constant;
      } else if (e.schedule == ScheduleKind::kCustom) {
        s["alpha"] = e.alpha;
        s["beta"] = e.beta;
        s["eta_scale"] = e.eta_scale;
        s["gamma_scale"] = e.gamma_scale;
      }
      l["schedule"] = std::move(s);
      l["gap_oracle"] = e.gap_oracle;
      break;
    }
    case LearnerKind::kTrial: {
      const auto& t = cfg.trial;
      l["eps"] = t.eps;
      l["delta"] = t.delta;
      l["omega"] = t.omega;
      if (t.tau.size() == 1) {
        l["tau"] = t.tau.front();
      } else if (!t.tau.empty()) {
        l["tau"] = t.tau;
      }
      l["mode"] = t.theorem6 ? "theorem6" : "free";
      l["p"] = t.p;
      l["diagnostics"] = t.diagnostics;
      break;
    }
    case LearnerKind::kBestResponse: {
      const auto& b = cfg.best_response;
      l["start"] = b.random_start ? "random" : "empty";
      l["updates"] = b.updates == UpdateRule::kSimultaneous ? "simultaneous"
                     : b.updates == UpdateRule::kSequential ? "sequential"
                                                             : "random";
      break;
    }
    case LearnerKind::kMonotone:
      l["beta"] = cfg.monotone.beta;
      l["step"] = cfg.monotone.step;
      break;
  }
  j["learner"] = std::move(l);
  return j;
}

/// `load_market` resolves {"file": path} market sources.
template <class LoadMarket>
RunConfig run_config_from_json(const json& j, LoadMarket&& load_market) {
  const std::string root;
  detail::check_schema(j, root);
  RunConfig cfg;
  const auto& jm = detail::require(j, "market", root);
  const std::string mpath = "/market";
  if (!jm.is_object()) throw ConfigError(mpath, "expected an object");
  if (jm.contains("inline")) {
    cfg.market = market_from_json(jm["inline"], mpath + "/inline");
  } else if (jm.contains("file")) {
    const auto file = detail::get<std::string>(jm, "file", mpath);
    cfg.market = detail::at_path(mpath + "/file", [&] { return load_market(file); });
  } else if (jm.contains("generator")) {
    GeneratorSpec g;
    g.kind = detail::get<std::string>(jm, "generator", mpath);
    if (g.kind != "hierarchical" && g.kind != "general" && g.kind != "example1") {
      throw ConfigError(mpath + "/generator", "unknown generator '" + g.kind + "'");
    }
    g.n = detail::get_or<int>(jm, "n", mpath, 3);
    g.seed = detail::get_or<std::uint64_t>(jm, "seed", mpath, 0);
    g.min_gap = detail::get_or<double>(jm, "min_gap", mpath, 0.1);
    g.example_eps = detail::get_or<double>(jm, "eps", mpath, 0.1);
    g.reward = g.kind == "example1" ? RewardDist{RewardKind::kDeterministic, 10.0} : RewardDist{};
    if (jm.contains("reward_dist")) g.reward = reward_dist_from_json(jm["reward_dist"], mpath + "/reward_dist");
    detail::at_path(mpath, [&] { return make_market(g); });
    cfg.market = g;
  } else {
    throw ConfigError(mpath, "expected one of 'inline', 'file', 'generator'");
  }

  cfg.horizon = detail::get<std::int64_t>(j, "horizon", root);
  if (cfg.horizon < 1) throw ConfigError("/horizon", "must be >= 1");
  cfg.replications = detail::get_or<int>(j, "replications", root, 1);
  if (cfg.replications < 1) throw ConfigError("/replications", "must be >= 1");
  cfg.seed = detail::get_or<std::uint64_t>(j, "seed", root, 0);
  const auto fb = detail::get_or<std::string>(j, "feedback", root, "standard");
  cfg.feedback = detail::at_path("/feedback", [&] { return feedback_mode_from_string(fb); });

  const auto& jl = detail::require(j, "learner", root);
  const std::string lpath = "/learner";
  const auto kind = detail::get<std::string>(jl, "kind", lpath);
  cfg.learner = detail::at_path(lpath + "/kind", [&] { return learner_kind_from_string(kind); });
  switch (cfg.learner) {
    case LearnerKind::kExp: {
      auto& e = cfg.exp;
      e.gap_oracle = detail::get_or<bool>(jl, "gap_oracle", lpath, false);
      if (jl.contains("schedule")) {
        const auto& js = jl["schedule"];
        const std::string spath = lpath + "/schedule";
        const auto sk = detail::get_or<std::string>(js, "kind", spath, "theorem3");
        e.schedule = detail::at_path(spath + "/kind", [&] { return schedule_kind_from_string(sk); });
        if (js.contains("M")) e.mixing_constant = detail::get<double>(js, "M", spath);
        if (js.contains("c")) e.gap_constant = detail::get<double>(js, "c", spath);
        if (e.mixing_constant && !(*e.mixing_constant > 0.0)) throw ConfigError(spath + "/M", "must be > 0");
        if (e.gap_constant && !(*e.gap_constant > 0.0)) throw ConfigError(spath + "/c", "must be > 0");
        e.alpha = detail::get_or<double>(js, "alpha", spath, e.alpha);
        e.beta = detail::get_or<double>(js, "beta", spath, e.beta);
        e.eta_scale = detail::get_or<double>(js, "eta_scale", spath, e.eta_scale);
        e.gamma_scale = detail::get_or<double>(js, "gamma_scale", spath, e.gamma_scale);
        if (e.schedule == ScheduleKind::kCustom) {
          detail::at_path(spath, [&] {
            return ScheduleSpec::custom(e.alpha, e.beta, e.eta_scale, e.gamma_scale);
          });
        }
      }
      break;
    }
    case LearnerKind::kTrial: {
      auto& t = cfg.trial;
      t.eps = detail::get<double>(jl, "eps", lpath);
      t.delta = detail::get<double>(jl, "delta", lpath);
      t.omega = detail::get_or<double>(jl, "omega", lpath, 0.5);
      if (jl.contains("tau")) {
        const auto& jt = jl["tau"];
        if (jt.is_array()) {
          for (std::size_t i = 0; i < jt.size(); ++i) {
            t.tau.push_back(detail::as<std::int64_t>(jt[i], lpath + "/tau/" + std::to_string(i)));
          }
        } else {
          t.tau.push_back(detail::as<std::int64_t>(jt, lpath + "/tau"));
        }
      }
      const auto mode = detail::get_or<std::string>(jl, "mode", lpath, "free");
      if (mode != "free" && mode != "theorem6") throw ConfigError(lpath + "/mode", "expected 'free' or 'theorem6'");
      t.theorem6 = mode == "theorem6";
      t.p = detail::get_or<double>(jl, "p", lpath, 0.9);
      t.diagnostics = detail::get_or<bool>(jl, "diagnostics", lpath, false);
      break;
    }
    case LearnerKind::kBestResponse: {
      auto& b = cfg.best_response;
      const auto start = detail::get_or<std::string>(jl, "start", lpath, "empty");
      if (start != "empty" && start != "random") throw ConfigError(lpath + "/start", "expected 'empty' or 'random'");
      b.random_start = start == "random";
      const auto up = detail::get_or<std::string>(jl, "updates", lpath, "simultaneous");
      if (up == "simultaneous") {
        b.updates = UpdateRule::kSimultaneous;
      } else if (up == "sequential") {
        b.updates = UpdateRule::kSequential;
      } else if (up == "random") {
        b.updates = UpdateRule::kRandom;
      } else {
        throw ConfigError(lpath + "/updates", "expected 'simultaneous', 'sequential' or 'random'");
      }
      break;
    }
    case LearnerKind::kMonotone:
      cfg.monotone.beta = detail::get_or<double>(jl, "beta", lpath, 0.0);
      cfg.monotone.step = detail::get_or<double>(jl, "step", lpath, 0.0);
      if (cfg.monotone.beta < 0.0) throw ConfigError(lpath + "/beta", "must be >= 0");
      if (cfg.monotone.step < 0.0) throw ConfigError(lpath + "/step", "must be >= 0");
      break;
  }
  const Market market = resolve_market(cfg);
  detail::at_path(lpath, [&] {
    validate_run_config(cfg, market);
    return 0;
  });
  return cfg;
}

inline RunConfig run_config_from_json(const json& j) {
  return run_config_from_json(j, [](const std::string&) -> Market {
    throw std::invalid_argument("market files are not supported here");
  });
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// FNV-1a of the canonical (sorted-key, compact) config document.
inline std::string config_hash(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(to_json(cfg).dump())));
  return buf;
}

// ---------------------------------------------------------------------------
// CSV and summaries.

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Columns: t, p_<m>, a_<m>, r_<m> for every man, regret, stable, dist,
/// eta, gamma. Missing values are empty; the sink action is -1.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj, int n) {
  os << "t";
  for (int m = 0; m < n; ++m) os << ",p_" << m;
  for (int m = 0; m < n; ++m) os << ",a_" << m;
  for (int m = 0; m < n; ++m) os << ",r_" << m;
  os << ",regret,stable,dist,eta,gamma\n";
  auto opt = [&](const std::optional<double>& v) {
    if (v) os << format_double(*v);
  };
  for (std::size_t i = 0; i < traj.rounds.size(); ++i) {
    const auto& r = traj.rounds[i];
    const auto& mt = traj.metrics[i];
    os << (i + 1);
    for (int m = 0; m < n; ++m) os << ',' << r.proposals[m];
    for (int m = 0; m < n; ++m) os << ',' << (r.rewards[m] ? 1 : 0);
    for (int m = 0; m < n; ++m) {
      os << ',';
      opt(r.rewards[m]);
    }
    os << ',';
    if (mt.regret) os << *mt.regret;
    os << ',' << (mt.stable ? 1 : 0) << ',';
    opt(mt.dist);
    os << ',';
    opt(mt.eta);
    os << ',';
    opt(mt.gamma);
    os << '\n';
  }
}

/// Columns: man, episode, old_baseline, new_baseline, u_<w>, expected_<w>.
inline void write_episode_csv(std::ostream& os, const Trajectory& traj, int n) {
  os << "man,episode,old_baseline,new_baseline";
  for (int w = 0; w < n; ++w) os << ",u_" << w;
  for (int w = 0; w < n; ++w) os << ",expected_" << w;
  os << '\n';
  for (const auto& e : traj.episodes) {
    os << e.man << ',' << e.report.episode << ',' << e.report.old_baseline << ','
       << e.report.new_baseline;
    for (int w = 0; w < n; ++w) {
      os << ',';
      if (!std::isnan(e.report.utilities[w])) os << format_double(e.report.utilities[w]);
    }
    for (int w = 0; w < n; ++w) os << ',' << format_double(e.expected[w]);
    os << '\n';
  }
}

inline void write_solver_log_csv(std::ostream& os, std::span<const SolverLogRow> log) {
  os << "iter,residual_regularized,residual_simplified,dist_prev\n";
  for (const auto& r : log) {
    os << r.iter << ',' << format_double(r.residual_regularized) << ','
       << format_double(r.residual_simplified) << ',' << format_double(r.dist_prev) << '\n';
  }
}

inline json run_summary(const RunConfig& cfg, const Market& market,
                        std::span<const Trajectory> trajs) {
  const std::int64_t T = cfg.horizon;
  json j{{"schema_version", kSchemaVersion},
         {"config_hash", config_hash(cfg)},
         {"seed", cfg.seed},
         {"n", market.size()},
         {"T", T},
         {"learner", to_string(cfg.learner)},
         {"replications", trajs.size()},
         {"sigma2", reward_sigma2(market)},
         {"envelope_violation_fraction", nullptr}};
  const auto curve = mean_regret_curve(trajs);
  if (!curve.empty()) {
    j["regret_final"] = curve.back();
    const double logT = std::log(static_cast<double>(std::max<std::int64_t>(T, 2)));
    j["regret_per_logT"] = curve.back() / logT;
    const auto slope = regret_log_slope(curve);
    j["regret_per_logT_fit"] = slope ? json(*slope) : json(nullptr);
  } else {
    j["regret_final"] = nullptr;
    j["regret_per_logT"] = nullptr;
    j["regret_per_logT_fit"] = nullptr;
  }
  json rates = json::array();
  double mean_rate = 0.0;
  for (const auto& t : trajs) {
    const double r = stability_rate_last_decade(t);
    rates.push_back(r);
    mean_rate += r;
  }
  j["stability_rate_last_decade"] = trajs.empty() ? 0.0 : mean_rate / trajs.size();
  j["stability_rate_last_decade_per_replication"] = std::move(rates);
  return j;
}

inline json to_json(const ProbeReport& rep) {
  json reps = json::array();
  for (const auto& r : rep.replications) {
    reps.push_back({{"within_envelope", r.within_envelope},
                    {"violations", r.violations},
                    {"final_distance", r.final_distance},
                    {"max_ratio", r.max_ratio},
                    {"log_distance_slope", r.log_distance_slope}});
  }
  return json{{"schema_version", kSchemaVersion},
              {"c", rep.c},
              {"radius", rep.radius},
              {"t0", rep.t0},
              {"envelope_violation_fraction", rep.envelope_violation_fraction},
              {"proof_envelope_violation_fraction", rep.proof_envelope_violation_fraction},
              {"warnings", rep.warnings},
              {"replications", std::move(reps)}};
}

}  // namespace decmatch
