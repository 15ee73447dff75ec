#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hal/harness.hpp"
#include "hal/io.hpp"
#include "hal/rng.hpp"

namespace fs = std::filesystem;
using namespace hal;

namespace {

struct CliState {
  std::string data_dir, out_dir = "out", config_path, profile = "desk";
  std::vector<std::string> overrides;  // key=value, applied in order
  int downsample = -1;                 // -1 means profile default
  std::string method;                  // baseline subcommand
  double dup_fraction = 0.8, noise_sigma = 0.05, blend = 0.5;
  std::string policy_path;
  std::string curves_path, amax_csv;
  double a_max = -1.0;
};

[[noreturn]] void die(const std::string& msg) {
  throw std::runtime_error(msg);
}

bool parse_bool(const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  die("expected on/off, got '" + v + "'");
}

int parse_int(const std::string& v) {
  std::size_t pos = 0;
  int out = std::stoi(v, &pos);
  if (pos != v.size()) die("bad integer '" + v + "'");
  return out;
}

double parse_real(const std::string& v) {
  std::size_t pos = 0;
  double out = std::stod(v, &pos);
  if (pos != v.size()) die("bad number '" + v + "'");
  return out;
}

Representation parse_rep(const std::string& v) {
  if (v == "mean") return Representation::Mean;
  if (v == "median") return Representation::Median;
  if (v == "mode") return Representation::Mode;
  if (v == "max") return Representation::Max;
  if (v == "min") return Representation::Min;
  die("unknown representation '" + v + "'");
}

std::string rep_name(Representation r) {
  switch (r) {
    case Representation::Mean: return "mean";
    case Representation::Median: return "median";
    case Representation::Mode: return "mode";
    case Representation::Max: return "max";
    case Representation::Min: return "min";
  }
  return "?";
}

void apply_override(EpisodeConfig& cfg, int& downsample, const std::string& key,
                    const std::string& value) {
  if (key == "episodes") cfg.episodes = parse_int(value);
  else if (key == "steps") cfg.steps = parse_int(value);
  else if (key == "batch") cfg.batch = parse_int(value);
  else if (key == "pool_size") cfg.pool_size = parse_int(value);
  else if (key == "n_labeled") cfg.n_labeled = parse_int(value);
  else if (key == "n_val") cfg.n_val = parse_int(value);
  else if (key == "gamma") cfg.gamma = parse_real(value);
  else if (key == "policy_lr") cfg.policy_lr = parse_real(value);
  else if (key == "n_mc") cfg.n_mc = parse_int(value);
  else if (key == "epochs") cfg.clf.epochs = parse_int(value);
  else if (key == "finetune_epochs") cfg.clf.finetune_epochs = parse_int(value);
  else if (key == "clf_batch") cfg.clf.batch = parse_int(value);
  else if (key == "clf_lr") cfg.clf.lr = parse_real(value);
  else if (key == "retrain") {
    if (value == "scratch") cfg.retrain = RetrainMode::Scratch;
    else if (value == "finetune") cfg.retrain = RetrainMode::Finetune;
    else die("unknown retrain mode '" + value + "'");
  } else if (key == "representation") cfg.representation = parse_rep(value);
  else if (key == "ba") cfg.toggles.bias_aware = parse_bool(value);
  else if (key == "diversity") cfg.toggles.diversity = parse_bool(value);
  else if (key == "prior") cfg.toggles.prior = parse_bool(value);
  else if (key == "model") {
    if (value == "conv") cfg.model = ModelKind::Conv;
    else if (value == "mlp") cfg.model = ModelKind::Mlp;
    else die("unknown model kind '" + value + "'");
  } else if (key == "hidden") cfg.policy_hidden = parse_int(value);
  else if (key == "replay_capacity") cfg.replay_capacity = parse_int(value);
  else if (key == "clip_lo") cfg.clip.lo = parse_real(value);
  else if (key == "clip_hi") cfg.clip.hi = parse_real(value);
  else if (key == "baseline_subtract") cfg.baseline_subtract = parse_bool(value);
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
  else if (key == "repeats") cfg.repeats = parse_int(value);
  else if (key == "downsample") downsample = parse_int(value);
  else die("unknown config key '" + key + "'");
}

struct RunConfig {
  EpisodeConfig cfg;
  int downsample = 1;
};

RunConfig assemble_config(const CliState& cli) {
  RunConfig rc;
  if (cli.profile == "desk") {
    rc.cfg = EpisodeConfig{};  // defaults are the desk profile
    rc.downsample = 0;         // 0 = halve once when the image allows it
  } else if (cli.profile == "paper") {
    rc.cfg = EpisodeConfig{};
    rc.cfg.episodes = 800;
    rc.cfg.pool_size = 0;
    rc.cfg.n_val = 10000;
    rc.downsample = 1;
  } else {
    die("unknown profile '" + cli.profile + "'");
  }
  int downsample = -1;
  if (!cli.config_path.empty())
    for (const auto& [k, v] : read_config_file(cli.config_path))
      apply_override(rc.cfg, downsample, k, v);
  for (const auto& kv : cli.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) die("override must be key=value: '" + kv + "'");
    apply_override(rc.cfg, downsample, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (cli.downsample >= 0) downsample = cli.downsample;
  if (downsample >= 0) rc.downsample = downsample;
  rc.cfg.validate();
  return rc;
}

ImageStore load_working_store(const CliState& cli, const RunConfig& rc) {
  std::string dir = cli.data_dir;
  if (dir.empty()) {
    const char* env = std::getenv("HAL_DATA_DIR");
    if (env != nullptr) dir = env;
  }
  if (dir.empty()) die("no data directory: pass --data-dir or set HAL_DATA_DIR");
  ImageStore store = load_idx(dir + "/train-images-idx3-ubyte",
                              dir + "/train-labels-idx1-ubyte");
  int factor = rc.downsample;
  if (factor == 0)
    factor = (store.height >= 28 && store.height % 2 == 0 && store.width % 2 == 0) ? 2 : 1;
  if (factor > 1) store = downsample(store, factor);
  return stratified_subsample(store, rc.cfg.pool_size, rc.cfg.seed);
}

void write_curve_rows(CsvTable& table, const std::string& method, int seed,
                      const LearningCurve& curve) {
  for (std::size_t i = 0; i < curve.labels.size(); ++i)
    table.rows.push_back({method, std::to_string(seed),
                          std::to_string(curve.labels[i]),
                          format_double(curve.accuracy[i])});
}

CsvTable curve_table() {
  CsvTable t;
  t.header = {"method", "seed", "labels", "accuracy"};
  return t;
}

void cmd_train_policy(const CliState& cli) {
  auto rc = assemble_config(cli);
  ImageStore store = load_working_store(cli, rc);
  auto res = train_policy(rc.cfg, store);
  CsvTable rewards;
  rewards.header = {"episode", "step", "reward"};
  for (std::size_t ep = 0; ep < res.episode_rewards.size(); ++ep)
    for (std::size_t s = 0; s < res.episode_rewards[ep].size(); ++s)
      rewards.rows.push_back({std::to_string(ep), std::to_string(s),
                              format_double(res.episode_rewards[ep][s])});
  write_csv(cli.out_dir + "/rewards.csv", rewards);
  save_policy(res.policy, cli.out_dir + "/policy.ckpt");
}

void cmd_eval_policy(const CliState& cli) {
  auto rc = assemble_config(cli);
  ImageStore store = load_working_store(cli, rc);
  std::string path = cli.policy_path.empty() ? cli.out_dir + "/policy.ckpt"
                                             : cli.policy_path;
  PolicyNet policy = load_policy(path);
  CsvTable table = curve_table();
  for (int r = 0; r < rc.cfg.repeats; ++r) {
    std::uint64_t es = mix(repeat_seed(rc.cfg, r), salt::kEval);
    auto res = run_episode(rc.cfg, policy, store, es, SelectMode::Greedy);
    write_curve_rows(table, "policy", r, res.curve);
  }
  write_csv(cli.out_dir + "/curve.csv", table);
}

void cmd_baseline(const CliState& cli) {
  auto rc = assemble_config(cli);
  ImageStore store = load_working_store(cli, rc);
  std::vector<std::pair<std::string, BaselineMethod>> methods = {
      {"random", BaselineMethod::Random},
      {"entropy", BaselineMethod::Entropy},
      {"dbal", BaselineMethod::Dbal},
      {"kcenter", BaselineMethod::Kcenter}};
  if (!cli.method.empty()) {
    std::erase_if(methods, [&](const auto& m) { return m.first != cli.method; });
    if (methods.empty()) die("unknown baseline method '" + cli.method + "'");
  }
  CsvTable table = curve_table();
  for (const auto& [name, method] : methods)
    for (int r = 0; r < rc.cfg.repeats; ++r) {
      std::uint64_t es = mix(repeat_seed(rc.cfg, r), salt::kEval);
      auto res = run_baseline_episode(rc.cfg, method, store, es);
      write_curve_rows(table, name, r, res.curve);
    }
  write_csv(cli.out_dir + "/curve.csv", table);
}

void cmd_ablation_rep(const CliState& cli) {
  auto rc = assemble_config(cli);
  ImageStore store = load_working_store(cli, rc);
  auto rows = run_ablation_representation(rc.cfg, store);
  CsvTable table;
  table.header = {"representation", "repeat", "alc_norm"};
  for (const auto& row : rows)
    table.rows.push_back({rep_name(row.representation), std::to_string(row.repeat),
                          format_double(row.alc)});
  write_csv(cli.out_dir + "/ablation.csv", table);
}

void cmd_ablation_ba(const CliState& cli) {
  auto rc = assemble_config(cli);
  ImageStore store = load_working_store(cli, rc);
  CsvTable table = curve_table();
  for (bool ba_on : {true, false}) {
    EpisodeConfig cfg = rc.cfg;
    cfg.toggles.bias_aware = ba_on;
    for (int r = 0; r < cfg.repeats; ++r) {
      cfg.seed = repeat_seed(rc.cfg, r);
      auto trained = train_policy(cfg, store);
      std::uint64_t es = mix(cfg.seed, salt::kEval);
      auto res = run_episode(cfg, trained.policy, store, es, SelectMode::Greedy);
      write_curve_rows(table, ba_on ? "ba-on" : "ba-off", r, res.curve);
    }
  }
  write_csv(cli.out_dir + "/curve.csv", table);
}

void cmd_duplicated(const CliState& cli) {
  auto rc = assemble_config(cli);
  ImageStore store = load_working_store(cli, rc);
  auto res = run_duplicated(rc.cfg, store, cli.dup_fraction, cli.noise_sigma);
  CsvTable curves = curve_table();
  CsvTable summary;
  summary.header = {"method", "seed", "alc_norm", "dup_fraction_selected"};
  CsvTable picks;
  picks.header = {"method", "seed", "step", "pool_index", "provenance"};
  auto prov_name = [](Provenance p) {
    return p == Provenance::Duplicate ? "duplicate"
           : p == Provenance::Shifted ? "shifted"
                                      : "original";
  };
  for (const auto& rep : res.repeats) {
    write_curve_rows(curves, "policy", rep.repeat, rep.policy_curve);
    write_curve_rows(curves, "random", rep.repeat, rep.random_curve);
    summary.rows.push_back({"policy", std::to_string(rep.repeat),
                            format_double(rep.policy_alc),
                            format_double(rep.policy_dup_fraction)});
    summary.rows.push_back({"random", std::to_string(rep.repeat),
                            format_double(rep.random_alc),
                            format_double(rep.random_dup_fraction)});
    for (const auto& [name, steps] :
         {std::pair{"policy", &rep.policy_indices}, {"random", &rep.random_indices}})
      for (std::size_t s = 0; s < steps->size(); ++s)
        for (int idx : (*steps)[s])
          picks.rows.push_back({name, std::to_string(rep.repeat), std::to_string(s),
                                std::to_string(idx),
                                prov_name(rep.provenance[static_cast<std::size_t>(idx)])});
  }
  write_csv(cli.out_dir + "/curve.csv", curves);
  write_csv(cli.out_dir + "/summary.csv", summary);
  write_csv(cli.out_dir + "/selections.csv", picks);
  save_policy(res.policy, cli.out_dir + "/policy.ckpt");
}

void cmd_transfer(const CliState& cli) {
  auto rc = assemble_config(cli);
  ImageStore store = load_working_store(cli, rc);
  auto res = run_transfer(rc.cfg, store, cli.blend, mix(rc.cfg.seed, salt::kField));
  CsvTable table = curve_table();
  for (const auto& tc : res) {
    write_curve_rows(table, "transferred", tc.repeat, tc.transferred);
    write_curve_rows(table, "fresh", tc.repeat, tc.fresh);
    write_curve_rows(table, "source", tc.repeat, tc.source_ref);
  }
  write_csv(cli.out_dir + "/curve.csv", table);
}

void cmd_alc(const CliState& cli) {
  if (cli.curves_path.empty()) die("alc needs --curves <curve.csv>");
  CsvTable in = read_csv(cli.curves_path);
  if (in.header != std::vector<std::string>{"method", "seed", "labels", "accuracy"})
    die("unexpected curve.csv header in " + cli.curves_path);

  std::map<std::string, std::map<std::string, LearningCurve>> curves;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& row : in.rows) {
    LearningCurve& c = curves[row[0]][row[1]];
    if (c.labels.empty()) order.emplace_back(row[0], row[1]);
    c.labels.push_back(std::stol(row[2]));
    c.accuracy.push_back(parse_real(row[3]));
  }
  auto rand_it = curves.find("random");
  if (rand_it == curves.end()) die("no 'random' method rows in " + cli.curves_path);

  std::map<std::string, double> amax_by_seed;
  if (!cli.amax_csv.empty()) {
    CsvTable am = read_csv(cli.amax_csv);
    if (am.header != std::vector<std::string>{"seed", "a_max"})
      die("expected header seed,a_max in " + cli.amax_csv);
    for (const auto& row : am.rows) amax_by_seed[row[0]] = parse_real(row[1]);
  } else if (cli.a_max < 0.0) {
    die("alc needs --a-max or --amax-csv");
  }

  CsvTable out;
  out.header = {"method", "seed", "alc_norm"};
  for (const auto& [method, seed] : order) {
    if (method == "random") continue;
    auto rseed = rand_it->second.find(seed);
    if (rseed == rand_it->second.end())
      die("no random curve for seed " + seed + " in " + cli.curves_path);
    double amax = cli.a_max;
    if (!amax_by_seed.empty()) {
      auto it = amax_by_seed.find(seed);
      if (it == amax_by_seed.end()) die("no a_max entry for seed " + seed);
      amax = it->second;
    }
    double v = alc_norm(curves[method][seed], rseed->second, amax);
    out.rows.push_back({method, seed, format_double(v)});
  }
  write_csv(cli.out_dir + "/alc.csv", out);
}

}  // namespace

int main(int argc, char** argv) {
  CliState cli;
  CLI::App app{"tournament-policy active learning experiments"};
  app.require_subcommand(1);

  auto add_common = [&cli](CLI::App* sub) {
    sub->add_option("--data-dir", cli.data_dir, "directory with idx image/label files");
    sub->add_option("--out", cli.out_dir, "output directory");
    sub->add_option("--config", cli.config_path, "flat key=value config file");
    sub->add_option("--profile", cli.profile, "desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    sub->add_option("--set", cli.overrides, "config override key=value (repeatable)");
    sub->add_option("--downsample", cli.downsample, "average-pool factor");
    for (const char* key :
         {"seed", "repeats", "episodes", "steps", "batch", "pool_size", "n_labeled",
          "n_val", "gamma", "policy_lr", "n_mc", "epochs", "finetune_epochs",
          "clf_batch", "clf_lr", "retrain", "representation", "ba", "diversity",
          "prior", "model", "hidden", "replay_capacity", "clip_lo", "clip_hi",
          "baseline_subtract"}) {
      std::string k = key;
      std::string flag = "--" + k;
      for (auto& ch : flag)
        if (ch == '_') ch = '-';
      sub->add_option_function<std::string>(
          flag, [&cli, k](const std::string& v) { cli.overrides.push_back(k + "=" + v); },
          "sets config key " + k);
    }
  };

  struct Sub {
    const char* name;
    const char* help;
    void (*run)(const CliState&);
  };
  std::vector<Sub> subs = {
      {"train-policy", "train the query policy and write rewards.csv", cmd_train_policy},
      {"eval-policy", "greedy learning curves for a trained policy", cmd_eval_policy},
      {"baseline", "learning curves for the heuristic query strategies", cmd_baseline},
      {"ablation-rep", "class-center representation sweep", cmd_ablation_rep},
      {"ablation-ba", "bias-aware feature on/off comparison", cmd_ablation_ba},
      {"duplicated", "duplicate-heavy pool experiment", cmd_duplicated},
      {"transfer", "train on source domain, query on color-shifted target", cmd_transfer},
      {"alc", "normalized area under learning curves from curve.csv", cmd_alc},
  };
  std::map<std::string, void (*)(const CliState&)> dispatch;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub);
    dispatch[s.name] = s.run;
    if (std::string(s.name) == "baseline")
      sub->add_option("--method", cli.method, "random, entropy, dbal, or kcenter");
    if (std::string(s.name) == "duplicated") {
      sub->add_option("--dup-fraction", cli.dup_fraction, "share of pool replaced");
      sub->add_option("--noise-sigma", cli.noise_sigma, "duplicate pixel noise");
    }
    if (std::string(s.name) == "transfer")
      sub->add_option("--blend", cli.blend, "color-field blend strength");
    if (std::string(s.name) == "eval-policy")
      sub->add_option("--policy", cli.policy_path, "policy checkpoint path");
    if (std::string(s.name) == "alc") {
      sub->add_option("--curves", cli.curves_path, "curve.csv to score");
      sub->add_option("--a-max", cli.a_max, "full-pool accuracy for every seed");
      sub->add_option("--amax-csv", cli.amax_csv, "csv with seed,a_max rows");
    }
  }

  CLI11_PARSE(app, argc, argv);
  try {
    fs::create_directories(cli.out_dir);
    for (const auto& [name, run] : dispatch)
      if (app.got_subcommand(name)) {
        run(cli);
        return 0;
      }
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
