#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "splab/checkpoint.hpp"
#include "splab/csv.hpp"
#include "splab/experiments.hpp"

using namespace splab;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;
constexpr int kInconclusive = 3;
constexpr int kTheoryFail = 4;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

ExperimentConfig load(const Options& o) {
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.theory.fullrank.seed = *o.seed;
    cfg.theory.lowrank.seed = *o.seed;
  }
  if (!o.out.empty()) cfg.output = o.out;
  cfg.validate();
  return cfg;
}

std::string command_line(const std::string& cmd, const Options& o) {
  std::string s = "splab " + cmd + " --config " + o.config;
  if (o.seed) s += " --seed " + std::to_string(*o.seed);
  return s;
}

std::vector<std::string> run_labels(const ExperimentConfig& cfg) {
  std::vector<std::string> labels;
  for (const auto& name : cfg.regime.names) {
    if (name == "ccat" && cfg.regime.ccat_rho.size() > 1) {
      for (double rho : cfg.regime.ccat_rho) labels.push_back("ccat_rho" + format_double(rho));
    } else {
      labels.push_back(name);
    }
  }
  return labels;
}

std::filesystem::path out_dir(const ExperimentConfig& cfg) { return cfg.output; }

Network load_teacher(const ExperimentConfig& cfg) {
  const std::filesystem::path p =
      cfg.teacher.checkpoint.empty() ? out_dir(cfg) / "teacher.splb" : std::filesystem::path(cfg.teacher.checkpoint);
  if (!std::filesystem::exists(p)) throw Error("missing checkpoint: " + p.string());
  return load_checkpoint(p).net;
}

std::vector<std::pair<std::string, Network>> load_students(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, Network>> out;
  std::vector<std::filesystem::path> paths;
  if (!cfg.metrics.students.empty()) {
    for (const auto& s : cfg.metrics.students) paths.emplace_back(s);
  } else {
    for (const auto& l : run_labels(cfg)) paths.push_back(out_dir(cfg) / ("student_" + l + ".splb"));
  }
  for (const auto& p : paths) {
    if (!std::filesystem::exists(p)) throw Error("missing checkpoint: " + p.string());
    std::string name = p.stem().string();
    if (name.rfind("student_", 0) == 0) name = name.substr(8);
    out.emplace_back(name, load_checkpoint(p).net);
  }
  return out;
}

int cmd_train(const Options& o) {
  const ExperimentConfig cfg = load(o);
  Manifest manifest(out_dir(cfg), config_hash(cfg), command_line("train", o));
  const ExperimentData data = load_experiment_data(cfg);
  const Network teacher = build_teacher(cfg, data);
  save_checkpoint({teacher, {0, "teacher", cfg.seed}}, manifest.path("teacher.splb"));
  Rng student_rng = Rng(cfg.seed).derive(30);
  const Network student_init = build_student(cfg, teacher, student_rng);

  RegimeRunOptions ro;
  ro.grid = cfg.regime.epoch_grid.empty() ? std::vector<std::size_t>{cfg.regime.epochs} : cfg.regime.epoch_grid;
  ro.eval = &data.eval;
  if (cfg.metrics.robust_accuracy) ro.robust_eval = cfg.attack_spec();
  ro.eval_seed = Rng(cfg.seed).derive(31).next_u64();
  ro.nc = cfg.metrics.nc;
  ro.on_checkpoint = [&](const std::string& label, std::size_t epoch, const Network& net) {
    if (cfg.regime.epoch_grid.empty()) return;
    save_checkpoint({net, {static_cast<std::uint32_t>(epoch), label, cfg.seed}},
                    manifest.path("student_" + label + "_e" + std::to_string(epoch) + ".splb"));
  };

  std::map<std::string, Network> trained;
  std::vector<GridPoint> grid;
  auto finish = [&](const std::string& label, const RegimeRun& run) {
    save_checkpoint({run.result.student, {static_cast<std::uint32_t>(run.result.history.size()), label, cfg.seed}},
                    manifest.path("student_" + label + ".splb"));
    write_metrics_csv(run.result.history, manifest.path("metrics_" + label + ".csv").string());
    grid.insert(grid.end(), run.grid.begin(), run.grid.end());
    trained[label] = run.result.student;
  };

  for (const auto& name : cfg.regime.names) {
    const Regime regime = regime_from_string(name);
    if (regime == Regime::ccat) {
      for (double rho : cfg.regime.ccat_rho) {
        const std::string label = cfg.regime.ccat_rho.size() > 1 ? "ccat_rho" + format_double(rho) : name;
        TrainConfig tc = cfg.train_config(regime);
        tc.ccat_rho = rho;
        std::cerr << "training " << label << '\n';
        finish(label, run_regime(label, tc, teacher, student_init, data.train, ro));
      }
      continue;
    }
    if (regime == Regime::rft) {
      Network robust;
      if (!cfg.regime.robust_model.empty()) {
        robust = load_checkpoint(cfg.regime.robust_model).net;
      } else if (trained.count("at_teacher_target")) {
        robust = trained["at_teacher_target"];
      } else {
        std::cerr << "training at_teacher_target (robust model)\n";
        robust = train(cfg.train_config(Regime::at_teacher_target), teacher, student_init, data.train).student;
      }
      const Network base = trained.count("st_logit") ? trained["st_logit"] : student_init;
      RobustFeatureOptions rf;
      rf.alpha = cfg.regime.rft_alpha;
      rf.steps = cfg.regime.rft_steps;
      rf.step_size = cfg.regime.rft_step_size;
      rf.clip_lo = cfg.attack.clip_lo;
      rf.clip_hi = cfg.attack.clip_hi;
      std::cerr << "training rft\n";
      const auto rft_data = robust_feature_dataset(data.train, robust, teacher, rf,
                                                   Rng(cfg.seed).derive(32).next_u64());
      finish(name, run_regime(name, cfg.train_config(regime), teacher, base, rft_data, ro));
      continue;
    }
    std::cerr << "training " << name << '\n';
    finish(name, run_regime(name, cfg.train_config(regime), teacher, student_init, data.train, ro));
  }
  write_grid_csv(grid, manifest.path("robust_grid.csv"));
  manifest.write();
  return kOk;
}

struct AttackSetup {
  AttackSpec spec;
  RobustEvalOptions opts;
};

AttackSetup attack_setup(const std::string& name, const ExperimentConfig& cfg, const Network* surrogate,
                         const SubspaceBasis* basis) {
  AttackSetup a;
  a.spec = cfg.attack_spec();
  const double linf = a.spec.epsilon;
  auto rescale = [&](Norm n, double eps) {
    a.spec.norm = n;
    a.spec.step_size = linf > 0.0 ? a.spec.step_size * eps / linf : eps / 4.0;
    a.spec.epsilon = eps;
  };
  if (name == "linf_pgd") {
  } else if (name == "l2_pgd") {
    rescale(Norm::l2, cfg.metrics.l2_epsilon);
  } else if (name == "l1_pgd") {
    rescale(Norm::l1, cfg.metrics.l1_epsilon);
  } else if (name == "fgsm") {
    a.opts.kind = AttackKind::fgsm;
  } else if (name == "cw") {
    rescale(Norm::l2, cfg.metrics.l2_epsilon);
    a.opts.kind = AttackKind::cw;
  } else if (name == "transfer") {
    if (!surrogate) throw ConfigError("attack transfer needs metrics.surrogate");
    a.opts.kind = AttackKind::transfer;
    a.opts.surrogate = surrogate;
  } else if (name == "in_plane" || name == "out_plane") {
    a.opts.kind = name == "in_plane" ? AttackKind::in_plane : AttackKind::out_plane;
    a.opts.basis = basis;
  } else {
    throw ConfigError("unknown attack: " + name);
  }
  return a;
}

int cmd_evaluate(const Options& o) {
  const ExperimentConfig cfg = load(o);
  const Network teacher = load_teacher(cfg);
  const auto students = load_students(cfg);
  const ExperimentData data = load_experiment_data(cfg);
  Manifest manifest(out_dir(cfg), config_hash(cfg), command_line("evaluate", o));

  std::optional<Network> surrogate;
  if (!cfg.metrics.surrogate.empty()) surrogate = load_checkpoint(cfg.metrics.surrogate).net;
  std::optional<SubspaceBasis> basis;
  for (const auto& a : cfg.metrics.attacks)
    if ((a == "in_plane" || a == "out_plane") && !basis) basis = input_basis(data.train);

  std::vector<std::string> header = {"attack"};
  for (const auto& s : students) {
    header.push_back(s.first + "_mean");
    header.push_back(s.first + "_var");
  }
  CsvWriter w(manifest.path("robust_accuracy.csv"), header);
  const Rng root(cfg.seed);
  for (std::size_t ai = 0; ai < cfg.metrics.attacks.size(); ++ai) {
    const auto& name = cfg.metrics.attacks[ai];
    const AttackSetup setup = attack_setup(name, cfg, surrogate ? &*surrogate : nullptr, basis ? &*basis : nullptr);
    w.field(name);
    for (const auto& s : students) {
      std::vector<double> acc;
      for (std::size_t r = 0; r < cfg.metrics.n_repeats; ++r)
        acc.push_back(robust_accuracy(s.second, teacher, data.eval, setup.spec,
                                      root.derive(40).derive(ai).derive(r).next_u64(), setup.opts));
      double mean = 0.0;
      for (double v : acc) mean += v;
      mean /= static_cast<double>(acc.size());
      double var = 0.0;
      for (double v : acc) var += (v - mean) * (v - mean);
      var /= static_cast<double>(acc.size());
      w.field(mean).field(var);
    }
    w.end_row();
  }
  manifest.write();
  return kOk;
}

int cmd_specialize(const Options& o) {
  const ExperimentConfig cfg = load(o);
  const Network teacher = load_teacher(cfg);
  const auto students = load_students(cfg);
  const ExperimentData data = load_experiment_data(cfg);
  Manifest manifest(out_dir(cfg), config_hash(cfg), command_line("specialize", o));

  std::optional<SubspaceBasis> basis;
  if (cfg.metrics.eps_in_out) basis = first_layer_basis(cfg, data, teacher);

  std::vector<std::pair<std::string, SpecializationReport>> reports;
  for (const auto& [label, student] : students) {
    reports.emplace_back(label, specialization_report(student, teacher, data.eval, basis ? &*basis : nullptr));
    write_specialization(reports.back().second, label, manifest);
  }

  const std::size_t layers = teacher.hidden_layers();
  {
    std::vector<std::string> header = {"model"};
    for (std::size_t l = 0; l < layers; ++l) header.push_back("mbnc_layer" + std::to_string(l));
    CsvWriter w(manifest.path("mbnc.csv"), header);
    for (const auto& [label, rep] : reports) {
      w.field(label);
      for (const auto& layer : rep.nc.layers) w.field(layer.mbnc);
      w.end_row();
    }
  }
  {
    CsvWriter w(manifest.path("ratios.csv"), {"model", "layer", "unspecialized", "specialized", "ratio"});
    for (const auto& [label, rep] : reports)
      for (std::size_t l = 0; l < rep.ratios.size(); ++l) {
        const auto& r = rep.ratios[l];
        w.field(label).field(l).field(r.unspecialized).field(r.specialized)
            .field(r.infinite ? std::numeric_limits<double>::infinity() : r.ratio);
        w.end_row();
      }
  }
  {
    CsvWriter w(manifest.path("pearson.csv"), {"model", "pearson_nc_eps_in_layer0"});
    for (const auto& [label, rep] : reports) {
      w.field(label).field(rep.pearson_nc_epsin);
      w.end_row();
    }
  }
  manifest.write();
  return kOk;
}

const char* verdict(bool pass) { return pass ? "PASS" : "FAIL"; }

int cmd_verify_theory(const Options& o) {
  const ExperimentConfig cfg = load(o);
  Manifest manifest(out_dir(cfg), config_hash(cfg), command_line("verify-theory", o));
  bool inconclusive = false;
  bool failed = false;
  for (const auto& v : cfg.theory.variants) {
    const TheorySpec& spec = v == "fullrank" ? cfg.theory.fullrank : cfg.theory.lowrank;
    std::cerr << "running " << v << " benchmark\n";
    const TheoryVariantResult r = run_theory_variant(v, spec);
    const bool lowrank = spec.subspace_dim < spec.ambient_dim;

    {
      CsvWriter w(manifest.path("theorem1_" + v + ".csv"),
                  {"teacher_node", "observed", "best_student", "cosine", "augmented_cosine", "lambda"});
      for (const auto& n : r.theorem1.nodes) {
        w.field(n.teacher_node).field(std::string(n.observed ? "1" : "0")).field(n.best_student).field(n.cosine)
            .field(n.augmented_cosine).field(n.lambda);
        w.end_row();
      }
    }
    {
      CsvWriter w(manifest.path("drift_" + v + ".csv"), {"student_node", "out_of_plane_drift"});
      for (std::size_t k = 0; k < r.theorem1.out_of_plane_drift.size(); ++k) {
        w.field(k).field(r.theorem1.out_of_plane_drift[k]);
        w.end_row();
      }
    }
    write_theorem2_csv(r.theorem2, manifest.path("theorem2_" + v + ".csv").string());
    {
      CsvWriter w(manifest.path("trend_" + v + ".csv"), {"g1_sup", "max_in_plane_sin"});
      for (const auto& [eps, s] : r.trend.curve) {
        w.field(eps).field(s);
        w.end_row();
      }
    }
    {
      CsvWriter w(manifest.path("corollary1_" + v + ".csv"),
                  {"student_node", "c0", "fanout_norm", "specialized", "boundary_in_region", "active_fraction",
                   "bound", "bound_satisfied", "flag"});
      for (const auto& n : r.corollary1.nodes) {
        w.field(n.student_node).field(n.c0).field(n.fanout_norm).field(std::string(n.specialized ? "1" : "0"))
            .field(std::string(n.boundary_in_region ? "1" : "0")).field(n.active_fraction)
            .field(n.bound ? *n.bound : std::nan("")).field(std::string(n.bound_satisfied ? "1" : "0"))
            .field(n.flag);
        w.end_row();
      }
    }

    std::cout << v << ": g1_sup " << format_double(r.convergence.g1_sup) << " (fresh samples "
              << format_double(r.g1_sup_probe) << "), epochs " << r.convergence.epochs << ", polish "
              << r.convergence.polish_iterations << '\n';
    if (!r.theorem1.conclusive) {
      inconclusive = true;
      std::cout << v << " theorem1: INCONCLUSIVE (g1_sup above target)\n";
      std::cout << v << " theorem2: INCONCLUSIVE\n";
      std::cout << v << " corollary1: INCONCLUSIVE\n";
      continue;
    }
    const bool t1 = r.theorem1.specialization_pass && (!lowrank || r.theorem1.freezing_pass);
    std::cout << v << " theorem1: " << verdict(t1) << " (specialization " << verdict(r.theorem1.specialization_pass);
    if (lowrank) std::cout << ", out-of-plane freezing " << verdict(r.theorem1.freezing_pass);
    std::cout << ")\n";
    std::cout << v << " theorem2: " << verdict(r.trend.pass) << " (trend-level " << verdict(r.trend.pass)
              << ", constant-level " << verdict(r.theorem2.constant_level_pass) << ")\n";
    std::cout << v << " corollary1: " << verdict(r.corollary1.qualitative_pass) << " (qualitative "
              << verdict(r.corollary1.qualitative_pass) << ", bound " << verdict(r.corollary1.bound_pass) << ", "
              << r.corollary1.checked << " nodes checked)\n";
    for (const auto& wmsg : r.theorem1.warnings) std::cout << v << " warning: " << wmsg << '\n';
    for (const auto& wmsg : r.theorem2.warnings) std::cout << v << " warning: " << wmsg << '\n';
    if (!t1 || !r.trend.pass || !r.corollary1.qualitative_pass) failed = true;
  }
  manifest.write();
  if (inconclusive) return kInconclusive;
  return failed ? kTheoryFail : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Teacher-student specialization lab"};
  app.require_subcommand(1);
  Options opts;
  std::map<std::string, int (*)(const Options&)> handlers = {
      {"train", cmd_train},
      {"evaluate", cmd_evaluate},
      {"specialize", cmd_specialize},
      {"verify-theory", cmd_verify_theory},
  };
  const std::map<std::string, std::string> help = {
      {"train", "Build or load the teacher and train students per regime"},
      {"evaluate", "Robust accuracy per attack, mean and variance over repeats"},
      {"specialize", "NC, BNC, MBNC, eps_in/eps_out and ratio reports"},
      {"verify-theory", "Synthetic benchmark for the specialization theorems"},
  };
  for (const auto& [name, _] : handlers) {
    auto* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", opts.config, "Experiment config (JSON)")->required();
    sub->add_option("--seed", opts.seed, "Override the config seed");
    sub->add_option("--out", opts.out, "Override the output directory");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }
  for (const auto* sub : app.get_subcommands()) {
    try {
      return handlers.at(sub->get_name())(opts);
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return kValidation;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kRuntime;
    }
  }
  return kValidation;
}
