#include "splab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "splab/checkpoint.hpp"
#include "splab/csv.hpp"
#include "splab/losses.hpp"

namespace splab {

ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
  const auto& ds = cfg.dataset;
  ExperimentData out;
  switch (ds.kind) {
    case DatasetKind::synthetic: {
      SyntheticSpec spec;
      spec.ambient_dim = ds.ambient_dim;
      spec.subspace_dim = ds.subspace_dim;
      spec.region.radius = ds.radius;
      spec.sample_count = ds.train_count + ds.eval_count;
      spec.seed = cfg.seed;
      auto syn = gen_synthetic(spec);
      for (std::size_t i = 0; i < syn.samples.rows; ++i) {
        const auto r = syn.samples.row(i);
        (i < ds.train_count ? out.train : out.eval).emplace_back(r.begin(), r.end());
      }
      out.input_shape = {ds.ambient_dim};
      out.exact_basis = syn.basis;
      break;
    }
    case DatasetKind::smooth_images: {
      const Rng root(cfg.seed);
      auto train = gen_smooth_images(ds.train_count, root.derive(0).next_u64(), 3, ds.height, ds.width);
      auto eval = gen_smooth_images(ds.eval_count, root.derive(1).next_u64(), 3, ds.height, ds.width);
      out.input_shape = train.shape();
      out.train = train.as_vectors();
      out.eval = eval.as_vectors();
      out.train_images = std::move(train);
      break;
    }
    case DatasetKind::cifar10: {
      auto cifar = load_cifar10(ds.dir);
      auto train = cifar.train.head(ds.train_count);
      auto eval = cifar.test.head(ds.eval_count);
      out.input_shape = train.shape();
      out.train = train.as_vectors();
      out.train_labels = train.labels;
      out.eval = eval.as_vectors();
      out.train_images = std::move(train);
      break;
    }
  }
  return out;
}

void train_supervised(Network& net, const std::vector<Vec>& inputs, const std::vector<std::uint8_t>& labels,
                      std::size_t epochs, double lr, std::size_t batch_size, std::uint64_t seed) {
  if (inputs.size() != labels.size()) throw ShapeError("train_supervised: inputs and labels differ in count");
  if (inputs.empty() || epochs == 0) return;
  const Rng root(seed);
  for (std::size_t e = 0; e < epochs; ++e) {
    Rng rng = root.derive(e);
    const auto order = rng.permutation(inputs.size());
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      Gradients acc = Gradients::zeros_like(net);
      for (std::size_t p = start; p < end; ++p) {
        const auto f = forward(net, inputs[order[p]], true);
        const auto lv = cross_entropy(f.logits, labels[order[p]]);
        if (!std::isfinite(lv.value)) throw TrainingError("teacher training: non-finite loss");
        acc.add(backward(net, f, lv.grad, {.params = true, .input = false}).params);
      }
      acc.scale(1.0 / static_cast<double>(end - start));
      sgd_update(net, acc, lr);
    }
  }
}

Network build_teacher(const ExperimentConfig& cfg, const ExperimentData& data) {
  if (!cfg.teacher.checkpoint.empty()) return load_checkpoint(cfg.teacher.checkpoint).net;
  Rng rng = Rng(cfg.seed).derive(20);
  Network net;
  if (cfg.teacher.arch == "conv") {
    if (data.input_shape.size() != 3) throw ConfigError("teacher.arch conv needs image data");
    net = make_conv_net(data.input_shape[0], data.input_shape[1], data.input_shape[2], cfg.teacher.hidden,
                        cfg.teacher.classes, cfg.teacher.biases, rng);
  } else {
    net = make_dense_net(shape_product(data.input_shape), cfg.teacher.hidden, cfg.teacher.classes,
                         cfg.teacher.biases, rng);
  }
  if (cfg.teacher.train_epochs > 0) {
    if (data.train_labels.empty()) throw ConfigError("teacher.train_epochs needs a labeled dataset");
    train_supervised(net, data.train, data.train_labels, cfg.teacher.train_epochs, cfg.teacher.train_lr,
                     cfg.regime.batch_size, Rng(cfg.seed).derive(21).next_u64());
  }
  if (cfg.teacher.prune_ratio > 0.0) net = prune_inactive(net, cfg.teacher.prune_ratio, data.eval).net;
  return net;
}

std::vector<std::size_t> scaled_widths(const Network& teacher, double scale) {
  std::vector<std::size_t> widths;
  for (std::size_t l = 0; l + 1 < teacher.layers.size(); ++l)
    widths.push_back(static_cast<std::size_t>(std::ceil(scale * static_cast<double>(teacher.layers[l].out_ch) - 1e-9)));
  return widths;
}

Network build_student(const ExperimentConfig& cfg, const Network& teacher, Rng& rng) {
  if (!cfg.student.checkpoint.empty()) return load_checkpoint(cfg.student.checkpoint).net;
  const auto widths = cfg.student.hidden.empty() ? scaled_widths(teacher, cfg.student.scale) : cfg.student.hidden;
  if (widths.size() != teacher.hidden_layers())
    throw ConfigError("student.hidden must have one entry per teacher hidden layer");
  const auto& in = teacher.input_shape;
  if (teacher.layers.front().kind == LayerKind::conv)
    return make_conv_net(in[0], in[1], in[2], widths, teacher.output_dim(), teacher.biases, rng,
                         teacher.layers.front().ksize);
  return make_dense_net(teacher.input_size(), widths, teacher.output_dim(), teacher.biases, rng);
}

SubspaceBasis input_basis(const std::vector<Vec>& inputs, double fraction) {
  if (inputs.size() < 2) throw ShapeError("input_basis: need at least two inputs");
  Matrix m(inputs.size(), inputs.front().size());
  for (std::size_t i = 0; i < inputs.size(); ++i) std::copy(inputs[i].begin(), inputs[i].end(), m.data.begin() + static_cast<std::ptrdiff_t>(i * m.cols));
  const auto full = pca_fit(m, OffsetMode::mean);
  return full.truncated(std::max<std::size_t>(1, full.dims_for_variance(fraction)));
}

SubspaceBasis first_layer_basis(const ExperimentConfig& cfg, const ExperimentData& data, const Network& teacher) {
  if (data.exact_basis) return *data.exact_basis;
  const auto& L = teacher.layers.front();
  if (L.kind == LayerKind::conv && data.train_images) {
    const Matrix patches = extract_patches(*data.train_images, L.ksize);
    const auto full = pca_fit(patches, OffsetMode::zero);
    return full.truncated(std::min(cfg.metrics.patch_pca_dims, full.ambient_dim()));
  }
  SubspaceBasis b = input_basis(data.train, 0.95);
  b.offset.clear();
  return b;
}

RegimeRun run_regime(const std::string& label, const TrainConfig& cfg, const Network& teacher,
                     const Network& student_init, const std::vector<Vec>& inputs, const RegimeRunOptions& opts) {
  RegimeRun run;
  run.label = label;
  TrainHooks hooks;
  hooks.eval_set = opts.eval;
  hooks.on_epoch = [&](std::size_t epoch, const Network& net) {
    if (std::find(opts.grid.begin(), opts.grid.end(), epoch) == opts.grid.end()) return;
    GridPoint g;
    g.label = label;
    g.epoch = epoch;
    if (opts.eval && !opts.eval->empty()) {
      g.clean_agreement = clean_agreement(net, teacher, *opts.eval);
      if (opts.robust_eval) {
        const std::size_t n = std::min(opts.robust_count, opts.eval->size());
        const std::vector<Vec> subset(opts.eval->begin(), opts.eval->begin() + static_cast<std::ptrdiff_t>(n));
        g.robust_accuracy = robust_accuracy(net, teacher, subset, *opts.robust_eval, opts.eval_seed);
      }
      if (opts.nc)
        for (const auto& l : nc_report(net, teacher, *opts.eval).layers) g.mbnc.push_back(l.mbnc);
    }
    run.grid.push_back(std::move(g));
    if (opts.on_checkpoint) opts.on_checkpoint(label, epoch, net);
  };
  run.result = train(cfg, teacher, student_init, inputs, hooks);
  for (auto& g : run.grid)
    if (g.epoch >= 1 && g.epoch <= run.result.history.size()) g.loss = run.result.history[g.epoch - 1].loss;
  return run;
}

Manifest::Manifest(std::filesystem::path dir, std::string config_hash, std::string command)
    : dir_(std::move(dir)), hash_(std::move(config_hash)), command_(std::move(command)) {
  std::filesystem::create_directories(dir_);
  std::ifstream in(dir_ / "manifest.json");
  if (!in) return;
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("artifacts")) return;
  for (const auto& a : j["artifacts"])
    if (a.contains("file") && a.contains("config_hash"))
      previous_[a["file"].get<std::string>()] = {a["config_hash"].get<std::string>(), a.value("command", "")};
}

std::filesystem::path Manifest::path(const std::string& file) {
  if (std::find(files_.begin(), files_.end(), file) == files_.end()) files_.push_back(file);
  return dir_ / file;
}

void Manifest::write() const {
  std::map<std::string, std::pair<std::string, std::string>> entries = previous_;
  for (const auto& f : files_) entries[f] = {hash_, command_};
  nlohmann::json j;
  j["artifacts"] = nlohmann::json::array();
  for (const auto& [file, meta] : entries)
    j["artifacts"].push_back({{"file", file}, {"config_hash", meta.first}, {"command", meta.second}});
  std::ofstream out(dir_ / "manifest.json", std::ios::binary);
  if (!out) throw Error("cannot write manifest in " + dir_.string());
  out << j.dump(2) << '\n';
}

void write_grid_csv(const std::vector<GridPoint>& grid, const std::filesystem::path& path) {
  std::size_t layers = 0;
  for (const auto& g : grid) layers = std::max(layers, g.mbnc.size());
  std::vector<std::string> header = {"regime", "epoch", "loss", "clean_agreement", "robust_acc"};
  for (std::size_t l = 0; l < layers; ++l) header.push_back("mbnc_layer" + std::to_string(l));
  CsvWriter w(path, header);
  for (const auto& g : grid) {
    w.field(g.label).field(g.epoch).field(g.loss).field(g.clean_agreement).field(g.robust_accuracy);
    for (std::size_t l = 0; l < layers; ++l) w.field(l < g.mbnc.size() ? g.mbnc[l] : std::nan(""));
    w.end_row();
  }
}

void write_specialization(const SpecializationReport& rep, const std::string& label, Manifest& manifest) {
  for (std::size_t l = 0; l < rep.nc.layers.size(); ++l) {
    const auto& layer = rep.nc.layers[l];
    const std::string suffix = label + "_" + std::to_string(l) + ".csv";
    write_curve_csv(manifest.path("bnc_sorted_" + suffix), "bnc_sorted", l, layer.sorted_bnc);
    {
      std::vector<std::string> header = {"student_node"};
      for (std::size_t j = 0; j < layer.nc.cols; ++j) header.push_back("nc_layer" + std::to_string(l) + "_t" + std::to_string(j));
      CsvWriter w(manifest.path("nc_matrix_" + suffix), header);
      for (std::size_t k = 0; k < layer.nc.rows; ++k) {
        w.field(k);
        for (std::size_t j = 0; j < layer.nc.cols; ++j) w.field(layer.nc(k, j));
        w.end_row();
      }
    }
    {
      CsvWriter w(manifest.path("histogram_" + suffix), {"teacher_node", "specialized_count_layer" + std::to_string(l)});
      for (std::size_t j = 0; j < rep.ratios[l].histogram.size(); ++j) {
        w.field(j).field(rep.ratios[l].histogram[j]);
        w.end_row();
      }
    }
  }
  if (rep.eps) {
    write_curve_csv(manifest.path("eps_in_sorted_" + label + "_0.csv"), "eps_in_sorted", 0, rep.eps->sorted_in);
    write_curve_csv(manifest.path("eps_out_sorted_" + label + "_0.csv"), "eps_out_sorted", 0, rep.eps->sorted_out);
    CsvWriter w(manifest.path("eps_pairs_" + label + "_0.csv"), {"teacher_node", "bnc_layer0", "eps_in_layer0", "eps_out_layer0"});
    for (std::size_t j = 0; j < rep.eps->paired_nc.size(); ++j) {
      w.field(j).field(rep.eps->paired_nc[j]).field(rep.eps->paired_in[j]).field(rep.eps->paired_out[j]);
      w.end_row();
    }
  }
}

TheoryVariantResult run_theory_variant(const std::string& variant, const TheorySpec& spec) {
  TheoryVariantResult res;
  res.variant = variant;
  TheoryInstance inst = make_theory_instance(spec);
  res.convergence = train_to_convergence(inst);
  const double eps = res.convergence.g1_sup;
  const BallRegion region{&inst.data.basis, spec.radius};
  res.theorem1 = verify_theorem1(inst, eps);
  res.theorem2 = verify_theorem2(inst.student, inst.teacher, region, inst.inputs, eps, 2000, spec.seed);
  res.trend = theorem2_trend(inst, res.convergence);
  CorollaryOptions copts;
  copts.seed = spec.seed;
  res.corollary1 = verify_corollary1(inst.student, inst.teacher, region, inst.inputs, eps, copts);

  TheorySpec probe = spec;
  probe.seed = spec.seed ^ 0x5DEECE66DULL;
  SyntheticSpec ds;
  ds.ambient_dim = spec.ambient_dim;
  ds.subspace_dim = spec.subspace_dim;
  ds.region.radius = spec.radius;
  ds.sample_count = spec.samples;
  ds.seed = probe.seed;
  // Fresh samples from the same subspace: reuse the instance basis.
  Rng rng(probe.seed);
  double sup = 0.0;
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const Vec y = inst.data.region.sample(inst.data.basis.dim(), rng);
    Vec x = matvec(inst.data.basis.U, y);
    if (!inst.data.basis.offset.empty()) axpy(1.0, inst.data.basis.offset, x);
    sup = std::max(sup, measure_g1_sup(inst.student, inst.teacher, {x}));
  }
  res.g1_sup_probe = sup;
  return res;
}

namespace {

bool non_decreasing(const std::vector<double>& v, double tol) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] < v[i - 1] - tol) return false;
  return true;
}

}  // namespace

DeskScaleResult run_desk_scale(const ImageDataset& train_images, const ImageDataset& test_images,
                               const DeskScaleOptions& opts) {
  auto log = [&](const std::string& s) {
    if (opts.log) opts.log(s);
  };
  DeskScaleResult res;
  const ImageDataset train_set = train_images.head(opts.train_count);
  const std::vector<Vec> train = train_set.as_vectors();
  const std::vector<Vec> eval = test_images.head(opts.eval_count).as_vectors();
  const Rng root(opts.seed);

  log("training teacher");
  Rng teacher_rng = root.derive(1);
  Network teacher = make_conv_net(train_set.channels, train_set.height, train_set.width, opts.teacher_channels, 10,
                                  true, teacher_rng);
  train_supervised(teacher, train, train_set.labels, opts.teacher_epochs, opts.teacher_lr, opts.batch_size,
                   root.derive(2).next_u64());
  teacher = prune_inactive(teacher, opts.prune_ratio, eval).net;

  Rng student_rng = root.derive(3);
  const auto widths = scaled_widths(teacher, opts.student_scale);
  const Network student_init = make_conv_net(train_set.channels, train_set.height, train_set.width, widths, 10, true,
                                             student_rng);

  AttackSpec eval_attack;
  eval_attack.iterations = opts.eval_iterations;
  RegimeRunOptions ro;
  ro.grid = opts.grid;
  ro.eval = &eval;
  ro.robust_eval = eval_attack;
  ro.robust_count = opts.robust_count;
  ro.eval_seed = root.derive(4).next_u64();
  ro.nc = true;

  auto base_cfg = [&](Regime r) {
    TrainConfig c;
    c.regime = r;
    c.epochs = opts.epochs;
    c.batch_size = opts.batch_size;
    c.learning_rate = opts.learning_rate;
    c.seed = root.derive(5).next_u64();
    c.attack.iterations = opts.at_iterations;
    return c;
  };

  std::map<std::string, RegimeRun> runs;
  auto run = [&](const std::string& label, TrainConfig c) {
    log("training " + label);
    runs[label] = run_regime(label, c, teacher, student_init, train, ro);
    const auto& g = runs[label].grid;
    res.grid.insert(res.grid.end(), g.begin(), g.end());
    if (!g.empty()) {
      res.final_robust[label] = g.back().robust_accuracy;
      res.final_mbnc[label] = g.back().mbnc;
    }
  };
  run("st_logit", base_cfg(Regime::st_logit));
  run("st_label", base_cfg(Regime::st_label));
  run("at_teacher_target", base_cfg(Regime::at_teacher_target));
  for (double rho : opts.ccat_rho) {
    TrainConfig c = base_cfg(Regime::ccat);
    c.ccat_rho = rho;
    run("ccat_rho" + format_double(rho), c);
  }

  const double at = res.final_robust["at_teacher_target"];
  const double stl = res.final_robust["st_logit"];
  const double stb = res.final_robust["st_label"];
  res.a_robust_order = at > stl && stl > stb;

  const Vec& mb_at = res.final_mbnc["at_teacher_target"];
  const Vec& mb_st = res.final_mbnc["st_logit"];
  res.b_mbnc = !mb_at.empty() && mb_at.size() == mb_st.size();
  for (std::size_t l = 0; l < mb_at.size() && res.b_mbnc; ++l)
    if (!(mb_at[l] > mb_st[l])) res.b_mbnc = false;

  {
    const Matrix patches = extract_patches(train_set.head(std::min<std::size_t>(train_set.size(), 1000)));
    const auto basis = pca_fit(patches, OffsetMode::zero).truncated(opts.patch_pca_dims);
    const auto rep = specialization_report(runs["st_logit"].result.student, teacher, eval, &basis);
    res.pearson_nc_epsin = rep.pearson_nc_epsin;
    res.c_pearson = res.pearson_nc_epsin < -0.5;
  }

  res.d_monotone = true;
  for (const std::string label : {"st_logit", "at_teacher_target"}) {
    std::vector<double> ra;
    std::vector<std::vector<double>> mb;
    for (const auto& g : runs[label].grid) {
      ra.push_back(g.robust_accuracy);
      for (std::size_t l = 0; l < g.mbnc.size(); ++l) {
        if (mb.size() <= l) mb.resize(l + 1);
        mb[l].push_back(g.mbnc[l]);
      }
    }
    if (!non_decreasing(ra, opts.tolerance)) res.d_monotone = false;
    for (const auto& m : mb)
      if (!non_decreasing(m, opts.tolerance)) res.d_monotone = false;
  }

  res.e_ccat = !opts.ccat_rho.empty();
  for (double rho : opts.ccat_rho)
    if (!(res.final_robust["ccat_rho" + format_double(rho)] < at)) res.e_ccat = false;

  log("robust feature fine-tuning");
  {
    const std::vector<Vec> rft_inputs(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(std::min(opts.rft_count, train.size())));
    TrainConfig c = base_cfg(Regime::rft);
    c.epochs = opts.rft_epochs;
    auto rft = rft_finetune(c, teacher, runs["at_teacher_target"].result.student, runs["st_logit"].result.student,
                            rft_inputs, opts.rft, {});
    TrainConfig st = base_cfg(Regime::st_logit);
    st.epochs = opts.rft_epochs;
    auto baseline = splab::train(st, teacher, runs["st_logit"].result.student, rft_inputs, {});
    const std::size_t n = std::min(opts.robust_count, eval.size());
    const std::vector<Vec> subset(eval.begin(), eval.begin() + static_cast<std::ptrdiff_t>(n));
    res.rft_robust = robust_accuracy(rft.student, teacher, subset, eval_attack, ro.eval_seed);
    res.rft_baseline_robust = robust_accuracy(baseline.student, teacher, subset, eval_attack, ro.eval_seed);
    res.rft_better = res.rft_robust > res.rft_baseline_robust;
  }
  return res;
}

}  // namespace splab
