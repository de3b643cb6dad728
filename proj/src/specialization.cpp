#include "splab/specialization.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace splab {

namespace {

double correlation_from_moments(double cov, double var_a, double var_b) {
  if (!(var_a > 0.0) || !(var_b > 0.0)) return 0.0;
  return std::clamp(cov / std::sqrt(var_a * var_b), -1.0, 1.0);
}

struct Moments {
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
};

Moments two_pass(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  Moments m;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    m.cov += da * db;
    m.var_a += da * da;
    m.var_b += db * db;
  }
  return m;
}

}  // namespace

double nc(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("nc: activation vectors differ in length");
  if (a.size() < 2) throw ShapeError("nc: need at least two activations");
  const auto m = two_pass(a, b);
  return correlation_from_moments(m.cov, m.var_a, m.var_b);
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ShapeError("pearson: lengths differ");
  if (xs.size() < 2) throw Error("pearson: need at least two points");
  const auto m = two_pass(xs, ys);
  if (!(m.var_a > 0.0) || !(m.var_b > 0.0)) throw Error("pearson: zero variance");
  return std::clamp(m.cov / std::sqrt(m.var_a * m.var_b), -1.0, 1.0);
}

NcAccumulator::NcAccumulator(std::size_t students, std::size_t teachers)
    : ns_(students), nt_(teachers), sum_s_(students), sum_t_(teachers), sq_s_(students), sq_t_(teachers),
      cross_(students * teachers) {}

void NcAccumulator::add(std::span<const double> student, std::span<const double> teacher) {
  if (student.size() != ns_ || teacher.size() != nt_) throw ShapeError("NcAccumulator: node count mismatch");
  if (n_ == 0) {
    shift_s_.assign(student.begin(), student.end());
    shift_t_.assign(teacher.begin(), teacher.end());
  }
  ++n_;
  thread_local Vec ds, dt;
  ds.resize(ns_);
  dt.resize(nt_);
  for (std::size_t k = 0; k < ns_; ++k) {
    ds[k] = student[k] - shift_s_[k];
    sum_s_[k] += ds[k];
    sq_s_[k] += ds[k] * ds[k];
  }
  for (std::size_t j = 0; j < nt_; ++j) {
    dt[j] = teacher[j] - shift_t_[j];
    sum_t_[j] += dt[j];
    sq_t_[j] += dt[j] * dt[j];
  }
  for (std::size_t k = 0; k < ns_; ++k) {
    if (ds[k] == 0.0) continue;
    double* row = cross_.data() + k * nt_;
    for (std::size_t j = 0; j < nt_; ++j) row[j] += ds[k] * dt[j];
  }
}

Matrix NcAccumulator::result() const {
  if (n_ < 2) throw ShapeError("NcAccumulator: need at least two observations");
  const double n = static_cast<double>(n_);
  Matrix out(ns_, nt_);
  for (std::size_t k = 0; k < ns_; ++k) {
    const double var_s = sq_s_[k] - sum_s_[k] * sum_s_[k] / n;
    for (std::size_t j = 0; j < nt_; ++j) {
      const double var_t = sq_t_[j] - sum_t_[j] * sum_t_[j] / n;
      const double cov = cross_[k * nt_ + j] - sum_s_[k] * sum_t_[j] / n;
      out(k, j) = correlation_from_moments(cov, var_s, var_t);
    }
  }
  return out;
}

LayerNc summarize_nc(Matrix m) {
  LayerNc r;
  r.bnc.assign(m.cols, -1.0);
  r.best_student.assign(m.cols, 0);
  for (std::size_t j = 0; j < m.cols; ++j) {
    for (std::size_t k = 0; k < m.rows; ++k) {
      if (m(k, j) > r.bnc[j]) {
        r.bnc[j] = m(k, j);
        r.best_student[j] = k;
      }
    }
  }
  double sum = 0.0;
  for (double b : r.bnc) sum += b;
  r.mbnc = r.bnc.empty() ? 0.0 : sum / static_cast<double>(r.bnc.size());
  r.sorted_bnc = r.bnc;
  std::sort(r.sorted_bnc.begin(), r.sorted_bnc.end(), std::greater<>());
  r.nc = std::move(m);
  return r;
}

NcReport nc_report(const Network& student, const Network& teacher, const std::vector<Vec>& eval_set) {
  if (student.hidden_layers() != teacher.hidden_layers())
    throw ShapeError("nc_report: student has " + std::to_string(student.hidden_layers()) +
                     " hidden layers, teacher has " + std::to_string(teacher.hidden_layers()));
  if (eval_set.size() < 2) throw ShapeError("nc_report: need at least two evaluation samples");
  const std::size_t layers = student.hidden_layers();
  std::vector<NcAccumulator> acc;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& ls = student.layers[l];
    const auto& lt = teacher.layers[l];
    if (ls.spatial() != lt.spatial()) throw ShapeError("nc_report: spatial size differs at layer " + std::to_string(l));
    acc.emplace_back(ls.out_ch, lt.out_ch);
  }
  Vec s_obs, t_obs;
  for (const auto& x : eval_set) {
    const auto fs = forward(student, x, true);
    const auto ft = forward(teacher, x, true);
    for (std::size_t l = 0; l < layers; ++l) {
      const auto& ls = student.layers[l];
      const auto& lt = teacher.layers[l];
      const std::size_t hw = ls.spatial();
      s_obs.resize(ls.out_ch);
      t_obs.resize(lt.out_ch);
      for (std::size_t p = 0; p < hw; ++p) {
        for (std::size_t k = 0; k < ls.out_ch; ++k) s_obs[k] = fs.activations[l][k * hw + p];
        for (std::size_t j = 0; j < lt.out_ch; ++j) t_obs[j] = ft.activations[l][j * hw + p];
        acc[l].add(s_obs, t_obs);
      }
    }
  }
  NcReport rep;
  for (auto& a : acc) rep.layers.push_back(summarize_nc(a.result()));
  return rep;
}

Vec normalized_delta(std::span<const double> wk, std::span<const double> wj) {
  if (wk.size() != wj.size()) throw ShapeError("normalized_delta: length mismatch");
  const double nk = norm2(wk), nj = norm2(wj);
  if (nk == 0.0 || nj == 0.0) throw Error("normalized_delta: zero-norm weight (degenerate node)");
  Vec d(wk.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = wk[i] / nk - wj[i] / nj;
  return d;
}

EpsInOut eps_in_out(const Network& student, const Network& teacher, const SubspaceBasis& basis,
                    const Matrix& first_layer_nc) {
  const auto& ls = student.layers.front();
  const auto& lt = teacher.layers.front();
  if (ls.fan_in() != lt.fan_in()) throw ShapeError("eps_in_out: first-layer kernels differ in size");
  if (basis.ambient_dim() != ls.fan_in())
    throw ShapeError("eps_in_out: basis dimension " + std::to_string(basis.ambient_dim()) +
                     " does not match kernel size " + std::to_string(ls.fan_in()));
  if (first_layer_nc.rows != ls.out_ch || first_layer_nc.cols != lt.out_ch)
    throw ShapeError("eps_in_out: NC matrix shape mismatch");
  EpsInOut r;
  r.eps_in = Matrix(ls.out_ch, lt.out_ch);
  r.eps_out = Matrix(ls.out_ch, lt.out_ch);
  for (std::size_t k = 0; k < ls.out_ch; ++k) {
    const Vec wk = node_kernel(student, 0, k);
    for (std::size_t j = 0; j < lt.out_ch; ++j) {
      const auto p = project(basis, normalized_delta(wk, node_kernel(teacher, 0, j)));
      r.eps_in(k, j) = norm2(p.in_component);
      r.eps_out(k, j) = norm2(p.out_component);
    }
  }
  const LayerNc summary = summarize_nc(first_layer_nc);
  for (std::size_t j = 0; j < lt.out_ch; ++j) {
    const std::size_t k = summary.best_student[j];
    r.paired_nc.push_back(summary.bnc[j]);
    r.paired_in.push_back(r.eps_in(k, j));
    r.paired_out.push_back(r.eps_out(k, j));
  }
  r.sorted_in = r.paired_in;
  r.sorted_out = r.paired_out;
  std::sort(r.sorted_in.begin(), r.sorted_in.end());
  std::sort(r.sorted_out.begin(), r.sorted_out.end());
  return r;
}

RatioReport ratios_and_histogram(const Matrix& m, double low, double high) {
  RatioReport r;
  r.histogram.assign(m.cols, 0);
  for (std::size_t k = 0; k < m.rows; ++k) {
    double best = -1.0;
    for (std::size_t j = 0; j < m.cols; ++j) {
      best = std::max(best, m(k, j));
      if (m(k, j) > high) ++r.histogram[j];
    }
    if (best < low) ++r.unspecialized;
    if (best > high) ++r.specialized;
  }
  if (r.specialized == 0) {
    r.infinite = true;
    r.ratio = std::numeric_limits<double>::infinity();
  } else {
    r.ratio = static_cast<double>(r.unspecialized) / static_cast<double>(r.specialized);
  }
  return r;
}

SpecializationReport specialization_report(const Network& student, const Network& teacher,
                                           const std::vector<Vec>& eval_set, const SubspaceBasis* basis) {
  SpecializationReport rep;
  rep.nc = nc_report(student, teacher, eval_set);
  for (const auto& l : rep.nc.layers) rep.ratios.push_back(ratios_and_histogram(l.nc));
  if (basis && !rep.nc.layers.empty()) {
    rep.eps = eps_in_out(student, teacher, *basis, rep.nc.layers.front().nc);
    try {
      rep.pearson_nc_epsin = pearson(rep.eps->paired_nc, rep.eps->paired_in);
    } catch (const Error&) {
      rep.pearson_nc_epsin = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return rep;
}

}  // namespace splab
