#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "cpc/mlp.hpp"
#include "cpc/random.hpp"

namespace cpc::testing {

// Reference forward pass written independently of the library, evaluated in
// scalar type T. Dropout masks follow the documented draw order: one
// Rng(seed), block by block, sample by sample, unit by unit.
template <typename T = double>
struct ReferencePass {
  std::vector<Eigen::MatrixXd> pre;  // per block, units x batch
  T loss = 0;
};

template <typename T = double>
ReferencePass<T> reference_pass(const MlpModel& m, const Matrix& x, const std::vector<int>& y,
                                const ForwardOptions& opts) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  ReferencePass<T> out;
  const bool drop = opts.train_mode && opts.dropout > 0.0;
  Rng rng(opts.seed);
  std::bernoulli_distribution keep(1.0 - opts.dropout);
  const T scale = T(1) / (T(1) - T(opts.dropout));
  Mat a = x.transpose().cast<T>();
  for (const auto& b : m.blocks()) {
    const Mat w = b.weights.cast<T>();
    Mat z(w.rows(), a.cols());
    for (Eigen::Index s = 0; s < a.cols(); ++s)
      for (Eigen::Index u = 0; u < z.rows(); ++u) {
        T acc = T(b.bias(u));
        for (Eigen::Index i = 0; i < a.rows(); ++i) acc += w(u, i) * a(i, s);
        z(u, s) = acc;
      }
    Mat h = z;
    if (m.activation() == Activation::relu) h = h.cwiseMax(T(0));
    if (drop) {
      for (Eigen::Index s = 0; s < h.cols(); ++s)
        for (Eigen::Index u = 0; u < h.rows(); ++u) h(u, s) *= keep(rng) ? scale : T(0);
    }
    out.pre.push_back(z.template cast<double>());
    if (b.spec.kind == BlockKind::plain) {
      a = h;
    } else if (b.spec.kind == BlockKind::residual_add) {
      a = h + a;
    } else {
      Mat cat(h.rows() + a.rows(), a.cols());
      cat << h, a;
      a = cat;
    }
  }
  const Mat hw = m.head().weights.cast<T>();
  const Vec hb = m.head().bias.cast<T>();
  for (Eigen::Index s = 0; s < a.cols(); ++s) {
    Vec sc = hw * a.col(s) + hb;
    T top = sc.maxCoeff();
    T lse = top + std::log((sc.array() - top).exp().sum());
    out.loss += lse - sc(y[static_cast<std::size_t>(s)]);
  }
  out.loss /= static_cast<T>(a.cols());
  return out;
}

template <typename T>
inline double kink_distance(const ReferencePass<T>& p) {
  double d = INFINITY;
  for (const auto& z : p.pre) d = std::min(d, z.cwiseAbs().minCoeff());
  return d;
}

struct GradCheckCase {
  MlpModel model;
  Matrix x;
  std::vector<int> y;
  ForwardOptions opts;
};

/// Random net holding at least one block of every kind, in a shuffled order,
/// with inputs redrawn until every pre-activation is >= 1e-3 from zero.
inline GradCheckCase random_gradcheck_case(std::uint64_t seed, Activation act, double dropout) {
  Rng rng(seed);
  std::uniform_int_distribution<int> width(2, 6);
  Architecture arch;
  arch.input_width = width(rng);
  arch.classes = std::uniform_int_distribution<int>(2, 4)(rng);
  std::vector<BlockKind> kinds{BlockKind::plain, BlockKind::residual_add, BlockKind::residual_concat};
  const int extra = std::uniform_int_distribution<int>(0, 2)(rng);
  for (int i = 0; i < extra; ++i) kinds.push_back(static_cast<BlockKind>(rng() % 3));
  std::shuffle(kinds.begin(), kinds.end(), rng);
  int w = arch.input_width;
  for (auto k : kinds) {
    BlockSpec b{k, k == BlockKind::residual_add ? w : width(rng)};
    arch.blocks.push_back(b);
    w = block_output_width(b, w);
  }
  auto model = MlpModel::create(arch, rng(), act);
  // Non-zero biases so that nothing sits exactly on a kink by construction.
  auto params = model.parameters();
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& p : params) p += 0.1 * g(rng);
  model.set_parameters(params);

  const int batch = std::uniform_int_distribution<int>(3, 8)(rng);
  GradCheckCase c{model, Matrix(batch, arch.input_width), std::vector<int>(static_cast<std::size_t>(batch)),
                  ForwardOptions{dropout > 0.0, dropout, rng()}};
  for (int attempt = 0;; ++attempt) {
    for (Eigen::Index i = 0; i < c.x.rows(); ++i)
      for (Eigen::Index j = 0; j < c.x.cols(); ++j) c.x(i, j) = g(rng);
    for (auto& l : c.y) l = static_cast<int>(rng() % static_cast<unsigned>(arch.classes));
    if (act == Activation::identity || kink_distance(reference_pass(c.model, c.x, c.y, c.opts)) >= 1e-3) break;
    if (attempt > 10000) throw std::runtime_error("could not place inputs away from kinks");
  }
  return c;
}

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over all
/// parameters. The numeric side is the fourth-order central difference
/// (8(f(+h) - f(-h)) - (f(+2h) - f(-2h))) / 12h of the reference pass, evaluated
/// in extended precision at the parameter values actually realized in f64.
inline double max_relative_gradient_error(const GradCheckCase& c, double step = 1e-5,
                                          double floor = 1e-6) {
  using Ext = long double;
  const auto analytic = backward(c.model, c.x, c.y, c.opts).flatten();
  MlpModel probe = c.model;
  auto params = probe.parameters();
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    auto diff = [&](double h) {
      const double hi = keep + h;
      const double lo = keep - h;
      params[i] = hi;
      probe.set_parameters(params);
      const Ext up = reference_pass<Ext>(probe, c.x, c.y, c.opts).loss;
      params[i] = lo;
      probe.set_parameters(params);
      const Ext down = reference_pass<Ext>(probe, c.x, c.y, c.opts).loss;
      params[i] = keep;
      return std::pair<Ext, Ext>{up - down, static_cast<Ext>(hi) - static_cast<Ext>(lo)};
    };
    const auto [d1, w1] = diff(step);
    const auto [d2, w2] = diff(2.0 * step);
    // Slopes over the realized widths, combined to cancel the h^2 term.
    const Ext s1 = d1 / w1;
    const Ext s2 = d2 / w2;
    const double numeric = static_cast<double>((4 * s1 - s2) / 3);
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
  }
  return worst;
}

}  // namespace cpc::testing
