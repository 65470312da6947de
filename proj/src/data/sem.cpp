#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "perinv/data.hpp"
#include "perinv/errors.hpp"
#include "perinv/rng.hpp"
#include "perinv/text.hpp"

namespace perinv {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

void SemSpec::validate() const {
  if (dim_H == 0) throw SpecError("SEM needs at least one causal dimension");
  if (rho.size() != dim_H) {
    throw SpecError("rho has " + std::to_string(rho.size()) + " entries, dim_H is " + std::to_string(dim_H));
  }
  if (!(noise_std >= 0.0) || !(spurious_noise_std >= 0.0)) throw SpecError("noise scales must be >= 0");
  if (mixing && mixing->size() != input_dim() * input_dim()) {
    throw SpecError("mixing matrix must be " + std::to_string(input_dim()) + "x" + std::to_string(input_dim()));
  }
}

std::vector<double> SemSpec::mixing_matrix() const {
  validate();
  const auto d = static_cast<Eigen::Index>(input_dim());
  RowMajor g(d, d);
  if (mixing) {
    g = Eigen::Map<const RowMajor>(mixing->data(), d, d);
  } else {
    Rng rng(mixing_seed);
    RowMajor gauss(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) gauss(i, j) = rng.normal();
    }
    Eigen::HouseholderQR<RowMajor> qr(gauss);
    RowMajor q = qr.householderQ();
    // Sign-normalize so Q depends only on the draw, not on the QR convention.
    const RowMajor r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < d; ++j) {
      if (r(j, j) < 0) q.col(j) *= -1.0;
    }
    g = q;
  }
  // The causal block must be recoverable from X; a well-conditioned square G suffices.
  Eigen::JacobiSVD<RowMajor> svd(g);
  const auto sv = svd.singularValues();
  const double smax = sv.maxCoeff();
  const double smin = sv.minCoeff();
  if (!std::isfinite(smax) || !(smin > 1e-12 * smax)) {
    throw SpecError("SEM mixing matrix is singular (condition number " +
                    (smin > 0 ? format_double(smax / smin) : std::string("inf")) + ")");
  }
  return std::vector<double>(g.data(), g.data() + d * d);
}

Environment generate_sem_env(const SemSpec& spec, double env_strength, std::size_t n, std::uint64_t seed,
                             std::string context_id) {
  if (n == 0) throw PreconditionError("generate_sem_env: n must be >= 1");
  const std::vector<double> g = spec.mixing_matrix();
  const std::size_t d = spec.input_dim();
  Rng rng(seed);
  std::vector<double> x(n * d);
  std::vector<int> labels(n);
  std::vector<double> latent(d);
  for (std::size_t i = 0; i < n; ++i) {
    double score = 0.0;
    for (std::size_t k = 0; k < spec.dim_H; ++k) {
      latent[k] = rng.normal();
      score += latent[k] * spec.rho[k];
    }
    const double eps = spec.noise_std * rng.normal();
    const int y = score + eps > 0.0 ? 1 : 0;
    labels[i] = y;
    const double sign = y == 1 ? 1.0 : -1.0;
    for (std::size_t k = 0; k < spec.dim_Z; ++k) {
      latent[spec.dim_H + k] = sign * env_strength + spec.spurious_noise_std * rng.normal();
    }
    for (std::size_t r = 0; r < d; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += g[r * d + c] * latent[c];
      x[i * d + r] = acc;
    }
  }
  GenParams gen;
  gen.sem_spec_id = spec.id;
  gen.env_strength = env_strength;
  return Environment{std::move(context_id), Tensor(Shape{n, d}, std::move(x)), std::move(labels), gen};
}

double sem_invariant_accuracy(const SemSpec& spec) {
  spec.validate();
  double norm2 = 0.0;
  for (double r : spec.rho) norm2 += r * r;
  if (norm2 == 0.0) return 0.5;
  return 1.0 - std::atan(spec.noise_std / std::sqrt(norm2)) / std::numbers::pi;
}

double sem_strength(double p_e, double spurious_scale) { return spurious_scale * (2.0 * p_e - 1.0); }

}  // namespace perinv
