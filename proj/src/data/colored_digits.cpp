#include "perinv/data.hpp"
#include "perinv/errors.hpp"
#include "perinv/rng.hpp"

namespace perinv {

namespace {

struct ImageGeometry {
  std::size_t n, h, w, c;
};

ImageGeometry geometry(const Tensor& images, const char* op) {
  if (images.rank() == 3) return {images.dim(0), images.dim(1), images.dim(2), 1};
  if (images.rank() == 4) return {images.dim(0), images.dim(1), images.dim(2), images.dim(3)};
  throw PreconditionError(std::string(op) + ": expected [n, h, w] or [n, h, w, c], got " +
                          shape_str(images.shape()));
}

}  // namespace

std::vector<int> binarize_and_noise(std::span<const int> digits, double noise_rate, std::uint64_t seed) {
  if (!(noise_rate >= 0.0 && noise_rate <= 0.5)) {
    throw PreconditionError("noise_rate must lie in [0, 0.5]");
  }
  Rng rng(seed);
  std::vector<int> out(digits.size());
  for (std::size_t i = 0; i < digits.size(); ++i) {
    const int y = digits[i] < 5 ? 0 : 1;
    // One draw per sample keeps the stream aligned whatever the rate.
    out[i] = rng.bernoulli(noise_rate) ? 1 - y : y;
  }
  return out;
}

Environment colorize(const Tensor& images, std::span<const int> labels, double p_e, std::uint64_t seed,
                     std::string context_id) {
  if (!(p_e >= 0.0 && p_e <= 1.0)) throw PreconditionError("p_e must lie in [0, 1]");
  if (images.rank() != 3) {
    throw PreconditionError("colorize expects gray [n, h, w] images, got " + shape_str(images.shape()));
  }
  const std::size_t n = images.dim(0);
  if (labels.size() != n) throw PreconditionError("colorize: label count does not match images");
  const std::size_t px = images.dim(1) * images.dim(2);
  std::vector<double> out(n * px * 2, 0.0);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw PreconditionError("colorize needs binary labels, found " + std::to_string(labels[i]));
    }
    const bool agree = rng.bernoulli(p_e);
    // label 0 -> green when agreeing; label 1 -> red when agreeing
    const bool green = (labels[i] == 0) == agree;
    const std::size_t ch = green ? kGreen : kRed;
    for (std::size_t p = 0; p < px; ++p) out[(i * px + p) * 2 + ch] = images[i * px + p];
  }
  GenParams gen;
  gen.p_e = p_e;
  return Environment{std::move(context_id),
                     Tensor(Shape{n, images.dim(1), images.dim(2), 2}, std::move(out)),
                     std::vector<int>(labels.begin(), labels.end()), gen};
}

Tensor rotate(const Tensor& images, int degrees) {
  const auto g = geometry(images, "rotate");
  if (g.h != g.w) throw PreconditionError("rotate needs square images, got " + shape_str(images.shape()));
  const int turns = ((degrees % 360) + 360) % 360;
  if (turns % 90 != 0) throw PreconditionError("rotation must be a multiple of 90 degrees");
  if (turns == 0) return images;
  const std::size_t s = g.h;
  std::vector<double> out(images.size());
  for (std::size_t k = 0; k < g.n; ++k) {
    const std::size_t base = k * s * s * g.c;
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t j = 0; j < s; ++j) {
        std::size_t si, sj;  // source pixel for out[i][j]
        switch (turns) {
          case 90: si = j; sj = s - 1 - i; break;
          case 180: si = s - 1 - i; sj = s - 1 - j; break;
          default: si = s - 1 - j; sj = i; break;
        }
        for (std::size_t c = 0; c < g.c; ++c) {
          out[base + (i * s + j) * g.c + c] = images[base + (si * s + sj) * g.c + c];
        }
      }
    }
  }
  return Tensor(images.shape(), std::move(out));
}

Tensor downsample(const Tensor& images) {
  const auto g = geometry(images, "downsample");
  if (g.h % 2 != 0 || g.w % 2 != 0) {
    throw PreconditionError("downsample needs even spatial dims, got " + shape_str(images.shape()));
  }
  const std::size_t oh = g.h / 2, ow = g.w / 2;
  std::vector<double> out(g.n * oh * ow * g.c);
  for (std::size_t k = 0; k < g.n; ++k) {
    const double* in = images.data().data() + k * g.h * g.w * g.c;
    double* o = out.data() + k * oh * ow * g.c;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        for (std::size_t c = 0; c < g.c; ++c) {
          const auto at = [&](std::size_t r, std::size_t q) { return in[(r * g.w + q) * g.c + c]; };
          o[(i * ow + j) * g.c + c] =
              0.25 * (at(2 * i, 2 * j) + at(2 * i, 2 * j + 1) + at(2 * i + 1, 2 * j) + at(2 * i + 1, 2 * j + 1));
        }
      }
    }
  }
  Shape shape = images.shape();
  shape[1] = oh;
  shape[2] = ow;
  return Tensor(std::move(shape), std::move(out));
}

Tensor flatten_rows(const Tensor& t) { return t.reshaped(Shape{t.rows(), t.row_size()}); }

}  // namespace perinv
