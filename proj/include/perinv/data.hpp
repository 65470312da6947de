#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "perinv/environment.hpp"
#include "perinv/tensor.hpp"

namespace perinv {

// ---------------------------------------------------------------- IDX files

inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

// Raw unsigned-byte images as stored in an IDX file.
struct IdxImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;

  std::size_t image_size() const { return rows * cols; }
};

using IdxPayload = std::variant<Tensor, std::vector<int>>;

// Labels (magic 0x801) become an integer vector; images (magic 0x803) become a
// [n, rows, cols] tensor rescaled to [0, 1].
IdxPayload parse_idx(std::span<const std::uint8_t> bytes);
std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes);
IdxImages parse_idx_images(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_idx_labels(std::span<const int> labels);
std::vector<std::uint8_t> encode_idx_images(const IdxImages& images);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

// Gray [n, rows, cols] tensor in [0, 1] from a subset of raw images.
Tensor images_to_tensor(const IdxImages& images, std::span<const std::size_t> indices);

// ------------------------------------------------------- colored digit law

// Digits < 5 -> 0, >= 5 -> 1, then each label flipped with probability noise_rate.
std::vector<int> binarize_and_noise(std::span<const int> digits, double noise_rate, std::uint64_t seed);

// Gray [n, h, w] images become [n, h, w, 2] (red, green). Label 0 is green
// with probability p_e, label 1 is red with probability p_e.
Environment colorize(const Tensor& images, std::span<const int> labels, double p_e, std::uint64_t seed,
                     std::string context_id = "colored");

inline constexpr std::size_t kRed = 0;
inline constexpr std::size_t kGreen = 1;

// Exact counter-clockwise rotation of [n, h, w] or [n, h, w, c] images.
Tensor rotate(const Tensor& images, int degrees);

// 2x2 average pooling over the spatial dims of [n, h, w] or [n, h, w, c].
Tensor downsample(const Tensor& images);

// [n, ...] -> [n, prod(...)].
Tensor flatten_rows(const Tensor& t);

// ------------------------------------------------------------ linear SEM

// Y = 1[H . rho + eps > 0], Z = (2Y - 1) * strength + noise, X = G [H; Z].
struct SemSpec {
  std::string id = "sem";
  std::size_t dim_H = 2;
  std::size_t dim_Z = 2;
  std::vector<double> rho{1.0, 1.0};
  double noise_std = 1.0;
  double spurious_noise_std = 1.0;
  std::uint64_t mixing_seed = 7;
  // Explicit row-major (dim_H + dim_Z)^2 mixing matrix; a seeded random
  // orthogonal matrix is drawn when absent.
  std::optional<std::vector<double>> mixing;

  std::size_t input_dim() const { return dim_H + dim_Z; }
  void validate() const;
  // Throws SpecError when the H-component is not invertible.
  std::vector<double> mixing_matrix() const;
};

Environment generate_sem_env(const SemSpec& spec, double env_strength, std::size_t n, std::uint64_t seed,
                             std::string context_id = "sem");

// Accuracy of the optimal classifier that sees H only: 1 - atan(noise_std / |rho|) / pi.
double sem_invariant_accuracy(const SemSpec& spec);

// --------------------------------------------------- federation layout

struct ContextSpec {
  double p_e = 0.9;
  std::size_t samples = 0;
};

struct ClientSpec {
  std::vector<ContextSpec> train;
  int rotation_deg = 0;
  std::size_t test_samples = 0;
  // Per-client causal coefficients for SEM federations (empty: use the base spec).
  std::vector<double> rho;
};

struct FederationSpec {
  std::vector<ClientSpec> clients;
  std::vector<double> test_p{0.10};

  void validate() const;

  // Four clients, p_train 0.95/0.90/0.85/0.80, rotations 0/90/180/270,
  // 12500 train and 2500 test images each, p_test 0.10.
  static FederationSpec rc_default();
  // Four SEM clients with train contexts {p_i, 0.6} (p_i as in rc_default),
  // 1000 samples each, 2000 test samples, rho = (1, +1) for clients 0-1 and
  // (1, -1) for clients 2-3, p_test 0.10 ... 0.50.
  static FederationSpec sem_default();
};

struct ClientData {
  int id = 0;
  std::vector<Environment> train;
  // One test environment per entry of FederationSpec::test_p.
  std::vector<Environment> test;
};

struct ImageSource {
  IdxImages images;
  std::vector<int> digits;
};

struct RcOptions {
  double noise_rate = 0.25;
  bool downsample = true;
};

// Builds the rotated colored-digit federation. Train contexts draw from the
// first sum(train samples) source images, test sets from the following
// sum(test samples), both without replacement.
std::vector<ClientData> partition_clients(const FederationSpec& spec, const ImageSource& source,
                                          std::uint64_t seed, const RcOptions& options = {});

// Maps a color-agreement probability to a signed spurious strength:
// scale * (2p - 1), so p > 0.5 aligns Z with Y and p < 0.5 flips it.
double sem_strength(double p_e, double spurious_scale);

std::vector<ClientData> sem_federation(const FederationSpec& spec, const SemSpec& base,
                                       double spurious_scale, std::uint64_t seed);

// ---------------------------------------------------- environment files

void write_environment(const Environment& env, const std::filesystem::path& path);
Environment read_environment(const std::filesystem::path& path);
std::string environment_to_string(const Environment& env);
Environment environment_from_string(const std::string& text);

}  // namespace perinv
