#include <numeric>

#include "perinv/data.hpp"
#include "perinv/errors.hpp"
#include "perinv/rng.hpp"
#include "perinv/text.hpp"

namespace perinv {

void FederationSpec::validate() const {
  if (clients.empty()) throw PreconditionError("federation needs at least one client");
  if (test_p.empty()) throw PreconditionError("federation needs at least one test probability");
  for (double p : test_p) {
    if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError("test probabilities must lie in [0, 1]");
  }
  for (std::size_t i = 0; i < clients.size(); ++i) {
    const auto& c = clients[i];
    const std::string who = "client " + std::to_string(i);
    if (c.train.empty()) throw PreconditionError(who + " has no training contexts");
    if (c.test_samples == 0) throw PreconditionError(who + " has no test samples");
    for (const auto& ctx : c.train) {
      if (!(ctx.p_e >= 0.0 && ctx.p_e <= 1.0)) throw PreconditionError(who + ": p_e outside [0, 1]");
      if (ctx.samples == 0) throw PreconditionError(who + ": empty training context");
    }
    if (c.rotation_deg % 90 != 0) throw PreconditionError(who + ": rotation must be a multiple of 90");
  }
}

FederationSpec FederationSpec::rc_default() {
  FederationSpec spec;
  const double p_train[] = {0.95, 0.90, 0.85, 0.80};
  for (int i = 0; i < 4; ++i) {
    ClientSpec c;
    c.train.push_back(ContextSpec{p_train[i], 12500});
    c.rotation_deg = 90 * i;
    c.test_samples = 2500;
    spec.clients.push_back(c);
  }
  spec.test_p = {0.10};
  return spec;
}

FederationSpec FederationSpec::sem_default() {
  FederationSpec spec;
  const double p_train[] = {0.95, 0.90, 0.85, 0.80};
  // The second causal coefficient differs by client: personalized invariant signal.
  const double own[] = {1.0, 1.0, -1.0, -1.0};
  for (int i = 0; i < 4; ++i) {
    ClientSpec c;
    c.train.push_back(ContextSpec{p_train[i], 1000});
    c.train.push_back(ContextSpec{0.6, 1000});
    c.test_samples = 2000;
    c.rho = {1.0, own[i]};
    spec.clients.push_back(c);
  }
  spec.test_p = {0.10, 0.20, 0.30, 0.40, 0.50};
  return spec;
}

namespace {

std::string context_name(int client, const std::string& what) {
  return "client" + std::to_string(client) + "/" + what;
}

std::string test_name(double p) { return "test@" + format_fixed(p, 2); }

// Gray -> colored -> rotated -> (downsampled) -> flattened environment.
Environment build_colored_env(const ImageSource& source, std::span<const std::size_t> indices,
                              std::span<const int> binary, double p_e, int rotation,
                              const std::string& context_id, std::uint64_t seed, const RcOptions& options) {
  const Tensor gray = images_to_tensor(source.images, indices);
  Environment env = colorize(gray, binary, p_e, stream_seed(context_id + "/color", seed), context_id);
  Tensor images = rotate(env.inputs, rotation);
  if (options.downsample) images = downsample(images);
  env.inputs = flatten_rows(images);
  env.gen.rotation_deg = rotation;
  return env;
}

}  // namespace

std::vector<ClientData> partition_clients(const FederationSpec& spec, const ImageSource& source,
                                          std::uint64_t seed, const RcOptions& options) {
  spec.validate();
  if (source.digits.size() != source.images.count) {
    throw PreconditionError("image source: label count does not match image count");
  }
  std::size_t train_need = 0, test_need = 0;
  for (const auto& c : spec.clients) {
    for (const auto& ctx : c.train) train_need += ctx.samples;
    test_need += c.test_samples;
  }
  if (train_need + test_need > source.images.count) {
    throw CapacityError("federation needs " + std::to_string(train_need) + " train and " +
                        std::to_string(test_need) + " test images, source has " +
                        std::to_string(source.images.count));
  }

  std::vector<std::size_t> train_pool(train_need), test_pool(test_need);
  std::iota(train_pool.begin(), train_pool.end(), std::size_t{0});
  std::iota(test_pool.begin(), test_pool.end(), train_need);
  Rng rng(stream_seed("partition", seed));
  rng.shuffle(train_pool.begin(), train_pool.end());
  rng.shuffle(test_pool.begin(), test_pool.end());

  std::vector<ClientData> out;
  std::size_t train_at = 0, test_at = 0;
  for (std::size_t i = 0; i < spec.clients.size(); ++i) {
    const auto& c = spec.clients[i];
    const int id = static_cast<int>(i);
    ClientData data;
    data.id = id;
    for (std::size_t k = 0; k < c.train.size(); ++k) {
      const std::string ctx = context_name(id, "train" + std::to_string(k));
      std::span<const std::size_t> idx(train_pool.data() + train_at, c.train[k].samples);
      train_at += c.train[k].samples;
      std::vector<int> digits;
      for (auto j : idx) digits.push_back(source.digits[j]);
      const auto binary = binarize_and_noise(digits, options.noise_rate, stream_seed(ctx + "/labels", seed));
      data.train.push_back(
          build_colored_env(source, idx, binary, c.train[k].p_e, c.rotation_deg, ctx, seed, options));
    }
    std::span<const std::size_t> idx(test_pool.data() + test_at, c.test_samples);
    test_at += c.test_samples;
    std::vector<int> digits;
    for (auto j : idx) digits.push_back(source.digits[j]);
    // Test labels are shared by every OOD case; only the coloring differs.
    const auto binary =
        binarize_and_noise(digits, options.noise_rate, stream_seed(context_name(id, "test/labels"), seed));
    for (double p : spec.test_p) {
      data.test.push_back(
          build_colored_env(source, idx, binary, p, c.rotation_deg, context_name(id, test_name(p)), seed, options));
    }
    out.push_back(std::move(data));
  }
  return out;
}

std::vector<ClientData> sem_federation(const FederationSpec& spec, const SemSpec& base,
                                       double spurious_scale, std::uint64_t seed) {
  spec.validate();
  std::vector<ClientData> out;
  for (std::size_t i = 0; i < spec.clients.size(); ++i) {
    const auto& c = spec.clients[i];
    const int id = static_cast<int>(i);
    SemSpec client_spec = base;
    if (!c.rho.empty()) client_spec.rho = c.rho;
    client_spec.id = base.id + "/client" + std::to_string(i);
    ClientData data;
    data.id = id;
    for (std::size_t k = 0; k < c.train.size(); ++k) {
      const std::string ctx = context_name(id, "train" + std::to_string(k));
      Environment env = generate_sem_env(client_spec, sem_strength(c.train[k].p_e, spurious_scale),
                                         c.train[k].samples, stream_seed(ctx, seed), ctx);
      env.gen.p_e = c.train[k].p_e;
      data.train.push_back(std::move(env));
    }
    for (double p : spec.test_p) {
      const std::string ctx = context_name(id, test_name(p));
      Environment env = generate_sem_env(client_spec, sem_strength(p, spurious_scale), c.test_samples,
                                         stream_seed(ctx, seed), ctx);
      env.gen.p_e = p;
      data.test.push_back(std::move(env));
    }
    out.push_back(std::move(data));
  }
  return out;
}

}  // namespace perinv
