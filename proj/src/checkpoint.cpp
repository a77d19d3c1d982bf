// SPDX-License-Identifier: Apache-2.0
#include "transact/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "transact/config.hpp"
#include "transact/errors.hpp"

namespace transact {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'T', 'R', 'X', 'C', 'K', 'P', 'T', '\0'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& is, const char* what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw RestoreError(std::string("truncated checkpoint reading ") + what);
  return v;
}

void put_array(std::ostream& os, const std::string& name, const Tensor& t) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put<std::uint64_t>(os, d);
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& s) {
  nlohmann::json meta;
  meta["model"] = to_json(s.model);
  meta["train"] = to_json(s.train);
  meta["seed"] = s.train.seed;
  meta["step"] = s.step;
  std::ostringstream rng;
  rng << s.rng;
  meta["rng"] = rng.str();
  const std::string text = meta.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint '" + path + "'");
  f.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(f, kCheckpointVersion);
  put<std::uint64_t>(f, text.size());
  f.write(text.data(), static_cast<std::streamsize>(text.size()));

  std::uint32_t count = 0;
  for_each_param(s.params, [&](const std::string&, const Tensor&) { ++count; });
  put<std::uint32_t>(f, count * 3);
  for_each_param(s.params, [&](const std::string& n, const Tensor& t) { put_array(f, "param/" + n, t); });
  for_each_param(s.adam.m, [&](const std::string& n, const Tensor& t) { put_array(f, "adam_m/" + n, t); });
  for_each_param(s.adam.v, [&](const std::string& n, const Tensor& t) { put_array(f, "adam_v/" + n, t); });
  if (!f) throw IoError("failed writing checkpoint '" + path + "'");
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw RestoreError("cannot open checkpoint '" + path + "'");
  char magic[8];
  if (!f.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw RestoreError("'" + path + "' is not a checkpoint (bad magic)");
  }
  const auto version = take<std::uint32_t>(f, "version");
  if (version != kCheckpointVersion) {
    throw RestoreError("checkpoint version " + std::to_string(version) + " != supported " +
                       std::to_string(kCheckpointVersion));
  }
  const auto meta_len = take<std::uint64_t>(f, "metadata length");
  if (meta_len > (1ull << 30)) throw RestoreError("checkpoint metadata length is implausible");
  std::string text(meta_len, '\0');
  if (!f.read(text.data(), static_cast<std::streamsize>(meta_len))) throw RestoreError("truncated checkpoint metadata");

  TrainState s;
  try {
    const auto meta = nlohmann::json::parse(text);
    s.model = model_config_from_json(meta.at("model"));
    s.train = train_config_from_json(meta.at("train"));
    s.train.seed = meta.at("seed").get<std::uint64_t>();
    s.step = meta.at("step").get<std::size_t>();
    std::istringstream rng(meta.at("rng").get<std::string>());
    rng >> s.rng;
    if (!rng) throw RestoreError("checkpoint rng state is corrupt");
  } catch (const nlohmann::json::exception& e) {
    throw RestoreError(std::string("checkpoint metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw RestoreError(std::string("checkpoint metadata: ") + e.what());
  }

  std::mt19937_64 shape_rng(0);
  s.params = init_params(s.model, shape_rng);
  s.adam.m = zeros_like(s.params);
  s.adam.v = zeros_like(s.params);

  std::map<std::string, Tensor> arrays;
  const auto count = take<std::uint32_t>(f, "array count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = take<std::uint32_t>(f, "array name length");
    if (name_len > 4096) throw RestoreError("checkpoint array name is implausibly long");
    std::string name(name_len, '\0');
    if (!f.read(name.data(), name_len)) throw RestoreError("truncated checkpoint array name");
    const auto rank = take<std::uint32_t>(f, "array rank");
    if (rank > 8) throw RestoreError("checkpoint array '" + name + "' has implausible rank");
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(take<std::uint64_t>(f, "array dims"));
      n *= d;
    }
    std::vector<double> data(n);
    if (!f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
      throw RestoreError("truncated checkpoint array '" + name + "'");
    }
    arrays.emplace(name, Tensor(shape, std::move(data)));
  }
  auto fill = [&](const std::string& prefix, ModelParams& target) {
    for_each_param(target, [&](const std::string& n, Tensor& t) {
      auto it = arrays.find(prefix + n);
      if (it == arrays.end()) throw RestoreError("checkpoint lacks array '" + prefix + n + "'");
      if (it->second.shape() != t.shape()) throw RestoreError("checkpoint array '" + prefix + n + "' has the wrong shape");
      t = std::move(it->second);
      arrays.erase(it);
    });
  };
  fill("param/", s.params);
  fill("adam_m/", s.adam.m);
  fill("adam_v/", s.adam.v);
  if (!arrays.empty()) throw RestoreError("checkpoint has unexpected array '" + arrays.begin()->first + "'");
  return s;
}

}  // namespace transact
