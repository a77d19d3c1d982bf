// SPDX-License-Identifier: Apache-2.0
#include "transact/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "transact/errors.hpp"
#include "transact/ops.hpp"

namespace transact {

namespace {

constexpr const char* kStates[] = {"new", "casual", "core", "resurrected"};
constexpr const char* kGenders[] = {"f", "m", "u"};
constexpr const char* kLocations[] = {"us", "intl"};

// Stream tags for derive_seed.
enum : std::uint64_t { kWorldStream = 1, kTrendStream = 2, kDownsampleStream = 3, kUserStream = 1ull << 20 };

std::uint64_t user_stream(std::int64_t uid, std::uint64_t tag) {
  return kUserStream + static_cast<std::uint64_t>(uid) * 16 + tag;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  if (n > 0.0) {
    for (auto& x : v) x /= n;
  }
}

std::vector<double> gaussian_unit(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  std::vector<double> v(d);
  do {
    for (auto& x : v) x = N(rng);
  } while (dot(v, v) < 1e-12);
  normalize(v);
  return v;
}

int sample_weighted(std::span<const int> items, std::span<const double> weights, std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  return items[pick(rng)];
}

int nearest_centroid(const std::vector<std::vector<double>>& centroids, std::span<const double> v) {
  int best = 0;
  double best_dot = -2.0;
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = dot(centroids[c], v);
    if (d > best_dot) {
      best_dot = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (n_users < 1 || n_pins < 1 || n_clusters < 1 || d_pin < 1 || d_user < 1) {
    throw ConfigError("generator counts and widths must be >= 1");
  }
  if (horizon_days < 1) throw ConfigError("horizon_days must be >= 1");
  if (actions_min < 1 || actions_max < actions_min) throw ConfigError("actions range must satisfy 1 <= min <= max");
  if (session_min < 1 || session_max < session_min) throw ConfigError("session range must satisfy 1 <= min <= max");
  if (drift_rate < 0.0) throw ConfigError("drift_rate must be >= 0");
  if (!(neg_per_pos > 0.0)) throw ConfigError("neg_per_pos must be > 0");
  if (n_favorites < 1 || n_favorites > n_clusters) throw ConfigError("n_favorites must lie in [1, n_clusters]");
  if (min_angle_deg < 0.0 || min_angle_deg >= 180.0) throw ConfigError("min_angle_deg must lie in [0, 180)");
  if (train_begin_day >= train_end_day) throw ConfigError("train window is empty");
  if (eval_begin_day >= eval_end_day) throw ConfigError("eval window is empty");
  if (eval_begin_day < train_end_day) throw ConfigError("eval window must start at or after the train window ends");
  if (eval_end_day > horizon_days) throw ConfigError("eval window extends past the horizon");
  if (chunk_size < 1 || train_requests < 1 || eval_chunks < 1) throw ConfigError("request counts must be >= 1");
  if (candidate_short < 0 || candidate_long < 0 || candidate_disliked < 0 ||
      candidate_short + candidate_long + candidate_disliked > 1.0) {
    throw ConfigError("candidate_short + candidate_long + candidate_disliked must lie in [0, 1]");
  }
  if (dislike_exposure < 0 || random_exposure + dislike_exposure > 1.0) {
    throw ConfigError("random_exposure + dislike_exposure must lie in [0, 1]");
  }
  if (random_exposure < 0 || random_exposure > 1 || switch_to_favorite < 0 || switch_to_favorite > 1 ||
      short_weight < 0 || short_weight > 1) {
    throw ConfigError("probabilities must lie in [0, 1]");
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

int SyntheticWorld::active_cluster(const UserProfile& u, std::int64_t t) const {
  auto it = std::upper_bound(u.switch_times.begin(), u.switch_times.end(), t);
  const std::size_t seg = it == u.switch_times.begin() ? 0 : static_cast<std::size_t>(it - u.switch_times.begin()) - 1;
  return u.active[seg];
}

std::vector<double> SyntheticWorld::interest(const UserProfile& u, std::int64_t t) const {
  const auto& c = centroids[static_cast<std::size_t>(active_cluster(u, t))];
  std::vector<double> v(config.d_pin);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = config.short_weight * c[i] + (1.0 - config.short_weight) * u.long_term[i];
  normalize(v);
  return v;
}

double SyntheticWorld::popularity_at(int cluster, std::int64_t t) const {
  const auto& p = popularity[static_cast<std::size_t>(cluster)];
  const auto day = std::clamp<std::int64_t>(t / kSecondsPerDay, 0, static_cast<std::int64_t>(p.size()) - 1);
  return p[static_cast<std::size_t>(day)];
}

SyntheticWorld generate_world(const GeneratorConfig& config) {
  config.validate();
  SyntheticWorld w;
  w.config = config;
  const std::size_t d = config.d_pin;
  std::mt19937_64 rng(derive_seed(config.seed, kWorldStream));

  const double max_cos = std::cos(config.min_angle_deg * M_PI / 180.0);
  constexpr int kAttempts = 5000;
  for (std::size_t c = 0; c < config.n_clusters; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
      auto v = gaussian_unit(d, rng);
      placed = std::all_of(w.centroids.begin(), w.centroids.end(),
                           [&](const std::vector<double>& o) { return dot(o, v) <= max_cos; });
      if (placed) w.centroids.push_back(std::move(v));
    }
    if (!placed) {
      throw GenerationError("cannot place " + std::to_string(config.n_clusters) + " cluster centroids in " +
                            std::to_string(d) + " dims with min angle " + std::to_string(config.min_angle_deg) +
                            " deg (placed " + std::to_string(c) + ")");
    }
  }

  std::normal_distribution<double> N(0.0, 1.0);
  w.cluster_members.assign(config.n_clusters, {});
  w.pins.resize(config.n_pins);
  for (std::size_t i = 0; i < config.n_pins; ++i) {
    auto& p = w.pins[i];
    p.id = static_cast<std::int64_t>(i);
    const auto& c = w.centroids[i % config.n_clusters];
    p.embedding.resize(d);
    for (std::size_t j = 0; j < d; ++j) p.embedding[j] = c[j] + config.pin_noise * N(rng);
    normalize(p.embedding);
    p.cluster = nearest_centroid(w.centroids, p.embedding);
    w.cluster_members[static_cast<std::size_t>(p.cluster)].push_back(static_cast<int>(i));
  }

  std::mt19937_64 trend_rng(derive_seed(config.seed, kTrendStream));
  const double stationary = config.trend_sigma / std::sqrt(std::max(1e-12, 1.0 - config.trend_decay * config.trend_decay));
  w.popularity.assign(config.n_clusters, std::vector<double>(config.horizon_days + 1));
  for (auto& series : w.popularity) {
    series[0] = stationary * N(trend_rng);
    for (std::size_t day = 1; day < series.size(); ++day) {
      series[day] = config.trend_decay * series[day - 1] + config.trend_sigma * N(trend_rng);
    }
  }

  if (config.d_user == d) {
    w.pf_projection.assign(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) w.pf_projection[i * d + i] = 1.0;
  } else {
    w.pf_projection.resize(config.d_user * d);
    for (auto& v : w.pf_projection) v = N(rng) / std::sqrt(static_cast<double>(d));
  }

  const auto horizon = static_cast<std::int64_t>(config.horizon_days) * kSecondsPerDay;
  std::vector<int> all_clusters(config.n_clusters);
  std::iota(all_clusters.begin(), all_clusters.end(), 0);
  w.users.resize(config.n_users);
  for (std::size_t uid = 0; uid < config.n_users; ++uid) {
    auto& u = w.users[uid];
    u.id = static_cast<std::int64_t>(uid);
    std::mt19937_64 urng(derive_seed(config.seed, user_stream(u.id, 0)));
    u.attrs.state = kStates[std::uniform_int_distribution<int>(0, 3)(urng)];
    u.attrs.gender = kGenders[std::uniform_int_distribution<int>(0, 2)(urng)];
    u.attrs.location = kLocations[std::uniform_int_distribution<int>(0, 1)(urng)];

    std::vector<int> order = all_clusters;
    std::shuffle(order.begin(), order.end(), urng);
    u.favorites.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(config.n_favorites));
    u.disliked = config.n_clusters > config.n_favorites ? order[config.n_favorites] : -1;
    std::gamma_distribution<double> G(1.0, 1.0);
    u.favorite_weights.resize(u.favorites.size());
    for (auto& x : u.favorite_weights) x = G(urng) + 1e-3;
    const double total = std::accumulate(u.favorite_weights.begin(), u.favorite_weights.end(), 0.0);
    for (auto& x : u.favorite_weights) x /= total;
    u.long_term.assign(d, 0.0);
    for (std::size_t f = 0; f < u.favorites.size(); ++f) {
      const auto& c = w.centroids[static_cast<std::size_t>(u.favorites[f])];
      for (std::size_t j = 0; j < d; ++j) u.long_term[j] += u.favorite_weights[f] * c[j];
    }
    normalize(u.long_term);
    u.base = config.base_sigma * N(urng);

    std::vector<int> switchable;
    for (int c : all_clusters) {
      if (c != u.disliked) switchable.push_back(c);
    }
    u.switch_times.push_back(0);
    u.active.push_back(sample_weighted(u.favorites, u.favorite_weights, urng));
    if (config.drift_rate > 0.0) {
      std::exponential_distribution<double> gap(config.drift_rate / static_cast<double>(kSecondsPerDay));
      std::bernoulli_distribution to_fav(config.switch_to_favorite);
      double t = gap(urng);
      while (t < static_cast<double>(horizon)) {
        int next;
        if (to_fav(urng)) {
          next = sample_weighted(u.favorites, u.favorite_weights, urng);
        } else {
          next = switchable[std::uniform_int_distribution<std::size_t>(0, switchable.size() - 1)(urng)];
        }
        u.switch_times.push_back(static_cast<std::int64_t>(t));
        u.active.push_back(next);
        t += gap(urng);
      }
    }
  }
  return w;
}

LabelProbabilities label_probabilities(const SyntheticWorld& world, const UserProfile& user, const PinRecord& pin,
                                       std::int64_t t) {
  const auto& L = world.config.labels;
  const auto& cs = world.centroids[static_cast<std::size_t>(world.active_cluster(user, t))];
  const double aff = L.w_short * dot(cs, pin.embedding) + L.w_long * dot(user.long_term, pin.embedding) +
                     L.w_pop * world.popularity_at(pin.cluster, t) + user.base;
  const double dislike =
      user.disliked >= 0 ? dot(world.centroids[static_cast<std::size_t>(user.disliked)], pin.embedding) : 0.0;
  LabelProbabilities p;
  p.click = sigmoid(L.slope * aff + L.click_bias);
  p.repin = sigmoid(L.slope * aff + L.repin_bias);
  p.hide = sigmoid(L.hide_dislike * dislike - L.hide_affinity * aff + L.hide_bias);
  return p;
}

std::vector<std::uint8_t> sample_labels(const LabelProbabilities& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const bool hide = U(rng) < p.hide;
  const bool click = U(rng) < p.click;
  const bool repin = U(rng) < p.repin;
  if (hide) return {0, 0, 1};
  return {static_cast<std::uint8_t>(click), static_cast<std::uint8_t>(repin), 0};
}

namespace {

double any_rate(const LabelProbabilities& p) {
  return p.hide + (1.0 - p.hide) * (1.0 - (1.0 - p.click) * (1.0 - p.repin));
}

// Pin-level softmax over affinity to the interest vector for one active cluster.
std::vector<double> pick_weights(const SyntheticWorld& w, const UserProfile& u, int active) {
  const auto& c = w.centroids[static_cast<std::size_t>(active)];
  std::vector<double> v(w.config.d_pin);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = w.config.short_weight * c[i] + (1.0 - w.config.short_weight) * u.long_term[i];
  normalize(v);
  std::vector<double> weights(w.pins.size());
  for (std::size_t i = 0; i < w.pins.size(); ++i) weights[i] = w.config.pick_temperature * dot(v, w.pins[i].embedding);
  const double mx = *std::max_element(weights.begin(), weights.end());
  for (auto& x : weights) x = std::exp(x - mx);
  return weights;
}

}  // namespace

std::vector<UserAction> generate_history(const SyntheticWorld& world, const UserProfile& user, std::mt19937_64& rng) {
  const auto& cfg = world.config;
  const auto horizon = static_cast<std::int64_t>(cfg.horizon_days) * kSecondsPerDay;
  const std::size_t n = std::uniform_int_distribution<std::size_t>(cfg.actions_min, cfg.actions_max)(rng);

  std::vector<std::int64_t> times;
  times.reserve(n);
  std::uniform_int_distribution<std::int64_t> start(0, horizon - 1);
  std::uniform_int_distribution<std::size_t> session_len(cfg.session_min, cfg.session_max);
  std::uniform_int_distribution<std::int64_t> step(20, 300);
  while (times.size() < n) {
    std::int64_t t = start(rng);
    const std::size_t len = std::min(session_len(rng), n - times.size());
    for (std::size_t i = 0; i < len; ++i) {
      times.push_back(t);
      t += step(rng);
    }
  }
  std::sort(times.begin(), times.end());
  for (std::size_t i = 1; i < times.size(); ++i) times[i] = std::max(times[i], times[i - 1] + 1);

  std::vector<std::discrete_distribution<std::size_t>> by_active(cfg.n_clusters);
  std::vector<bool> built(cfg.n_clusters, false);
  std::uniform_real_distribution<double> exposure(0.0, 1.0);
  const std::vector<int> none;
  const auto& disliked = user.disliked >= 0 ? world.cluster_members[static_cast<std::size_t>(user.disliked)] : none;
  std::uniform_int_distribution<std::size_t> any_pin(0, world.pins.size() - 1);
  std::vector<UserAction> out;
  out.reserve(n);
  for (std::int64_t t : times) {
    const int active = world.active_cluster(user, t);
    std::size_t pin_index;
    const double e = exposure(rng);
    if (e < cfg.random_exposure) {
      pin_index = any_pin(rng);
    } else if (e < cfg.random_exposure + cfg.dislike_exposure && !disliked.empty()) {
      pin_index = static_cast<std::size_t>(disliked[std::uniform_int_distribution<std::size_t>(0, disliked.size() - 1)(rng)]);
    } else {
      auto a = static_cast<std::size_t>(active);
      if (!built[a]) {
        const auto weights = pick_weights(world, user, active);
        by_active[a] = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
        built[a] = true;
      }
      pin_index = by_active[a](rng);
    }
    const auto& pin = world.pins[pin_index];
    const auto y = sample_labels(label_probabilities(world, user, pin, t), rng);
    int type = action::kView;
    if (y[2]) type = action::kHide;
    else if (y[1]) type = action::kRepin;
    else if (y[0]) type = action::kClick;
    out.push_back(UserAction{t, type, pin.embedding, pin.id, pin.cluster});
  }
  return out;
}

void Corpus::validate() const {
  for (std::size_t i = 0; i < pins.size(); ++i) {
    if (pins[i].id != static_cast<std::int64_t>(i)) throw ContractError("pin ids must be 0..n-1 in order");
    if (pins[i].embedding.size() != d_pin) throw ContractError("pin embedding width mismatch");
  }
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (users[i].id != static_cast<std::int64_t>(i)) throw ContractError("user ids must be 0..n-1 in order");
    if (users[i].batch_embedding.size() != d_user) throw ContractError("batch embedding width mismatch");
    if (users[i].other_features.size() != kOtherFeatureWidth) throw ContractError("other feature width mismatch");
  }
  if (histories.size() != users.size()) throw ContractError("one history per user is required");
  for (const auto& h : histories) {
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (i > 0 && h[i].timestamp < h[i - 1].timestamp) throw ContractError("histories must be ascending by timestamp");
      if (h[i].pin_embedding.size() != d_pin) throw ContractError("action embedding width mismatch");
    }
  }
  auto check = [&](const std::vector<ExampleRecord>& rs) {
    for (const auto& r : rs) {
      if (r.user_id < 0 || static_cast<std::size_t>(r.user_id) >= users.size()) throw ContractError("dangling user id");
      if (r.pin_id < 0 || static_cast<std::size_t>(r.pin_id) >= pins.size()) throw ContractError("dangling pin id");
      if (r.labels.size() != 3) throw ContractError("example labels must have 3 entries");
    }
  };
  check(train);
  check(eval);
}

namespace {

std::int64_t pick_request_time(const std::vector<UserAction>& h, std::int64_t begin, std::int64_t end,
                               std::mt19937_64& rng) {
  auto lo = std::lower_bound(h.begin(), h.end(), begin, [](const UserAction& a, std::int64_t t) { return a.timestamp < t; });
  auto hi = std::lower_bound(h.begin(), h.end(), end, [](const UserAction& a, std::int64_t t) { return a.timestamp < t; });
  if (lo == hi) return std::uniform_int_distribution<std::int64_t>(begin, end - 1)(rng);
  const auto idx = std::uniform_int_distribution<std::ptrdiff_t>(0, hi - lo - 1)(rng);
  const std::int64_t t = (lo + idx)->timestamp + std::uniform_int_distribution<std::int64_t>(1, 120)(rng);
  return std::min(t, end - 1);
}

int pick_candidate(const SyntheticWorld& w, const UserProfile& u, std::int64_t t, std::mt19937_64& rng) {
  const auto& cfg = w.config;
  const double r = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  int cluster = -1;
  if (r < cfg.candidate_short) {
    cluster = w.active_cluster(u, t);
  } else if (r < cfg.candidate_short + cfg.candidate_long) {
    cluster = sample_weighted(u.favorites, u.favorite_weights, rng);
  } else if (r < cfg.candidate_short + cfg.candidate_long + cfg.candidate_disliked) {
    cluster = u.disliked;
  }
  if (cluster >= 0) {
    const auto& members = w.cluster_members[static_cast<std::size_t>(cluster)];
    if (!members.empty()) return members[std::uniform_int_distribution<std::size_t>(0, members.size() - 1)(rng)];
  }
  return static_cast<int>(std::uniform_int_distribution<std::size_t>(0, w.pins.size() - 1)(rng));
}

void requests_for(const SyntheticWorld& w, const UserProfile& u, const std::vector<UserAction>& h,
                  std::size_t begin_day, std::size_t end_day, std::size_t count, bool shuffle,
                  std::mt19937_64& rng, std::vector<ExampleRecord>& out) {
  const auto begin = static_cast<std::int64_t>(begin_day) * kSecondsPerDay;
  const auto end = static_cast<std::int64_t>(end_day) * kSecondsPerDay;
  std::vector<std::int64_t> times(count);
  for (auto& t : times) t = pick_request_time(h, begin, end, rng);
  std::sort(times.begin(), times.end());
  for (std::size_t r = 0; r < count; ++r) {
    std::vector<ExampleRecord> chunk;
    for (std::size_t i = 0; i < w.config.chunk_size; ++i) {
      const auto& pin = w.pins[static_cast<std::size_t>(pick_candidate(w, u, times[r], rng))];
      const auto p = label_probabilities(w, u, pin, times[r]);
      chunk.push_back({u.id, pin.id, static_cast<std::int64_t>(r), times[r], sample_labels(p, rng), any_rate(p)});
    }
    if (shuffle) std::shuffle(chunk.begin(), chunk.end(), rng);
    out.insert(out.end(), chunk.begin(), chunk.end());
  }
}

bool positive(const ExampleRecord& r) {
  return std::any_of(r.labels.begin(), r.labels.end(), [](std::uint8_t v) { return v != 0; });
}

}  // namespace

void generate_examples(const SyntheticWorld& world, Corpus& corpus) {
  const auto& cfg = world.config;
  corpus.train.clear();
  corpus.eval.clear();
  for (const auto& u : world.users) {
    const auto& h = corpus.histories[static_cast<std::size_t>(u.id)];
    std::mt19937_64 rng(derive_seed(cfg.seed, user_stream(u.id, 2) ^ (static_cast<std::uint64_t>(cfg.train_begin_day) << 40)));
    requests_for(world, u, h, cfg.train_begin_day, cfg.train_end_day, cfg.train_requests, false, rng, corpus.train);
    std::mt19937_64 erng(derive_seed(cfg.seed, user_stream(u.id, 3) ^ (static_cast<std::uint64_t>(cfg.eval_begin_day) << 40)));
    requests_for(world, u, h, cfg.eval_begin_day, cfg.eval_end_day, cfg.eval_chunks, true, erng, corpus.eval);
  }

  if (!cfg.downsample) return;
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < corpus.train.size(); ++i) (positive(corpus.train[i]) ? pos : neg).push_back(i);
  const auto want = static_cast<std::size_t>(std::llround(static_cast<double>(pos.size()) * cfg.neg_per_pos));
  if (pos.empty() || want > neg.size() || want == 0) {
    throw GenerationError("cannot downsample to 1:" + std::to_string(cfg.neg_per_pos) + " with " +
                          std::to_string(pos.size()) + " positives and " + std::to_string(neg.size()) + " negatives");
  }
  std::mt19937_64 rng(derive_seed(cfg.seed, kDownsampleStream ^ (static_cast<std::uint64_t>(cfg.train_begin_day) << 40)));
  std::shuffle(neg.begin(), neg.end(), rng);
  neg.resize(want);
  std::vector<std::size_t> keep = pos;
  keep.insert(keep.end(), neg.begin(), neg.end());
  std::sort(keep.begin(), keep.end());
  std::vector<ExampleRecord> kept;
  kept.reserve(keep.size());
  for (auto i : keep) kept.push_back(std::move(corpus.train[i]));
  corpus.train = std::move(kept);
}

Corpus generate_corpus(const SyntheticWorld& world) {
  const auto& cfg = world.config;
  Corpus c;
  c.d_pin = cfg.d_pin;
  c.d_user = cfg.d_user;
  c.pins = world.pins;
  c.histories.resize(world.users.size());
  for (const auto& u : world.users) {
    std::mt19937_64 rng(derive_seed(cfg.seed, user_stream(u.id, 1)));
    c.histories[static_cast<std::size_t>(u.id)] = generate_history(world, u, rng);
  }

  std::vector<std::pair<std::size_t, std::int64_t>> by_count;
  for (const auto& u : world.users) by_count.emplace_back(c.histories[static_cast<std::size_t>(u.id)].size(), u.id);
  std::sort(by_count.begin(), by_count.end());
  std::vector<bool> non_core(world.users.size(), false);
  for (std::size_t i = 0; i < by_count.size() / 4; ++i) non_core[static_cast<std::size_t>(by_count[i].second)] = true;
  double mean_log = 0.0;
  for (const auto& [n, id] : by_count) mean_log += std::log(static_cast<double>(n) + 1.0);
  mean_log /= static_cast<double>(by_count.size());

  std::normal_distribution<double> N(0.0, 1.0);
  for (const auto& u : world.users) {
    std::mt19937_64 rng(derive_seed(cfg.seed, user_stream(u.id, 4)));
    UserRecord r;
    r.id = u.id;
    r.attrs = u.attrs;
    r.non_core = non_core[static_cast<std::size_t>(u.id)];
    r.batch_embedding.assign(cfg.d_user, 0.0);
    for (std::size_t i = 0; i < cfg.d_user; ++i) {
      for (std::size_t j = 0; j < cfg.d_pin; ++j) r.batch_embedding[i] += world.pf_projection[i * cfg.d_pin + j] * u.long_term[j];
      r.batch_embedding[i] += cfg.pf_noise * N(rng);
    }
    r.other_features.assign(kOtherFeatureWidth, 0.0);
    r.other_features[0] = u.base + cfg.other_noise * N(rng);
    r.other_features[1] = std::log(static_cast<double>(c.histories[static_cast<std::size_t>(u.id)].size()) + 1.0) - mean_log;
    for (int s = 0; s < 4; ++s) r.other_features[2 + static_cast<std::size_t>(s)] = u.attrs.state == kStates[s] ? 1.0 : 0.0;
    for (int l = 0; l < 2; ++l) r.other_features[6 + static_cast<std::size_t>(l)] = u.attrs.location == kLocations[l] ? 1.0 : 0.0;
    c.users.push_back(std::move(r));
  }
  generate_examples(world, c);
  return c;
}

TrainingExample materialize(const Corpus& corpus, const ExampleRecord& rec, std::size_t max_len) {
  const auto& h = corpus.histories.at(static_cast<std::size_t>(rec.user_id));
  const auto& user = corpus.users.at(static_cast<std::size_t>(rec.user_id));
  const auto& pin = corpus.pins.at(static_cast<std::size_t>(rec.pin_id));
  auto end = std::upper_bound(h.begin(), h.end(), rec.t_request,
                              [](std::int64_t t, const UserAction& a) { return t < a.timestamp; });
  // Only the newest max_len (plus timestamp ties at the cut) can survive.
  auto begin = h.begin();
  if (static_cast<std::size_t>(end - h.begin()) > max_len) {
    begin = end - static_cast<std::ptrdiff_t>(max_len);
    while (begin != h.begin() && (begin - 1)->timestamp == begin->timestamp) --begin;
  }
  TrainingExample ex;
  ex.user_id = rec.user_id;
  ex.pin_id = rec.pin_id;
  ex.chunk_id = rec.chunk_id;
  ex.t_request = rec.t_request;
  ex.sequence = build_sequence(std::span<const UserAction>(begin, end), rec.t_request, max_len);
  ex.candidate_embedding = pin.embedding;
  ex.candidate_cluster = pin.cluster;
  ex.batch_user_embedding = user.batch_embedding;
  ex.other_features = user.other_features;
  ex.labels = rec.labels;
  ex.user_attrs = user.attrs;
  return ex;
}

SplitStats split_stats(std::span<const ExampleRecord> records) {
  SplitStats s;
  for (const auto& r : records) {
    ++s.examples;
    if (positive(r)) ++s.positives;
    else ++s.negatives;
    s.click += r.labels[0];
    s.repin += r.labels[1];
    s.hide += r.labels[2];
  }
  return s;
}

}  // namespace transact
