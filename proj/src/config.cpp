// SPDX-License-Identifier: Apache-2.0
#include "transact/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "transact/errors.hpp"

namespace transact {

using nlohmann::json;

namespace {

// Objects whose keys are free-form (category -> weight tables).
const std::set<std::string> kOpenObjects = {"model.user_weights.state", "model.user_weights.gender",
                                            "model.user_weights.location", "ablate.variants"};

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) {
    // Integers in the defaults must stay integral.
    if ((a.is_number_integer() || a.is_number_unsigned()) && b.is_number_float()) return false;
    return true;
  }
  return a.type() == b.type();
}

void merge(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("'" + (path.empty() ? std::string("<root>") : path) + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = join(path, it.key());
    if (!base.contains(it.key())) throw ConfigError("unknown configuration key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object() && !kOpenObjects.count(key)) {
      merge(slot, it.value(), key);
    } else {
      if (!same_kind(slot, it.value())) throw ConfigError("configuration key '" + key + "' has the wrong type");
      slot = it.value();
    }
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("configuration key '" + join(path, key) + "': " + e.what());
  }
}

json user_weights_json(const UserWeightTables& t) {
  return {{"state", json(t.state)}, {"gender", json(t.gender)}, {"location", json(t.location)}};
}

std::vector<std::vector<double>> matrix_rows(const LabelWeightMatrix& m) {
  std::vector<std::vector<double>> rows(m.size(), std::vector<double>(m.size()));
  for (std::size_t h = 0; h < m.size(); ++h) {
    for (std::size_t a = 0; a < m.size(); ++a) rows[h][a] = m(h, a);
  }
  return rows;
}

}  // namespace

json to_json(const ModelConfig& c) {
  return {{"max_len", c.max_len},
          {"d_action", c.d_action},
          {"d_pin", c.d_pin},
          {"d_user", c.d_user},
          {"d_other", c.d_other},
          {"n_action_types", c.n_action_types},
          {"fusion", std::string(to_string(c.fusion))},
          {"sequence_encoder", std::string(to_string(c.sequence_encoder))},
          {"compression", std::string(to_string(c.compression))},
          {"K", c.K},
          {"head_hidden", c.head_hidden},
          {"time_window_mask", c.time_window_mask},
          {"time_window_max_seconds", c.time_window_max},
          {"neg_fallback", c.neg_fallback},
          {"encoder",
           {{"n_layers", c.encoder.n_layers},
            {"n_heads", c.encoder.n_heads},
            {"d_hidden", c.encoder.d_hidden},
            {"dropout", c.encoder.dropout},
            {"positional_encoding", std::string(to_string(c.encoder.positional_encoding))},
            {"ln_eps", c.encoder.ln_eps}}},
          {"features",
           {{"transact", c.features.transact},
            {"batch_embedding", c.features.batch_embedding},
            {"other", c.features.other}}},
          {"heads", c.heads.names},
          {"utilities", c.heads.utilities},
          {"label_weights", matrix_rows(c.label_weights)},
          {"user_weights", user_weights_json(c.user_weights)}};
}

ModelConfig model_config_from_json(const json& in) {
  json j = to_json(ModelConfig{});
  merge(j, in, "model");
  const std::string p = "model";
  ModelConfig c;
  try {
    c.max_len = get<std::size_t>(j, "max_len", p);
    c.d_action = get<std::size_t>(j, "d_action", p);
    c.d_pin = get<std::size_t>(j, "d_pin", p);
    c.d_user = get<std::size_t>(j, "d_user", p);
    c.d_other = get<std::size_t>(j, "d_other", p);
    c.n_action_types = get<std::size_t>(j, "n_action_types", p);
    c.fusion = parse_fusion(get<std::string>(j, "fusion", p));
    c.sequence_encoder = parse_sequence_encoder(get<std::string>(j, "sequence_encoder", p));
    c.compression = parse_compression(get<std::string>(j, "compression", p));
    c.K = get<std::size_t>(j, "K", p);
    c.head_hidden = get<std::size_t>(j, "head_hidden", p);
    c.time_window_mask = get<bool>(j, "time_window_mask", p);
    c.time_window_max = get<double>(j, "time_window_max_seconds", p);
    c.neg_fallback = get<double>(j, "neg_fallback", p);
    const auto& e = j.at("encoder");
    c.encoder.n_layers = get<std::size_t>(e, "n_layers", "model.encoder");
    c.encoder.n_heads = get<std::size_t>(e, "n_heads", "model.encoder");
    c.encoder.d_hidden = get<std::size_t>(e, "d_hidden", "model.encoder");
    c.encoder.dropout = get<double>(e, "dropout", "model.encoder");
    c.encoder.positional_encoding = parse_positional_encoding(get<std::string>(e, "positional_encoding", "model.encoder"));
    c.encoder.ln_eps = get<double>(e, "ln_eps", "model.encoder");
    const auto& f = j.at("features");
    c.features.transact = get<bool>(f, "transact", "model.features");
    c.features.batch_embedding = get<bool>(f, "batch_embedding", "model.features");
    c.features.other = get<bool>(f, "other", "model.features");
    c.heads.names = get<std::vector<std::string>>(j, "heads", p);
    c.heads.utilities = get<std::vector<double>>(j, "utilities", p);
    const auto rows = get<std::vector<std::vector<double>>>(j, "label_weights", p);
    std::vector<double> flat;
    for (const auto& r : rows) {
      if (r.size() != rows.size()) throw ConfigError("model.label_weights must be a square matrix");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    c.label_weights = LabelWeightMatrix(rows.size(), flat);
    const auto& uw = j.at("user_weights");
    c.user_weights.state = get<std::map<std::string, double>>(uw, "state", "model.user_weights");
    c.user_weights.gender = get<std::map<std::string, double>>(uw, "gender", "model.user_weights");
    c.user_weights.location = get<std::map<std::string, double>>(uw, "location", "model.user_weights");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model section: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size}, {"peak_lr", c.peak_lr},       {"warmup_steps", c.warmup_steps},
          {"total_steps", c.total_steps}, {"min_lr", c.min_lr},       {"beta1", c.beta1},
          {"beta2", c.beta2},             {"eps", c.eps},             {"grad_clip", c.grad_clip},
          {"eval_every", c.eval_every},   {"smoothing", c.smoothing}};
}

TrainConfig train_config_from_json(const json& in) {
  json j = to_json(TrainConfig{});
  merge(j, in, "train");
  const std::string p = "train";
  TrainConfig c;
  c.batch_size = get<std::size_t>(j, "batch_size", p);
  c.peak_lr = get<double>(j, "peak_lr", p);
  c.warmup_steps = get<std::size_t>(j, "warmup_steps", p);
  c.total_steps = get<std::size_t>(j, "total_steps", p);
  c.min_lr = get<double>(j, "min_lr", p);
  c.beta1 = get<double>(j, "beta1", p);
  c.beta2 = get<double>(j, "beta2", p);
  c.eps = get<double>(j, "eps", p);
  c.grad_clip = get<double>(j, "grad_clip", p);
  c.eval_every = get<std::size_t>(j, "eval_every", p);
  c.smoothing = get<std::size_t>(j, "smoothing", p);
  c.validate();
  return c;
}

json to_json(const GeneratorConfig& c) {
  const auto& L = c.labels;
  return {{"n_users", c.n_users},
          {"n_pins", c.n_pins},
          {"n_clusters", c.n_clusters},
          {"d_pin", c.d_pin},
          {"d_user", c.d_user},
          {"min_angle_deg", c.min_angle_deg},
          {"pin_noise", c.pin_noise},
          {"n_favorites", c.n_favorites},
          {"horizon_days", c.horizon_days},
          {"actions_min", c.actions_min},
          {"actions_max", c.actions_max},
          {"session_min", c.session_min},
          {"session_max", c.session_max},
          {"drift_rate", c.drift_rate},
          {"switch_to_favorite", c.switch_to_favorite},
          {"short_weight", c.short_weight},
          {"pick_temperature", c.pick_temperature},
          {"random_exposure", c.random_exposure},
          {"dislike_exposure", c.dislike_exposure},
          {"trend_sigma", c.trend_sigma},
          {"trend_decay", c.trend_decay},
          {"base_sigma", c.base_sigma},
          {"pf_noise", c.pf_noise},
          {"other_noise", c.other_noise},
          {"labels",
           {{"w_short", L.w_short},
            {"w_long", L.w_long},
            {"w_pop", L.w_pop},
            {"slope", L.slope},
            {"click_bias", L.click_bias},
            {"repin_bias", L.repin_bias},
            {"hide_dislike", L.hide_dislike},
            {"hide_affinity", L.hide_affinity},
            {"hide_bias", L.hide_bias}}},
          {"train_begin_day", c.train_begin_day},
          {"train_end_day", c.train_end_day},
          {"eval_begin_day", c.eval_begin_day},
          {"eval_end_day", c.eval_end_day},
          {"train_requests", c.train_requests},
          {"eval_chunks", c.eval_chunks},
          {"chunk_size", c.chunk_size},
          {"candidate_short", c.candidate_short},
          {"candidate_long", c.candidate_long},
          {"candidate_disliked", c.candidate_disliked},
          {"neg_per_pos", c.neg_per_pos},
          {"downsample", c.downsample}};
}

namespace {

GeneratorConfig generator_from_merged(const json& j) {
  const std::string p = "generator";
  GeneratorConfig c;
  c.n_users = get<std::size_t>(j, "n_users", p);
  c.n_pins = get<std::size_t>(j, "n_pins", p);
  c.n_clusters = get<std::size_t>(j, "n_clusters", p);
  c.d_pin = get<std::size_t>(j, "d_pin", p);
  c.d_user = get<std::size_t>(j, "d_user", p);
  c.min_angle_deg = get<double>(j, "min_angle_deg", p);
  c.pin_noise = get<double>(j, "pin_noise", p);
  c.n_favorites = get<std::size_t>(j, "n_favorites", p);
  c.horizon_days = get<std::size_t>(j, "horizon_days", p);
  c.actions_min = get<std::size_t>(j, "actions_min", p);
  c.actions_max = get<std::size_t>(j, "actions_max", p);
  c.session_min = get<std::size_t>(j, "session_min", p);
  c.session_max = get<std::size_t>(j, "session_max", p);
  c.drift_rate = get<double>(j, "drift_rate", p);
  c.switch_to_favorite = get<double>(j, "switch_to_favorite", p);
  c.short_weight = get<double>(j, "short_weight", p);
  c.pick_temperature = get<double>(j, "pick_temperature", p);
  c.random_exposure = get<double>(j, "random_exposure", p);
  c.dislike_exposure = get<double>(j, "dislike_exposure", p);
  c.trend_sigma = get<double>(j, "trend_sigma", p);
  c.trend_decay = get<double>(j, "trend_decay", p);
  c.base_sigma = get<double>(j, "base_sigma", p);
  c.pf_noise = get<double>(j, "pf_noise", p);
  c.other_noise = get<double>(j, "other_noise", p);
  const auto& L = j.at("labels");
  const std::string lp = "generator.labels";
  c.labels.w_short = get<double>(L, "w_short", lp);
  c.labels.w_long = get<double>(L, "w_long", lp);
  c.labels.w_pop = get<double>(L, "w_pop", lp);
  c.labels.slope = get<double>(L, "slope", lp);
  c.labels.click_bias = get<double>(L, "click_bias", lp);
  c.labels.repin_bias = get<double>(L, "repin_bias", lp);
  c.labels.hide_dislike = get<double>(L, "hide_dislike", lp);
  c.labels.hide_affinity = get<double>(L, "hide_affinity", lp);
  c.labels.hide_bias = get<double>(L, "hide_bias", lp);
  c.train_begin_day = get<std::size_t>(j, "train_begin_day", p);
  c.train_end_day = get<std::size_t>(j, "train_end_day", p);
  c.eval_begin_day = get<std::size_t>(j, "eval_begin_day", p);
  c.eval_end_day = get<std::size_t>(j, "eval_end_day", p);
  c.train_requests = get<std::size_t>(j, "train_requests", p);
  c.eval_chunks = get<std::size_t>(j, "eval_chunks", p);
  c.chunk_size = get<std::size_t>(j, "chunk_size", p);
  c.candidate_short = get<double>(j, "candidate_short", p);
  c.candidate_long = get<double>(j, "candidate_long", p);
  c.candidate_disliked = get<double>(j, "candidate_disliked", p);
  c.neg_per_pos = get<double>(j, "neg_per_pos", p);
  c.downsample = get<bool>(j, "downsample", p);
  c.validate();
  return c;
}

json variant_json(const AblationVariant& v) {
  json o = json::object();
  for (const auto& [k, val] : v.overrides) o[k] = val;
  return {{"name", v.name}, {"overrides", o}};
}

}  // namespace

RunConfig default_run_config() {
  RunConfig c;
  c.model.max_len = 20;
  c.model.d_action = 8;
  c.model.d_pin = 8;
  c.model.d_user = 8;
  c.model.d_other = kOtherFeatureWidth;
  c.model.K = 10;
  c.model.encoder.d_hidden = 32;
  c.model.heads.utilities = {1.0, 2.0, -2.0};
  c.train.total_steps = 600;
  c.train.warmup_steps = 60;
  c.store.d_pin = c.generator.d_pin;
  c.sweep_lengths = {5, 10, 20};
  return c;
}

json to_json(const RunConfig& c) {
  json variants = json::array();
  for (const auto& v : c.ablate_variants) variants.push_back(variant_json(v));
  return {{"seed", c.seed},
          {"generator", to_json(c.generator)},
          {"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"store",
           {{"capacity", c.store.capacity},
            {"dedup_bucket_seconds", c.store.dedup_bucket_seconds},
            {"d_pin", c.store.d_pin},
            {"n_action_types", c.store.n_action_types},
            {"shards", c.store.shards}}},
          {"eval", {{"K", c.eval_K}}},
          {"paths", {{"corpus", c.corpus_dir}, {"checkpoint", c.checkpoint}, {"request", c.request}, {"events", c.events}}},
          {"ablate", {{"preset", c.ablate_preset}, {"variants", variants}}},
          {"sweep", {{"lengths", c.sweep_lengths}, {"fusions", c.sweep_fusions}}}};
}

RunConfig run_config_from_json(const json& in) {
  const RunConfig defaults = default_run_config();
  json j = to_json(defaults);
  merge(j, in, "");
  RunConfig c;
  c.seed = get<std::uint64_t>(j, "seed", "");
  c.generator = generator_from_merged(j.at("generator"));
  c.model = model_config_from_json(j.at("model"));
  c.train = train_config_from_json(j.at("train"));
  c.generator.seed = c.seed;
  c.train.seed = c.seed;
  const auto& s = j.at("store");
  c.store.capacity = get<std::size_t>(s, "capacity", "store");
  c.store.dedup_bucket_seconds = get<std::int64_t>(s, "dedup_bucket_seconds", "store");
  c.store.d_pin = get<std::size_t>(s, "d_pin", "store");
  c.store.n_action_types = get<std::size_t>(s, "n_action_types", "store");
  c.store.shards = get<std::size_t>(s, "shards", "store");
  c.store.validate();
  c.eval_K = get<std::size_t>(j.at("eval"), "K", "eval");
  const auto& p = j.at("paths");
  c.corpus_dir = get<std::string>(p, "corpus", "paths");
  c.checkpoint = get<std::string>(p, "checkpoint", "paths");
  c.request = get<std::string>(p, "request", "paths");
  c.events = get<std::string>(p, "events", "paths");
  const auto& a = j.at("ablate");
  c.ablate_preset = get<std::string>(a, "preset", "ablate");
  for (const auto& v : a.at("variants")) {
    if (!v.is_object() || !v.contains("name") || !v.contains("overrides") || !v.at("overrides").is_object()) {
      throw ConfigError("ablate.variants entries need 'name' and an 'overrides' object");
    }
    AblationVariant av;
    av.name = v.at("name").get<std::string>();
    for (auto it = v.at("overrides").begin(); it != v.at("overrides").end(); ++it) {
      av.overrides.emplace_back(it.key(), it.value());
    }
    c.ablate_variants.push_back(std::move(av));
  }
  const auto& sw = j.at("sweep");
  c.sweep_lengths = get<std::vector<std::size_t>>(sw, "lengths", "sweep");
  c.sweep_fusions = get<std::vector<std::string>>(sw, "fusions", "sweep");
  c.validate();
  return c;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  generator.validate();
  store.validate();
  if (eval_K < 1) throw ConfigError("eval.K must be >= 1");
  if (model.d_pin != generator.d_pin) throw ConfigError("model.d_pin must equal generator.d_pin");
  if (model.d_user != generator.d_user) throw ConfigError("model.d_user must equal generator.d_user");
  if (model.d_other != kOtherFeatureWidth) {
    throw ConfigError("model.d_other must be " + std::to_string(kOtherFeatureWidth) + " for synthetic corpora");
  }
  if (model.heads.size() != 3) throw ConfigError("synthetic corpora label exactly three heads (click, repin, hide)");
  if (store.d_pin != generator.d_pin) throw ConfigError("store.d_pin must equal generator.d_pin");
  if (model.n_action_types != store.n_action_types) throw ConfigError("model and store disagree on n_action_types");
  if (sweep_lengths.empty()) throw ConfigError("sweep.lengths must not be empty");
  for (auto L : sweep_lengths) {
    if (L < 1 || L > model.max_len) {
      throw ConfigError("sweep length " + std::to_string(L) + " must lie in [1, model.max_len=" +
                        std::to_string(model.max_len) + "]");
    }
  }
  for (const auto& f : sweep_fusions) parse_fusion(f);
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(f, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

void apply_override(json& doc, const std::string& key, const json& value) {
  if (key.empty()) throw ConfigError("empty override key");
  json* node = &doc;
  std::string path;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    path = join(path, part);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown override key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (!same_kind(*node, value) && !(node->is_object() && kOpenObjects.count(path))) {
    throw ConfigError("override '" + key + "' has the wrong type");
  }
  *node = value;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' must look like key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  apply_override(doc, key, value);
}

}  // namespace transact
