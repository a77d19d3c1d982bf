// SPDX-License-Identifier: Apache-2.0
#include "transact/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"

#include "transact/errors.hpp"

namespace transact {

using nlohmann::json;

RunOutcome train_and_evaluate(const RunConfig& config, const Corpus& corpus, const std::string& name) {
  const auto t0 = std::chrono::steady_clock::now();
  CorpusSource source(corpus, corpus.train, config.model.max_len);
  RunOutcome out;
  out.name = name;
  out.config = config;
  EvalHook hook;
  if (config.train.eval_every > 0) {
    hook = [&](const TrainState& s) {
      return evaluate_model(s.params, s.model, corpus, corpus.eval, config.eval_K).all.hit;
    };
  }
  out.trained = train(config.model, config.train, source, hook);
  out.report = evaluate_model(out.trained.state.params, config.model, corpus, corpus.eval, config.eval_K);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

RunConfig apply_variant(const RunConfig& base, const AblationVariant& variant) {
  json doc = to_json(base);
  for (const auto& [key, value] : variant.overrides) apply_override(doc, key, value);
  return run_config_from_json(doc);
}

std::vector<AblationVariant> preset_variants(const RunConfig& config) {
  const std::string& p = config.ablate_preset;
  std::vector<AblationVariant> v;
  if (p == "compression") {
    for (auto m : kAllCompressionModes) v.push_back({std::string(to_string(m)), {{"model.compression", to_string(m)}}});
  } else if (p == "hybrid" || p == "drop_feature") {
    v.push_back({"transact_removed", {{"model.features.transact", false}}});
    v.push_back({"pf_removed", {{"model.features.batch_embedding", false}}});
    v.push_back({"other_removed", {{"model.features.other", false}}});
  } else if (p == "pe") {
    for (auto pe : {PositionalEncoding::none, PositionalEncoding::sinusoidal, PositionalEncoding::learned,
                    PositionalEncoding::linear_projection}) {
      v.push_back({std::string(to_string(pe)), {{"model.encoder.positional_encoding", to_string(pe)}}});
    }
  } else if (p == "fusion") {
    v.push_back({"concat", {{"model.fusion", "concat"}}});
    v.push_back({"append", {{"model.fusion", "append"}}});
  } else if (p == "custom") {
    v = config.ablate_variants;
  } else {
    throw ConfigError("unknown ablation preset '" + p + "' (compression, hybrid, drop_feature, pe, fusion, custom)");
  }
  return v;
}

namespace {

std::string describe(const AblationVariant& v) {
  std::string s;
  for (const auto& [k, val] : v.overrides) {
    if (!s.empty()) s += ",";
    s += k + "=" + (val.is_string() ? val.get<std::string>() : val.dump());
  }
  return s;
}

std::string formula_for(const ModelConfig& m) {
  if (!m.features.transact) return "-";
  if (m.sequence_encoder == SequenceEncoderKind::avg_pool) return "d_pin";
  return std::string(size_formula(m.compression));
}

}  // namespace

std::vector<AblationRow> run_ablation(const RunConfig& config, const Corpus& corpus,
                                      const std::vector<AblationVariant>& variants) {
  // Resolve every variant first so a bad override fails before any training.
  std::vector<RunConfig> resolved;
  for (const auto& v : variants) resolved.push_back(apply_variant(config, v));
  const json base_doc = to_json(config);

  std::vector<AblationRow> rows;
  const auto base = train_and_evaluate(config, corpus, "base");
  AblationRow b;
  b.name = "base";
  b.is_base = true;
  b.z_size = config.model.z_size();
  b.size_formula = formula_for(config.model);
  b.report = base.report;
  b.seconds = base.seconds;
  rows.push_back(b);

  for (std::size_t i = 0; i < variants.size(); ++i) {
    if (to_json(resolved[i]) == base_doc) {
      rows[0].name += "=" + variants[i].name;
      rows[0].overrides = describe(variants[i]);
      continue;
    }
    const auto r = train_and_evaluate(resolved[i], corpus, variants[i].name);
    AblationRow row;
    row.name = variants[i].name;
    row.overrides = describe(variants[i]);
    row.z_size = resolved[i].model.z_size();
    row.size_formula = formula_for(resolved[i].model);
    row.report = r.report;
    relative_to(row.report, base.report);
    row.seconds = r.seconds;
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

void write_num(std::ostream& os, double v) {
  if (std::isnan(v)) os << "nan";
  else os << v;
}

}  // namespace

void write_ablation_tsv(std::ostream& os, const std::vector<AblationRow>& rows) {
  if (rows.empty()) return;
  os.precision(8);
  const auto& heads = rows[0].report.heads;
  const auto K = rows[0].report.K;
  os << "variant\toverrides\tsize\tz_size";
  for (const auto& h : heads) os << "\tHIT@" << K << "/" << h;
  for (const auto& h : heads) os << "\tdelta_pct/" << h;
  os << "\tdiversity\tdelta_pct/diversity\n";
  for (const auto& r : rows) {
    os << r.name << '\t' << (r.overrides.empty() ? "-" : r.overrides) << '\t' << r.size_formula << '\t' << r.z_size;
    for (double v : r.report.all.hit) os << '\t' << v;
    for (std::size_t h = 0; h < heads.size(); ++h) {
      os << '\t';
      if (r.report.hit_delta_pct) write_num(os, (*r.report.hit_delta_pct)[h]);
      else os << "-";
    }
    os << '\t' << r.report.all.diversity << '\t';
    if (r.report.diversity_delta_pct) write_num(os, *r.report.diversity_delta_pct);
    else os << "-";
    os << '\n';
  }
}

void write_ablation_jsonl(std::ostream& os, const std::vector<AblationRow>& rows) {
  for (const auto& r : rows) {
    json j;
    j["record"] = "ablation";
    j["variant"] = r.name;
    j["base"] = r.is_base;
    j["overrides"] = r.overrides;
    j["size"] = r.size_formula;
    j["z_size"] = r.z_size;
    for (std::size_t h = 0; h < r.report.heads.size(); ++h) {
      j["hit"][r.report.heads[h]] = r.report.all.hit[h];
      if (r.report.hit_delta_pct) j["delta_pct"][r.report.heads[h]] = (*r.report.hit_delta_pct)[h];
    }
    j["diversity"] = r.report.all.diversity;
    if (r.report.diversity_delta_pct) j["delta_pct"]["diversity"] = *r.report.diversity_delta_pct;
    os << j.dump() << '\n';
  }
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ContractError("spearman: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

SweepResult run_seqlen_sweep(const RunConfig& config, const Corpus& corpus) {
  SweepResult out;
  const std::size_t repin = config.model.heads.index_of("repin");
  for (const auto& fusion : config.sweep_fusions) {
    std::vector<double> xs, ys;
    for (std::size_t L : config.sweep_lengths) {
      RunConfig c = config;
      c.model.max_len = L;
      c.sweep_lengths = {L};
      c.model.fusion = parse_fusion(fusion);
      c.model.K = std::min(c.model.K, c.model.seq_rows());
      c.validate();
      const auto r = train_and_evaluate(c, corpus, fusion + "/" + std::to_string(L));
      out.rows.push_back({L, fusion, c.model.K, r.report, r.seconds});
      xs.push_back(static_cast<double>(L));
      ys.push_back(r.report.all.hit[repin]);
    }
    out.spearman.emplace_back(fusion, spearman(xs, ys));
  }
  return out;
}

void write_sweep_tsv(std::ostream& os, const SweepResult& r) {
  os.precision(8);
  os << "length\tfusion\tK";
  if (!r.rows.empty()) {
    for (const auto& h : r.rows[0].report.heads) os << "\tHIT@" << r.rows[0].report.K << "/" << h;
  }
  os << "\tdiversity\n";
  for (const auto& row : r.rows) {
    os << row.length << '\t' << row.fusion << '\t' << row.K;
    for (double v : row.report.all.hit) os << '\t' << v;
    os << '\t' << row.report.all.diversity << '\n';
  }
  for (const auto& [fusion, rho] : r.spearman) {
    os << "# spearman(length, repin) " << fusion << " = ";
    write_num(os, rho);
    os << '\n';
  }
}

void write_sweep_jsonl(std::ostream& os, const SweepResult& r) {
  for (const auto& row : r.rows) {
    json j;
    j["record"] = "sweep";
    j["length"] = row.length;
    j["fusion"] = row.fusion;
    j["K"] = row.K;
    for (std::size_t h = 0; h < row.report.heads.size(); ++h) j["hit"][row.report.heads[h]] = row.report.all.hit[h];
    j["diversity"] = row.report.all.diversity;
    os << j.dump() << '\n';
  }
  for (const auto& [fusion, rho] : r.spearman) {
    json j{{"record", "trend"}, {"fusion", fusion}, {"statistic", "spearman"}};
    j["value"] = std::isnan(rho) ? json(nullptr) : json(rho);
    os << j.dump() << '\n';
  }
}

}  // namespace transact
