// SPDX-License-Identifier: Apache-2.0
// transact: generate / ingest-replay / train / evaluate / infer / ablate /
// seqlen-sweep.
//
// Exit codes: 0 ok, 1 usage, 2 validation, 3 runtime. Failures print one
// JSON error record on stderr and, when --out is set, leave error.json and
// an INCOMPLETE marker next to whatever was written.

#include <malloc.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "transact/checkpoint.hpp"
#include "transact/config.hpp"
#include "transact/corpus_io.hpp"
#include "transact/errors.hpp"
#include "transact/experiment.hpp"
#include "transact/kernels.hpp"
#include "transact/store.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace transact;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::vector<std::string> overrides;
  std::string preset;
};

RunConfig resolve_config(const Options& o) {
  json doc = o.config_path.empty() ? to_json(default_run_config()) : to_json(load_run_config(o.config_path));
  if (o.seed) apply_override(doc, "seed", *o.seed);
  for (const auto& a : o.overrides) apply_override(doc, a);
  if (!o.preset.empty()) apply_override(doc, "ablate.preset", o.preset);
  return run_config_from_json(doc);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write '" + p.string() + "'");
  return f;
}

void write_json_file(const fs::path& p, const json& j) {
  auto f = open_out(p);
  f << j.dump(2) << '\n';
}

// Non-deterministic facts (wall clock, kernel backend) live here so the
// reports themselves stay byte-identical across reruns.
void write_meta(const fs::path& out, const std::string& cmd, double seconds, json extra = json::object()) {
  extra["command"] = cmd;
  extra["seconds"] = seconds;
  extra["kernel_backend"] = std::string(kernels::backend_name(kernels::active().backend));
  extra["finished_at_unix"] =
      std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
  write_json_file(out / "meta.json", extra);
}

void write_report(const fs::path& out, const std::string& stem, const EvalReport& r) {
  {
    auto f = open_out(out / (stem + ".tsv"));
    write_report_tsv(f, r);
  }
  auto f = open_out(out / (stem + ".jsonl"));
  write_report_jsonl(f, r);
}

std::string corpus_dir(const RunConfig& c) {
  if (!fs::exists(c.corpus_dir)) throw IoError("corpus directory '" + c.corpus_dir + "' does not exist (run generate)");
  return c.corpus_dir;
}

void cmd_generate(const RunConfig& c, const fs::path& out) {
  const auto world = generate_world(c.generator);
  const auto corpus = generate_corpus(world);
  write_corpus(out.string(), corpus);
  const auto tr = split_stats(corpus.train), ev = split_stats(corpus.eval);
  json stats;
  auto put = [](const SplitStats& s) {
    return json{{"examples", s.examples}, {"positives", s.positives}, {"negatives", s.negatives},
                {"click", s.click}, {"repin", s.repin}, {"hide", s.hide}};
  };
  stats["train"] = put(tr);
  stats["eval"] = put(ev);
  stats["users"] = corpus.users.size();
  stats["pins"] = corpus.pins.size();
  write_json_file(out / "generate_stats.json", stats);
}

void cmd_ingest(const RunConfig& c, const fs::path& out) {
  const std::string path = c.events.empty() ? (fs::path(corpus_dir(c)) / "actions.jsonl").string() : c.events;
  const auto events = read_action_events(path);
  SequenceStore store(c.store);
  for (const auto& e : events) store.ingest(e);
  store.snapshot((out / "store.snapshot").string());
  const auto s = store.stats();
  json j{{"events_read", events.size()}, {"accepted", s.accepted}, {"duplicates", s.duplicates},
         {"evicted", s.evicted},         {"rejected", s.rejected}, {"retained", store.event_count()},
         {"users", store.user_ids().size()}};
  write_json_file(out / "ingest_stats.json", j);
}

void cmd_train(const RunConfig& c, const fs::path& out) {
  const auto corpus = read_corpus(corpus_dir(c));
  CorpusSource source(corpus, corpus.train, c.model.max_len);
  EvalHook hook;
  if (c.train.eval_every > 0) {
    hook = [&](const TrainState& s) { return evaluate_model(s.params, s.model, corpus, corpus.eval, c.eval_K).all.hit; };
  }
  const auto result = train(c.model, c.train, source, hook);
  save_checkpoint((out / "checkpoint.bin").string(), result.state);
  auto f = open_out(out / "trace.tsv");
  write_trace_tsv(f, result.trace, c.model.heads.names);
}

TrainState checkpoint_for(const RunConfig& c, const fs::path& out) {
  const std::string path = c.checkpoint.empty() ? (out / "checkpoint.bin").string() : c.checkpoint;
  if (!fs::exists(path)) throw IoError("checkpoint '" + path + "' does not exist (set paths.checkpoint)");
  return load_checkpoint(path);
}

void cmd_evaluate(const RunConfig& c, const fs::path& out) {
  const auto corpus = read_corpus(corpus_dir(c));
  const auto state = checkpoint_for(c, out);
  if (state.model.d_pin != corpus.d_pin || state.model.d_user != corpus.d_user) {
    throw ConfigError("checkpoint dims do not match the corpus");
  }
  const auto report = evaluate_model(state.params, state.model, corpus, corpus.eval, c.eval_K);
  write_report(out, "report", report);
}

void cmd_infer(const RunConfig& c, const fs::path& out) {
  if (c.request.empty()) throw ConfigError("infer needs paths.request");
  std::ifstream rf(c.request);
  if (!rf) throw IoError("cannot read request '" + c.request + "'");
  json req;
  try {
    req = json::parse(rf);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("request file: ") + e.what());
  }
  const auto corpus = read_corpus(corpus_dir(c));
  const auto state = checkpoint_for(c, out);
  ExampleRecord base;
  try {
    base.user_id = req.at("user_id").get<std::int64_t>();
    base.t_request = req.at("t_request").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("request file: ") + e.what());
  }
  if (base.user_id < 0 || static_cast<std::size_t>(base.user_id) >= corpus.users.size()) {
    throw LookupError("request user " + std::to_string(base.user_id) + " is not in the corpus");
  }
  if (!req.contains("candidates") || !req["candidates"].is_array() || req["candidates"].empty()) {
    throw ConfigError("request file: 'candidates' must be a non-empty array of pin ids");
  }
  base.labels.assign(state.model.heads.size(), 0);
  std::vector<TrainingExample> batch;
  for (const auto& p : req["candidates"]) {
    if (!p.is_number_integer()) throw ConfigError("request file: candidate ids must be integers");
    ExampleRecord r = base;
    r.pin_id = p.get<std::int64_t>();
    if (r.pin_id < 0 || static_cast<std::size_t>(r.pin_id) >= corpus.pins.size()) {
      throw LookupError("candidate pin " + std::to_string(r.pin_id) + " is not in the corpus");
    }
    batch.push_back(materialize(corpus, r, state.model.max_len));
  }
  std::mt19937_64 rng(0);
  const Tensor probs = forward_batch(batch, state.params, state.model, false, rng);
  const auto& heads = state.model.heads.names;
  auto tsv = open_out(out / "infer.tsv");
  auto jl = open_out(out / "infer.jsonl");
  tsv.precision(17);
  tsv << "user_id\tpin_id";
  for (const auto& h : heads) tsv << "\tp_" << h;
  tsv << "\tscore\n";
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::vector<double> p(probs.row(i).begin(), probs.row(i).end());
    const double s = final_score(p, state.model.heads.utilities);
    tsv << base.user_id << '\t' << batch[i].pin_id;
    json j{{"user_id", base.user_id}, {"pin_id", batch[i].pin_id}, {"score", s}};
    for (std::size_t h = 0; h < heads.size(); ++h) {
      tsv << '\t' << p[h];
      j["probs"][heads[h]] = p[h];
    }
    tsv << '\t' << s << '\n';
    jl << j.dump() << '\n';
  }
}

json cmd_ablate(const RunConfig& c, const fs::path& out) {
  const auto corpus = read_corpus(corpus_dir(c));
  const auto rows = run_ablation(c, corpus, preset_variants(c));
  {
    auto f = open_out(out / "ablation.tsv");
    write_ablation_tsv(f, rows);
  }
  auto f = open_out(out / "ablation.jsonl");
  write_ablation_jsonl(f, rows);
  json t = json::object();
  for (const auto& r : rows) t[r.name] = r.seconds;
  return json{{"variant_seconds", t}};
}

json cmd_sweep(const RunConfig& c, const fs::path& out) {
  const auto corpus = read_corpus(corpus_dir(c));
  const auto r = run_seqlen_sweep(c, corpus);
  {
    auto f = open_out(out / "seqlen_sweep.tsv");
    write_sweep_tsv(f, r);
  }
  auto f = open_out(out / "seqlen_sweep.jsonl");
  write_sweep_jsonl(f, r);
  json t = json::object();
  for (const auto& row : r.rows) t[row.fusion + "/" + std::to_string(row.length)] = row.seconds;
  return json{{"row_seconds", t}};
}

int exit_code_for(const std::string& kind) {
  static const std::map<std::string, int> codes = {
      {"configuration", kExitValidation}, {"contract_violation", kExitValidation}, {"lookup", kExitValidation},
      {"domain", kExitValidation},        {"future_event", kExitValidation},       {"restore", kExitValidation},
  };
  auto it = codes.find(kind);
  return it == codes.end() ? kExitRuntime : it->second;
}

int fail(const std::string& cmd, const std::string& kind, const std::string& message, int code, const fs::path* out) {
  json rec{{"error", {{"command", cmd}, {"kind", kind}, {"message", message}, {"exit_code", code}}}};
  std::cerr << rec.dump() << std::endl;
  if (out != nullptr && fs::is_directory(*out)) {
    std::ofstream(*out / "error.json") << rec.dump(2) << '\n';
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Training allocates and frees many mid-sized tensors per step; keep them
  // off mmap so the heap is reused.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"TransAct ranker: data generation, ingestion, training and evaluation"};
  app.require_subcommand(1, 1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "Run configuration (JSON, comments allowed)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Seed for generation and training");
    sub->add_option("--out", o.out, "Output directory")->default_val(".");
    sub->add_option("--override", o.overrides, "Config override key.path=value (repeatable)");
  };
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"generate", "Write a synthetic corpus to --out"},
      {"ingest-replay", "Replay an event file through the sequence store"},
      {"train", "Train on the corpus train split; writes checkpoint.bin and trace.tsv"},
      {"evaluate", "HIT@K and diversity of a checkpoint on the eval split"},
      {"infer", "Score a (user, candidates) request file"},
      {"ablate", "Train and evaluate each variant of an ablation preset"},
      {"seqlen-sweep", "Train and evaluate across sequence lengths and fusion modes"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    subs[name] = app.add_subcommand(name, help);
    add_common(subs[name]);
  }
  subs["ablate"]->add_option("--preset", o.preset, "compression | hybrid | drop_feature | pe | fusion | custom");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("", "usage", e.what(), kExitUsage, nullptr);
  }
  std::string cmd;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) cmd = name;
  }

  const fs::path out = o.out;
  const fs::path marker = out / "INCOMPLETE";
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const RunConfig c = resolve_config(o);
    fs::create_directories(out);
    std::ofstream(marker) << cmd << " did not finish; outputs in this directory may be partial\n";
    fs::remove(out / "error.json");
    write_json_file(out / "config.resolved.json", to_json(c));
    json extra = json::object();
    if (cmd == "generate") cmd_generate(c, out);
    else if (cmd == "ingest-replay") cmd_ingest(c, out);
    else if (cmd == "train") cmd_train(c, out);
    else if (cmd == "evaluate") cmd_evaluate(c, out);
    else if (cmd == "infer") cmd_infer(c, out);
    else if (cmd == "ablate") extra = cmd_ablate(c, out);
    else if (cmd == "seqlen-sweep") extra = cmd_sweep(c, out);
    write_meta(out, cmd, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), extra);
    fs::remove(marker);
    return kExitOk;
  } catch (const Error& e) {
    return fail(cmd, e.kind(), e.what(), exit_code_for(e.kind()), &out);
  } catch (const fs::filesystem_error& e) {
    return fail(cmd, "io", e.what(), kExitRuntime, &out);
  } catch (const std::exception& e) {
    return fail(cmd, "internal", e.what(), kExitRuntime, &out);
  }
}
