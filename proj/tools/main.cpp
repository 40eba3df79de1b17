// Copyright 2026 The kvcompress Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// kvc: command-line front end for building data, training compressors,
// compressing text and running the evaluation grid.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kvc/checkpoint.hpp"
#include "kvc/compressor.hpp"
#include "kvc/context_io.hpp"
#include "kvc/data.hpp"
#include "kvc/errors.hpp"
#include "kvc/experiment.hpp"
#include "kvc/metrics.hpp"
#include "kvc/tokenizer.hpp"
#include "kvc/training.hpp"

namespace fs = std::filesystem;
using namespace kvc;

namespace {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kNumeric = 4, kMissing = 5 };

std::uint64_t default_seed() {
  if (const char* s = std::getenv("KVC_SEED")) {
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw ConfigError(std::string("KVC_SEED is not an unsigned integer: ") + s);
    }
  }
  return 1;
}

std::string default_checkpoint() {
  const char* s = std::getenv("KVC_CHECKPOINT");
  return s ? s : "";
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_trailing_newlines(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

struct Dataset {
  std::vector<CorpusRecord> corpus;
  std::vector<QARecord> qa;
};

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  const auto corpus_path = fs::path(dir) / "corpus.jsonl";
  const auto qa_path = fs::path(dir) / "qa.json";
  std::ifstream corpus(corpus_path);
  if (!corpus) throw MissingArtifactError("cannot open " + corpus_path.string());
  ds.corpus = read_corpus_jsonl(corpus);
  std::ifstream qa(qa_path);
  if (!qa) throw MissingArtifactError("cannot open " + qa_path.string());
  ds.qa = read_qa_json(qa);
  return ds;
}

template <typename T>
std::vector<T> take_first(std::vector<T> v, std::size_t limit) {
  if (limit != 0 && v.size() > limit) v.resize(limit);
  return v;
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void write_loss_trace(const std::string& path, const LossTrace& trace) {
  if (path.empty()) return;
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  write_loss_csv(trace, out);
  if (!out) throw DataError("could not write " + path);
}

// Training settings: phase defaults, then the JSON config file, then flags.
struct TrainFlags {
  std::string config_path;
  std::optional<std::size_t> steps, warmup, batch, k, eval_every;
  std::optional<double> lr, weight_decay;
  std::optional<std::string> variant;
  std::uint64_t seed = 1;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON training config")->check(CLI::ExistingFile);
  cmd->add_option("--steps", f.steps, "optimizer steps");
  cmd->add_option("--warmup", f.warmup, "linear warm-up steps");
  cmd->add_option("--batch", f.batch, "examples per step");
  cmd->add_option("--lr", f.lr, "peak learning rate");
  cmd->add_option("--weight-decay", f.weight_decay, "decoupled weight decay");
  cmd->add_option("--eval-every", f.eval_every, "dev evaluation interval");
  cmd->add_option("--seed", f.seed, "random seed (default: $KVC_SEED or 1)");
}

TrainConfig resolve_train_config(Phase phase, const TrainFlags& f, std::optional<TrainConfig> inherited = {}) {
  TrainConfig base = inherited.value_or(TrainConfig::defaults_for(phase, f.k.value_or(16)));
  base.phase = phase;
  if (inherited) base.peak_lr = TrainConfig::defaults_for(phase, base.k).peak_lr;
  auto j = nlohmann::json::parse(base.to_json());
  if (!f.config_path.empty()) {
    try {
      j.update(nlohmann::json::parse(read_text_file(f.config_path)));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(f.config_path + ": " + e.what());
    }
  }
  j["phase"] = phase_name(phase);
  if (f.steps) j["total_steps"] = *f.steps;
  if (f.warmup) j["warmup_steps"] = *f.warmup;
  if (f.batch) j["batch_size"] = *f.batch;
  if (f.lr) j["peak_lr"] = *f.lr;
  if (f.weight_decay) j["weight_decay"] = *f.weight_decay;
  if (f.eval_every) j["eval_every"] = *f.eval_every;
  if (f.k) j["k"] = *f.k;
  if (f.variant) j["variant"] = *f.variant;
  j["seed"] = f.seed;
  return TrainConfig::from_json(j.dump());
}

ProgressFn stderr_progress(bool quiet) {
  if (quiet) return {};
  return [](const LossPoint& p) {
    if (p.split == "dev") std::cerr << "step " << p.step << " dev loss " << p.loss << '\n';
  };
}

// ---- commands ----------------------------------------------------------------

int cmd_build_data(const std::string& out_dir, std::size_t n, std::uint64_t seed, std::size_t pairs_per_96) {
  const auto corpus = build_synthetic_corpus(n, kDefaultBuckets, seed);
  const auto qa = build_synthetic_qa(corpus, pairs_per_96, seed);
  const auto problems = audit_qa(corpus, qa, pairs_per_96);
  if (!problems.empty()) {
    for (const auto& p : problems) std::cerr << p << '\n';
    return kData;
  }
  fs::create_directories(out_dir);
  std::ofstream corpus_out(fs::path(out_dir) / "corpus.jsonl", std::ios::binary);
  write_corpus_jsonl(corpus, corpus_out);
  std::ofstream qa_out(fs::path(out_dir) / "qa.json", std::ios::binary);
  write_qa_json(qa, qa_out);
  if (!corpus_out || !qa_out) throw DataError("could not write data files in " + out_dir);
  std::cout << corpus.size() << " texts, " << qa.size() << " question/answer pairs written to " << out_dir << '\n';
  return kOk;
}

struct BaseFlags {
  std::string data, out, loss_csv;
  std::size_t d_model = 128, layers = 4, heads = 4, ffn = 512, k_max = 16, max_positions = 1024;
  bool no_qa = false, no_repeats = false, quiet = false;
  std::size_t dev_limit = 32;
  std::size_t extra_texts = 0, extra_bucket = 96;
  std::uint64_t extra_seed = 77;
};

int cmd_train_base(const BaseFlags& b, const TrainFlags& f) {
  const auto ds = load_dataset(b.data);
  const auto config = ModelConfig::byte_level(b.d_model, b.layers, b.heads, b.ffn, b.k_max, b.max_positions);
  auto train_config = resolve_train_config(Phase::kPretrain, f);
  auto params = ModelParams<float>::init(config, train_config.seed);
  BaseLmMix mix;
  mix.instruct_qa = mix.zero_shot_qa = !b.no_qa;
  mix.repeats = !b.no_repeats;
  auto train = base_lm_examples(config, ds.corpus, ds.qa, Split::kTrain, mix);
  if (b.extra_texts > 0) {
    // A separately seeded corpus; its identifiers never occur in the data directory's texts.
    const std::size_t buckets[] = {b.extra_bucket};
    auto extra = build_synthetic_corpus(b.extra_texts, buckets, b.extra_seed);
    std::vector<QARecord> extra_qa;
    if (!b.no_qa) extra_qa = build_synthetic_qa(extra, 5, b.extra_seed);
    for (auto& r : extra) r.split = Split::kTrain;
    auto more = base_lm_examples(config, extra, extra_qa, Split::kTrain, mix);
    train.insert(train.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
  }
  const auto dev = take_first(base_lm_examples(config, ds.corpus, ds.qa, Split::kDev, mix), b.dev_limit);
  const auto trace = train_base_model(params, train, dev, train_config, stderr_progress(b.quiet));
  ensure_parent(b.out);
  save_checkpoint(b.out, make_checkpoint(params, nullptr, nullptr, &train_config));
  write_loss_trace(b.loss_csv, trace);
  std::cout << "base model written to " << b.out << '\n';
  return kOk;
}

struct AdapterFlags {
  std::string data, base, init, out, loss_csv;
  std::size_t rank = 8;
  double alpha = 16.0;
  bool quiet = false;
  std::size_t dev_limit = 32;
};

int cmd_train_adapters(Phase phase, const AdapterFlags& a, const TrainFlags& f) {
  const auto ds = load_dataset(a.data);
  ModelParams<float> params;
  AdapterParams<float> adapters;
  OptimizerState optimizer;
  TrainConfig config;
  if (phase == Phase::kFinetune) {
    // Continue from a pretrained compressor: same base, k and variant.
    if (a.init.empty()) throw ConfigError("finetune needs --init <pretrained checkpoint>");
    const auto ckpt = load_checkpoint(a.init);
    const auto meta = checkpoint_meta(ckpt);
    params = restore_base(ckpt);
    adapters = restore_adapters(ckpt);
    if (f.k && meta.train && *f.k != meta.train->k) throw ConfigError("--k differs from the pretrained checkpoint");
    if (f.variant && meta.train && parse_variant(*f.variant) != meta.train->variant) {
      throw ConfigError("--variant differs from the pretrained checkpoint");
    }
    config = resolve_train_config(phase, f, meta.train);
  } else {
    const std::string base_path = a.base.empty() ? default_checkpoint() : a.base;
    if (base_path.empty()) throw ConfigError("pretrain needs --base <base checkpoint> or $KVC_CHECKPOINT");
    params = restore_base(load_checkpoint(base_path, std::vector<SectionTag>{SectionTag::kBase}));
    config = resolve_train_config(phase, f);
    const AdapterConfig adapter_config{a.rank, a.alpha, config.variant == PrefixVariant::kEmbed};
    adapters = init_adapters<float>(params.config, adapter_config, config.seed);
  }
  const auto train = phase == Phase::kPretrain ? regeneration_examples(ds.corpus, Split::kTrain)
                                               : qa_examples(ds.corpus, ds.qa, Split::kTrain);
  const auto dev = take_first(phase == Phase::kPretrain ? regeneration_examples(ds.corpus, Split::kDev)
                                                        : qa_examples(ds.corpus, ds.qa, Split::kDev),
                              a.dev_limit);
  auto result = run_training(params, std::move(adapters), train, dev, config, stderr_progress(a.quiet),
                             std::move(optimizer));
  ensure_parent(a.out);
  save_checkpoint(a.out, make_checkpoint(params, &result.adapters, &result.optimizer, &config));
  write_loss_trace(a.loss_csv, result.trace);
  std::cout << phase_name(phase) << " checkpoint written to " << a.out << '\n';
  return kOk;
}

int cmd_compress(const std::string& in, std::size_t k, const std::string& ckpt_path, const std::string& out,
                 const std::optional<std::string>& variant_flag) {
  const auto ckpt = load_checkpoint(ckpt_path);
  const auto meta = checkpoint_meta(ckpt);
  const auto params = restore_base(ckpt);
  const auto adapters = restore_adapters(ckpt);
  PrefixVariant variant = meta.train ? meta.train->variant : PrefixVariant::kKv;
  if (variant_flag) variant = parse_variant(*variant_flag);
  const auto text = tokenize(strip_trailing_newlines(read_text_file(in)));
  const auto ctx = compress(params, adapters, std::span<const TokenId>(text), k, variant);
  ensure_parent(out);
  save_context(out, ctx);
  std::cout << "compressed " << text.size() << " tokens into " << k << " (" << variant_name(variant)
            << ", ratio " << compression_ratio(ctx) << ")\n";
  return kOk;
}

std::string resolve_ckpt(const std::string& flag) {
  const std::string path = flag.empty() ? default_checkpoint() : flag;
  if (path.empty()) throw ConfigError("no checkpoint given: pass --ckpt or set KVC_CHECKPOINT");
  return path;
}

int cmd_regenerate(const std::string& ctx_path, const std::string& ckpt_flag, std::size_t max_len) {
  const auto params = restore_base(load_checkpoint(resolve_ckpt(ckpt_flag), std::vector<SectionTag>{SectionTag::kBase}));
  const auto ctx = load_context(ctx_path);
  const auto out = regenerate(params, ctx, max_len);
  std::cout << render_text(out.tokens) << '\n';
  return kOk;
}

int cmd_qa(const std::string& ctx_path, const std::string& context_file, const std::string& mode,
           const std::string& question, const std::string& ckpt_flag, std::size_t max_len) {
  const auto params = restore_base(load_checkpoint(resolve_ckpt(ckpt_flag), std::vector<SectionTag>{SectionTag::kBase}));
  DecodeOutput out;
  if (!ctx_path.empty()) {
    const auto ctx = load_context(ctx_path);
    const auto prompt = qa_prompt(question);
    out = answer(params, ctx, std::span<const TokenId>(prompt), max_len);
  } else {
    if (context_file.empty()) throw ConfigError("qa needs --ctx or --context");
    const auto context = strip_trailing_newlines(read_text_file(context_file));
    out = answer_full_context(params, context, question, mode == "instruct", max_len);
  }
  std::cout << render_text(out.tokens) << '\n';
  return kOk;
}

struct EvalFlags {
  std::string ckpt, data, reference, task = "auto", out;
  std::size_t limit = 0, max_answer = 48;
};

int cmd_eval(const EvalFlags& e) {
  const auto ckpt = load_checkpoint(e.ckpt);
  const auto meta = checkpoint_meta(ckpt);
  nlohmann::json report;
  report["checkpoint"] = e.ckpt;
  report["base_sha256"] = meta.base_sha256;
  bool frozen = true;
  if (!e.reference.empty()) {
    const auto ref_meta = checkpoint_meta(load_checkpoint(e.reference, std::vector<SectionTag>{SectionTag::kBase}));
    frozen = ref_meta.base_sha256 == meta.base_sha256;
    report["reference"] = e.reference;
    report["base_frozen"] = frozen;
  }
  if (!meta.train || !ckpt.has_section(SectionTag::kAdapters)) {
    throw DataError("eval needs a pretrain or finetune checkpoint");
  }
  const auto ds = load_dataset(e.data);
  const auto params = restore_base(ckpt);
  const auto adapters = restore_adapters(ckpt);
  std::vector<CorpusRecord> test;
  for (const auto& r : ds.corpus) {
    if (r.split == Split::kTest) test.push_back(r);
  }
  test = take_first(std::move(test), e.limit);
  std::string task = e.task;
  if (task == "auto") task = meta.train->phase == Phase::kPretrain ? "regeneration" : "qa";
  EvalSummary summary;
  if (task == "regeneration") {
    summary = evaluate_regeneration(params, adapters, test, meta.train->k, meta.train->variant);
    report["rouge_l_f"] = summary.metrics.rouge_l_f;
    report["bleu"] = summary.metrics.bleu;
    report["items"] = summary.metrics.regeneration_items;
  } else if (task == "qa") {
    std::vector<QARecord> questions;
    for (const auto& q : ds.qa) {
      for (const auto& r : test) {
        if (q.context_id == r.id) {
          questions.push_back(q);
          break;
        }
      }
    }
    summary = evaluate_qa(params, adapters, test, questions, meta.train->k, meta.train->variant, e.max_answer);
    report["f1"] = summary.metrics.f1;
    report["em"] = summary.metrics.em;
    report["items"] = summary.metrics.qa_items;
  } else {
    throw ConfigError("unknown task '" + task + "' (expected auto, regeneration or qa)");
  }
  report["task"] = task;
  report["k"] = meta.train->k;
  report["variant"] = variant_name(meta.train->variant);
  report["attended_pairs"] = summary.attended_pairs;
  const std::string text = report.dump(2);
  std::cout << text << '\n';
  if (!e.out.empty()) {
    ensure_parent(e.out);
    std::ofstream out(e.out, std::ios::binary);
    out << text << '\n';
  }
  if (!frozen) {
    std::cerr << "base weights differ from the reference checkpoint\n";
    return kData;
  }
  return kOk;
}

int cmd_grid(const std::string& data, const std::string& ckpt_dir, const std::string& out_dir, ExperimentGrid grid) {
  const auto ds = load_dataset(data);
  const auto result = run_grid(grid, ds.corpus, ds.qa, ckpt_dir);
  write_grid_report(result.rows, out_dir);
  std::cout << result.rows.size() << " rows written to " << (fs::path(out_dir) / "grid.csv").string() << '\n';
  if (!result.missing.empty()) {
    for (const auto& m : result.missing) std::cerr << "missing checkpoint: " << m << '\n';
    return kMissing;
  }
  return kOk;
}

int cmd_report(const std::string& csv_path, const std::string& out_dir) {
  std::ifstream in(csv_path);
  if (!in) throw MissingArtifactError("cannot open " + csv_path);
  const auto rows = read_grid_csv(in);
  write_grid_report(rows, out_dir);
  std::cout << "report written to " << out_dir << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kvc: compress text into per-layer key/value prefixes"};
  app.require_subcommand(1);
  int code = kOk;

  try {
    const std::uint64_t seed_default = default_seed();

    auto* build = app.add_subcommand("build-data", "generate the synthetic corpus and QA pairs");
    std::string build_out;
    std::size_t build_n = 2000, pairs_per_96 = 5;
    std::uint64_t build_seed = seed_default;
    build->add_option("--out", build_out, "output directory")->required();
    build->add_option("--n", build_n, "number of texts")->check(CLI::PositiveNumber);
    build->add_option("--pairs-per-96", pairs_per_96, "QA pairs per 96 tokens")->check(CLI::PositiveNumber);
    build->add_option("--seed", build_seed, "random seed");

    auto* base = app.add_subcommand("train-base", "train the frozen decoder's base language model");
    BaseFlags base_flags;
    TrainFlags base_train;
    base_train.seed = seed_default;
    base->add_option("--data", base_flags.data, "data directory")->required();
    base->add_option("--out", base_flags.out, "output checkpoint")->required();
    base->add_option("--d-model", base_flags.d_model);
    base->add_option("--layers", base_flags.layers);
    base->add_option("--heads", base_flags.heads);
    base->add_option("--ffn", base_flags.ffn);
    base->add_option("--k-max", base_flags.k_max);
    base->add_option("--max-positions", base_flags.max_positions);
    base->add_flag("--no-qa", base_flags.no_qa, "leave question/answer examples out");
    base->add_flag("--no-repeats", base_flags.no_repeats, "leave repeated-text examples out");
    base->add_option("--extra-texts", base_flags.extra_texts, "additional generated pretraining texts");
    base->add_option("--extra-bucket", base_flags.extra_bucket, "target length of the additional texts");
    base->add_option("--extra-seed", base_flags.extra_seed, "seed of the additional texts");
    base->add_option("--loss-csv", base_flags.loss_csv);
    base->add_option("--dev-limit", base_flags.dev_limit);
    base->add_flag("--quiet", base_flags.quiet);
    add_train_flags(base, base_train);

    AdapterFlags pre_flags, ft_flags;
    TrainFlags pre_train, ft_train;
    pre_train.seed = ft_train.seed = seed_default;
    auto* pre = app.add_subcommand("pretrain", "train adapters to regenerate texts from compressed tokens");
    pre->add_option("--data", pre_flags.data)->required();
    pre->add_option("--base", pre_flags.base, "base checkpoint (default: $KVC_CHECKPOINT)");
    pre->add_option("--out", pre_flags.out)->required();
    pre->add_option("--k", pre_train.k, "compressed tokens");
    pre->add_option("--variant", pre_train.variant, "kv or embed");
    pre->add_option("--rank", pre_flags.rank, "LoRA rank");
    pre->add_option("--alpha", pre_flags.alpha, "LoRA alpha");
    pre->add_option("--loss-csv", pre_flags.loss_csv);
    pre->add_option("--dev-limit", pre_flags.dev_limit);
    pre->add_flag("--quiet", pre_flags.quiet);
    add_train_flags(pre, pre_train);

    auto* ft = app.add_subcommand("finetune", "train adapters to answer questions from compressed tokens");
    ft->add_option("--data", ft_flags.data)->required();
    ft->add_option("--init", ft_flags.init, "pretrained checkpoint")->required();
    ft->add_option("--out", ft_flags.out)->required();
    ft->add_option("--k", ft_train.k);
    ft->add_option("--variant", ft_train.variant);
    ft->add_option("--loss-csv", ft_flags.loss_csv);
    ft->add_option("--dev-limit", ft_flags.dev_limit);
    ft->add_flag("--quiet", ft_flags.quiet);
    add_train_flags(ft, ft_train);

    auto* comp = app.add_subcommand("compress", "compress a text file");
    std::string comp_in, comp_ckpt, comp_out;
    std::size_t comp_k = 16;
    std::optional<std::string> comp_variant;
    comp->add_option("--in", comp_in)->required();
    comp->add_option("--k", comp_k);
    comp->add_option("--ckpt", comp_ckpt, "trained compressor checkpoint")->required();
    comp->add_option("--out", comp_out)->required();
    comp->add_option("--variant", comp_variant);

    auto* regen = app.add_subcommand("regenerate", "regenerate text from a compressed context");
    std::string regen_ctx, regen_ckpt;
    std::size_t regen_max = 600;
    regen->add_option("--ctx", regen_ctx)->required();
    regen->add_option("--ckpt", regen_ckpt, "checkpoint with the base model (default: $KVC_CHECKPOINT)");
    regen->add_option("--max-len", regen_max);

    auto* qa = app.add_subcommand("qa", "answer a question from a compressed context or full text");
    std::string qa_ctx, qa_context, qa_mode = "instruct", qa_question, qa_ckpt;
    std::size_t qa_max = 48;
    qa->add_option("--ctx", qa_ctx, "compressed context file");
    qa->add_option("--context", qa_context, "plain-text context file (full-context answering)");
    qa->add_option("--mode", qa_mode, "zero-shot or instruct")->check(CLI::IsMember({"zero-shot", "instruct"}));
    qa->add_option("--question", qa_question)->required();
    qa->add_option("--ckpt", qa_ckpt, "checkpoint with the base model (default: $KVC_CHECKPOINT)");
    qa->add_option("--max-len", qa_max);

    auto* eval = app.add_subcommand("eval", "score a checkpoint on the test split");
    EvalFlags eval_flags;
    eval->add_option("--ckpt", eval_flags.ckpt)->required();
    eval->add_option("--data", eval_flags.data)->required();
    eval->add_option("--reference", eval_flags.reference, "checkpoint whose base weights must match");
    eval->add_option("--task", eval_flags.task)->check(CLI::IsMember({"auto", "regeneration", "qa"}));
    eval->add_option("--limit", eval_flags.limit, "test texts to use (0 = all)");
    eval->add_option("--max-answer", eval_flags.max_answer);
    eval->add_option("--out", eval_flags.out, "write the JSON report here too");

    auto* grid_cmd = app.add_subcommand("grid", "evaluate every (variant, k, bucket) cell");
    std::string grid_data, grid_ckpts, grid_out;
    ExperimentGrid grid;
    grid_cmd->add_option("--data", grid_data)->required();
    grid_cmd->add_option("--ckpt-dir", grid_ckpts)->required();
    grid_cmd->add_option("--out", grid_out)->required();
    grid_cmd->add_option("--workers", grid.workers)->check(CLI::PositiveNumber);
    grid_cmd->add_option("--limit", grid.max_texts_per_bucket, "test texts per bucket (0 = all)");
    grid_cmd->add_option("--k", grid.ks, "k values");
    grid_cmd->add_option("--max-answer", grid.max_answer_tokens);

    auto* report = app.add_subcommand("report", "render SVG charts from grid.csv");
    std::string report_csv, report_out;
    report->add_option("--csv", report_csv)->required();
    report->add_option("--out", report_out)->required();

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int rc = app.exit(e);
      return rc == 0 ? kOk : kUsage;
    }

    if (*build) code = cmd_build_data(build_out, build_n, build_seed, pairs_per_96);
    else if (*base) code = cmd_train_base(base_flags, base_train);
    else if (*pre) code = cmd_train_adapters(Phase::kPretrain, pre_flags, pre_train);
    else if (*ft) code = cmd_train_adapters(Phase::kFinetune, ft_flags, ft_train);
    else if (*comp) code = cmd_compress(comp_in, comp_k, comp_ckpt, comp_out, comp_variant);
    else if (*regen) code = cmd_regenerate(regen_ctx, regen_ckpt, regen_max);
    else if (*qa) code = cmd_qa(qa_ctx, qa_context, qa_mode, qa_question, qa_ckpt, qa_max);
    else if (*eval) code = cmd_eval(eval_flags);
    else if (*grid_cmd) code = cmd_grid(grid_data, grid_ckpts, grid_out, grid);
    else if (*report) code = cmd_report(report_csv, report_out);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const MissingArtifactError& e) {
    std::cerr << "missing artifact: " << e.what() << '\n';
    return kMissing;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kData;
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kUsage;
  } catch (const RangeError& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kUsage;
  } catch (const ContractError& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kUsage;
  } catch (const CapacityError& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return code;
}
