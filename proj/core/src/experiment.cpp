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

#include "kvc/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "kvc/checkpoint.hpp"
#include "kvc/errors.hpp"
#include "kvc/svg.hpp"
#include "kvc/tokenizer.hpp"

namespace kvc {

namespace {

std::vector<CorpusRecord> test_records(std::span<const CorpusRecord> corpus, std::size_t bucket, std::size_t limit) {
  std::vector<CorpusRecord> out;
  for (const auto& r : corpus) {
    if (r.split != Split::kTest || r.bucket != bucket) continue;
    out.push_back(r);
    if (limit != 0 && out.size() == limit) break;
  }
  return out;
}

std::vector<QARecord> questions_for(std::span<const CorpusRecord> records, std::span<const QARecord> qa) {
  std::vector<QARecord> out;
  for (const auto& r : records) {
    for (const auto& q : qa) {
      if (q.context_id == r.id) out.push_back(q);
    }
  }
  return out;
}

std::unordered_map<std::string, const CorpusRecord*> index_by_id(std::span<const CorpusRecord> records) {
  std::unordered_map<std::string, const CorpusRecord*> out;
  for (const auto& r : records) out[r.id] = &r;
  return out;
}

const CorpusRecord& context_of(const std::unordered_map<std::string, const CorpusRecord*>& index, const QARecord& q) {
  auto it = index.find(q.context_id);
  if (it == index.end()) throw DataError("question " + std::to_string(q.id) + " refers to unknown context " + q.context_id);
  return *it->second;
}

EvalSummary finish(MetricReport report, double pairs, std::size_t items) {
  EvalSummary s;
  s.metrics = report.averaged();
  s.attended_pairs = items ? pairs / static_cast<double>(items) : 0.0;
  return s;
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

struct Cell {
  std::string task;
  std::string system;
  PrefixVariant variant = PrefixVariant::kKv;
  std::size_t k = 0;
  std::size_t bucket = 0;
  std::string checkpoint;
};

}  // namespace

EvalSummary evaluate_regeneration(const ModelParams<float>& params, const AdapterParams<float>& adapters,
                                  std::span<const CorpusRecord> records, std::size_t k, PrefixVariant variant) {
  MetricReport report;
  double pairs = 0.0;
  for (const auto& r : records) {
    const auto tokens = tokenize(r.text);
    const auto ctx = compress(params, adapters, std::span<const TokenId>(tokens), k, variant);
    // KV decoding starts at position l + k; leave room for the seed token.
    const std::size_t used = tokens.size() + k + 1;
    if (used >= params.config.max_positions) throw CapacityError("text too long to regenerate: " + r.id);
    const auto max_len = std::min(tokens.size() + 16, params.config.max_positions - used);
    const auto out = regenerate(params, ctx, max_len);
    report.add_regeneration(rouge_l_f(out.tokens, tokens), bleu(out.tokens, tokens));
    pairs += static_cast<double>(out.stats.pairs);
  }
  return finish(report, pairs, records.size());
}

EvalSummary evaluate_qa(const ModelParams<float>& params, const AdapterParams<float>& adapters,
                        std::span<const CorpusRecord> records, std::span<const QARecord> qa, std::size_t k,
                        PrefixVariant variant, std::size_t max_answer_tokens) {
  const auto index = index_by_id(records);
  MetricReport report;
  double pairs = 0.0;
  std::string cached_id;
  std::optional<CompressedContext<float>> ctx;
  for (const auto& q : qa) {
    const auto& record = context_of(index, q);
    if (!ctx || cached_id != record.id) {
      ctx = compress(params, adapters, std::span<const TokenId>(tokenize(record.text)), k, variant);
      cached_id = record.id;
    }
    const auto question = qa_prompt(q.question);
    const auto out = answer(params, *ctx, std::span<const TokenId>(question), max_answer_tokens);
    report.add_qa(qa_f1_em(render_text(out.tokens), q.answer));
    pairs += static_cast<double>(out.stats.pairs);
  }
  return finish(report, pairs, qa.size());
}

EvalSummary evaluate_full_context_qa(const ModelParams<float>& params, std::span<const CorpusRecord> records,
                                     std::span<const QARecord> qa, bool instruct, std::size_t max_answer_tokens) {
  const auto index = index_by_id(records);
  MetricReport report;
  double pairs = 0.0;
  for (const auto& q : qa) {
    const auto& record = context_of(index, q);
    const auto out = answer_full_context(params, record.text, q.question, instruct, max_answer_tokens);
    report.add_qa(qa_f1_em(render_text(out.tokens), q.answer));
    pairs += static_cast<double>(out.stats.pairs);
  }
  return finish(report, pairs, qa.size());
}

std::string base_checkpoint_name() { return "base.kvc"; }

std::string pretrain_checkpoint_name(PrefixVariant variant, std::size_t k) {
  return "pretrain-" + std::string(variant_name(variant)) + "-k" + std::to_string(k) + ".kvc";
}

std::string finetune_checkpoint_name(PrefixVariant variant, std::size_t k) {
  return "finetune-" + std::string(variant_name(variant)) + "-k" + std::to_string(k) + ".kvc";
}

GridResult run_grid(const ExperimentGrid& grid, std::span<const CorpusRecord> corpus, std::span<const QARecord> qa,
                    const std::string& checkpoint_dir) {
  namespace fs = std::filesystem;
  std::vector<Cell> cells;
  for (const auto variant : grid.variants) {
    for (const auto k : grid.ks) {
      for (const auto bucket : grid.buckets) {
        cells.push_back({"regeneration", std::string(variant_name(variant)), variant, k, bucket,
                         (fs::path(checkpoint_dir) / pretrain_checkpoint_name(variant, k)).string()});
      }
    }
  }
  for (const auto variant : grid.variants) {
    for (const auto k : grid.ks) {
      for (const auto bucket : grid.buckets) {
        cells.push_back({"qa", std::string(variant_name(variant)), variant, k, bucket,
                         (fs::path(checkpoint_dir) / finetune_checkpoint_name(variant, k)).string()});
      }
    }
  }
  if (grid.gold_standards) {
    for (const auto bucket : grid.buckets) {
      for (const char* system : {"zero-shot", "instruct"}) {
        cells.push_back({"qa", system, PrefixVariant::kKv, 0, bucket,
                         (fs::path(checkpoint_dir) / base_checkpoint_name()).string()});
      }
    }
  }

  GridResult result;
  std::vector<Cell> runnable;
  for (const auto& c : cells) {
    if (fs::exists(c.checkpoint)) {
      runnable.push_back(c);
    } else if (std::find(result.missing.begin(), result.missing.end(), c.checkpoint) == result.missing.end()) {
      result.missing.push_back(c.checkpoint);
    }
  }

  std::vector<std::optional<GridRow>> rows(runnable.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= runnable.size()) return;
      try {
        const Cell& c = runnable[i];
        const auto records = test_records(corpus, c.bucket, grid.max_texts_per_bucket);
        if (records.empty()) continue;
        const auto ckpt = load_checkpoint(c.checkpoint);
        const auto params = restore_base(ckpt);
        GridRow row{c.task, c.system, c.k, c.bucket, 1.0, 0, {}};
        if (c.k == 0) {
          const auto questions = questions_for(records, qa);
          row.summary = evaluate_full_context_qa(params, records, questions, c.system == "instruct",
                                                 grid.max_answer_tokens);
          row.items = questions.size();
        } else {
          row.ratio = compression_ratio(c.bucket, c.k);
          const auto adapters = restore_adapters(ckpt);
          if (c.task == "regeneration") {
            row.summary = evaluate_regeneration(params, adapters, records, c.k, c.variant);
            row.items = records.size();
          } else {
            const auto questions = questions_for(records, qa);
            row.summary = evaluate_qa(params, adapters, records, questions, c.k, c.variant, grid.max_answer_tokens);
            row.items = questions.size();
          }
        }
        rows[i] = std::move(row);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = runnable.size();
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(grid.workers, runnable.size()));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_workers; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  for (auto& r : rows) {
    if (r) result.rows.push_back(std::move(*r));
  }
  return result;
}

void write_grid_csv(const GridResult& result, std::ostream& out) {
  out << "task,system,k,bucket,ratio,items,rouge_l_f,bleu,f1,em,attended_pairs\n";
  for (const auto& row : result.rows) {
    const auto& m = row.summary.metrics;
    const bool regen = row.task == "regeneration";
    out << row.task << ',' << row.system << ',' << row.k << ',' << row.bucket << ',' << fixed(row.ratio) << ','
        << row.items << ',' << (regen ? fixed(m.rouge_l_f) : "") << ',' << (regen ? fixed(m.bleu) : "") << ','
        << (regen ? "" : fixed(m.f1)) << ',' << (regen ? "" : fixed(m.em)) << ','
        << fixed1(row.summary.attended_pairs) << '\n';
  }
}

std::vector<GridRow> read_grid_csv(std::istream& in) {
  std::vector<GridRow> rows;
  std::string line;
  if (!std::getline(in, line) || line.rfind("task,system,k,bucket", 0) != 0) {
    throw DataError("grid CSV: missing or unexpected header");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 11) throw DataError("grid CSV line " + std::to_string(line_no) + ": expected 11 fields");
    try {
      GridRow row;
      row.task = f[0];
      row.system = f[1];
      row.k = std::stoul(f[2]);
      row.bucket = std::stoul(f[3]);
      row.ratio = std::stod(f[4]);
      row.items = std::stoul(f[5]);
      auto& m = row.summary.metrics;
      if (row.task == "regeneration") {
        m.rouge_l_f = std::stod(f[6]);
        m.bleu = std::stod(f[7]);
        m.regeneration_items = row.items;
      } else {
        m.f1 = std::stod(f[8]);
        m.em = std::stod(f[9]);
        m.qa_items = row.items;
      }
      row.summary.attended_pairs = std::stod(f[10]);
      rows.push_back(std::move(row));
    } catch (const std::logic_error&) {
      throw DataError("grid CSV line " + std::to_string(line_no) + ": malformed number");
    }
  }
  return rows;
}

void write_grid_report(const std::vector<GridRow>& rows, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  {
    std::ofstream csv(fs::path(out_dir) / "grid.csv", std::ios::binary);
    write_grid_csv(GridResult{rows, {}}, csv);
    if (!csv) throw DataError("could not write grid.csv in " + out_dir);
  }
  struct Panel {
    const char* file;
    const char* task;
    const char* label;
    double (*value)(const MetricReport&);
  };
  const Panel panels[] = {
      {"regeneration_rouge_l_f.svg", "regeneration", "ROUGE-L-F", [](const MetricReport& m) { return m.rouge_l_f; }},
      {"regeneration_bleu.svg", "regeneration", "BLEU", [](const MetricReport& m) { return m.bleu; }},
      {"qa_f1.svg", "qa", "F1", [](const MetricReport& m) { return m.f1; }},
      {"qa_em.svg", "qa", "EM", [](const MetricReport& m) { return m.em; }},
  };
  for (const auto& panel : panels) {
    SvgChart chart;
    chart.title = std::string(panel.task) + ": " + panel.label + " vs compression ratio";
    chart.x_label = "compression ratio (tokens per compressed token)";
    chart.y_label = panel.label;
    chart.log_x = true;
    std::map<std::string, SvgSeries> series;
    for (const auto& row : rows) {
      if (row.task != panel.task) continue;
      const std::string label = row.k == 0 ? row.system : row.system + " k=" + std::to_string(row.k);
      auto& s = series[label];
      s.label = label;
      s.points.emplace_back(row.ratio, panel.value(row.summary.metrics));
    }
    for (auto& [label, s] : series) {
      std::sort(s.points.begin(), s.points.end());
      chart.series.push_back(std::move(s));
    }
    std::ofstream svg(fs::path(out_dir) / panel.file, std::ios::binary);
    svg << render_line_chart(chart);
    if (!svg) throw DataError(std::string("could not write ") + panel.file);
  }
}

}  // namespace kvc
