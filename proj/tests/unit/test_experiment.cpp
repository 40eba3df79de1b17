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


#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "kvc/checkpoint.hpp"
#include "kvc/experiment.hpp"
#include "kvc/svg.hpp"

namespace kvc {
namespace {

namespace fs = std::filesystem;

class GridFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(fs::temp_directory_path() / "kvc_grid_test");
    fs::remove_all(*dir_);
    fs::create_directories(*dir_);
    const auto config = ModelConfig::byte_level(16, 1, 2, 32, 16, 1024);
    const auto base = ModelParams<float>::init(config, 4);
    save_checkpoint((*dir_ / base_checkpoint_name()).string(), make_checkpoint(base));
    for (const auto variant : {PrefixVariant::kKv, PrefixVariant::kEmbed}) {
      for (const std::size_t k : {1u, 4u, 16u}) {
        const auto adapters = init_adapters<float>(config, AdapterConfig{4, 8.0, false}, k);
        save_checkpoint((*dir_ / pretrain_checkpoint_name(variant, k)).string(), make_checkpoint(base, &adapters));
        save_checkpoint((*dir_ / finetune_checkpoint_name(variant, k)).string(), make_checkpoint(base, &adapters));
      }
    }
    corpus_ = new std::vector<CorpusRecord>(build_synthetic_corpus(60, kDefaultBuckets, 2));
    qa_ = new std::vector<QARecord>(build_synthetic_qa(*corpus_, 5, 2));
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete dir_;
    delete corpus_;
    delete qa_;
  }

  static ExperimentGrid small_grid() {
    ExperimentGrid grid;
    grid.max_texts_per_bucket = 1;
    grid.max_answer_tokens = 6;
    grid.workers = 2;
    return grid;
  }

  static fs::path* dir_;
  static std::vector<CorpusRecord>* corpus_;
  static std::vector<QARecord>* qa_;
};

fs::path* GridFixture::dir_ = nullptr;
std::vector<CorpusRecord>* GridFixture::corpus_ = nullptr;
std::vector<QARecord>* GridFixture::qa_ = nullptr;

TEST_F(GridFixture, RowCountsAndAccounting) {
  const auto result = run_grid(small_grid(), *corpus_, *qa_, dir_->string());
  EXPECT_TRUE(result.missing.empty());
  std::size_t regen = 0, qa = 0, gold = 0;
  for (const auto& row : result.rows) {
    if (row.task == "regeneration") ++regen;
    if (row.task == "qa" && row.k > 0) ++qa;
    if (row.k == 0) ++gold;
    EXPECT_EQ(row.ratio, row.k == 0 ? 1.0 : double(row.bucket) / double(row.k));
    EXPECT_GE(row.items, 1u);
  }
  EXPECT_EQ(regen, 30u);
  EXPECT_EQ(qa, 30u);
  EXPECT_EQ(gold, 10u);

  // Compressed QA attends to fewer pairs than the zero-shot full-context row of the same bucket.
  for (const auto& row : result.rows) {
    if (row.task != "qa" || row.k == 0) continue;
    for (const auto& ref : result.rows) {
      if (ref.system == "zero-shot" && ref.bucket == row.bucket) {
        EXPECT_LT(row.summary.attended_pairs, ref.summary.attended_pairs) << row.system << " k=" << row.k;
      }
    }
  }
}

TEST_F(GridFixture, RerunGivesIdenticalCsvBytes) {
  auto grid = small_grid();
  grid.buckets = {96, 192};
  std::ostringstream a, b;
  write_grid_csv(run_grid(grid, *corpus_, *qa_, dir_->string()), a);
  grid.workers = 1;
  write_grid_csv(run_grid(grid, *corpus_, *qa_, dir_->string()), b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().rfind("task,system,k,bucket,ratio,items,rouge_l_f,bleu,f1,em,attended_pairs\n", 0), 0u);

  std::istringstream in(a.str());
  const auto rows = read_grid_csv(in);
  GridResult again;
  again.rows = rows;
  std::ostringstream c;
  write_grid_csv(again, c);
  EXPECT_EQ(c.str(), a.str());
}

TEST_F(GridFixture, MissingCheckpointsAreListed) {
  const auto sparse = fs::temp_directory_path() / "kvc_grid_sparse";
  fs::remove_all(sparse);
  fs::create_directories(sparse);
  fs::copy_file(*dir_ / base_checkpoint_name(), sparse / base_checkpoint_name());
  fs::copy_file(*dir_ / pretrain_checkpoint_name(PrefixVariant::kKv, 4), sparse / pretrain_checkpoint_name(PrefixVariant::kKv, 4));
  auto grid = small_grid();
  grid.buckets = {96};
  const auto result = run_grid(grid, *corpus_, *qa_, sparse.string());
  EXPECT_EQ(result.missing.size(), 11u);
  std::size_t regen = 0;
  for (const auto& row : result.rows) regen += row.task == "regeneration";
  EXPECT_EQ(regen, 1u);
  fs::remove_all(sparse);
}

TEST_F(GridFixture, ReportWritesCsvAndCharts) {
  auto grid = small_grid();
  grid.buckets = {96, 480};
  const auto result = run_grid(grid, *corpus_, *qa_, dir_->string());
  const auto out = fs::temp_directory_path() / "kvc_grid_report";
  fs::remove_all(out);
  write_grid_report(result.rows, out.string());
  for (const char* name : {"grid.csv", "regeneration_rouge_l_f.svg", "regeneration_bleu.svg", "qa_f1.svg", "qa_em.svg"}) {
    ASSERT_TRUE(fs::exists(out / name)) << name;
  }
  std::ifstream svg(out / "qa_f1.svg");
  const std::string text((std::istreambuf_iterator<char>(svg)), std::istreambuf_iterator<char>());
  EXPECT_EQ(text.rfind("<svg", 0), 0u);
  EXPECT_NE(text.find("</svg>"), std::string::npos);
  fs::remove_all(out);
}

TEST(Svg, RendersSeriesAndEscapesText) {
  SvgChart chart;
  chart.title = "ratio <vs> score & more";
  chart.x_label = "ratio";
  chart.y_label = "score";
  chart.log_x = true;
  chart.series.push_back({"kv k=1", {{96, 0.5}, {480, 0.2}}});
  const auto svg = render_line_chart(chart);
  EXPECT_NE(svg.find("&lt;vs&gt;"), std::string::npos);
  EXPECT_NE(svg.find("&amp;"), std::string::npos);
  EXPECT_NE(svg.find("<polyline"), std::string::npos);
}

TEST(Checkpoints, NamingScheme) {
  EXPECT_EQ(base_checkpoint_name(), "base.kvc");
  EXPECT_EQ(pretrain_checkpoint_name(PrefixVariant::kKv, 16), "pretrain-kv-k16.kvc");
  EXPECT_EQ(finetune_checkpoint_name(PrefixVariant::kEmbed, 1), "finetune-embed-k1.kvc");
}

}  // namespace
}  // namespace kvc
