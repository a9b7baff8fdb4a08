#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "eduqg/checkpoint.hpp"
#include "eduqg/datasets.hpp"
#include "eduqg/model.hpp"
#include "eduqg/rng.hpp"
#include "eduqg/synthetic.hpp"
#include "eduqg/tokenizer.hpp"

namespace eduqg::testing {

inline std::filesystem::path data_dir() { return EDUQG_TEST_DATA; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("eduqg-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline const std::vector<std::string>& science_sentences() {
  static const std::vector<std::string> s = {
      "Mitochondria produce energy for the cell.",
      "What do mitochondria produce?",
      "Chloroplasts absorb light energy in the leaves of plants.",
      "Which structures absorb light energy?",
      "Enzymes break down starch in the small intestine.",
      "What breaks down starch?",
      "Magnets produce magnetic fields.",
      "What do magnets produce?",
      "Acids donate hydrogen ions in aqueous solutions.",
      "Which substances donate hydrogen ions?",
      "Lenses focus visible light.",
      "What do lenses focus?",
      "Red blood cells carry oxygen in the bloodstream.",
      "What carries oxygen?",
      "Catalysts speed up chemical reactions.",
      "What speeds up chemical reactions?",
      "Maria Okafor founded the Royal Academy in Lisbon in 1820.",
      "Who founded the Royal Academy?",
  };
  return s;
}

inline std::shared_ptr<const Tokenizer> science_tokenizer(std::size_t sentinels = 32) {
  VocabOptions opts;
  opts.num_sentinels = sentinels;
  opts.min_count = 1;
  std::vector<std::string> texts = science_sentences();
  texts.push_back("generate question:");
  return std::make_shared<const Tokenizer>(build_vocabulary(texts, opts));
}

/// Small model for fast numeric tests.
inline ModelConfig micro_config(std::size_t vocab) {
  ModelConfig c = ModelConfig::toy(vocab);
  c.d_model = 16;
  c.num_layers = 1;
  c.num_heads = 2;
  c.feedforward_dim = 32;
  c.dropout = 0.0;
  c.relative_buckets = 8;
  c.relative_max_distance = 16;
  return c;
}

inline std::vector<QGExample> science_examples() {
  std::vector<QGExample> out;
  const auto& s = science_sentences();
  for (std::size_t i = 0; i + 1 < s.size(); i += 2) {
    QGExample ex;
    ex.id = "ex-" + std::to_string(i / 2);
    ex.context = s[i];
    ex.question = s[i + 1];
    ex.source = Source::kSciq;
    out.push_back(ex);
  }
  return out;
}

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t passed = 0;
  double worst = 0.0;

  double pass_fraction() const { return checked == 0 ? 0.0 : static_cast<double>(passed) / static_cast<double>(checked); }
};

/// Compares analytic gradients of the seq2seq loss with central differences
/// on `per_tensor` random coordinates of every parameter tensor. Dropout
/// must be off in `config`.
inline GradCheckResult gradient_check(const ModelConfig& config, ParameterSet params, std::span<const TokenId> input,
                                      std::span<const TokenId> target, std::size_t per_tensor, std::uint64_t seed,
                                      double tolerance = 1e-3, double step = 1e-5) {
  const TokenId pad = 0;
  auto loss_at = [&](const ParameterSet& p) {
    Graph g(false);
    const Var loss = build_seq2seq_loss(g, config, p, input, target, pad, 1.0, nullptr);
    return g.value(loss)(0, 0);
  };
  Graph g(true);
  const Var loss = build_seq2seq_loss(g, config, params, input, target, pad, 1.0, nullptr);
  g.backward(loss);
  std::vector<Matrix> grads(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) grads[i] = Matrix::Zero(params.at(i).rows(), params.at(i).cols());
  g.for_each_parameter_grad([&](std::size_t slot, const Matrix& grad) { grads[slot] += grad; });

  Rng rng(seed);
  GradCheckResult result;
  for (std::size_t slot = 0; slot < params.size(); ++slot) {
    Matrix& m = params.at(slot);
    for (std::size_t k = 0; k < per_tensor; ++k) {
      const auto r = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(m.rows())));
      const auto c = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(m.cols())));
      const double saved = m(r, c);
      m(r, c) = saved + step;
      const double up = loss_at(params);
      m(r, c) = saved - step;
      const double down = loss_at(params);
      m(r, c) = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = grads[slot](r, c);
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      const double rel = std::abs(numeric - analytic) / denom;
      ++result.checked;
      if (rel < tolerance) ++result.passed;
      result.worst = std::max(result.worst, rel);
    }
  }
  return result;
}

/// Cells of a rendered markdown table, header row first, separator dropped.
inline std::vector<std::vector<std::string>> parse_markdown_table(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.size() < 2 || line.front() != '|') continue;
    if (line.find("---") != std::string::npos) continue;
    std::vector<std::string> cells;
    std::size_t start = 1;
    while (start < line.size()) {
      const auto bar = line.find('|', start);
      if (bar == std::string::npos) break;
      std::string cell = line.substr(start, bar - start);
      const auto a = cell.find_first_not_of(' ');
      const auto b = cell.find_last_not_of(' ');
      cells.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
      start = bar + 1;
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

/// Writes a small synthetic corpus family under root/data and returns an
/// experiment config over it with micro-sized models; run_dir is root/run.
inline Json tiny_experiment(const std::filesystem::path& root, std::uint64_t seed = 13) {
  SyntheticOptions opts;
  opts.seed = seed;
  opts.abstracts = 400;
  opts.squad_train = 60;
  opts.squad_dev = 20;
  opts.sciq_train = 40;
  opts.sciq_validation = 10;
  opts.sciq_test = 20;
  opts.reference_sentences = 500;
  const auto data = root / "data";
  write_synthetic(generate_synthetic(opts), data);
  const auto path = [&](const std::string& rel) { return (data / rel).string(); };
  return Json{
      {"run_dir", (root / "run").string()},
      {"seed", seed},
      {"models", {"LEAF", "EDUQG_SMALL", "EDUQG_LARGE", "LEAF_PLUS", "EDUQG_PLUS"}},
      {"base",
       {{"preset", "toy"},
        {"vocab", {{"max_pieces", 2000}, {"min_count", 2}, {"num_sentinels", 16}}},
        {"model",
         {{"d_model", 16},
          {"num_layers", 1},
          {"num_heads", 2},
          {"feedforward_dim", 32},
          {"dropout", 0.0},
          {"relative_buckets", 8},
          {"relative_max_distance", 16}}}}},
      {"datasets",
       {{"s2orc", path("s2orc/abstracts.jsonl")},
        {"s2orc_fields", {"Biology", "Chemistry", "Physics"}},
        {"squad_train", path("squad/train-v1.1.json")},
        {"squad_validation", path("squad/dev-v1.1.json")},
        {"sciq_train", path("sciq/train.json")},
        {"sciq_validation", path("sciq/valid.json")},
        {"sciq_test", path("sciq/test.json")}}},
      {"pretrain_sizes", {{"small", 50}, {"large", 200}}},
      {"train",
       {{"pretrain", {{"steps", 4}, {"batch_size", 4}, {"optimizer", {{"lr", 0.002}}}}},
        {"finetune_squad", {{"epochs", 1}, {"batch_size", 8}, {"optimizer", {{"lr", 0.002}}}}},
        {"finetune_sciq", {{"epochs", 1}, {"batch_size", 8}, {"optimizer", {{"lr", 0.002}}}}}}},
      {"decode", {{"strategy", "BEAM"}, {"beam_width", 2}, {"max_len", 12}, {"length_penalty", 1.0}}},
      {"scorer", {{"type", "kneser_ney"}, {"name", "kn3-tiny"}, {"corpus", {path("reference/reference.txt")}}}},
      {"evaluation", {{"distinct2", true}}}};
}

}  // namespace eduqg::testing
