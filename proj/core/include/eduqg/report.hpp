#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "eduqg/checkpoint.hpp"
#include "eduqg/generation.hpp"
#include "eduqg/metrics.hpp"

namespace eduqg {

enum class ReportStyle { kTable1, kTable2, kTable4 };

std::string to_string(ReportStyle s);
ReportStyle report_style_from_string(const std::string& s);

struct ReportColumn {
  std::string metric;  // key understood by MetricReport::corpus_value
  std::string header;  // e.g. "BLEU-1"
  bool lower_is_better = false;
  int decimals = 2;
};

/// TABLE1: Perplexity, Diversity. TABLE2/TABLE4: BLEU-1..4, F1,
/// Perplexity, Diversity.
std::vector<ReportColumn> report_columns(ReportStyle style);

struct RenderOptions {
  std::function<std::string(const std::string&)> display_name;  // model_id -> row label
  std::string title;
};

struct RenderedReport {
  std::string text;  // markdown table
  std::string csv;
};

/// One row per report, in the given order. With two or more rows the best
/// value of each column is **bold** and the second best *italic* (ties share
/// the mark). "(*)" follows a value iff a stored SignificanceResult for that
/// row and metric is significant. Arrows mark the preferred direction.
RenderedReport render_report(const std::vector<MetricReport>& reports,
                             const std::vector<SignificanceResult>& significance, ReportStyle style,
                             const RenderOptions& options = {});

/// `k` contexts chosen by seed (kept in their original order) with one
/// question column per model. questions[m][i] answers contexts[i].
std::string examples_table(const std::vector<std::string>& model_names,
                           const std::vector<std::vector<std::string>>& questions,
                           const std::vector<std::string>& contexts, std::size_t k, std::uint64_t seed);

/// Generates with each checkpoint on the selected contexts only.
std::string examples_table(const std::vector<std::pair<std::string, const Checkpoint*>>& models,
                           const std::vector<std::string>& contexts, std::size_t k, std::uint64_t seed,
                           const DecodeSpec& decode, const QGFormat& format = {});

/// Indices examples_table shows.
std::vector<std::size_t> example_indices(std::size_t n, std::size_t k, std::uint64_t seed);

}  // namespace eduqg
