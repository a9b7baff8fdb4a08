#include "eduqg/report.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "eduqg/datasets.hpp"
#include "eduqg/error.hpp"

namespace eduqg {

std::string to_string(ReportStyle s) {
  switch (s) {
    case ReportStyle::kTable1:
      return "table1";
    case ReportStyle::kTable2:
      return "table2";
    case ReportStyle::kTable4:
      return "table4";
  }
  return "table2";
}

ReportStyle report_style_from_string(const std::string& s) {
  if (s == "table1" || s == "TABLE1") return ReportStyle::kTable1;
  if (s == "table2" || s == "TABLE2") return ReportStyle::kTable2;
  if (s == "table4" || s == "TABLE4") return ReportStyle::kTable4;
  throw ConfigError("unknown report style '" + s + "' (table1, table2, table4)");
}

std::vector<ReportColumn> report_columns(ReportStyle style) {
  std::vector<ReportColumn> cols;
  if (style != ReportStyle::kTable1) {
    for (int n = 1; n <= 4; ++n) cols.push_back({fmt::format("bleu{}", n), fmt::format("BLEU-{}", n), false, 2});
    cols.push_back({"f1", "F1", false, 2});
  }
  cols.push_back({"perplexity", "Perplexity", true, 2});
  cols.push_back({"diversity", "Diversity", false, 3});
  return cols;
}

namespace {

// Rank of each row in one column: 0 best, 1 second, 2 otherwise.
std::vector<int> ranks(const std::vector<double>& values, bool lower_is_better) {
  std::vector<int> out(values.size(), 2);
  if (values.size() < 2) return out;
  std::set<double> distinct(values.begin(), values.end());
  std::vector<double> order(distinct.begin(), distinct.end());
  if (!lower_is_better) std::reverse(order.begin(), order.end());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == order[0]) out[i] = 0;
    else if (order.size() > 1 && values[i] == order[1]) out[i] = 1;
  }
  return out;
}

std::string table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 3);
  const auto display_width = [](const std::string& s) {
    std::size_t w = 0;
    for (const unsigned char c : s) {
      if ((c & 0xC0) != 0x80) ++w;
    }
    return w;
  };
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = std::max(width[c], display_width(header[c]));
    for (const auto& r : rows) width[c] = std::max(width[c], display_width(r[c]));
  }
  const auto line = [&](const std::vector<std::string>& cells) {
    std::string out = "|";
    for (std::size_t c = 0; c < cells.size(); ++c) {
      out += " " + cells[c] + std::string(width[c] - display_width(cells[c]), ' ') + " |";
    }
    return out + "\n";
  };
  std::string out = line(header);
  out += "|";
  for (std::size_t c = 0; c < header.size(); ++c) out += std::string(width[c] + 2, '-') + "|";
  out += "\n";
  for (const auto& r : rows) out += line(r);
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

RenderedReport render_report(const std::vector<MetricReport>& reports,
                             const std::vector<SignificanceResult>& significance, ReportStyle style,
                             const RenderOptions& options) {
  if (reports.empty()) throw InvalidArgument("render_report: no reports");
  const auto cols = report_columns(style);
  const auto name = [&](const std::string& id) { return options.display_name ? options.display_name(id) : id; };
  const auto significant = [&](const std::string& id, const std::string& metric) {
    return std::any_of(significance.begin(), significance.end(), [&](const SignificanceResult& s) {
      return s.candidate_id == id && s.metric == metric && s.significant;
    });
  };

  std::vector<std::vector<int>> col_ranks;
  for (const auto& c : cols) {
    std::vector<double> values;
    // Ranked on the printed precision so equal-looking cells share a mark.
    const double unit = std::pow(10.0, c.decimals);
    for (const auto& r : reports) values.push_back(std::round(r.corpus_value(c.metric) * unit) / unit);
    col_ranks.push_back(ranks(values, c.lower_is_better));
  }

  std::vector<std::string> header = {"Model"};
  for (const auto& c : cols) header.push_back(c.header + (c.lower_is_better ? " ↓" : " ↑"));
  std::vector<std::vector<std::string>> rows;
  std::string csv = "model";
  for (const auto& c : cols) csv += "," + c.metric;
  csv += ",significant\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    std::vector<std::string> row = {name(r.model_id)};
    std::string sig_list;
    csv += csv_field(name(r.model_id));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const double v = r.corpus_value(cols[c].metric);
      std::string cell = fmt::format("{:.{}f}", v, cols[c].decimals);
      if (col_ranks[c][i] == 0) cell = "**" + cell + "**";
      else if (col_ranks[c][i] == 1) cell = "*" + cell + "*";
      if (significant(r.model_id, cols[c].metric)) {
        cell += " (*)";
        sig_list += (sig_list.empty() ? "" : ";") + cols[c].metric;
      }
      row.push_back(cell);
      csv += fmt::format(",{:.10g}", v);
    }
    csv += "," + sig_list + "\n";
    rows.push_back(std::move(row));
  }

  std::string text;
  if (!options.title.empty()) text += options.title + "\n\n";
  text += table(header, rows);
  std::set<std::string> scorers;
  for (const auto& r : reports) {
    if (!r.scorer_id.empty()) scorers.insert(r.scorer_id);
  }
  text += "\n";
  if (style != ReportStyle::kTable1) {
    text += fmt::format("BLEU tokenization: {}. Corpus-level BLEU; F1 is SQuAD-style token F1.\n",
                        reports.front().bleu_tokenizer);
    text += fmt::format("(*) one-tailed paired t-test against the designated baseline, p < {}.\n",
                        kSignificanceLevel);
  }
  for (const auto& s : scorers) text += "Perplexity scorer: " + s + "\n";
  return {text, csv};
}

std::vector<std::size_t> example_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k > n) throw InvalidArgument(fmt::format("examples: k = {} exceeds {} contexts", k, n));
  return sample_indices(n, k, seed);
}

std::string examples_table(const std::vector<std::string>& model_names,
                           const std::vector<std::vector<std::string>>& questions,
                           const std::vector<std::string>& contexts, std::size_t k, std::uint64_t seed) {
  if (model_names.size() != questions.size()) throw InvalidArgument("examples: one question list per model");
  for (const auto& q : questions) {
    if (q.size() != contexts.size()) throw InvalidArgument("examples: question list does not match contexts");
  }
  std::vector<std::string> header = {"Context"};
  header.insert(header.end(), model_names.begin(), model_names.end());
  std::vector<std::vector<std::string>> rows;
  for (const auto i : example_indices(contexts.size(), k, seed)) {
    std::vector<std::string> row = {contexts[i]};
    for (const auto& q : questions) row.push_back(q[i]);
    for (auto& cell : row) std::replace(cell.begin(), cell.end(), '|', '/');
    rows.push_back(std::move(row));
  }
  return table(header, rows);
}

std::string examples_table(const std::vector<std::pair<std::string, const Checkpoint*>>& models,
                           const std::vector<std::string>& contexts, std::size_t k, std::uint64_t seed,
                           const DecodeSpec& decode, const QGFormat& format) {
  const auto picked = example_indices(contexts.size(), k, seed);
  std::vector<std::string> chosen;
  for (const auto i : picked) chosen.push_back(contexts[i]);
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> questions;
  for (const auto& [name, ckpt] : models) {
    names.push_back(name);
    questions.push_back(chosen.empty() ? std::vector<std::string>{} : generate(*ckpt, chosen, decode, format));
  }
  return examples_table(names, questions, chosen, chosen.size(), 0);
}

}  // namespace eduqg
