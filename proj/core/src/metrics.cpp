#include "eduqg/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "eduqg/error.hpp"

namespace eduqg {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const std::vector<std::string>& toks, int n) {
  NgramCounts out;
  const auto un = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + un <= toks.size(); ++i) {
    ++out[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                   toks.begin() + static_cast<std::ptrdiff_t>(i + un))];
  }
  return out;
}

// Clipped matches and hypothesis n-gram total for one pair.
std::pair<std::size_t, std::size_t> clipped(const std::vector<std::string>& hyp, const std::vector<std::string>& ref,
                                            int n) {
  const auto h = ngrams(hyp, n);
  const auto r = ngrams(ref, n);
  std::size_t match = 0;
  std::size_t total = 0;
  for (const auto& [gram, count] : h) {
    total += count;
    const auto it = r.find(gram);
    if (it != r.end()) match += std::min(count, it->second);
  }
  return {match, total};
}

double brevity(std::size_t c, std::size_t r) {
  if (c == 0) return 0.0;
  if (c >= r) return 1.0;
  return std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
}

}  // namespace

BleuResult bleu_n(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                  int max_n) {
  if (hypotheses.size() != references.size()) {
    throw InvalidArgument(fmt::format("bleu: {} hypotheses for {} references", hypotheses.size(), references.size()));
  }
  if (hypotheses.empty()) throw InvalidArgument("bleu: empty corpus");
  if (max_n < 1 || max_n > 4) throw InvalidArgument("bleu: max_n must be in 1..4");
  const auto un = static_cast<std::size_t>(max_n);
  BleuResult out;
  std::vector<std::size_t> match(un, 0);
  std::vector<std::size_t> total(un, 0);
  out.sentence.reserve(hypotheses.size());
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto hyp = word_tokens(hypotheses[i]);
    const auto ref = word_tokens(references[i]);
    out.hypothesis_length += hyp.size();
    out.reference_length += ref.size();
    double log_sum = 0.0;
    bool zero = false;
    for (int n = 1; n <= max_n; ++n) {
      const auto [m, t] = clipped(hyp, ref, n);
      match[static_cast<std::size_t>(n - 1)] += m;
      total[static_cast<std::size_t>(n - 1)] += t;
      double p = 0.0;
      if (n == 1) {
        p = t == 0 ? 0.0 : static_cast<double>(m) / static_cast<double>(t);
      } else {
        p = (static_cast<double>(m) + 1.0) / (static_cast<double>(t) + 1.0);
      }
      if (p == 0.0) zero = true;
      else log_sum += std::log(p);
    }
    const double bp = brevity(hyp.size(), ref.size());
    out.sentence.push_back(zero ? 0.0 : 100.0 * bp * std::exp(log_sum / max_n));
  }
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < un; ++n) {
    const double p = total[n] == 0 ? 0.0 : static_cast<double>(match[n]) / static_cast<double>(total[n]);
    out.precisions.push_back(p);
    if (p == 0.0) zero = true;
    else log_sum += std::log(p);
  }
  out.brevity_penalty = brevity(out.hypothesis_length, out.reference_length);
  out.corpus = zero ? 0.0 : 100.0 * out.brevity_penalty * std::exp(log_sum / max_n);
  return out;
}

std::vector<std::string> squad_normalize(std::string_view text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::ispunct(c)) continue;
    lowered.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
  }
  std::vector<std::string> out;
  std::string cur;
  const auto flush = [&] {
    if (!cur.empty() && cur != "a" && cur != "an" && cur != "the") out.push_back(cur);
    cur.clear();
  };
  for (const char ch : lowered) {
    if (std::isspace(static_cast<unsigned char>(ch))) flush();
    else cur.push_back(ch);
  }
  flush();
  return out;
}

double token_f1(std::string_view prediction, std::string_view gold) {
  const auto p = squad_normalize(prediction);
  const auto g = squad_normalize(gold);
  if (p.empty() || g.empty()) return p.empty() && g.empty() ? 100.0 : 0.0;
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& t : g) ++counts[t];
  std::size_t common = 0;
  for (const auto& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

PerplexityResult perplexity(const std::vector<std::string>& texts, const LanguageScorer& scorer) {
  if (texts.empty()) throw InvalidArgument("perplexity: no texts");
  PerplexityResult out;
  double sum = 0.0;
  for (const auto& t : texts) {
    const auto lps = scorer.token_log_probs(t);
    if (lps.empty()) {
      ++out.skipped;
      continue;
    }
    for (const double lp : lps) sum += lp;
    out.tokens += lps.size();
  }
  if (out.skipped > 0) spdlog::warn("perplexity: skipped {} text(s) with no tokens", out.skipped);
  if (out.tokens == 0) throw InvalidArgument("perplexity: every text encoded to zero tokens");
  out.perplexity = std::exp(-sum / static_cast<double>(out.tokens));
  return out;
}

double distinct_n(const std::vector<std::string>& texts, int n) {
  if (n < 1) throw InvalidArgument("distinct_n: n must be positive");
  if (texts.empty()) throw InvalidArgument("diversity: no texts");
  std::set<std::vector<std::string>> unique;
  std::size_t total = 0;
  for (const auto& text : texts) {
    std::vector<std::string> toks;
    for (auto& part : split(text, ' ')) {
      for (auto& tok : split(part, '\t')) {
        std::string t = trim(tok);
        if (t.empty()) continue;
        std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) {
          return static_cast<char>(c < 0x80 ? std::tolower(c) : c);
        });
        toks.push_back(std::move(t));
      }
    }
    for (const auto& [gram, count] : ngrams(toks, n)) {
      unique.insert(gram);
      total += count;
    }
  }
  if (total == 0) throw InvalidArgument("diversity: zero tokens");
  return static_cast<double>(unique.size()) / static_cast<double>(total);
}

Json SignificanceResult::to_json() const {
  return Json{{"metric", metric},
              {"baseline_id", baseline_id},
              {"candidate_id", candidate_id},
              {"t_statistic", std::isfinite(t_statistic) ? Json(t_statistic) : Json(t_statistic > 0 ? "inf" : "-inf")},
              {"p_value", p_value},
              {"significant", significant},
              {"degenerate", degenerate},
              {"n", n},
              {"mean_difference", mean_difference}};
}

SignificanceResult SignificanceResult::from_json(const Json& j) {
  SignificanceResult r;
  try {
    r.metric = j.at("metric").get<std::string>();
    r.baseline_id = j.at("baseline_id").get<std::string>();
    r.candidate_id = j.at("candidate_id").get<std::string>();
    const Json& t = j.at("t_statistic");
    if (t.is_string()) {
      r.t_statistic = (t.get<std::string>() == "-inf" ? -1.0 : 1.0) * std::numeric_limits<double>::infinity();
    } else {
      r.t_statistic = t.get<double>();
    }
    r.p_value = j.at("p_value").get<double>();
    r.significant = j.at("significant").get<bool>();
    r.degenerate = j.value("degenerate", false);
    r.n = j.value("n", std::size_t{0});
    r.mean_difference = j.value("mean_difference", 0.0);
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("significance result: ") + e.what());
  }
  return r;
}

SignificanceResult paired_ttest(const std::vector<double>& baseline, const std::vector<double>& candidate,
                                Direction direction, double alpha) {
  if (baseline.size() != candidate.size()) {
    throw InvalidArgument(fmt::format("paired t-test: {} baseline vs {} candidate values", baseline.size(),
                                      candidate.size()));
  }
  if (baseline.size() < 2) throw InvalidArgument("paired t-test needs at least two pairs");
  SignificanceResult r;
  r.n = baseline.size();
  const double n = static_cast<double>(r.n);
  double mean = 0.0;
  for (std::size_t i = 0; i < r.n; ++i) mean += candidate[i] - baseline[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < r.n; ++i) {
    const double d = candidate[i] - baseline[i] - mean;
    ss += d * d;
  }
  r.mean_difference = mean;
  const double sign = direction == Direction::kCandidateGreater ? 1.0 : -1.0;
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0 || sd < 1e-12 * std::max(1.0, std::abs(mean))) {
    r.degenerate = true;
    if (mean == 0.0) {
      r.t_statistic = 0.0;
      r.p_value = 0.5;
    } else {
      r.t_statistic = (mean > 0 ? 1.0 : -1.0) * std::numeric_limits<double>::infinity();
      r.p_value = sign * mean > 0.0 ? 0.0 : 1.0;
    }
  } else {
    r.t_statistic = mean / (sd / std::sqrt(n));
    const boost::math::students_t dist(n - 1.0);
    r.p_value = boost::math::cdf(boost::math::complement(dist, sign * r.t_statistic));
  }
  r.significant = r.p_value < alpha;
  return r;
}

const std::vector<double>& MetricReport::per_example(const std::string& metric) const {
  if (metric == "f1") return f1;
  for (int n = 1; n <= 4; ++n) {
    if (metric == fmt::format("bleu{}", n)) return sentence_bleu[static_cast<std::size_t>(n - 1)];
  }
  throw InvalidArgument("no per-example vector for metric '" + metric + "'");
}

double MetricReport::corpus_value(const std::string& metric) const {
  if (metric == "f1") return corpus.f1;
  if (metric == "perplexity") return corpus.perplexity;
  if (metric == "diversity") return corpus.diversity;
  for (int n = 1; n <= 4; ++n) {
    if (metric == fmt::format("bleu{}", n)) return corpus.bleu[static_cast<std::size_t>(n - 1)];
  }
  throw InvalidArgument("unknown metric '" + metric + "'");
}

void MetricReport::validate() const {
  for (const auto& v : sentence_bleu) {
    if (v.size() != ids.size()) throw SchemaError(model_id + ": per-example BLEU length differs from ids");
  }
  if (f1.size() != ids.size()) throw SchemaError(model_id + ": per-example F1 length differs from ids");
  for (const double x : {corpus.bleu[0], corpus.bleu[1], corpus.bleu[2], corpus.bleu[3], corpus.f1, corpus.perplexity,
                         corpus.diversity}) {
    if (!std::isfinite(x)) throw SchemaError(model_id + ": non-finite corpus score");
  }
}

Json MetricReport::to_json() const {
  Json j;
  j["model_id"] = model_id;
  j["scorer_id"] = scorer_id;
  j["bleu_tokenizer"] = bleu_tokenizer;
  j["corpus_scores"] = {{"bleu1", corpus.bleu[0]}, {"bleu2", corpus.bleu[1]}, {"bleu3", corpus.bleu[2]},
                        {"bleu4", corpus.bleu[3]}, {"f1", corpus.f1},         {"perplexity", corpus.perplexity},
                        {"diversity", corpus.diversity}};
  j["mean_sentence_bleu"] = {{"bleu1", mean_sentence_bleu[0]},
                             {"bleu2", mean_sentence_bleu[1]},
                             {"bleu3", mean_sentence_bleu[2]},
                             {"bleu4", mean_sentence_bleu[3]}};
  if (distinct2) j["distinct2"] = *distinct2;
  j["n_examples"] = ids.size();
  j["per_example"] = {{"id", ids},
                      {"bleu1", sentence_bleu[0]},
                      {"bleu2", sentence_bleu[1]},
                      {"bleu3", sentence_bleu[2]},
                      {"bleu4", sentence_bleu[3]},
                      {"f1", f1}};
  return j;
}

MetricReport MetricReport::from_json(const Json& j) {
  MetricReport r;
  try {
    r.model_id = j.at("model_id").get<std::string>();
    r.scorer_id = j.value("scorer_id", std::string());
    r.bleu_tokenizer = j.value("bleu_tokenizer", std::string(kBleuTokenizer));
    const Json& c = j.at("corpus_scores");
    for (int n = 1; n <= 4; ++n) {
      r.corpus.bleu[static_cast<std::size_t>(n - 1)] = c.at(fmt::format("bleu{}", n)).get<double>();
      r.mean_sentence_bleu[static_cast<std::size_t>(n - 1)] =
          j.at("mean_sentence_bleu").at(fmt::format("bleu{}", n)).get<double>();
    }
    r.corpus.f1 = c.at("f1").get<double>();
    r.corpus.perplexity = c.at("perplexity").get<double>();
    r.corpus.diversity = c.at("diversity").get<double>();
    if (j.contains("distinct2")) r.distinct2 = j["distinct2"].get<double>();
    const Json& pe = j.at("per_example");
    r.ids = pe.at("id").get<std::vector<std::string>>();
    for (int n = 1; n <= 4; ++n) {
      r.sentence_bleu[static_cast<std::size_t>(n - 1)] = pe.at(fmt::format("bleu{}", n)).get<std::vector<double>>();
    }
    r.f1 = pe.at("f1").get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("metric report: ") + e.what());
  }
  r.validate();
  return r;
}

void MetricReport::save(const std::filesystem::path& json_path) const {
  validate();
  write_json(json_path, to_json());
}

MetricReport MetricReport::load(const std::filesystem::path& json_path) {
  return from_json(read_json(json_path));
}

std::string MetricReport::per_example_csv() const {
  std::string out = "id,bleu1,bleu2,bleu3,bleu4,f1\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out += fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g}\n", ids[i], sentence_bleu[0][i],
                       sentence_bleu[1][i], sentence_bleu[2][i], sentence_bleu[3][i], f1[i]);
  }
  return out;
}

MetricReport evaluate(const std::string& model_id, const std::vector<std::string>& ids,
                      const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                      const LanguageScorer& scorer, const EvaluateOptions& options) {
  if (ids.size() != hypotheses.size() || ids.size() != references.size()) {
    throw InvalidArgument("evaluate: ids, hypotheses and references differ in length");
  }
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
    throw InvalidArgument("evaluate: example ids are not unique");
  }
  MetricReport r;
  r.model_id = model_id;
  r.scorer_id = scorer.id();
  r.ids = ids;
  for (int n = 1; n <= 4; ++n) {
    auto b = bleu_n(hypotheses, references, n);
    const auto k = static_cast<std::size_t>(n - 1);
    r.corpus.bleu[k] = b.corpus;
    double sum = 0.0;
    for (const double s : b.sentence) sum += s;
    r.mean_sentence_bleu[k] = sum / static_cast<double>(b.sentence.size());
    r.sentence_bleu[k] = std::move(b.sentence);
  }
  double f1_sum = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    r.f1.push_back(token_f1(hypotheses[i], references[i]));
    f1_sum += r.f1.back();
  }
  r.corpus.f1 = f1_sum / static_cast<double>(ids.size());
  r.corpus.perplexity = perplexity(hypotheses, scorer).perplexity;
  r.corpus.diversity = diversity(hypotheses);
  if (options.distinct2) r.distinct2 = distinct_n(hypotheses, 2);
  return r;
}

}  // namespace eduqg
