#include "eduqg/scorer.hpp"

#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "eduqg/error.hpp"

namespace eduqg {

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c >= 0x80 || std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
      continue;
    }
    if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
    if (!std::isspace(c) && !std::iscntrl(c)) {
      out.emplace_back(1, static_cast<char>(c));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

UniformScorer::UniformScorer(std::size_t vocab_size) : vocab_size_(vocab_size) {
  if (vocab_size == 0) throw InvalidArgument("uniform scorer needs a positive vocabulary size");
}

std::string UniformScorer::id() const {
  return fmt::format("uniform:{}", vocab_size_);
}

std::vector<double> UniformScorer::token_log_probs(std::string_view text) const {
  return std::vector<double>(word_tokens(text).size(), -std::log(static_cast<double>(vocab_size_)));
}

KneserNeyScorer KneserNeyScorer::train(const std::vector<std::string>& texts, double discount, std::string name) {
  if (!(discount > 0.0 && discount < 1.0)) throw InvalidArgument("Kneser-Ney discount must be in (0, 1)");
  KneserNeyScorer s;
  s.name_ = std::move(name);
  s.discount_ = discount;
  s.words_ = {"<s>", "</s>", "<unk>"};
  for (std::int32_t i = 0; i < 3; ++i) s.index_[s.words_[static_cast<std::size_t>(i)]] = i;

  std::set<std::uint64_t> bigram_types;
  for (const auto& text : texts) {
    const auto toks = word_tokens(text);
    if (toks.empty()) continue;
    ++s.corpus_texts_;
    std::vector<std::int32_t> ids = {kBegin, kBegin};
    for (const auto& t : toks) {
      auto [it, inserted] = s.index_.try_emplace(t, static_cast<std::int32_t>(s.words_.size()));
      if (inserted) s.words_.push_back(t);
      ids.push_back(it->second);
    }
    ids.push_back(kEnd);
    s.corpus_tokens_ += ids.size() - 2;
    for (std::size_t i = 2; i < ids.size(); ++i) {
      const auto u = ids[i - 2];
      const auto v = ids[i - 1];
      const auto w = ids[i];
      if (s.tri_[key3(u, v, w)]++ == 0.0) {
        s.tri_ctx_[key2(u, v)].distinct += 1.0;
        // first occurrence of (u, v, w) adds one distinct left context to (v, w)
        if (s.bi_cont_[key2(v, w)]++ == 0.0) {
          s.bi_ctx_[v].distinct += 1.0;
        }
        s.bi_ctx_[v].total += 1.0;
      }
      s.tri_ctx_[key2(u, v)].total += 1.0;
      bigram_types.insert(key2(v, w));
    }
  }
  s.uni_cont_.assign(s.words_.size(), 0.0);
  for (const auto k : bigram_types) {
    const auto w = static_cast<std::int32_t>(k & 0xffffffffULL);
    if (s.uni_cont_[static_cast<std::size_t>(w)]++ == 0.0) s.uni_distinct_ += 1.0;
    s.uni_total_ += 1.0;
  }
  if (s.uni_total_ == 0.0) throw InvalidArgument("Kneser-Ney scorer needs a non-empty training corpus");
  return s;
}

std::string KneserNeyScorer::id() const {
  return fmt::format("{}(types={},tokens={},D={})", name_, words_.size(), corpus_tokens_, discount_);
}

std::int32_t KneserNeyScorer::word_id(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnknown : it->second;
}

double KneserNeyScorer::p1(std::int32_t w) const {
  // <s> is never predicted, so the uniform share spreads over the rest.
  const double predictable = static_cast<double>(words_.size() - 1);
  const double c = w == kBegin ? 0.0 : uni_cont_[static_cast<std::size_t>(w)];
  const double uniform = w == kBegin ? 0.0 : 1.0 / predictable;
  return std::max(c - discount_, 0.0) / uni_total_ + discount_ * uni_distinct_ / uni_total_ * uniform;
}

double KneserNeyScorer::p2(std::int32_t v, std::int32_t w) const {
  const auto ctx = bi_ctx_.find(v);
  if (ctx == bi_ctx_.end() || ctx->second.total == 0.0) return p1(w);
  const auto it = bi_cont_.find(key2(v, w));
  const double c = it == bi_cont_.end() ? 0.0 : it->second;
  const auto& st = ctx->second;
  return std::max(c - discount_, 0.0) / st.total + discount_ * st.distinct / st.total * p1(w);
}

double KneserNeyScorer::probability(std::int32_t u, std::int32_t v, std::int32_t w) const {
  const auto ctx = tri_ctx_.find(key2(u, v));
  if (ctx == tri_ctx_.end() || ctx->second.total == 0.0) return p2(v, w);
  const auto it = tri_.find(key3(u, v, w));
  const double c = it == tri_.end() ? 0.0 : it->second;
  const auto& st = ctx->second;
  return std::max(c - discount_, 0.0) / st.total + discount_ * st.distinct / st.total * p2(v, w);
}

std::vector<double> KneserNeyScorer::token_log_probs(std::string_view text) const {
  const auto toks = word_tokens(text);
  if (toks.empty()) return {};
  std::vector<std::int32_t> ids = {kBegin, kBegin};
  for (const auto& t : toks) ids.push_back(word_id(t));
  ids.push_back(kEnd);
  std::vector<double> out;
  out.reserve(ids.size() - 2);
  for (std::size_t i = 2; i < ids.size(); ++i) {
    out.push_back(std::log(probability(ids[i - 2], ids[i - 1], ids[i])));
  }
  return out;
}

namespace {

std::vector<std::string> corpus_texts(const std::string& path) {
  std::vector<std::string> out;
  std::istringstream in(read_file(path));
  std::string line;
  const bool jsonl = path.ends_with(".jsonl") || path.ends_with(".json");
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (!jsonl) {
      out.push_back(line);
      continue;
    }
    try {
      const Json j = Json::parse(line);
      for (const char* key : {"question", "abstract", "text"}) {
        if (j.contains(key) && j[key].is_string()) {
          out.push_back(j[key].get<std::string>());
          break;
        }
      }
    } catch (const Json::exception&) {
      spdlog::warn("{}: skipping malformed scorer corpus line", path);
    }
  }
  return out;
}

}  // namespace

std::unique_ptr<LanguageScorer> make_scorer(const Json& config) {
  const std::string type = config.value("type", std::string("kneser_ney"));
  if (type == "uniform") {
    return std::make_unique<UniformScorer>(config.value("vocab_size", std::size_t{1000}));
  }
  if (type == "kneser_ney") {
    std::vector<std::string> texts;
    if (!config.contains("corpus")) throw ConfigError("kneser_ney scorer needs a corpus");
    const Json& corpus = config["corpus"];
    for (const auto& p : corpus.is_array() ? corpus : Json::array({corpus})) {
      auto part = corpus_texts(p.get<std::string>());
      texts.insert(texts.end(), part.begin(), part.end());
    }
    return std::make_unique<KneserNeyScorer>(
        KneserNeyScorer::train(texts, config.value("discount", 0.75), config.value("name", std::string("kn3"))));
  }
  throw ConfigError("unknown scorer type '" + type + "' (uniform, kneser_ney)");
}

}  // namespace eduqg
