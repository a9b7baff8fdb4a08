#include "eduqg/generation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include <fmt/format.h>

#include "eduqg/error.hpp"

namespace eduqg {

std::string to_string(Strategy s) {
  return s == Strategy::kGreedy ? "GREEDY" : "BEAM";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "GREEDY" || s == "greedy") return Strategy::kGreedy;
  if (s == "BEAM" || s == "beam") return Strategy::kBeam;
  throw ConfigError("unknown decoding strategy '" + s + "' (GREEDY or BEAM)");
}

void DecodeSpec::validate() const {
  if (beam_width < 1) throw ConfigError("beam_width must be at least 1");
  if (max_len < 1) throw ConfigError("max_len must be at least 1");
  if (strategy == Strategy::kGreedy && beam_width != 1) throw ConfigError("greedy decoding uses beam_width 1");
  if (!std::isfinite(length_penalty)) throw ConfigError("length_penalty must be finite");
}

Json DecodeSpec::to_json() const {
  return Json{{"strategy", to_string(strategy)},
              {"beam_width", beam_width},
              {"max_len", max_len},
              {"length_penalty", length_penalty}};
}

DecodeSpec DecodeSpec::from_json(const Json& j) {
  DecodeSpec s;
  try {
    s.strategy = strategy_from_string(j.value("strategy", std::string("BEAM")));
    s.beam_width = j.value("beam_width", s.strategy == Strategy::kGreedy ? std::size_t{1} : s.beam_width);
    s.max_len = j.value("max_len", s.max_len);
    s.length_penalty = j.value("length_penalty", s.length_penalty);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("decode spec: ") + e.what());
  }
  s.validate();
  return s;
}

DecodeSpec DecodeSpec::greedy(std::size_t max_len) {
  DecodeSpec s;
  s.strategy = Strategy::kGreedy;
  s.beam_width = 1;
  s.max_len = max_len;
  return s;
}

DecodeSpec DecodeSpec::beam(std::size_t width, std::size_t max_len, double length_penalty) {
  DecodeSpec s;
  s.beam_width = width;
  s.max_len = max_len;
  s.length_penalty = length_penalty;
  return s;
}

DecodeVocab DecodeVocab::from(const Tokenizer& tokenizer) {
  DecodeVocab v;
  const auto& sp = tokenizer.special();
  v.eos = sp.eos;
  v.banned.push_back(sp.pad);
  v.banned.insert(v.banned.end(), sp.sentinels.begin(), sp.sentinels.end());
  return v;
}

double normalized_score(double log_prob, std::size_t length, double length_penalty) {
  if (length == 0) return log_prob;
  return log_prob / std::pow(static_cast<double>(length), length_penalty);
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Vector masked(const Vector& lp, const DecodeVocab& vocab) {
  Vector out = lp;
  for (const auto id : vocab.banned) {
    if (id >= 0 && id < out.size()) out(id) = kNegInf;
  }
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (std::isnan(out(i))) out(i) = kNegInf;
  }
  return out;
}

Hypothesis close(std::vector<TokenId> tokens, bool finished, double log_prob, double alpha) {
  Hypothesis h;
  h.length = tokens.size() + (finished ? 1 : 0);
  h.tokens = std::move(tokens);
  h.finished = finished;
  h.log_prob = log_prob;
  h.score = normalized_score(log_prob, h.length, alpha);
  return h;
}

}  // namespace

Hypothesis greedy_search(DecoderSession& session, const DecodeVocab& vocab, std::size_t max_len,
                         double length_penalty) {
  std::vector<TokenId> tokens;
  double total = 0.0;
  for (std::size_t t = 0; t < max_len; ++t) {
    const Vector lp = masked(session.log_probs(), vocab);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < lp.size(); ++i) {
      if (lp(i) > lp(best)) best = i;
    }
    if (lp(best) == kNegInf) break;
    total += lp(best);
    const auto id = static_cast<TokenId>(best);
    if (id == vocab.eos) {
      return close(std::move(tokens), true, total, length_penalty);
    }
    tokens.push_back(id);
    if (t + 1 < max_len) session.feed(id);
  }
  return close(std::move(tokens), false, total, length_penalty);
}

std::vector<Hypothesis> beam_search(const DecoderSession& session, const DecodeVocab& vocab,
                                    const DecodeSpec& spec) {
  spec.validate();
  struct Beam {
    std::vector<TokenId> tokens;
    double log_prob = 0.0;
    std::unique_ptr<DecoderSession> session;
  };
  struct Candidate {
    double log_prob;
    std::size_t beam;
    TokenId token;
  };
  std::vector<Hypothesis> finals;
  std::vector<Beam> alive;
  alive.push_back({{}, 0.0, session.clone()});
  for (std::size_t t = 0; t < spec.max_len && !alive.empty(); ++t) {
    const std::size_t slots = spec.beam_width - finals.size();
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < alive.size(); ++b) {
      const Vector lp = masked(alive[b].session->log_probs(), vocab);
      for (Eigen::Index i = 0; i < lp.size(); ++i) {
        if (lp(i) != kNegInf) cands.push_back({alive[b].log_prob + lp(i), b, static_cast<TokenId>(i)});
      }
    }
    const std::size_t keep = std::min(slots, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        return std::tie(a.beam, a.token) < std::tie(b.beam, b.token);
                      });
    const bool last = t + 1 == spec.max_len;
    std::vector<Beam> next;
    for (std::size_t c = 0; c < keep; ++c) {
      const Candidate& cand = cands[c];
      std::vector<TokenId> tokens = alive[cand.beam].tokens;
      if (cand.token == vocab.eos) {
        finals.push_back(close(std::move(tokens), true, cand.log_prob, spec.length_penalty));
        continue;
      }
      tokens.push_back(cand.token);
      if (last) {
        finals.push_back(close(std::move(tokens), false, cand.log_prob, spec.length_penalty));
        continue;
      }
      auto s = alive[cand.beam].session->clone();
      s->feed(cand.token);
      next.push_back({std::move(tokens), cand.log_prob, std::move(s)});
    }
    alive = std::move(next);
  }
  // Only reachable when every token was banned: close what is left.
  for (auto& b : alive) {
    finals.push_back(close(std::move(b.tokens), false, b.log_prob, spec.length_penalty));
  }
  std::stable_sort(finals.begin(), finals.end(),
                   [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
  return finals;
}

Hypothesis decode(const DecoderSession& session, const DecodeVocab& vocab, const DecodeSpec& spec) {
  spec.validate();
  if (spec.strategy == Strategy::kGreedy) {
    auto s = session.clone();
    return greedy_search(*s, vocab, spec.max_len, spec.length_penalty);
  }
  auto finals = beam_search(session, vocab, spec);
  if (finals.empty()) return Hypothesis{};
  return std::move(finals.front());
}

namespace {

class ModelSession final : public DecoderSession {
 public:
  ModelSession(const Checkpoint& ckpt, const TokenSequence& input)
      : config_(&ckpt.config),
        params_(&ckpt.params),
        encoded_(std::make_shared<const EncodedInput>(encode_input(ckpt.config, ckpt.params, input.ids))) {
    const TokenId start = ckpt.tokenizer ? ckpt.tokenizer->special().pad : 0;
    last_ = decode_step(*config_, *params_, *encoded_, state_, start);
  }

  const Vector& log_probs() const override { return last_; }

  void feed(TokenId token) override { last_ = decode_step(*config_, *params_, *encoded_, state_, token); }

  std::unique_ptr<DecoderSession> clone() const override { return std::make_unique<ModelSession>(*this); }

 private:
  const ModelConfig* config_;
  const ParameterSet* params_;
  std::shared_ptr<const EncodedInput> encoded_;
  DecoderState state_;
  Vector last_;
};

}  // namespace

std::unique_ptr<DecoderSession> start_session(const Checkpoint& ckpt, const TokenSequence& input) {
  return std::make_unique<ModelSession>(ckpt, input);
}

std::string render_question(const Tokenizer& tokenizer, const std::vector<TokenId>& tokens) {
  return Tokenizer::normalize(tokenizer.decode(std::span<const TokenId>(tokens)));
}

std::vector<std::string> generate(const Checkpoint& ckpt, const std::vector<std::string>& contexts,
                                  const DecodeSpec& spec, const QGFormat& format) {
  if (contexts.empty()) throw InvalidArgument("generate: no contexts");
  if (!ckpt.tokenizer) throw InvalidArgument("generate: checkpoint has no tokenizer");
  spec.validate();
  const DecodeVocab vocab = DecodeVocab::from(*ckpt.tokenizer);
  std::vector<std::string> out;
  out.reserve(contexts.size());
  for (const auto& context : contexts) {
    const auto session = start_session(ckpt, encode_context(context, *ckpt.tokenizer, format));
    out.push_back(render_question(*ckpt.tokenizer, decode(*session, vocab, spec).tokens));
  }
  return out;
}

}  // namespace eduqg
