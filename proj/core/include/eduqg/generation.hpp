#pragma once

#include <memory>
#include <string>
#include <vector>

#include "eduqg/checkpoint.hpp"
#include "eduqg/textproc.hpp"

namespace eduqg {

enum class Strategy { kGreedy, kBeam };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct DecodeSpec {
  Strategy strategy = Strategy::kBeam;
  std::size_t beam_width = 4;
  std::size_t max_len = 64;
  double length_penalty = 1.0;

  /// beam_width >= 1, max_len >= 1, greedy implies width 1.
  void validate() const;
  Json to_json() const;
  static DecodeSpec from_json(const Json& j);
  static DecodeSpec greedy(std::size_t max_len = 64);
  static DecodeSpec beam(std::size_t width = 4, std::size_t max_len = 64, double length_penalty = 1.0);
};

/// Incremental next-token distribution for one context. `log_probs()` is
/// the distribution over the position after everything fed so far.
class DecoderSession {
 public:
  virtual ~DecoderSession() = default;
  virtual const Vector& log_probs() const = 0;
  virtual void feed(TokenId token) = 0;
  virtual std::unique_ptr<DecoderSession> clone() const = 0;
};

/// Token ids decoding must know about.
struct DecodeVocab {
  TokenId eos = 1;
  std::vector<TokenId> banned;  // never emitted (pad, sentinels)

  static DecodeVocab from(const Tokenizer& tokenizer);
};

struct Hypothesis {
  std::vector<TokenId> tokens;  // without the end-of-sequence token
  bool finished = false;        // ended with end-of-sequence
  double log_prob = 0.0;        // sum over emitted tokens, eos included
  std::size_t length = 0;       // emitted tokens, eos included
  double score = 0.0;           // log_prob / length^length_penalty
};

double normalized_score(double log_prob, std::size_t length, double length_penalty);

/// Argmax at every position, lowest id on ties, until eos or max_len.
Hypothesis greedy_search(DecoderSession& session, const DecodeVocab& vocab, std::size_t max_len,
                         double length_penalty);

/// Beam search with a fixed budget of `beam_width` hypothesis slots. Each
/// step keeps the best-scoring extensions (by cumulative log-probability)
/// that fit into the open slots; an extension ending in eos permanently
/// takes a slot. Hypotheses still open at max_len are closed unfinished.
/// Returns the (at most beam_width) final hypotheses, best normalized score
/// first. With beam_width = 1 the single result equals greedy_search.
std::vector<Hypothesis> beam_search(const DecoderSession& session, const DecodeVocab& vocab,
                                    const DecodeSpec& spec);

Hypothesis decode(const DecoderSession& session, const DecodeVocab& vocab, const DecodeSpec& spec);

/// Model-backed session over an encoded input, with a key/value cache.
std::unique_ptr<DecoderSession> start_session(const Checkpoint& ckpt, const TokenSequence& input);

/// Tokenizer decode plus whitespace collapsing.
std::string render_question(const Tokenizer& tokenizer, const std::vector<TokenId>& tokens);

/// One question per context. Throws InvalidArgument for an empty list.
std::vector<std::string> generate(const Checkpoint& ckpt, const std::vector<std::string>& contexts,
                                  const DecodeSpec& spec, const QGFormat& format = {});

}  // namespace eduqg
