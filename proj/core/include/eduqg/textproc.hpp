#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eduqg/datasets.hpp"
#include "eduqg/tokenizer.hpp"

namespace eduqg {

/// Span-corruption training pair. The input carries one sentinel per removed
/// span; the target lists each sentinel followed by its span and ends with
/// end-of-sequence.
struct DenoisingPair {
  TokenSequence input;
  TokenSequence target;
};

/// Half-open run of corrupted positions.
struct Span {
  std::size_t begin = 0;
  std::size_t length = 0;

  friend bool operator==(const Span&, const Span&) = default;
};

struct CorruptionOptions {
  double rate = 0.15;
  std::size_t mean_span_len = 3;
};

/// Chooses corrupted spans with the T5 random-span procedure:
/// round(rate * length) noise tokens (at least one when rate > 0) split into
/// round(noise / mean_span_len) spans, interleaved with the same number of
/// non-noise runs, leading with a non-noise run. Pure in its arguments.
std::vector<Span> sample_noise_spans(std::size_t length, const CorruptionOptions& options, std::uint64_t seed);

/// Replaces each span with the next sentinel. Throws when there are more
/// spans than sentinels.
DenoisingPair apply_span_mask(const TokenSequence& seq, const std::vector<Span>& spans, const SpecialIds& special);

/// sample_noise_spans + apply_span_mask. rate = 0 returns the sequence
/// unchanged with target [eos]. Throws InvalidArgument when the rate would
/// leave no token in the input.
DenoisingPair corrupt_spans(const TokenSequence& seq, const CorruptionOptions& options, std::uint64_t seed,
                            const SpecialIds& special);

/// How a QGExample becomes an encoder input.
struct QGFormat {
  std::string prefix = "generate question: ";
  std::size_t max_input_len = 512;
  std::size_t max_target_len = 64;

  friend bool operator==(const QGFormat&, const QGFormat&) = default;
};

struct SeqPair {
  TokenSequence input;
  TokenSequence target;
};

/// Encoder input for a context: encode(prefix + context), tail-truncated.
TokenSequence encode_context(const std::string& context, const Tokenizer& tokenizer, const QGFormat& format);

/// input = encode_context(context); target = encode(question) + eos, where
/// truncation removes question tokens and never the final eos.
SeqPair make_qg_pair(const QGExample& example, const Tokenizer& tokenizer, const QGFormat& format);

}  // namespace eduqg
