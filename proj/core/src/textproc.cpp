#include "eduqg/textproc.hpp"

#include <cmath>

#include <fmt/format.h>

#include "eduqg/error.hpp"
#include "eduqg/rng.hpp"

namespace eduqg {
namespace {

// Splits num_items into num_segments positive lengths, uniformly over all
// compositions.
std::vector<std::size_t> random_segmentation(std::size_t num_items, std::size_t num_segments, Rng& rng) {
  std::vector<std::uint8_t> starts(num_items - 1, 0);
  for (std::size_t i = 0; i + 1 < num_segments; ++i) {
    starts[i] = 1;
  }
  rng.shuffle(starts);
  std::vector<std::size_t> lengths(1, 1);
  for (const auto flag : starts) {
    if (flag != 0) {
      lengths.push_back(1);
    } else {
      ++lengths.back();
    }
  }
  return lengths;
}

}  // namespace

std::vector<Span> sample_noise_spans(std::size_t length, const CorruptionOptions& options, std::uint64_t seed) {
  if (length == 0) {
    throw InvalidArgument("corrupt_spans: empty sequence");
  }
  if (!(options.rate >= 0.0 && options.rate < 1.0)) {
    throw InvalidArgument(fmt::format("corrupt_spans: rate {} outside [0, 1)", options.rate));
  }
  if (options.mean_span_len < 1) {
    throw InvalidArgument("corrupt_spans: mean_span_len must be >= 1");
  }
  if (options.rate == 0.0) {
    return {};
  }
  auto noise = static_cast<std::size_t>(std::llround(options.rate * static_cast<double>(length)));
  noise = std::max<std::size_t>(noise, 1);
  if (noise >= length) {
    throw InvalidArgument(fmt::format("corrupt_spans: rate {} leaves no tokens of a length-{} sequence", options.rate,
                                      length));
  }
  const std::size_t kept = length - noise;
  auto spans = static_cast<std::size_t>(
      std::llround(static_cast<double>(noise) / static_cast<double>(options.mean_span_len)));
  spans = std::clamp<std::size_t>(spans, 1, std::min(noise, kept));

  Rng rng(seed);
  const auto noise_lengths = random_segmentation(noise, spans, rng);
  const auto kept_lengths = random_segmentation(kept, spans, rng);
  std::vector<Span> out;
  out.reserve(spans);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < spans; ++i) {
    pos += kept_lengths[i];
    out.push_back({pos, noise_lengths[i]});
    pos += noise_lengths[i];
  }
  return out;
}

DenoisingPair apply_span_mask(const TokenSequence& seq, const std::vector<Span>& spans, const SpecialIds& special) {
  if (spans.size() > special.sentinels.size()) {
    throw InvalidArgument(fmt::format("corrupt_spans: {} spans exceed the {} available sentinels", spans.size(),
                                      special.sentinels.size()));
  }
  DenoisingPair pair;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const Span& span = spans[i];
    if (span.begin < pos || span.length == 0 || span.begin + span.length > seq.size()) {
      throw InvalidArgument("apply_span_mask: spans must be non-empty, ordered and in range");
    }
    pair.input.ids.insert(pair.input.ids.end(), seq.ids.begin() + static_cast<std::ptrdiff_t>(pos),
                          seq.ids.begin() + static_cast<std::ptrdiff_t>(span.begin));
    pair.input.ids.push_back(special.sentinels[i]);
    pair.target.ids.push_back(special.sentinels[i]);
    pair.target.ids.insert(pair.target.ids.end(), seq.ids.begin() + static_cast<std::ptrdiff_t>(span.begin),
                           seq.ids.begin() + static_cast<std::ptrdiff_t>(span.begin + span.length));
    pos = span.begin + span.length;
  }
  pair.input.ids.insert(pair.input.ids.end(), seq.ids.begin() + static_cast<std::ptrdiff_t>(pos), seq.ids.end());
  pair.target.ids.push_back(special.eos);
  return pair;
}

DenoisingPair corrupt_spans(const TokenSequence& seq, const CorruptionOptions& options, std::uint64_t seed,
                            const SpecialIds& special) {
  return apply_span_mask(seq, sample_noise_spans(seq.size(), options, seed), special);
}

TokenSequence encode_context(const std::string& context, const Tokenizer& tokenizer, const QGFormat& format) {
  TokenSequence input = tokenizer.encode(format.prefix + context);
  if (input.size() > format.max_input_len) {
    input.ids.resize(format.max_input_len);
  }
  return input;
}

SeqPair make_qg_pair(const QGExample& example, const Tokenizer& tokenizer, const QGFormat& format) {
  if (format.max_target_len < 1) {
    throw ConfigError("max_target_len must be >= 1");
  }
  SeqPair pair;
  pair.input = encode_context(example.context, tokenizer, format);
  pair.target = tokenizer.encode(example.question);
  if (pair.target.size() > format.max_target_len - 1) {
    pair.target.ids.resize(format.max_target_len - 1);
  }
  pair.target.ids.push_back(tokenizer.special().eos);
  return pair;
}

}  // namespace eduqg
