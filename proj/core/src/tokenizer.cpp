#include "eduqg/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "eduqg/error.hpp"
#include "eduqg/io.hpp"

namespace eduqg {
namespace {

constexpr std::string_view kWordMark = "\xE2\x96\x81";  // U+2581
constexpr std::string_view kUnknownGlyph = "\xE2\x81\x87";  // U+2047
constexpr std::string_view kPad = "<pad>";
constexpr std::string_view kEos = "</s>";
constexpr std::string_view kUnk = "<unk>";
constexpr std::string_view kExtraPrefix = "<extra_id_";

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;  // stray continuation byte: treat as its own unit
}

std::vector<std::size_t> codepoint_boundaries(std::string_view text) {
  std::vector<std::size_t> bounds;
  bounds.reserve(text.size() + 1);
  std::size_t pos = 0;
  while (pos < text.size()) {
    bounds.push_back(pos);
    pos += std::min(utf8_length(static_cast<unsigned char>(text[pos])), text.size() - pos);
  }
  bounds.push_back(text.size());
  return bounds;
}

std::optional<std::size_t> parse_extra_id(std::string_view piece) {
  if (!piece.starts_with(kExtraPrefix) || !piece.ends_with(">")) {
    return std::nullopt;
  }
  const auto digits = piece.substr(kExtraPrefix.size(), piece.size() - kExtraPrefix.size() - 1);
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(std::stoul(std::string(digits)));
}

bool is_word_byte(unsigned char c) {
  return std::isalnum(c) != 0 || c >= 0x80;
}

}  // namespace

std::string Tokenizer::normalize(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    const bool nbsp = c == 0xC2 && i + 1 < text.size() && static_cast<unsigned char>(text[i + 1]) == 0xA0;
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v' || nbsp) {
      pending_space = true;
      if (nbsp) {
        ++i;
      }
      continue;
    }
    if (pending_space && !out.empty()) {
      out.push_back(' ');
    }
    pending_space = false;
    out.push_back(static_cast<char>(c));
  }
  return out;
}

Tokenizer Tokenizer::from_pieces(std::vector<std::pair<std::string, double>> pieces, std::size_t extra_ids) {
  Tokenizer tok;
  const bool has_extra = std::any_of(pieces.begin(), pieces.end(),
                                     [](const auto& p) { return parse_extra_id(p.first).has_value(); });
  if (!has_extra) {
    const std::size_t base = pieces.size();
    pieces.resize(base + extra_ids);
    for (std::size_t i = 0; i < extra_ids; ++i) {
      pieces[base + extra_ids - 1 - i] = {fmt::format("<extra_id_{}>", i), 0.0};
    }
  }
  tok.pieces_ = std::move(pieces);
  tok.index();
  return tok;
}

void Tokenizer::index() {
  lookup_.clear();
  std::map<std::size_t, TokenId> sentinel_map;
  std::optional<TokenId> pad, eos, unk;
  TokenId lo = std::numeric_limits<TokenId>::max();
  TokenId hi = -1;
  std::size_t text_count = 0;
  double min_score = 0.0;
  max_piece_bytes_ = 1;
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    const std::string& piece = pieces_[i].first;
    if (piece.empty()) {
      throw SchemaError(fmt::format("vocabulary line {}: empty piece", i + 1));
    }
    if (!lookup_.emplace(piece, id).second) {
      throw SchemaError(fmt::format("vocabulary line {}: duplicate piece '{}'", i + 1, piece));
    }
    if (piece == kPad) {
      pad = id;
    } else if (piece == kEos) {
      eos = id;
    } else if (piece == kUnk) {
      unk = id;
    } else if (auto extra = parse_extra_id(piece)) {
      sentinel_map[*extra] = id;
    } else {
      lo = std::min(lo, id);
      hi = std::max(hi, id);
      ++text_count;
      min_score = std::min(min_score, pieces_[i].second);
      max_piece_bytes_ = std::max(max_piece_bytes_, piece.size());
    }
  }
  if (!pad || !eos || !unk) {
    throw SchemaError("vocabulary must define <pad>, </s> and <unk>");
  }
  special_.pad = *pad;
  special_.eos = *eos;
  special_.unk = *unk;
  special_.sentinels.clear();
  for (const auto& [index, id] : sentinel_map) {
    if (index != special_.sentinels.size()) {
      throw SchemaError(fmt::format("vocabulary sentinels are not contiguous: missing <extra_id_{}>", special_.sentinels.size()));
    }
    special_.sentinels.push_back(id);
  }
  if (text_count == 0) {
    lo = hi = 0;
    text_range_ = {0, 0};
  } else {
    if (static_cast<std::size_t>(hi - lo + 1) != text_count) {
      throw SchemaError("vocabulary special pieces must lie outside the text-piece id range");
    }
    text_range_ = {lo, hi + 1};
  }
  unk_score_ = min_score - 10.0;
}

Tokenizer Tokenizer::from_vocab_text(std::string_view text, std::size_t extra_ids) {
  std::vector<std::pair<std::string, double>> pieces;
  std::size_t line_number = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_number;
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      pieces.emplace_back(line, 0.0);
      continue;
    }
    try {
      pieces.emplace_back(line.substr(0, tab), std::stod(line.substr(tab + 1)));
    } catch (const std::exception&) {
      throw SchemaError(fmt::format("vocabulary line {}: bad score", line_number));
    }
  }
  return from_pieces(std::move(pieces), extra_ids);
}

Tokenizer Tokenizer::load(const std::filesystem::path& path, std::size_t extra_ids) {
  try {
    return from_vocab_text(read_file(path), extra_ids);
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

std::string Tokenizer::to_vocab_text() const {
  std::string out;
  for (const auto& [piece, score] : pieces_) {
    out += piece;
    out += '\t';
    out += fmt::format("{:.17g}", score);
    out += '\n';
  }
  return out;
}

void Tokenizer::save(const std::filesystem::path& path) const {
  write_file_atomic(path, to_vocab_text());
}

std::string Tokenizer::fingerprint() const {
  return sha256_hex(to_vocab_text()).substr(0, 16);
}

bool Tokenizer::is_special(TokenId id) const {
  return id == special_.pad || id == special_.eos || id == special_.unk || is_sentinel(id);
}

bool Tokenizer::is_sentinel(TokenId id) const {
  return sentinel_index(id).has_value();
}

std::optional<std::size_t> Tokenizer::sentinel_index(TokenId id) const {
  if (id >= text_range_.first && id < text_range_.second) {
    return std::nullopt;
  }
  const auto it = std::find(special_.sentinels.begin(), special_.sentinels.end(), id);
  if (it == special_.sentinels.end()) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(it - special_.sentinels.begin());
}

std::optional<TokenId> Tokenizer::find(std::string_view piece) const {
  const auto it = lookup_.find(std::string(piece));
  if (it == lookup_.end()) {
    return std::nullopt;
  }
  return it->second;
}

TokenSequence Tokenizer::encode(std::string_view text) const {
  TokenSequence out;
  const std::string normalized = normalize(text);
  if (normalized.empty()) {
    return out;
  }
  const auto is_text_piece = [&](TokenId id) { return id >= text_range_.first && id < text_range_.second; };
  std::string word;
  for (const auto& raw_word : split(normalized, ' ')) {
    word.assign(kWordMark);
    word += raw_word;
    const auto bounds = codepoint_boundaries(word);
    const std::size_t n = bounds.size() - 1;
    // best[k]: best score segmenting the first k codepoints.
    std::vector<double> best(n + 1, -std::numeric_limits<double>::infinity());
    std::vector<std::size_t> back(n + 1, 0);
    std::vector<TokenId> chosen(n + 1, special_.unk);
    best[0] = 0.0;
    for (std::size_t start = 0; start < n; ++start) {
      if (!std::isfinite(best[start])) {
        continue;
      }
      bool single_covered = false;
      for (std::size_t end = start + 1; end <= n && bounds[end] - bounds[start] <= max_piece_bytes_; ++end) {
        const auto it = lookup_.find(word.substr(bounds[start], bounds[end] - bounds[start]));
        if (it == lookup_.end() || !is_text_piece(it->second)) {
          continue;
        }
        if (end == start + 1) {
          single_covered = true;
        }
        const double score = best[start] + pieces_[static_cast<std::size_t>(it->second)].second;
        if (score > best[end]) {
          best[end] = score;
          back[end] = start;
          chosen[end] = it->second;
        }
      }
      if (!single_covered) {
        const double score = best[start] + unk_score_;
        if (score > best[start + 1]) {
          best[start + 1] = score;
          back[start + 1] = start;
          chosen[start + 1] = special_.unk;
        }
      }
    }
    std::vector<TokenId> reversed;
    for (std::size_t k = n; k > 0; k = back[k]) {
      reversed.push_back(chosen[k]);
    }
    for (auto it = reversed.rbegin(); it != reversed.rend(); ++it) {
      // Consecutive unknown characters collapse into one <unk>.
      if (*it == special_.unk && !out.ids.empty() && out.ids.back() == special_.unk) {
        continue;
      }
      out.ids.push_back(*it);
    }
  }
  return out;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (const TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size()) {
      throw InvalidArgument(fmt::format("token id {} outside vocabulary of {}", id, pieces_.size()));
    }
    if (id == special_.pad || id == special_.eos) {
      continue;
    }
    if (id == special_.unk) {
      out += kUnknownGlyph;
      continue;
    }
    const std::string& piece = pieces_[static_cast<std::size_t>(id)].first;
    if (is_sentinel(id)) {
      out += piece;
      continue;
    }
    std::size_t pos = 0;
    while (pos < piece.size()) {
      if (piece.compare(pos, kWordMark.size(), kWordMark) == 0) {
        out.push_back(' ');
        pos += kWordMark.size();
      } else {
        out.push_back(piece[pos++]);
      }
    }
  }
  if (!out.empty() && out.front() == ' ') {
    out.erase(out.begin());
  }
  return out;
}

Tokenizer build_vocabulary(const std::vector<std::string>& texts, const VocabOptions& options) {
  std::map<std::string, std::size_t> counts;
  std::map<std::string, std::size_t> chars;
  std::size_t total = 0;
  for (const auto& text : texts) {
    const std::string normalized = Tokenizer::normalize(text);
    if (normalized.empty()) {
      continue;
    }
    for (const auto& word : split(normalized, ' ')) {
      const auto bounds = codepoint_boundaries(word);
      for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
        ++chars[word.substr(bounds[k], bounds[k + 1] - bounds[k])];
      }
      std::size_t pos = 0;
      bool first = true;
      while (pos < word.size()) {
        std::size_t end = pos;
        if (is_word_byte(static_cast<unsigned char>(word[pos]))) {
          while (end < word.size() && is_word_byte(static_cast<unsigned char>(word[end]))) {
            ++end;
          }
        } else {
          end = pos + 1;
        }
        std::string piece = first ? std::string(kWordMark) : std::string();
        piece += word.substr(pos, end - pos);
        ++counts[piece];
        ++total;
        first = false;
        pos = end;
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::pair<std::string, double>> pieces = {
      {std::string(kPad), 0.0}, {std::string(kEos), 0.0}, {std::string(kUnk), 0.0}};
  std::map<std::string, bool> present;
  const double denom = static_cast<double>(std::max<std::size_t>(total, 1));
  for (const auto& [piece, count] : ranked) {
    if (count < options.min_count || pieces.size() - 3 >= options.max_pieces) {
      break;
    }
    pieces.emplace_back(piece, std::log(static_cast<double>(count) / denom));
    present[piece] = true;
  }
  const double char_floor = std::log(1.0 / denom) - 5.0;
  if (!present.contains(std::string(kWordMark))) {
    pieces.emplace_back(std::string(kWordMark), char_floor);
    present[std::string(kWordMark)] = true;
  }
  for (const auto& entry : chars) {
    const std::string& ch = entry.first;
    if (present.contains(ch)) {
      continue;
    }
    pieces.emplace_back(ch, char_floor);
    present[ch] = true;
  }
  for (std::size_t i = options.num_sentinels; i > 0; --i) {
    pieces.emplace_back(fmt::format("<extra_id_{}>", i - 1), 0.0);
  }
  return Tokenizer::from_pieces(std::move(pieces), 0);
}

}  // namespace eduqg
