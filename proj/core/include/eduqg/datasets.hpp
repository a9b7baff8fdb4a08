#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "eduqg/io.hpp"
#include "eduqg/rng.hpp"

namespace eduqg {

/// One scientific abstract, the unit of continued pre-training.
struct Document {
  std::string id;
  std::optional<std::string> title;
  std::string abstract;
  std::set<std::string> fields_of_study;

  friend bool operator==(const Document&, const Document&) = default;
};

enum class Source { kSquad, kSciq, kOther };

std::string_view to_string(Source source);
Source source_from_string(std::string_view name);

/// (context, question[, answer]). The context is the only model input.
struct QGExample {
  std::string id;
  std::string context;
  std::string question;
  std::optional<std::string> answer;
  Source source = Source::kOther;

  friend bool operator==(const QGExample&, const QGExample&) = default;
};

enum class SplitName { kTrain, kValidation, kTest };

std::string_view to_string(SplitName split);
SplitName split_from_string(std::string_view name);

template <typename Record>
struct DatasetSplit {
  SplitName name = SplitName::kTrain;
  std::vector<Record> examples;
};

/// Counters every loader fills in alongside its records.
struct LoadStats {
  std::size_t records = 0;    // records seen (lines or array items)
  std::size_t kept = 0;
  std::size_t skipped = 0;    // well-formed but filtered (missing or empty text)
  std::size_t malformed = 0;  // lines that failed to parse
};

template <typename T>
struct Loaded {
  T value;
  LoadStats stats;
};

/// Input schema for abstract corpora.
///  - kS2orc: S2ORC / Semantic Scholar metadata lines; id from `paper_id`
///    (or `corpusid`, `id`), fields from `mag_field_of_study`,
///    `fieldsOfStudy` or `s2fieldsofstudy[].category`.
///  - kCanonical: the library's own Document lines
///    (`id`, `title`, `abstract`, `fields_of_study`).
enum class CorpusSchema { kS2orc, kCanonical };

CorpusSchema corpus_schema_from_string(std::string_view name);

/// Streams Documents from a JSON Lines file in file order.
///
/// Records without a usable abstract are skipped and counted. Malformed lines
/// are logged and skipped; when the stream is exhausted, more than half of
/// the non-blank lines being malformed is fatal (SchemaError). One consumer
/// per reader.
class AbstractCorpusReader {
 public:
  AbstractCorpusReader(const std::filesystem::path& path, CorpusSchema schema);

  /// Next Document, or nullopt at end of file.
  std::optional<Document> next();

  const LoadStats& stats() const { return stats_; }

 private:
  std::filesystem::path path_;
  CorpusSchema schema_;
  std::ifstream in_;
  std::size_t line_number_ = 0;
  LoadStats stats_;
  bool finished_ = false;
};

/// Drains an AbstractCorpusReader.
Loaded<std::vector<Document>> load_abstract_corpus(const std::filesystem::path& path, CorpusSchema schema);

/// Keeps documents whose fields_of_study intersect `fields` (non-empty).
std::vector<Document> filter_by_field(const std::vector<Document>& docs, const std::set<std::string>& fields);
bool has_any_field(const Document& doc, const std::set<std::string>& fields);

/// Uniform sample without replacement of min(n, |docs|) items, returned in
/// their original relative order. Deterministic in (docs, n, seed).
///
/// Below `materialize_limit` items the whole index range is permuted with a
/// partial Fisher-Yates; the sample for n is then a prefix of the sample for
/// any larger n under the same seed. Above the limit a single-pass reservoir
/// is used instead.
template <typename T>
std::vector<T> downsample(const std::vector<T>& items, std::size_t n, std::uint64_t seed,
                          std::size_t materialize_limit = 5'000'000);

/// Reservoir sample (Algorithm R) over a stream of unknown length; result in
/// stream order.
template <typename T>
std::vector<T> reservoir_sample(const std::function<std::optional<T>()>& next, std::size_t n, std::uint64_t seed);

/// Index-level primitive behind downsample().
std::vector<std::size_t> sample_indices(std::size_t population, std::size_t n, std::uint64_t seed);

/// SQuAD v1.1 JSON: one QGExample per (context, question); answer is the
/// first answer text when present. Schema violations raise SchemaError with
/// the JSON path of the offending node.
Loaded<DatasetSplit<QGExample>> load_squad(const std::filesystem::path& path, SplitName split = SplitName::kTrain);
Loaded<DatasetSplit<QGExample>> parse_squad(const Json& root, SplitName split, std::string_view origin = "$");

/// SciQ JSON array. context = support, question = question,
/// answer = correct_answer. Records with empty support are skipped. Ids are
/// `sciq-<split>-<record index>`.
Loaded<DatasetSplit<QGExample>> load_sciq(const std::filesystem::path& path, SplitName split);
Loaded<DatasetSplit<QGExample>> parse_sciq(const Json& root, SplitName split, std::string_view origin = "$");

/// Canonical JSON Lines: fields exactly id, context, question, answer, source.
Json to_json(const QGExample& example);
QGExample qg_example_from_json(const Json& value);
Json to_json(const Document& doc);
Document document_from_json(const Json& value);

void write_qg_jsonl(const std::filesystem::path& path, const std::vector<QGExample>& examples);
std::vector<QGExample> read_qg_jsonl(const std::filesystem::path& path);
void write_documents_jsonl(const std::filesystem::path& path, const std::vector<Document>& docs);

/// Ids shared between two splits (empty when disjoint).
std::vector<std::string> overlapping_ids(const std::vector<QGExample>& a, const std::vector<QGExample>& b);


// ---------------------------------------------------------------------------

template <typename T>
std::vector<T> downsample(const std::vector<T>& items, std::size_t n, std::uint64_t seed,
                          std::size_t materialize_limit) {
  if (n >= items.size()) {
    return items;
  }
  if (items.size() > materialize_limit) {
    std::size_t cursor = 0;
    return reservoir_sample<T>(
        [&]() -> std::optional<T> {
          if (cursor == items.size()) {
            return std::nullopt;
          }
          return items[cursor++];
        },
        n, seed);
  }
  std::vector<T> out;
  out.reserve(n);
  for (const auto index : sample_indices(items.size(), n, seed)) {
    out.push_back(items[index]);
  }
  return out;
}

template <typename T>
std::vector<T> reservoir_sample(const std::function<std::optional<T>()>& next, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::pair<std::size_t, T>> reservoir;
  reservoir.reserve(n);
  std::size_t seen = 0;
  while (auto item = next()) {
    if (reservoir.size() < n) {
      reservoir.emplace_back(seen, std::move(*item));
    } else if (n > 0) {
      const auto j = static_cast<std::size_t>(rng.uniform_index(seen + 1));
      if (j < n) {
        reservoir[j] = {seen, std::move(*item)};
      }
    }
    ++seen;
  }
  std::sort(reservoir.begin(), reservoir.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<T> out;
  out.reserve(reservoir.size());
  for (auto& entry : reservoir) {
    out.push_back(std::move(entry.second));
  }
  return out;
}

}  // namespace eduqg
