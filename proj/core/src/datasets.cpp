#include "eduqg/datasets.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "eduqg/error.hpp"

namespace eduqg {

std::string_view to_string(Source source) {
  switch (source) {
    case Source::kSquad:
      return "SQUAD";
    case Source::kSciq:
      return "SCIQ";
    case Source::kOther:
      return "OTHER";
  }
  return "OTHER";
}

Source source_from_string(std::string_view name) {
  if (name == "SQUAD") return Source::kSquad;
  if (name == "SCIQ") return Source::kSciq;
  if (name == "OTHER") return Source::kOther;
  throw SchemaError(fmt::format("unknown source '{}'", name));
}

std::string_view to_string(SplitName split) {
  switch (split) {
    case SplitName::kTrain:
      return "train";
    case SplitName::kValidation:
      return "validation";
    case SplitName::kTest:
      return "test";
  }
  return "train";
}

SplitName split_from_string(std::string_view name) {
  if (name == "train" || name == "TRAIN") return SplitName::kTrain;
  if (name == "validation" || name == "valid" || name == "dev" || name == "VALIDATION") return SplitName::kValidation;
  if (name == "test" || name == "TEST") return SplitName::kTest;
  throw ConfigError(fmt::format("unknown split '{}'", name));
}

CorpusSchema corpus_schema_from_string(std::string_view name) {
  if (name == "s2orc") return CorpusSchema::kS2orc;
  if (name == "canonical" || name == "documents") return CorpusSchema::kCanonical;
  throw ConfigError(fmt::format("unknown corpus schema '{}'", name));
}

namespace {

bool is_blank(std::string_view text) {
  return std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::optional<std::string> id_field(const Json& record, std::initializer_list<const char*> keys) {
  for (const char* key : keys) {
    const auto it = record.find(key);
    if (it == record.end() || it->is_null()) {
      continue;
    }
    if (it->is_string()) {
      return it->get<std::string>();
    }
    if (it->is_number_integer()) {
      return std::to_string(it->get<long long>());
    }
  }
  return std::nullopt;
}

void add_string_list(const Json& value, std::set<std::string>& out) {
  if (!value.is_array()) {
    if (value.is_string()) {
      out.insert(value.get<std::string>());
    }
    return;
  }
  for (const auto& item : value) {
    if (item.is_string()) {
      out.insert(item.get<std::string>());
    } else if (item.is_object() && item.contains("category") && item["category"].is_string()) {
      out.insert(item["category"].get<std::string>());
    }
  }
}

// Returns nullopt when the record carries no usable abstract.
std::optional<Document> parse_s2orc_record(const Json& record) {
  Document doc;
  auto id = id_field(record, {"paper_id", "corpusid", "id"});
  if (!id) {
    throw SchemaError("record has no paper_id");
  }
  doc.id = std::move(*id);
  if (const auto it = record.find("title"); it != record.end() && it->is_string()) {
    doc.title = it->get<std::string>();
  }
  const auto abstract = record.find("abstract");
  if (abstract == record.end() || !abstract->is_string() || is_blank(abstract->get_ref<const std::string&>())) {
    return std::nullopt;
  }
  doc.abstract = abstract->get<std::string>();
  for (const char* key : {"mag_field_of_study", "fieldsOfStudy", "s2fieldsofstudy", "fields_of_study"}) {
    if (const auto it = record.find(key); it != record.end()) {
      add_string_list(*it, doc.fields_of_study);
    }
  }
  return doc;
}

}  // namespace

Json to_json(const Document& doc) {
  Json j;
  j["id"] = doc.id;
  j["title"] = doc.title ? Json(*doc.title) : Json(nullptr);
  j["abstract"] = doc.abstract;
  j["fields_of_study"] = Json::array();
  for (const auto& field : doc.fields_of_study) {
    j["fields_of_study"].push_back(field);
  }
  return j;
}

Document document_from_json(const Json& value) {
  if (!value.is_object()) {
    throw SchemaError("document record is not an object");
  }
  const auto id = id_field(value, {"id"});
  if (!id) {
    throw SchemaError("document record has no id");
  }
  Document doc;
  doc.id = *id;
  if (const auto it = value.find("title"); it != value.end() && it->is_string()) {
    doc.title = it->get<std::string>();
  }
  if (const auto it = value.find("abstract"); it != value.end() && it->is_string()) {
    doc.abstract = it->get<std::string>();
  }
  if (const auto it = value.find("fields_of_study"); it != value.end()) {
    add_string_list(*it, doc.fields_of_study);
  }
  return doc;
}

AbstractCorpusReader::AbstractCorpusReader(const std::filesystem::path& path, CorpusSchema schema)
    : path_(path), schema_(schema), in_(path) {
  if (!in_) {
    throw IoError("cannot open " + path.string());
  }
}

std::optional<Document> AbstractCorpusReader::next() {
  if (finished_) {
    return std::nullopt;
  }
  std::string line;
  while (std::getline(in_, line)) {
    ++line_number_;
    if (is_blank(line)) {
      continue;
    }
    ++stats_.records;
    std::optional<Document> doc;
    try {
      const Json record = Json::parse(line);
      if (!record.is_object()) {
        throw SchemaError("line is not a JSON object");
      }
      if (schema_ == CorpusSchema::kS2orc) {
        doc = parse_s2orc_record(record);
      } else {
        doc = document_from_json(record);
        if (is_blank(doc->abstract)) {
          doc.reset();
        }
      }
    } catch (const std::exception& e) {
      ++stats_.malformed;
      spdlog::warn("{}:{}: skipping malformed line: {}", path_.string(), line_number_, e.what());
      continue;
    }
    if (!doc) {
      ++stats_.skipped;
      continue;
    }
    ++stats_.kept;
    return doc;
  }
  if (in_.bad()) {
    throw IoError("read failed: " + path_.string());
  }
  finished_ = true;
  if (stats_.records > 0 && 2 * stats_.malformed > stats_.records) {
    throw SchemaError(fmt::format("{}: {} of {} lines malformed", path_.string(), stats_.malformed, stats_.records));
  }
  return std::nullopt;
}

Loaded<std::vector<Document>> load_abstract_corpus(const std::filesystem::path& path, CorpusSchema schema) {
  AbstractCorpusReader reader(path, schema);
  Loaded<std::vector<Document>> out;
  std::unordered_set<std::string> seen;
  while (auto doc = reader.next()) {
    if (!seen.insert(doc->id).second) {
      spdlog::warn("{}: duplicate document id '{}' skipped", path.string(), doc->id);
      ++out.stats.skipped;
      continue;
    }
    out.value.push_back(std::move(*doc));
  }
  const auto& stats = reader.stats();
  out.stats.records = stats.records;
  out.stats.malformed = stats.malformed;
  out.stats.skipped += stats.skipped;
  out.stats.kept = out.value.size();
  return out;
}

bool has_any_field(const Document& doc, const std::set<std::string>& fields) {
  return std::any_of(doc.fields_of_study.begin(), doc.fields_of_study.end(),
                     [&](const std::string& field) { return fields.contains(field); });
}

std::vector<Document> filter_by_field(const std::vector<Document>& docs, const std::set<std::string>& fields) {
  if (fields.empty()) {
    throw InvalidArgument("filter_by_field: field set must be non-empty");
  }
  std::vector<Document> out;
  std::copy_if(docs.begin(), docs.end(), std::back_inserter(out),
               [&](const Document& doc) { return has_any_field(doc, fields); });
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(population);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (n >= population) {
    return order;
  }
  Rng rng(seed);
  // Partial Fisher-Yates from the front: position i receives a uniform pick
  // from the remaining suffix, so the first n entries are a uniform sample
  // and the first m < n entries are the sample for m.
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(population - i));
    std::swap(order[i], order[j]);
  }
  order.resize(n);
  std::sort(order.begin(), order.end());
  return order;
}

// --- SQuAD / SciQ -----------------------------------------------------------

namespace {

const Json& require(const Json& node, const char* key, const std::string& path) {
  if (!node.is_object()) {
    throw SchemaError(fmt::format("{}: expected object", path));
  }
  const auto it = node.find(key);
  if (it == node.end()) {
    throw SchemaError(fmt::format("{}.{}: missing", path, key));
  }
  return *it;
}

const Json& require_array(const Json& node, const char* key, const std::string& path) {
  const Json& value = require(node, key, path);
  if (!value.is_array()) {
    throw SchemaError(fmt::format("{}.{}: expected array", path, key));
  }
  return value;
}

std::string require_string(const Json& node, const char* key, const std::string& path) {
  const Json& value = require(node, key, path);
  if (!value.is_string()) {
    throw SchemaError(fmt::format("{}.{}: expected string", path, key));
  }
  return value.get<std::string>();
}

}  // namespace

Loaded<DatasetSplit<QGExample>> parse_squad(const Json& root, SplitName split, std::string_view origin) {
  Loaded<DatasetSplit<QGExample>> out;
  out.value.name = split;
  const std::string base(origin);
  const Json& data = require_array(root, "data", base);
  for (std::size_t a = 0; a < data.size(); ++a) {
    const std::string article_path = fmt::format("{}.data[{}]", base, a);
    const Json& paragraphs = require_array(data[a], "paragraphs", article_path);
    for (std::size_t p = 0; p < paragraphs.size(); ++p) {
      const std::string para_path = fmt::format("{}.paragraphs[{}]", article_path, p);
      const std::string context = require_string(paragraphs[p], "context", para_path);
      const Json& qas = require_array(paragraphs[p], "qas", para_path);
      for (std::size_t q = 0; q < qas.size(); ++q) {
        const std::string qa_path = fmt::format("{}.qas[{}]", para_path, q);
        ++out.stats.records;
        QGExample ex;
        ex.source = Source::kSquad;
        ex.context = context;
        ex.question = require_string(qas[q], "question", qa_path);
        ex.id = qas[q].contains("id") ? require_string(qas[q], "id", qa_path) : fmt::format("squad-{}-{}-{}", a, p, q);
        if (const auto it = qas[q].find("answers"); it != qas[q].end()) {
          if (!it->is_array()) {
            throw SchemaError(fmt::format("{}.answers: expected array", qa_path));
          }
          if (!it->empty()) {
            ex.answer = require_string((*it)[0], "text", fmt::format("{}.answers[0]", qa_path));
          }
        }
        if (is_blank(ex.context) || is_blank(ex.question)) {
          ++out.stats.skipped;
          continue;
        }
        out.value.examples.push_back(std::move(ex));
      }
    }
  }
  out.stats.kept = out.value.examples.size();
  return out;
}

Loaded<DatasetSplit<QGExample>> load_squad(const std::filesystem::path& path, SplitName split) {
  return parse_squad(read_json(path), split, path.string() + ":$");
}

Loaded<DatasetSplit<QGExample>> parse_sciq(const Json& root, SplitName split, std::string_view origin) {
  Loaded<DatasetSplit<QGExample>> out;
  out.value.name = split;
  if (!root.is_array()) {
    throw SchemaError(fmt::format("{}: expected array of SciQ records", origin));
  }
  for (std::size_t i = 0; i < root.size(); ++i) {
    const std::string path = fmt::format("{}[{}]", origin, i);
    ++out.stats.records;
    QGExample ex;
    ex.source = Source::kSciq;
    ex.id = fmt::format("sciq-{}-{}", to_string(split), i);
    ex.question = require_string(root[i], "question", path);
    ex.answer = require_string(root[i], "correct_answer", path);
    const Json& support = require(root[i], "support", path);
    if (!support.is_string() && !support.is_null()) {
      throw SchemaError(fmt::format("{}.support: expected string", path));
    }
    ex.context = support.is_string() ? support.get<std::string>() : std::string();
    if (is_blank(ex.context) || is_blank(ex.question)) {
      ++out.stats.skipped;
      continue;
    }
    out.value.examples.push_back(std::move(ex));
  }
  out.stats.kept = out.value.examples.size();
  return out;
}

Loaded<DatasetSplit<QGExample>> load_sciq(const std::filesystem::path& path, SplitName split) {
  return parse_sciq(read_json(path), split, path.string() + ":$");
}

Json to_json(const QGExample& example) {
  Json j;
  j["id"] = example.id;
  j["context"] = example.context;
  j["question"] = example.question;
  j["answer"] = example.answer ? Json(*example.answer) : Json(nullptr);
  j["source"] = std::string(to_string(example.source));
  return j;
}

QGExample qg_example_from_json(const Json& value) {
  QGExample ex;
  ex.id = require_string(value, "id", "$");
  ex.context = require_string(value, "context", "$");
  ex.question = require_string(value, "question", "$");
  if (const auto it = value.find("answer"); it != value.end() && it->is_string()) {
    ex.answer = it->get<std::string>();
  }
  if (const auto it = value.find("source"); it != value.end() && it->is_string()) {
    ex.source = source_from_string(it->get<std::string>());
  }
  return ex;
}

void write_qg_jsonl(const std::filesystem::path& path, const std::vector<QGExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += to_json(ex).dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<QGExample> read_qg_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::vector<QGExample> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (is_blank(line)) {
      continue;
    }
    try {
      out.push_back(qg_example_from_json(Json::parse(line)));
    } catch (const std::exception& e) {
      throw SchemaError(fmt::format("{}:{}: {}", path.string(), number, e.what()));
    }
  }
  return out;
}

void write_documents_jsonl(const std::filesystem::path& path, const std::vector<Document>& docs) {
  std::string out;
  for (const auto& doc : docs) {
    out += to_json(doc).dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<std::string> overlapping_ids(const std::vector<QGExample>& a, const std::vector<QGExample>& b) {
  std::unordered_set<std::string> ids;
  for (const auto& ex : a) {
    ids.insert(ex.id);
  }
  std::vector<std::string> shared;
  for (const auto& ex : b) {
    if (ids.contains(ex.id)) {
      shared.push_back(ex.id);
    }
  }
  return shared;
}

}  // namespace eduqg
