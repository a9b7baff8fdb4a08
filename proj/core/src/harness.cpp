#include "eduqg/harness.hpp"

#include <algorithm>
#include <ctime>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "eduqg/config.hpp"
#include "eduqg/error.hpp"

namespace eduqg {

namespace fs = std::filesystem;

std::string to_string(ModelId id) {
  switch (id) {
    case ModelId::kLeaf:
      return "LEAF";
    case ModelId::kEduqgSmall:
      return "EDUQG_SMALL";
    case ModelId::kEduqgLarge:
      return "EDUQG_LARGE";
    case ModelId::kLeafPlus:
      return "LEAF_PLUS";
    case ModelId::kEduqgPlus:
      return "EDUQG_PLUS";
  }
  return "LEAF";
}

ModelId model_from_string(const std::string& s) {
  for (const auto id : all_models()) {
    if (to_string(id) == s) return id;
  }
  throw ConfigError("unknown model '" + s + "' (LEAF, EDUQG_SMALL, EDUQG_LARGE, LEAF_PLUS, EDUQG_PLUS)");
}

std::string display_name(ModelId id) {
  switch (id) {
    case ModelId::kLeaf:
      return "Leaf";
    case ModelId::kEduqgSmall:
      return "EduQG Small";
    case ModelId::kEduqgLarge:
      return "EduQG Large";
    case ModelId::kLeafPlus:
      return "Leaf+";
    case ModelId::kEduqgPlus:
      return "EduQG+";
  }
  return "Leaf";
}

const std::vector<ModelId>& all_models() {
  static const std::vector<ModelId> ids = {ModelId::kLeaf, ModelId::kEduqgSmall, ModelId::kEduqgLarge,
                                           ModelId::kLeafPlus, ModelId::kEduqgPlus};
  return ids;
}

std::vector<std::string> expected_path(ModelId id) {
  switch (id) {
    case ModelId::kLeaf:
      return {"FINETUNE:squad"};
    case ModelId::kEduqgSmall:
    case ModelId::kEduqgLarge:
      return {"PRETRAIN:s2orc", "FINETUNE:squad"};
    case ModelId::kLeafPlus:
      return {"FINETUNE:squad", "FINETUNE:sciq"};
    case ModelId::kEduqgPlus:
      return {"PRETRAIN:s2orc", "FINETUNE:squad", "FINETUNE:sciq"};
  }
  return {};
}

std::optional<ModelId> classify_path(const std::vector<ProvenanceRecord>& provenance, std::size_t small_size,
                                     std::size_t large_size) {
  if (provenance.empty() || provenance.front().stage != "BASE") return std::nullopt;
  std::vector<std::string> labels;
  for (std::size_t i = 1; i < provenance.size(); ++i) labels.push_back(provenance[i].label());
  const auto pretrain_size = [&]() -> std::optional<std::size_t> {
    for (const auto& r : provenance) {
      if (r.stage == "PRETRAIN") return r.examples;
    }
    return std::nullopt;
  };
  std::optional<ModelId> match;
  for (const auto id : all_models()) {
    if (expected_path(id) != labels) continue;
    if (id == ModelId::kEduqgSmall && pretrain_size() != small_size) continue;
    if ((id == ModelId::kEduqgLarge || id == ModelId::kEduqgPlus) && pretrain_size() != large_size) continue;
    match = id;
  }
  return match;
}

std::optional<ModelId> baseline_of(ModelId id) {
  switch (id) {
    case ModelId::kEduqgSmall:
    case ModelId::kEduqgLarge:
    case ModelId::kLeafPlus:
      return ModelId::kLeaf;
    case ModelId::kEduqgPlus:
      return ModelId::kEduqgLarge;
    case ModelId::kLeaf:
      return std::nullopt;
  }
  return std::nullopt;
}

std::vector<ModelId> report_rows(ReportStyle style) {
  switch (style) {
    case ReportStyle::kTable2:
      return {ModelId::kLeaf, ModelId::kEduqgSmall, ModelId::kEduqgLarge};
    case ReportStyle::kTable4:
      return {ModelId::kLeafPlus, ModelId::kEduqgPlus};
    case ReportStyle::kTable1:
      return {};
  }
  return {};
}

// --- configuration ------------------------------------------------------------------

namespace {

Json vocab_json(const VocabOptions& v) {
  return Json{{"max_pieces", v.max_pieces}, {"min_count", v.min_count}, {"num_sentinels", v.num_sentinels}};
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

TrainSpec stage_spec(const Json* user, Stage stage, const std::string& dataset, std::uint64_t seed,
                     const Json& defaults) {
  Json j = defaults;
  if (user) {
    if (user->contains("steps") || user->contains("epochs")) {
      j.erase("steps");
      j.erase("epochs");
    }
    j.merge_patch(*user);
  }
  j["stage"] = to_string(stage);
  j["dataset_id"] = dataset;
  if (!j.contains("seed")) j["seed"] = seed;
  return TrainSpec::from_json(j);
}

std::string now_iso() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (run_dir.empty()) throw ConfigError("run_dir is required");
  if (models.empty()) throw ConfigError("no models enabled");
  if (pretrain_small == 0 || pretrain_large == 0) throw ConfigError("pre-training sizes must be positive");
  if (pretrain_small >= pretrain_large) throw ConfigError("pretrain_sizes.small must be smaller than large");
  if (base.preset != "toy" && base.preset != "t5_small_compat") {
    throw ConfigError("base.preset must be toy or t5_small_compat");
  }
  if (base.preset == "t5_small_compat" && !base.path) throw ConfigError("t5_small_compat needs base.path");
  if (pretrain.stage != Stage::kPretrain || finetune_squad.stage != Stage::kFinetune ||
      finetune_sciq.stage != Stage::kFinetune) {
    throw ConfigError("train specs have the wrong stages");
  }
  decode.validate();
}

ExperimentConfig ExperimentConfig::from_json(const Json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  try {
    c.run_dir = resolve(base_dir, j.at("run_dir").get<std::string>());
    c.seed = j.value("seed", c.seed);
    if (const auto it = j.find("models"); it != j.end()) {
      c.models.clear();
      std::set<ModelId> seen;
      for (const auto& m : *it) {
        const auto id = model_from_string(m.get<std::string>());
        if (seen.insert(id).second) c.models.push_back(id);
      }
      std::sort(c.models.begin(), c.models.end());
    }
    if (const auto it = j.find("base"); it != j.end()) {
      c.base.preset = it->value("preset", c.base.preset);
      if (it->contains("path") && !(*it)["path"].is_null()) c.base.path = resolve(base_dir, (*it)["path"]);
      if (const auto v = it->find("vocab"); v != it->end()) {
        c.base.vocab.max_pieces = v->value("max_pieces", c.base.vocab.max_pieces);
        c.base.vocab.min_count = v->value("min_count", c.base.vocab.min_count);
        c.base.vocab.num_sentinels = v->value("num_sentinels", c.base.vocab.num_sentinels);
      }
      if (it->contains("model")) c.base.model_overrides = (*it)["model"];
    }
    const Json& d = j.at("datasets");
    const auto opt_path = [&](const char* key) -> std::optional<fs::path> {
      if (!d.contains(key) || d[key].is_null()) return std::nullopt;
      return resolve(base_dir, d[key].get<std::string>());
    };
    if (auto p = opt_path("s2orc")) c.datasets.s2orc = *p;
    c.datasets.s2orc_schema = d.value("s2orc_schema", c.datasets.s2orc_schema);
    if (d.contains("s2orc_fields")) c.datasets.s2orc_fields = d["s2orc_fields"].get<std::set<std::string>>();
    c.datasets.squad_train = resolve(base_dir, d.at("squad_train").get<std::string>());
    c.datasets.squad_validation = opt_path("squad_validation");
    if (auto p = opt_path("sciq_train")) c.datasets.sciq_train = *p;
    c.datasets.sciq_validation = opt_path("sciq_validation");
    c.datasets.sciq_test = resolve(base_dir, d.at("sciq_test").get<std::string>());
    if (const auto it = j.find("pretrain_sizes"); it != j.end()) {
      c.pretrain_small = it->value("small", c.pretrain_small);
      c.pretrain_large = it->value("large", c.pretrain_large);
    }
    const Json train = j.value("train", Json::object());
    const auto user = [&](const char* key) { return train.contains(key) ? &train[key] : nullptr; };
    const Json pretrain_defaults = {{"steps", 500}, {"batch_size", 8}};
    const Json finetune_defaults = {{"epochs", 3}, {"batch_size", 8}};
    c.pretrain = stage_spec(user("pretrain"), Stage::kPretrain, "s2orc", c.seed, pretrain_defaults);
    c.finetune_squad = stage_spec(user("finetune_squad"), Stage::kFinetune, "squad", c.seed, finetune_defaults);
    c.finetune_sciq = stage_spec(user("finetune_sciq"), Stage::kFinetune, "sciq", c.seed, finetune_defaults);
    if (j.contains("decode")) c.decode = DecodeSpec::from_json(j["decode"]);
    c.scorer = j.value("scorer", Json{{"type", "uniform"}, {"vocab_size", 1000}});
    if (c.scorer.contains("corpus")) {
      Json& corpus = c.scorer["corpus"];
      if (!corpus.is_array()) corpus = Json::array({corpus});
      for (auto& p : corpus) p = resolve(base_dir, p.get<std::string>()).string();
    }
    if (const auto it = j.find("evaluation"); it != j.end()) {
      if (it->contains("test_limit") && !(*it)["test_limit"].is_null()) {
        c.test_limit = (*it)["test_limit"].get<std::size_t>();
      }
      c.distinct2 = it->value("distinct2", false);
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  try {
    return from_json(load_config(path), path.parent_path().empty() ? fs::path(".") : path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Json ExperimentConfig::to_json() const {
  Json j;
  j["run_dir"] = run_dir.string();
  j["seed"] = seed;
  j["models"] = Json::array();
  for (const auto id : models) j["models"].push_back(to_string(id));
  j["base"] = {{"preset", base.preset},
               {"path", base.path ? Json(base.path->string()) : Json(nullptr)},
               {"vocab", vocab_json(base.vocab)},
               {"model", base.model_overrides}};
  j["datasets"] = {{"s2orc", datasets.s2orc.string()},
                   {"s2orc_schema", datasets.s2orc_schema},
                   {"s2orc_fields", datasets.s2orc_fields},
                   {"squad_train", datasets.squad_train.string()},
                   {"squad_validation", datasets.squad_validation ? Json(datasets.squad_validation->string())
                                                                  : Json(nullptr)},
                   {"sciq_train", datasets.sciq_train.string()},
                   {"sciq_validation", datasets.sciq_validation ? Json(datasets.sciq_validation->string())
                                                                : Json(nullptr)},
                   {"sciq_test", datasets.sciq_test.string()}};
  j["pretrain_sizes"] = {{"small", pretrain_small}, {"large", pretrain_large}};
  j["train"] = {{"pretrain", pretrain.to_json()},
                {"finetune_squad", finetune_squad.to_json()},
                {"finetune_sciq", finetune_sciq.to_json()}};
  j["decode"] = decode.to_json();
  j["scorer"] = scorer;
  j["evaluation"] = {{"test_limit", test_limit ? Json(*test_limit) : Json(nullptr)}, {"distinct2", distinct2}};
  return j;
}

std::string ExperimentConfig::hash() const {
  return config_hash(to_json());
}

// --- manifest ---------------------------------------------------------------------

Json HumanBaseline::to_json() const {
  return Json{{"dataset", dataset},
              {"perplexity", perplexity},
              {"diversity", diversity},
              {"questions", questions},
              {"scorer_id", scorer_id}};
}

HumanBaseline HumanBaseline::from_json(const Json& j) {
  HumanBaseline h;
  h.dataset = j.at("dataset").get<std::string>();
  h.perplexity = j.at("perplexity").get<double>();
  h.diversity = j.at("diversity").get<double>();
  h.questions = j.value("questions", std::size_t{0});
  h.scorer_id = j.value("scorer_id", std::string());
  return h;
}

HumanBaseline human_baseline(const std::string& name, const DatasetSplit<QGExample>& split,
                             const LanguageScorer& scorer) {
  if (split.examples.empty()) throw InvalidArgument("human baseline: dataset has no questions");
  std::vector<std::string> questions;
  for (const auto& ex : split.examples) questions.push_back(ex.question);
  HumanBaseline h;
  h.dataset = name;
  h.perplexity = perplexity(questions, scorer).perplexity;
  h.diversity = diversity(questions);
  h.questions = questions.size();
  h.scorer_id = scorer.id();
  return h;
}

const ModelOutcome* RunManifest::find(ModelId id) const {
  for (const auto& m : models) {
    if (m.id == id) return &m;
  }
  return nullptr;
}

namespace {

Json outcome_json(const ModelOutcome& m, bool with_paths) {
  Json j;
  j["status"] = m.status;
  if (!m.error.empty()) j["error"] = m.error;
  j["provenance"] = Json::array();
  for (const auto& r : m.provenance) j["provenance"].push_back(r.to_json());
  j["stage_keys"] = m.stage_keys;
  if (with_paths) {
    j["checkpoint"] = m.checkpoint.string();
    j["questions"] = m.questions.string();
    j["report"] = m.report.string();
    j["per_example"] = m.per_example.string();
  }
  return j;
}

}  // namespace

std::string RunManifest::content_hash() const {
  Json j;
  j["config_hash"] = config_hash;
  j["models"] = Json::object();
  for (const auto& m : models) j["models"][to_string(m.id)] = outcome_json(m, true);
  j["significance"] = Json::array();
  for (const auto& s : significance) j["significance"].push_back(s.to_json());
  j["human_baselines"] = Json::array();
  for (const auto& h : human) j["human_baselines"].push_back(h.to_json());
  return eduqg::config_hash(j);
}

Json RunManifest::to_json() const {
  Json j;
  j["config_hash"] = config_hash;
  j["config"] = config;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  j["cache"] = {{"hits", cache_hits}, {"misses", cache_misses}};
  j["models"] = Json::object();
  for (const auto& m : models) j["models"][to_string(m.id)] = outcome_json(m, true);
  j["significance"] = Json::array();
  for (const auto& s : significance) j["significance"].push_back(s.to_json());
  j["human_baselines"] = Json::array();
  for (const auto& h : human) j["human_baselines"].push_back(h.to_json());
  j["content_hash"] = content_hash();
  return j;
}

RunManifest RunManifest::from_json(const Json& j) {
  RunManifest m;
  try {
    m.config_hash = j.at("config_hash").get<std::string>();
    m.config = j.value("config", Json::object());
    m.started_at = j.value("started_at", std::string());
    m.finished_at = j.value("finished_at", std::string());
    if (j.contains("cache")) {
      m.cache_hits = j["cache"].value("hits", std::size_t{0});
      m.cache_misses = j["cache"].value("misses", std::size_t{0});
    }
    for (const auto& [name, o] : j.at("models").items()) {
      ModelOutcome out;
      out.id = model_from_string(name);
      out.status = o.at("status").get<std::string>();
      out.error = o.value("error", std::string());
      for (const auto& r : o.at("provenance")) out.provenance.push_back(ProvenanceRecord::from_json(r));
      out.stage_keys = o.value("stage_keys", std::vector<std::string>{});
      out.checkpoint = o.value("checkpoint", std::string());
      out.questions = o.value("questions", std::string());
      out.report = o.value("report", std::string());
      out.per_example = o.value("per_example", std::string());
      m.models.push_back(std::move(out));
    }
    std::sort(m.models.begin(), m.models.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    for (const auto& s : j.value("significance", Json::array())) {
      m.significance.push_back(SignificanceResult::from_json(s));
    }
    for (const auto& h : j.value("human_baselines", Json::array())) m.human.push_back(HumanBaseline::from_json(h));
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("run manifest: ") + e.what());
  }
  return m;
}

void RunManifest::save(const fs::path& run_dir) const {
  write_json(run_dir / "manifest.json", to_json());
}

RunManifest RunManifest::load(const fs::path& run_dir) {
  const fs::path path = fs::is_directory(run_dir) ? run_dir / "manifest.json" : run_dir;
  return from_json(read_json(path));
}

std::vector<SignificanceResult> significance_tests(const std::map<ModelId, MetricReport>& reports) {
  std::vector<SignificanceResult> out;
  for (const auto& [id, report] : reports) {
    const auto base = baseline_of(id);
    if (!base || !reports.contains(*base)) continue;
    const MetricReport& b = reports.at(*base);
    if (b.ids != report.ids) {
      throw InvalidArgument(fmt::format("{} and {} were evaluated on different examples", to_string(id),
                                        to_string(*base)));
    }
    for (const std::string metric : {"bleu1", "bleu2", "bleu3", "bleu4", "f1"}) {
      auto r = paired_ttest(b.per_example(metric), report.per_example(metric), Direction::kCandidateGreater);
      r.metric = metric;
      r.baseline_id = to_string(*base);
      r.candidate_id = to_string(id);
      out.push_back(r);
    }
  }
  return out;
}

// --- the matrix -----------------------------------------------------------------------

namespace {

std::string short_hash(const std::string& text) {
  return sha256_hex(text).substr(0, 20);
}

std::string examples_hash(const std::vector<QGExample>& examples) {
  std::string buf;
  for (const auto& ex : examples) buf += to_json(ex).dump() + "\n";
  return sha256_hex(buf);
}

std::string documents_hash(const std::vector<Document>& docs) {
  std::string buf;
  for (const auto& d : docs) buf += to_json(d).dump() + "\n";
  return sha256_hex(buf);
}

class StageCache {
 public:
  StageCache(fs::path root, RunManifest& manifest) : root_(std::move(root)), manifest_(manifest) {}

  struct Entry {
    std::string key;
    std::shared_ptr<const Checkpoint> ckpt;
  };

  template <typename Train>
  Entry get(const std::string& key, Train&& train) {
    if (const auto it = memo_.find(key); it != memo_.end()) return {key, it->second};
    const fs::path dir = root_ / key;
    std::shared_ptr<const Checkpoint> ckpt;
    if (fs::exists(dir / "stage.json")) {
      ckpt = std::make_shared<const Checkpoint>(load_checkpoint(dir));
      ++manifest_.cache_hits;
      spdlog::info("stage {} reused from cache", key);
    } else {
      const fs::path tmp = root_ / (key + ".tmp");
      fs::remove_all(tmp);
      fs::create_directories(tmp);
      Json info = train(tmp);
      ckpt = std::make_shared<const Checkpoint>(load_checkpoint(tmp));
      write_json(tmp / "stage.json", info);
      fs::remove_all(dir);
      fs::rename(tmp, dir);
      ++manifest_.cache_misses;
    }
    memo_[key] = ckpt;
    return {key, ckpt};
  }

  fs::path dir(const std::string& key) const { return root_ / key; }

 private:
  fs::path root_;
  RunManifest& manifest_;
  std::map<std::string, std::shared_ptr<const Checkpoint>> memo_;
};

void write_questions(const fs::path& path, const std::vector<QGExample>& examples,
                     const std::vector<std::string>& questions) {
  std::string out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    out += Json{{"id", examples[i].id}, {"context", examples[i].context}, {"question", questions[i]}}.dump() + "\n";
  }
  write_file_atomic(path, out);
}

struct QuestionFile {
  std::vector<std::string> ids;
  std::vector<std::string> contexts;
  std::vector<std::string> questions;
};

QuestionFile read_questions(const fs::path& path) {
  QuestionFile q;
  std::size_t lineno = 0;
  for (const auto& line : split(read_file(path), '\n')) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const Json j = Json::parse(line);
      q.ids.push_back(j.at("id").get<std::string>());
      q.contexts.push_back(j.at("context").get<std::string>());
      q.questions.push_back(j.at("question").get<std::string>());
    } catch (const Json::exception& e) {
      throw SchemaError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return q;
}

bool needs_pretraining(const std::vector<ModelId>& models) {
  return std::any_of(models.begin(), models.end(), [](ModelId id) {
    return id == ModelId::kEduqgSmall || id == ModelId::kEduqgLarge || id == ModelId::kEduqgPlus;
  });
}

bool needs_sciq_train(const std::vector<ModelId>& models) {
  return std::any_of(models.begin(), models.end(),
                     [](ModelId id) { return id == ModelId::kLeafPlus || id == ModelId::kEduqgPlus; });
}

}  // namespace

RunManifest run_matrix(const ExperimentConfig& cfg) {
  cfg.validate();
  const bool pre = needs_pretraining(cfg.models);
  const bool plus = needs_sciq_train(cfg.models);

  std::vector<std::string> missing;
  const auto require = [&](const fs::path& p, const char* what) {
    if (p.empty() || !fs::exists(p)) missing.push_back(fmt::format("{} ({})", what, p.string()));
  };
  require(cfg.datasets.squad_train, "squad_train");
  require(cfg.datasets.sciq_test, "sciq_test");
  if (pre) require(cfg.datasets.s2orc, "s2orc");
  if (plus) require(cfg.datasets.sciq_train, "sciq_train");
  if (cfg.datasets.squad_validation) require(*cfg.datasets.squad_validation, "squad_validation");
  if (cfg.datasets.sciq_validation) require(*cfg.datasets.sciq_validation, "sciq_validation");
  if (cfg.base.path) require(*cfg.base.path, "base.path");
  if (cfg.scorer.contains("corpus")) {
    for (const auto& p : cfg.scorer["corpus"]) require(p.get<std::string>(), "scorer corpus");
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    throw IoError("missing inputs, nothing was trained:" + list);
  }

  RunManifest manifest;
  manifest.started_at = now_iso();
  manifest.config = cfg.to_json();
  manifest.config_hash = cfg.hash();
  fs::create_directories(cfg.run_dir / "stages");
  fs::create_directories(cfg.run_dir / "models");
  write_json(cfg.run_dir / "config.resolved.json", manifest.config);

  // Datasets.
  const auto squad = load_squad(cfg.datasets.squad_train, SplitName::kTrain).value;
  std::optional<DatasetSplit<QGExample>> squad_val;
  if (cfg.datasets.squad_validation) {
    squad_val = load_squad(*cfg.datasets.squad_validation, SplitName::kValidation).value;
  }
  std::optional<DatasetSplit<QGExample>> sciq_train;
  if (!cfg.datasets.sciq_train.empty() && fs::exists(cfg.datasets.sciq_train)) {
    sciq_train = load_sciq(cfg.datasets.sciq_train, SplitName::kTrain).value;
  }
  auto sciq_test = load_sciq(cfg.datasets.sciq_test, SplitName::kTest).value;
  if (cfg.test_limit && sciq_test.examples.size() > *cfg.test_limit) sciq_test.examples.resize(*cfg.test_limit);

  std::vector<Document> small_docs;
  std::vector<Document> large_docs;
  if (!cfg.datasets.s2orc.empty() && fs::exists(cfg.datasets.s2orc)) {
    auto loaded = load_abstract_corpus(cfg.datasets.s2orc, corpus_schema_from_string(cfg.datasets.s2orc_schema));
    const auto pool = filter_by_field(loaded.value, cfg.datasets.s2orc_fields);
    if (pool.size() < cfg.pretrain_large) {
      throw ConfigError(fmt::format("pre-training pool has {} in-field abstracts, fewer than pretrain_sizes.large = {}",
                                    pool.size(), cfg.pretrain_large));
    }
    const std::uint64_t sample_seed = derive_seed(cfg.seed, 0x5a3d1e);
    small_docs = downsample(pool, cfg.pretrain_small, sample_seed);
    large_docs = downsample(pool, cfg.pretrain_large, sample_seed);
  }

  StageCache cache(cfg.run_dir / "stages", manifest);

  // Base model.
  std::string base_key;
  std::shared_ptr<const Checkpoint> base;
  if (cfg.base.preset == "toy") {
    std::vector<std::string> texts;
    for (const auto& d : large_docs) texts.push_back(d.abstract);
    for (const auto& ex : squad.examples) {
      texts.push_back(ex.context);
      texts.push_back(ex.question);
    }
    if (sciq_train) {
      for (const auto& ex : sciq_train->examples) {
        texts.push_back(ex.context);
        texts.push_back(ex.question);
      }
    }
    auto tok = std::make_shared<const Tokenizer>(build_vocabulary(texts, cfg.base.vocab));
    Json mc = ModelConfig::toy(tok->vocab_size()).to_json();
    mc.merge_patch(cfg.base.model_overrides);
    const ModelConfig model_config = ModelConfig::from_json(mc);
    const std::uint64_t init_seed = derive_seed(cfg.seed, 0xba5e);
    base_key = "base-" + short_hash(fmt::format("toy|{}|{}|{}", canonical_dump(model_config.to_json()), init_seed,
                                                tok->fingerprint()));
    base = cache.get(base_key, [&](const fs::path& dir) {
                  save_checkpoint(init_model(model_config, tok, init_seed, "toy"), dir);
                  return Json{{"stage", "BASE"}, {"preset", "toy"}};
                }).ckpt;
  } else {
    const fs::path src = *cfg.base.path;
    const fs::path tensors = fs::exists(src / "model.safetensors") ? src / "model.safetensors" : src;
    base_key = "base-" + short_hash("hf|" + sha256_file(tensors));
    base = cache.get(base_key, [&](const fs::path& dir) {
                  save_checkpoint(load_base(src), dir);
                  return Json{{"stage", "BASE"}, {"preset", cfg.base.preset}, {"source", src.string()}};
                }).ckpt;
  }

  const auto run_stage = [&](const StageCache::Entry& parent, const TrainSpec& spec, const std::string& data_hash,
                             auto&& train) {
    const std::string key = short_hash(parent.key + "|" + spec.hash() + "|" + data_hash);
    return cache.get(key, [&](const fs::path& dir) {
      spdlog::info("training {}:{} on top of {}", to_string(spec.stage), spec.dataset_id, parent.key);
      TrainResult result = train(*parent.ckpt);
      save_checkpoint(result.checkpoint, dir);
      result.log.write_csv(dir / "train_log.csv");
      return Json{{"parent", parent.key}, {"spec", spec.to_json()}, {"dataset_hash", data_hash}};
    });
  };

  const StageCache::Entry base_entry{base_key, base};
  const std::string squad_hash = examples_hash(squad.examples);
  const auto squad_stage = [&](const StageCache::Entry& parent) {
    return run_stage(parent, cfg.finetune_squad, squad_hash, [&](const Checkpoint& c) {
      return finetune(c, squad, cfg.finetune_squad, squad_val ? &*squad_val : nullptr);
    });
  };
  const auto sciq_stage = [&](const StageCache::Entry& parent) {
    if (!sciq_train) throw IoError("sciq_train is required for the + models");
    return run_stage(parent, cfg.finetune_sciq, examples_hash(sciq_train->examples), [&](const Checkpoint& c) {
      return finetune(c, *sciq_train, cfg.finetune_sciq, nullptr);
    });
  };
  const auto pretrain_stage = [&](const std::vector<Document>& docs) {
    return run_stage(base_entry, cfg.pretrain, documents_hash(docs),
                     [&](const Checkpoint& c) { return pretrain(c, docs, cfg.pretrain); });
  };

  const auto build = [&](ModelId id, std::vector<std::string>& keys) {
    StageCache::Entry e = base_entry;
    keys.push_back(e.key);
    const auto step = [&](StageCache::Entry next) {
      keys.push_back(next.key);
      e = std::move(next);
    };
    switch (id) {
      case ModelId::kLeaf:
        step(squad_stage(e));
        break;
      case ModelId::kEduqgSmall:
        step(pretrain_stage(small_docs));
        step(squad_stage(e));
        break;
      case ModelId::kEduqgLarge:
        step(pretrain_stage(large_docs));
        step(squad_stage(e));
        break;
      case ModelId::kLeafPlus:
        step(squad_stage(e));
        step(sciq_stage(e));
        break;
      case ModelId::kEduqgPlus:
        step(pretrain_stage(large_docs));
        step(squad_stage(e));
        step(sciq_stage(e));
        break;
    }
    return e;
  };

  const auto scorer = make_scorer(cfg.scorer);
  const std::string test_hash = examples_hash(sciq_test.examples);
  std::vector<std::string> contexts;
  std::vector<std::string> references;
  std::vector<std::string> ids;
  for (const auto& ex : sciq_test.examples) {
    contexts.push_back(ex.context);
    references.push_back(ex.question);
    ids.push_back(ex.id);
  }

  std::map<ModelId, MetricReport> reports;
  for (const auto id : cfg.models) {
    ModelOutcome out;
    out.id = id;
    try {
      const auto entry = build(id, out.stage_keys);
      out.provenance = entry.ckpt->provenance;
      out.checkpoint = fs::path("stages") / entry.key;
      const fs::path model_dir = fs::path("models") / to_string(id);
      fs::create_directories(cfg.run_dir / model_dir);
      out.questions = model_dir / "questions.jsonl";
      out.report = model_dir / "report.json";
      out.per_example = model_dir / "per_example.csv";

      const std::string gen_key = short_hash(entry.key + "|" + canonical_dump(cfg.decode.to_json()) + "|" +
                                             canonical_dump(cfg.finetune_squad.to_json()["format"]) + "|" + test_hash);
      const fs::path gen_info = cfg.run_dir / model_dir / "generation.json";
      std::vector<std::string> questions;
      if (fs::exists(gen_info) && read_json(gen_info).value("key", std::string()) == gen_key &&
          fs::exists(cfg.run_dir / out.questions)) {
        questions = read_questions(cfg.run_dir / out.questions).questions;
        ++manifest.cache_hits;
      } else {
        questions = generate(*entry.ckpt, contexts, cfg.decode, cfg.finetune_squad.format);
        write_questions(cfg.run_dir / out.questions, sciq_test.examples, questions);
        write_json(gen_info, Json{{"key", gen_key}, {"decode", cfg.decode.to_json()}});
        ++manifest.cache_misses;
      }
      MetricReport report =
          evaluate(to_string(id), ids, questions, references, *scorer, EvaluateOptions{cfg.distinct2});
      report.save(cfg.run_dir / out.report);
      write_file_atomic(cfg.run_dir / out.per_example, report.per_example_csv());
      reports.emplace(id, std::move(report));
      out.status = "complete";
    } catch (const std::exception& e) {
      spdlog::error("{} failed: {}", to_string(id), e.what());
      out.status = "failed";
      out.error = e.what();
    }
    manifest.models.push_back(std::move(out));
  }

  manifest.significance = significance_tests(reports);
  manifest.human.push_back(human_baseline("SQuAD 1.1", squad_val ? *squad_val : squad, *scorer));
  manifest.human.push_back(human_baseline("SciQ", sciq_test, *scorer));
  manifest.finished_at = now_iso();
  manifest.save(cfg.run_dir);
  return manifest;
}

RenderedReport report_from_manifest(const fs::path& run_dir, ReportStyle style) {
  const RunManifest m = RunManifest::load(run_dir);
  const fs::path root = fs::is_directory(run_dir) ? run_dir : run_dir.parent_path();
  if (style == ReportStyle::kTable1) {
    if (m.human.empty()) throw SchemaError("manifest has no human baselines");
    std::vector<MetricReport> rows;
    for (const auto& h : m.human) {
      MetricReport r;
      r.model_id = h.dataset;
      r.scorer_id = h.scorer_id;
      r.corpus.perplexity = h.perplexity;
      r.corpus.diversity = h.diversity;
      rows.push_back(std::move(r));
    }
    return render_report(rows, {}, style, {nullptr, "Linguistic quality of the human-written questions"});
  }
  std::vector<MetricReport> rows;
  std::set<std::string> shown;
  for (const auto id : report_rows(style)) {
    const ModelOutcome* o = m.find(id);
    if (!o || o->status != "complete") continue;
    rows.push_back(MetricReport::load(root / o->report));
    shown.insert(to_string(id));
  }
  if (rows.empty()) throw SchemaError("manifest has no completed models for " + to_string(style));
  std::vector<SignificanceResult> sig;
  for (const auto& s : m.significance) {
    if (shown.contains(s.candidate_id)) sig.push_back(s);
  }
  const RenderOptions options{[](const std::string& id) { return display_name(model_from_string(id)); },
                              style == ReportStyle::kTable2 ? "Question generation on the science test set"
                                                          : "Question generation after science fine-tuning"};
  return render_report(rows, sig, style, options);
}

std::string examples_from_manifest(const fs::path& run_dir, std::size_t k, std::uint64_t seed) {
  const RunManifest m = RunManifest::load(run_dir);
  const fs::path root = fs::is_directory(run_dir) ? run_dir : run_dir.parent_path();
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> questions;
  std::vector<std::string> contexts;
  std::vector<std::string> ids;
  for (const auto& o : m.models) {
    if (o.status != "complete") continue;
    auto q = read_questions(root / o.questions);
    if (names.empty()) {
      contexts = q.contexts;
      ids = q.ids;
    } else if (q.ids != ids) {
      throw SchemaError("models were generated on different contexts");
    }
    names.push_back(display_name(o.id));
    questions.push_back(std::move(q.questions));
  }
  if (names.empty()) throw SchemaError("manifest has no completed models");
  return examples_table(names, questions, contexts, k, seed);
}

}  // namespace eduqg
