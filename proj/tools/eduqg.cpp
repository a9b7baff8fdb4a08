// eduqg command-line tool.

#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "eduqg/checkpoint.hpp"
#include "eduqg/config.hpp"
#include "eduqg/datasets.hpp"
#include "eduqg/error.hpp"
#include "eduqg/generation.hpp"
#include "eduqg/harness.hpp"
#include "eduqg/metrics.hpp"
#include "eduqg/report.hpp"
#include "eduqg/scorer.hpp"
#include "eduqg/synthetic.hpp"
#include "eduqg/trainer.hpp"

namespace fs = std::filesystem;
using namespace eduqg;

namespace {

std::set<std::string> parse_fields(const std::string& csv) {
  std::set<std::string> out;
  for (const auto& f : split(csv, ',')) {
    const auto t = trim(f);
    if (!t.empty()) out.insert(t);
  }
  return out;
}

Json scorer_config(const std::string& file, const std::vector<std::string>& corpus) {
  if (!file.empty()) return load_config(file);
  if (!corpus.empty()) return Json{{"type", "kneser_ney"}, {"corpus", corpus}};
  return Json{{"type", "uniform"}, {"vocab_size", 1000}};
}

std::vector<std::string> jsonl_field(const fs::path& path, const char* field, std::vector<std::string>* ids) {
  std::vector<std::string> out;
  std::size_t lineno = 0;
  for (const auto& line : split(read_file(path), '\n')) {
    ++lineno;
    if (trim(line).empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw SchemaError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
    if (!j.contains(field) || !j[field].is_string()) {
      throw SchemaError(fmt::format("{}:{}: missing string field '{}'", path.string(), lineno, field));
    }
    out.push_back(j[field].get<std::string>());
    if (ids) ids->push_back(j.contains("id") ? j["id"].get<std::string>() : std::to_string(out.size() - 1));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Question generation with continued pre-training: data, training, decoding and evaluation"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Convert a raw dataset to canonical JSON Lines");
  std::string in_format, in_path, out_path, fields, split_name = "train";
  std::optional<std::size_t> sample;
  std::uint64_t seed = 0;
  ingest->add_option("--format", in_format, "s2orc, squad or sciq")->required()->check(
      CLI::IsMember({"s2orc", "squad", "sciq"}));
  ingest->add_option("--in", in_path, "Input file")->required();
  ingest->add_option("--out", out_path, "Output JSON Lines")->required();
  ingest->add_option("--fields", fields, "Comma-separated fields of study to keep (s2orc)");
  ingest->add_option("--sample", sample, "Keep a uniform sample of N records");
  ingest->add_option("--seed", seed, "Sampling seed");
  ingest->add_option("--split", split_name, "Split name recorded in ids (squad, sciq)");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus family in the native dataset formats");
  SyntheticOptions synth_opts;
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_opts.seed);
  synth->add_option("--abstracts", synth_opts.abstracts);
  synth->add_option("--squad-train", synth_opts.squad_train);
  synth->add_option("--squad-dev", synth_opts.squad_dev);
  synth->add_option("--sciq-train", synth_opts.sciq_train);
  synth->add_option("--sciq-validation", synth_opts.sciq_validation);
  synth->add_option("--sciq-test", synth_opts.sciq_test);
  synth->add_option("--reference", synth_opts.reference_sentences);

  // build-vocab
  auto* vocab = app.add_subcommand("build-vocab", "Derive a toy vocabulary from canonical JSON Lines files");
  std::vector<std::string> vocab_inputs;
  std::string vocab_out;
  VocabOptions vocab_opts;
  vocab->add_option("--in", vocab_inputs, "Canonical documents or QG JSON Lines")->required();
  vocab->add_option("--out", vocab_out, "Vocabulary file")->required();
  vocab->add_option("--max-pieces", vocab_opts.max_pieces);
  vocab->add_option("--min-count", vocab_opts.min_count);
  vocab->add_option("--sentinels", vocab_opts.num_sentinels);

  // init
  auto* init = app.add_subcommand("init", "Initialise a model checkpoint");
  std::string init_vocab, init_out, preset = "toy", model_json;
  std::uint64_t init_seed = 0;
  init->add_option("--vocab", init_vocab, "Vocabulary file")->required();
  init->add_option("--out", init_out, "Checkpoint directory")->required();
  init->add_option("--preset", preset, "toy or t5_small")->check(CLI::IsMember({"toy", "t5_small"}));
  init->add_option("--model", model_json, "JSON/YAML file with ModelConfig overrides");
  init->add_option("--seed", init_seed);

  // pretrain / finetune
  auto* pretrain_cmd = app.add_subcommand("pretrain", "Continue pre-training on abstracts (span corruption)");
  auto* finetune_cmd = app.add_subcommand("finetune", "Fine-tune for question generation");
  std::string train_model, train_data, train_spec, train_out, train_log, train_validation, resume_dir;
  std::optional<std::size_t> stop_after;
  for (auto* cmd : {pretrain_cmd, finetune_cmd}) {
    cmd->add_option("--model", train_model, "Starting checkpoint (native or Hugging Face T5 directory)")
        ->required();
    cmd->add_option("--data", train_data, "Canonical JSON Lines training data")->required();
    cmd->add_option("--spec", train_spec, "TrainSpec file (YAML or JSON)")->required();
    cmd->add_option("--out", train_out, "Output checkpoint directory")->required();
    cmd->add_option("--log", train_log, "TrainLog CSV (default OUT/train_log.csv)");
    cmd->add_option("--resume", resume_dir, "Resume from a saved session directory");
    cmd->add_option("--stop-after", stop_after, "Save a resumable session after N steps and exit");
  }
  finetune_cmd->add_option("--validation", train_validation, "Validation JSON Lines for eval_every");

  // generate
  auto* gen = app.add_subcommand("generate", "Generate one question per context");
  std::string gen_model, gen_in, gen_out, gen_decode, strategy;
  std::optional<std::size_t> beam_width, max_len;
  std::optional<double> length_penalty;
  gen->add_option("--model", gen_model, "Checkpoint directory")->required();
  gen->add_option("--in", gen_in, "contexts.jsonl with id and context")->required();
  gen->add_option("--out", gen_out, "questions.jsonl")->required();
  gen->add_option("--decode", gen_decode, "DecodeSpec file");
  gen->add_option("--strategy", strategy, "greedy or beam");
  gen->add_option("--beam-width", beam_width);
  gen->add_option("--max-len", max_len);
  gen->add_option("--length-penalty", length_penalty);

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Score generated questions against reference questions");
  std::string eval_questions, eval_refs, eval_out, eval_csv, eval_scorer, eval_model = "model";
  std::vector<std::string> eval_corpus;
  bool distinct2 = false;
  eval->add_option("--questions", eval_questions, "questions.jsonl from generate")->required();
  eval->add_option("--references", eval_refs, "Canonical QG JSON Lines with the reference questions")->required();
  eval->add_option("--out", eval_out, "MetricReport JSON")->required();
  eval->add_option("--csv", eval_csv, "Per-example CSV");
  eval->add_option("--model-id", eval_model);
  eval->add_option("--scorer", eval_scorer, "Scorer config file");
  eval->add_option("--scorer-corpus", eval_corpus, "Train a Kneser-Ney scorer on these files");
  eval->add_flag("--distinct2", distinct2);

  // human-baseline
  auto* human = app.add_subcommand("human-baseline", "Perplexity and diversity of reference questions");
  std::vector<std::string> human_inputs;
  std::string human_scorer;
  std::vector<std::string> human_corpus;
  human->add_option("--dataset", human_inputs, "Canonical QG JSON Lines (one or more)")->required();
  human->add_option("--scorer", human_scorer, "Scorer config file");
  human->add_option("--scorer-corpus", human_corpus, "Train a Kneser-Ney scorer on these files");

  // run-matrix / report / examples
  auto* matrix = app.add_subcommand("run-matrix", "Build, generate and evaluate the five-model matrix");
  std::string config_path;
  matrix->add_option("--config", config_path, "Experiment config (YAML)")->required();

  auto* report = app.add_subcommand("report", "Render a results table from a run manifest");
  std::string manifest_dir, style = "table2", report_csv;
  report->add_option("--manifest", manifest_dir, "Run directory or manifest.json")->required();
  report->add_option("--style", style, "table1, table2 or table4");
  report->add_option("--csv", report_csv, "Also write the table as CSV");

  auto* examples = app.add_subcommand("examples", "Side-by-side questions for random test contexts");
  std::size_t k = 5;
  std::uint64_t ex_seed = 0;
  examples->add_option("--manifest", manifest_dir, "Run directory or manifest.json")->required();
  examples->add_option("-k", k, "Number of contexts");
  examples->add_option("--seed", ex_seed);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*ingest) {
      if (in_format == "s2orc") {
        auto loaded = load_abstract_corpus(in_path, CorpusSchema::kS2orc);
        auto docs = fields.empty() ? loaded.value : filter_by_field(loaded.value, parse_fields(fields));
        if (sample) docs = downsample(docs, *sample, seed);
        write_documents_jsonl(out_path, docs);
        spdlog::info("{} records, {} kept, {} skipped, {} malformed; wrote {}", loaded.stats.records,
                     loaded.stats.kept, loaded.stats.skipped, loaded.stats.malformed, docs.size());
      } else {
        const SplitName split = split_from_string(split_name);
        auto loaded = in_format == "squad" ? load_squad(in_path, split) : load_sciq(in_path, split);
        auto examples_out = loaded.value.examples;
        if (sample) examples_out = downsample(examples_out, *sample, seed);
        write_qg_jsonl(out_path, examples_out);
        spdlog::info("{} records, {} kept, {} skipped; wrote {}", loaded.stats.records, loaded.stats.kept,
                     loaded.stats.skipped, examples_out.size());
      }
    } else if (*synth) {
      write_synthetic(generate_synthetic(synth_opts), synth_out);
      spdlog::info("wrote synthetic corpus to {}", synth_out);
    } else if (*vocab) {
      std::vector<std::string> texts;
      for (const auto& path : vocab_inputs) {
        for (const auto& line : split(read_file(path), '\n')) {
          if (trim(line).empty()) continue;
          const Json j = Json::parse(line);
          for (const char* key : {"abstract", "context", "question"}) {
            if (j.contains(key) && j[key].is_string()) texts.push_back(j[key].get<std::string>());
          }
        }
      }
      const Tokenizer tok = build_vocabulary(texts, vocab_opts);
      tok.save(vocab_out);
      spdlog::info("vocabulary of {} pieces written to {}", tok.vocab_size(), vocab_out);
    } else if (*init) {
      auto tok = std::make_shared<const Tokenizer>(Tokenizer::load(init_vocab, 0));
      Json mc = (preset == "toy" ? ModelConfig::toy(tok->vocab_size()) : ModelConfig::t5_small(tok->vocab_size()))
                    .to_json();
      if (!model_json.empty()) mc.merge_patch(load_config(model_json));
      save_checkpoint(init_model(ModelConfig::from_json(mc), tok, init_seed, preset), init_out);
      spdlog::info("initialised {} model in {}", preset, init_out);
    } else if (*pretrain_cmd || *finetune_cmd) {
      const bool is_pre = pretrain_cmd->parsed();
      const TrainSpec spec = TrainSpec::load(train_spec);
      if ((spec.stage == Stage::kPretrain) != is_pre) {
        throw ConfigError(fmt::format("{} given a {} train spec", is_pre ? "pretrain" : "finetune",
                                      to_string(spec.stage)));
      }
      const Checkpoint start = load_base(train_model);
      if (!start.tokenizer) throw InvalidArgument("starting checkpoint has no vocabulary");
      std::shared_ptr<const TrainingSet> data;
      std::shared_ptr<const TrainingSet> validation;
      if (is_pre) {
        auto docs = load_abstract_corpus(train_data, CorpusSchema::kCanonical).value;
        data = std::make_shared<const TrainingSet>(make_pretraining_set(docs, *start.tokenizer, spec));
      } else {
        DatasetSplit<QGExample> split{SplitName::kTrain, read_qg_jsonl(train_data)};
        data = std::make_shared<const TrainingSet>(make_finetuning_set(split, *start.tokenizer, spec));
        if (!train_validation.empty()) {
          DatasetSplit<QGExample> v{SplitName::kValidation, read_qg_jsonl(train_validation)};
          validation = std::make_shared<const TrainingSet>(make_finetuning_set(v, *start.tokenizer, spec));
        }
      }
      TrainSession session = resume_dir.empty() ? TrainSession(start, data, spec, validation)
                                                : TrainSession::resume(resume_dir, data, spec, validation);
      session.run_until(stop_after ? *stop_after : session.total());
      if (session.done()) {
        save_checkpoint(session.checkpoint(), train_out);
      } else {
        session.save(train_out);
        spdlog::info("stopped at step {}/{}; resume with --resume {}", session.step(), session.total(), train_out);
      }
      session.log().write_csv(train_log.empty() ? fs::path(train_out) / "train_log.csv" : fs::path(train_log));
      if (!session.log().records.empty()) {
        spdlog::info("step {} loss {:.4f}", session.log().records.back().step, session.log().records.back().loss);
      }
    } else if (*gen) {
      const Checkpoint ckpt = load_base(gen_model);
      DecodeSpec spec = gen_decode.empty() ? DecodeSpec{} : DecodeSpec::from_json(load_config(gen_decode));
      if (!strategy.empty()) {
        spec.strategy = strategy_from_string(strategy);
        if (spec.strategy == Strategy::kGreedy) spec.beam_width = 1;
      }
      if (beam_width) spec.beam_width = *beam_width;
      if (max_len) spec.max_len = *max_len;
      if (length_penalty) spec.length_penalty = *length_penalty;
      spec.validate();
      std::vector<std::string> ids;
      const auto contexts = jsonl_field(gen_in, "context", &ids);
      const auto questions = generate(ckpt, contexts, spec);
      std::ofstream out(gen_out);
      if (!out) throw IoError("cannot write " + gen_out);
      for (std::size_t i = 0; i < contexts.size(); ++i) {
        out << Json{{"id", ids[i]}, {"context", contexts[i]}, {"question", questions[i]}}.dump() << "\n";
      }
      spdlog::info("wrote {} questions to {}", questions.size(), gen_out);
    } else if (*eval) {
      std::vector<std::string> ids;
      const auto hyps = jsonl_field(eval_questions, "question", &ids);
      std::map<std::string, std::string> refs;
      for (const auto& ex : read_qg_jsonl(eval_refs)) refs[ex.id] = ex.question;
      std::vector<std::string> aligned;
      for (const auto& id : ids) {
        const auto it = refs.find(id);
        if (it == refs.end()) throw SchemaError("no reference question for id " + id);
        aligned.push_back(it->second);
      }
      const auto scorer = make_scorer(scorer_config(eval_scorer, eval_corpus));
      const MetricReport r = evaluate(eval_model, ids, hyps, aligned, *scorer, {distinct2});
      r.save(eval_out);
      if (!eval_csv.empty()) write_file_atomic(eval_csv, r.per_example_csv());
      std::cout << fmt::format("BLEU-1 {:.2f}  BLEU-4 {:.2f}  F1 {:.2f}  Perplexity {:.2f}  Diversity {:.3f}\n",
                               r.corpus.bleu[0], r.corpus.bleu[3], r.corpus.f1, r.corpus.perplexity,
                               r.corpus.diversity);
    } else if (*human) {
      const auto scorer = make_scorer(scorer_config(human_scorer, human_corpus));
      for (const auto& path : human_inputs) {
        DatasetSplit<QGExample> split{SplitName::kTest, read_qg_jsonl(path)};
        const auto h = human_baseline(fs::path(path).stem().string(), split, *scorer);
        std::cout << h.to_json().dump() << "\n";
      }
    } else if (*matrix) {
      const auto cfg = ExperimentConfig::load(config_path);
      const auto manifest = run_matrix(cfg);
      std::size_t complete = 0;
      for (const auto& m : manifest.models) complete += m.status == "complete";
      spdlog::info("{}/{} models complete; manifest at {}", complete, manifest.models.size(),
                   (cfg.run_dir / "manifest.json").string());
      return complete == manifest.models.size() ? 0 : 2;
    } else if (*report) {
      const auto rendered = report_from_manifest(manifest_dir, report_style_from_string(style));
      std::cout << rendered.text;
      if (!report_csv.empty()) write_file_atomic(report_csv, rendered.csv);
    } else if (*examples) {
      std::cout << examples_from_manifest(manifest_dir, k, ex_seed);
    }
  } catch (const eduqg::Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("unexpected: {}", e.what());
    return 1;
  }
  return 0;
}
