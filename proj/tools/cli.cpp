#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ecgtext/corpus.hpp"
#include "ecgtext/evalsuite.hpp"
#include "ecgtext/n3s.hpp"
#include "ecgtext/trainer.hpp"

namespace ecgtext {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Raised for bad flag values discovered after parsing; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr double kDeskPeakLr = 1e-3;

template <typename F>
void as_usage(F&& validate) {
  try {
    validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string hash_json(const json& j) { return sha256_hex(j.dump()).substr(0, 16); }

std::string format_fraction(double f) {
  std::ostringstream s;
  s << f;
  return s.str();
}

// ---------------------------------------------------------------------------

struct SynthFlags {
  SynthConfig config;
  int holdout = 0;
  std::string out;
};

void add_synth(CLI::App& app, SynthFlags& f) {
  app.add_option("--n", f.config.n_examples, "Training pairs in manifest.jsonl")->capture_default_str();
  app.add_option("--classes", f.config.n_classes, "Latent diagnostic classes (2-8)")->capture_default_str();
  app.add_option("--seed", f.config.seed, "Generator seed")->capture_default_str();
  app.add_option("--length", f.config.length_l, "Samples per lead")->capture_default_str();
  app.add_option("--leads", f.config.n_leads, "Number of leads")->capture_default_str();
  app.add_option("--rate", f.config.sample_rate_hz, "Sample rate in Hz")->capture_default_str();
  app.add_option("--noise", f.config.noise_std, "Gaussian noise std")->capture_default_str();
  app.add_option("--dup-fraction", f.config.duplicate_text_fraction, "Fraction sharing the canonical report text")
      ->capture_default_str();
  app.add_option("--phrases", f.config.phrases_per_class, "Report phrasings per class")->capture_default_str();
  app.add_option("--holdout", f.holdout, "Extra pairs written to heldout.jsonl")->capture_default_str();
  app.add_option("--out", f.out, "Output directory")->required();
}

int cmd_synth(const SynthFlags& f, std::ostream& out) {
  SynthConfig config = f.config;
  if (f.holdout < 0) throw UsageError("--holdout must be non-negative");
  as_usage([&] { config.validate(); });
  const json description = {{"command", "synth-data"},
                            {"n_examples", config.n_examples},
                            {"n_classes", config.n_classes},
                            {"length_l", config.length_l},
                            {"n_leads", config.n_leads},
                            {"sample_rate_hz", config.sample_rate_hz},
                            {"noise_std", config.noise_std},
                            {"duplicate_text_fraction", config.duplicate_text_fraction},
                            {"phrases_per_class", config.phrases_per_class},
                            {"holdout", f.holdout},
                            {"seed", config.seed}};
  const std::string hash = hash_json(description);

  config.n_examples += f.holdout;
  std::vector<PairedExample> all = generate_synthetic_examples(config);
  const auto split = all.begin() + (config.n_examples - f.holdout);
  const fs::path root(f.out);
  fs::create_directories(root);
  save_dataset(std::vector<PairedExample>(all.begin(), split), root, "manifest.jsonl", hash);
  if (f.holdout > 0) save_dataset(std::vector<PairedExample>(split, all.end()), root, "heldout.jsonl", hash);

  std::ostringstream prompts;
  prompts << "# config_hash " << hash << '\n';
  for (int c = 0; c < config.n_classes; ++c) prompts << synth_class_name(c) << '\t' << synth_class_phrase(c, 0) << '\n';
  write_file(root / "prompts.tsv", prompts.str());
  write_file(root / "synth_config.json", json{{"config", description}, {"config_hash", hash}}.dump(2) + "\n");
  out << json{{"task", "synth-data"},
              {"n_examples", config.n_examples - f.holdout},
              {"n_heldout", f.holdout},
              {"config_hash", hash}}
             .dump()
      << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct IndexFlags {
  std::string manifest;
  std::string out;
  int dim = 512;
};

void add_index(CLI::App& app, IndexFlags& f) {
  app.add_option("--manifest", f.manifest, "Manifest whose reports are indexed")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--out", f.out, "Index file to write")->required();
  app.add_option("--dim", f.dim, "Embedding width")->capture_default_str();
}

int cmd_index(const IndexFlags& f, std::ostream& out) {
  if (f.dim < 1) throw UsageError("--dim must be positive");
  const DatasetManifest manifest = read_manifest(f.manifest);
  std::vector<std::pair<std::string, std::string>> reports;
  for (const auto& e : manifest.entries) reports.emplace_back(e.id, preprocess_text(e.text));
  const HashingEmbedder embedder(f.dim);
  const EmbeddingIndex index = build_index(reports, embedder);
  const std::string hash =
      hash_json({{"command", "build-index"}, {"embedder_id", embedder.id()}, {"n", index.size()}});
  save_index(index, f.out, hash);
  out << json{{"task", "build-index"}, {"N", index.size()}, {"D", index.dim()}, {"config_hash", hash}}.dump() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PretrainFlags {
  std::string manifest, index, out_dir, config_path, resume, preset = "desk";
  int64_t steps = 3000;
  uint64_t seed = 7;
  int batch = 16;
  double lr = kDeskPeakLr;
  double w_mlm = 1, w_mem = 1, w_etm = 1, w_ets = 1;
  bool no_n3s = false;
  int k = 64;
  double neg_fraction = 0.5;
  double lead_mask = 0.5, dropout = 0.1, mlm_ratio = 0.15;
  double beta1 = 0.9, beta2 = 0.98, eps = 1e-6, weight_decay = 0.01;
  double warmup = 0.1, hold = 0.4, decay = 0.5, init_scale = 0.01, final_scale = 0.05;
  int embed_dim = 0, ecg_layers = 0, text_layers = 0, fusion_blocks = 0, max_len = 0, projection_dim = 0;
  bool ets_normalize = false, mem_masked_only = false, mem_element_mean = false, mlm_token_mean = false;
  int64_t checkpoint_every = 0;
  std::map<std::string, CLI::Option*> opts;
};

void add_pretrain(CLI::App& app, PretrainFlags& f) {
  auto& o = f.opts;
  app.add_option("--manifest", f.manifest, "Training manifest")->required()->check(CLI::ExistingFile);
  app.add_option("--index", f.index, "Negative-sampling index")->required()->check(CLI::ExistingFile);
  app.add_option("--out-dir", f.out_dir, "Directory for log, config and checkpoints")->required();
  o["config"] = app.add_option("--config", f.config_path, "JSON config override (flags win)")
                    ->check(CLI::ExistingFile);
  app.add_option("--resume", f.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  app.add_option("--preset", f.preset, "Model size: desk | full | micro")
      ->capture_default_str()
      ->check(CLI::IsMember({"desk", "full", "micro"}));
  o["steps"] = app.add_option("--steps", f.steps, "Total steps")->capture_default_str();
  o["seed"] = app.add_option("--seed", f.seed, "Seed for init, batches and masking")->capture_default_str();
  o["batch"] = app.add_option("--batch", f.batch, "Batch size")->capture_default_str();
  o["lr"] = app.add_option("--lr", f.lr, "Peak learning rate")->capture_default_str();
  o["w-mlm"] = app.add_option("--w-mlm", f.w_mlm, "MLM loss weight")->capture_default_str();
  o["w-mem"] = app.add_option("--w-mem", f.w_mem, "MEM loss weight")->capture_default_str();
  o["w-etm"] = app.add_option("--w-etm", f.w_etm, "ETM loss weight")->capture_default_str();
  o["w-ets"] = app.add_option("--w-ets", f.w_ets, "ETS loss weight")->capture_default_str();
  o["no-n3s"] = app.add_flag("--no-n3s", f.no_n3s, "Draw negatives uniformly instead of from the farthest reports");
  o["k"] = app.add_option("--k", f.k, "Farthest-report pool size")->capture_default_str();
  o["neg-fraction"] =
      app.add_option("--neg-fraction", f.neg_fraction, "Fraction of each batch given a negative report")
          ->capture_default_str();
  o["lead-mask"] = app.add_option("--lead-mask", f.lead_mask, "Per-lead masking probability")->capture_default_str();
  o["dropout"] = app.add_option("--dropout", f.dropout, "Input dropout probability")->capture_default_str();
  o["mlm-ratio"] = app.add_option("--mlm-ratio", f.mlm_ratio, "Token masking ratio")->capture_default_str();
  o["beta1"] = app.add_option("--beta1", f.beta1, "Adam beta1")->capture_default_str();
  o["beta2"] = app.add_option("--beta2", f.beta2, "Adam beta2")->capture_default_str();
  o["eps"] = app.add_option("--eps", f.eps, "Adam epsilon")->capture_default_str();
  o["weight-decay"] = app.add_option("--weight-decay", f.weight_decay, "Decoupled weight decay")->capture_default_str();
  o["warmup"] = app.add_option("--warmup", f.warmup, "Warmup ratio")->capture_default_str();
  o["hold"] = app.add_option("--hold", f.hold, "Hold ratio")->capture_default_str();
  o["decay"] = app.add_option("--decay", f.decay, "Decay ratio")->capture_default_str();
  o["init-lr-scale"] = app.add_option("--init-lr-scale", f.init_scale, "Warmup start / peak")->capture_default_str();
  o["final-lr-scale"] = app.add_option("--final-lr-scale", f.final_scale, "Final lr / peak")->capture_default_str();
  o["embed-dim"] = app.add_option("--embed-dim", f.embed_dim, "Hidden width of encoders and fusion");
  o["ecg-layers"] = app.add_option("--ecg-layers", f.ecg_layers, "ECG transformer layers");
  o["text-layers"] = app.add_option("--text-layers", f.text_layers, "Text transformer layers");
  o["fusion-blocks"] = app.add_option("--fusion-blocks", f.fusion_blocks, "Fusion blocks");
  o["max-len"] = app.add_option("--max-len", f.max_len, "Token sequence length");
  o["projection-dim"] = app.add_option("--projection-dim", f.projection_dim, "Projection head width");
  o["ets-normalize"] = app.add_flag("--ets-normalize", f.ets_normalize, "Unit-normalise ETS embeddings, learn scale and bias");
  o["mem-masked-only"] = app.add_flag("--mem-masked-only", f.mem_masked_only, "MEM error on corrupted elements only");
  o["mem-element-mean"] =
      app.add_flag("--mem-element-mean", f.mem_element_mean, "Average MEM error per element instead of summing");
  o["mlm-token-mean"] = app.add_flag("--mlm-token-mean", f.mlm_token_mean, "Average MLM loss over masked tokens");
  app.add_option("--checkpoint-every", f.checkpoint_every, "Also write checkpoint_step<N>.ckpt every N steps");
}

PretrainConfig pretrain_config(const PretrainFlags& f, int vocab_size, const std::string& embedder_id) {
  const auto given = [&](const char* name) { return f.opts.at(name)->count() > 0; };
  PretrainConfig c;
  c.model = f.preset == "full"    ? full_model_config(vocab_size)
            : f.preset == "micro" ? micro_model_config(vocab_size)
                                  : desk_model_config(vocab_size);
  c.optimizer.peak_lr = kDeskPeakLr;
  c.schedule.total_steps = f.steps;
  c.batch_size = f.batch;
  c.seed = f.seed;
  if (given("config")) as_usage([&] { c = config_from_json(read_file(f.config_path), c); });

  if (given("steps")) c.schedule.total_steps = f.steps;
  if (given("seed")) c.seed = f.seed;
  if (given("batch")) c.batch_size = f.batch;
  if (given("lr")) c.optimizer.peak_lr = f.lr;
  if (given("w-mlm")) c.weights.mlm = f.w_mlm;
  if (given("w-mem")) c.weights.mem = f.w_mem;
  if (given("w-etm")) c.weights.etm = f.w_etm;
  if (given("w-ets")) c.weights.ets = f.w_ets;
  if (given("no-n3s")) c.use_n3s = !f.no_n3s;
  if (given("k")) c.n3s.k = f.k;
  if (given("neg-fraction")) c.n3s.negative_fraction = f.neg_fraction;
  if (given("lead-mask")) c.mask.lead_mask_prob = f.lead_mask;
  if (given("dropout")) c.mask.input_dropout_prob = f.dropout;
  if (given("mlm-ratio")) c.mask.mlm_mask_ratio = f.mlm_ratio;
  if (given("beta1")) c.optimizer.beta1 = f.beta1;
  if (given("beta2")) c.optimizer.beta2 = f.beta2;
  if (given("eps")) c.optimizer.eps = f.eps;
  if (given("weight-decay")) c.optimizer.weight_decay = f.weight_decay;
  if (given("warmup")) c.schedule.warmup_ratio = f.warmup;
  if (given("hold")) c.schedule.hold_ratio = f.hold;
  if (given("decay")) c.schedule.decay_ratio = f.decay;
  if (given("init-lr-scale")) c.schedule.init_lr_scale = f.init_scale;
  if (given("final-lr-scale")) c.schedule.final_lr_scale = f.final_scale;
  if (given("embed-dim")) c.model.ecg.embed_dim = c.model.text.embed_dim = c.model.fusion.embed_dim = f.embed_dim;
  if (given("ecg-layers")) c.model.ecg.n_layers = f.ecg_layers;
  if (given("text-layers")) c.model.text.n_layers = f.text_layers;
  if (given("fusion-blocks")) c.model.fusion.n_blocks = f.fusion_blocks;
  if (given("max-len")) c.model.text.max_len = f.max_len;
  if (given("projection-dim")) c.model.projection_dim = f.projection_dim;
  if (given("ets-normalize")) c.model.objective.ets.normalize = f.ets_normalize;
  if (given("mem-masked-only")) c.model.objective.mem.masked_only = f.mem_masked_only;
  if (given("mem-element-mean")) c.model.objective.mem.element_mean = f.mem_element_mean;
  if (given("mlm-token-mean"))
    c.model.objective.mlm_reduction = f.mlm_token_mean ? MlmReduction::kTokenMean : MlmReduction::kSumPerSequence;

  c.model.text.vocab_size = vocab_size;
  c.model.mem.upsample = c.model.ecg.stride_product();
  c.model.init_seed = c.seed;
  c.mask.seed = c.seed;
  c.n3s.seed = c.seed;
  c.n3s.embedder_id = embedder_id;
  as_usage([&] { c.validate(); });
  return c;
}

int cmd_pretrain(const PretrainFlags& f, std::ostream& out) {
  std::vector<PairedExample> examples = load_dataset(f.manifest);
  std::vector<std::string> texts;
  for (const auto& e : examples) texts.push_back(e.report.normalized);
  Vocabulary vocab = Vocabulary::build(texts);
  EmbeddingIndex index = load_index(f.index);
  const PretrainConfig config = pretrain_config(f, vocab.size(), index.embedder_id());
  if (config.batch_size > static_cast<int>(examples.size()))
    throw UsageError("--batch exceeds the number of training examples");
  if (config.n3s.k >= static_cast<int>(index.size())) throw UsageError("--k must be smaller than the index size");

  const TrainingData data(std::move(examples), std::move(vocab), std::move(index));
  Trainer trainer(config, data);
  if (!f.resume.empty()) trainer.load_checkpoint(f.resume);

  const fs::path dir(f.out_dir);
  fs::create_directories(dir);
  write_file(dir / "config.json",
             json{{"config", json::parse(config_to_json(config))}, {"config_hash", trainer.hash()}}.dump(2) + "\n");
  std::ofstream log(dir / "train_log.jsonl", std::ios::binary | std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write training log in " + dir.string());
  for (const auto& r : trainer.history()) log << step_record_json(r, trainer.hash()) << '\n';

  trainer.run(config.schedule.total_steps, [&](const StepRecord& r) {
    log << step_record_json(r, trainer.hash()) << '\n';
    if (f.checkpoint_every > 0 && trainer.step() % f.checkpoint_every == 0)
      trainer.save_checkpoint(dir / ("checkpoint_step" + std::to_string(trainer.step()) + ".ckpt"));
  });
  log.flush();
  trainer.save_checkpoint(dir / "checkpoint.ckpt");

  const auto& hist = trainer.history();
  const size_t tail = std::min<size_t>(100, hist.size());
  double acc = 0.0;
  for (size_t i = hist.size() - tail; i < hist.size(); ++i) acc += hist[i].etm_accuracy;
  json metrics = {{"task", "pretrain"}, {"steps", trainer.step()}, {"config_hash", trainer.hash()}};
  if (!hist.empty()) {
    const auto& last = hist.back().loss;
    metrics["final_loss"] = {{"mlm", last.mlm}, {"mem", last.mem}, {"etm", last.etm}, {"ets", last.ets},
                             {"total", last.total}};
    metrics["etm_acc_tail"] = acc / static_cast<double>(tail);
    metrics["etm_acc_tail_steps"] = tail;
  }
  write_file(dir / "metrics.json", metrics.dump(2) + "\n");
  out << metrics.dump() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalFlags {
  std::string checkpoint, manifest, test_manifest, prompts, mapping, out;
  std::vector<double> fractions;
  uint64_t seed = 7;
};

struct LabeledSignals {
  std::vector<Matrix<float>> signals;
  std::vector<int> classes;
};

LabeledSignals labeled_signals(const std::string& manifest) {
  LabeledSignals out;
  for (const auto& e : load_dataset(manifest)) {
    if (!e.latent_class) throw std::runtime_error("manifest entry " + e.id + " has no class label");
    out.signals.push_back(e.ecg.samples);
    out.classes.push_back(*e.latent_class);
  }
  if (out.signals.empty()) throw std::runtime_error("manifest " + manifest + " is empty");
  return out;
}

void warn_excluded(const MacroAuc& r, const std::vector<std::string>& names, std::ostream& err) {
  for (int c : r.excluded)
    err << "warning: class '" << names[static_cast<size_t>(c)]
        << "' lacks positives or negatives in the test set and is excluded from the macro average\n";
}

void add_zero_shot(CLI::App& app, EvalFlags& f) {
  app.add_option("--checkpoint", f.checkpoint, "Pre-trained checkpoint")->required()->check(CLI::ExistingFile);
  app.add_option("--manifest", f.manifest, "Labelled evaluation manifest")->required()->check(CLI::ExistingFile);
  app.add_option("--prompts", f.prompts, "class_name<TAB>description file; line i describes class i")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--mapping", f.mapping, "JSON label mapping onto a target label space")->check(CLI::ExistingFile);
  app.add_option("--out", f.out, "Metrics JSON output path");
}

int cmd_zero_shot(const EvalFlags& f, std::ostream& out, std::ostream& err) {
  const Checkpoint ck = read_checkpoint(f.checkpoint);
  const auto model = restore_model(ck);
  const Vocabulary vocab(ck.vocab_words);
  ClassPromptSet prompts;
  as_usage([&] { prompts = read_prompts(f.prompts); });
  const LabeledSignals data = labeled_signals(f.manifest);

  ScoreMatrix sm;
  sm.class_names = prompts.class_names;
  sm.scores = zero_shot_scores(*model, data.signals, prompts, vocab);
  sm.labels = one_hot(data.classes, static_cast<int>(prompts.size()));
  if (!f.mapping.empty()) sm = map_labels(read_label_mapping(f.mapping), sm);

  const MacroAuc result = auc_macro(sm.scores, sm.labels);
  warn_excluded(result, sm.class_names, err);
  const std::string line = metrics_json("zero-shot", result, sm.class_names, data.signals.size(), ck.config_hash);
  if (!f.out.empty()) write_file(f.out, line + "\n");
  out << line << '\n';
  return kExitOk;
}

void add_probe(CLI::App& app, EvalFlags& f) {
  app.add_option("--checkpoint", f.checkpoint, "Pre-trained checkpoint")->required()->check(CLI::ExistingFile);
  app.add_option("--manifest", f.manifest, "Labelled manifest used for probe training")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--test-manifest", f.test_manifest, "Labelled test manifest (default: stratified 20% split)")
      ->check(CLI::ExistingFile);
  app.add_option("--prompts", f.prompts, "Prompts file, used for class names only")->check(CLI::ExistingFile);
  app.add_option("--fraction", f.fractions, "Training fraction; repeatable (default 0.01 0.1 1.0)");
  app.add_option("--seed", f.seed, "Subsampling seed")->capture_default_str();
  app.add_option("--out", f.out, "JSONL output path, one record per fraction");
}

int cmd_probe(const EvalFlags& f, std::ostream& out, std::ostream& err) {
  std::vector<double> fractions = f.fractions.empty() ? std::vector<double>{0.01, 0.1, 1.0} : f.fractions;
  for (double fr : fractions)
    if (!(fr > 0.0 && fr <= 1.0)) throw UsageError("--fraction values must lie in (0, 1]");
  const Checkpoint ck = read_checkpoint(f.checkpoint);
  const auto model = restore_model(ck);
  const LabeledSignals train = labeled_signals(f.manifest);
  LabeledSignals test;
  if (!f.test_manifest.empty()) test = labeled_signals(f.test_manifest);

  int n_classes = 0;
  for (int c : train.classes) n_classes = std::max(n_classes, c + 1);
  for (int c : test.classes) n_classes = std::max(n_classes, c + 1);
  std::vector<std::string> names;
  if (!f.prompts.empty()) {
    as_usage([&] { names = read_prompts(f.prompts).class_names; });
    if (static_cast<int>(names.size()) < n_classes) throw UsageError("prompts file names fewer classes than the labels");
    names.resize(static_cast<size_t>(n_classes));
  } else {
    for (int c = 0; c < n_classes; ++c) names.push_back("class_" + std::to_string(c));
  }

  const Matrix<double> train_x = extract_features(*model, train.signals);
  const LabelMatrix train_y = one_hot(train.classes, n_classes);
  Matrix<double> test_x;
  LabelMatrix test_y;
  if (!test.signals.empty()) {
    test_x = extract_features(*model, test.signals);
    test_y = one_hot(test.classes, n_classes);
  }

  std::ostringstream lines;
  for (double fr : fractions) {
    const ProbeResult r = test.signals.empty() ? linear_probe(train_x, train_y, fr, f.seed)
                                               : linear_probe(train_x, train_y, test_x, test_y, fr, f.seed);
    warn_excluded(r.auc, names, err);
    lines << metrics_json("linear-probe@" + format_fraction(fr), r.auc, names, static_cast<size_t>(r.n_test),
                          ck.config_hash)
          << '\n';
  }
  if (!f.out.empty()) write_file(f.out, lines.str());
  out << lines.str();
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ECG-text multimodal pre-training toolkit", "ecgtext"};
  app.require_subcommand(1);
  SynthFlags synth;
  IndexFlags index;
  PretrainFlags pretrain;
  EvalFlags zero_shot, probe;
  CLI::App* synth_cmd = app.add_subcommand("synth-data", "Generate a synthetic paired ECG-report corpus");
  CLI::App* index_cmd = app.add_subcommand("build-index", "Embed reports and write the negative-sampling index");
  CLI::App* pretrain_cmd = app.add_subcommand("pretrain", "Run pre-training; writes log, config and checkpoint");
  CLI::App* zero_cmd = app.add_subcommand("zero-shot", "Zero-shot classification macro AUC");
  CLI::App* probe_cmd = app.add_subcommand("probe", "Linear-probe macro AUC at label fractions");
  add_synth(*synth_cmd, synth);
  add_index(*index_cmd, index);
  add_pretrain(*pretrain_cmd, pretrain);
  add_zero_shot(*zero_cmd, zero_shot);
  add_probe(*probe_cmd, probe);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(synth, out);
    if (index_cmd->parsed()) return cmd_index(index, out);
    if (pretrain_cmd->parsed()) return cmd_pretrain(pretrain, out);
    if (zero_cmd->parsed()) return cmd_zero_shot(zero_shot, out, err);
    if (probe_cmd->parsed()) return cmd_probe(probe, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace ecgtext
