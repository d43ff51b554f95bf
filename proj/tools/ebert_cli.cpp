// Command-line front end for the paired DNA+state language model pipeline:
//   tokenize  genomic files -> EBRT0001 sample records
//   pretrain  records -> masked-LM checkpoint + loss CSV
//   finetune  records (+ checkpoint) -> binding model + eval CSV
//   evaluate  prediction TSV vs label TSV -> the four challenge metrics
//   analyze   benchmark table fixtures -> aggregate claims report
//
// Exit codes: 0 success, 1 claim/threshold failure, 2 usage or parse error.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "ebert/analysis.hpp"
#include "ebert/checkpoint.hpp"
#include "ebert/config.hpp"
#include "ebert/genome_io.hpp"
#include "ebert/metrics.hpp"
#include "ebert/records.hpp"
#include "ebert/training.hpp"

namespace {

using namespace ebert;

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_run_config(const std::string& dir, const RunConfig& rc,
                      const std::vector<std::string>& extra) {
  std::ofstream os(dir + "/run_config.txt");
  rc.write(os);
  for (const auto& line : extra) os << line << "\n";
}

// ---------------------------------------------------------------------------
// tokenize

struct TokenizeArgs {
  std::string genome, ideas, dnase, mapp, labels, out;
  std::string cell_type = "cell";
  std::string split = "none";
  int k = 7;
  int stride = 0;  // 0 = same as k
};

int cmd_tokenize(const TokenizeArgs& a) {
  TokenizerConfig tok{a.k, a.stride > 0 ? a.stride : a.k, kRecordPositions};
  tok.validate();
  const Vocab vocab = build_vocab(tok.k);

  const GenomeAssembly genome = read_fasta(a.genome);
  const IdeasTrack ideas = read_ideas_segmentation(a.ideas, a.cell_type);
  const SignalTrack dnase = read_signal_track(a.dnase);
  const SignalTrack mapp = read_signal_track(a.mapp);
  const std::vector<LabeledBin> bins = read_labels(a.labels);

  std::set<std::string> keep;
  const bool filter = a.split != "none";
  if (filter) {
    std::vector<std::string> names;
    for (const auto& [name, seq] : genome.chromosomes) names.push_back(name);
    const bool pre = a.split.rfind("pretrain", 0) == 0;
    const auto split = chromosome_split(pre ? SplitStage::Pretrain : SplitStage::Finetune, names);
    const bool train = a.split.find("train") != std::string::npos;
    for (const auto& n : (train ? split.train : split.eval)) keep.insert(n);
  }

  RecordWriter writer(a.out, vocab);
  std::int64_t total = 0, bound = 0, unbound = 0, ambiguous = 0, filtered = 0;
  for (const auto& bin : bins) {
    ++total;
    if (filter && keep.count(bin.chromosome) == 0) {
      ++filtered;
      continue;
    }
    if (bin.label == BinLabel::Ambiguous) {
      ++ambiguous;
      continue;
    }
    const SampleWindow w = make_window(bin, genome, ideas, dnase, mapp);
    SampleRecord rec;
    rec.pair = tokenize_window(w, tok, vocab, /*with_aux=*/true, /*with_ideas=*/true);
    rec.label = bin.label == BinLabel::Bound ? 1 : 0;
    writer.write(rec);
    (bin.label == BinLabel::Bound ? bound : unbound)++;
  }
  writer.close();
  std::printf("bins total %" PRId64 " / Bound %" PRId64 " / Unbound %" PRId64
              " / Ambiguous-skipped %" PRId64 "\n",
              total, bound, unbound, ambiguous);
  if (filter) std::printf("split %s excluded %" PRId64 " bins\n", a.split.c_str(), filtered);
  std::printf("wrote %" PRId64 " records to %s\n", bound + unbound, a.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// pretrain

struct PretrainArgs {
  std::string records, out_dir, config, preset;
  bool dna_only = false;
  bool double_precision = false;
  int checkpoint_every = 0;
  RunConfig rc;
};

std::vector<TokenizedPair> load_corpus(const std::string& path, bool dna_only, int dna_vocab) {
  std::vector<TokenizedPair> corpus;
  for (auto& rec : read_records(path)) {
    for (TokenId id : rec.pair.dna_ids)
      if (id >= dna_vocab)
        throw std::runtime_error("record token id " + std::to_string(id) +
                                 " exceeds the k-mer vocabulary; check --k");
    if (dna_only) rec.pair.ideas_ids.clear();
    corpus.push_back(std::move(rec.pair));
  }
  return corpus;
}

template <typename T>
int run_pretrain(const PretrainArgs& a) {
  const RunConfig& rc = a.rc;
  const ModelConfig cfg = rc.model(a.dna_only, /*with_aux=*/false);
  const TokenizerConfig tok = rc.tokenizer();

  Rng init_rng(rc.seed);
  auto params = Parameters<T>::init(cfg, init_rng);
  std::printf("parameters: %zu (analytic %zu)\n", params.count(), parameter_count(cfg));

  std::filesystem::create_directories(a.out_dir);
  write_run_config(a.out_dir, rc,
                   {std::string("mode=") + (a.dna_only ? "dna_only" : "paired"),
                    std::string("precision=") + (a.double_precision ? "double" : "float")});

  if (rc.steps == 0) {
    save_checkpoint(a.out_dir + "/final.ebck", cfg, tok, params,
                    static_cast<AdamW<T>*>(nullptr), 0);
    std::printf("no training requested (steps=0); wrote initialized checkpoint\n");
    return 0;
  }

  const auto corpus = load_corpus(a.records, a.dna_only, cfg.dna_vocab);
  std::printf("corpus: %zu windows, seed %" PRIu64 "\n", corpus.size(), rc.seed);

  PretrainOptions opt;
  opt.steps = rc.steps;
  opt.batch_size = rc.batch_size;
  opt.alpha = rc.alpha;
  opt.seed = rc.seed;
  opt.peak_lr = rc.peak_learning_rate;
  opt.warmup_steps = rc.warmup_steps;
  opt.optim = rc.optim();
  auto adam = AdamW<T>::make(params, opt.optim);

  std::ofstream log(a.out_dir + "/pretrain_log.csv");
  log << "step,lr,total,dna,ideas\n";

  // run in checkpoint-sized segments; per-step seeding keeps the trajectory
  // identical to an uninterrupted run
  std::int64_t done = 0;
  auto result = PretrainResult<T>{std::move(params), std::move(adam), {}};
  while (done < rc.steps) {
    const std::int64_t next =
        a.checkpoint_every > 0 ? std::min<std::int64_t>(rc.steps, done + a.checkpoint_every)
                               : rc.steps;
    auto seg_opt = opt;
    seg_opt.steps = static_cast<int>(next);
    result = pretrain_loop(corpus, cfg, tok, seg_opt, std::move(result.params),
                           std::move(result.adam), done);
    for (const auto& row : result.log)
      log << row.step << "," << fmt_double(row.lr) << "," << fmt_double(row.total) << ","
          << fmt_double(row.dna) << "," << fmt_double(row.ideas) << "\n";
    done = next;
    if (a.checkpoint_every > 0 && done < rc.steps)
      save_checkpoint(a.out_dir + "/ckpt_" + std::to_string(done) + ".ebck", cfg, tok,
                      result.params, &result.adam, done);
  }
  save_checkpoint(a.out_dir + "/final.ebck", cfg, tok, result.params, &result.adam, rc.steps);
  std::printf("finished %" PRId64 " steps; final total loss %s\n", rc.steps,
              fmt_double(result.log.empty() ? 0.0 : result.log.back().total).c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// finetune

struct FinetuneArgs {
  std::string train_records, eval_records, out_dir, config, preset, init_checkpoint;
  bool random_init = false;
  bool dna_only = false;
  bool with_aux = false;
  bool head_only = false;
  bool double_precision = false;
  RunConfig rc;
};

template <typename T>
int run_finetune(const FinetuneArgs& a) {
  RunConfig rc = a.rc;
  ModelConfig cfg;
  Parameters<T> params;
  Rng init_rng(rc.seed);
  bool dna_only = a.dna_only;

  if (!a.init_checkpoint.empty()) {
    const auto ck = load_checkpoint<T>(a.init_checkpoint);
    cfg = ck.model_cfg;
    cfg.with_aux = a.with_aux;
    cfg.ideas_vocab = a.dna_only ? 0 : ck.model_cfg.ideas_vocab;
    dna_only = a.dna_only || !cfg.has_ideas();  // a DNA-only base has no state table
    rc.kmer_size = ck.tok_cfg.k;
    rc.tokenization_stride = ck.tok_cfg.stride;
    rc.input_sequence_length = ck.tok_cfg.l_input;
    // the binding head is a fresh task-specific module; everything the
    // encoder learned carries over by name
    params = Parameters<T>::init(cfg, init_rng);
    auto dst = tensor_refs(params);
    auto src = tensor_refs(const_cast<Parameters<T>&>(ck.params));
    std::map<std::string, Mat<T>*> by_name;
    for (auto& r : src) by_name[r.name] = r.mat;
    for (auto& r : dst) {
      if (r.name.rfind("head.", 0) == 0) continue;
      auto it = by_name.find(r.name);
      if (it != by_name.end() && it->second->rows == r.mat->rows &&
          it->second->cols == r.mat->cols)
        *r.mat = *it->second;
    }
  } else {
    cfg = rc.model(dna_only, a.with_aux);
    params = Parameters<T>::init(cfg, init_rng);
  }
  std::printf("parameters: %zu\n", params.count());

  FinetuneDataset data;
  for (auto& rec : read_records(a.train_records)) {
    if (dna_only) rec.pair.ideas_ids.clear();
    data.train.push_back({std::move(rec.pair), rec.label});
  }
  for (auto& rec : read_records(a.eval_records)) {
    if (dna_only) rec.pair.ideas_ids.clear();
    data.eval.push_back({std::move(rec.pair), rec.label});
  }
  std::printf("train %zu samples, eval %zu samples, seed %" PRIu64 "\n", data.train.size(),
              data.eval.size(), rc.seed);

  FinetuneOptions opt;
  opt.max_epochs = rc.max_epochs;
  opt.batch_size = rc.batch_size;
  opt.peak_lr = rc.peak_learning_rate;
  opt.warmup_steps = rc.warmup_steps;
  opt.optim = rc.optim();
  opt.seed = rc.seed;
  opt.negative_ratio = rc.training_class_balance;
  opt.head_only = a.head_only;

  const auto result = finetune_loop(data, cfg, opt, std::move(params));

  std::filesystem::create_directories(a.out_dir);
  write_run_config(
      a.out_dir, rc,
      {std::string("mode=") + (dna_only ? "dna_only" : "paired"),
       std::string("with_aux=") + (a.with_aux ? "1" : "0"),
       std::string("init=") + (a.init_checkpoint.empty() ? "random" : a.init_checkpoint)});
  std::ofstream log(a.out_dir + "/finetune_log.csv");
  log << "epoch,auprc,auroc,loss\n";
  for (const auto& row : result.log)
    log << row.epoch << "," << fmt_double(row.auprc) << "," << fmt_double(row.auroc) << ","
        << fmt_double(row.loss) << "\n";
  save_checkpoint(a.out_dir + "/final.ebck", cfg, rc.tokenizer(), result.params,
                  static_cast<AdamW<T>*>(nullptr), result.epochs_run);
  std::printf("finished %d epochs; best eval AUPRC %s\n", result.epochs_run,
              fmt_double(result.best_auprc).c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

int cmd_evaluate(const std::string& predictions_path, const std::string& labels_path,
                 const std::string& out_csv) {
  const auto labels = read_labels(labels_path);

  std::map<std::tuple<std::string, std::int64_t, std::int64_t>, double> scores;
  const auto lines = read_lines(predictions_path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty() || lines[i][0] == '#') continue;
    const auto f = detail::split_fields(lines[i]);
    if (f.size() != 4)
      throw ParseError(predictions_path, static_cast<std::int64_t>(i) + 1,
                       "expected chrom start end score");
    std::int64_t start, end;
    double score;
    if (!detail::parse_i64(f[1], start) || !detail::parse_i64(f[2], end) ||
        !detail::parse_f64(f[3], score)) {
      if (i == 0) continue;  // tolerate a header row
      throw ParseError(predictions_path, static_cast<std::int64_t>(i) + 1, "malformed row");
    }
    scores[{std::string(f[0]), start, end}] = score;
  }

  PredictionSet set;
  for (const auto& bin : labels) {
    if (bin.label == BinLabel::Ambiguous) continue;
    const auto it = scores.find({bin.chromosome, bin.start, bin.end});
    if (it == scores.end())
      throw std::runtime_error("no prediction for labeled bin " + bin.chromosome + ":" +
                               std::to_string(bin.start));
    set.scores.push_back(it->second);
    set.labels.push_back(bin.label == BinLabel::Bound ? 1 : 0);
  }

  const MetricReport r = evaluate_predictions(set);
  std::printf("auprc %.6f\nauroc %.6f\nrecall_at_10fdr %.6f\nrecall_at_50fdr %.6f\n", r.auprc,
              r.auroc, r.recall_at_10fdr, r.recall_at_50fdr);
  if (!out_csv.empty()) {
    std::ofstream os(out_csv);
    os << "auprc,auroc,re10fdr,re50fdr\n";
    os << fmt_double(r.auprc) << "," << fmt_double(r.auroc) << ","
       << fmt_double(r.recall_at_10fdr) << "," << fmt_double(r.recall_at_50fdr) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// analyze

int cmd_analyze(const std::string& s1_path, const std::string& t1_path,
                const std::string& out_csv) {
  const auto s1 = read_benchmark_table(s1_path);
  const auto t1 = read_rank_table(t1_path);
  const auto rep = analyze_tables(s1, t1);
  write_report_text(std::cout, rep, t1);
  if (!out_csv.empty()) {
    std::ofstream os(out_csv);
    write_report_csv(os, rep);
  }
  return rep.all_pass() ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"paired DNA+epigenetic-state language model pipeline"};
  app.require_subcommand(1);

  TokenizeArgs ta;
  auto* tokenize = app.add_subcommand("tokenize", "windowed samples from genomic files");
  tokenize->add_option("--genome", ta.genome, "FASTA reference")->required();
  tokenize->add_option("--ideas", ta.ideas, "state segmentation TSV")->required();
  tokenize->add_option("--dnase", ta.dnase, "DNase signal TSV")->required();
  tokenize->add_option("--mapp", ta.mapp, "mappability signal TSV")->required();
  tokenize->add_option("--labels", ta.labels, "binding label TSV")->required();
  tokenize->add_option("--out", ta.out, "output record file")->required();
  tokenize->add_option("--cell-type", ta.cell_type, "cell type tag for the state track");
  tokenize->add_option("--k", ta.k, "k-mer size (record ids are 16-bit: k <= 7)");
  tokenize->add_option("--stride", ta.stride, "tokenization stride (default: k)");
  tokenize
      ->add_option("--split", ta.split,
                   "none|pretrain-train|pretrain-eval|finetune-train|finetune-eval")
      ->check(CLI::IsMember(
          {"none", "pretrain-train", "pretrain-eval", "finetune-train", "finetune-eval"}));

  PretrainArgs pa;
  auto* pretrain = app.add_subcommand("pretrain", "masked-LM training over a record corpus");
  pretrain->add_option("--records", pa.records, "EBRT0001 corpus");
  pretrain->add_option("--out-dir", pa.out_dir, "output directory")->required();
  pretrain->add_option("--config", pa.config, "key=value hyperparameter file");
  pretrain->add_option("--preset", pa.preset, "tiny | bert-base");
  pretrain->add_flag("--dna-only", pa.dna_only, "drop the state channel (DNA-only ablation)");
  pretrain->add_flag("--f64", pa.double_precision, "double-precision training");
  pretrain->add_option("--checkpoint-every", pa.checkpoint_every, "periodic checkpoint cadence");
  std::uint64_t pa_seed = 0;
  double pa_alpha = -1.0;
  std::int64_t pa_steps = -1;
  int pa_batch = -1, pa_k = -1, pa_stride = -1;
  pretrain->add_option("--seed", pa_seed, "run seed");
  pretrain->add_option("--alpha", pa_alpha, "DNA loss weight");
  pretrain->add_option("--steps", pa_steps, "training steps (0 = instantiate only)");
  pretrain->add_option("--batch", pa_batch, "batch size");
  pretrain->add_option("--k", pa_k, "k-mer size of the corpus");
  pretrain->add_option("--stride", pa_stride, "tokenization stride of the corpus");

  FinetuneArgs fa;
  auto* finetune = app.add_subcommand("finetune", "binding-model training from records");
  finetune->add_option("--train", fa.train_records, "training records")->required();
  finetune->add_option("--eval", fa.eval_records, "evaluation records")->required();
  finetune->add_option("--out-dir", fa.out_dir, "output directory")->required();
  finetune->add_option("--init", fa.init_checkpoint, "base checkpoint (EBCK0001)");
  finetune->add_flag("--random-init", fa.random_init, "train from randomly initialized weights");
  finetune->add_option("--config", fa.config, "key=value hyperparameter file");
  finetune->add_option("--preset", fa.preset, "tiny | bert-base");
  finetune->add_flag("--dna-only", fa.dna_only, "DNA-only ablation");
  finetune->add_flag("--with-aux", fa.with_aux, "concatenate DNase/mappability channels");
  finetune->add_flag("--head-only", fa.head_only, "freeze everything but the binding head");
  finetune->add_flag("--f64", fa.double_precision, "double-precision training");
  std::uint64_t fa_seed = 0;
  int fa_epochs = -1, fa_batch = -1, fa_k = -1;
  double fa_lr = -1.0;
  finetune->add_option("--seed", fa_seed, "run seed");
  finetune->add_option("--max-epochs", fa_epochs, "epoch cap");
  finetune->add_option("--batch", fa_batch, "batch size");
  finetune->add_option("--k", fa_k, "k-mer size of the records");
  finetune->add_option("--lr", fa_lr, "peak learning rate");

  std::string ev_pred, ev_labels, ev_out;
  auto* evaluate = app.add_subcommand("evaluate", "challenge metrics for a prediction TSV");
  evaluate->add_option("--predictions", ev_pred, "TSV chrom/start/end/score")->required();
  evaluate->add_option("--labels", ev_labels, "label TSV")->required();
  evaluate->add_option("--out", ev_out, "metric CSV");

  std::string an_s1, an_t1, an_out;
  auto* analyze = app.add_subcommand("analyze", "aggregate claims from benchmark tables");
  analyze->add_option("--table-s1", an_s1, "per-dataset metric table CSV")->required();
  analyze->add_option("--table-1", an_t1, "per-dataset rank table CSV")->required();
  analyze->add_option("--out", an_out, "claims CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : kExitUsage;
  }

  try {
    if (tokenize->parsed()) return cmd_tokenize(ta);

    if (pretrain->parsed()) {
      std::vector<std::string> warnings;
      if (!pa.preset.empty()) pa.rc.apply_preset(pa.preset);
      if (!pa.config.empty()) pa.rc.apply_file(pa.config, &warnings);
      for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      if (pretrain->count("--seed")) pa.rc.seed = pa_seed;
      if (pa_alpha >= 0.0) pa.rc.alpha = pa_alpha;
      if (pa_steps >= 0) pa.rc.steps = pa_steps;
      if (pa_batch > 0) pa.rc.batch_size = pa_batch;
      if (pa_k > 0) pa.rc.kmer_size = pa_k;
      if (pa_stride > 0) pa.rc.tokenization_stride = pa_stride;
      if (pa.records.empty() && pa.rc.steps != 0)
        throw std::invalid_argument("--records is required unless --steps 0");
      return pa.double_precision ? run_pretrain<double>(pa) : run_pretrain<float>(pa);
    }

    if (finetune->parsed()) {
      std::vector<std::string> warnings;
      fa.rc.adam_beta2 = 0.99;  // published fine-tuning defaults, overridable below
      fa.rc.adam_epsilon = 1e-5;
      if (!fa.preset.empty()) fa.rc.apply_preset(fa.preset);
      if (!fa.config.empty()) fa.rc.apply_file(fa.config, &warnings);
      for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      if (finetune->count("--seed")) fa.rc.seed = fa_seed;
      if (fa_epochs > 0) fa.rc.max_epochs = fa_epochs;
      if (fa_batch > 0) fa.rc.batch_size = fa_batch;
      if (fa_k > 0) fa.rc.kmer_size = fa_k;
      if (fa_lr > 0) fa.rc.peak_learning_rate = fa_lr;
      if (fa.init_checkpoint.empty() && !fa.random_init)
        throw std::invalid_argument("either --init <checkpoint> or --random-init is required");
      if (!fa.init_checkpoint.empty() && fa.random_init)
        throw std::invalid_argument("--init and --random-init are mutually exclusive");
      return fa.double_precision ? run_finetune<double>(fa) : run_finetune<float>(fa);
    }

    if (evaluate->parsed()) return cmd_evaluate(ev_pred, ev_labels, ev_out);
    if (analyze->parsed()) return cmd_analyze(an_s1, an_t1, an_out);
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return 0;
}
