#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "vulndet/archive.hpp"
#include "vulndet/cascade.hpp"
#include "vulndet/dataset.hpp"
#include "vulndet/error.hpp"
#include "vulndet/metrics.hpp"
#include "vulndet/model.hpp"
#include "vulndet/normalizer.hpp"
#include "vulndet/optim.hpp"
#include "vulndet/smote.hpp"
#include "vulndet/vocab.hpp"

#ifndef VULNDET_VERSION
#define VULNDET_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace vulndet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFindings = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool is_input_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyCorpus:
    case ErrorCode::MalformedLine:
    case ErrorCode::NoVulnerableSamples:
    case ErrorCode::TooFewSamples:
    case ErrorCode::IncompatibleSpec:
    case ErrorCode::LengthMismatch:
    case ErrorCode::VersionMismatch:
    case ErrorCode::ChecksumMismatch:
    case ErrorCode::SpecCorrupt:
    case ErrorCode::IdOutOfRange:
    case ErrorCode::VocabHashMismatch:
    case ErrorCode::InvalidArgument:
    case ErrorCode::Io:
      return true;
    default:
      return false;
  }
}

void require_file(const std::string& path, const std::string& what) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw UsageError(what + " not found: " + path);
}

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }
  double total() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
  std::chrono::steady_clock::time_point last_ = start_;
};

struct Manifest {
  Manifest(std::string name, std::uint64_t run_seed) : command(std::move(name)), seed(run_seed) {}

  std::string command;
  std::uint64_t seed = 0;
  json config = json::object();
  json inputs = json::object();
  json outputs = json::object();
  json timings = json::object();
  Stopwatch clock;

  void phase(const std::string& name) { timings[name] = clock.lap(); }

  void write(const std::string& path) {
    json j;
    j["command"] = command;
    j["version"] = VULNDET_VERSION;
    j["seed"] = seed;
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    timings["total"] = clock.total();
    j["timings_seconds"] = timings;
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write manifest '" + path + "'");
    out << j.dump(2) << "\n";
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out << text;
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

void check_stage(const Model& model, int stage, const std::string& path) {
  if (model.spec().stage != stage) {
    throw UsageError(path + " holds a stage " + std::to_string(model.spec().stage) + " model, expected stage " +
                     std::to_string(stage));
  }
}

void check_hash(const std::string& what, const std::string& found, const std::string& expected) {
  if (found != expected) {
    throw Error(ErrorCode::VocabHashMismatch, what + " was built with vocabulary " + found +
                                                  " but the vocabulary file hashes to " + expected);
  }
}

std::vector<std::size_t> run_labels(const Model& model, std::span<const IdVector> rows, double threshold) {
  constexpr std::size_t kChunk = 128;
  std::vector<std::size_t> out;
  out.reserve(rows.size());
  for (std::size_t start = 0; start < rows.size(); start += kChunk) {
    const auto chunk = rows.subspan(start, std::min(kChunk, rows.size() - start));
    const auto labels = predict_labels(model.forward(make_id_batch(chunk, model.spec().input_length)), threshold);
    out.insert(out.end(), labels.begin(), labels.end());
  }
  return out;
}

std::vector<IdVector> rows_of(const EncodedArchive& archive) {
  std::vector<IdVector> rows;
  rows.reserve(archive.size());
  for (const auto& s : archive.samples) rows.push_back(s.ids);
  return rows;
}

const std::vector<std::string> kBinaryNames{"NonVulnerable", "Vulnerable"};

// ------------------------------------------------------------- preprocess

struct PreprocessOptions {
  std::string corpus;
  std::string out_dir;
  std::size_t stage1_length = 500;
  std::size_t stage2_length = 400;
  std::size_t min_freq = 1;
  std::size_t max_rejected = 1000;
  double train_fraction = 0.8;
  std::string preserved_names;
};

int run_preprocess(const PreprocessOptions& o, std::uint64_t seed, bool as_json) {
  Manifest m("preprocess", seed);
  require_file(o.corpus, "corpus");
  NormalizerOptions nopts;
  if (!o.preserved_names.empty()) {
    require_file(o.preserved_names, "preserved-names file");
    nopts = load_preserved_names(o.preserved_names);
  }
  if (o.stage1_length < 1 || o.stage2_length < 1) throw UsageError("sequence lengths must be positive");

  const LoadedCorpus corpus = load_corpus(o.corpus, o.max_rejected);
  for (const auto& d : corpus.rejected) {
    std::cerr << "warning: " << o.corpus << ":" << d.line << ": " << d.message << "\n";
  }
  const auto& samples = corpus.samples;
  m.phase("load");

  std::vector<NormalizedSample> normalized;
  normalized.reserve(samples.size());
  std::size_t flagged = 0;
  for (const auto& s : samples) {
    normalized.push_back(normalize_source(s.code, nopts));
    normalized.back().source_id = s.source_id;
    flagged += normalized.back().flagged;
  }
  m.phase("normalize");

  const SplitSpec split_spec{.train_fraction = o.train_fraction, .seed = seed, .stratified = true};
  const Split parts = split(samples, split_spec);
  std::vector<NormalizedSample> train_tokens;
  for (auto i : parts.train) train_tokens.push_back(normalized[i]);
  const Vocabulary vocab = Vocabulary::build(train_tokens, o.min_freq);

  LabelMap labels;
  std::vector<std::string> warnings;
  try {
    labels = LabelMap::build(samples);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoVulnerableSamples) throw;
    warnings.push_back("corpus has no vulnerable samples; the stage 2 archives are empty");
  }
  m.phase("vocabulary");

  auto make_archive = [&](std::size_t length) {
    EncodedArchive a;
    a.max_len = static_cast<std::uint32_t>(length);
    a.vocab_hash = vocab.hash();
    return a;
  };
  EncodedArchive s1_train = make_archive(o.stage1_length), s1_test = make_archive(o.stage1_length);
  EncodedArchive s2_train = make_archive(o.stage2_length), s2_test = make_archive(o.stage2_length);
  auto fill = [&](const std::vector<std::size_t>& indices, EncodedArchive& s1, EncodedArchive& s2) {
    for (auto i : indices) {
      const auto& s = samples[i];
      const std::int32_t cls = s.cwe ? static_cast<std::int32_t>(*labels.index_of(*s.cwe)) : -1;
      s1.add(encode(normalized[i], vocab, o.stage1_length), s.vulnerable, cls);
      if (s.vulnerable) s2.add(encode(normalized[i], vocab, o.stage2_length), true, cls);
    }
  };
  fill(parts.train, s1_train, s2_train);
  fill(parts.test, s1_test, s2_test);
  m.phase("encode");

  fs::create_directories(o.out_dir);
  const fs::path dir(o.out_dir);
  auto out = [&](const std::string& key, const std::string& name) {
    const std::string p = (dir / name).string();
    m.outputs[key] = p;
    return p;
  };
  vocab.save(out("vocabulary", "vocab.txt"));
  labels.save(out("labels", "labels.txt"));
  save_archive(s1_train, out("stage1_train", "stage1_train.vda"));
  save_archive(s1_test, out("stage1_test", "stage1_test.vda"));
  save_archive(s2_train, out("stage2_train", "stage2_train.vda"));
  save_archive(s2_test, out("stage2_test", "stage2_test.vda"));

  const ClassStats stats = class_stats(samples);
  write_text(out("stats_text", "stats.txt"), format_stats_table(stats));
  write_text(out("stats_json", "stats.json"), stats_to_json(stats) + "\n");

  std::ostringstream lines;
  std::vector<const char*> part_of(samples.size(), "train");
  for (auto i : parts.test) part_of[i] = "test";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    json row;
    row["id"] = samples[i].source_id;
    row["split"] = part_of[i];
    row["vulnerable"] = samples[i].vulnerable ? 1 : 0;
    if (samples[i].cwe) row["cwe"] = *samples[i].cwe;
    row["flagged"] = normalized[i].flagged;
    row["tokens"] = normalized[i].joined();
    lines << row.dump() << "\n";
  }
  write_text(out("normalized", "normalized.jsonl"), lines.str());
  m.phase("write");

  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  m.config = {{"stage1_length", o.stage1_length},
              {"stage2_length", o.stage2_length},
              {"min_freq", o.min_freq},
              {"max_rejected", o.max_rejected},
              {"train_fraction", o.train_fraction},
              {"stratified", true},
              {"preserve_api_names", o.preserved_names.empty() ? json(nullptr) : json(o.preserved_names)}};
  m.inputs["corpus"] = o.corpus;
  m.write((dir / "manifest.json").string());

  json summary;
  summary["samples"] = samples.size();
  summary["rejected_lines"] = corpus.rejected.size();
  summary["flagged_samples"] = flagged;
  summary["train"] = parts.train.size();
  summary["test"] = parts.test.size();
  summary["vocabulary_size"] = vocab.size();
  summary["vocabulary_hash"] = vocab.hash();
  summary["classes"] = labels.size();
  summary["stage2_train"] = s2_train.size();
  summary["stage2_test"] = s2_test.size();
  summary["warnings"] = warnings;
  if (as_json) {
    std::cout << summary.dump(2) << "\n";
  } else {
    std::cout << format_stats_table(stats) << "\n";
    std::cout << "samples " << samples.size() << " (" << corpus.rejected.size() << " rejected lines, " << flagged
              << " flagged by the lexer)\n"
              << "split   train " << parts.train.size() << ", test " << parts.test.size() << "\n"
              << "vocab   " << vocab.size() << " tokens, hash " << vocab.hash() << "\n"
              << "stage 2 " << labels.size() << " classes, train " << s2_train.size() << ", test " << s2_test.size()
              << "\n"
              << "wrote   " << dir.string() << "\n";
  }
  return kExitOk;
}

// ------------------------------------------------------------------ train

struct TrainOptions {
  int stage = 1;
  std::string data;
  std::string vocab;
  std::string labels;
  std::string out;
  std::string arch = "paper";
  std::string optimizer;
  std::size_t batch = 0;
  std::size_t epochs = 0;
  double lr = 0.0;
  double clip_norm = 0.0;
  std::optional<bool> smote;
  std::size_t smote_k = 5;
  bool alternate_head = false;
  bool quiet = false;
};

json config_to_json(const TrainConfig& c) {
  return {{"optimizer", std::string(to_string(c.optimizer.kind))},
          {"learning_rate", c.optimizer.learning_rate},
          {"beta1", c.optimizer.beta1},
          {"beta2", c.optimizer.beta2},
          {"rho", c.optimizer.rho},
          {"eps", c.optimizer.eps},
          {"clip_norm", c.optimizer.clip_norm},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"smote", c.smote},
          {"smote_k", c.smote_k}};
}

int run_train(const TrainOptions& o, const CLI::App& cmd, std::uint64_t seed, bool as_json) {
  Manifest m("train", seed);
  if (o.stage != 1 && o.stage != 2) throw UsageError("--stage must be 1 or 2");
  if (o.arch != "paper" && o.arch != "tiny") throw UsageError("--arch must be 'paper' or 'tiny'");
  require_file(o.data, "archive");
  require_file(o.vocab, "vocabulary");
  if (o.stage == 2) {
    if (o.labels.empty()) throw UsageError("stage 2 training needs --labels");
    require_file(o.labels, "label map");
  }

  TrainConfig cfg = o.stage == 1 ? stage1_defaults() : stage2_defaults();
  if (cmd.count("--optimizer")) cfg.optimizer.kind = parse_optimizer(o.optimizer);
  if (cmd.count("--lr")) cfg.optimizer.learning_rate = o.lr;
  if (cmd.count("--batch")) cfg.batch_size = o.batch;
  if (cmd.count("--epochs")) cfg.epochs = o.epochs;
  cfg.optimizer.clip_norm = o.clip_norm;
  if (o.smote) cfg.smote = *o.smote;
  cfg.smote_k = o.smote_k;
  cfg.seed = seed;
  if (!(cfg.optimizer.learning_rate > 0.0)) throw UsageError("--lr must be positive");

  const Vocabulary vocab = Vocabulary::load(o.vocab);
  const EncodedArchive archive = load_archive(o.data);
  check_hash("archive " + o.data, archive.vocab_hash, vocab.hash());
  LabelMap labels;
  if (o.stage == 2) labels = LabelMap::load(o.labels);
  m.phase("load");

  TrainingData data;
  data.inputs = rows_of(archive);
  for (std::size_t i = 0; i < archive.size(); ++i) {
    if (o.stage == 1) {
      data.labels.push_back(archive.vulnerable[i]);
    } else {
      const auto cls = archive.class_index[i];
      if (cls < 0 || static_cast<std::size_t>(cls) >= labels.size()) {
        throw UsageError("sample " + std::to_string(i) + " of " + o.data + " has class " + std::to_string(cls) +
                         ", outside the " + std::to_string(labels.size()) + "-entry label map");
      }
      data.labels.push_back(static_cast<std::size_t>(cls));
    }
  }
  if (data.inputs.empty()) throw UsageError("archive " + o.data + " holds no samples");

  const ModelSpec spec =
      o.arch == "tiny"
          ? (o.stage == 1 ? ModelSpec::tiny_stage1(vocab.size(), archive.max_len)
                          : ModelSpec::tiny_stage2(vocab.size(), labels.size(), archive.max_len))
          : (o.stage == 1 ? ModelSpec::stage1(vocab.size(), o.alternate_head)
                          : ModelSpec::stage2(vocab.size(), labels.size(), o.alternate_head));
  if (spec.input_length != archive.max_len) {
    std::cerr << "warning: archive rows of length " << archive.max_len << " are fitted to the model input length "
              << spec.input_length << "\n";
  }
  Model model = Model::build(spec, seed);
  model.vocab_hash = vocab.hash();
  model.labels = labels;

  const std::string log_path = o.out + ".log.json";
  m.config = config_to_json(cfg);
  m.config["stage"] = o.stage;
  m.config["arch"] = o.arch;
  m.config["alternate_head"] = o.alternate_head;
  m.config["parameters"] = model.parameter_count();
  m.inputs = {{"archive", o.data}, {"vocabulary", o.vocab}};
  if (o.stage == 2) m.inputs["labels"] = o.labels;
  m.outputs = {{"model", o.out}, {"log", log_path}};
  m.phase("build");

  const auto progress = [&](const EpochRecord& r) {
    if (!o.quiet) {
      std::cerr << "epoch " << r.epoch << "/" << cfg.epochs << " loss " << fixed(r.loss, 6) << " accuracy "
                << fixed(r.accuracy) << "\n";
    }
  };
  if (auto parent = fs::path(o.out).parent_path(); !parent.empty()) fs::create_directories(parent);

  TrainLog log;
  try {
    log = train(model, data, cfg, progress);
  } catch (const TrainingDiverged& e) {
    write_text(log_path, e.log().to_json() + "\n");
    m.outputs.erase("model");
    m.phase("train");
    m.write(o.out + ".manifest.json");
    std::cerr << "error: " << e.what() << "; training log kept at " << log_path << "\n";
    return kExitRuntime;
  }
  m.phase("train");
  for (const auto& w : log.warnings) std::cerr << "warning: " << w << "\n";

  save_model(model, o.out);
  write_text(log_path, log.to_json() + "\n");
  m.write(o.out + ".manifest.json");

  const auto& last = log.epochs.back();
  if (as_json) {
    json j = json::parse(log.to_json());
    j["model"] = o.out;
    j["parameters"] = model.parameter_count();
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "stage " << o.stage << " model (" << model.parameter_count() << " parameters) trained for "
              << log.epochs.size() << " epochs, " << log.steps << " steps on " << log.samples_after_smote
              << " samples\n"
              << "final loss " << fixed(last.loss, 6) << ", training accuracy " << fixed(last.accuracy) << "\n"
              << "wrote " << o.out << "\n";
  }
  return kExitOk;
}

// --------------------------------------------------------------- evaluate

struct EvaluateOptions {
  std::string vocab;
  std::string stage1;
  std::string stage2;
  std::string data;
  std::string stage2_data;
  std::string report;
  double threshold = 0.5;
};

void validate_threshold(double t) {
  if (!(t > 0.0 && t < 1.0)) throw UsageError("--threshold must lie strictly between 0 and 1");
}

int run_evaluate(const EvaluateOptions& o, std::uint64_t seed, bool as_json) {
  Manifest m("evaluate", seed);
  validate_threshold(o.threshold);
  if (o.stage1.empty() && o.stage2.empty()) throw UsageError("give --stage1, --stage2 or both");
  require_file(o.vocab, "vocabulary");
  const Vocabulary vocab = Vocabulary::load(o.vocab);
  m.inputs["vocabulary"] = o.vocab;

  std::optional<Model> s1, s2;
  if (!o.stage1.empty()) {
    require_file(o.stage1, "stage 1 model");
    s1 = load_model(o.stage1);
    check_stage(*s1, 1, o.stage1);
    check_hash("stage 1 model " + o.stage1, s1->vocab_hash, vocab.hash());
    m.inputs["stage1"] = o.stage1;
  }
  if (!o.stage2.empty()) {
    require_file(o.stage2, "stage 2 model");
    s2 = load_model(o.stage2);
    check_stage(*s2, 2, o.stage2);
    check_hash("stage 2 model " + o.stage2, s2->vocab_hash, vocab.hash());
    m.inputs["stage2"] = o.stage2;
  }
  std::optional<EncodedArchive> binary, cwe;
  if (!o.data.empty()) {
    require_file(o.data, "archive");
    binary = load_archive(o.data);
    check_hash("archive " + o.data, binary->vocab_hash, vocab.hash());
    m.inputs["data"] = o.data;
  }
  if (!o.stage2_data.empty()) {
    require_file(o.stage2_data, "archive");
    cwe = load_archive(o.stage2_data);
    check_hash("archive " + o.stage2_data, cwe->vocab_hash, vocab.hash());
    m.inputs["stage2_data"] = o.stage2_data;
  }
  m.phase("load");

  json report;
  std::ostringstream text;
  bool any = false;

  if (s1 && binary) {
    const auto rows = rows_of(*binary);
    const auto predicted = run_labels(*s1, rows, o.threshold);
    std::vector<std::size_t> truth(binary->vulnerable.begin(), binary->vulnerable.end());
    const Scores sc = scores(confusion(predicted, truth, 2));
    report["stage1"] = json::parse(scores_to_json(sc, kBinaryNames));
    text << "Stage 1 (binary, " << rows.size() << " samples, threshold " << o.threshold << ")\n"
         << format_scores_table(sc, kBinaryNames) << "\n";
    any = true;
  }
  if (s2 && cwe) {
    if (cwe->size() == 0) throw UsageError("archive " + o.stage2_data + " holds no samples");
    const auto& names = s2->labels.cwes();
    std::vector<std::size_t> truth;
    for (auto cls : cwe->class_index) {
      if (cls < 0 || static_cast<std::size_t>(cls) >= names.size()) {
        throw UsageError("archive " + o.stage2_data + " has class " + std::to_string(cls) +
                         " outside the stage 2 label map");
      }
      truth.push_back(static_cast<std::size_t>(cls));
    }
    const auto predicted = run_labels(*s2, rows_of(*cwe), 0.5);
    const Scores sc = scores(confusion(predicted, truth, names.size()));
    report["stage2"] = json::parse(scores_to_json(sc, names));
    text << "Stage 2 (CWE, " << truth.size() << " samples)\n" << format_scores_table(sc, names) << "\n";
    any = true;
  }
  if (s1 && s2 && binary) {
    const Cascade cascade(*s1, *s2, vocab, o.threshold);
    const auto rows = rows_of(*binary);
    const auto preds = cascade.predict_batch(rows);
    std::vector<std::string> names{"NonVulnerable"};
    names.insert(names.end(), cascade.labels().cwes().begin(), cascade.labels().cwes().end());
    std::vector<std::size_t> truth_bin, pred_bin, truth_cls, pred_cls;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const bool vulnerable = binary->vulnerable[i] != 0;
      const auto cls = binary->class_index[i];
      if (vulnerable && (cls < 0 || static_cast<std::size_t>(cls) + 1 >= names.size())) {
        throw UsageError("archive " + o.data + " has class " + std::to_string(cls) +
                         " outside the stage 2 label map");
      }
      truth_bin.push_back(vulnerable);
      pred_bin.push_back(preds[i].verdict == Verdict::Vulnerable);
      truth_cls.push_back(vulnerable ? static_cast<std::size_t>(cls) + 1 : 0);
      pred_cls.push_back(preds[i].predicted_cwe ? *cascade.labels().index_of(*preds[i].predicted_cwe) + 1 : 0);
    }
    const Scores bin = scores(confusion(pred_bin, truth_bin, 2));
    const Scores cls = scores(confusion(pred_cls, truth_cls, names.size()));
    json j;
    j["samples"] = preds.size();
    j["stage1_evaluations"] = cascade.stage1_evaluations();
    j["stage2_evaluations"] = cascade.stage2_evaluations();
    j["threshold"] = o.threshold;
    j["binary"] = json::parse(scores_to_json(bin, kBinaryNames));
    j["cwe"] = json::parse(scores_to_json(cls, names));
    report["cascade"] = j;
    text << "Cascade (" << preds.size() << " samples, threshold " << o.threshold << ")\n"
         << format_scores_table(bin, kBinaryNames) << "\n"
         << format_scores_table(cls, names) << "\n"
         << "stage2 evaluated on " << cascade.stage2_evaluations() << " of " << preds.size() << " samples\n";
    any = true;
  }
  if (!any) throw UsageError("nothing to evaluate: pair --stage1 with --data and --stage2 with --stage2-data");
  m.phase("evaluate");

  std::cout << (as_json ? report.dump(2) + "\n" : text.str());
  if (!o.report.empty()) {
    write_text(o.report, report.dump(2) + "\n");
    m.config = {{"threshold", o.threshold}};
    m.outputs["report"] = o.report;
    m.write(o.report + ".manifest.json");
  }
  return kExitOk;
}

// ------------------------------------------------------------------- scan

struct ScanOptions {
  std::string stage1;
  std::string stage2;
  std::string vocab;
  std::string labels;
  std::string preserved_names;
  std::string report;
  std::vector<std::string> paths;
  double threshold = 0.5;
  bool per_function = false;
  std::size_t jobs = 1;
};

bool has_source_extension(const fs::path& p) {
  static const std::vector<std::string> kExtensions{".c", ".cc", ".cpp", ".h"};
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return std::find(kExtensions.begin(), kExtensions.end(), ext) != kExtensions.end();
}

struct ScanInput {
  std::string path;
  std::string error;
};

std::vector<ScanInput> collect_inputs(const std::vector<std::string>& paths) {
  std::vector<ScanInput> inputs;
  for (const auto& p : paths) {
    std::error_code ec;
    if (fs::is_directory(p, ec)) {
      std::vector<std::string> found;
      fs::recursive_directory_iterator it(p, fs::directory_options::skip_permission_denied, ec), end;
      for (; !ec && it != end; it.increment(ec)) {
        std::error_code fec;
        if (it->is_regular_file(fec) && has_source_extension(it->path())) found.push_back(it->path().string());
      }
      if (ec) inputs.push_back({p, "cannot list directory: " + ec.message()});
      std::sort(found.begin(), found.end());
      for (auto& f : found) inputs.push_back({std::move(f), ""});
    } else if (fs::exists(p, ec)) {
      inputs.push_back({p, ""});
    } else {
      inputs.push_back({p, "no such file or directory"});
    }
  }
  return inputs;
}

struct ScanUnit {
  std::string name;  // function name in --per-function mode
  std::size_t line = 0;
  Prediction prediction;
};

struct ScanResult {
  std::string path;
  std::string error;
  std::vector<ScanUnit> units;
};

std::optional<std::string> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream s;
  s << in.rdbuf();
  if (in.bad()) return std::nullopt;
  return s.str();
}

ScanResult scan_one(const ScanInput& input, const Cascade& cascade, bool per_function) {
  ScanResult r{.path = input.path, .error = input.error, .units = {}};
  if (!r.error.empty()) return r;
  const auto source = read_file(input.path);
  if (!source) {
    r.error = "cannot read file";
    return r;
  }
  if (per_function) {
    for (const auto& f : split_functions(*source)) {
      r.units.push_back({f.name, f.line, cascade.predict(f.text)});
    }
    if (!r.units.empty()) return r;
  }
  r.units.push_back({"", 0, cascade.predict(*source)});
  return r;
}

std::vector<std::pair<std::string, double>> top_classes(const Prediction& p, const LabelMap& labels, std::size_t n) {
  std::vector<std::pair<std::string, double>> out;
  if (!p.class_distribution) return out;
  const auto& d = *p.class_distribution;
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] > d[b]; });
  for (std::size_t i = 0; i < std::min(n, order.size()); ++i) out.emplace_back(labels.cwe_of(order[i]), d[order[i]]);
  return out;
}

std::string unit_label(const ScanResult& r, const ScanUnit& u) {
  if (u.name.empty()) return r.path;
  return r.path + ":" + std::to_string(u.line) + " " + u.name;
}

int run_scan(const ScanOptions& o, std::uint64_t seed, bool as_json) {
  Manifest m("scan", seed);
  validate_threshold(o.threshold);
  if (o.jobs < 1) throw UsageError("--jobs must be at least 1");
  require_file(o.stage1, "stage 1 model");
  require_file(o.stage2, "stage 2 model");
  require_file(o.vocab, "vocabulary");
  NormalizerOptions nopts;
  if (!o.preserved_names.empty()) {
    require_file(o.preserved_names, "preserved-names file");
    nopts = load_preserved_names(o.preserved_names);
  }
  const Vocabulary vocab = Vocabulary::load(o.vocab);
  const Model s1 = load_model(o.stage1);
  const Model s2 = load_model(o.stage2);
  check_stage(s1, 1, o.stage1);
  check_stage(s2, 2, o.stage2);
  if (!o.labels.empty()) {
    require_file(o.labels, "label map");
    if (!(LabelMap::load(o.labels) == s2.labels)) {
      throw UsageError("label map " + o.labels + " differs from the one stored in " + o.stage2);
    }
  }
  const Cascade cascade(s1, s2, vocab, o.threshold, nopts);
  m.phase("load");

  const auto inputs = collect_inputs(o.paths);
  std::vector<ScanResult> results(inputs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < inputs.size(); i = next++) results[i] = scan_one(inputs[i], cascade, o.per_function);
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(o.jobs, inputs.size()); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  m.phase("scan");

  std::size_t files = 0, units = 0, vulnerable = 0, clean = 0, unreadable = 0, flagged = 0;
  json records = json::array();
  for (const auto& r : results) {
    if (!r.error.empty()) {
      ++unreadable;
      if (!as_json) std::cout << r.path << ": error: " << r.error << "\n";
      records.push_back({{"path", r.path}, {"error", r.error}});
      continue;
    }
    ++files;
    for (const auto& u : r.units) {
      ++units;
      const auto& p = u.prediction;
      const bool bad = p.verdict == Verdict::Vulnerable;
      bad ? ++vulnerable : ++clean;
      flagged += p.flagged;
      const auto top = top_classes(p, cascade.labels(), 3);
      json rec;
      rec["path"] = r.path;
      if (!u.name.empty()) {
        rec["function"] = u.name;
        rec["line"] = u.line;
      }
      rec["verdict"] = std::string(to_string(p.verdict));
      rec["stage1_probability"] = p.stage1_probability;
      if (p.predicted_cwe) rec["cwe"] = *p.predicted_cwe;
      if (!top.empty()) {
        rec["top"] = json::array();
        for (const auto& [name, prob] : top) rec["top"].push_back({{"cwe", name}, {"probability", prob}});
      }
      rec["flagged"] = p.flagged;
      records.push_back(rec);
      if (as_json) continue;
      std::cout << unit_label(r, u) << ": " << to_string(p.verdict) << " p=" << fixed(p.stage1_probability);
      if (p.predicted_cwe) {
        std::cout << " " << *p.predicted_cwe << " [";
        for (std::size_t i = 0; i < top.size(); ++i) {
          std::cout << (i ? ", " : "") << top[i].first << " " << fixed(top[i].second, 3);
        }
        std::cout << "]";
      }
      if (p.flagged) std::cout << " (lexer warning)";
      std::cout << "\n";
    }
  }

  json summary;
  summary["files"] = files;
  summary["units"] = units;
  summary["vulnerable"] = vulnerable;
  summary["clean"] = clean;
  summary["unreadable"] = unreadable;
  summary["flagged"] = flagged;
  summary["stage2_evaluations"] = cascade.stage2_evaluations();
  summary["threshold"] = o.threshold;
  if (as_json) {
    std::cout << json{{"results", records}, {"summary", summary}}.dump(2) << "\n";
  } else {
    std::cout << "-- scanned " << files << " files (" << units << (o.per_function ? " units" : " predictions")
              << "): " << vulnerable << " vulnerable, " << clean << " clean, " << unreadable << " unreadable; "
              << "stage2 evaluated on " << cascade.stage2_evaluations() << " of " << units << "\n";
  }
  if (!o.report.empty()) {
    write_text(o.report, json{{"results", records}, {"summary", summary}}.dump(2) + "\n");
    m.config = {{"threshold", o.threshold}, {"per_function", o.per_function}, {"jobs", o.jobs}};
    m.inputs = {{"stage1", o.stage1}, {"stage2", o.stage2}, {"vocabulary", o.vocab}, {"paths", o.paths}};
    m.outputs["report"] = o.report;
    m.write(o.report + ".manifest.json");
  }
  if (files == 0 && unreadable > 0) return kExitUsage;
  return vulnerable > 0 ? kExitFindings : kExitOk;
}

// ----------------------------------------------------------- smote-report

struct SmoteReportOptions {
  std::string data;
  std::string vocab;
  std::string labels;
  std::string report;
  int stage = 2;
  std::size_t k = 5;
  std::size_t target = 0;
};

int run_smote_report(const SmoteReportOptions& o, std::uint64_t seed, bool as_json) {
  Manifest m("smote-report", seed);
  if (o.stage != 1 && o.stage != 2) throw UsageError("--stage must be 1 or 2");
  require_file(o.data, "archive");
  require_file(o.vocab, "vocabulary");
  const Vocabulary vocab = Vocabulary::load(o.vocab);
  const EncodedArchive archive = load_archive(o.data);
  check_hash("archive " + o.data, archive.vocab_hash, vocab.hash());
  std::vector<std::string> names = kBinaryNames;
  if (o.stage == 2) {
    names.clear();
    if (!o.labels.empty()) {
      require_file(o.labels, "label map");
      names = LabelMap::load(o.labels).cwes();
    }
  }

  std::vector<std::vector<IdVector>> grouped(names.size());
  for (std::size_t i = 0; i < archive.size(); ++i) {
    const std::int64_t cls = o.stage == 1 ? archive.vulnerable[i] : archive.class_index[i];
    if (cls < 0) throw UsageError("sample " + std::to_string(i) + " of " + o.data + " has no class");
    const auto c = static_cast<std::size_t>(cls);
    if (c >= grouped.size()) {
      if (!o.labels.empty()) throw UsageError("class " + std::to_string(c) + " is outside the label map");
      grouped.resize(c + 1);
    }
    grouped[c].push_back(archive.samples[i].ids);
  }
  for (std::size_t c = names.size(); c < grouped.size(); ++c) names.push_back("class " + std::to_string(c));

  std::vector<std::size_t> present;
  std::vector<std::vector<IdVector>> compact;
  for (std::size_t c = 0; c < grouped.size(); ++c) {
    if (!grouped[c].empty()) {
      present.push_back(c);
      compact.push_back(grouped[c]);
    }
  }
  if (compact.empty()) throw UsageError("archive " + o.data + " holds no samples");
  SmoteConfig sc{.k = o.k, .target_count = std::nullopt, .seed = seed};
  if (o.target > 0) sc.target_count = o.target;
  const SmoteResult result = oversample(compact, vocab.size(), sc);
  m.phase("oversample");

  std::vector<std::size_t> synthetic(compact.size(), 0), duplicated(compact.size(), 0);
  for (const auto& rec : result.synthetic) {
    ++(rec.duplicated ? duplicated : synthetic)[rec.class_index];
  }
  json rows = json::array();
  std::ostringstream table;
  table << std::left << std::setw(16) << "class" << std::right << std::setw(10) << "before" << std::setw(10) << "after"
        << std::setw(12) << "synthetic" << std::setw(12) << "duplicated" << "\n";
  std::size_t before_total = 0, after_total = 0;
  for (std::size_t i = 0; i < compact.size(); ++i) {
    const auto& name = names[present[i]];
    const std::size_t before = compact[i].size(), after = result.classes[i].size();
    before_total += before;
    after_total += after;
    rows.push_back({{"class", name},
                    {"before", before},
                    {"after", after},
                    {"synthetic", synthetic[i]},
                    {"duplicated", duplicated[i]}});
    table << std::left << std::setw(16) << name << std::right << std::setw(10) << before << std::setw(10) << after
          << std::setw(12) << synthetic[i] << std::setw(12) << duplicated[i] << "\n";
  }
  table << std::left << std::setw(16) << "total" << std::right << std::setw(10) << before_total << std::setw(10)
        << after_total << "\n";

  json report{{"stage", o.stage}, {"k", o.k},     {"seed", seed},
              {"classes", rows},  {"before", before_total}, {"after", after_total},
              {"warnings", result.warnings}};
  if (as_json) {
    std::cout << report.dump(2) << "\n";
  } else {
    std::cout << table.str();
    for (const auto& w : result.warnings) std::cout << "warning: " << w << "\n";
  }
  if (!o.report.empty()) {
    write_text(o.report, report.dump(2) + "\n");
    m.config = {{"stage", o.stage}, {"k", o.k}, {"target", o.target}};
    m.inputs = {{"archive", o.data}, {"vocabulary", o.vocab}};
    m.outputs["report"] = o.report;
    m.write(o.report + ".manifest.json");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage vulnerability detector for C and C++ sources", "vulndet"};
  app.set_version_flag("--version", VULNDET_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 42;
  bool as_json = false;
  app.add_option("--seed", seed, "Random seed for splits, initialization, shuffling and SMOTE")->capture_default_str();
  app.add_flag("--json", as_json, "Print machine-readable output");

  PreprocessOptions pre;
  auto* c_pre = app.add_subcommand("preprocess", "Normalize and encode a JSONL corpus into training archives");
  c_pre->add_option("corpus", pre.corpus, "Corpus file (JSON lines)")->required();
  c_pre->add_option("-o,--out", pre.out_dir, "Output directory")->required();
  c_pre->add_option("--stage1-length", pre.stage1_length, "Stage 1 sequence length")->capture_default_str();
  c_pre->add_option("--stage2-length", pre.stage2_length, "Stage 2 sequence length")->capture_default_str();
  c_pre->add_option("--min-freq", pre.min_freq, "Minimum token frequency for the vocabulary")->capture_default_str();
  c_pre->add_option("--max-rejected", pre.max_rejected, "Malformed lines tolerated before failing")
      ->capture_default_str();
  c_pre->add_option("--train-fraction", pre.train_fraction, "Training share of the stratified split")
      ->capture_default_str();
  c_pre->add_option("--preserve-api-names", pre.preserved_names, "File of identifiers kept verbatim");

  TrainOptions tr;
  auto* c_train = app.add_subcommand("train", "Train a stage 1 or stage 2 model on an encoded archive");
  c_train->add_option("--stage", tr.stage, "1 (binary detector) or 2 (CWE classifier)")->required();
  c_train->add_option("-d,--data", tr.data, "Training archive")->required();
  c_train->add_option("--vocab", tr.vocab, "Vocabulary file")->required();
  c_train->add_option("--labels", tr.labels, "Label map (stage 2)");
  c_train->add_option("-o,--out", tr.out, "Model output path")->required();
  c_train->add_option("--arch", tr.arch, "paper or tiny")->capture_default_str();
  c_train->add_option("--optimizer", tr.optimizer, "sgd, adam, rmsprop or adagrad (default adam)");
  c_train->add_option("--batch", tr.batch, "Batch size (default 64 for stage 1, 32 for stage 2)");
  c_train->add_option("--epochs", tr.epochs, "Epochs (default 10 for stage 1, 50 for stage 2)");
  c_train->add_option("--lr", tr.lr, "Learning rate (default 0.005 for stage 1, 0.001 for stage 2)");
  c_train->add_option("--clip-norm", tr.clip_norm, "Global gradient-norm clip, 0 disables")->capture_default_str();
  c_train->add_flag("--smote,!--no-smote", tr.smote, "Oversample classes before training (default on for stage 2)");
  c_train->add_option("--smote-k", tr.smote_k, "SMOTE neighbour count")->capture_default_str();
  c_train->add_flag("--alternate-head", tr.alternate_head,
                    "Stage 1: (tanh + 1) / 2 output; stage 2: per-class sigmoid output");
  c_train->add_flag("-q,--quiet", tr.quiet, "Do not print per-epoch progress");

  EvaluateOptions ev;
  auto* c_eval = app.add_subcommand("evaluate", "Report accuracy and F1 for single stages and the cascade");
  c_eval->add_option("--vocab", ev.vocab, "Vocabulary file")->required();
  c_eval->add_option("--stage1", ev.stage1, "Stage 1 model");
  c_eval->add_option("--stage2", ev.stage2, "Stage 2 model");
  c_eval->add_option("-d,--data", ev.data, "Stage 1 test archive (also used for the cascade)");
  c_eval->add_option("--stage2-data", ev.stage2_data, "Stage 2 test archive");
  c_eval->add_option("--threshold", ev.threshold, "Stage 1 decision threshold")->capture_default_str();
  c_eval->add_option("--report", ev.report, "Write the JSON report here");

  ScanOptions sc;
  auto* c_scan = app.add_subcommand("scan", "Classify source files or directories");
  c_scan->add_option("paths", sc.paths, "Files or directories (*.c, *.cc, *.cpp, *.h)")->required();
  c_scan->add_option("--stage1", sc.stage1, "Stage 1 model")->required();
  c_scan->add_option("--stage2", sc.stage2, "Stage 2 model")->required();
  c_scan->add_option("--vocab", sc.vocab, "Vocabulary file")->required();
  c_scan->add_option("--labels", sc.labels, "Label map; must match the stage 2 model");
  c_scan->add_option("--threshold", sc.threshold, "Stage 1 decision threshold")->capture_default_str();
  c_scan->add_flag("--per-function", sc.per_function, "One prediction per top-level function definition");
  c_scan->add_option("--preserve-api-names", sc.preserved_names, "File of identifiers kept verbatim");
  c_scan->add_option("-j,--jobs", sc.jobs, "Files scanned in parallel")->capture_default_str();
  c_scan->add_option("--report", sc.report, "Write the JSON report here");

  SmoteReportOptions sm;
  auto* c_smote = app.add_subcommand("smote-report", "Show how SMOTE would balance an encoded archive");
  c_smote->add_option("-d,--data", sm.data, "Encoded archive")->required();
  c_smote->add_option("--vocab", sm.vocab, "Vocabulary file")->required();
  c_smote->add_option("--labels", sm.labels, "Label map for class names (stage 2)");
  c_smote->add_option("--stage", sm.stage, "Group by binary label (1) or CWE (2)")->capture_default_str();
  c_smote->add_option("-k", sm.k, "Neighbour count")->capture_default_str();
  c_smote->add_option("--target", sm.target, "Per-class target count, 0 for the largest class")
      ->capture_default_str();
  c_smote->add_option("--report", sm.report, "Write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*c_pre) return run_preprocess(pre, seed, as_json);
    if (*c_train) return run_train(tr, *c_train, seed, as_json);
    if (*c_eval) return run_evaluate(ev, seed, as_json);
    if (*c_scan) return run_scan(sc, seed, as_json);
    if (*c_smote) return run_smote_report(sm, seed, as_json);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_input_error(e.code()) ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
