#include "docnmt/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "docnmt/analysis.hpp"
#include "docnmt/checkpoint.hpp"
#include "docnmt/data.hpp"
#include "docnmt/decoding.hpp"
#include "docnmt/error.hpp"
#include "docnmt/training.hpp"

namespace docnmt {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_output(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw IoError(what + " '" + path + "' does not exist");
}

std::vector<std::vector<std::vector<std::string>>> tokenize_documents(
    const std::vector<std::vector<std::string>>& docs) {
  std::vector<std::vector<std::vector<std::string>>> out;
  for (const auto& doc : docs) {
    std::vector<std::vector<std::string>> sentences;
    for (const auto& line : doc) sentences.push_back(split_tokens(line));
    out.push_back(std::move(sentences));
  }
  return out;
}

std::vector<std::string> flatten(const std::vector<std::vector<std::string>>& docs) {
  std::vector<std::string> out;
  for (const auto& d : docs) out.insert(out.end(), d.begin(), d.end());
  return out;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

void RunConfig::parse(std::istream& in, const std::string& origin) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw FormatError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(t.substr(0, eq));
    for (char& c : key) {
      if (c == '-') c = '_';
    }
    if (key.empty()) throw FormatError(origin + ":" + std::to_string(lineno) + ": empty key");
    values_[key] = trim(t.substr(eq + 1));
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  parse(in, path);
}

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string RunConfig::require(const std::string& key, const std::string& command) const {
  auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) {
    throw std::invalid_argument(command + ": missing required setting '" + key + "'");
  }
  return it->second;
}

std::size_t RunConfig::get_size(const std::string& key, std::size_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(it->second, &used);
    if (used != it->second.size() || v < 0) throw std::invalid_argument(it->second);
    return static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
    throw std::invalid_argument("setting '" + key + "' must be a non-negative integer, got '" + it->second + "'");
  }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(it->second);
    return v;
  } catch (const std::logic_error&) {
    throw std::invalid_argument("setting '" + key + "' must be a number, got '" + it->second + "'");
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::invalid_argument("setting '" + key + "' must be a boolean, got '" + v + "'");
}

std::uint64_t RunConfig::seed() const {
  auto it = values_.find("seed");
  if (it == values_.end()) return 1;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(it->second);
    return v;
  } catch (const std::logic_error&) {
    throw std::invalid_argument("setting 'seed' must be an unsigned integer, got '" + it->second + "'");
  }
}

void cmd_preprocess(const RunConfig& config, std::ostream& log) {
  const std::string source = config.require("source", "preprocess");
  const std::string target = config.require("target", "preprocess");
  const std::string out_dir = config.require("out_dir", "preprocess");
  require_file(source, "source corpus");
  require_file(target, "target corpus");

  const auto docs = load_corpus(source, target);
  const std::size_t cap = config.get_size("vocab_cap", kDefaultVocabCap);
  const Vocabulary vs = build_vocab(docs, Side::source, cap);
  const Vocabulary vt = build_vocab(docs, Side::target, cap);
  ExtractionConfig ex;
  ex.max_len = config.get_size("max_len", kMaxSentenceLength);
  ex.max_length_ratio = config.get_double("max_ratio", 3.0);
  const ExtractionResult result = extract_tuples(docs, vs, vt, ex);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  vs.save((dir / "vocab.src").string());
  vt.save((dir / "vocab.tgt").string());
  write_tuples((dir / "tuples.tsv").string(), result.tuples, config.seed());
  auto report = open_output((dir / "report.txt").string());
  report << "# docnmt extraction report seed=" << config.seed() << '\n'
         << "source_vocab = " << vs.size() << '\n'
         << "target_vocab = " << vt.size() << '\n'
         << result.report.to_text();
  log << "preprocess: " << result.report.kept << " of " << result.report.pairs << " tuples kept\n";
}

void cmd_train(const RunConfig& config, std::ostream& log) {
  const std::string tuples_path = config.require("tuples", "train");
  const std::string model_path = config.require("model", "train");
  require_file(tuples_path, "tuple store");
  const auto tuples = read_tuples(tuples_path);

  TrainConfig tc;
  tc.mode = parse_model_mode(config.get("mode", "baseline"));
  tc.seed = config.seed();
  tc.batch_size = config.get_size("batch", 80);
  tc.max_epochs = config.get_size("epochs", 10);
  tc.dropout = config.get_double("dropout", 0.5);
  tc.clip_norm = config.get_double("clip", 1.0);
  tc.max_len = config.get_size("max_len", kMaxSentenceLength);
  tc.checkpoint_every = config.get_size("checkpoint_every", 0);
  tc.checkpoint_path = model_path;

  std::optional<ModelParams> init;
  ModelDims dims;
  if (config.has("init_from")) {
    const std::string init_path = config.get("init_from", "");
    require_file(init_path, "initial checkpoint");
    ModelParams base = load_model(init_path);
    dims = base.dims;
    if (tc.mode == ModelMode::isg && base.mode == ModelMode::baseline) {
      init = pretrain_init(base, dims, tc.seed);
    } else if (base.mode == tc.mode) {
      init = std::move(base);
    } else {
      throw std::invalid_argument("train: cannot initialize a baseline model from a gated checkpoint");
    }
    if (config.has("hidden") && config.get_size("hidden", 0) != dims.hidden) {
      throw DimensionError("train: hidden size disagrees with the initial checkpoint");
    }
    if (config.has("embedding") && config.get_size("embedding", 0) != dims.embedding) {
      throw DimensionError("train: embedding size disagrees with the initial checkpoint");
    }
  } else {
    const std::string vs_path = config.require("vocab_src", "train");
    const std::string vt_path = config.require("vocab_tgt", "train");
    dims.src_vocab = Vocabulary::load(vs_path).size();
    dims.tgt_vocab = Vocabulary::load(vt_path).size();
    dims.embedding = config.get_size("embedding", 32);
    dims.hidden = config.get_size("hidden", 32);
    dims.attention = config.get_size("attention", dims.hidden);
  }

  std::vector<SentenceTuple> dev;
  if (config.has("dev_tuples")) dev = read_tuples(config.get("dev_tuples", ""));

  auto train_log = open_output(config.get("train_log", model_path + ".log"));
  train_log << "# docnmt train mode=" << to_string(tc.mode) << " seed=" << tc.seed << '\n';
  TrainInputs inputs;
  inputs.tuples = &tuples;
  inputs.dev = dev.empty() ? nullptr : &dev;
  inputs.init = init ? &*init : nullptr;
  inputs.on_epoch = [&](const EpochRecord& r) {
    train_log << "epoch=" << r.epoch << " mean_nll=" << format_double(r.mean_nll);
    if (r.dev_nll) train_log << " dev_nll=" << format_double(*r.dev_nll);
    train_log << " seconds=" << r.seconds << '\n';
    train_log.flush();
    log << "train: epoch " << r.epoch << " mean_nll " << r.mean_nll << '\n';
  };
  TrainResult result = train(tc, dims, inputs);
  save_model(result.params, model_path);
  write_tensor_file(model_path + ".adadelta", result.optimizer.to_tensor_file());
  log << "train: wrote " << model_path << " (best epoch " << result.best_epoch << ")\n";
}

void cmd_translate(const RunConfig& config, std::ostream& log) {
  const std::string model_path = config.require("model", "translate");
  const std::string input = config.require("input", "translate");
  const std::string output = config.require("output", "translate");
  require_file(model_path, "model checkpoint");
  require_file(input, "input");
  const ModelParams params = load_model(model_path);
  const Vocabulary vs = Vocabulary::load(config.require("vocab_src", "translate"));
  const Vocabulary vt = Vocabulary::load(config.require("vocab_tgt", "translate"));
  if (vs.size() != params.dims.src_vocab || vt.size() != params.dims.tgt_vocab) {
    throw DimensionError("translate: vocabulary sizes do not match the model");
  }

  AblationOptions ablation;
  ablation.mode = parse_ablation(config.get("ablate", "none"));
  ablation.seed = config.seed();
  ablation.per_sentence = config.get_bool("rv_per_sentence", false);
  ablation.width = config.get_size("width", 10);
  const bool concat = config.get_bool("concat_baseline", false);
  if (concat && ablation.mode != AblationMode::none) {
    throw std::invalid_argument("translate: --ablate cannot be combined with --concat-baseline");
  }

  const auto docs = read_documents(input);
  std::vector<std::vector<std::string>> translated;
  std::ofstream trace;
  if (config.has("trace")) {
    trace = open_output(config.get("trace", ""));
    write_trace_header(trace, config.seed());
  }
  for (std::size_t d = 0; d < docs.size(); ++d) {
    std::vector<Sentence> sentences;
    for (const auto& line : docs[d]) sentences.push_back(vs.encode(split_tokens(line)));
    const auto translations = concat ? concat_baseline_translate(params, sentences, ablation.width)
                                     : ablate(params, sentences, ablation);
    std::vector<std::string> lines;
    for (std::size_t s = 0; s < translations.size(); ++s) {
      lines.push_back(join_tokens(vt.decode(translations[s].tokens)));
      if (trace.is_open()) write_trace_rows(trace, d, s, translations[s], vt);
    }
    translated.push_back(std::move(lines));
  }
  auto out = open_output(output);
  write_documents(out, translated);
  log << "translate: " << docs.size() << " documents -> " << output << '\n';
}

void cmd_evaluate(const RunConfig& config, std::ostream& log) {
  const std::string hyp_path = config.require("hyp", "evaluate");
  const std::string ref_path = config.require("ref", "evaluate");
  const std::string report_path = config.require("report", "evaluate");
  require_file(hyp_path, "hypothesis file");
  require_file(ref_path, "reference file");
  const auto hyp_docs = read_documents(hyp_path);
  const auto ref_docs = read_documents(ref_path);
  const BleuResult bleu = bleu4(flatten(hyp_docs), flatten(ref_docs), config.get_bool("smooth", false));

  auto report = open_output(report_path);
  report << "# docnmt evaluation seed=" << config.seed() << '\n';
  report << "bleu = " << format_double(bleu.score) << '\n';
  report << "bleu_precisions = " << format_double(bleu.precisions[0]) << ' ' << format_double(bleu.precisions[1])
         << ' ' << format_double(bleu.precisions[2]) << ' ' << format_double(bleu.precisions[3]) << '\n';
  report << "brevity_penalty = " << format_double(bleu.brevity_penalty) << '\n';
  report << "hypothesis_length = " << bleu.hypothesis_length << '\n';
  report << "reference_length = " << bleu.reference_length << '\n';
  log << "evaluate: BLEU " << bleu.score << '\n';

  if (config.has("vectors")) {
    const std::string vec_path = config.get("vectors", "");
    if (!fs::is_regular_file(vec_path)) {
      log << "warning: word vectors '" << vec_path << "' not found; coherence disabled\n";
    } else {
      const WordVectors vecs = WordVectors::load(vec_path);
      const std::string testset = config.get("testset", "test");
      std::vector<CoherenceRow> rows;
      auto add = [&](const std::string& system, const std::vector<std::vector<std::string>>& docs) {
        const CoherenceResult c = document_coherence(tokenize_documents(docs), vecs);
        report << "coherence_" << system << " = " << (c.mean ? format_double(*c.mean) : "missing") << '\n';
        report << "coherence_" << system << "_pairs = " << c.pairs << '\n';
        report << "coherence_" << system << "_skipped = " << c.skipped << '\n';
        if (c.mean) rows.push_back({testset, system, *c.mean});
      };
      add(config.get("system", "system"), hyp_docs);
      add("reference", ref_docs);
      if (config.has("coherence_csv")) {
        auto csv = open_output(config.get("coherence_csv", ""));
        write_coherence_csv(csv, rows);
      }
    }
  }

  if (config.has("trace")) {
    const std::string trace_path = config.get("trace", "");
    require_file(trace_path, "trace file");
    std::ifstream in(trace_path);
    const auto rows = read_trace_rows(in);
    std::ofstream csv;
    if (config.has("entropy_csv")) csv = open_output(config.get("entropy_csv", ""));
    if (csv.is_open()) csv << "position,label,value\n";
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < rows.size();) {
      std::size_t j = i;
      EntropyCurve curve;
      while (j < rows.size() && rows[j].document == rows[i].document && rows[j].sentence == rows[i].sentence) {
        const double h = entropy(rows[j].alpha_previous);
        curve.values.push_back(h);
        curve.labels.push_back(rows[j].token);
        total += h;
        ++count;
        ++j;
      }
      if (csv.is_open()) {
        csv << "# document=" << rows[i].document << " sentence=" << rows[i].sentence << '\n';
        for (std::size_t k = 0; k < curve.values.size(); ++k) {
          csv << k + 1 << ',' << curve.labels[k] << ',' << format_double(curve.values[k]) << '\n';
        }
      }
      i = j;
    }
    report << "mean_attention_entropy = " << (count ? format_double(total / static_cast<double>(count)) : "missing")
           << '\n';
  }
}

void run_command(const std::string& command, const RunConfig& config, std::ostream& log) {
  if (command == "preprocess") return cmd_preprocess(config, log);
  if (command == "train") return cmd_train(config, log);
  if (command == "translate") return cmd_translate(config, log);
  if (command == "evaluate") return cmd_evaluate(config, log);
  throw std::invalid_argument("unknown command '" + command + "'");
}

}  // namespace docnmt
