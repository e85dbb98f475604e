// docnmt command-line front end. Settings come from --config first; flags
// given on the command line override them.
#include <CLI11.hpp>

#include <cstdio>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "docnmt/docnmt.h"

namespace {

struct Flag {
  std::string name;  // long flag without dashes, doubles as the config key
  std::string help;
  bool boolean = false;
};

struct Command {
  std::string name;
  std::string help;
  std::vector<Flag> flags;
};

const std::vector<Flag> kCommon = {
    {"seed", "random seed (default 1)"},
};

const std::vector<Command> kCommands = {
    {"preprocess",
     "build vocabularies and sentence tuples from a document-aligned corpus",
     {{"source", "source corpus, documents separated by <DOC> lines"},
      {"target", "target corpus, aligned with --source"},
      {"out-dir", "output directory"},
      {"vocab-cap", "maximum vocabulary size per side"},
      {"max-len", "maximum sentence length in tokens"},
      {"max-ratio", "maximum length ratio between x and y"}}},
    {"train",
     "train a baseline or gated model",
     {{"tuples", "tuples file written by preprocess"},
      {"vocab-src", "source vocabulary"},
      {"vocab-tgt", "target vocabulary"},
      {"model", "output checkpoint"},
      {"mode", "baseline or isg"},
      {"init-from", "checkpoint to initialize from"},
      {"embedding", "embedding size"},
      {"hidden", "hidden size"},
      {"attention", "attention size"},
      {"epochs", "maximum number of epochs"},
      {"batch", "batch size"},
      {"dropout", "dropout rate on the output layer"},
      {"clip", "gradient norm limit"},
      {"max-len", "maximum sentence length"},
      {"dev-tuples", "development tuples for checkpoint selection"},
      {"checkpoint-every", "write a checkpoint every N epochs"},
      {"train-log", "training log path"}}},
    {"translate",
     "translate a document-structured source file",
     {{"model", "model checkpoint"},
      {"vocab-src", "source vocabulary"},
      {"vocab-tgt", "target vocabulary"},
      {"input", "source documents"},
      {"output", "translation output"},
      {"width", "beam width"},
      {"ablate", "none, null, zgate0 or rv"},
      {"concat-baseline", "translate previous+current with a baseline model", true},
      {"rv-per-sentence", "draw the random context once per sentence", true},
      {"trace", "write gate and attention traces to this CSV"}}},
    {"evaluate",
     "score translations against references",
     {{"hyp", "hypothesis documents"},
      {"ref", "reference documents"},
      {"report", "report output"},
      {"vectors", "word vectors for coherence"},
      {"trace", "trace CSV from translate"},
      {"coherence-csv", "coherence CSV output"},
      {"entropy-csv", "attention entropy CSV output"},
      {"system", "system label"},
      {"testset", "test set label"},
      {"smooth", "add-one smoothing for higher n-gram orders", true}}},
};

std::string config_key(std::string name) {
  for (char& c : name) {
    if (c == '-') c = '_';
  }
  return name;
}

int fail(docnmt_status status) {
  std::fprintf(stderr, "docnmt: %s: %s\n", docnmt_status_name(status), docnmt_last_error());
  return status == DOCNMT_ERR_INVALID_ARGUMENT ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"document-level neural machine translation"};
  app.set_version_flag("--version", std::string(docnmt_version()));
  app.require_subcommand(1);

  std::string config_path;
  bool quiet = false;
  app.add_option("--config", config_path, "settings file with key = value lines");
  app.add_flag("-q,--quiet", quiet, "suppress progress output");

  // Values for every (subcommand, flag) pair; only flags that were given are applied.
  std::vector<std::pair<CLI::App*, std::vector<std::pair<const Flag*, CLI::Option*>>>> registered;
  std::deque<std::string> string_values;

  for (const auto& command : kCommands) {
    CLI::App* sub = app.add_subcommand(command.name, command.help);
    std::vector<std::pair<const Flag*, CLI::Option*>> options;
    auto add = [&](const Flag& flag) {
      if (flag.boolean) {
        options.emplace_back(&flag, sub->add_flag("--" + flag.name, flag.help));
      } else {
        string_values.emplace_back();
        options.emplace_back(&flag, sub->add_option("--" + flag.name, string_values.back(), flag.help));
      }
    };
    for (const auto& flag : kCommon) add(flag);
    for (const auto& flag : command.flags) add(flag);
    sub->add_option("--config", config_path, "settings file with key = value lines");
    registered.emplace_back(sub, std::move(options));
  }

  CLI11_PARSE(app, argc, argv);

  docnmt_config* config = nullptr;
  docnmt_status status = docnmt_config_create(&config);
  if (status != DOCNMT_OK) return fail(status);

  int rc = 0;
  for (const auto& [sub, options] : registered) {
    if (!sub->parsed()) continue;
    if (!config_path.empty()) {
      status = docnmt_config_load_file(config, config_path.c_str());
      if (status != DOCNMT_OK) {
        rc = fail(status);
        break;
      }
    }
    for (const auto& [flag, opt] : options) {
      if (opt->count() == 0) continue;
      const std::string value = flag->boolean ? "true" : opt->as<std::string>();
      status = docnmt_config_set(config, config_key(flag->name).c_str(), value.c_str());
      if (status != DOCNMT_OK) break;
    }
    if (status == DOCNMT_OK) status = docnmt_run(sub->get_name().c_str(), config, quiet ? 1 : 0);
    if (status != DOCNMT_OK) rc = fail(status);
    break;
  }
  docnmt_config_destroy(config);
  return rc;
}
