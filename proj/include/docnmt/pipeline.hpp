#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>

namespace docnmt {

/// Flat key/value settings for one command. Values come from a config file
/// (`key = value` lines, `#` comments) and are overridden by later set() calls.
class RunConfig {
 public:
  void set(const std::string& key, const std::string& value);
  void load_file(const std::string& path);
  void parse(std::istream& in, const std::string& origin = "<config>");

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  /// Throws std::invalid_argument naming the command when `key` is unset.
  std::string require(const std::string& key, const std::string& command) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t seed() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Each command reads its inputs and writes its artifacts as described in
// README.md. Progress and warnings go to `log`.

/// source, target, out_dir [vocab_cap, max_len, max_ratio]
void cmd_preprocess(const RunConfig& config, std::ostream& log);
/// tuples, vocab_src, vocab_tgt, model [mode, init_from, epochs, batch, embedding,
/// hidden, attention, dropout, clip, dev_tuples, train_log, checkpoint_every]
void cmd_train(const RunConfig& config, std::ostream& log);
/// model, vocab_src, vocab_tgt, input, output [width, ablate, concat_baseline,
/// trace, rv_per_sentence]
void cmd_translate(const RunConfig& config, std::ostream& log);
/// hyp, ref, report [vectors, trace, coherence_csv, entropy_csv, system, testset, smooth]
void cmd_evaluate(const RunConfig& config, std::ostream& log);

/// Dispatches on preprocess|train|translate|evaluate.
void run_command(const std::string& command, const RunConfig& config, std::ostream& log);

}  // namespace docnmt
