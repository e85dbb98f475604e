#include "docnmt/docnmt.h"

#include <cstring>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include "docnmt/analysis.hpp"
#include "docnmt/checkpoint.hpp"
#include "docnmt/data.hpp"
#include "docnmt/decoding.hpp"
#include "docnmt/error.hpp"
#include "docnmt/pipeline.hpp"

struct docnmt_config {
  docnmt::RunConfig config;
};

struct docnmt_model {
  docnmt::ModelParams params;
};

struct docnmt_vocab {
  docnmt::Vocabulary vocab;
};

namespace {

thread_local std::string g_last_error;

// Maps the core's exception hierarchy onto status codes.
template <class Fn>
docnmt_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return DOCNMT_OK;
  } catch (const docnmt::DimensionError& e) {
    g_last_error = e.what();
    return DOCNMT_ERR_DIMENSION;
  } catch (const docnmt::FormatError& e) {
    g_last_error = e.what();
    return DOCNMT_ERR_FORMAT;
  } catch (const docnmt::IoError& e) {
    g_last_error = e.what();
    return DOCNMT_ERR_IO;
  } catch (const docnmt::NumericError& e) {
    g_last_error = e.what();
    return DOCNMT_ERR_NUMERIC;
  } catch (const docnmt::StateError& e) {
    g_last_error = e.what();
    return DOCNMT_ERR_STATE;
  } catch (const std::out_of_range& e) {
    g_last_error = e.what();
    return DOCNMT_ERR_OUT_OF_RANGE;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return DOCNMT_ERR_INVALID_ARGUMENT;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return DOCNMT_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DOCNMT_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return DOCNMT_ERR_INTERNAL;
  }
}

void require_arg(const void* p, const char* name) {
  if (p == nullptr) throw std::invalid_argument(std::string(name) + " must not be NULL");
}

void copy_out(const std::string& value, char* buffer, std::size_t capacity, std::size_t* needed) {
  if (needed != nullptr) *needed = value.size() + 1;
  if (buffer == nullptr || capacity == 0) {
    if (needed == nullptr) throw std::invalid_argument("buffer and needed are both NULL");
    return;
  }
  if (capacity < value.size() + 1) {
    throw std::out_of_range("buffer of " + std::to_string(capacity) + " bytes too small; need " +
                            std::to_string(value.size() + 1));
  }
  std::memcpy(buffer, value.c_str(), value.size() + 1);
}

docnmt_status run_named(const char* command, const docnmt_config* config, bool quiet) {
  return guarded([&] {
    require_arg(command, "command");
    require_arg(config, "config");
    std::ostringstream sink;
    docnmt::run_command(command, config->config, quiet ? static_cast<std::ostream&>(sink) : std::cerr);
  });
}

}  // namespace

extern "C" {

const char* docnmt_version(void) { return "1.0.0"; }

const char* docnmt_status_name(docnmt_status status) {
  switch (status) {
    case DOCNMT_OK:
      return "ok";
    case DOCNMT_ERR_INVALID_ARGUMENT:
      return "invalid argument";
    case DOCNMT_ERR_IO:
      return "i/o error";
    case DOCNMT_ERR_FORMAT:
      return "format error";
    case DOCNMT_ERR_DIMENSION:
      return "dimension error";
    case DOCNMT_ERR_NUMERIC:
      return "numeric error";
    case DOCNMT_ERR_STATE:
      return "state error";
    case DOCNMT_ERR_OUT_OF_RANGE:
      return "out of range";
    case DOCNMT_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown status";
}

const char* docnmt_last_error(void) { return g_last_error.c_str(); }

docnmt_status docnmt_config_create(docnmt_config** out) {
  return guarded([&] {
    require_arg(out, "out");
    *out = new docnmt_config();
  });
}

void docnmt_config_destroy(docnmt_config* config) { delete config; }

docnmt_status docnmt_config_set(docnmt_config* config, const char* key, const char* value) {
  return guarded([&] {
    require_arg(config, "config");
    require_arg(key, "key");
    require_arg(value, "value");
    config->config.set(key, value);
  });
}

docnmt_status docnmt_config_load_file(docnmt_config* config, const char* path) {
  return guarded([&] {
    require_arg(config, "config");
    require_arg(path, "path");
    config->config.load_file(path);
  });
}

docnmt_status docnmt_config_get(const docnmt_config* config, const char* key, char* buffer, size_t capacity,
                                size_t* needed) {
  return guarded([&] {
    require_arg(config, "config");
    require_arg(key, "key");
    if (!config->config.has(key)) throw std::invalid_argument(std::string("setting '") + key + "' is not set");
    copy_out(config->config.get(key, ""), buffer, capacity, needed);
  });
}

docnmt_status docnmt_run(const char* command, const docnmt_config* config, int quiet) {
  return run_named(command, config, quiet != 0);
}

docnmt_status docnmt_preprocess(const docnmt_config* config) { return run_named("preprocess", config, true); }
docnmt_status docnmt_train(const docnmt_config* config) { return run_named("train", config, true); }
docnmt_status docnmt_translate(const docnmt_config* config) { return run_named("translate", config, true); }
docnmt_status docnmt_evaluate(const docnmt_config* config) { return run_named("evaluate", config, true); }

docnmt_status docnmt_vocab_load(const char* path, docnmt_vocab** out) {
  return guarded([&] {
    require_arg(path, "path");
    require_arg(out, "out");
    *out = new docnmt_vocab{docnmt::Vocabulary::load(path)};
  });
}

void docnmt_vocab_destroy(docnmt_vocab* vocab) { delete vocab; }

size_t docnmt_vocab_size(const docnmt_vocab* vocab) { return vocab ? vocab->vocab.size() : 0; }

docnmt_status docnmt_vocab_id(const docnmt_vocab* vocab, const char* token, uint32_t* id) {
  return guarded([&] {
    require_arg(vocab, "vocab");
    require_arg(token, "token");
    require_arg(id, "id");
    *id = vocab->vocab.id(token);
  });
}

docnmt_status docnmt_model_load(const char* path, docnmt_model** out) {
  return guarded([&] {
    require_arg(path, "path");
    require_arg(out, "out");
    *out = new docnmt_model{docnmt::load_model(path)};
  });
}

void docnmt_model_destroy(docnmt_model* model) { delete model; }

docnmt_status docnmt_model_save(const docnmt_model* model, const char* path) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(path, "path");
    docnmt::save_model(model->params, path);
  });
}

int docnmt_model_mode(const docnmt_model* model) {
  if (model == nullptr) return -1;
  return model->params.mode == docnmt::ModelMode::isg ? 1 : 0;
}

size_t docnmt_model_hidden_size(const docnmt_model* model) { return model ? model->params.dims.hidden : 0; }

docnmt_status docnmt_translate_sentence(const docnmt_model* model, const docnmt_vocab* source_vocab,
                                        const docnmt_vocab* target_vocab, const char* before, const char* source,
                                        size_t width, const char* ablate, uint64_t seed, char* buffer,
                                        size_t capacity, size_t* needed) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(source_vocab, "source_vocab");
    require_arg(target_vocab, "target_vocab");
    require_arg(source, "source");
    const auto& vs = source_vocab->vocab;
    const auto& vt = target_vocab->vocab;
    if (vs.size() != model->params.dims.src_vocab || vt.size() != model->params.dims.tgt_vocab) {
      throw docnmt::DimensionError("vocabulary sizes do not match the model");
    }
    std::vector<docnmt::Sentence> doc;
    const bool has_before = before != nullptr && !docnmt::split_tokens(before).empty();
    if (has_before) doc.push_back(vs.encode(docnmt::split_tokens(before)));
    doc.push_back(vs.encode(docnmt::split_tokens(source)));
    docnmt::AblationOptions options;
    options.mode = docnmt::parse_ablation(ablate ? ablate : "none");
    options.width = width;
    options.seed = seed;
    // Only the last translation is returned; the first sentence supplies before-x.
    const auto translations = docnmt::ablate(model->params, doc, options);
    copy_out(docnmt::join_tokens(vt.decode(translations.back().tokens)), buffer, capacity, needed);
  });
}

docnmt_status docnmt_bleu(const char* const* hypotheses, const char* const* references, size_t count, int smooth,
                          double* score) {
  return guarded([&] {
    require_arg(score, "score");
    if (count > 0) {
      require_arg(hypotheses, "hypotheses");
      require_arg(references, "references");
    }
    std::vector<std::string> hyps, refs;
    for (size_t i = 0; i < count; ++i) {
      require_arg(hypotheses[i], "hypothesis");
      require_arg(references[i], "reference");
      hyps.emplace_back(hypotheses[i]);
      refs.emplace_back(references[i]);
    }
    *score = docnmt::bleu4(hyps, refs, smooth != 0).score;
  });
}

docnmt_status docnmt_entropy(const double* distribution, size_t length, double* out) {
  return guarded([&] {
    require_arg(out, "out");
    if (length > 0) require_arg(distribution, "distribution");
    *out = docnmt::entropy(std::span<const double>(distribution, length));
  });
}

}  // extern "C"
