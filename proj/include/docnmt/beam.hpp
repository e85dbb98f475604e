#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <tuple>
#include <utility>
#include <vector>

#include "docnmt/tokens.hpp"

namespace docnmt {

template <class State>
struct Hypothesis {
  Sentence tokens;  // emitted ids; ends with eos iff finished
  double log_prob = 0.0;
  State state{};
  bool finished = false;

  /// Score used for final ranking: log-probability per emitted token.
  double normalized() const {
    return tokens.empty() ? log_prob : log_prob / static_cast<double>(tokens.size());
  }
};

struct BeamConfig {
  std::size_t width = 10;
  std::size_t max_len = 0;  // maximum emitted tokens, eos included
  TokenId bos = kBosId;
  TokenId eos = kEosId;
};

/// Generic beam search. `expand(state, prev_token, step)` returns the
/// successor state and log-probabilities over the next token. Finished
/// hypotheses leave the beam and shrink it by one. The returned pool is
/// ranked best-first by length-normalized score; it holds the finished
/// hypotheses, or the surviving live ones if none finished.
template <class State, class Expand>
std::vector<Hypothesis<State>> beam_search(State initial, const BeamConfig& config, Expand&& expand) {
  if (config.width == 0) throw std::invalid_argument("beam_search: width must be at least 1");
  if (config.max_len == 0) throw std::invalid_argument("beam_search: max_len must be at least 1");

  std::vector<Hypothesis<State>> live(1);
  live[0].state = std::move(initial);
  std::vector<Hypothesis<State>> finished;

  for (std::size_t step = 0; step < config.max_len && !live.empty() && finished.size() < config.width; ++step) {
    struct Candidate {
      double score;
      std::size_t hyp;
      TokenId token;
    };
    std::vector<State> next_states;
    std::vector<Candidate> candidates;
    next_states.reserve(live.size());
    for (std::size_t i = 0; i < live.size(); ++i) {
      const TokenId prev = live[i].tokens.empty() ? config.bos : live[i].tokens.back();
      auto [next, log_probs] = expand(live[i].state, prev, step);
      next_states.push_back(std::move(next));
      for (std::size_t v = 0; v < log_probs.size(); ++v) {
        candidates.push_back({live[i].log_prob + log_probs[v], i, static_cast<TokenId>(v)});
      }
    }
    const std::size_t keep = std::min(config.width - finished.size(), candidates.size());
    auto better = [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      return std::tie(a.hyp, a.token) < std::tie(b.hyp, b.token);
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      better);

    std::vector<Hypothesis<State>> next_live;
    for (std::size_t k = 0; k < keep; ++k) {
      const Candidate& c = candidates[k];
      Hypothesis<State> h;
      h.tokens = live[c.hyp].tokens;
      h.tokens.push_back(c.token);
      h.log_prob = c.score;
      h.state = next_states[c.hyp];
      h.finished = c.token == config.eos;
      (h.finished ? finished : next_live).push_back(std::move(h));
    }
    live = std::move(next_live);
  }

  std::vector<Hypothesis<State>> pool = finished.empty() ? std::move(live) : std::move(finished);
  std::stable_sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
    if (a.normalized() != b.normalized()) return a.normalized() > b.normalized();
    return a.log_prob > b.log_prob;
  });
  return pool;
}

}  // namespace docnmt
