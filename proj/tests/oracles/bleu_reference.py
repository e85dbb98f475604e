"""Reference corpus BLEU values from sacrebleu for the analysis tests.

Lowercased, whitespace tokenization, single reference. Prints one line per
set: name, unsmoothed score, add-one smoothed score.
"""
import sacrebleu

SETS = {
    "perfect": (
        ["the cat sat on the mat", "a b c d e"],
        ["the cat sat on the mat", "a b c d e"],
    ),
    "cat_mat": (["the cat sat on the mat"], ["the cat is on the mat"]),
    "no_four_gram": (
        ["one two three x four five six", "seven eight"],
        ["one two three y four five six", "seven eight nine"],
    ),
    "case_and_brevity": (
        ["The Quick brown FOX jumps over the lazy dog"],
        ["the quick brown fox jumps over the lazy dog again today"],
    ),
    "corpus_mix": (
        [
            "the president met the press on monday",
            "he said that the talks were useful",
            "markets rose sharply after the news of the deal",
        ],
        [
            "the president met with the press on monday",
            "he said the talks had been very useful",
            "markets rose sharply after news of the deal",
        ],
    ),
}

for name, (hyps, refs) in SETS.items():
    plain = sacrebleu.corpus_bleu(hyps, [refs], lowercase=True, tokenize="none", smooth_method="none", force=True)
    smooth = sacrebleu.corpus_bleu(
        hyps, [refs], lowercase=True, tokenize="none", smooth_method="add-k", smooth_value=1, force=True
    )
    print(f"{name} {plain.score!r} {smooth.score!r}")
