"""Regenerate the frozen expected values in test_metrics_cap.py.

Run: python tests/oracles/gen_frozen.py
Tokenization matches the package rule (lowercase, strip punctuation, split)
so the oracle scores the same token streams the implementation sees.
"""

import json
import string

from reference_metrics import PAIRS, ref_bleu, ref_cider_d, ref_rouge_l

_PUNCT = str.maketrans("", "", string.punctuation)


def toks(text):
    return text.lower().translate(_PUNCT).split()


def main():
    cands = [toks(c) for c, _ in PAIRS]
    refs = [[toks(r) for r in rs] for _, rs in PAIRS]
    cider = ref_cider_d(cands, refs)
    frozen = []
    for n, (cand, rs) in enumerate(zip(cands, refs)):
        frozen.append({
            "bleu": [round(v, 12) for v in ref_bleu(cand, rs)],
            "rouge_l": round(ref_rouge_l(cand, rs), 12),
            "cider_d": round(cider[n], 12),
        })
    print(json.dumps(frozen, indent=1))


if __name__ == "__main__":
    main()
