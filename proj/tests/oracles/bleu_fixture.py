# Oracle for the frozen BLEU fixture in test_metrics.cpp. Needs nltk.
import re

from nltk.translate.bleu_score import corpus_bleu


def tok(s):
    return [t.lower() for t in re.split(r'[\s.,!?;"()]+', s) if t]


cands = ["the hotel is in the north of town", "i want a cheap restaurant in the centre please"]
refs = [["the hotel is in the north part of town", "there is a hotel in the north"],
        ["i would like a cheap restaurant in the centre"]]
print("%.10f" % (100 * corpus_bleu([[tok(r) for r in rs] for rs in refs], [tok(c) for c in cands])))

# Brevity penalty case: short candidate.
print("%.10f" % (100 * corpus_bleu([[tok("the cheap hotel in the north of town")]], [tok("the cheap hotel in the north")])))
