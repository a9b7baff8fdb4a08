#!/usr/bin/env python3
"""Brute-force BLEU and token F1 over the golden pair set.

Writes tests/data/golden_metrics.json. The C++ metrics are checked
against these frozen values; nothing here shares code with them.
"""
import json
import math
import string
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
DATA = HERE.parent / "data"


def tokens(text):
    # lowercase; maximal runs of [A-Za-z0-9] or non-ASCII bytes are words,
    # every other visible ASCII character is a token of its own.
    out, cur = [], b""
    for byte in text.encode("utf-8"):
        ch = bytes([byte])
        if byte >= 0x80 or ch.isalnum():
            cur += ch.lower()
            continue
        if cur:
            out.append(cur.decode("utf-8", "surrogateescape"))
            cur = b""
        if not ch.isspace() and byte >= 0x20 and byte != 0x7F:
            out.append(ch.decode())
    if cur:
        out.append(cur.decode("utf-8", "surrogateescape"))
    return out


def grams(toks, n):
    return [tuple(toks[i:i + n]) for i in range(len(toks) - n + 1)]


def clipped(hyp, ref, n):
    h, r = grams(hyp, n), grams(ref, n)
    match = 0
    for g in set(h):
        match += min(h.count(g), r.count(g))
    return match, len(h)


def brevity(c, r):
    if c == 0:
        return 0.0
    return 1.0 if c >= r else math.exp(1.0 - r / c)


def corpus_bleu(pairs, max_n):
    m = [0] * max_n
    t = [0] * max_n
    c = r = 0
    for hyp, ref in pairs:
        h, g = tokens(hyp), tokens(ref)
        c += len(h)
        r += len(g)
        for n in range(1, max_n + 1):
            a, b = clipped(h, g, n)
            m[n - 1] += a
            t[n - 1] += b
    precisions = [m[i] / t[i] if t[i] else 0.0 for i in range(max_n)]
    if min(precisions) == 0.0:
        return 0.0, precisions, brevity(c, r)
    geo = math.exp(sum(math.log(p) for p in precisions) / max_n)
    return 100.0 * brevity(c, r) * geo, precisions, brevity(c, r)


def sentence_bleu(hyp, ref, max_n):
    h, g = tokens(hyp), tokens(ref)
    ps = []
    for n in range(1, max_n + 1):
        a, b = clipped(h, g, n)
        ps.append((a / b if b else 0.0) if n == 1 else (a + 1) / (b + 1))
    if min(ps) == 0.0:
        return 0.0
    return 100.0 * brevity(len(h), len(g)) * math.exp(sum(math.log(p) for p in ps) / max_n)


def squad_tokens(text):
    text = "".join(ch for ch in text if ch not in set(string.punctuation))
    text = "".join(ch.lower() if ord(ch) < 0x80 else ch for ch in text)
    return [w for w in text.split() if w not in ("a", "an", "the")]


def f1(pred, gold):
    p, g = squad_tokens(pred), squad_tokens(gold)
    if not p or not g:
        return 100.0 if not p and not g else 0.0
    common = sum(min(p.count(w), g.count(w)) for w in set(p))
    if common == 0:
        return 0.0
    prec, rec = common / len(p), common / len(g)
    return 100.0 * 2 * prec * rec / (prec + rec)


PAIRS = [
    # hand cases: clipping, brevity, empty, exact, disjoint
    ("the the the the the the the", "the cat is on the mat"),
    ("the cat sat", "the cat sat down"),
    ("the cat sat down on the mat", "the cat sat"),
    ("", "what is photosynthesis?"),
    ("what is photosynthesis?", "what is photosynthesis?"),
    ("purple elephants dance", "which organ pumps blood?"),
    ("a feline animal", "feline creature"),
    ("What do mitochondria produce?", "What do mitochondria produce?"),
    ("What produces energy for the cell?", "What do mitochondria produce?"),
    ("Which structures absorb oxygen?", "Which structures absorb carbon dioxide?"),
    ("What do enzymes break down?", "What breaks down starch?"),
    ("Who founded the Royal Academy?", "Who founded the Royal Academy in 1820?"),
    ("In what year did Maria Okafor build the Museum?", "In what year did Maria Okafor build the Grand Museum?"),
    ("Where is the nucleus?", "Where is the nucleus found?"),
    ("What is the pH of a solution?", "What lowers the pH of a solution?"),
    ("Which devices convert kinetic energy?", "Which devices convert kinetic energy into electrical energy?"),
    ("what what what what", "what is it"),
    ("It's the cell's powerhouse.", "The cell's powerhouse is what?"),
    ("Mitochondria, ribosomes, and lysosomes.", "mitochondria ribosomes lysosomes"),
    ("What do magnets attract?", "what do MAGNETS attract ?"),
    ("Qu'est-ce que la photosynthèse?", "Qu'est-ce que la photosynthèse ?"),
    ("How many electrons does carbon have?", "How many protons does carbon have?"),
    ("What carries oxygen in the blood?", "Which cells carry oxygen in the bloodstream?"),
    ("What is 2 + 2?", "What is 2+2?"),
    ("the a an", "the an a"),
    ("Which gas do plants release?", "Which gas do plants absorb?"),
    ("What do lenses focus?", "What do lenses focus? What do mirrors reflect?"),
    ("Which substances neutralize acids?", "Bases neutralize acids."),
    ("What speeds up chemical reactions?", "What speeds up chemical reactions?"),
    ("What is a catalyst", "What is a catalyst?"),
    ("Why do leaves change colour in autumn?", "Why do leaves change color in autumn?"),
    ("What", "What is the function of the kidneys?"),
    ("What is the function of the kidneys?", "What"),
    ("energy energy energy", "energy"),
    ("What do solar panels convert into electricity?", "What do solar panels convert?"),
    ("Which waves travel fastest?", "Which waves travel fastest in a vacuum?"),
    ("Who designed the Grand Observatory in Lisbon?", "Who designed the Grand Observatory?"),
    ("What did Elena build in 1901?", "What did Elena Moreau build in 1901?"),
    ("Where did the Civic Theatre move in 1950?", "Where did the Civic Theatre move to in 1950?"),
    ("What is the speed of light?", "what is the speed of sound?"),
    ("Which organelles contain chlorophyll?", "Which organelles contain chlorophyll?"),
    ("How do fungi obtain nutrients?", "How do fungi get their nutrients?"),
    ("...", "!!!"),
    ("What do root hairs absorb from the soil?", "What do root hairs absorb?"),
    ("Which metal conducts electricity best?", "Which metals conduct electricity?"),
    ("is water a compound or an element", "Is water an element or a compound?"),
    ("What stores genetic information?", "What stores genetic information in the nucleus?"),
    ("the mat the cat", "the cat the mat"),
    ("Which acids are found in vinegar?", "Which acid is found in vinegar?"),
    ("What do producers make during photosynthesis?", "What do producers make?"),
]


def main():
    assert len(PAIRS) == 50
    out = {"pairs": [], "corpus": {}, "hand": {}}
    for hyp, ref in PAIRS:
        out["pairs"].append({
            "hypothesis": hyp,
            "reference": ref,
            "sentence_bleu": [sentence_bleu(hyp, ref, n) for n in range(1, 5)],
            "f1": f1(hyp, ref),
        })
    for n in range(1, 5):
        score, precisions, bp = corpus_bleu(PAIRS, n)
        out["corpus"][f"bleu{n}"] = {"score": score, "precisions": precisions, "brevity_penalty": bp}
    # single-pair corpora for the first three hand cases
    for i, key in enumerate(["clipping", "short_hypothesis", "long_hypothesis"]):
        out["hand"][key] = [corpus_bleu([PAIRS[i]], n)[0] for n in range(1, 5)]
    DATA.mkdir(parents=True, exist_ok=True)
    target = DATA / "golden_metrics.json"
    target.write_text(json.dumps(out, indent=1, ensure_ascii=False) + "\n")
    print(f"wrote {target}", file=sys.stderr)


if __name__ == "__main__":
    main()
