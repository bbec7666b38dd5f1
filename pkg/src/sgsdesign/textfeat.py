"""Report-text featurization and ICD-count surrogates.

Tokenization is pinned for reproducibility: Unicode lowercasing, split on
anything that is not a letter or digit, drop tokens made only of digits,
drop stopwords from a built-in list. Logarithms are natural.

    TF(t, d)  = 1 + log(1 + count(t in d) / |d|)
    IDF(t)    = log(N / df(t))
    X[d, t]   = TF(t, d) * IDF(t)

``|d|`` is the document's token count after stopword and number removal.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Document",
    "FilterConfig",
    "Vocabulary",
    "tokenize",
    "load_stopwords",
    "load_code_set",
    "read_corpus",
    "write_corpus",
    "build_vocabulary",
    "tfidf_matrix",
    "build_icd_surrogate",
    "assemble_design_matrix",
    "synthetic_corpus",
]

SURROGATE_COLUMN = "z_surrogate"
STOPWORDS_VERSION = 1
_TOKEN = re.compile(r"[^\W_]+")


@dataclass
class Document:
    id: str
    text: str
    icd_counts: dict = field(default_factory=dict)
    label: int | None = None

    def __post_init__(self):
        if any(v < 0 for v in self.icd_counts.values()):
            raise ValueError(f"document {self.id}: ICD counts must be nonnegative")


def _read_list(name):
    text = resources.files("sgsdesign.data").joinpath(name).read_text()
    return _parse_list(text)


def _parse_list(text):
    out = []
    for line in text.splitlines():
        item = line.split("#", 1)[0].strip()
        if item:
            out.append(item)
    return out


def load_stopwords():
    return frozenset(_read_list("stopwords_en.txt"))


def load_code_set(path=None):
    """Default vertebral-fracture ICD codes, or codes from ``path``."""
    if path is None:
        return _read_list("icd_vertebral_fracture.txt")
    with open(path) as fh:
        return _parse_list(fh.read())


@dataclass
class FilterConfig:
    stopwords: frozenset = field(default_factory=load_stopwords)
    min_frac: float = 0.05
    max_frac: float = 0.90


def tokenize(text, stopwords=frozenset()):
    tokens = _TOKEN.findall(text.lower())
    return [t for t in tokens if not t.isdigit() and t not in stopwords]


@dataclass
class Vocabulary:
    terms: list
    document_frequencies: list
    n_documents: int
    min_frac: float
    max_frac: float
    stopwords_version: int = STOPWORDS_VERSION

    def __post_init__(self):
        self.index = {t: j for j, t in enumerate(self.terms)}

    def __len__(self):
        return len(self.terms)

    def idf(self):
        df = np.asarray(self.document_frequencies, dtype=float)
        return np.log(self.n_documents / df)

    def to_json(self):
        return json.dumps({
            "terms": self.terms,
            "document_frequencies": self.document_frequencies,
            "n_documents": self.n_documents,
            "min_frac": self.min_frac,
            "max_frac": self.max_frac,
            "stopwords_version": self.stopwords_version,
        }, indent=2)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def read_corpus(path):
    """Read JSONL documents ``{id, text, icd_counts, label?}``."""
    docs, seen = [], set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            doc = Document(str(obj["id"]), obj.get("text", ""),
                           {str(k): int(v) for k, v in obj.get("icd_counts", {}).items()},
                           obj.get("label"))
            if doc.id in seen:
                raise ValueError(f"line {lineno}: duplicate document id {doc.id!r}")
            seen.add(doc.id)
            docs.append(doc)
    return docs


def write_corpus(docs, path):
    with open(path, "w") as fh:
        for d in docs:
            obj = {"id": d.id, "text": d.text, "icd_counts": d.icd_counts}
            if d.label is not None:
                obj["label"] = d.label
            fh.write(json.dumps(obj) + "\n")


def _texts(corpus):
    return [d.text if isinstance(d, Document) else d for d in corpus]


def build_vocabulary(corpus, config: FilterConfig | None = None) -> Vocabulary:
    """Unigram vocabulary of terms with ``min_frac*N <= df <= max_frac*N``.

    ``corpus`` may hold :class:`Document` objects or raw strings. Terms are
    sorted lexicographically.
    """
    config = config or FilterConfig()
    texts = _texts(corpus)
    if not texts:
        raise ValueError("corpus is empty")
    N = len(texts)
    df = {}
    for text in texts:
        for t in set(tokenize(text, config.stopwords)):
            df[t] = df.get(t, 0) + 1
    lo, hi = config.min_frac * N, config.max_frac * N
    terms = sorted(t for t, c in df.items() if lo <= c <= hi)
    if not terms:
        raise ValueError(
            f"no terms survive filtering (document fraction in "
            f"[{config.min_frac}, {config.max_frac}] of {N} documents)")
    return Vocabulary(terms, [df[t] for t in terms], N, config.min_frac, config.max_frac)


def tfidf_matrix(corpus, vocab: Vocabulary, stopwords=None):
    """Sparse CSR TF-IDF matrix (documents x vocabulary terms)."""
    stopwords = load_stopwords() if stopwords is None else stopwords
    idf = vocab.idf()
    rows, cols, vals = [], [], []
    texts = _texts(corpus)
    for i, text in enumerate(texts):
        tokens = tokenize(text, stopwords)
        if not tokens:
            continue
        length = len(tokens)
        counts = {}
        for t in tokens:
            j = vocab.index.get(t)
            if j is not None:
                counts[j] = counts.get(j, 0) + 1
        for j in sorted(counts):
            v = (1.0 + math.log(1.0 + counts[j] / length)) * idf[j]
            if v != 0.0:
                rows.append(i)
                cols.append(j)
                vals.append(v)
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(texts), len(vocab)))


def build_icd_surrogate(corpus, code_set=None, threshold=1):
    """``Z_i = 1`` iff the summed counts of ``code_set`` codes exceed ``threshold``."""
    codes = set(load_code_set() if code_set is None else code_set)
    if not codes:
        raise ValueError("code_set is empty")
    z = np.zeros(len(corpus), dtype=np.int8)
    for i, d in enumerate(corpus):
        total = sum(c for code, c in d.icd_counts.items() if code in codes)
        z[i] = total > threshold
    return z


def assemble_design_matrix(tfidf, surrogate, terms):
    """Append the surrogate as the last column.

    Returns ``(X, column_names, penalty_factors)``; the surrogate column is
    unpenalized. A term clashing with the surrogate column name pushes the
    surrogate name to ``z_surrogate_1``, ``z_surrogate_2``, ...
    """
    surrogate = np.asarray(surrogate, dtype=float).reshape(-1, 1)
    if tfidf.shape[0] != surrogate.shape[0]:
        raise ValueError("TF-IDF rows and surrogate length differ")
    dense = tfidf.toarray() if sp.issparse(tfidf) else np.asarray(tfidf, dtype=float)
    X = np.hstack([dense, surrogate])
    taken = set(terms)
    name, k = SURROGATE_COLUMN, 0
    while name in taken:
        k += 1
        name = f"{SURROGATE_COLUMN}_{k}"
    factors = np.ones(X.shape[1])
    factors[-1] = 0.0
    return X, list(terms) + [name], factors


_SIGNAL_TERMS = ["fracture", "compression", "wedge", "height", "deformity", "acute",
                 "kyphoplasty", "vertebroplasty", "collapse", "retropulsion"]
_BACKGROUND_TERMS = [
    "disc", "bulge", "stenosis", "degenerative", "spondylosis", "facet", "arthropathy",
    "foraminal", "narrowing", "lumbar", "thoracic", "sacral", "alignment", "normal",
    "mild", "moderate", "severe", "protrusion", "herniation", "annular", "fissure",
    "endplate", "marrow", "signal", "edema", "osteophyte", "ligamentum", "flavum",
    "hypertrophy", "canal", "nerve", "root", "impingement", "scoliosis", "curvature",
    "listhesis", "anterolisthesis", "retrolisthesis", "schmorl", "node", "hemangioma",
    "conus", "medullaris", "cauda", "equina", "paraspinal", "muscle", "atrophy",
    "sacroiliac", "joint", "sclerosis", "osteopenia", "density", "radiograph", "mri",
    "contrast", "enhancement", "postoperative", "laminectomy", "fusion", "hardware",
    "pedicle", "screw", "interbody", "cage", "levels", "vertebra", "body", "posterior",
    "anterior", "lateral", "left", "right", "central", "recess", "comparison", "prior",
    "study", "impression", "findings", "unremarkable", "visualized", "soft", "tissue",
    "kidney", "aorta", "calcification", "cyst", "effusion", "synovial", "tarlov",
    "transitional", "segment", "dextroscoliosis", "levoscoliosis", "straightening",
    "lordosis", "spasm", "bone", "island", "lesion", "metastatic", "benign",
]


def synthetic_corpus(n_docs=2000, prevalence=0.08, seed=0, *, signal=2.5,
                     surrogate_sens=0.30, surrogate_spec=0.99):
    """LIRE-like labelled report corpus with ICD counts.

    Cases mention signal terms more often; ICD code counts are drawn so
    ``count > 1`` has roughly the requested sensitivity and specificity.
    Deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    codes = load_code_set()
    vocab = _SIGNAL_TERMS + _BACKGROUND_TERMS
    base = np.clip(rng.exponential(0.2, size=len(vocab)), 0.06, 0.85)
    base[: len(_SIGNAL_TERMS)] = rng.uniform(0.05, 0.12, len(_SIGNAL_TERMS))
    stop = sorted(load_stopwords())
    docs = []
    for i in range(n_docs):
        y = int(rng.random() < prevalence)
        logit_p = np.log(base / (1 - base))
        if y:
            logit_p[: len(_SIGNAL_TERMS)] += signal
        present = rng.random(len(vocab)) < 1 / (1 + np.exp(-logit_p))
        words = []
        for j in np.flatnonzero(present):
            words.extend([vocab[j]] * (1 + rng.poisson(0.6)))
        words.extend(rng.choice(stop, size=rng.integers(3, 12)).tolist())
        words.extend(str(v) for v in rng.integers(1, 12, size=rng.integers(0, 3)))
        rng.shuffle(words)
        text = " ".join(words).capitalize() + "."
        positive = rng.random() < (surrogate_sens if y else 1 - surrogate_spec)
        if positive:
            total = 2 + rng.poisson(1.0)
        else:
            total = int(rng.random() < (0.4 if y else 0.015))
        counts = {}
        for _ in range(total):
            code = codes[rng.integers(len(codes))]
            counts[code] = counts.get(code, 0) + 1
        docs.append(Document(f"r{i:06d}", text, counts, y))
    return docs
