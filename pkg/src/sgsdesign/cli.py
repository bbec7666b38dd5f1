"""``sgs`` command line: design calculators, samplers, featurization, experiments.

Exit codes: 0 success, 1 usage error or invalid input value, 2 infeasible
or invalid design, 3 runtime failure. Results go to stdout (JSON unless ``--csv``);
diagnostics go to stderr. Seeds default to the ``SGS_SEED`` environment
variable, then 0.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

import numpy as np

from .exceptions import DesignError, InfeasibleDesignError

EXIT_OK, EXIT_USAGE, EXIT_DESIGN, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _default_seed():
    raw = os.environ.get("SGS_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"SGS_SEED must be an integer, got {raw!r}") from None


def _seed(args):
    return args.seed if args.seed is not None else _default_seed()


def _emit(out, payload, as_csv):
    if as_csv:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(payload.keys())
        writer.writerow(payload.values())
    else:
        out.write(json.dumps(payload, indent=2) + "\n")


def _grid(text):
    """``a:b:step`` (inclusive) or a comma list."""
    if ":" in text:
        try:
            a, b, step = (float(v) for v in text.split(":"))
        except ValueError:
            raise UsageError(f"bad grid {text!r}; use start:stop:step or a comma list") from None
        k = int(round((b - a) / step))
        return [round(a + i * step, 12) for i in range(k + 1)]
    return [float(v) for v in text.split(",") if v.strip()]


# -- subcommands -------------------------------------------------------------

def cmd_oratio(args, out):
    from .design import (PopulationSpec, SurrogateSpec, likelihood_ratios, o_ratio_exact,
                         o_ratio_rare_approx, o_ratio_surface, p_z, stratum_case_rates,
                         surface_grid, write_surface_csv)
    pop = PopulationSpec(args.prev)
    if args.surface:
        sens = _grid(args.sens_grid)
        spec = [c for c in _grid(args.spec_grid)]
        rows = o_ratio_surface(surface_grid(sens, spec), args.ratio, pop)
        out.write(write_surface_csv(rows))
        return EXIT_OK
    if args.sens is None or args.spec is None:
        raise UsageError("oratio needs --sens and --spec (or --surface)")
    z = SurrogateSpec(args.sens, args.spec)
    z.require_usable()
    lr_plus, lr_minus = likelihood_ratios(z)
    pz = p_z(pop, z)
    payload = {
        "sensitivity": z.sensitivity,
        "specificity": z.specificity,
        "prevalence": pop.prevalence,
        "R": args.ratio,
        "o_ratio": o_ratio_rare_approx(z, args.ratio) if args.approx
        else o_ratio_exact(pop, z, args.ratio),
        "approx": bool(args.approx),
        "lr_plus": lr_plus,
        "lr_minus": lr_minus,
        "p_z": pz,
    }
    if 0 < pz < 1:
        rate1, rate0 = stratum_case_rates(pop, z)
        payload["case_rate_z1"] = rate1
        payload["case_rate_z0"] = rate0
    _emit(out, payload, args.csv)
    return EXIT_OK


def cmd_plan(args, out):
    from .design import (DesignKind, DesignSpec, PopulationSpec, SurrogateSpec, expected_cases,
                         o_ratio_exact, p_z, sampling_probabilities, srs_equivalent_size)
    pop = PopulationSpec(args.prev, args.cohort_size)
    z = SurrogateSpec(args.sens, args.spec)
    z.require_usable()
    design = DesignSpec(DesignKind.SGS, args.budget, args.ratio)
    pz = p_z(pop, z)
    pi1, pi0 = sampling_probabilities(design, pz, args.cohort_size)
    cases = expected_cases(design, pop, z)
    payload = {
        "design": design.label,
        "budget": args.budget,
        "cohort_size": args.cohort_size,
        "p_z": pz,
        "pi_z1": pi1,
        "pi_z0": pi0,
        "weight_z1": 1 / pi1,
        "weight_z0": 1 / pi0,
        "expected_cases": cases,
        "expected_cases_srs": expected_cases(DesignSpec(DesignKind.SRS, args.budget), pop),
        "srs_equivalent": srs_equivalent_size(cases, pop),
        "o_ratio": o_ratio_exact(pop, z, args.ratio),
    }
    _emit(out, payload, args.csv)
    return EXIT_OK


def cmd_sample(args, out):
    from .cohort import load_cohort
    from .design import DesignKind, DesignSpec
    from .sampler import draw, sample_to_csv
    cohort = load_cohort(args.cohort)
    kind = DesignKind(args.design)
    if kind is DesignKind.INVERSE_SGS:
        raise UsageError("sample supports SRS, SGS and ROS")
    surrogate = None
    if kind is DesignKind.SGS:
        if args.surrogate not in cohort.surrogate_names:
            raise UsageError(f"surrogate {args.surrogate!r} not in cohort columns "
                             f"{cohort.surrogate_names}")
        surrogate = cohort.surrogate(args.surrogate)
    sample = draw(DesignSpec(kind, args.n, args.ratio), cohort.outcomes, surrogate,
                  _seed(args))
    z = surrogate if surrogate is not None else (
        cohort.surrogates[:, 0] if cohort.surrogates.shape[1] else None)
    out.write(sample_to_csv(sample, cohort.outcomes, z, cohort.ids))
    return EXIT_OK


def cmd_featurize(args, out):
    import scipy.sparse as sp
    from .textfeat import (FilterConfig, Vocabulary, build_icd_surrogate, build_vocabulary,
                           load_code_set, read_corpus, tfidf_matrix)
    docs = read_corpus(args.corpus)
    if args.vocab:
        with open(args.vocab) as fh:
            vocab = Vocabulary.from_json(fh.read())
    else:
        vocab = build_vocabulary(docs, FilterConfig(min_frac=args.min_frac,
                                                    max_frac=args.max_frac))
    X = tfidf_matrix(docs, vocab)
    z = build_icd_surrogate(docs, load_code_set(args.codes), args.threshold)
    os.makedirs(args.out_dir, exist_ok=True)
    sp.save_npz(os.path.join(args.out_dir, "tfidf.npz"), X)
    with open(os.path.join(args.out_dir, "vocabulary.json"), "w") as fh:
        fh.write(vocab.to_json())
    with open(os.path.join(args.out_dir, "units.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "z", "y"])
        for d, zi in zip(docs, z):
            writer.writerow([d.id, int(zi), "" if d.label is None else int(d.label)])
    payload = {
        "documents": len(docs),
        "terms": len(vocab),
        "features_with_surrogate": len(vocab) + 1,
        "surrogate_positive_fraction": float(z.mean()),
        "threshold": args.threshold,
        "out_dir": args.out_dir,
    }
    _emit(out, payload, args.csv)
    return EXIT_OK


def _parse_targets(text):
    targets = []
    for part in text.split(";"):
        if part.strip():
            sens, spec = (float(v) for v in part.split(","))
            targets.append((sens, spec))
    return targets


def cmd_simulate(args, out):
    from .cohort import CohortConfig, save_cohort, simulate_cohort
    if args.config:
        with open(args.config) as fh:
            d = json.load(fh)
        d.setdefault("seed", _seed(args))
        if args.seed is not None:
            d["seed"] = args.seed
        config = CohortConfig.from_dict(d)
    else:
        config = CohortConfig(N=args.N, p=args.p, prevalence=args.prevalence,
                              feature_freq_mean=args.feature_freq_mean,
                              surrogates=_parse_targets(args.surrogates),
                              surrogate_mode=args.mode, seed=_seed(args))
    cohort = simulate_cohort(config)
    meta = args.meta or os.path.splitext(args.out)[0] + ".meta.json"
    save_cohort(cohort, args.out, meta)
    _emit(out, {"out": args.out, "meta": meta, "N": cohort.N, "p": cohort.p,
                "prevalence": cohort.realized["prevalence"],
                "surrogates": cohort.realized.get("surrogates", {})}, False)
    return EXIT_OK


def cmd_curve(args, out):
    from .harness import ExperimentConfig, run_learning_curve, run_manifest, write_curves_csv
    with open(args.config) as fh:
        d = json.load(fh)
    if args.seed is not None:
        d["master_seed"] = args.seed
    elif "master_seed" not in d:
        d["master_seed"] = _default_seed()
    if args.replicates is not None:
        d["replicates"] = args.replicates
    config = ExperimentConfig.from_dict(d)
    points = run_learning_curve(config, jobs=args.jobs)
    text = write_curves_csv(points)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        manifest = args.manifest or os.path.join(os.path.dirname(args.out) or ".",
                                                 "manifest.json")
        with open(manifest, "w") as fh:
            json.dump(run_manifest(config), fh, indent=2)
    else:
        out.write(text)
    return EXIT_OK


def _read_scored(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} has no rows")
    for col in ("y", "score"):
        if col not in rows[0]:
            raise ValueError(f"{path} lacks a {col!r} column")
    y = np.array([int(r["y"]) for r in rows])
    s = np.array([float(r["score"]) for r in rows])
    w = np.array([float(r["weight"]) for r in rows]) if "weight" in rows[0] else None
    return y, s, w


def cmd_evaluate(args, out):
    from .metrics import dumps_report, evaluation_report
    y, s, w = _read_scored(args.scores)
    report = evaluation_report(y, s, w, threshold=args.threshold, B=args.B,
                               level=args.level, seed=_seed(args))
    if args.csv:
        flat = {k: (";".join(str(x) for x in v) if isinstance(v, list) else v)
                for k, v in report.items()}
        _emit(out, flat, True)
    else:
        out.write(dumps_report(report) + "\n")
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="sgs", description="Surrogate-guided sampling toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    o = sub.add_parser("oratio", help="case/control odds ratio of SGS versus SRS")
    o.add_argument("--sens", type=float, help="surrogate sensitivity P(Z=1|Y=1)")
    o.add_argument("--spec", type=float, help="surrogate specificity P(Z=0|Y=0)")
    o.add_argument("--prev", type=float, required=True, help="outcome prevalence")
    o.add_argument("--ratio", type=float, required=True, help="sampling ratio R=P(Z=1|S=1)")
    o.add_argument("--approx", action="store_true", help="use the rare-outcome form")
    o.add_argument("--surface", action="store_true",
                   help="emit a CSV surface over --sens-grid x --spec-grid")
    o.add_argument("--sens-grid", default="0.1:0.9:0.1", help="start:stop:step or list")
    o.add_argument("--spec-grid", default="0.5:0.95:0.05", help="start:stop:step or list")
    o.add_argument("--csv", action="store_true", help="CSV instead of JSON")
    o.set_defaults(func=cmd_oratio)

    pl = sub.add_parser("plan", help="expected yield and sampling probabilities of SGS")
    pl.add_argument("--budget", type=int, required=True, help="abstraction sample size n")
    pl.add_argument("--ratio", type=float, required=True, help="sampling ratio R")
    pl.add_argument("--sens", type=float, required=True)
    pl.add_argument("--spec", type=float, required=True)
    pl.add_argument("--prev", type=float, required=True)
    pl.add_argument("--cohort-size", type=int, required=True, help="cohort size N")
    pl.add_argument("--csv", action="store_true")
    pl.set_defaults(func=cmd_plan)

    sa = sub.add_parser("sample", help="draw an abstraction sample from a cohort CSV")
    sa.add_argument("--cohort", required=True, help="cohort CSV (id,y,z1,...,x1..xp)")
    sa.add_argument("--design", default="SGS", choices=["SRS", "SGS", "ROS"])
    sa.add_argument("--n", type=int, required=True, help="abstraction budget")
    sa.add_argument("--ratio", type=float, default=0.5, help="sampling ratio R for SGS")
    sa.add_argument("--surrogate", default="z1", help="surrogate column for SGS")
    sa.add_argument("--seed", type=int)
    sa.set_defaults(func=cmd_sample)

    f = sub.add_parser("featurize", help="TF-IDF features and ICD surrogate from JSONL")
    f.add_argument("--corpus", required=True, help="JSONL {id,text,icd_counts,label?}")
    f.add_argument("--out-dir", required=True, help="directory for tfidf.npz etc.")
    f.add_argument("--vocab", help="reuse a vocabulary JSON instead of building one")
    f.add_argument("--codes", help="ICD code file (default: bundled vertebral fracture set)")
    f.add_argument("--threshold", type=int, default=1, help="Z=1 iff count > threshold")
    f.add_argument("--min-frac", type=float, default=0.05)
    f.add_argument("--max-frac", type=float, default=0.90)
    f.add_argument("--csv", action="store_true")
    f.set_defaults(func=cmd_featurize)

    si = sub.add_parser("simulate", help="simulate a cohort and write CSV + metadata")
    si.add_argument("--out", required=True, help="cohort CSV path")
    si.add_argument("--meta", help="metadata JSON path (default: <out>.meta.json)")
    si.add_argument("--config", help="CohortConfig JSON; overrides the flags below")
    si.add_argument("--N", type=int, default=100_000)
    si.add_argument("--p", type=int, default=250)
    si.add_argument("--prevalence", type=float, default=0.05)
    si.add_argument("--feature-freq-mean", type=float, default=1 / 6)
    si.add_argument("--surrogates", default="0.40,0.95;0.67,0.66",
                    help="sens,spec pairs separated by ';'")
    si.add_argument("--mode", default="CONDITIONAL_Z_GIVEN_Y",
                    choices=["CONDITIONAL_Z_GIVEN_Y", "PAPER_Y_GIVEN_Z"])
    si.add_argument("--seed", type=int)
    si.set_defaults(func=cmd_simulate)

    c = sub.add_parser("curve", help="run a learning-curve experiment")
    c.add_argument("--config", required=True, help="ExperimentConfig JSON")
    c.add_argument("--out", help="curves.csv path (default: stdout)")
    c.add_argument("--manifest", help="run manifest path (default: next to --out)")
    c.add_argument("--jobs", type=int, default=1, help="worker processes")
    c.add_argument("--replicates", type=int, help="override replicate count")
    c.add_argument("--seed", type=int, help="override master seed")
    c.set_defaults(func=cmd_curve)

    e = sub.add_parser("evaluate", help="AUC, IPW metrics and bootstrap CIs of scores")
    e.add_argument("--scores", required=True, help="CSV with y,score[,weight]")
    e.add_argument("--threshold", type=float, default=0.5)
    e.add_argument("--B", type=int, default=1000, help="bootstrap resamples (0 = none)")
    e.add_argument("--level", type=float, default=0.95)
    e.add_argument("--seed", type=int)
    e.add_argument("--csv", action="store_true")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None, stdout=None) -> int:
    out = stdout or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    buf = io.StringIO()
    try:
        code = args.func(args, buf)
    except UsageError as exc:
        print(f"sgs {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleDesignError as exc:
        where = f" (stratum {exc.stratum})" if exc.stratum else ""
        print(f"sgs {args.command}: infeasible design{where}: {exc}", file=sys.stderr)
        return EXIT_DESIGN
    except DesignError as exc:
        print(f"sgs {args.command}: {exc}", file=sys.stderr)
        return EXIT_DESIGN
    except ValueError as exc:
        print(f"sgs {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime error
        print(f"sgs {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out.write(buf.getvalue())
    return code


if __name__ == "__main__":
    sys.exit(main())
