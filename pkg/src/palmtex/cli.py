"""Batch command line: ``synth``, ``learn-filters``, ``extract``, ``evaluate``.

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bsif_learn import DEFAULT_PATCHES, learn_filter_bank
from .dataset import ManifestRow, read_manifest
from .descriptors import LbpParams, LdpParams, LpqParams, LtpParams, load_filter_bank, save_filter_bank
from .errors import ConvergenceWarning, EmptyCorpus, PalmtexError, ValidationError
from .evaluation import (
    ProtocolConfig,
    Sample,
    ScoreSet,
    check_dataset,
    cmc,
    group_by_subject,
    roc,
    run_protocol,
    summarize,
)
from .features import DESCRIPTOR_NAMES, DescriptorConfig, FeatureVector, format_bins
from .fusion import RULES
from .imagecore import load_image
from .synthgen import SynthConfig, generate

log = logging.getLogger("palmtex")

THREADS_ENV = "PALMTEX_THREADS"
IMAGE_SUFFIXES = (".pgm", ".png", ".bmp")
EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValidationError(f"{THREADS_ENV} must be an integer, got {raw!r}")


# ---------------------------------------------------------------------------
# shared helpers


def descriptor_from_args(args) -> DescriptorConfig:
    bank = None
    if args.filter_bank:
        bank = load_filter_bank(args.filter_bank)
    elif args.descriptor == "bsif":
        raise ValidationError("--descriptor bsif requires --filter-bank")
    return DescriptorConfig(
        name=args.descriptor,
        lbp=LbpParams(args.lbp_neighbors, args.lbp_radius, args.lbp_topology),
        ltp=LtpParams(args.ltp_threshold, args.ltp_mode),
        ldp=LdpParams(args.ldp_k),
        lpq=LpqParams(args.lpq_window),
        bank=bank,
        zero_mean=args.zero_mean,
    )


def extract_rows(rows: list[ManifestRow], descriptor: DescriptorConfig, threads: int) -> list[FeatureVector]:
    """Features for every manifest row, in row order; errors name the row."""

    def one(row: ManifestRow) -> FeatureVector:
        try:
            return descriptor.extract(load_image(row.path))
        except PalmtexError as exc:
            raise type(exc)(f"{row.label()}: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, rows))
    return [one(r) for r in rows]


def _features_csv(rows: list[ManifestRow], vectors: list[FeatureVector]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    n = len(vectors[0]) if vectors else 0
    writer.writerow(["subject_id", "session", "sample_index", "tag", *[f"bin_{i}" for i in range(n)]])
    for r, v in zip(rows, vectors):
        writer.writerow([r.subject_id, r.session, r.sample_index, v.tag, *format_bins(v.bins)])
    return buf.getvalue()


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        subjects=args.subjects,
        samples_per_subject=args.samples,
        sessions=args.sessions,
        image_side=args.side,
        seed=args.seed,
        noise_sigma=args.noise,
        jitter=args.jitter,
        band=args.band,
    )
    rows = generate(cfg, args.out)
    print(f"wrote {len(rows)} images for {cfg.subjects} subjects to {args.out}/manifest.csv")
    return EXIT_OK


def cmd_learn_filters(args) -> int:
    corpus_dir = Path(args.corpus)
    if not corpus_dir.is_dir():
        raise ValidationError(f"corpus directory {corpus_dir} does not exist")
    paths = sorted(p for p in corpus_dir.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES)
    corpus = []
    for p in paths:
        img = load_image(p)
        if img.width >= args.side and img.height >= args.side:
            corpus.append(img)
        else:
            log.warning("skipping %s: smaller than %dx%d", p, args.side, args.side)
    if not corpus:
        raise EmptyCorpus(f"no loadable images of at least {args.side}x{args.side} under {corpus_dir}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        bank, result = learn_filter_bank(
            corpus, k=args.k, side=args.side, seed=args.seed, count=args.patches, max_iter=args.max_iter, tol=args.tol
        )
    save_filter_bank(bank, args.out)
    status = "converged" if result.converged else "NOT converged"
    print(f"learned {bank.count} filters of {bank.side}x{bank.side} from {len(corpus)} images: "
          f"FastICA {status} after {result.iterations} iterations -> {args.out}")
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return EXIT_OK


def cmd_extract(args) -> int:
    descriptor = descriptor_from_args(args)
    rows = read_manifest(args.manifest)
    vectors = extract_rows(rows, descriptor, args.threads)
    _write_text(Path(args.out), _features_csv(rows, vectors))
    print(f"wrote {len(vectors)} feature vectors ({descriptor.tag}) to {args.out}")
    return EXIT_OK


def _protocol_from_args(args) -> ProtocolConfig:
    return ProtocolConfig(
        protocol=args.protocol,
        templates_per_subject=args.templates,
        probes_per_subject=args.probes,
        repetitions=args.repetitions,
        fusion_enabled=args.fusion != "none",
        rng_seed=args.seed,
    )


def cmd_evaluate(args) -> int:
    started = time.time()
    descriptor = descriptor_from_args(args)
    cfg = _protocol_from_args(args)
    manifest_path = Path(args.manifest)
    rows = read_manifest(manifest_path)
    # validate the protocol geometry before touching any image
    placeholder = FeatureVector([1.0], "probe")
    check_dataset(group_by_subject([Sample(r.subject_id, r.session, r.sample_index, placeholder) for r in rows]), cfg)

    vectors = extract_rows(rows, descriptor, args.threads)
    samples = [Sample(r.subject_id, r.session, r.sample_index, v) for r, v in zip(rows, vectors)]
    rule = "mean" if args.fusion == "none" else args.fusion
    score_sets = run_protocol(samples, cfg, rule=rule, workers=args.threads)
    report = summarize(score_sets)

    out = Path(args.output_dir)
    n_subjects = len({r.subject_id for r in rows})
    document = {
        "tool": "palmtex",
        "version": __version__,
        "config": {
            "manifest_sha256": hashlib.sha256(manifest_path.read_bytes()).hexdigest(),
            "samples": len(rows),
            "subjects": n_subjects,
            "descriptor": descriptor.describe(),
            "fusion": args.fusion,
            "protocol": {
                "protocol": cfg.protocol,
                "templates_per_subject": cfg.templates_per_subject,
                "probes_per_subject": cfg.probes_per_subject,
                "repetitions": cfg.run_count,
                "fusion_enabled": cfg.fusion_enabled,
                "canonical": cfg.canonical,
            },
            "seed": args.seed,
        },
        "indicators": report.to_dict(),
    }
    _write_text(out / "report.json", json.dumps(document, indent=2, sort_keys=True) + "\n")

    pooled = ScoreSet(
        np.concatenate([s.genuine for s in score_sets]), np.concatenate([s.impostor for s in score_sets])
    )
    curve = roc(pooled)
    lines = ["threshold,far,frr"] + [f"{t:.12g},{a:.12g},{r:.12g}" for t, a, r in zip(curve.thresholds, curve.far, curve.frr)]
    _write_text(out / "roc.csv", "\n".join(lines) + "\n")

    rates = np.mean([cmc(s.true_ranks, n_subjects) for s in score_sets], axis=0)
    lines = ["rank,identification_rate"] + [f"{i + 1},{v:.12g}" for i, v in enumerate(rates)]
    _write_text(out / "cmc.csv", "\n".join(lines) + "\n")

    meta = {
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "hostname": platform.node(),
        "threads": args.threads,
        "elapsed_seconds": round(time.time() - started, 3),
    }
    _write_text(out / "meta.json", json.dumps(meta, indent=2) + "\n")

    if not cfg.canonical:
        print(f"note: {cfg.templates_per_subject} templates per subject is outside the canonical 2/3/4 scenarios")
    r = report
    print(f"EER {r.eer.mean:.2f} +- {r.eer.half_width:.2f}%  GAR@EER {r.gar_at_eer.mean:.2f} +- {r.gar_at_eer.half_width:.2f}%  "
          f"minHTER {r.min_hter.mean:.2f} +- {r.min_hter.half_width:.2f}%  Rank-1 {r.rank1.mean:.2f} +- {r.rank1.half_width:.2f}%")
    print(f"report written to {out / 'report.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_descriptor_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--descriptor", required=True, choices=DESCRIPTOR_NAMES)
    p.add_argument("--filter-bank", help="BSIF filter bank text file")
    p.add_argument("--lbp-neighbors", type=int, default=8)
    p.add_argument("--lbp-radius", type=float, default=1.0)
    p.add_argument("--lbp-topology", choices=("square3x3", "circle"), default="square3x3")
    p.add_argument("--ltp-threshold", type=float, default=5.0)
    p.add_argument("--ltp-mode", choices=("concat_upper_lower", "upper_only"), default="concat_upper_lower")
    p.add_argument("--ldp-k", type=int, default=3)
    p.add_argument("--lpq-window", type=int, default=7)
    p.add_argument("--zero-mean", action="store_true", help="centre histograms to zero mean after L1 normalization")
    p.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="palmtex", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"palmtex {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic vein-texture dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--subjects", type=int, default=20)
    p.add_argument("--samples", type=int, default=12, help="samples per subject")
    p.add_argument("--sessions", type=int, default=2, choices=(1, 2))
    p.add_argument("--side", type=int, default=128)
    p.add_argument("--noise", type=float, default=6.0, help="additive Gaussian noise sigma")
    p.add_argument("--jitter", type=float, default=1.0, help="geometric perturbation magnitude")
    p.add_argument("--band", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("learn-filters", help="learn a BSIF filter bank from an image directory")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--k", type=int, default=8, help="number of filters (bits)")
    p.add_argument("--side", type=int, default=17)
    p.add_argument("--patches", type=int, default=DEFAULT_PATCHES)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_learn_filters)

    p = sub.add_parser("extract", help="write one feature vector per manifest row")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_descriptor_args(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("evaluate", help="run a verification/identification protocol")
    p.add_argument("--manifest", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--fusion", choices=("none", *RULES), default="none")
    p.add_argument("--protocol", choices=("holdout", "session_split"), default="holdout")
    p.add_argument("--templates", type=int, default=4, help="templates per subject (holdout)")
    p.add_argument("--probes", type=int, default=None, help="probes per subject (holdout; default: the rest)")
    p.add_argument("--repetitions", type=int, default=10)
    _add_descriptor_args(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help, --version
        return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if hasattr(args, "threads"):
            args.threads = args.threads if args.threads is not None else default_threads()
            if args.threads < 1:
                raise ValidationError("--threads must be >= 1")
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (PalmtexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
