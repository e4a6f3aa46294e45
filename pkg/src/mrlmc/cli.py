"""Command-line entry point: ``mrlmc <command> [flags]``.

Exit codes: 0 success, 1 validation error, 2 runtime or numeric error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig
from .errors import ConfigError, DataError, MRLMCError, NumericError
from .estimator import MRLMCClassifier
from .gradcheck import main_report
from .preprocess import SignalPreprocessor
from .signals import SynthSpec, load_dataset, save_dataset, synth_dataset
from .training import ablate, evaluate, sweep, train, write_csv, write_trace

logger = logging.getLogger("mrlmc")


def _load_config(path) -> ExperimentConfig:
    return ExperimentConfig.load(path) if path else ExperimentConfig().validate()


def _dump(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_synth(args):
    spec = SynthSpec()
    if args.spec:
        spec = SynthSpec.from_dict(json.loads(Path(args.spec).read_text()))
    records = synth_dataset(spec)
    save_dataset(records, args.out, spec)
    print(f"wrote {len(records)} records to {args.out}")


def cmd_preprocess(args):
    cfg = _load_config(args.config)
    records = load_dataset(args.inp)
    pre = SignalPreprocessor(cfg.data.fs_common, cfg.preprocess.filters, cfg.data.channels)
    out = pre.fit_transform(records)
    save_dataset(out, args.out)
    print(f"wrote {len(out)} preprocessed records to {args.out}")


def cmd_train(args):
    cfg = _load_config(args.config)
    records = load_dataset(args.data)
    run = Path(args.out)
    run.mkdir(parents=True, exist_ok=True)
    cfg.save(run / "config.json")
    result = train(cfg, records)
    result.estimator.save(run / "checkpoint", extra={"splits": result.split_ids(), "config": cfg.to_dict()})
    _dump(result.report.to_dict(), run / "metrics.json")
    write_trace(result.report.trace, run / "trace.csv")
    r = result.report
    print(f"test accuracy={r.accuracy:.4f} precision={r.precision:.4f} recall={r.recall:.4f} f1={r.f1:.4f}")


def _select_split(est, records, split):
    if split == "all":
        return records
    ids = est.checkpoint_extra_.get("splits", {}).get(split)
    if ids is None:
        raise DataError(f"checkpoint has no stored {split!r} split; use --split all")
    wanted = set(ids)
    chosen = [r for r in records if r.subject_id in wanted]
    if len(chosen) != len(wanted):
        raise DataError(f"dataset lacks {len(wanted) - len(chosen)} record(s) of the stored {split!r} split")
    return chosen


def cmd_eval(args):
    est = MRLMCClassifier.load(args.checkpoint)
    records = _select_split(est, load_dataset(args.data), args.split)
    report = evaluate(est, records).to_dict()
    if args.out:
        _dump(report, args.out)
    print(json.dumps(report, indent=2, sort_keys=True))


def cmd_ablate(args):
    cfg = _load_config(args.config)
    rows = ablate(cfg, load_dataset(args.data))
    write_csv(rows, args.out)
    for row in rows:
        print(row)


def cmd_sweep(args):
    cfg = _load_config(args.config)
    grid = json.loads(Path(args.grid).read_text()) if args.grid else None
    rows = sweep(cfg, load_dataset(args.data), grid)
    write_csv(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")


def cmd_gradcheck(args):
    ok, lines = main_report(_load_config(args.config))
    print("\n".join(lines))
    if not ok:
        raise NumericError("gradient check failed")


def cmd_embed(args):
    est = MRLMCClassifier.load(args.checkpoint)
    records = _select_split(est, load_dataset(args.data), args.split)
    emb = est.embed(records)
    dim = emb["v"].shape[1]
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "label", "vector"] + [f"f{i}" for i in range(dim)])
        for i, rec in enumerate(records):
            for name in ("v", "u", "z_f", "z_e"):
                writer.writerow([rec.subject_id, int(rec.label), name] + [repr(float(x)) for x in emb[name][i]])
    print(f"wrote embeddings for {len(records)} records to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mrlmc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic two-modality dataset")
    s.add_argument("--spec", help="synthetic spec JSON (defaults if omitted)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", help="channel selection, band-pass and resampling")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("train", help="train and write metrics, trace, checkpoint")
    s.add_argument("--data", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    for name, func, help_ in (("eval", cmd_eval, "evaluate a checkpoint"),
                              ("embed", cmd_embed, "export v, u, z_f, z_e per record as CSV")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--checkpoint", required=True)
        s.add_argument("--data", required=True)
        s.add_argument("--split", choices=("train", "val", "test", "all"), default="test" if name == "eval" else "all")
        s.add_argument("--out", required=name == "embed")
        s.set_defaults(func=func)

    s = sub.add_parser("ablate", help="loss-term ablation table (CSV)")
    s.add_argument("--data", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("sweep", help="n_scale x n_trans x n_head sweep (CSV)")
    s.add_argument("--data", required=True)
    s.add_argument("--config")
    s.add_argument("--grid", help="JSON object of axis -> values (default: full grid)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("gradcheck", help="finite-difference gradient contracts")
    s.add_argument("--config")
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (MRLMCError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
