"""Command-line entry point.  Every subcommand is a thin wrapper over a library call.

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from longtail import pipeline as pl
from longtail.fetch import fetch_nsf_awards
from longtail.lda import load_model
from longtail.lda.model import dumps_model

log = logging.getLogger("longtail")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="JSON run configuration; flags override it")
    p.add_argument("--out", help="working/output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def _inputs(p):
    p.add_argument("--grants", help="grant records file")
    p.add_argument("--grants-format", choices=("canonical-jsonl", "nsf-api-json", "csv"))
    p.add_argument("--pubs", help="publication records file")
    p.add_argument("--pubs-format", choices=("canonical-jsonl", "wos-tab-delimited"))
    p.add_argument("--funding-column", help="funding-text column of WoS exports (default FU)")


def _prep(p):
    p.add_argument("--stopwords")
    p.add_argument("--lemmas")
    p.add_argument("--min-df", type=int)
    p.add_argument("--max-df-ratio", type=float)


def _lda(p, grid: bool):
    p.add_argument("--k", type=int)
    if grid:
        p.add_argument("--k-grid", help="A..B or comma list")
        p.add_argument("--jobs", dest="n_jobs", type=int, help="parallel fits over the K grid")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--iters", dest="iterations", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--sample-lag", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--chains", type=int)


def _partition(p):
    p.add_argument("--partition-mode", choices=("count", "dollar-share"))
    p.add_argument("--head-fraction", type=float)


def _analysis(p):
    p.add_argument("--annotations", help="grant_key,code CSV")
    p.add_argument("--labels", help="topic_index,label CSV")
    p.add_argument("--n-top", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="longtail", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fetch", help="download NSF awards for one division and year")
    p.add_argument("--division", required=True)
    p.add_argument("--year", type=int, required=True)
    p.add_argument("--endpoint", help="API URL (default: $LONGTAIL_NSF_ENDPOINT or the public API)")
    p.add_argument("--page-size", type=int, default=25)
    p.add_argument("--delay", type=float, default=1.0)
    p.add_argument("--max-retries", type=int, default=5)
    p.add_argument("--output", "-o", required=True, help="file for the raw JSON pages")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("ingest", help="parse, merge collaborative awards, normalize publications")
    _common(p)
    _inputs(p)

    p = sub.add_parser("prep", help="build the document-term matrix")
    _common(p)
    _prep(p)

    p = sub.add_parser("fit", help="fit LDA with a fixed K")
    _common(p)
    _lda(p, grid=False)

    p = sub.add_parser("select-k", help="fit a K grid and keep the best evidence")
    _common(p)
    _lda(p, grid=True)

    p = sub.add_parser("invest", help="topic investment table")
    _common(p)
    _partition(p)

    p = sub.add_parser("link", help="link publications to grants")
    _common(p)

    p = sub.add_parser("analyze", help="topic profiles and correlations")
    _common(p)
    _analysis(p)

    p = sub.add_parser("report", help="topic table and plot data")
    _common(p)
    p.add_argument("--format", dest="formats", action="append", choices=("csv", "json"))

    p = sub.add_parser("run", help="full pipeline")
    _common(p)
    _inputs(p)
    _prep(p)
    _lda(p, grid=True)
    _partition(p)
    _analysis(p)
    p.add_argument("--format", dest="formats", action="append", choices=("csv", "json"))
    return parser


_NOT_CONFIG = {"command", "config", "verbose"}


def resolve_config(args) -> pl.RunConfig:
    cfg = pl.RunConfig.from_file(args.config) if args.config else pl.RunConfig()
    overrides = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG and v is not None}
    # a K flag replaces whichever of k / k_grid the config file set
    if "k_grid" in overrides:
        overrides["k_grid"] = pl.parse_k_grid(overrides["k_grid"])
        if "k" not in overrides:
            cfg = replace(cfg, k=None)
    elif "k" in overrides:
        cfg = replace(cfg, k_grid=None)
    return pl.with_overrides(cfg, **overrides)


def _work(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _need(path: Path) -> Path:
    if not path.is_file():
        raise pl.ConfigError(f"missing {path.name} in {path.parent}; run the earlier stage first")
    return path


def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text, encoding="utf-8", newline="")
    log.info("wrote %s", out / name)


def cmd_fetch(args) -> None:
    data = fetch_nsf_awards(args.division, args.year, args.endpoint, args.page_size,
                            delay=args.delay, max_retries=args.max_retries)
    Path(args.output).write_bytes(data)


def cmd_ingest(cfg) -> None:
    if not cfg.grants:
        raise pl.ConfigError("'grants' is required")
    for key in ("grants", "pubs"):
        value = getattr(cfg, key)
        if value and not Path(value).is_file():
            raise pl.ConfigError(f"{key} file not found: {value}")
    out = _work(cfg)
    grants, pubs = pl.stage_ingest(cfg)
    _write(out, "grants.merged.jsonl", pl.grants_jsonl(grants))
    _write(out, "pubs.jsonl", pl.pubs_jsonl(pubs))


def cmd_prep(cfg) -> None:
    out = _work(cfg)
    grants = pl.read_grants_jsonl(_need(out / "grants.merged.jsonl"))
    _, dtm = pl.stage_prep(grants, cfg)
    _write(out, "dtm.json", json.dumps(dtm.to_dict(), sort_keys=True) + "\n")


def cmd_fit(cfg, grid: bool) -> None:
    out = _work(cfg)
    if grid and not cfg.k_grid:
        raise pl.ConfigError("select-k needs --k-grid")
    if not grid:
        if cfg.k is None:
            raise pl.ConfigError("fit needs --k")
        cfg.k_grid = None
    dtm = pl.load_dtm(_need(out / "dtm.json"))
    try:
        cfg.lda_config(cfg.k_grid[0] if grid else cfg.k)
    except ValueError as exc:
        raise pl.ConfigError(str(exc)) from None
    model, evidence = pl.stage_fit(dtm, cfg)
    _write(out, "model.json", dumps_model(model))
    if evidence is not None:
        _write(out, "evidence.csv", pl.evidence_csv(evidence))
        print(f"selected K={model.n_topics}")


def cmd_invest(cfg) -> None:
    out = _work(cfg)
    model = load_model(_need(out / "model.json"))
    grants = pl.read_grants_jsonl(_need(out / "grants.merged.jsonl"))
    table = pl.stage_invest(model, grants, cfg)
    _write(out, "invest.csv", table.to_csv())


def cmd_link(cfg) -> None:
    out = _work(cfg)
    from longtail.ingest import parse_publications

    grants = pl.read_grants_jsonl(_need(out / "grants.merged.jsonl"))
    pubs = parse_publications(_need(out / "pubs.jsonl").read_bytes(), "canonical-jsonl")
    _write(out, "links.json", pl.json_text(pl.stage_link(grants, pubs).to_json()))


def cmd_analyze(cfg) -> None:
    out = _work(cfg)
    for key in ("annotations", "labels", "stopwords", "lemmas"):
        value = getattr(cfg, key)
        if value and not Path(value).is_file():
            raise pl.ConfigError(f"{key} file not found: {value}")
    model = load_model(_need(out / "model.json"))
    grants = pl.read_grants_jsonl(_need(out / "grants.merged.jsonl"))
    links = pl.load_links(_need(out / "links.json"))
    table = pl.load_invest(_need(out / "invest.csv"), cfg)
    docs = pl.prep_docs(pl._aligned(model, grants), cfg)
    profiles, correlations = pl.stage_analyze(model, grants, links, table, cfg, docs)
    _write(out, "profiles.json", pl.profiles_json(profiles))
    _write(out, "correlations.json", pl.json_text(correlations))


def cmd_report(cfg) -> None:
    out = _work(cfg)
    profiles = pl.load_profiles(_need(out / "profiles.json"))
    table = pl.load_invest(_need(out / "invest.csv"), cfg)
    grants = pl.read_grants_jsonl(_need(out / "grants.merged.jsonl"))
    links = pl.load_links(_need(out / "links.json"))
    for fmt in cfg.formats:
        _write(out, f"topic_table.{fmt}", pl.emit_topic_table(profiles, table, fmt))
    for name, text in pl.emit_plot_data(profiles, table, grants, links).items():
        _write(out, name, text)


def cmd_run(cfg) -> None:
    manifest = pl.run_pipeline(cfg)
    print(f"wrote {len(manifest['outputs']) + 1} files to {cfg.out}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fetch":
            cmd_fetch(args)
            return EXIT_OK
        cfg = resolve_config(args)
        if args.command == "ingest":
            cmd_ingest(cfg)
        elif args.command == "prep":
            cmd_prep(cfg)
        elif args.command in ("fit", "select-k"):
            cmd_fit(cfg, grid=args.command == "select-k")
        elif args.command == "invest":
            cmd_invest(cfg)
        elif args.command == "link":
            cmd_link(cfg)
        elif args.command == "analyze":
            cmd_analyze(cfg)
        elif args.command == "report":
            cmd_report(cfg)
        elif args.command == "run":
            cmd_run(cfg)
    except pl.ConfigError as exc:
        print(f"longtail: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - any stage failure maps to one exit code
        print(f"longtail {args.command}: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
