"""Pipeline stages, run configuration, and report writers.

Each stage reads and writes documented files inside one working directory, so
stages can be re-run on their own:

    grants.merged.jsonl, pubs.jsonl   ingest
    dtm.json                          prep
    model.json, evidence.csv          fit / select-k
    invest.csv                        invest
    links.json                        link
    profiles.json, correlations.json  analyze
    topic_table.csv|json, fig1.csv, fig2.csv   report
    manifest.json                     run
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import shutil
import tempfile
from dataclasses import asdict, dataclass, field, fields, replace
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from longtail import __version__, analysis, ingest, invest, textprep
from longtail.lda import LdaConfig, fit, load_model, select_k
from longtail.lda.model import dumps_model

log = logging.getLogger(__name__)

TABLE_COLUMNS = ["topic_number", "label", "pub_count_top", "ti_dollars", "ti_rank", "composition"]
REPORT_FORMATS = ("csv", "json")


class ConfigError(ValueError):
    """Invalid configuration, detected before any work is done."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


PATH_FIELDS = ("grants", "pubs", "stopwords", "lemmas", "annotations", "labels")


@dataclass
class RunConfig:
    grants: str | None = None
    grants_format: str = "canonical-jsonl"
    pubs: str | None = None
    pubs_format: str = "canonical-jsonl"
    funding_column: str = "FU"
    stopwords: str | None = None
    lemmas: str | None = None
    annotations: str | None = None
    labels: str | None = None
    min_df: int = textprep.DEFAULT_MIN_DF
    max_df_ratio: float = textprep.DEFAULT_MAX_DF_RATIO
    k: int | None = None
    k_grid: list[int] | None = None
    alpha: float | None = None
    beta: float = 0.1
    iterations: int = 2000
    burn_in: int = 500
    sample_lag: int = 50
    seed: int = 0
    chains: int = 1
    n_jobs: int = 1
    partition_mode: str = invest.DEFAULT_MODE
    head_fraction: float = invest.DEFAULT_FRACTION
    n_top: int = 5
    bigram_min_count: int = 2
    out: str = "out"
    formats: list[str] = field(default_factory=lambda: ["csv"])

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data, base_dir=path.parent)

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        data = dict(data)
        if base_dir is not None:
            for key in PATH_FIELDS + ("out",):
                if data.get(key) and not os.path.isabs(data[key]):
                    data[key] = str(Path(base_dir) / data[key])
        if isinstance(data.get("k_grid"), str):
            data["k_grid"] = parse_k_grid(data["k_grid"])
        return cls(**data)

    def lda_config(self, k: int | None = None) -> LdaConfig:
        k = k if k is not None else (self.k or 1)
        return LdaConfig(K=k, alpha=self.alpha, beta=self.beta, iterations=self.iterations,
                         burn_in=self.burn_in, sample_lag=self.sample_lag, seed=self.seed,
                         chains=self.chains)

    def validate(self, need=("grants",)) -> None:
        for key in need:
            if not getattr(self, key):
                raise ConfigError(f"'{key}' is required")
        for key in PATH_FIELDS:
            value = getattr(self, key)
            if value and not Path(value).is_file():
                raise ConfigError(f"{key} file not found: {value}")
        if self.grants_format not in ingest.GRANT_FORMATS:
            raise ConfigError(f"unknown grants_format {self.grants_format!r}")
        if self.pubs_format not in ingest.PUB_FORMATS:
            raise ConfigError(f"unknown pubs_format {self.pubs_format!r}")
        if self.k is None and not self.k_grid:
            raise ConfigError("set either 'k' or 'k_grid'")
        if self.k is not None and self.k_grid:
            raise ConfigError("'k' and 'k_grid' are mutually exclusive")
        if self.k_grid and any(b <= a for a, b in zip(self.k_grid, self.k_grid[1:])):
            raise ConfigError(f"k_grid must be strictly ascending: {self.k_grid}")
        if self.partition_mode not in invest.PARTITION_MODES:
            raise ConfigError(f"unknown partition_mode {self.partition_mode!r}")
        if not 0 < self.head_fraction < 1:
            raise ConfigError("head_fraction must be in (0, 1)")
        bad = set(self.formats) - set(REPORT_FORMATS)
        if bad or not self.formats:
            raise ConfigError(f"formats must be a nonempty subset of {REPORT_FORMATS}")
        try:
            for k in self.k_grid or [self.k]:
                self.lda_config(k)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        out = Path(self.out)
        parent = out if out.exists() else out.parent
        if not os.access(parent if str(parent) else ".", os.W_OK):
            raise ConfigError(f"output directory not writable: {self.out}")


def parse_k_grid(text: str) -> list[int]:
    """``"2..10"`` -> [2, ..., 10]; ``"3,5,8"`` -> [3, 5, 8]."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad k grid {text!r}; use A..B or a comma list") from None


def round_half_up(x: float) -> int:
    return int(Decimal(repr(float(x))).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# --- file helpers -----------------------------------------------------------

def read_grants_jsonl(path) -> list[ingest.GrantRecord]:
    return ingest.parse_grants(Path(path).read_bytes(), "canonical-jsonl")


def grants_jsonl(grants) -> str:
    buf = io.StringIO()
    ingest.write_jsonl(grants, buf)
    return buf.getvalue()


def pubs_jsonl(pubs) -> str:
    buf = io.StringIO()
    ingest.write_jsonl(pubs, buf)
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# --- stages -----------------------------------------------------------------

def stage_ingest(cfg: RunConfig, warnings=None):
    raw = ingest.parse_grants(Path(cfg.grants).read_bytes(), cfg.grants_format)
    grants = ingest.merge_collaborative(raw)
    log.info("ingest: %d award records -> %d grants", len(raw), len(grants))
    pubs = []
    if cfg.pubs:
        pubs = ingest.parse_publications(Path(cfg.pubs).read_bytes(), cfg.pubs_format,
                                         funding_column=cfg.funding_column, warnings=warnings)
    return grants, pubs


def prep_docs(grants, cfg: RunConfig) -> list[list[str]]:
    stop = textprep.load_stopwords(cfg.stopwords)
    lemmas = textprep.load_lemmas(cfg.lemmas)
    return textprep.preprocess([g.abstract for g in grants], stop, lemmas)


def stage_prep(grants, cfg: RunConfig):
    docs = prep_docs(grants, cfg)
    vocab = textprep.build_vocabulary(docs, cfg.min_df, cfg.max_df_ratio)
    dtm = textprep.to_bow(docs, vocab, [g.grant_key for g in grants])
    return docs, dtm


def stage_fit(dtm, cfg: RunConfig):
    """Returns (model, evidence table or None)."""
    if cfg.k_grid:
        sel = select_k(dtm, cfg.k_grid, cfg.lda_config(cfg.k_grid[0]), n_jobs=cfg.n_jobs)
        return sel.models[sel.best_k], sel.table()
    return fit(dtm, cfg.lda_config()), None


def _aligned(model, grants):
    by_key = {g.grant_key: g for g in grants}
    missing = [k for k in model.doc_keys if k not in by_key]
    if missing:
        raise ValueError(f"model documents not among the grants: {missing[:5]}")
    return [by_key[k] for k in model.doc_keys]


def stage_invest(model, grants, cfg: RunConfig):
    grants = _aligned(model, grants)
    return invest.investment_table(model.gamma, [g.dollars_awarded for g in grants],
                                   cfg.partition_mode, cfg.head_fraction)


def stage_link(grants, pubs):
    return ingest.link_publications(grants, pubs)


def _correlation(x, y):
    try:
        return analysis.pearson_with_p(x, y).to_json()
    except analysis.AnalysisError as exc:
        return {"r": None, "n": len(x), "t_stat": None, "p_two_sided": None, "note": str(exc)}


def stage_analyze(model, grants, links, ti_table, cfg: RunConfig, docs=None):
    grants = _aligned(model, grants)
    keys = [g.grant_key for g in grants]
    dollars = [g.dollars_awarded for g in grants]
    annotations = analysis.read_annotations(Path(cfg.annotations).read_text("utf-8")) if cfg.annotations else None
    labels = analysis.read_labels(Path(cfg.labels).read_text("utf-8")) if cfg.labels else None
    profiles = analysis.build_profiles(model.gamma, keys, dollars, links, docs, annotations, labels,
                                      cfg.n_top, cfg.bigram_min_count)
    ti = [r.ti_dollars for r in ti_table.rows]
    correlations = {
        "topic_level": {"x": "ti_dollars", "y": "pub_count_top",
                        **_correlation(ti, [p.pub_count_top for p in profiles])},
        "grant_level": {"x": "dollars_awarded", "y": "linked_pub_count",
                        **_correlation(dollars, [len(links.pubs_for(k)) for k in keys])},
    }
    return profiles, correlations


def topic_table_rows(profiles, ti_table) -> list[dict]:
    by_topic = {r.topic_index: r for r in ti_table.rows}
    if sorted(by_topic) != sorted(p.topic_index for p in profiles):
        raise ValueError("profiles and investment table cover different topics")
    rows = []
    for p in sorted(profiles, key=lambda p: p.topic_index):
        t = by_topic[p.topic_index]
        rows.append({
            "topic_number": p.topic_index + 1,
            "label": p.label,
            "pub_count_top": p.pub_count_top,
            "ti_dollars": round_half_up(t.ti_dollars),
            "ti_rank": t.rank,
            "composition": analysis.format_composition(p.composition),
        })
    return rows


def emit_topic_table(profiles, ti_table, format: str = "csv") -> str:
    """One row per topic, in topic order, with the six characterization columns."""
    rows = topic_table_rows(profiles, ti_table)
    if format == "csv":
        return csv_text(TABLE_COLUMNS, [[r[c] for c in TABLE_COLUMNS] for r in rows])
    if format == "json":
        return json_text(rows)
    raise ValueError(f"unknown table format {format!r}")


def emit_plot_data(profiles, ti_table, grants, links) -> dict[str, str]:
    """Plot-ready CSVs: topics by investment and grants by award size."""
    rows = topic_table_rows(profiles, ti_table)
    fig1 = sorted(((r["topic_number"], r["ti_dollars"], r["pub_count_top"]) for r in rows),
                  key=lambda r: (-r[1], r[0]))
    fig2 = sorted(((g.grant_key, g.dollars_awarded, len(links.pubs_for(g.grant_key))) for g in grants),
                  key=lambda r: (-r[1], r[0]))
    return {
        "fig1.csv": csv_text(["topic_number", "ti_dollars", "pub_count_top"], fig1),
        "fig2.csv": csv_text(["grant_key", "dollars_awarded", "linked_pub_count"], fig2),
    }


def evidence_csv(table) -> str:
    return csv_text(["K", "log_evidence"], [[k, repr(v)] for k, v in table])


def profiles_json(profiles) -> str:
    return json_text([p.to_json() for p in profiles])


def load_profiles(path) -> list[analysis.TopicProfile]:
    return [analysis.TopicProfile.from_json(d) for d in json.loads(Path(path).read_text("utf-8"))]


def load_links(path) -> ingest.LinkTable:
    return ingest.LinkTable.from_json(json.loads(Path(path).read_text("utf-8")))


def load_dtm(path) -> textprep.DocTermMatrix:
    return textprep.DocTermMatrix.from_dict(json.loads(Path(path).read_text("utf-8")))


def load_invest(path, cfg: RunConfig) -> invest.TopicInvestmentTable:
    return invest.TopicInvestmentTable.from_csv(Path(path).read_text("utf-8"), cfg.partition_mode, cfg.head_fraction)


# --- full run ---------------------------------------------------------------

def manifest_config(cfg: RunConfig) -> dict:
    data = asdict(cfg)
    data.pop("out")
    data.pop("n_jobs")
    for key in PATH_FIELDS:
        if data[key]:
            data[key] = Path(data[key]).name
    return data


def build_outputs(cfg: RunConfig) -> dict[str, str]:
    """Every output file of a full run, as name -> text, computed in memory."""
    outputs = {}
    stage = "ingest"
    try:
        grants, pubs = stage_ingest(cfg)
        outputs["grants.merged.jsonl"] = grants_jsonl(grants)
        outputs["pubs.jsonl"] = pubs_jsonl(pubs)
        stage = "prep"
        docs, dtm = stage_prep(grants, cfg)
        outputs["dtm.json"] = json.dumps(dtm.to_dict(), sort_keys=True) + "\n"
        stage = "fit"
        model, evidence = stage_fit(dtm, cfg)
        outputs["model.json"] = dumps_model(model)
        if evidence is not None:
            outputs["evidence.csv"] = evidence_csv(evidence)
        stage = "invest"
        ti_table = stage_invest(model, grants, cfg)
        outputs["invest.csv"] = ti_table.to_csv()
        stage = "link"
        links = stage_link(grants, pubs)
        outputs["links.json"] = json_text(links.to_json())
        stage = "analyze"
        profiles, correlations = stage_analyze(model, grants, links, ti_table, cfg, docs)
        outputs["profiles.json"] = profiles_json(profiles)
        outputs["correlations.json"] = json_text(correlations)
        stage = "report"
        for fmt in cfg.formats:
            outputs[f"topic_table.{fmt}"] = emit_topic_table(profiles, ti_table, fmt)
        outputs.update(emit_plot_data(profiles, ti_table, grants, links))
    except Exception as exc:
        raise StageError(stage, exc) from exc
    return outputs


def run_pipeline(cfg: RunConfig) -> dict:
    """Full run into ``cfg.out``; returns the manifest.

    Outputs are staged in a scratch directory and moved into place only when
    every stage has succeeded, so a failed run leaves nothing behind.
    """
    cfg.validate()
    outputs = build_outputs(cfg)
    manifest = {
        "tool": "longtail",
        "version": __version__,
        "seed": cfg.seed,
        "config": manifest_config(cfg),
        "inputs": {
            key: {"file": Path(getattr(cfg, key)).name,
                  "sha256": sha256_bytes(Path(getattr(cfg, key)).read_bytes())}
            for key in PATH_FIELDS if getattr(cfg, key)
        },
        "outputs": {name: sha256_bytes(text.encode("utf-8")) for name, text in sorted(outputs.items())},
    }
    outputs["manifest.json"] = json_text(manifest)
    write_bundle(outputs, cfg.out)
    return manifest


def write_bundle(outputs: dict[str, str], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".longtail-", dir=out))
    try:
        for name, text in outputs.items():
            (staging / name).write_text(text, encoding="utf-8", newline="")
        for name in outputs:
            os.replace(staging / name, out / name)
    finally:
        shutil.rmtree(staging, ignore_errors=True)


def with_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})


__all__ = [
    "ConfigError",
    "RunConfig",
    "StageError",
    "build_outputs",
    "emit_plot_data",
    "emit_topic_table",
    "load_model",
    "parse_k_grid",
    "run_pipeline",
]
