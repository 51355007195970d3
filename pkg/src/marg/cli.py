"""Command-line entry point: ``marg review|evaluate|cost|trace|ingest``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import defaultdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

from .baselines import BaselineConfig, lizca_review, sarg_b_review, sarg_tp_review
from .backend import Backend
from .config import ConfigError, RunConfig, load_config
from .corpus import DEFAULT_CHUNK_BUDGET, chunk_paper, load_paper
from .errors import MargError, SchemaError
from .evaluation.align import AlignmentEdge, CommentSet, align, extract_comments
from .evaluation.metrics import (
    HumanPaper,
    ScoredComparison,
    human_baseline,
    macro_average,
    threshold_sweep,
)
from .marg import PipelineOptions, marg_s_review, marg_tp_review
from .prompts import load_bundle
from .review import SCHEMA_VERSION, Review, read_review
from .transcript import GroupTranscript, render
from .usage import UsageEntry, UsageLedger, usage_report

logger = logging.getLogger("marg")

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2
EXIT_USAGE = 64

METHODS = {
    "sarg-b": "SARG-B",
    "sarg-tp": "SARG-TP",
    "marg-tp": "MARG-TP",
    "marg-s": "MARG-S",
    "marg-s-noref": "MARG-S-noref",
    "lizca": "LiZCa",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _method(value: str) -> str:
    key = value.strip().lower()
    if key not in METHODS:
        raise argparse.ArgumentTypeError(f"unknown method {value!r}; choose from {', '.join(METHODS)}")
    return key


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with run settings")
    common.add_argument("--backend", choices=["scripted", "live"])
    common.add_argument("--script", help="scripted backend script (JSON)")
    common.add_argument("--seed", type=int)
    common.add_argument("--serial", action="store_true", default=None, help="one request at a time")
    common.add_argument("--prompts", dest="prompt_bundle_path", help="prompt bundle override (JSON or TOML)")
    common.add_argument("-o", "--output-dir", dest="output_dir")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="marg", description="Multi-agent review generation and alignment evaluation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("review", parents=[common], help="generate reviews for papers")
    p.add_argument("papers", nargs="+", help="structured-text paper JSON files")
    p.add_argument("--method", required=True, type=_method, help=", ".join(METHODS))
    p.add_argument("--budget", type=int, dest="chunk_budget", help="chunk token budget")
    p.add_argument("--no-refinement", action="store_false", dest="refinement", default=None)

    p = sub.add_parser("evaluate", parents=[common], help="score generated reviews against real ones")
    p.add_argument("reviews_dir")
    p.add_argument("real_reviews_dir")
    p.add_argument("--scores", help="JSON of pre-scored comparisons; reused instead of querying")
    p.add_argument("--sweep", action="store_true", help="also write threshold-sweep grids")
    p.add_argument("--human", action="store_true", help="also compute the human leave-one-out baseline")

    p = sub.add_parser("cost", help="per-method token usage from usage.json files")
    p.add_argument("paths", nargs="*", help="usage.json files or directories to search")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("trace", help="render a group transcript")
    p.add_argument("transcript")
    p.add_argument("--filter", dest="tag", help="only events carrying this correction tag")

    p = sub.add_parser("ingest", help="validate a paper and show its chunks")
    p.add_argument("paper")
    p.add_argument("--budget", type=int, default=None)
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    keys = ("backend", "script", "seed", "serial", "prompt_bundle_path", "output_dir", "chunk_budget", "refinement")
    overrides = {k: getattr(args, k, None) for k in keys}
    return load_config(args.config, overrides).validate()


def _dump(path: Path, data: Any) -> None:
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


# ------------------------------------------------------------------ review


def run_method(method: str, paper, backend: Backend, config: RunConfig) -> Review:
    prompts = load_bundle(config.prompt_bundle_path)
    if method in ("marg-s", "marg-s-noref", "marg-tp"):
        options = PipelineOptions(
            prompts=prompts,
            limits=config.limits,
            chunk_budget=config.chunk_budget,
            serial=config.serial,
            max_parallel_groups=config.effective_concurrency,
        )
        if method == "marg-tp":
            return marg_tp_review(paper, backend, options)
        return marg_s_review(paper, backend, options, refine=config.refinement and method == "marg-s")
    baseline = BaselineConfig(
        prompts=prompts,
        chunk_budget=config.chunk_budget,
        truncation_budget=config.truncation_budget,
        include_captions=config.include_captions,
        serial=config.serial,
        max_parallel=config.effective_concurrency,
    )
    fn = {"sarg-b": sarg_b_review, "sarg-tp": sarg_tp_review, "lizca": lizca_review}[method]
    return fn(paper, backend, baseline)


def _usage_payload(review: Review, entries: list[UsageEntry]) -> dict[str, Any]:
    by_group: dict[str, dict[str, int]] = defaultdict(lambda: {"input_tokens": 0, "generated_tokens": 0, "completions": 0})
    total = {"input_tokens": 0, "generated_tokens": 0, "completions": 0}
    for e in entries:
        if e.method_label != review.method_label or e.paper_id != review.paper_id:
            continue
        for acc in (by_group[e.group or "-"], total):
            acc["input_tokens"] += e.input_tokens
            acc["generated_tokens"] += e.generated_tokens
            acc["completions"] += e.calls
    return {
        "schema_version": SCHEMA_VERSION,
        "paper_id": review.paper_id,
        "method_label": review.method_label,
        "totals": total,
        "by_group": {k: by_group[k] for k in sorted(by_group)},
    }


def write_review_outputs(review: Review, out_root: Path, ledger: UsageLedger) -> Path:
    out = out_root / (review.paper_id or "paper") / review.method_label
    out.mkdir(parents=True, exist_ok=True)
    names = {}
    for group, transcript in review.transcripts.items():
        if isinstance(transcript, GroupTranscript):
            name = f"group-{group}.jsonl"
            transcript.write(out / name)
            names[name] = name
    review.transcripts = names
    review.write(out / "review.json", metadata={"created_at": datetime.now(timezone.utc).isoformat()})
    _dump(out / "usage.json", _usage_payload(review, ledger.entries))
    return out


def cmd_review(args: argparse.Namespace) -> int:
    config = _config(args)
    method = args.method
    if method == "marg-s" and not config.refinement:
        method = "marg-s-noref"
    ledger = UsageLedger()
    backend = config.make_backend(ledger)
    out_root = Path(config.output_dir)
    status = EXIT_OK
    for paper_path in args.papers:
        try:
            paper = load_paper(paper_path)
            review = run_method(method, paper, backend, config)
        except MargError as exc:
            logger.error("%s: %s", paper_path, exc)
            return EXIT_FATAL
        out = write_review_outputs(review, out_root, ledger)
        print(f"{paper.paper_id}\t{review.method_label}\t{len(review.comments)} comments\t{out}")
        if review.partial:
            for err in review.errors:
                logger.warning("%s: group %s failed: %s", paper.paper_id, err["group"], err["error"])
            status = EXIT_PARTIAL
    return status


# ------------------------------------------------------------------ evaluate


def _load_real(path: Path) -> tuple[str, list[dict[str, Any]]]:
    data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict) or not isinstance(data.get("reviews"), list):
        raise SchemaError(f"{path}: expected an object with a 'reviews' list")
    return str(data.get("paper_id") or path.stem), data["reviews"]


def _comparison_key(paper_id: str, method: str, review_id: str) -> str:
    return f"{paper_id}\t{method}\t{review_id}"


def _load_scores(path: str | None) -> dict[str, ScoredComparison]:
    if not path:
        return {}
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    out = {}
    for row in data.get("comparisons", []):
        comp = ScoredComparison(
            edges=[AlignmentEdge.from_dict(e) for e in row.get("edges", [])],
            n_gen=int(row["n_gen"]),
            n_real=int(row["n_real"]),
            paper_id=str(row["paper_id"]),
            method_label=str(row["method_label"]),
            review_id=str(row["review_id"]),
        )
        out[_comparison_key(comp.paper_id, comp.method_label, comp.review_id)] = comp
    return out


def _comparison_dict(c: ScoredComparison) -> dict[str, Any]:
    return {
        "paper_id": c.paper_id,
        "method_label": c.method_label,
        "review_id": c.review_id,
        "n_gen": c.n_gen,
        "n_real": c.n_real,
        "edges": [e.to_dict() for e in c.edges],
    }


class _Evaluator:
    def __init__(self, config: RunConfig, scores: dict[str, ScoredComparison]) -> None:
        self.config = config
        self.scores = scores
        self._backend: Backend | None = None
        self.prompts = load_bundle(config.prompt_bundle_path)

    @property
    def backend(self) -> Backend:
        if self._backend is None:
            self._backend = self.config.make_backend()
        return self._backend

    def real_set(self, paper_id: str, index: int, raw: dict[str, Any]) -> CommentSet:
        review_id = str(raw.get("review_id") or f"review-{index + 1}")
        if isinstance(raw.get("comments"), list):
            return CommentSet("real", tuple(raw["comments"]), review_id)
        if isinstance(raw.get("text"), str):
            tags = {"paper_id": paper_id}
            found = extract_comments(raw["text"], self.backend, review_id=review_id, prompts=self.prompts, tags=tags)
            return CommentSet("real", found.comments, review_id)
        raise SchemaError(f"{paper_id}: review {review_id} needs 'comments' or 'text'")

    def compare(self, paper_id: str, method: str, gen: CommentSet, real: CommentSet, review_id: str) -> ScoredComparison:
        key = _comparison_key(paper_id, method, review_id)
        cached = self.scores.get(key)
        if cached is not None:
            return cached
        if gen.comments and real.comments:
            edges = align(
                gen,
                real,
                self.backend,
                passes=self.config.match_passes,
                vote_threshold=self.config.vote_threshold,
                seed=self.config.seed,
                prompts=self.prompts,
                tags={"paper_id": paper_id},
            )
        else:
            edges = []
        comp = ScoredComparison(edges, len(gen), len(real), paper_id, method, review_id)
        self.scores[key] = comp
        return comp


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _config_for_eval(args)
    reviews_dir = Path(args.reviews_dir)
    real_dir = Path(args.real_reviews_dir)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    evaluator = _Evaluator(config, _load_scores(args.scores))

    real_by_paper: dict[str, list[CommentSet]] = {}
    for path in sorted(real_dir.glob("*.json")):
        try:
            paper_id, raws = _load_real(path)
            real_by_paper[paper_id] = [evaluator.real_set(paper_id, i, r) for i, r in enumerate(raws)]
        except (SchemaError, json.JSONDecodeError) as exc:
            logger.error("skipping %s: %s", path, exc)

    rows = []
    comparisons: dict[str, list[ScoredComparison]] = defaultdict(list)
    for path in sorted(reviews_dir.rglob("review.json")):
        try:
            review = read_review(path)
        except SchemaError as exc:
            logger.error("skipping %s: %s", path, exc)
            continue
        reals = real_by_paper.get(review.paper_id)
        if not reals:
            logger.warning("no real reviews for %s; skipping %s", review.paper_id, path)
            continue
        gen = CommentSet("generated", tuple(review.texts), review.method_label)
        for real in reals:
            comp = evaluator.compare(review.paper_id, review.method_label, gen, real, real.review_id)
            comparisons[review.method_label].append(comp)
            rows.append({"paper_id": review.paper_id, "method_label": review.method_label, "review_id": real.review_id, **comp.metrics().to_dict()})

    macro = {}
    for method, comps in sorted(comparisons.items()):
        macro[method] = macro_average([c.metrics() for c in comps], [c.paper_id for c in comps]).to_dict()

    report: dict[str, Any] = {"schema_version": SCHEMA_VERSION, "rows": rows, "macro": macro}
    if args.human:
        papers = []
        for paper_id, reals in sorted(real_by_paper.items()):
            scored = {}
            for i, gen_review in enumerate(reals):
                for k, real in enumerate(reals):
                    if i == k:
                        continue
                    gen = CommentSet("generated", gen_review.comments, gen_review.review_id)
                    rid = f"{gen_review.review_id}|{real.review_id}"
                    scored[(i, k)] = evaluator.compare(paper_id, "human", gen, real, rid).edges
            papers.append(HumanPaper(reals, scored, paper_id))
        try:
            report["human"] = human_baseline(papers).to_dict()
        except MargError as exc:
            logger.warning("human baseline unavailable: %s", exc)
    _dump(out / "report.json", report)

    all_comps = [c for cs in comparisons.values() for c in cs]
    if evaluator.scores:
        _dump(out / "scores.json", {"schema_version": SCHEMA_VERSION, "comparisons": [_comparison_dict(c) for c in evaluator.scores.values()]})
    if args.sweep:
        for method, comps in sorted(comparisons.items()):
            grid = threshold_sweep(comps)
            (out / f"sweep-{method}.csv").write_text(grid.to_csv(), encoding="utf-8")
            _dump(out / f"sweep-{method}.json", {"schema_version": SCHEMA_VERSION, "method_label": method, **grid.to_dict()})
    for method, m in macro.items():
        print(f"{method}\trecall={m['recall']:.4f}\tprecision={m['precision']:.4f}\tjaccard={m['jaccard']:.4f}\tn={m['n_reports']}")
    if not all_comps:
        logger.warning("nothing to evaluate")
    return EXIT_OK


def _config_for_eval(args: argparse.Namespace) -> RunConfig:
    keys = ("backend", "script", "seed", "serial", "prompt_bundle_path", "output_dir")
    overrides = {k: getattr(args, k, None) for k in keys}
    config = load_config(args.config, overrides)
    # a scores file can make the backend unnecessary; only validate once it is used
    if args.scores and config.backend == "scripted" and not config.script:
        return config
    return config.validate()


# ------------------------------------------------------------------ cost / trace / ingest


def _usage_files(paths: Sequence[str]) -> list[Path]:
    found = []
    for p in map(Path, paths):
        if p.is_dir():
            found.extend(sorted(p.rglob("usage.json")))
        elif p.exists():
            found.append(p)
        else:
            logger.warning("no such file: %s", p)
    return found


def cmd_cost(args: argparse.Namespace) -> int:
    entries = []
    for path in _usage_files(args.paths):
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            totals = data["totals"]
            entries.append(
                UsageEntry(
                    method_label=data["method_label"],
                    input_tokens=int(totals["input_tokens"]),
                    generated_tokens=int(totals["generated_tokens"]),
                    paper_id=str(data.get("paper_id", "")),
                    calls=int(totals.get("completions", 1)),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            logger.error("skipping %s: %s", path, exc)
    rows = usage_report(entries)
    if args.json:
        print(json.dumps([r.to_dict() for r in rows], indent=2))
        return EXIT_OK
    print("method\tpapers\tcompletions\tinput_tokens\tgenerated_tokens\tavg_input\tavg_generated")
    for r in rows:
        avg_in = f"{r.avg_input_tokens:.1f}" if r.avg_input_tokens is not None else "-"
        avg_out = f"{r.avg_generated_tokens:.1f}" if r.avg_generated_tokens is not None else "-"
        print(f"{r.method_label}\t{r.papers}\t{r.completions}\t{r.input_tokens}\t{r.generated_tokens}\t{avg_in}\t{avg_out}")
    return EXIT_OK


def cmd_trace(args: argparse.Namespace) -> int:
    try:
        transcript = GroupTranscript.read(args.transcript)
    except (OSError, ValueError) as exc:
        logger.error("cannot read transcript %s: %s", args.transcript, exc)
        return EXIT_FATAL
    text = render(transcript, args.tag)
    if text:
        print(text, end="" if text.endswith("\n") else "\n")
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    paper = load_paper(args.paper)
    chunks = chunk_paper(paper, args.budget or DEFAULT_CHUNK_BUDGET)
    print(f"{paper.paper_id}: {len(paper.sections)} sections, {paper.num_paragraphs} paragraphs, {len(chunks)} chunks")
    for c in chunks:
        print(f"  chunk {c.chunk_index}: paragraphs {c.paragraphs[0].global_index}-{c.paragraphs[-1].global_index}, {c.token_count} tokens")
    return EXIT_OK


COMMANDS = {
    "review": cmd_review,
    "evaluate": cmd_evaluate,
    "cost": cmd_cost,
    "trace": cmd_trace,
    "ingest": cmd_ingest,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"marg: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MargError as exc:
        print(f"marg: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
