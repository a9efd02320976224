"""Command-line surface: train/classify/report, parser eval, cost, serve, simulate.

Exit codes: 0 on success, 2 on data errors (missing/malformed inputs).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import evalkit, layer1, layer2
from .corpus import CorpusError, load_corpus
from .dispatch import Clock, DispatchEngine, SnapshotError
from .gateway import Gateway, bundled_scenarios, ScenarioError, simulate
from .layer1 import Hyper, TrainingError
from .layer2 import BackendConfig, make_backend
from .service import ServiceConfig, serve
from .synth import separable_corpus

DATA_ERROR = 2


def _add_hyper_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=int, default=100, help="embedding dimension")
    p.add_argument("--buckets", type=int, default=2**21, help="hashed feature buckets")
    p.add_argument("--minn", type=int, default=3, help="min subword n-gram length")
    p.add_argument("--maxn", type=int, default=6, help="max subword n-gram length")
    p.add_argument("--word-ngrams", type=int, default=3, help="max word n-gram order")
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--lr", type=float, default=1.0, help="initial learning rate (decays to 0)")
    p.add_argument("--alpha", type=float, default=12.0, help="positive-class loss weight")
    p.add_argument("--threshold", type=float, default=0.5, help="decision threshold")
    p.add_argument("--seed", type=int, default=1)


def _hyper_from(args: argparse.Namespace) -> Hyper:
    return Hyper(
        dim=args.dim,
        buckets=args.buckets,
        minn=args.minn,
        maxn=args.maxn,
        word_n=args.word_ngrams,
        epochs=args.epochs,
        seed=args.seed,
        alpha=args.alpha,
        lr=args.lr,
        threshold=args.threshold,
    )


def _backend_from(args: argparse.Namespace) -> layer2.Backend:
    cfg = BackendConfig(
        kind=args.backend,
        endpoint=getattr(args, "endpoint", ""),
        model=getattr(args, "backend_model", ""),
        mode=getattr(args, "prompt_mode", "few_shot"),
    )
    return make_backend(cfg)


def cmd_train(args) -> int:
    corpus = load_corpus(args.corpus)
    model = layer1.train(corpus, _hyper_from(args))
    layer1.save_model(model, args.output)
    print(f"trained on {len(corpus)} samples -> {args.output}")
    return 0


def cmd_classify(args) -> int:
    model = layer1.load_model(args.model)
    if args.threshold is not None:
        model.hyper = replace(model.hyper, threshold=args.threshold)
    texts = [args.text] if args.text else [line.rstrip("\n") for line in sys.stdin]
    for text in texts:
        pred = layer1.forward(model, text)
        print(json.dumps({"label": pred.label, "p_positive": round(pred.p_positive, 6), "text": text}, ensure_ascii=False))
    return 0


def cmd_report(args) -> int:
    model = layer1.load_model(args.model)
    corpus = load_corpus(args.corpus)
    rep = layer1.classification_report(model, corpus, timing_calls=args.timing_calls)
    print(f"accuracy {rep.accuracy:.4f}")
    for cls in (0, 1):
        m = rep.per_class[cls]
        print(
            f"class {cls}: precision {m['precision']:.4f} recall {m['recall']:.4f} "
            f"f1 {m['f1']:.4f} support {int(m['support'])}"
        )
    print(f"macro f1 {rep.macro['f1']:.4f} weighted f1 {rep.weighted['f1']:.4f}")
    print(
        f"forward median {rep.median_forward_seconds:.3e}s mean {rep.mean_forward_seconds:.3e}s"
    )
    return 0


def cmd_eval_parse(args) -> int:
    goldset = evalkit.load_goldset(args.goldset)
    backend = _backend_from(args)
    report = evalkit.evaluate_parser(backend, goldset)
    print(report.table())
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
        print(f"report written to {args.json_out}")
    return 0


def cmd_eval_classify(args) -> int:
    corpus = load_corpus(args.corpus)
    hyper = _hyper_from(args)
    reports = evalkit.compare_classifiers(corpus, dlf_hyper=hyper, seed=args.seed)
    print(evalkit.comparison_table(reports))
    return 0


def cmd_cost(args) -> int:
    rep = evalkit.cost_report(args.volume, args.blood, args.price)
    print(rep.formatted())
    return 0


def cmd_serve(args) -> int:
    cfg = ServiceConfig.from_file(args.config)
    if cfg.model_path:
        model = layer1.load_model(cfg.model_path)
    else:
        print("no model_path in config; training a default on the bundled corpus", file=sys.stderr)
        model = layer1.train(
            separable_corpus(400, seed=13), Hyper(dim=16, buckets=2**14, epochs=8, lr=0.5, seed=7)
        )
    backend = make_backend(
        BackendConfig(kind=cfg.backend, endpoint=cfg.endpoint, model=cfg.backend_model, mode=cfg.prompt_mode)
    )
    clock = Clock()
    engine = DispatchEngine(
        clock=clock,
        stage_size=cfg.stage_size,
        stage_timeout=cfg.stage_timeout_seconds,
        eligibility_days=cfg.eligibility_days,
    )
    if cfg.snapshot_path and Path(cfg.snapshot_path).exists():
        engine.restore(cfg.snapshot_path)
    gateway = Gateway(
        model=model,
        backend=backend,
        engine=engine,
        clock=clock,
        snapshot_path=cfg.snapshot_path or None,
        threshold=cfg.threshold,
    )
    running = serve(gateway, port=cfg.port)
    print(f"listening on port {running.port}; Ctrl+C to stop")
    try:
        running.thread.join()
    except KeyboardInterrupt:
        running.shutdown()
    return 0


def _resolve_scenario(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    for candidate in bundled_scenarios():
        if candidate.stem == name:
            return candidate
    raise FileNotFoundError(
        f"scenario {name!r} not found; bundled: {', '.join(p.stem for p in bundled_scenarios())}"
    )


def cmd_simulate(args) -> int:
    scenario = _resolve_scenario(args.scenario)
    if args.model:
        model = layer1.load_model(args.model)
    else:
        model = layer1.train(
            separable_corpus(400, seed=13), Hyper(dim=16, buckets=2**14, epochs=8, lr=0.5, seed=7)
        )
    backend = _backend_from(args)
    result = simulate(scenario, model, backend, threshold=args.threshold)
    if args.transcript_out:
        Path(args.transcript_out).write_text(result.transcript_text() + "\n", encoding="utf-8")
    else:
        print(result.transcript_text())
    print(json.dumps(result.summary, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbrs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the request classifier")
    p.add_argument("corpus", help="line-delimited JSON corpus file")
    p.add_argument("-o", "--output", required=True, help="model file to write")
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="classify text with a trained model")
    p.add_argument("model", help="model file")
    p.add_argument("--text", help="single message (default: read lines from stdin)")
    p.add_argument("--threshold", type=float, default=None, help="override decision threshold")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("report", help="classification report on a labeled corpus")
    p.add_argument("model")
    p.add_argument("corpus")
    p.add_argument("--timing-calls", type=int, default=1000)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("eval-parse", help="score a parser backend against a gold set")
    p.add_argument("goldset", help="line-delimited {text, language, gold} file")
    p.add_argument("--backend", choices=("rules", "remote"), default="rules")
    p.add_argument("--endpoint", default="", help="remote chat-completion URL")
    p.add_argument("--backend-model", default="", help="remote model name")
    p.add_argument("--prompt-mode", choices=("few_shot", "zero_shot"), default="few_shot")
    p.add_argument("--json-out", default="", help="also write the report as JSON")
    p.set_defaults(func=cmd_eval_parse)

    p = sub.add_parser("eval-classify", help="compare DLF against the TF-IDF baseline")
    p.add_argument("corpus")
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_eval_classify)

    p = sub.add_parser("cost", help="single-layer vs dual-layer daily cost")
    p.add_argument("volume", type=int, help="daily message volume")
    p.add_argument("blood", type=int, help="daily blood-request count")
    p.add_argument("--price", default="0.0003", help="dollars per parsed message")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", required=True, help="flat key=value config file")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", help="replay a scenario under a logical clock")
    p.add_argument("--scenario", required=True, help="scenario path or bundled name")
    p.add_argument("--model", default="", help="trained model file (default: quick synthetic model)")
    p.add_argument("--backend", choices=("rules", "remote"), default="rules")
    p.add_argument("--endpoint", default="")
    p.add_argument("--backend-model", default="")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--transcript-out", default="", help="write transcript to a file")
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CorpusError, TrainingError, SnapshotError, ScenarioError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
