"""Command-line interface.

Subcommands: ingest, pretrain-embedder, train, fuzz, lab serve,
report summarize, corpus generate. Exit codes: 0 success, 2 target
unreachable, 3 configuration or usage error. APIFORGE_SEED overrides
--seed everywhere.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .campaign import CampaignConfig, run_fuzz, run_train, summarize_report
from .campaign.report import load_report
from .campaign.runner import harvest_send_fn, load_spec_text, make_executor, make_session
from .embedder import build_tokenizer, generate_corpus, load_corpus_sentences, pretrain, save_checkpoint
from .embedder.transformer import TransformerConfig
from .errors import ApiForgeError, ConfigError, TargetUnreachable
from .ingest import ValuePool, build_templates, harvest_value_pool, parse_spec
from .lab import LabConfig, LabServer

EXIT_OK = 0
EXIT_UNREACHABLE = 2
EXIT_CONFIG = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are config errors (exit 3)
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _seed(args) -> int:
    env = os.environ.get("APIFORGE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"APIFORGE_SEED must be an integer, got {env!r}") from exc
    return args.seed


def _add_target_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--base-url", required=True, help="target API root URL")
    p.add_argument("--token", default=None, help="primary bearer token")
    p.add_argument("--alt-token", default=None, help="alternate user's bearer token")
    p.add_argument("--refresh-url", default=None, help="token refresh endpoint path")
    p.add_argument(
        "--refresh-credentials",
        default="{}",
        help="JSON credentials body for the refresh endpoint",
    )
    p.add_argument("--timeout-ms", type=int, default=10_000)


def _campaign_config(args, mode: str) -> CampaignConfig:
    try:
        refresh_credentials = json.loads(args.refresh_credentials)
    except ValueError as exc:
        raise ConfigError(f"--refresh-credentials is not JSON: {exc}") from exc
    return CampaignConfig(
        mode=mode,
        spec_source=args.spec,
        base_url=args.base_url,
        seed=_seed(args),
        token=args.token,
        alt_token=args.alt_token,
        refresh_url=args.refresh_url,
        refresh_credentials=refresh_credentials,
        reward_variant=getattr(args, "reward", "sc"),
        embedder=args.embedder,
        embedder_checkpoint=args.embedder_checkpoint,
        episodes_per_operation=args.episodes,
        epsilon=getattr(args, "epsilon", None),
        max_steps=args.max_steps,
        agent_in=getattr(args, "agent", None),
        agent_out=getattr(args, "out", None),
        report_path=getattr(args, "report", None),
        pool_path=args.pool,
        timeout_ms=args.timeout_ms,
        collect_coverage=getattr(args, "collect_coverage", False),
    )


def _cmd_ingest(args) -> int:
    text, fmt = load_spec_text(args.spec)
    if args.format:
        fmt = args.format
    ops = parse_spec(text, fmt)
    rng = np.random.default_rng(_seed(args))
    pool = ValuePool()
    if args.harvest:
        if not args.base_url:
            raise ConfigError("--harvest needs --base-url")
        cfg_args = argparse.Namespace(
            spec=args.spec, base_url=args.base_url, token=args.token,
            alt_token=None, refresh_url=None, refresh_credentials="{}",
            timeout_ms=10_000, seed=args.seed, embedder="hash",
            embedder_checkpoint=None, episodes=1, max_steps=10, pool=None,
        )
        cfg = _campaign_config(cfg_args, "fuzz")
        cfg.agent_in = "random"
        executor = make_executor(cfg)
        session = make_session(cfg, executor)
        seed_templates = build_templates(ops, pool, np.random.default_rng(_seed(args)))
        pool = harvest_value_pool(seed_templates, harvest_send_fn(executor, session))
    templates = build_templates(ops, pool, rng)
    doc = [
        {
            "method": t.operation.method,
            "path": t.operation.url_template,
            "auth_required": t.operation.auth_required,
            "parameters": [
                {
                    "name": p.name,
                    "in": p.location,
                    "type": p.value_type,
                    "required": p.required,
                }
                for p in t.operation.parameters
            ],
            "initial_values": t.initial_values,
        }
        for t in templates
    ]
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
    if args.pool:
        pool.save(args.pool)
    print(f"wrote {len(doc)} templates to {args.out}")
    return EXIT_OK


def _cmd_pretrain(args) -> int:
    sentences = load_corpus_sentences(args.corpus)
    tokenizer = build_tokenizer(sentences, args.vocab)
    tcfg = TransformerConfig(
        vocab_size=tokenizer.vocab_size,
        layers=args.layers,
        heads=args.heads,
        dim=args.dim,
        ffn_dim=args.ffn_dim,
        max_seq=args.max_seq,
        embed_width=args.embed_width,
    )
    result = pretrain(
        sentences,
        tokenizer,
        tcfg,
        seed=_seed(args),
        epochs=args.epochs,
        batch_size=args.batch,
        lr=args.lr,
    )
    save_checkpoint(
        args.out,
        result.model,
        tokenizer,
        extra={
            "holdout_accuracy": result.holdout_accuracy,
            "chance": result.chance,
            "epoch_losses": result.epoch_losses,
        },
    )
    print(
        f"pretrained on {len(sentences)} sentences, vocab {tokenizer.vocab_size}; "
        f"epoch losses {result.epoch_losses[0]:.3f} -> {result.epoch_losses[-1]:.3f}; "
        f"held-out masked accuracy {result.holdout_accuracy:.4f} "
        f"(chance {result.chance:.5f}); saved {args.out}"
    )
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = _campaign_config(args, "train")
    result = run_train(cfg)
    print(
        f"trained {result.episodes} episodes ({result.env_steps} requests, "
        f"{result.grad_steps} gradient steps), epsilon {result.epsilon:.3f}; "
        f"checkpoint {result.checkpoint_path}"
    )
    return EXIT_OK


def _cmd_fuzz(args) -> int:
    cfg = _campaign_config(args, "fuzz")
    report = run_fuzz(cfg)
    print(summarize_report(report))
    return EXIT_OK


def _cmd_lab_serve(args) -> int:
    if args.config:
        config = LabConfig.from_file(args.config)
    else:
        config = LabConfig()
    if args.port is not None:
        config.port = args.port
    server = LabServer(config)
    print(f"lab listening on {server.base_url} (faults: {', '.join(config.faults) or 'none'})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def _cmd_report_summarize(args) -> int:
    print(summarize_report(load_report(args.file)))
    return EXIT_OK


def _cmd_corpus_generate(args) -> int:
    path = generate_corpus(
        args.base_url, args.n, _seed(args), args.out, token=args.token
    )
    print(f"wrote {args.n} exchanges to {path}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="apiforge", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse an API description into templates")
    p.add_argument("--spec", required=True, help="OpenAPI document path or URL")
    p.add_argument("--format", choices=("json", "yaml"), default=None)
    p.add_argument("--out", required=True, help="templates output file")
    p.add_argument("--pool", default=None, help="value pool output file")
    p.add_argument("--harvest", action="store_true",
                   help="harvest the value pool from live responses")
    p.add_argument("--base-url", default=None)
    p.add_argument("--token", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("pretrain-embedder", help="pretrain the response encoder")
    p.add_argument("--corpus", required=True, help="JSONL exchange corpus")
    p.add_argument("--out", required=True, help="checkpoint output file")
    p.add_argument("--vocab", type=int, default=8000)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--heads", type=int, default=8)
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--ffn-dim", type=int, default=1024)
    p.add_argument("--max-seq", type=int, default=512)
    p.add_argument("--embed-width", type=int, default=768)
    p.add_argument("--lr", type=float, default=3e-4)
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("train", help="train the mutation policy")
    p.add_argument("--spec", required=True)
    _add_target_flags(p)
    p.add_argument("--reward", default="sc",
                   choices=("sc", "cov", "u", "cov-u", "r", "cov-r", "arat"))
    p.add_argument("--embedder", default="transformer",
                   choices=("transformer", "null", "hash"))
    p.add_argument("--embedder-checkpoint", default=None)
    p.add_argument("--episodes", type=int, default=10_000,
                   help="episodes per operation")
    p.add_argument("--max-steps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pool", default=None, help="value pool file to use")
    p.add_argument("--out", required=True, help="agent checkpoint output")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("fuzz", help="fuzz a target with a frozen policy")
    p.add_argument("--spec", required=True)
    _add_target_flags(p)
    p.add_argument("--agent", required=True,
                   help="agent checkpoint, or 'random' for the random baseline")
    p.add_argument("--embedder", default="transformer",
                   choices=("transformer", "null", "hash"))
    p.add_argument("--embedder-checkpoint", default=None)
    p.add_argument("--episodes", type=int, default=3, help="episodes per operation")
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--max-steps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pool", default=None)
    p.add_argument("--report", default=None, help="report output file")
    p.add_argument("--collect-coverage", action="store_true",
                   help="include lab coverage blocks in the report")
    p.set_defaults(func=_cmd_fuzz)

    p = sub.add_parser("lab", help="the bundled vulnerable API")
    lab_sub = p.add_subparsers(dest="lab_command", required=True)
    ps = lab_sub.add_parser("serve", help="serve the lab")
    ps.add_argument("--config", default=None, help="lab config JSON file")
    ps.add_argument("--port", type=int, default=None)
    ps.set_defaults(func=_cmd_lab_serve)

    p = sub.add_parser("report", help="inspect campaign reports")
    rep_sub = p.add_subparsers(dest="report_command", required=True)
    pr = rep_sub.add_parser("summarize", help="print a report summary")
    pr.add_argument("file")
    pr.set_defaults(func=_cmd_report_summarize)

    p = sub.add_parser("corpus", help="pretraining corpus tools")
    cor_sub = p.add_subparsers(dest="corpus_command", required=True)
    pc = cor_sub.add_parser("generate", help="record randomized traffic")
    pc.add_argument("--base-url", required=True)
    pc.add_argument("--n", type=int, default=1000)
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--out", required=True)
    pc.add_argument("--token", default=None)
    pc.set_defaults(func=_cmd_corpus_generate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except TargetUnreachable as exc:
        print(f"error: target unreachable: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ApiForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
