"""Train and fuzz campaign loops.

A campaign is one strictly sequential loop: operations in document order,
a fixed number of episodes per operation, at most max_steps mutations per
episode, terminating an episode early when the target answers 5XX.
Training adds reward computation, prioritized replay, and one gradient
step per environment step; fuzzing computes no rewards and performs no
learning.
"""
from __future__ import annotations

import json
import os
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from ..errors import (
    CheckpointIncompatible,
    CheckpointWriteFailure,
    ConfigError,
    MissingOracle,
    TargetUnreachable,
)
from ..embedder import (
    HashEmbedder,
    NullEmbedder,
    TransformerEmbedder,
    load_checkpoint,
)
from ..httpexec import AuthSession, HttpExecutor, RefreshConfig
from ..ingest import RequestTemplate, ValuePool, build_templates, parse_spec
from ..mutation import ConcreteHttpRequest, apply_action, render, reset_episode
from ..rl import (
    EpisodeStats,
    PrioritizedReplay,
    QNetwork,
    Transition,
    build_observation,
    initial_observation,
    random_policy,
    reward,
    select_action,
    sync_target,
    td_update,
)
from ..rl.rewards import COVERAGE_VARIANTS
from .config import CampaignConfig
from .dedup import BugRecord, bug_signature, dedup
from .report import build_report, write_report

AGENT_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# Runtime assembly


def load_spec_text(source: str) -> tuple[str, str]:
    """(document text, format) from a file path or URL."""
    if source.startswith(("http://", "https://")):
        import urllib.parse

        parts = urllib.parse.urlsplit(source)
        executor = HttpExecutor(f"{parts.scheme}://{parts.netloc}")
        exchange = executor.get(parts.path or "/")
        if exchange.status == 0:
            raise TargetUnreachable(f"{source}: {exchange.transport_error}")
        if exchange.status != 200:
            raise ConfigError(f"{source} answered {exchange.status}")
        text = exchange.body.decode("utf-8")
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    fmt = "yaml" if source.rstrip("/").endswith((".yaml", ".yml")) else "json"
    if fmt == "json" and not text.lstrip().startswith(("{", "[")):
        fmt = "yaml"
    return text, fmt


def make_embedder(cfg: CampaignConfig):
    if cfg.embedder == "null":
        return NullEmbedder(cfg.embed_width)
    if cfg.embedder == "hash":
        return HashEmbedder(cfg.embed_width)
    if not cfg.embedder_checkpoint:
        raise ConfigError("transformer embedder needs a checkpoint path")
    model, tokenizer, _meta = load_checkpoint(cfg.embedder_checkpoint)
    return TransformerEmbedder(model, tokenizer)


def make_session(cfg: CampaignConfig, executor: HttpExecutor) -> AuthSession:
    refresh = None
    if cfg.refresh_url:
        refresh = RefreshConfig(url=cfg.refresh_url, credentials=cfg.refresh_credentials)
    session = AuthSession(
        primary_token=cfg.token, alternate_token=cfg.alt_token, refresh=refresh
    )
    session.attach_executor(executor)
    return session


def make_executor(cfg: CampaignConfig) -> HttpExecutor:
    return HttpExecutor(
        cfg.base_url,
        connect_timeout=cfg.connect_timeout_ms / 1000.0,
        total_timeout=cfg.timeout_ms / 1000.0,
    )


def check_reachable(executor: HttpExecutor) -> None:
    probe = executor.get("/")
    if probe.status == 0:
        raise TargetUnreachable(
            f"{executor.base_url}: {probe.transport_error or 'no response'}"
        )


def load_pool(cfg: CampaignConfig) -> ValuePool:
    if cfg.pool_path and os.path.exists(cfg.pool_path):
        return ValuePool.load(cfg.pool_path)
    return ValuePool()


def harvest_send_fn(executor: HttpExecutor, session: AuthSession):
    """send() callable for ingest.harvest_value_pool."""

    def send(template: RequestTemplate):
        exchange = executor.execute(render(reset_episode(template), session), session)
        if exchange.status == 0:
            raise TargetUnreachable(f"harvest failed: {exchange.transport_error}")
        return exchange.json_body()

    return send


class CoverageOracle:
    """Per-request coverage deltas read from the lab's control endpoint."""

    def __init__(self, executor: HttpExecutor):
        self.executor = executor
        self.seen: set[str] = set(self._query("/__lab__/coverage"))

    def _query(self, path: str) -> list[str]:
        exchange = self.executor.get(path)
        if exchange.status != 200:
            raise MissingOracle(
                f"coverage endpoint unavailable at {self.executor.base_url} "
                f"(status {exchange.status})"
            )
        body = exchange.json_body()
        if not isinstance(body, list):
            raise MissingOracle("coverage endpoint returned a non-array")
        return [str(b) for b in body]

    def step(self) -> tuple[int, int]:
        """(new blocks, executed blocks) for the most recent request."""
        last = set(self._query("/__lab__/coverage?scope=last"))
        new = len(last - self.seen)
        self.seen |= last
        return new, len(last)


# ---------------------------------------------------------------------------
# Agent checkpoints


def save_agent(
    path: str,
    net: QNetwork,
    target: QNetwork,
    cfg: CampaignConfig,
    epsilon: float,
    episodes_done: int,
    grad_steps: int,
) -> None:
    meta = {
        "format_version": AGENT_FORMAT_VERSION,
        "hyperparams": cfg.hp.to_dict(),
        "input_dim": net.input_dim,
        "hidden": list(net.hidden),
        "n_actions": net.n_actions,
        "embedder": cfg.embedder,
        "embed_width": cfg.embed_width,
        "reward_variant": cfg.reward_variant,
        "epsilon": epsilon,
        "episodes_done": episodes_done,
        "grad_steps": grad_steps,
    }
    arrays = {f"net/{k}": v for k, v in net.params.items()}
    arrays.update({f"target/{k}": v for k, v in target.params.items()})
    if net.optimizer is not None:
        arrays.update(
            {f"velocity/{k}": v for k, v in net.optimizer.velocity.items()}
        )
    directory = os.path.dirname(os.path.abspath(path)) or "."
    try:
        fd, tmp = tempfile.mkstemp(prefix=".agent-", dir=directory)
        with os.fdopen(fd, "wb") as fh:
            np.savez(
                fh,
                __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                **arrays,
            )
        os.replace(tmp, path)
    except OSError as exc:
        raise CheckpointWriteFailure(f"cannot write agent checkpoint: {exc}") from exc


def load_agent(path: str) -> tuple[QNetwork, QNetwork, dict]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format_version") != AGENT_FORMAT_VERSION:
            raise CheckpointIncompatible(
                f"agent checkpoint format {meta.get('format_version')}, "
                f"expected {AGENT_FORMAT_VERSION}"
            )
        net = QNetwork(meta["input_dim"], tuple(meta["hidden"]), meta["n_actions"])
        target = net.clone()
        for k in net.params:
            net.params[k] = data[f"net/{k}"]
            target.params[k] = data[f"target/{k}"]
        if f"velocity/w0" in data:
            hp = meta.get("hyperparams", {})
            opt = net.ensure_optimizer(hp.get("lr", 0.005), hp.get("momentum", 0.9))
            for k in net.params:
                opt.velocity[k] = data[f"velocity/{k}"]
    return net, target, meta


# ---------------------------------------------------------------------------
# Campaign loops


@dataclass
class TrainResult:
    checkpoint_path: str | None
    episodes: int
    env_steps: int
    grad_steps: int
    epsilon: float
    losses: list[float]


def _step_request(w, action, pool, session, rng, executor):
    w, applied = apply_action(w, action, pool, session, rng)
    request = render(w, session)
    exchange = executor.execute(request, session)
    return w, applied, request, exchange


def run_train(cfg: CampaignConfig, lab_templates=None) -> TrainResult:
    """Curriculum training: every operation in document order gets
    episodes_per_operation episodes."""
    if cfg.mode != "train":
        raise ConfigError("run_train needs a train-mode config")
    rng = np.random.default_rng(cfg.seed)
    executor = make_executor(cfg)
    check_reachable(executor)
    session = make_session(cfg, executor)
    embedder = make_embedder(cfg)
    pool = load_pool(cfg)

    if lab_templates is None:
        text, fmt = load_spec_text(cfg.spec_source)
        ops = parse_spec(text, fmt)
        templates = build_templates(ops, pool, rng)
    else:
        templates = lab_templates

    oracle = None
    if cfg.reward_variant in COVERAGE_VARIANTS:
        oracle = CoverageOracle(executor)

    input_dim = embedder.width + 4
    net = QNetwork(input_dim, seed=cfg.seed)
    target = net.clone()
    replay = PrioritizedReplay(
        cfg.hp.replay_capacity, cfg.hp.per_alpha, cfg.hp.priority_epsilon
    )

    epsilon = cfg.hp.epsilon_start if cfg.epsilon is None else cfg.epsilon
    episodes_done = 0
    env_steps = 0
    grad_steps = 0
    losses: list[float] = []

    for template in templates:
        if cfg.reset_between_ops:
            executor.post_json("/__lab__/reset", {})
            if oracle is not None:
                oracle.seen = set()
        for _ in range(cfg.episodes_per_operation):
            w = reset_episode(template)
            obs = initial_observation(w, embedder)
            stats = EpisodeStats()
            for _step in range(cfg.max_steps):
                action = select_action(net, obs, epsilon, rng)
                w, _applied, _request, exchange = _step_request(
                    w, action, pool, session, rng, executor
                )
                env_steps += 1
                new_blocks = executed = None
                if oracle is not None:
                    new_blocks, executed = oracle.step()
                stats.update(exchange, new_blocks, executed)
                r = reward(cfg.reward_variant, exchange, new_blocks, stats)
                next_obs = build_observation(exchange, w, embedder)
                # the episode is a fixed-horizon MDP: both the bug stop and
                # the step cap end it, so no bootstrap past either
                bug_found = 500 <= exchange.status <= 599
                terminal = bug_found or _step == cfg.max_steps - 1
                replay.push(Transition(obs, action, r, next_obs, terminal))
                if len(replay) >= cfg.hp.batch_size:
                    for _update in range(cfg.hp.updates_per_step):
                        beta = cfg.hp.beta_at(grad_steps)
                        batch, indices, weights = replay.sample(
                            cfg.hp.batch_size, beta, rng
                        )
                        loss, td_abs = td_update(net, target, batch, weights, cfg.hp)
                        replay.update_priorities(indices, td_abs)
                        losses.append(loss)
                        grad_steps += 1
                        if grad_steps % cfg.hp.target_sync_interval == 0:
                            sync_target(net, target)
                obs = next_obs
                if bug_found:
                    break
            episodes_done += 1
            epsilon = max(cfg.hp.epsilon_floor, epsilon * cfg.hp.epsilon_decay)
            if cfg.agent_out and episodes_done % cfg.checkpoint_every == 0:
                save_agent(cfg.agent_out, net, target, cfg, epsilon,
                           episodes_done, grad_steps)

    if cfg.agent_out:
        save_agent(cfg.agent_out, net, target, cfg, epsilon, episodes_done, grad_steps)
    return TrainResult(
        checkpoint_path=cfg.agent_out,
        episodes=episodes_done,
        env_steps=env_steps,
        grad_steps=grad_steps,
        epsilon=epsilon,
        losses=losses,
    )


def run_fuzz(cfg: CampaignConfig, lab_templates=None) -> dict:
    """Black-box fuzzing with a frozen policy; returns the report dict."""
    if cfg.mode != "fuzz":
        raise ConfigError("run_fuzz needs a fuzz-mode config")
    started = time.monotonic()
    rng = np.random.default_rng(cfg.seed)
    executor = make_executor(cfg)
    check_reachable(executor)
    session = make_session(cfg, executor)
    pool = load_pool(cfg)

    if cfg.agent_in == "random":
        net = None
        embedder = None
    else:
        net, _target, meta = load_agent(cfg.agent_in)
        if meta.get("embedder") and meta["embedder"] != cfg.embedder:
            cfg.embedder = meta["embedder"]
            cfg.embed_width = meta.get("embed_width", cfg.embed_width)
        embedder = make_embedder(cfg)
        if net.input_dim != embedder.width + 4:
            raise CheckpointIncompatible(
                f"agent expects {net.input_dim} observation features, "
                f"embedder provides {embedder.width + 4}"
            )

    if lab_templates is None:
        text, fmt = load_spec_text(cfg.spec_source)
        ops = parse_spec(text, fmt)
        templates = build_templates(ops, pool, rng)
    else:
        templates = lab_templates

    epsilon = cfg.epsilon if cfg.epsilon is not None else 0.05
    request_index = 0
    operations: list[dict] = []
    candidates: list[BugRecord] = []

    for template in templates:
        op = template.operation
        metrics = {
            "method": op.method,
            "path": op.url_template,
            "requests": 0,
            "status_2xx": 0,
            "status_4xx": 0,
            "status_5xx": 0,
            "bugs": [],
        }
        for _episode in range(cfg.episodes_per_operation):
            w = reset_episode(template)
            obs = initial_observation(w, embedder) if net is not None else None
            steps: list[dict] = []
            for _step in range(cfg.max_steps):
                if net is None:
                    action = random_policy(rng)
                else:
                    action = select_action(net, obs, epsilon, rng)
                w, applied, request, exchange = _step_request(
                    w, action, pool, session, rng, executor
                )
                request_index += 1
                metrics["requests"] += 1
                cls = exchange.status_class
                if cls in ("2xx", "4xx", "5xx"):
                    metrics[f"status_{cls}"] += 1
                steps.append(
                    {"action": action, "applied": applied, "request": request.to_dict()}
                )
                if net is not None:
                    obs = build_observation(exchange, w, embedder)
                if 500 <= exchange.status <= 599:
                    candidates.append(
                        BugRecord(
                            method=op.method,
                            path=op.url_template,
                            status=exchange.status,
                            signature=bug_signature(
                                op.method, op.url_template, exchange.status,
                                exchange.body,
                            ),
                            first_seen=request_index,
                            reproduction=list(steps),
                        )
                    )
                    break
        operations.append(metrics)

    bugs = dedup(candidates)
    by_op: dict[tuple[str, str], list[BugRecord]] = {}
    for bug in bugs:
        by_op.setdefault((bug.method, bug.path), []).append(bug)
    for metrics in operations:
        for bug in by_op.get((metrics["method"], metrics["path"]), []):
            metrics["bugs"].append(bug.to_dict())

    coverage_blocks = None
    if cfg.collect_coverage:
        exchange = executor.get("/__lab__/coverage")
        if exchange.status == 200 and isinstance(exchange.json_body(), list):
            coverage_blocks = [str(b) for b in exchange.json_body()]

    report = build_report(
        config_echo=cfg.echo(),
        seed=cfg.seed,
        operations=operations,
        coverage_blocks=coverage_blocks,
        wall_time_ms=int((time.monotonic() - started) * 1000),
    )
    if cfg.report_path:
        write_report(report, cfg.report_path)
    return report


# ---------------------------------------------------------------------------
# Reproduction helpers


def replay_requests(executor: HttpExecutor, reproduction: list[dict]) -> int:
    """Re-send a stored reproduction; returns the final status code."""
    status = 0
    for step in reproduction:
        request = ConcreteHttpRequest.from_dict(step["request"])
        status = executor.execute(request).status
    return status


def attach_fault_ids(report: dict, base_url: str) -> dict:
    """Ground-truth scoring against the lab: replay each bug on a freshly
    reset lab and correlate the crash block with the fault catalog. Only
    meaningful when the target is the bundled lab."""
    from ..lab import FAULT_CATALOG

    executor = HttpExecutor(base_url)
    block_to_fault = {f.source_block: f.fault_id for f in FAULT_CATALOG}
    for op in report.get("operations", []):
        for bug in op["bugs"]:
            executor.post_json("/__lab__/reset", {})
            status = replay_requests(executor, bug["reproduction"])
            if not 500 <= status <= 599:
                continue
            last = executor.get("/__lab__/coverage?scope=last").json_body() or []
            for block in last:
                fault = block_to_fault.get(str(block))
                if fault:
                    bug["fault_id"] = fault
                    break
    executor.post_json("/__lab__/reset", {})
    return report
