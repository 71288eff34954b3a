"""Experiment orchestration: wire up a session, run it, measure it.

``run_experiment`` builds partitions (from the scenario generator or a log
file), spins up one secure miner and one provisioner per organization over
the deterministic in-process network, runs the session to quiescence, and
returns the mining output plus a metrics trail sampled after every
delivered message. One seed fixes the interleaving, so runs are replayable:
the recorded transcript can be fed back to reproduce identical metrics.

``standalone_mining`` runs the same mining code directly on a pre-merged
log; protocol runs must converge to its outputs byte for byte.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .enclave import BuildManifest, OrgIdentity, compute_measurement
from .logio import load_log, split_log
from .mining.declare import ConformanceState, DeclareModel, fitness_report_json
from .mining.dfg import DfgState, hm_observe
from .mining.heuristics import HeuristicsConfig, hm_finalize
from .mining.pnml import to_pnml
from .model import EventLog, group_by_iid
from .protocol import MinerConfig, Provisioner, ProvisionerConfig, SecureMiner
from .scenario import generate_scenario_log, org_map_for, scenario_declare_model
from .stats import RegressionStats, fit_stats
from .transport import DeliveryRecord, InProcessNetwork

__all__ = [
    "MINER_ORG_PROOF",
    "ALGORITHMS",
    "ExperimentConfig",
    "MetricSample",
    "RunMetrics",
    "ExperimentResult",
    "HeuristicsSink",
    "DeclareSink",
    "build_manifest",
    "build_session",
    "run_experiment",
    "standalone_mining",
    "sweep_segsize",
    "scale_run",
    "write_metrics_csv",
    "write_transcript",
    "read_transcript",
]

MINER_ORG_PROOF = "org:miner"
ALGORITHMS = ("heuristics", "declare")


@dataclass(frozen=True)
class ExperimentConfig:
    n_cases: int = 1000
    seed: int = 1
    seg_size: int = 100_000
    incremental: bool = True
    algorithm: str = "heuristics"
    n_orgs: int = 3
    loop_iterations: int = 1
    capacity: Optional[int] = None
    log_path: Optional[str] = None
    org_map_path: Optional[str] = None
    iid_column: str = "case"
    session: str = "session-1"

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError("algorithm must be one of %s" % (ALGORITHMS,))

    @classmethod
    def from_json_file(cls, path, **overrides) -> "ExperimentConfig":
        with Path(path).open() as fh:
            data = json.load(fh)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


@dataclass(frozen=True)
class MetricSample:
    step: int
    phase: str
    current_bytes: int
    peak_bytes: int
    messages: int


@dataclass
class RunMetrics:
    samples: List[MetricSample] = field(default_factory=list)
    peak_bytes: int = 0
    mean_bytes: float = 0.0
    message_count: int = 0
    yield_count: int = 0
    wall_ms: float = 0.0

    def comparable(self) -> Tuple:
        """Everything deterministic under a fixed seed (wall time excluded)."""
        return (
            tuple(self.samples),
            self.peak_bytes,
            self.mean_bytes,
            self.message_count,
            self.yield_count,
        )


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    metrics: RunMetrics
    output: bytes
    output_kind: str  # "pnml" or "fitness"
    transcript: List[DeliveryRecord]
    miner_phase: str


class HeuristicsSink:
    """Feeds yielded cases (or a final log) into directly-follows counters."""

    def __init__(self, config: Optional[HeuristicsConfig] = None):
        self.config = config or HeuristicsConfig()
        self.state = DfgState()

    def on_case(self, case: EventLog) -> None:
        hm_observe(self.state, case)

    def on_log(self, log: EventLog) -> None:
        cases = group_by_iid(log)
        for iid in sorted(cases):
            hm_observe(self.state, cases[iid])

    def finalize_bytes(self) -> bytes:
        return to_pnml(hm_finalize(self.state, self.config))


class DeclareSink:
    """Checks yielded cases (or a final log) against a constraint model."""

    def __init__(self, model: Optional[DeclareModel] = None):
        self.model = model or scenario_declare_model()
        self.state = ConformanceState(self.model)

    def on_case(self, case: EventLog) -> None:
        self.state.add_case(case)

    def on_log(self, log: EventLog) -> None:
        self.state.add_log(log)

    def finalize_bytes(self) -> bytes:
        return fitness_report_json(self.state.finalize(), self.model)


def _make_sink(algorithm: str, declare_model: Optional[DeclareModel]):
    if algorithm == "heuristics":
        return HeuristicsSink()
    return DeclareSink(declare_model)


def build_manifest(algorithm: str) -> BuildManifest:
    return BuildManifest(
        component="secure-miner",
        version="0.1.0",
        algorithm=algorithm,
        params=HeuristicsConfig().as_params() if algorithm == "heuristics" else (),
    )


def build_session(
    partitions: Dict[str, EventLog],
    *,
    seed: int,
    seg_size: int,
    incremental: bool,
    sink,
    manifest: BuildManifest,
    session: str = "session-1",
    capacity: Optional[int] = None,
    network: Optional[InProcessNetwork] = None,
) -> Tuple[InProcessNetwork, SecureMiner, List[Provisioner]]:
    if network is None:
        network = InProcessNetwork(seed)
    org_ids = tuple(sorted(partitions))
    identities = {org: OrgIdentity(org) for org in org_ids}
    reference = compute_measurement(manifest)
    miner = SecureMiner(
        MinerConfig(
            miner_id="miner",
            org_proof=MINER_ORG_PROOF,
            provisioner_ids=org_ids,
            seg_size=seg_size,
            do_yield_cases=incremental,
            manifest=manifest,
            session=session,
            provisioner_keys={org: identities[org].public_bytes for org in org_ids},
            capacity=capacity,
        ),
        sink,
    )
    provisioners = [
        Provisioner(
            ProvisionerConfig(
                org_id=org,
                partition=partitions[org],
                allowed_miners=frozenset({MINER_ORG_PROOF}),
                reference_measurement=reference,
                identity=identities[org],
                session=session,
            )
        )
        for org in org_ids
    ]
    network.register(miner)
    for prov in provisioners:
        network.register(prov)
    return network, miner, provisioners


def _load_inputs(cfg: ExperimentConfig) -> Dict[str, EventLog]:
    if cfg.log_path is not None:
        log = load_log(cfg.log_path, iid_column=cfg.iid_column)
        if cfg.org_map_path is not None:
            with Path(cfg.org_map_path).open() as fh:
                org_map = json.load(fh)
        else:
            org_map = org_map_for(cfg.n_orgs)
        return split_log(log, org_map)
    org_map = org_map_for(cfg.n_orgs)
    log = generate_scenario_log(
        cfg.n_cases, cfg.seed, loop_iterations=cfg.loop_iterations, org_map=org_map
    )
    return split_log(log, org_map)


def run_experiment(
    cfg: ExperimentConfig,
    *,
    declare_model: Optional[DeclareModel] = None,
    replay_order: Optional[Sequence[Tuple[str, str]]] = None,
) -> ExperimentResult:
    partitions = _load_inputs(cfg)
    sink = _make_sink(cfg.algorithm, declare_model)
    network, miner, _ = build_session(
        partitions,
        seed=cfg.seed,
        seg_size=cfg.seg_size,
        incremental=cfg.incremental,
        sink=sink,
        manifest=build_manifest(cfg.algorithm),
        session=cfg.session,
        capacity=cfg.capacity,
    )
    metrics = RunMetrics()

    def sample(record: DeliveryRecord) -> None:
        metrics.samples.append(
            MetricSample(
                step=record.step,
                phase=miner.phase_label,
                current_bytes=miner.accountant.current_bytes,
                peak_bytes=miner.accountant.peak_bytes,
                messages=record.step + 1,
            )
        )

    network.on_delivered = sample
    started = time.perf_counter()
    network.bootstrap()
    if replay_order is None:
        network.run()
    else:
        network.run_replay(replay_order)
    metrics.wall_ms = (time.perf_counter() - started) * 1000.0
    metrics.peak_bytes = miner.accountant.peak_bytes
    metrics.message_count = network.step
    metrics.yield_count = miner.yield_count
    if metrics.samples:
        metrics.mean_bytes = sum(s.current_bytes for s in metrics.samples) / len(metrics.samples)
    output = sink.finalize_bytes()
    return ExperimentResult(
        config=cfg,
        metrics=metrics,
        output=output,
        output_kind="pnml" if cfg.algorithm == "heuristics" else "fitness",
        transcript=list(network.transcript),
        miner_phase=miner.phase,
    )


def standalone_mining(
    log: EventLog, algorithm: str, *, declare_model: Optional[DeclareModel] = None
) -> bytes:
    """Mining output for a pre-merged log, bypassing the protocol entirely."""
    sink = _make_sink(algorithm, declare_model)
    sink.on_log(log)
    return sink.finalize_bytes()


def sweep_segsize(
    cfg: ExperimentConfig, sizes: Sequence[int]
) -> List[Tuple[int, RunMetrics]]:
    out = []
    for seg_size in sizes:
        result = run_experiment(cfg.with_overrides(seg_size=seg_size))
        out.append((seg_size, result.metrics))
    return out


def scale_run(
    cfg: ExperimentConfig,
    dimension: str,
    values: Sequence[int],
    *,
    metric: str = "wall_ms",
    repeats: int = 3,
) -> Tuple[List[Dict[str, float]], RegressionStats]:
    """Sweep one input dimension and fit linear/log models to a metric.

    ``dimension`` is one of ``events`` (loop iterations; x is the maximum
    case length), ``cases`` (x is the case count), or ``orgs`` (x is the
    organization count). The metric per point is the median over
    ``repeats`` runs; one untimed warmup run precedes the sweep so cold
    caches do not distort the first point. Repeats are interleaved in
    rounds across all points so slow machine-wide drift does not bias the
    curve shape.
    """
    from .scenario import max_case_events

    if values:
        run_experiment(cfg)
    points: List[Tuple[float, ExperimentConfig]] = []
    for value in values:
        if dimension == "events":
            point_cfg = cfg.with_overrides(loop_iterations=value)
            x = float(max_case_events(value))
        elif dimension == "cases":
            point_cfg = cfg.with_overrides(n_cases=value)
            x = float(value)
        elif dimension == "orgs":
            point_cfg = cfg.with_overrides(n_orgs=value)
            x = float(value)
        else:
            raise ValueError("dimension must be events, cases, or orgs")
        points.append((x, point_cfg))
    runs: List[List[ExperimentResult]] = [[] for _ in points]
    for _ in range(max(1, repeats)):
        for slot, (_, point_cfg) in zip(runs, points):
            slot.append(run_experiment(point_cfg))
    rows: List[Dict[str, float]] = []
    for (x, _), slot in zip(points, runs):
        picked = sorted(getattr(r.metrics, metric) for r in slot)[len(slot) // 2]
        rows.append(
            {
                "x": x,
                metric: float(picked),
                "peak_bytes": float(slot[0].metrics.peak_bytes),
                "message_count": float(slot[0].metrics.message_count),
            }
        )
    stats = fit_stats([r["x"] for r in rows], [r[metric] for r in rows])
    return rows, stats


def write_metrics_csv(metrics: RunMetrics, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "phase", "current_bytes", "peak_bytes", "messages"])
        for s in metrics.samples:
            writer.writerow([s.step, s.phase, s.current_bytes, s.peak_bytes, s.messages])


def write_transcript(transcript: Sequence[DeliveryRecord], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for rec in transcript:
            fh.write(
                json.dumps(
                    {
                        "step": rec.step,
                        "sender": rec.sender,
                        "receiver": rec.receiver,
                        "size": rec.size,
                    },
                    sort_keys=True,
                )
            )
            fh.write("\n")


def read_transcript(path) -> List[Tuple[str, str]]:
    order = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            order.append((doc["sender"], doc["receiver"]))
    return order
