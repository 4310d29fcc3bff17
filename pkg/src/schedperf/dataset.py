"""Dataset records, the line-delimited file format, and generation flow.

A dataset file is JSON-lines text: a header record first, then one record
per (pipeline, schedule) sample carrying the graph, both per-stage feature
matrices (sparse-coded, zero slots omitted), the N run-time measurements,
and a train/eval split tag. Pipelines are split 90/10 so no pipeline's
schedules ever straddle the two splits. Files contain no timestamps, so
regenerating with the same seed reproduces identical bytes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError
from .features import (
    DEPENDENT_WIDTH,
    INVARIANT_WIDTH,
    featurize_pipeline,
    featurize_schedule,
)
from .graph import PipelineGraph
from .synthesis import (
    GeneratorConfig,
    NoiseConfig,
    OracleConfig,
    enumerate_schedules,
    oracle_runtime,
    sample_pipeline,
)

FORMAT_VERSION = "1"

_SCHEDULE_TAG = 1
_MEASURE_TAG = 2
_SPLIT_TAG = 3


@dataclass(frozen=True)
class DatasetHeader:
    format_version: str
    feature_widths: tuple[int, int]
    n_measurements: int
    generator_config_hash: str


@dataclass
class SampleRecord:
    """One (pipeline, schedule) pair with features and measurements."""

    pipeline_id: str
    schedule_id: str
    graph: PipelineGraph
    invariant: np.ndarray
    dependent: np.ndarray
    measurements: np.ndarray
    split_tag: str

    def validate(self) -> None:
        n = self.graph.num_nodes
        if self.invariant.shape != (n, INVARIANT_WIDTH):
            raise DataFormatError(
                f"sample {self.schedule_id}: invariant shape {self.invariant.shape}"
            )
        if self.dependent.shape != (n, DEPENDENT_WIDTH):
            raise DataFormatError(
                f"sample {self.schedule_id}: dependent shape {self.dependent.shape}"
            )
        if self.measurements.ndim != 1 or len(self.measurements) == 0:
            raise DataFormatError(f"sample {self.schedule_id}: empty measurements")
        if not np.all(self.measurements > 0):
            raise DataFormatError(f"sample {self.schedule_id}: non-positive measurement")
        if self.split_tag not in ("train", "eval"):
            raise DataFormatError(f"sample {self.schedule_id}: bad split {self.split_tag!r}")

    @property
    def mean_runtime(self) -> float:
        return float(self.measurements.mean())

    @property
    def runtime_std(self) -> float:
        return float(self.measurements.std())


def config_hash(
    generator: GeneratorConfig, oracle: OracleConfig, noise: NoiseConfig
) -> str:
    blob = json.dumps(
        {
            "generator": dataclasses.asdict(generator),
            "oracle": dataclasses.asdict(oracle),
            "noise": dataclasses.asdict(noise),
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(blob.encode()).hexdigest()


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                digest.update(chunk)
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _encode_matrix(m: np.ndarray) -> list[list[list[float]]]:
    """Sparse row encoding: per node, [slot, value] pairs for nonzero slots."""
    rows = []
    for row in m:
        nz = np.nonzero(row)[0]
        rows.append([[int(i), float(row[i])] for i in nz])
    return rows


def _decode_matrix(rows, width: int, where: str) -> np.ndarray:
    out = np.zeros((len(rows), width), dtype=np.float64)
    for r, pairs in enumerate(rows):
        for i, v in pairs:
            if not 0 <= i < width:
                raise DataFormatError(f"{where}: slot {i} outside width {width}")
            out[r, int(i)] = float(v)
    return out


def _sample_to_json(rec: SampleRecord) -> str:
    payload = {
        "kind": "sample",
        "pipeline_id": rec.pipeline_id,
        "schedule_id": rec.schedule_id,
        "split_tag": rec.split_tag,
        "graph": {
            "num_nodes": rec.graph.num_nodes,
            "edges": [[p, c] for p, c in rec.graph.edges],
        },
        "invariant_features": _encode_matrix(rec.invariant),
        "dependent_features": _encode_matrix(rec.dependent),
        "measurements": [float(x) for x in rec.measurements],
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def write_dataset(path: str, header: DatasetHeader, records: list[SampleRecord]) -> None:
    head = {
        "kind": "header",
        "format_version": header.format_version,
        "feature_widths": list(header.feature_widths),
        "n_measurements": header.n_measurements,
        "generator_config_hash": header.generator_config_hash,
    }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(head, sort_keys=True, separators=(",", ":")) + "\n")
            for rec in records:
                fh.write(_sample_to_json(rec) + "\n")
    except OSError as exc:
        raise DataFormatError(f"cannot write {path}: {exc}") from exc


def read_dataset(path: str) -> tuple[DatasetHeader, list[SampleRecord]]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise DataFormatError(f"{path}: empty dataset file")

    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: bad header line: {exc}") from exc
    if head.get("kind") != "header":
        raise DataFormatError(f"{path}: first record must be the header")
    if head.get("format_version") != FORMAT_VERSION:
        raise DataFormatError(
            f"{path}: format version {head.get('format_version')!r} unsupported "
            f"(reader supports {FORMAT_VERSION!r})"
        )
    widths = tuple(head.get("feature_widths", ()))
    if widths != (INVARIANT_WIDTH, DEPENDENT_WIDTH):
        raise DataFormatError(
            f"{path}: feature widths {widths} do not match ({INVARIANT_WIDTH}, {DEPENDENT_WIDTH})"
        )
    header = DatasetHeader(
        format_version=head["format_version"],
        feature_widths=(int(widths[0]), int(widths[1])),
        n_measurements=int(head["n_measurements"]),
        generator_config_hash=head["generator_config_hash"],
    )

    records: list[SampleRecord] = []
    for idx, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            graph = PipelineGraph(
                num_nodes=int(obj["graph"]["num_nodes"]),
                edges=tuple((int(p), int(c)) for p, c in obj["graph"]["edges"]),
            )
            rec = SampleRecord(
                pipeline_id=obj["pipeline_id"],
                schedule_id=obj["schedule_id"],
                graph=graph,
                invariant=_decode_matrix(
                    obj["invariant_features"], INVARIANT_WIDTH, f"record {idx}"
                ),
                dependent=_decode_matrix(
                    obj["dependent_features"], DEPENDENT_WIDTH, f"record {idx}"
                ),
                measurements=np.asarray(obj["measurements"], dtype=np.float64),
                split_tag=obj["split_tag"],
            )
            rec.validate()
        except (KeyError, TypeError, ValueError, json.JSONDecodeError, DataFormatError) as exc:
            raise DataFormatError(f"{path}: record {idx}: {exc}") from exc
        records.append(rec)
    return header, records


def split_samples(records: list[SampleRecord], tag: str) -> list[SampleRecord]:
    return [r for r in records if r.split_tag == tag]


def group_by_pipeline(records: list[SampleRecord]) -> dict[str, list[SampleRecord]]:
    groups: dict[str, list[SampleRecord]] = {}
    for r in records:
        groups.setdefault(r.pipeline_id, []).append(r)
    return groups


def best_runtime_by_pipeline(records: list[SampleRecord]) -> dict[str, float]:
    """Minimum measured mean run time over each pipeline's schedules."""
    best: dict[str, float] = {}
    for r in records:
        y = r.mean_runtime
        if y < best.get(r.pipeline_id, np.inf):
            best[r.pipeline_id] = y
    return best


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(tuple(parts)).generate_state(1)[0])


@dataclass(frozen=True)
class GenerationSummary:
    path: str
    num_pipelines: int
    num_samples: int
    num_train: int
    num_eval: int
    sha256: str


def generate_dataset(
    out_path: str,
    num_pipelines: int,
    schedules_per_pipeline: int,
    seed: int,
    generator: GeneratorConfig = GeneratorConfig(),
    oracle: OracleConfig = OracleConfig(),
    noise: NoiseConfig = NoiseConfig(),
    eval_fraction: float = 0.1,
) -> GenerationSummary:
    """Generate pipelines, schedules, features, and measurements; write the file.

    Pipeline i draws candidate seeds from its own block
    ``[seed + i*max_attempts, seed + (i+1)*max_attempts)`` so workers could
    generate pipelines independently and still reproduce this exact file.
    """
    generator.validate()
    if num_pipelines < 1 or schedules_per_pipeline < 1:
        raise DataFormatError("need at least one pipeline and one schedule per pipeline")

    rng_split = np.random.default_rng(_derived_seed(seed, _SPLIT_TAG))
    n_eval = max(1, round(eval_fraction * num_pipelines)) if num_pipelines > 1 else 0
    eval_ids = set(rng_split.permutation(num_pipelines)[:n_eval].tolist())

    records: list[SampleRecord] = []
    for i in range(num_pipelines):
        pipeline = sample_pipeline(generator, seed + i * generator.max_attempts)
        pipeline_id = f"p{pipeline.seed:010d}"
        split_tag = "eval" if i in eval_ids else "train"
        invariant = featurize_pipeline(pipeline)
        schedules = enumerate_schedules(
            pipeline, schedules_per_pipeline, _derived_seed(seed, _SCHEDULE_TAG, i)
        )
        for j, decision in enumerate(schedules):
            measurements = oracle_runtime(
                pipeline, decision, noise, _derived_seed(seed, _MEASURE_TAG, i, j), oracle
            )
            rec = SampleRecord(
                pipeline_id=pipeline_id,
                schedule_id=f"{pipeline_id}/s{j:04d}",
                graph=pipeline.graph,
                invariant=invariant,
                dependent=featurize_schedule(pipeline, decision, oracle),
                measurements=np.asarray(measurements),
                split_tag=split_tag,
            )
            rec.validate()
            records.append(rec)

    header = DatasetHeader(
        format_version=FORMAT_VERSION,
        feature_widths=(INVARIANT_WIDTH, DEPENDENT_WIDTH),
        n_measurements=noise.n_measurements,
        generator_config_hash=config_hash(generator, oracle, noise),
    )
    write_dataset(out_path, header, records)
    n_eval_samples = sum(1 for r in records if r.split_tag == "eval")
    return GenerationSummary(
        path=out_path,
        num_pipelines=num_pipelines,
        num_samples=len(records),
        num_train=len(records) - n_eval_samples,
        num_eval=n_eval_samples,
        sha256=sha256_file(out_path),
    )
