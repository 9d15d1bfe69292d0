"""Seeded adversarial scenario engine.

A scenario builds a small governance world — one deploying owner, one
bootstrap admin who holds the most recent data shard and votes, a set of
honest clients, and the configured adversaries — then runs submit/vote rounds
against the ledger through the real content-addressed store and model codec.

Everything is a pure function of the scenario config (seed included): weather
generation, shard assignment, the round-robin submitter schedule, vote order,
and the adversary perturbations all draw from named deterministic streams, so
two runs of one config produce byte-identical reports.

Adversary behaviours:

* ``poisoner`` — fits honestly, then injects Gaussian noise into the fitted
  parameters before publishing (parameter noise only bites forecasters whose
  parameters drive prediction, i.e. the autoregressive kind).
* ``sybil_swarm`` — registers many fresh zero-reputation identities that all
  try to cast a fixed score every round.
* ``front_runner`` — submits honestly but reorders its own (maximal) vote to
  the front of every round's vote sequence.
* ``colluder`` — a coalition of clients that casts a fixed score on any
  coalition member's model and abstains otherwise.
"""

from __future__ import annotations

import json
import math
import sys
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import forecast, ledger
from .cas import BlobStore
from .errors import InvalidConfig, SeriesTooShort, TooFewRows, WeathervaneError
from .forecast import Dataset
from .ledger import LedgerParams, LedgerState

MIN_SHARD_ROWS = 48
SUMMARY_LABELS = ("clear", "cloudy", "rain", "snow")


# --- synthetic weather --------------------------------------------------------

def generate_weather(seed: int, n: int, *, base: float = 12.0, trend: float = 0.0005,
                     daily_amplitude: float = 6.0, seasonal_amplitude: float = 1.5,
                     seasonal_period: float = 720.0,
                     noise_scale: float = 0.8) -> Dataset:
    """Hourly synthetic weather, deterministic per seed.

    Temperature is trend + a 24 h sinusoid + a slow seasonal sinusoid + seeded
    Gaussian noise; the other features derive from it with per-feature noise
    (all noise amplitudes scale with ``noise_scale``, so 0 gives the exact
    sinusoid). The categorical summary thresholds temperature and humidity.
    """
    if n < MIN_SHARD_ROWS:
        raise SeriesTooShort(f"need at least {MIN_SHARD_ROWS} hours, got {n}")
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=np.float64)
    daily = daily_amplitude * np.sin(2 * np.pi * t / 24.0 + 0.3)
    seasonal = seasonal_amplitude * np.sin(2 * np.pi * t / seasonal_period + 1.1)
    temperature = (base + trend * t + daily + seasonal
                   + rng.normal(0.0, noise_scale, n))
    humidity = np.clip(0.62 - 0.018 * (temperature - base)
                       + 0.08 * np.sin(2 * np.pi * t / 24.0 + 2.0)
                       + rng.normal(0.0, 0.04 * noise_scale, n), 0.05, 1.0)
    wind = np.clip(11.0 + 4.0 * np.sin(2 * np.pi * t / 24.0 + 4.2)
                   + rng.normal(0.0, 2.0 * noise_scale, n), 0.0, None)
    visibility = np.clip(16.0 - 9.0 * humidity
                         + rng.normal(0.0, 1.0 * noise_scale, n), 0.1, None)
    pressure = (1013.0 + 7.0 * np.sin(2 * np.pi * t / seasonal_period + 0.7)
                + rng.normal(0.0, 1.5 * noise_scale, n))

    summary = np.empty(n, dtype=object)
    for i in range(n):
        if humidity[i] > 0.80:
            summary[i] = "snow" if temperature[i] < 0.0 else "rain"
        elif humidity[i] > 0.68:
            summary[i] = "cloudy"
        else:
            summary[i] = "clear"

    start = np.datetime64("2020-01-01T00:00:00", "s")
    return Dataset(
        timestamps=start + (t.astype(np.int64) * np.timedelta64(3600, "s")),
        numeric=np.column_stack([temperature, humidity, wind, visibility, pressure]),
        categorical={"Summary": summary},
    )


def partition(data: Dataset, k: int, holdout_fraction: float) -> tuple[list[Dataset], Dataset]:
    """Final ``holdout_fraction`` of rows as a global holdout; the rest split
    into ``k`` contiguous blocks in time order (earlier shards may be one row
    longer when the split is uneven)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError("holdout_fraction must lie strictly between 0 and 1")
    n = data.n_rows
    holdout_rows = int(math.floor(n * holdout_fraction))
    m = n - holdout_rows
    if holdout_rows < 1 or m // k < MIN_SHARD_ROWS:
        raise TooFewRows(f"{n} rows cannot yield {k} shards of >= {MIN_SHARD_ROWS} rows "
                         f"plus a holdout tail")
    shards = []
    base, extra = divmod(m, k)
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        shards.append(data.slice(start, start + size))
        start += size
    return shards, data.slice(m, n)


# --- scenario configuration -----------------------------------------------------

@dataclass(frozen=True)
class Poisoner:
    noise_scale: float

    def to_dict(self) -> dict:
        return {"type": "poisoner", "noise_scale": self.noise_scale}


@dataclass(frozen=True)
class SybilSwarm:
    identity_count: int
    target_score_bp: int

    def to_dict(self) -> dict:
        return {"type": "sybil_swarm", "identity_count": self.identity_count,
                "target_score_bp": self.target_score_bp}


@dataclass(frozen=True)
class FrontRunner:
    def to_dict(self) -> dict:
        return {"type": "front_runner"}


@dataclass(frozen=True)
class Colluder:
    partner_count: int
    target_score_bp: int

    def to_dict(self) -> dict:
        return {"type": "colluder", "partner_count": self.partner_count,
                "target_score_bp": self.target_score_bp}


AdversarySpec = Poisoner | SybilSwarm | FrontRunner | Colluder

_ADVERSARY_TYPES = {"poisoner", "sybil_swarm", "front_runner", "colluder"}

SIM_FORECASTER_KINDS = ("naive_last", "seasonal_naive", "ar")


@dataclass
class ScenarioConfig:
    seed: int
    num_honest_clients: int
    rounds: int
    series_length: int
    holdout_fraction: float = 0.2
    forecaster_kind: str = "ar"
    forecaster_order: int = 6
    forecaster_period: int = 24
    ledger: LedgerParams = field(default_factory=LedgerParams)
    adversaries: list[AdversarySpec] = field(default_factory=list)

    def validate(self) -> None:
        if self.seed < 0:
            raise InvalidConfig("seed must be non-negative")
        if self.num_honest_clients < 1:
            raise InvalidConfig("need at least one honest client")
        if self.rounds < 1:
            raise InvalidConfig("need at least one round")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise InvalidConfig("holdout_fraction must lie strictly between 0 and 1")
        if self.forecaster_kind not in SIM_FORECASTER_KINDS:
            raise InvalidConfig(
                f"scenario forecaster must be one of {SIM_FORECASTER_KINDS}; "
                f"the classifier is exercised outside round-based scenarios")
        if self.forecaster_order < 1 or self.forecaster_period < 1:
            raise InvalidConfig("forecaster order and period must be positive")
        for adv in self.adversaries:
            if isinstance(adv, Poisoner) and not adv.noise_scale > 0:
                raise InvalidConfig("poisoner noise_scale must be positive")
            if isinstance(adv, SybilSwarm):
                if adv.identity_count < 1:
                    raise InvalidConfig("sybil identity_count must be at least 1")
                if not 0 <= adv.target_score_bp <= ledger.SCORE_SCALE_BP:
                    raise InvalidConfig("sybil target score out of range")
            if isinstance(adv, Colluder):
                if adv.partner_count < 1:
                    raise InvalidConfig("colluder partner_count must be at least 1")
                if not 0 <= adv.target_score_bp <= ledger.SCORE_SCALE_BP:
                    raise InvalidConfig("colluder target score out of range")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "num_honest_clients": self.num_honest_clients,
            "rounds": self.rounds,
            "series_length": self.series_length,
            "holdout_fraction": self.holdout_fraction,
            "forecaster_kind": self.forecaster_kind,
            "forecaster_order": self.forecaster_order,
            "forecaster_period": self.forecaster_period,
            "ledger": {k: getattr(self.ledger, k) for k in (
                "vote_eligibility_min", "quorum_reputation", "reject_threshold_bp",
                "promotion_bonus", "participation_bonus", "rejection_penalty",
                "admin_initial_reputation")},
            "adversaries": [adv.to_dict() for adv in self.adversaries],
        }


def _adversary_from_dict(entry: dict) -> AdversarySpec:
    kind = entry.get("type")
    if kind not in _ADVERSARY_TYPES:
        raise InvalidConfig(f"unknown adversary type {kind!r}")
    fields_ = {k: v for k, v in entry.items() if k != "type"}
    try:
        if kind == "poisoner":
            return Poisoner(**fields_)
        if kind == "sybil_swarm":
            return SybilSwarm(**fields_)
        if kind == "front_runner":
            return FrontRunner(**fields_)
        return Colluder(**fields_)
    except TypeError as exc:
        raise InvalidConfig(f"bad fields for adversary {kind!r}: {exc}") from exc


def config_from_dict(raw: dict) -> ScenarioConfig:
    raw = dict(raw)
    ledger_overrides = raw.pop("ledger", {})
    adversaries = [_adversary_from_dict(e) for e in raw.pop("adversaries", [])]
    known = {"seed", "num_honest_clients", "rounds", "series_length",
             "holdout_fraction", "forecaster_kind", "forecaster_order",
             "forecaster_period"}
    unknown = set(raw) - known
    if unknown:
        raise InvalidConfig(f"unknown scenario fields: {sorted(unknown)}")
    try:
        params = LedgerParams(**ledger_overrides)
    except TypeError as exc:
        raise InvalidConfig(f"bad ledger overrides: {exc}") from exc
    try:
        config = ScenarioConfig(ledger=params, adversaries=adversaries, **raw)
    except TypeError as exc:
        raise InvalidConfig(f"bad scenario fields: {exc}") from exc
    config.validate()
    return config


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Parse a scenario TOML file."""
    with open(path, "rb") as handle:
        try:
            raw = tomllib.load(handle)
        except tomllib.TOMLDecodeError as exc:
            raise InvalidConfig(f"cannot parse scenario file: {exc}") from exc
    return config_from_dict(raw)


# --- world -----------------------------------------------------------------------

@dataclass
class Participant:
    label: str
    account: str
    behaviour: str            # "honest" | "poisoner" | "front_runner" | "colluder" | "sybil"
    adversary_index: int | None = None
    spec: AdversarySpec | None = None
    shard: Dataset | None = None
    train_region: Dataset | None = None
    eval_start: int | None = None      # row where the local holdout begins
    eval_target: np.ndarray | None = None
    reference_mae: float | None = None


@dataclass
class WorldState:
    config: ScenarioConfig
    ledger: LedgerState
    store: BlobStore
    full_data: Dataset
    global_start: int
    global_target: np.ndarray
    admins: list[Participant]
    submitters: list[Participant]      # round-robin rotation, registration order
    voters_natural: list[Participant]  # natural vote order (admins first)
    sybils: list[Participant]
    attack_rng: np.random.Generator
    round_index: int = 0
    labels: dict[str, str] = field(default_factory=dict)  # account -> label


EVAL_BLOCK = 12  # rolling-origin forecast block length, in hours


def _rolling_mae(predict_block, base: Dataset, start: int, target: np.ndarray,
                 tail: int) -> float:
    """Rolling-origin evaluation: forecast the holdout in blocks of
    ``EVAL_BLOCK`` steps, re-anchoring each block on the true values that
    precede it; returns the MAE pooled over all blocks.

    ``predict_block(context, horizon)`` produces one block; ``base`` holds the
    true series, with the holdout starting at row ``start``.
    """
    errors = []
    horizon = len(target)
    with np.errstate(over="ignore", invalid="ignore"):
        for r in range(0, horizon, EVAL_BLOCK):
            b = min(EVAL_BLOCK, horizon - r)
            context = base.slice(max(0, start + r - tail), start + r)
            predicted = np.asarray(predict_block(context, b), dtype=np.float64)
            errors.append(np.abs(predicted - target[r:r + b]))
        return float(np.concatenate(errors).mean())


def _context_tail(config: ScenarioConfig) -> int:
    return max(config.forecaster_order, config.forecaster_period, 8)


def _prepare_evaluation(part: Participant, config: ScenarioConfig) -> None:
    rows = part.shard.n_rows
    holdout = max(1, rows // 4)
    part.train_region = part.shard.slice(0, rows - holdout)
    part.eval_start = rows - holdout
    part.eval_target = part.shard.target_values()[rows - holdout:]
    part.reference_mae = _rolling_mae(
        lambda ctx, b: np.full(b, ctx.target_values()[-1]),
        part.shard, part.eval_start, part.eval_target, _context_tail(config))


def build_world(config: ScenarioConfig, store_root: str | Path) -> WorldState:
    """Generate data, register every identity, and assign shards.

    The founding admin committee is the smallest set of admins whose combined
    initial reputation meets the quorum, so finalization can happen before any
    client has earned reputation; with default parameters that is one admin.
    """
    owner = ledger.account_id("owner")
    state = ledger.genesis(owner, config.ledger)
    params = state.params
    num_admins = max(1, math.ceil(params.quorum_reputation
                                  / max(1, params.admin_initial_reputation)))
    admins = [Participant(f"admin-{i}", ledger.account_id(f"admin-{i}"), "honest")
              for i in range(num_admins)]
    for admin in admins:
        ledger.add_admin(state, owner, admin.account)

    submitters: list[Participant] = []
    sybils: list[Participant] = []
    for i in range(config.num_honest_clients):
        label = f"client-{i:02d}"
        submitters.append(Participant(label, ledger.account_id(label), "honest"))
    for j, adv in enumerate(config.adversaries):
        if isinstance(adv, Poisoner):
            label = f"poisoner-{j}"
            submitters.append(Participant(label, ledger.account_id(label),
                                          "poisoner", j, adv))
        elif isinstance(adv, FrontRunner):
            label = f"front-runner-{j}"
            submitters.append(Participant(label, ledger.account_id(label),
                                          "front_runner", j, adv))
        elif isinstance(adv, Colluder):
            for p in range(adv.partner_count):
                label = f"colluder-{j}-{p}"
                submitters.append(Participant(label, ledger.account_id(label),
                                              "colluder", j, adv))
        else:  # SybilSwarm: vote-only identities, never in the submit rotation
            for s in range(adv.identity_count):
                label = f"sybil-{j}-{s:03d}"
                sybils.append(Participant(label, ledger.account_id(label),
                                          "sybil", j, adv))
    for part in submitters + sybils:
        ledger.add_client(state, owner, part.account)

    data = generate_weather(config.seed, config.series_length)
    shards, holdout = partition(data, len(submitters) + len(admins),
                                config.holdout_fraction)
    for part, shard in zip(submitters, shards):
        part.shard = shard
        _prepare_evaluation(part, config)
    # admins hold the most recent shards, closest to the global holdout
    for admin, shard in zip(admins, shards[len(submitters):]):
        admin.shard = shard
        _prepare_evaluation(admin, config)

    world = WorldState(
        config=config,
        ledger=state,
        store=BlobStore(store_root),
        full_data=data,
        global_start=data.n_rows - holdout.n_rows,
        global_target=holdout.target_values(),
        admins=admins,
        submitters=submitters,
        voters_natural=admins + submitters,
        sybils=sybils,
        attack_rng=np.random.default_rng([config.seed, 1]),
    )
    world.labels = {p.account: p.label for p in admins + submitters + sybils}
    world.labels[owner] = "owner"
    return world


# --- rounds -----------------------------------------------------------------------

def _fit_round_model(world: WorldState, part: Participant) -> forecast.ForecastModel:
    """Fit on a training window that grows round over round, mimicking
    retraining as fresh observations arrive."""
    config = world.config
    context_rows = part.train_region.n_rows
    grow = 0.3 + 0.7 * (world.round_index + 1) / config.rounds
    window = min(context_rows, max(1, math.ceil(context_rows * grow)))
    train = part.train_region.slice(0, window)
    model = forecast.fit_forecaster(
        config.forecaster_kind, train,
        order=config.forecaster_order, period=config.forecaster_period)
    if part.behaviour == "poisoner":
        noise = part.spec.noise_scale
        rng = world.attack_rng
        if model.kind == "naive_last":
            model.last_value += float(rng.normal(0.0, noise))
        elif model.kind == "seasonal_naive":
            model.season = model.season + rng.normal(0.0, noise, len(model.season))
        else:
            model.coefficients = model.coefficients + rng.normal(0.0, noise, model.order)
            model.intercept += float(rng.normal(0.0, noise))
    return model


def _honest_score(part: Participant, model: forecast.ForecastModel,
                  config: ScenarioConfig) -> int:
    """Rolling-origin skill of the candidate against the naive baseline on
    this participant's local holdout."""
    mae = _rolling_mae(lambda ctx, b: forecast.predict(model, ctx, b),
                       part.shard, part.eval_start, part.eval_target,
                       _context_tail(config))
    return forecast.skill_score(forecast.MetricReport(mae=mae),
                                forecast.MetricReport(mae=part.reference_mae),
                                "regression")


@dataclass
class _PlannedVote:
    participant: Participant
    score: int
    reputation: int
    eligible: bool
    front_runs: bool


def _plan_votes(world: WorldState, submitter: Participant,
                model: forecast.ForecastModel) -> list[_PlannedVote]:
    """Vote intentions in natural order (admin, then registration order),
    with reputations snapshotted before any vote is cast."""
    state = world.ledger
    min_rep = state.params.vote_eligibility_min
    planned = []
    for part in world.voters_natural:
        if part.account == submitter.account:
            continue
        rep = state.accounts[part.account].reputation
        if part.behaviour == "honest":
            score = _honest_score(part, model, world.config)
        elif part.behaviour == "front_runner":
            score = ledger.SCORE_SCALE_BP
        elif part.behaviour == "colluder":
            if (submitter.behaviour != "colluder"
                    or submitter.adversary_index != part.adversary_index):
                continue  # fixed-score collusion only on coalition models
            score = part.spec.target_score_bp
        else:  # poisoner: submits attacks, does not vote
            continue
        planned.append(_PlannedVote(part, score, rep, rep >= min_rep,
                                    part.behaviour == "front_runner"))
    for part in world.sybils:
        rep = state.accounts[part.account].reputation
        planned.append(_PlannedVote(part, part.spec.target_score_bp, rep,
                                    rep >= min_rep, False))
    return planned


def _finalize_in_order(votes: list[_PlannedVote], quorum: int) -> tuple[int | None, int]:
    """What the cutoff rule yields for eligible votes arriving in this order:
    (final score, counted reputation), or (None, 0) if quorum is never met."""
    counted: list[tuple[int, int]] = []
    total = 0
    for vote in votes:
        if not vote.eligible:
            continue
        counted.append((vote.reputation, vote.score))
        total += vote.reputation
        if total >= quorum:
            return ledger.weighted_final_score(counted), total
    return None, 0


def run_round(world: WorldState) -> dict:
    """One submit/vote round; returns the round record and advances the world."""
    config = world.config
    submitter = world.submitters[world.round_index % len(world.submitters)]
    record: dict = {
        "round": world.round_index,
        "submitter": submitter.label,
        "model_id": None,
        "cid": None,
        "status": None,
        "final_score_bp": None,
        "promoted": False,
        "primary_holdout_mae": None,
        "error": None,
        "reorder_delta_bp": None,
        "reorder_attacker_rep": None,
        "reorder_counted_reputation": None,
    }
    try:
        model = _fit_round_model(world, submitter)
        blob = forecast.encode_model(model)
        cid = world.store.put(blob)
        model_id, _ = ledger.submit_model(world.ledger, submitter.account, cid,
                                          model.model_kind)
        record["model_id"] = model_id
        record["cid"] = cid.text

        shared_model = forecast.decode_model(world.store.get(cid))
        planned = _plan_votes(world, submitter, shared_model)
        actual_order = ([v for v in planned if v.front_runs]
                        + [v for v in planned if not v.front_runs])

        finalized = False
        for vote in actual_order:
            adversarial = vote.participant.behaviour in ("front_runner", "colluder",
                                                         "sybil")
            if not adversarial and (finalized or not vote.eligible):
                continue  # honest agents check eligibility and stop on finalization
            events = ledger.apply(world.ledger,
                                  ledger.CastScore(vote.participant.account,
                                                   model_id, vote.score))
            if any(e.kind == "model_finalized" for e in events):
                finalized = True

        rec = world.ledger.models[model_id]
        record["status"] = rec.status.value
        record["final_score_bp"] = rec.final_score_bp
        record["promoted"] = rec.status is ledger.ModelStatus.PRIMARY

        front = [v for v in planned if v.front_runs and v.eligible]
        if front:
            quorum = world.ledger.params.quorum_reputation
            natural_final, _ = _finalize_in_order(planned, quorum)
            actual_final, actual_total = _finalize_in_order(actual_order, quorum)
            if natural_final is not None and actual_final is not None:
                counted_front = 0
                running = 0
                for vote in actual_order:
                    if not vote.eligible:
                        continue
                    if vote.front_runs:
                        counted_front += vote.reputation
                    running += vote.reputation
                    if running >= quorum:
                        break
                record["reorder_delta_bp"] = abs(actual_final - natural_final)
                record["reorder_attacker_rep"] = counted_front
                record["reorder_counted_reputation"] = actual_total
    except WeathervaneError as exc:
        record["error"] = f"{exc.code}: {exc}"

    primary = world.ledger.primary_record("regression")
    if primary is not None:
        model = forecast.decode_model(world.store.get(primary.cid))
        record["primary_holdout_mae"] = _rolling_mae(
            lambda ctx, b: forecast.predict(model, ctx, b),
            world.full_data, world.global_start, world.global_target,
            _context_tail(config))
    world.round_index += 1
    return record


# --- scenario ----------------------------------------------------------------------

@dataclass
class SimulationReport:
    seed: int
    config: dict
    rounds: list[dict]
    poisoned_promotions: int
    sybil_digest_delta: bool | None
    reordering_score_delta_bp: int
    final_reputations: dict[str, int]
    consensus_digest: str
    state_digest: str

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config": self.config,
            "rounds": self.rounds,
            "attack_outcomes": {
                "poisoned_promotions": self.poisoned_promotions,
                "sybil_digest_delta": self.sybil_digest_delta,
                "reordering_score_delta_bp": self.reordering_score_delta_bp,
            },
            "final_reputations": self.final_reputations,
            "consensus_digest": self.consensus_digest,
            "state_digest": self.state_digest,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict()) + "\n"


def canonical_json(value) -> str:
    """Deterministic JSON: sorted keys, fixed 9-significant-digit floats,
    non-finite floats rendered as null."""
    if isinstance(value, dict):
        items = sorted(value.items())
        body = ",".join(f"{canonical_json(str(k))}:{canonical_json(v)}" for k, v in items)
        return "{" + body + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(canonical_json(v) for v in value) + "]"
    if isinstance(value, bool) or value is None:
        return {True: "true", False: "false", None: "null"}[value]
    if isinstance(value, float):
        if not math.isfinite(value):
            return "null"
        return format(value, ".9g")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return json.dumps(value)
    raise TypeError(f"cannot canonicalize {type(value).__name__}")


def execute_scenario(config: ScenarioConfig) -> tuple[WorldState, list[dict]]:
    """Run every round against a throwaway blob store; returns the final
    world (ledger still in memory) and the per-round records."""
    with tempfile.TemporaryDirectory(prefix="weathervane-store-") as root:
        world = build_world(config, root)
        records = [run_round(world) for _ in range(config.rounds)]
    return world, records


def run_scenario(config: ScenarioConfig) -> SimulationReport:
    """Run a full scenario and assemble its deterministic report.

    When a sybil swarm is configured, a twin run without the swarm is executed
    and ``sybil_digest_delta`` records whether the consensus digests differ
    (they must not if the eligibility gate holds).
    """
    config.validate()
    world, records = execute_scenario(config)

    poisoner_accounts = {p.account for p in world.submitters if p.behaviour == "poisoner"}
    poisoned_promotions = sum(
        1 for r in records
        if r["promoted"] and r["model_id"] is not None
        and world.ledger.models[r["model_id"]].submitter in poisoner_accounts)

    sybil_digest_delta = None
    if any(isinstance(a, SybilSwarm) for a in config.adversaries):
        twin = replace(config, adversaries=[a for a in config.adversaries
                                            if not isinstance(a, SybilSwarm)])
        twin_world, _ = execute_scenario(twin)
        sybil_digest_delta = (ledger.consensus_digest(world.ledger)
                              != ledger.consensus_digest(twin_world.ledger))

    reorder = max((r["reorder_delta_bp"] or 0) for r in records) if records else 0

    reputations = {world.labels[acct]: account.reputation
                   for acct, account in world.ledger.accounts.items()}

    return SimulationReport(
        seed=config.seed,
        config=config.to_dict(),
        rounds=records,
        poisoned_promotions=poisoned_promotions,
        sybil_digest_delta=sybil_digest_delta,
        reordering_score_delta_bp=reorder,
        final_reputations=reputations,
        consensus_digest=ledger.consensus_digest(world.ledger).hex(),
        state_digest=ledger.state_digest(world.ledger).hex(),
    )
