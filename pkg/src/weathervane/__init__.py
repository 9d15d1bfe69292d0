"""Reputation-weighted governance for community-trained weather forecasters.

The package is organized around five cooperating pieces:

* :mod:`weathervane.ledger` — deterministic voting/promotion state machine.
* :mod:`weathervane.cas` — content-addressed, tamper-evident blob store.
* :mod:`weathervane.forecast` — preprocessing, baseline forecasters, metrics,
  and the canonical model byte codec.
* :mod:`weathervane.sim` — seeded adversarial scenario engine.
* :mod:`weathervane.node` — HTTP/JSON service with RBAC, rate limiting, and
  audit logging.
"""

__version__ = "0.1.0"

from .cas import BlobStore, Cid, verify
from .errors import WeathervaneError
from .forecast import (
    Dataset,
    ForecastModel,
    MetricReport,
    PreprocessStats,
    classification_metrics,
    decode_model,
    encode_model,
    fit_forecaster,
    fit_preprocessor,
    apply_preprocessor,
    impute_missing,
    predict,
    read_csv,
    regression_metrics,
    skill_score,
    temporal_split,
    write_csv,
)
from .ledger import (
    Account,
    Event,
    LedgerParams,
    LedgerState,
    ModelRecord,
    ModelStatus,
    Role,
    Vote,
    account_id,
    add_admin,
    add_client,
    apply,
    cast_score,
    consensus_digest,
    decode_state,
    encode_state,
    events_jsonl,
    genesis,
    state_digest,
    submit_model,
    weighted_final_score,
)
from .sim import (
    Colluder,
    FrontRunner,
    Poisoner,
    ScenarioConfig,
    SimulationReport,
    SybilSwarm,
    generate_weather,
    load_scenario,
    partition,
    run_scenario,
)

__all__ = [name for name in dir() if not name.startswith("_")]
