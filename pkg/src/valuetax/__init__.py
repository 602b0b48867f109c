"""Toolkit for measuring the system-level cost of value alignment.

From paired pre/post Likert judgments over scenario-action-value triples,
compute the on-target gain, gain-normalized collateral shifts, the
value-value coupling matrix, per-value and system-level alignment tax,
tax centralization, and a robustness suite — with a synthetic-data oracle
and a pluggable model-elicitation client.
"""

__version__ = "0.1.0"

from .taxonomy import (
    MicroValue,
    Taxonomy,
    Value,
    circumplex_order,
    default_taxonomy,
    load_taxonomy,
    micro_values_of,
)
from .dataset import (
    JudgmentRecord,
    PairedTable,
    RunManifest,
    RunTable,
    ingest_run,
    pair_runs,
    split_scenarios,
)
from .evidence import (
    EVIDENCE_GRID,
    ShiftMatrix,
    build_shift_matrix,
    likert_to_evidence,
    signed_evidence,
    value_score,
)
from .metrics import (
    CouplingMatrix,
    TaxReport,
    amplification_report,
    centralization,
    compute_tax_report,
    coupling_matrix,
    gain,
    gain_normalized_deviation,
    identify_hubs,
    spearman,
    system_tax,
    tax_profile,
    value_tax,
)
from .robustness import (
    bootstrap_nvat,
    cross_granularity,
    kendall,
    rank_agreement,
)
from .synthetic import PlantedSpec, generate
from .elicitation import (
    EndpointConfig,
    SteeringSpec,
    build_probe,
    parse_likert,
    run_elicitation,
)

__all__ = [
    "__version__",
    "MicroValue", "Taxonomy", "Value", "circumplex_order", "default_taxonomy",
    "load_taxonomy", "micro_values_of",
    "JudgmentRecord", "PairedTable", "RunManifest", "RunTable",
    "ingest_run", "pair_runs", "split_scenarios",
    "EVIDENCE_GRID", "ShiftMatrix", "build_shift_matrix",
    "likert_to_evidence", "signed_evidence", "value_score",
    "CouplingMatrix", "TaxReport", "amplification_report", "centralization",
    "compute_tax_report", "coupling_matrix", "gain", "gain_normalized_deviation",
    "identify_hubs", "spearman", "system_tax", "tax_profile", "value_tax",
    "bootstrap_nvat", "cross_granularity", "kendall", "rank_agreement",
    "PlantedSpec", "generate",
    "EndpointConfig", "SteeringSpec", "build_probe", "parse_likert", "run_elicitation",
]
