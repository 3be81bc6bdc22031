"""erflow: a single-node, extensible end-to-end entity resolution framework."""
from .core import (
    ClusterPartition,
    ComparisonSpace,
    EntityProfile,
    EntityReference,
    GroundTruth,
    InformationRecord,
    Label,
    MatchEdge,
    Representation,
    SourceDescriptor,
    SourceKind,
    make_reference_id,
)
from .config import RuntimeConfig, config_from_dict, load_config
from .pipeline import IncrementalResolver, run_batch

__version__ = "0.1.0"
