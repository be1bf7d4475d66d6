"""Turn network-to-catchment observations into routing insight.

The pipeline: ingest observation files into snapshots, clean them, weight
the networks, compare all snapshot pairs, cluster the comparisons into
recurring routing modes, score detected changes against operator ground
truth, and render reports.
"""

from .core import (
    ERROR,
    OTHER,
    UNKNOWN,
    AggregateVector,
    CatchmentLabel,
    GroundTruthEvent,
    LatencySample,
    ModeAssignment,
    SimilarityMatrix,
    Snapshot,
    TransitionMatrix,
    Visibility,
    WeightVector,
    parse_label,
    site,
)
from .ingest import (
    NsidRule,
    SnapshotFormat,
    TracerouteRecord,
    extract_hop_catchment,
    load_nsid_rules,
    load_snapshots,
    map_nsid,
    parse_traceroutes,
)
from .ednscs import edns_cs_lookup, edns_cs_scan
from .prep import (
    GapInterpolator,
    IncorrectDataFilter,
    MicroCatchmentFilter,
    drop_micro_catchments,
    expand_prefix_weights,
    interpolate_missing,
    load_traffic_weights,
    remove_incorrect,
)
from .analysis import (
    ChangeDetector,
    ModeClusterer,
    adaptive_threshold,
    detect_changes,
    hac_cluster,
    mode_phi_range,
    similarity,
    similarity_matrix,
)
from .quantify import (
    aggregate,
    load_latency_samples,
    per_catchment_percentile,
    transition_matrix,
    weighted_mean_latency,
)
from .evaluation import (
    ConfusionReport,
    DrainSpec,
    EventGroup,
    ScenarioSpec,
    SegmentSpec,
    generate_scenario,
    group_events,
    load_ground_truth,
    score_detections,
)
from .report import (
    export_sankey,
    export_similarity_csv,
    render_heatmap,
    render_stackplot,
    render_transition_table,
    write_snapshots,
)

__version__ = "0.1.0"
