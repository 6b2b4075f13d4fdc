"""Model-free core of coarse-grained temporal video grounding."""

from groundkit.engine import (
    FramePlan,
    GroundingTrace,
    Representation,
    frame_plan,
    parse_answer,
    random_baseline,
    recursive_ground,
    render_answer,
    upperbound,
    upperbound_batch,
    window_update,
)
from groundkit.spans import (
    Category,
    GroundingRecord,
    MetricsReport,
    TimeSpan,
    aggregate_metrics,
    categorize,
    iou,
)

__version__ = "0.1.0"
