from .datasets import Dataset, KINDS, gen_dataset
from .figures import emit_figures
from .evaluate import eval_w2, subsampled_cost
from .ot import SinkhornNotConverged, TransportPlan, wasserstein2_exact, wasserstein2_sinkhorn

__all__ = [
    "Dataset", "KINDS", "SinkhornNotConverged", "TransportPlan", "emit_figures", "eval_w2", "gen_dataset",
    "subsampled_cost", "wasserstein2_exact", "wasserstein2_sinkhorn",
]
