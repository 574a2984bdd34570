"""End-to-end experiments: features needed per EER target (exp1), EER
stability across subject counts on band data (exp2) and the PCA pipeline
on a two-session corpus (exp3)."""

from eerscale.experiments.config import Exp1Config, Exp2Config, Exp3Config, load_config
from eerscale.experiments.exp1 import Exp1Result, run_exp1
from eerscale.experiments.exp2 import Exp2Result, match_se_replications, run_exp2
from eerscale.experiments.exp3 import Exp3Result, run_exp3
from eerscale.experiments.runner import RunRecord
from eerscale.experiments.standin import StandinCorpus, StandinSpec

__all__ = [
    "Exp1Config",
    "Exp2Config",
    "Exp3Config",
    "load_config",
    "Exp1Result",
    "Exp2Result",
    "Exp3Result",
    "run_exp1",
    "run_exp2",
    "run_exp3",
    "match_se_replications",
    "RunRecord",
    "StandinCorpus",
    "StandinSpec",
]
