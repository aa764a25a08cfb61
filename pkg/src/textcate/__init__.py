"""Text-conditioned CATE estimation with confounders observed only at training time."""

__version__ = "0.1.0"

from .data import Dataset, TestRecord, TextSurrogate, TrainRecord, read_jsonl, write_jsonl
from .dgp import DgpParams, conditional_cate, generate, sigmoid, true_cate
from .encoder import HashingEncoder, encode
from .evaluation import lemma1_bias, lemma2_oracle, pehe, subgroup_table
from .learners import LearnerConfig, tbe_fit, tbe_predict, tca_fit, tca_predict
from .pseudo import dr_pseudo, pw_pseudo, ra_pseudo
from .surrogate import SurrogateConfig, render, render_batch

__all__ = [
    "Dataset", "DgpParams", "HashingEncoder", "LearnerConfig", "SurrogateConfig",
    "TestRecord", "TextSurrogate", "TrainRecord", "conditional_cate", "dr_pseudo", "encode",
    "generate", "lemma1_bias", "lemma2_oracle", "pehe", "pw_pseudo", "ra_pseudo",
    "read_jsonl", "render", "render_batch", "sigmoid", "subgroup_table", "tbe_fit",
    "tbe_predict", "tca_fit", "tca_predict", "true_cate", "write_jsonl",
]
