"""Template rendering of covariate vectors into clinical-style text.

Each covariate coordinate plays a clinical role (heart rate, glucose, ...).
A coordinate is verbalized with probability ``leak_probability``; otherwise
the text carries a placeholder that says nothing about its value. Within a
prompt family every phrase has the same token count, so the number of
tokens in a rendered text depends only on ``d_x``.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass

import numpy as np

from .data import PROMPT_FAMILIES, TextSurrogate
from .rng import stream

BIN_EDGES = (-0.5, 0.5)
_PRONOUN_RE = re.compile(r"\bi\b")
BIN_NAMES = ("low", "mid", "high")


@dataclass(frozen=True)
class Role:
    key: str
    label: str        # two tokens, the second unique across roles (Factual)
    center: float
    scale: float
    unit: str         # one token
    noun: str         # two tokens, the first unique across roles (Narrative)
    symptoms: dict    # bin name -> two six-token phrases
    silent: str       # six-token placeholder for SymptomFocused


ROLES: tuple[Role, ...] = (
    Role("heart_rate", "heart rate", 80.0, 4.0, "bpm", "heart rate", {
        "low": ("my heartbeat feels slow and weak", "my pulse seems slow and faint"),
        "mid": ("my heartbeat feels steady and normal", "my pulse seems regular and calm"),
        "high": ("my heart is racing all day", "my heart keeps pounding really fast"),
    }, "nothing to report about my heartbeat"),
    Role("resp_rate", "respiratory frequency", 20.0, 4.0, "breaths", "breathing rate", {
        "low": ("my breathing feels slow and shallow", "i take slow and shallow breaths"),
        "mid": ("my breathing feels easy and normal", "i breathe without any real trouble"),
        "high": ("i am short of breath often", "i keep gasping for air quickly"),
    }, "nothing to report about my breathing"),
    Role("glucose", "blood glucose", 110.0, 4.0, "mgdl", "glucose level", {
        "low": ("i feel shaky and weak sometimes", "i get sweaty and lightheaded often"),
        "mid": ("my thirst and appetite feel normal", "i eat and drink as usual"),
        "high": ("i feel thirsty all the time", "i keep needing the bathroom constantly"),
    }, "nothing to report about my thirst"),
    Role("blood_pressure", "mean pressure", 90.0, 4.0, "mmhg", "blood pressure", {
        "low": ("i feel dizzy when standing up", "i get faint when i stand"),
        "mid": ("i have no dizziness or headaches", "my head feels clear and fine"),
        "high": ("i have pounding headaches every day", "my head throbs with heavy pressure"),
    }, "nothing to report about my head"),
    Role("temperature", "body temperature", 98.0, 4.0, "fahrenheit", "body temperature", {
        "low": ("i feel cold and keep shivering", "i am chilly even under blankets"),
        "mid": ("i feel neither hot nor cold", "my body temperature feels just right"),
        "high": ("i feel feverish and very hot", "i am burning up with fever"),
    }, "nothing to report about my temperature"),
    Role("hemoglobin", "hemoglobin concentration", 135.0, 4.0, "gl", "hemoglobin level", {
        "low": ("i feel pale and very tired", "i am exhausted and look pale"),
        "mid": ("my energy levels feel quite normal", "i have my usual energy levels"),
        "high": ("my face looks flushed and red", "my skin feels warm and ruddy"),
    }, "nothing to report about my energy"),
    Role("creatinine", "serum creatinine", 90.0, 4.0, "umol", "creatinine level", {
        "low": ("i pass plenty of clear urine", "my urine looks pale and plentiful"),
        "mid": ("my urine looks normal to me", "nothing unusual about my urination lately"),
        "high": ("my legs and ankles are swollen", "i notice swelling in my legs"),
    }, "nothing to report about my urine"),
    Role("sodium", "serum sodium", 140.0, 4.0, "mmol", "sodium level", {
        "low": ("i feel confused and somewhat nauseous", "i get muddled and feel queasy"),
        "mid": ("my thinking feels clear and sharp", "i can concentrate without any trouble"),
        "high": ("my mouth feels dry and sticky", "i feel restless and very thirsty"),
    }, "nothing to report about my concentration"),
    Role("oxygen", "oxygen saturation", 90.0, 4.0, "percent", "oxygen saturation", {
        "low": ("my lips look a bit blue", "i feel breathless even while resting"),
        "mid": ("i can breathe in deeply fine", "my chest feels open and clear"),
        "high": ("i feel fresh and fully alert", "i feel energetic and clear headed"),
    }, "nothing to report about my chest"),
    Role("platelets", "platelet count", 250.0, 4.0, "thousand", "platelet count", {
        "low": ("i bruise easily and gums bleed", "small cuts keep bleeding for ages"),
        "mid": ("i have no unusual bruising lately", "my cuts heal in normal time"),
        "high": ("my fingers feel numb and tingly", "i get tingling in my hands"),
    }, "nothing to report about my bruising"),
)

FACTUAL_PREAMBLES = ("patient record summary follows", "clinical record summary follows")
FACTUAL_SHOWN = "{label} {value} {unit}"
FACTUAL_HIDDEN = "{label} not recorded"

NARRATIVE_PREAMBLES = (
    "the patient presented to the clinic today for review",
    "the patient attended the clinic today for a review",
)
NARRATIVE_SHOWN = ("on examination {adj} {noun} was noted", "review showed {adj} {noun} at rest")
NARRATIVE_HIDDEN = "the {noun} was not assessed today"
NARRATIVE_ADJECTIVES = {
    "low": ("low", "reduced", "decreased"),
    "mid": ("normal", "unremarkable", "typical"),
    "high": ("elevated", "raised", "high"),
}
NARRATIVE_FILLERS = (
    "the patient was alert and answered all questions with ease",
    "no recent travel or sick contacts were reported at intake",
    "the family history was discussed briefly with the attending team",
    "current medications were reviewed and no changes were made today",
    "the patient lives independently and manages daily tasks without help",
    "diet and sleep patterns were described as fairly regular overall",
    "a follow up appointment was offered within the next month",
    "the patient expressed understanding of the plan and next steps",
    "there were no known drug allergies recorded in the chart",
    "vital signs were documented by the nursing staff on arrival",
    "the physical examination was otherwise performed in the usual manner",
    "the patient was advised to return if symptoms got worse",
)
NARRATIVE_TARGET_TOKENS = 175

SYMPTOM_PREAMBLES = ("here is how i have been feeling", "let me describe how i feel lately")


def template_bank() -> dict:
    """Every fixed string used by the renderer, as plain data."""
    return {
        "bin_edges": list(BIN_EDGES),
        "roles": [
            {
                "key": r.key, "label": r.label, "center": r.center, "scale": r.scale,
                "unit": r.unit, "noun": r.noun,
                "symptoms": {k: list(v) for k, v in r.symptoms.items()}, "silent": r.silent,
            }
            for r in ROLES
        ],
        "factual": {"preambles": list(FACTUAL_PREAMBLES), "shown": FACTUAL_SHOWN,
                    "hidden": FACTUAL_HIDDEN},
        "narrative": {"preambles": list(NARRATIVE_PREAMBLES), "shown": list(NARRATIVE_SHOWN),
                      "hidden": NARRATIVE_HIDDEN,
                      "adjectives": {k: list(v) for k, v in NARRATIVE_ADJECTIVES.items()},
                      "fillers": list(NARRATIVE_FILLERS), "target": NARRATIVE_TARGET_TOKENS},
        "symptom": {"preambles": list(SYMPTOM_PREAMBLES)},
    }


def bank_checksum() -> str:
    blob = json.dumps(template_bank(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SurrogateConfig:
    prompt_family: str = "SymptomFocused"
    leak_probability: float = 0.6
    paraphrase_seed: int = 0
    remote: object | None = None   # RemoteConfig, see textcate.remote

    def __post_init__(self):
        if self.prompt_family not in PROMPT_FAMILIES:
            raise ValueError(f"unknown prompt family {self.prompt_family!r}")
        if not 0.0 < self.leak_probability <= 1.0:
            raise ValueError("leak_probability must lie in (0, 1]")


def bin_index(v: float) -> int:
    return int(np.searchsorted(BIN_EDGES, v, side="right"))


def bin_interval(b: int) -> tuple[float, float]:
    edges = (-math.inf,) + BIN_EDGES + (math.inf,)
    return edges[b], edges[b + 1]


def clinical_value(x: float, role: Role) -> tuple[str, tuple[float, float]]:
    """Whole-unit clinical reading of ``x`` and the covariate range it implies."""
    shown = int(round(role.center + role.scale * x))
    if shown <= 0:
        # Negative readings would lose their sign in tokenization; floor at 0.
        return "0", (-math.inf, (0.5 - role.center) / role.scale)
    lo = (shown - 0.5 - role.center) / role.scale
    hi = (shown + 0.5 - role.center) / role.scale
    return str(shown), (lo, hi)


def _check_dim(d: int) -> None:
    if d > len(ROLES):
        raise ValueError(f"template bank covers at most {len(ROLES)} covariates, got {d}")


def _narrative_filler_count(d: int) -> int:
    fixed = len(NARRATIVE_PREAMBLES[0].split()) + 7 * d
    return max(0, round((NARRATIVE_TARGET_TOKENS - fixed) / 10))


def _compose(x: np.ndarray, mask: np.ndarray, family: str, prng: np.random.Generator):
    pick = lambda options: options[int(prng.integers(len(options)))]  # noqa: E731
    sentences: list[str] = []
    intervals: list[tuple[float, float] | None] = []
    if family == "Factual":
        sentences.append(pick(FACTUAL_PREAMBLES))
    elif family == "Narrative":
        sentences.append(pick(NARRATIVE_PREAMBLES))
    else:
        sentences.append(pick(SYMPTOM_PREAMBLES))
    for j, (v, shown) in enumerate(zip(x, mask)):
        role = ROLES[j]
        if not shown:
            intervals.append(None)
            if family == "Factual":
                sentences.append(FACTUAL_HIDDEN.format(label=role.label))
            elif family == "Narrative":
                sentences.append(NARRATIVE_HIDDEN.format(noun=role.noun))
            else:
                sentences.append(role.silent)
            continue
        if family == "Factual":
            value, iv = clinical_value(float(v), role)
            sentences.append(FACTUAL_SHOWN.format(label=role.label, value=value, unit=role.unit))
            intervals.append(iv)
            continue
        b = bin_index(float(v))
        intervals.append(bin_interval(b))
        if family == "Narrative":
            adj = pick(NARRATIVE_ADJECTIVES[BIN_NAMES[b]])
            sentences.append(pick(NARRATIVE_SHOWN).format(noun=role.noun, adj=adj))
        else:
            sentences.append(pick(role.symptoms[BIN_NAMES[b]]))
    if family == "Narrative":
        for _ in range(_narrative_filler_count(len(x))):
            sentences.append(pick(NARRATIVE_FILLERS))
    text = ". ".join(s[0].upper() + s[1:] for s in sentences) + "."
    text = _PRONOUN_RE.sub("I", text)
    return text, tuple(intervals)


def render(
    x,
    cfg: SurrogateConfig,
    rng: np.random.Generator,
    paraphrase_rng: np.random.Generator | None = None,
) -> TextSurrogate:
    """Render one covariate vector into a surrogate text.

    ``rng`` drives which coordinates leak; ``paraphrase_rng`` drives wording
    only. Neither sees treatment or outcome.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_dim(len(x))
    if paraphrase_rng is None:
        paraphrase_rng = stream(cfg.paraphrase_seed, "paraphrase")
    mask = _draw_mask(rng, len(x), cfg.leak_probability)
    text, intervals = _compose(x, mask, cfg.prompt_family, paraphrase_rng)
    return TextSurrogate(text, tuple(bool(m) for m in mask), cfg.prompt_family, intervals)


def _draw_mask(rng: np.random.Generator, d: int, p: float) -> np.ndarray:
    mask = rng.random(d) < p
    while not mask.any():
        # At least one coordinate must reach the text.
        mask = rng.random(d) < p
    return mask


def render_batch(X, cfg: SurrogateConfig, seed: int) -> list[TextSurrogate]:
    """Render every row of ``X``; row ``i`` uses its own sub-streams."""
    X = np.asarray(X, dtype=np.float64)
    _check_dim(X.shape[1])
    out = []
    for i, x in enumerate(X):
        out.append(render(
            x, cfg,
            stream(seed, "surrogate", i),
            stream(cfg.paraphrase_seed, "paraphrase", seed, i),
        ))
    return out


# -- prompts for a remote generator -------------------------------------------

_PROMPT_LEADS = {
    "Factual": "Rewrite the following patient record as one plain paragraph.",
    "Narrative": (
        "Compose a clinical narrative of roughly 150 to 200 tokens for a patient "
        "with the measurements below, describing how they present."
    ),
    "SymptomFocused": (
        "Assume the patient below has no access to diagnostic equipment. In the first "
        "person, write how they would describe their symptoms, without quoting numbers."
    ),
}


def build_prompt(x, family: str) -> str:
    """Chat prompt asking a remote model to verbalize ``x`` in ``family`` style."""
    x = np.asarray(x, dtype=np.float64)
    _check_dim(len(x))
    if family not in PROMPT_FAMILIES:
        raise ValueError(f"unknown prompt family {family!r}")
    fields = ", ".join(ROLES[j].label for j in range(len(x)))
    values = ", ".join(clinical_value(float(v), ROLES[j])[0] for j, v in enumerate(x))
    return f"{_PROMPT_LEADS[family]} Fields: {fields}. Values: {values}."
