"""Preference questionnaire scoring.

A 19-item, 5-point Likert questionnaire is reduced to a per-trainee
intervention profile: which support modalities are active and how patient
the step-guidance escalation should be. Items map positionally:

  1-6    control attribution; odd items (1,3,5) credit internal control,
         even items (2,4,6) external. A strictly higher external sum
         switches the self-regulation aids off.
  7      breathing guidance opt-in (>= 3 activates, given self-regulation)
  8      stress-feedback light opt-in (>= 3 activates, given self-regulation)
  9-13   need-for-structure block, all positively scored; total < 15
         disables step guidance, otherwise the total picks the escalation
         threshold: >= 22 -> 10 s, 18-21 -> 15 s, 15-17 -> 30 s
  14-17  companion-support block (sum >= 12 activates by default)
  18-19  noise-reduction block (sum >= 6 activates by default)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

from .errors import ValidationError

N_ITEMS = 19
INTERNAL_ITEMS = (1, 3, 5)
EXTERNAL_ITEMS = (2, 4, 6)
BREATHING_ITEM = 7
FEEDBACK_ITEM = 8
STRUCTURE_ITEMS = (9, 10, 11, 12, 13)
COMPANION_ITEMS = (14, 15, 16, 17)
NOISE_ITEMS = (18, 19)

GUIDANCE_THRESHOLDS_S = (10, 15, 30)


@dataclass(frozen=True)
class ScoringRules:
    """Cutoffs that the instrument leaves open; defaults sit at the scale midpoint."""

    item_gate: int = 3            # items 7/8: below this, the aid stays off
    structure_min_total: int = 15
    companion_min_total: int = 12
    noise_min_total: int = 6


@dataclass(frozen=True)
class QuestionnaireResponse:
    items: Tuple[int, ...]

    def __post_init__(self):
        if len(self.items) != N_ITEMS:
            raise ValidationError(f"expected {N_ITEMS} items, got {len(self.items)}")
        for i, v in enumerate(self.items, start=1):
            if not isinstance(v, int) or isinstance(v, bool) or not 1 <= v <= 5:
                raise ValidationError(f"item {i} must be an integer in [1, 5], got {v!r}")

    def item(self, number: int) -> int:
        return self.items[number - 1]

    def total(self, numbers: Sequence[int]) -> int:
        return sum(self.item(n) for n in numbers)


@dataclass(frozen=True)
class InterventionProfile:
    self_regulation: bool
    breathing_guidance: bool
    stress_feedback: bool
    procedure_guidance: bool
    guidance_threshold_s: Optional[int]
    companion_support: bool
    noise_reduction: bool

    def __post_init__(self):
        if self.breathing_guidance and not self.self_regulation:
            raise ValidationError("breathing guidance requires self-regulation aids")
        if self.stress_feedback and not self.self_regulation:
            raise ValidationError("stress feedback requires self-regulation aids")
        if self.procedure_guidance != (self.guidance_threshold_s is not None):
            raise ValidationError("guidance threshold defined iff procedure guidance enabled")
        if self.guidance_threshold_s is not None and \
                self.guidance_threshold_s not in GUIDANCE_THRESHOLDS_S:
            raise ValidationError(
                f"guidance threshold must be one of {GUIDANCE_THRESHOLDS_S}"
            )

    @classmethod
    def all_off(cls) -> "InterventionProfile":
        return cls(False, False, False, False, None, False, False)

    def to_dict(self) -> dict:
        return {
            "self_regulation": self.self_regulation,
            "breathing_guidance": self.breathing_guidance,
            "stress_feedback": self.stress_feedback,
            "procedure_guidance": self.procedure_guidance,
            "guidance_threshold_s": self.guidance_threshold_s,
            "companion_support": self.companion_support,
            "noise_reduction": self.noise_reduction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InterventionProfile":
        try:
            return cls(
                self_regulation=bool(d["self_regulation"]),
                breathing_guidance=bool(d["breathing_guidance"]),
                stress_feedback=bool(d["stress_feedback"]),
                procedure_guidance=bool(d["procedure_guidance"]),
                guidance_threshold_s=d["guidance_threshold_s"],
                companion_support=bool(d["companion_support"]),
                noise_reduction=bool(d["noise_reduction"]),
            )
        except KeyError as exc:
            raise ValidationError(f"profile missing field {exc}") from exc


def guidance_threshold_for_total(total: int, rules: ScoringRules = ScoringRules()) -> Optional[int]:
    """Escalation threshold from the structure-block total; None disables guidance."""
    if total < rules.structure_min_total:
        return None
    if total >= 22:
        return 10
    if total >= 18:
        return 15
    return 30


def score(resp: QuestionnaireResponse, rules: ScoringRules = ScoringRules()) -> InterventionProfile:
    """Reduce a validated response to an intervention profile.

    A tie between the internal and external control sums keeps the
    self-regulation aids enabled; only a strictly higher external sum
    disables them.
    """
    internal = resp.total(INTERNAL_ITEMS)
    external = resp.total(EXTERNAL_ITEMS)
    self_regulation = external <= internal

    breathing = self_regulation and resp.item(BREATHING_ITEM) >= rules.item_gate
    feedback = self_regulation and resp.item(FEEDBACK_ITEM) >= rules.item_gate

    structure_total = resp.total(STRUCTURE_ITEMS)
    threshold = guidance_threshold_for_total(structure_total, rules)

    companion = resp.total(COMPANION_ITEMS) >= rules.companion_min_total
    noise = resp.total(NOISE_ITEMS) >= rules.noise_min_total

    return InterventionProfile(
        self_regulation=self_regulation,
        breathing_guidance=breathing,
        stress_feedback=feedback,
        procedure_guidance=threshold is not None,
        guidance_threshold_s=threshold,
        companion_support=companion,
        noise_reduction=noise,
    )
