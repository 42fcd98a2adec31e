"""Training objectives.

Two adversarial games run side by side: a global hinge critic on the
composite image, and a segmentation net trying to localize the repaired
region while the generator tries to make it predict "all valid". On top of
those sit two contrastive terms driven by critic features (textural ratios
on shallow taps, InfoNCE on the flattened final map) and an L1 term on the
raw generator output.

All functions are pure and shape-checked; probability maps are re-clamped
internally so perfect 0/1 predictions stay finite.
"""

from __future__ import annotations

import dataclasses
from typing import Sequence

import torch

from .errors import ConfigurationError, DomainError

PROB_EPS = 1e-6
DIST_EPS = 1e-8

SCAT_FORMS = ("bce", "hinge")
ABLATION_MODES = ("baseline", "plus_scat", "plus_text", "full")


@dataclasses.dataclass(frozen=True)
class LossWeights:
    lambda_adv: float = 1.0
    lambda_text: float = 10.0
    lambda_sem: float = 1.0
    lambda_rec: float = 10.0
    temperature_t: float = 0.07
    num_shallow_layers_n: int = 3
    num_negatives_m: int = 8
    scat_form: str = "bce"

    def __post_init__(self):
        for name in ("lambda_adv", "lambda_text", "lambda_sem", "lambda_rec"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.temperature_t <= 0:
            raise ConfigurationError("temperature_t must be > 0")
        if self.num_negatives_m < 1:
            raise ConfigurationError("num_negatives_m must be >= 1")
        if self.num_shallow_layers_n < 1:
            raise ConfigurationError("num_shallow_layers_n must be >= 1")
        if self.scat_form not in SCAT_FORMS:
            raise ConfigurationError(
                f"scat_form must be one of {SCAT_FORMS}, got {self.scat_form!r}"
            )


@dataclasses.dataclass
class LossReport:
    step: int
    scat_S: float
    scat_G: float
    contra_text: float
    contra_sem: float
    adv_D: float
    adv_G: float
    rec: float
    total_G: float
    total_DS: float

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def nonfinite_terms(self) -> list[str]:
        import math

        return [
            k
            for k, v in self.as_dict().items()
            if k != "step" and not math.isfinite(v)
        ]


def _clamped(p: torch.Tensor) -> torch.Tensor:
    return p.clamp(PROB_EPS, 1.0 - PROB_EPS)


def _bce(p: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    p = _clamped(p)
    return -(target * torch.log(p) + (1 - target) * torch.log1p(-p)).mean()


def _check_map_vs_mask(s: torch.Tensor, m: torch.Tensor):
    if s.shape[-2:] != m.shape[-2:]:
        raise DomainError(
            f"map shape {tuple(s.shape)} does not match mask {tuple(m.shape)}"
        )


def scat_loss_S(s_xbar: torch.Tensor, s_x: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
    """Segmenter side: predict the mask on composites, all-valid on reals."""
    _check_map_vs_mask(s_xbar, m)
    if s_xbar.shape != s_x.shape:
        raise DomainError(
            f"map shapes disagree: {tuple(s_xbar.shape)} vs {tuple(s_x.shape)}"
        )
    return _bce(s_xbar, torch.broadcast_to(m, s_xbar.shape)) + _bce(
        s_x, torch.ones_like(s_x)
    )


def scat_loss_G(s_xbar: torch.Tensor) -> torch.Tensor:
    """Generator side: make the segmenter call every composite pixel valid.

    The nominal all-ones-target BCE keeps only its -log term, since the
    (1 - target) factor vanishes identically.
    """
    return -torch.log(_clamped(s_xbar)).mean()


def scat_hinge_S(
    s_xbar_logits: torch.Tensor, s_x_logits: torch.Tensor, m: torch.Tensor
) -> torch.Tensor:
    _check_map_vs_mask(s_xbar_logits, m)
    m = torch.broadcast_to(m, s_xbar_logits.shape)
    fake = (m * torch.relu(1 - s_xbar_logits) + (1 - m) * torch.relu(1 + s_xbar_logits)).mean()
    real = torch.relu(1 - s_x_logits).mean()
    return fake + real


def scat_hinge_G(s_xbar_logits: torch.Tensor) -> torch.Tensor:
    return -s_xbar_logits.mean()


def _per_sample_mean_abs(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape != b.shape:
        raise DomainError(f"feature shapes disagree: {tuple(a.shape)} vs {tuple(b.shape)}")
    diff = (a - b).abs()
    return diff.reshape(diff.shape[0], -1).mean(dim=1)


def textural_contrastive(
    shallow_xbar: Sequence[torch.Tensor],
    shallow_x: Sequence[torch.Tensor],
    shallow_xtilde: Sequence[torch.Tensor],
) -> torch.Tensor:
    """Per layer, pull composites toward the real features (numerator) and
    push them off the corrupted features (denominator); ratios summed over
    layers, then batch-averaged."""
    if not (len(shallow_xbar) == len(shallow_x) == len(shallow_xtilde)):
        raise DomainError(
            f"feature list lengths disagree: {len(shallow_xbar)}, "
            f"{len(shallow_x)}, {len(shallow_xtilde)}"
        )
    if len(shallow_xbar) == 0:
        raise DomainError("feature lists are empty")
    total = None
    for f_bar, f_x, f_tilde in zip(shallow_xbar, shallow_x, shallow_xtilde):
        num = _per_sample_mean_abs(f_bar, f_x)
        den = _per_sample_mean_abs(f_bar, f_tilde)
        term = num / (den + DIST_EPS)
        total = term if total is None else total + term
    return total.mean()


def _l2_rows(e: torch.Tensor) -> torch.Tensor:
    return e / (e.norm(dim=-1, keepdim=True) + DIST_EPS)


def semantic_contrastive(
    emb_xbar: torch.Tensor,
    emb_x: torch.Tensor,
    neg_embs: torch.Tensor,
    t: float,
) -> torch.Tensor:
    """InfoNCE over (B, D) embeddings with (M, B, D) negatives."""
    if t <= 0:
        raise ConfigurationError("temperature must be > 0")
    if emb_xbar.dim() != 2 or emb_xbar.shape != emb_x.shape:
        raise DomainError(
            f"embeddings must be (B, D) and agree: {tuple(emb_xbar.shape)} vs "
            f"{tuple(emb_x.shape)}"
        )
    if neg_embs.dim() != 3 or neg_embs.shape[1:] != emb_xbar.shape:
        raise DomainError(
            f"negatives must be (M, B, D) over {tuple(emb_xbar.shape)}, "
            f"got {tuple(neg_embs.shape)}"
        )
    u_bar = _l2_rows(emb_xbar)
    u_x = _l2_rows(emb_x)
    u_neg = _l2_rows(neg_embs)
    pos = (u_bar * u_x).sum(dim=-1, keepdim=True) / t
    neg = torch.einsum("bd,mbd->bm", u_bar, u_neg) / t
    logits = torch.cat([pos, neg], dim=1)
    return (torch.logsumexp(logits, dim=1) - pos.squeeze(1)).mean()


def total_contrastive(text: torch.Tensor, sem: torch.Tensor, w: LossWeights):
    return w.lambda_text * text + w.lambda_sem * sem


def adv_hinge_D(critic_real: torch.Tensor, critic_fake: torch.Tensor) -> torch.Tensor:
    """Hinge critic loss, applied per position and averaged."""
    return torch.relu(1 - critic_real).mean() + torch.relu(1 + critic_fake).mean()


def adv_hinge_G(critic_fake: torch.Tensor) -> torch.Tensor:
    return -critic_fake.mean()


def reconstruction(x_hat: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    """Mean absolute error on the raw output, not the composite."""
    if x_hat.shape != x.shape:
        raise DomainError(
            f"reconstruction shapes disagree: {tuple(x_hat.shape)} vs {tuple(x.shape)}"
        )
    return (x_hat - x).abs().mean()


def total_generator(adv_g, scat_g, contra, rec, w: LossWeights):
    return w.lambda_adv * (adv_g + scat_g) + contra + w.lambda_rec * rec


def total_DS(adv_d, scat_s, w: LossWeights):
    return w.lambda_adv * (adv_d + scat_s)
