"""Central finite-difference checks of every differentiable component.

Each check builds a small float64 instance of the component, computes the
autograd gradient of a scalar and compares it with central differences
(step 1e-4) on the parameters or inputs. Structural hyperparameters (scale
count, transformer depth, head count, kernel, alpha, loss settings) come
from the experiment config; widths are reduced so every check runs in
seconds.
"""

from __future__ import annotations

import time
from typing import Callable, NamedTuple

import numpy as np
import torch

from .activations import record_kinks
from .config import ExperimentConfig
from .contrastive import msc_loss
from .head import FocalConfig, FusionHead, LossWeights, focal_loss, focal_loss_from_logits
from .model import MRLMCNetwork, objective
from .semantic import MultiHeadAttention, SemanticEncoder, TransformerUnit, l_sc

STEP = 1e-4
TOLERANCE = 1e-3
# elements per tensor probed by finite differences (all of them when smaller)
MAX_PROBES = 48


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor * max|n|, 1e-12) elementwise.

    The floor, relative to the largest numeric gradient of the tensor, stops
    entries that are zero up to rounding from dominating the maximum.
    """
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)),
                       max(floor * float(np.abs(numeric).max(initial=0.0)), 1e-12))
    return np.abs(analytic - numeric) / scale


class GradCheck(NamedTuple):
    max_rel_err: float
    checked: int
    skipped: int  # probes whose stencil crossed a rectifier kink

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_rel_err <= TOLERANCE


def _crossed(a: list, b: list) -> bool:
    return any(not torch.equal(p, q) for p, q in zip(a, b))


def check_gradients(fn: Callable[[], torch.Tensor], tensors: dict, step=STEP, max_probes=MAX_PROBES,
                    seed=0) -> GradCheck:
    """Compare autograd with central differences of ``fn()`` over (a
    deterministic sample of) the elements of ``tensors``.

    A probe is excluded when the +step and -step evaluations put any
    rectifier input on different sides of its kink, where the difference
    quotient does not estimate the derivative.
    """
    for t in tensors.values():
        if t.grad is not None:
            t.grad = None
    value = fn()
    grads = torch.autograd.grad(value, list(tensors.values()), allow_unused=True)
    rng = np.random.default_rng(seed)
    worst, checked, skipped = 0.0, 0, 0
    with torch.no_grad():
        for (name, t), g in zip(tensors.items(), grads):
            g = torch.zeros_like(t) if g is None else g
            flat = t.view(-1)
            idx = np.arange(flat.numel())
            if idx.size > max_probes:
                idx = np.sort(rng.choice(idx, max_probes, replace=False))
            numeric = np.full(idx.size, np.nan)
            for j, i in enumerate(idx):
                orig = flat[i].item()
                flat[i] = orig + step
                with record_kinks() as plus:
                    f_plus = fn().item()
                flat[i] = orig - step
                with record_kinks() as minus:
                    f_minus = fn().item()
                flat[i] = orig
                if _crossed(plus, minus):
                    skipped += 1
                    continue
                numeric[j] = (f_plus - f_minus) / (2 * step)
            ok = ~np.isnan(numeric)
            checked += int(ok.sum())
            if ok.any():
                analytic = g.reshape(-1)[idx].numpy()
                err = relative_error(analytic[ok], numeric[ok])
                worst = max(worst, float(err.max()))
    return GradCheck(worst, checked, skipped)


def _params(module: torch.nn.Module) -> dict:
    return {n: p for n, p in module.named_parameters()}


def _small_widths(cfg: ExperimentConfig) -> dict:
    n_head = int(cfg.semantic.n_head)
    return {"d": 4, "n_out": n_head * 2, "channels": {"FNIRS": 3, "EEG": 2}, "timesteps": 12}


def _gen(seed):
    return torch.Generator().manual_seed(seed)


def _network(cfg: ExperimentConfig, w: dict, seed: int) -> MRLMCNetwork:
    torch.manual_seed(seed)
    m, s, h = cfg.model, cfg.semantic, cfg.head
    net = MRLMCNetwork(
        w["channels"], d=w["d"], n_scale=m.n_scale, n_out=w["n_out"], alpha=m.alpha, kernel_size=m.kernel_size,
        dilation_base=m.dilation_base, dropout=m.dropout, n_trans=s.n_trans, n_head=s.n_head,
        mlp_ratio=s.mlp_ratio, semantic_dropout=s.dropout, share_semantic=s.share_weights,
        head_hidden=None, head_dropout=h.dropout,
    ).double()
    net.eval()
    return net


def run_gradchecks(cfg: ExperimentConfig | None = None, seed: int = 0) -> dict[str, GradCheck]:
    """Max relative error per component; all must be <= 1e-3."""
    cfg = cfg or ExperimentConfig()
    w = _small_widths(cfg)
    g = _gen(seed)
    results = {}
    with torch.random.fork_rng(devices=[]):
        net = _network(cfg, w, seed)
        batch = 3
        x = torch.randn(batch, w["channels"]["FNIRS"], w["timesteps"], generator=g, dtype=torch.float64)
        y = torch.randn(batch, w["channels"]["EEG"], w["timesteps"] + 4, generator=g, dtype=torch.float64)
        m = net.encoder.m

        readout = torch.randn(m, generator=g, dtype=torch.float64)
        enc = net.encoder
        results["adapter+msc"] = check_gradients(lambda: (enc(x, "FNIRS") * readout).sum(), _params(enc))

        width, n_tok = w["n_out"], cfg.model.n_scale
        attn = MultiHeadAttention(width, cfg.semantic.n_head).double()
        q, k, v = (torch.randn(batch, n_tok, width, generator=g, dtype=torch.float64) for _ in range(3))
        r_attn = torch.randn(batch, n_tok, width, generator=g, dtype=torch.float64)
        results["mh_attention"] = check_gradients(lambda: (attn(q, k, v) * r_attn).sum(), _params(attn))

        unit = TransformerUnit(width, cfg.semantic.n_head, cfg.semantic.mlp_ratio, cfg.semantic.dropout).double().eval()
        tok = torch.randn(batch, n_tok, width, generator=g, dtype=torch.float64, requires_grad=True)
        results["transformer_unit"] = check_gradients(lambda: (unit(tok) * r_attn).sum(),
                                                      {"input": tok, **_params(unit)})

        sem = SemanticEncoder(n_tok, width, cfg.semantic.n_trans, cfg.semantic.n_head, cfg.semantic.mlp_ratio,
                              cfg.semantic.dropout).double().eval()
        vin = torch.randn(batch, m, generator=g, dtype=torch.float64, requires_grad=True)
        results["semantic_stack"] = check_gradients(lambda: (sem(vin) * readout).sum(), {"input": vin, **_params(sem)})

        head = FusionHead(m, None, cfg.head.dropout).double().eval()
        zf = torch.randn(batch, m, generator=g, dtype=torch.float64, requires_grad=True)
        ze = torch.randn(batch, m, generator=g, dtype=torch.float64, requires_grad=True)
        r_head = torch.randn(batch, 2, generator=g, dtype=torch.float64)
        results["fusion_head"] = check_gradients(lambda: (torch.softmax(head(zf, ze), -1) * r_head).sum(),
                                                 {"z_f": zf, "z_e": ze, **_params(head)})

        tau = cfg.model.temperature
        va = torch.randn(4, m, generator=g, dtype=torch.float64, requires_grad=True)
        ua = torch.randn(4, m, generator=g, dtype=torch.float64, requires_grad=True)
        results["l_msc"] = check_gradients(lambda: msc_loss(va, ua, tau), {"v": va, "u": ua}, max_probes=10**6)
        results["l_sc"] = check_gradients(lambda: l_sc(va, ua), {"z_f": va, "z_e": ua}, max_probes=10**6)

        focal = FocalConfig(cfg.head.alpha_f, cfg.head.gamma)
        logits = torch.randn(4, 2, generator=g, dtype=torch.float64, requires_grad=True)
        labels = torch.tensor([0, 1, 1, 0])
        probs = torch.rand(4, generator=g, dtype=torch.float64).mul(0.9).add(0.05).requires_grad_()
        a = check_gradients(lambda: focal_loss_from_logits(logits, labels, focal), {"logits": logits})
        b = check_gradients(lambda: focal_loss(probs, focal), {"P": probs})
        results["l_fl"] = GradCheck(max(a.max_rel_err, b.max_rel_err), a.checked + b.checked, a.skipped + b.skipped)

        weights = LossWeights(cfg.head.lambda1 or 1.0, cfg.head.lambda2 or 1.0)
        x2, y2, lab2 = x[:2], y[:2], torch.tensor([0, 1])
        results["total_objective"] = check_gradients(
            lambda: objective(net(x2, y2, "FNIRS", "EEG"), lab2, tau, focal, weights).total, _params(net)
        )
    return results


def main_report(cfg: ExperimentConfig | None = None) -> tuple[bool, list[str]]:
    start = time.perf_counter()
    results = run_gradchecks(cfg)
    lines = [f"{name:18s} max_rel_err={r.max_rel_err:.3e} checked={r.checked:5d} kink_skipped={r.skipped:3d} "
             f"{'PASS' if r.passed else 'FAIL'}" for name, r in results.items()]
    lines.append(f"elapsed {time.perf_counter() - start:.1f}s")
    return all(r.passed for r in results.values()), lines
