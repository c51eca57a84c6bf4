"""Gradient oracle suite: finite-difference checks of every objective, both
encoders, and the full feature-to-joint-loss pipeline.

Each check draws random small instances (B=2, c=4, h=8, m=3 by default)
and compares the tape gradient with central differences through
:func:`eegcv.gradcheck.grad_check`. For pipeline checks, recorded
augmentation draws are replayed as fixed linear maps (probed column by
column through the flattened feature space), so the perturbed evaluations
see exactly the same transform and the comparison is exact.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import augment
from . import autodiff as ad
from .autodiff import Tensor
from .encoders import (EncoderConfig, init_params, scalp_encode, topo_encode)
from .features import N_BANDS
from .gradcheck import grad_check
from .losses import (LossWeights, barlow_twins_loss, cross_correlation,
                     cross_entropy, cross_view_infonce, inner_view_loss,
                     joint_loss, pretrain_loss)
from .views import build_topology_graph, default_montage, scalp_view_batch

Array = np.ndarray


@dataclass(frozen=True)
class OracleCheck:
    name: str
    n_instances: int
    max_rel_err: float
    passed: bool


def _reps(rng: np.random.Generator, m: int, bsz: int, h: int) -> list[Array]:
    return [rng.standard_normal((bsz, h)) for _ in range(m)]


def _with_target(arrays: list[Array], idx: int, probe: Tensor) -> list[Tensor]:
    return [probe if i == idx else Tensor(a) for i, a in enumerate(arrays)]


def _run(name: str, cases, tol: float, step: float) -> OracleCheck:
    worst = 0.0
    count = 0
    for f, x0 in cases:
        report = grad_check(f, Tensor(x0), step=step, tol=tol)
        worst = max(worst, report.max_rel_err)
        count += 1
    return OracleCheck(name=name, n_instances=count, max_rel_err=worst,
                       passed=bool(worst <= tol))


def oracle_suite(n_instances: int = 20, seed: int = 0, tol: float = 1e-4,
                 step: float = 1e-5, bsz: int = 2, n_channels: int = 4,
                 h: int = 8, m: int = 3,
                 pipeline_instances: int = 3) -> list[OracleCheck]:
    """Run every gradient check; returns one result per named check."""
    rng = np.random.default_rng(seed)
    checks: list[OracleCheck] = []

    # Barlow-Twins through the pairwise correlation, per view
    cases = []
    for inst in range(n_instances):
        arrays = _reps(rng, m, bsz, h)
        target = inst % m

        def f(x, arrays=arrays, target=target):
            return barlow_twins_loss(cross_correlation(_with_target(arrays, target, x)))

        cases.append((f, arrays[target]))
    checks.append(_run("barlow_twins", cases, tol, step))

    # inner-view loss over both views
    cases = []
    for inst in range(n_instances):
        scalp = _reps(rng, m, bsz, h)
        topo = _reps(rng, m, bsz, h)
        target = inst % (2 * m)

        def f(x, scalp=scalp, topo=topo, target=target):
            s = _with_target(scalp, target, x) if target < m \
                else [Tensor(a) for a in scalp]
            t = _with_target(topo, target - m, x) if target >= m \
                else [Tensor(a) for a in topo]
            return inner_view_loss(s, t)

        cases.append((f, (scalp + topo)[target]))
    checks.append(_run("inner_view_loss", cases, tol, step))

    # cross-view InfoNCE
    cases = []
    for inst in range(n_instances):
        scalp = _reps(rng, m, bsz, h)
        topo = _reps(rng, m, bsz, h)
        target = inst % (2 * m)

        def f(x, scalp=scalp, topo=topo, target=target):
            s = _with_target(scalp, target, x) if target < m \
                else [Tensor(a) for a in scalp]
            t = _with_target(topo, target - m, x) if target >= m \
                else [Tensor(a) for a in topo]
            return cross_view_infonce(s, t, tau=0.1)

        cases.append((f, (scalp + topo)[target]))
    checks.append(_run("cross_view_infonce", cases, tol, step))

    # pretrain fusion: gradient through both losses and both log sigmas
    cases = []
    for inst in range(n_instances):
        scalp = _reps(rng, m, bsz, h)
        topo = _reps(rng, m, bsz, h)
        sigmas = rng.uniform(-0.5, 0.5, size=2)
        target = inst % (2 * m)

        def f(x, scalp=scalp, topo=topo, sigmas=sigmas, target=target):
            s = _with_target(scalp, target, x) if target < m \
                else [Tensor(a) for a in scalp]
            t = _with_target(topo, target - m, x) if target >= m \
                else [Tensor(a) for a in topo]
            w = LossWeights(log_sigma_s=Tensor(sigmas[0]), log_sigma_t=Tensor(sigmas[1]),
                            log_sigma_pt=Tensor(0.0), log_sigma_ce=Tensor(0.0))
            return pretrain_loss(inner_view_loss(s, t),
                                 cross_view_infonce(s, t, tau=0.1), w)

        cases.append((f, (scalp + topo)[target]))
    checks.append(_run("pretrain_loss_reps", cases, tol, step))

    cases = []
    for _ in range(n_instances):
        scalp = _reps(rng, m, bsz, h)
        topo = _reps(rng, m, bsz, h)

        def f(x, scalp=scalp, topo=topo):
            pick0 = ad.tensor_sum(ad.mul(x, Tensor(np.array([1.0, 0.0]))))
            pick1 = ad.tensor_sum(ad.mul(x, Tensor(np.array([0.0, 1.0]))))
            w = LossWeights(log_sigma_s=pick0, log_sigma_t=pick1,
                            log_sigma_pt=Tensor(0.0), log_sigma_ce=Tensor(0.0))
            s = [Tensor(a) for a in scalp]
            t = [Tensor(a) for a in topo]
            return pretrain_loss(inner_view_loss(s, t),
                                 cross_view_infonce(s, t, tau=0.1), w)

        cases.append((f, rng.uniform(-0.5, 0.5, size=2)))
    checks.append(_run("pretrain_loss_sigmas", cases, tol, step))

    # joint fusion: gradient through the two component losses and both sigmas
    cases = []
    for _ in range(n_instances):
        sigmas = rng.uniform(-0.5, 0.5, size=2)

        def f(x, sigmas=sigmas):
            l_pt = ad.tensor_sum(ad.mul(x, Tensor(np.array([1.0, 0.0]))))
            l_ce = ad.tensor_sum(ad.mul(x, Tensor(np.array([0.0, 1.0]))))
            w = LossWeights(log_sigma_s=Tensor(0.0), log_sigma_t=Tensor(0.0),
                            log_sigma_pt=Tensor(sigmas[0]), log_sigma_ce=Tensor(sigmas[1]))
            return joint_loss(l_pt, l_ce, w)

        cases.append((f, rng.uniform(0.1, 2.0, size=2)))
    checks.append(_run("joint_loss_components", cases, tol, step))

    cases = []
    for _ in range(n_instances):
        parts = rng.uniform(0.1, 2.0, size=2)

        def f(x, parts=parts):
            pick0 = ad.tensor_sum(ad.mul(x, Tensor(np.array([1.0, 0.0]))))
            pick1 = ad.tensor_sum(ad.mul(x, Tensor(np.array([0.0, 1.0]))))
            w = LossWeights(log_sigma_s=Tensor(0.0), log_sigma_t=Tensor(0.0),
                            log_sigma_pt=pick0, log_sigma_ce=pick1)
            return joint_loss(Tensor(parts[0]), Tensor(parts[1]), w)

        cases.append((f, rng.uniform(-0.5, 0.5, size=2)))
    checks.append(_run("joint_loss_sigmas", cases, tol, step))

    # cross-entropy w.r.t. logits
    cases = []
    n_classes = 3
    for _ in range(n_instances):
        labels = rng.integers(0, n_classes, size=bsz)

        def f(x, labels=labels):
            return cross_entropy(x, labels)

        cases.append((f, rng.standard_normal((bsz, n_classes))))
    checks.append(_run("cross_entropy", cases, tol, step))

    # encoders: rotate the checked parameter tensor across instances
    enc_cfg = EncoderConfig(rep_dim=h, conv_channels=(3, 4), gcn_channels=(4, 4),
                            decoder_hidden=8)
    montage = default_montage(f"grid-demo-{n_channels}")
    graph = build_topology_graph(montage)

    scalp_fields = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc_w", "fc_b")
    cases = []
    for inst in range(n_instances):
        params = init_params(int(rng.integers(0, 2 ** 31)), enc_cfg, n_channels,
                             n_classes).scalp
        sv = scalp_view_batch(rng.standard_normal((bsz, n_channels, N_BANDS)), montage)
        fieldname = scalp_fields[inst % len(scalp_fields)]

        def f(x, params=params, sv=sv, fieldname=fieldname):
            p = dataclasses.replace(params, **{fieldname: x})
            return ad.tensor_sum(ad.square(scalp_encode(Tensor(sv), p)))

        cases.append((f, getattr(params, fieldname).data))
    checks.append(_run("scalp_encoder", cases, tol, step))

    topo_fields = ("theta1", "theta2", "fc_w", "fc_b")
    cases = []
    for inst in range(n_instances):
        params = init_params(int(rng.integers(0, 2 ** 31)), enc_cfg, n_channels,
                             n_classes).topo
        feats = rng.standard_normal((bsz, n_channels, N_BANDS))
        fieldname = topo_fields[inst % len(topo_fields)]

        def f(x, params=params, feats=feats, fieldname=fieldname):
            p = dataclasses.replace(params, **{fieldname: x})
            return ad.tensor_sum(ad.square(topo_encode(Tensor(feats), Tensor(graph.laplacian), p)))

        cases.append((f, getattr(params, fieldname).data))
    checks.append(_run("topo_encoder", cases, tol, step))

    # full pipeline: input features -> views -> encoders -> joint loss
    checks.append(_full_pipeline_check(rng, pipeline_instances, tol, step, bsz,
                                       n_channels, h, m))
    return checks


def _linear_map_of(transform, in_shape: tuple[int, ...], out_dim: int) -> Array:
    """Probe a linear transform with basis vectors to recover its matrix."""
    n = int(np.prod(in_shape))
    mat = np.zeros((n, out_dim))
    basis = np.zeros(n)
    for i in range(n):
        basis[i] = 1.0
        mat[i] = transform(basis.reshape(in_shape)).ravel()
        basis[i] = 0.0
    return mat


def _full_pipeline_check(rng: np.random.Generator, n_instances: int, tol: float,
                         step: float, bsz: int, n_channels: int, h: int,
                         m: int) -> OracleCheck:
    enc_cfg = EncoderConfig(rep_dim=h, conv_channels=(3, 4), gcn_channels=(4, 4),
                            decoder_hidden=8)
    montage = default_montage(f"grid-demo-{n_channels}")
    graph = build_topology_graph(montage)
    laplacian = Tensor(graph.laplacian)
    n_classes = 3
    flat_in = bsz * n_channels * N_BANDS

    worst = 0.0
    for _ in range(n_instances):
        model = init_params(int(rng.integers(0, 2 ** 31)), enc_cfg, n_channels, n_classes)
        weights = LossWeights(
            log_sigma_s=Tensor(rng.uniform(-0.3, 0.3)),
            log_sigma_t=Tensor(rng.uniform(-0.3, 0.3)),
            log_sigma_pt=Tensor(rng.uniform(-0.3, 0.3)),
            log_sigma_ce=Tensor(rng.uniform(-0.3, 0.3)))
        labels = rng.integers(0, n_classes, size=bsz)
        feats0 = rng.standard_normal((bsz, n_channels, N_BANDS))

        # freeze one batch-wide draw set and express each slot as a matrix
        seeds = [int(rng.integers(0, 2 ** 63 - 1)) for _ in range(bsz * m)]

        def slot_transform(slot):
            def apply(x):
                out = np.empty_like(x)
                for b in range(bsz):
                    _, out[b] = augment.apply_seeded(x[b], seeds[b * m + slot])
                return out
            return apply

        slot_mats = [Tensor(_linear_map_of(slot_transform(i), (bsz, n_channels, N_BANDS),
                                           flat_in))
                     for i in range(m)]
        scalp_mat = Tensor(_linear_map_of(lambda x: scalp_view_batch(x, montage),
                                          (bsz, n_channels, N_BANDS),
                                          bsz * 9 * 9 * N_BANDS))

        def to_scalp(x_flat: Tensor) -> Tensor:
            sv = ad.matmul(x_flat, scalp_mat)
            return ad.reshape(sv, (bsz, 9, 9, N_BANDS))

        def f(x, model=model, weights=weights, labels=labels,
              slot_mats=slot_mats):
            flat = ad.reshape(x, (1, flat_in))
            r_s, r_t = [], []
            for mat in slot_mats:
                aug_flat = ad.matmul(flat, mat)
                aug = ad.reshape(aug_flat, (bsz, n_channels, N_BANDS))
                r_s.append(scalp_encode(to_scalp(aug_flat), model.scalp))
                r_t.append(topo_encode(aug, laplacian, model.topo))
            l_inner = inner_view_loss(r_s, r_t)
            l_cross = cross_view_infonce(r_s, r_t, tau=0.1)
            l_pt = pretrain_loss(l_inner, l_cross, weights)
            clean = ad.reshape(x, (bsz, n_channels, N_BANDS))
            from .encoders import decode, fuse
            logits = decode(fuse(scalp_encode(to_scalp(flat), model.scalp),
                                 topo_encode(clean, laplacian, model.topo)),
                            model.decoder)
            return joint_loss(l_pt, cross_entropy(logits, labels), weights)

        report = grad_check(f, Tensor(feats0), step=step, tol=tol)
        worst = max(worst, report.max_rel_err)
    return OracleCheck(name="full_pipeline", n_instances=n_instances,
                       max_rel_err=worst, passed=bool(worst <= tol))
