"""Property suites run by the ``verify`` command.

Each suite compares a production code path against an oracle from
:mod:`eventface.oracles` (or against finite differences) on seeded random
instances and returns a :class:`SuiteResult`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import oracles
from .autodiff import Tensor
from .backbone import Backbone, BackboneConfig, LoraConvLayer, lora_forward, lora_merge
from .events import EventStream, accumulate_window
from .loss import AdaFaceHead, adaface_loss
from .metrics import ScoreSet, compute_cmc, compute_eer, compute_roc_auc, compute_tar_at_far
from .motion import MpeParams, mpe_sequence
from .stm import (
    StmParams,
    bi_wkv,
    channel_mix,
    deinterleave,
    interleave,
    octa_shift,
    sequential_arrange,
    spatial_mix,
)

__all__ = ["SuiteResult", "SUITES", "run_suites", "format_table", "GRAD_TOL"]

GRAD_TOL = 1e-4


@dataclass
class SuiteResult:
    name: str
    passed: bool
    checks: int
    worst: float
    seconds: float = 0.0
    failures: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# gradient instances: rng -> (fn, inputs)
# ---------------------------------------------------------------------------


def _p(rng, *shape, scale=1.0):
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True)


def _g_conv(rng):
    stride = int(rng.integers(1, 3))
    x, w = _p(rng, 2, 3, 5, 5), _p(rng, 4, 3, 3, 3)
    return (lambda x, w: ad.conv2d(x, w, stride=stride, padding=1)), [x, w]


def _g_depthwise(rng):
    k = int(rng.choice([3, 5]))
    return ad.depthwise_conv2d, [_p(rng, 2, 3, 5, 5), _p(rng, 3, 1, k, k)]


def _g_linear(rng):
    return ad.linear, [_p(rng, 3, 4, 5), _p(rng, 5, 6)]


def _g_layer_norm(rng):
    return ad.layer_norm, [_p(rng, 4, 6), _p(rng, 6), _p(rng, 6)]


def _g_sigmoid(rng):
    return ad.sigmoid, [_p(rng, 3, 4, scale=3.0)]


def _g_relu_sq(rng):
    x = rng.normal(size=(3, 4))
    x[np.abs(x) < 1e-2] = 0.5  # stay away from the kink for finite differences
    return ad.relu_squared, [Tensor(x, requires_grad=True)]


def _g_bi_wkv(method):
    def make(rng):
        # L >= 3: for L <= 2 every off-diagonal distance term is zero, w has no
        # effect and its finite-difference "gradient" is pure rounding noise
        L, C = int(rng.integers(3, 8)), int(rng.integers(1, 4))
        args = [_p(rng, 2, L, C), _p(rng, 2, L, C), Tensor(rng.uniform(0.1, 2.0, C), requires_grad=True),
                _p(rng, C)]
        return (lambda k, v, w, u: bi_wkv(k, v, w, u, method=method)), args
    return make


def _g_octa(rng):
    mu = float(rng.uniform())
    return (lambda x: octa_shift(x, mu)), [_p(rng, 2, 3, 4, 8)]


def _stm_instance(rng):
    params = StmParams.init(8, rng, out_std=0.3, wkv_method=str(rng.choice(["naive", "scan"])))
    shape = (1, 2, 2, 3, 8)
    return params, _p(rng, *shape), _p(rng, *shape)


def _g_spatial_mix(rng):
    params, xs, xm = _stm_instance(rng)
    names = ["w1", "u1", "w2", "u2", "W_K_s", "W_O_m", "ln_s_gamma"]
    ps = [params[n] for n in names]

    def fn(xs, xm, *vals):
        for n, v in zip(names, vals):
            params.tensors[n] = v
        return spatial_mix(xs, xm, params)

    return fn, [xs, xm, *ps]


def _g_channel_mix(rng):
    params, xs, xm = _stm_instance(rng)
    names = ["W_K_cm", "W_V_cm", "ln_cm_beta"]
    ps = [params[n] for n in names]

    def fn(xs, xm, *vals):
        for n, v in zip(names, vals):
            params.tensors[n] = v
        return channel_mix(xs, xm, params)

    return fn, [xs, xm, *ps]


def _g_mpe(rng):
    params = MpeParams.init(4, 3, rng, kernels=(5, 3))
    feats = _p(rng, 1, 3, 4, 4, 4)

    def fn(f, r, dl, ds, t):
        return mpe_sequence(f, MpeParams(r, dl, ds, t))

    return fn, [feats, params.reduce, params.dw_large, params.dw_small, params.temporal]


def _g_adaface(rng):
    head = AdaFaceHead(5, 3, rng, margin=float(rng.uniform(0.0, 0.6)), scale=float(rng.uniform(4, 32)))
    labels = rng.integers(0, 3, size=4)
    quality = rng.uniform(-1, 1, size=4)

    def fn(e, w):
        head.weight = w
        return adaface_loss(e, labels, head, update_stats=False, quality=quality)

    return fn, [_p(rng, 4, 5), head.weight]


GRADIENT_CASES: dict[str, Callable] = {
    "conv2d": _g_conv,
    "depthwise_conv2d": _g_depthwise,
    "linear": _g_linear,
    "layer_norm": _g_layer_norm,
    "sigmoid": _g_sigmoid,
    "relu_squared": _g_relu_sq,
    "bi_wkv[naive]": _g_bi_wkv("naive"),
    "bi_wkv[scan]": _g_bi_wkv("scan"),
    "octa_shift": _g_octa,
    "spatial_mix": _g_spatial_mix,
    "channel_mix": _g_channel_mix,
    "mpe": _g_mpe,
    "adaface_loss": _g_adaface,
}


def suite_gradients(seed: int = 0, instances: int = 5) -> SuiteResult:
    worst, fails, n = 0.0, [], 0
    for name, make in GRADIENT_CASES.items():
        for i in range(instances):
            rng = np.random.default_rng([seed, 11, i, len(name)])
            fn, inputs = make(rng)
            err = ad.gradcheck(fn, inputs, eps=1e-6, seed=i)
            n += 1
            worst = max(worst, err)
            if not err <= GRAD_TOL:
                fails.append(f"{name}#{i}: rel err {err:.2e}")
    return SuiteResult("gradients", not fails, n, worst, failures=fails)


# ---------------------------------------------------------------------------
# forward oracles
# ---------------------------------------------------------------------------


def suite_bi_wkv(seed: int = 0, instances: int = 100) -> SuiteResult:
    """Both stabilised paths (naive O(L^2) and scan O(L)) against the direct
    double loop, max abs difference <= 1e-10."""
    worst, fails = 0.0, []
    for i in range(instances):
        rng = np.random.default_rng([seed, 12, i])
        L, C = int(rng.integers(1, 65)), int(rng.integers(1, 17))
        k, v = rng.normal(size=(L, C)), rng.normal(size=(L, C))
        w, u = rng.uniform(0.0, 3.0, C), rng.normal(size=C)
        ref = oracles.bi_wkv_loop(k, v, w, u)
        for method in ("naive", "scan"):
            with ad.no_grad():
                got = bi_wkv(Tensor(k), Tensor(v), Tensor(w), Tensor(u), method=method).data
            err = float(np.abs(got - ref).max())
            worst = max(worst, err)
            if not err <= 1e-10:
                fails.append(f"#{i} L={L} C={C}: {method} vs loop {err:.2e}")
    return SuiteResult("bi_wkv_oracle", not fails, instances, worst, failures=fails)


def suite_lora_merge(seed: int = 0, instances: int = 50, inject_fault: bool = False) -> SuiteResult:
    """Merged conv equals the adapted forward pass; frozen weights survive an
    optimiser step bit-for-bit."""
    worst, fails = 0.0, []
    for i in range(instances):
        rng = np.random.default_rng([seed, 13, i])
        c_in, c_out, k = int(rng.integers(2, 7)), int(rng.integers(1, 7)), int(rng.choice([1, 3, 5]))
        layer = LoraConvLayer(Tensor(rng.normal(size=(c_out, c_in, k, k))), padding=(k - 1) // 2)
        layer.attach(int(rng.integers(1, c_in)), rng)
        layer.w_b.data[:] = rng.normal(size=layer.w_b.shape)  # non-trivial adapters
        x = Tensor(rng.normal(size=(2, c_in, 6, 6)))
        with ad.no_grad():
            adapted = lora_forward(x, layer, 1, layer.padding).data
            merged_w = lora_merge(layer)
            if inject_fault and i == 0:
                merged_w = merged_w.copy()
                merged_w.flat[0] += 1e-3
            merged = ad.conv2d(x, Tensor(merged_w), padding=layer.padding).data
        err = float(np.abs(merged - adapted).max())
        worst = max(worst, err)
        if not err <= 1e-10:
            fails.append(f"#{i}: |conv(merged) - lora_forward| = {err:.2e}")
    # freeze invariant on a small backbone
    rng = np.random.default_rng([seed, 14])
    bb = Backbone(BackboneConfig(stage_channels=(8, 16), input_hw=8, embed_dim=8), rng)
    for t in bb.base_parameters():
        t.requires_grad = False
    bb.attach_lora(3, rng)
    before = {k: v.data.copy() for k, v in bb.named_parameters().items() if k.startswith("backbone.")}
    x = Tensor(rng.normal(size=(2, 3, 8, 8)))
    h = x
    for s in range(2):
        h = bb.stage(h, s)
    z = bb.project(h)
    ad.tsum(z * z).backward()
    for p in bb.adapter_parameters():
        p.data -= 0.1 * p.grad
    for k, v in bb.named_parameters().items():
        if k in before and not np.array_equal(before[k], v.data):
            fails.append(f"frozen weight {k} changed during an optimiser step")
    return SuiteResult("lora_merge", not fails, instances + 1, worst, failures=fails)


def _random_stream(rng) -> EventStream:
    w, h = int(rng.integers(1, 12)), int(rng.integers(1, 12))
    n = int(rng.integers(0, 400))
    t = np.sort(rng.integers(0, 1000, size=n))
    return EventStream(
        t=t.astype(np.int64),
        x=rng.integers(0, w, size=n).astype(np.int64),
        y=rng.integers(0, h, size=n).astype(np.int64),
        p=rng.choice([-1, 1], size=n).astype(np.int64),
        width=w,
        height=h,
    )


def suite_accumulation(seed: int = 0, instances: int = 100) -> SuiteResult:
    fails = []
    for i in range(instances):
        rng = np.random.default_rng([seed, 15, i])
        s = _random_stream(rng)
        # bias some windows to start exactly on an event timestamp
        t0 = int(rng.choice(s.t)) if len(s.t) and rng.uniform() < 0.5 else int(rng.integers(-50, 1000))
        dt = int(rng.integers(1, 500))
        maps = accumulate_window(s, t0, dt)
        pos, neg = oracles.accumulate_loop(s.t, s.x, s.y, s.p, s.width, s.height, t0, dt)
        if not (np.array_equal(maps.gamma_pos, pos) and np.array_equal(maps.gamma_neg, neg)):
            fails.append(f"#{i}: counts differ from the per-event oracle")
    # half-open boundaries: an event at t_start counts, one at t_start + dt does not
    edge = EventStream(
        t=np.array([10, 20], dtype=np.int64), x=np.array([0, 1], dtype=np.int64),
        y=np.array([0, 0], dtype=np.int64), p=np.array([1, 1], dtype=np.int64), width=2, height=1,
    )
    m = accumulate_window(edge, 10, 10)
    if m.gamma_pos.tolist() != [[1, 0]]:
        fails.append("half-open window [10, 20) must hold the event at 10 and not the one at 20")
    if accumulate_window(edge, 20, 10).gamma_pos.tolist() != [[0, 1]]:
        fails.append("event at 20 must fall in [20, 30)")
    return SuiteResult("accumulation", not fails, instances + 2, 0.0, failures=fails)


def suite_arrangement(seed: int = 0, instances: int = 100) -> SuiteResult:
    fails = []
    for i in range(instances):
        rng = np.random.default_rng([seed, 16, i])
        b, f, h, w, c = (int(rng.integers(1, 4)) for _ in range(5))
        grid = (f, h, w, c)
        xs, xm = Tensor(rng.normal(size=(b,) + grid)), Tensor(rng.normal(size=(b,) + grid))
        scan = str(rng.choice(["row_major", "col_major"]))
        for name, fn in (("interleave", interleave), ("sequential", sequential_arrange)):
            seq, perm = fn(xs, xm, scan)
            s2, m2 = deinterleave(seq, perm, grid)
            if not (np.array_equal(s2.data, xs.data) and np.array_equal(m2.data, xm.data)):
                fails.append(f"#{i} {name}/{scan}: round trip is not bitwise exact")
    return SuiteResult("arrangement", not fails, instances, 0.0, failures=fails)


def _random_scores(rng) -> ScoreSet:
    ng, ni = int(rng.integers(1, 30)), int(rng.integers(1, 30))
    if rng.uniform() < 0.5:  # coarse grid -> plenty of ties
        return ScoreSet(rng.integers(-5, 6, ng) / 5.0, rng.integers(-5, 6, ni) / 5.0)
    return ScoreSet(np.tanh(rng.normal(0.5, 1.0, ng)), np.tanh(rng.normal(-0.5, 1.0, ni)))


def suite_metrics(seed: int = 0, instances: int = 50) -> SuiteResult:
    worst, fails = 0.0, []
    for i in range(instances):
        rng = np.random.default_rng([seed, 17, i])
        sc = _random_scores(rng)
        g, im = sc.genuine.tolist(), sc.impostor.tolist()
        far = float(rng.choice([0.01, 0.1, 0.3]))
        pairs = [
            ("eer", compute_eer(sc), oracles.eer_sweep(g, im)),
            ("auc", compute_roc_auc(sc), oracles.auc_pairwise(g, im)),
            ("tar", compute_tar_at_far(sc, far), oracles.tar_at_far_sweep(g, im, far)),
        ]
        # strictly monotone transform must leave every metric unchanged
        mono = ScoreSet(np.exp(3.0 * sc.genuine) - 7.0, np.exp(3.0 * sc.impostor) - 7.0)
        pairs += [
            ("eer-monotone", compute_eer(mono), compute_eer(sc)),
            ("auc-monotone", compute_roc_auc(mono), compute_roc_auc(sc)),
            ("tar-monotone", compute_tar_at_far(mono, far), compute_tar_at_far(sc, far)),
        ]
        n_g, n_p, d = int(rng.integers(1, 9)), int(rng.integers(1, 9)), int(rng.integers(2, 6))
        gal = rng.normal(size=(n_g, d))
        gl = rng.integers(0, 4, size=n_g)
        probes = rng.normal(size=(n_p, d))
        pl = rng.choice(gl, size=n_p)
        cmc = compute_cmc(gal, gl, probes, pl, max_rank=5)
        ref = oracles.cmc_loop(gal, gl, probes, pl, 5)
        pairs += [(f"cmc@{k + 1}", cmc[k], ref[k]) for k in range(5)]
        for name, got, want in pairs:
            err = abs(got - want)
            worst = max(worst, err)
            if not err <= 1e-12:
                fails.append(f"#{i} {name}: {got!r} vs oracle {want!r}")
    return SuiteResult("metrics", not fails, instances, worst, failures=fails)


def suite_octa_shift(seed: int = 0, instances: int = 20) -> SuiteResult:
    worst, fails = 0.0, []
    for i in range(instances):
        rng = np.random.default_rng([seed, 18, i])
        x = rng.normal(size=(int(rng.integers(1, 3)), int(rng.integers(1, 6)), int(rng.integers(1, 6)), 8 * int(rng.integers(1, 3))))
        mu = float(rng.uniform())
        with ad.no_grad():
            got = octa_shift(Tensor(x), mu).data
        err = float(np.abs(got - oracles.octa_shift_loop(x, mu)).max())
        worst = max(worst, err)
        if err != 0.0:
            fails.append(f"#{i}: differs from the index oracle by {err:.2e}")
    return SuiteResult("octa_shift_oracle", not fails, instances, worst, failures=fails)


SUITES: dict[str, Callable[..., SuiteResult]] = {
    "gradients": suite_gradients,
    "bi_wkv_oracle": suite_bi_wkv,
    "lora_merge": suite_lora_merge,
    "accumulation": suite_accumulation,
    "arrangement": suite_arrangement,
    "metrics": suite_metrics,
    "octa_shift_oracle": suite_octa_shift,
}


def run_suites(names=None, seed: int = 0, inject_fault: str | None = None) -> list[SuiteResult]:
    names = list(SUITES) if names is None else list(names)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suites {unknown}; available: {list(SUITES)}")
    if inject_fault not in (None, "merge"):
        raise ValueError(f"unknown fault {inject_fault!r}; only 'merge' is supported")
    results = []
    for name in names:
        start = time.perf_counter()
        if name == "lora_merge":
            res = suite_lora_merge(seed, inject_fault=inject_fault == "merge")
        else:
            res = SUITES[name](seed)
        res.seconds = time.perf_counter() - start
        results.append(res)
    return results


def format_table(results: list[SuiteResult]) -> str:
    rows = [f"{'suite':<20} {'checks':>6} {'worst':>10} {'time[s]':>8}  status"]
    for r in results:
        rows.append(
            f"{r.name:<20} {r.checks:>6} {r.worst:>10.2e} {r.seconds:>8.2f}  {'PASS' if r.passed else 'FAIL'}"
        )
        rows += [f"    - {msg}" for msg in r.failures[:5]]
    return "\n".join(rows) + "\n"
