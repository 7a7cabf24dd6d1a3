"""Acceptance suite: one test per release criterion.

Each test prints a single ``criterion N [...]: PASS/FAIL`` line (visible
with ``pytest -s``) and asserts the criterion at its stated tolerance.
Everything runs on synthetic data with independently computed oracles.
"""

import itertools
import time

import numpy as np
import pytest

from bandreg import io
from bandreg.cli import main
from bandreg.deform import (
    exp_velocity,
    exp_velocity_adjoint,
    identity_coords,
    jacobian,
    warp,
    warp_gradient,
)
from bandreg.grids import (
    DenseField,
    LabelMap,
    LowResField,
    ScalarImage,
    make_grid,
    make_window,
)
from bandreg.metrics import dice, hd95, warp_labels
from bandreg.objective import LossConfig, ncc_local, smoothness, total_loss
from bandreg.optimize import OptimConfig, register
from bandreg.spectral import decode, decode_adjoint, dft, shift_center
from bandreg.synth import SynthConfig, _border_taper, make_pair

import oracles


def report(num, name, checks):
    ok = all(passed for passed, _ in checks)
    print(f"criterion {num:2d} [{name}]: {'PASS' if ok else 'FAIL'}")
    for passed, detail in checks:
        if not passed:
            print(f"    failed: {detail}")
    assert ok, f"criterion {num} [{name}]"


def random_lowres(window, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    shape = (window.parent.ndim,) + window.band_dims
    return LowResField(window, scale * rng.normal(size=shape))


def smooth_bounded_velocity(grid, seed, grad_cap=0.5, mag_cap=32.0):
    """Random smooth velocity: band-limited draw with a capped discrete
    gradient plus a random translation filling the magnitude budget."""
    w = make_window(grid, (4, 4))
    rng = np.random.default_rng(seed)
    draws = rng.normal(size=(2,) + w.band_dims)
    freqs = [(np.fft.fftfreq(mc) * mc / (mc // 2)) ** 2 for mc in w.band_dims]
    r2 = freqs[0][:, None] + freqs[1][None, :]
    smooth = np.fft.ifftn(np.fft.fftn(draws, axes=(1, 2)) * np.exp(-12.0 * r2), axes=(1, 2)).real
    smooth *= _border_taper(w.band_dims[0])[None, :, None]
    smooth *= _border_taper(w.band_dims[1])[None, None, :]
    v = decode(LowResField(w, smooth)).channels
    gmax = max(np.abs(np.diff(v[c], axis=a)).max() for c in range(2) for a in range(2))
    v = v * (grad_cap / gmax)
    budget = mag_cap - np.abs(v).max()
    const = rng.uniform(-1.0, 1.0, size=2) * budget / np.sqrt(2.0)
    v = v + const[:, None, None]
    assert np.abs(v).max() <= mag_cap + 1e-9
    return DenseField(grid, v)


def test_criterion_1_subsample_identity_bruteforce():
    start = time.perf_counter()
    checks = []
    w = make_window(make_grid((8, 8)), (4, 4))
    phi0 = decode(random_lowres(w, seed=101))
    sub = phi0.channels[:, ::2, ::2]  # Nyquist-free by construction
    phi = decode(LowResField(w, sub))
    err = np.abs(phi.channels[:, ::2, ::2] - sub).max()
    checks.append((err < 1e-9, f"subsample identity error {err:.2e}"))
    for ch in range(2):
        reference = oracles.decode_bruteforce(sub[ch], (8, 8), w.gain)
        diff = np.abs(phi.channels[ch] - reference).max()
        checks.append((diff < 1e-9, f"channel {ch} brute-force mismatch {diff:.2e}"))
    elapsed = time.perf_counter() - start
    checks.append((elapsed < 1.0, f"runtime {elapsed:.2f}s"))
    report(1, "subsample identity vs brute force", checks)


def test_criterion_2_band_limitedness():
    start = time.perf_counter()
    cases = (
        [((64, 96), (16, 24))] * 20
        + [((96, 112), (24, 28))] * 20
        + [((80, 64), (20, 16))] * 20
        + [((16, 24, 16), (4, 6, 4))] * 20
        + [((32, 48, 48), (8, 12, 12))] * 20
    )
    worst = 0.0
    for seed, (dims, band) in enumerate(cases):
        w = make_window(make_grid(dims), band)
        phi = decode(random_lowres(w, seed=200 + seed))
        centered = shift_center(dft(phi)).channels
        outside = np.abs(centered[:, ~w.mask_centered()]).max()
        worst = max(worst, outside / np.abs(centered).max())
    elapsed = time.perf_counter() - start
    checks = [
        (worst < 1e-9, f"worst out-of-window ratio {worst:.2e}"),
        (elapsed < 30.0, f"runtime {elapsed:.1f}s"),
    ]
    report(2, "strict band-limitedness, 100 fields", checks)


def test_criterion_3_zero_fraction_exact():
    from fractions import Fraction

    checks = []
    for dims, band in [((64, 96), (16, 24)), ((160, 192), (40, 48)), ((16, 24, 16), (4, 6, 4))]:
        w = make_window(make_grid(dims), band)
        fraction = Fraction(w.parent.voxels - w.band_voxels, w.parent.voxels)
        expected = 1 - Fraction(1, w.gain)
        checks.append((fraction == expected, f"{dims}/{band}: {fraction} != {expected}"))
    w = make_window(make_grid((64, 64)), (16, 16))
    fraction = Fraction(w.parent.voxels - w.band_voxels, w.parent.voxels)
    checks.append((fraction == Fraction(15, 16), f"a=b=4 gives {fraction}, want 15/16"))
    report(3, "padded-spectrum zero fraction", checks)


def test_criterion_4_adjoint_and_gradient_suite():
    start = time.perf_counter()
    checks = []
    rng = np.random.default_rng(400)

    # decode adjoint inner-product identity, < 1e-9 relative
    w = make_window(make_grid((8, 12)), (4, 6))
    worst = 0.0
    for trial in range(50):
        s = random_lowres(w, seed=410 + trial)
        g = DenseField(w.parent, np.random.default_rng(460 + trial).normal(size=(2, 8, 12)))
        lhs = float(np.vdot(decode(s).channels, g.channels))
        rhs = float(np.vdot(s.channels, decode_adjoint(g, w).channels))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-12))
    checks.append((worst < 1e-9, f"adjoint identity rel err {worst:.2e}"))

    # warp gradient vs central differences, < 1e-5
    grid = make_grid((16, 16))
    img = ScalarImage(grid, rng.normal(size=grid.dims))
    phi_arr = rng.uniform(0.1, 0.9, size=(2, 16, 16))
    g_out = rng.normal(size=grid.dims)
    analytic = warp_gradient(img, DenseField(grid, phi_arr), g_out).channels
    h, worst = 1e-6, 0.0
    for _ in range(50):
        ch = rng.integers(0, 2)
        idx = tuple(rng.integers(1, 15, size=2))
        plus, minus = phi_arr.copy(), phi_arr.copy()
        plus[(ch, *idx)] += h
        minus[(ch, *idx)] -= h
        fd = float(((warp(img, DenseField(grid, plus)).values
                     - warp(img, DenseField(grid, minus)).values) * g_out).sum()) / (2 * h)
        worst = max(worst, abs(fd - analytic[(ch, *idx)]) / max(abs(fd), 1e-6))
    checks.append((worst < 1e-5, f"warp gradient FD rel err {worst:.2e}"))

    # smoothness gradient, < 1e-6
    lanes = rng.normal(size=(2, 12, 12))
    field = DenseField(make_grid((12, 12)), lanes)
    _, sgrad = smoothness(field)
    worst = 0.0
    for _ in range(50):
        ch = rng.integers(0, 2)
        idx = tuple(rng.integers(0, 12, size=2))
        plus, minus = lanes.copy(), lanes.copy()
        plus[(ch, *idx)] += 1e-6
        minus[(ch, *idx)] -= 1e-6
        fd = (smoothness(DenseField(field.grid, plus))[0]
              - smoothness(DenseField(field.grid, minus))[0]) / 2e-6
        worst = max(worst, abs(fd - sgrad[(ch, *idx)]) / max(abs(fd), 1e-9))
    checks.append((worst < 1e-6, f"smoothness gradient FD rel err {worst:.2e}"))

    # local NCC gradient, < 1e-4
    grid = make_grid((12, 12))
    cfg = LossConfig(similarity="ncc", ncc_window=5)
    a0 = rng.uniform(size=grid.dims)
    b_img = ScalarImage(grid, rng.uniform(size=grid.dims))
    _, ngrad = ncc_local(ScalarImage(grid, a0), b_img, cfg)
    worst = 0.0
    for _ in range(50):
        idx = tuple(rng.integers(0, 12, size=2))
        plus, minus = a0.copy(), a0.copy()
        plus[idx] += 1e-6
        minus[idx] -= 1e-6
        fd = (ncc_local(ScalarImage(grid, plus), b_img, cfg)[0]
              - ncc_local(ScalarImage(grid, minus), b_img, cfg)[0]) / 2e-6
        worst = max(worst, abs(fd - ngrad[idx]) / max(abs(fd), abs(ngrad[idx]), 1e-8))
    checks.append((worst < 1e-4, f"ncc gradient FD rel err {worst:.2e}"))

    # exponential adjoint, < 1e-4
    grid = make_grid((16, 16))
    w16 = make_window(grid, (4, 4))
    v = decode(random_lowres(w16, seed=444)).channels
    v = v * (2.0 / np.abs(v).max())
    g = DenseField(grid, rng.normal(size=(2, 16, 16)))
    adj = exp_velocity_adjoint(DenseField(grid, v), g, steps=7).channels
    h, worst = 1e-5, 0.0
    for _ in range(50):
        ch = rng.integers(0, 2)
        idx = tuple(rng.integers(0, 16, size=2))
        plus, minus = v.copy(), v.copy()
        plus[(ch, *idx)] += h
        minus[(ch, *idx)] -= h
        obj_p = float((exp_velocity(DenseField(grid, plus), 7).channels * g.channels).sum())
        obj_m = float((exp_velocity(DenseField(grid, minus), 7).channels * g.channels).sum())
        fd = (obj_p - obj_m) / (2 * h)
        worst = max(worst, abs(fd - adj[(ch, *idx)]) / max(abs(fd), abs(adj[(ch, *idx)]), 1e-6))
    checks.append((worst < 1e-4, f"exp adjoint FD rel err {worst:.2e}"))

    # end-to-end loss gradient on 16x24, both modes, < 1e-4
    grid = make_grid((16, 24))
    wloss = make_window(grid, (4, 6))
    moving = ScalarImage(grid, rng.uniform(size=grid.dims))
    fixed = ScalarImage(grid, rng.uniform(size=grid.dims))
    for diffeo in (False, True):
        s0 = 0.5 * rng.normal(size=(2, 4, 6))
        _, grad, _ = total_loss(LowResField(wloss, s0), moving, fixed, LossConfig(), diffeo=diffeo)
        h, worst = 1e-5, 0.0
        for _ in range(50):
            ch = rng.integers(0, 2)
            idx = tuple(rng.integers(0, n) for n in (4, 6))
            plus, minus = s0.copy(), s0.copy()
            plus[(ch, *idx)] += h
            minus[(ch, *idx)] -= h
            lp, _, _ = total_loss(LowResField(wloss, plus), moving, fixed, LossConfig(), diffeo=diffeo)
            lm, _, _ = total_loss(LowResField(wloss, minus), moving, fixed, LossConfig(), diffeo=diffeo)
            fd = (lp - lm) / (2 * h)
            an = grad.channels[(ch, *idx)]
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-8))
        checks.append((worst < 1e-4, f"total_loss FD rel err (diffeo={diffeo}) {worst:.2e}"))

    elapsed = time.perf_counter() - start
    checks.append((elapsed < 60.0, f"runtime {elapsed:.1f}s"))
    report(4, "adjoint and gradient suite", checks)


def test_criterion_5_diffeomorphic_exponential():
    start = time.perf_counter()
    grid = make_grid((64, 64))
    worst_fold, max_mag = 0.0, 0.0
    for seed in range(50):
        v = smooth_bounded_velocity(grid, 500 + seed)
        max_mag = max(max_mag, np.abs(v.channels).max())
        worst_fold = max(worst_fold, jacobian(exp_velocity(v, 7)).folding_percent)
    elapsed = time.perf_counter() - start
    checks = [
        (worst_fold == 0.0, f"worst folding {worst_fold}%"),
        (max_mag <= 32.0, f"velocity magnitude {max_mag:.1f} exceeds 32"),
        (elapsed < 30.0, f"runtime {elapsed:.1f}s"),
    ]
    report(5, "7-step exponential is fold-free", checks)


@pytest.fixture(scope="module")
def recovery_runs():
    """Criterion-6 registrations, reused by the NCC criterion."""
    runs = []
    for seed in range(5):
        pair = make_pair(SynthConfig(dims=(64, 96), band_dims=(16, 24), amplitude=3.0, seed=seed))
        cfg = OptimConfig(band_dims=(16, 24), iterations=300,
                          loss=LossConfig.for_similarity("mse", 0.01))
        start = time.perf_counter()
        _, phi, rep = register(pair.moving, pair.fixed, cfg)
        elapsed = time.perf_counter() - start
        d = dice(warp_labels(pair.labels_moving, phi), pair.labels_fixed)[1]
        runs.append(dict(pair=pair, phi=phi, report=rep, seconds=elapsed, dice=d))
    return runs


def test_criterion_6_synthetic_recovery(recovery_runs):
    checks = []
    interior = (slice(8, -8), slice(8, -8))
    for seed, run in enumerate(recovery_runs):
        pair, phi, rep = run["pair"], run["phi"], run["report"]
        mse0 = float(np.mean((pair.moving.values - pair.fixed.values) ** 2))
        ratio = rep.final_similarity / mse0
        epe = np.sqrt(((phi.channels - pair.phi_gt.channels) ** 2).sum(axis=0))[interior].mean()
        checks.append((ratio <= 0.10, f"seed {seed}: MSE ratio {ratio:.3f}"))
        checks.append((run["dice"] >= 0.90, f"seed {seed}: dice {run['dice']:.3f}"))
        checks.append((epe <= 0.5, f"seed {seed}: endpoint error {epe:.3f}"))
        checks.append((run["seconds"] < 60.0, f"seed {seed}: {run['seconds']:.1f}s"))
    # diffeomorphic mode on the same pairs
    for seed, run in enumerate(recovery_runs):
        pair = run["pair"]
        cfg = OptimConfig(band_dims=(16, 24), iterations=300, diffeo=True,
                          loss=LossConfig.for_similarity("mse", 0.01))
        start = time.perf_counter()
        _, phi_d, rep_d = register(pair.moving, pair.fixed, cfg)
        elapsed = time.perf_counter() - start
        d = dice(warp_labels(pair.labels_moving, phi_d), pair.labels_fixed)[1]
        checks.append((rep_d.folding_percent == 0.0, f"seed {seed}: diffeo folding {rep_d.folding_percent}"))
        checks.append((abs(d - run["dice"]) <= 0.03, f"seed {seed}: diffeo dice {d:.3f} vs plain {run['dice']:.3f}"))
        checks.append((elapsed < 60.0, f"seed {seed}: diffeo {elapsed:.1f}s"))
    report(6, "synthetic registration recovery", checks)


def test_criterion_7_ncc_handles_intensity_remap(recovery_runs):
    gamma = 1.5
    checks = []
    ncc_dices, mse_remap_dices, mse_plain_dices = [], [], []
    for seed, run in enumerate(recovery_runs):
        pair = run["pair"]
        remapped = ScalarImage(pair.fixed.grid, pair.fixed.values ** gamma)
        mse_plain_dices.append(run["dice"])

        cfg_mse = OptimConfig(band_dims=(16, 24), iterations=300,
                              loss=LossConfig.for_similarity("mse", 0.01))
        _, phi_m, _ = register(pair.moving, remapped, cfg_mse)
        mse_remap_dices.append(dice(warp_labels(pair.labels_moving, phi_m), pair.labels_fixed)[1])

        cfg_ncc = OptimConfig(band_dims=(16, 24), iterations=300,
                              loss=LossConfig.for_similarity("ncc", 5.0, ncc_window=9))
        _, phi_n, _ = register(pair.moving, remapped, cfg_ncc)
        ncc_dices.append(dice(warp_labels(pair.labels_moving, phi_n), pair.labels_fixed)[1])

    degradation = float(np.mean(mse_plain_dices) - np.mean(mse_remap_dices))
    ncc_mean = float(np.mean(ncc_dices))
    checks.append((degradation >= 0.05,
                   f"MSE degradation {degradation:.3f} under the remap (must be >= 0.05)"))
    checks.append((ncc_mean >= 0.85, f"NCC mean dice {ncc_mean:.3f}"))
    report(7, "NCC robust to intensity remap", checks)


def test_criterion_8_metric_oracles():
    checks = []
    rng = np.random.default_rng(800)
    for trial in range(10):
        dims = tuple(rng.choice([16, 24, 32], size=2))
        values_a = np.zeros(dims, dtype=int)
        values_b = np.zeros(dims, dtype=int)
        for lab in (1, 2):
            for values in (values_a, values_b):
                center = rng.uniform(4, np.array(dims) - 4)
                radius = rng.uniform(2.0, 5.0)
                coords = np.indices(dims)
                mask = ((coords[0] - center[0]) ** 2 + (coords[1] - center[1]) ** 2) < radius**2
                values[mask] = lab
        a = LabelMap(make_grid(dims), values_a)
        b = LabelMap(make_grid(dims), values_b)
        per_label, _, _ = dice(a, b)
        for lab, got in per_label.items():
            want = oracles.dice_bruteforce(values_a, values_b, lab)
            checks.append((got == want, f"trial {trial} dice[{lab}] {got} != {want}"))
        for lab in per_label:
            if (values_a == lab).any() and (values_b == lab).any():
                got = hd95(a, b, lab)
                want = oracles.hd95_bruteforce(values_a == lab, values_b == lab)
                checks.append((got == want, f"trial {trial} hd95[{lab}] {got} != {want}"))

    # folding vs an independent per-voxel determinant recomputation
    grid = make_grid((16, 16))
    rng2 = np.random.default_rng(801)
    phi = DenseField(grid, rng2.normal(scale=1.5, size=(2, 16, 16)))
    rep = jacobian(phi)
    t = identity_coords(grid) + phi.channels
    neg = 0
    for i, j in itertools.product(range(16), range(16)):
        i2 = i + 1 if i < 15 else i - 1
        j2 = j + 1 if j < 15 else j - 1
        si = 1.0 if i < 15 else -1.0
        sj = 1.0 if j < 15 else -1.0
        d00 = (t[0][i2, j] - t[0][i, j]) * si
        d01 = (t[0][i, j2] - t[0][i, j]) * sj
        d10 = (t[1][i2, j] - t[1][i, j]) * si
        d11 = (t[1][i, j2] - t[1][i, j]) * sj
        if d00 * d11 - d01 * d10 < 0:
            neg += 1
    want = 100.0 * neg / 256
    checks.append((rep.folding_percent == want, f"folding {rep.folding_percent} != {want}"))
    report(8, "metric brute-force oracles", checks)


def test_criterion_9_io_round_trips(tmp_path):
    import struct

    checks = []
    grid = make_grid((6, 8))
    rng = np.random.default_rng(900)
    img = ScalarImage(grid, rng.normal(size=grid.dims).astype(np.float32).astype(np.float64))

    plain = tmp_path / "v.nii"
    io.write_nifti(img, plain)
    back, _ = io.read_nifti(plain)
    checks.append((np.array_equal(back.values, img.values), "plain round trip"))

    gz = tmp_path / "v.nii.gz"
    io.write_nifti(img, gz)
    back, _ = io.read_nifti(gz)
    checks.append((np.array_equal(back.values, img.values), "gzip round trip"))

    fmt = "<i10s18sihbb8h3fhhhh8ffffhbbffffii80s24shh6f12f16s4s"
    blob = bytearray(plain.read_bytes())
    fields = struct.unpack_from(fmt, blob, 0)
    swapped = struct.pack(">" + fmt[1:], *fields)
    payload = np.frombuffer(blob[352:], dtype="<f4").astype(">f4").tobytes()
    big = tmp_path / "big.nii"
    big.write_bytes(swapped + blob[348:352] + payload)
    back, _ = io.read_nifti(big)
    checks.append((np.array_equal(back.values, img.values), "big-endian round trip"))

    field = DenseField(grid, rng.normal(size=(2, 6, 8)))
    io.write_field(field, tmp_path / "f.json", dtype="float64")
    back_f = io.read_field(tmp_path / "f.json")
    checks.append((np.array_equal(back_f.channels, field.channels), "manifest round trip"))

    for render, args in (
        (io.render_slice, (img,)),
        (io.render_grid, (DenseField(grid, 0.5 * rng.normal(size=(2, 6, 8))),)),
        (io.render_spectrum, (field,)),
    ):
        p1, p2 = tmp_path / "r1.out", tmp_path / "r2.out"
        render(*args, p1)
        render(*args, p2)
        checks.append((p1.read_bytes() == p2.read_bytes(), f"{render.__name__} deterministic"))
    report(9, "i/o round trips and render determinism", checks)


def test_criterion_10_register_determinism(tmp_path):
    out = tmp_path / "pair"
    main(["synth", "--dims", "32,48", "--band", "8,12", "--amplitude", "2.0",
          "--seed", "2", "--out", str(out)])
    payloads = []
    for name in ("run1", "run2"):
        run = tmp_path / name
        code = main([
            "register", "--moving", str(out / "moving.nii"), "--fixed", str(out / "fixed.nii"),
            "--band", "8,12", "--iters", "80", "--seed", "0", "--out", str(run),
        ])
        assert code == 0
        payloads.append((run / "phi.raw").read_bytes())
    checks = [(payloads[0] == payloads[1], "phi payloads differ between runs")]
    report(10, "bit-identical registration reruns", checks)
