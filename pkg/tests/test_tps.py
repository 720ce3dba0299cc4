import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from caritrans.exceptions import DegenerateConfiguration
from caritrans.tps import (
    ControlPointSet,
    DisplacementField,
    default_control_points,
    evaluate_tps,
    make_grid,
    pixel_lattice,
    solve_tps,
    warp_image,
)


def free_set(points):
    pts = torch.as_tensor(points, dtype=torch.float64)
    return ControlPointSet(pts, torch.zeros(len(pts), dtype=torch.bool))


def numpy_tps(src, dst, query):
    """Independent dense-solve spline fit/evaluation in NumPy."""
    n = len(src)
    r2 = ((src[:, None] - src[None]) ** 2).sum(-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(r2 > 0, r2 * np.log(r2), 0.0)
    p = np.hstack([np.ones((n, 1)), src])
    a = np.zeros((n + 3, n + 3))
    a[:n, :n], a[:n, n:], a[n:, :n] = k, p, p.T
    b = np.zeros((n + 3, 2))
    b[:n] = dst
    sol = np.linalg.solve(a, b)
    q2 = ((query[:, None] - src[None]) ** 2).sum(-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(q2 > 0, q2 * np.log(q2), 0.0)
    return np.hstack([np.ones((len(query), 1)), query]) @ sol[n:] + u @ sol[:n]


def test_default_layout():
    cps = default_control_points(4)
    assert cps.n_free == 16 and int(cps.pinned_mask.sum()) == 12
    border = cps.points[cps.pinned_mask]
    assert (border.abs() == 1).any(dim=1).all()
    assert (cps.free_points.abs() < 1).all()


def test_zero_displacement_is_identity():
    cps = default_control_points(4)
    params = solve_tps(cps, torch.zeros(1, 16, 2, dtype=torch.float64))
    assert params.rbf_weights.abs().max() < 1e-12
    identity = torch.tensor([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
    assert torch.allclose(params.affine[0], identity, atol=1e-12)


def test_constant_displacement_is_translation():
    cps = free_set(default_control_points(3).points)
    t = torch.tensor([0.07, -0.03], dtype=torch.float64)
    params = solve_tps(cps, t.expand(1, cps.n_free, 2))
    assert params.rbf_weights.abs().max() < 1e-6
    assert torch.allclose(params.affine[0, 0], t, atol=1e-9)
    assert torch.allclose(params.affine[0, 1:], torch.eye(2, dtype=torch.float64), atol=1e-9)


def test_four_corners_plus_displaced_centre_interpolates():
    cps = free_set([[-1, -1], [1, -1], [-1, 1], [1, 1], [0, 0]])
    v = torch.zeros(1, 5, 2, dtype=torch.float64)
    v[0, 4] = torch.tensor([0.1, -0.05])
    params = solve_tps(cps, v)
    mapped = evaluate_tps(params, cps.points)
    assert (mapped - (cps.points + v)).abs().max() < 1e-5


def test_matches_numpy_oracle():
    rng = np.random.default_rng(0)
    cps = default_control_points(4)
    v = rng.uniform(-0.1, 0.1, (1, 16, 2))
    params = solve_tps(cps, torch.from_numpy(v), inverse=True)
    full = np.zeros((28, 2))
    full[~cps.pinned_mask.numpy()] = v[0]
    src = cps.points.double().numpy() + full
    query = rng.uniform(-1, 1, (50, 2))
    ref = numpy_tps(src, cps.points.double().numpy(), query)
    got = evaluate_tps(params, torch.from_numpy(query)).numpy()[0]
    np.testing.assert_allclose(got, ref, atol=1e-9)


def test_side_conditions_hold():
    rng = np.random.default_rng(1)
    cps = default_control_points(4)
    params = solve_tps(cps, torch.from_numpy(rng.uniform(-0.1, 0.1, (3, 16, 2))))
    w = params.rbf_weights
    assert w.sum(1).abs().max() < 1e-6
    assert (params.centers.transpose(1, 2) @ w).abs().max() < 1e-6


def test_degenerate_configurations():
    with pytest.raises(DegenerateConfiguration):
        free_set([[0, 0], [0.5, 0.5], [1, 1]])
    with pytest.raises(DegenerateConfiguration):
        free_set([[0, 0], [0, 0], [1, 0]])
    with pytest.raises(DegenerateConfiguration):
        free_set([[0, 0], [1, 0]])


def test_displacements_collapsing_points_are_degenerate():
    cps = free_set([[-1, -1], [1, -1], [-1, 1], [1, 1]])
    v = torch.zeros(1, 4, 2, dtype=torch.float64)
    v[0, 3] = torch.tensor([-2.0, 0.0])  # lands exactly on its neighbour
    with pytest.raises(DegenerateConfiguration):
        solve_tps(cps, v, inverse=True)


def test_identity_grid_is_lattice():
    cps = default_control_points(4)
    params = solve_tps(cps, torch.zeros(1, 16, 2, dtype=torch.float64), inverse=True)
    grid = make_grid(params, 9, 7)
    assert (grid[0] - pixel_lattice(9, 7, dtype=torch.float64)).abs().max() < 1e-6


def test_translation_grid_is_shifted_lattice():
    cps = free_set(default_control_points(2).points)
    t = torch.tensor([0.2, 0.1], dtype=torch.float64)
    params = solve_tps(cps, t.expand(1, cps.n_free, 2), inverse=True)
    grid = make_grid(params, 8, 8)
    assert (grid[0] - (pixel_lattice(8, 8, dtype=torch.float64) - t)).abs().max() < 1e-9


def test_random_small_warps_give_bounded_grids():
    cps = default_control_points(4)
    g = torch.Generator().manual_seed(0)
    for _ in range(20):
        v = (torch.rand(1, 16, 2, generator=g, dtype=torch.float64) * 2 - 1) * 0.1
        grid = make_grid(solve_tps(cps, v, inverse=True), 16, 16)
        assert torch.isfinite(grid).all() and grid.abs().max() <= 1.5


def test_warp_identity():
    cps = default_control_points(4)
    img = torch.rand(2, 3, 16, 16)
    out = warp_image(img, cps, DisplacementField(torch.zeros(2, 16, 2), 0.1))
    assert (out - img).abs().max() < 1e-6


def test_warp_translation_moves_hot_pixel():
    cps = free_set(default_control_points(3).points)
    w = 32
    img = torch.zeros(1, 1, w, w, dtype=torch.float64)
    img[0, 0, 16, 10] = 1.0
    t = torch.tensor([0.25, 0.0], dtype=torch.float64)
    out = warp_image(img, cps, t.expand(1, cps.n_free, 2), reg=0.0)
    r, c = divmod(int(out.flatten().argmax()), w)
    assert r == 16
    assert abs(c - (10 + 0.25 * w / 2)) <= 1


def smooth_image(size, seed):
    g = torch.Generator().manual_seed(seed)
    coarse = torch.rand(1, 3, 4, 4, generator=g, dtype=torch.float64) * 2 - 1
    return torch.nn.functional.interpolate(coarse, size=(size, size), mode="bicubic", align_corners=True)


def test_warp_gradient_matches_finite_differences():
    cps = default_control_points(4)
    img = smooth_image(16, 0)
    v0 = (torch.rand(1, 16, 2, generator=torch.Generator().manual_seed(1), dtype=torch.float64) - 0.5) * 0.1

    def f(v):
        return warp_image(img, cps, v, reg=1e-6).pow(2).mean()

    v = v0.clone().requires_grad_()
    f(v).backward()
    analytic = v.grad[0, 5, 0].item()
    eps = 1e-3
    up, down = v0.clone(), v0.clone()
    up[0, 5, 0] += eps
    down[0, 5, 0] -= eps
    numeric = (f(up) - f(down)).item() / (2 * eps)
    assert abs(analytic - numeric) / abs(numeric) < 1e-2


def test_warp_gradient_reaches_image():
    cps = default_control_points(4)
    img = smooth_image(16, 2).requires_grad_()
    warp_image(img, cps, torch.full((1, 16, 2), 0.03, dtype=torch.float64)).sum().backward()
    assert img.grad.abs().sum() > 0


def test_small_warp_roughly_inverts():
    cps = default_control_points(4)
    img = smooth_image(32, 3)
    v = (torch.rand(1, 16, 2, generator=torch.Generator().manual_seed(4), dtype=torch.float64) - 0.5) * 0.04
    back = warp_image(warp_image(img, cps, v), cps, -v)
    assert (back - img).abs().mean() < 0.05


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 5.0), st.integers(0, 1000))
def test_doubling_displacements_doubles_targets(scale, seed):
    cps = default_control_points(4)
    v = (torch.rand(1, 16, 2, generator=torch.Generator().manual_seed(seed), dtype=torch.float64) - 0.5) * 0.02
    p1 = solve_tps(cps, v * scale)
    p2 = solve_tps(cps, v * 2 * scale)
    off1 = evaluate_tps(p1, cps.points) - cps.points
    off2 = evaluate_tps(p2, cps.points) - cps.points
    assert torch.allclose(off2, 2 * off1, atol=1e-9)
