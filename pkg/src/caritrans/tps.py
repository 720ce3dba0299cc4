"""Differentiable thin-plate-spline warping.

Coordinates are normalised to [-1, 1] with ``(x, y)`` ordering, matching
``torch.nn.functional.grid_sample`` with ``align_corners=False``. Warping is
backward: for every output pixel we evaluate a spline that maps displaced
control points back to their rest positions and sample the input there.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .exceptions import DegenerateConfiguration, ShapeMismatch


@dataclass(frozen=True)
class ControlPointSet:
    points: torch.Tensor  # [n, 2]
    pinned_mask: torch.Tensor  # [n] bool, True = never displaced

    def __post_init__(self):
        pts, mask = self.points, self.pinned_mask
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ShapeMismatch(f"control points must be [n, 2], got {tuple(pts.shape)}")
        if mask.shape != (pts.shape[0],):
            raise ShapeMismatch("pinned_mask must have one entry per point")
        _check_configuration(pts)

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def n_free(self):
        return int((~self.pinned_mask).sum())

    @property
    def free_points(self):
        return self.points[~self.pinned_mask]


def _check_configuration(pts):
    n = pts.shape[0]
    if n < 3:
        raise DegenerateConfiguration(f"need at least 3 control points, got {n}")
    p = pts.detach().double()
    dist = torch.cdist(p, p) + torch.eye(n, dtype=p.dtype) * 1e9
    if dist.min() <= 1e-6:
        raise DegenerateConfiguration("duplicate control points")
    centered = p - p.mean(0)
    if torch.linalg.matrix_rank(centered, atol=1e-9) < 2:
        raise DegenerateConfiguration("control points are collinear")


def default_control_points(k=4):
    """``k x k`` free interior points plus ``4k - 4`` pinned border points.

    Interior points sit at cell centres of a k x k partition of the square;
    border points are evenly spaced along the image boundary.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    c = (2 * torch.arange(k, dtype=torch.float32) + 1) / k - 1
    yy, xx = torch.meshgrid(c, c, indexing="ij")
    inner = torch.stack([xx.reshape(-1), yy.reshape(-1)], dim=1)
    side = torch.linspace(-1, 1, max(k, 2))
    by, bx = torch.meshgrid(side, side, indexing="ij")
    ring = torch.stack([bx.reshape(-1), by.reshape(-1)], dim=1)
    ring = ring[(ring.abs() == 1).any(dim=1)]
    pts = torch.cat([inner, ring])
    mask = torch.cat([torch.zeros(len(inner), dtype=torch.bool), torch.ones(len(ring), dtype=torch.bool)])
    return ControlPointSet(pts, mask)


@dataclass
class DisplacementField:
    vectors: torch.Tensor  # [B, n_free, 2]
    bound: float


@dataclass
class TpsParams:
    """Spline ``f(u) = affine^T [1, u] + sum_i rbf_weights_i * U(|u - centers_i|)``."""

    centers: torch.Tensor  # [B, n, 2]
    rbf_weights: torch.Tensor  # [B, n, 2]
    affine: torch.Tensor  # [B, 3, 2]


def _kernel(r2):
    # U = r^2 log r^2, with U(0) = 0 and a finite gradient at coincident points
    return r2 * torch.log(r2.clamp_min(torch.finfo(r2.dtype).tiny))


def _sq_dist(a, b):
    return (a.unsqueeze(-2) - b.unsqueeze(-3)).pow(2).sum(-1)


def full_displacements(cps, disp):
    """Scatter free-point displacements into ``[B, n, 2]`` with zeros at pinned points."""
    v = disp.vectors if isinstance(disp, DisplacementField) else disp
    if v.ndim == 2:
        v = v.unsqueeze(0)
    if v.shape[1:] != (cps.n_free, 2):
        raise ShapeMismatch(f"expected [B, {cps.n_free}, 2] displacements, got {tuple(v.shape)}")
    full = v.new_zeros(v.shape[0], cps.n_points, 2)
    full[:, ~cps.pinned_mask.to(v.device)] = v
    return full


def _fit(sources, targets, reg):
    """Solve the TPS system mapping ``sources`` onto ``targets`` (both [B, n, 2])."""
    b, n, _ = sources.shape
    dt = sources.dtype
    k = _kernel(_sq_dist(sources, sources))
    if reg:
        k = k + reg * torch.eye(n, dtype=dt, device=sources.device)
    p = torch.cat([sources.new_ones(b, n, 1), sources], dim=2)
    top = torch.cat([k, p], dim=2)
    bottom = torch.cat([p.transpose(1, 2), sources.new_zeros(b, 3, 3)], dim=2)
    system = torch.cat([top, bottom], dim=1)
    rhs = torch.cat([targets, targets.new_zeros(b, 3, 2)], dim=1)
    try:
        sol = torch.linalg.solve(system, rhs)
    except RuntimeError as exc:  # LinAlgError subclasses RuntimeError
        raise DegenerateConfiguration(f"singular spline system: {exc}") from exc
    if not torch.isfinite(sol).all():
        raise DegenerateConfiguration("spline system produced non-finite coefficients")
    return TpsParams(centers=sources, rbf_weights=sol[:, :n], affine=sol[:, n:])


def solve_tps(cps, disp, reg=0.0, inverse=False):
    """Fit the spline taking each control point ``p`` to ``p + v``.

    With ``inverse=True`` the spline maps ``p + v`` back to ``p`` instead,
    which is what backward warping evaluates. Solved in float64; the returned
    parameters are cast back to the displacement dtype.
    """
    full = full_displacements(cps, disp)
    out_dtype = full.dtype
    full = full.double()
    rest = cps.points.to(full).unsqueeze(0).expand_as(full)
    moved = rest + full
    if inverse:
        params = _fit(moved, rest, reg)
    else:
        params = _fit(rest, moved, reg)
    return TpsParams(
        centers=params.centers.to(out_dtype),
        rbf_weights=params.rbf_weights.to(out_dtype),
        affine=params.affine.to(out_dtype),
    )


def evaluate_tps(params, points):
    """Evaluate the spline at ``points`` ([B, m, 2] or [m, 2])."""
    points = points.to(params.affine)
    if points.ndim == 2:
        points = points.unsqueeze(0).expand(params.centers.shape[0], -1, -1)
    u = _kernel(_sq_dist(points, params.centers))
    homog = torch.cat([points.new_ones(*points.shape[:2], 1), points], dim=2)
    return homog @ params.affine + u @ params.rbf_weights


def pixel_lattice(out_h, out_w, dtype=torch.float32, device=None):
    """Normalised pixel-centre coordinates, ``[out_h, out_w, 2]`` in (x, y) order."""
    xs = (2 * torch.arange(out_w, dtype=dtype, device=device) + 1) / out_w - 1
    ys = (2 * torch.arange(out_h, dtype=dtype, device=device) + 1) / out_h - 1
    yy, xx = torch.meshgrid(ys, xs, indexing="ij")
    return torch.stack([xx, yy], dim=-1)


def make_grid(params, out_h, out_w):
    """Dense sampling grid ``[B, out_h, out_w, 2]`` from a (backward) spline."""
    if out_h < 2 or out_w < 2:
        raise ValueError("grid must be at least 2x2")
    lattice = pixel_lattice(out_h, out_w, dtype=params.affine.dtype, device=params.affine.device)
    flat = evaluate_tps(params, lattice.reshape(-1, 2))
    return flat.reshape(-1, out_h, out_w, 2)


def warp_image(image, cps, disp, reg=1e-6):
    """Warp ``image`` so content at each control point moves by its displacement.

    Bilinear sampling with border clamping; differentiable in both the image
    and the displacements.
    """
    v = disp.vectors if isinstance(disp, DisplacementField) else disp
    if v.ndim == 2:
        v = v.unsqueeze(0)
    if v.shape[0] not in (1, image.shape[0]):
        raise ShapeMismatch(f"{v.shape[0]} displacement sets for {image.shape[0]} images")
    params = solve_tps(cps, v, reg=reg, inverse=True)
    grid = make_grid(params, image.shape[-2], image.shape[-1]).to(image.dtype)
    if grid.shape[0] != image.shape[0]:
        grid = grid.expand(image.shape[0], -1, -1, -1)
    return F.grid_sample(image, grid, mode="bilinear", padding_mode="border", align_corners=False)


def control_point_offsets(cps, disp):
    """Per-point offsets actually applied, ``[B, n, 2]`` (zeros on pinned points)."""
    return full_displacements(cps, disp)
