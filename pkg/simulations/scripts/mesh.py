"""Cell-centered rectangular grid, field containers and discrete operators.

Layout:
 - Collocated cell-centered unknowns, one ghost layer per face.
 - Every operator is a scipy.sparse matrix acting on the ravelled padded array
   (axis 0 slowest), built once per grid with Kronecker products and cached.
   Field-level functions apply the same matrices, so an assembled implicit block
   and the corresponding explicit evaluation agree to round-off.

Boundary handling:
 - Scalars (c, mu, rho, coefficients): even mirror, i.e. homogeneous Neumann.
 - Velocity on a no-slip face: all components odd-mirrored.
 - Velocity on a slip face: normal component odd, tangential components even.
 - Ghost fill is a linear extension E (interior -> padded). Corner ghosts get the
   product of the two face signs, so the fill is independent of face order.
"""
from __future__ import annotations
import functools, logging
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple, Union
import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

NOSLIP = 'noslip'
SLIP = 'slip'
_TAG_ALIASES = {'noslip': NOSLIP, 'dirichlet_noslip': NOSLIP, 'no_slip': NOSLIP, 'slip': SLIP, 'pure_slip': SLIP}
FACE_NAMES = ('x_lo', 'x_hi', 'y_lo', 'y_hi')
MIN_CELLS = 4

# Operators refuse fields whose ghost layer is stale.
DEBUG_CHECKS = True


class GridError(ValueError):
    pass


class StaleGhostError(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid:
    dim: int
    extents: Tuple[float, ...]
    n_cells: Tuple[int, ...]
    h: Tuple[float, ...]
    face_tags: Tuple[str, ...]  # x_lo, x_hi[, y_lo, y_hi]

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.n_cells

    @property
    def padded_shape(self) -> Tuple[int, ...]:
        return tuple(n + 2 for n in self.n_cells)

    @property
    def size(self) -> int:
        return int(np.prod(self.n_cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def interior(self) -> Tuple[slice, ...]:
        return tuple(slice(1, -1) for _ in range(self.dim))

    def face_tag(self, axis: int, side: int) -> str:
        return self.face_tags[2 * axis + side]

    def cell_centers(self) -> Tuple[np.ndarray, ...]:
        axes = [(np.arange(n) + 0.5) * h for n, h in zip(self.n_cells, self.h)]
        return tuple(np.meshgrid(*axes, indexing='ij'))

    def padded_centers(self) -> Tuple[np.ndarray, ...]:
        """1D coordinate arrays including the ghost cell centers."""
        return tuple((np.arange(-1, n + 1) + 0.5) * h for n, h in zip(self.n_cells, self.h))


def make_grid(extents: Sequence[float], n_cells: Sequence[int],
              face_tags: Union[Sequence[str], Dict[str, str]]) -> Grid:
    extents = tuple(float(e) for e in extents)
    n_cells = tuple(int(n) for n in n_cells)
    dim = len(extents)
    if dim not in (1, 2) or len(n_cells) != dim:
        raise GridError(f'grid must be 1D or 2D with matching extents/n_cells, got {extents} / {n_cells}')
    for e in extents:
        if not e > 0:
            raise GridError(f'extent must be positive, got {e}')
    for n in n_cells:
        if n < MIN_CELLS:
            raise GridError(f'n_cells must be >= {MIN_CELLS} per axis, got {n}')
    names = FACE_NAMES[:2 * dim]
    if isinstance(face_tags, dict):
        missing = [f for f in names if f not in face_tags]
        if missing:
            raise GridError(f'untagged face(s): {", ".join(missing)}')
        extra = [f for f in face_tags if f not in names]
        if extra:
            raise GridError(f'unknown face(s): {", ".join(extra)}')
        raw = [face_tags[f] for f in names]
    else:
        raw = list(face_tags)
        if len(raw) != len(names):
            raise GridError(f'expected {len(names)} face tags ({", ".join(names)}), got {len(raw)}')
    tags = []
    for name, t in zip(names, raw):
        key = str(t).strip().lower()
        if key not in _TAG_ALIASES:
            raise GridError(f'face {name}: unknown tag {t!r} (use noslip or slip)')
        tags.append(_TAG_ALIASES[key])
    h = tuple(e / n for e, n in zip(extents, n_cells))
    return Grid(dim, extents, n_cells, h, tuple(tags))


# --------------------------------------------------------------------------- fields

class _Field:
    ncomp_axes = 0

    def __init__(self, grid: Grid, values=None):
        self.grid = grid
        lead = (grid.dim,) * self.ncomp_axes
        self.data = np.zeros(lead + grid.padded_shape)
        self.ghost_filled = False
        if values is not None:
            self.values = values

    @property
    def _islice(self):
        return (slice(None),) * self.ncomp_axes + self.grid.interior

    @property
    def values(self) -> np.ndarray:
        """Interior view; in-place writes through it do not reset ghost_filled."""
        return self.data[self._islice]

    @values.setter
    def values(self, v):
        self.data[self._islice] = v
        self.ghost_filled = False

    def copy(self):
        out = type(self).__new__(type(self))
        out.grid = self.grid
        out.data = self.data.copy()
        out.ghost_filled = self.ghost_filled
        return out

    def __repr__(self):
        return f'{type(self).__name__}(n_cells={self.grid.n_cells}, ghost_filled={self.ghost_filled})'


class ScalarField(_Field):
    ncomp_axes = 0


class VectorField(_Field):
    ncomp_axes = 1


class TensorField(_Field):
    ncomp_axes = 2


def _require_ghosts(*fields):
    if not DEBUG_CHECKS:
        return
    for f in fields:
        if not f.ghost_filled:
            raise StaleGhostError(f'{f!r} used before its ghost layer was filled')


# --------------------------------------------------------------------------- operators

def _kron(mats):
    return functools.reduce(lambda a, b: sp.kron(a, b, format='csr'), mats).tocsr()


def _eye(m, n, k):
    return sp.eye(m, n, k=k, format='csr')


class GridOperators:
    """Sparse building blocks for one grid. Obtain through operators(grid)."""

    def __init__(self, grid: Grid):
        self.grid = grid
        d = grid.dim
        n, h = grid.n_cells, grid.h
        restrict = [_eye(n[a], n[a] + 2, 1) for a in range(d)]
        centered = [(_eye(n[a], n[a] + 2, 2) - _eye(n[a], n[a] + 2, 0)) / (2.0 * h[a]) for a in range(d)]
        second = [(_eye(n[a], n[a] + 2, 0) - 2.0 * _eye(n[a], n[a] + 2, 1) + _eye(n[a], n[a] + 2, 2)) / h[a] ** 2
                  for a in range(d)]
        fgrad = [(_eye(n[a] + 1, n[a] + 2, 1) - _eye(n[a] + 1, n[a] + 2, 0)) / h[a] for a in range(d)]
        favg = [0.5 * (_eye(n[a] + 1, n[a] + 2, 0) + _eye(n[a] + 1, n[a] + 2, 1)) for a in range(d)]
        fdiv = [(_eye(n[a], n[a] + 1, 1) - _eye(n[a], n[a] + 1, 0)) / h[a] for a in range(d)]
        ident = [sp.identity(n[a], format='csr') for a in range(d)]

        def along(a, op, other):
            return _kron([op[a] if ax == a else other[ax] for ax in range(d)])

        # padded -> interior
        self.d1 = [along(a, centered, restrict) for a in range(d)]
        self.d2 = [[along(a, second, restrict) if a == b else
                    _kron([centered[ax] if ax in (a, b) else restrict[ax] for ax in range(d)])
                    for b in range(d)] for a in range(d)]
        # padded -> faces normal to axis a
        self.face_grad = [along(a, fgrad, restrict) for a in range(d)]
        self.face_avg = [along(a, favg, restrict) for a in range(d)]
        self.face_left = [along(a, [_eye(n[b] + 1, n[b] + 2, 0) for b in range(d)], restrict) for a in range(d)]
        self.face_right = [along(a, [_eye(n[b] + 1, n[b] + 2, 1) for b in range(d)], restrict) for a in range(d)]
        self._face_tan = {(a, b): _kron([favg[ax] if ax == a else centered[ax] if ax == b else restrict[ax]
                                         for ax in range(d)])
                          for a in range(d) for b in range(d) if a != b}
        # faces normal to axis a -> interior
        self.face_div = [along(a, fdiv, ident) for a in range(d)]
        self.restrict = _kron(restrict)
        self._ext: Dict[Tuple[Tuple[int, int], ...], sp.csr_matrix] = {}

    def face_deriv(self, a: int, b: int):
        """Derivative along axis b evaluated on faces normal to axis a."""
        return self.face_grad[a] if a == b else self._face_tan[(a, b)]

    def extension(self, signs: Tuple[Tuple[int, int], ...]) -> sp.csr_matrix:
        """Interior -> padded ghost extension with per-axis (lo, hi) mirror signs.

        The extension is a Kronecker product of 1D extensions, so a corner ghost receives the
        product of its two face signs. That equals filling one face and then mirroring the result
        across the other, in either order; no face takes precedence at a corner. The centered,
        compact and cross-derivative stencils only read corners through this fill.
        """
        if signs not in self._ext:
            blocks = []
            for a, (lo, hi) in enumerate(signs):
                n = self.grid.n_cells[a]
                rows = np.r_[0, np.arange(1, n + 1), n + 1]
                cols = np.r_[0, np.arange(n), n - 1]
                vals = np.r_[float(lo), np.ones(n), float(hi)]
                blocks.append(sp.csr_matrix((vals, (rows, cols)), shape=(n + 2, n)))
            self._ext[signs] = _kron(blocks)
        return self._ext[signs]

    @property
    def scalar_ext(self):
        return self.extension(tuple((1, 1) for _ in range(self.grid.dim)))

    def velocity_signs(self, comp: int) -> Tuple[Tuple[int, int], ...]:
        g = self.grid
        signs = []
        for a in range(g.dim):
            pair = []
            for side in (0, 1):
                tag = g.face_tag(a, side)
                odd = tag == NOSLIP or comp == a
                pair.append(-1 if odd else 1)
            signs.append(tuple(pair))
        return tuple(signs)

    def velocity_ext(self, comp: int):
        return self.extension(self.velocity_signs(comp))

    def tensor_ext(self, i: int, j: int):
        d = self.grid.dim
        return self.extension(tuple(((-1) ** ((i == a) + (j == a)),) * 2 for a in range(d)))


@functools.lru_cache(maxsize=32)
def operators(grid: Grid) -> GridOperators:
    return GridOperators(grid)


# --------------------------------------------------------------------------- boundary fills

def apply_scalar_bc(f: ScalarField, flux=0.0) -> ScalarField:
    fluxes = np.atleast_1d(np.asarray(flux, dtype=float))
    if np.any(fluxes != 0.0):
        raise GridError('inhomogeneous Neumann data is not supported; flux must be 0')
    ops = operators(f.grid)
    f.data[...] = (ops.scalar_ext @ f.values.ravel()).reshape(f.grid.padded_shape)
    f.ghost_filled = True
    return f


def apply_velocity_bc(u: VectorField) -> VectorField:
    ops = operators(u.grid)
    for i in range(u.grid.dim):
        u.data[i] = (ops.velocity_ext(i) @ u.values[i].ravel()).reshape(u.grid.padded_shape)
    u.ghost_filled = True
    return u


def apply_tensor_bc(T: TensorField) -> TensorField:
    """Mirror with reflection parity (-1)^(#indices equal to the face axis)."""
    ops = operators(T.grid)
    d = T.grid.dim
    for i in range(d):
        for j in range(d):
            T.data[i, j] = (ops.tensor_ext(i, j) @ T.values[i, j].ravel()).reshape(T.grid.padded_shape)
    T.ghost_filled = True
    return T


def scalar_field(grid: Grid, values) -> ScalarField:
    """ScalarField with Neumann ghosts already filled."""
    return apply_scalar_bc(ScalarField(grid, np.broadcast_to(values, grid.shape)))


def vector_field(grid: Grid, values) -> VectorField:
    """VectorField with velocity ghosts already filled."""
    return apply_velocity_bc(VectorField(grid, np.broadcast_to(values, (grid.dim,) + grid.shape)))


# --------------------------------------------------------------------------- differential operators

def gradient(f: ScalarField) -> VectorField:
    _require_ghosts(f)
    ops = operators(f.grid)
    flat = f.data.ravel()
    out = VectorField(f.grid)
    out.values = np.stack([(ops.d1[a] @ flat).reshape(f.grid.shape) for a in range(f.grid.dim)])
    return out


def div_coeff_operator(a: ScalarField) -> sp.csr_matrix:
    """Matrix of f -> div(a grad f) on interior unknowns, Neumann ghosts folded in."""
    _require_ghosts(a)
    if np.any(a.values <= 0.0):
        raise GridError(f'div_coeff coefficient must be positive (min {a.values.min():.3e})')
    ops = operators(a.grid)
    af = a.data.ravel()
    mat = None
    for ax in range(a.grid.dim):
        term = ops.face_div[ax] @ sp.diags(ops.face_avg[ax] @ af) @ ops.face_grad[ax]
        mat = term if mat is None else mat + term
    return (mat @ ops.scalar_ext).tocsr()


def div_coeff(a: ScalarField, f: ScalarField) -> ScalarField:
    _require_ghosts(a, f)
    if np.any(a.values <= 0.0):
        raise GridError(f'div_coeff coefficient must be positive (min {a.values.min():.3e})')
    ops = operators(f.grid)
    af, ff = a.data.ravel(), f.data.ravel()
    acc = np.zeros(f.grid.size)
    for ax in range(f.grid.dim):
        acc += ops.face_div[ax] @ ((ops.face_avg[ax] @ af) * (ops.face_grad[ax] @ ff))
    return ScalarField(f.grid, acc.reshape(f.grid.shape))


def divergence(v: VectorField) -> ScalarField:
    _require_ghosts(v)
    ops = operators(v.grid)
    acc = np.zeros(v.grid.size)
    for a in range(v.grid.dim):
        acc += ops.d1[a] @ v.data[a].ravel()
    return ScalarField(v.grid, acc.reshape(v.grid.shape))


def tensor_divergence(T: TensorField) -> VectorField:
    if not T.ghost_filled:
        T = apply_tensor_bc(T.copy())
    ops = operators(T.grid)
    d = T.grid.dim
    out = VectorField(T.grid)
    out.values = np.stack([sum((ops.d1[j] @ T.data[i, j].ravel()) for j in range(d)).reshape(T.grid.shape)
                           for i in range(d)])
    return out


def hessian(f: ScalarField) -> np.ndarray:
    """Centered second differences, array of shape (dim, dim, *n_cells)."""
    _require_ghosts(f)
    ops = operators(f.grid)
    flat = f.data.ravel()
    d = f.grid.dim
    return np.stack([np.stack([(ops.d2[a][b] @ flat).reshape(f.grid.shape) for b in range(d)]) for a in range(d)])


def hessian_vec(f: ScalarField, g: Union[VectorField, np.ndarray]) -> VectorField:
    gv = g.values if isinstance(g, VectorField) else np.asarray(g)
    H = hessian(f)
    return VectorField(f.grid, np.einsum('ij...,j...->i...', H, gv))


def velocity_gradient(u: VectorField) -> np.ndarray:
    """G[i, j] = d u_i / d x_j, centered."""
    _require_ghosts(u)
    ops = operators(u.grid)
    d = u.grid.dim
    return np.stack([np.stack([(ops.d1[j] @ u.data[i].ravel()).reshape(u.grid.shape) for j in range(d)])
                     for i in range(d)])


def strain_rate(u: VectorField) -> TensorField:
    G = velocity_gradient(u)
    return TensorField(u.grid, 0.5 * (G + np.swapaxes(G, 0, 1)))


def viscous_operator(eta: ScalarField, lam: ScalarField) -> sp.csr_matrix:
    """Matrix of u -> div(2 eta D(u) + lam div(u) I) in conservative face-flux form.

    Unknowns are the stacked velocity components [u_0; u_1]. Fluxes on faces normal to
    axis a use compact normal differences and face-averaged centered tangential ones.
    """
    _require_ghosts(eta, lam)
    g = eta.grid
    ops = operators(g)
    d = g.dim
    ef, lf = eta.data.ravel(), lam.data.ravel()
    blocks = [[None] * d for _ in range(d)]

    def add(i, k, m):
        blocks[i][k] = m if blocks[i][k] is None else blocks[i][k] + m

    for a in range(d):
        eta_f = sp.diags(ops.face_avg[a] @ ef)
        lam_f = sp.diags(ops.face_avg[a] @ lf)
        for i in range(d):
            add(i, i, ops.face_div[a] @ eta_f @ ops.face_deriv(a, a) @ ops.velocity_ext(i))
            add(i, a, ops.face_div[a] @ eta_f @ ops.face_deriv(a, i) @ ops.velocity_ext(a))
        for k in range(d):
            add(a, k, ops.face_div[a] @ lam_f @ ops.face_deriv(a, k) @ ops.velocity_ext(k))
    return sp.bmat(blocks, format='csr')


# --------------------------------------------------------------------------- integrals and norms

def _vals(f) -> np.ndarray:
    return f.values if isinstance(f, _Field) else np.asarray(f)


def integrate(f, grid: Grid = None) -> float:
    g = f.grid if isinstance(f, _Field) else grid
    return float(np.sum(_vals(f)) * g.cell_volume)


def discrete_l2(f, grid: Grid = None) -> float:
    g = f.grid if isinstance(f, _Field) else grid
    v = _vals(f)
    return float(np.sqrt(np.sum(v * v) * g.cell_volume))


DEFAULT_WEAK_WEIGHTS = (1.0, 1.0, 1.0, 1.0, 1.0)


def weak_norm(du: VectorField, dc: ScalarField, dmu: ScalarField, weights=DEFAULT_WEAK_WEIGHTS) -> float:
    """w0 |du| + w1 |grad du| + w2 |dc| + w3 |grad dc| + w4 |dmu|, discrete L2 throughout."""
    g = du.grid
    du_f = apply_velocity_bc(VectorField(g, du.values))
    dc_f = apply_scalar_bc(ScalarField(g, dc.values))
    parts = (discrete_l2(du_f), discrete_l2(velocity_gradient(du_f), g), discrete_l2(dc_f),
             discrete_l2(gradient(dc_f)), discrete_l2(dmu))
    return float(sum(w * p for w, p in zip(weights, parts)))
