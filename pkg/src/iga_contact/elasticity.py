"""Volume and Neumann assembly.

Linear elasticity stiffness and load vectors, plus a compressible
Neo-Hookean internal force with its consistent tangent for the
large-deformation benchmark. 2D problems are treated as plane strain.

Assembly is vectorized over chunks of elements; with a fixed chunk size
the accumulation order is deterministic, so repeated runs are
bitwise-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import ElementData, element_data
from .spaces import PrimalSpace, face_quadrature

_CHUNK = 512


class NonPhysicalStateError(RuntimeError):
    """Deformation gradient lost positivity (det F <= 0)."""


@dataclass(frozen=True)
class Material:
    """Isotropic material, linear Hooke or compressible Neo-Hookean."""

    model: str
    young: float
    poisson: float

    def __post_init__(self):
        if self.model not in ("linear", "neo-hookean"):
            raise ValueError(f"unknown material model {self.model!r}")
        if self.young <= 0 or not 0 <= self.poisson < 0.5:
            raise ValueError("need E > 0 and 0 <= nu < 0.5")

    @property
    def lame_lambda(self) -> float:
        e, nu = self.young, self.poisson
        return e * nu / ((1 + nu) * (1 - 2 * nu))

    @property
    def lame_mu(self) -> float:
        return self.young / (2 * (1 + self.poisson))


@dataclass
class AssembledOperator:
    """Sparse symmetric operator and right-hand side in primal dof numbering."""

    matrix: sp.csr_matrix
    rhs: np.ndarray


class _CsrAccumulator:
    """Accumulate element blocks into a CSR matrix with bounded memory.

    Triplets are flushed into a running CSR sum before they outgrow
    ``max_entries``, so peak memory stays independent of the mesh size.
    """

    def __init__(self, n: int, max_entries: int = 8_000_000):
        self.shape = (n, n)
        self.max_entries = max_entries
        self._rows, self._cols, self._vals = [], [], []
        self._count = 0
        self._acc = None

    def add(self, conn: np.ndarray, ke: np.ndarray, nd: int):
        """Add element blocks ke of shape (E, a, i, b, j)."""
        E, nloc = conn.shape
        dofs = (conn[:, :, None] * nd + np.arange(nd)[None, None, :]) \
            .reshape(E, -1).astype(np.int32)
        self._rows.append(np.repeat(dofs, nloc * nd, axis=1).reshape(-1))
        self._cols.append(np.tile(dofs, (1, nloc * nd)).reshape(-1))
        self._vals.append(ke.reshape(E, (nloc * nd) ** 2).reshape(-1))
        self._count += self._vals[-1].size
        if self._count >= self.max_entries:
            self._flush()

    def _flush(self):
        if not self._count:
            return
        part = sp.coo_matrix(
            (np.concatenate(self._vals),
             (np.concatenate(self._rows), np.concatenate(self._cols))),
            shape=self.shape).tocsr()
        self._rows, self._cols, self._vals = [], [], []
        self._count = 0
        self._acc = part if self._acc is None else self._acc + part

    def tocsr(self) -> sp.csr_matrix:
        self._flush()
        return self._acc if self._acc is not None \
            else sp.csr_matrix(self.shape)


def assemble_linear(space: PrimalSpace, material: Material,
                    edata: ElementData) -> AssembledOperator:
    """Linear elasticity stiffness (pre-constraint, full dof numbering)."""
    lam, mu = material.lame_lambda, material.lame_mu
    nd = space.ncomp
    eye = np.eye(nd)
    n = space.num_dofs
    acc = _CsrAccumulator(n)
    n_el = edata.conn.shape[0]
    for s in range(0, n_el, _CHUNK):
        G = edata.gradR[s:s + _CHUNK]
        w = edata.wdet[s:s + _CHUNK]
        t1 = np.einsum("eg,egai,egbj->eaibj", w, G, G, optimize=True)
        t3 = np.einsum("eg,egak,egbk->eab", w, G, G, optimize=True)
        ke = lam * t1 + mu * t1.transpose(0, 1, 4, 3, 2) \
            + mu * t3[:, :, None, :, None] * eye[None, None, :, None, :]
        acc.add(edata.conn[s:s + _CHUNK], ke, nd)
    return AssembledOperator(matrix=acc.tocsr(), rhs=np.zeros(n))


def assemble_neumann_pressure(space: PrimalSpace, face, pressure: float,
                              points_per_dir: int = None) -> np.ndarray:
    """Load vector of a uniform pressure acting inward on ``face``.

    L_i = integral of (-P n) . N_i over the face.
    """
    if points_per_dir is None:
        points_per_dir = space.degree + 1
    pts, w, _, normal = face_quadrature(face, points_per_dir)
    fp = face.face_patch()
    res = fp.evaluate(pts, nders=0)
    R, conn = res["R"], res["conn"]
    vol = face.volume_indices()
    nd = space.ncomp
    L = np.zeros(space.num_dofs)
    load = -pressure * normal                          # (n, d)
    for c in range(nd):
        vals = (w * load[:, c])[:, None] * R
        np.add.at(L, vol[conn].reshape(-1) * nd + c, vals.reshape(-1))
    return L


# ---------------------------------------------------------------------------
# Neo-Hookean

def _deformation_gradients(edata: ElementData, u: np.ndarray, nd: int, s, e):
    conn = edata.conn[s:e]
    G = edata.gradR[s:e]
    ue = u.reshape(-1, nd)[conn]                       # (E, a, c)
    H = np.einsum("egad,eac->egcd", G, ue, optimize=True)
    F = H + np.eye(nd)[None, None]
    return F, G, conn


def neo_hookean_energy(space: PrimalSpace, material: Material,
                       edata: ElementData, u: np.ndarray) -> float:
    """Stored energy of the compressible Neo-Hookean model.

    W(F) = mu/2 (tr(F^T F) - d) - mu ln J + lambda/2 (ln J)^2.
    """
    lam, mu = material.lame_lambda, material.lame_mu
    nd = space.ncomp
    total = 0.0
    n_el = edata.conn.shape[0]
    for s in range(0, n_el, _CHUNK):
        F, _, _ = _deformation_gradients(edata, u, nd, s, s + _CHUNK)
        J = np.linalg.det(F)
        if np.any(J <= 0):
            raise NonPhysicalStateError("det F <= 0 at a quadrature point")
        lnJ = np.log(J)
        trC = np.einsum("egik,egik->eg", F, F)
        W = 0.5 * mu * (trC - nd) - mu * lnJ + 0.5 * lam * lnJ ** 2
        total += float((edata.wdet[s:s + _CHUNK] * W).sum())
    return total


def assemble_neo_hookean(space: PrimalSpace, material: Material,
                         edata: ElementData, u: np.ndarray):
    """Internal force and consistent tangent at displacement ``u``.

    Returns ``(residual, tangent)`` in full dof numbering; the residual is
    the gradient of :func:`neo_hookean_energy` and the tangent its exact
    Hessian.
    """
    lam, mu = material.lame_lambda, material.lame_mu
    nd = space.ncomp
    n = space.num_dofs
    res = np.zeros(n)
    acc = _CsrAccumulator(n)
    n_el = edata.conn.shape[0]
    for s in range(0, n_el, _CHUNK):
        F, G, conn = _deformation_gradients(edata, u, nd, s, s + _CHUNK)
        w = edata.wdet[s:s + _CHUNK]
        J = np.linalg.det(F)
        if np.any(J <= 0):
            raise NonPhysicalStateError("det F <= 0 at a quadrature point")
        lnJ = np.log(J)
        Finv = np.linalg.inv(F)
        FiT = np.swapaxes(Finv, -1, -2)
        P = mu * (F - FiT) + lam * lnJ[..., None, None] * FiT
        re = np.einsum("eg,egik,egak->eai", w, P, G, optimize=True)
        dofs = (conn[:, :, None] * nd + np.arange(nd)[None, None, :]).reshape(-1)
        np.add.at(res, dofs, re.reshape(-1))

        Gt = np.einsum("egak,egki->egai", G, Finv, optimize=True)
        c2 = mu - lam * lnJ
        t1 = np.einsum("eg,egak,egbk->eab", w, G, G, optimize=True)
        ke = mu * t1[:, :, None, :, None] * np.eye(nd)[None, None, :, None, :]
        ke += np.einsum("eg,egbi,egaj->eaibj", w * c2, Gt, Gt, optimize=True)
        ke += lam * np.einsum("eg,egai,egbj->eaibj", w, Gt, Gt, optimize=True)
        acc.add(conn, ke, nd)
    return res, acc.tocsr()


def eval_stress(space: PrimalSpace, material: Material, u: np.ndarray,
                pts: np.ndarray) -> np.ndarray:
    """Pointwise stress tensors at parametric points (Cauchy for both models)."""
    pts = np.atleast_2d(pts)
    nd = space.ncomp
    resd = space.patch.evaluate(pts, nders=1)
    dR = np.einsum("nad,ndk->nak", resd["dR"],
                   np.linalg.inv(resd["jac"]))
    ue = u.reshape(-1, nd)[resd["conn"]]
    H = np.einsum("nak,nac->nck", dR, ue, optimize=True)
    lam, mu = material.lame_lambda, material.lame_mu
    if material.model == "linear":
        eps = 0.5 * (H + np.swapaxes(H, -1, -2))
        tr = np.trace(eps, axis1=-2, axis2=-1)
        return lam * tr[:, None, None] * np.eye(nd)[None] + 2 * mu * eps
    F = H + np.eye(nd)[None]
    J = np.linalg.det(F)
    if np.any(J <= 0):
        raise NonPhysicalStateError("det F <= 0 at a stress sample point")
    lnJ = np.log(J)
    FiT = np.swapaxes(np.linalg.inv(F), -1, -2)
    P = mu * (F - FiT) + lam * lnJ[..., None, None] * FiT
    return np.einsum("nik,njk->nij", P, F) / J[:, None, None]
