"""The fitting pipeline: constrained initial fit, smoothed refinement, finalization.

Stage 1 solves a convex regularized least-squares problem over per-cell
affine-in-feature pieces, with continuity constraints at the centers and a
shared slope-norm cap, via a quadratic penalty.  Stage 2 locally refines the
max-form function under a slope regularizer tied to the initial solution,
falling back to the initial fit whenever refinement fails to improve the
penalized criterion.  Stage 3 prunes inactive pieces and centers the mean
prediction on the training responses.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import features
from .data import Dataset
from .model import (
    CONVEX_MAX_AFFINE, CONVEX_NORM, CONVEX_PLUS, CONVEX_VARIANTS, COMPLEMENT,
    MAX_MIN_AFFINE, SINGLE, SYMMETRIC, VARIANTS,
    DcComponent, DcModel, MaxMinAffine,
    eval_max, eval_model, eval_model_std, eval_partitioned, lip_stat, prune,
    prune_mma, symmetric_bias_center, to_max_min_affine,
)
from .partition import Partition, afpc
from .solver import ObjectiveHandle, SolveReport, SolverConfig, SolverAbort, \
    lbfgs_minimize, penalty_objective

log = logging.getLogger(__name__)

WEAK = "weak"
STRONG = "strong"

_SMOOTH_KAPPA = 1e-12   # removes the norm kink inside penalty residuals
_REFINE_SLACK = 1e-10   # acceptance slack for the refinement criterion
_FLOOR_RX = 1e-12       # guards theta0 against a zero covariate radius


@dataclass(frozen=True)
class RegParams:
    """Regularization strengths of the two fitting stages."""

    theta0: float   # slope-cap offset
    theta1: float   # cap tightness
    theta2: float   # per-piece slope ridge
    theta3: float   # refinement slope headroom factor

    def __post_init__(self):
        if self.theta0 < 0 or self.theta2 < 0:
            raise ValueError("theta0 and theta2 must be >= 0")
        if self.theta1 <= 0:
            raise ValueError("theta1 must be > 0")
        if self.theta3 < 1:
            raise ValueError("theta3 must be >= 1")


def default_reg_params(r_x: float, r_y: float, n: int, d: int, K: int,
                       theta2_mode: str = STRONG) -> RegParams:
    """Data-driven regularization parameters.

    theta0 = (r_y / r_x) ln n, theta1 = max{1, r_x^2} d K / n,
    theta2 = (r_x/n)^2 (weak) or r_x^2/n (strong) clamped to theta1/K,
    theta3 = ln n.
    """
    if n < 2 or K < 1:
        raise ValueError("need n >= 2 and K >= 1")
    if theta2_mode not in (WEAK, STRONG):
        raise ValueError(f"unknown theta2 mode {theta2_mode!r}")
    logn = float(np.log(n))
    theta0 = (r_y / max(r_x, _FLOOR_RX)) * logn
    theta1 = max(1.0, r_x * r_x) * d * K / n
    theta2 = (r_x / n) ** 2 if theta2_mode == WEAK else r_x * r_x / n
    theta2 = min(theta2, theta1 / K)
    return RegParams(theta0, theta1, theta2, max(1.0, logn))


@dataclass(frozen=True)
class FitConfig:
    variant: str = SINGLE
    kind: str = features.LINF
    theta2_mode: str = STRONG
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    standardize_internally: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        features.check_kind(self.kind)
        if self.theta2_mode not in (WEAK, STRONG):
            raise ValueError(f"unknown theta2 mode {self.theta2_mode!r}")
        if self.variant == MAX_MIN_AFFINE and self.kind != features.LINF:
            raise ValueError("the max-min-affine variant requires the max-norm kind")
        if self.variant == CONVEX_PLUS and self.kind != features.PLUS:
            raise ValueError("convex_plus requires the 'plus' kind")
        if self.variant in (CONVEX_MAX_AFFINE, CONVEX_NORM) and self.kind == features.PLUS:
            raise ValueError(f"{self.variant} requires a norm kind")


@dataclass(frozen=True)
class FitResult:
    initial_model: DcModel
    refined_model: DcModel
    final_model: DcModel
    partition: Partition
    reg: RegParams
    initial_report: SolveReport
    refine_report: SolveReport
    initial_penalized_objective: float
    constraint_violation_max: float
    cone_violation_max: float        # cone residuals of the raw stage-1 solution
    theta_fn: float
    constant_certificate: float
    risk_reg_chain: tuple            # (initial, refined, final) risk + reg_n
    lip_chain: tuple                 # (initial, refined, final) slope stats
    refine_accepted: bool


# ---------------------------------------------------------------------------
# parameter layouts

@dataclass(frozen=True)
class ParamLayout:
    """Flat-vector layout [z?; b; w; b'; w'] used by the optimizers."""

    n_pieces: int
    slope_dim: int
    symmetric: bool = False
    with_z: bool = True

    @property
    def block(self) -> int:
        return self.n_pieces * (1 + self.slope_dim)

    @property
    def dim(self) -> int:
        return int(self.with_z) + self.block * (2 if self.symmetric else 1)

    def unpack(self, params):
        off = 1 if self.with_z else 0
        z = float(params[0]) if self.with_z else 0.0
        K, s = self.n_pieces, self.slope_dim
        b1 = params[off:off + K]
        W1 = params[off + K:off + K + K * s].reshape(K, s)
        if not self.symmetric:
            return z, b1, W1, None, None
        off2 = off + K + K * s
        b2 = params[off2:off2 + K]
        W2 = params[off2 + K:off2 + K + K * s].reshape(K, s)
        return z, b1, W1, b2, W2

    def pack(self, z, b1, W1, b2=None, W2=None):
        parts = []
        if self.with_z:
            parts.append(np.array([z], dtype=float))
        parts += [np.asarray(b1, dtype=float).ravel(), np.asarray(W1, dtype=float).ravel()]
        if self.symmetric:
            parts += [np.asarray(b2, dtype=float).ravel(), np.asarray(W2, dtype=float).ravel()]
        return np.concatenate(parts)


@dataclass(frozen=True)
class MmaLayout:
    n_blocks: int
    n_inner: int
    d: int

    @property
    def dim(self) -> int:
        return self.n_blocks * self.n_inner * (1 + self.d)

    def unpack(self, params):
        K, L, d = self.n_blocks, self.n_inner, self.d
        B = params[:K * L].reshape(K, L)
        S = params[K * L:].reshape(K, L, d)
        return B, S

    def pack(self, B, S):
        return np.concatenate([np.asarray(B, float).ravel(), np.asarray(S, float).ravel()])


def _smooth_norms(W):
    """sqrt(||w||^2 + kappa^2) per row: differentiable at zero slopes."""
    return np.sqrt(np.sum(W * W, axis=1) + _SMOOTH_KAPPA ** 2)


# ---------------------------------------------------------------------------
# cone constraints shared by variants

_CONE_NONE = None
_CONE_V_NONPOS = "v_nonpos"      # norm coefficient <= 0 (max-min-affine)
_CONE_V_NONNEG = "v_nonneg"      # norm coefficient >= 0 (convex with norm)
_CONE_SUM_NONNEG = "sum_nonneg"  # u + v >= 0 elementwise (convex ReLU pair)


def _cone_for(variant):
    return {
        MAX_MIN_AFFINE: _CONE_V_NONPOS,
        CONVEX_NORM: _CONE_V_NONNEG,
        CONVEX_PLUS: _CONE_SUM_NONNEG,
    }.get(variant, _CONE_NONE)


def _cone_residuals(cone, W, d):
    if cone == _CONE_V_NONPOS:
        return W[:, d]
    if cone == _CONE_V_NONNEG:
        return -W[:, d]
    if cone == _CONE_SUM_NONNEG:
        return (-(W[:, :d] + W[:, d:])).ravel()
    return np.empty(0)


def _cone_penalty_grad(cone, W, d, rho, gW):
    """Adds the cone penalty gradient to gW; returns the penalty value."""
    if cone == _CONE_V_NONPOS:
        pos = np.maximum(W[:, d], 0.0)
        gW[:, d] += 2.0 * rho * pos
        return rho * float(np.sum(pos * pos))
    if cone == _CONE_V_NONNEG:
        pos = np.maximum(-W[:, d], 0.0)
        gW[:, d] -= 2.0 * rho * pos
        return rho * float(np.sum(pos * pos))
    if cone == _CONE_SUM_NONNEG:
        pos = np.maximum(-(W[:, :d] + W[:, d:]), 0.0)
        gW[:, :d] -= 2.0 * rho * pos
        gW[:, d:] -= 2.0 * rho * pos
        return rho * float(np.sum(pos * pos))
    return 0.0


def _project_cone(cone, W, d):
    if cone == _CONE_V_NONPOS:
        W = W.copy()
        W[:, d] = np.minimum(W[:, d], 0.0)
    elif cone == _CONE_V_NONNEG:
        W = W.copy()
        W[:, d] = np.maximum(W[:, d], 0.0)
    elif cone == _CONE_SUM_NONNEG:
        W = W.copy()
        deficit = np.minimum(W[:, :d] + W[:, d:], 0.0)
        W[:, :d] -= 0.5 * deficit
        W[:, d:] -= 0.5 * deficit
    return W


# ---------------------------------------------------------------------------
# the initial (partitioned, constrained) problem

class InitialConstraints:
    """Continuity + slope-cap residuals of the initial problem, vectorized.

    Residuals, for every component: b_k >= b_l + w_l . phi(c_k, c_l) for all
    (k, l), and ||w_k|| <= z + theta0.  Cone residuals are appended when the
    variant restricts the norm/ReLU coefficients.
    """

    def __init__(self, layout, phi_cc, theta0, cone, d):
        self.layout = layout
        self.phi_cc = phi_cc          # (K, K, slope_dim)
        self.theta0 = theta0
        self.cone = cone
        self.d = d

    def _pair_residuals(self, b, W):
        M = np.einsum("klj,lj->kl", self.phi_cc, W)
        return b[None, :] + M - b[:, None]

    def residuals(self, params) -> np.ndarray:
        z, b1, W1, b2, W2 = self.layout.unpack(params)
        parts = [self._pair_residuals(b1, W1).ravel(),
                 np.linalg.norm(W1, axis=1) - z - self.theta0,
                 _cone_residuals(self.cone, W1, self.d)]
        if self.layout.symmetric:
            parts += [self._pair_residuals(b2, W2).ravel(),
                      np.linalg.norm(W2, axis=1) - z - self.theta0]
        return np.concatenate(parts)

    def max_violation(self, params) -> float:
        res = self.residuals(params)
        return float(max(0.0, res.max())) if res.size else 0.0

    def penalty(self, params, rho):
        z, b1, W1, b2, W2 = self.layout.unpack(params)
        value = 0.0
        gz = 0.0
        gparts = []
        for b, W in ((b1, W1), (b2, W2)) if self.layout.symmetric else ((b1, W1),):
            G = np.maximum(self._pair_residuals(b, W), 0.0)
            value += rho * float(np.sum(G * G))
            H = 2.0 * rho * G
            gb = H.sum(axis=0) - H.sum(axis=1)
            gW = np.einsum("kl,klj->lj", H, self.phi_cc)
            sn = _smooth_norms(W)
            gpos = np.maximum(sn - _SMOOTH_KAPPA - z - self.theta0, 0.0)
            value += rho * float(np.sum(gpos * gpos))
            h = 2.0 * rho * gpos
            gz -= float(np.sum(h))
            gW += (h / sn)[:, None] * W
            value += _cone_penalty_grad(self.cone, W, self.d, rho, gW)
            gparts += [gb, gW.ravel()]
        grad_core = np.concatenate(gparts)
        if self.layout.with_z:
            grad = np.concatenate([[gz], grad_core])
        else:
            grad = grad_core
        return value, grad


class _InitialProblem:
    """Assembles the stage-1 objective for one variant on one partition."""

    def __init__(self, X, y, part: Partition, kind, reg: RegParams, variant):
        self.X, self.y = X, y
        self.part = part
        self.kind = kind
        self.reg = reg
        self.variant = variant
        n, d = X.shape
        self.d = d
        K = part.n_centers
        d_feat = features.feature_dim(kind, d)
        self.slope_dim = d if variant == CONVEX_MAX_AFFINE else d_feat
        self.layout = ParamLayout(K, self.slope_dim, symmetric=(variant == SYMMETRIC))
        own_centers = part.centers[part.assignment]
        self.phi_own = self._clip(features.phi_rows(kind, X, own_centers))
        self.phi_cc = self._clip_tensor(features.phi_tensor(kind, part.centers, part.centers))
        self.cone = _cone_for(variant)
        self.constraints = InitialConstraints(self.layout, self.phi_cc, reg.theta0,
                                              self.cone, d)

    def _clip(self, rows):
        return rows[:, :self.slope_dim] if self.slope_dim < rows.shape[1] else rows

    def _clip_tensor(self, tensor):
        return tensor[:, :, :self.slope_dim] if self.slope_dim < tensor.shape[2] else tensor

    def base_objective(self) -> ObjectiveHandle:
        layout, X, y = self.layout, self.X, self.y
        n = X.shape[0]
        K = layout.n_pieces
        theta1, theta2 = self.reg.theta1, self.reg.theta2
        # Rows sorted by cell: per-cell sums become one reduceat call.  Every
        # cell is nonempty (each center is its own nearest data row).
        order = np.argsort(self.part.assignment, kind="stable")
        labels_sorted = self.part.assignment[order]
        starts = np.searchsorted(labels_sorted, np.arange(K))
        design = np.hstack([np.ones((n, 1)), self.phi_own])[order]
        y_sorted = y[order]

        def evaluate(params):
            z, b1, W1, b2, W2 = layout.unpack(params)
            if layout.symmetric:
                theta = np.concatenate([(b1 - b2)[:, None], W1 - W2], axis=1)
            else:
                theta = np.concatenate([b1[:, None], W1], axis=1)
            r = np.einsum("nj,nj->n", design, theta[labels_sorted]) - y_sorted
            value = theta1 * z * z + float(np.mean(r * r))
            value += theta2 * float(np.sum(W1 * W1))
            if layout.symmetric:
                value += theta2 * float(np.sum(W2 * W2))
            seg = np.add.reduceat(design * r[:, None], starts, axis=0)
            seg *= 2.0 / n
            gb = seg[:, 0]
            gW = seg[:, 1:]
            parts = [np.array([2.0 * theta1 * z]), gb, (gW + 2.0 * theta2 * W1).ravel()]
            if layout.symmetric:
                parts += [-gb, (-gW + 2.0 * theta2 * W2).ravel()]
            return value, np.concatenate(parts)

        return ObjectiveHandle(layout.dim, evaluate)

    def warm_start(self) -> np.ndarray:
        """Per-cell ridge fits, a feasibility pass on the biases, and the cap z."""
        layout = self.layout
        K, s = layout.n_pieces, layout.slope_dim
        n = self.X.shape[0]
        b = np.zeros(K)
        W = np.zeros((K, s))
        ridge = max(n * self.reg.theta2, 0.0)
        for k in range(K):
            rows = np.where(self.part.assignment == k)[0]
            A = np.hstack([np.ones((rows.size, 1)), self.phi_own[rows]])
            gram = A.T @ A
            gram[1:, 1:] += ridge * np.eye(s)
            rhs = A.T @ self.y[rows]
            try:
                beta = np.linalg.solve(gram, rhs)
            except np.linalg.LinAlgError:
                beta = np.linalg.lstsq(gram, rhs, rcond=None)[0]
            if not np.isfinite(beta).all():
                beta = np.zeros(s + 1)
                beta[0] = float(np.mean(self.y[rows]))
            b[k] = beta[0]
            W[k] = beta[1:]
        W = _project_cone(self.cone, W, self.d)
        # One pairwise-max pass lifts biases toward continuity feasibility.
        M = np.einsum("klj,lj->kl", self.phi_cc, W)
        b = np.max(b[None, :] + M, axis=1)
        z = float(np.max(np.maximum(np.linalg.norm(W, axis=1) - self.reg.theta0, 0.0)))
        if layout.symmetric:
            return layout.pack(z, b, W, np.zeros(K), np.zeros((K, s)))
        return layout.pack(z, b, W)

    def certificate_point(self) -> np.ndarray:
        """The feasible constant fit at the mean response."""
        layout = self.layout
        K, s = layout.n_pieces, layout.slope_dim
        ybar = float(np.mean(self.y))
        if layout.symmetric:
            return layout.pack(0.0, np.full(K, ybar), np.zeros((K, s)),
                               np.zeros(K), np.zeros((K, s)))
        return layout.pack(0.0, np.full(K, ybar), np.zeros((K, s)))

    def extract(self, params):
        """Components (cone-projected, norm column re-embedded) from a solution."""
        z, b1, W1, b2, W2 = self.layout.unpack(params)
        comp1 = self._to_component(b1, W1)
        comp2 = self._to_component(b2, W2) if self.layout.symmetric else None
        return float(z), comp1, comp2

    def _to_component(self, b, W):
        W = _project_cone(self.cone, np.asarray(W, float), self.d)
        if self.variant == CONVEX_MAX_AFFINE:
            W = np.hstack([W, np.zeros((W.shape[0], 1))])
        return DcComponent(self.kind, self.part.centers, np.asarray(b, float).copy(), W)


def build_initial_objective(dataset: Dataset, partition: Partition, kind: str,
                            reg: RegParams, variant: str = SINGLE):
    """Stage-1 objective, constraint set, and parameter layout for a dataset."""
    problem = _InitialProblem(dataset.X, dataset.y, partition, kind, reg, variant)
    return problem.base_objective(), problem.constraints, problem.layout


def fit_initial(dataset: Dataset, partition: Partition, kind: str, reg: RegParams,
                solver_cfg: SolverConfig = None, variant: str = SINGLE):
    """Solve the stage-1 penalty problem; returns (model, info dict).

    The solve starts from the better of the per-cell ridge warm start and the
    constant-fit certificate point, so with monotone descent the final
    penalized value never exceeds the certificate.
    """
    solver_cfg = solver_cfg or SolverConfig()
    problem = _InitialProblem(dataset.X, dataset.y, partition, kind, reg, variant)
    penalized = penalty_objective(problem.base_objective(), problem.constraints,
                                  solver_cfg.rho_pen)
    start = problem.warm_start()
    cert = problem.certificate_point()
    cert_value = float(penalized.evaluate(cert)[0])
    if float(penalized.evaluate(start)[0]) > cert_value:
        start = cert
    x_star, report = lbfgs_minimize(penalized, start, solver_cfg)
    if not np.isfinite(x_star).all():
        raise SolverAbort("stage-1 solve produced non-finite parameters")
    cone_violation = 0.0
    if problem.cone is not None:
        _, _, W_raw, _, _ = problem.layout.unpack(x_star)
        res = _cone_residuals(problem.cone, np.asarray(W_raw, float), problem.d)
        cone_violation = float(max(0.0, res.max())) if res.size else 0.0
    z, comp1, comp2 = problem.extract(x_star)
    violation = problem.constraints.max_violation(
        problem.layout.pack(z, comp1.biases,
                            comp1.weights[:, :problem.slope_dim],
                            *(() if comp2 is None else
                              (comp2.biases, comp2.weights[:, :problem.slope_dim]))))
    log.info("fit_initial variant=%s K=%d iters=%d penalized=%.6g violation=%.3g",
             variant, partition.n_centers, report.iterations, report.final_value,
             violation)
    if variant == SYMMETRIC:
        model = DcModel(SYMMETRIC, comp1, second=comp2)
    elif variant == MAX_MIN_AFFINE:
        model = DcModel(MAX_MIN_AFFINE, comp1, mma=to_max_min_affine(comp1))
    else:
        model = DcModel(variant if variant in CONVEX_VARIANTS else SINGLE, comp1)
    info = {
        "report": report,
        "penalized_objective": float(report.final_value),
        "certificate": cert_value,
        "violation": float(violation),
        "cone_violation": cone_violation,
        "z": z,
    }
    return model, info


# ---------------------------------------------------------------------------
# slope bookkeeping shared by the refinement and the diagnostics

def _slope_matrix(model: DcModel) -> np.ndarray:
    """All slope vectors of a model as rows (inner pieces for max-min-affine)."""
    if model.variant == MAX_MIN_AFFINE:
        return model.mma.slopes.reshape(-1, model.mma.d)
    return np.vstack([c.weights for c in model.components()])


def slope_sumsq(model: DcModel) -> float:
    W = _slope_matrix(model)
    return float(np.sum(W * W))


def theta_fn_value(initial_model: DcModel, reg: RegParams, risk_initial: float) -> float:
    """Hinge strength of the refinement regularizer; zero when slopes vanish."""
    lam = lip_stat(initial_model)
    if lam == 0.0:
        return 0.0
    return (risk_initial + reg.theta2 * slope_sumsq(initial_model)) / (lam * lam)


def reg_n_value(model: DcModel, initial_model: DcModel, reg: RegParams,
                risk_initial: float) -> float:
    """Refinement regularizer: hinge on the largest slope plus the ridge."""
    lam0 = lip_stat(initial_model)
    theta = theta_fn_value(initial_model, reg, risk_initial)
    hinge = max(lip_stat(model) - reg.theta3 * lam0, 0.0)
    return theta * hinge * hinge + reg.theta2 * slope_sumsq(model)


def training_risk_std(model: DcModel, X, y) -> float:
    return float(np.mean((eval_model_std(model, X) - y) ** 2))


# ---------------------------------------------------------------------------
# the refinement problem (max-form, smoothed gradients)

def _softmax_rows(A, mu):
    E = np.exp((A - A.max(axis=1, keepdims=True)) / mu)
    return E / E.sum(axis=1, keepdims=True)


def _reg_terms(W_rows, theta, c0, theta2, mu):
    """Value and per-row gradient of the slope regularizer.

    The hinge on the largest slope norm uses soft-max weights in the
    gradient; the value uses the true maximum.
    """
    norms = np.linalg.norm(W_rows, axis=1)
    lam = float(np.max(norms)) if norms.size else 0.0
    hinge = max(lam - c0, 0.0)
    value = theta * hinge * hinge + theta2 * float(np.sum(norms * norms))
    grad = 2.0 * theta2 * W_rows
    if theta > 0.0 and hinge > 0.0:
        w = np.exp((norms - lam) / mu)
        w /= w.sum()
        sn = np.sqrt(np.sum(W_rows * W_rows, axis=1) + _SMOOTH_KAPPA ** 2)
        grad = grad + (2.0 * theta * hinge) * (w / sn)[:, None] * W_rows
    return value, grad


class _RefineProblem:
    """Unconstrained risk + regularizer over the max-form parameters."""

    def __init__(self, initial_model: DcModel, X, y, reg: RegParams,
                 cfg: SolverConfig, theta: float, lam0: float, variant: str):
        self.X, self.y = X, y
        self.reg = reg
        self.mu = cfg.mu
        self.rho = cfg.rho_pen
        self.theta = theta
        self.c0 = reg.theta3 * lam0
        self.variant = variant
        self.kind = initial_model.component.kind
        self.d = initial_model.d
        comp = initial_model.component
        self.centers = comp.used_centers()
        d_feat = features.feature_dim(self.kind, self.d)
        self.slope_dim = self.d if variant == CONVEX_MAX_AFFINE else d_feat
        self.cone = _cone_for(variant) if variant in CONVEX_VARIANTS else _CONE_NONE
        if variant == MAX_MIN_AFFINE:
            mma = initial_model.mma
            self.layout = MmaLayout(mma.n_blocks, mma.biases.shape[1], self.d)
            self.x0 = self.layout.pack(mma.biases, mma.slopes)
        else:
            K = comp.n_pieces
            self.layout = ParamLayout(K, self.slope_dim,
                                      symmetric=(variant == SYMMETRIC), with_z=False)
            phi = features.phi_tensor(self.kind, X, self.centers)
            self.phi = phi[:, :, :self.slope_dim] if self.slope_dim < phi.shape[2] else phi
            if variant == SYMMETRIC:
                sec = initial_model.second
                self.x0 = self.layout.pack(0.0, comp.biases,
                                           comp.weights[:, :self.slope_dim],
                                           sec.biases, sec.weights[:, :self.slope_dim])
            else:
                self.x0 = self.layout.pack(0.0, comp.biases,
                                           comp.weights[:, :self.slope_dim])

    def objective(self) -> ObjectiveHandle:
        if self.variant == MAX_MIN_AFFINE:
            return self._mma_objective()
        return self._max_form_objective()

    def _max_form_objective(self):
        layout, X, y, phi = self.layout, self.X, self.y, self.phi
        n = X.shape[0]
        mu, theta2 = self.mu, self.reg.theta2

        def evaluate(params):
            _, b1, W1, b2, W2 = layout.unpack(params)
            A1 = b1[None, :] + np.einsum("nkj,kj->nk", phi, W1)
            m = A1.max(axis=1)
            if layout.symmetric:
                A2 = b2[None, :] + np.einsum("nkj,kj->nk", phi, W2)
                m2 = A2.max(axis=1)
                r = m - m2 - y
            else:
                r = m - y
            value = float(np.mean(r * r))
            sig1 = _softmax_rows(A1, mu)
            coef1 = (2.0 / n) * r[:, None] * sig1
            gb1 = coef1.sum(axis=0)
            gW1 = np.einsum("nk,nkj->kj", coef1, phi)
            all_rows = [W1] if not layout.symmetric else [W1, W2]
            rv, rg = _reg_terms(np.vstack(all_rows), self.theta, self.c0, theta2, mu)
            value += rv
            gW1 += rg[:layout.n_pieces]
            value += _cone_penalty_grad(self.cone, W1, self.d, self.rho, gW1)
            parts = [gb1, gW1.ravel()]
            if layout.symmetric:
                sig2 = _softmax_rows(A2, mu)
                coef2 = -(2.0 / n) * r[:, None] * sig2
                gb2 = coef2.sum(axis=0)
                gW2 = np.einsum("nk,nkj->kj", coef2, phi) + rg[layout.n_pieces:]
                parts += [gb2, gW2.ravel()]
            return value, np.concatenate(parts)

        return ObjectiveHandle(layout.dim, evaluate)

    def _mma_objective(self):
        layout, X, y = self.layout, self.X, self.y
        n = X.shape[0]
        mu, theta2 = self.mu, self.reg.theta2

        def evaluate(params):
            B, S = layout.unpack(params)
            inner = B[None, :, :] + np.einsum("kld,nd->nkl", S, X)
            m_in = inner.min(axis=2)
            m = m_in.max(axis=1)
            r = m - y
            value = float(np.mean(r * r))
            sig = _softmax_rows(m_in, mu)                       # outer max weights
            E = np.exp((m_in[:, :, None] - inner) / mu)         # inner min weights
            tau = E / E.sum(axis=2, keepdims=True)
            coef = (2.0 / n) * r[:, None, None] * sig[:, :, None] * tau
            gB = coef.sum(axis=0)
            gS = np.einsum("nkl,nd->kld", coef, X)
            rows = S.reshape(-1, layout.d)
            rv, rg = _reg_terms(rows, self.theta, self.c0, theta2, mu)
            value += rv
            gS = gS + rg.reshape(S.shape)
            return value, np.concatenate([gB.ravel(), gS.ravel()])

        return ObjectiveHandle(layout.dim, evaluate)

    def extract(self, params, initial_model: DcModel) -> DcModel:
        if self.variant == MAX_MIN_AFFINE:
            B, S = self.layout.unpack(params)
            comp = initial_model.component  # pre-conversion snapshot, kept in sync
            return DcModel(MAX_MIN_AFFINE, comp, mma=MaxMinAffine(B.copy(), S.copy()))
        _, b1, W1, b2, W2 = self.layout.unpack(params)
        comp1 = self._to_component(initial_model.component, b1, W1)
        if self.variant == SYMMETRIC:
            comp2 = self._to_component(initial_model.second, b2, W2)
            return DcModel(SYMMETRIC, comp1, second=comp2)
        return DcModel(initial_model.variant, comp1)

    def _to_component(self, template: DcComponent, b, W):
        W = _project_cone(self.cone, np.asarray(W, float), self.d)
        if self.variant == CONVEX_MAX_AFFINE:
            W = np.hstack([W, np.zeros((W.shape[0], 1))])
        return replace(template, biases=np.asarray(b, float).copy(), weights=W)


def build_refine_objective(initial_model: DcModel, dataset: Dataset, reg: RegParams,
                           cfg: SolverConfig = None, variant: str = None):
    """Stage-2 objective and its starting point (mainly for testing)."""
    cfg = cfg or SolverConfig()
    variant = variant or initial_model.variant
    risk0 = training_risk_std(initial_model, dataset.X, dataset.y)
    theta = theta_fn_value(initial_model, reg, risk0)
    problem = _RefineProblem(initial_model, dataset.X, dataset.y, reg, cfg,
                             theta, lip_stat(initial_model), variant)
    return problem.objective(), problem.x0


def refine(initial_model: DcModel, dataset: Dataset, reg: RegParams,
           cfg: SolverConfig = None):
    """Locally refine a fitted model; never returns a worse criterion value.

    With zero initial slopes the initial model is returned unchanged.  A
    refined candidate is accepted only if risk + reg does not exceed the
    initial value (tiny slack); otherwise the initial model is returned.
    """
    cfg = cfg or SolverConfig()
    risk0 = training_risk_std(initial_model, dataset.X, dataset.y)
    lam0 = lip_stat(initial_model)
    theta = theta_fn_value(initial_model, reg, risk0)
    rr0 = risk0 + reg_n_value(initial_model, initial_model, reg, risk0)
    if lam0 == 0.0:
        report = SolveReport(0, rr0, 0.0, 0, True)
        return initial_model, report, False
    problem = _RefineProblem(initial_model, dataset.X, dataset.y, reg, cfg,
                             theta, lam0, initial_model.variant)
    x_star, report = lbfgs_minimize(problem.objective(), problem.x0, cfg)
    candidate = problem.extract(x_star, initial_model)
    rr_cand = (training_risk_std(candidate, dataset.X, dataset.y)
               + reg_n_value(candidate, initial_model, reg, risk0))
    accepted = bool(np.isfinite(rr_cand) and rr_cand <= rr0 + _REFINE_SLACK)
    log.info("refine variant=%s iters=%d accepted=%s rr0=%.6g rr=%.6g",
             initial_model.variant, report.iterations, accepted, rr0, rr_cand)
    return (candidate if accepted else initial_model), report, accepted


def finalize(refined: DcModel, dataset: Dataset) -> DcModel:
    """Prune inactive pieces and center the mean prediction on mean(y)."""
    Xc = refined.transform_x(dataset.X)
    if refined.variant == MAX_MIN_AFFINE:
        mma, keep = prune_mma(refined.mma, Xc, return_indices=True)
        comp = replace(refined.component, biases=refined.component.biases[keep],
                       weights=refined.component.weights[keep],
                       center_idx=refined.component.center_idx[keep])
        model = replace(refined, component=comp, mma=mma)
    elif refined.variant == SYMMETRIC:
        model = replace(refined, component=prune(refined.component, Xc),
                        second=prune(refined.second, Xc))
    else:
        model = replace(refined, component=prune(refined.component, Xc))
    mean_pred = float(np.mean(eval_model_std(model, Xc)))
    ybar_std = (float(np.mean(dataset.y)) - model.y_shift) / model.y_scale
    model = replace(model, offset=model.offset + (ybar_std - mean_pred))
    if model.variant == SYMMETRIC:
        model = symmetric_bias_center(model)
    return model


# ---------------------------------------------------------------------------
# the full pipeline

def _std_maps(dataset: Dataset, enabled: bool):
    d = dataset.d
    if not enabled:
        return np.zeros(d), np.ones(d), 0.0, 1.0
    x_shift = dataset.X.mean(axis=0)
    x_scale = np.std(dataset.X, axis=0, ddof=1) if dataset.n > 1 else np.ones(d)
    x_scale = np.where(x_scale > 0, x_scale, 1.0)
    y_shift = float(np.mean(dataset.y))
    y_scale = float(np.std(dataset.y, ddof=1)) if dataset.n > 1 else 1.0
    if y_scale <= 0:
        y_scale = 1.0
    return x_shift, x_scale, y_shift, y_scale


def fit_dcf(dataset: Dataset, config: FitConfig = None) -> FitResult:
    """Run the full pipeline for the configured variant.

    Internally the data are centered and scaled to unit variance; the
    returned models carry the affine maps so they act on raw coordinates.
    """
    config = config or FitConfig()
    if dataset.n < 2:
        raise ValueError("need at least two samples")
    if config.variant == COMPLEMENT:
        inner_cfg = replace(config, variant=SINGLE)
        inner = fit_dcf(Dataset(dataset.X, -dataset.y), inner_cfg)
        return _wrap_complement(inner)

    x_shift, x_scale, y_shift, y_scale = _std_maps(dataset, config.standardize_internally)
    Xs = (dataset.X - x_shift) / x_scale
    ys = (dataset.y - y_shift) / y_scale
    ds_std = Dataset(Xs, ys)
    part = afpc(Xs, config.seed, ys)
    log.info("afpc K=%d eps=%.4g r_x=%.4g", part.n_centers, part.eps_n, part.r_x)
    reg = default_reg_params(part.r_x, part.r_y, dataset.n, dataset.d,
                             part.n_centers, config.theta2_mode)

    initial_std, info = fit_initial(ds_std, part, config.kind, reg,
                                    config.solver, config.variant)
    risk0 = training_risk_std(initial_std, Xs, ys)
    theta = theta_fn_value(initial_std, reg, risk0)
    rr0 = risk0 + reg_n_value(initial_std, initial_std, reg, risk0)

    refined_std, refine_report, accepted = refine(initial_std, ds_std, reg, config.solver)
    risk1 = training_risk_std(refined_std, Xs, ys)
    rr1 = risk1 + reg_n_value(refined_std, initial_std, reg, risk0)

    final_std = finalize(refined_std, ds_std)
    risk2 = training_risk_std(final_std, Xs, ys)
    rr2 = risk2 + reg_n_value(final_std, initial_std, reg, risk0)

    transforms = dict(x_shift=x_shift, x_scale=x_scale, y_shift=y_shift, y_scale=y_scale)
    return FitResult(
        initial_model=replace(initial_std, **transforms),
        refined_model=replace(refined_std, **transforms),
        final_model=replace(final_std, **transforms),
        partition=part,
        reg=reg,
        initial_report=info["report"],
        refine_report=refine_report,
        initial_penalized_objective=info["penalized_objective"],
        constraint_violation_max=info["violation"],
        cone_violation_max=info["cone_violation"],
        theta_fn=theta,
        constant_certificate=info["certificate"],
        risk_reg_chain=(rr0, rr1, rr2),
        lip_chain=(lip_stat(initial_std), lip_stat(refined_std), lip_stat(final_std)),
        refine_accepted=accepted,
    )


def _wrap_complement(inner: FitResult) -> FitResult:
    def flip(model: DcModel) -> DcModel:
        return replace(model, variant=COMPLEMENT, offset=-model.offset,
                       y_shift=-model.y_shift)
    return replace(inner, initial_model=flip(inner.initial_model),
                   refined_model=flip(inner.refined_model),
                   final_model=flip(inner.final_model))


def fit_complement(dataset: Dataset, config: FitConfig = None) -> FitResult:
    """Fit the sign-flipped (min-form) variant: train on -y, negate the result."""
    config = config or FitConfig()
    return fit_dcf(dataset, replace(config, variant=COMPLEMENT))


def fit_symmetric(dataset: Dataset, config: FitConfig = None) -> FitResult:
    """Fit the difference-of-two-components variant."""
    config = config or FitConfig()
    return fit_dcf(dataset, replace(config, variant=SYMMETRIC))


def fit_max_min_affine(dataset: Dataset, config: FitConfig = None) -> FitResult:
    """Fit with nonpositive norm coefficients and refine in max-min-affine form."""
    config = config or FitConfig(kind=features.LINF)
    return fit_dcf(dataset, replace(config, variant=MAX_MIN_AFFINE,
                                    kind=features.LINF))


def fit_convex(dataset: Dataset, config: FitConfig) -> FitResult:
    """Fit one of the convexity-restricted variants."""
    if config.variant not in CONVEX_VARIANTS:
        raise ValueError(f"fit_convex requires a convex variant, got {config.variant!r}")
    return fit_dcf(dataset, config)


# ---------------------------------------------------------------------------
# diagnostics used by the test suite

def fit_diagnostics(result: FitResult, dataset: Dataset) -> dict:
    """Recompute the pipeline's invariant quantities for external checking."""
    model = result.initial_model
    Xs = model.transform_x(dataset.X)
    out = {
        "risk_reg_chain": result.risk_reg_chain,
        "lip_chain": result.lip_chain,
        "violation": result.constraint_violation_max,
        "mean_prediction": float(np.mean(eval_model(result.final_model, dataset.X))),
        "y_mean": float(np.mean(dataset.y)),
    }
    comps = model.components()
    labels = result.partition.assignment
    gaps = []
    for comp in comps:
        if comp.n_pieces != result.partition.n_centers:
            continue  # pruned snapshot; the gap bound applies pre-pruning only
        f_vals = eval_max(comp, Xs)
        g_vals = eval_partitioned(comp, Xs, labels)
        gaps.append((f_vals - g_vals))
    if gaps:
        gap = np.concatenate(gaps)
        out["partition_gap_min"] = float(gap.min())
        out["partition_gap_max"] = float(gap.max())
        cons = features.constants(model.component.kind, model.d)
        out["partition_gap_bound"] = (
            2.0 * result.lip_chain[0] * result.partition.eps_n
            + 10.0 * result.constraint_violation_max
            * (1.0 + cons.c_phi * 2.0 * result.partition.r_x))
    return out
