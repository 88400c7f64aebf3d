"""Synthetic objectives with certified constants.

Each problem couples a per-sample loss f(w; z) with a finite sampling
distribution over z, so population quantities are exact weighted sums and
every constant in the certificate holds on the ball B(w*, R).  Designs are
bounded by construction (finite feature supports, bounded label noise).

Kinds:
    least_squares    f(w; x, y) = 0.5 (<w, x> - y)^2, y = <w*, x> + xi,
                     xi uniform on {-noise, +noise}
    logistic         y in {-1, +1} drawn from the logistic model at w*
    qnorm_hinge      f(w; x, y) = max(0, 1 - y <w, x>)^q with label flips,
                     q in [1, 2]; gradient is (q-1)-Holder
    pl_1d_sine       f(w; y) = (w - y)^2 + sin^2(w - y), y = base +- noise
    qg_1d_quartic    f(w; y) = (w^2 - y)^2, y = base +- noise; two global
                     minimizers at +-sqrt(mean y)

At zero noise the two 1d kinds reduce to w^2 + sin^2(w) (base 0) and
(w - 2)^2 (w + 2)^2 (base 4), the canonical gradient-dominated and
quadratic-growth-only test functions.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
import numpy as np

from . import _kernels as K
from .errors import ConfigurationError, DomainError
from .seeding import generator

KIND_CODES = {
    "least_squares": K.KIND_LEAST_SQUARES,
    "logistic": K.KIND_LOGISTIC,
    "qnorm_hinge": K.KIND_QNORM_HINGE,
    "pl_1d_sine": K.KIND_PL_1D_SINE,
    "qg_1d_quartic": K.KIND_QG_1D_QUARTIC,
}

# Samples are drawn from a fixed-width uniform block (one row per sample) so
# that the first k rows never depend on n: column 0 picks the design point,
# column 1 drives the label noise / flip, column 2 is reserved.
_UNIFORMS_PER_SAMPLE = 3


def _norm_sq(v: np.ndarray) -> float:
    return float(np.dot(v, v))


def _frozen_array(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Sample:
    """One observation z = (features, label)."""

    features: np.ndarray
    label: float


@dataclass(frozen=True, eq=False)
class ConstantsCertificate:
    """Certified constants, each valid on B(minimizer_wstar, domain_radius_R).

    Fields set to None are not certified analytically for the kind and are
    left to grid estimation.
    """

    domain_radius_R: float
    minimizer_wstar: np.ndarray
    lipschitz_L: float | None = None
    smooth_beta: float | None = None
    holder_P: float | None = None
    holder_alpha: float = 1.0
    mu_qg: float | None = None
    mu_pl: float | None = None
    sigma_sq: float | None = None
    bernstein_Bstar: float | None = None
    relaxed_grad_G: float | None = None
    min_pop_risk_Fstar: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "minimizer_wstar", _frozen_array(self.minimizer_wstar))
        if self.domain_radius_R <= 0:
            raise ConfigurationError("domain_radius_R must be positive")
        if not (0.0 < self.holder_alpha <= 1.0):
            raise ConfigurationError("holder_alpha must lie in (0, 1]")
        if self.mu_pl is not None and self.smooth_beta is not None:
            if self.mu_pl > 2.0 * self.smooth_beta * (1 + 1e-12):
                raise ConfigurationError("mu_pl cannot exceed twice smooth_beta")
        if self.mu_pl is not None and self.mu_pl > 0:
            if self.mu_qg is None or self.mu_qg <= 0:
                raise ConfigurationError("positive mu_pl requires positive mu_qg")


@dataclass(frozen=True, eq=False)
class DesignSpec:
    """Finite feature support: named family plus its realized point set."""

    name: str
    radius: float
    points: np.ndarray  # (k, d)
    weights: np.ndarray  # (k,), sums to 1

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen_array(self.points))
        object.__setattr__(self, "weights", _frozen_array(self.weights))

    @property
    def second_moment(self) -> np.ndarray:
        return (self.points.T * self.weights) @ self.points


def _make_design(name: str, dimension: int, radius: float, params: dict) -> DesignSpec:
    if radius <= 0:
        raise ConfigurationError("design radius must be positive")
    if name == "cube":
        # hypercube corners scaled so every point has norm == radius
        c = radius / math.sqrt(dimension)
        grids = np.meshgrid(*([np.array([-c, c])] * dimension), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
    elif name == "axis":
        eye = np.eye(dimension)
        pts = radius * np.concatenate([eye, -eye], axis=0)
    elif name == "spectrum":
        spectrum = params.get("spectrum")
        if spectrum is None or len(spectrum) != dimension:
            raise ConfigurationError("spectrum design needs one eigenvalue per dimension")
        lam = np.asarray(spectrum, dtype=np.float64)
        if np.any(lam <= 0):
            raise ConfigurationError("spectrum eigenvalues must be positive")
        rot_seed = params.get("rotation_seed")
        if rot_seed is None:
            q = np.eye(dimension)
        else:
            g = generator(int(rot_seed), 0x0D)
            q, _ = np.linalg.qr(g.standard_normal((dimension, dimension)))
        # +-sqrt(d * lam_i) q_i reproduces second moment Q diag(lam) Q^T
        base = (q * np.sqrt(dimension * lam)).T
        pts = np.concatenate([base, -base], axis=0)
        radius = float(np.max(np.linalg.norm(pts, axis=1)))
    elif name == "point_mass":
        # degenerate design for the 1d label-driven kinds
        pts = np.zeros((1, dimension))
    else:
        raise ConfigurationError(f"unknown design {name!r}")
    w = np.full(pts.shape[0], 1.0 / pts.shape[0])
    return DesignSpec(name=name, radius=radius, points=pts, weights=w)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Immutable problem definition; safe for concurrent read."""

    kind: str
    dimension: int
    design: DesignSpec
    noise_level: float
    certificate: ConstantsCertificate
    pop_risk_mode: str = "closed_form"
    mc_samples: int = 0
    mc_seed: int = 0x4D43
    problem_id: str = ""
    q: float = 2.0  # hinge exponent; unused elsewhere
    label_base: float = 0.0  # 1d kinds
    convex: bool = True
    # labeling direction for logistic / hinge; the population minimizer of a
    # flipped hinge is not the generating direction, so both are kept
    w_gen: np.ndarray | None = None

    def __post_init__(self):
        if self.w_gen is not None:
            object.__setattr__(self, "w_gen", _frozen_array(self.w_gen))

    @property
    def kind_code(self) -> int:
        return KIND_CODES[self.kind]

    @property
    def label_direction(self) -> np.ndarray:
        return self.w_gen if self.w_gen is not None else self.certificate.minimizer_wstar

    @property
    def wstar(self) -> np.ndarray:
        return self.certificate.minimizer_wstar

    @property
    def radius(self) -> float:
        return self.certificate.domain_radius_R

    def minimizers(self) -> np.ndarray:
        """Known population minimizer set, shape (m, d)."""
        if self.kind == "qg_1d_quartic":
            root = math.sqrt(self.label_base)
            return np.array([[-root], [root]])
        return self.wstar.reshape(1, -1)

    def in_domain(self, w: np.ndarray) -> bool:
        return _norm_sq(np.asarray(w, dtype=np.float64) - self.wstar) <= self.radius**2 * (1 + 1e-12)


def _label_support(problem: ProblemSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full support of z = (x, y) as (X, y, weights); expectations are exact."""
    pts, pw = problem.design.points, problem.design.weights
    nu = problem.noise_level
    if problem.kind == "least_squares":
        clean = pts @ problem.wstar
        if nu == 0.0:
            return pts, clean, pw
        X = np.concatenate([pts, pts], axis=0)
        y = np.concatenate([clean + nu, clean - nu])
        w = np.concatenate([pw, pw]) * 0.5
        return X, y, w
    if problem.kind == "logistic":
        m = pts @ problem.label_direction
        p_pos = 1.0 / (1.0 + np.exp(-m))
        X = np.concatenate([pts, pts], axis=0)
        y = np.concatenate([np.ones(len(pts)), -np.ones(len(pts))])
        w = np.concatenate([pw * p_pos, pw * (1.0 - p_pos)])
        return X, y, w
    if problem.kind == "qnorm_hinge":
        clean = np.sign(pts @ problem.label_direction)
        p = nu  # interpreted as the label flip probability
        if p == 0.0:
            return pts, clean, pw
        X = np.concatenate([pts, pts], axis=0)
        y = np.concatenate([clean, -clean])
        w = np.concatenate([pw * (1.0 - p), pw * p])
        return X, y, w
    # 1d label-driven kinds
    if nu == 0.0:
        return pts, np.array([problem.label_base]), pw
    X = np.concatenate([pts, pts], axis=0)
    y = np.array([problem.label_base + nu, problem.label_base - nu])
    w = np.concatenate([pw, pw]) * 0.5
    return X, y, w


# ---------------------------------------------------------------------------
# vectorized per-sample evaluation (numpy; the bit-exact path is in _kernels)
# ---------------------------------------------------------------------------


def loss_values(problem: ProblemSpec, W: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """f(w_i; x_j, y_j) for all i, j; shape (m, k)."""
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    M = W @ X.T
    kind = problem.kind
    if kind == "least_squares":
        r = M - y
        return 0.5 * r * r
    if kind == "logistic":
        return np.logaddexp(0.0, -y * M)
    if kind == "qnorm_hinge":
        u = np.maximum(1.0 - y * M, 0.0)
        return u**problem.q
    v = W[:, :1] - y if kind == "pl_1d_sine" else W[:, :1] ** 2 - y
    if kind == "pl_1d_sine":
        return v * v + np.sin(v) ** 2
    return v * v


def grad_values(problem: ProblemSpec, W: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-sample gradients, shape (m, k, d)."""
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    kind = problem.kind
    if kind == "pl_1d_sine":
        v = W[:, :1] - y
        return (2.0 * v + np.sin(2.0 * v))[:, :, None]
    if kind == "qg_1d_quartic":
        v = W[:, :1] ** 2 - y
        return (4.0 * W[:, :1] * v)[:, :, None]
    M = W @ X.T
    if kind == "least_squares":
        coef = M - y
    elif kind == "logistic":
        u = y * M
        coef = -y / (1.0 + np.exp(u))
    else:
        u = np.maximum(1.0 - y * M, 0.0)
        coef = -problem.q * u ** (problem.q - 1.0) * y
    return coef[:, :, None] * X[None, :, :]


def per_sample_loss(problem: ProblemSpec, x: np.ndarray, y: float, w: np.ndarray) -> float:
    """Single-sample loss through the compiled kernel (bit-exact with SGD)."""
    return float(
        K.loss_kernel(
            problem.kind_code,
            problem.q,
            np.ascontiguousarray(x, dtype=np.float64),
            float(y),
            np.ascontiguousarray(w, dtype=np.float64),
        )
    )


def per_sample_gradient(problem: ProblemSpec, x: np.ndarray, y: float, w: np.ndarray) -> np.ndarray:
    out = np.empty(problem.dimension)
    K.grad_kernel(
        problem.kind_code,
        problem.q,
        np.ascontiguousarray(x, dtype=np.float64),
        float(y),
        np.ascontiguousarray(w, dtype=np.float64),
        out,
    )
    return out


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def _ball_extent(wstar: np.ndarray, R: float) -> float:
    """sup of |w| coordinates over B(wstar, R) in 1d."""
    return abs(float(wstar[0])) + R


def make_problem(kind: str, dimension: int, params: dict | None = None) -> ProblemSpec:
    """Build a ProblemSpec with an analytically certified constants record.

    ``params`` accepts per kind:
        common         w_star, noise_level, design, radius, domain_radius,
                       problem_id, pop_risk_mode, mc_samples
        qnorm_hinge    q (required in (1, 2]); noise_level is the flip
                       probability in [0, 0.5)
        pl_1d_sine     label_base (default 0.0)
        qg_1d_quartic  label_base (default 4.0); requires base - noise > 0
        spectrum design  spectrum (eigenvalues), rotation_seed
    """
    params = dict(params or {})
    if kind not in KIND_CODES:
        raise ConfigurationError(f"unknown problem kind {kind!r}")
    if dimension < 1:
        raise ConfigurationError("dimension must be >= 1")
    one_d = kind in ("pl_1d_sine", "qg_1d_quartic")
    if one_d and dimension != 1:
        raise ConfigurationError(f"{kind} is one-dimensional")

    noise = float(params.get("noise_level", 0.0))
    if noise < 0:
        raise ConfigurationError("noise_level must be >= 0")

    if one_d:
        design = _make_design("point_mass", 1, 1.0, params)
        base = float(params.get("label_base", 0.0 if kind == "pl_1d_sine" else 4.0))
        if kind == "qg_1d_quartic":
            if base - noise <= 0:
                raise ConfigurationError("qg_1d_quartic requires label_base - noise > 0")
            wstar = np.array([math.sqrt(base)])
        else:
            wstar = np.array([base])
    else:
        design_name = params.get("design", "cube")
        radius = float(params.get("radius", 1.0))
        design = _make_design(design_name, dimension, radius, params)
        wstar_in = params.get("w_star", np.ones(dimension))
        wstar = np.atleast_1d(np.asarray(wstar_in, dtype=np.float64))
        if wstar.shape != (dimension,):
            raise ConfigurationError("w_star has the wrong dimension")
        base = 0.0

    R = float(params.get("domain_radius", 5.0 * math.sqrt(_norm_sq(wstar)) + 5.0))
    pop_mode = params.get("pop_risk_mode", "closed_form")
    if pop_mode not in ("closed_form", "monte_carlo"):
        raise ConfigurationError("pop_risk_mode must be closed_form or monte_carlo")
    mc_samples = int(params.get("mc_samples", 0))
    if pop_mode == "monte_carlo" and mc_samples < 1:
        raise ConfigurationError("monte_carlo mode requires mc_samples >= 1")

    norms = np.linalg.norm(design.points, axis=1)
    r_max = float(norms.max()) if norms.size else 0.0
    cert_kwargs: dict = {}
    convex = True
    q = 2.0
    w_gen = None

    if kind == "least_squares":
        sigma = design.second_moment
        lam = np.linalg.eigvalsh(sigma)
        mu = float(lam[0])
        beta = float(np.max(norms**2))
        L = float(np.max((R * norms + noise) * norms))
        cert_kwargs = dict(
            lipschitz_L=L,
            smooth_beta=beta,
            mu_qg=mu,
            mu_pl=mu,
            sigma_sq=L * L,
            bernstein_Bstar=float(noise * r_max),
            relaxed_grad_G=L,
            min_pop_risk_Fstar=0.5 * noise * noise,
        )
    elif kind == "logistic":
        beta = float(np.max(norms**2)) / 4.0
        L = r_max  # |loss'| <= 1
        prob = ProblemSpec(
            kind=kind, dimension=dimension, design=design, noise_level=noise,
            certificate=ConstantsCertificate(domain_radius_R=R, minimizer_wstar=wstar),
            problem_id="tmp",
        )
        Xs, ys, ws = _label_support(prob)
        fstar = float(ws @ loss_values(prob, wstar, Xs, ys)[0])
        g_opt = grad_values(prob, wstar, Xs, ys)[0]
        bstar = float(np.max(np.linalg.norm(g_opt, axis=1)))
        cert_kwargs = dict(
            lipschitz_L=L,
            smooth_beta=beta,
            sigma_sq=L * L,
            bernstein_Bstar=bstar,
            relaxed_grad_G=L,
            min_pop_risk_Fstar=fstar,
        )
    elif kind == "qnorm_hinge":
        q = float(params.get("q", 0.0))
        if not (1.0 <= q <= 2.0):
            raise ConfigurationError("qnorm_hinge requires q in [1, 2]")
        if not (0.0 <= noise < 0.5):
            raise ConfigurationError("hinge flip probability must lie in [0, 0.5)")
        margins = np.abs(design.points @ wstar)
        if np.any(margins < 1e-12):
            raise ConfigurationError("hinge design must keep labels off the decision boundary")
        w_gen = wstar.copy()
        wstar, fstar = _hinge_population_minimizer(kind, dimension, design, w_gen, noise, q, R)
        R = float(params.get("domain_radius", 5.0 * math.sqrt(_norm_sq(wstar)) + 5.0))
        slack = 1.0 + r_max * (math.sqrt(_norm_sq(wstar)) + R)
        L = q * slack ** (q - 1.0) * r_max
        cert_kwargs = dict(
            lipschitz_L=L,
            holder_P=(q * r_max**q) if q > 1.0 else None,
            holder_alpha=(q - 1.0) if q > 1.0 else 1.0,
            smooth_beta=(2.0 * r_max**2) if q == 2.0 else None,
            sigma_sq=L * L,
            relaxed_grad_G=L,
            min_pop_risk_Fstar=fstar,
        )
    elif kind == "pl_1d_sine":
        ext = _ball_extent(wstar, R) + noise
        cert_kwargs = dict(
            lipschitz_L=2.0 * ext + 1.0,
            smooth_beta=4.0,
            mu_qg=2.0 if noise == 0.0 else None,
            mu_pl=None,  # estimated from a grid; not certified analytically
            sigma_sq=(2.0 * ext + 1.0) ** 2,
            bernstein_Bstar=float(2.0 * noise + 1.0),
            relaxed_grad_G=2.0 * ext + 1.0,
            min_pop_risk_Fstar=noise * noise + math.sin(noise) ** 2,
        )
        convex = True  # weakly convex: f'' = 2 + 2 cos(2v) >= 0
    else:  # qg_1d_quartic
        wmax = _ball_extent(wstar, R)
        y_lo, y_hi = base - noise, base + noise
        beta = max(4.0 * y_hi, 12.0 * wmax**2 - 4.0 * y_lo)
        # |f'| = |4 w (w^2 - y)| peaks at the ball edge or at w^2 = y/3
        cand = [4.0 * wmax * abs(wmax**2 - y) for y in (y_lo, y_hi)]
        cand += [4.0 * math.sqrt(y / 3.0) * (2.0 * y / 3.0) for y in (y_lo, y_hi)]
        # 2 (w^2 - b)^2 / dist(w, {+-sqrt(b)})^2 = 2 (|w| + sqrt(b))^2 >= 2b,
        # with the infimum attained midway between the wells at w = 0
        cert_kwargs = dict(
            lipschitz_L=max(cand),
            smooth_beta=beta,
            mu_qg=2.0 * base,
            mu_pl=None,
            sigma_sq=max(cand) ** 2,
            relaxed_grad_G=max(cand),
            min_pop_risk_Fstar=noise * noise,
        )
        convex = False

    cert = ConstantsCertificate(domain_radius_R=R, minimizer_wstar=wstar, **cert_kwargs)
    pid = params.get("problem_id") or f"{kind}_d{dimension}"
    prob = ProblemSpec(
        kind=kind,
        dimension=dimension,
        design=design,
        noise_level=noise,
        certificate=cert,
        pop_risk_mode=pop_mode,
        mc_samples=mc_samples,
        problem_id=pid,
        q=q,
        label_base=base,
        convex=convex,
        w_gen=w_gen,
    )
    return prob


def _hinge_population_minimizer(kind, dimension, design, w_gen, flip_p, q, R):
    """Population minimizer of the flipped q-norm hinge, solved numerically.

    The population risk is convex with a continuous gradient for q > 1, so a
    quasi-Newton solve from the generating direction reaches gradient norms
    near machine precision.
    """
    from scipy.optimize import minimize

    stub = ProblemSpec(
        kind=kind, dimension=dimension, design=design, noise_level=flip_p,
        certificate=ConstantsCertificate(domain_radius_R=R, minimizer_wstar=w_gen),
        q=q, problem_id="tmp", w_gen=np.asarray(w_gen, dtype=np.float64),
    )
    Xs, ys, ws = _label_support(stub)
    if flip_p == 0.0:
        # any direction with all margins >= 1 interpolates; scale to the
        # closest such point along w_gen
        margins = np.abs(design.points @ np.asarray(w_gen, dtype=np.float64))
        return np.asarray(w_gen, dtype=np.float64) / float(margins.min()), 0.0

    def fg(w):
        f = float(ws @ loss_values(stub, w, Xs, ys)[0])
        g = np.einsum("k,kd->d", ws, grad_values(stub, w, Xs, ys)[0])
        return f, g

    res = minimize(fg, np.asarray(w_gen, dtype=np.float64), jac=True, method="L-BFGS-B",
                   options={"maxiter": 20000, "ftol": 0.0, "gtol": 1e-14})
    w = res.x
    # polish with plain gradient steps; curvature near the optimum is mild
    fval, g = fg(w)
    step = 0.5
    for _ in range(20000):
        if np.linalg.norm(g) <= 1e-12:
            break
        w2 = w - step * g
        f2, g2 = fg(w2)
        if f2 <= fval:
            w, fval, g = w2, f2, g2
        else:
            step *= 0.5
            if step < 1e-18:
                break
    return w, fval


def with_noise_level(problem: ProblemSpec, noise: float) -> ProblemSpec:
    """Same problem with a different noise scale and a recomputed certificate."""
    params = {
        "w_star": problem.label_direction.copy(),
        "noise_level": noise,
        "design": problem.design.name,
        "radius": problem.design.radius,
        "domain_radius": problem.radius,
        "problem_id": problem.problem_id,
        "pop_risk_mode": problem.pop_risk_mode,
        "mc_samples": problem.mc_samples,
    }
    if problem.kind == "qnorm_hinge":
        params["q"] = problem.q
    if problem.kind in ("pl_1d_sine", "qg_1d_quartic"):
        params["label_base"] = problem.label_base
        params.pop("w_star")
        params.pop("radius")
    if problem.design.name == "spectrum":
        sigma = problem.design.second_moment
        params["spectrum"] = list(np.linalg.eigvalsh(sigma))
    return make_problem(problem.kind, problem.dimension, params)


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ordered i.i.d. sample, replayable bit-exactly from (problem, n, seed)."""

    problem: ProblemSpec
    X: np.ndarray
    y: np.ndarray
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "X", _frozen_array(self.X))
        object.__setattr__(self, "y", _frozen_array(self.y))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def problem_id(self) -> str:
        return self.problem.problem_id

    def sample(self, i: int) -> Sample:
        return Sample(features=self.X[i].copy(), label=float(self.y[i]))

    @property
    def samples(self) -> list[Sample]:
        return [self.sample(i) for i in range(self.n)]

    def replaced(self, i: int, sample: Sample) -> "Dataset":
        """Copy with position i swapped for ``sample``; seed -1 marks it derived."""
        X = self.X.copy()
        y = self.y.copy()
        X[i] = sample.features
        y[i] = sample.label
        return Dataset(problem=self.problem, X=X, y=y, seed=-1)


def sample_dataset(problem: ProblemSpec, n: int, seed: int) -> Dataset:
    """Draw n i.i.d. samples; prefix-stable in n for a fixed seed."""
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    u = generator(seed, 0x0A).random((n, _UNIFORMS_PER_SAMPLE))
    pts = problem.design.points
    idx = np.minimum((u[:, 0] * len(pts)).astype(np.int64), len(pts) - 1)
    X = pts[idx]
    nu = problem.noise_level
    kind = problem.kind
    if kind == "least_squares":
        xi = np.where(u[:, 1] < 0.5, nu, -nu)
        y = X @ problem.wstar + xi
    elif kind == "logistic":
        p_pos = 1.0 / (1.0 + np.exp(-(X @ problem.label_direction)))
        y = np.where(u[:, 1] < p_pos, 1.0, -1.0)
    elif kind == "qnorm_hinge":
        clean = np.sign(X @ problem.label_direction)
        flip = u[:, 1] < nu
        y = np.where(flip, -clean, clean)
    else:
        y = problem.label_base + np.where(u[:, 1] < 0.5, nu, -nu)
    return Dataset(problem=problem, X=X, y=y, seed=int(seed))


def fresh_sample(problem: ProblemSpec, seed: int, *key: int) -> Sample:
    from .seeding import child_seed

    return sample_dataset(problem, 1, child_seed(seed, 0x5A, *key)).sample(0)


# ---------------------------------------------------------------------------
# risks and gradients
# ---------------------------------------------------------------------------


def _check_domain(problem: ProblemSpec, w: np.ndarray) -> np.ndarray:
    w = np.atleast_1d(np.asarray(w, dtype=np.float64))
    if not problem.in_domain(w):
        raise DomainError(
            f"w is outside B(w*, R): dist={math.sqrt(_norm_sq(w - problem.wstar)):.4g} "
            f"R={problem.radius:.4g}"
        )
    return w


def population_risk(problem: ProblemSpec, w: np.ndarray) -> float:
    """F(w); exact for closed_form mode, sample mean of mc_samples otherwise."""
    w = _check_domain(problem, w)
    if problem.pop_risk_mode == "monte_carlo":
        mean, _stderr, _m = population_risk_mc(problem, w)
        return mean
    if problem.kind == "least_squares":
        d = w - problem.wstar
        sigma = problem.design.second_moment
        return float(0.5 * d @ sigma @ d + 0.5 * problem.noise_level**2)
    Xs, ys, ws = _label_support(problem)
    return float(ws @ loss_values(problem, w, Xs, ys)[0])


def population_risk_mc(problem: ProblemSpec, w: np.ndarray, seed: int | None = None,
                       m: int | None = None) -> tuple[float, float, int]:
    """Monte-Carlo population risk: (mean, stderr, M)."""
    w = _check_domain(problem, w)
    m = int(m or problem.mc_samples or 10_000)
    ds = sample_dataset(problem, m, problem.mc_seed if seed is None else seed)
    vals = loss_values(problem, w, ds.X, ds.y)[0]
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(m)) if m > 1 else float("inf")
    return mean, stderr, m


def population_gradient(problem: ProblemSpec, w: np.ndarray) -> np.ndarray:
    w = _check_domain(problem, w)
    if problem.pop_risk_mode == "monte_carlo":
        ds = sample_dataset(problem, problem.mc_samples or 10_000, problem.mc_seed)
        return grad_values(problem, w, ds.X, ds.y)[0].mean(axis=0)
    if problem.kind == "least_squares":
        sigma = problem.design.second_moment
        return np.asarray(sigma @ (w - problem.wstar))
    Xs, ys, ws = _label_support(problem)
    return np.einsum("k,kd->d", ws, grad_values(problem, w, Xs, ys)[0])


def empirical_risk(dataset: Dataset, w: np.ndarray) -> float:
    """F_S(w) = mean of per-sample losses."""
    if dataset.n == 0:
        raise ConfigurationError("dataset is empty")
    w = np.atleast_1d(np.asarray(w, dtype=np.float64))
    return float(loss_values(dataset.problem, w, dataset.X, dataset.y)[0].mean())


def empirical_gradient(dataset: Dataset, w: np.ndarray) -> np.ndarray:
    """Mean of per-sample gradients."""
    if dataset.n == 0:
        raise ConfigurationError("dataset is empty")
    w = np.atleast_1d(np.asarray(w, dtype=np.float64))
    return grad_values(dataset.problem, w, dataset.X, dataset.y)[0].mean(axis=0)


def gradient_second_moment_at_opt(problem: ProblemSpec) -> float:
    """E ||grad f(w*, z)||^2, exact on the finite support."""
    Xs, ys, ws = _label_support(problem)
    g = grad_values(problem, problem.wstar, Xs, ys)[0]
    return float(ws @ np.einsum("kd,kd->k", g, g))


def bernstein_moment_bound(problem: ProblemSpec, k_max: int = 6) -> float:
    """Smallest B satisfying E||g*||^k <= 0.5 k! E||g*||^2 B^(k-2), k = 2..k_max."""
    Xs, ys, ws = _label_support(problem)
    g = grad_values(problem, problem.wstar, Xs, ys)[0]
    norms = np.linalg.norm(g, axis=1)
    m2 = float(ws @ norms**2)
    if m2 == 0.0:
        return 0.0
    best = 0.0
    for k in range(3, k_max + 1):
        mk = float(ws @ norms**k)
        bound = (mk / (0.5 * math.factorial(k) * m2)) ** (1.0 / (k - 2))
        best = max(best, bound)
    return best


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------


def dump_dataset_csv(dataset: Dataset, path_or_buf) -> None:
    buf = io.StringIO()
    buf.write(f"# {dataset.problem_id},{dataset.seed},{dataset.n}\n")
    for i in range(dataset.n):
        row = [repr(float(v)) for v in dataset.X[i]] + [repr(float(dataset.y[i]))]
        buf.write(",".join(row) + "\n")
    text = buf.getvalue()
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w") as fh:
            fh.write(text)


def load_dataset_csv(path_or_buf, problems: dict[str, ProblemSpec]) -> Dataset:
    if hasattr(path_or_buf, "read"):
        lines = path_or_buf.read().splitlines()
    else:
        with open(path_or_buf) as fh:
            lines = fh.read().splitlines()
    header = lines[0]
    if not header.startswith("# "):
        raise ConfigurationError("dataset csv is missing the # problem_id,seed,n header")
    pid, seed, n = header[2:].split(",")
    if pid not in problems:
        raise ConfigurationError(f"unknown problem_id {pid!r}")
    rows = [[float(v) for v in line.split(",")] for line in lines[1 : 1 + int(n)]]
    arr = np.asarray(rows)
    return Dataset(problem=problems[pid], X=arr[:, :-1], y=arr[:, -1], seed=int(seed))
