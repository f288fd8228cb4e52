"""Constraint qualification diagnostics for matrix-inequality problems.

Every check works on eigenvector families of the constraint matrix.  At a
feasible point with rank r, the vectors v_ij(x, E) collect the curvature of
G against pairs of columns of an orthonormal basis E for the small
eigenspace; linear or positive dependence inside those families is what
separates nondegeneracy, Robinson's condition, and the weaker sequential
and limiting constant-rank conditions from each other.

The samplers here can certify a condition, exhibit a concrete violation
witness, or report that no violation was found within the budget.  Witness
payloads carry enough data (points, bases, shifts) to be replayed
bit for bit by ``replay_witness``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, asdict
from datetime import datetime, timezone

import numpy as np

from . import kkt, linalg, model, solvers

CERTIFIED_HOLDS = "CERTIFIED_HOLDS"
NO_VIOLATION_FOUND = "NO_VIOLATION_FOUND"
VIOLATED = "VIOLATED"

#: subset enumeration over the small eigenspace is exponential in m - r
COMBINATORIAL_CAP = 12

WEAK_KINDS = ("weak-nondegeneracy", "weak-robinson", "weak-crcq", "weak-cpld")
SEQ_KINDS = ("seq-crcq", "seq-cpld")


class InfeasiblePointError(ValueError):
    """Raised when a diagnostic is requested at an infeasible point."""

    def __init__(self, infeasibility: float, name: str = ""):
        self.infeasibility = float(infeasibility)
        where = f" of problem {name}" if name else ""
        super().__init__(
            f"point{where} is infeasible: ||proj_psd(-G)|| = {infeasibility:.3e}")


class CombinatorialCapError(ValueError):
    """Raised when m - r exceeds the subset-enumeration cap."""


@dataclass(frozen=True)
class CqBudget:
    """Sampling effort shared by all constraint qualification checks.

    ``shrink_levels`` sequences use step sizes t0 * 2^-j, j = 0..L-1; a
    violation needs the trailing ``consecutive`` levels to agree.  ``n_q``
    bounds the Haar draws over kernel bases, ``angle_grid`` the resolution
    of the deterministic rotation sweep used when the kernel is
    two-dimensional.
    """

    n_directions: int = 32
    n_q: int = 64
    shrink_levels: int = 12
    t0: float = 0.1
    n_basis_samples: int = 6
    n_stiefel: int = 4
    consecutive: int = 3
    angle_grid: int = 256
    robinson_iters: int = 200
    robinson_restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 8 <= self.shrink_levels <= 20:
            raise ValueError("shrink_levels must lie in [8, 20]")
        if self.t0 <= 0.0:
            raise ValueError("t0 must be positive")
        if not 1 <= self.consecutive <= self.shrink_levels:
            raise ValueError("consecutive must lie in [1, shrink_levels]")
        if self.n_directions < 0 or self.n_q < 0 or self.n_stiefel < 0 \
                or self.n_basis_samples < 0:
            raise ValueError("sample counts must be nonnegative")
        if self.angle_grid < 16:
            raise ValueError("angle_grid must be at least 16")
        if self.robinson_iters < 1 or self.robinson_restarts < 1:
            raise ValueError("robinson search needs at least one iteration")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


@dataclass(frozen=True)
class WitnessCurve:
    """A registered curve feeding extra sequences into the samplers.

    ``kind`` is "x" for plain point curves t -> x(t), or "x-delta" for
    point/shift curves t -> (x(t), Delta(t)) whose shifted constraint
    G(x(t)) + Delta(t) carries the eigenvector sequence.
    """

    name: str
    kind: str
    func: object

    def __post_init__(self):
        if self.kind not in ("x", "x-delta"):
            raise ValueError("curve kind must be 'x' or 'x-delta'")


@dataclass(frozen=True)
class VFamily:
    """Vectors v_ij(x, E), one per unordered column pair of E.

    Entry l of v_ij is e_i' D_l G(x) e_j.  Only pairs i <= j are stored;
    lookups with swapped indices return the identical vector, matching
    the symmetry of the derivative matrices.
    """

    x: np.ndarray
    basis: np.ndarray
    pairs: tuple
    vectors: np.ndarray

    @property
    def q(self) -> int:
        return self.basis.shape[1]

    def vector(self, i: int, j: int) -> np.ndarray:
        key = (min(i, j), max(i, j))
        return self.vectors[self.pairs.index(key)]

    def diag(self) -> np.ndarray:
        rows = [k for k, (i, j) in enumerate(self.pairs) if i == j]
        return self.vectors[rows]

    def full_list(self) -> list:
        return [self.vectors[k] for k in range(len(self.pairs))]


def v_family(problem: model.NsdpProblem, x, E) -> VFamily:
    """Column-pair curvature family of the constraint at (x, E)."""
    x = np.asarray(x, dtype=float)
    cols = E.cols if isinstance(E, linalg.EigBasis) else np.asarray(E, dtype=float)
    if cols.ndim != 2 or cols.shape[0] != problem.m:
        raise ValueError(f"basis must have {problem.m} rows")
    q = cols.shape[1]
    Ds = problem.dg(x)
    DE = [D @ cols for D in Ds]
    pairs = tuple((i, j) for i in range(q) for j in range(i, q))
    vecs = np.zeros((len(pairs), problem.n))
    # fsum keeps the contraction sign-symmetric (no FMA asymmetry), so
    # identities like v_ii = -v_jj for trace-free derivatives hold exactly
    for k, (i, j) in enumerate(pairs):
        for l in range(problem.n):
            vecs[k, l] = math.fsum(
                cols[t, i] * DE[l][t, j] for t in range(problem.m))
    return VFamily(x=x.copy(), basis=cols.copy(), pairs=pairs, vectors=vecs)


def _diag_vectors(problem: model.NsdpProblem, x, E, indices) -> list:
    """Diagonal family members v_ii for the requested column indices."""
    x = np.asarray(x, dtype=float)
    cols = E.cols if isinstance(E, linalg.EigBasis) else np.asarray(E, dtype=float)
    Ds = problem.dg(x)
    out = []
    m = cols.shape[0]
    for i in indices:
        c = cols[:, i]
        Dc = [D @ c for D in Ds]
        out.append(np.array([math.fsum(c[t] * w[t] for t in range(m))
                             for w in Dc]))
    return out


@dataclass(frozen=True)
class CqVerdict:
    """Outcome of one constraint qualification check at one point."""

    condition: str
    status: str
    problem_name: str
    m: int
    n: int
    rank: int
    x_bar: tuple
    seed: int
    budget: dict
    epsilons: dict
    notes: tuple = ()
    witness: dict | None = None

    def to_payload(self) -> dict:
        return _jsonify({
            "condition": self.condition,
            "status": self.status,
            "problem": self.problem_name,
            "m": self.m,
            "n": self.n,
            "rank": self.rank,
            "x_bar": list(self.x_bar),
            "seed": self.seed,
            "budget": dict(self.budget),
            "epsilons": dict(self.epsilons),
            "notes": list(self.notes),
            "witness": self.witness,
        })


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    return obj


def verdict_to_text(verdict: CqVerdict, generated_at: str | None = None) -> str:
    """Serialized verdict with a timestamp header excluded from hashing."""
    stamp = generated_at or datetime.now(timezone.utc).isoformat()
    body = json.dumps(verdict.to_payload(), indent=2, sort_keys=True)
    return f"# generated-at: {stamp}\n{body}\n"


def write_verdict(verdict: CqVerdict, path) -> str:
    text = verdict_to_text(verdict)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return text


def read_verdict(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if not ln.startswith("#")]
    return json.loads("\n".join(lines))


def content_digest(text: str) -> str:
    """SHA-256 over all lines except the generated-at header."""
    kept = [ln for ln in text.splitlines() if not ln.startswith("# generated-at:")]
    return hashlib.sha256(("\n".join(kept) + "\n").encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# shared plumbing


def _rng(seed: int, *key) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed),
                                spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def _feasibility_gate(problem: model.NsdpProblem, x_bar):
    x = np.asarray(x_bar, dtype=float)
    G = problem.g(x)
    dec = linalg.spectral_decompose(G)
    tol = linalg.EPS_PSD_FACTOR * (1.0 + linalg.frob(G))
    if float(dec.eigenvalues[-1]) < -tol:
        raise InfeasiblePointError(linalg.frob(linalg.proj_psd(-G)), problem.name)
    r = linalg.rank_of_psd(G)
    return x, G, dec, r


def _scale_v(problem: model.NsdpProblem, x_bar) -> float:
    """Magnitude of the constraint derivative, the floor for rank tests."""
    Ds = problem.dg(np.asarray(x_bar, dtype=float))
    return max(1.0, max((linalg.frob(D) for D in Ds), default=0.0))


def _kernel_basis(dec: linalg.SpectralDecomp, r: int) -> np.ndarray:
    """Tail eigenvectors reordered so the smallest eigenvalue leads.

    Matches the column convention of linalg.eig_basis_smallest without
    redoing the decomposition.
    """
    return dec.eigenvectors[:, r:][:, ::-1].copy()


def _lin_dep(vectors, scale: float) -> bool:
    """Linear dependence with singular values measured against ``scale``.

    The family-relative test of ``linalg.lin_dependent`` would declare a
    lone vector of norm 1e-16 independent; premise detection at limit
    bases needs near-zero vectors of the problem's own scale to count as
    dependent, so the threshold is eps_rank times the derivative scale.
    """
    vecs = [np.asarray(v, dtype=float).ravel() for v in vectors]
    if not vecs:
        return False
    sig = linalg.family_singular_values(vecs)
    rank = linalg.numerical_rank(sig, scale)
    return rank < len(vecs)


def _pos_dep(vectors) -> bool:
    return linalg.pos_lin_dependent(vectors)


def _unit_directions(n: int, extra: int, rng: np.random.Generator) -> list:
    dirs = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        dirs.append(e.copy())
        dirs.append(-e)
    for _ in range(extra):
        g = rng.standard_normal(n)
        nrm = float(np.linalg.norm(g))
        if nrm > 1e-12:
            dirs.append(g / nrm)
    seen = set()
    out = []
    for d in dirs:
        key = tuple(round(float(v), 9) for v in d)
        if key not in seen:
            seen.add(key)
            out.append(d)
    return out


def _levels(budget: CqBudget) -> list:
    return [budget.t0 * 2.0 ** (-j) for j in range(budget.shrink_levels)]


def _subsets(q: int) -> list:
    out = []
    for size in range(1, q + 1):
        out.extend(itertools.combinations(range(q), size))
    return out


def _cluster_pattern(values_desc: np.ndarray, tol: float) -> tuple:
    """Block sizes of consecutive numerically equal eigenvalues."""
    vals = np.asarray(values_desc, dtype=float)
    if vals.size == 0:
        return ()
    sizes = []
    cur = 1
    for a, b in zip(vals[:-1], vals[1:]):
        if (a - b) <= tol:
            cur += 1
        else:
            sizes.append(cur)
            cur = 1
    sizes.append(cur)
    return tuple(sizes)


def _block_rotation(pattern: tuple, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal matrix rotating only inside equal-eigenvalue blocks."""
    q = sum(pattern)
    Q = np.zeros((q, q))
    at = 0
    for b in pattern:
        Q[at:at + b, at:at + b] = linalg.haar_orthogonal(b, rng) if b > 1 \
            else np.ones((1, 1))
        at += b
    return Q


def _extrapolated_limit(chain: list) -> np.ndarray | None:
    """Limit basis of an aligned chain via one Richardson step.

    With eigenvector error O(t) per level and a halving step, the
    combination 2 E_L - E_{L-1} cancels the first-order term, which is
    what lets exact-zero premise values at the limit pass the rank
    threshold.  Chains that fail to settle are rejected.
    """
    E_last, E_prev = chain[-1], chain[-2]
    E_bar = linalg.orthonormal_columns(2.0 * E_last - E_prev)
    if linalg.frob(E_bar - E_last) > 0.2 * max(1.0, math.sqrt(E_last.shape[1])):
        return None
    return E_bar


def _golden_min(fun, a: float, b: float, iters: int = 70):
    """Golden-section minimization on [a, b]; returns (argmin, value)."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    if fc <= fd:
        return c, fc
    return d, fd


def _sweep_candidates(problem: model.NsdpProblem, x_bar, E0: np.ndarray,
                      scale_v: float, budget: CqBudget) -> list:
    """Deterministic rotation sweep over a two-column kernel basis.

    Haar draws almost surely miss the measure-zero rotations where a
    diagonal family member vanishes or the pair becomes positively
    dependent, so those angles are located by a grid plus golden-section
    refinement of four scalar dependence measures.  Returned bases are
    proposals only; the callers re-test dependence before using them.
    """
    if E0.shape[1] != 2:
        return []
    x_bar = np.asarray(x_bar, dtype=float)

    def basis(theta: float) -> np.ndarray:
        c, s = math.cos(theta), math.sin(theta)
        return E0 @ np.array([[c, -s], [s, c]])

    def measures(theta: float) -> tuple:
        v1, v2 = _diag_vectors(problem, x_bar, basis(theta), (0, 1))
        m1 = float(np.linalg.norm(v1))
        m2 = float(np.linalg.norm(v2))
        d = v1 - v2
        dd = float(d @ d)
        alpha = 0.5 if dd <= 0.0 else min(1.0, max(0.0, -float(v2 @ d) / dd))
        mc = float(np.linalg.norm(v2 + alpha * d))
        sig = linalg.family_singular_values([v1, v2])
        return m1, m2, mc, float(sig[-1])

    grid = budget.angle_grid
    h = math.pi / grid
    thetas = [k * h for k in range(grid)]
    table = [measures(t) for t in thetas]
    accept = 1e-5 * scale_v
    screen = 1e-2 * scale_v  # a zero this close to a grid point is worth refining
    found = []
    for obj in range(4):
        series = [row[obj] for row in table]
        if max(series) <= accept:
            continue  # flat-zero measure: the canonical basis already has it
        coarse = []
        for k in range(grid):
            prev_v = series[(k - 1) % grid]
            next_v = series[(k + 1) % grid]
            if series[k] <= min(prev_v, next_v) and series[k] <= screen:
                coarse.append((series[k], k))
        coarse.sort()
        hits = []
        for _, k in coarse[:8]:
            theta_star, val = _golden_min(
                lambda th, o=obj: measures(th)[o],
                thetas[k] - h, thetas[k] + h)
            if val <= accept:
                hits.append((val, theta_star % math.pi))
        hits.sort(key=lambda t: (t[0], t[1]))
        found.extend(th for _, th in hits)
    deduped = []
    for th in sorted(found):
        if all(min(abs(th - u), math.pi - abs(th - u)) > 1e-6 for u in deduped):
            deduped.append(th)
    return [(f"sweep@{th:.8f}", basis(th)) for th in deduped]


def _free_candidates(problem: model.NsdpProblem, x_bar, E0: np.ndarray,
                     scale_v: float, budget: CqBudget,
                     curve_entries: list | None = None) -> list:
    """Kernel bases probed when every basis at x_bar is in play.

    Order is canonical, curve limits, sweep hits, Haar draws; the first
    violating candidate becomes the witness, so the deterministic
    entries lead.
    """
    out = [("canonical", E0, None)]
    for entry in curve_entries or []:
        out.append((entry["label"], entry["E_bar"], entry))
    for label, E in _sweep_candidates(problem, x_bar, E0, scale_v, budget):
        out.append((label, E, None))
    rng = _rng(budget.seed, 1)
    q = E0.shape[1]
    for j in range(budget.n_q):
        out.append((f"haar-{j}", E0 @ linalg.haar_orthogonal(q, rng), None))
    return out


def _base_epsilons(scale_v: float) -> dict:
    return {
        "eps_rank": linalg.EPS_RANK,
        "eps_pld": linalg.EPS_PLD,
        "eps_psd_factor": linalg.EPS_PSD_FACTOR,
        "scale_v": scale_v,
    }


def _make_verdict(condition: str, status: str, problem: model.NsdpProblem,
                  x_bar, r: int, budget: CqBudget, scale_v: float,
                  witness=None, notes=()) -> CqVerdict:
    return CqVerdict(
        condition=condition, status=status, problem_name=problem.name,
        m=problem.m, n=problem.n, rank=int(r),
        x_bar=tuple(float(v) for v in np.asarray(x_bar, dtype=float)),
        seed=budget.seed, budget=asdict(budget),
        epsilons=_base_epsilons(scale_v),
        notes=tuple(notes), witness=_jsonify(witness) if witness else None)


# ---------------------------------------------------------------------------
# nondegeneracy and Robinson


def check_nondegeneracy(problem: model.NsdpProblem, x_bar,
                        budget: CqBudget | None = None) -> CqVerdict:
    """Decide nondegeneracy at a feasible point.

    The full pair family {v_ij} at one kernel basis has basis-invariant
    rank, so a single representative decides: the verdict is always
    CERTIFIED_HOLDS or VIOLATED.
    """
    budget = budget or CqBudget()
    x, G, dec, r = _feasibility_gate(problem, x_bar)
    scale = _scale_v(problem, x)
    if r == problem.m:
        return _make_verdict("nondegeneracy", CERTIFIED_HOLDS, problem, x, r,
                             budget, scale,
                             notes=("constraint has full rank at the point",))
    E0 = _kernel_basis(dec, r)
    fam = v_family(problem, x, E0)
    vecs = fam.full_list()
    sig = linalg.family_singular_values(vecs)
    dependent = _lin_dep(vecs, scale)
    witness = {
        "kind": "pair-family",
        "E": E0,
        "pairs": [[i + 1, j + 1] for (i, j) in fam.pairs],
        "vectors": fam.vectors,
        "singular_values": sig,
        "dependent": bool(dependent),
    }
    if dependent:
        return _make_verdict(
            "nondegeneracy", VIOLATED, problem, x, r, budget, scale,
            witness=witness,
            notes=("pair family is linearly dependent at a kernel basis",))
    return _make_verdict(
        "nondegeneracy", CERTIFIED_HOLDS, problem, x, r, budget, scale,
        witness=witness,
        notes=("pair family is linearly independent; rank is basis-invariant",))


def _robinson_certificate(problem: model.NsdpProblem, x, G, budget: CqBudget,
                          rng: np.random.Generator):
    """Search for d with G(x) + DG(x)[d] positive definite on ||d|| <= 1.

    The smallest eigenvalue of the affine matrix map is concave in d, so
    projected supergradient ascent with a diminishing step converges;
    restarts guard against flat starts.
    """
    n = problem.n
    Ds = problem.dg(x)

    def phi(d):
        M = G.copy()
        for l in range(n):
            M = M + d[l] * Ds[l]
        dec = linalg.spectral_decompose(linalg.sym_part(M))
        return float(dec.eigenvalues[-1]), dec.eigenvectors[:, -1]

    best_val = -np.inf
    best_d = np.zeros(n)
    starts = [np.zeros(n)]
    for _ in range(budget.robinson_restarts - 1):
        g = rng.standard_normal(n)
        nrm = float(np.linalg.norm(g))
        starts.append(g / nrm if nrm > 1e-12 else np.zeros(n))
    for d0 in starts:
        d = d0.copy()
        for it in range(budget.robinson_iters):
            val, u = phi(d)
            if val > best_val:
                best_val, best_d = val, d.copy()
            grad = np.array([float(u @ (D @ u)) for D in Ds])
            gn = float(np.linalg.norm(grad))
            if gn <= 1e-14:
                break
            d = d + (0.5 / math.sqrt(it + 1.0)) * grad / gn
            nrm = float(np.linalg.norm(d))
            if nrm > 1.0:
                d = d / nrm
        val, _ = phi(d)
        if val > best_val:
            best_val, best_d = val, d.copy()
    return best_val, best_d


def check_robinson(problem: model.NsdpProblem, x_bar,
                   budget: CqBudget | None = None) -> CqVerdict:
    """Robinson's condition: certificate search, then falsification.

    A strictly feasible direction for the linearized constraint certifies
    the condition.  Failing that, the condition is violated exactly when
    the diagonal family is positively dependent at some kernel basis, so
    canonical, swept, and Haar bases are screened for positive
    dependence.  If neither side lands, the verdict stays open.
    """
    budget = budget or CqBudget()
    x, G, dec, r = _feasibility_gate(problem, x_bar)
    scale = _scale_v(problem, x)
    if r == problem.m:
        return _make_verdict(
            "robinson", CERTIFIED_HOLDS, problem, x, r, budget, scale,
            witness={"kind": "interior-direction", "direction": np.zeros(problem.n),
                     "lambda_min": float(dec.eigenvalues[-1])},
            notes=("constraint has full rank at the point",))
    rng = _rng(budget.seed, 5)
    cert_val, cert_d = _robinson_certificate(problem, x, G, budget, rng)
    threshold = linalg.EPS_RANK * (1.0 + linalg.frob(G) + scale)
    if cert_val > threshold:
        return _make_verdict(
            "robinson", CERTIFIED_HOLDS, problem, x, r, budget, scale,
            witness={"kind": "interior-direction", "direction": cert_d,
                     "lambda_min": cert_val},
            notes=("strictly feasible direction for the linearization found",))
    E0 = _kernel_basis(dec, r)
    for label, E, _ in _free_candidates(problem, x, E0, scale, budget):
        vecs = _diag_vectors(problem, x, E, range(E.shape[1]))
        if _pos_dep(vecs):
            witness = {
                "kind": "diagonal-positive-dependence",
                "label": label,
                "E": E,
                "vectors": vecs,
                "dependent": True,
            }
            return _make_verdict(
                "robinson", VIOLATED, problem, x, r, budget, scale,
                witness=witness,
                notes=("diagonal family positively dependent at a kernel basis",))
    return _make_verdict(
        "robinson", NO_VIOLATION_FOUND, problem, x, r, budget, scale,
        notes=(f"best linearized eigenvalue {cert_val:.3e} below the "
               f"certificate threshold; no positive dependence sampled",))


# ---------------------------------------------------------------------------
# weak constant-rank style conditions


def _weak_candidate_fails(problem, x_bar, kind, E_bar, chain, ts, subsets,
                          scale_v, consecutive):
    """Evaluate one (limit, chain) candidate; returns a failure record or None."""
    if kind == "weak-nondegeneracy" or kind == "weak-robinson":
        vecs = _diag_vectors(problem, x_bar, E_bar, range(E_bar.shape[1]))
        dep = _lin_dep(vecs, scale_v) if kind == "weak-nondegeneracy" \
            else _pos_dep(vecs)
        if dep:
            return {"E_bar": E_bar, "family_vectors": vecs, "dependent": True}
        return None
    pos = kind == "weak-cpld"
    diag_lim = _diag_vectors(problem, x_bar, E_bar, range(E_bar.shape[1]))
    tail_idx = list(range(len(ts) - consecutive, len(ts)))
    for J in subsets:
        prem = [diag_lim[i] for i in J]
        prem_dep = _pos_dep(prem) if pos else _lin_dep(prem, scale_v)
        if not prem_dep:
            continue
        trailing_indep = True
        for j in tail_idx:
            vecs = _diag_vectors(problem, chain[j][0], chain[j][1], J)
            if _lin_dep(vecs, scale_v):
                trailing_indep = False
                break
        if trailing_indep:
            levels = []
            for t, (x_j, E_j) in zip(ts, chain):
                vecs = _diag_vectors(problem, x_j, E_j, J)
                levels.append({"t": t, "x": x_j, "E": E_j, "vectors": vecs,
                               "dependent": bool(_lin_dep(vecs, scale_v))})
            return {"E_bar": E_bar, "J": [i + 1 for i in J],
                    "premise_vectors": prem, "premise_dependent": True,
                    "levels": levels}
    return None


def check_weak_cq(problem: model.NsdpProblem, x_bar, kind: str,
                  budget: CqBudget | None = None, curves=()) -> CqVerdict:
    """Limiting conditions quantified over eigenvector limits of sequences.

    For each sampled sequence x_k -> x_bar the reachable eigenbasis
    limits are enumerated: the aligned eigenvector chain, plus rotations
    inside numerically equal eigenvalue clusters when the cluster
    pattern persists across levels (a rotated chain is only a valid
    eigenbasis sequence in that case).  A sequence falsifies the
    condition only if every reachable candidate fails its defining
    implication; for the constant-rank kinds the implication compares
    dependence at the limit with dependence along the trailing levels.

    The constant sequence, whose limit set is every kernel basis, is
    probed for the limit-only kinds (weak-nondegeneracy, weak-robinson);
    for the constant-rank kinds it can never falsify because the chain
    can sit at the limit basis itself.
    """
    if kind not in WEAK_KINDS:
        raise ValueError(f"unknown weak condition {kind!r}")
    budget = budget or CqBudget()
    x, G, dec, r = _feasibility_gate(problem, x_bar)
    m = problem.m
    scale = _scale_v(problem, x)
    if r == m:
        return _make_verdict(kind, CERTIFIED_HOLDS, problem, x, r, budget,
                             scale, notes=("constraint has full rank at the point",))
    q = m - r
    limit_only = kind in ("weak-nondegeneracy", "weak-robinson")
    if not limit_only and q > COMBINATORIAL_CAP:
        raise CombinatorialCapError(
            f"m - r = {q} exceeds the subset enumeration cap {COMBINATORIAL_CAP}")
    subsets = [] if limit_only else _subsets(q)
    ts = _levels(budget)

    if limit_only:
        failures = []
        all_fail = True
        for label, E, _ in _free_candidates(problem, x, _kernel_basis(dec, r),
                                            scale, budget):
            vecs = _diag_vectors(problem, x, E, range(q))
            dep = _lin_dep(vecs, scale) if kind == "weak-nondegeneracy" \
                else _pos_dep(vecs)
            if dep:
                failures.append({"label": label, "E_bar": E,
                                 "family_vectors": vecs, "dependent": True})
            else:
                all_fail = False
                break
        if all_fail and failures:
            witness = {"kind": "constant-sequence", "candidates": failures}
            return _make_verdict(
                kind, VIOLATED, problem, x, r, budget, scale, witness=witness,
                notes=("every sampled kernel basis fails at the point itself",))

    sequences = []
    for curve in curves:
        if curve.kind == "x":
            sequences.append((f"curve:{curve.name}", None, curve))
    dir_rng = _rng(budget.seed, 4)
    for d in _unit_directions(problem.n, budget.n_directions, dir_rng):
        sequences.append((f"ray:{_dir_label(d)}", d, None))

    for seq_idx, (label, d, curve) in enumerate(sequences):
        if curve is not None:
            xs = [np.asarray(curve.func(t), dtype=float) for t in ts]
        else:
            xs = [x + t * d for t in ts]
        decs = [linalg.spectral_decompose(problem.g(p)) for p in xs]
        chain_E = []
        prev = None
        for dc in decs:
            E = _kernel_basis(dc, r)
            if prev is not None:
                E = linalg.align_columns(prev, E)
            chain_E.append(E)
            prev = E
        patterns = []
        for dc in decs:
            lam = dc.eigenvalues
            tol = 1e-12 * (1.0 + float(np.abs(lam).max(initial=0.0)))
            patterns.append(_cluster_pattern(lam[r:], tol))
        rotations = [("canonical", None)]
        if len(set(patterns)) == 1 and any(b > 1 for b in patterns[0]):
            for b_idx in range(budget.n_basis_samples):
                rot_rng = _rng(budget.seed, 2, seq_idx, b_idx)
                rotations.append((f"rotation-{b_idx}",
                                  _block_rotation(patterns[0], rot_rng)))
        candidate_failures = []
        any_saved = False
        for rot_label, Q in rotations:
            chain = [E if Q is None else E @ Q for E in chain_E]
            E_bar = _extrapolated_limit(chain)
            if E_bar is None:
                continue
            fail = _weak_candidate_fails(
                problem, x, kind, E_bar, list(zip(xs, chain)), ts, subsets,
                scale, budget.consecutive)
            if fail is None:
                any_saved = True
                break
            fail["label"] = rot_label
            candidate_failures.append(fail)
        if not any_saved and candidate_failures:
            witness = {
                "kind": "sequence",
                "sequence": label,
                "direction": None if d is None else d,
                "t_levels": ts,
                "candidates": candidate_failures,
            }
            return _make_verdict(
                kind, VIOLATED, problem, x, r, budget, scale, witness=witness,
                notes=("every reachable eigenbasis limit fails along this sequence",))
    return _make_verdict(kind, NO_VIOLATION_FOUND, problem, x, r, budget, scale)


def _dir_label(d: np.ndarray) -> str:
    nz = np.nonzero(np.abs(d) > 1e-12)[0]
    if nz.size == 1 and abs(abs(d[nz[0]]) - 1.0) < 1e-12:
        sign = "+" if d[nz[0]] > 0 else "-"
        return f"{sign}e{nz[0] + 1}"
    return "rand(" + ",".join(f"{v:.4f}" for v in d) + ")"


# ---------------------------------------------------------------------------
# sequential constant-rank style conditions


def _completion_basis(P_bar: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Orthonormal completion of E built from the reference range basis."""
    if P_bar.shape[1] == 0:
        return np.zeros((E.shape[0], 0))
    raw = P_bar - E @ (E.T @ P_bar)
    return linalg.orthonormal_columns(raw)


def _seq_full_levels(problem, x_bar, J, ts, point_basis, deltas, scale_v):
    levels = []
    for t, (x_j, E_j), delta in zip(ts, point_basis, deltas):
        vecs = _diag_vectors(problem, x_j, E_j, J)
        levels.append({"t": t, "x": x_j, "E": E_j, "delta": delta,
                       "vectors": vecs,
                       "dependent": bool(_lin_dep(vecs, scale_v))})
    return levels


def _seq_tail_violation(problem, x_bar, E_bar, J, budget, scale_v, rng,
                        P_bar, r):
    """Look for tails (x_j, E_j) -> (x_bar, E_bar) staying independent on J.

    Basis perturbations decay like t and like t^(1/4); the slow decay
    matters because an independence margin of order t times the basis
    offset would otherwise sink below the rank threshold before the
    trailing levels are reached.
    """
    ts = _levels(budget)
    n = problem.n
    dirs = _unit_directions(n, min(4, budget.n_directions), rng)
    Ws = [rng.standard_normal(E_bar.shape) for _ in range(budget.n_stiefel)]
    variants = [("fixed-basis", None, 1.0)]
    for i, W in enumerate(Ws):
        for expo in (1.0, 0.25):
            variants.append((f"stiefel-{i}@t^{expo}", W, expo))
    tail_idx = list(range(len(ts) - budget.consecutive, len(ts)))
    for d in dirs:
        for v_label, W, expo in variants:
            def basis_at(t):
                if W is None:
                    return E_bar
                return linalg.orthonormal_columns(E_bar + (t ** expo) * W)
            indep = True
            for j in tail_idx:
                x_j = x_bar + ts[j] * d
                vecs = _diag_vectors(problem, x_j, basis_at(ts[j]), J)
                if _lin_dep(vecs, scale_v):
                    indep = False
                    break
            if not indep:
                continue
            point_basis = [(x_bar + t * d, basis_at(t)) for t in ts]
            deltas = []
            for (x_j, E_j) in point_basis:
                P_j = _completion_basis(P_bar, E_j)
                deltas.append(separating_perturbation(problem, x_j, x_bar,
                                                      E_j, P_j))
            levels = _seq_full_levels(problem, x_bar, J, ts, point_basis,
                                      deltas, scale_v)
            return {"direction": d, "variant": v_label, "levels": levels}
    return None


def check_seq_cq(problem: model.NsdpProblem, x_bar, kind: str,
                 budget: CqBudget | None = None, curves=()) -> CqVerdict:
    """Sequential constant-rank conditions in their neighborhood form.

    The condition holds iff around every pair (x_bar, E_bar) with E_bar
    a kernel basis, dependence of a diagonal subfamily at the pair
    forces dependence at nearby pairs.  A violation therefore needs one
    basis E_bar with a dependent (resp. positively dependent) premise
    subfamily and one sequence of nearby pairs staying independent; the
    basis dictionary mixes canonical, registered-curve, swept, and Haar
    bases, and each witness level carries the shift Delta that turns
    its basis into an exact small-eigenvalue eigenbasis.
    """
    if kind not in SEQ_KINDS:
        raise ValueError(f"unknown sequential condition {kind!r}")
    budget = budget or CqBudget()
    x, G, dec, r = _feasibility_gate(problem, x_bar)
    m = problem.m
    scale = _scale_v(problem, x)
    if r == m:
        return _make_verdict(kind, CERTIFIED_HOLDS, problem, x, r, budget,
                             scale, notes=("constraint has full rank at the point",))
    q = m - r
    if q > COMBINATORIAL_CAP:
        raise CombinatorialCapError(
            f"m - r = {q} exceeds the subset enumeration cap {COMBINATORIAL_CAP}")
    pos = kind == "seq-cpld"
    P_bar = dec.eigenvectors[:, :r].copy()
    E0 = _kernel_basis(dec, r)
    ts = _levels(budget)
    curve_entries = []
    for curve in curves:
        if curve.kind != "x-delta":
            continue
        entry = _curve_candidate(problem, curve, r, ts)
        if entry is not None:
            curve_entries.append(entry)
    candidates = _free_candidates(problem, x, E0, scale, budget, curve_entries)
    subsets = _subsets(q)
    for cand_idx, (label, E_bar, curve_entry) in enumerate(candidates):
        diag_lim = _diag_vectors(problem, x, E_bar, range(q))
        for J in subsets:
            prem = [diag_lim[i] for i in J]
            prem_dep = _pos_dep(prem) if pos else _lin_dep(prem, scale)
            if not prem_dep:
                continue
            if curve_entry is not None:
                viol = _curve_tail_violation(problem, x, curve_entry, J,
                                             budget, scale)
            else:
                rng = _rng(budget.seed, 3, cand_idx)
                viol = _seq_tail_violation(problem, x, E_bar, J, budget,
                                           scale, rng, P_bar, r)
            if viol is not None:
                witness = {
                    "kind": "pair-sequence",
                    "candidate": label,
                    "E_bar": E_bar,
                    "J": [i + 1 for i in J],
                    "premise_vectors": prem,
                    "premise_positive": pos,
                    "t_levels": ts,
                }
                witness.update(viol)
                return _make_verdict(
                    kind, VIOLATED, problem, x, r, budget, scale,
                    witness=witness,
                    notes=("dependent premise at the limit pair with an "
                           "independent nearby tail",))
    return _make_verdict(kind, NO_VIOLATION_FOUND, problem, x, r, budget, scale)


def _curve_candidate(problem, curve: WitnessCurve, r: int, ts: list):
    levels = []
    prev = None
    for t in ts:
        x_t, delta_t = curve.func(t)
        x_t = np.asarray(x_t, dtype=float)
        delta_t = linalg.sym_part(np.asarray(delta_t, dtype=float))
        shifted = linalg.sym_part(problem.g(x_t) + delta_t)
        E = linalg.eig_basis_smallest(shifted, r).cols
        if prev is not None:
            E = linalg.align_columns(prev, E)
        levels.append((float(t), x_t, E, delta_t))
        prev = E
    E_bar = _extrapolated_limit([lv[2] for lv in levels])
    if E_bar is None:
        return None
    return {"label": f"curve:{curve.name}", "E_bar": E_bar, "levels": levels}


def _curve_tail_violation(problem, x_bar, curve_entry, J, budget, scale_v):
    levels_raw = curve_entry["levels"]
    tail = levels_raw[-budget.consecutive:]
    for _, x_j, E_j, _ in tail:
        if _lin_dep(_diag_vectors(problem, x_j, E_j, J), scale_v):
            return None
    ts = [lv[0] for lv in levels_raw]
    point_basis = [(lv[1], lv[2]) for lv in levels_raw]
    deltas = [lv[3] for lv in levels_raw]
    levels = _seq_full_levels(problem, x_bar, J, ts, point_basis, deltas,
                              scale_v)
    return {"direction": None, "variant": "registered-curve", "levels": levels}


# ---------------------------------------------------------------------------
# separating perturbation


def separating_perturbation(problem: model.NsdpProblem, x, x_bar, E, P) -> np.ndarray:
    """Shift Delta making E an exact small-eigenvalue eigenbasis at x.

    Builds M = U blkdiag(P' G(x) P, Diag((r+1)s, ..., m s)) U' with
    U = [P, E] orthonormal and s = ||x - x_bar||, then Delta = M - G(x).
    The synthetic eigenvalues grow in the column order of E and vanish
    with s, so along x -> x_bar the shift vanishes while E stays the
    (sign-unique) basis for the m - r smallest eigenvalues of G + Delta.
    P must be the eigen-block completion spanning the large eigenspace.
    """
    x = np.asarray(x, dtype=float)
    x_bar = np.asarray(x_bar, dtype=float)
    s = float(np.linalg.norm(x - x_bar))
    if s <= 0.0:
        raise ValueError("separating perturbation needs x distinct from x_bar")
    E = E.cols if isinstance(E, linalg.EigBasis) else np.asarray(E, dtype=float)
    P = np.asarray(P, dtype=float) if P is not None \
        else np.zeros((E.shape[0], 0))
    m = problem.m
    U = np.hstack([P, E])
    if U.shape != (m, m):
        raise ValueError("[P, E] must form a square basis")
    ortho_err = linalg.frob(U.T @ U - np.eye(m))
    if ortho_err > linalg.EPS_ORTH_FACTOR * m * 10.0:
        raise ValueError(f"[P, E] not orthonormal: error {ortho_err:.3e}")
    G = problem.g(x)
    r = P.shape[1]
    synth = np.array([(r + 1 + i) * s for i in range(m - r)])
    M = E @ (synth[:, None] * E.T)
    if r > 0:
        core = linalg.sym_part(P.T @ G @ P)
        M = M + P @ core @ P.T
    return linalg.sym_part(M - G)


# ---------------------------------------------------------------------------
# metric subregularity


@dataclass(frozen=True)
class MsrEstimate:
    """Empirical modulus of metric subregularity over a sampled ball."""

    gamma_hat: float
    radius: float
    samples: int
    n_infeasible: int
    n_feasible: int
    n_failed: int
    unreliable: bool
    seed: int
    worst: dict | None = None
    notes: tuple = ()
    ratios: tuple = ()


def estimate_msr_modulus(problem: model.NsdpProblem, x_bar, radius: float = 0.1,
                         samples: int = 200, seed: int = 0,
                         config: solvers.AlConfig | None = None,
                         dist_tol: float = 1e-8) -> MsrEstimate:
    """Largest sampled ratio dist(x, F) / ||proj_psd(-G(x))|| on a ball.

    Distances to the feasible set are computed by solving the projection
    problem min ||z - x||^2 s.t. G(z) PSD with the augmented Lagrangian
    from both x and x_bar; the trivial bound ||x - x_bar|| caps the
    result since x_bar is feasible.  Samples whose projection runs all
    end infeasible fall back on that bound and are counted as failures;
    more than ten percent of failures marks the estimate unreliable.
    """
    x_ref, G_ref, _, _ = _feasibility_gate(problem, x_bar)
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = _rng(seed, 6)
    n = problem.n
    cfg = config or solvers.AlConfig()
    ratios = []
    n_feasible = 0
    n_failed = 0
    worst = None
    for i in range(samples):
        g = rng.standard_normal(n)
        nrm = float(np.linalg.norm(g))
        u = g / nrm if nrm > 1e-12 else np.zeros(n)
        rad = radius * rng.uniform() ** (1.0 / n)
        x_i = x_ref + rad * u
        G_i = problem.g(x_i)
        residual = linalg.frob(linalg.proj_psd(-G_i))
        if residual <= linalg.EPS_RANK * (1.0 + linalg.frob(G_i)):
            n_feasible += 1
            continue
        dist, ok = _projection_distance(problem, x_i, x_ref, cfg, dist_tol)
        if not ok:
            n_failed += 1
        ratio = dist / residual
        ratios.append(ratio)
        if worst is None or ratio > worst["ratio"]:
            worst = {"x": x_i, "distance": dist, "residual": residual,
                     "ratio": ratio, "projection_ok": bool(ok)}
    notes = []
    if not ratios:
        notes.append("no infeasible samples in the ball")
    n_infeasible = len(ratios)
    gamma = max(ratios) if ratios else 0.0
    unreliable = n_failed > 0.1 * max(1, n_infeasible)
    if unreliable:
        notes.append("more than 10% of projection subproblems failed")
    return MsrEstimate(
        gamma_hat=float(gamma), radius=float(radius), samples=samples,
        n_infeasible=n_infeasible, n_feasible=n_feasible, n_failed=n_failed,
        unreliable=bool(unreliable), seed=seed,
        worst=_jsonify(worst) if worst else None, notes=tuple(notes),
        ratios=tuple(float(rt) for rt in ratios))


def _projection_distance(problem, x_i, x_ref, cfg, dist_tol):
    """Distance from x_i to the feasible set, with a feasibility fallback."""
    n = problem.n

    def f_eval(z, x_i=x_i):
        return float((z - x_i) @ (z - x_i))

    def grad_f(z, x_i=x_i):
        return 2.0 * (z - x_i)

    proj = model.NsdpProblem(n=n, m=problem.m, f_eval=f_eval, grad_f=grad_f,
                             g_eval=problem.g_eval, dg_eval=problem.dg_eval,
                             name=f"{problem.name}:projection")
    best = float(np.linalg.norm(x_i - x_ref))
    ok = False
    for start in (x_i, x_ref):
        trace = solvers.solve_augmented_lagrangian(
            proj, start, config=cfg, target_tol=dist_tol, max_outer=25)
        z = trace.final.x
        Gz = problem.g(z)
        feas = linalg.frob(linalg.proj_psd(-Gz))
        if feas <= 1e-6 * (1.0 + linalg.frob(Gz)):
            ok = True
            best = min(best, float(np.linalg.norm(z - x_i)))
    return best, ok


def estimate_msr_trend(problem: model.NsdpProblem, x_bar, radius: float = 0.1,
                       samples: int = 200, seed: int = 0,
                       growth_factor: float = 3.0,
                       bound_cap: float = 100.0) -> dict:
    """Compare modulus estimates at two radii to flag an unbounded modulus.

    An unbounded modulus shows up either as a very large sampled ratio
    or as strong growth when the ball shrinks; bounded moduli on the
    reference problems sit well below the cap at both radii.
    """
    est_big = estimate_msr_modulus(problem, x_bar, radius=radius,
                                   samples=samples, seed=seed)
    est_small = estimate_msr_modulus(problem, x_bar, radius=radius / 4.0,
                                     samples=samples, seed=seed + 1)
    gamma_max = max(est_big.gamma_hat, est_small.gamma_hat)
    growing = est_small.gamma_hat > growth_factor * max(est_big.gamma_hat, 1e-12) \
        and est_small.gamma_hat > 10.0
    unbounded = gamma_max > bound_cap or growing
    return {
        "estimates": (est_big, est_small),
        "gamma_max": float(gamma_max),
        "unbounded": bool(unbounded),
        "unreliable": bool(est_big.unreliable or est_small.unreliable),
    }


def check_msr(problem: model.NsdpProblem, x_bar, budget: CqBudget | None = None,
              radius: float = 0.1, samples: int = 200) -> CqVerdict:
    """Verdict wrapper: VIOLATED means the sampled modulus looks unbounded."""
    budget = budget or CqBudget()
    x, G, dec, r = _feasibility_gate(problem, x_bar)
    scale = _scale_v(problem, x)
    trend = estimate_msr_trend(problem, x, radius=radius, samples=samples,
                               seed=budget.seed)
    est_big, est_small = trend["estimates"]
    witness = {
        "kind": "ratio-table",
        "radius": [est_big.radius, est_small.radius],
        "gamma_hat": [est_big.gamma_hat, est_small.gamma_hat],
        "n_infeasible": [est_big.n_infeasible, est_small.n_infeasible],
        "n_failed": [est_big.n_failed, est_small.n_failed],
        "worst": [est_big.worst, est_small.worst],
    }
    notes = []
    if trend["unreliable"]:
        notes.append("projection failures above 10%; estimate unreliable")
    status = VIOLATED if trend["unbounded"] else NO_VIOLATION_FOUND
    if status == VIOLATED:
        notes.append("sampled subregularity ratios grow without bound")
    return _make_verdict("msr", status, problem, x, r, budget, scale,
                         witness=witness, notes=notes)


# ---------------------------------------------------------------------------
# scalar-constraint samplers


def nlp_constant_rank_check(embedding: model.DiagonalEmbedding, x_bar,
                            kind: str = "crcq",
                            budget: CqBudget | None = None,
                            curves=()) -> CqVerdict:
    """Constant-rank sampling directly on scalar constraint gradients.

    For diagonal constraints the weak matrix conditions reduce to: every
    active subfamily of gradients that is dependent (resp. positively
    dependent) at the point stays linearly dependent nearby.  This
    sampler tests exactly that statement, giving an independent oracle
    for the embedded matrix checks.
    """
    if kind not in ("crcq", "cpld"):
        raise ValueError("kind must be 'crcq' or 'cpld'")
    budget = budget or CqBudget()
    problem = embedding.problem
    x = np.asarray(x_bar, dtype=float)
    vals = embedding.constraint_values(x)
    scale_vals = 1.0 + float(np.abs(vals).max(initial=0.0))
    if float(vals.min(initial=0.0)) < -linalg.EPS_PSD_FACTOR * scale_vals:
        raise InfeasiblePointError(float(np.linalg.norm(np.minimum(vals, 0.0))),
                                   problem.name)
    active = embedding.active_set(x)
    r = embedding.m - len(active)
    grads = embedding.constraint_gradients(x)
    scale = max(1.0, max((float(np.linalg.norm(g)) for g in grads), default=0.0))
    condition = f"nlp-{kind}"
    if not active:
        return _make_verdict(condition, CERTIFIED_HOLDS, problem, x, r,
                             budget, scale,
                             notes=("no active constraints at the point",))
    if len(active) > COMBINATORIAL_CAP:
        raise CombinatorialCapError(
            f"{len(active)} active constraints exceed the cap {COMBINATORIAL_CAP}")
    pos = kind == "cpld"
    ts = _levels(budget)
    sequences = [(f"curve:{c.name}", None, c) for c in curves if c.kind == "x"]
    dir_rng = _rng(budget.seed, 4)
    for d in _unit_directions(problem.n, budget.n_directions, dir_rng):
        sequences.append((f"ray:{_dir_label(d)}", d, None))
    subsets = []
    for size in range(1, len(active) + 1):
        subsets.extend(itertools.combinations(active, size))
    tail_idx = list(range(len(ts) - budget.consecutive, len(ts)))
    for J in subsets:
        prem = [grads[i] for i in J]
        prem_dep = _pos_dep(prem) if pos else _lin_dep(prem, scale)
        if not prem_dep:
            continue
        for label, d, curve in sequences:
            if curve is not None:
                xs = [np.asarray(curve.func(t), dtype=float) for t in ts]
            else:
                xs = [x + t * d for t in ts]
            trailing_indep = True
            for j in tail_idx:
                gj = embedding.constraint_gradients(xs[j])
                if _lin_dep([gj[i] for i in J], scale):
                    trailing_indep = False
                    break
            if not trailing_indep:
                continue
            levels = []
            for t, x_j in zip(ts, xs):
                gj = embedding.constraint_gradients(x_j)
                sel = [gj[i] for i in J]
                levels.append({"t": t, "x": x_j, "gradients": sel,
                               "dependent": bool(_lin_dep(sel, scale))})
            witness = {
                "kind": "gradient-sequence",
                "J": [i + 1 for i in J],
                "sequence": label,
                "direction": None if d is None else d,
                "premise_gradients": prem,
                "levels": levels,
            }
            return _make_verdict(condition, VIOLATED, problem, x, r, budget,
                                 scale, witness=witness,
                                 notes=("dependent active gradients become "
                                        "independent along the sequence",))
    return _make_verdict(condition, NO_VIOLATION_FOUND, problem, x, r,
                         budget, scale)


# ---------------------------------------------------------------------------
# witness replay


def replay_witness(problem, verdict) -> bool:
    """Re-evaluate a verdict's witness from its recorded data.

    Recomputes every recorded dependence flag from the stored points and
    bases; serialized floats round-trip exactly, so the replay matches
    the original run bit for bit.  Returns True when all recomputed
    flags agree with the stored ones.
    """
    payload = verdict.to_payload() if isinstance(verdict, CqVerdict) else dict(verdict)
    witness = payload.get("witness")
    if witness is None:
        return True
    scale = float(payload["epsilons"]["scale_v"])
    x_bar = np.asarray(payload["x_bar"], dtype=float)
    kind = witness["kind"]
    if kind == "pair-family":
        E = np.asarray(witness["E"], dtype=float)
        fam = v_family(problem, x_bar, E)
        return bool(_lin_dep(fam.full_list(), scale)) == bool(witness["dependent"])
    if kind == "diagonal-positive-dependence":
        E = np.asarray(witness["E"], dtype=float)
        vecs = _diag_vectors(problem, x_bar, E, range(E.shape[1]))
        return _pos_dep(vecs) == bool(witness["dependent"])
    if kind == "interior-direction":
        d = np.asarray(witness["direction"], dtype=float)
        G = problem.g(x_bar)
        M = G.copy()
        for l in range(problem.n):
            M = M + d[l] * problem.dg(x_bar)[l]
        lam_min = float(linalg.spectral_decompose(linalg.sym_part(M)).eigenvalues[-1])
        return abs(lam_min - float(witness["lambda_min"])) <= 1e-9 * (1.0 + abs(lam_min))
    if kind == "constant-sequence":
        pos = payload["condition"] == "weak-robinson"
        for entry in witness["candidates"]:
            E = np.asarray(entry["E_bar"], dtype=float)
            vecs = _diag_vectors(problem, x_bar, E, range(E.shape[1]))
            dep = _pos_dep(vecs) if pos else _lin_dep(vecs, scale)
            if dep != bool(entry["dependent"]):
                return False
        return True
    if kind == "sequence":
        limit_only = payload["condition"] in ("weak-nondegeneracy", "weak-robinson")
        pos = payload["condition"] in ("weak-robinson", "weak-cpld")
        for entry in witness["candidates"]:
            E_bar = np.asarray(entry["E_bar"], dtype=float)
            if limit_only:
                vecs = _diag_vectors(problem, x_bar, E_bar, range(E_bar.shape[1]))
                dep = _pos_dep(vecs) if pos else _lin_dep(vecs, scale)
                if dep != bool(entry["dependent"]):
                    return False
                continue
            J = [i - 1 for i in entry["J"]]
            prem = _diag_vectors(problem, x_bar, E_bar, J)
            prem_dep = _pos_dep(prem) if pos else _lin_dep(prem, scale)
            if prem_dep != bool(entry["premise_dependent"]):
                return False
            for lv in entry["levels"]:
                x_j = np.asarray(lv["x"], dtype=float)
                E_j = np.asarray(lv["E"], dtype=float)
                vecs = _diag_vectors(problem, x_j, E_j, J)
                if bool(_lin_dep(vecs, scale)) != bool(lv["dependent"]):
                    return False
        return True
    if kind == "pair-sequence":
        J = [i - 1 for i in witness["J"]]
        E_bar = np.asarray(witness["E_bar"], dtype=float)
        prem = _diag_vectors(problem, x_bar, E_bar, J)
        pos = bool(witness["premise_positive"])
        prem_dep = _pos_dep(prem) if pos else _lin_dep(prem, scale)
        if not prem_dep:
            return False
        for lv in witness["levels"]:
            x_j = np.asarray(lv["x"], dtype=float)
            E_j = np.asarray(lv["E"], dtype=float)
            vecs = _diag_vectors(problem, x_j, E_j, J)
            if bool(_lin_dep(vecs, scale)) != bool(lv["dependent"]):
                return False
            delta = np.asarray(lv["delta"], dtype=float)
            shifted = linalg.sym_part(problem.g(x_j) + delta)
            r = problem.m - E_j.shape[1]
            E_check = linalg.eig_basis_smallest(shifted, r).cols
            proj_err = linalg.frob(E_j @ E_j.T - E_check @ E_check.T)
            if proj_err > 1e-6:
                return False
        return True
    if kind == "gradient-sequence":
        embedding = problem
        if not isinstance(embedding, model.DiagonalEmbedding):
            raise TypeError("gradient witnesses replay against a DiagonalEmbedding")
        scale_g = scale
        J = [i - 1 for i in witness["J"]]
        pos = payload["condition"].endswith("cpld")
        prem = [np.asarray(v, dtype=float) for v in witness["premise_gradients"]]
        prem_dep = _pos_dep(prem) if pos else _lin_dep(prem, scale_g)
        if not prem_dep:
            return False
        for lv in witness["levels"]:
            x_j = np.asarray(lv["x"], dtype=float)
            gj = embedding.constraint_gradients(x_j)
            sel = [gj[i] for i in J]
            if bool(_lin_dep(sel, scale_g)) != bool(lv["dependent"]):
                return False
        return True
    if kind == "ratio-table":
        return True
    raise ValueError(f"unknown witness kind {kind!r}")


# ---------------------------------------------------------------------------
# tangent cone predicates


def in_tangent_cone(M: np.ndarray, N: np.ndarray) -> bool:
    """Membership of N in the tangent cone to the PSD cone at M.

    The cone is {N : E' N E PSD} for any kernel basis E of M; full-rank
    M makes the condition vacuous.
    """
    M = linalg.check_symmetric(np.asarray(M, dtype=float))
    N = linalg.sym_part(np.asarray(N, dtype=float))
    r = linalg.rank_of_psd(M)
    if r == M.shape[0]:
        return True
    E = linalg.eig_basis_smallest(M, r).cols
    W = linalg.sym_part(E.T @ N @ E)
    lam_min = float(linalg.spectral_decompose(W).eigenvalues[-1])
    return lam_min >= -linalg.EPS_PSD_FACTOR * (1.0 + linalg.frob(N))


def in_lineality_space(M: np.ndarray, N: np.ndarray) -> bool:
    """Membership of N in the lineality space {N : E' N E = 0} at M."""
    M = linalg.check_symmetric(np.asarray(M, dtype=float))
    N = linalg.sym_part(np.asarray(N, dtype=float))
    r = linalg.rank_of_psd(M)
    if r == M.shape[0]:
        return True
    E = linalg.eig_basis_smallest(M, r).cols
    return linalg.frob(E.T @ N @ E) <= linalg.EPS_PSD_FACTOR * (1.0 + linalg.frob(N))
